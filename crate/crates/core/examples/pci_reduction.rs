//! Reduce a cell-identity assignment problem to a pairwise MRF, solve it
//! and export it as UAI for external solvers.
//!
//! Run with `cargo run --example pci_reduction [problem.json]`.

use mrflift::mrf::{brute_force_map, DEFAULT_BRUTE_BUDGET};
use mrflift::pci::{parse_pci, pci_to_mrf};
use mrflift::uai::{from_energies, write_uai};

const BUILTIN: &str = include_str!("../tests/data/pci_example.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => BUILTIN.to_string(),
    };
    let problem = parse_pci(&text)?;
    let inst = pci_to_mrf(&problem);
    for c in &inst.cliques {
        println!("edge {:?}:", c.scope);
        let cols = inst.cardinalities[c.scope[1]];
        for row in c.table.chunks(cols) {
            println!("  {row:?}");
        }
    }
    let (x, e) = brute_force_map(&inst, DEFAULT_BRUTE_BUDGET)?;
    let labels: Vec<String> =
        x.0.iter()
            .zip(&problem.devices)
            .map(|(&s, d)| format!("{}={}", d.id, d.states[s]))
            .collect();
    println!(
        "best assignment {} with interference cost {e}",
        labels.join(" ")
    );
    print!("{}", write_uai(&from_energies(&inst)?));
    Ok(())
}
