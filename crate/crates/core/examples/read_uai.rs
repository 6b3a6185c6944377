//! Parse a UAI Markov network, convert potentials to energies and find the
//! exact MAP assignment by enumeration.
//!
//! Run with `cargo run --example read_uai [path/to/model.uai]`.

use mrflift::mrf::{brute_force_map, DEFAULT_BRUTE_BUDGET};
use mrflift::uai::{parse_uai, to_energies};

const BUILTIN: &str = include_str!("../tests/data/example.uai");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => BUILTIN.to_string(),
    };
    let raw = parse_uai(&text)?;
    println!("{} variables, {} factors", raw.n_vars(), raw.scopes.len());
    let inst = to_energies(&raw, None)?;
    for (i, u) in inst.unary.iter().enumerate() {
        println!("unary {i}: {u:.4?}");
    }
    for c in &inst.cliques {
        println!("clique {:?}: {:.4?}", c.scope, c.table);
    }
    let (x, e) = brute_force_map(&inst, DEFAULT_BRUTE_BUDGET)?;
    println!("MAP assignment {:?} with energy {e:.6}", x.0);
    Ok(())
}
