//! Generate Erdős–Rényi instances with random and Potts energies, write
//! them as UAI files with a manifest, and read one back.
//!
//! Run with `cargo run --example generate_instances [out_dir]`.

use mrflift::bench::gen_to_dir;
use mrflift::gen::{gen, EnergyMode, GenSpec, Order};
use mrflift::uai::{parse_uai, to_energies};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mrflift-instances"));

    let potts = GenSpec::pairwise(1000, 15.0, EnergyMode::potts(), 7);
    let model = gen(&potts)?;
    let edges = model.scopes.iter().filter(|s| s.len() == 2).count();
    println!(
        "potts: {} variables, {edges} edges, spec hash {}",
        model.n_vars(),
        potts.hash()
    );

    let high = GenSpec {
        order: Order::high_order(50),
        ..GenSpec::pairwise(200, 4.0, EnergyMode::random(), 1)
    };
    let paths = gen_to_dir(&high, 3, &out, "random_ho")?;
    for p in &paths {
        let inst = to_energies(&parse_uai(&std::fs::read_to_string(p)?)?, None)?;
        println!(
            "{}: {} cliques, largest over {} variables",
            p.display(),
            inst.cliques.len(),
            inst.max_clique_size()
        );
    }
    print!("{}", std::fs::read_to_string(out.join("manifest.txt"))?);
    Ok(())
}
