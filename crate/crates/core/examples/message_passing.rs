//! Min-sum loopy belief propagation and its tree-reweighted variant on a
//! small random pairwise model, compared with the exact optimum.
//!
//! Run with `cargo run --example message_passing`.

use mrflift::gen::random_energy_instance;
use mrflift::message_passing::{default_rho, lbp_minsum, trbp_minsum, MinSumConfig};
use mrflift::mrf::{brute_force_map, DEFAULT_BRUTE_BUDGET};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = random_energy_instance(12, 0.3, (2, 4), (0.2, 3.0), 3);
    let (_, opt) = brute_force_map(&inst, DEFAULT_BRUTE_BUDGET)?;
    let cfg = MinSumConfig::default();
    let lbp = lbp_minsum(&inst, &cfg)?;
    let trbp = trbp_minsum(&inst, &cfg, None)?;
    println!(
        "{} variables, {} edges, optimum {opt:.4}",
        inst.n_vars(),
        inst.cliques.len()
    );
    println!(
        "lbp : best {:.4} after {} iterations ({})",
        lbp.best_energy,
        lbp.iterations(),
        lbp.termination
    );
    println!(
        "trbp: best {:.4} after {} iterations ({}), rho = {:.3}",
        trbp.best_energy,
        trbp.iterations(),
        trbp.termination,
        default_rho(&inst)
    );
    Ok(())
}
