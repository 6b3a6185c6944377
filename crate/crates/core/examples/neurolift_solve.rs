//! Solve a random MRF with the lifted GNN solver and compare it with the
//! exact optimum, a single run and a five-trial aggregate.
//!
//! Run with `cargo run --release --example neurolift_solve`.

use mrflift::gen::random_energy_instance;
use mrflift::lift::{multi_trial, train, LiftConfig};
use mrflift::mrf::{brute_force_map, DEFAULT_BRUTE_BUDGET};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = random_energy_instance(10, 0.4, (2, 3), (0.2, 3.0), 11);
    let (_, opt) = brute_force_map(&inst, DEFAULT_BRUTE_BUDGET)?;
    let cfg = LiftConfig {
        lift_dim: 256,
        ..LiftConfig::default()
    };
    let r = train(&inst, &cfg, None);
    println!(
        "optimum {opt:.4}, unary argmin {:.4}",
        inst.energy(&inst.unary_argmin())
    );
    println!(
        "single run: best {:.4}, final loss {:.4}, {} iterations ({})",
        r.best_energy,
        r.final_loss.unwrap_or(f64::NAN),
        r.iterations(),
        r.termination
    );
    for rec in r.trajectory.iter().step_by(10) {
        println!(
            "  iter {:>3}  loss {:>9.4}  energy {:>9.4}",
            rec.iteration,
            rec.loss.unwrap_or(f64::NAN),
            rec.energy
        );
    }
    let m = multi_trial(&inst, &cfg, 5, None);
    println!(
        "5 trials: best {:.4}, mean ± std {}",
        m.best_energy,
        m.summary()
    );
    Ok(())
}
