//! Train a lifted model, then sample the loss on a grid of perturbations
//! along two random directions in parameter space.
//!
//! Run with `cargo run --release --example loss_landscape > landscape.csv`.

use mrflift::bench::landscape;
use mrflift::gen::random_energy_instance;
use mrflift::lift::LiftConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = random_energy_instance(20, 0.2, (2, 4), (0.2, 3.0), 5);
    let cfg = LiftConfig {
        lift_dim: 64,
        ..LiftConfig::default()
    };
    let l = landscape(&inst, &cfg, 1.0, 21, 0)?;
    let lo = l.losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = l.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    eprintln!("center {:.4}, grid range [{lo:.4}, {hi:.4}]", l.center_loss);
    l.write_csv(std::io::stdout().lock())?;
    Ok(())
}
