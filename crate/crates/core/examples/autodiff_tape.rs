//! The reverse-mode tape on its own: fit a masked softmax classifier to
//! minimise an expected pairwise energy, the same relaxation the lifted
//! solver uses, but with free logits instead of a network.
//!
//! Run with `cargo run --example autodiff_tape`.

use mrflift::autodiff::{Adam, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two variables with three states each; the pair prefers disagreeing
    let table = [2.0, 0.0, 1.0, 0.0, 2.0, 1.0, 1.0, 1.0, 2.0];
    let scope = [0usize, 1];
    let unary = Tensor::matrix(2, 3, vec![0.5, 0.1, 0.0, 0.0, 0.3, 0.2]);
    let mask = vec![0.0; 6];
    let mut logits = Tensor::matrix(2, 3, vec![0.0; 6]);
    let mut adam = Adam::new(0.1, &[&[2, 3]]);
    for step in 0..=200 {
        let mut tape = Tape::new();
        let l = tape.param(&logits);
        let p = tape.masked_softmax(l, &mask, 1.0)?;
        let u = tape.param(&unary);
        let e_unary = tape.inner_product(p, u)?;
        let e_pair = tape.clique_contract(p, &table, &scope)?;
        let loss = tape.add(e_unary, e_pair)?;
        let value = tape.value(loss).item();
        let probs = tape.value(p).clone();
        let grad = tape.backward(loss)?.wrt(&tape, l);
        if step % 50 == 0 {
            println!(
                "step {step:>3}: expected energy {value:.5}, p = {:.3?}",
                probs.data()
            );
        }
        adam.step(&mut [&mut logits], &[grad])?;
    }
    Ok(())
}
