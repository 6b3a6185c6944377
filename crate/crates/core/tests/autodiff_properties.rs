use mrflift::autodiff::{contract, Adam, ContractScratch, Tape, Tensor};
use proptest::prelude::*;

fn mask_and_logits() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>)> {
    (1usize..5, 1usize..6).prop_flat_map(|(r, c)| {
        (
            Just(r),
            Just(c),
            prop::collection::vec(-30.0f64..30.0, r * c),
            prop::collection::vec(any::<bool>(), r * c),
        )
    })
}

fn mask_vec(valid: &[bool], c: usize) -> Vec<f64> {
    let mut v: Vec<f64> = valid
        .iter()
        .map(|&b| if b { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    for row in v.chunks_mut(c) {
        row[0] = 0.0;
    }
    v
}

fn softmax(logits: &[f64], mask: &[f64], r: usize, c: usize, t: f64) -> Vec<f64> {
    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::matrix(r, c, logits.to_vec()));
    let p = tape.masked_softmax(l, mask, t).unwrap();
    tape.value(p).data().to_vec()
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((r, c, logits, valid) in mask_and_logits(), t in 0.1f64..10.0) {
        let mask = mask_vec(&valid, c);
        let p = softmax(&logits, &mask, r, c, t);
        for i in 0..r {
            let row = &p[i * c..(i + 1) * c];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..c {
                if mask[i * c + j] == f64::NEG_INFINITY {
                    prop_assert_eq!(row[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn softmax_ignores_row_shifts((r, c, logits, valid) in mask_and_logits(), shift in -50.0f64..50.0) {
        let mask = mask_vec(&valid, c);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let a = softmax(&logits, &mask, r, c, 1.5);
        let b = softmax(&shifted, &mask, r, c, 1.5);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn contraction_matches_naive_sum(
        s in 1usize..4,
        k in 1usize..5,
        seed in prop::collection::vec(-5.0f64..5.0, 256),
    ) {
        let table: Vec<f64> = (0..s.pow(k as u32)).map(|i| seed[i % 256] * (i as f64 + 1.0).sqrt()).collect();
        let rows: Vec<Vec<f64>> = (0..k).map(|a| (0..s).map(|x| seed[(a * 7 + x * 3 + 100) % 256].abs()).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut naive = 0.0;
        for (idx, &t) in table.iter().enumerate() {
            let mut w = 1.0;
            let mut rest = idx;
            for a in (0..k).rev() {
                w *= rows[a][rest % s];
                rest /= s;
            }
            naive += w * t;
        }
        let got = contract(&table, s, &refs, None, &mut ContractScratch::default())[0];
        prop_assert!((got - naive).abs() <= 1e-9 * naive.abs().max(1.0));
    }
}

#[test]
fn clique_contract_gradient_is_partial_contraction() {
    // d/dp_0 of <T, p0 (x) p1> is T p1
    let table = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    let scope = [0usize, 1];
    let probs = Tensor::matrix(2, 3, vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]);
    let mut tape = Tape::new();
    let p = tape.param(&probs);
    let v = tape.clique_contract(p, &table, &scope).unwrap();
    let g = tape.backward(v).unwrap().wrt(&tape, p);
    let p1 = [0.6, 0.1, 0.3];
    for x in 0..3 {
        let want: f64 = (0..3).map(|y| table[x * 3 + y] * p1[y]).sum();
        assert!((g.get(0, x) - want).abs() < 1e-12);
    }
}

#[test]
fn adam_moves_against_gradient_sign() {
    let mut w = Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]);
    let mut adam = Adam::new(0.01, &[&[1, 3]]);
    let g = Tensor::matrix(1, 3, vec![5.0, -0.001, 0.0]);
    adam.step(&mut [&mut w], &[g]).unwrap();
    assert!((w.data()[0] + 0.01).abs() < 1e-9);
    assert!((w.data()[1] - 0.01).abs() < 1e-6);
    assert_eq!(w.data()[2], 0.0);
}
