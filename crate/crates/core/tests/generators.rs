mod common;

use mrflift::gen::{gen, potts_table, EnergyMode, GenSpec, Order};
use mrflift::mrf::MrfInstance;
use mrflift::uai::{parse_uai, to_energies, write_uai};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potts_energies_are_two_level(seed in any::<u64>(), high in any::<bool>()) {
        let mut spec = GenSpec::pairwise(40, 3.0, EnergyMode::potts(), seed);
        if high {
            spec.order = Order::high_order(10);
        }
        let raw = gen(&spec).unwrap();
        prop_assert!(raw.potentials.iter().flatten().all(|&p| p > 0.0 && p.is_normal()));
        let inst = to_energies(&raw, None).unwrap();
        for c in &inst.cliques {
            let lo = c.table.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &v in &c.table {
                prop_assert!(v == lo || v == hi);
            }
            prop_assert!(lo >= 1e-5 * 0.999 && hi <= 700.0 + 1e-9);
        }
    }

    #[test]
    fn pipeline_matches_direct_construction(seed in any::<u64>()) {
        let spec = GenSpec { order: Order::high_order(5), ..GenSpec::pairwise(12, 2.0, EnergyMode::random(), seed) };
        let raw = gen(&spec).unwrap();
        let via_file = to_energies(&parse_uai(&write_uai(&raw)).unwrap(), None).unwrap();
        let direct = MrfInstance::from_factors(
            raw.cardinalities.clone(),
            raw.scopes
                .iter()
                .cloned()
                .zip(raw.potentials.iter().map(|t| t.iter().map(|p| -p.ln()).collect()))
                .collect(),
        )
        .unwrap();
        for (a, b) in via_file.cliques.iter().zip(&direct.cliques) {
            prop_assert_eq!(&a.scope, &b.scope);
            for (x, y) in a.table.iter().zip(&b.table) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn potts_diagonal_values() {
    let raw = mrflift::uai::RawModel {
        cardinalities: vec![3, 3],
        scopes: vec![vec![0, 1]],
        potentials: vec![potts_table(&[3, 3], 2.0, 1.0)],
    };
    let inst = to_energies(&raw, None).unwrap();
    for (k, &v) in inst.cliques[0].table.iter().enumerate() {
        let want = if k / 3 == k % 3 { 3.0 } else { 1.0 };
        assert!((v - want).abs() < 1e-12);
    }
}

#[test]
fn pairwise_spec_is_pairwise() {
    let raw = gen(&GenSpec::pairwise(100, 4.0, EnergyMode::potts(), 1)).unwrap();
    assert!(raw.scopes.iter().all(|s| s.len() <= 2));
    assert!(raw.scopes[..100]
        .iter()
        .enumerate()
        .all(|(i, s)| s == &vec![i]));
}
