#![allow(dead_code)]

use mrflift::autodiff::Tape;
use mrflift::lift::{init_model, Backbone, LiftConfig, LiftedModel, Objective};
use mrflift::mrf::{clique_expansion, pad, Assignment, MrfInstance};
use mrflift::pci::{Device, Label, PciProblem};
use mrflift::uai::RawModel;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXAMPLE_UAI: &str = include_str!("../data/example.uai");
pub const EXAMPLE_PCI: &str = include_str!("../data/pci_example.json");

pub type Factors = Vec<(Vec<usize>, Vec<f64>)>;

/// Energy summed straight from an uncanonicalised factor list.
pub fn factor_energy(factors: &Factors, cards: &[usize], x: &[usize]) -> f64 {
    factors
        .iter()
        .map(|(scope, table)| {
            let idx = scope.iter().fold(0, |acc, &v| acc * cards[v] + x[v]);
            table[idx]
        })
        .sum()
}

/// Every assignment of `cards`, lexicographic.
pub fn all_assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..c).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn min_energy(inst: &MrfInstance) -> f64 {
    all_assignments(&inst.cardinalities)
        .into_iter()
        .map(|x| inst.energy(&Assignment(x)))
        .fold(f64::INFINITY, f64::min)
}

pub fn random_cards(rng: &mut impl Rng, n: usize, lo: usize, hi: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

pub fn random_table(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-2.0..3.0)).collect()
}

/// Random factor list: unaries on a random subset, then `extra` factors
/// over random scopes of size 1..=max_k in random order (duplicates and
/// unsorted scopes included).
pub fn random_factors(rng: &mut impl Rng, cards: &[usize], extra: usize, max_k: usize) -> Factors {
    let n = cards.len();
    let mut f = Factors::new();
    for (i, &c) in cards.iter().enumerate() {
        if rng.random_bool(0.7) {
            f.push((vec![i], random_table(rng, c)));
        }
    }
    for _ in 0..extra {
        let k = rng.random_range(1..=max_k.min(n));
        let mut vars: Vec<usize> = (0..n).collect();
        vars.shuffle(rng);
        vars.truncate(k);
        let len = vars.iter().map(|&v| cards[v]).product();
        f.push((vars, random_table(rng, len)));
    }
    f
}

/// Random spanning tree over `n` nodes with relabelled vertices.
pub fn random_tree_edges(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    (1..n)
        .map(|i| {
            let p = rng.random_range(0..i);
            (label[p], label[i])
        })
        .collect()
}

pub fn random_tree_instance(rng: &mut impl Rng, n: usize, lo: usize, hi: usize) -> MrfInstance {
    let cards = random_cards(rng, n, lo, hi);
    let mut f: Factors = (0..n)
        .map(|i| (vec![i], random_table(rng, cards[i])))
        .collect();
    for (a, b) in random_tree_edges(rng, n) {
        f.push((vec![a, b], random_table(rng, cards[a] * cards[b])));
    }
    MrfInstance::from_factors(cards, f).unwrap()
}

pub fn random_raw_model(rng: &mut impl Rng) -> RawModel {
    let n = rng.random_range(1..=6);
    let cardinalities = random_cards(rng, n, 1, 4);
    let mut scopes = Vec::new();
    let mut potentials = Vec::new();
    for _ in 0..rng.random_range(0..=6) {
        let k = rng.random_range(1..=n.min(3));
        let mut vars: Vec<usize> = (0..n).collect();
        vars.shuffle(rng);
        vars.truncate(k);
        let len: usize = vars.iter().map(|&v| cardinalities[v]).product();
        let exp_lo = rng.random_range(-300.0..0.0f64);
        potentials.push(
            (0..len)
                .map(|_| 10f64.powf(rng.random_range(exp_lo..300.0)))
                .collect(),
        );
        scopes.push(vars);
    }
    RawModel {
        cardinalities,
        scopes,
        potentials,
    }
}

pub fn random_pci(rng: &mut impl Rng, max_devices: usize, max_states: usize) -> PciProblem {
    let n = rng.random_range(2..=max_devices);
    let devices: Vec<Device> = (0..n)
        .map(|d| Device {
            id: Label::Int(d as i64 + 100),
            states: (0..rng.random_range(2..=max_states))
                .map(|s| Label::Str(format!("p{s}")))
                .collect(),
        })
        .collect();
    let mut terms = Vec::new();
    for _ in 0..rng.random_range(0..=n * 2) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let pick = |rng: &mut _, d: &Device| -> Vec<Label> {
            d.states
                .iter()
                .filter(|_| Rng::random_bool(rng, 0.4))
                .cloned()
                .collect()
        };
        let groups = (0..rng.random_range(0..=3))
            .map(|_| (pick(rng, &devices[i]), pick(rng, &devices[j])))
            .collect();
        let coeff = f64::from(rng.random_range(1..=20)) * 0.25;
        terms.push((devices[i].id.clone(), devices[j].id.clone(), coeff, groups));
    }
    PciProblem::from_parts(devices, terms).unwrap()
}

/// Brute-force optimum of the PCI mixed-integer program: enumerate every
/// one-hot `z`, and for each interference term take the smallest binary
/// `L` satisfying all its conflict constraints.
pub fn pci_mip_optimum(p: &PciProblem) -> f64 {
    let cards: Vec<usize> = p.devices.iter().map(|d| d.states.len()).collect();
    let mut best = f64::INFINITY;
    for x in all_assignments(&cards) {
        let z: Vec<Vec<u8>> = cards
            .iter()
            .zip(&x)
            .map(|(&c, &s)| (0..c).map(|q| u8::from(q == s)).collect())
            .collect();
        let mut obj = 0.0;
        for t in &p.interference {
            let feasible = |l: i32| {
                t.conflicts.iter().all(|g| {
                    let si: i32 = g.mi.iter().map(|&q| i32::from(z[t.i][q])).sum();
                    let sj: i32 = g.mj.iter().map(|&q| i32::from(z[t.j][q])).sum();
                    si + sj - 1 <= l
                })
            };
            let l = if feasible(0) { 0.0 } else { 1.0 };
            assert!(feasible(1));
            obj += t.coeff * l;
        }
        best = best.min(obj);
    }
    best
}

/// Random instance of 2-5 variables with a tiny lifted model on it.
pub fn small_setup(seed: u64, backbone: Backbone) -> (Objective, LiftedModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let cards = random_cards(&mut rng, n, 2, 3);
    let extra = rng.random_range(1..=5);
    let factors = random_factors(&mut rng, &cards, extra, 3);
    let inst = MrfInstance::from_factors(cards, factors).unwrap();
    let cfg = LiftConfig {
        lift_dim: 4,
        layers: 2,
        jk_dim: 3,
        seed,
        backbone,
        ..LiftConfig::default()
    };
    let padded = pad(&inst);
    let model = init_model(&clique_expansion(&inst), &padded, &cfg);
    (Objective::new(padded), model)
}

pub fn min_abs_preact(model: &LiftedModel, t: f64) -> f64 {
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, t).unwrap();
    f.preacts
        .iter()
        .flat_map(|&p| tape.value(p).data().to_vec())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter coordinate.
pub fn worst_relative_error(obj: &Objective, model: &LiftedModel, t: f64) -> f64 {
    let h = 1e-6;
    let (_, grads, _) = obj.loss_and_grads(model, t).unwrap();
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for (p, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = m.params()[p].data()[k];
            m.params_mut()[p].data_mut()[k] = orig + h;
            let up = obj.model_loss(&m, t).unwrap();
            m.params_mut()[p].data_mut()[k] = orig - h;
            let down = obj.model_loss(&m, t).unwrap();
            m.params_mut()[p].data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = g.data()[k];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}
