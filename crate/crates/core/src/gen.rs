//! Seeded synthetic instances on Erdős–Rényi topologies.
//!
//! Generators emit [`RawModel`] potentials so that generated instances go
//! through the same `-ln` transform as files read from disk. Potts factors
//! are written as `exp(-(alpha * [all states equal] + beta))`, which the
//! transform maps back to `alpha * [all equal] + beta`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mrf::{MrfInstance, PairwiseGraph};
use crate::uai::RawModel;

/// Retries with a fresh seed before giving up on an edgeless sample.
pub const MAX_TOPOLOGY_RETRIES: usize = 10;

/// Potts tables keep `alpha + beta` below this so `exp(-theta)` stays a
/// normal positive double.
pub const MAX_POTTS_ENERGY: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("no edges sampled after {0} attempts")]
    DegenerateTopology(usize),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    EdgeProb(f64),
    MeanDegree(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Pairwise,
    /// `cliques` extra hyperedges with sizes drawn from `sizes`
    /// (`(size, weight)` pairs), on top of the ER pairwise edges.
    HighOrder {
        cliques: usize,
        sizes: Vec<(usize, f64)>,
    },
}

impl Order {
    /// High-order with sizes 3 and 4 equally likely.
    pub fn high_order(cliques: usize) -> Self {
        Order::HighOrder {
            cliques,
            sizes: vec![(3, 0.5), (4, 0.5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Every potential uniform on `[lo, hi)`.
    Random { lo: f64, hi: f64 },
    /// Per-table `alpha`, `beta` log-uniform on `[lo, hi]`.
    Potts { lo: f64, hi: f64 },
}

impl EnergyMode {
    pub fn random() -> Self {
        EnergyMode::Random { lo: 0.2, hi: 3.0 }
    }

    pub fn potts() -> Self {
        EnergyMode::Potts {
            lo: 1e-5,
            hi: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSpec {
    pub n_vars: usize,
    pub topology: Topology,
    pub order: Order,
    /// Inclusive range of per-variable state counts.
    pub states: (usize, usize),
    /// Range of the unary potentials.
    pub unary: (f64, f64),
    pub energy: EnergyMode,
    pub seed: u64,
}

impl GenSpec {
    /// Pairwise instance with the benchmark defaults: 2–6 states, unary
    /// potentials on `[0.2, 3.0)`.
    pub fn pairwise(n_vars: usize, mean_degree: f64, energy: EnergyMode, seed: u64) -> Self {
        GenSpec {
            n_vars,
            topology: Topology::MeanDegree(mean_degree),
            order: Order::Pairwise,
            states: (2, 6),
            unary: (0.2, 3.0),
            energy,
            seed,
        }
    }

    pub fn edge_prob(&self) -> f64 {
        match self.topology {
            Topology::EdgeProb(p) => p,
            Topology::MeanDegree(d) => d / (self.n_vars.saturating_sub(1).max(1)) as f64,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        let p = self.edge_prob();
        if !(p > 0.0 && p < 1.0) {
            return bad(format!("edge probability {p} outside (0, 1)"));
        }
        if self.states.0 < 1 || self.states.0 > self.states.1 {
            return bad(format!("state range {:?}", self.states));
        }
        if !(self.unary.0 > 0.0 && self.unary.0 < self.unary.1) {
            return bad(format!("unary range {:?}", self.unary));
        }
        match self.energy {
            EnergyMode::Random { lo, hi } if !(lo > 0.0 && lo < hi) => {
                return bad(format!("random range [{lo}, {hi})"))
            }
            EnergyMode::Potts { lo, hi }
                if !(lo > 0.0 && lo <= hi && 2.0 * lo <= MAX_POTTS_ENERGY) =>
            {
                return bad(format!("potts range [{lo}, {hi}]"))
            }
            _ => {}
        }
        if let Order::HighOrder { sizes, .. } = &self.order {
            if sizes.is_empty()
                || sizes
                    .iter()
                    .any(|&(k, w)| k < 2 || k > self.n_vars || !(w > 0.0))
            {
                return bad(format!("clique sizes {sizes:?}"));
            }
        }
        Ok(())
    }

    /// Stable short digest of the spec, for manifests.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serialises");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Erdős–Rényi `G(n, p)` edges in lexicographic order, sampled by geometric
/// skipping so the cost is proportional to the number of edges.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    if n < 2 || p <= 0.0 {
        return edges;
    }
    if p >= 1.0 {
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        return edges;
    }
    let log_q = (1.0 - p).ln();
    // pairs (w, v) with w < v, enumerated v-major
    let (mut v, mut w) = (1usize, -1i64);
    while v < n {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((w as usize, v));
        }
    }
    edges.sort_unstable();
    edges
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Potts potentials over a scope with the given cardinalities:
/// `exp(-(alpha * [all states equal] + beta))`, row-major.
pub fn potts_table(dims: &[usize], alpha: f64, beta: f64) -> Vec<f64> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        let equal = digits.windows(2).all(|w| w[0] == w[1]);
        let theta = if equal { alpha + beta } else { beta };
        out.push((-theta).exp());
        for a in (0..dims.len()).rev() {
            digits[a] += 1;
            if digits[a] < dims[a] {
                break;
            }
            digits[a] = 0;
        }
    }
    out
}

fn factor_table(rng: &mut impl Rng, dims: &[usize], mode: &EnergyMode) -> Vec<f64> {
    match *mode {
        EnergyMode::Random { lo, hi } => {
            let total: usize = dims.iter().product();
            (0..total).map(|_| rng.random_range(lo..hi)).collect()
        }
        EnergyMode::Potts { lo, hi } => loop {
            let alpha = log_uniform(rng, lo, hi);
            let beta = log_uniform(rng, lo, hi);
            if alpha + beta <= MAX_POTTS_ENERGY {
                break potts_table(dims, alpha, beta);
            }
        },
    }
}

fn attempt(spec: &GenSpec, seed: u64) -> Option<RawModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_vars;
    let cardinalities: Vec<usize> = (0..n)
        .map(|_| rng.random_range(spec.states.0..=spec.states.1))
        .collect();
    let edges = erdos_renyi(n, spec.edge_prob(), &mut rng);
    let mut scopes: Vec<Vec<usize>> = edges.iter().map(|&(i, j)| vec![i, j]).collect();
    if let Order::HighOrder { cliques, sizes } = &spec.order {
        let total: f64 = sizes.iter().map(|s| s.1).sum();
        for _ in 0..*cliques {
            let mut u = rng.random_range(0.0..total);
            let mut k = sizes[sizes.len() - 1].0;
            for &(size, w) in sizes {
                if u < w {
                    k = size;
                    break;
                }
                u -= w;
            }
            let mut scope = sample(&mut rng, n, k).into_vec();
            scope.sort_unstable();
            scopes.push(scope);
        }
    }
    if scopes.is_empty() {
        return None;
    }
    let mut all_scopes: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut potentials: Vec<Vec<f64>> = cardinalities
        .iter()
        .map(|&c| {
            (0..c)
                .map(|_| rng.random_range(spec.unary.0..spec.unary.1))
                .collect()
        })
        .collect();
    for scope in scopes {
        let dims: Vec<usize> = scope.iter().map(|&v| cardinalities[v]).collect();
        potentials.push(factor_table(&mut rng, &dims, &spec.energy));
        all_scopes.push(scope);
    }
    Some(RawModel {
        cardinalities,
        scopes: all_scopes,
        potentials,
    })
}

/// Generates a model from `spec`. Edgeless samples are retried with derived
/// seeds, up to [`MAX_TOPOLOGY_RETRIES`] attempts in total.
pub fn gen(spec: &GenSpec) -> Result<RawModel, GenError> {
    spec.validate()?;
    (0..MAX_TOPOLOGY_RETRIES as u64)
        .find_map(|k| {
            attempt(
                spec,
                spec.seed
                    .wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03)),
            )
        })
        .ok_or(GenError::DegenerateTopology(MAX_TOPOLOGY_RETRIES))
}

/// Generates a model with hyperedges; `spec.order` must be high-order.
pub fn gen_highorder(spec: &GenSpec) -> Result<RawModel, GenError> {
    if !matches!(spec.order, Order::HighOrder { .. }) {
        return Err(GenError::InvalidSpec(
            "gen_highorder needs a high-order spec".into(),
        ));
    }
    gen(spec)
}

/// Pairwise energy instance built directly in the energy domain: every unary
/// and pairwise energy uniform on `energy`, states uniform on `states`.
pub fn random_energy_instance(
    n: usize,
    edge_prob: f64,
    states: (usize, usize),
    energy: (f64, f64),
    seed: u64,
) -> MrfInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cards: Vec<usize> = (0..n)
        .map(|_| rng.random_range(states.0..=states.1))
        .collect();
    let mut factors: Vec<(Vec<usize>, Vec<f64>)> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            (
                vec![i],
                (0..c)
                    .map(|_| rng.random_range(energy.0..energy.1))
                    .collect(),
            )
        })
        .collect();
    for (i, j) in erdos_renyi(n, edge_prob, &mut rng) {
        let t = (0..cards[i] * cards[j])
            .map(|_| rng.random_range(energy.0..energy.1))
            .collect();
        factors.push((vec![i, j], t));
    }
    MrfInstance::from_factors(cards, factors).expect("generated factors are valid")
}

/// The graph of a generated model's multi-variable scopes.
pub fn topology(model: &RawModel) -> PairwiseGraph {
    PairwiseGraph::from_edges(
        model.n_vars(),
        model
            .scopes
            .iter()
            .filter(|s| s.len() == 2)
            .map(|s| (s[0], s[1])),
    )
}

/// One manifest line: name, variables, multi-variable factors, seed, spec
/// digest, tab separated.
pub fn manifest_line(name: &str, model: &RawModel, spec: &GenSpec) -> String {
    let cliques = model.scopes.iter().filter(|s| s.len() > 1).count();
    format!(
        "{name}\t{}\t{cliques}\t{}\t{}",
        model.n_vars(),
        spec.seed,
        spec.hash()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uai::{to_energies, write_uai};

    #[test]
    fn potts_pairwise_table() {
        let t = potts_table(&[2, 2], 2.0, 1.0);
        let raw = RawModel {
            cardinalities: vec![2, 2],
            scopes: vec![vec![0, 1]],
            potentials: vec![t],
        };
        let inst = to_energies(&raw, None).unwrap();
        let e = &inst.cliques[0].table;
        for (v, want) in e.iter().zip([3.0, 1.0, 1.0, 3.0]) {
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn potts_three_clique_indicator() {
        let raw = RawModel {
            cardinalities: vec![3, 3, 3],
            scopes: vec![vec![0, 1, 2]],
            potentials: vec![potts_table(&[3, 3, 3], 1.0, 0.0)],
        };
        let inst = to_energies(&raw, None).unwrap();
        for (idx, &v) in inst.cliques[0].table.iter().enumerate() {
            let (a, b, c) = (idx / 9, (idx / 3) % 3, idx % 3);
            let want = if a == b && b == c { 1.0 } else { 0.0 };
            assert_eq!(v, want, "entry {idx}");
        }
    }

    #[test]
    fn edge_count_near_expectation() {
        let spec = GenSpec::pairwise(1000, 15.0, EnergyMode::potts(), 3);
        let m = gen(&spec).unwrap();
        let edges = m.scopes.iter().filter(|s| s.len() == 2).count();
        assert!((6750..=8250).contains(&edges), "{edges}");
        assert!(m.cardinalities.iter().all(|&c| (2..=6).contains(&c)));
    }

    #[test]
    fn deterministic_output() {
        let spec = GenSpec::pairwise(200, 4.0, EnergyMode::random(), 11);
        assert_eq!(
            write_uai(&gen(&spec).unwrap()),
            write_uai(&gen(&spec).unwrap())
        );
        let other = GenSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(gen(&spec).unwrap(), gen(&other).unwrap());
        assert_ne!(spec.hash(), other.hash());
    }

    #[test]
    fn degenerate_topology() {
        let spec = GenSpec {
            topology: Topology::EdgeProb(1e-12),
            ..GenSpec::pairwise(3, 1.0, EnergyMode::random(), 0)
        };
        assert_eq!(gen(&spec), Err(GenError::DegenerateTopology(10)));
    }

    #[test]
    fn random_potentials_in_range() {
        let m = gen(&GenSpec::pairwise(50, 3.0, EnergyMode::random(), 5)).unwrap();
        assert!(m
            .potentials
            .iter()
            .flatten()
            .all(|&p| (0.2..3.0).contains(&p)));
    }

    #[test]
    fn high_order_sizes() {
        let spec = GenSpec {
            order: Order::high_order(20),
            ..GenSpec::pairwise(30, 2.0, EnergyMode::potts(), 9)
        };
        let m = gen_highorder(&spec).unwrap();
        let big: Vec<usize> = m
            .scopes
            .iter()
            .map(|s| s.len())
            .filter(|&k| k > 2)
            .collect();
        assert_eq!(big.len(), 20);
        assert!(big.iter().all(|&k| k == 3 || k == 4));
        assert!(gen_highorder(&GenSpec::pairwise(30, 2.0, EnergyMode::potts(), 9)).is_err());
    }

    #[test]
    fn er_matches_dense_sampler_statistics() {
        // mean edge count over seeds close to p * n(n-1)/2
        let (n, p) = (60, 0.1);
        let mut total = 0usize;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = erdos_renyi(n, p, &mut rng);
            assert!(e.iter().all(|&(i, j)| i < j && j < n));
            assert!(e.windows(2).all(|w| w[0] < w[1]));
            total += e.len();
        }
        let mean = total as f64 / 200.0;
        let want = p * (n * (n - 1) / 2) as f64;
        assert!((mean - want).abs() < 0.03 * want, "{mean} vs {want}");
    }
}
