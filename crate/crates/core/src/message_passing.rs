//! Min-sum message passing for pairwise models.
//!
//! Both solvers share one synchronous update. For an edge `(s, t)` with
//! appearance weight `rho` the message from `s` to `t` is
//!
//! ```text
//! m[s->t](x_t) = min_{x_s} psi(x_s, x_t) / rho + phi_s(x_s)
//!                + sum_{v in N(s)} rho_vs * m[v->s](x_s) - m[t->s](x_s)
//! ```
//!
//! which is the tree-reweighted update; with every `rho = 1` it is ordinary
//! loopy belief propagation. New messages are blended with the previous ones
//! (`(1 - damping) * new + damping * old`) and shifted so their minimum is 0.

use thiserror::Error;

use crate::mrf::{argmin, Assignment, MrfInstance};
use crate::report::{SolveReport, Termination, Tracker};

/// Largest absolute message change treated as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MessagePassingError {
    #[error("clique over {size} variables; message passing supports pairwise models only")]
    HighOrderUnsupported { size: usize },
    #[error("edge weight {value} at position {index} outside (0, 1]")]
    InvalidRho { index: usize, value: f64 },
    #[error("expected {expected} edge weights, got {found}")]
    RhoLength { expected: usize, found: usize },
    #[error("damping {0} outside [0, 1)")]
    InvalidDamping(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinSumConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub time_limit: Option<f64>,
    pub seed: u64,
}

impl Default for MinSumConfig {
    fn default() -> Self {
        MinSumConfig {
            max_iters: 60,
            damping: 0.1,
            time_limit: None,
            seed: 0,
        }
    }
}

/// Messages, edge weights and bookkeeping for one min-sum run.
#[derive(Debug, Clone)]
pub struct MessageState<'a> {
    inst: &'a MrfInstance,
    /// `(i, j, clique index)` with `i < j`.
    edges: Vec<(usize, usize, usize)>,
    rho: Vec<f64>,
    /// Directed edge `2e` is `i -> j`, `2e + 1` is `j -> i`.
    offsets: Vec<usize>,
    messages: Vec<f64>,
    scratch: Vec<f64>,
    /// Incoming directed edges per variable: `(direction, edge)`.
    incoming: Vec<Vec<(usize, usize)>>,
    pub damping: f64,
    pub iteration: usize,
}

impl<'a> MessageState<'a> {
    /// Prepares zero messages. `rho = None` gives plain belief propagation.
    pub fn new(
        inst: &'a MrfInstance,
        rho: Option<Vec<f64>>,
        damping: f64,
    ) -> Result<Self, MessagePassingError> {
        if !(0.0..1.0).contains(&damping) {
            return Err(MessagePassingError::InvalidDamping(damping));
        }
        let mut edges = Vec::new();
        for (k, c) in inst.cliques.iter().enumerate() {
            match c.scope.len() {
                2 => edges.push((c.scope[0], c.scope[1], k)),
                size => return Err(MessagePassingError::HighOrderUnsupported { size }),
            }
        }
        let rho = match rho {
            Some(r) => {
                if r.len() != edges.len() {
                    return Err(MessagePassingError::RhoLength {
                        expected: edges.len(),
                        found: r.len(),
                    });
                }
                if let Some((index, &value)) =
                    r.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v <= 1.0))
                {
                    return Err(MessagePassingError::InvalidRho { index, value });
                }
                r
            }
            None => vec![1.0; edges.len()],
        };
        let cards = &inst.cardinalities;
        let mut offsets = Vec::with_capacity(2 * edges.len() + 1);
        let mut incoming = vec![Vec::new(); inst.n_vars()];
        let mut total = 0;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            offsets.push(total);
            total += cards[j];
            offsets.push(total);
            total += cards[i];
            incoming[j].push((2 * e, e));
            incoming[i].push((2 * e + 1, e));
        }
        offsets.push(total);
        Ok(MessageState {
            inst,
            edges,
            rho,
            offsets,
            messages: vec![0.0; total],
            scratch: vec![0.0; total],
            incoming,
            damping,
            iteration: 0,
        })
    }

    /// Flat message buffer, directed edges in order.
    pub fn messages(&self) -> &[f64] {
        &self.messages
    }

    pub fn message(&self, direction: usize) -> &[f64] {
        &self.messages[self.offsets[direction]..self.offsets[direction + 1]]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `phi_i + sum_k rho_ki * m[k->i]`.
    pub fn belief(&self, i: usize) -> Vec<f64> {
        let mut b = self.inst.unary[i].clone();
        for &(d, e) in &self.incoming[i] {
            let r = self.rho[e];
            for (bx, m) in b.iter_mut().zip(self.message(d)) {
                *bx += r * m;
            }
        }
        b
    }

    pub fn decode(&self) -> Assignment {
        Assignment(
            (0..self.inst.n_vars())
                .map(|i| argmin(&self.belief(i)))
                .collect(),
        )
    }

    /// One synchronous update of every message; returns the largest change.
    pub fn step(&mut self) -> f64 {
        let beliefs: Vec<Vec<f64>> = (0..self.inst.n_vars()).map(|i| self.belief(i)).collect();
        let cards = &self.inst.cardinalities;
        for (e, &(i, j, k)) in self.edges.iter().enumerate() {
            let table = &self.inst.cliques[k].table;
            let r = self.rho[e];
            let (ci, cj) = (cards[i], cards[j]);
            // i -> j: reverse message is direction 2e + 1
            let rev = self.offsets[2 * e + 1];
            let out = self.offsets[2 * e];
            for xj in 0..cj {
                let mut best = f64::INFINITY;
                for xi in 0..ci {
                    let v = table[xi * cj + xj] / r + beliefs[i][xi] - self.messages[rev + xi];
                    best = best.min(v);
                }
                self.scratch[out + xj] = best;
            }
            // j -> i
            let rev = self.offsets[2 * e];
            let out = self.offsets[2 * e + 1];
            for xi in 0..ci {
                let mut best = f64::INFINITY;
                for xj in 0..cj {
                    let v = table[xi * cj + xj] / r + beliefs[j][xj] - self.messages[rev + xj];
                    best = best.min(v);
                }
                self.scratch[out + xi] = best;
            }
        }
        let lambda = self.damping;
        let mut change = 0.0f64;
        for d in 0..self.offsets.len() - 1 {
            let range = self.offsets[d]..self.offsets[d + 1];
            let new = &mut self.scratch[range.clone()];
            let old = &self.messages[range];
            for (n, o) in new.iter_mut().zip(old) {
                *n = (1.0 - lambda) * *n + lambda * o;
            }
            let lo = new.iter().copied().fold(f64::INFINITY, f64::min);
            for (n, o) in new.iter_mut().zip(old) {
                *n -= lo;
                change = change.max((*n - o).abs());
            }
        }
        std::mem::swap(&mut self.messages, &mut self.scratch);
        self.iteration += 1;
        change
    }
}

/// Uniform edge appearance probability `min(1, (n - 1) / |E|)`.
pub fn default_rho(inst: &MrfInstance) -> f64 {
    let e = inst.cliques.len();
    if e == 0 {
        return 1.0;
    }
    ((inst.n_vars().saturating_sub(1)) as f64 / e as f64).clamp(f64::MIN_POSITIVE, 1.0)
}

fn run(
    name: &str,
    mut state: MessageState<'_>,
    inst: &MrfInstance,
    cfg: &MinSumConfig,
) -> SolveReport {
    let mut tracker = Tracker::new();
    let x = state.decode();
    let e = inst.energy(&x);
    tracker.record(0, x, e, None);
    let mut termination = Termination::MaxIters;
    for it in 1..=cfg.max_iters {
        if cfg.time_limit.is_some_and(|t| tracker.elapsed() >= t) {
            termination = Termination::TimeLimit;
            break;
        }
        let change = state.step();
        let x = state.decode();
        let e = inst.energy(&x);
        tracker.record(it, x, e, None);
        if change < CONVERGENCE_TOL {
            termination = Termination::Converged;
            break;
        }
    }
    tracker.finish(name, termination, cfg.seed, 0)
}

/// Min-sum loopy belief propagation.
pub fn lbp_minsum(
    inst: &MrfInstance,
    cfg: &MinSumConfig,
) -> Result<SolveReport, MessagePassingError> {
    let state = MessageState::new(inst, None, cfg.damping)?;
    Ok(run("lbp", state, inst, cfg))
}

/// Tree-reweighted min-sum. `rho = None` uses [`default_rho`] on every edge.
pub fn trbp_minsum(
    inst: &MrfInstance,
    cfg: &MinSumConfig,
    rho: Option<Vec<f64>>,
) -> Result<SolveReport, MessagePassingError> {
    let rho = rho.unwrap_or_else(|| vec![default_rho(inst); inst.cliques.len()]);
    let state = MessageState::new(inst, Some(rho), cfg.damping)?;
    Ok(run("trbp", state, inst, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrf::{brute_force_map, DEFAULT_BRUTE_BUDGET};

    fn two_node() -> MrfInstance {
        MrfInstance::from_factors(vec![2, 2], vec![(vec![0, 1], vec![0.0, 2.0, 2.0, 0.0])]).unwrap()
    }

    #[test]
    fn two_node_decodes_optimum() {
        let cfg = MinSumConfig::default();
        let r = lbp_minsum(&two_node(), &cfg).unwrap();
        assert_eq!(r.best.0, vec![0, 0]);
        assert_eq!(r.best_energy, 0.0);
        let r = trbp_minsum(&two_node(), &cfg, None).unwrap();
        assert_eq!(r.best.0, vec![0, 0]);
    }

    #[test]
    fn zero_iterations_is_unary_argmin() {
        let inst = MrfInstance::from_factors(
            vec![3, 2],
            vec![
                (vec![0], vec![2.0, 0.5, 1.0]),
                (vec![1], vec![1.0, 0.0]),
                (vec![0, 1], vec![0.0, 9.0, 0.0, 9.0, 0.0, 9.0]),
            ],
        )
        .unwrap();
        let r = lbp_minsum(
            &inst,
            &MinSumConfig {
                max_iters: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.best, inst.unary_argmin());
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn chain_is_exact() {
        let inst = MrfInstance::from_factors(
            vec![2, 3, 2],
            vec![
                (vec![0], vec![0.3, 0.1]),
                (vec![1], vec![0.5, 0.2, 0.9]),
                (vec![0, 1], vec![1.0, 0.2, 0.7, 0.4, 1.3, 0.05]),
                (vec![1, 2], vec![0.6, 0.1, 0.8, 1.1, 0.2, 0.35]),
            ],
        )
        .unwrap();
        let cfg = MinSumConfig {
            damping: 0.0,
            ..Default::default()
        };
        let (_, opt) = brute_force_map(&inst, DEFAULT_BRUTE_BUDGET).unwrap();
        assert_eq!(lbp_minsum(&inst, &cfg).unwrap().best_energy, opt);
    }

    #[test]
    fn messages_min_normalised() {
        let inst = MrfInstance::from_factors(
            vec![2, 2, 2],
            vec![
                (vec![0, 1], vec![0.3, 1.0, 2.0, 0.1]),
                (vec![1, 2], vec![1.3, 0.2, 0.4, 0.9]),
                (vec![0, 2], vec![0.5, 0.7, 1.1, 0.0]),
            ],
        )
        .unwrap();
        let mut st = MessageState::new(&inst, None, 0.1).unwrap();
        for _ in 0..5 {
            st.step();
            for d in 0..6 {
                let lo = st.message(d).iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(lo, 0.0);
            }
        }
    }

    #[test]
    fn rejects_high_order_and_bad_rho() {
        let hi =
            MrfInstance::from_factors(vec![2; 3], vec![(vec![0, 1, 2], vec![0.0; 8])]).unwrap();
        assert_eq!(
            lbp_minsum(&hi, &MinSumConfig::default()).unwrap_err(),
            MessagePassingError::HighOrderUnsupported { size: 3 }
        );
        assert!(matches!(
            trbp_minsum(&two_node(), &MinSumConfig::default(), Some(vec![0.0])),
            Err(MessagePassingError::InvalidRho { .. })
        ));
        assert!(matches!(
            trbp_minsum(&two_node(), &MinSumConfig::default(), Some(vec![1.5])),
            Err(MessagePassingError::InvalidRho { .. })
        ));
        assert!(matches!(
            lbp_minsum(
                &two_node(),
                &MinSumConfig {
                    damping: 1.0,
                    ..Default::default()
                }
            ),
            Err(MessagePassingError::InvalidDamping(_))
        ));
    }

    #[test]
    fn default_rho_uniform() {
        let cycle = MrfInstance::from_factors(
            vec![2; 4],
            [(0, 1), (1, 2), (2, 3), (0, 3)]
                .iter()
                .map(|&(a, b)| (vec![a, b], vec![0.0; 4]))
                .collect(),
        )
        .unwrap();
        assert_eq!(default_rho(&cycle), 0.75);
        assert_eq!(default_rho(&two_node()), 1.0);
    }
}
