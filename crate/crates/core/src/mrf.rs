//! Energy-form Markov random fields.
//!
//! `E(x) = sum_i unary_i(x_i) + sum_C table_C(x_C)`. Tables are dense and
//! row-major over the clique scope, last scope variable fastest. After
//! [`MrfInstance::from_factors`] every clique scope is strictly ascending,
//! singleton factors live in `unary` and each scope set appears once.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

/// Default enumeration budget for [`brute_force_map`].
pub const DEFAULT_BRUTE_BUDGET: u128 = 2_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MrfError {
    #[error("factor {factor}: table has {found} entries, scope requires {expected}")]
    ShapeMismatch {
        factor: usize,
        expected: usize,
        found: usize,
    },
    #[error("factor {factor}: variable {index} out of range for {n_vars} variables")]
    IndexOutOfRange {
        factor: usize,
        index: usize,
        n_vars: usize,
    },
    #[error("factor {factor}: variable {index} repeated in scope")]
    DuplicateIndex { factor: usize, index: usize },
    #[error("factor {factor}: empty scope")]
    EmptyScope { factor: usize },
    #[error("variable {var} has cardinality 0")]
    ZeroCardinality { var: usize },
    #[error("factor {factor}: non-finite energy {value}")]
    NonFinite { factor: usize, value: f64 },
    #[error("assignment invalid: {0}")]
    InvalidAssignment(String),
    #[error("state space of {size} assignments exceeds budget {budget}")]
    TooLarge { size: u128, budget: u128 },
}

/// One energy table over an ascending scope.
#[derive(Debug, Clone, PartialEq)]
pub struct Clique {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

/// One chosen state per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfInstance {
    pub cardinalities: Vec<usize>,
    pub unary: Vec<Vec<f64>>,
    pub cliques: Vec<Clique>,
}

/// Row-major strides for a table with the given axis lengths.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

impl MrfInstance {
    /// Builds a canonical instance from arbitrary energy factors.
    ///
    /// Singleton scopes are added into the unary vectors, each scope is sorted
    /// ascending with its table transposed to match, and factors over the same
    /// variable set are summed. Cliques come out ordered by scope.
    pub fn from_factors(
        cardinalities: Vec<usize>,
        factors: Vec<(Vec<usize>, Vec<f64>)>,
    ) -> Result<Self, MrfError> {
        let n = cardinalities.len();
        if let Some(var) = cardinalities.iter().position(|&c| c == 0) {
            return Err(MrfError::ZeroCardinality { var });
        }
        let mut unary: Vec<Vec<f64>> = cardinalities.iter().map(|&c| vec![0.0; c]).collect();
        let mut merged: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
        for (k, (scope, table)) in factors.into_iter().enumerate() {
            if scope.is_empty() {
                return Err(MrfError::EmptyScope { factor: k });
            }
            for (a, &v) in scope.iter().enumerate() {
                if v >= n {
                    return Err(MrfError::IndexOutOfRange {
                        factor: k,
                        index: v,
                        n_vars: n,
                    });
                }
                if scope[..a].contains(&v) {
                    return Err(MrfError::DuplicateIndex {
                        factor: k,
                        index: v,
                    });
                }
            }
            let dims: Vec<usize> = scope.iter().map(|&v| cardinalities[v]).collect();
            let expected: usize = dims.iter().product();
            if table.len() != expected {
                return Err(MrfError::ShapeMismatch {
                    factor: k,
                    expected,
                    found: table.len(),
                });
            }
            if let Some(&value) = table.iter().find(|v| !v.is_finite()) {
                return Err(MrfError::NonFinite { factor: k, value });
            }
            if scope.len() == 1 {
                for (u, e) in unary[scope[0]].iter_mut().zip(&table) {
                    *u += e;
                }
                continue;
            }
            let (sorted, table) = sort_scope(&scope, &dims, table);
            match merged.get_mut(&sorted) {
                Some(acc) => acc.iter_mut().zip(&table).for_each(|(a, b)| *a += b),
                None => {
                    merged.insert(sorted, table);
                }
            }
        }
        let cliques = merged
            .into_iter()
            .map(|(scope, table)| Clique { scope, table })
            .collect();
        Ok(MrfInstance {
            cardinalities,
            unary,
            cliques,
        })
    }

    /// Re-runs canonicalisation on this instance's own factors.
    pub fn canonicalize(&self) -> Result<Self, MrfError> {
        let mut factors: Vec<(Vec<usize>, Vec<f64>)> = self
            .unary
            .iter()
            .enumerate()
            .map(|(i, u)| (vec![i], u.clone()))
            .collect();
        factors.extend(
            self.cliques
                .iter()
                .map(|c| (c.scope.clone(), c.table.clone())),
        );
        Self::from_factors(self.cardinalities.clone(), factors)
    }

    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn max_states(&self) -> usize {
        self.cardinalities.iter().copied().max().unwrap_or(0)
    }

    /// True if no clique has more than two variables.
    pub fn is_pairwise(&self) -> bool {
        self.cliques.iter().all(|c| c.scope.len() <= 2)
    }

    pub fn max_clique_size(&self) -> usize {
        self.cliques
            .iter()
            .map(|c| c.scope.len())
            .max()
            .unwrap_or(0)
    }

    pub fn check_assignment(&self, x: &Assignment) -> Result<(), MrfError> {
        if x.len() != self.n_vars() {
            return Err(MrfError::InvalidAssignment(format!(
                "length {} for {} variables",
                x.len(),
                self.n_vars()
            )));
        }
        for (i, (&s, &c)) in x.0.iter().zip(&self.cardinalities).enumerate() {
            if s >= c {
                return Err(MrfError::InvalidAssignment(format!(
                    "variable {i} has state {s} but cardinality {c}"
                )));
            }
        }
        Ok(())
    }

    /// Exact energy of an assignment.
    ///
    /// Panics if the assignment does not fit the instance; use
    /// [`MrfInstance::check_assignment`] for untrusted input.
    pub fn energy(&self, x: &Assignment) -> f64 {
        if let Err(e) = self.check_assignment(x) {
            panic!("{e}");
        }
        let unary: f64 = self
            .unary
            .iter()
            .zip(&x.0)
            .fold(0.0, |acc, (u, &s)| acc + u[s]);
        let cliques: f64 = self
            .cliques
            .iter()
            .fold(0.0, |acc, c| acc + c.table[self.clique_index(c, &x.0)]);
        unary + cliques
    }

    fn clique_index(&self, c: &Clique, states: &[usize]) -> usize {
        c.scope
            .iter()
            .fold(0, |idx, &v| idx * self.cardinalities[v] + states[v])
    }

    /// Per-variable minimiser of the unary energies, smallest index on ties.
    pub fn unary_argmin(&self) -> Assignment {
        Assignment(self.unary.iter().map(|u| argmin(u)).collect())
    }
}

/// Index of the smallest entry; the first one on ties.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn sort_scope(scope: &[usize], dims: &[usize], table: Vec<f64>) -> (Vec<usize>, Vec<f64>) {
    if scope.windows(2).all(|w| w[0] < w[1]) {
        return (scope.to_vec(), table);
    }
    let mut order: Vec<usize> = (0..scope.len()).collect();
    order.sort_by_key(|&a| scope[a]);
    let sorted: Vec<usize> = order.iter().map(|&a| scope[a]).collect();
    let new_dims: Vec<usize> = order.iter().map(|&a| dims[a]).collect();
    let old_strides = strides(dims);
    // stride in the old table of each axis of the new table
    let gather: Vec<usize> = order.iter().map(|&a| old_strides[a]).collect();
    let mut out = Vec::with_capacity(table.len());
    let mut digits = vec![0usize; scope.len()];
    for _ in 0..table.len() {
        let src: usize = digits.iter().zip(&gather).map(|(d, s)| d * s).sum();
        out.push(table[src]);
        for a in (0..digits.len()).rev() {
            digits[a] += 1;
            if digits[a] < new_dims[a] {
                break;
            }
            digits[a] = 0;
        }
    }
    (sorted, out)
}

/// The pairwise graph obtained by connecting every two variables that share
/// a clique.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseGraph {
    pub n_vars: usize,
    /// Sorted, deduplicated `(i, j)` pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Sorted neighbour lists.
    pub adjacency: Vec<Vec<usize>>,
}

impl PairwiseGraph {
    pub fn from_edges(n_vars: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut list: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        list.sort_unstable();
        list.dedup();
        let mut adjacency = vec![Vec::new(); n_vars];
        for &(i, j) in &list {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        PairwiseGraph {
            n_vars,
            edges: list,
            adjacency,
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }
}

/// Connects all pairs of variables within each clique, each edge once.
pub fn clique_expansion(inst: &MrfInstance) -> PairwiseGraph {
    let pairs = inst.cliques.iter().flat_map(|c| {
        let s = &c.scope;
        (0..s.len()).flat_map(move |a| (a + 1..s.len()).map(move |b| (s[a], s[b])))
    });
    PairwiseGraph::from_edges(inst.n_vars(), pairs)
}

/// A clique table padded to `S` states on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedClique {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

/// An instance lifted to a uniform state count.
///
/// Padded entries carry the maximum of the table they extend, so they are
/// never preferable to a real state.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedInstance {
    pub base: MrfInstance,
    pub states: usize,
    /// `n_vars x states`, row-major.
    pub unary: Vec<f64>,
    pub cliques: Vec<PaddedClique>,
    /// `n_vars x states`; `true` where the state exists in the base instance.
    pub mask: Vec<bool>,
}

impl PaddedInstance {
    pub fn n_vars(&self) -> usize {
        self.base.n_vars()
    }

    /// The mask as additive logits: `0` for valid states, `-inf` otherwise.
    pub fn mask_logits(&self) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&ok| if ok { 0.0 } else { f64::NEG_INFINITY })
            .collect()
    }

    /// Energy evaluated on the padded tables.
    pub fn energy(&self, x: &Assignment) -> f64 {
        let s = self.states;
        let unary =
            x.0.iter()
                .enumerate()
                .fold(0.0, |acc, (i, &xi)| acc + self.unary[i * s + xi]);
        let cliques = self.cliques.iter().fold(0.0, |acc, c| {
            let idx = c.scope.iter().fold(0, |idx, &v| idx * s + x.0[v]);
            acc + c.table[idx]
        });
        unary + cliques
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Pads every variable to `S = max cardinality` states.
pub fn pad(inst: &MrfInstance) -> PaddedInstance {
    let n = inst.n_vars();
    let s = inst.max_states();
    let mut unary = Vec::with_capacity(n * s);
    let mut mask = Vec::with_capacity(n * s);
    for (u, &c) in inst.unary.iter().zip(&inst.cardinalities) {
        let fill = max_of(u);
        unary.extend_from_slice(u);
        unary.extend(std::iter::repeat_n(fill, s - c));
        mask.extend((0..s).map(|a| a < c));
    }
    let cliques = inst
        .cliques
        .iter()
        .map(|c| {
            let dims: Vec<usize> = c.scope.iter().map(|&v| inst.cardinalities[v]).collect();
            let src_strides = strides(&dims);
            let fill = max_of(&c.table);
            let k = c.scope.len();
            let total = s.pow(k as u32);
            let mut table = Vec::with_capacity(total);
            let mut digits = vec![0usize; k];
            for _ in 0..total {
                let valid = digits.iter().zip(&dims).all(|(d, m)| d < m);
                table.push(if valid {
                    let src: usize = digits.iter().zip(&src_strides).map(|(d, t)| d * t).sum();
                    c.table[src]
                } else {
                    fill
                });
                for a in (0..k).rev() {
                    digits[a] += 1;
                    if digits[a] < s {
                        break;
                    }
                    digits[a] = 0;
                }
            }
            PaddedClique {
                scope: c.scope.clone(),
                table,
            }
        })
        .collect();
    PaddedInstance {
        base: inst.clone(),
        states: s,
        unary,
        cliques,
        mask,
    }
}

/// Exhaustive MAP search.
///
/// Assignments are visited in lexicographic order and only a strictly lower
/// energy replaces the incumbent, so ties resolve to the lexicographically
/// smallest minimiser.
pub fn brute_force_map(inst: &MrfInstance, budget: u128) -> Result<(Assignment, f64), MrfError> {
    let size = inst
        .cardinalities
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if size > budget {
        return Err(MrfError::TooLarge { size, budget });
    }
    let n = inst.n_vars();
    let mut x = Assignment(vec![0; n]);
    let mut best = (x.clone(), inst.energy(&x));
    loop {
        let mut a = n;
        loop {
            if a == 0 {
                return Ok(best);
            }
            a -= 1;
            x.0[a] += 1;
            if x.0[a] < inst.cardinalities[a] {
                break;
            }
            x.0[a] = 0;
        }
        let e = inst.energy(&x);
        if e < best.1 {
            best = (x.clone(), e);
        }
    }
}
