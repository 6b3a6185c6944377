//! Lifted MAP solver: the discrete assignment is reparameterised as the
//! output of a graph neural network and the network is trained to minimise
//! the expected energy under its own output distribution.
//!
//! Per node the network holds a free embedding row. `K` convolution layers
//! (GraphSAGE by default) update the embeddings, the outputs of all layers
//! are concatenated and projected (jumping knowledge), and an affine head
//! produces `S` logits per node. A masked softmax turns those into state
//! probabilities `p_i`, padded states getting probability exactly 0. The
//! training loss is
//!
//! ```text
//! L = sum_i <p_i, phi_i> + sum_C <psi_C, (x)_{i in C} p_i>
//! ```
//!
//! which equals the energy whenever every `p_i` is one-hot. The assignment
//! is read off by rounding each row to its most probable valid state.
//!
//! Exploration uses a softmax temperature that starts at `t0` and decays
//! geometrically to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::{Adam, Aggregator, Tape, Tensor, TensorError, Var};
use crate::mrf::{clique_expansion, pad, Assignment, MrfInstance, PaddedInstance, PairwiseGraph};
use crate::report::{SolveReport, Termination, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    GraphSage,
    Gcn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftConfig {
    /// Embedding width `d_l`.
    pub lift_dim: usize,
    /// Number of convolution layers `K`.
    pub layers: usize,
    /// Output width of the jumping-knowledge projection.
    pub jk_dim: usize,
    pub lr: f64,
    pub max_iters: usize,
    /// Early stop once the loss moves less than `tol` for `patience`
    /// consecutive iterations.
    pub tol: f64,
    pub patience: usize,
    /// Initial softmax temperature.
    pub t0: f64,
    /// Per-iteration temperature decay factor, in (0, 1).
    pub anneal: f64,
    pub seed: u64,
    pub backbone: Backbone,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            lift_dim: 1024,
            layers: 5,
            jk_dim: 128,
            lr: 1e-4,
            max_iters: 150,
            tol: 1e-4,
            patience: 10,
            t0: 5.0,
            anneal: 0.95,
            seed: 0,
            backbone: Backbone::GraphSage,
        }
    }
}

impl LiftConfig {
    /// Settings for synthetic benchmark instances (the default).
    pub fn synthetic() -> Self {
        Self::default()
    }

    /// Settings for UAI benchmark instances: deeper network, fewer steps.
    pub fn uai() -> Self {
        LiftConfig {
            layers: 8,
            max_iters: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lift_dim == 0 || self.layers == 0 || self.jk_dim == 0 {
            return Err("lift_dim, layers and jk_dim must be at least 1".into());
        }
        if !(self.lr > 0.0) {
            return Err(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.anneal > 0.0 && self.anneal < 1.0) {
            return Err(format!(
                "anneal factor must lie in (0, 1), got {}",
                self.anneal
            ));
        }
        if !(self.t0 >= 1.0) {
            return Err(format!(
                "initial temperature must be at least 1, got {}",
                self.t0
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Applied to the node's own embedding (the only weight for GCN).
    pub w_self: Tensor,
    /// Applied to the neighbour mean; GraphSAGE only.
    pub w_nbr: Option<Tensor>,
}

/// Network parameters plus the fixed graph data the forward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedModel {
    pub embeddings: Tensor,
    pub layers: Vec<Layer>,
    pub jk_proj: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
    pub backbone: Backbone,
    /// `0` for valid states, `-inf` for padding; `n x S`.
    pub mask: Vec<f64>,
    aggregator: Aggregator,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn fan_in(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, rows, cols, (6.0 / rows as f64).sqrt())
}

/// Samples a fresh model. Deterministic in `cfg.seed`.
pub fn init_model(graph: &PairwiseGraph, padded: &PaddedInstance, cfg: &LiftConfig) -> LiftedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = graph.n_vars;
    let d = cfg.lift_dim;
    let embeddings = uniform(&mut rng, n, d, (6.0 / d as f64).sqrt());
    let layers = (0..cfg.layers)
        .map(|_| Layer {
            w_self: fan_in(&mut rng, d, d),
            w_nbr: match cfg.backbone {
                Backbone::GraphSage => Some(fan_in(&mut rng, d, d)),
                Backbone::Gcn => None,
            },
        })
        .collect();
    let jk_proj = fan_in(&mut rng, cfg.layers * d, cfg.jk_dim);
    let head_w = fan_in(&mut rng, cfg.jk_dim, padded.states);
    let head_b = Tensor::zeros(vec![1, padded.states]);
    let aggregator = match cfg.backbone {
        Backbone::GraphSage => Aggregator::mean(graph),
        Backbone::Gcn => Aggregator::gcn(graph),
    };
    LiftedModel {
        embeddings,
        layers,
        jk_proj,
        head_w,
        head_b,
        backbone: cfg.backbone,
        mask: padded.mask_logits(),
        aggregator,
    }
}

/// Tape handles produced by [`LiftedModel::forward`].
pub struct Forward {
    /// One handle per entry of [`LiftedModel::params`], same order.
    pub params: Vec<Var>,
    /// Pre-activations of each layer.
    pub preacts: Vec<Var>,
    /// `n x S` state probabilities.
    pub probs: Var,
}

impl LiftedModel {
    pub fn states(&self) -> usize {
        self.head_b.len()
    }

    pub fn n_vars(&self) -> usize {
        self.embeddings.rows()
    }

    /// All trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embeddings];
        for l in &self.layers {
            out.push(&l.w_self);
            if let Some(w) = &l.w_nbr {
                out.push(w);
            }
        }
        out.extend([&self.jk_proj, &self.head_w, &self.head_b]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embeddings];
        for l in &mut self.layers {
            out.push(&mut l.w_self);
            if let Some(w) = &mut l.w_nbr {
                out.push(w);
            }
        }
        out.extend([&mut self.jk_proj, &mut self.head_w, &mut self.head_b]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Records the forward pass on `tape`.
    pub fn forward<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        temperature: f64,
    ) -> Result<Forward, TensorError> {
        let h0 = tape.param(&self.embeddings);
        let mut params = vec![h0];
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = h0;
        for layer in &self.layers {
            let ws = tape.param(&layer.w_self);
            params.push(ws);
            let pre = match &layer.w_nbr {
                Some(w_nbr) => {
                    let wn = tape.param(w_nbr);
                    params.push(wn);
                    let own = tape.matmul(h, ws)?;
                    let mean = tape.aggregate(h, &self.aggregator)?;
                    let nbr = tape.matmul(mean, wn)?;
                    tape.add(own, nbr)?
                }
                None => {
                    let agg = tape.aggregate(h, &self.aggregator)?;
                    tape.matmul(agg, ws)?
                }
            };
            preacts.push(pre);
            h = tape.relu(pre);
            outs.push(h);
        }
        let jk = tape.param(&self.jk_proj);
        let hw = tape.param(&self.head_w);
        let hb = tape.param(&self.head_b);
        params.extend([jk, hw, hb]);
        let cat = tape.concat_cols(&outs)?;
        let proj = tape.matmul(cat, jk)?;
        let lin = tape.matmul(proj, hw)?;
        let logits = tape.add_row_bias(lin, hb)?;
        let probs = tape.masked_softmax(logits, &self.mask, temperature)?;
        Ok(Forward {
            params,
            preacts,
            probs,
        })
    }

    /// State probabilities at the given temperature.
    pub fn probabilities(&self, temperature: f64) -> Result<Tensor, TensorError> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, temperature)?;
        Ok(tape.value(f.probs).clone())
    }
}

/// The relaxed energy of a padded instance, evaluated on probability rows.
#[derive(Debug, Clone)]
pub struct Objective {
    pub padded: PaddedInstance,
    unary: Tensor,
}

impl Objective {
    pub fn new(padded: PaddedInstance) -> Self {
        let unary = Tensor::matrix(padded.n_vars(), padded.states, padded.unary.clone());
        Objective { padded, unary }
    }

    /// Records the loss for `probs` on `tape`.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a>, probs: Var) -> Result<Var, TensorError> {
        let u = tape.param(&self.unary);
        let unary = tape.inner_product(probs, u)?;
        let cliques = tape.clique_sum(probs, &self.padded.cliques)?;
        tape.add(unary, cliques)
    }

    /// Loss of an explicit `n x S` probability matrix.
    pub fn loss(&self, probs: &Tensor) -> Result<f64, TensorError> {
        if probs.shape() != [self.padded.n_vars(), self.padded.states] {
            return Err(TensorError::ShapeMismatch {
                op: "loss",
                left: probs.shape().to_vec(),
                right: vec![self.padded.n_vars(), self.padded.states],
            });
        }
        let mut tape = Tape::new();
        let p = tape.param(probs);
        let l = self.record(&mut tape, p)?;
        Ok(tape.value(l).item())
    }

    /// Loss of the model's output at `temperature`.
    pub fn model_loss(&self, model: &LiftedModel, temperature: f64) -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, temperature)?;
        let l = self.record(&mut tape, f.probs)?;
        Ok(tape.value(l).item())
    }

    /// Loss, gradients for every parameter (in [`LiftedModel::params`]
    /// order) and the probabilities they were computed from.
    pub fn loss_and_grads(
        &self,
        model: &LiftedModel,
        temperature: f64,
    ) -> Result<(f64, Vec<Tensor>, Tensor), TensorError> {
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, temperature)?;
        let l = self.record(&mut tape, f.probs)?;
        let grads = tape.backward(l)?;
        let g = f.params.iter().map(|&v| grads.wrt(&tape, v)).collect();
        Ok((tape.value(l).item(), g, tape.value(f.probs).clone()))
    }
}

/// Loss of an explicit probability matrix on a padded instance.
pub fn loss(padded: &PaddedInstance, probs: &Tensor) -> Result<f64, TensorError> {
    Objective::new(padded.clone()).loss(probs)
}

/// Rounds each row to its most probable valid state, lowest index on ties.
pub fn decode(probs: &Tensor, mask: &[bool]) -> Assignment {
    let s = probs.cols();
    Assignment(
        (0..probs.rows())
            .map(|i| {
                let row = probs.row(i);
                let valid = &mask[i * s..(i + 1) * s];
                let mut best: Option<usize> = None;
                for a in 0..s {
                    if valid[a] && best.is_none_or(|b| row[a] > row[b]) {
                        best = Some(a);
                    }
                }
                best.expect("mask row has a valid state")
            })
            .collect(),
    )
}

/// A finished training run with the model in its final state.
#[derive(Debug, Clone)]
pub struct Trained {
    pub report: SolveReport,
    pub model: Option<LiftedModel>,
    pub objective: Objective,
    /// Temperature of the last evaluated forward pass.
    pub temperature: f64,
}

/// Trains a model on `inst` and reports the best rounded assignment seen.
pub fn train(inst: &MrfInstance, cfg: &LiftConfig, time_limit: Option<f64>) -> SolveReport {
    train_model(inst, cfg, time_limit).report
}

/// [`train`], also returning the final model.
///
/// The last recorded loss is the loss of the returned parameters: no
/// optimiser step follows the final evaluation.
pub fn train_model(inst: &MrfInstance, cfg: &LiftConfig, time_limit: Option<f64>) -> Trained {
    let objective = Objective::new(pad(inst));
    let mut tracker = Tracker::new();
    if inst.cliques.is_empty() {
        let x = inst.unary_argmin();
        let e = inst.energy(&x);
        tracker.record(0, x, e, Some(e));
        return Trained {
            report: tracker.finish("neurolift", Termination::Converged, cfg.seed, 0),
            model: None,
            objective,
            temperature: 1.0,
        };
    }
    let graph = clique_expansion(inst);
    let mut model = init_model(&graph, &objective.padded, cfg);
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|t| t.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = Adam::new(cfg.lr, &shape_refs);
    let mut temperature = cfg.t0;
    let mut last_temperature = temperature;
    let mut prev_loss: Option<f64> = None;
    let mut calm = 0;
    let mut termination = Termination::MaxIters;
    for t in 0..cfg.max_iters.max(1) {
        if t > 0 && time_limit.is_some_and(|lim| tracker.elapsed() >= lim) {
            termination = Termination::TimeLimit;
            break;
        }
        let (loss, grads, probs) = objective
            .loss_and_grads(&model, temperature)
            .expect("model shapes are consistent");
        last_temperature = temperature;
        let x = decode(&probs, &objective.padded.mask);
        let e = inst.energy(&x);
        tracker.record(t, x, e, Some(loss));
        if let Some(prev) = prev_loss {
            calm = if (loss - prev).abs() < cfg.tol {
                calm + 1
            } else {
                0
            };
        }
        prev_loss = Some(loss);
        if calm >= cfg.patience {
            termination = Termination::Converged;
            break;
        }
        if t + 1 >= cfg.max_iters {
            break;
        }
        adam.step(&mut model.params_mut(), &grads)
            .expect("gradient shapes match parameters");
        temperature = (cfg.anneal * temperature).max(1.0);
    }
    Trained {
        report: tracker.finish("neurolift", termination, cfg.seed, 0),
        model: Some(model),
        objective,
        temperature: last_temperature,
    }
}

/// Seed for trial `trial` derived from a base seed; trial 0 keeps the base.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiTrialReport {
    pub reports: Vec<SolveReport>,
    pub best_energy: f64,
    pub mean_energy: f64,
    /// Population standard deviation of the per-trial best energies.
    pub std_energy: f64,
}

impl MultiTrialReport {
    pub fn best(&self) -> &SolveReport {
        self.reports
            .iter()
            .find(|r| r.best_energy == self.best_energy)
            .expect("non-empty")
    }

    /// `mean ± std` with three decimals.
    pub fn summary(&self) -> String {
        format!("{:.3} ± {:.3}", self.mean_energy, self.std_energy)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Independent trials with seeds from [`trial_seed`], run in parallel.
pub fn multi_trial(
    inst: &MrfInstance,
    cfg: &LiftConfig,
    trials: usize,
    time_limit: Option<f64>,
) -> MultiTrialReport {
    assert!(trials >= 1, "at least one trial");
    let reports: Vec<SolveReport> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let cfg = LiftConfig {
                seed: trial_seed(cfg.seed, k),
                ..cfg.clone()
            };
            let mut r = train(inst, &cfg, time_limit);
            r.trial = k;
            r
        })
        .collect();
    let energies: Vec<f64> = reports.iter().map(|r| r.best_energy).collect();
    let (mean_energy, std_energy) = mean_std(&energies);
    let best_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
    MultiTrialReport {
        reports,
        best_energy,
        mean_energy,
        std_energy,
    }
}
