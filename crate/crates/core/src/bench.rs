//! Benchmark driver: load instances, run solvers over trials in a worker
//! pool, cut each run into checkpoint rows, and write CSV reports.
//!
//! Report columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `instance` | file stem of the instance |
//! | `solver` | `neurolift`, `lbp`, `trbp` or `brute` |
//! | `trial` | trial index, from 0 |
//! | `seed` | seed used by the trial |
//! | `t_seconds` | checkpoint time; for the final row, the elapsed time of the last iteration |
//! | `best_energy` | lowest energy decoded up to the checkpoint |
//! | `loss_if_any` | relaxed loss at the checkpoint (neurolift only, empty otherwise) |
//! | `iterations` | iteration index reached at the checkpoint |
//! | `terminated_reason` | `checkpoint` for intermediate rows, otherwise `converged`, `max_iters` or `time_limit` |
//!
//! Each row's assignment is written to a sidecar file named
//! `<instance>.<solver>.trial<k>.row<r>.txt` holding one state index per
//! line, `r` counting rows within the `(instance, trial)` group.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gen::{gen, manifest_line, GenError, GenSpec};
use crate::lift::{train, train_model, trial_seed, LiftConfig};
use crate::message_passing::{lbp_minsum, trbp_minsum, MessagePassingError, MinSumConfig};
use crate::mrf::{brute_force_map, Assignment, MrfError, MrfInstance};
use crate::pci::{parse_pci, pci_to_mrf, PciError};
use crate::report::{SolveReport, Termination, Tracker};
use crate::uai::{from_energies, parse_uai, to_energies, write_uai, UaiError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Uai {
        path: PathBuf,
        #[source]
        source: UaiError,
    },
    #[error("{path}: {source}")]
    Pci {
        path: PathBuf,
        #[source]
        source: PciError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: unrecognised instance extension (expected .uai or .json)")]
    UnknownFormat(PathBuf),
    #[error("{0}: no instances found")]
    NoInstances(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    MessagePassing(#[from] MessagePassingError),
    #[error(transparent)]
    Mrf(#[from] MrfError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Neurolift,
    Lbp,
    Trbp,
    Brute,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Neurolift => "neurolift",
            Solver::Lbp => "lbp",
            Solver::Trbp => "trbp",
            Solver::Brute => "brute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Checkpoint {
    /// A row every so many seconds of wall-clock time.
    Seconds(f64),
    /// A row every so many iterations.
    Iterations(usize),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: Solver,
    /// Instance files, or directories scanned for `.uai` and `.json` files.
    pub instances: Vec<PathBuf>,
    pub time_limit: Option<f64>,
    pub checkpoint: Checkpoint,
    pub lift: LiftConfig,
    pub minsum: MinSumConfig,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    /// Floor for potentials read from UAI files.
    pub clamp: Option<f64>,
    pub brute_budget: u128,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: Solver::Neurolift,
            instances: Vec::new(),
            time_limit: None,
            checkpoint: Checkpoint::Seconds(200.0),
            lift: LiftConfig::default(),
            minsum: MinSumConfig::default(),
            trials: 1,
            seed: 0,
            threads: 0,
            clamp: None,
            brute_budget: crate::mrf::DEFAULT_BRUTE_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.instances.is_empty() {
            return bad("no instance paths given".into());
        }
        if let Some(p) = self.instances.iter().find(|p| !p.exists()) {
            return bad(format!("{} does not exist", p.display()));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return bad("time limit must be positive".into());
        }
        match self.checkpoint {
            Checkpoint::Seconds(s) if !(s > 0.0) => {
                return bad("checkpoint interval must be positive".into())
            }
            Checkpoint::Iterations(0) => return bad("checkpoint interval must be positive".into()),
            _ => {}
        }
        self.lift.validate().map_err(BenchError::Config)
    }
}

/// One CSV row plus the assignment behind its `best_energy`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub instance: String,
    pub solver: String,
    pub trial: usize,
    pub seed: u64,
    pub t_seconds: f64,
    pub best_energy: f64,
    pub loss_if_any: Option<f64>,
    pub iterations: usize,
    pub terminated_reason: String,
    #[serde(skip)]
    pub assignment: Assignment,
}

impl CsvRow {
    pub fn sidecar_name(&self, row: usize) -> String {
        format!(
            "{}.{}.trial{}.row{row}.txt",
            self.instance, self.solver, self.trial
        )
    }
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<CsvRow>,
    /// `(instance or path, error)` for every run that produced no rows.
    pub failures: Vec<(String, BenchError)>,
}

impl RunOutput {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Reads a `.uai` model or a `.json` PCI problem.
pub fn load_instance(path: &Path, clamp: Option<f64>) -> Result<MrfInstance, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("uai") => parse_uai(&text)
            .and_then(|raw| to_energies(&raw, clamp))
            .map_err(|source| BenchError::Uai {
                path: path.to_path_buf(),
                source,
            }),
        Some("json") => {
            parse_pci(&text)
                .map(|p| pci_to_mrf(&p))
                .map_err(|source| BenchError::Pci {
                    path: path.to_path_buf(),
                    source,
                })
        }
        _ => Err(BenchError::UnknownFormat(path.to_path_buf())),
    }
}

/// Expands directories into their instance files, sorted by name.
pub fn instance_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_err(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(f.extension().and_then(|e| e.to_str()), Some("uai" | "json")))
                .collect();
            if found.is_empty() {
                return Err(BenchError::NoInstances(p.clone()));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn instance_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// Runs one solver trial on a loaded instance.
pub fn solve(inst: &MrfInstance, cfg: &RunConfig, trial: usize) -> Result<SolveReport, BenchError> {
    let seed = trial_seed(cfg.seed, trial);
    let mut report = match cfg.solver {
        Solver::Neurolift => {
            let lift = LiftConfig {
                seed,
                ..cfg.lift.clone()
            };
            train(inst, &lift, cfg.time_limit)
        }
        Solver::Lbp | Solver::Trbp => {
            let ms = MinSumConfig {
                time_limit: cfg.time_limit,
                seed,
                ..cfg.minsum.clone()
            };
            if cfg.solver == Solver::Lbp {
                lbp_minsum(inst, &ms)?
            } else {
                trbp_minsum(inst, &ms, None)?
            }
        }
        Solver::Brute => {
            let mut tracker = Tracker::new();
            let (x, e) = brute_force_map(inst, cfg.brute_budget)?;
            tracker.record(0, x, e, None);
            tracker.finish("brute", Termination::Converged, seed, 0)
        }
    };
    report.trial = trial;
    report.seed = seed;
    Ok(report)
}

/// Cuts a report into checkpoint rows; the last row is always the final
/// state of the run.
pub fn checkpoint_rows(
    instance: &str,
    report: &SolveReport,
    checkpoint: Checkpoint,
) -> Vec<CsvRow> {
    let traj = &report.trajectory;
    let last = traj.len() - 1;
    let mut picks: Vec<(usize, f64)> = Vec::new();
    match checkpoint {
        Checkpoint::Seconds(dt) => {
            let end = traj[last].elapsed_secs;
            let mut k = 1.0;
            while k * dt < end {
                let t = k * dt;
                if let Some(i) = traj.iter().rposition(|r| r.elapsed_secs <= t) {
                    picks.push((i, t));
                }
                k += 1.0;
            }
        }
        Checkpoint::Iterations(every) => {
            for (i, r) in traj.iter().enumerate().take(last) {
                if r.iteration > 0 && r.iteration % every == 0 {
                    picks.push((i, r.elapsed_secs));
                }
            }
        }
    }
    picks.push((last, traj[last].elapsed_secs));
    let n_picks = picks.len();
    picks
        .into_iter()
        .enumerate()
        .map(|(k, (i, t))| {
            let rec = &traj[i];
            CsvRow {
                instance: instance.to_string(),
                solver: report.solver.clone(),
                trial: report.trial,
                seed: report.seed,
                t_seconds: t,
                best_energy: rec.best_energy,
                loss_if_any: rec.loss,
                iterations: rec.iteration,
                terminated_reason: if k + 1 == n_picks {
                    report.termination.to_string()
                } else {
                    "checkpoint".to_string()
                },
                assignment: report
                    .best_at(rec.iteration)
                    .expect("first record is an improvement")
                    .clone(),
            }
        })
        .collect()
}

/// Runs every `(instance, trial)` pair of `cfg` in a pool of `cfg.threads`
/// workers. Rows come back in instance, trial, checkpoint order regardless
/// of scheduling.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, BenchError> {
    cfg.validate()?;
    let files = instance_files(&cfg.instances)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let jobs: Vec<(usize, usize)> = (0..files.len())
        .flat_map(|f| (0..cfg.trials).map(move |t| (f, t)))
        .collect();
    let instances: Vec<Result<MrfInstance, BenchError>> = pool.install(|| {
        files
            .par_iter()
            .map(|f| load_instance(f, cfg.clamp))
            .collect()
    });
    let results: Vec<Option<Result<Vec<CsvRow>, BenchError>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(f, trial)| {
                let inst = instances[f].as_ref().ok()?;
                Some(
                    solve(inst, cfg, trial)
                        .map(|r| checkpoint_rows(&instance_name(&files[f]), &r, cfg.checkpoint)),
                )
            })
            .collect()
    });
    let mut out = RunOutput::default();
    for (f, inst) in instances.into_iter().enumerate() {
        if let Err(e) = inst {
            out.failures.push((files[f].display().to_string(), e));
        }
    }
    for (&(f, trial), res) in jobs.iter().zip(results) {
        match res {
            Some(Ok(rows)) => out.rows.extend(rows),
            Some(Err(e)) => out
                .failures
                .push((format!("{} trial {trial}", instance_name(&files[f])), e)),
            None => {}
        }
    }
    Ok(out)
}

/// Writes the report rows as CSV with a header line.
pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| BenchError::Csv(e.into()))?;
    Ok(())
}

/// Writes one sidecar assignment file per row into `dir`.
pub fn write_sidecars(rows: &[CsvRow], dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut group = (String::new(), usize::MAX);
    let mut k = 0;
    for r in rows {
        if (r.instance.as_str(), r.trial) != (group.0.as_str(), group.1) {
            group = (r.instance.clone(), r.trial);
            k = 0;
        }
        let path = dir.join(r.sidecar_name(k));
        let body: String = r.assignment.0.iter().map(|s| format!("{s}\n")).collect();
        fs::write(&path, body).map_err(io_err(&path))?;
        k += 1;
    }
    Ok(())
}

/// Reads a sidecar file back into an assignment.
pub fn read_sidecar(path: &Path) -> Result<Assignment, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim().parse().map_err(|_| {
                BenchError::Config(format!("{}: bad state index {l:?}", path.display()))
            })
        })
        .collect::<Result<_, _>>()
        .map(Assignment)
}

/// Loss surface around a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    /// Loss of the trained parameters.
    pub center_loss: f64,
    /// Grid coordinates, shared by both axes.
    pub coords: Vec<f64>,
    /// `n x n` losses, row index over alpha, column over beta.
    pub losses: Vec<f64>,
}

impl Landscape {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "beta", "loss"])?;
        let n = self.coords.len();
        for (i, a) in self.coords.iter().enumerate() {
            for (j, b) in self.coords.iter().enumerate() {
                w.serialize((a, b, self.losses[i * n + j]))?;
            }
        }
        w.flush().map_err(|e| BenchError::Csv(e.into()))?;
        Ok(())
    }
}

/// Evenly spaced grid on `[-r, r]`; the middle point of an odd grid is
/// exactly zero.
pub fn grid(r: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|i| r * (2.0 * i as f64 - m) / m).collect()
}

fn unit_direction(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Trains on `inst`, then evaluates `f(a, b) = L(theta + a * delta + b * eta)`
/// on an `n x n` grid over `[-r, r]^2`, with `delta` and `eta` independent
/// unit-norm Gaussian directions over all parameters drawn from `seed`.
/// The temperature is held at its value in the final training step.
pub fn landscape(
    inst: &MrfInstance,
    cfg: &LiftConfig,
    r: f64,
    n: usize,
    seed: u64,
) -> Result<Landscape, BenchError> {
    if !(r > 0.0) || n < 2 {
        return Err(BenchError::Config(format!(
            "need r > 0 and n >= 2, got r={r}, n={n}"
        )));
    }
    let trained = train_model(inst, cfg, None);
    let model = trained
        .model
        .ok_or_else(|| BenchError::Config("instance has no cliques; nothing to perturb".into()))?;
    let total = model.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = unit_direction(&mut rng, total);
    let eta = unit_direction(&mut rng, total);
    let coords = grid(r, n);
    let objective = &trained.objective;
    let t = trained.temperature;
    let center_loss = objective
        .model_loss(&model, t)
        .expect("trained model shapes are consistent");
    let losses: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map_init(
            || model.clone(),
            |m, cell| {
                let (a, b) = (coords[cell / n], coords[cell % n]);
                let mut off = 0;
                for (dst, src) in m.params_mut().into_iter().zip(model.params()) {
                    let len = src.len();
                    for (k, (d, &s)) in dst.data_mut().iter_mut().zip(src.data()).enumerate() {
                        *d = s + a * delta[off + k] + b * eta[off + k];
                    }
                    off += len;
                }
                objective.model_loss(m, t).expect("shapes unchanged")
            },
        )
        .collect();
    Ok(Landscape {
        center_loss,
        coords,
        losses,
    })
}

/// Converts an instance file to UAI text, going through the energy form.
pub fn export_uai(
    input: &Path,
    output: &Path,
    clamp: Option<f64>,
) -> Result<MrfInstance, BenchError> {
    let inst = load_instance(input, clamp)?;
    let raw = from_energies(&inst).map_err(|source| BenchError::Uai {
        path: input.to_path_buf(),
        source,
    })?;
    fs::write(output, write_uai(&raw)).map_err(io_err(output))?;
    Ok(inst)
}

/// Generates `count` instances named `<prefix>_<k>.uai` into `dir`, seeds
/// `spec.seed + k`, and appends one line per instance to
/// `dir/manifest.txt`.
pub fn gen_to_dir(
    spec: &GenSpec,
    count: usize,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut lines = String::new();
    let mut paths = Vec::with_capacity(count);
    for k in 0..count {
        let spec = GenSpec {
            seed: spec.seed.wrapping_add(k as u64),
            ..spec.clone()
        };
        let model = gen(&spec)?;
        let name = if count == 1 {
            prefix.to_string()
        } else {
            format!("{prefix}_{k}")
        };
        let path = dir.join(format!("{name}.uai"));
        fs::write(&path, write_uai(&model)).map_err(io_err(&path))?;
        lines.push_str(&manifest_line(&name, &model, &spec));
        lines.push('\n');
        paths.push(path);
    }
    let manifest = dir.join("manifest.txt");
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&manifest)
        .map_err(io_err(&manifest))?;
    f.write_all(lines.as_bytes()).map_err(io_err(&manifest))?;
    Ok(paths)
}
