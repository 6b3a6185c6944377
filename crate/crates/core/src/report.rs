use std::fmt;

use serde::Serialize;

use crate::mrf::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    TimeLimit,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::TimeLimit => "time_limit",
        })
    }
}

/// State of a solver after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    /// Relaxed loss, for solvers that have one.
    pub loss: Option<f64>,
    /// Exact energy of the assignment decoded at this iteration.
    pub energy: f64,
    /// Lowest decoded energy up to and including this iteration.
    pub best_energy: f64,
    pub elapsed_secs: f64,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub solver: String,
    pub best: Assignment,
    pub best_energy: f64,
    /// Assignment decoded at the last iteration and its energy.
    pub final_assignment: Assignment,
    pub final_energy: f64,
    pub final_loss: Option<f64>,
    pub trajectory: Vec<IterRecord>,
    /// `(iteration, assignment)` every time the best energy improved.
    pub improvements: Vec<(usize, Assignment)>,
    pub termination: Termination,
    pub seed: u64,
    pub trial: usize,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.trajectory.last().map_or(0, |r| r.iteration)
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timestamps(&self) -> SolveReport {
        let mut r = self.clone();
        r.trajectory.iter_mut().for_each(|t| t.elapsed_secs = 0.0);
        r
    }

    /// Best assignment known at the end of `iteration`.
    pub fn best_at(&self, iteration: usize) -> Option<&Assignment> {
        self.improvements
            .iter()
            .take_while(|(it, _)| *it <= iteration)
            .last()
            .map(|(_, a)| a)
    }
}

/// Incremental builder shared by the iterative solvers.
#[derive(Debug)]
pub(crate) struct Tracker {
    start: std::time::Instant,
    trajectory: Vec<IterRecord>,
    improvements: Vec<(usize, Assignment)>,
    best: Option<(Assignment, f64)>,
    last: Option<(Assignment, f64, Option<f64>)>,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker {
            start: std::time::Instant::now(),
            trajectory: Vec::new(),
            improvements: Vec::new(),
            best: None,
            last: None,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn record(&mut self, iteration: usize, x: Assignment, energy: f64, loss: Option<f64>) {
        let improved = self.best.as_ref().is_none_or(|(_, b)| energy < *b);
        if improved {
            self.best = Some((x.clone(), energy));
            self.improvements.push((iteration, x.clone()));
        }
        let best_energy = self.best.as_ref().map_or(energy, |b| b.1);
        self.trajectory.push(IterRecord {
            iteration,
            loss,
            energy,
            best_energy,
            elapsed_secs: self.elapsed(),
        });
        self.last = Some((x, energy, loss));
    }

    pub fn finish(
        self,
        solver: &str,
        termination: Termination,
        seed: u64,
        trial: usize,
    ) -> SolveReport {
        let (best, best_energy) = self.best.expect("at least one record");
        let (final_assignment, final_energy, final_loss) = self.last.expect("at least one record");
        SolveReport {
            solver: solver.to_string(),
            best,
            best_energy,
            final_assignment,
            final_energy,
            final_loss,
            trajectory: self.trajectory,
            improvements: self.improvements,
            termination,
            seed,
            trial,
        }
    }
}
