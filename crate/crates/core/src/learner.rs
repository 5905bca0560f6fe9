//! Blended learning and inference.
//!
//! Each outer iteration runs `sweeps_per_step` inference sweeps on every
//! sample and then takes one backtracking gradient step on the weights with
//! the messages frozen. Both phases are descent steps on the same convex
//! objective (for `ε ≥ 0`, `c_r ≥ 0`), so the weights may move while the
//! beliefs still disagree on their marginals.
//!
//! Per-sample work runs on a worker pool; every reduction over samples is done
//! in sample order afterwards, so results do not depend on the worker count.

use std::fmt;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::LearnError;
use crate::inference::{decode_beliefs, inference_sweep, marginal_residual, run_inference, MessageState, SweepReport, Tempering};
use crate::model::{potentials, validate_model, CountingNumbers, CountingScheme, Model, RegionGraph, Sample, ValidationWarning, Weights};
use crate::objective::{assemble_report, reduce_primal, sample_moments, sample_primal, sample_terms, MomentMismatch, ObjectiveReport};
use crate::softmax::argmax;

/// How the counting numbers are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Counting {
    /// `c_r = 1` for every region.
    Ones,
    /// `c_r = 1 − |P(r)|`; non-convex, experimental.
    Bethe,
    /// Explicit per-region values.
    Explicit(Vec<f64>),
}

impl Counting {
    pub fn resolve(&self, graph: &RegionGraph) -> Result<CountingNumbers, LearnError> {
        Ok(match self {
            Counting::Ones => CountingNumbers::ones(graph),
            Counting::Bethe => CountingNumbers::bethe(graph),
            Counting::Explicit(values) => CountingNumbers::from_values(graph, values.clone())?,
        })
    }

    pub fn scheme(&self) -> CountingScheme {
        match self {
            Counting::Ones => CountingScheme::Ones,
            Counting::Bethe => CountingScheme::Bethe,
            Counting::Explicit(_) => CountingScheme::File,
        }
    }
}

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub eps: f64,
    /// Regularization constant `C`.
    pub c_reg: f64,
    pub counting: Counting,
    pub sweeps_per_step: usize,
    pub max_outer_iters: usize,
    pub primal_rel_tol: f64,
    pub residual_tol: f64,
    pub grad_norm_tol: f64,
    pub line_search: LineSearch,
    pub worker_count: usize,
    /// Recorded for reproducibility; training itself is deterministic.
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            eps: 1.0,
            c_reg: 1.0,
            counting: Counting::Ones,
            sweeps_per_step: 1,
            max_outer_iters: 10_000,
            primal_rel_tol: 1e-8,
            residual_tol: 1e-6,
            grad_norm_tol: 1e-6,
            line_search: LineSearch::default(),
            worker_count: 1,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    fn check(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad("eps must be finite and nonnegative");
        }
        if !(self.c_reg.is_finite() && self.c_reg >= 0.0) {
            return bad("C must be finite and nonnegative");
        }
        if self.sweeps_per_step == 0 {
            return bad("sweeps_per_step must be positive");
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0 && ls.shrink > 0.0 && ls.shrink < 1.0 && ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return bad("line search needs initial step > 0, shrink and sufficient decrease in (0, 1)");
        }
        Ok(())
    }
}

/// Runs per-sample closures sequentially or on a fixed-size pool. Results
/// always come back in sample order.
pub enum Executor {
    Sequential,
    Pool(ThreadPool),
}

impl Executor {
    pub fn with_workers(workers: usize) -> Result<Self, LearnError> {
        if workers <= 1 {
            return Ok(Executor::Sequential);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(Executor::Pool)
            .map_err(|e| LearnError::Pool(e.to_string()))
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => (0..n).map(f).collect(),
            Executor::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }

    pub fn update<S, T, F>(&self, items: &mut [S], f: F) -> Vec<T>
    where
        S: Send,
        T: Send,
        F: Fn(usize, &mut S) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect(),
            Executor::Pool(pool) => pool.install(|| {
                items
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, s)| f(i, s))
                    .collect()
            }),
        }
    }
}

/// The decomposed training objective over a sample set.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a Model,
    pub samples: &'a [Sample],
    pub tempering: Tempering<'a>,
    pub c_reg: f64,
    pub exec: &'a Executor,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a Model, samples: &'a [Sample], tempering: Tempering<'a>, c_reg: f64) -> Self {
        Problem {
            model,
            samples,
            tempering,
            c_reg,
            exec: &Executor::Sequential,
        }
    }

    pub fn with_executor(self, exec: &'a Executor) -> Self {
        Problem { exec, ..self }
    }

    pub fn primal(&self, w: &Weights, states: &[MessageState]) -> f64 {
        let losses = self.exec.map(self.samples.len(), |i| {
            sample_primal(self.model, &self.samples[i], &states[i], w, self.tempering)
        });
        reduce_primal(&losses, w, self.c_reg)
    }

    /// Gradient in `w` with `λ` fixed: `Σ_samples Σ_r (E_{b_r}[φ_{k,r}] − φ_{k,r}(y_r)) + C w_k`.
    pub fn gradient(&self, w: &Weights, states: &[MessageState]) -> Vec<f64> {
        let graph = self.model.graph();
        let moments = self.exec.map(self.samples.len(), |i| {
            let sample = &self.samples[i];
            let theta = potentials(self.model, sample, w, true);
            let beliefs = crate::inference::compute_beliefs(graph, &theta, &states[i], self.tempering);
            sample_moments(self.model, sample, &beliefs)
        });
        let mut g = MomentMismatch::reduce(self.model.feature_count(), &moments).z;
        for (gk, wk) in g.iter_mut().zip(w.as_slice()) {
            *gk += self.c_reg * wk;
        }
        g
    }

    pub fn report(&self, w: &Weights, states: &[MessageState]) -> ObjectiveReport {
        let terms = self.exec.map(self.samples.len(), |i| {
            sample_terms(self.model, &self.samples[i], &states[i], w, self.tempering)
        });
        assemble_report(self.model.feature_count(), &terms, w, self.tempering, self.c_reg)
            .expect("C validated as nonnegative")
    }

    /// `sweeps` inference sweeps on every sample at fixed `w`.
    pub fn sweep(&self, w: &Weights, states: &mut [MessageState], sweeps: usize) -> SweepReport {
        let graph = self.model.graph();
        let reports = self.exec.update(states, |i, state| {
            let theta = potentials(self.model, &self.samples[i], w, true);
            let mut report = SweepReport::default();
            for _ in 0..sweeps {
                let r = inference_sweep(graph, &theta, state, self.tempering);
                report.updated += r.updated;
                report.skipped.extend(r.skipped);
            }
            report
        });
        reports.into_iter().fold(SweepReport::default(), |mut acc, r| {
            acc.updated += r.updated;
            acc.skipped.extend(r.skipped);
            acc
        })
    }
}

/// Weight gradient of the decomposed objective at the current messages.
pub fn w_gradient(problem: &Problem<'_>, states: &[MessageState], w: &Weights) -> Vec<f64> {
    problem.gradient(w, states)
}

/// Outcome of a backtracking step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub w: Weights,
    /// Accepted step size, or the last one tried when stalled.
    pub eta: f64,
    pub primal: f64,
    pub stalled: bool,
}

/// Armijo backtracking on the primal with `λ` frozen: accepts the largest
/// `η = η₀ βᵐ` with `f(w − η g) ≤ f(w) − σ η ||g||²`. On exhaustion the weights
/// are kept and the step is flagged as stalled.
pub fn w_step(
    problem: &Problem<'_>,
    states: &[MessageState],
    w: &Weights,
    gradient: &[f64],
    current_primal: f64,
    search: &LineSearch,
) -> StepOutcome {
    let g2: f64 = gradient.iter().map(|g| g * g).sum();
    if g2 == 0.0 {
        return StepOutcome {
            w: w.clone(),
            eta: search.initial_step,
            primal: current_primal,
            stalled: false,
        };
    }
    let mut eta = search.initial_step;
    for _ in 0..=search.max_backtracks {
        let trial = Weights::new(
            w.as_slice()
                .iter()
                .zip(gradient)
                .map(|(wk, gk)| wk - eta * gk)
                .collect(),
        );
        let f = problem.primal(&trial, states);
        if f.is_finite() && f <= current_primal - search.sufficient_decrease * eta * g2 {
            return StepOutcome {
                w: trial,
                eta,
                primal: f,
                stalled: false,
            };
        }
        eta *= search.shrink;
    }
    StepOutcome {
        w: w.clone(),
        eta: eta / search.shrink,
        primal: current_primal,
        stalled: true,
    }
}

/// One line of the progress log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub residual: f64,
    pub grad_norm: f64,
    pub eta: f64,
}

impl IterationLog {
    pub const HEADER: &'static str = "iter primal dual gap residual gradnorm eta";
}

impl fmt::Display for IterationLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:e} {:e} {:e} {:e} {:e} {:e}",
            self.iter, self.primal, self.dual, self.gap, self.residual, self.grad_norm, self.eta
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    /// All three stopping criteria held.
    Converged,
    /// The iteration budget ran out first.
    MaxIterations,
    /// Inference is consistent but no weight step achieves sufficient decrease.
    Stalled,
}

pub struct TrainState {
    pub w: Weights,
    pub counts: CountingNumbers,
    pub states: Vec<MessageState>,
    pub iterations: usize,
    /// Primal value after the initialization and after every phase
    /// (inference sweeps, weight step) of every iteration.
    pub history: Vec<f64>,
    pub log: Vec<IterationLog>,
    pub report: ObjectiveReport,
    pub status: TrainStatus,
    pub warnings: Vec<ValidationWarning>,
}

impl TrainState {
    pub fn converged(&self) -> bool {
        self.status == TrainStatus::Converged
    }
}

/// Trains from zero weights.
pub fn train(model: &Model, samples: &[Sample], config: &TrainerConfig) -> Result<TrainState, LearnError> {
    train_with(model, samples, config, None, |_| {})
}

/// Trains from `init` (or zeros), calling `observe` after every outer iteration.
pub fn train_with(
    model: &Model,
    samples: &[Sample],
    config: &TrainerConfig,
    init: Option<Weights>,
    mut observe: impl FnMut(&IterationLog),
) -> Result<TrainState, LearnError> {
    config.check()?;
    let graph = model.graph();
    let counts = config.counting.resolve(graph)?;
    let validation = validate_model(model, samples, &counts)?;
    let mut w = init.unwrap_or_else(|| Weights::zeros(model.feature_count()));
    model.check_weights(&w)?;

    let exec = Executor::with_workers(config.worker_count)?;
    let tempering = Tempering::new(config.eps, &counts);
    let problem = Problem::new(model, samples, tempering, config.c_reg).with_executor(&exec);

    let mut states: Vec<MessageState> = samples.iter().map(|_| MessageState::new(graph)).collect();
    let primal = problem.primal(&w, &states);
    let mut history = vec![primal];
    let mut log = Vec::new();
    let mut status = TrainStatus::MaxIterations;
    let mut report = problem.report(&w, &states);
    let mut iterations = 0;

    // Convergence is tested before the weight step so that the returned
    // (w, λ) is the point where all three criteria held.
    let mut previous = primal;
    for iter in 1..=config.max_outer_iters {
        iterations = iter;
        problem.sweep(&w, &mut states, config.sweeps_per_step);
        let current = problem.primal(&w, &states);
        history.push(current);
        report = problem.report(&w, &states);
        let gradient = problem.gradient(&w, &states);
        let grad_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();

        let rel_decrease = (previous - current) / current.abs().max(1.0);
        let residual_ok = report.marginal_residual < config.residual_tol;
        let converged = rel_decrease < config.primal_rel_tol && residual_ok && grad_norm < config.grad_norm_tol;
        let step = (!converged).then(|| w_step(&problem, &states, &w, &gradient, current, &config.line_search));
        let entry = IterationLog {
            iter,
            primal: current,
            dual: report.dual,
            gap: report.gap,
            residual: report.marginal_residual,
            grad_norm,
            eta: step.as_ref().map_or(0.0, |s| s.eta),
        };
        observe(&entry);
        log.push(entry);

        let Some(step) = step else {
            status = TrainStatus::Converged;
            break;
        };
        if step.stalled && residual_ok && rel_decrease <= 0.0 {
            status = TrainStatus::Stalled;
            break;
        }
        w = step.w;
        history.push(step.primal);
        previous = current;
    }
    if status == TrainStatus::MaxIterations {
        report = problem.report(&w, &states);
    }

    Ok(TrainState {
        w,
        counts,
        states,
        iterations,
        history,
        log,
        report,
        status,
        warnings: validation.warnings,
    })
}

/// Decoded labels of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One label per variable.
    pub labels: Vec<usize>,
    /// Marginal residual of the final beliefs, a decode-confidence diagnostic.
    pub residual: f64,
    pub sweeps: usize,
}

/// Runs loss-free inference at temperature `eps_infer` and decodes every
/// variable by argmax of its marginal in the smallest region containing it.
pub fn predict(
    model: &Model,
    sample: &Sample,
    w: &Weights,
    eps_infer: f64,
    counts: &CountingNumbers,
    max_sweeps: usize,
    residual_tol: f64,
) -> Prediction {
    let graph = model.graph();
    let theta = potentials(model, sample, w, false);
    let tempering = Tempering::new(eps_infer, counts);
    let mut state = MessageState::new(graph);
    let outcome = run_inference(graph, &theta, &mut state, tempering, max_sweeps, residual_tol);
    let beliefs = decode_beliefs(graph, &theta, &state, tempering);
    let labels = (0..graph.variable_count())
        .map(|v| {
            let r = graph
                .smallest_region_containing(v)
                .expect("every variable is covered");
            argmax(&beliefs.variable_marginal(graph, r, v)).unwrap_or(0)
        })
        .collect();
    Prediction {
        labels,
        residual: marginal_residual(graph, &beliefs).max(outcome.residual),
        sweeps: outcome.sweeps,
    }
}
