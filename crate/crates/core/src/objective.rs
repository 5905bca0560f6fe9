//! Primal decomposed objective, its dual with pseudo-moment matching, and
//! the duality gap.
//!
//! Per-sample terms are computed independently and always reduced in sample
//! order, so sequential and parallel evaluation give identical bits.

use std::fmt;

use crate::error::ObjectiveError;
use crate::inference::{compute_beliefs, marginal_residual, reparameterized, BeliefSet, MessageState, Tempering};
use crate::model::{potentials, Model, RegionGraph, Sample, Weights};
use crate::softmax::{entropy, lse_nonempty};

/// Marginal residual at or below which the dual value is a valid bound.
pub const CERTIFY_RESIDUAL: f64 = 1e-6;

/// Moment tolerance under which the hard-constraint dual (`C = 0`) is finite.
pub const HARD_MOMENT_TOL: f64 = 1e-6;

/// Loss of region `r`: `−θ̂_r(y_r) + softmax_{ε c_r}(θ̂_r)`, i.e. `−ε c_r log b_r(y_r)`.
///
/// `theta` must include the loss tables.
pub fn region_loss(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    truth: &[usize],
    r: usize,
    tempering: Tempering<'_>,
) -> f64 {
    let hat = reparameterized(graph, theta, state, r);
    lse_nonempty(&hat, tempering.region(r)) - hat[truth[r]]
}

/// `Σ_r region_loss` for one sample.
pub fn sample_loss(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    truth: &[usize],
    tempering: Tempering<'_>,
) -> f64 {
    (0..graph.region_count())
        .map(|r| region_loss(graph, theta, state, truth, r, tempering))
        .sum()
}

/// `(C/2) ||w||²`.
pub fn regularizer(w: &Weights, c_reg: f64) -> f64 {
    0.5 * c_reg * w.norm_squared()
}

/// Loss part of the primal for one sample at weights `w`.
pub fn sample_primal(
    model: &Model,
    sample: &Sample,
    state: &MessageState,
    w: &Weights,
    tempering: Tempering<'_>,
) -> f64 {
    let theta = potentials(model, sample, w, true);
    sample_loss(model.graph(), &theta, state, &sample.truth, tempering)
}

/// `Σ_samples Σ_r region_loss + (C/2) ||w||²`.
pub fn primal_objective(
    model: &Model,
    samples: &[Sample],
    states: &[MessageState],
    w: &Weights,
    tempering: Tempering<'_>,
    c_reg: f64,
) -> f64 {
    let losses: Vec<f64> = samples
        .iter()
        .zip(states)
        .map(|(s, st)| sample_primal(model, s, st, w, tempering))
        .collect();
    reduce_primal(&losses, w, c_reg)
}

pub(crate) fn reduce_primal(losses: &[f64], w: &Weights, c_reg: f64) -> f64 {
    losses.iter().sum::<f64>() + regularizer(w, c_reg)
}

/// Belief-weighted feature expectations minus empirical values for one sample:
/// `Σ_{r∈R_k} Σ_ŷ b_r(ŷ) φ_{k,r}(ŷ) − φ_k(x, y)`.
pub fn sample_moments(model: &Model, sample: &Sample, beliefs: &BeliefSet) -> Vec<f64> {
    let mut out = vec![0.0; model.feature_count()];
    for r in 0..model.graph().region_count() {
        let b = beliefs.region(r);
        for table in model.region_features(sample, r) {
            out[table.feature] += b.iter().zip(&table.values).map(|(p, f)| p * f).sum::<f64>();
        }
    }
    for (o, e) in out.iter_mut().zip(sample.empirical()) {
        *o -= e;
    }
    out
}

/// Moment mismatch `z_k` summed over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMismatch {
    pub z: Vec<f64>,
}

impl MomentMismatch {
    pub fn from_samples(model: &Model, samples: &[Sample], beliefs: &[BeliefSet]) -> Self {
        let per_sample: Vec<Vec<f64>> = samples
            .iter()
            .zip(beliefs)
            .map(|(s, b)| sample_moments(model, s, b))
            .collect();
        Self::reduce(model.feature_count(), &per_sample)
    }

    pub(crate) fn reduce(feature_count: usize, per_sample: &[Vec<f64>]) -> Self {
        let mut z = vec![0.0; feature_count];
        for m in per_sample {
            for (zk, mk) in z.iter_mut().zip(m) {
                *zk += mk;
            }
        }
        MomentMismatch { z }
    }

    pub fn norm_squared(&self) -> f64 {
        self.z.iter().map(|z| z * z).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| f64::max(m, z.abs()))
    }
}

/// `Σ_r (ε c_r H(b_r) + Σ_ŷ b_r(ŷ) ℓ_r(y_r, ŷ))` for one sample.
pub fn sample_dual_terms(
    graph: &RegionGraph,
    sample: &Sample,
    beliefs: &BeliefSet,
    tempering: Tempering<'_>,
) -> f64 {
    (0..graph.region_count())
        .map(|r| {
            let b = beliefs.region(r);
            let temp = tempering.region(r);
            let h = if temp == 0.0 {
                0.0
            } else {
                temp * entropy(b).unwrap_or(f64::NAN)
            };
            h + b.iter().zip(&sample.loss[r]).map(|(p, l)| p * l).sum::<f64>()
        })
        .sum()
}

/// Dual objective `Σ (ε c_r H(b_r) + ⟨b_r, ℓ_r⟩) − ||z||² / (2C)`.
///
/// For `C = 0` the moment constraints are hard: the value is the entropy and
/// loss part when `max |z_k| ≤ 1e-6` and `−∞` otherwise.
pub fn dual_objective(
    model: &Model,
    samples: &[Sample],
    beliefs: &[BeliefSet],
    tempering: Tempering<'_>,
    c_reg: f64,
) -> Result<f64, ObjectiveError> {
    let terms: Vec<f64> = samples
        .iter()
        .zip(beliefs)
        .map(|(s, b)| sample_dual_terms(model.graph(), s, b, tempering))
        .collect();
    let z = MomentMismatch::from_samples(model, samples, beliefs);
    reduce_dual(&terms, &z, c_reg)
}

pub(crate) fn reduce_dual(terms: &[f64], z: &MomentMismatch, c_reg: f64) -> Result<f64, ObjectiveError> {
    if c_reg < 0.0 || c_reg.is_nan() {
        return Err(ObjectiveError::NegativeRegularization(c_reg));
    }
    let base: f64 = terms.iter().sum();
    if c_reg == 0.0 {
        if z.max_abs() <= HARD_MOMENT_TOL {
            Ok(base)
        } else {
            Ok(f64::NEG_INFINITY)
        }
    } else {
        Ok(base - z.norm_squared() / (2.0 * c_reg))
    }
}

/// Everything one sample contributes to a duality report.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTerms {
    pub loss: f64,
    pub dual: f64,
    pub moments: Vec<f64>,
    pub residual: f64,
}

/// Evaluates a sample's primal, dual and moment terms at `(w, λ)`.
pub fn sample_terms(
    model: &Model,
    sample: &Sample,
    state: &MessageState,
    w: &Weights,
    tempering: Tempering<'_>,
) -> SampleTerms {
    let graph = model.graph();
    let theta = potentials(model, sample, w, true);
    let beliefs = compute_beliefs(graph, &theta, state, tempering);
    SampleTerms {
        loss: sample_loss(graph, &theta, state, &sample.truth, tempering),
        dual: sample_dual_terms(graph, sample, &beliefs, tempering),
        moments: sample_moments(model, sample, &beliefs),
        residual: marginal_residual(graph, &beliefs),
    }
}

/// Primal, dual, gap and consistency diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub marginal_residual: f64,
    /// True when the beliefs are consistent enough for the dual to bound the primal.
    pub certified: bool,
    pub per_sample_loss: Vec<f64>,
    pub regularizer: f64,
}

/// Assembles a report from per-sample terms, reducing in sample order.
pub fn assemble_report(
    feature_count: usize,
    terms: &[SampleTerms],
    w: &Weights,
    tempering: Tempering<'_>,
    c_reg: f64,
) -> Result<ObjectiveReport, ObjectiveError> {
    let per_sample_loss: Vec<f64> = terms.iter().map(|t| t.loss).collect();
    let duals: Vec<f64> = terms.iter().map(|t| t.dual).collect();
    let moments: Vec<Vec<f64>> = terms.iter().map(|t| t.moments.clone()).collect();
    let z = MomentMismatch::reduce(feature_count, &moments);
    let dual = reduce_dual(&duals, &z, c_reg)?;
    let primal = reduce_primal(&per_sample_loss, w, c_reg);
    let residual = terms.iter().fold(0.0, |m, t| f64::max(m, t.residual));
    let convex = tempering.eps > 0.0 && tempering.counts.values().iter().all(|&c| c > 0.0);
    Ok(ObjectiveReport {
        primal,
        dual,
        gap: primal - dual,
        marginal_residual: residual,
        certified: convex && residual <= CERTIFY_RESIDUAL,
        per_sample_loss,
        regularizer: regularizer(w, c_reg),
    })
}

/// Computes beliefs, residual, primal, dual and gap at `(w, λ)`.
///
/// The report is certified only for `ε > 0`, positive counting numbers and
/// marginal residual at most [`CERTIFY_RESIDUAL`].
pub fn duality_report(
    model: &Model,
    samples: &[Sample],
    states: &[MessageState],
    w: &Weights,
    tempering: Tempering<'_>,
    c_reg: f64,
) -> Result<ObjectiveReport, ObjectiveError> {
    let terms: Vec<SampleTerms> = samples
        .iter()
        .zip(states)
        .map(|(s, st)| sample_terms(model, s, st, w, tempering))
        .collect();
    assemble_report(model.feature_count(), &terms, w, tempering, c_reg)
}

impl fmt::Display for ObjectiveReport {
    /// Flat `key=value` block, one entry per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "primal={}", self.primal)?;
        writeln!(f, "dual={}", self.dual)?;
        writeln!(f, "gap={}", self.gap)?;
        writeln!(f, "marginal_residual={}", self.marginal_residual)?;
        writeln!(f, "certified={}", self.certified)?;
        writeln!(f, "regularizer={}", self.regularizer)?;
        let losses: Vec<String> = self.per_sample_loss.iter().map(|l| l.to_string()).collect();
        writeln!(f, "per_sample_loss={}", losses.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::inference_sweep;
    use crate::model::{CountingNumbers, FeatureTable, Region};

    fn single_region() -> (Model, Sample) {
        let graph = RegionGraph::new(vec![Region::new(0, vec![0], vec![3]).unwrap()], &[]).unwrap();
        let model = Model::without_static_features(graph, 1);
        let sample = Sample::new(
            &model,
            0,
            vec![vec![0.0, 1.0, 1.0]],
            vec![vec![FeatureTable {
                feature: 0,
                values: vec![1.0, -0.5, 0.25],
            }]],
            vec![0],
        )
        .unwrap();
        (model, sample)
    }

    #[test]
    fn zero_temperature_region_loss_is_hinge() {
        let (model, sample) = single_region();
        let counts = CountingNumbers::ones(model.graph());
        let state = MessageState::new(model.graph());
        let w = Weights::new(vec![0.5]);
        let theta = potentials(&model, &sample, &w, true);
        let loss = region_loss(model.graph(), &theta, &state, &sample.truth, 0, Tempering::new(0.0, &counts));
        // θ = [0.5, 0.75, 1.125]
        assert!((loss - 0.625).abs() < 1e-15);
    }

    #[test]
    fn primal_zero_model_is_sum_of_log_sizes() {
        let graph = RegionGraph::new(
            vec![
                Region::new(0, vec![0, 1], vec![2, 3]).unwrap(),
                Region::new(1, vec![0], vec![2]).unwrap(),
            ],
            &[(0, 1)],
        )
        .unwrap();
        let model = Model::without_static_features(graph, 0);
        let sample = Sample::new(&model, 0, vec![vec![0.0; 6], vec![0.0; 2]], vec![vec![], vec![]], vec![0, 0]).unwrap();
        let counts = CountingNumbers::ones(model.graph());
        let states = vec![MessageState::new(model.graph())];
        let eps = 0.7;
        let p = primal_objective(&model, &[sample], &states, &Weights::zeros(0), Tempering::new(eps, &counts), 1.0);
        assert!((p - eps * (6f64.ln() + 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn uniform_beliefs_dual_and_point_mass_dual() {
        let (model, sample) = single_region();
        let counts = CountingNumbers::ones(model.graph());
        let eps = 1.0;
        // zero-loss copy with a feature whose expectation equals its true value
        let flat = Sample::new(
            &model,
            1,
            vec![vec![0.0; 3]],
            vec![vec![FeatureTable {
                feature: 0,
                values: vec![0.0; 3],
            }]],
            vec![0],
        )
        .unwrap();
        let uniform = BeliefSet {
            tables: vec![vec![1.0 / 3.0; 3]],
        };
        let d = dual_objective(&model, &[flat], &[uniform], Tempering::new(eps, &counts), 1.0).unwrap();
        assert!((d - 3f64.ln()).abs() < 1e-15);

        let point = BeliefSet {
            tables: vec![vec![1.0, 0.0, 0.0]],
        };
        let d = dual_objective(&model, &[sample], &[point], Tempering::new(eps, &counts), 1.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn hard_constraint_dual() {
        let (model, sample) = single_region();
        let counts = CountingNumbers::ones(model.graph());
        let t = Tempering::new(1.0, &counts);
        let uniform = BeliefSet {
            tables: vec![vec![1.0 / 3.0; 3]],
        };
        let d = dual_objective(&model, &[sample.clone()], &[uniform], t, 0.0).unwrap();
        assert_eq!(d, f64::NEG_INFINITY);
        let point = BeliefSet {
            tables: vec![vec![1.0, 0.0, 0.0]],
        };
        assert_eq!(dual_objective(&model, &[sample.clone()], &[point.clone()], t, 0.0).unwrap(), 0.0);
        assert!(dual_objective(&model, &[sample], &[point], t, -1.0).is_err());
    }

    #[test]
    fn fresh_state_on_cycle_is_uncertified() {
        // 3-cycle of pairwise regions over binary singletons
        let regions = vec![
            Region::new(0, vec![0], vec![2]).unwrap(),
            Region::new(1, vec![1], vec![2]).unwrap(),
            Region::new(2, vec![2], vec![2]).unwrap(),
            Region::new(3, vec![0, 1], vec![2, 2]).unwrap(),
            Region::new(4, vec![1, 2], vec![2, 2]).unwrap(),
            Region::new(5, vec![0, 2], vec![2, 2]).unwrap(),
        ];
        let graph = RegionGraph::new(regions, &[(3, 0), (3, 1), (4, 1), (4, 2), (5, 0), (5, 2)]).unwrap();
        let model = Model::without_static_features(graph, 0);
        let loss = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]];
        let sample = Sample::new(&model, 0, loss, vec![vec![]; 6], vec![0, 0, 0, 0, 0, 0]).unwrap();
        let counts = CountingNumbers::ones(model.graph());
        let t = Tempering::new(1.0, &counts);
        let mut states = vec![MessageState::new(model.graph())];
        let report = duality_report(&model, std::slice::from_ref(&sample), &states, &Weights::zeros(0), t, 1.0).unwrap();
        assert!(!report.certified);
        assert!(report.marginal_residual > 0.1);
        let theta = potentials(&model, &sample, &Weights::zeros(0), true);
        for _ in 0..200 {
            inference_sweep(model.graph(), &theta, &mut states[0], t);
        }
        let report = duality_report(&model, &[sample], &states, &Weights::zeros(0), t, 1.0).unwrap();
        assert!(report.certified);
        assert!(report.gap.abs() < 1e-8, "{}", report.gap);
    }

    #[test]
    fn report_renders_key_values() {
        let report = ObjectiveReport {
            primal: 1.5,
            dual: 1.0,
            gap: 0.5,
            marginal_residual: 0.0,
            certified: true,
            per_sample_loss: vec![0.5, 1.0],
            regularizer: 0.0,
        };
        let text = report.to_string();
        assert!(text.contains("gap=0.5\n"));
        assert!(text.contains("per_sample_loss=0.5,1\n"));
        assert!(text.contains("certified=true\n"));
    }
}
