//! Per-sample message passing on a region graph.
//!
//! The inference variables are the tables `λ_{r→p}(ŷ_r)`, one per edge. A
//! [`lambda_update`] minimizes the decomposed objective exactly over all
//! `λ_{r→p}`, `p ∈ P(r)`, for one region. Regions carry temperatures `ε c_r`;
//! with `c ≡ 1` the update has the coefficient `1 / (1 + |P(r)|)`, and with
//! Bethe numbers `c_r = 1 - |P(r)|` it is ordinary belief propagation.
//!
//! All functions take the region potentials `θ_r` precomputed for one sample
//! (see [`crate::model::potentials`]) so that pure inference is the same code
//! with the weights held fixed.

use crate::error::InferenceError;
use crate::model::{CountingNumbers, RegionGraph};
use crate::softmax::{gibbs_into, lse_nonempty};

/// Temperature `ε` together with the counting numbers.
#[derive(Debug, Clone, Copy)]
pub struct Tempering<'a> {
    pub eps: f64,
    pub counts: &'a CountingNumbers,
}

impl<'a> Tempering<'a> {
    pub fn new(eps: f64, counts: &'a CountingNumbers) -> Self {
        Tempering { eps, counts }
    }

    /// `ε c_r`.
    #[inline]
    pub fn region(&self, r: usize) -> f64 {
        self.eps * self.counts.get(r)
    }
}

/// `λ` tables of one sample, one per graph edge, indexed by child label.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    lambda: Vec<Vec<f64>>,
}

impl MessageState {
    /// All-zero messages.
    pub fn new(graph: &RegionGraph) -> Self {
        MessageState {
            lambda: graph
                .edges()
                .iter()
                .map(|e| vec![0.0; graph.region(e.child).label_count()])
                .collect(),
        }
    }

    /// `λ_{child→parent}` of edge `e`.
    pub fn lambda(&self, e: usize) -> &[f64] {
        &self.lambda[e]
    }

    pub fn lambda_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.lambda[e]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    /// Largest absolute entry, useful to check that canonicalization keeps it bounded.
    pub fn max_abs(&self) -> f64 {
        self.lambda
            .iter()
            .flatten()
            .fold(0.0, |m, v| f64::max(m, v.abs()))
    }
}

/// Per-region probability tables of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    pub tables: Vec<Vec<f64>>,
}

impl BeliefSet {
    pub fn region(&self, r: usize) -> &[f64] {
        &self.tables[r]
    }

    /// Marginal of region `r`'s belief on one of its variables.
    pub fn variable_marginal(&self, graph: &RegionGraph, r: usize, variable: usize) -> Vec<f64> {
        let region = graph.region(r);
        let pos = region
            .position(variable)
            .expect("variable must belong to region");
        let card = region.cardinalities()[pos];
        let mut out = vec![0.0; card];
        for (label, &p) in self.tables[r].iter().enumerate() {
            out[region.decode(label)[pos]] += p;
        }
        out
    }
}

/// `θ̂_r = θ_r + Σ_{c∈C(r)} λ_{c→r} − Σ_{p∈P(r)} λ_{r→p}`.
pub fn reparameterized(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    r: usize,
) -> Vec<f64> {
    let mut out = theta[r].clone();
    for &e in graph.child_edges(r) {
        let proj = graph.edge(e).projection();
        let lambda = &state.lambda[e];
        for (o, &j) in out.iter_mut().zip(proj) {
            *o += lambda[j];
        }
    }
    for &e in graph.parent_edges(r) {
        for (o, &l) in out.iter_mut().zip(&state.lambda[e]) {
            *o -= l;
        }
    }
    out
}

/// Sum of incoming child messages, `θ_r + Σ_{c∈C(r)} λ_{c→r}`.
fn with_children(graph: &RegionGraph, theta: &[Vec<f64>], state: &MessageState, r: usize) -> Vec<f64> {
    let mut out = theta[r].clone();
    for &e in graph.child_edges(r) {
        let proj = graph.edge(e).projection();
        let lambda = &state.lambda[e];
        for (o, &j) in out.iter_mut().zip(proj) {
            *o += lambda[j];
        }
    }
    out
}

/// Message `μ_{p→r}` along edge `e = (p, r)`: the soft-max at temperature
/// `ε c_p` of the parent's potential without `λ_{r→p}`, over the parent labels
/// projecting onto each child label.
pub fn mu_message(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    e: usize,
    tempering: Tempering<'_>,
) -> Vec<f64> {
    let edge = graph.edge(e);
    let mut hat = reparameterized(graph, theta, state, edge.parent);
    let lambda = &state.lambda[e];
    for (h, &j) in hat.iter_mut().zip(edge.projection()) {
        *h -= lambda[j];
    }
    let temp = tempering.region(edge.parent);
    let child_labels = graph.region(edge.child).label_count();
    let mut scratch = Vec::new();
    (0..child_labels)
        .map(|j| {
            scratch.clear();
            scratch.extend(edge.members(j).iter().map(|&i| hat[i]));
            lse_nonempty(&scratch, temp)
        })
        .collect()
}

/// Exact block minimization over `λ_{r→p}` for every parent `p` of `r`:
///
/// `λ_{r→p} = c_p / (c_r + Σ_{p'} c_{p'}) · (θ_r + Σ_c λ_{c→r} + Σ_{p'} μ_{p'→r}) − μ_{p→r}`,
///
/// followed by subtracting each table's mean. Returns `Ok(false)` for regions
/// without parents.
pub fn lambda_update(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &mut MessageState,
    r: usize,
    tempering: Tempering<'_>,
) -> Result<bool, InferenceError> {
    let parents = graph.parent_edges(r);
    if parents.is_empty() {
        return Ok(false);
    }
    let counts = tempering.counts;
    let denom = counts.get(r)
        + parents
            .iter()
            .map(|&e| counts.get(graph.edge(e).parent))
            .sum::<f64>();
    if denom == 0.0 {
        return Err(InferenceError::ZeroDenominator { region: r });
    }
    let mus: Vec<Vec<f64>> = parents
        .iter()
        .map(|&e| mu_message(graph, theta, state, e, tempering))
        .collect();
    let mut total = with_children(graph, theta, state, r);
    for mu in &mus {
        for (t, m) in total.iter_mut().zip(mu) {
            *t += m;
        }
    }
    for (&e, mu) in parents.iter().zip(&mus) {
        let coef = counts.get(graph.edge(e).parent) / denom;
        let table = &mut state.lambda[e];
        for ((l, &t), &m) in table.iter_mut().zip(&total).zip(mu) {
            *l = coef * t - m;
        }
        let mean = table.iter().sum::<f64>() / table.len() as f64;
        table.iter_mut().for_each(|l| *l -= mean);
    }
    Ok(true)
}

/// Beliefs `b_r ∝ exp(θ̂_r / (ε c_r))`, the maximizers appearing in the
/// gradient of the decomposed objective.
///
/// A region with `c_r = 0` and at least one parent has a degenerate own
/// belief; it is given the message form of [`decode_beliefs`], which equals
/// the limit of the parameterized belief as `c_r → 0` after a block update.
pub fn compute_beliefs(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    tempering: Tempering<'_>,
) -> BeliefSet {
    let tables = (0..graph.region_count())
        .map(|r| {
            if tempering.counts.get(r) == 0.0 && graph.parent_count(r) > 0 {
                if let Some(b) = message_belief(graph, theta, state, r, tempering) {
                    return b;
                }
            }
            reparameterized_belief(graph, theta, state, r, tempering)
        })
        .collect();
    BeliefSet { tables }
}

/// Beliefs in message form, used for decoding.
///
/// For a region with parents, `b_r ∝ exp((θ_r + Σ_c λ_{c→r} + Σ_p μ_{p→r}) / (ε ĉ_r))`
/// with `ĉ_r = c_r + Σ_p c_p`; regions without parents use `θ̂_r` at `ε c_r`.
/// At a fixed point both forms agree; the message form stays well defined
/// when `c_r ≤ 0`.
pub fn decode_beliefs(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    tempering: Tempering<'_>,
) -> BeliefSet {
    let tables = (0..graph.region_count())
        .map(|r| {
            message_belief(graph, theta, state, r, tempering)
                .unwrap_or_else(|| reparameterized_belief(graph, theta, state, r, tempering))
        })
        .collect();
    BeliefSet { tables }
}

fn reparameterized_belief(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    r: usize,
    tempering: Tempering<'_>,
) -> Vec<f64> {
    let hat = reparameterized(graph, theta, state, r);
    let mut b = vec![0.0; hat.len()];
    gibbs_into(&hat, tempering.region(r), &mut b);
    b
}

fn message_belief(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &MessageState,
    r: usize,
    tempering: Tempering<'_>,
) -> Option<Vec<f64>> {
    let parents = graph.parent_edges(r);
    if parents.is_empty() {
        return None;
    }
    let counts = tempering.counts;
    let c_hat = counts.get(r)
        + parents
            .iter()
            .map(|&e| counts.get(graph.edge(e).parent))
            .sum::<f64>();
    if c_hat == 0.0 {
        return None;
    }
    let mut score = with_children(graph, theta, state, r);
    for &e in parents {
        let mu = mu_message(graph, theta, state, e, tempering);
        for (s, m) in score.iter_mut().zip(&mu) {
            *s += m;
        }
    }
    let mut b = vec![0.0; score.len()];
    gibbs_into(&score, tempering.eps * c_hat, &mut b);
    Some(b)
}

/// Largest disagreement `|Σ_{ŷ_p→ŷ_r} b_p(ŷ_p) − b_r(ŷ_r)|` over all edges and child labels.
pub fn marginal_residual(graph: &RegionGraph, beliefs: &BeliefSet) -> f64 {
    let mut worst: f64 = 0.0;
    for edge in graph.edges() {
        let bp = &beliefs.tables[edge.parent];
        let br = &beliefs.tables[edge.child];
        for (j, &b) in br.iter().enumerate() {
            let marginal: f64 = edge.members(j).iter().map(|&i| bp[i]).sum();
            worst = worst.max((marginal - b).abs());
        }
    }
    worst
}

/// Outcome of one sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    /// Number of regions whose messages were updated.
    pub updated: usize,
    /// Regions skipped because of a configuration error.
    pub skipped: Vec<(usize, InferenceError)>,
}

/// One [`lambda_update`] per region, in increasing region id order.
pub fn inference_sweep(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &mut MessageState,
    tempering: Tempering<'_>,
) -> SweepReport {
    let mut report = SweepReport::default();
    for r in 0..graph.region_count() {
        sweep_one(graph, theta, state, r, tempering, &mut report);
    }
    report
}

/// A sweep visiting regions in the given order.
pub fn inference_sweep_ordered(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &mut MessageState,
    tempering: Tempering<'_>,
    order: &[usize],
) -> SweepReport {
    let mut report = SweepReport::default();
    for &r in order {
        sweep_one(graph, theta, state, r, tempering, &mut report);
    }
    report
}

fn sweep_one(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &mut MessageState,
    r: usize,
    tempering: Tempering<'_>,
    report: &mut SweepReport,
) {
    match lambda_update(graph, theta, state, r, tempering) {
        Ok(true) => report.updated += 1,
        Ok(false) => {}
        Err(err) => report.skipped.push((r, err)),
    }
}

/// Result of [`run_inference`].
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    pub sweeps: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Sweeps until the marginal residual of [`compute_beliefs`] falls to `tol`
/// or `max_sweeps` is reached.
pub fn run_inference(
    graph: &RegionGraph,
    theta: &[Vec<f64>],
    state: &mut MessageState,
    tempering: Tempering<'_>,
    max_sweeps: usize,
    tol: f64,
) -> InferenceOutcome {
    let residual_now = |state: &MessageState| {
        marginal_residual(graph, &compute_beliefs(graph, theta, state, tempering))
    };
    let mut residual = residual_now(state);
    let mut sweeps = 0;
    while sweeps < max_sweeps && residual > tol {
        inference_sweep(graph, theta, state, tempering);
        sweeps += 1;
        residual = residual_now(state);
    }
    InferenceOutcome {
        sweeps,
        residual,
        converged: residual <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;

    fn graph_pair_over_single() -> RegionGraph {
        RegionGraph::new(
            vec![
                Region::new(0, vec![0, 1], vec![2, 2]).unwrap(),
                Region::new(1, vec![0], vec![2]).unwrap(),
            ],
            &[(0, 1)],
        )
        .unwrap()
    }

    #[test]
    fn mu_uniform_theta_is_log_two() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.0; 4], vec![0.0; 2]];
        let state = MessageState::new(&graph);
        let mu = mu_message(&graph, &theta, &state, 0, Tempering::new(1.0, &counts));
        for m in mu {
            assert!((m - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_zero_temperature_is_max() {
        let graph = RegionGraph::new(
            vec![
                Region::new(0, vec![0, 1], vec![1, 2]).unwrap(),
                Region::new(1, vec![0], vec![1]).unwrap(),
            ],
            &[(0, 1)],
        )
        .unwrap();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![3.0, 1.0], vec![0.0]];
        let state = MessageState::new(&graph);
        let mu = mu_message(&graph, &theta, &state, 0, Tempering::new(0.0, &counts));
        assert_eq!(mu, vec![3.0]);
    }

    #[test]
    fn mu_matches_direct_summation() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.3, -1.2, 0.8, 2.1], vec![0.4, -0.4]];
        let mut state = MessageState::new(&graph);
        state.lambda_mut(0).copy_from_slice(&[0.25, -0.25]);
        let eps = 0.5;
        let mu = mu_message(&graph, &theta, &state, 0, Tempering::new(eps, &counts));
        // pair labels (y0, y1): y0 = 0 -> {0, 1}, y0 = 1 -> {2, 3}; λ_{r→p} is excluded
        for (j, group) in [[0usize, 1], [2, 3]].iter().enumerate() {
            let direct = eps
                * group
                    .iter()
                    .map(|&i| (theta[0][i] / eps).exp())
                    .sum::<f64>()
                    .ln();
            assert!((mu[j] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda_single_parent_halves() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.3, -1.2, 0.8, 2.1], vec![0.4, -0.4]];
        let mut state = MessageState::new(&graph);
        let tempering = Tempering::new(1.0, &counts);
        let mu = mu_message(&graph, &theta, &state, 0, tempering);
        lambda_update(&graph, &theta, &mut state, 1, tempering).unwrap();
        let mut expected: Vec<f64> = (0..2).map(|j| 0.5 * (theta[1][j] - mu[j])).collect();
        let mean = (expected[0] + expected[1]) / 2.0;
        expected.iter_mut().for_each(|x| *x -= mean);
        for (a, b) in state.lambda(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        // beliefs now agree along the edge
        let beliefs = compute_beliefs(&graph, &theta, &state, tempering);
        assert!(marginal_residual(&graph, &beliefs) < 1e-14);
    }

    #[test]
    fn region_without_parents_is_skipped() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.3, -1.2, 0.8, 2.1], vec![0.4, -0.4]];
        let mut state = MessageState::new(&graph);
        let before = state.clone();
        assert!(!lambda_update(&graph, &theta, &mut state, 0, Tempering::new(1.0, &counts)).unwrap());
        assert_eq!(state, before);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::from_values(&graph, vec![1.0, -1.0]).unwrap();
        let theta = vec![vec![0.0; 4], vec![0.0; 2]];
        let mut state = MessageState::new(&graph);
        let report = inference_sweep(&graph, &theta, &mut state, Tempering::new(1.0, &counts));
        assert_eq!(report.updated, 0);
        assert_eq!(
            report.skipped,
            vec![(1, InferenceError::ZeroDenominator { region: 1 })]
        );
    }

    #[test]
    fn uniform_beliefs_and_point_masses() {
        let graph = graph_pair_over_single();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.0; 4], vec![0.0; 2]];
        let state = MessageState::new(&graph);
        let b = compute_beliefs(&graph, &theta, &state, Tempering::new(1.0, &counts));
        assert_eq!(b.region(0), &[0.25; 4]);
        assert_eq!(b.region(1), &[0.5; 2]);
        let theta = vec![vec![0.0, 0.0, 5.0, 0.0], vec![0.0, 1.0]];
        let b = compute_beliefs(&graph, &theta, &state, Tempering::new(0.0, &counts));
        assert_eq!(b.region(0), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(b.region(1), &[0.0, 1.0]);
    }

    #[test]
    fn residual_of_hand_built_beliefs() {
        let graph = graph_pair_over_single();
        let beliefs = BeliefSet {
            tables: vec![vec![0.25; 4], vec![0.9, 0.1]],
        };
        assert!((marginal_residual(&graph, &beliefs) - 0.4).abs() < 1e-15);
        let single = RegionGraph::new(vec![Region::new(0, vec![0], vec![2]).unwrap()], &[]).unwrap();
        let beliefs = BeliefSet {
            tables: vec![vec![0.3, 0.7]],
        };
        assert_eq!(marginal_residual(&single, &beliefs), 0.0);
    }

    #[test]
    fn sweep_without_edges_is_noop() {
        let graph = RegionGraph::new(
            vec![
                Region::new(0, vec![0], vec![2]).unwrap(),
                Region::new(1, vec![1], vec![3]).unwrap(),
            ],
            &[],
        )
        .unwrap();
        let counts = CountingNumbers::ones(&graph);
        let theta = vec![vec![0.1, 0.2], vec![0.0, 1.0, 2.0]];
        let mut state = MessageState::new(&graph);
        let report = inference_sweep(&graph, &theta, &mut state, Tempering::new(1.0, &counts));
        assert_eq!(report, SweepReport::default());
        assert!(state.tables().is_empty());
    }
}
