//! Exact brute-force references for small models.
//!
//! Every function enumerates the full joint label space, so they are guarded
//! by [`ENUMERATION_GUARD`].

use crate::error::OracleError;
use crate::inference::BeliefSet;
use crate::model::{potentials, Model, Sample, Weights};
use crate::softmax::{gibbs_into, lse_nonempty};

/// Largest joint label space the oracles will enumerate.
pub const ENUMERATION_GUARD: u128 = 1 << 20;

fn check_guard(model: &Model) -> Result<usize, OracleError> {
    let size = model.graph().joint_label_count();
    if size > ENUMERATION_GUARD {
        return Err(OracleError::GuardExceeded {
            size,
            limit: ENUMERATION_GUARD,
        });
    }
    Ok(size as usize)
}

/// Calls `f(flat_index, assignment)` for every joint label, in increasing flat
/// index order (row-major, last variable fastest).
pub fn for_each_assignment(cards: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let n = cards.len();
    let mut assignment = vec![0usize; n];
    let mut index = 0usize;
    loop {
        f(index, &assignment);
        index += 1;
        let mut j = n;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            assignment[j] += 1;
            if assignment[j] < cards[j] {
                break;
            }
            assignment[j] = 0;
        }
    }
}

/// Score `Σ_r θ_r(ŷ_r)` of every joint label.
fn joint_scores(model: &Model, theta: &[Vec<f64>], size: usize) -> Vec<f64> {
    let graph = model.graph();
    let mut scores = Vec::with_capacity(size);
    for_each_assignment(graph.variable_cardinalities(), |_, a| {
        scores.push(
            graph
                .regions()
                .iter()
                .map(|r| theta[r.id()][r.encode(a)])
                .sum(),
        );
    });
    scores
}

fn joint_truth_score(model: &Model, sample: &Sample, theta: &[Vec<f64>]) -> f64 {
    let truth = sample.variable_truth(model.graph());
    model
        .graph()
        .regions()
        .iter()
        .map(|r| theta[r.id()][r.encode(&truth)])
        .sum()
}

/// Extended log-loss `−ε log p(y; w, ε)` of the loss-adjusted Gibbs
/// distribution; the structured hinge loss at `ε = 0`.
pub fn exact_loss(model: &Model, sample: &Sample, w: &Weights, eps: f64) -> Result<f64, OracleError> {
    let size = check_guard(model)?;
    let theta = potentials(model, sample, w, true);
    let scores = joint_scores(model, &theta, size);
    Ok(lse_nonempty(&scores, eps) - joint_truth_score(model, sample, &theta))
}

/// Exact region marginals of the loss-adjusted Gibbs distribution at temperature `ε`.
pub fn exact_marginals(
    model: &Model,
    sample: &Sample,
    w: &Weights,
    eps: f64,
) -> Result<BeliefSet, OracleError> {
    exact_marginals_with(model, sample, w, eps, true)
}

/// As [`exact_marginals`], with the loss tables optionally left out.
pub fn exact_marginals_with(
    model: &Model,
    sample: &Sample,
    w: &Weights,
    eps: f64,
    include_loss: bool,
) -> Result<BeliefSet, OracleError> {
    let size = check_guard(model)?;
    let graph = model.graph();
    let theta = potentials(model, sample, w, include_loss);
    let scores = joint_scores(model, &theta, size);
    let mut p = vec![0.0; size];
    gibbs_into(&scores, eps, &mut p);
    let mut tables: Vec<Vec<f64>> = graph
        .regions()
        .iter()
        .map(|r| vec![0.0; r.label_count()])
        .collect();
    for_each_assignment(graph.variable_cardinalities(), |i, a| {
        if p[i] != 0.0 {
            for r in graph.regions() {
                tables[r.id()][r.encode(a)] += p[i];
            }
        }
    });
    Ok(BeliefSet { tables })
}

/// Highest-scoring joint label with losses excluded, lowest flat index on ties.
pub fn exact_map(model: &Model, sample: &Sample, w: &Weights) -> Result<Vec<usize>, OracleError> {
    check_guard(model)?;
    let graph = model.graph();
    let theta = potentials(model, sample, w, false);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_assignment(graph.variable_cardinalities(), |_, a| {
        let score: f64 = graph
            .regions()
            .iter()
            .map(|r| theta[r.id()][r.encode(a)])
            .sum();
        match &best {
            Some((b, _)) if score <= *b => {}
            _ => best = Some((score, a.to_vec())),
        }
    });
    Ok(best.map(|(_, a)| a).unwrap_or_default())
}
