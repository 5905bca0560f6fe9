#![allow(dead_code)]

use blendsp::inference::MessageState;
use blendsp::model::{FeatureTable, Model, Region, RegionGraph, Sample, Weights};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub struct Instance {
    pub model: Model,
    pub samples: Vec<Sample>,
}

/// Singletons over `n` variables, then random pairs and triples over them with
/// an edge for every strict containment.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, max_card: usize) -> RegionGraph {
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=max_card)).collect();
    let mut scopes: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    if n >= 2 {
        let extra = rng.gen_range(0..=n + 1);
        for _ in 0..extra {
            let size = rng.gen_range(2..=3.min(n));
            let mut vars: Vec<usize> = (0..n).collect();
            vars.shuffle(rng);
            vars.truncate(size);
            vars.sort_unstable();
            if !scopes.contains(&vars) {
                scopes.push(vars);
            }
        }
    }
    build(scopes, &cards)
}

fn build(scopes: Vec<Vec<usize>>, cards: &[usize]) -> RegionGraph {
    let regions: Vec<Region> = scopes
        .iter()
        .enumerate()
        .map(|(id, vars)| Region::new(id, vars.clone(), vars.iter().map(|&v| cards[v]).collect()).unwrap())
        .collect();
    let mut edges = Vec::new();
    for (p, outer) in scopes.iter().enumerate() {
        for (c, inner) in scopes.iter().enumerate() {
            if inner.len() < outer.len() && inner.iter().all(|v| outer.contains(v)) {
                edges.push((p, c));
            }
        }
    }
    RegionGraph::new(regions, &edges).unwrap()
}

/// Singletons plus one pair region per edge of a random spanning tree.
pub fn random_tree_graph(rng: &mut ChaCha8Rng, n: usize) -> RegionGraph {
    let mut scopes: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        scopes.push(vec![u, v]);
    }
    build(scopes, &vec![2; n])
}

/// Random feature tables, random truth and a random loss (zero at the truth)
/// on a subset of regions.
pub fn random_samples(rng: &mut ChaCha8Rng, model: &Model, count: usize) -> Vec<Sample> {
    let graph = model.graph();
    (0..count)
        .map(|id| {
            let truth_vars: Vec<usize> = graph
                .variable_cardinalities()
                .iter()
                .map(|&c| rng.gen_range(0..c))
                .collect();
            let truth: Vec<usize> = graph.regions().iter().map(|r| r.encode(&truth_vars)).collect();
            let mut loss = Vec::new();
            let mut features = Vec::new();
            for r in graph.regions() {
                let n = r.label_count();
                let mut l = vec![0.0; n];
                if rng.gen_bool(0.4) {
                    for (j, v) in l.iter_mut().enumerate() {
                        if j != truth[r.id()] {
                            *v = rng.gen_range(0.0..1.0);
                        }
                    }
                }
                loss.push(l);
                let mut tables = Vec::new();
                for k in 0..model.feature_count() {
                    if rng.gen_bool(0.5) {
                        tables.push(FeatureTable {
                            feature: k,
                            values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        });
                    }
                }
                features.push(tables);
            }
            Sample::new(model, id, loss, features, truth).unwrap()
        })
        .collect()
}

/// Random binary model over at most `max_vars` variables with one or two samples.
pub fn random_instance(rng: &mut ChaCha8Rng, max_vars: usize) -> Instance {
    let n = rng.gen_range(1..=max_vars);
    let graph = random_graph(rng, n, 2);
    let k = rng.gen_range(1..=4);
    let model = Model::without_static_features(graph, k);
    let count = rng.gen_range(1..=2);
    let samples = random_samples(rng, &model, count);
    Instance { model, samples }
}

pub fn random_tree_instance(rng: &mut ChaCha8Rng, max_vars: usize) -> Instance {
    let n = rng.gen_range(1..=max_vars);
    let graph = random_tree_graph(rng, n);
    let k = rng.gen_range(1..=3);
    let model = Model::without_static_features(graph, k);
    let samples = random_samples(rng, &model, 1);
    Instance { model, samples }
}

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize, bound: f64) -> Weights {
    Weights::new((0..k).map(|_| rng.gen_range(-bound..=bound)).collect())
}

/// Messages filled with uniform values in `[-bound, bound]`.
pub fn random_state(rng: &mut ChaCha8Rng, graph: &RegionGraph, bound: f64) -> MessageState {
    let mut state = MessageState::new(graph);
    for e in 0..graph.edges().len() {
        for v in state.lambda_mut(e) {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    state
}
