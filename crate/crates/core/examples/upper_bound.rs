//! The per-region loss terms bound the extended log-loss from above at any
//! messages; inference sweeps tighten the bound.

use blendsp::inference::{inference_sweep, MessageState, Tempering};
use blendsp::model::{potentials, CountingNumbers, FeatureTable, Model, Region, RegionGraph, Sample, Weights};
use blendsp::objective::sample_loss;
use blendsp::oracle::exact_loss;

fn main() {
    // a 4-cycle of pairwise regions over binary variables
    let mut regions: Vec<Region> = (0..4).map(|v| Region::new(v, vec![v], vec![2]).unwrap()).collect();
    let mut edges = Vec::new();
    for (a, b) in [(0, 1), (1, 2), (2, 3), (0, 3)] {
        let id = regions.len();
        regions.push(Region::new(id, vec![a, b], vec![2, 2]).unwrap());
        edges.extend([(id, a), (id, b)]);
    }
    let model = Model::without_static_features(RegionGraph::new(regions, &edges).unwrap(), 2);
    let g = model.graph();
    let truth_vars = [1, 0, 1, 1];
    let truth: Vec<usize> = g.regions().iter().map(|r| r.encode(&truth_vars)).collect();
    let mut loss = Vec::new();
    let mut features = Vec::new();
    for r in g.regions() {
        if r.variables().len() == 1 {
            let t = truth_vars[r.variables()[0]];
            loss.push(if t == 0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] });
            features.push(vec![FeatureTable { feature: 0, values: vec![-0.4, 0.4] }]);
        } else {
            loss.push(vec![0.0; 4]);
            features.push(vec![FeatureTable { feature: 1, values: vec![1.0, -1.0, -1.0, 1.0] }]);
        }
    }
    let sample = Sample::new(&model, 0, loss, features, truth).unwrap();
    let w = Weights::new(vec![1.5, 0.7]);
    let counts = CountingNumbers::ones(g);
    let theta = potentials(&model, &sample, &w, true);

    println!("{:>5} {:>14} {:>14} {:>14}", "eps", "exact", "bound (λ=0)", "bound (20 sw)");
    for eps in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let tempering = Tempering::new(eps, &counts);
        let exact = exact_loss(&model, &sample, &w, eps).unwrap();
        let mut state = MessageState::new(g);
        let fresh = sample_loss(g, &theta, &state, &sample.truth, tempering);
        for _ in 0..20 {
            inference_sweep(g, &theta, &mut state, tempering);
        }
        let swept = sample_loss(g, &theta, &state, &sample.truth, tempering);
        println!("{eps:>5} {exact:>14.8} {fresh:>14.8} {swept:>14.8}");
    }
}
