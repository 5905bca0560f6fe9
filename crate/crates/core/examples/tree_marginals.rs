//! On a tree, message passing with Bethe counting numbers recovers the exact
//! marginals. Compares converged beliefs with brute-force enumeration.

use blendsp::inference::{decode_beliefs, run_inference, MessageState, Tempering};
use blendsp::model::{potentials, CountingNumbers, FeatureTable, Model, Region, RegionGraph, Sample, Weights};
use blendsp::oracle::exact_marginals;

fn main() {
    // chain 0 - 1 - 2 - 3 with a branch 1 - 4
    let links = [(0, 1), (1, 2), (2, 3), (1, 4)];
    let mut regions: Vec<Region> = (0..5).map(|v| Region::new(v, vec![v], vec![2]).unwrap()).collect();
    let mut edges = Vec::new();
    for &(a, b) in &links {
        let id = regions.len();
        regions.push(Region::new(id, vec![a, b], vec![2, 2]).unwrap());
        edges.extend([(id, a), (id, b)]);
    }
    let graph = RegionGraph::new(regions, &edges).unwrap();
    let model = Model::without_static_features(graph, 2);
    let g = model.graph();

    let features = (0..g.region_count())
        .map(|r| {
            let values = if r < 5 {
                vec![0.0, 0.3 * r as f64 - 0.5]
            } else {
                vec![1.0, -1.0, -1.0, 1.0]
            };
            vec![FeatureTable { feature: usize::from(r >= 5), values }]
        })
        .collect();
    let loss = (0..g.region_count()).map(|r| vec![0.0; g.region(r).label_count()]).collect();
    let sample = Sample::new(&model, 0, loss, features, vec![0; g.region_count()]).unwrap();
    let w = Weights::new(vec![1.0, 0.8]);

    let counts = CountingNumbers::bethe(g);
    println!("Bethe counting numbers: {:?}", counts.values());
    let tempering = Tempering::new(1.0, &counts);
    let theta = potentials(&model, &sample, &w, true);
    let mut state = MessageState::new(g);
    let outcome = run_inference(g, &theta, &mut state, tempering, 1000, 1e-13);
    println!("converged={} after {} sweeps", outcome.converged, outcome.sweeps);

    let beliefs = decode_beliefs(g, &theta, &state, tempering);
    let exact = exact_marginals(&model, &sample, &w, 1.0).unwrap();
    println!("\nvar  p(y=1) inferred   p(y=1) exact");
    for v in 0..5 {
        println!("{v:>3}  {:.15}  {:.15}", beliefs.region(v)[1], exact.region(v)[1]);
    }
}
