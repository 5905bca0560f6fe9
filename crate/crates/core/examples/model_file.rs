//! Build a model by hand, write it in the text format, read it back, train,
//! and save the weights.

use blendsp::io::{parse_model_str, parse_weights, ModelFile, WeightsFile};
use blendsp::learner::{train, TrainerConfig};
use blendsp::model::{FeatureTable, Model, Region, RegionGraph, Sample};

fn main() {
    // one ternary-binary pair and its two singletons; feature 0 is shared
    // by both samples (static), feature 1 is per sample
    let graph = RegionGraph::new(
        vec![
            Region::new(0, vec![0, 1], vec![3, 2]).unwrap(),
            Region::new(1, vec![0], vec![3]).unwrap(),
            Region::new(2, vec![1], vec![2]).unwrap(),
        ],
        &[(0, 1), (0, 2)],
    )
    .unwrap();
    let statics = vec![
        vec![FeatureTable { feature: 0, values: vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5] }],
        vec![],
        vec![],
    ];
    let model = Model::new(graph, 2, statics).unwrap();
    let sample = |id, truth: [usize; 2], obs: [f64; 3]| {
        let g = model.graph();
        let t: Vec<usize> = g.regions().iter().map(|r| r.encode(&truth)).collect();
        let mut hamming = vec![1.0; 3];
        hamming[truth[0]] = 0.0;
        Sample::new(
            &model,
            id,
            vec![vec![0.0; 6], hamming, vec![0.0; 2]],
            vec![vec![], vec![FeatureTable { feature: 1, values: obs.to_vec() }], vec![]],
            t,
        )
        .unwrap()
    };
    let file = ModelFile {
        samples: vec![sample(0, [0, 0], [0.9, 0.1, -0.2]), sample(1, [2, 1], [-0.3, 0.0, 0.7])],
        model: model.clone(),
        counts: None,
    };

    let text = file.to_text();
    println!("{text}");
    let (parsed, report) = parse_model_str(&text).expect("round trip");
    assert_eq!(parsed, file);
    println!("parsed back identically; validation clean: {}", report.is_clean());

    let state = train(&parsed.model, &parsed.samples, &TrainerConfig::default()).unwrap();
    let weights = WeightsFile { weights: state.w, eps: 1.0, c_reg: 1.0, scheme: state.counts.scheme() };
    let wtext = weights.to_text();
    println!("\n{wtext}");
    assert_eq!(parse_weights(&wtext, 2).unwrap(), weights);
}
