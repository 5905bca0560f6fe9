mod common;

use blendsp::datagen::{build_grid_graph, make_denoise_dataset, DenoiseSpec, Tying};
use blendsp::inference::{MessageState, Tempering};
use blendsp::learner::{predict, train, train_with, Counting, Problem, TrainStatus, TrainerConfig};
use blendsp::model::{potentials, CountingNumbers, FeatureTable, Model, Sample, ValidationWarning, Weights};
use blendsp::oracle::exact_map;
use blendsp::softmax::argmax;
use common::{random_instance, random_tree_instance, random_weights, rng};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_history_is_monotone(seed in any::<u64>(), eps in prop::sample::select(vec![0.0, 0.5, 1.0])) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 6);
        let config = TrainerConfig { eps, c_reg: 0.5, max_outer_iters: 40, ..TrainerConfig::default() };
        let state = train(&inst.model, &inst.samples, &config).unwrap();
        for pair in state.history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10, "{} -> {}", pair[0], pair[1]);
        }
        if eps == 0.0 {
            prop_assert!(!state.report.certified);
        }
    }

    #[test]
    fn tree_zero_temperature_prediction_is_map(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_tree_instance(&mut r, 8);
        let w = random_weights(&mut r, inst.model.feature_count(), 2.0);
        let s = &inst.samples[0];
        let counts = CountingNumbers::bethe(inst.model.graph());
        let p = predict(&inst.model, s, &w, 0.0, &counts, 50, 1e-12);
        prop_assert_eq!(p.labels, exact_map(&inst.model, s, &w).unwrap());
    }
}

#[test]
fn point_mass_beliefs_give_zero_gradient() {
    // One binary region whose potential strongly favors the true label: the
    // beliefs are numerically a point mass, so moments match and w = 0.
    let graph = blendsp::model::RegionGraph::new(vec![blendsp::model::Region::new(0, vec![0], vec![2]).unwrap()], &[]).unwrap();
    let model = Model::without_static_features(graph, 2);
    let sample = Sample::new(
        &model,
        0,
        vec![vec![0.0, 0.0]],
        vec![vec![
            FeatureTable { feature: 0, values: vec![0.0, 0.0] },
            FeatureTable { feature: 1, values: vec![0.0, 0.0] },
        ]],
        vec![0],
    )
    .unwrap();
    let counts = CountingNumbers::ones(model.graph());
    let samples = [sample];
    let problem = Problem::new(&model, &samples, Tempering::new(1e-3, &counts), 1.0);
    let g = problem.gradient(&Weights::zeros(2), &[MessageState::new(model.graph())]);
    assert_eq!(g, vec![0.0, 0.0]);
}

#[test]
fn single_region_gradient_matches_gibbs_expectation() {
    let graph = blendsp::model::RegionGraph::new(vec![blendsp::model::Region::new(0, vec![0], vec![3]).unwrap()], &[]).unwrap();
    let model = Model::without_static_features(graph, 1);
    let phi = vec![0.2, -0.4, 1.0];
    let loss = vec![0.0, 1.0, 0.5];
    let sample = Sample::new(&model, 0, vec![loss.clone()], vec![vec![FeatureTable { feature: 0, values: phi.clone() }]], vec![0]).unwrap();
    let counts = CountingNumbers::ones(model.graph());
    let samples = [sample];
    let c_reg = 0.3;
    let w = 0.8;
    let problem = Problem::new(&model, &samples, Tempering::new(1.0, &counts), c_reg);
    let g = problem.gradient(&Weights::new(vec![w]), &[MessageState::new(model.graph())]);
    let scores: Vec<f64> = phi.iter().zip(&loss).map(|(f, l)| (l + w * f).exp()).collect();
    let z: f64 = scores.iter().sum();
    let expected: f64 = phi.iter().zip(&scores).map(|(f, s)| f * s / z).sum::<f64>() - phi[0] + c_reg * w;
    assert!((g[0] - expected).abs() < 1e-14, "{} vs {}", g[0], expected);
}

#[test]
fn decoupled_grid_predicts_unary_argmax() {
    let graph = build_grid_graph(4, 3).unwrap();
    let n = 12;
    let model = Model::without_static_features(graph, 2);
    let mut r = rng(9);
    let unary: Vec<[f64; 2]> = (0..n).map(|_| [rand::Rng::gen_range(&mut r, -1.0..1.0), rand::Rng::gen_range(&mut r, -1.0..1.0)]).collect();
    let features: Vec<Vec<FeatureTable>> = (0..model.graph().region_count())
        .map(|reg| {
            if reg < n {
                vec![FeatureTable { feature: 0, values: unary[reg].to_vec() }]
            } else {
                vec![FeatureTable { feature: 1, values: vec![1.0, -1.0, -1.0, 1.0] }]
            }
        })
        .collect();
    let loss = (0..model.graph().region_count()).map(|reg| vec![0.0; model.graph().region(reg).label_count()]).collect();
    let sample = Sample::new(&model, 0, loss, features, vec![0; model.graph().region_count()]).unwrap();
    let counts = CountingNumbers::ones(model.graph());
    let p = predict(&model, &sample, &Weights::new(vec![1.0, 0.0]), 1.0, &counts, 200, 1e-12);
    let expected: Vec<usize> = unary.iter().map(|u| argmax(u).unwrap()).collect();
    assert_eq!(p.labels, expected);
}

fn small_corpus(tying: Tying) -> blendsp::datagen::DenoiseDataset {
    make_denoise_dataset(&DenoiseSpec { tying, ..DenoiseSpec::flip(4, 4, 0.2, 4, 2, 5) }).unwrap()
}

#[test]
fn worker_count_does_not_change_results() {
    let data = small_corpus(Tying::Shared);
    let run = |workers| {
        let config = TrainerConfig { worker_count: workers, max_outer_iters: 60, ..TrainerConfig::default() };
        train(&data.model, &data.train, &config).unwrap()
    };
    let a = run(1);
    let b = run(3);
    let bits = |w: &Weights| w.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.w), bits(&b.w));
    assert_eq!(a.history.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.history.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn converged_training_is_stationary() {
    let data = small_corpus(Tying::Shared);
    let state = train(&data.model, &data.train, &TrainerConfig::default()).unwrap();
    assert_eq!(state.status, TrainStatus::Converged);
    assert!(state.report.certified);
    let counts = CountingNumbers::ones(data.model.graph());
    let problem = Problem::new(&data.model, &data.train, Tempering::new(1.0, &counts), 1.0);
    let g = problem.gradient(&state.w, &state.states);
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 1e-6, "{norm}");
}

#[test]
fn noiseless_corpus_is_denoised_perfectly() {
    let data = make_denoise_dataset(&DenoiseSpec::flip(5, 5, 0.0, 3, 3, 2)).unwrap();
    let state = train(&data.model, &data.train, &TrainerConfig::default()).unwrap();
    assert!(state.converged());
    for s in &data.test {
        let p = predict(&data.model, s, &state.w, 1.0, &state.counts, 500, 1e-9);
        assert_eq!(p.labels, s.variable_truth(data.model.graph()));
    }
}

#[test]
fn warm_start_and_observer() {
    let data = small_corpus(Tying::Shared);
    let first = train(&data.model, &data.train, &TrainerConfig::default()).unwrap();
    let mut seen = 0;
    let warm = train_with(&data.model, &data.train, &TrainerConfig::default(), Some(first.w.clone()), |_| seen += 1).unwrap();
    assert_eq!(seen, warm.iterations);
    assert!(warm.iterations <= first.iterations);
    assert!((warm.report.primal - first.report.primal).abs() < 1e-6);
}

#[test]
fn bethe_on_grid_warns() {
    let data = small_corpus(Tying::Shared);
    let config = TrainerConfig { counting: Counting::Bethe, max_outer_iters: 5, ..TrainerConfig::default() };
    let state = train(&data.model, &data.train, &config).unwrap();
    assert!(state.warnings.iter().any(|w| matches!(w, ValidationWarning::NegativeCountingNumber { .. })));
    assert!(!state.report.certified);
}

#[test]
fn loss_is_ignored_when_decoding() {
    let data = small_corpus(Tying::Full);
    let w = Weights::zeros(data.model.feature_count());
    let s = &data.test[0];
    let theta = potentials(&data.model, s, &w, false);
    assert!(theta.iter().flatten().all(|&v| v == 0.0));
    let counts = CountingNumbers::ones(data.model.graph());
    let p = predict(&data.model, s, &w, 1.0, &counts, 10, 1e-12);
    assert!(p.labels.iter().all(|&l| l == 0));
}
