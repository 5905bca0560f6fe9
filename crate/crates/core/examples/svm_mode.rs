//! Temperature zero gives the structured hinge loss. Training there cannot be
//! certified by the duality gap, so it runs to the iteration cap; the weights
//! are then decoded at several inference temperatures.

use blendsp::datagen::{make_denoise_dataset, pixel_error, DenoiseSpec, Tying};
use blendsp::learner::{predict, train, TrainerConfig};

fn main() {
    let spec = DenoiseSpec { tying: Tying::Shared, ..DenoiseSpec::flip(8, 8, 0.2, 8, 8, 11) };
    let data = make_denoise_dataset(&spec).unwrap();
    let truth: Vec<Vec<usize>> = data.test.iter().map(|s| s.variable_truth(data.model.graph())).collect();

    for eps_train in [0.0, 0.1, 1.0] {
        let config = TrainerConfig { eps: eps_train, max_outer_iters: 300, ..TrainerConfig::default() };
        let state = train(&data.model, &data.train, &config).unwrap();
        print!(
            "train eps={eps_train:<4} {:?} primal={:.4} certified={:<5} | test error",
            state.status, state.report.primal, state.report.certified
        );
        for eps_infer in [0.0, 0.1, 1.0] {
            let pred: Vec<Vec<usize>> = data
                .test
                .iter()
                .map(|s| predict(&data.model, s, &state.w, eps_infer, &state.counts, 500, 1e-9).labels)
                .collect();
            print!("  eps_infer={eps_infer}: {:.1}%", pixel_error(&pred, &truth).unwrap().percent);
        }
        println!();
    }
}
