//! Binary image denoising on a 4-connected grid.
//!
//! Generates noisy copies of a cross, trains with per-region weights, and
//! decodes the held-out copies.
//!
//!     cargo run --release --example denoise_grid -- [size] [flip_prob] [seed]

use blendsp::datagen::{make_denoise_dataset, pixel_error, BitImage, DenoiseSpec};
use blendsp::learner::{predict, train_with, TrainerConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let size: usize = args.first().map_or(10, |s| s.parse().expect("size"));
    let flip: f64 = args.get(1).map_or(0.2, |s| s.parse().expect("flip probability"));
    let seed: u64 = args.get(2).map_or(1, |s| s.parse().expect("seed"));

    let data = make_denoise_dataset(&DenoiseSpec::flip(size, size, flip, 10, 10, seed)).expect("valid spec");
    println!(
        "{size}x{size} grid, {} singleton + {} pairwise regions, {} weights",
        data.singleton_count(),
        data.pairwise_count(),
        data.model.feature_count()
    );

    let config = TrainerConfig { eps: 1.0, c_reg: 1.0, ..TrainerConfig::default() };
    let state = train_with(&data.model, &data.train, &config, None, |log| {
        if log.iter % 20 == 1 {
            println!("iter {:>4}  primal {:.6}  gap {:.3e}  residual {:.3e}", log.iter, log.primal, log.gap, log.residual);
        }
    })
    .expect("training runs");
    println!("{:?} after {} iterations, gap {:.3e}", state.status, state.iterations, state.report.gap);

    let graph = data.model.graph();
    let mut predictions = Vec::new();
    for s in &data.test {
        predictions.push(predict(&data.model, s, &state.w, 1.0, &state.counts, 1000, 1e-9).labels);
    }
    let truth: Vec<Vec<usize>> = data.test.iter().map(|s| s.variable_truth(graph)).collect();
    println!("test error: {}", pixel_error(&predictions, &truth).expect("same shapes"));

    let noisy: Vec<usize> = (0..size * size)
        .map(|p| usize::from(data.test[0].features[p][0].values[1] > 0.0))
        .collect();
    let show = |labels: &[usize]| BitImage::from_labels(size, size, labels).expect("grid shape").to_string();
    let noisy = show(&noisy);
    let denoised = show(&predictions[0]);
    println!("\n{:<width$}  denoised", "noisy", width = size);
    for (a, b) in noisy.lines().zip(denoised.lines()) {
        println!("{a}  {b}");
    }
}
