//! Primal, dual and duality gap along a training run, in the log format the
//! CLI writes (one line per outer iteration). Pipe into a plotting tool to
//! draw convergence curves.

use blendsp::datagen::{make_denoise_dataset, DenoiseSpec, Tying};
use blendsp::learner::{train_with, IterationLog, TrainerConfig};

fn main() {
    let spec = DenoiseSpec { tying: Tying::Shared, ..DenoiseSpec::flip(6, 6, 0.15, 5, 1, 3) };
    let data = make_denoise_dataset(&spec).unwrap();
    for sweeps in [1, 10] {
        println!("# sweeps_per_step = {sweeps}");
        println!("{}", IterationLog::HEADER);
        let config = TrainerConfig { sweeps_per_step: sweeps, c_reg: 0.5, ..TrainerConfig::default() };
        let state = train_with(&data.model, &data.train, &config, None, |l| println!("{l}")).unwrap();
        println!("# {:?}, certified = {}, final gap = {:e}\n", state.status, state.report.certified, state.report.gap);
    }
}
