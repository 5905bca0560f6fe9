//! Parameter learning for region-graph structured predictors that interleaves
//! message-passing inference with weight updates.
//!
//! The training objective is a convex upper bound on the temperature-`ε`
//! extended log-loss, written over per-region soft-max terms and Lagrange
//! messages `λ`. [`learner::train`] alternates block updates of `λ`
//! ([`inference`]) with backtracking gradient steps on the weights, and
//! [`objective`] reports primal, dual and duality gap. [`oracle`] provides
//! brute-force references for small models.
//!
//! ```
//! use blendsp::datagen::{make_denoise_dataset, DenoiseSpec};
//! use blendsp::learner::{train, TrainerConfig};
//!
//! let data = make_denoise_dataset(&DenoiseSpec::flip(3, 3, 0.1, 2, 1, 7)).unwrap();
//! let state = train(&data.model, &data.train, &TrainerConfig::default()).unwrap();
//! assert!(state.report.certified);
//! ```

pub mod cli;
pub mod datagen;
pub mod error;
pub mod inference;
pub mod io;
pub mod learner;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod softmax;

pub use learner::{predict, train, Counting, TrainerConfig};
pub use model::{CountingNumbers, Model, Region, RegionGraph, Sample, Weights};
