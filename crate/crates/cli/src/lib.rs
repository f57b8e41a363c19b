//! Command layer: dataset generation, training, evaluation, visualization.
//!
//! Everything is a library function so test suites can drive full runs
//! in-process; `main` is a thin argument dispatcher over these.

pub mod config;
pub mod data_io;
pub mod eval;
pub mod gen;
pub mod train;
pub mod visualize;

pub use config::{GenConfig, MaskCorruption, RawConfig, Regime, RunConfig};
pub use eval::cmd_eval;
pub use gen::cmd_gen_data;
pub use train::cmd_train;
pub use visualize::cmd_visualize;
