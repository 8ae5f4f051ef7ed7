//! Model and run files, experiment runners and result emission.

pub mod config;
pub mod model_spec;
pub mod output;
pub mod runner;

pub use config::{load_config, parse_config, Experiment, RunConfig};
pub use model_spec::{load_model, parse_model, ModelSpec};
pub use runner::{run, RunManifest, RunOptions};
