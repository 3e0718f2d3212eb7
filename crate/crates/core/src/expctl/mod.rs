//! Experiment configuration, orchestration and result persistence.

mod config;
mod pipeline;
pub(crate) mod record;
mod seeds;

pub use config::{DatasetKind, ExperimentConfig, ModelId};
pub use pipeline::{
    build_model, evaluate_model, load_checkpoint, predict_dataset, prepare_data, run_dir, run_experiment,
    save_checkpoint, train_model, AnyModel, CheckpointManifest, PreparedData, Split, TrainedModel,
};
pub use record::{load, persist, ResultRecord, SCHEMA_VERSION};
pub use seeds::SeedSet;
