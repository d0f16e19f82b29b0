//! Parameter storage, Adagrad, the training loop and the model file.

mod adagrad;
mod bank;
mod config;
mod model_file;
mod train;

pub use adagrad::{adagrad_step, StepConfig};
pub use bank::{ParamKind, ParamTable, ParameterBank, Real};
pub use config::{BatchReduction, TrainConfig};
pub use model_file::{load_model, save_model, Model, MAGIC, VERSION};
pub use train::{init_bank, train, train_file, Corpus, Progress, TrainOutcome};
