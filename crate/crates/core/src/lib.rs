//! Piano fingering prediction: PIG corpus handling, input encodings,
//! checklist-conditioned taggers, fluency metrics, mixed cross-entropy and
//! REINFORCE training, and beam decoding.

pub mod checklist;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod encode;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pig;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::Config;
pub use decode::DecodeMode;
pub use encode::Representation;
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use model::{Model, ModelConfig, ModelKind};
pub use numcore::{ParamStore, Rng};
pub use pig::{Corpus, Finger, Hand, HandPart, Note, Split};
pub use train::{TrainConfig, Trainer};
