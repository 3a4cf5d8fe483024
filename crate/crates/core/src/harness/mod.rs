//! Dataset persistence, baseline agents, batch evaluation and
//! training-dynamics analysis.

pub mod agents;
pub mod analysis;
pub mod dataset;
pub mod eval;
pub mod manifest;

pub use agents::{oracle_agent, random_agent};
pub use analysis::{analyze, AnalysisReport, KeywordSpec};
pub use dataset::{build_dataset, BuildReport, Corpus, DatasetConfig};
pub use eval::{evaluate, EvalRecord, EvalReport, EvalTable};
pub use manifest::{Manifest, ManifestRecord, ResponseRecord};
