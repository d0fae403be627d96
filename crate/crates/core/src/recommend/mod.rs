//! Pipeline orchestration, the persisted model artifact, and recommendation
//! queries.

mod config;
mod model;
mod pipeline;
mod query;

pub use config::{EngineConfig, ScoreWeights};
pub use model::{ClusterModel, ModelArtifact, MODEL_FORMAT};
pub use pipeline::{build_model, build_model_with_approval};
pub use query::{
    explain, recommend, Explanation, FiredRule, Flag, Recommendation, Recommendations,
    ScoreComponents,
};

#[cfg(test)]
mod tests;
