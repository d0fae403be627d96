//! Co-prescription recommender engine.
//!
//! The build pipeline turns a corpus of prescriptions into a servable model:
//!
//! 1. [`ingest`] parses JSON Lines prescriptions into a [`TransactionDB`].
//! 2. [`rulemine`] mines frequent itemsets (Apriori) and scores association rules.
//! 3. [`graph`] builds the co-occurrence graph, classifies medicine frequencies
//!    with Fisher-Jenks natural breaks, prunes stop medicines and rebuilds a
//!    Jaccard similarity graph.
//! 4. [`atc`] annotates medicines with ATC codes.
//! 5. [`cluster`] drops DBSCAN noise and partitions the rest with Louvain.
//! 6. [`recommend`] persists the model and answers queries.
//!
//! [`synth`] and [`metrics`] provide synthetic corpora with ground truth and
//! the evaluation metrics used to check the pipeline.

pub mod atc;
pub mod cluster;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod recommend;
pub mod rulemine;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{MedId, TransactionDB};

use sha2::{Digest, Sha256};

/// Hex SHA-256 of a byte string. Used for artifact fingerprints.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
