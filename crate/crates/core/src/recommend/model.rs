use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineConfig;
use crate::atc::AtcAnnotation;
use crate::cluster::{OutlierSet, Partition};
use crate::error::{Error, Result};
use crate::graph::{JenksClassification, PruneReport, SimGraph, StopList};
use crate::ingest::{normalize_name, MedId, MedicineCatalogEntry};
use crate::rulemine::RuleSet;

pub const MODEL_FORMAT: &str = "recomed-model/1";

/// The servable product of the build pipeline. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: EngineConfig,
    pub db_fingerprint: String,
    pub n_transactions: usize,
    pub catalog: Vec<MedicineCatalogEntry>,
    pub jenks: JenksClassification,
    pub stoplist: StopList,
    pub prune: PruneReport,
    pub graph: SimGraph,
    pub outliers: OutlierSet,
    pub partition: Partition,
    pub modularity: f64,
    /// One annotation per catalog entry, indexed by med_id.
    pub annotations: Vec<AtcAnnotation>,
    pub ruleset_ref: String,
    /// Only set when the caller supplies one; builds are otherwise
    /// reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub built_at: Option<String>,
}

impl ClusterModel {
    pub fn entry(&self, m: MedId) -> Option<&MedicineCatalogEntry> {
        self.catalog.get(m.index())
    }

    pub fn name(&self, m: MedId) -> &str {
        self.entry(m).map(|e| e.name.as_str()).unwrap_or("?")
    }

    pub fn annotation(&self, m: MedId) -> Option<&AtcAnnotation> {
        self.annotations.get(m.index())
    }

    pub fn is_stop(&self, m: MedId) -> bool {
        self.stoplist.med_ids.contains(&m)
    }

    pub fn is_outlier(&self, m: MedId) -> bool {
        self.outliers.med_ids.contains(&m)
    }

    /// Catalog ids whose normalized name equals the normalized input.
    pub fn resolve_name(&self, name: &str) -> Vec<MedId> {
        let key = normalize_name(name);
        self.catalog
            .iter()
            .filter(|e| e.normalized_name == key)
            .map(|e| e.med_id)
            .collect()
    }

    /// Resolves names to ids; returns the known ids and the unknown names.
    pub fn resolve_names<S: AsRef<str>>(&self, names: &[S]) -> (BTreeSet<MedId>, Vec<String>) {
        let mut known = BTreeSet::new();
        let mut unknown = Vec::new();
        for n in names {
            let ids = self.resolve_name(n.as_ref());
            if ids.is_empty() {
                unknown.push(n.as_ref().to_string());
            }
            known.extend(ids);
        }
        (known, unknown)
    }

    /// Catalog entries whose normalized name starts with the normalized prefix.
    pub fn search(&self, prefix: &str, limit: usize) -> Vec<&MedicineCatalogEntry> {
        let key = normalize_name(prefix);
        if key.is_empty() {
            return Vec::new();
        }
        self.catalog
            .iter()
            .filter(|e| e.normalized_name.starts_with(&key))
            .take(limit)
            .collect()
    }

    /// Writes `med_id, medicine, community, is_outlier, atc` rows; outliers
    /// and pruned medicines get community -1.
    pub fn write_partition_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["med_id", "medicine", "community", "is_outlier", "atc"])?;
        for e in &self.catalog {
            if !self.graph.nodes.contains(&e.med_id) {
                continue;
            }
            let community = self
                .partition
                .community_of(e.med_id)
                .map(|c| c.to_string())
                .unwrap_or_else(|| "-1".into());
            let codes = self
                .annotation(e.med_id)
                .map(|a| a.codes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            w.write_record([
                e.med_id.0.to_string(),
                e.name.clone(),
                community,
                self.is_outlier(e.med_id).to_string(),
                codes,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Single-document persisted form: the model plus its rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    #[serde(flatten)]
    pub model: ClusterModel,
    pub rules: RuleSet,
}

impl ModelArtifact {
    pub fn new(model: ClusterModel, rules: RuleSet) -> Self {
        ModelArtifact {
            format: MODEL_FORMAT.to_string(),
            model,
            rules,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let art: ModelArtifact = serde_json::from_slice(bytes)?;
        if art.format != MODEL_FORMAT {
            return Err(Error::Format {
                expected: MODEL_FORMAT,
                found: art.format,
            });
        }
        if art.model.annotations.len() != art.model.catalog.len() {
            return Err(Error::Corrupt("annotation count differs from catalog".into()));
        }
        if art.rules.fingerprint() != art.model.ruleset_ref {
            return Err(Error::Corrupt("rule set does not match the model's reference".into()));
        }
        Ok(art)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
