//! Outlier detection (DBSCAN noise) and community detection (Louvain) over
//! the Jaccard similarity graph.

mod dbscan;
mod louvain;

pub use dbscan::{dbscan_outliers, DbscanParams, OutlierSet};
pub use louvain::{louvain, louvain_traced, LouvainTrace, PassTrace};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimGraph;
use crate::ingest::MedId;

/// Community assignment. Community ids are dense from 0 and ordered by their
/// smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionDoc", into = "PartitionDoc")]
pub struct Partition {
    assignment: BTreeMap<MedId, usize>,
    communities: Vec<Vec<MedId>>,
}

#[derive(Serialize, Deserialize)]
struct PartitionDoc {
    communities: Vec<Vec<MedId>>,
}

impl TryFrom<PartitionDoc> for Partition {
    type Error = Error;

    fn try_from(doc: PartitionDoc) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        for (c, members) in doc.communities.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Corrupt(format!("community {c} is empty")));
            }
            for &m in members {
                if assignment.insert(m, c).is_some() {
                    return Err(Error::Corrupt(format!("{m} assigned twice")));
                }
            }
        }
        Ok(Partition::from_assignment(assignment))
    }
}

impl From<Partition> for PartitionDoc {
    fn from(p: Partition) -> Self {
        PartitionDoc {
            communities: p.communities,
        }
    }
}

impl Partition {
    /// Builds a partition from arbitrary labels, renumbering canonically.
    pub fn from_assignment<L: Ord + Clone>(labels: impl IntoIterator<Item = (MedId, L)>) -> Self {
        let mut groups: BTreeMap<L, BTreeSet<MedId>> = BTreeMap::new();
        for (m, l) in labels {
            groups.entry(l).or_default().insert(m);
        }
        let mut communities: Vec<Vec<MedId>> =
            groups.into_values().map(|s| s.into_iter().collect()).collect();
        communities.sort_by_key(|c| c[0]);
        let assignment = communities
            .iter()
            .enumerate()
            .flat_map(|(c, ms)| ms.iter().map(move |&m| (m, c)))
            .collect();
        Partition {
            assignment,
            communities,
        }
    }

    pub fn singletons(nodes: impl IntoIterator<Item = MedId>) -> Self {
        Self::from_assignment(nodes.into_iter().map(|m| (m, m)))
    }

    pub fn community_of(&self, m: MedId) -> Option<usize> {
        self.assignment.get(&m).copied()
    }

    pub fn communities(&self) -> &[Vec<MedId>] {
        &self.communities
    }

    pub fn assignment(&self) -> &BTreeMap<MedId, usize> {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = MedId> + '_ {
        self.assignment.keys().copied()
    }
}

/// Weighted modularity `Q = Σ_c [W_c/W − γ (S_c / 2W)²]` of `p` over the
/// subgraph of `g` without `exclude`. `p` must cover exactly those nodes.
/// A graph without edges has modularity 0.
pub fn modularity(
    g: &SimGraph,
    p: &Partition,
    exclude: &BTreeSet<MedId>,
    resolution: f64,
) -> Result<f64> {
    for &m in &g.nodes {
        if !exclude.contains(&m) && p.community_of(m).is_none() {
            return Err(Error::PartitionMismatch(m));
        }
    }
    if let Some(m) = p.nodes().find(|m| !g.nodes.contains(m) || exclude.contains(m)) {
        return Err(Error::PartitionMismatch(m));
    }
    let mut total = 0.0;
    let mut inner = vec![0.0; p.len()];
    let mut degree = vec![0.0; p.len()];
    for (&(u, v), &w) in &g.edges {
        let (Some(cu), Some(cv)) = (p.community_of(u), p.community_of(v)) else {
            continue;
        };
        total += w;
        degree[cu] += w;
        degree[cv] += w;
        if cu == cv {
            inner[cu] += w;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(inner
        .iter()
        .zip(&degree)
        .map(|(wc, sc)| wc / total - resolution * (sc / (2.0 * total)).powi(2))
        .sum())
}
