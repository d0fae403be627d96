use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimGraph;
use crate::ingest::MedId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSet {
    pub med_ids: BTreeSet<MedId>,
    pub params: DbscanParams,
}

/// DBSCAN noise labels on the graph metric `d(u, v) = 1 − J(u, v)` for
/// adjacent nodes and infinity otherwise.
///
/// A node is noise iff it is not a core point (fewer than `min_pts`
/// neighbours within `eps`, itself included) and no core point lies within
/// `eps` of it. Cluster labels are not produced.
pub fn dbscan_outliers(g: &SimGraph, eps: f64, min_pts: usize) -> Result<OutlierSet> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param("eps", format!("{eps} not in (0, 1]")));
    }
    if min_pts == 0 {
        return Err(Error::param("min_pts", "must be at least 1"));
    }
    let adj = g.adjacency();
    let near = |m: &MedId| -> Vec<MedId> {
        adj[m]
            .iter()
            .filter(|(_, w)| 1.0 - w <= eps)
            .map(|(v, _)| *v)
            .collect()
    };
    let core: BTreeSet<MedId> = g
        .nodes
        .iter()
        .filter(|m| near(m).len() + 1 >= min_pts)
        .copied()
        .collect();
    let med_ids = g
        .nodes
        .iter()
        .filter(|m| !core.contains(m) && !near(m).iter().any(|v| core.contains(v)))
        .copied()
        .collect();
    Ok(OutlierSet {
        med_ids,
        params: DbscanParams { eps, min_pts },
    })
}
