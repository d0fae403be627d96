//! Medicine co-occurrence graph, stop-medicine pruning and the Jaccard
//! similarity graph.

mod jenks;

pub use jenks::{jenks_breaks, JenksClass, JenksClassification};

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{MedId, TransactionDB};

/// Serializes `(u, v) -> w` maps as `[[u, v, w], ...]`.
mod edge_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::ingest::MedId;

    pub fn serialize<S, W>(map: &BTreeMap<(MedId, MedId), W>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        W: Serialize + Copy,
    {
        let rows: Vec<(MedId, MedId, W)> = map.iter().map(|(&(u, v), &w)| (u, v, w)).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D, W>(d: D) -> Result<BTreeMap<(MedId, MedId), W>, D::Error>
    where
        D: Deserializer<'de>,
        W: Deserialize<'de>,
    {
        let rows: Vec<(MedId, MedId, W)> = Vec::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (u, v, w) in rows {
            if u >= v {
                return Err(serde::de::Error::custom(format!("edge ({u}, {v}) not normalized")));
            }
            out.insert((u, v), w);
        }
        Ok(out)
    }
}

fn ordered(a: MedId, b: MedId) -> (MedId, MedId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Co-occurrence graph: node weight is prescription frequency, edge weight
/// the number of prescriptions containing both endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoGraph {
    pub nodes: BTreeMap<MedId, u64>,
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<(MedId, MedId), u64>,
}

impl CoGraph {
    pub fn edge(&self, a: MedId, b: MedId) -> u64 {
        self.edges.get(&ordered(a, b)).copied().unwrap_or(0)
    }

    pub fn isolated_nodes(&self) -> usize {
        let mut touched = BTreeSet::new();
        for &(u, v) in self.edges.keys() {
            touched.insert(u);
            touched.insert(v);
        }
        self.nodes.len() - touched.len()
    }
}

pub fn build_cooccurrence_graph(db: &TransactionDB) -> CoGraph {
    let nodes = db.catalog().iter().map(|e| (e.med_id, e.frequency)).collect();
    let mut edges = BTreeMap::new();
    for t in db.transactions() {
        for (i, &u) in t.iter().enumerate() {
            for &v in &t[i + 1..] {
                *edges.entry((u, v)).or_insert(0) += 1;
            }
        }
    }
    CoGraph { nodes, edges }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopOverrides {
    pub forced_in: BTreeSet<MedId>,
    pub forced_out: BTreeSet<MedId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopList {
    pub med_ids: BTreeSet<MedId>,
    pub source_classes: Vec<usize>,
    pub expert_overrides: StopOverrides,
}

/// Medicines in the `stop_class_count` highest frequency classes, adjusted by
/// the expert overrides.
pub fn select_stop_medicines(
    graph: &CoGraph,
    cls: &JenksClassification,
    stop_class_count: usize,
    overrides: &StopOverrides,
) -> Result<StopList> {
    if stop_class_count >= cls.k {
        return Err(Error::param(
            "stop_class_count",
            format!("{stop_class_count} must be below the class count {}", cls.k),
        ));
    }
    if let Some(m) = overrides.forced_in.intersection(&overrides.forced_out).next() {
        return Err(Error::ConflictingOverride(*m));
    }
    let source_classes: Vec<usize> = (cls.k - stop_class_count..cls.k).collect();
    let mut med_ids: BTreeSet<MedId> = graph
        .nodes
        .iter()
        .filter(|(_, &f)| cls.class_of(f).is_some_and(|c| source_classes.contains(&c)))
        .map(|(&m, _)| m)
        .collect();
    med_ids.extend(overrides.forced_in.iter().copied());
    for m in &overrides.forced_out {
        med_ids.remove(m);
    }
    Ok(StopList {
        med_ids,
        source_classes,
        expert_overrides: overrides.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub edges_before: usize,
    pub edges_after: usize,
    pub removed: Vec<MedId>,
    /// Nodes left without any edge after pruning.
    pub isolated_after: usize,
}

impl PruneReport {
    /// Before/after table of edge and node counts.
    pub fn table(&self) -> String {
        let r = self.removed.len();
        format!(
            "Parameters\tBefore removing {r} medicines\tAfter removing {r} medicines\n\
             Number of edges\t{}\t{}\n\
             Number of nodes\t{}\t{}\n",
            self.edges_before, self.edges_after, self.nodes_before, self.nodes_after
        )
    }
}

pub fn prune_graph(graph: &CoGraph, stop: &StopList) -> Result<(CoGraph, PruneReport)> {
    if let Some(m) = stop.med_ids.iter().find(|m| !graph.nodes.contains_key(m)) {
        return Err(Error::UnknownStopMedicine(*m));
    }
    let nodes: BTreeMap<MedId, u64> = graph
        .nodes
        .iter()
        .filter(|(m, _)| !stop.med_ids.contains(m))
        .map(|(&m, &f)| (m, f))
        .collect();
    let edges: BTreeMap<(MedId, MedId), u64> = graph
        .edges
        .iter()
        .filter(|((u, v), _)| !stop.med_ids.contains(u) && !stop.med_ids.contains(v))
        .map(|(&k, &w)| (k, w))
        .collect();
    let pruned = CoGraph { nodes, edges };
    let report = PruneReport {
        nodes_before: graph.nodes.len(),
        nodes_after: pruned.nodes.len(),
        edges_before: graph.edges.len(),
        edges_after: pruned.edges.len(),
        removed: stop.med_ids.iter().copied().collect(),
        isolated_after: pruned.isolated_nodes(),
    };
    Ok((pruned, report))
}

/// `(|Pa ∩ Pb|, |Pa ∪ Pb|)` where `Px` is the set of prescriptions containing `x`.
pub fn jaccard_counts(db: &TransactionDB, a: MedId, b: MedId) -> Result<(u64, u64)> {
    let fa = db.frequency(a)?;
    let fb = db.frequency(b)?;
    if a == b {
        return Ok((fa, fa));
    }
    let inter = db
        .transactions()
        .iter()
        .filter(|t| t.binary_search(&a).is_ok() && t.binary_search(&b).is_ok())
        .count() as u64;
    Ok((inter, fa + fb - inter))
}

pub fn jaccard_similarity(db: &TransactionDB, a: MedId, b: MedId) -> Result<f64> {
    let (inter, union) = jaccard_counts(db, a, b)?;
    Ok(inter as f64 / union as f64)
}

/// Jaccard-weighted similarity graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGraph {
    pub nodes: BTreeSet<MedId>,
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<(MedId, MedId), f64>,
}

impl SimGraph {
    pub fn weight(&self, a: MedId, b: MedId) -> Option<f64> {
        self.edges.get(&ordered(a, b)).copied()
    }

    pub fn adjacency(&self) -> BTreeMap<MedId, Vec<(MedId, f64)>> {
        let mut adj: BTreeMap<MedId, Vec<(MedId, f64)>> =
            self.nodes.iter().map(|&m| (m, Vec::new())).collect();
        for (&(u, v), &w) in &self.edges {
            adj.entry(u).or_default().push((v, w));
            adj.entry(v).or_default().push((u, w));
        }
        adj
    }

    /// One `u\tv\tweight` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (&(u, v), w) in &self.edges {
            writeln!(out, "{}\t{}\t{w}", u.0, v.0)?;
        }
        Ok(())
    }
}

/// Keeps every co-occurring pair of the pruned graph whose Jaccard
/// coefficient is at least `min_jaccard`.
pub fn rebuild_jaccard_graph(db: &TransactionDB, pruned: &CoGraph, min_jaccard: f64) -> Result<SimGraph> {
    if !(0.0..=1.0).contains(&min_jaccard) {
        return Err(Error::param("min_jaccard", format!("{min_jaccard} not in [0, 1]")));
    }
    for &m in pruned.nodes.keys() {
        db.entry(m)?;
    }
    let mut edges = BTreeMap::new();
    for (&(u, v), &co) in &pruned.edges {
        if co == 0 {
            continue;
        }
        // co-occurrence counts are the intersection sizes
        let union = db.frequency(u)? + db.frequency(v)? - co;
        let j = co as f64 / union as f64;
        if j >= min_jaccard {
            edges.insert((u, v), j);
        }
    }
    Ok(SimGraph {
        nodes: pruned.nodes.keys().copied().collect(),
        edges,
    })
}

/// Machine-readable summary of the frequency classification and pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub jenks: JenksClassification,
    pub prune: PruneReport,
    pub sim_nodes: usize,
    pub sim_edges: usize,
}
