use std::collections::BTreeSet;

use log::info;

use super::{ClusterModel, EngineConfig};
use crate::atc::{match_medicine, AtcIndex};
use crate::cluster::{dbscan_outliers, louvain_traced};
use crate::error::{Error, Result};
use crate::graph::{
    build_cooccurrence_graph, jenks_breaks, prune_graph, rebuild_jaccard_graph,
    select_stop_medicines, StopList, StopOverrides,
};
use crate::ingest::{MedId, TransactionDB};
use crate::rulemine::{derive_rules, frequent_itemsets, RuleParams, RuleSet};

fn resolve(db: &TransactionDB, names: &[String]) -> Result<BTreeSet<MedId>> {
    let mut out = BTreeSet::new();
    let mut missing = Vec::new();
    for n in names {
        let ids = db.ids_by_name(n);
        if ids.is_empty() {
            missing.push(n.clone());
        }
        out.extend(ids);
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::UnknownMedicines(missing))
    }
}

/// Runs the full pipeline with every stop list auto-approved.
pub fn build_model(db: &TransactionDB, atc: &AtcIndex, cfg: &EngineConfig) -> Result<(ClusterModel, RuleSet)> {
    build_model_with_approval(db, atc, cfg, |_| true)
}

/// Apriori → co-occurrence graph → Jenks → stop-list pruning → Jaccard
/// rebuild → ATC matching → DBSCAN → Louvain.
///
/// `approve` sees the proposed stop list before pruning; returning false
/// aborts the build.
pub fn build_model_with_approval(
    db: &TransactionDB,
    atc: &AtcIndex,
    cfg: &EngineConfig,
    mut approve: impl FnMut(&StopList) -> bool,
) -> Result<(ClusterModel, RuleSet)> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;

    let itemsets = frequent_itemsets(db, cfg.min_support, Some(cfg.max_len))
        .map_err(|e| e.in_stage("apriori"))?;
    let rules = derive_rules(
        &itemsets,
        db,
        RuleParams {
            min_support: cfg.min_support,
            min_confidence: cfg.min_confidence,
        },
    )
    .map_err(|e| e.in_stage("rules"))?;
    info!("mined {} itemsets, {} rules", itemsets.len(), rules.rules.len());

    let graph = build_cooccurrence_graph(db);
    let freqs: Vec<u64> = graph.nodes.values().copied().collect();
    let distinct = freqs.iter().collect::<BTreeSet<_>>().len();
    let jenks = jenks_breaks(&freqs, cfg.jenks_k.min(distinct)).map_err(|e| e.in_stage("jenks"))?;

    let overrides = StopOverrides {
        forced_in: resolve(db, &cfg.forced_stop).map_err(|e| e.in_stage("stoplist"))?,
        forced_out: resolve(db, &cfg.forced_keep).map_err(|e| e.in_stage("stoplist"))?,
    };
    let stoplist = select_stop_medicines(&graph, &jenks, cfg.stop_class_count, &overrides)
        .map_err(|e| e.in_stage("stoplist"))?;
    if !approve(&stoplist) {
        return Err(Error::param("stoplist", "rejected by reviewer").in_stage("stoplist"));
    }
    let (pruned, prune) = prune_graph(&graph, &stoplist).map_err(|e| e.in_stage("prune"))?;
    info!("pruned {} stop medicines: {} -> {} edges", prune.removed.len(), prune.edges_before, prune.edges_after);
    if pruned.nodes.is_empty() {
        return Err(Error::Degenerate("no medicines left after pruning".into()));
    }

    let sim = rebuild_jaccard_graph(db, &pruned, cfg.min_jaccard).map_err(|e| e.in_stage("jaccard"))?;
    let annotations = db.catalog().iter().map(|e| match_medicine(e, atc)).collect();
    let outliers = dbscan_outliers(&sim, cfg.eps, cfg.min_pts).map_err(|e| e.in_stage("dbscan"))?;
    if outliers.med_ids.len() == sim.nodes.len() {
        return Err(Error::Degenerate("every medicine is an outlier".into()));
    }
    let trace = louvain_traced(&sim, &outliers, cfg.resolution, cfg.seed).map_err(|e| e.in_stage("louvain"))?;
    info!(
        "{} outliers, {} communities, modularity {:.4}",
        outliers.med_ids.len(),
        trace.partition.len(),
        trace.modularity
    );

    let model = ClusterModel {
        config: cfg.clone(),
        db_fingerprint: rules.db_fingerprint.clone(),
        n_transactions: db.n(),
        catalog: db.catalog().to_vec(),
        jenks,
        stoplist,
        prune,
        graph: sim,
        outliers,
        partition: trace.partition,
        modularity: trace.modularity,
        annotations,
        ruleset_ref: rules.fingerprint(),
        built_at: None,
    };
    Ok((model, rules))
}
