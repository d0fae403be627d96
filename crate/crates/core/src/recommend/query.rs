use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClusterModel, ScoreWeights};
use crate::atc::{atc_level, AtcAnnotation};
use crate::error::{Error, Result};
use crate::ingest::MedId;
use crate::rulemine::{RuleSet, Strength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    None,
    Discouraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub rule_conf: f64,
    pub max_jaccard: f64,
    pub same_cluster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub med_id: MedId,
    pub name: String,
    pub score: f64,
    pub components: ScoreComponents,
    pub atc: AtcAnnotation,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendations {
    pub recommendations: Vec<Recommendation>,
    /// Query ids absent from the model catalog.
    pub unknown: Vec<MedId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredRule {
    pub rule_id: usize,
    pub antecedent: Vec<MedId>,
    pub consequent: Vec<MedId>,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub strength: Strength,
    /// Whether this rule marks the candidate as discouraged.
    pub discourages: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query: Vec<MedId>,
    pub candidate: MedId,
    pub fired_rules: Vec<FiredRule>,
    pub shared_cluster_id: Option<usize>,
    /// Similarity-graph weight between each query medicine and the
    /// candidate (0 when they share no edge).
    pub jaccard_details: Vec<(MedId, f64)>,
    /// Distinct ATC level-1 letters of the candidate.
    pub atc_classes: Vec<String>,
    pub weights: ScoreWeights,
    pub score: f64,
    pub flag: Flag,
}

impl Explanation {
    /// Recomputes the score from the evidence alone.
    pub fn recomputed_score(&self) -> f64 {
        let rule_conf = self
            .fired_rules
            .iter()
            .filter(|r| r.strength == Strength::Strong)
            .map(|r| r.confidence)
            .fold(0.0, f64::max);
        let max_jaccard = self.jaccard_details.iter().map(|d| d.1).fold(0.0, f64::max);
        self.weights
            .combine(rule_conf, max_jaccard, self.shared_cluster_id.is_some())
    }
}

#[derive(Default)]
struct Evidence {
    strong: Vec<usize>,
    weak: Vec<usize>,
    discouraged: bool,
    shared_cluster: Option<usize>,
}

struct Query {
    known: Vec<MedId>,
    unknown: Vec<MedId>,
}

fn split_query(model: &ClusterModel, query: &BTreeSet<MedId>) -> Result<Query> {
    let (known, unknown): (Vec<MedId>, Vec<MedId>) =
        query.iter().partition(|m| model.entry(**m).is_some());
    if known.is_empty() {
        return Err(Error::UnknownMedicines(
            unknown.iter().map(|m| m.to_string()).collect(),
        ));
    }
    Ok(Query { known, unknown })
}

/// Candidate pool with the evidence that put each candidate there.
fn pool(model: &ClusterModel, rules: &RuleSet, query: &[MedId]) -> BTreeMap<MedId, Evidence> {
    let eligible = |m: MedId| {
        query.binary_search(&m).is_err() && !model.is_stop(m) && !model.is_outlier(m)
    };
    let mut pool: BTreeMap<MedId, Evidence> = BTreeMap::new();

    let communities: BTreeSet<usize> = query
        .iter()
        .filter_map(|&m| model.partition.community_of(m))
        .collect();
    for &c in &communities {
        for &m in &model.partition.communities()[c] {
            if eligible(m) {
                pool.entry(m).or_default().shared_cluster = Some(c);
            }
        }
    }
    for (id, rule) in rules.rules.iter().enumerate() {
        if rule.strength != Strength::Strong || !rule.fires_for(query) {
            continue;
        }
        for &m in &rule.consequent {
            if eligible(m) {
                pool.entry(m).or_default().strong.push(id);
            }
        }
    }
    let max_lift = model.config.discourage_max_lift;
    for (id, rule) in rules.rules.iter().enumerate() {
        if rule.strength != Strength::Weak || !rule.fires_for(query) {
            continue;
        }
        for m in &rule.consequent {
            if let Some(ev) = pool.get_mut(m) {
                ev.weak.push(id);
                if max_lift.is_none_or(|l| rule.lift < l) {
                    ev.discouraged = true;
                }
            }
        }
    }
    pool
}

fn jaccard_details(model: &ClusterModel, query: &[MedId], candidate: MedId) -> Vec<(MedId, f64)> {
    query
        .iter()
        .map(|&q| (q, model.graph.weight(q, candidate).unwrap_or(0.0)))
        .collect()
}

fn unmatched(m: MedId) -> AtcAnnotation {
    AtcAnnotation {
        med_id: m,
        codes: Vec::new(),
        matched: false,
    }
}

/// Ranked co-prescription candidates for the medicines already on a
/// prescription.
///
/// The pool is the union of the query medicines' communities and the
/// consequents of strong rules whose antecedent lies inside the query, minus
/// the query itself, stop medicines and outliers. Unflagged candidates come
/// first by descending score, then discouraged ones; ties break on med_id.
pub fn recommend(
    model: &ClusterModel,
    rules: &RuleSet,
    query: &BTreeSet<MedId>,
    k: usize,
) -> Result<Recommendations> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let q = split_query(model, query)?;
    let weights = model.config.weights;
    let mut out: Vec<Recommendation> = pool(model, rules, &q.known)
        .into_iter()
        .map(|(m, ev)| {
            let rule_conf = ev
                .strong
                .iter()
                .map(|&i| rules.rules[i].confidence)
                .fold(0.0, f64::max);
            let max_jaccard = jaccard_details(model, &q.known, m)
                .iter()
                .map(|d| d.1)
                .fold(0.0, f64::max);
            let same_cluster = ev.shared_cluster.is_some();
            Recommendation {
                med_id: m,
                name: model.name(m).to_string(),
                score: weights.combine(rule_conf, max_jaccard, same_cluster),
                components: ScoreComponents {
                    rule_conf,
                    max_jaccard,
                    same_cluster,
                },
                atc: model.annotation(m).cloned().unwrap_or_else(|| unmatched(m)),
                flag: if ev.discouraged { Flag::Discouraged } else { Flag::None },
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.flag == Flag::Discouraged)
            .cmp(&(b.flag == Flag::Discouraged))
            .then(b.score.total_cmp(&a.score))
            .then(a.med_id.cmp(&b.med_id))
    });
    out.truncate(k);
    Ok(Recommendations {
        recommendations: out,
        unknown: q.unknown,
    })
}

/// Evidence behind one candidate of [`recommend`] for the same query.
pub fn explain(
    model: &ClusterModel,
    rules: &RuleSet,
    query: &BTreeSet<MedId>,
    candidate: MedId,
) -> Result<Explanation> {
    let q = split_query(model, query)?;
    let mut pool = pool(model, rules, &q.known);
    let ev = pool.remove(&candidate).ok_or(Error::NotInPool(candidate))?;
    let mut ids: Vec<usize> = ev.strong.iter().chain(&ev.weak).copied().collect();
    ids.sort_unstable();
    let max_lift = model.config.discourage_max_lift;
    let fired_rules = ids
        .into_iter()
        .map(|i| {
            let r = &rules.rules[i];
            FiredRule {
                rule_id: i,
                antecedent: r.antecedent.clone(),
                consequent: r.consequent.clone(),
                support: r.support,
                confidence: r.confidence,
                lift: r.lift,
                strength: r.strength,
                discourages: r.strength == Strength::Weak && max_lift.is_none_or(|l| r.lift < l),
            }
        })
        .collect();
    let atc_classes = model
        .annotation(candidate)
        .map(|a| {
            a.codes
                .iter()
                .map(|c| atc_level(c, 1).unwrap().to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .unwrap_or_default();
    let mut exp = Explanation {
        query: q.known.clone(),
        candidate,
        fired_rules,
        shared_cluster_id: ev.shared_cluster,
        jaccard_details: jaccard_details(model, &q.known, candidate),
        atc_classes,
        weights: model.config.weights,
        score: 0.0,
        flag: if ev.discouraged { Flag::Discouraged } else { Flag::None },
    };
    exp.score = exp.recomputed_score();
    Ok(exp)
}
