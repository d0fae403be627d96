//! Apriori frequent-itemset mining and association rules.
//!
//! Support counting uses one transaction bitmap per frequent itemset; a
//! candidate's bitmap is the AND of the two parents it was joined from.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{MedId, TransactionDB};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itemset {
    pub items: Vec<MedId>,
    pub count: u64,
    pub support: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Vec<MedId>,
    pub consequent: Vec<MedId>,
    /// Transactions containing antecedent ∪ consequent.
    pub count: u64,
    pub antecedent_count: u64,
    pub consequent_count: u64,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub strength: Strength,
}

impl AssociationRule {
    pub fn fires_for(&self, query: &[MedId]) -> bool {
        self.antecedent.iter().all(|m| query.binary_search(m).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub min_support: f64,
    pub min_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<AssociationRule>,
    pub params: RuleParams,
    pub db_fingerprint: String,
}

impl RuleSet {
    pub fn fingerprint(&self) -> String {
        crate::fingerprint(&serde_json::to_vec(self).expect("rules serialize"))
    }

    /// Writes the rule table in the published column layout.
    pub fn write_csv<W: Write>(&self, db_names: &dyn Fn(MedId) -> String, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["antecedents", "consequents", "support", "confidence", "lift", "strength"])?;
        let list = |items: &[MedId]| {
            items
                .iter()
                .enumerate()
                .map(|(i, m)| format!("{}-{}", i + 1, db_names(*m)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        for r in &self.rules {
            w.write_record([
                list(&r.antecedent),
                list(&r.consequent),
                format!("{:.4}", r.support),
                format!("{:.4}", r.confidence),
                format!("{:.2}", r.lift),
                match r.strength {
                    Strength::Strong => "strong".to_string(),
                    Strength::Weak => "weak".to_string(),
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest count `c` with `c / n >= min_support`.
pub(crate) fn min_count(n: usize, min_support: f64) -> u64 {
    let n_f = n as f64;
    let mut c = (min_support * n_f).ceil().max(0.0) as u64;
    while c > 0 && (c - 1) as f64 / n_f >= min_support {
        c -= 1;
    }
    while (c as f64) / n_f < min_support {
        c += 1;
    }
    c
}

fn check_support(min_support: f64) -> Result<()> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(Error::param("min_support", format!("{min_support} not in (0, 1]")));
    }
    Ok(())
}

struct Level {
    items: Vec<Vec<MedId>>,
    bits: Vec<Vec<u64>>,
    counts: Vec<u64>,
}

fn popcount(bits: &[u64]) -> u64 {
    bits.iter().map(|w| w.count_ones() as u64).sum()
}

/// Levelwise Apriori. Output is sorted by (length, items) and contains exactly
/// the itemsets whose support reaches `min_support`.
pub fn frequent_itemsets(
    db: &TransactionDB,
    min_support: f64,
    max_len: Option<usize>,
) -> Result<Vec<Itemset>> {
    check_support(min_support)?;
    if max_len == Some(0) {
        return Err(Error::param("max_len", "must be at least 1"));
    }
    let n = db.n();
    let threshold = min_count(n, min_support);
    let words = n.div_ceil(64);

    let mut level = Level {
        items: Vec::new(),
        bits: Vec::new(),
        counts: Vec::new(),
    };
    for (m, tids) in db.postings().into_iter().enumerate() {
        if (tids.len() as u64) < threshold {
            continue;
        }
        let mut bits = vec![0u64; words];
        for t in &tids {
            bits[*t as usize / 64] |= 1 << (t % 64);
        }
        level.items.push(vec![MedId(m as u32)]);
        level.counts.push(tids.len() as u64);
        level.bits.push(bits);
    }

    let mut out = Vec::new();
    let mut len = 1;
    loop {
        for (items, &count) in level.items.iter().zip(&level.counts) {
            out.push(Itemset {
                items: items.clone(),
                count,
                support: count as f64 / n as f64,
            });
        }
        if max_len.is_some_and(|m| len >= m) || level.items.len() < 2 {
            break;
        }
        let known: HashSet<&[MedId]> = level.items.iter().map(|v| v.as_slice()).collect();
        let mut next = Level {
            items: Vec::new(),
            bits: Vec::new(),
            counts: Vec::new(),
        };
        for i in 0..level.items.len() {
            let a = &level.items[i];
            let prefix = &a[..len - 1];
            for j in i + 1..level.items.len() {
                let b = &level.items[j];
                if &b[..len - 1] != prefix {
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[len - 1]);
                // downward closure: every (len)-subset must be frequent
                let closed = (0..cand.len() - 2).all(|skip| {
                    let sub: Vec<MedId> = cand
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != skip)
                        .map(|(_, m)| *m)
                        .collect();
                    known.contains(sub.as_slice())
                });
                if !closed {
                    continue;
                }
                let bits: Vec<u64> = level.bits[i]
                    .iter()
                    .zip(&level.bits[j])
                    .map(|(x, y)| x & y)
                    .collect();
                let count = popcount(&bits);
                if count >= threshold {
                    next.items.push(cand);
                    next.bits.push(bits);
                    next.counts.push(count);
                }
            }
        }
        if next.items.is_empty() {
            break;
        }
        level = next;
        len += 1;
    }
    Ok(out)
}

/// Strong iff both thresholds are met inclusively.
pub fn classify_rule(support: f64, confidence: f64, min_support: f64, min_confidence: f64) -> Strength {
    if support >= min_support && confidence >= min_confidence {
        Strength::Strong
    } else {
        Strength::Weak
    }
}

fn count_in_db(db: &TransactionDB, items: &[MedId]) -> u64 {
    db.transactions()
        .iter()
        .filter(|t| items.iter().all(|m| t.binary_search(m).is_ok()))
        .count() as u64
}

/// Emits every rule `A → I \ A` for each frequent itemset `I` of size ≥ 2 and
/// each non-empty proper subset `A`. Rules below `min_confidence` are kept
/// and marked weak.
pub fn derive_rules(
    itemsets: &[Itemset],
    db: &TransactionDB,
    params: RuleParams,
) -> Result<RuleSet> {
    check_support(params.min_support)?;
    if !(0.0..=1.0).contains(&params.min_confidence) {
        return Err(Error::param(
            "min_confidence",
            format!("{} not in [0, 1]", params.min_confidence),
        ));
    }
    let n = db.n() as u64;
    let mut counts: HashMap<&[MedId], u64> = HashMap::new();
    for set in itemsets {
        if let Some(m) = set.items.iter().find(|m| !db.contains(**m)) {
            return Err(Error::ForeignItemset(*m));
        }
        counts.insert(&set.items, set.count);
    }
    let lookup = |items: &[MedId]| -> u64 {
        counts
            .get(items)
            .copied()
            .unwrap_or_else(|| count_in_db(db, items))
    };

    let mut rules = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        let k = set.items.len();
        for mask in 1u32..(1 << k) - 1 {
            let (ante, cons): (Vec<_>, Vec<_>) = set
                .items
                .iter()
                .enumerate()
                .partition(|(i, _)| mask & (1 << i) != 0);
            let antecedent: Vec<MedId> = ante.into_iter().map(|(_, m)| *m).collect();
            let consequent: Vec<MedId> = cons.into_iter().map(|(_, m)| *m).collect();
            let a = lookup(&antecedent);
            let c = lookup(&consequent);
            let support = set.count as f64 / n as f64;
            let confidence = set.count as f64 / a as f64;
            let lift = (set.count as u128 * n as u128) as f64 / (a as u128 * c as u128) as f64;
            rules.push(AssociationRule {
                strength: classify_rule(support, confidence, params.min_support, params.min_confidence),
                antecedent,
                consequent,
                count: set.count,
                antecedent_count: a,
                consequent_count: c,
                support,
                confidence,
                lift,
            });
        }
    }
    rules.sort_by(|x, y| {
        (x.antecedent.len(), &x.antecedent, &x.consequent)
            .cmp(&(y.antecedent.len(), &y.antecedent, &y.consequent))
    });
    rules.dedup_by(|x, y| x.antecedent == y.antecedent && x.consequent == y.consequent);
    Ok(RuleSet {
        rules,
        params,
        db_fingerprint: db.fingerprint(),
    })
}
