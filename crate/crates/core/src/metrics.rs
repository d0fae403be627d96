//! Evaluation metrics: adjusted Rand index, ATC cluster purity and expert-tag
//! accuracy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::atc::{parse_code_list, AtcAnnotation, AtcCode};
use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::ingest::MedId;
use crate::recommend::ClusterModel;
use crate::synth::GroundTruth;

/// The 30-row expert-tagged sample of the hypertension class.
pub const EXPERT_SAMPLE_CSV: &str = include_str!("../fixtures/expert_tagged.csv");

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pair-counting adjusted Rand index of two labelings of the same elements.
/// Returns 1.0 when both labelings are trivial in the same way (fewer than
/// two elements, or the expected index equals its maximum).
pub fn adjusted_rand_index<K, A, B>(p: &BTreeMap<K, A>, q: &BTreeMap<K, B>) -> Result<f64>
where
    K: Ord + std::fmt::Debug,
    A: Ord,
    B: Ord,
{
    if p.len() != q.len() || p.keys().zip(q.keys()).any(|(a, b)| a != b) {
        let first = p
            .keys()
            .find(|k| !q.contains_key(*k))
            .or_else(|| q.keys().find(|k| !p.contains_key(*k)));
        return Err(Error::LabelMismatch(format!("{first:?}")));
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (a, b) in p.values().zip(q.values()) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let total = pairs(p.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Labels of a partition as a map, for [`adjusted_rand_index`].
pub fn partition_labels(p: &Partition) -> BTreeMap<MedId, usize> {
    p.assignment().clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPurity {
    pub community: usize,
    pub size: usize,
    pub matched: usize,
    /// Most common level prefix among matched members; ties go to the
    /// lexicographically smallest.
    pub modal_prefix: Option<String>,
    /// Absent when no member is matched.
    pub purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub level: usize,
    pub clusters: Vec<ClusterPurity>,
    /// Mean of defined purities weighted by matched member count.
    pub weighted_mean: Option<f64>,
}

/// Purity of every community of `partition` at ATC `level`.
///
/// A member counts toward its community's modal prefix if any of its codes
/// carries that prefix. Unmatched members are left out entirely.
pub fn partition_purity<'a>(
    partition: &Partition,
    annotation: impl Fn(MedId) -> Option<&'a AtcAnnotation>,
    level: usize,
) -> Result<PurityReport> {
    let mut clusters = Vec::with_capacity(partition.len());
    for (c, members) in partition.communities().iter().enumerate() {
        let mut prefix_sets: Vec<BTreeSet<&str>> = Vec::new();
        for &m in members {
            if let Some(a) = annotation(m).filter(|a| a.matched && !a.codes.is_empty()) {
                prefix_sets.push(a.prefixes(level)?);
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &prefix_sets {
            for p in s {
                *counts.entry(p).or_default() += 1;
            }
        }
        let modal = counts
            .iter()
            .fold(None::<(&str, usize)>, |best, (&p, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((p, n)),
            });
        let matched = prefix_sets.len();
        clusters.push(ClusterPurity {
            community: c,
            size: members.len(),
            matched,
            modal_prefix: modal.map(|(p, _)| p.to_string()),
            purity: modal.map(|(_, n)| n as f64 / matched as f64),
        });
    }
    let (num, den) = clusters
        .iter()
        .filter_map(|c| c.purity.map(|p| (p * c.matched as f64, c.matched)))
        .fold((0.0, 0usize), |(a, b), (x, y)| (a + x, b + y));
    Ok(PurityReport {
        level,
        weighted_mean: (den > 0).then(|| num / den as f64),
        clusters,
    })
}

pub fn atc_purity(model: &ClusterModel, level: usize) -> Result<PurityReport> {
    partition_purity(&model.partition, |m| model.annotation(m), level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRow {
    pub index: usize,
    pub med_id: u32,
    pub medicine: String,
    pub tag: u8,
    pub atc_codes: Vec<AtcCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSample {
    pub rows: Vec<TaggedRow>,
}

#[derive(Deserialize)]
struct TaggedCsvRow {
    #[serde(rename = "#")]
    index: usize,
    #[serde(rename = "Id")]
    id: u32,
    #[serde(rename = "Medicine")]
    medicine: String,
    #[serde(rename = "Tag")]
    tag: u8,
    #[serde(rename = "ATC Code")]
    atc: String,
}

impl TaggedSample {
    /// Parses a CSV with the columns `#, Id, Medicine, Tag, ATC Code`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for row in reader.deserialize::<TaggedCsvRow>() {
            let r = row?;
            if r.tag > 1 {
                return Err(Error::param("Tag", format!("row {}: {} is not 0 or 1", r.index, r.tag)));
            }
            rows.push(TaggedRow {
                index: r.index,
                med_id: r.id,
                medicine: r.medicine,
                tag: r.tag,
                atc_codes: parse_code_list(&r.atc)?,
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(TaggedSample { rows })
    }

    pub fn expert_sample() -> Self {
        Self::from_csv(EXPERT_SAMPLE_CSV).expect("embedded fixture parses")
    }
}

/// Fraction of rows tagged 1.
pub fn evaluate_tags(sample: &TaggedSample) -> Result<f64> {
    if sample.rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let ones = sample.rows.iter().filter(|r| r.tag == 1).count();
    Ok(ones as f64 / sample.rows.len() as f64)
}

/// Agreement of a built model with planted synthetic structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    /// ARI over planted-group medicines; unclustered ones count as singletons.
    pub ari: f64,
    pub group_medicines: usize,
    pub unclustered_group_medicines: usize,
    pub stop_expected: Vec<String>,
    pub stop_found: Vec<String>,
    pub stop_exact: bool,
    pub noise_flagged: usize,
    pub noise_total: usize,
    pub atc_purity_l1: Option<f64>,
}

pub fn truth_report(model: &ClusterModel, truth: &GroundTruth) -> Result<TruthReport> {
    let mut planted = BTreeMap::new();
    let mut found = BTreeMap::new();
    let mut unclustered = 0;
    for e in &model.catalog {
        if let Some(&g) = truth.group_of.get(&e.normalized_name) {
            planted.insert(e.med_id, g as i64);
            let label = match model.partition.community_of(e.med_id) {
                Some(c) => c as i64,
                None => {
                    unclustered += 1;
                    -1 - e.med_id.0 as i64
                }
            };
            found.insert(e.med_id, label);
        }
    }
    let names = |ids: &mut dyn Iterator<Item = &MedId>| -> Vec<String> {
        let mut v: Vec<String> = ids.filter_map(|m| model.entry(*m)).map(|e| e.normalized_name.clone()).collect();
        v.sort();
        v
    };
    let stop_found = names(&mut model.stoplist.med_ids.iter());
    let stop_expected: Vec<String> = truth.stop_set.iter().cloned().collect();
    let noise_flagged = model
        .outliers
        .med_ids
        .iter()
        .filter_map(|m| model.entry(*m))
        .filter(|e| truth.noise_set.contains(&e.normalized_name))
        .count();
    Ok(TruthReport {
        ari: adjusted_rand_index(&planted, &found)?,
        group_medicines: planted.len(),
        unclustered_group_medicines: unclustered,
        stop_exact: stop_found == stop_expected,
        stop_expected,
        stop_found,
        noise_flagged,
        noise_total: truth.noise_set.len(),
        atc_purity_l1: atc_purity(model, 1)?.weighted_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[usize]) -> BTreeMap<usize, usize> {
        xs.iter().copied().enumerate().collect()
    }

    fn annotation(m: u32, codes: &[&str]) -> AtcAnnotation {
        AtcAnnotation {
            med_id: MedId(m),
            codes: codes.iter().map(|c| c.parse().unwrap()).collect(),
            matched: !codes.is_empty(),
        }
    }

    #[test]
    fn ari_identical_and_permuted() {
        let a = labels(&[0, 0, 1, 1, 2]);
        let b = labels(&[5, 5, 3, 3, 9]);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ari_split_versus_single_cluster() {
        // pairs: index 2, sum_a 2, sum_b 6, total 6 -> expected 2, max 4
        let a = labels(&[0, 0, 1, 1]);
        let b = labels(&[0, 0, 0, 0]);
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn ari_mismatched_elements() {
        let a = labels(&[0, 1]);
        let b = labels(&[0, 1, 2]);
        assert!(matches!(adjusted_rand_index(&a, &b), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn purity_examples() {
        let ann = [
            annotation(0, &["C09CA01"]),
            annotation(1, &["L04AX01"]),
            annotation(2, &[]),
            annotation(3, &["S01EC01"]),
        ];
        let get = |m: MedId| ann.get(m.index());
        let p = Partition::from_assignment([(MedId(0), 0), (MedId(1), 0), (MedId(2), 0), (MedId(3), 1)]);
        let r = partition_purity(&p, get, 1).unwrap();
        assert_eq!(r.clusters[0].purity, Some(0.5));
        assert_eq!(r.clusters[0].modal_prefix.as_deref(), Some("C"));
        assert_eq!(r.clusters[0].matched, 2);
        assert_eq!(r.clusters[1].purity, Some(1.0));
        assert!((r.weighted_mean.unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let p = Partition::from_assignment([(MedId(2), 0)]);
        let r = partition_purity(&p, get, 1).unwrap();
        assert_eq!(r.clusters[0].purity, None);
        assert_eq!(r.weighted_mean, None);
    }

    #[test]
    fn expert_sample_fixture() {
        let s = TaggedSample::expert_sample();
        assert_eq!(s.rows.len(), 30);
        assert_eq!(s.rows[3].medicine, "azathioprine 50mg tab");
        assert_eq!(s.rows[3].tag, 0);
        assert_eq!(s.rows[6].atc_codes.len(), 2);
        assert!((evaluate_tags(&s).unwrap() - 29.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn tag_edge_cases() {
        let mut s = TaggedSample::expert_sample();
        s.rows.iter_mut().for_each(|r| r.tag = 1);
        assert_eq!(evaluate_tags(&s).unwrap(), 1.0);
        s.rows.iter_mut().for_each(|r| r.tag = 0);
        assert_eq!(evaluate_tags(&s).unwrap(), 0.0);
        s.rows.clear();
        assert!(matches!(evaluate_tags(&s), Err(Error::EmptySample)));
        assert!(TaggedSample::from_csv("#,Id,Medicine,Tag,ATC Code\n1,2,x,2,C09CA01\n").is_err());
        assert!(matches!(
            TaggedSample::from_csv("#,Id,Medicine,Tag,ATC Code\n"),
            Err(Error::EmptySample)
        ));
    }
}
