//! Synthetic prescription corpora with planted ground truth.
//!
//! Each prescription picks one group uniformly, draws a uniform number of its
//! medicines, then adds every stop medicine with probability `p_stop` and
//! every noise medicine with probability `p_noise`. Each group gets its own
//! ATC anatomical letter so cluster purity has a known answer.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atc::ANATOMICAL_GROUPS;
use crate::error::{Error, Result};
use crate::ingest::{
    build_transaction_db, normalize_name, MedId, RawItem, RawPrescriptionRecord, TransactionDB,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_groups: usize,
    pub meds_per_group: usize,
    pub n_stop: usize,
    pub n_noise_meds: usize,
    pub n_prescriptions: usize,
    pub p_stop: f64,
    pub p_noise: f64,
    /// Inclusive range of group medicines drawn per prescription.
    pub items_min: usize,
    pub items_max: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_groups: 6,
            meds_per_group: 10,
            n_stop: 3,
            n_noise_meds: 6,
            n_prescriptions: 10_000,
            p_stop: 0.5,
            p_noise: 0.01,
            items_min: 5,
            items_max: 8,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_groups", self.n_groups),
            ("meds_per_group", self.meds_per_group),
            ("n_prescriptions", self.n_prescriptions),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        for (name, p) in [("p_stop", self.p_stop), ("p_noise", self.p_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Group medicines per prescription, clamped to `1..=meds_per_group`.
    fn item_range(&self) -> (usize, usize) {
        let lo = self.items_min.max(1).min(self.meds_per_group);
        let hi = self.items_max.max(lo).min(self.meds_per_group);
        if (lo, hi) != (self.items_min, self.items_max) {
            warn!(
                "items per prescription clamped from {}..={} to {lo}..={hi}",
                self.items_min, self.items_max
            );
        }
        (lo, hi)
    }
}

/// Planted structure, keyed by normalized medicine name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub group_of: BTreeMap<String, usize>,
    pub stop_set: BTreeSet<String>,
    pub noise_set: BTreeSet<String>,
}

impl GroundTruth {
    /// Group labels of the catalog medicines that belong to a planted group.
    pub fn group_labels(&self, db_names: impl IntoIterator<Item = (MedId, String)>) -> BTreeMap<MedId, usize> {
        db_names
            .into_iter()
            .filter_map(|(m, n)| self.group_of.get(&normalize_name(&n)).map(|&g| (m, g)))
            .collect()
    }

    pub fn stop_ids(&self, db: &TransactionDB) -> BTreeSet<MedId> {
        db.catalog()
            .iter()
            .filter(|e| self.stop_set.contains(&e.normalized_name))
            .map(|e| e.med_id)
            .collect()
    }
}

#[derive(Debug, Clone)]
struct SynthMed {
    name: String,
    generic: String,
    code: String,
}

fn group_letter(g: usize) -> char {
    const ORDER: [char; 14] = ['C', 'S', 'N', 'A', 'B', 'J', 'L', 'M', 'R', 'D', 'G', 'H', 'P', 'V'];
    debug_assert!(ORDER.iter().all(|c| ANATOMICAL_GROUPS.contains(c)));
    ORDER[g % ORDER.len()]
}

struct Catalog {
    groups: Vec<Vec<SynthMed>>,
    stop: Vec<SynthMed>,
    noise: Vec<SynthMed>,
}

fn catalog(cfg: &SynthConfig) -> Catalog {
    let groups = (0..cfg.n_groups)
        .map(|g| {
            (0..cfg.meds_per_group)
                .map(|m| SynthMed {
                    name: format!("SYN G{g:02} MED{m:02} TAB"),
                    generic: format!("G{g:02}M{m:02}"),
                    code: format!(
                        "{}{:02}A{}{:02}",
                        group_letter(g),
                        1 + (g / 14) % 99,
                        (b'A' + (m / 99 % 26) as u8) as char,
                        1 + m % 99
                    ),
                })
                .collect()
        })
        .collect();
    let stop = (0..cfg.n_stop)
        .map(|s| SynthMed {
            name: format!("SYN STOP{s:02} INJ"),
            generic: format!("STOP{s:02}"),
            code: format!("V07AA{:02}", 1 + s % 99),
        })
        .collect();
    let noise = (0..cfg.n_noise_meds)
        .map(|i| SynthMed {
            name: format!("SYN NOISE{i:02} CAP"),
            generic: format!("NOISE{i:02}"),
            code: format!("V07AB{:02}", 1 + i % 99),
        })
        .collect();
    Catalog { groups, stop, noise }
}

fn item(m: &SynthMed) -> RawItem {
    RawItem {
        name: m.name.clone(),
        generic_code: m.generic.clone(),
        quantity: 1.0,
    }
}

/// Raw records plus ground truth; deterministic per seed.
pub fn generate_records(cfg: &SynthConfig) -> Result<(Vec<RawPrescriptionRecord>, GroundTruth)> {
    cfg.validate()?;
    let cat = catalog(cfg);
    let (lo, hi) = cfg.item_range();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_prescriptions);
    for i in 0..cfg.n_prescriptions {
        let g = rng.gen_range(0..cfg.n_groups);
        let size = rng.gen_range(lo..=hi);
        let mut picks = rand::seq::index::sample(&mut rng, cfg.meds_per_group, size).into_vec();
        picks.sort_unstable();
        let mut items: Vec<RawItem> = picks.iter().map(|&m| item(&cat.groups[g][m])).collect();
        for s in &cat.stop {
            if rng.gen_bool(cfg.p_stop) {
                items.push(item(s));
            }
        }
        for n in &cat.noise {
            if rng.gen_bool(cfg.p_noise) {
                items.push(item(n));
            }
        }
        records.push(RawPrescriptionRecord {
            rx_id: format!("syn{i:06}"),
            pharmacy: format!("pharmacy-{:02}", i % 40),
            location: "synthetic".into(),
            items,
        });
    }
    let truth = GroundTruth {
        group_of: cat
            .groups
            .iter()
            .enumerate()
            .flat_map(|(g, ms)| ms.iter().map(move |m| (normalize_name(&m.name), g)))
            .collect(),
        stop_set: cat.stop.iter().map(|m| normalize_name(&m.name)).collect(),
        noise_set: cat.noise.iter().map(|m| normalize_name(&m.name)).collect(),
    };
    Ok((records, truth))
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(TransactionDB, GroundTruth)> {
    let (records, truth) = generate_records(cfg)?;
    Ok((build_transaction_db(&records)?, truth))
}

/// ATC rows (`name\tcode\tdescription`) for every synthetic medicine.
pub fn synthetic_atc_table(cfg: &SynthConfig) -> String {
    let cat = catalog(cfg);
    let mut out = String::new();
    for (g, ms) in cat.groups.iter().enumerate() {
        for m in ms {
            out.push_str(&format!("{}\t{}\tsynthetic group {g}\n", m.name, m.code));
        }
    }
    for m in &cat.stop {
        out.push_str(&format!("{}\t{}\tsynthetic stop medicine\n", m.name, m.code));
    }
    for m in &cat.noise {
        out.push_str(&format!("{}\t{}\tsynthetic noise medicine\n", m.name, m.code));
    }
    out
}
