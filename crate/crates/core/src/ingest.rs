//! Prescription ingestion: JSON Lines parsing, normalization into a
//! [`TransactionDB`], and seeded subsampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DB_FORMAT: &str = "recomed-db/1";

/// Dense medicine identifier, contiguous from 0 within one catalog.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct MedId(pub u32);

impl MedId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for MedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub name: String,
    pub generic_code: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrescriptionRecord {
    pub rx_id: String,
    pub pharmacy: String,
    pub location: String,
    pub items: Vec<RawItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines_read: usize,
    pub records_ok: usize,
    pub records_rejected: usize,
    pub rejection_reasons: Vec<Rejection>,
}

/// Trim, collapse internal whitespace, uppercase.
pub fn normalize_name(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

/// Parses newline-delimited prescription records. Blank lines are skipped and
/// not counted; every other line is either a record or a rejection.
pub fn parse_prescriptions<R: BufRead>(
    reader: R,
) -> Result<(Vec<RawPrescriptionRecord>, IngestReport)> {
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        match parse_line(&line) {
            Ok(rec) => {
                records.push(rec);
                report.records_ok += 1;
            }
            Err(reason) => {
                report.records_rejected += 1;
                report.rejection_reasons.push(Rejection {
                    line: idx + 1,
                    reason,
                });
            }
        }
    }
    Ok((records, report))
}

fn parse_line(line: &str) -> std::result::Result<RawPrescriptionRecord, String> {
    let rec: RawPrescriptionRecord = serde_json::from_str(line).map_err(|e| {
        if e.is_data() {
            format!("schema: {e}")
        } else {
            "parse".to_string()
        }
    })?;
    if rec.rx_id.trim().is_empty() {
        return Err("empty rx_id".into());
    }
    if rec.items.is_empty() {
        return Err("empty prescription".into());
    }
    for item in &rec.items {
        if normalize_name(&item.name).is_empty() {
            return Err("empty medicine name".into());
        }
        if !(item.quantity >= 0.0) {
            return Err("negative quantity".into());
        }
    }
    Ok(rec)
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[RawPrescriptionRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicineCatalogEntry {
    pub med_id: MedId,
    pub name: String,
    pub normalized_name: String,
    pub generic_code: String,
    pub frequency: u64,
}

/// Deduplicated prescriptions over a dense medicine catalog. Immutable once
/// built; transactions are sorted, duplicate-free and non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionDB {
    transactions: Vec<Vec<MedId>>,
    catalog: Vec<MedicineCatalogEntry>,
}

#[derive(Serialize, Deserialize)]
struct DbDocument {
    format: String,
    catalog: Vec<MedicineCatalogEntry>,
    transactions: Vec<Vec<MedId>>,
}

impl Serialize for TransactionDB {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            catalog: &'a [MedicineCatalogEntry],
            transactions: &'a [Vec<MedId>],
        }
        Doc {
            format: DB_FORMAT,
            catalog: &self.catalog,
            transactions: &self.transactions,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransactionDB {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = DbDocument::deserialize(d)?;
        TransactionDB::from_document(doc).map_err(serde::de::Error::custom)
    }
}

impl TransactionDB {
    fn from_document(doc: DbDocument) -> Result<Self> {
        if doc.format != DB_FORMAT {
            return Err(Error::Format {
                expected: DB_FORMAT,
                found: doc.format,
            });
        }
        let db = TransactionDB {
            transactions: doc.transactions,
            catalog: doc.catalog,
        };
        db.validate()?;
        Ok(db)
    }

    fn validate(&self) -> Result<()> {
        if self.transactions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut keys = BTreeSet::new();
        for (i, entry) in self.catalog.iter().enumerate() {
            if entry.med_id.index() != i {
                return Err(Error::Corrupt(format!("med_id {} at position {i}", entry.med_id)));
            }
            if !keys.insert((&entry.normalized_name, &entry.generic_code)) {
                return Err(Error::Corrupt(format!("duplicate medicine key at {}", entry.med_id)));
            }
        }
        let mut freq = vec![0u64; self.catalog.len()];
        for t in &self.transactions {
            if t.is_empty() {
                return Err(Error::Corrupt("empty transaction".into()));
            }
            if t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Corrupt("transaction not a sorted set".into()));
            }
            for m in t {
                *freq
                    .get_mut(m.index())
                    .ok_or(Error::UnknownMedicine(*m))? += 1;
            }
        }
        for (entry, f) in self.catalog.iter().zip(freq) {
            if entry.frequency != f || f == 0 {
                return Err(Error::Corrupt(format!(
                    "frequency of {} is {} but recount gives {f}",
                    entry.med_id, entry.frequency
                )));
            }
        }
        Ok(())
    }

    /// Number of transactions.
    pub fn n(&self) -> usize {
        self.transactions.len()
    }

    pub fn transactions(&self) -> &[Vec<MedId>] {
        &self.transactions
    }

    pub fn catalog(&self) -> &[MedicineCatalogEntry] {
        &self.catalog
    }

    pub fn entry(&self, id: MedId) -> Result<&MedicineCatalogEntry> {
        self.catalog.get(id.index()).ok_or(Error::UnknownMedicine(id))
    }

    pub fn contains(&self, id: MedId) -> bool {
        id.index() < self.catalog.len()
    }

    pub fn frequency(&self, id: MedId) -> Result<u64> {
        Ok(self.entry(id)?.frequency)
    }

    /// Looks up a medicine by its identity key. `name` is normalized first.
    pub fn lookup(&self, name: &str, generic_code: &str) -> Option<MedId> {
        let key = (normalize_name(name), generic_code.trim().to_string());
        self.catalog
            .binary_search_by(|e| {
                (e.normalized_name.as_str(), e.generic_code.as_str())
                    .cmp(&(key.0.as_str(), key.1.as_str()))
            })
            .ok()
            .map(|i| self.catalog[i].med_id)
    }

    /// All catalog entries sharing a normalized name (one per generic code).
    pub fn ids_by_name(&self, name: &str) -> Vec<MedId> {
        let key = normalize_name(name);
        self.catalog
            .iter()
            .filter(|e| e.normalized_name == key)
            .map(|e| e.med_id)
            .collect()
    }

    /// Transaction indices containing each medicine.
    pub fn postings(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.catalog.len()];
        for (t, items) in self.transactions.iter().enumerate() {
            for m in items {
                out[m.index()].push(t as u32);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DbDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    /// SHA-256 over the canonical JSON document.
    pub fn fingerprint(&self) -> String {
        crate::fingerprint(self.to_json().expect("db serializes").as_bytes())
    }

    /// Reconstructs one record per transaction, using catalog names.
    pub fn to_records(&self) -> Vec<RawPrescriptionRecord> {
        self.transactions
            .iter()
            .enumerate()
            .map(|(i, t)| RawPrescriptionRecord {
                rx_id: format!("rx{i:06}"),
                pharmacy: String::new(),
                location: String::new(),
                items: t
                    .iter()
                    .map(|m| {
                        let e = &self.catalog[m.index()];
                        RawItem {
                            name: e.name.clone(),
                            generic_code: e.generic_code.clone(),
                            quantity: 1.0,
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    /// Builds a db from transactions over an existing catalog, dropping
    /// medicines that no longer occur and renumbering the rest in catalog
    /// order. Empty transactions are removed.
    fn restrict(catalog: &[MedicineCatalogEntry], transactions: Vec<Vec<MedId>>) -> Result<Self> {
        let transactions: Vec<Vec<MedId>> =
            transactions.into_iter().filter(|t| !t.is_empty()).collect();
        if transactions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut freq = vec![0u64; catalog.len()];
        for t in &transactions {
            for m in t {
                freq[m.index()] += 1;
            }
        }
        let mut remap = vec![None; catalog.len()];
        let mut new_catalog = Vec::new();
        for (old, entry) in catalog.iter().enumerate() {
            if freq[old] > 0 {
                let id = MedId(new_catalog.len() as u32);
                remap[old] = Some(id);
                new_catalog.push(MedicineCatalogEntry {
                    med_id: id,
                    frequency: freq[old],
                    ..entry.clone()
                });
            }
        }
        let transactions = transactions
            .into_iter()
            .map(|t| t.into_iter().map(|m| remap[m.index()].unwrap()).collect())
            .collect();
        Ok(TransactionDB {
            transactions,
            catalog: new_catalog,
        })
    }

    /// Removes the given medicines from every transaction (dropping
    /// transactions left empty) and renumbers the catalog.
    pub fn without_medicines(&self, remove: &BTreeSet<MedId>) -> Result<Self> {
        let transactions = self
            .transactions
            .iter()
            .map(|t| t.iter().copied().filter(|m| !remove.contains(m)).collect())
            .collect();
        Self::restrict(&self.catalog, transactions)
    }
}

/// Normalizes records into a transaction database. Medicine ids follow the
/// sorted order of `(normalized_name, generic_code)`, so the result does not
/// depend on record order except for transaction order.
pub fn build_transaction_db(records: &[RawPrescriptionRecord]) -> Result<TransactionDB> {
    // key -> lexicographically smallest original spelling
    let mut names: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut keyed: Vec<Vec<(String, String)>> = Vec::with_capacity(records.len());
    for rec in records {
        let mut items = Vec::with_capacity(rec.items.len());
        for item in &rec.items {
            let key = (normalize_name(&item.name), item.generic_code.trim().to_string());
            if key.0.is_empty() {
                continue;
            }
            let original = item.name.trim().to_string();
            names
                .entry(key.clone())
                .and_modify(|n| {
                    if original < *n {
                        *n = original.clone();
                    }
                })
                .or_insert(original);
            items.push(key);
        }
        if !items.is_empty() {
            keyed.push(items);
        }
    }
    if keyed.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let ids: BTreeMap<&(String, String), MedId> = names
        .keys()
        .enumerate()
        .map(|(i, k)| (k, MedId(i as u32)))
        .collect();
    let transactions: Vec<Vec<MedId>> = keyed
        .iter()
        .map(|items| {
            let set: BTreeSet<MedId> = items.iter().map(|k| ids[k]).collect();
            set.into_iter().collect()
        })
        .collect();
    let mut freq = vec![0u64; names.len()];
    for t in &transactions {
        for m in t {
            freq[m.index()] += 1;
        }
    }
    let catalog = names
        .iter()
        .enumerate()
        .map(|(i, ((norm, code), name))| MedicineCatalogEntry {
            med_id: MedId(i as u32),
            name: name.clone(),
            normalized_name: norm.clone(),
            generic_code: code.clone(),
            frequency: freq[i],
        })
        .collect();
    Ok(TransactionDB {
        transactions,
        catalog,
    })
}

/// Uniform sample of `n` transactions without replacement. Sampled
/// transactions keep their source order; the catalog is restricted to the
/// medicines that still occur and renumbered.
pub fn sample_transactions(db: &TransactionDB, n: usize, seed: u64) -> Result<TransactionDB> {
    if n == 0 || n > db.n() {
        return Err(Error::param(
            "n",
            format!("sample size {n} must be in 1..={}", db.n()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, db.n(), n).into_vec();
    picked.sort_unstable();
    let transactions = picked
        .into_iter()
        .map(|i| db.transactions[i].clone())
        .collect();
    TransactionDB::restrict(&db.catalog, transactions)
}
