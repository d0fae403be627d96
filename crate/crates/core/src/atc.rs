//! ATC (Anatomical Therapeutic Chemical) codes: table loading, exact
//! peer-to-peer matching of catalog medicines, and level prefixes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize_name, MedId, MedicineCatalogEntry};

/// The 14 anatomical main groups.
pub const ANATOMICAL_GROUPS: [char; 14] =
    ['A', 'B', 'C', 'D', 'G', 'H', 'J', 'L', 'M', 'N', 'P', 'R', 'S', 'V'];

/// Reference table covering the published example medicines.
pub const ATC_FIXTURE_TSV: &str = include_str!("../fixtures/atc_fixture.tsv");

const LEVEL_LEN: [usize; 5] = [1, 3, 4, 5, 7];

/// A well-formed 7-character ATC code, e.g. `C09CA01`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AtcCode(String);

impl AtcCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn anatomical_group(&self) -> char {
        self.0.as_bytes()[0] as char
    }
}

impl FromStr for AtcCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.trim().to_uppercase();
        let b = code.as_bytes();
        let ok = b.len() == 7
            && ANATOMICAL_GROUPS.contains(&(b[0] as char))
            && b[1].is_ascii_digit()
            && b[2].is_ascii_digit()
            && b[3].is_ascii_uppercase()
            && b[4].is_ascii_uppercase()
            && b[5].is_ascii_digit()
            && b[6].is_ascii_digit();
        if ok {
            Ok(AtcCode(code))
        } else {
            Err(Error::InvalidAtcCode(s.to_string()))
        }
    }
}

impl TryFrom<String> for AtcCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AtcCode> for String {
    fn from(c: AtcCode) -> String {
        c.0
    }
}

impl fmt::Display for AtcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Prefix of `code` at hierarchy level 1..=5 (lengths 1, 3, 4, 5, 7).
pub fn atc_level(code: &AtcCode, level: usize) -> Result<&str> {
    if !(1..=5).contains(&level) {
        return Err(Error::param("level", format!("{level} not in 1..=5")));
    }
    Ok(&code.0[..LEVEL_LEN[level - 1]])
}

/// Splits a code cell that may list several codes ("S01BA04, S01CB02 S02BA03").
pub fn parse_code_list(cell: &str) -> Result<Vec<AtcCode>> {
    cell.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtcIndex {
    /// Normalized medicine key (name or generic code) to its codes.
    pub entries: BTreeMap<String, Vec<AtcCode>>,
    pub descriptions: BTreeMap<AtcCode, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtcLoadReport {
    pub rows_ok: usize,
    pub rejected: Vec<(usize, String)>,
}

impl AtcIndex {
    pub fn lookup(&self, key: &str) -> Option<&[AtcCode]> {
        self.entries.get(&normalize_name(key)).map(Vec::as_slice)
    }

    fn insert(&mut self, key: String, code: AtcCode, description: Option<String>) {
        let codes = self.entries.entry(key).or_default();
        if !codes.contains(&code) {
            codes.push(code.clone());
        }
        if let Some(d) = description.filter(|d| !d.is_empty()) {
            self.descriptions.entry(code).or_insert(d);
        }
    }

    /// Tab-separated `key, code, description` rows, one per code.
    pub fn export<W: Write>(&self, mut out: W) -> Result<()> {
        for (key, codes) in &self.entries {
            for code in codes {
                let desc = self.descriptions.get(code).map(String::as_str).unwrap_or("");
                writeln!(out, "{key}\t{code}\t{desc}")?;
            }
        }
        Ok(())
    }
}

fn is_header(key: &str, code: &str) -> bool {
    let code = code.trim().to_ascii_lowercase();
    key.trim().eq_ignore_ascii_case("key")
        || key.trim().eq_ignore_ascii_case("medicine")
        || matches!(code.as_str(), "code" | "atc" | "atc code" | "atc_code")
}

/// Loads a tab- or comma-delimited table of `key, code[, description]` rows.
/// The delimiter is a tab if the first non-empty line contains one. A code
/// cell may hold several codes. Rows with a malformed code are rejected and
/// reported; the load fails only if no row is valid.
pub fn load_atc_table(source: &str) -> Result<(AtcIndex, AtcLoadReport)> {
    let first = source.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());

    let mut index = AtcIndex::default();
    let mut report = AtcLoadReport::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push((line, format!("unreadable row: {e}")));
                continue;
            }
        };
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row.len() < 2 {
            report.rejected.push((line, "missing code column".into()));
            continue;
        }
        if i == 0 && is_header(&row[0], &row[1]) {
            continue;
        }
        let key = normalize_name(&row[0]);
        if key.is_empty() {
            report.rejected.push((line, "empty key".into()));
            continue;
        }
        let codes = match parse_code_list(&row[1]) {
            Ok(c) if !c.is_empty() => c,
            Ok(_) => {
                report.rejected.push((line, "empty code".into()));
                continue;
            }
            Err(e) => {
                report.rejected.push((line, e.to_string()));
                continue;
            }
        };
        let description = row.get(2).map(str::to_string);
        for code in codes {
            index.insert(key.clone(), code, description.clone());
        }
        report.rows_ok += 1;
    }
    if report.rows_ok == 0 {
        return Err(Error::EmptyAtcTable);
    }
    Ok((index, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtcAnnotation {
    pub med_id: MedId,
    pub codes: Vec<AtcCode>,
    pub matched: bool,
}

impl AtcAnnotation {
    /// Distinct level prefixes of this medicine's codes.
    pub fn prefixes(&self, level: usize) -> Result<BTreeSet<&str>> {
        self.codes.iter().map(|c| atc_level(c, level)).collect()
    }
}

/// Exact match on the normalized name, falling back to the generic code.
pub fn match_medicine(entry: &MedicineCatalogEntry, index: &AtcIndex) -> AtcAnnotation {
    let codes = index
        .entries
        .get(&entry.normalized_name)
        .or_else(|| {
            let generic = normalize_name(&entry.generic_code);
            (!generic.is_empty())
                .then(|| index.entries.get(&generic))
                .flatten()
        })
        .cloned()
        .unwrap_or_default();
    AtcAnnotation {
        med_id: entry.med_id,
        matched: !codes.is_empty(),
        codes,
    }
}
