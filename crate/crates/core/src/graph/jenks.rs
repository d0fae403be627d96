//! Fisher-Jenks natural breaks: the globally optimal partition of sorted
//! values into `k` contiguous classes by total within-class squared deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JenksClass {
    pub min_value: u64,
    pub max_value: u64,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JenksClassification {
    pub k: usize,
    pub classes: Vec<JenksClass>,
    /// Class index of each input value, in input order.
    pub assignment: Vec<usize>,
}

impl JenksClassification {
    pub fn class_of(&self, value: u64) -> Option<usize> {
        self.classes
            .iter()
            .position(|c| c.min_value <= value && value <= c.max_value)
    }

    /// Rows `(Cut_Jenks, Min, Max, Count)`.
    pub fn table(&self) -> String {
        let mut s = String::from("Cut_Jenks\tMin\tMax\tCount\n");
        for (i, c) in self.classes.iter().enumerate() {
            s.push_str(&format!("{i}\t{}\t{}\t{}\n", c.min_value, c.max_value, c.member_count));
        }
        s
    }
}

/// Within-class sum of squared deviations for distinct values `[lo, hi)`
/// weighted by multiplicity, from prefix sums.
struct Prefix {
    w: Vec<f64>,
    s: Vec<f64>,
    ss: Vec<f64>,
}

impl Prefix {
    fn new(values: &[u64], weights: &[usize]) -> Self {
        let mut p = Prefix {
            w: vec![0.0],
            s: vec![0.0],
            ss: vec![0.0],
        };
        for (&v, &c) in values.iter().zip(weights) {
            let (v, c) = (v as f64, c as f64);
            p.w.push(p.w.last().unwrap() + c);
            p.s.push(p.s.last().unwrap() + c * v);
            p.ss.push(p.ss.last().unwrap() + c * v * v);
        }
        p
    }

    fn ssd(&self, lo: usize, hi: usize) -> f64 {
        let w = self.w[hi] - self.w[lo];
        let s = self.s[hi] - self.s[lo];
        let ss = self.ss[hi] - self.ss[lo];
        (ss - s * s / w).max(0.0)
    }
}

fn tie_eps(a: f64, b: f64) -> f64 {
    1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Classifies `values` into `k` classes. Classes never split equal values;
/// among optimal partitions the one with the smallest upper boundaries for
/// the lower classes is returned.
pub fn jenks_breaks(values: &[u64], k: usize) -> Result<JenksClassification> {
    let mut distinct: Vec<u64> = values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return Err(Error::param(
            "k",
            format!("{k} classes requested for {} distinct values", distinct.len()),
        ));
    }
    let mut weights = vec![0usize; distinct.len()];
    for v in values {
        weights[distinct.binary_search(v).unwrap()] += 1;
    }
    let d = distinct.len();
    let prefix = Prefix::new(&distinct, &weights);

    // best[j][i]: minimal cost of splitting the suffix i.. into j classes.
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; d + 1]; k + 1];
    best[0][d] = 0.0;
    for j in 1..=k {
        for i in (0..d).rev() {
            // the first class is [i, e); leave at least j-1 values after it
            let mut b = inf;
            for e in i + 1..=d - (j - 1) {
                let rest = best[j - 1][e];
                if rest.is_finite() {
                    b = b.min(prefix.ssd(i, e) + rest);
                }
            }
            best[j][i] = b;
        }
    }

    // Forward reconstruction picking the earliest break that is optimal.
    let mut ends = Vec::with_capacity(k);
    let mut i = 0;
    for j in (1..=k).rev() {
        let target = best[j][i];
        let mut chosen = None;
        for e in i + 1..=d - (j - 1) {
            let rest = best[j - 1][e];
            if !rest.is_finite() {
                continue;
            }
            let c = prefix.ssd(i, e) + rest;
            if c <= target + tie_eps(c, target) {
                chosen = Some(e);
                break;
            }
        }
        let e = chosen.expect("an optimal break always exists");
        ends.push(e);
        i = e;
    }

    let mut classes = Vec::with_capacity(k);
    let mut start = 0;
    for &e in &ends {
        classes.push(JenksClass {
            min_value: distinct[start],
            max_value: distinct[e - 1],
            member_count: weights[start..e].iter().sum(),
        });
        start = e;
    }
    let assignment = values
        .iter()
        .map(|v| {
            let pos = distinct.binary_search(v).unwrap();
            ends.iter().position(|&e| pos < e).unwrap()
        })
        .collect();
    Ok(JenksClassification {
        k,
        classes,
        assignment,
    })
}
