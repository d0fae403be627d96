//! Random generators and brute-force oracles shared by the property and
//! acceptance suites. Nothing here calls the algorithm under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recomed_core::cluster::Partition;
use recomed_core::graph::SimGraph;
use recomed_core::ingest::{build_transaction_db, RawItem, RawPrescriptionRecord};
use recomed_core::{MedId, TransactionDB};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn record(i: usize, names: &[String]) -> RawPrescriptionRecord {
    RawPrescriptionRecord {
        rx_id: format!("rx{i}"),
        pharmacy: String::new(),
        location: String::new(),
        items: names
            .iter()
            .map(|n| RawItem {
                name: n.clone(),
                generic_code: String::new(),
                quantity: 1.0,
            })
            .collect(),
    }
}

/// Random corpus of at most `max_tx` transactions over at most `max_meds`
/// medicines named `M00`, `M01`, …; medicine popularity is skewed so some
/// itemsets are frequent.
pub fn random_db(r: &mut ChaCha8Rng, max_tx: usize, max_meds: usize) -> TransactionDB {
    let n_meds = r.gen_range(2..=max_meds);
    let n_tx = r.gen_range(1..=max_tx);
    let p: Vec<f64> = (0..n_meds).map(|_| r.gen_range(0.05..0.8)).collect();
    let records: Vec<_> = (0..n_tx)
        .map(|i| {
            let mut names: Vec<String> = (0..n_meds)
                .filter(|&m| r.gen_bool(p[m]))
                .map(|m| format!("M{m:02}"))
                .collect();
            if names.is_empty() {
                names.push(format!("M{:02}", r.gen_range(0..n_meds)));
            }
            record(i, &names)
        })
        .collect();
    build_transaction_db(&records).unwrap()
}

/// Transactions as bitmasks over catalog ids (catalog ≤ 64 medicines).
pub fn masks(db: &TransactionDB) -> Vec<u64> {
    db.transactions()
        .iter()
        .map(|t| t.iter().fold(0u64, |acc, m| acc | 1 << m.0))
        .collect()
}

pub fn count_mask(masks: &[u64], set: u64) -> u64 {
    masks.iter().filter(|&&t| t & set == set).count() as u64
}

pub fn mask_items(set: u64) -> Vec<MedId> {
    (0..64).filter(|b| set & (1 << b) != 0).map(MedId).collect()
}

/// Every itemset whose support reaches `min_support`, by enumerating all
/// subsets of the catalog.
pub fn brute_itemsets(db: &TransactionDB, min_support: f64) -> BTreeMap<Vec<MedId>, u64> {
    let ms = masks(db);
    let n = db.n() as f64;
    let width = db.catalog().len();
    (1u64..1 << width)
        .filter_map(|set| {
            let c = count_mask(&ms, set);
            (c as f64 / n >= min_support).then(|| (mask_items(set), c))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRule {
    pub count: u64,
    pub antecedent_count: u64,
    pub consequent_count: u64,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub strong: bool,
}

/// All rules `A → I \ A` over frequent itemsets, metrics from raw counts.
pub fn brute_rules(
    db: &TransactionDB,
    min_support: f64,
    min_confidence: f64,
) -> BTreeMap<(Vec<MedId>, Vec<MedId>), OracleRule> {
    let ms = masks(db);
    let n = db.n() as f64;
    let mut out = BTreeMap::new();
    for items in brute_itemsets(db, min_support).keys() {
        if items.len() < 2 {
            continue;
        }
        let set = items.iter().fold(0u64, |acc, m| acc | 1 << m.0);
        let mut sub = (set - 1) & set;
        while sub != 0 {
            let cons = set & !sub;
            let c = count_mask(&ms, set);
            let a = count_mask(&ms, sub);
            let b = count_mask(&ms, cons);
            let support = c as f64 / n;
            let confidence = c as f64 / a as f64;
            out.insert(
                (mask_items(sub), mask_items(cons)),
                OracleRule {
                    count: c,
                    antecedent_count: a,
                    consequent_count: b,
                    support,
                    confidence,
                    lift: confidence / (b as f64 / n),
                    strong: support >= min_support && confidence >= min_confidence,
                },
            );
            sub = (sub - 1) & set;
        }
    }
    out
}

/// The reconstructed first row of the published rule table: two penicillins
/// always prescribed with water for injection (15 prescriptions), water for
/// injection in 759 prescriptions, 10,000 prescriptions in total.
pub fn penicillin_water_db() -> TransactionDB {
    let pen_a = "PENICILLIN G PROCAINE 800,000 U VIAL".to_string();
    let pen_b = "PENICILLIN G BENZATHINE (PEN LA) 1,200,000 U VIAL".to_string();
    let water = "WATER FOR INJECTION 5ML P-AMP".to_string();
    let other = "PARACETAMOL 500MG TAB".to_string();
    let records: Vec<_> = (0..10_000)
        .map(|i| match i {
            0..15 => record(i, &[pen_a.clone(), pen_b.clone(), water.clone()]),
            15..759 => record(i, &[water.clone(), other.clone()]),
            _ => record(i, &[other.clone()]),
        })
        .collect();
    build_transaction_db(&records).unwrap()
}

/// Within-class squared deviation of a contiguous class.
pub fn ssd(xs: &[u64]) -> f64 {
    let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
    xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum()
}

/// Minimal total squared deviation over every split of sorted `xs` into `k`
/// non-empty contiguous classes, with all minimizing class-size vectors.
pub fn brute_jenks(xs: &[u64], k: usize) -> (f64, Vec<Vec<usize>>) {
    fn rec(xs: &[u64], k: usize, start: usize, sizes: &mut Vec<usize>, out: &mut Vec<(f64, Vec<usize>)>) {
        if k == 1 {
            sizes.push(xs.len() - start);
            let mut cost = 0.0;
            let mut s = 0;
            for &len in sizes.iter() {
                cost += ssd(&xs[s..s + len]);
                s += len;
            }
            out.push((cost, sizes.clone()));
            sizes.pop();
            return;
        }
        for len in 1..=xs.len() - start - (k - 1) {
            sizes.push(len);
            rec(xs, k - 1, start + len, sizes, out);
            sizes.pop();
        }
    }
    let mut all = Vec::new();
    rec(xs, k, 0, &mut Vec::new(), &mut all);
    let best = all.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + best);
    let winners = all.into_iter().filter(|c| c.0 <= best + tol).map(|c| c.1).collect();
    (best, winners)
}

/// Prescription-set Jaccard by explicit set operations.
pub fn set_jaccard(db: &TransactionDB, a: MedId, b: MedId) -> (usize, usize) {
    let sets: Vec<BTreeSet<usize>> = [a, b]
        .iter()
        .map(|m| {
            db.transactions()
                .iter()
                .enumerate()
                .filter(|(_, t)| t.contains(m))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    (sets[0].intersection(&sets[1]).count(), sets[0].union(&sets[1]).count())
}

pub fn sim_graph(n: u32, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> SimGraph {
    SimGraph {
        nodes: (0..n).map(MedId).collect(),
        edges: edges
            .into_iter()
            .filter(|e| e.2 > 0.0)
            .map(|(u, v, w)| ((MedId(u.min(v)), MedId(u.max(v))), w))
            .collect(),
    }
}

/// Planted partition: `groups` groups of `size` nodes, intra-group weights
/// uniform in 0.8 ± 0.1 and inter-group weights uniform in 0.05 ± 0.05.
pub fn planted_graph(r: &mut ChaCha8Rng, groups: u32, size: u32) -> (SimGraph, BTreeMap<MedId, u32>) {
    let n = groups * size;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let w = if u / size == v / size {
                r.gen_range(0.7..=0.9)
            } else {
                r.gen_range(0.0..=0.1)
            };
            edges.push((u, v, w));
        }
    }
    let truth = (0..n).map(|u| (MedId(u), u / size)).collect();
    (sim_graph(n, edges), truth)
}

/// Random graph with `isolated` extra nodes that have no edges at all.
pub fn graph_with_isolated(r: &mut ChaCha8Rng, n: u32, isolated: u32) -> (SimGraph, BTreeSet<MedId>) {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.gen_bool(0.3) {
                edges.push((u, v, r.gen_range(0.01..=1.0)));
            }
        }
    }
    let g = sim_graph(n + isolated, edges);
    (g, (n..n + isolated).map(MedId).collect())
}

/// Relabels nodes through `perm` (old index → new index).
pub fn permute(g: &SimGraph, perm: &[u32]) -> SimGraph {
    sim_graph(
        g.nodes.len() as u32,
        g.edges.iter().map(|(&(u, v), &w)| (perm[u.0 as usize], perm[v.0 as usize], w)),
    )
}

pub fn random_perm(r: &mut ChaCha8Rng, n: u32) -> Vec<u32> {
    let mut p: Vec<u32> = (0..n).collect();
    p.shuffle(r);
    p
}

/// Textbook DBSCAN with cluster expansion; returns the points left as noise.
/// Distance is `1 − w` along an edge and infinite otherwise.
pub fn classic_dbscan_noise(g: &SimGraph, eps: f64, min_pts: usize) -> BTreeSet<MedId> {
    let region = |p: MedId| -> Vec<MedId> {
        let mut out = vec![p];
        for (&(u, v), &w) in &g.edges {
            if 1.0 - w <= eps {
                if u == p {
                    out.push(v);
                } else if v == p {
                    out.push(u);
                }
            }
        }
        out
    };
    #[derive(Clone, Copy, PartialEq)]
    enum Label {
        Unseen,
        Noise,
        Cluster(usize),
    }
    let mut label: BTreeMap<MedId, Label> = g.nodes.iter().map(|&m| (m, Label::Unseen)).collect();
    let mut c = 0;
    for &p in &g.nodes {
        if label[&p] != Label::Unseen {
            continue;
        }
        let nb = region(p);
        if nb.len() < min_pts {
            label.insert(p, Label::Noise);
            continue;
        }
        label.insert(p, Label::Cluster(c));
        let mut queue: Vec<MedId> = nb;
        while let Some(q) = queue.pop() {
            match label[&q] {
                Label::Noise => {
                    label.insert(q, Label::Cluster(c));
                }
                Label::Unseen => {
                    label.insert(q, Label::Cluster(c));
                    let nq = region(q);
                    if nq.len() >= min_pts {
                        queue.extend(nq);
                    }
                }
                Label::Cluster(_) => {}
            }
        }
        c += 1;
    }
    label
        .into_iter()
        .filter(|(_, l)| *l == Label::Noise)
        .map(|(m, _)| m)
        .collect()
}

/// Newman modularity `1/2m Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j)` by
/// summing over all ordered node pairs.
pub fn pairwise_modularity(g: &SimGraph, label: &BTreeMap<MedId, usize>) -> f64 {
    let nodes: Vec<MedId> = g.nodes.iter().copied().collect();
    let a = |u: MedId, v: MedId| g.weight(u, v).unwrap_or(0.0);
    let k: BTreeMap<MedId, f64> = nodes
        .iter()
        .map(|&u| (u, nodes.iter().map(|&v| a(u, v)).sum()))
        .collect();
    let two_m: f64 = k.values().sum();
    let mut q = 0.0;
    for &u in &nodes {
        for &v in &nodes {
            if label[&u] == label[&v] {
                q += a(u, v) - k[&u] * k[&v] / two_m;
            }
        }
    }
    q / two_m
}

/// All set partitions of `n` labelled nodes as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            rec(i + 1, n, cur, max.max(l), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(1, n, &mut vec![0], 0, &mut out);
    out
}

pub fn two_triangles() -> SimGraph {
    sim_graph(6, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)])
}

/// The partition of the two-triangle graph maximizing modularity, found by
/// enumerating all 203 partitions.
pub fn best_two_triangle_partition() -> (f64, BTreeMap<MedId, usize>) {
    let g = two_triangles();
    all_partitions(6)
        .into_iter()
        .map(|p| {
            let labels: BTreeMap<MedId, usize> =
                p.into_iter().enumerate().map(|(i, l)| (MedId(i as u32), l)).collect();
            (pairwise_modularity(&g, &labels), labels)
        })
        .fold(None::<(f64, BTreeMap<MedId, usize>)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .unwrap()
}

pub fn same_partition(a: &Partition, labels: &BTreeMap<MedId, usize>) -> bool {
    *a == Partition::from_assignment(labels.iter().map(|(&m, &l)| (m, l)))
}

/// Pair-counting Rand-type agreement by explicit enumeration of element
/// pairs; returns the adjusted index.
pub fn brute_ari<A: PartialEq, B: PartialEq>(a: &[A], b: &[B]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1.0;
            if sa {
                in_a += 1.0;
            }
            if sb {
                in_b += 1.0;
            }
            if sa && sb {
                both += 1.0;
            }
        }
    }
    let expected = in_a * in_b / pairs;
    let max = (in_a + in_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}
