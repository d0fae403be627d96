//! Two-phase Louvain modularity optimization on the weighted similarity graph.
//!
//! Phase one moves single nodes to the neighbouring community with the best
//! modularity gain until no move improves; phase two collapses communities
//! into nodes (internal weight becomes a self-loop). The two phases repeat
//! until a level produces no move.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{modularity, OutlierSet, Partition};
use crate::error::{Error, Result};
use crate::graph::SimGraph;
use crate::ingest::MedId;

const MAX_PASSES: usize = 1_000;

/// Modularity after one local-moving pass, tracked incrementally, with the
/// partition of the original nodes at that point.
#[derive(Debug, Clone)]
pub struct PassTrace {
    pub level: usize,
    pub incremental_modularity: f64,
    pub partition: Partition,
}

#[derive(Debug, Clone)]
pub struct LouvainTrace {
    pub partition: Partition,
    pub modularity: f64,
    pub passes: Vec<PassTrace>,
}

struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
}

impl LevelGraph {
    fn len(&self) -> usize {
        self.adj.len()
    }
}

struct Moving<'a> {
    g: &'a LevelGraph,
    resolution: f64,
    total: f64,
    comm: Vec<usize>,
    inner: Vec<f64>,
    tot: Vec<f64>,
    q: f64,
}

impl<'a> Moving<'a> {
    fn new(g: &'a LevelGraph, resolution: f64, total: f64) -> Self {
        let mut m = Moving {
            g,
            resolution,
            total,
            comm: (0..g.len()).collect(),
            inner: g.self_loop.clone(),
            tot: g.degree.clone(),
            q: 0.0,
        };
        m.q = (0..g.len()).map(|c| m.term(c)).sum();
        m
    }

    fn term(&self, c: usize) -> f64 {
        self.inner[c] / self.total - self.resolution * (self.tot[c] / (2.0 * self.total)).powi(2)
    }

    fn shift(&mut self, c: usize, inner: f64, tot: f64) {
        self.q -= self.term(c);
        self.inner[c] += inner;
        self.tot[c] += tot;
        self.q += self.term(c);
    }

    /// Returns true if the node changed community.
    fn visit(&mut self, i: usize) -> bool {
        let k_i = self.g.degree[i];
        let s_i = self.g.self_loop[i];
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, w) in &self.g.adj[i] {
            *links.entry(self.comm[j]).or_insert(0.0) += w;
        }
        let from = self.comm[i];
        let to_from = links.get(&from).copied().unwrap_or(0.0);
        self.shift(from, -(to_from + s_i), -k_i);

        let two_w = 2.0 * self.total;
        let gain = |c: usize, w: f64, tot: &[f64]| w - self.resolution * tot[c] * k_i / two_w;
        let stay = gain(from, to_from, &self.tot);
        // BTreeMap iteration is ascending, so ties keep the lowest id
        let mut best: Option<(usize, f64)> = None;
        for (&c, &w) in &links {
            if c == from {
                continue;
            }
            let g = gain(c, w, &self.tot);
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((c, g));
            }
        }
        let target = match best {
            Some((c, g)) if g - stay > 1e-12 * self.total => c,
            _ => from,
        };
        let to_target = links.get(&target).copied().unwrap_or(0.0);
        self.shift(target, to_target + s_i, k_i);
        self.comm[i] = target;
        target != from
    }
}

/// Dense community labels in order of first appearance by node index.
fn compact(comm: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let mut out = Vec::with_capacity(comm.len());
    for &c in comm {
        let next = map.len();
        out.push(*map.entry(c).or_insert(next));
    }
    (out, map.len())
}

fn aggregate(g: &LevelGraph, comm: &[usize], n_comm: usize) -> LevelGraph {
    let mut self_loop = vec![0.0; n_comm];
    let mut degree = vec![0.0; n_comm];
    let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comm];
    for i in 0..g.len() {
        let ci = comm[i];
        self_loop[ci] += g.self_loop[i];
        degree[ci] += g.degree[i];
        for &(j, w) in &g.adj[i] {
            let cj = comm[j];
            if ci == cj {
                // each internal edge is seen from both ends
                self_loop[ci] += w / 2.0;
            } else {
                *links[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    LevelGraph {
        adj: links.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_loop,
        degree,
    }
}

/// Louvain with a per-pass trace of the incrementally tracked modularity.
pub fn louvain_traced(
    g: &SimGraph,
    exclude: &OutlierSet,
    resolution: f64,
    seed: u64,
) -> Result<LouvainTrace> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::param("resolution", format!("{resolution} must be positive")));
    }
    let excluded = &exclude.med_ids;
    let included: Vec<MedId> = g.nodes.iter().filter(|m| !excluded.contains(m)).copied().collect();
    if included.is_empty() {
        return Err(Error::Degenerate("no nodes left after outlier exclusion".into()));
    }

    // Nodes without edges stay singletons and are kept out of the shuffled
    // core so that they cannot influence the visit order of the rest.
    let mut deg: BTreeMap<MedId, f64> = included.iter().map(|&m| (m, 0.0)).collect();
    let mut edges = Vec::new();
    for (&(u, v), &w) in &g.edges {
        if deg.contains_key(&u) && deg.contains_key(&v) && w > 0.0 {
            *deg.get_mut(&u).unwrap() += w;
            *deg.get_mut(&v).unwrap() += w;
            edges.push((u, v, w));
        }
    }
    let core: Vec<MedId> = included.iter().filter(|m| deg[m] > 0.0).copied().collect();
    let isolated: Vec<MedId> = included.iter().filter(|m| deg[m] == 0.0).copied().collect();
    let total: f64 = edges.iter().map(|e| e.2).sum();

    let finish = |labels: Vec<(MedId, usize)>| -> Partition {
        let offset = labels.len();
        Partition::from_assignment(
            labels
                .into_iter()
                .chain(isolated.iter().enumerate().map(|(i, &m)| (m, offset + i))),
        )
    };

    if core.is_empty() {
        let partition = Partition::singletons(included.iter().copied());
        return Ok(LouvainTrace {
            modularity: 0.0,
            partition,
            passes: Vec::new(),
        });
    }

    let pos: BTreeMap<MedId, usize> = core.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut adj = vec![Vec::new(); core.len()];
    for &(u, v, w) in &edges {
        let (a, b) = (pos[&u], pos[&v]);
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut level = LevelGraph {
        degree: core.iter().map(|m| deg[m]).collect(),
        self_loop: vec![0.0; core.len()],
        adj,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..core.len()).collect();
    let mut passes = Vec::new();
    let snapshot = |membership: &[usize], comm: &[usize]| -> Partition {
        finish(
            core.iter()
                .enumerate()
                .map(|(i, &m)| (m, comm[membership[i]]))
                .collect(),
        )
    };

    for depth in 0.. {
        let mut moving = Moving::new(&level, resolution, total);
        let mut order: Vec<usize> = (0..level.len()).collect();
        order.shuffle(&mut rng);
        let mut any_move = false;
        for _ in 0..MAX_PASSES {
            let mut moved = false;
            for &i in &order {
                moved |= moving.visit(i);
            }
            passes.push(PassTrace {
                level: depth,
                incremental_modularity: moving.q,
                partition: snapshot(&membership, &moving.comm),
            });
            any_move |= moved;
            if !moved {
                break;
            }
        }
        if !any_move {
            break;
        }
        let (comm, n_comm) = compact(&moving.comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        level = aggregate(&level, &comm, n_comm);
    }

    let partition = finish(
        core.iter()
            .enumerate()
            .map(|(i, &m)| (m, membership[i]))
            .collect(),
    );
    let q = modularity(g, &partition, excluded, resolution)?;
    Ok(LouvainTrace {
        partition,
        modularity: q,
        passes,
    })
}

/// Partitions the graph without `exclude`. Deterministic per seed; a graph
/// with no edge weight yields singletons.
pub fn louvain(g: &SimGraph, exclude: &OutlierSet, resolution: f64, seed: u64) -> Result<Partition> {
    Ok(louvain_traced(g, exclude, resolution, seed)?.partition)
}
