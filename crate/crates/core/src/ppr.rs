//! Approximate personalized PageRank by forward push over the directed
//! user trust graph, and top-k neighbor selection for trust augmentation.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::par::{self, Execution};

/// How residual mass moves along edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    /// Row-stochastic random walk over out-edges; dangling nodes jump back
    /// to the source.
    #[default]
    Walk,
    /// `D^-1/2 (A + I) D^-1/2` over the symmetrized user graph.
    Symmetric,
}

/// Directed user graph in adjacency-list form.
#[derive(Clone, Debug)]
pub struct DiGraph {
    out: Vec<Vec<usize>>,
}

impl DiGraph {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut out = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            out[a].push(b);
        }
        for row in &mut out {
            row.sort_unstable();
            row.dedup();
        }
        Self { out }
    }

    pub fn from_trust(graph: &HeteroGraph) -> Self {
        Self {
            out: graph.trust_adjacency(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.out.len()
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    /// `A ∪ Aᵀ` with self-loops, as used by the symmetric transition.
    fn symmetrized(&self) -> Vec<Vec<usize>> {
        let n = self.num_nodes();
        let mut adj = vec![Vec::new(); n];
        for (a, outs) in self.out.iter().enumerate() {
            for &b in outs {
                if a != b {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        for (v, row) in adj.iter_mut().enumerate() {
            row.push(v);
            row.sort_unstable();
            row.dedup();
        }
        adj
    }
}

/// Sparse approximate PPR vector of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct PprRow {
    pub source: usize,
    pub scores: BTreeMap<usize, f64>,
    pub epsilon: f64,
}

impl PprRow {
    pub fn score(&self, v: usize) -> f64 {
        self.scores.get(&v).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }
}

fn validate(lambda: f64, epsilon: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "reset probability must lie in (0, 1), got {lambda}"
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "push threshold must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// Forward push with row-stochastic out-edge transitions.
///
/// A node is pushed while its residual is at least `epsilon` times its
/// out-degree (dangling nodes count as degree 1 and return their mass to
/// the source).
pub fn ppr_push(graph: &DiGraph, source: usize, lambda: f64, epsilon: f64) -> Result<PprRow> {
    ppr_push_with(graph, source, lambda, epsilon, Transition::Walk)
}

pub fn ppr_push_with(
    graph: &DiGraph,
    source: usize,
    lambda: f64,
    epsilon: f64,
    transition: Transition,
) -> Result<PprRow> {
    validate(lambda, epsilon)?;
    if source >= graph.num_nodes() {
        return Err(Error::InvalidArgument(format!("source {source} out of range")));
    }
    let scores = match transition {
        Transition::Walk => push_walk(graph, source, lambda, epsilon),
        Transition::Symmetric => push_symmetric(graph, source, lambda, epsilon),
    };
    Ok(PprRow {
        source,
        scores,
        epsilon,
    })
}

fn push_walk(graph: &DiGraph, source: usize, lambda: f64, epsilon: f64) -> BTreeMap<usize, f64> {
    let mut p: BTreeMap<usize, f64> = BTreeMap::new();
    let mut r: BTreeMap<usize, f64> = BTreeMap::new();
    r.insert(source, 1.0);
    let mut queue = VecDeque::from([source]);
    let threshold = |v: usize| epsilon * graph.out_neighbors(v).len().max(1) as f64;

    while let Some(u) = queue.pop_front() {
        let ru = r.get(&u).copied().unwrap_or(0.0);
        if ru < threshold(u) {
            continue;
        }
        r.insert(u, 0.0);
        let outs = graph.out_neighbors(u);
        if outs.is_empty() {
            if u == source {
                // every restart lands back here: the geometric series sums to ru
                *p.entry(u).or_default() += ru;
                continue;
            }
            *p.entry(u).or_default() += lambda * ru;
            let rs = r.entry(source).or_default();
            let before = *rs;
            *rs += (1.0 - lambda) * ru;
            if before < threshold(source) && *rs >= threshold(source) {
                queue.push_back(source);
            }
            continue;
        }
        *p.entry(u).or_default() += lambda * ru;
        let share = (1.0 - lambda) * ru / outs.len() as f64;
        for &v in outs {
            let rv = r.entry(v).or_default();
            let before = *rv;
            *rv += share;
            if before < threshold(v) && *rv >= threshold(v) {
                queue.push_back(v);
            }
        }
    }
    p.retain(|_, v| *v > 0.0);
    p
}

fn push_symmetric(graph: &DiGraph, source: usize, lambda: f64, epsilon: f64) -> BTreeMap<usize, f64> {
    let adj = graph.symmetrized();
    let deg: Vec<f64> = adj.iter().map(|row| row.len() as f64).collect();
    let mut p: BTreeMap<usize, f64> = BTreeMap::new();
    let mut r = vec![0.0; adj.len()];
    r[source] = 1.0;
    let mut queue = VecDeque::from([source]);
    let threshold = |v: usize| epsilon * deg[v];

    while let Some(u) = queue.pop_front() {
        let ru = r[u];
        if ru < threshold(u) {
            continue;
        }
        r[u] = 0.0;
        *p.entry(u).or_default() += lambda * ru;
        for &v in &adj[u] {
            let before = r[v];
            r[v] += (1.0 - lambda) * ru / (deg[u] * deg[v]).sqrt();
            if before < threshold(v) && r[v] >= threshold(v) {
                queue.push_back(v);
            }
        }
    }
    p.retain(|_, v| *v > 0.0);
    p
}

/// Top-`k` PPR neighbors of every user as `(user, neighbor)` pairs.
///
/// Ties are broken towards the smaller id. Users reaching fewer than `k`
/// other users emit fewer pairs.
pub fn topk_augment(graph: &HeteroGraph, k: usize, lambda: f64, epsilon: f64) -> Result<Vec<(usize, usize)>> {
    Ok(topk_augment_weighted(graph, k, lambda, epsilon, Transition::Walk)?
        .into_iter()
        .map(|(a, b, _)| (a, b))
        .collect())
}

/// Like [`topk_augment`], also returning the PPR score of each pair.
pub fn topk_augment_weighted(
    graph: &HeteroGraph,
    k: usize,
    lambda: f64,
    epsilon: f64,
    transition: Transition,
) -> Result<Vec<(usize, usize, f64)>> {
    topk_augment_with(Execution::default(), graph, k, lambda, epsilon, transition)
}

/// [`topk_augment_weighted`] with an explicit execution strategy. The
/// result does not depend on `exec`.
pub fn topk_augment_with(
    exec: Execution,
    graph: &HeteroGraph,
    k: usize,
    lambda: f64,
    epsilon: f64,
    transition: Transition,
) -> Result<Vec<(usize, usize, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    validate(lambda, epsilon)?;
    let dg = DiGraph::from_trust(graph);
    let rows: Vec<Vec<(usize, usize, f64)>> = par::map_range_with(exec, dg.num_nodes(), |u| {
        let row = ppr_push_with(&dg, u, lambda, epsilon, transition).expect("parameters validated above");
        top_k(&row, k).into_iter().map(|(v, s)| (u, v, s)).collect()
    });
    Ok(rows.into_iter().flatten().collect())
}

/// The `k` highest-scoring targets other than the source.
pub fn top_k(row: &PprRow, k: usize) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = row
        .scores
        .iter()
        .filter(|(&v, &s)| v != row.source && s > 0.0)
        .map(|(&v, &s)| (v, s))
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(k);
    cands
}
