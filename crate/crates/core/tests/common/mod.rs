//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kgtrust::conv::{layer_forward, GateParams, LayerParams, ViewIndex};
use kgtrust::embed::KnowledgeTriple;
use kgtrust::graph::{build_view, HeteroGraph, Role};
use kgtrust::predict::{predict_pair, PredictorParams};
use kgtrust::tape::Tape;
use kgtrust::tensor::Matrix;

/// Random directed graph without self-loops or duplicate edges.
pub fn random_digraph(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Exact random-walk PPR row of `s` by Gaussian elimination.
///
/// Solves `(I - (1-λ) Pᵀ) π = λ e_s` where `P` moves uniformly along
/// out-edges and dangling rows jump to `s`.
pub fn dense_ppr(n: usize, edges: &[(usize, usize)], s: usize, lambda: f64) -> Vec<f64> {
    let mut outs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        outs[a].insert(b);
    }
    let mut p = vec![vec![0.0; n]; n];
    for (u, o) in outs.iter().enumerate() {
        if o.is_empty() {
            p[u][s] = 1.0;
        } else {
            for &v in o {
                p[u][v] = 1.0 / o.len() as f64;
            }
        }
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| f64::from(u8::from(i == j)) - (1.0 - lambda) * p[j][i])
                .collect();
            row.push(if i == s { lambda } else { 0.0 });
            row
        })
        .collect();
    solve_in_place(&mut a)
}

/// Gauss-Jordan elimination with partial pivoting on an augmented matrix.
fn solve_in_place(a: &mut [Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .expect("non-empty");
        a.swap(c, piv);
        let d = a[c][c];
        for k in c..=n {
            a[c][k] /= d;
        }
        for r in 0..n {
            if r != c && a[r][c] != 0.0 {
                let f = a[r][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    a.iter().map(|row| row[n]).collect()
}

/// Top `k` entries other than `source`, larger score first, ties to the
/// smaller id.
pub fn dense_top_k(scores: &[f64], source: usize, k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).filter(|&v| v != source && scores[v] > 0.0).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Small random user-object graph with every kind of edge.
pub fn random_hetero(rng: &mut impl Rng) -> HeteroGraph {
    let nu = rng.random_range(1..8);
    let no = rng.random_range(0..6);
    let trust = random_digraph(rng, nu, 0.3);
    let mut inter = Vec::new();
    for u in 0..nu {
        for o in nu..nu + no {
            if rng.random_bool(0.35) {
                inter.push((u, o));
            }
        }
    }
    let mut objs = Vec::new();
    for a in nu..nu + no {
        for b in a + 1..nu + no {
            if rng.random_bool(0.2) {
                objs.push((a, b));
            }
        }
    }
    HeteroGraph::new(nu, no, trust, inter, objs).expect("valid by construction")
}

/// Random trust pairs to add as augmentation.
pub fn random_augmentation(rng: &mut impl Rng, nu: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..nu)
        .flat_map(|a| (0..nu).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(rng);
    pairs.truncate(rng.random_range(0..=nu));
    pairs
}

fn scaled_normal(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::standard_normal(rows, cols, rng).map(|x| x * scale)
}

/// Checks attention normalization, gate bounds and predictor outputs on one
/// random instance. Returns the largest deviation from 1 of any attention
/// sum or predicted distribution.
pub fn invariant_instance(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = random_hetero(&mut rng);
    let aug = random_augmentation(&mut rng, graph.num_users());
    let dim = rng.random_range(1..5);
    let scale = [0.1, 1.0, 5.0][rng.random_range(0..3)];
    let h0 = scaled_normal(&mut rng, graph.num_nodes(), dim, scale);
    let mut worst: f64 = 0.0;

    let mut embeddings = Vec::new();
    for role in [Role::Trustor, Role::Trustee] {
        let view = build_view(&graph, &aug, role);
        let index = ViewIndex::new(&view);
        let mut tape = Tape::new();
        let mut h = tape.constant(h0.clone());
        for layer in 0..2 {
            let mut params = LayerParams::init(dim, dim, &mut rng);
            params.type_attention = [0, 1].map(|_| scaled_normal(&mut rng, 2 * dim, 1, scale));
            params.node_attention = scaled_normal(&mut rng, 2 * dim, 1, scale);
            let vars = params.register(&mut tape);
            let trace = layer_forward(&mut tape, h, &index, &vars);

            let mut type_sums = vec![0.0; view.num_nodes()];
            for (&node, &w) in index.slot_nodes().iter().zip(tape.value(trace.type_weights).as_slice()) {
                if !(0.0..=1.0).contains(&w) {
                    return Err(format!("layer {layer}: type weight {w} outside [0, 1]"));
                }
                type_sums[node] += w;
            }
            let mut node_sums = vec![0.0; view.num_nodes()];
            for ((dst, _), &w) in index.edges().zip(tape.value(trace.node_weights).as_slice()) {
                node_sums[dst] += w;
            }
            for (v, (&ts, &ns)) in type_sums.iter().zip(&node_sums).enumerate() {
                let dev = (ts - 1.0).abs().max((ns - 1.0).abs());
                if dev > 1e-9 {
                    return Err(format!("{role:?} layer {layer} node {v}: type sum {ts}, node sum {ns}"));
                }
                worst = worst.max(dev);
            }
            h = trace.output;
        }
        let out = tape.value(h).clone();
        if !out.is_finite() {
            return Err(format!("{role:?}: non-finite layer output"));
        }
        embeddings.push(out);
    }

    let mut gate = GateParams::zeros(dim);
    gate.raw_gate = Matrix::from_vec(1, dim, (0..dim).map(|_| rng.random_range(-20.0..20.0)).collect());
    for &g in &gate.gate() {
        if !(g > 0.0 && g < 1.0) {
            return Err(format!("gate value {g} not strictly inside (0, 1)"));
        }
    }

    let depth = rng.random_range(1..4);
    let predictor = PredictorParams::init(2 * dim, depth, &mut rng);
    let nu = graph.num_users();
    for i in 0..nu {
        let j = rng.random_range(0..nu);
        let p = predict_pair(embeddings[0].row(i), embeddings[1].row(j), &predictor).map_err(|e| e.to_string())?;
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(format!("predicted distribution {p:?} has an entry outside [0, 1]"));
        }
        let dev = (p[0] + p[1] - 1.0).abs();
        if dev > 1e-12 {
            return Err(format!("predicted distribution {p:?} sums to {}", p[0] + p[1]));
        }
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Objects point at their category; categories form an open chain.
pub fn satisfiable_kg() -> (Vec<KnowledgeTriple>, usize, usize) {
    let (objects, categories) = (40, 4);
    let mut triples: Vec<KnowledgeTriple> = (0..objects)
        .map(|o| KnowledgeTriple {
            head: o,
            relation: 0,
            tail: objects + o % categories,
        })
        .collect();
    for c in 0..categories - 1 {
        triples.push(KnowledgeTriple {
            head: objects + c,
            relation: 1,
            tail: objects + c + 1,
        });
    }
    (triples, objects + categories, 2)
}
