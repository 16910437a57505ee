//! Dual-role heterogeneous convolution with type-level and node-level
//! attention, and gated fusion of the two role embeddings.
//!
//! The per-node functions ([`type_embedding`], [`type_attention`],
//! [`node_attention`], [`fuse`]) operate on plain vectors. Training goes
//! through [`layer_forward`], which evaluates the same layer for the whole
//! graph on a [`Tape`].

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{GraphView, NodeType, Role};
use crate::tape::{sigmoid, Index, Tape, Var};
use crate::tensor::Matrix;

pub const ATTENTION_SLOPE: f64 = 0.2;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        ATTENTION_SLOPE * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters of one propagation layer. Arrays are indexed by
/// [`NodeType::index`].
///
/// Generic over the tensor slot so the same shape can hold values, tape
/// variables, gradients or optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = Matrix> {
    /// `d_in x d_out` transform applied to neighbors of each type.
    pub weight: [T; 2],
    /// `2 d_in x 1` type-level attention vectors.
    pub type_attention: [T; 2],
    /// `2 d_in x 1` node-level attention vector.
    pub node_attention: T,
}

pub type LayerVars = LayerParams<Var>;

impl<T> LayerParams<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> LayerParams<U> {
        LayerParams {
            weight: [
                f(&format!("{prefix}.weight.user"), &self.weight[0]),
                f(&format!("{prefix}.weight.object"), &self.weight[1]),
            ],
            type_attention: [
                f(&format!("{prefix}.type_attention.user"), &self.type_attention[0]),
                f(&format!("{prefix}.type_attention.object"), &self.type_attention[1]),
            ],
            node_attention: f(&format!("{prefix}.node_attention"), &self.node_attention),
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        let [w0, w1] = &mut self.weight;
        f(format!("{prefix}.weight.user"), w0);
        f(format!("{prefix}.weight.object"), w1);
        let [e0, e1] = &mut self.type_attention;
        f(format!("{prefix}.type_attention.user"), e0);
        f(format!("{prefix}.type_attention.object"), e1);
        f(format!("{prefix}.node_attention"), &mut self.node_attention);
    }
}

impl LayerParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: [Matrix::glorot(d_in, d_out, rng), Matrix::glorot(d_in, d_out, rng)],
            type_attention: [Matrix::glorot(2 * d_in, 1, rng), Matrix::glorot(2 * d_in, 1, rng)],
            node_attention: Matrix::glorot(2 * d_in, 1, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight[0].cols()
    }

    pub fn register(&self, tape: &mut Tape) -> LayerVars {
        self.map("", &mut |_, m| tape.param(m.clone()))
    }

    pub(crate) fn check(&self, d_in: usize) -> Result<()> {
        let ok = self
            .weight
            .iter()
            .all(|w| w.rows() == d_in && w.cols() == self.output_dim())
            && self.type_attention.iter().all(|e| e.shape() == (2 * d_in, 1))
            && self.node_attention.shape() == (2 * d_in, 1);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "layer parameters do not fit input dimension {d_in}"
            )))
        }
    }
}

/// Stack of layers for one role.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleEncoder<T = Matrix> {
    pub role: Role,
    pub layers: Vec<LayerParams<T>>,
}

impl<T> RoleEncoder<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> RoleEncoder<U> {
        RoleEncoder {
            role: self.role,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(l, p)| p.map(&format!("{prefix}.layer{l}"), f))
                .collect(),
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        for (l, p) in self.layers.iter_mut().enumerate() {
            p.for_each_mut(&format!("{prefix}.layer{l}"), f);
        }
    }
}

impl RoleEncoder {
    pub fn init<R: Rng + ?Sized>(role: Role, dim: usize, num_layers: usize, rng: &mut R) -> Self {
        Self {
            role,
            layers: (0..num_layers).map(|_| LayerParams::init(dim, dim, rng)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams<T = Matrix> {
    /// `1 x d` pre-sigmoid gate.
    pub raw_gate: T,
}

impl<T> GateParams<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> GateParams<U> {
        GateParams {
            raw_gate: f(&format!("{prefix}.raw_gate"), &self.raw_gate),
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        f(format!("{prefix}.raw_gate"), &mut self.raw_gate);
    }
}

impl GateParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            raw_gate: Matrix::zeros(1, dim),
        }
    }

    pub fn gate(&self) -> Vec<f64> {
        self.raw_gate.as_slice().iter().map(|&g| sigmoid(g)).collect()
    }
}

/// `Σ_j â_ij h_j` over neighbors `j` of `ty` in the view (self included).
pub fn type_embedding(target: usize, ty: NodeType, view: &GraphView, h: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; h.dim()];
    for (j, a) in view.row(target) {
        if view.node_types()[j] == ty {
            for (o, x) in out.iter_mut().zip(h.row(j)) {
                *o += a * x;
            }
        }
    }
    out
}

/// Softmax over the supplied types of `LeakyReLU(η_ψᵀ [h_target ‖ h_ψ])`.
pub fn type_attention(
    h_target: &[f64],
    type_embeddings: &BTreeMap<NodeType, Vec<f64>>,
    params: &LayerParams,
) -> BTreeMap<NodeType, f64> {
    let d = h_target.len();
    let logits: Vec<(NodeType, f64)> = type_embeddings
        .iter()
        .map(|(&ty, hp)| {
            let eta = params.type_attention[ty.index()].as_slice();
            (ty, leaky(dot(&eta[..d], h_target) + dot(&eta[d..], hp)))
        })
        .collect();
    softmax_pairs(logits)
}

fn softmax_pairs<K: Ord>(logits: Vec<(K, f64)>) -> BTreeMap<K, f64> {
    let mx = logits.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<(K, f64)> = logits.into_iter().map(|(k, l)| (k, (l - mx).exp())).collect();
    let total: f64 = exps.iter().map(|p| p.1).sum();
    exps.into_iter().map(|(k, e)| (k, e / total)).collect()
}

/// Weights `β_ij` over `neighbors` of `target`:
/// softmax of `LeakyReLU(α_ψ(j) · γᵀ [h_i ‖ h_j])`. An empty neighbor list
/// yields the self weight `[1.0]`.
pub fn node_attention(
    target: usize,
    neighbors: &[usize],
    h: &EmbeddingTable,
    node_types: &[NodeType],
    type_weights: &BTreeMap<NodeType, f64>,
    params: &LayerParams,
) -> Vec<f64> {
    if neighbors.is_empty() {
        return vec![1.0];
    }
    let d = h.dim();
    let gamma = params.node_attention.as_slice();
    let hi = dot(&gamma[..d], h.row(target));
    let logits: Vec<(usize, f64)> = neighbors
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let alpha = type_weights.get(&node_types[j]).copied().unwrap_or(0.0);
            (k, leaky(alpha * (hi + dot(&gamma[d..], h.row(j)))))
        })
        .collect();
    softmax_pairs(logits).into_values().collect()
}

#[derive(Clone, Debug)]
struct TypeEdges {
    dst: Index,
    src: Index,
    norm: Matrix,
}

/// Edge lists of a view arranged for batched evaluation.
///
/// Edges are grouped by neighbor type (users first) and sorted by
/// `(target, neighbor)` within a group. A "slot" is a `(node, type)` pair
/// where the node has at least one neighbor of that type.
#[derive(Clone, Debug)]
pub struct ViewIndex {
    num_nodes: usize,
    by_type: [TypeEdges; 2],
    all_dst: Index,
    all_src: Index,
    slots: [Index; 2],
    slot_node: Index,
    edge_slot: Index,
}

impl ViewIndex {
    pub fn new(view: &GraphView) -> Self {
        let n = view.num_nodes();
        let types = view.node_types();
        let mut groups: [(Vec<usize>, Vec<usize>, Vec<f64>); 2] = Default::default();
        for (i, j, a) in view.entries() {
            let g = &mut groups[types[j].index()];
            g.0.push(i);
            g.1.push(j);
            g.2.push(a);
        }

        let mut slot_of = vec![[usize::MAX; 2]; n];
        let mut slots: [Vec<usize>; 2] = Default::default();
        let mut offset = 0;
        for t in 0..2 {
            let mut last = usize::MAX;
            for &i in &groups[t].0 {
                if i != last {
                    slot_of[i][t] = offset + slots[t].len();
                    slots[t].push(i);
                    last = i;
                }
            }
            offset += slots[t].len();
        }
        let mut all_dst = Vec::with_capacity(view.nnz());
        let mut all_src = Vec::with_capacity(view.nnz());
        let mut edge_slot = Vec::with_capacity(view.nnz());
        for (t, g) in groups.iter().enumerate() {
            for (&i, &j) in g.0.iter().zip(&g.1) {
                all_dst.push(i);
                all_src.push(j);
                edge_slot.push(slot_of[i][t]);
            }
        }
        let slot_node: Vec<usize> = slots[0].iter().chain(&slots[1]).copied().collect();

        let [g0, g1] = groups;
        let mk = |(dst, src, norm): (Vec<usize>, Vec<usize>, Vec<f64>)| TypeEdges {
            dst: Arc::from(dst),
            src: Arc::from(src),
            norm: Matrix::from_vec(norm.len(), 1, norm),
        };
        let [s0, s1] = slots;
        Self {
            num_nodes: n,
            by_type: [mk(g0), mk(g1)],
            all_dst: Arc::from(all_dst),
            all_src: Arc::from(all_src),
            slots: [Arc::from(s0), Arc::from(s1)],
            slot_node: Arc::from(slot_node),
            edge_slot: Arc::from(edge_slot),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.all_dst.len()
    }

    /// Target node of each type-attention slot, in slot order.
    pub fn slot_nodes(&self) -> &[usize] {
        &self.slot_node
    }

    /// `(target, neighbor)` of each edge, in node-attention order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.all_dst.iter().copied().zip(self.all_src.iter().copied())
    }
}

/// Variables recorded by one layer evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    pub output: Var,
    /// Type-level weights per slot (see [`ViewIndex::slot_nodes`]).
    pub type_weights: Var,
    /// Node-level weights per edge (see [`ViewIndex::edges`]).
    pub node_weights: Var,
}

/// One propagation layer over the whole graph:
/// `H' = ELU(Σ_ψ B_ψ H_ψ W_ψ)`.
pub fn layer_forward(tape: &mut Tape, h: Var, index: &ViewIndex, p: &LayerVars) -> LayerTrace {
    let n = index.num_nodes;
    let d = tape.value(h).cols();

    let mut slot_logits = Vec::with_capacity(2);
    for t in 0..2 {
        let edges = &index.by_type[t];
        let norm = tape.constant(edges.norm.clone());
        let h_type = tape.spmm(h, norm, edges.dst.clone(), edges.src.clone(), n);
        let eta_self = tape.slice_rows(p.type_attention[t], 0, d);
        let eta_type = tape.slice_rows(p.type_attention[t], d, d);
        let a = tape.matmul(h, eta_self);
        let b = tape.matmul(h_type, eta_type);
        let s = tape.add(a, b);
        let s = tape.leaky_relu(s, ATTENTION_SLOPE);
        slot_logits.push(tape.gather(s, index.slots[t].clone()));
    }
    let slot_logits = tape.concat_rows(&slot_logits);
    let alpha = tape.segment_softmax(slot_logits, index.slot_node.clone(), n);

    let g_self = tape.slice_rows(p.node_attention, 0, d);
    let g_nb = tape.slice_rows(p.node_attention, d, d);
    let u = tape.matmul(h, g_self);
    let v = tape.matmul(h, g_nb);
    let ue = tape.gather(u, index.all_dst.clone());
    let ve = tape.gather(v, index.all_src.clone());
    let e = tape.add(ue, ve);
    let alpha_e = tape.gather(alpha, index.edge_slot.clone());
    let logits = tape.mul(alpha_e, e);
    let logits = tape.leaky_relu(logits, ATTENTION_SLOPE);
    let beta = tape.segment_softmax(logits, index.all_dst.clone(), n);

    let mut offset = 0;
    let mut agg: Option<Var> = None;
    for t in 0..2 {
        let edges = &index.by_type[t];
        let m = edges.dst.len();
        if m == 0 {
            continue;
        }
        let hw = tape.matmul(h, p.weight[t]);
        let beta_t = tape.slice_rows(beta, offset, m);
        offset += m;
        let part = tape.spmm(hw, beta_t, edges.dst.clone(), edges.src.clone(), n);
        agg = Some(match agg {
            Some(acc) => tape.add(acc, part),
            None => part,
        });
    }
    let agg = agg.expect("every node has a self-loop");
    LayerTrace {
        output: tape.elu(agg),
        type_weights: alpha,
        node_weights: beta,
    }
}

/// Evaluates one layer outside of training.
pub fn propagate_layer(h: &EmbeddingTable, view: &GraphView, params: &LayerParams) -> Result<EmbeddingTable> {
    if h.len() != view.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings for a view of {} nodes",
            h.len(),
            view.num_nodes()
        )));
    }
    params.check(h.dim())?;
    let index = ViewIndex::new(view);
    let mut tape = Tape::new();
    let hv = tape.constant(h.matrix().clone());
    let vars = params.register(&mut tape);
    let out = layer_forward(&mut tape, hv, &index, &vars).output;
    EmbeddingTable::new(tape.value(out).clone())
}

/// Runs every layer of `encoder` on the view of its role.
pub fn encode_role(view: &GraphView, h0: &EmbeddingTable, encoder: &RoleEncoder) -> Result<EmbeddingTable> {
    if view.role() != encoder.role {
        return Err(Error::InvalidArgument(format!(
            "{:?} encoder applied to {:?} view",
            encoder.role,
            view.role()
        )));
    }
    let mut h = h0.clone();
    for layer in &encoder.layers {
        h = propagate_layer(&h, view, layer)?;
    }
    Ok(h)
}

/// `g ⊙ h_trustor + (1 - g) ⊙ h_trustee` with `g = sigmoid(raw_gate)`.
pub fn fuse(h_trustor: &[f64], h_trustee: &[f64], gate: &GateParams) -> Result<Vec<f64>> {
    if h_trustor.len() != h_trustee.len() || h_trustor.len() != gate.raw_gate.cols() {
        return Err(Error::DimensionMismatch(format!(
            "fuse: trustor {}, trustee {}, gate {}",
            h_trustor.len(),
            h_trustee.len(),
            gate.raw_gate.cols()
        )));
    }
    Ok(gate
        .gate()
        .iter()
        .zip(h_trustor.iter().zip(h_trustee))
        .map(|(g, (a, b))| g * a + (1.0 - g) * b)
        .collect())
}

/// Plain per-node evaluation of a layer, used to cross-check the batched
/// path.
pub fn propagate_layer_reference(h: &EmbeddingTable, view: &GraphView, params: &LayerParams) -> Matrix {
    let n = view.num_nodes();
    let types = view.node_types();
    let mut out = Matrix::zeros(n, params.output_dim());
    for i in 0..n {
        let mut present = BTreeMap::new();
        for ty in NodeType::ALL {
            if view.row(i).any(|(j, _)| types[j] == ty) {
                present.insert(ty, type_embedding(i, ty, view, h));
            }
        }
        let alpha = type_attention(h.row(i), &present, params);
        let nbrs: Vec<usize> = view.row(i).map(|(j, _)| j).collect();
        let beta = node_attention(i, &nbrs, h, types, &alpha, params);
        let row = out.row_mut(i);
        for (&j, b) in nbrs.iter().zip(beta) {
            let w = &params.weight[types[j].index()];
            for (c, o) in row.iter_mut().enumerate() {
                let hw: f64 = h.row(j).iter().enumerate().map(|(k, x)| x * w[(k, c)]).sum();
                *o += b * hw;
            }
        }
        row.iter_mut().for_each(|x| *x = elu(*x));
    }
    out
}
