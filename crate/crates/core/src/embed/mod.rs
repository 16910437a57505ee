//! Initial node embeddings and the type-specific projection into the shared
//! latent space.

mod doc;
mod transe;

pub use doc::{embed_users, load_user_vectors, tokenize, DocEmbedConfig};
pub use transe::{
    load_triples, transe_score, transe_train, transe_train_observed, KnowledgeGraph, KnowledgeTriple, TransEConfig,
    TransEModel,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::tensor::Matrix;

/// Dense per-node vectors for one pipeline stage.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if !vectors.is_finite() {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(Self { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn into_matrix(self) -> Matrix {
        self.vectors
    }
}

/// `rows` random vectors of unit L2 norm, reproducible from `seed`.
pub fn random_unit_table(rows: usize, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::standard_normal(rows, dim, &mut rng);
    for i in 0..rows {
        normalize(m.row_mut(i));
    }
    EmbeddingTable::new(m)
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Object embeddings: aligned objects copy their entity vector from the
/// knowledge-graph model; the rest get seeded random unit vectors.
///
/// `alignment[k]` is the entity id of the `k`-th object, if any.
pub fn init_objects(
    graph: &HeteroGraph,
    alignment: &[Option<usize>],
    model: Option<&TransEModel>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let n = graph.num_objects();
    if let Some(m) = model {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "knowledge-graph dimension {} differs from object dimension {dim}",
                m.dim()
            )));
        }
    }
    let mut table = random_unit_table(n, dim, seed)?.into_matrix();
    if let Some(m) = model {
        for (k, entity) in alignment.iter().enumerate().take(n) {
            if let Some(e) = *entity {
                table.row_mut(k).copy_from_slice(m.entity(e));
            }
        }
    }
    EmbeddingTable::new(table)
}

/// Row-wise `h' = W h` with `weight` shaped `out x in`.
pub fn project(table: &EmbeddingTable, weight: &Matrix) -> Result<EmbeddingTable> {
    if weight.cols() != table.dim() {
        return Err(Error::DimensionMismatch(format!(
            "projection expects input dimension {}, table has {}",
            weight.cols(),
            table.dim()
        )));
    }
    EmbeddingTable::new(table.matrix().matmul_t(weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identity_projection_and_zero_row() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 0.0, 0.0]]);
        let t = EmbeddingTable::new(m.clone()).unwrap();
        let p = project(&t, &Matrix::identity(3)).unwrap();
        assert_eq!(p.matrix(), &m);
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let p = project(&t, &w).unwrap();
        assert_eq!(p.row(1), &[0.0, 0.0]);
        assert!(project(&t, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn projection_matches_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::glorot(3, 4, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = EmbeddingTable::new(Matrix::from_vec(1, 4, x.clone())).unwrap();
        let p = project(&t, &w).unwrap();
        for r in 0..3 {
            let mut acc = 0.0;
            for c in 0..4 {
                acc += w[(r, c)] * x[c];
            }
            assert!((p.row(0)[r] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn unaligned_objects_are_random_and_seeded() {
        let g = HeteroGraph::new(1, 4, vec![], vec![], vec![]).unwrap();
        let a = init_objects(&g, &[None; 4], None, 5, 9).unwrap();
        let b = init_objects(&g, &[None; 4], None, 5, 9).unwrap();
        let c = init_objects(&g, &[None; 4], None, 5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for i in 0..4 {
            let n: f64 = a.row(i).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_objects_copy_entities() {
        let g = HeteroGraph::new(1, 4, vec![], vec![], vec![]).unwrap();
        let triples = vec![KnowledgeTriple {
            head: 0,
            relation: 0,
            tail: 1,
        }];
        let cfg = TransEConfig {
            dim: 6,
            epochs: 3,
            ..TransEConfig::default()
        };
        let model = transe_train(&triples, 5, 1, &cfg).unwrap();

        let full = [Some(4), Some(3), Some(2), Some(1)];
        let t = init_objects(&g, &full, Some(&model), 6, 1).unwrap();
        for (k, e) in full.iter().enumerate() {
            assert_eq!(t.row(k), model.entity(e.unwrap()));
        }

        let half = [Some(0), None, Some(2), None];
        let t = init_objects(&g, &half, Some(&model), 6, 1).unwrap();
        let random = init_objects(&g, &[None; 4], None, 6, 1).unwrap();
        for k in 0..4 {
            match half[k] {
                Some(e) => assert_eq!(t.row(k), model.entity(e)),
                None => {
                    assert_eq!(t.row(k), random.row(k));
                    assert!((0..5).all(|e| t.row(k) != model.entity(e)));
                }
            }
        }
        assert!(init_objects(&g, &full, Some(&model), 7, 1).is_err());
    }
}
