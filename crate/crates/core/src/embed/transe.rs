use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KnowledgeTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Entity and relation translation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct TransEModel {
    entities: Matrix,
    relations: Matrix,
}

impl TransEModel {
    pub fn from_parts(entities: Matrix, relations: Matrix) -> Result<Self> {
        if entities.cols() != relations.cols() {
            return Err(Error::DimensionMismatch(
                "entity and relation vectors differ in dimension".into(),
            ));
        }
        Ok(Self { entities, relations })
    }

    pub fn dim(&self) -> usize {
        self.entities.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn entity(&self, e: usize) -> &[f64] {
        self.entities.row(e)
    }

    pub fn relation(&self, r: usize) -> &[f64] {
        self.relations.row(r)
    }

    fn distance(&self, t: &KnowledgeTriple) -> f64 {
        let (h, r, tl) = (self.entity(t.head), self.relation(t.relation), self.entity(t.tail));
        h.iter().zip(r).zip(tl).map(|((a, b), c)| (a + b - c).powi(2)).sum()
    }
}

/// `-‖h + r - t‖²`; larger means the triple is more plausible.
pub fn transe_score(model: &TransEModel, triple: &KnowledgeTriple) -> f64 {
    -model.distance(triple)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub neg_per_pos: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            margin: 1.0,
            epochs: 200,
            neg_per_pos: 1,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Margin-ranking training with uniform head-or-tail corruption. Entity
/// vectors are renormalized to unit length after every epoch.
pub fn transe_train(
    triples: &[KnowledgeTriple],
    num_entities: usize,
    num_relations: usize,
    cfg: &TransEConfig,
) -> Result<TransEModel> {
    transe_train_observed(triples, num_entities, num_relations, cfg, |_, _| {})
}

/// [`transe_train`] with a callback invoked after each epoch.
pub fn transe_train_observed(
    triples: &[KnowledgeTriple],
    num_entities: usize,
    num_relations: usize,
    cfg: &TransEConfig,
    mut on_epoch: impl FnMut(usize, &TransEModel),
) -> Result<TransEModel> {
    if triples.is_empty() {
        return Err(Error::Empty("knowledge triples"));
    }
    if !(cfg.margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "margin must be positive, got {}",
            cfg.margin
        )));
    }
    if cfg.dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    for t in triples {
        if t.head >= num_entities || t.tail >= num_entities || t.relation >= num_relations {
            return Err(Error::InvalidArgument(format!("triple {t:?} out of range")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 6.0 / (cfg.dim as f64).sqrt();
    let mut uniform = |rows: usize| {
        let data = (0..rows * cfg.dim).map(|_| rng.random_range(-bound..bound)).collect();
        Matrix::from_vec(rows, cfg.dim, data)
    };
    let mut model = TransEModel {
        entities: uniform(num_entities),
        relations: uniform(num_relations),
    };
    for i in 0..num_relations {
        normalize(model.relations.row_mut(i));
    }
    for i in 0..num_entities {
        normalize(model.entities.row_mut(i));
    }

    let mut order: Vec<usize> = (0..triples.len()).collect();
    let d = cfg.dim;
    let mut diff_pos = vec![0.0; d];
    let mut diff_neg = vec![0.0; d];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let pos = triples[k];
            for _ in 0..cfg.neg_per_pos {
                let mut neg = pos;
                loop {
                    let e = rng.random_range(0..num_entities);
                    if rng.random_bool(0.5) {
                        neg.head = e;
                    } else {
                        neg.tail = e;
                    }
                    if neg != pos || num_entities == 1 {
                        break;
                    }
                }
                let dp = model.distance(&pos);
                let dn = model.distance(&neg);
                if cfg.margin + dp - dn <= 0.0 {
                    continue;
                }
                for j in 0..d {
                    diff_pos[j] = model.entities[(pos.head, j)] + model.relations[(pos.relation, j)]
                        - model.entities[(pos.tail, j)];
                    diff_neg[j] = model.entities[(neg.head, j)] + model.relations[(neg.relation, j)]
                        - model.entities[(neg.tail, j)];
                }
                // loss = margin + ‖dp‖² - ‖dn‖²
                let step = 2.0 * cfg.lr;
                for j in 0..d {
                    model.entities[(pos.head, j)] -= step * diff_pos[j];
                    model.entities[(pos.tail, j)] += step * diff_pos[j];
                    model.relations[(pos.relation, j)] -= step * (diff_pos[j] - diff_neg[j]);
                    model.entities[(neg.head, j)] += step * diff_neg[j];
                    model.entities[(neg.tail, j)] -= step * diff_neg[j];
                }
            }
        }
        for i in 0..num_entities {
            normalize(model.entities.row_mut(i));
        }
        on_epoch(epoch, &model);
    }
    Ok(model)
}

/// Triples with entity and relation names mapped to dense ids in order of
/// first appearance.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    pub triples: Vec<KnowledgeTriple>,
    entity_index: HashMap<String, usize>,
}

impl KnowledgeGraph {
    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    /// Keeps only triples whose head is in `heads`.
    pub fn restricted_to_heads(&self, heads: &[usize]) -> Vec<KnowledgeTriple> {
        let set: std::collections::HashSet<usize> = heads.iter().copied().collect();
        self.triples.iter().filter(|t| set.contains(&t.head)).copied().collect()
    }
}

#[derive(Deserialize)]
struct TripleRow {
    head_entity: String,
    relation: String,
    tail_entity: String,
}

/// Reads `head_entity,relation,tail_entity` rows (header required).
pub fn load_triples(path: &Path) -> Result<KnowledgeGraph> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut kg = KnowledgeGraph::default();
    let mut relation_index: HashMap<String, usize> = HashMap::new();
    for row in rdr.deserialize::<TripleRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let entity = |name: String, kg: &mut KnowledgeGraph| {
            let next = kg.entity_names.len();
            *kg.entity_index.entry(name.clone()).or_insert_with(|| {
                kg.entity_names.push(name);
                next
            })
        };
        let head = entity(row.head_entity, &mut kg);
        let tail = entity(row.tail_entity, &mut kg);
        let next = kg.relation_names.len();
        let relation = *relation_index.entry(row.relation.clone()).or_insert_with(|| {
            kg.relation_names.push(row.relation);
            next
        });
        kg.triples.push(KnowledgeTriple { head, relation, tail });
    }
    Ok(kg)
}
