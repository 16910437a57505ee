//! Bag-of-words paragraph vectors (PV-DBOW) trained with negative sampling.
//!
//! Output word vectors are learned once over all documents in a canonical
//! content order; each document vector is then inferred independently with
//! the word vectors frozen and a generator seeded from the document content.
//! The result depends only on a user's own comments, not on user ids.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocEmbedConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DocEmbedConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 10,
            negatives: 5,
            min_count: 2,
            lr: 0.025,
            seed: 0,
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Vocab {
    index: HashMap<String, usize>,
    /// Cumulative unigram^0.75 distribution for negative draws.
    cdf: Vec<f64>,
}

impl Vocab {
    fn build(docs: &[Vec<String>], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for d in docs {
            for t in d {
                *counts.entry(t).or_default() += 1;
            }
        }
        let kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        let index = kept.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i)).collect();
        let mut cdf = Vec::with_capacity(kept.len());
        let mut acc = 0.0;
        for (_, c) in &kept {
            acc += (*c as f64).powf(0.75);
            cdf.push(acc);
        }
        Self { index, cdf }
    }

    fn len(&self) -> usize {
        self.cdf.len()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= x).min(self.cdf.len() - 1)
    }

    fn encode(&self, doc: &[String]) -> Vec<usize> {
        doc.iter().filter_map(|t| self.index.get(t).copied()).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::tape::sigmoid(x)
}

/// One SGD step on the pair (doc, word) plus `negatives` sampled words.
#[allow(clippy::too_many_arguments)]
fn train_pair<R: Rng>(
    doc: &mut [f64],
    words: &mut Matrix,
    update_words: bool,
    target: usize,
    vocab: &Vocab,
    negatives: usize,
    lr: f64,
    rng: &mut R,
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for k in 0..=negatives {
        let (w, label) = if k == 0 {
            (target, 1.0)
        } else {
            let w = vocab.sample(rng);
            if w == target {
                continue;
            }
            (w, 0.0)
        };
        let out = words.row_mut(w);
        let score: f64 = doc.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        let g = lr * (label - sigmoid(score));
        for (gi, o) in grad.iter_mut().zip(out.iter()) {
            *gi += g * o;
        }
        if update_words {
            for (o, d) in out.iter_mut().zip(doc.iter()) {
                *o += g * d;
            }
        }
    }
    for (d, g) in doc.iter_mut().zip(grad.iter()) {
        *d += g;
    }
}

fn content_seed(seed: u64, tokens: &[usize]) -> u64 {
    // FNV-1a over the encoded token stream
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &t in tokens {
        for b in (t as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// One vector per user from that user's comments. Users whose comments
/// contain no in-vocabulary token get the zero vector.
pub fn embed_users(corpus: &[Vec<String>], cfg: &DocEmbedConfig) -> Result<EmbeddingTable> {
    if cfg.dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let docs: Vec<Vec<String>> = corpus
        .iter()
        .map(|comments| comments.iter().flat_map(|c| tokenize(c)).collect())
        .collect();
    let vocab = Vocab::build(&docs, cfg.min_count.max(1));
    let mut out = Matrix::zeros(docs.len(), cfg.dim);
    if vocab.len() == 0 {
        return EmbeddingTable::new(out);
    }
    let encoded: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d)).collect();

    // word vectors, learned over documents sorted by content
    let mut canonical: Vec<&Vec<usize>> = encoded.iter().filter(|d| !d.is_empty()).collect();
    canonical.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = 0.5 / cfg.dim as f64;
    let mut words = Matrix::zeros(vocab.len(), cfg.dim);
    let mut doc_vecs: Vec<Vec<f64>> = canonical
        .iter()
        .map(|_| (0..cfg.dim).map(|_| rng.random_range(-init..init)).collect())
        .collect();
    let total = (cfg.epochs * canonical.iter().map(|d| d.len()).sum::<usize>()).max(1);
    let mut seen = 0usize;
    let mut grad = vec![0.0; cfg.dim];
    for _ in 0..cfg.epochs {
        for (d, tokens) in canonical.iter().enumerate() {
            for &w in tokens.iter() {
                let lr = cfg.lr * (1.0 - seen as f64 / total as f64).max(1e-4);
                seen += 1;
                train_pair(
                    &mut doc_vecs[d],
                    &mut words,
                    true,
                    w,
                    &vocab,
                    cfg.negatives,
                    lr,
                    &mut rng,
                    &mut grad,
                );
            }
        }
    }

    // per-document inference with frozen word vectors
    let per_doc = (cfg.epochs.max(1) * 2).max(20);
    for (u, tokens) in encoded.iter().enumerate() {
        if tokens.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(content_seed(cfg.seed, tokens));
        let mut v: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-init..init)).collect();
        let steps = (per_doc * tokens.len()).max(1);
        let mut k = 0usize;
        for _ in 0..per_doc {
            for &w in tokens {
                let lr = cfg.lr * (1.0 - k as f64 / steps as f64).max(1e-4);
                k += 1;
                train_pair(
                    &mut v,
                    &mut words,
                    false,
                    w,
                    &vocab,
                    cfg.negatives,
                    lr,
                    &mut rng,
                    &mut grad,
                );
            }
        }
        out.row_mut(u).copy_from_slice(&v);
    }
    EmbeddingTable::new(out)
}

/// Reads `user_id v1 ... vd` lines and orders them by `user_names`.
/// Rows for unknown users are ignored; a missing user is an error.
pub fn load_user_vectors(path: &Path, user_names: &[String], dim: usize) -> Result<EmbeddingTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut by_name: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(name) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        by_name.insert(name.to_string(), values);
    }
    let mut m = Matrix::zeros(user_names.len(), dim);
    for (u, name) in user_names.iter().enumerate() {
        let v = by_name
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no precomputed vector for user {name:?}")))?;
        m.row_mut(u).copy_from_slice(v);
    }
    EmbeddingTable::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter().map(|d| vec![d.to_string()]).collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("Great film, LOVED it!!"), vec!["great", "film", "loved", "it"]);
    }

    #[test]
    fn identical_corpora_identical_vectors() {
        let c = corpus(&["the camera works well", "the camera works well", "awful battery life"]);
        let t = embed_users(
            &c,
            &DocEmbedConfig {
                dim: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.row(0), t.row(1));
    }

    #[test]
    fn empty_corpus_is_zero() {
        let mut c = corpus(&["good phone good phone", "bad phone"]);
        c.push(Vec::new());
        let t = embed_users(
            &c,
            &DocEmbedConfig {
                dim: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.row(2), &[0.0; 4]);
        assert!(embed_users(
            &c,
            &DocEmbedConfig {
                dim: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn permutation_equivariant() {
        let c = corpus(&["alpha beta gamma alpha", "beta beta delta", "gamma delta alpha"]);
        let cfg = DocEmbedConfig {
            dim: 6,
            seed: 4,
            ..Default::default()
        };
        let a = embed_users(&c, &cfg).unwrap();
        let perm = [2, 0, 1];
        let pc: Vec<_> = perm.iter().map(|&i| c[i].clone()).collect();
        let b = embed_users(&pc, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(b.row(new), a.row(old));
        }
    }

    #[test]
    fn precomputed_vectors_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vec.txt");
        std::fs::write(&p, "u2 1 2\nu1 3 4\nextra 0 0\n").unwrap();
        let names = vec!["u1".to_string(), "u2".to_string()];
        let t = load_user_vectors(&p, &names, 2).unwrap();
        assert_eq!(t.row(0), &[3.0, 4.0]);
        assert_eq!(t.row(1), &[1.0, 2.0]);
        assert!(load_user_vectors(&p, &names, 3).is_err());
        assert!(load_user_vectors(&p, &["nobody".to_string()], 2).is_err());
    }

    #[test]
    fn shared_tokens_are_closer_than_disjoint() {
        // token-overlap oracle: user 0 and 1 share 9 of 10 tokens, user 0
        // and 4 share none
        let a = "red green blue cyan pink gold gray teal navy lime";
        let b = "red green blue cyan pink gold gray teal navy plum";
        let c = "oak elm ash fir yew pine palm bay box beech";
        let d = "oak elm ash fir yew pine palm bay box hazel";
        let e = "one two three four five six seven eight nine ten";
        let docs: Vec<Vec<String>> = [a, b, c, d, e]
            .iter()
            .map(|s| vec![s.to_string(), s.to_string()])
            .collect();
        let t = embed_users(
            &docs,
            &DocEmbedConfig {
                dim: 16,
                epochs: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let near = cosine(t.row(0), t.row(1));
        let far = cosine(t.row(0), t.row(4));
        assert!(near > far, "near {near} far {far}");
        assert!(cosine(t.row(2), t.row(3)) > cosine(t.row(2), t.row(0)));
    }
}
