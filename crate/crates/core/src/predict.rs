//! Pairwise trust predictor, loss and classification metrics.
//!
//! Class 0 is "no trust", class 1 is "trust".

use rand::Rng;

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::TrustSample;
use crate::tape::{Index, Tape, Var};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T = Matrix> {
    /// `d_in x d_out`
    pub weight: T,
    /// `1 x d_out`
    pub bias: T,
}

/// Stack of affine layers over `[z_i ‖ z_j]`. Hidden layers use ELU; the
/// last layer has two outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams<T = Matrix> {
    pub layers: Vec<Affine<T>>,
}

impl<T> PredictorParams<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> PredictorParams<U> {
        PredictorParams {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(l, a)| Affine {
                    weight: f(&format!("{prefix}.layer{l}.weight"), &a.weight),
                    bias: f(&format!("{prefix}.layer{l}.bias"), &a.bias),
                })
                .collect(),
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        for (l, a) in self.layers.iter_mut().enumerate() {
            f(format!("{prefix}.layer{l}.weight"), &mut a.weight);
            f(format!("{prefix}.layer{l}.bias"), &mut a.bias);
        }
    }
}

impl PredictorParams {
    /// `depth` affine layers; hidden widths equal `input_dim / 2`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, depth: usize, rng: &mut R) -> Self {
        let depth = depth.max(1);
        let hidden = (input_dim / 2).max(1);
        let layers = (0..depth)
            .map(|l| {
                let d_in = if l == 0 { input_dim } else { hidden };
                let d_out = if l + 1 == depth { 2 } else { hidden };
                Affine {
                    weight: Matrix::glorot(d_in, d_out, rng),
                    bias: Matrix::zeros(1, d_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    /// Pre-softmax scores for a batch of concatenated pair features.
    pub fn logits(&self, x: &Matrix) -> Matrix {
        let mut h = x.clone();
        for (l, a) in self.layers.iter().enumerate() {
            h = h.matmul(&a.weight);
            for r in 0..h.rows() {
                for (v, b) in h.row_mut(r).iter_mut().zip(a.bias.as_slice()) {
                    *v += b;
                }
            }
            if l + 1 < self.layers.len() {
                h = h.map(|v| if v > 0.0 { v } else { v.exp_m1() });
            }
        }
        h
    }
}

fn softmax2(l: &[f64]) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let (a, b) = ((l[0] - m).exp(), (l[1] - m).exp());
    [a / (a + b), b / (a + b)]
}

/// `softmax(MLP(z_i ‖ z_j))`.
pub fn predict_pair(z_i: &[f64], z_j: &[f64], params: &PredictorParams) -> Result<[f64; 2]> {
    if z_i.len() + z_j.len() != params.input_dim() || z_i.len() != z_j.len() {
        return Err(Error::DimensionMismatch(format!(
            "predictor expects {} inputs, got {} + {}",
            params.input_dim(),
            z_i.len(),
            z_j.len()
        )));
    }
    let x = Matrix::from_vec(1, z_i.len() * 2, [z_i, z_j].concat());
    Ok(softmax2(params.logits(&x).row(0)))
}

fn pair_features(samples: &[TrustSample], z: &Matrix) -> Matrix {
    let d = z.cols();
    let mut x = Matrix::zeros(samples.len(), 2 * d);
    for (r, s) in samples.iter().enumerate() {
        let row = x.row_mut(r);
        row[..d].copy_from_slice(z.row(s.trustor));
        row[d..].copy_from_slice(z.row(s.trustee));
    }
    x
}

/// Class distributions for every sample.
pub fn predict_samples(samples: &[TrustSample], z: &Matrix, params: &PredictorParams) -> Vec<[f64; 2]> {
    let logits = params.logits(&pair_features(samples, z));
    (0..samples.len()).map(|r| softmax2(logits.row(r))).collect()
}

/// Mean cross-entropy of the predictor over `samples`.
pub fn batch_loss(samples: &[TrustSample], z: &EmbeddingTable, params: &PredictorParams) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("trust samples"));
    }
    let probs = predict_samples(samples, z.matrix(), params);
    let total: f64 = probs
        .iter()
        .zip(samples)
        .map(|(p, s)| -p[usize::from(s.label)].ln())
        .sum();
    Ok(total / samples.len() as f64)
}

/// Records the predictor on `tape` and returns `samples x 2` logits.
pub fn predictor_forward(
    tape: &mut Tape,
    z: Var,
    trustors: Index,
    trustees: Index,
    params: &PredictorParams<Var>,
) -> Var {
    let a = tape.gather(z, trustors);
    let b = tape.gather(z, trustees);
    let mut h = tape.concat_cols(&[a, b]);
    for (l, layer) in params.layers.iter().enumerate() {
        h = tape.matmul(h, layer.weight);
        h = tape.add_row(h, layer.bias);
        if l + 1 < params.layers.len() {
            h = tape.elu(h);
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

/// Accuracy and positive-class F1. A sample is predicted as trust when the
/// trust probability is the larger of the two (argmax).
pub fn metrics(predictions: &[[f64; 2]], labels: &[bool]) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, &y) in predictions.iter().zip(labels) {
        let yhat = p[1] > p[0];
        correct += usize::from(yhat == y);
        match (yhat, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: Matrix, b: Vec<f64>) -> PredictorParams {
        PredictorParams {
            layers: vec![Affine {
                weight: w,
                bias: Matrix::from_vec(1, 2, b),
            }],
        }
    }

    #[test]
    fn zero_parameters_are_uniform() {
        let p = linear(Matrix::zeros(4, 2), vec![0.0, 0.0]);
        assert_eq!(predict_pair(&[1.0, 2.0], &[3.0, 4.0], &p).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn argument_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PredictorParams::init(4, 1, &mut rng);
        let a = predict_pair(&[1.0, 0.0], &[0.0, 1.0], &p).unwrap();
        let b = predict_pair(&[0.0, 1.0], &[1.0, 0.0], &p).unwrap();
        assert!((a[1] - b[1]).abs() > 1e-6);
    }

    #[test]
    fn matches_affine_softmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PredictorParams::init(6, 1, &mut rng);
        let zi = [0.3, -0.2, 0.9];
        let zj = [-1.0, 0.4, 0.1];
        let x: Vec<f64> = zi.iter().chain(&zj).copied().collect();
        let w = &p.layers[0].weight;
        let l: Vec<f64> = (0..2).map(|c| (0..6).map(|k| x[k] * w[(k, c)]).sum::<f64>()).collect();
        let e1 = (l[1] - l[0]).exp();
        let got = predict_pair(&zi, &zj, &p).unwrap();
        assert!((got[1] - e1 / (1.0 + e1)).abs() < 1e-9);
        assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
        assert!(predict_pair(&zi, &zj[..2], &p).is_err());
    }

    #[test]
    fn loss_values() {
        let z = EmbeddingTable::new(Matrix::from_rows(&[vec![1.0], vec![-1.0]])).unwrap();
        let uniform = linear(Matrix::zeros(2, 2), vec![0.0, 0.0]);
        let samples = [TrustSample::positive(0, 1)];
        assert!((batch_loss(&samples, &z, &uniform).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let sure = linear(Matrix::zeros(2, 2), vec![-800.0, 800.0]);
        assert_eq!(batch_loss(&samples, &z, &sure).unwrap(), 0.0);
        assert!(batch_loss(&[], &z, &sure).is_err());
    }

    #[test]
    fn loss_matches_per_sample_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = EmbeddingTable::new(Matrix::glorot(5, 3, &mut rng)).unwrap();
        let p = PredictorParams::init(6, 1, &mut rng);
        let samples: Vec<TrustSample> = (0..8)
            .map(|k| TrustSample {
                label: k % 3 == 0,
                ..TrustSample::positive(k % 5, (k + 2) % 5)
            })
            .collect();
        let mut total = 0.0;
        for s in &samples {
            let pr = predict_pair(z.row(s.trustor), z.row(s.trustee), &p).unwrap();
            total -= if s.label { pr[1].ln() } else { pr[0].ln() };
        }
        assert!((batch_loss(&samples, &z, &p).unwrap() - total / 8.0).abs() < 1e-12);
    }

    #[test]
    fn metric_cases() {
        let yes = [0.2, 0.8];
        let no = [0.7, 0.3];
        let m = metrics(&[yes, no], &[true, false]).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        let m = metrics(&[yes; 4], &[true, false, true, false]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn metrics_match_confusion_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let preds: Vec<[f64; 2]> = (0..20)
            .map(|_| {
                let p: f64 = rng.random();
                [1.0 - p, p]
            })
            .collect();
        let labels: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for (p, &y) in preds.iter().zip(&labels) {
            match (p[1] > 0.5, y) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        let precision = tp / (tp + fp);
        let recall = tp / (tp + fn_);
        let m = metrics(&preds, &labels).unwrap();
        assert!((m.accuracy - (tp + tn) / 20.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-12);
    }

    #[test]
    fn tape_logits_match_plain_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = Matrix::glorot(4, 3, &mut rng);
        let p = PredictorParams::init(6, 2, &mut rng);
        let samples = [TrustSample::positive(0, 1), TrustSample::positive(3, 2)];
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let vars = p.map("p", &mut |_, m| tape.param(m.clone()));
        let out = predictor_forward(&mut tape, zv, vec![0, 3].into(), vec![1, 2].into(), &vars);
        let plain = p.logits(&pair_features(&samples, &z));
        assert!(tape.value(out).max_abs_diff(&plain) < 1e-14);
    }
}
