use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, ModelConfig, ModelInputs, ModelParams};
use crate::error::Result;
use crate::graph::TrustSample;
use crate::graph::{HeteroGraph, Split};
use crate::tensor::Matrix;

/// Per-tensor maximum relative error between analytic and numeric
/// gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub errors: BTreeMap<String, f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.errors.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.errors.values().all(|&e| e < self.tolerance)
    }
}

const STEP: f64 = 1e-5;
// Below this magnitude both gradients count as zero.
const FLOOR: f64 = 1e-7;

fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < FLOOR {
        (a - n).abs() / FLOOR
    } else {
        (a - n).abs() / scale
    }
}

/// Compares `analytic` against central differences of `loss` around
/// `params`, perturbing every scalar by `1e-5`.
pub fn check_gradients(
    params: &ModelParams,
    analytic: &ModelParams,
    tolerance: f64,
    mut loss: impl FnMut(&ModelParams) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    let mut errors = BTreeMap::new();
    let analytic = analytic.named();
    let names: Vec<String> = analytic.iter().map(|(n, _)| n.clone()).collect();
    for (t, name) in names.iter().enumerate() {
        let len = analytic[t].1.len();
        let mut worst: f64 = 0.0;
        for k in 0..len {
            let orig = params.named()[t].1.as_slice()[k];
            probe.named_mut()[t].1.as_mut_slice()[k] = orig + STEP;
            let up = loss(&probe)?;
            probe.named_mut()[t].1.as_mut_slice()[k] = orig - STEP;
            let down = loss(&probe)?;
            probe.named_mut()[t].1.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[t].1.as_slice()[k], numeric));
        }
        errors.insert(name.clone(), worst);
    }
    Ok(GradCheckReport { errors, tolerance })
}

/// Gradient check of the full model loss on `samples`.
pub fn grad_check(
    inputs: &ModelInputs,
    params: &ModelParams,
    samples: &[TrustSample],
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut fwd = forward(inputs, params, samples, None)?;
    let analytic = backward(&mut fwd)?;
    check_gradients(params, &analytic, tolerance, |p| {
        Ok(forward(inputs, p, samples, None)?.loss_value())
    })
}

/// Eight-node model (five users, three objects) with directed trust,
/// one augmented pair and five labelled samples.
pub fn gradcheck_fixture(cfg: &ModelConfig, seed: u64) -> (ModelInputs, ModelParams, Vec<TrustSample>) {
    let g = HeteroGraph::new(
        5,
        3,
        vec![(0, 1), (1, 2), (2, 0), (3, 4)],
        vec![(0, 5), (1, 5), (2, 6), (3, 7), (4, 7)],
        vec![(5, 6)],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = [Matrix::glorot(5, 3, &mut rng), Matrix::glorot(3, 2, &mut rng)];
    let inputs = ModelInputs::new(&g, &[(0, 2, 1.0)], features.clone()).unwrap();
    let params = ModelParams::init(cfg, &features, seed).unwrap();
    let samples = vec![
        TrustSample::positive(0, 1),
        TrustSample::positive(3, 4),
        TrustSample {
            label: false,
            ..TrustSample::positive(4, 0)
        },
        TrustSample {
            label: false,
            split: Split::Test,
            ..TrustSample::positive(1, 3)
        },
        TrustSample {
            split: Split::Test,
            ..TrustSample::positive(2, 0)
        },
    ];
    (inputs, params, samples)
}
