//! Full model: parameters, forward pass on the tape, optimizer and the
//! training loop.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{check_gradients, grad_check, gradcheck_fixture, GradCheckReport};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{layer_forward, GateParams, RoleEncoder, ViewIndex};
use crate::error::{Error, Result};
use crate::graph::{build_view_weighted, HeteroGraph, Role, Split, TrustSample};
use crate::predict::{metrics, predict_samples, predictor_forward, Metrics, PredictorParams};
use crate::tape::{Gradients, Index, Tape, Var};
use crate::tensor::Matrix;

/// How the two role embeddings of a user are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Gate,
    Concat,
}

/// Architecture of the trust model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub num_layers: usize,
    pub trustor: bool,
    pub trustee: bool,
    pub fusion: Fusion,
    pub predictor_depth: usize,
    /// Train the initial node features together with the network.
    pub learn_inputs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            num_layers: 2,
            trustor: true,
            trustee: true,
            fusion: Fusion::Gate,
            predictor_depth: 1,
            learn_inputs: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if !self.trustor && !self.trustee {
            return Err(Error::Config("at least one role must be enabled".into()));
        }
        if self.predictor_depth == 0 {
            return Err(Error::Config("predictor_depth must be at least 1".into()));
        }
        Ok(())
    }

    fn embedding_width(&self) -> usize {
        if self.trustor && self.trustee && self.fusion == Fusion::Concat {
            2 * self.latent_dim
        } else {
            self.latent_dim
        }
    }
}

/// Every trainable tensor of the model. The same shape holds values,
/// gradients, optimizer moments and tape variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Matrix> {
    /// Learned initial features per node type, when enabled.
    pub inputs: Option<[T; 2]>,
    /// `latent x d_in` projection per node type.
    pub projection: [T; 2],
    pub trustor: Option<RoleEncoder<T>>,
    pub trustee: Option<RoleEncoder<T>>,
    pub gate: Option<GateParams<T>>,
    pub predictor: PredictorParams<T>,
}

impl<T> ModelParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> ModelParams<U> {
        ModelParams {
            inputs: self
                .inputs
                .as_ref()
                .map(|[u, o]| [f("inputs.user", u), f("inputs.object", o)]),
            projection: [
                f("projection.user", &self.projection[0]),
                f("projection.object", &self.projection[1]),
            ],
            trustor: self.trustor.as_ref().map(|e| e.map("trustor", f)),
            trustee: self.trustee.as_ref().map(|e| e.map("trustee", f)),
            gate: self.gate.as_ref().map(|g| g.map("gate", f)),
            predictor: self.predictor.map("predictor", f),
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut T)) {
        if let Some([u, o]) = &mut self.inputs {
            f("inputs.user".into(), u);
            f("inputs.object".into(), o);
        }
        let [pu, po] = &mut self.projection;
        f("projection.user".into(), pu);
        f("projection.object".into(), po);
        if let Some(e) = &mut self.trustor {
            e.for_each_mut("trustor", f);
        }
        if let Some(e) = &mut self.trustee {
            e.for_each_mut("trustee", f);
        }
        if let Some(g) = &mut self.gate {
            g.for_each_mut("gate", f);
        }
        self.predictor.for_each_mut("predictor", f);
    }

    /// `(name, tensor)` in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::new();
        self.for_each_mut(&mut |n, t| out.push((n, t)));
        out
    }
}

/// Gates and biases are exempt from weight decay.
pub fn decays(name: &str) -> bool {
    !(name.ends_with("bias") || name.starts_with("gate"))
}

impl ModelParams {
    /// Fresh parameters. `features` are the initial tables, which become
    /// trainable when `cfg.learn_inputs` is set.
    pub fn init(cfg: &ModelConfig, features: &[Matrix; 2], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.latent_dim;
        let projection = [
            Matrix::glorot(d, features[0].cols(), &mut rng),
            Matrix::glorot(d, features[1].cols(), &mut rng),
        ];
        let trustor = cfg
            .trustor
            .then(|| RoleEncoder::init(Role::Trustor, d, cfg.num_layers, &mut rng));
        let trustee = cfg
            .trustee
            .then(|| RoleEncoder::init(Role::Trustee, d, cfg.num_layers, &mut rng));
        let gate = (cfg.trustor && cfg.trustee && cfg.fusion == Fusion::Gate).then(|| GateParams::zeros(d));
        let predictor = PredictorParams::init(2 * cfg.embedding_width(), cfg.predictor_depth, &mut rng);
        Ok(Self {
            inputs: cfg.learn_inputs.then(|| features.clone()),
            projection,
            trustor,
            trustee,
            gate,
            predictor,
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.map(&mut |_, m| Matrix::zeros(m.rows(), m.cols()))
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, m)| m.is_finite())
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }
}

/// Graph structure and initial features shared by every forward pass.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    pub num_users: usize,
    /// Initial user and object features.
    pub features: [Matrix; 2],
    /// View indices for the trustor and trustee roles.
    pub views: [ViewIndex; 2],
}

impl ModelInputs {
    /// `augmented` are extra trust pairs (with weights) from PPR.
    pub fn new(graph: &HeteroGraph, augmented: &[(usize, usize, f64)], features: [Matrix; 2]) -> Result<Self> {
        if features[0].rows() != graph.num_users() || features[1].rows() != graph.num_objects() {
            return Err(Error::DimensionMismatch(format!(
                "features for {} users and {} objects, graph has {} and {}",
                features[0].rows(),
                features[1].rows(),
                graph.num_users(),
                graph.num_objects()
            )));
        }
        let views =
            [Role::Trustor, Role::Trustee].map(|role| ViewIndex::new(&build_view_weighted(graph, augmented, role)));
        Ok(Self {
            num_users: graph.num_users(),
            features,
            views,
        })
    }
}

/// Dropout on conv layer inputs during training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    pub vars: ModelParams<Var>,
    /// Fused user embeddings.
    pub z: Var,
    pub logits: Var,
    pub loss: Var,
}

impl Forward {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).as_slice()[0]
    }
}

fn check_inputs(inputs: &ModelInputs, params: &ModelParams) -> Result<()> {
    let features = params.inputs.as_ref().unwrap_or(&inputs.features);
    for t in 0..2 {
        if features[t].cols() != params.projection[t].cols() {
            return Err(Error::DimensionMismatch(format!(
                "projection expects {} input features, got {}",
                params.projection[t].cols(),
                features[t].cols()
            )));
        }
    }
    Ok(())
}

fn encode(tape: &mut Tape, inputs: &ModelInputs, vars: &ModelParams<Var>, mut dropout: Option<Dropout<'_>>) -> Var {
    let [fu, fo] = match &vars.inputs {
        Some(v) => *v,
        None => [
            tape.constant(inputs.features[0].clone()),
            tape.constant(inputs.features[1].clone()),
        ],
    };
    let hu = tape.matmul_t(fu, vars.projection[0]);
    let ho = tape.matmul_t(fo, vars.projection[1]);
    let h0 = tape.concat_rows(&[hu, ho]);

    let mut roles = Vec::with_capacity(2);
    for (encoder, index) in [(&vars.trustor, &inputs.views[0]), (&vars.trustee, &inputs.views[1])] {
        let Some(encoder) = encoder else {
            continue;
        };
        let mut h = h0;
        for layer in &encoder.layers {
            if let Some(d) = dropout.as_mut().filter(|d| d.rate > 0.0) {
                let (r, c) = tape.value(h).shape();
                let keep = 1.0 - d.rate;
                let mask = (0..r * c)
                    .map(|_| if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = tape.constant(Matrix::from_vec(r, c, mask));
                h = tape.mul(h, mask);
            }
            h = layer_forward(tape, h, index, layer).output;
        }
        roles.push(tape.slice_rows(h, 0, inputs.num_users));
    }

    match (roles.as_slice(), &vars.gate) {
        ([only], _) => *only,
        (&[h, hb], Some(gate)) => {
            // z = h̄ + g ⊙ (h - h̄)
            let g = tape.sigmoid(gate.raw_gate);
            let diff = tape.sub(h, hb);
            let gated = tape.mul_row(diff, g);
            tape.add(hb, gated)
        }
        (&[h, hb], None) => tape.concat_cols(&[h, hb]),
        _ => unreachable!("config validation guarantees one or two roles"),
    }
}

/// Projection, both role encoders, fusion and the predictor loss over
/// `samples`.
pub fn forward(
    inputs: &ModelInputs,
    params: &ModelParams,
    samples: &[TrustSample],
    dropout: Option<Dropout<'_>>,
) -> Result<Forward> {
    if samples.is_empty() {
        return Err(Error::Empty("trust samples"));
    }
    check_inputs(inputs, params)?;
    let mut tape = Tape::new();
    let vars = params.map(&mut |_, m| tape.param(m.clone()));
    let z = encode(&mut tape, inputs, &vars, dropout);
    let trustors: Index = samples.iter().map(|s| s.trustor).collect::<Vec<_>>().into();
    let trustees: Index = samples.iter().map(|s| s.trustee).collect::<Vec<_>>().into();
    let labels: Index = Arc::from(samples.iter().map(|s| usize::from(s.label)).collect::<Vec<_>>());
    let logits = predictor_forward(&mut tape, z, trustors, trustees, &vars.predictor);
    let loss = tape.softmax_cross_entropy(logits, labels);
    Ok(Forward {
        tape,
        vars,
        z,
        logits,
        loss,
    })
}

/// Gradient of the loss with respect to every parameter. Fails when the
/// forward pass has already been differentiated.
pub fn backward(fwd: &mut Forward) -> Result<ModelParams> {
    let mut grads: Gradients = fwd.tape.backward(fwd.loss)?;
    let out = fwd.vars.map(&mut |_, &v| grads.take(v));
    if !out.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    Ok(out)
}

/// Fused user embeddings without recording gradients.
pub fn user_embeddings(inputs: &ModelInputs, params: &ModelParams) -> Result<Matrix> {
    check_inputs(inputs, params)?;
    let mut tape = Tape::new();
    let vars = params.map(&mut |_, m| tape.constant(m.clone()));
    let z = encode(&mut tape, inputs, &vars, None);
    Ok(tape.value(z).clone())
}

pub fn evaluate(inputs: &ModelInputs, params: &ModelParams, samples: &[TrustSample]) -> Result<Metrics> {
    let z = user_embeddings(inputs, params)?;
    let probs = predict_samples(samples, &z, &params.predictor);
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    metrics(&probs, &labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            adam: AdamConfig::default(),
            dropout: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub test_accuracy: f64,
    pub test_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Test metrics at the epoch with the highest test accuracy.
    pub best: Metrics,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
    /// Parameters at `best_epoch`.
    pub params: ModelParams,
}

/// Full-batch training on the train split, evaluating the test split
/// before every update.
pub fn train(
    inputs: &ModelInputs,
    mut params: ModelParams,
    samples: &[TrustSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config(format!(
            "dropout must lie in [0, 1), got {}",
            cfg.dropout
        )));
    }
    let train_set: Vec<TrustSample> = samples.iter().filter(|s| s.split == Split::Train).copied().collect();
    let test_set: Vec<TrustSample> = samples.iter().filter(|s| s.split == Split::Test).copied().collect();
    if test_set.is_empty() {
        return Err(Error::Empty("test samples"));
    }
    let test_labels: Vec<bool> = test_set.iter().map(|s| s.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(&params);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Metrics, usize, ModelParams)> = None;

    for epoch in 0..=cfg.epochs {
        let dropout = (cfg.dropout > 0.0).then(|| Dropout {
            rate: cfg.dropout,
            rng: &mut rng,
        });
        let mut fwd = forward(inputs, &params, &train_set, dropout)?;
        let loss = fwd.loss_value();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        let z = if cfg.dropout > 0.0 {
            user_embeddings(inputs, &params)?
        } else {
            fwd.tape.value(fwd.z).clone()
        };
        let m = metrics(&predict_samples(&test_set, &z, &params.predictor), &test_labels)?;
        if best.as_ref().is_none_or(|b| m.accuracy > b.0.accuracy) {
            best = Some((m, epoch, params.clone()));
        }
        if epoch == cfg.epochs {
            break;
        }
        trace.push(EpochRecord {
            epoch,
            loss,
            test_accuracy: m.accuracy,
            test_f1: m.f1,
        });
        let grads = backward(&mut fwd)?;
        adam_step(&mut params, &grads, &mut state, &cfg.adam);
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
    }
    let (best, best_epoch, params) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        best,
        best_epoch,
        trace,
        params,
    })
}
