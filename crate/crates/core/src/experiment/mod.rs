//! Experiment harness: repeated seeded runs, ablations, sweeps and CSV
//! output.

mod config;
pub mod fixtures;

pub use config::{config_diff, DatasetConfig, DatasetKind, ExperimentConfig, PprConfig, RolesConfig, TriplesConfig};

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{
    embed_users, init_objects, load_triples, load_user_vectors, random_unit_table, transe_train, TransEModel,
};
use crate::error::{Error, Result};
use crate::graph::{load_filmtrust, load_siot_csv, split_samples, HeteroGraph, Split, TrustSample};
use crate::par::{self, Execution};
use crate::ppr::topk_augment_with;
use crate::predict::Metrics;
use crate::tensor::Matrix;
use crate::train::{train, EpochRecord, Fusion, ModelInputs, ModelParams, TrainOutcome};

/// Dataset plus the seed-independent side information derived from it.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub label: String,
    pub graph: HeteroGraph,
    pub positives: Vec<TrustSample>,
    pub user_features: Option<Matrix>,
    /// Entity model and per-object entity ids, when triples are enabled.
    pub knowledge: Option<(TransEModel, Vec<Option<usize>>)>,
}

/// Loads the dataset and computes comment and knowledge-graph embeddings.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let label = cfg.dataset.label();
    match cfg.dataset.kind {
        DatasetKind::Filmtrust => {
            let dir = &cfg.dataset.path;
            let data = load_filmtrust(&dir.join("ratings.txt"), &dir.join("trust.txt"))?;
            if data.skipped_self_trust > 0 {
                log::warn!("skipped {} self-trust lines", data.skipped_self_trust);
            }
            let user_features = match &cfg.user_vectors {
                Some(p) => Some(load_user_vectors(p, &data.user_names, cfg.input_dim)?.into_matrix()),
                None => None,
            };
            Ok(Prepared {
                label,
                graph: data.graph,
                positives: data.positives,
                user_features,
                knowledge: None,
            })
        }
        DatasetKind::Siot => {
            let ds = load_siot_csv(
                &cfg.dataset.path,
                cfg.dataset.min_user_comments,
                cfg.dataset.min_object_comments,
            )?;
            let user_features = match &cfg.user_vectors {
                Some(p) => load_user_vectors(p, &ds.data.user_names, cfg.input_dim)?,
                None => embed_users(&ds.corpus, &cfg.doc)?,
            };
            let knowledge = if cfg.triples.enabled {
                let kg = load_triples(&cfg.triples_path())?;
                let alignment: Vec<Option<usize>> = ds
                    .alignment
                    .iter()
                    .map(|name| name.as_deref().and_then(|n| kg.entity_id(n)))
                    .collect();
                let triples = if cfg.triples.full_kg {
                    kg.triples.clone()
                } else {
                    let heads: Vec<usize> = alignment.iter().flatten().copied().collect();
                    kg.restricted_to_heads(&heads)
                };
                let model = transe_train(
                    &triples,
                    kg.entity_names.len(),
                    kg.relation_names.len(),
                    &cfg.triples.transe,
                )?;
                info!(
                    "knowledge graph: {} triples, {} of {} objects aligned",
                    triples.len(),
                    alignment.iter().flatten().count(),
                    alignment.len()
                );
                Some((model, alignment))
            } else {
                None
            };
            Ok(Prepared {
                label,
                graph: ds.data.graph,
                positives: ds.data.positives,
                user_features: Some(user_features.into_matrix()),
                knowledge,
            })
        }
    }
}

/// Seeds of the individual runs, derived from the master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.random()).collect()
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

/// Split, augmentation, features and training for one seed.
pub fn run_seed(prepared: &Prepared, cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let samples = split_samples(&prepared.graph, &prepared.positives, cfg.train_ratio, sub_seed(seed, 1))?;
    let train_edges: Vec<(usize, usize)> = samples
        .iter()
        .filter(|s| s.label && s.split == Split::Train)
        .map(|s| (s.trustor, s.trustee))
        .collect();
    let graph = prepared.graph.with_trust_edges(train_edges)?;

    let augmented: Vec<(usize, usize, f64)> = if cfg.ppr.enabled {
        topk_augment_with(
            Execution::Sequential,
            &graph,
            cfg.ppr.k,
            cfg.ppr.lambda,
            cfg.ppr.epsilon,
            cfg.ppr.transition,
        )?
        .into_iter()
        .map(|(a, b, p)| (a, b, if cfg.ppr.weighted { p } else { 1.0 }))
        .collect()
    } else {
        Vec::new()
    };

    let users = match &prepared.user_features {
        Some(m) => m.clone(),
        None => random_unit_table(graph.num_users(), cfg.input_dim, sub_seed(seed, 2))?.into_matrix(),
    };
    let (model, alignment) = match &prepared.knowledge {
        Some((m, a)) => (Some(m), a.clone()),
        None => (None, Vec::new()),
    };
    let objects = init_objects(&graph, &alignment, model, cfg.input_dim, sub_seed(seed, 3))?.into_matrix();
    let features = [users, objects];

    let inputs = ModelInputs::new(&graph, &augmented, features.clone())?;
    let params = ModelParams::init(&cfg.model(), &features, sub_seed(seed, 4))?;
    debug!(
        "seed {seed}: {} samples, {} augmented pairs, {} parameters",
        samples.len(),
        augmented.len(),
        params.num_scalars()
    );
    train(&inputs, params, &samples, &cfg.train(), sub_seed(seed, 5))
}

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub ratio: f64,
    /// Run seed, or `mean` for the average over runs.
    pub seed: String,
    pub variant: String,
    pub accuracy: f64,
    pub f1: f64,
}

pub const METRICS_HEADER: &str = "dataset,ratio,seed,variant,accuracy,f1";

#[derive(Clone, Debug)]
pub struct RunReport {
    /// One row per seed followed by the mean row.
    pub rows: Vec<MetricsRow>,
    pub mean: Metrics,
    /// Trace of the first seed.
    pub trace: Vec<EpochRecord>,
    /// Best parameters of the first seed.
    pub params: ModelParams,
}

/// Runs `cfg.runs` seeds and averages the best-epoch test metrics.
pub fn run(cfg: &ExperimentConfig, variant: &str, exec: Execution) -> Result<RunReport> {
    let prepared = prepare(cfg)?;
    run_prepared(&prepared, cfg, variant, exec)
}

pub fn run_prepared(prepared: &Prepared, cfg: &ExperimentConfig, variant: &str, exec: Execution) -> Result<RunReport> {
    cfg.validate()?;
    let seeds = derive_seeds(cfg.seed, cfg.runs);
    let outcomes = par::map_range_with(exec, seeds.len(), |i| run_seed(prepared, cfg, seeds[i]));
    let outcomes: Vec<TrainOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut rows: Vec<MetricsRow> = seeds
        .iter()
        .zip(&outcomes)
        .map(|(s, o)| MetricsRow {
            dataset: prepared.label.clone(),
            ratio: cfg.train_ratio,
            seed: s.to_string(),
            variant: variant.to_string(),
            accuracy: o.best.accuracy,
            f1: o.best.f1,
        })
        .collect();
    let n = outcomes.len() as f64;
    let mean = Metrics {
        accuracy: outcomes.iter().map(|o| o.best.accuracy).sum::<f64>() / n,
        f1: outcomes.iter().map(|o| o.best.f1).sum::<f64>() / n,
    };
    rows.push(MetricsRow {
        seed: "mean".into(),
        accuracy: mean.accuracy,
        f1: mean.f1,
        ..rows[0].clone()
    });
    info!(
        "{} {variant} ratio {}: accuracy {:.2}, f1 {:.2}",
        prepared.label,
        cfg.train_ratio,
        100.0 * mean.accuracy,
        100.0 * mean.f1
    );
    let first = outcomes.into_iter().next().expect("runs >= 1");
    Ok(RunReport {
        rows,
        mean,
        trace: first.trace,
        params: first.params,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "woTriples")]
    WoTriples,
    #[serde(rename = "woPPR")]
    WoPpr,
    #[serde(rename = "woTrustee")]
    WoTrustee,
    #[serde(rename = "woTrustor")]
    WoTrustor,
    #[serde(rename = "concat")]
    Concat,
}

impl Variant {
    pub const ABLATIONS: [Variant; 5] = [
        Variant::WoTriples,
        Variant::WoPpr,
        Variant::WoTrustee,
        Variant::WoTrustor,
        Variant::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoTriples => "woTriples",
            Variant::WoPpr => "woPPR",
            Variant::WoTrustee => "woTrustee",
            Variant::WoTrustor => "woTrustor",
            Variant::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Variant::Full]
            .into_iter()
            .chain(Self::ABLATIONS)
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    /// The base config with exactly this variant's modification.
    pub fn apply(self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let inapplicable = |why: &str| Err(Error::Config(format!("{} is not applicable: {why}", self.name())));
        match self {
            Variant::Full => {}
            Variant::WoTriples => {
                if !base.triples.enabled {
                    return inapplicable("base config does not use triples");
                }
                cfg.triples.enabled = false;
            }
            Variant::WoPpr => {
                if !base.ppr.enabled {
                    return inapplicable("PPR augmentation is already off");
                }
                cfg.ppr.enabled = false;
            }
            Variant::WoTrustee => {
                if !(base.roles.trustee_enabled && base.roles.trustor_enabled) {
                    return inapplicable("base config must enable both roles");
                }
                cfg.roles.trustee_enabled = false;
            }
            Variant::WoTrustor => {
                if !(base.roles.trustee_enabled && base.roles.trustor_enabled) {
                    return inapplicable("base config must enable both roles");
                }
                cfg.roles.trustor_enabled = false;
            }
            Variant::Concat => {
                if base.fusion == Fusion::Concat {
                    return inapplicable("base config already concatenates");
                }
                cfg.fusion = Fusion::Concat;
            }
        }
        debug_assert!(config_diff(base, &cfg).len() <= 1);
        Ok(cfg)
    }
}

pub fn ablate(base: &ExperimentConfig, variant: Variant, exec: Execution) -> Result<RunReport> {
    let cfg = variant.apply(base)?;
    run(&cfg, variant.name(), exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PprK,
    LatentDim,
    TrainRatio,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ppr_k" | "k" => Ok(SweepParam::PprK),
            "latent_dim" | "dim" => Ok(SweepParam::LatentDim),
            "train_ratio" | "ratio" => Ok(SweepParam::TrainRatio),
            _ => Err(Error::Config(format!("unknown sweep parameter {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PprK => "ppr_k",
            SweepParam::LatentDim => "latent_dim",
            SweepParam::TrainRatio => "train_ratio",
        }
    }

    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} needs a positive integer, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::PprK => cfg.ppr.k = count()?,
            SweepParam::LatentDim => cfg.latent_dim = count()?,
            SweepParam::TrainRatio => cfg.train_ratio = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One mean row per value; the variant column records `param=value`.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64], exec: Execution) -> Result<Vec<MetricsRow>> {
    let cfgs: Vec<ExperimentConfig> = values.iter().map(|&v| param.apply(base, v)).collect::<Result<_>>()?;
    let prepared = prepare(base)?;
    let mut rows = Vec::with_capacity(values.len());
    for (cfg, v) in cfgs.iter().zip(values) {
        let report = run_prepared(&prepared, cfg, &format!("{}={v}", param.name()), exec)?;
        rows.push(report.rows.last().expect("mean row").clone());
    }
    Ok(rows)
}

/// Appends rows to `path`, writing the header only when the file is new or
/// empty. An existing file with a different header is rejected.
pub fn append_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let existing = std::fs::read_to_string(path).unwrap_or_default();
    let fresh = existing.trim().is_empty();
    if !fresh && existing.lines().next().map(str::trim) != Some(METRICS_HEADER) {
        return Err(Error::Config(format!(
            "{} exists with a different header",
            path.display()
        )));
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,test_acc\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.test_accuracy));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_ablation_changes_one_field() {
        let base = ExperimentConfig {
            triples: TriplesConfig {
                enabled: true,
                ..TriplesConfig::default()
            },
            ..ExperimentConfig::default()
        };
        for v in Variant::ABLATIONS {
            let cfg = v.apply(&base).unwrap();
            assert_eq!(config_diff(&base, &cfg).len(), 1, "{}", v.name());
        }
        assert!(Variant::WoTriples.apply(&ExperimentConfig::default()).is_err());
        assert_eq!(Variant::parse("woppr").unwrap(), Variant::WoPpr);
    }

    #[test]
    fn seeds_are_derived_deterministically() {
        assert_eq!(derive_seeds(7, 10), derive_seeds(7, 10));
        assert_ne!(derive_seeds(7, 3), derive_seeds(8, 3));
        assert_eq!(derive_seeds(7, 3)[..], derive_seeds(7, 10)[..3]);
    }

    #[test]
    fn sweep_values_are_checked() {
        let base = ExperimentConfig::default();
        assert_eq!(SweepParam::PprK.apply(&base, 30.0).unwrap().ppr.k, 30);
        assert!(SweepParam::PprK.apply(&base, 2.5).is_err());
        assert!(SweepParam::TrainRatio.apply(&base, 1.5).is_err());
    }

    #[test]
    fn metrics_file_is_append_safe() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        let row = MetricsRow {
            dataset: "d".into(),
            ratio: 0.9,
            seed: "1".into(),
            variant: "full".into(),
            accuracy: 0.5,
            f1: 0.25,
        };
        append_metrics(&p, &[row.clone()]).unwrap();
        append_metrics(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().collect::<Vec<_>>(),
            vec![METRICS_HEADER, "d,0.9,1,full,0.5,0.25", "d,0.9,1,full,0.5,0.25"]
        );
        std::fs::write(&p, "other,header\n").unwrap();
        assert!(append_metrics(&p, &[]).is_err());
    }
}
