//! Protocol execution: k-fold training and evaluation under the three
//! availability regimes, optional no-alignment ablation, and ratio sweeps.
//!
//! Fold jobs are independent: each derives its own seed from the base seed
//! and job coordinates, so results do not depend on scheduling. The
//! `LOT_ALIGN_THREADS` environment variable caps worker concurrency.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fusion::{
    train_step, Availability, Batch, FusionModel, LossRecord, ModelConfig, Optimizer, TrainConfig,
};
use crate::gw::{feature_plan, labeled_gw, Direction};
use crate::numkit::SeededRng;
use crate::proto::EmbeddingBatch;

use super::config::{DataSource, ExperimentConfig, Protocol};
use super::kfold::{kfold_split, train_indices};
use super::metrics::{metrics, softmax_scores, MetricsTriple};
use super::missing::{apply_missing, MissingMask};
use super::report::{FoldMetrics, MetricGroup, MetricsReport, ReportMetadata};
use super::synth::{synth_dataset, Dataset};

/// Which model a result belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Full,
    NoAlignment,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::NoAlignment => "no_alignment",
        }
    }
}

/// One fold evaluation, with the index bookkeeping that the isolation
/// audit checks: which samples trained the model and which samples fed the
/// transport plans.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub model: ModelKind,
    pub variant: String,
    pub ratio: Option<f64>,
    pub metrics: MetricsTriple,
    pub n_test: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Absolute indices of the complete pairs available to plan and
    /// feature-plan computation during training.
    pub plan_indices: Vec<usize>,
    pub final_loss: f64,
}

/// A full experiment run: the report plus per-fold outcomes for auditing.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub folds: Vec<FoldOutcome>,
}

/// Worker cap: `LOT_ALIGN_THREADS`, or the machine's parallelism.
pub fn worker_cap() -> usize {
    std::env::var("LOT_ALIGN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Synthetic(spec) => synth_dataset(spec),
        DataSource::Path(dir) => Dataset::load(dir),
    }
}

/// Order-independent seed mixing (boost-style hash combine).
fn mix_seed(base: u64, salt: &[u64]) -> u64 {
    let mut s = base;
    for &x in salt {
        s ^= x
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(s << 6)
            .wrapping_add(s >> 2);
    }
    s
}

struct Job {
    fold: usize,
    model: ModelKind,
    ratio_index: usize,
    ratio: Option<f64>,
}

/// Run the configured protocol end to end and assemble the report.
pub fn run_protocol(config: &ExperimentConfig) -> Result<MetricsReport> {
    Ok(execute(config)?.report)
}

/// [`run_protocol`] but keeping the per-fold outcomes.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let started = Instant::now();
    let dataset = load_dataset(&config.data)?;
    if dataset.len() < config.folds {
        return Err(Error::InvalidConfig(format!(
            "{} samples cannot fill {} folds",
            dataset.len(),
            config.folds
        )));
    }
    let folds = kfold_split(dataset.len(), config.folds, config.seed)?;

    let ratios: Vec<Option<f64>> = match config.protocol {
        Protocol::ProportionalMissing => match (&config.ratio, &config.ratios) {
            (Some(r), None) => vec![Some(*r)],
            (None, Some(rs)) => rs.iter().map(|&r| Some(r)).collect(),
            _ => unreachable!("validated"),
        },
        _ => vec![None],
    };
    let kinds: Vec<ModelKind> = if config.ablation {
        vec![ModelKind::Full, ModelKind::NoAlignment]
    } else {
        vec![ModelKind::Full]
    };

    let mut jobs = Vec::new();
    for &model in &kinds {
        for (ratio_index, &ratio) in ratios.iter().enumerate() {
            for fold in 0..config.folds {
                jobs.push(Job {
                    fold,
                    model,
                    ratio_index,
                    ratio,
                });
            }
        }
    }

    let results = run_jobs(&jobs, |job| run_fold(config, &dataset, &folds, job))?;
    let outcomes: Vec<FoldOutcome> = results.into_iter().flatten().collect();

    // group (model, variant, ratio) preserving job construction order
    let mut groups: Vec<MetricGroup> = Vec::new();
    let mut keys: Vec<(String, String, Option<f64>)> = Vec::new();
    for o in &outcomes {
        let key = (o.model.name().to_string(), o.variant.clone(), o.ratio);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (model, variant, ratio) in keys {
        let members: Vec<FoldMetrics> = outcomes
            .iter()
            .filter(|o| o.model.name() == model && o.variant == variant && o.ratio == ratio)
            .map(|o| FoldMetrics {
                fold: o.fold,
                n_test: o.n_test,
                acc: o.metrics.acc,
                auc: o.metrics.auc,
                f1: o.metrics.f1,
            })
            .collect();
        groups.push(MetricGroup::new(model, variant, ratio, members));
    }

    let report = MetricsReport {
        version: 1,
        protocol: config.protocol.name().to_string(),
        config: serde_json::to_value(config)?,
        metadata: ReportMetadata::default(),
        groups,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutcome {
        report,
        folds: outcomes,
    })
}

fn run_jobs<T: Send>(
    jobs: &[Job],
    run: impl Fn(&Job) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let cap = worker_cap().min(jobs.len()).max(1);
    if cap == 1 {
        return jobs.iter().map(run).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..cap {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let result = run(&jobs[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker finished"))
        .collect()
}

fn run_fold(
    config: &ExperimentConfig,
    dataset: &Dataset,
    folds: &[Vec<usize>],
    job: &Job,
) -> Result<Vec<FoldOutcome>> {
    let test_idx = folds[job.fold].clone();
    let train_idx = train_indices(folds, job.fold, dataset.len());
    let train_set = dataset.subset(&train_idx);
    let test_set = dataset.subset(&test_idx);

    let kind_salt = match job.model {
        ModelKind::Full => 0,
        ModelKind::NoAlignment => 1,
    };
    let job_seed = mix_seed(
        config.seed,
        &[job.fold as u64, job.ratio_index as u64, kind_salt],
    );

    let (train_avail, evals): (Availability, Vec<(String, Availability)>) =
        match config.protocol {
            Protocol::Complete => (
                Availability::complete(train_set.len()),
                vec![(
                    "complete".to_string(),
                    Availability::complete(test_set.len()),
                )],
            ),
            Protocol::InterMissing => (
                Availability::complete(train_set.len()),
                vec![
                    (
                        "fundus_only".to_string(),
                        Availability::without_oct(test_set.len()),
                    ),
                    (
                        "oct_only".to_string(),
                        Availability::without_fundus(test_set.len()),
                    ),
                ],
            ),
            Protocol::ProportionalMissing => {
                let ratio = job.ratio.expect("proportional job carries a ratio");
                let train_mask = apply_missing(
                    &train_set,
                    config.missing_modality,
                    ratio,
                    mix_seed(job_seed, &[101]),
                )?;
                let test_mask = apply_missing(
                    &test_set,
                    config.missing_modality,
                    ratio,
                    mix_seed(job_seed, &[202]),
                )?;
                (
                    train_mask.availability()?,
                    vec![("missing".to_string(), test_mask.availability()?)],
                )
            }
        };

    let trained = fit(
        &train_set,
        &train_avail,
        model_config(config, dataset, job.model),
        &config.train,
        job_seed,
    )?;

    let complete_local = train_avail.complete_mask();
    let plan_indices: Vec<usize> = train_idx
        .iter()
        .enumerate()
        .filter_map(|(local, &abs)| complete_local[local].then_some(abs))
        .collect();

    let mut outcomes = Vec::new();
    for (variant, avail) in evals {
        let triple = evaluate(&trained.model, &test_set, &avail)?;
        outcomes.push(FoldOutcome {
            fold: job.fold,
            model: job.model,
            variant,
            ratio: job.ratio,
            metrics: triple,
            n_test: test_set.len(),
            train_indices: train_idx.clone(),
            test_indices: test_idx.clone(),
            plan_indices: plan_indices.clone(),
            final_loss: trained
                .records
                .last()
                .map(|r| r.components.total)
                .unwrap_or(f64::NAN),
        });
    }
    Ok(outcomes)
}

fn model_config(config: &ExperimentConfig, dataset: &Dataset, kind: ModelKind) -> ModelConfig {
    ModelConfig {
        input_dim_f: dataset.x_f.cols(),
        input_dim_o: dataset.x_o.cols(),
        embed_dim: config.model.embed_dim,
        hidden_dim: config.model.hidden_dim,
        num_classes: dataset.num_classes(),
        no_alignment: kind == ModelKind::NoAlignment,
        literal_projection: config.model.literal_projection,
    }
}

/// A trained model plus its loss trace.
pub struct Trained {
    pub model: FusionModel,
    pub records: Vec<LossRecord>,
}

/// Train a fresh model on one subset. Epoch boundaries recompute the
/// feature plan on the training set's complete pairs with the current
/// encoders; the final plan ships with the model.
pub fn fit(
    train_set: &Dataset,
    avail: &Availability,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    train_cfg.validate()?;
    let mut model = FusionModel::init(model_cfg, mix_seed(seed, &[1]))?;
    let complete: Vec<usize> = avail
        .complete_mask()
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    refresh_feature_plan(&mut model, train_set, &complete, train_cfg)?;

    let mut optimizer = Optimizer::new(train_cfg.optimizer);
    let mut shuffle_rng = SeededRng::new(mix_seed(seed, &[2]));
    let mut step_rng = SeededRng::new(mix_seed(seed, &[3]));

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(train_cfg.steps);
    let mut step = 0;
    let mut epoch = 0;
    while step < train_cfg.steps {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(train_cfg.batch_size) {
            if step >= train_cfg.steps {
                break;
            }
            let batch = Batch::new(
                train_set.x_f.select_rows(chunk),
                train_set.x_o.select_rows(chunk),
                train_set.labels.select(chunk),
            )?;
            let chunk_avail = Availability::new(
                chunk.iter().map(|&i| avail.fundus()[i]).collect(),
                chunk.iter().map(|&i| avail.oct()[i]).collect(),
            )?;
            let record = train_step(
                &mut model,
                &mut optimizer,
                &batch,
                &chunk_avail,
                train_cfg,
                &mut step_rng,
                step,
            )?;
            records.push(record);
            step += 1;
        }
        epoch += 1;
        model.set_epoch(epoch);
        if step < train_cfg.steps {
            refresh_feature_plan(&mut model, train_set, &complete, train_cfg)?;
        }
    }
    // the plan that ships with the model reflects the final encoders
    refresh_feature_plan(&mut model, train_set, &complete, train_cfg)?;
    Ok(Trained { model, records })
}

/// Train the model of one fold without evaluating it; the CLI `train`
/// entry. Proportional configs need a single `ratio`.
pub fn train_single_fold(config: &ExperimentConfig, fold: usize) -> Result<Trained> {
    config.validate()?;
    let dataset = load_dataset(&config.data)?;
    let folds = kfold_split(dataset.len(), config.folds, config.seed)?;
    if fold >= folds.len() {
        return Err(Error::InvalidConfig(format!("fold {fold} out of range")));
    }
    let train_idx = train_indices(&folds, fold, dataset.len());
    let train_set = dataset.subset(&train_idx);
    let job_seed = mix_seed(config.seed, &[fold as u64, 0, 0]);
    let avail = match config.protocol {
        Protocol::Complete | Protocol::InterMissing => Availability::complete(train_set.len()),
        Protocol::ProportionalMissing => {
            let ratio = config.ratio.ok_or_else(|| {
                Error::InvalidConfig("training needs a single ratio, not a grid".into())
            })?;
            apply_missing(
                &train_set,
                config.missing_modality,
                ratio,
                mix_seed(job_seed, &[101]),
            )?
            .availability()?
        }
    };
    fit(
        &train_set,
        &avail,
        model_config(config, &dataset, ModelKind::Full),
        &config.train,
        job_seed,
    )
}

/// Recompute the frozen feature plan from the complete-pair subset. With no
/// complete pairs (or for the ablation) the installed plan stays as is.
fn refresh_feature_plan(
    model: &mut FusionModel,
    train_set: &Dataset,
    complete: &[usize],
    train_cfg: &TrainConfig,
) -> Result<()> {
    if complete.is_empty() || model.config().no_alignment {
        return Ok(());
    }
    let e_f = model.encode_fundus(&train_set.x_f.select_rows(complete));
    let e_o = model.encode_oct(&train_set.x_o.select_rows(complete));
    let embeds = EmbeddingBatch::new(e_f, e_o, train_set.labels.select(complete))?;
    let t_of = labeled_gw(&embeds, Direction::OctToFundus, &train_cfg.gw)?;
    let t_v = feature_plan(&embeds, &t_of, &train_cfg.gw)?;
    model.set_feature_plan(t_v)
}

/// Head-based (inference-mode) forward over a whole set, then metrics on
/// softmax scores.
pub fn evaluate(
    model: &FusionModel,
    test_set: &Dataset,
    avail: &Availability,
) -> Result<MetricsTriple> {
    let batch = test_set.batch()?;
    let fwd = model.forward(&batch, avail, &crate::fusion::ProtoSource::Heads)?;
    let scores = softmax_scores(fwd.logits_value());
    metrics(&test_set.labels, &scores)
}

/// Evaluate a checkpointed model under a protocol name on its held-out
/// fold, reconstructing the dataset and split from the stored experiment
/// config.
pub fn evaluate_checkpoint(
    model: &FusionModel,
    config: &ExperimentConfig,
    fold: usize,
    protocol: Protocol,
    ratio: Option<f64>,
) -> Result<MetricsReport> {
    let dataset = load_dataset(&config.data)?;
    let folds = kfold_split(dataset.len(), config.folds, config.seed)?;
    if fold >= folds.len() {
        return Err(Error::InvalidConfig(format!(
            "checkpoint fold {fold} out of range for {} folds",
            folds.len()
        )));
    }
    let test_set = dataset.subset(&folds[fold]);
    let evals: Vec<(String, Availability)> = match protocol {
        Protocol::Complete => vec![(
            "complete".to_string(),
            Availability::complete(test_set.len()),
        )],
        Protocol::InterMissing => vec![
            (
                "fundus_only".to_string(),
                Availability::without_oct(test_set.len()),
            ),
            (
                "oct_only".to_string(),
                Availability::without_fundus(test_set.len()),
            ),
        ],
        Protocol::ProportionalMissing => {
            let r = ratio.ok_or_else(|| {
                Error::InvalidConfig("proportional_missing evaluation needs --ratio".into())
            })?;
            let mask: MissingMask = apply_missing(
                &test_set,
                config.missing_modality,
                r,
                mix_seed(config.seed, &[fold as u64, 202]),
            )?;
            vec![("missing".to_string(), mask.availability()?)]
        }
    };
    let started = Instant::now();
    let mut groups = Vec::new();
    for (variant, avail) in evals {
        let triple = evaluate(model, &test_set, &avail)?;
        groups.push(MetricGroup::new(
            "full".to_string(),
            variant,
            ratio,
            vec![FoldMetrics {
                fold,
                n_test: test_set.len(),
                acc: triple.acc,
                auc: triple.auc,
                f1: triple.f1,
            }],
        ));
    }
    Ok(MetricsReport {
        version: 1,
        protocol: protocol.name().to_string(),
        config: serde_json::to_value(config)?,
        metadata: ReportMetadata::default(),
        groups,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}
