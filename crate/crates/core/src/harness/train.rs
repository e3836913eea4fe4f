//! Training loop: forward, localization, instance retrieval, separation loss,
//! classification loss, combined backward and an SGD step per iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cam::{predict_change, score_map};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FeatureMap};
use crate::harness::metrics::{evaluate, MetricReport, SampleMetrics};
use crate::localize::{
    changed_localization, masks_from_ground_truth, unchanged_localization, ThresholdConfig,
};
use crate::model::{
    backward_cached, classification_loss, forward, forward_cached, sgd_step, sigmoid, ModelParams,
    ModelSizes, SceneSample,
};
use crate::retrieve::connectivity_search;
use crate::separate::{separation_loss, total_loss, SampleContext, SeparationConfig};
use crate::synth::{generate_range, generate_sample, SplitIndices, SynthConfig};

/// Where the training signal and the separation masks come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Supervision {
    /// Scene labels only; masks are thresholded from the class activation map.
    #[default]
    Weak,
    /// Pixel labels; masks come from the ground truth and the loss is pixel BCE.
    Full,
}

impl std::fmt::Display for Supervision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Weak => "weak",
            Self::Full => "full",
        })
    }
}

impl std::str::FromStr for Supervision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Self::Weak),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidValue(format!(
                "unknown supervision {s:?}; expected weak or full"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelSizes,
    pub synth: SynthConfig,
    pub thresholds: ThresholdConfig,
    /// `None` never invokes the separation module.
    pub separation: Option<SeparationConfig>,
    pub supervision: Supervision,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_interval: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Drives parameter initialization and batch sampling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSizes::default(),
            synth: SynthConfig::default(),
            thresholds: ThresholdConfig::default(),
            separation: Some(SeparationConfig::default()),
            supervision: Supervision::Weak,
            iterations: 2000,
            batch_size: 8,
            learning_rate: 0.05,
            eval_interval: 100,
            n_train: 1024,
            n_val: 64,
            n_test: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidConfig(
                "eval_interval must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate={} must be positive and finite",
                self.learning_rate
            )));
        }
        SplitIndices::new(self.n_train, self.n_val, self.n_test)?;
        Ok(())
    }

    pub fn splits(&self) -> SplitIndices {
        SplitIndices::new(self.n_train, self.n_val, self.n_test).expect("validated split sizes")
    }

    /// Uses `seed` for initialization, batch order and the benchmark.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.synth.seed = seed;
        c
    }
}

/// Batch-mean losses of one iteration, plus validation metrics on eval iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub l_cls: f64,
    pub l_pc: f64,
    pub l_puc: f64,
    pub l_pu: f64,
    pub l_sep: f64,
    pub total: f64,
    pub val: Option<ValMetrics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValMetrics {
    pub f1: f64,
    pub oa: f64,
    pub iou: f64,
    pub inst_mae: f64,
}

impl From<&MetricReport> for ValMetrics {
    fn from(r: &MetricReport) -> Self {
        Self {
            f1: r.f1,
            oa: r.oa,
            iou: r.iou,
            inst_mae: r.instance_count_mae,
        }
    }
}

pub const CSV_HEADER: &str =
    "iteration,l_cls,l_pc,l_puc,l_pu,l_sep,total,val_f1,val_oa,val_iou,val_inst_mae";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.iteration, r.l_cls, r.l_pc, r.l_puc, r.l_pu, r.l_sep, r.total
        ));
        match r.val {
            Some(v) => s.push_str(&format!(",{},{},{},{}\n", v.f1, v.oa, v.iou, v.inst_mae)),
            None => s.push_str(",,,,\n"),
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f64>,
    pub log: Vec<LogRow>,
    /// Validation report after the last iteration; matches the final CSV row.
    pub final_val: MetricReport,
}

impl TrainOutcome {
    pub fn csv(&self) -> String {
        log_csv(&self.log)
    }
}

/// Losses and parameter gradients of one sample.
#[derive(Clone, Debug)]
pub struct SampleStep {
    pub l_cls: f64,
    pub l_pc: f64,
    pub l_puc: f64,
    pub l_pu: f64,
    pub l_sep: f64,
    pub total: f64,
    pub grads: ModelParams<f64>,
}

/// Masks feeding the separation loss: reliable changed and unchanged pixels.
pub fn separation_masks(
    params: &ModelParams<f64>,
    features: &FeatureMap<f64>,
    sample: &SceneSample<f64>,
    thresholds: &ThresholdConfig,
    supervision: Supervision,
) -> Result<(BinaryMask, BinaryMask)> {
    match supervision {
        Supervision::Weak => {
            let c = score_map(features, &params.classifier_weights())?;
            Ok((
                changed_localization(&c, thresholds),
                unchanged_localization(&c, thresholds),
            ))
        }
        Supervision::Full => {
            let gt = sample.gt.as_ref().ok_or_else(|| {
                Error::InvalidValue("full supervision needs a pixel ground truth".into())
            })?;
            Ok(masks_from_ground_truth(gt))
        }
    }
}

/// Per-pixel logits `<F_i, w> + b`.
fn pixel_logits(params: &ModelParams<f64>, features: &FeatureMap<f64>) -> Vec<f64> {
    let w = params.classifier_weights();
    let b = params.classifier_bias();
    features
        .values()
        .chunks_exact(features.channels())
        .map(|px| px.iter().zip(w.as_slice()).map(|(f, w)| f * w).sum::<f64>() + b)
        .collect()
}

/// One sample's contribution at `iteration`.
pub fn sample_step(
    params: &ModelParams<f64>,
    sample: &SceneSample<f64>,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<SampleStep> {
    let cache = forward_cached(params, sample)?;
    let features = &cache.output.features;
    let dims = features.dims();
    let d = features.channels();

    let breakdown = match &cfg.separation {
        None => None,
        Some(sep) => {
            let b = if sample.y_cls == 1 {
                let (m_c, m_uc) =
                    separation_masks(params, features, sample, &cfg.thresholds, cfg.supervision)?;
                let (id_mask, table) = connectivity_search(&m_c);
                let ctx = SampleContext::Changed {
                    features,
                    table: &table,
                    id_mask: &id_mask,
                    background: &m_uc,
                };
                separation_loss(ctx, sep)?
            } else {
                separation_loss(SampleContext::Unchanged { features }, sep)?
            };
            Some(b)
        }
    };

    let mut dfeatures = FeatureMap::zeros(dims, d);
    let mut classifier_extra = None;
    let (l_cls, dlogit) = match cfg.supervision {
        Supervision::Weak => classification_loss(cache.output.logit, sample.y_cls),
        Supervision::Full => {
            let gt = sample.gt.as_ref().ok_or_else(|| {
                Error::InvalidValue("full supervision needs a pixel ground truth".into())
            })?;
            let n = dims.len() as f64;
            let w = params.classifier_weights();
            let mut loss = 0.0;
            let mut dw = vec![0.0; d];
            let mut db = 0.0;
            let dvals = dfeatures.values_mut();
            for (i, z) in pixel_logits(params, features).into_iter().enumerate() {
                let (l, dz) = classification_loss(z, gt.bits()[i] as u8);
                loss += l;
                let g = dz / n;
                db += g;
                let fi = &features.values()[i * d..(i + 1) * d];
                for c in 0..d {
                    dw[c] += g * fi[c];
                    dvals[i * d + c] += g * w.as_slice()[c];
                }
            }
            classifier_extra = Some((dw, db));
            (loss / n, 0.0)
        }
    };

    let (l_pc, l_puc, l_pu, l_sep, total) = match (&cfg.separation, &breakdown) {
        (Some(sep), Some(b)) => {
            let total = total_loss(l_cls, b, sep, iteration)?;
            if sep.active_at(iteration) {
                dfeatures.add_scaled(&b.grad, sep.alpha())?;
            }
            (b.l_pc, b.l_puc, b.l_pu, b.l_sep, total)
        }
        _ => (0.0, 0.0, 0.0, 0.0, l_cls),
    };
    if !total.is_finite() {
        return Err(Error::NonFinite {
            what: "training loss".into(),
            iteration,
        });
    }

    let mut grads = backward_cached(params, sample, &cache, dlogit, &dfeatures)?;
    if let Some((dw, db)) = classifier_extra {
        grads.add_to_classifier(&dw, db)?;
    }
    Ok(SampleStep {
        l_cls,
        l_pc,
        l_puc,
        l_pu,
        l_sep,
        total,
        grads,
    })
}

/// Predicted change mask for one sample.
pub fn predict(
    params: &ModelParams<f64>,
    sample: &SceneSample<f64>,
    thresholds: &ThresholdConfig,
    supervision: Supervision,
) -> Result<BinaryMask> {
    let out = forward(params, sample)?;
    match supervision {
        Supervision::Weak => {
            let c = score_map(&out.features, &params.classifier_weights())?;
            predict_change(&c, thresholds.cam_score())
        }
        Supervision::Full => {
            let bits = pixel_logits(params, &out.features)
                .into_iter()
                .map(|z| sigmoid(z) >= 0.5)
                .collect();
            BinaryMask::new(out.features.dims(), bits)
        }
    }
}

/// Evaluates `params` on samples with known indices.
pub fn evaluate_samples(
    params: &ModelParams<f64>,
    samples: &[(u64, SceneSample<f64>)],
    thresholds: &ThresholdConfig,
    supervision: Supervision,
) -> Result<MetricReport> {
    let rows = samples
        .par_iter()
        .map(|(index, s)| {
            let pred = predict(params, s, thresholds, supervision)?;
            let gt =
                s.gt.clone()
                    .unwrap_or_else(|| BinaryMask::filled(s.dims(), false));
            let metrics = evaluate(&pred, &gt)?;
            let (_, table) = connectivity_search(&pred);
            let gt_instances = s.gt_instances.as_ref().map_or(0, |g| g.instance_count());
            Ok(SampleMetrics {
                index: *index,
                y_cls: s.y_cls,
                metrics,
                pred_instances: table.count(),
                gt_instances,
                instance_error: table.count().abs_diff(gt_instances) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows))
}

fn indexed(cfg: &SynthConfig, range: std::ops::Range<u64>) -> Result<Vec<(u64, SceneSample<f64>)>> {
    let start = range.start;
    Ok(generate_range(cfg, range)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (start + i as u64, s))
        .collect())
}

pub fn validation_samples(cfg: &TrainConfig) -> Result<Vec<(u64, SceneSample<f64>)>> {
    indexed(&cfg.synth, cfg.splits().val)
}

pub fn test_samples(cfg: &TrainConfig) -> Result<Vec<(u64, SceneSample<f64>)>> {
    indexed(&cfg.synth, cfg.splits().test)
}

/// Runs `cfg.iterations` SGD steps from a seeded initialization.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let splits = cfg.splits();
    let val = validation_samples(cfg)?;
    let mut params = ModelParams::init(cfg.model, cfg.seed);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(1);
    let bs = cfg.batch_size as f64;

    let mut log = Vec::with_capacity(cfg.iterations);
    let mut final_val = None;
    for it in 0..cfg.iterations {
        let indices: Vec<u64> = (0..cfg.batch_size)
            .map(|_| batch_rng.gen_range(splits.train.clone()))
            .collect();
        let steps = indices
            .par_iter()
            .map(|&i| {
                let s = generate_sample(&cfg.synth, i)?;
                sample_step(&params, &s, cfg, it)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| at_iteration(e, it))?;

        let mut grads = ModelParams::zeros(cfg.model);
        let mut row = LogRow {
            iteration: it,
            l_cls: 0.0,
            l_pc: 0.0,
            l_puc: 0.0,
            l_pu: 0.0,
            l_sep: 0.0,
            total: 0.0,
            val: None,
        };
        for s in &steps {
            grads.add_scaled(&s.grads, 1.0 / bs);
            row.l_cls += s.l_cls / bs;
            row.l_pc += s.l_pc / bs;
            row.l_puc += s.l_puc / bs;
            row.l_pu += s.l_pu / bs;
            row.l_sep += s.l_sep / bs;
            row.total += s.total / bs;
        }
        params = sgd_step(&params, &grads, cfg.learning_rate).map_err(|e| at_iteration(e, it))?;

        let last = it + 1 == cfg.iterations;
        if (it + 1) % cfg.eval_interval == 0 || last {
            let report = evaluate_samples(&params, &val, &cfg.thresholds, cfg.supervision)
                .map_err(|e| at_iteration(e, it))?;
            row.val = Some(ValMetrics::from(&report));
            if last {
                final_val = Some(report);
            }
        }
        log.push(row);
    }
    Ok(TrainOutcome {
        params,
        log,
        final_val: final_val.expect("last iteration evaluates"),
    })
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, iteration },
        e => e,
    }
}
