use alloc::string::String;
use alloc::vec::Vec;

use super::model::{DplModel, LossReport, ModelKind};
use crate::error::{bail, Result};
use crate::image::{split_dataset, DatasetSplit, Image};
use crate::metrics::{MetricReport, MetricRow};
use crate::nn::{AdamConfig, ParamStore, Scalar, Tensor};
use crate::rng::Rng;

/// A noisy observation and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub id: String,
    pub noise: String,
    pub noisy: Image,
    pub clean: Image,
}

/// Algorithm label of the unprocessed-input reference rows.
pub const NOISY_LABEL: &str = "noisy";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub model: ModelKind,
    pub depth: usize,
    pub base_channels: usize,
    /// Validate every this many iterations; 0 validates only at the end.
    pub val_every: usize,
    pub train_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            batch_size: 4,
            lr: 1e-4,
            seed: 0,
            model: ModelKind::Dpl,
            depth: 2,
            base_channels: 16,
            val_every: 50,
            train_ratio: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!(InvalidArgument, "batch size must be at least 1");
        }
        AdamConfig::with_lr(self.lr).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub report: LossReport,
}

/// Loss curve as `iter,l_n,l_c,l_f,l_o` CSV.
pub fn loss_csv(curve: &[LossRecord]) -> String {
    use core::fmt::Write;
    let mut out = String::from("iter,l_n,l_c,l_f,l_o\n");
    for r in curve {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.report.l_n, r.report.l_c, r.report.l_f, r.report.l_o
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Model restored to the best validation checkpoint.
    pub model: DplModel<T>,
    pub curve: Vec<LossRecord>,
    /// (iteration, mean validation PSNR) at each validation.
    pub validations: Vec<(usize, f64)>,
    pub best_iteration: usize,
    /// Indices into the dataset.
    pub split: DatasetSplit<usize>,
}

/// Stacks the selected pairs into (noisy, clean) batches.
pub fn batch_tensors<T: Scalar>(pairs: &[Pair], idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let noisy: Vec<&Image> = idx.iter().map(|&i| &pairs[i].noisy).collect();
    let clean: Vec<&Image> = idx.iter().map(|&i| &pairs[i].clean).collect();
    Ok((Tensor::from_images(&noisy)?, Tensor::from_images(&clean)?))
}

fn check_dataset(pairs: &[Pair], multiple: usize) -> Result<()> {
    let Some(first) = pairs.first() else {
        bail!(InvalidArgument, "dataset is empty");
    };
    let (w, h) = (first.clean.width(), first.clean.height());
    for p in pairs {
        if !p.noisy.same_shape(&p.clean) || p.clean.width() != w || p.clean.height() != h {
            bail!(Shape, "pair {} does not match the {}x{} dataset size", p.id, w, h);
        }
    }
    if w % multiple != 0 || h % multiple != 0 {
        bail!(Shape, "image size {}x{} is not divisible by {}", w, h, multiple);
    }
    Ok(())
}

/// Mean PSNR of the model output over `idx`.
pub fn mean_psnr<T: Scalar>(model: &DplModel<T>, pairs: &[Pair], idx: &[usize]) -> Result<f64> {
    let report = evaluate_indices(model, pairs, idx, 8)?;
    let rows: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.algorithm == model.kind().name() && r.psnr_db.is_finite())
        .map(|r| r.psnr_db)
        .collect();
    Ok(rows.iter().sum::<f64>() / rows.len().max(1) as f64)
}

/// Trains on an 80:20 split of `pairs`. Initialization and the split use
/// `seed`; the per-epoch shuffle uses a stream seeded with `seed + 1`.
pub fn train<T: Scalar>(config: &TrainConfig, pairs: &[Pair]) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let mut model = DplModel::<T>::new(
        config.model,
        config.depth,
        config.base_channels,
        config.seed,
        AdamConfig::with_lr(config.lr),
    )?;
    check_dataset(pairs, model.multiple())?;
    let ids: Vec<usize> = (0..pairs.len()).collect();
    let mut split = if pairs.len() == 1 {
        DatasetSplit { train: ids.clone(), val: Vec::new() }
    } else {
        split_dataset(&ids, config.train_ratio, config.seed)?
    };
    if split.train.is_empty() {
        split.train = split.val.clone();
    }
    let mut shuffle = Rng::new(config.seed.wrapping_add(1));
    let mut order = split.train.clone();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(config.iterations);
    let mut validations = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;
    let mut validate = |model: &DplModel<T>, it: usize| -> Result<()> {
        if split.val.is_empty() {
            return Ok(());
        }
        let psnr = mean_psnr(model, pairs, &split.val)?;
        validations.push((it, psnr));
        if best.as_ref().is_none_or(|(b, _, _)| psnr > *b) {
            best = Some((psnr, it, model.params().clone()));
        }
        Ok(())
    };
    validate(&model, 0)?;
    for it in 1..=config.iterations {
        if cursor >= order.len() {
            shuffle.shuffle(&mut order);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let (x, y) = batch_tensors::<T>(pairs, &order[cursor..end])?;
        cursor = end;
        let report = model.train_step(&x, &y).map_err(|e| match e {
            crate::Error::NonFiniteLoss { l_n, l_c, l_f, l_o, .. } => {
                crate::Error::NonFiniteLoss { iteration: it, l_n, l_c, l_f, l_o }
            }
            other => other,
        })?;
        curve.push(LossRecord { iteration: it, report });
        let due = config.val_every > 0 && it % config.val_every == 0;
        if due || it == config.iterations {
            validate(&model, it)?;
        }
    }
    let mut best_iteration = config.iterations;
    if let Some((_, it, params)) = best {
        model.load_values(&params)?;
        best_iteration = it;
    }
    Ok(TrainOutcome { model, curve, validations, best_iteration, split })
}

fn evaluate_indices<T: Scalar>(
    model: &DplModel<T>,
    pairs: &[Pair],
    idx: &[usize],
    chunk: usize,
) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    let label = model.kind().name();
    for group in idx.chunks(chunk.max(1)) {
        let (x, _) = batch_tensors::<T>(pairs, group)?;
        let out = model.predict(&x)?.to_images()?;
        for (&i, est) in group.iter().zip(&out) {
            let p = &pairs[i];
            report.push(MetricRow::measure(&p.id, label, &p.noise, &p.clean, est)?);
        }
    }
    for &i in idx {
        let p = &pairs[i];
        report.push(MetricRow::measure(&p.id, NOISY_LABEL, &p.noise, &p.clean, &p.noisy)?);
    }
    Ok(report)
}

/// Per-image metrics of the model output and of the noisy input, both
/// against ground truth, in dataset order.
pub fn evaluate<T: Scalar>(model: &DplModel<T>, pairs: &[Pair]) -> Result<MetricReport> {
    let mut multiple_ok = true;
    for p in pairs {
        multiple_ok &= p.clean.width() % model.multiple() == 0 && p.clean.height() % model.multiple() == 0;
    }
    if !multiple_ok {
        bail!(Shape, "image sizes must be divisible by {}", model.multiple());
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mut report = MetricReport::default();
    // images of different sizes cannot share a batch
    let mut start = 0;
    while start < idx.len() {
        let (w, h) = (pairs[start].clean.width(), pairs[start].clean.height());
        let mut end = start + 1;
        while end < idx.len() && pairs[end].clean.width() == w && pairs[end].clean.height() == h {
            end += 1;
        }
        let part = evaluate_indices(model, pairs, &idx[start..end], 8)?;
        report.extend(part);
        start = end;
    }
    Ok(report)
}
