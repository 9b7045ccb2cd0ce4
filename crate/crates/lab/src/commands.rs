//! The pipeline stages behind each subcommand.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dpl_core::classic::{Algorithm, FilterParams};
use dpl_core::dpl::{self, ModelKind, Pair, TrainConfig};
use dpl_core::metrics::{format_psnr, MetricReport, MetricRow};
use dpl_core::noise::{NoiseKind, NoiseSpec};
use dpl_core::{gen_phantom, split_dataset, Image, PhantomSpec};

use crate::config::{BenchConfig, Method};
use crate::error::{usage, LabError, LabResult};
use crate::formats::{load_image, load_model, save_model, save_pgm, save_raw};
use crate::manifest::{
    absolute, create_dir, read_gen_manifest, read_pairs, write_gen_manifest, write_pairs,
    write_text, write_timings, GenRecord, PairRecord, TimingRecord, GEN_MANIFEST, PAIRS_MANIFEST,
    TIMINGS_FILE,
};

/// Offset separating corruption seeds from phantom seeds inside `bench`.
pub const BENCH_NOISE_SEED_OFFSET: u64 = 1 << 32;

pub const CHECKPOINT_FILE: &str = "model.dplw";
pub const LOSS_FILE: &str = "loss.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const PSNR_TABLE: &str = "results_psnr.csv";
pub const SSIM_TABLE: &str = "results_ssim.csv";
pub const DETAILS_FILE: &str = "details.csv";

/// Per-file seed: base plus position.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

#[derive(Debug, Clone)]
pub struct GenArgs {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub ellipses: usize,
    pub texture: f64,
}

pub fn phantom_id(i: usize) -> String {
    format!("phantom_{i:04}")
}

pub fn cmd_gen(a: &GenArgs) -> LabResult<Vec<GenRecord>> {
    if a.count == 0 {
        return Err(usage!("--count must be at least 1"));
    }
    let ellipses = NonZeroUsize::new(a.ellipses).ok_or_else(|| usage!("--ellipses must be at least 1"))?;
    create_dir(&a.out)?;
    let out = absolute(&a.out)?;
    let mut records = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let seed = derive_seed(a.seed, i);
        let spec = PhantomSpec::new(a.size, ellipses, a.texture, seed).map_err(|e| usage!("{e}"))?;
        let img = gen_phantom(&spec);
        let id = phantom_id(i);
        let file = out.join(format!("{id}.dplf"));
        let preview = out.join(format!("{id}.pgm"));
        save_raw(&img, &file)?;
        save_pgm(&img, &preview)?;
        records.push(GenRecord { id, file, preview, size: a.size, seed });
    }
    write_gen_manifest(&out.join(GEN_MANIFEST), &records)?;
    Ok(records)
}

/// Named image files found at `input`: a generator manifest, a directory
/// holding one, or a directory of `.dplf` / `.pgm` files.
pub fn list_images(input: &Path) -> LabResult<Vec<(String, PathBuf)>> {
    let manifest = if input.is_dir() { input.join(GEN_MANIFEST) } else { input.to_path_buf() };
    if manifest.is_file() {
        return Ok(read_gen_manifest(&manifest)?.into_iter().map(|r| (r.id, r.file)).collect());
    }
    if !input.is_dir() {
        return Err(usage!("{} is neither a directory nor a manifest", input.display()));
    }
    let entries = std::fs::read_dir(input).map_err(|e| LabError::io(input, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("dplf")))
        .collect();
    if files.is_empty() {
        files = std::fs::read_dir(input)
            .map_err(|e| LabError::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("pgm")))
            .collect();
    }
    files.sort();
    if files.is_empty() {
        return Err(usage!("no .dplf or .pgm images in {}", input.display()));
    }
    Ok(files
        .into_iter()
        .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
        .collect())
}

/// `key=value;key=value` rendering of a noise family's parameters.
pub fn format_noise_params(kind: &NoiseKind) -> String {
    kind.params().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

pub fn parse_key_value(s: &str) -> LabResult<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| usage!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn noise_kind(name: &str, params: &[(String, String)]) -> LabResult<NoiseKind> {
    let mut kind = NoiseKind::from_name(name)
        .ok_or_else(|| usage!("unknown noise `{name}` (expected gaussian, awgn or speckle)"))?;
    for (k, v) in params {
        let value: f64 = v.parse().map_err(|_| usage!("bad value `{v}` for `{k}`"))?;
        kind.set_param(k, value).map_err(|e| usage!("{e}"))?;
    }
    kind.validate().map_err(|e| usage!("{e}"))?;
    Ok(kind)
}

#[derive(Debug, Clone)]
pub struct CorruptArgs {
    pub noise: String,
    pub seed: u64,
    pub input: PathBuf,
    pub out: PathBuf,
    pub params: Vec<(String, String)>,
    pub clip: bool,
}

pub fn cmd_corrupt(a: &CorruptArgs) -> LabResult<Vec<PairRecord>> {
    let kind = noise_kind(&a.noise, &a.params)?;
    let images = list_images(&a.input)?;
    create_dir(&a.out)?;
    let out = absolute(&a.out)?;
    let mut records = Vec::with_capacity(images.len());
    for (i, (id, path)) in images.iter().enumerate() {
        let clean = load_image(path)?;
        let seed = derive_seed(a.seed, i);
        let mut spec = NoiseSpec::new(kind, seed)?;
        spec.clip = a.clip;
        let noisy = spec.apply(&clean);
        let file = out.join(format!("{id}_{}.dplf", kind.name()));
        save_raw(&noisy, &file)?;
        save_pgm(&noisy, &file.with_extension("pgm"))?;
        records.push(PairRecord {
            id: id.clone(),
            clean: absolute(path)?,
            noisy: file,
            noise: kind.name().into(),
            params: format_noise_params(&kind),
            seed,
            algorithm: None,
        });
    }
    write_pairs(&out.join(PAIRS_MANIFEST), &records)?;
    Ok(records)
}

pub fn parse_algorithm(name: &str) -> LabResult<Algorithm> {
    Algorithm::from_name(name)
        .ok_or_else(|| usage!("unknown algorithm `{name}`; valid: {}", Algorithm::names()))
}

#[derive(Debug, Clone)]
pub struct DenoiseArgs {
    pub algo: String,
    pub input: PathBuf,
    pub out: PathBuf,
    pub sigma: Option<f64>,
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub outputs: Vec<PathBuf>,
    pub timings: Vec<TimingRecord>,
}

fn is_pairs_manifest(p: &Path) -> bool {
    p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("csv") && p.file_name() != Some(GEN_MANIFEST.as_ref())
}

pub fn cmd_denoise(a: &DenoiseArgs) -> LabResult<DenoiseOutcome> {
    let algo = parse_algorithm(&a.algo)?;
    let mut params = FilterParams::default();
    for (k, v) in &a.params {
        params.set(k, v).map_err(|e| usage!("{e}"))?;
    }
    if let Some(s) = a.sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(usage!("--sigma must be finite and non-negative"));
        }
    }
    let pairs_path = if a.input.is_dir() { a.input.join(PAIRS_MANIFEST) } else { a.input.clone() };
    let pairs = if is_pairs_manifest(&pairs_path) { Some(read_pairs(&pairs_path)?) } else { None };
    let inputs: Vec<(String, PathBuf)> = match &pairs {
        Some(p) => p.iter().map(|r| (r.noisy.file_stem().unwrap_or_default().to_string_lossy().into_owned(), r.noisy.clone())).collect(),
        None => list_images(&a.input)?,
    };
    create_dir(&a.out)?;
    let out = absolute(&a.out)?;
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut timings = Vec::with_capacity(inputs.len());
    for (stem, path) in &inputs {
        let img = load_image(path)?;
        let start = Instant::now();
        let den = algo.apply(&img, a.sigma, &params)?;
        let seconds = start.elapsed().as_secs_f64();
        let file = out.join(format!("{stem}_{}.dplf", algo.name()));
        save_raw(&den, &file)?;
        save_pgm(&den, &file.with_extension("pgm"))?;
        timings.push(TimingRecord { file: absolute(path)?, algorithm: algo.name().into(), seconds });
        outputs.push(file);
    }
    write_timings(&out.join(TIMINGS_FILE), &timings)?;
    if let Some(pairs) = pairs {
        let records: Vec<PairRecord> = pairs
            .into_iter()
            .zip(&outputs)
            .map(|(r, file)| PairRecord { noisy: file.clone(), algorithm: Some(algo.name().into()), ..r })
            .collect();
        write_pairs(&out.join(PAIRS_MANIFEST), &records)?;
    }
    Ok(DenoiseOutcome { outputs, timings })
}

/// Loads every pair listed in a pairs manifest (or a directory holding one).
pub fn load_pairs(path: &Path) -> LabResult<(Vec<PairRecord>, Vec<Pair>)> {
    let manifest = if path.is_dir() { path.join(PAIRS_MANIFEST) } else { path.to_path_buf() };
    let records = read_pairs(&manifest)?;
    if records.is_empty() {
        return Err(usage!("{} lists no pairs", manifest.display()));
    }
    let mut pairs = Vec::with_capacity(records.len());
    for r in &records {
        let clean = load_image(&r.clean)?;
        let noisy = load_image(&r.noisy)?;
        if !clean.same_shape(&noisy) {
            return Err(LabError::Incompatible(format!(
                "pair {}: clean {}x{} vs noisy {}x{}",
                r.id,
                clean.width(),
                clean.height(),
                noisy.width(),
                noisy.height()
            )));
        }
        pairs.push(Pair { id: r.id.clone(), noise: r.noise.clone(), noisy, clean });
    }
    Ok((records, pairs))
}

fn check_divisible(pairs: &[Pair], depth: usize) -> LabResult<()> {
    let m = 1usize << depth;
    for p in pairs {
        let (w, h) = (p.clean.width(), p.clean.height());
        if w % m != 0 || h % m != 0 {
            return Err(LabError::Incompatible(format!(
                "image {} is {}x{}; a depth-{} model needs sides divisible by {}",
                p.id, w, h, depth, m
            )));
        }
    }
    Ok(())
}

fn check_model_fit(pairs: &[Pair], depth: usize) -> LabResult<()> {
    check_divisible(pairs, depth)?;
    let first = (pairs[0].clean.width(), pairs[0].clean.height());
    for p in pairs {
        let (w, h) = (p.clean.width(), p.clean.height());
        if (w, h) != first {
            return Err(LabError::Incompatible(format!(
                "image {} is {}x{} but training needs one size ({}x{})",
                p.id, w, h, first.0, first.1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub model: String,
    pub data: PathBuf,
    pub out: PathBuf,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub depth: usize,
    pub base: usize,
    pub val_every: usize,
}

impl Default for TrainArgs {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            model: ModelKind::Dpl.name().into(),
            data: PathBuf::from(PAIRS_MANIFEST),
            out: PathBuf::from("train_out"),
            iters: d.iterations,
            batch: d.batch_size,
            lr: d.lr,
            seed: d.seed,
            depth: d.depth,
            base: d.base_channels,
            val_every: d.val_every,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_loss: Option<dpl::LossReport>,
    pub best_iteration: usize,
    pub validation: MetricReport,
}

pub fn cmd_train(a: &TrainArgs) -> LabResult<TrainSummary> {
    let kind = ModelKind::from_name(&a.model).ok_or_else(|| usage!("unknown model `{}` (dpl or unet)", a.model))?;
    if a.batch == 0 {
        return Err(usage!("--batch must be at least 1"));
    }
    let cfg = TrainConfig {
        iterations: a.iters,
        batch_size: a.batch,
        lr: a.lr,
        seed: a.seed,
        model: kind,
        depth: a.depth,
        base_channels: a.base,
        val_every: a.val_every,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage!("{e}"))?;
    dpl_core::nn::UNetConfig::new(1, a.depth, a.base).map_err(|e| usage!("{e}"))?;
    let (_, pairs) = load_pairs(&a.data)?;
    check_model_fit(&pairs, a.depth)?;
    let outcome = dpl::train::<f32>(&cfg, &pairs)?;
    create_dir(&a.out)?;
    let checkpoint = a.out.join(CHECKPOINT_FILE);
    save_model(&outcome.model, &checkpoint)?;
    write_text(&a.out.join(LOSS_FILE), &dpl::loss_csv(&outcome.curve))?;
    let held_out: Vec<Pair> = outcome.split.val.iter().map(|&i| pairs[i].clone()).collect();
    let validation = if held_out.is_empty() { MetricReport::default() } else { dpl::evaluate(&outcome.model, &held_out)? };
    write_text(&a.out.join(VALIDATION_FILE), &validation.to_csv())?;
    Ok(TrainSummary {
        checkpoint,
        final_loss: outcome.curve.last().map(|r| r.report),
        best_iteration: outcome.best_iteration,
        validation,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub pairs: PathBuf,
    pub csv: PathBuf,
    pub model: Option<PathBuf>,
}

pub fn cmd_eval(a: &EvalArgs) -> LabResult<MetricReport> {
    let (records, pairs) = load_pairs(&a.pairs)?;
    let report = match &a.model {
        Some(path) => {
            let model = load_model(path)?;
            check_divisible(&pairs, model.depth())?;
            dpl::evaluate(&model, &pairs)?
        }
        None => {
            let mut report = MetricReport::default();
            for (r, p) in records.iter().zip(&pairs) {
                let label = r.algorithm.as_deref().unwrap_or(dpl::NOISY_LABEL);
                report.push(MetricRow::measure(&p.id, label, &p.noise, &p.clean, &p.noisy)?);
            }
            report
        }
    };
    if let Some(dir) = a.csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&a.csv, &report.to_csv())?;
    Ok(report)
}

/// Outcome of one (method, noise) cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Done { psnr: f64, ssim: f64 },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub details: MetricReport,
    /// (method, noise, cell) sorted by method then noise.
    pub cells: Vec<(String, String, Cell)>,
    pub noises: Vec<String>,
    pub failed: usize,
}

impl BenchOutcome {
    /// `PartialBench` when any cell failed.
    pub fn status(&self) -> LabResult<()> {
        if self.failed > 0 {
            return Err(LabError::PartialBench { failed: self.failed, total: self.cells.len() });
        }
        Ok(())
    }

    pub fn cell(&self, method: &str, noise: &str) -> Option<&Cell> {
        self.cells.iter().find(|(m, n, _)| m == method && n == noise).map(|(_, _, c)| c)
    }
}

fn bench_images(cfg: &BenchConfig) -> LabResult<Vec<(String, Image)>> {
    match &cfg.dataset {
        Some(dir) => list_images(dir)?
            .into_iter()
            .map(|(id, path)| Ok((id, load_image(&path)?)))
            .collect(),
        None => (0..cfg.count)
            .map(|i| {
                let spec = PhantomSpec::with_size_seed(cfg.size, derive_seed(cfg.seed, i)).map_err(|e| usage!("{e}"))?;
                Ok((phantom_id(i), gen_phantom(&spec)))
            })
            .collect(),
    }
}

fn run_cell(cfg: &BenchConfig, method: Method, pairs: &[Pair], eval: &[usize]) -> dpl_core::Result<MetricReport> {
    let mut report = MetricReport::default();
    match method {
        Method::Noisy => {
            for &i in eval {
                let p = &pairs[i];
                report.push(MetricRow::measure(&p.id, method.name(), &p.noise, &p.clean, &p.noisy)?);
            }
        }
        Method::Filter(algo) => {
            for &i in eval {
                let p = &pairs[i];
                let den = algo.apply(&p.noisy, cfg.sigma, &cfg.filter)?;
                report.push(MetricRow::measure(&p.id, method.name(), &p.noise, &p.clean, &den)?);
            }
        }
        Method::Model(kind) => {
            let outcome = dpl::train::<f32>(&cfg.train.to_config(kind, cfg.seed), pairs)?;
            let held: Vec<Pair> = eval.iter().map(|&i| pairs[i].clone()).collect();
            let full = dpl::evaluate(&outcome.model, &held)?;
            report.rows = full.rows.into_iter().filter(|r| r.algorithm == kind.name()).collect();
        }
    }
    Ok(report)
}

/// Runs every (noise, method) cell. When models are configured every cell is
/// scored on the validation split; otherwise on all images.
pub fn run_bench(cfg: &BenchConfig) -> LabResult<BenchOutcome> {
    cfg.validate()?;
    let images = bench_images(cfg)?;
    if images.is_empty() {
        return Err(usage!("bench dataset is empty"));
    }
    let all: Vec<usize> = (0..images.len()).collect();
    let eval = if cfg.has_models() { split_dataset(&all, TrainConfig::default().train_ratio, cfg.seed)?.val } else { all };
    let noise_base = cfg.seed.wrapping_add(BENCH_NOISE_SEED_OFFSET);
    let mut details = MetricReport::default();
    let mut cells = Vec::new();
    for kind in &cfg.noises {
        let pairs: Vec<Pair> = images
            .iter()
            .enumerate()
            .map(|(i, (id, clean))| {
                let spec = NoiseSpec::new(*kind, derive_seed(noise_base, i))?;
                Ok(Pair { id: id.clone(), noise: kind.name().into(), noisy: spec.apply(clean), clean: clean.clone() })
            })
            .collect::<dpl_core::Result<_>>()?;
        for &method in &cfg.methods {
            let cell = match run_cell(cfg, method, &pairs, &eval) {
                Ok(report) => {
                    let agg = report.aggregate(method.name(), kind.name());
                    details.extend(report);
                    match agg {
                        Some(a) => Cell::Done { psnr: a.psnr_db, ssim: a.ssim },
                        None => Cell::Failed("no images evaluated".into()),
                    }
                }
                Err(e) => Cell::Failed(e.to_string()),
            };
            cells.push((method.name().to_string(), kind.name().to_string(), cell));
        }
    }
    cells.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut noises: Vec<String> = cfg.noises.iter().map(|n| n.name().to_string()).collect();
    noises.sort();
    noises.dedup();
    let failed = cells.iter().filter(|c| matches!(c.2, Cell::Failed(_))).count();
    Ok(BenchOutcome { details, cells, noises, failed })
}

/// Algorithms as rows, noise families as columns.
pub fn bench_table(outcome: &BenchOutcome, pick: impl Fn(f64, f64) -> String) -> String {
    let mut out = String::from("algorithm");
    for n in &outcome.noises {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let mut methods: Vec<&str> = outcome.cells.iter().map(|c| c.0.as_str()).collect();
    methods.dedup();
    for m in methods {
        out.push_str(m);
        for n in &outcome.noises {
            out.push(',');
            match outcome.cell(m, n) {
                Some(Cell::Done { psnr, ssim }) => out.push_str(&pick(*psnr, *ssim)),
                Some(Cell::Failed(_)) => out.push_str("error"),
                None => {}
            }
        }
        out.push('\n');
    }
    out
}

/// Runs the bench and writes the PSNR table, SSIM table and per-image
/// details. Failed cells are written as `error`; see [`BenchOutcome::status`].
pub fn cmd_bench(cfg: &BenchConfig) -> LabResult<BenchOutcome> {
    let outcome = run_bench(cfg)?;
    create_dir(&cfg.out)?;
    let psnr = |p: f64, _| if p.is_finite() { format!("{p:.4}") } else { format_psnr(p) };
    write_text(&cfg.out.join(PSNR_TABLE), &bench_table(&outcome, psnr))?;
    write_text(&cfg.out.join(SSIM_TABLE), &bench_table(&outcome, |_, s| format!("{s:.6}")))?;
    write_text(&cfg.out.join(DETAILS_FILE), &outcome.details.to_csv())?;
    Ok(outcome)
}

