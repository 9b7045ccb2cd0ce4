//! Bench configuration: `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! [bench]
//! out = results
//! seed = 7
//! count = 8
//! size = 64
//! noises = gaussian, speckle
//! algorithms = noisy, median, bm3d
//! models = dpl, unet
//!
//! [noise.gaussian]
//! var = 0.01
//!
//! [filter]
//! radius = 2
//!
//! [train]
//! iters = 200
//! ```

use std::path::{Path, PathBuf};

use dpl_core::classic::{Algorithm, FilterParams};
use dpl_core::dpl::{ModelKind, TrainConfig, NOISY_LABEL};
use dpl_core::noise::NoiseKind;
use ini::Ini;

use crate::error::{usage, LabError, LabResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub depth: usize,
    pub base_channels: usize,
    pub val_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            iterations: d.iterations,
            batch_size: d.batch_size,
            lr: d.lr,
            depth: d.depth,
            base_channels: d.base_channels,
            val_every: d.val_every,
        }
    }
}

impl TrainSettings {
    pub fn to_config(&self, model: ModelKind, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
            model,
            depth: self.depth,
            base_channels: self.base_channels,
            val_every: self.val_every,
            ..TrainConfig::default()
        }
    }

    fn set(&mut self, key: &str, value: &str) -> LabResult<()> {
        match key {
            "iters" | "iterations" => self.iterations = num(key, value)?,
            "batch" | "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "depth" => self.depth = num(key, value)?,
            "base" | "base_channels" => self.base_channels = num(key, value)?,
            "val_every" => self.val_every = num(key, value)?,
            _ => return Err(usage!("unknown [train] key `{key}`")),
        }
        Ok(())
    }
}

/// A bench row: a classical filter, a trained model or the unprocessed input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Noisy,
    Filter(Algorithm),
    Model(ModelKind),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Noisy => NOISY_LABEL,
            Method::Filter(a) => a.name(),
            Method::Model(m) => m.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        if name == NOISY_LABEL {
            return Some(Method::Noisy);
        }
        Algorithm::from_name(name)
            .map(Method::Filter)
            .or_else(|| ModelKind::from_name(name).map(Method::Model))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Clean images come from here when set; otherwise phantoms are generated.
    pub dataset: Option<PathBuf>,
    pub count: usize,
    pub size: usize,
    pub noises: Vec<NoiseKind>,
    pub methods: Vec<Method>,
    pub sigma: Option<f64>,
    pub filter: FilterParams,
    pub train: TrainSettings,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("bench_out"),
            seed: 0,
            dataset: None,
            count: 8,
            size: 64,
            noises: vec![NoiseKind::GAUSSIAN_DEFAULT],
            methods: vec![
                Method::Noisy,
                Method::Filter(Algorithm::Median),
                Method::Filter(Algorithm::Bm3d),
            ],
            sigma: None,
            filter: FilterParams::default(),
            train: TrainSettings::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> LabResult<T> {
    value.trim().parse().map_err(|_| usage!("bad value `{value}` for `{key}`"))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl BenchConfig {
    pub fn from_file(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.out = dir.join(&cfg.out);
            cfg.dataset = cfg.dataset.map(|d| dir.join(d));
        }
        Ok(cfg)
    }

    /// Parses config text. Relative paths stay relative.
    pub fn parse(text: &str) -> LabResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| usage!("config: {e}"))?;
        let mut cfg = Self::default();
        let mut noise_overrides = Vec::new();
        for (section, props) in ini.iter() {
            match section {
                None if props.is_empty() => {}
                None => return Err(usage!("config keys must sit under a [section] header")),
                Some("bench") => {
                    for (k, v) in props.iter() {
                        cfg.set_bench(k, v)?;
                    }
                }
                Some("train") => {
                    for (k, v) in props.iter() {
                        cfg.train.set(k, v)?;
                    }
                }
                Some("filter") => {
                    for (k, v) in props.iter() {
                        cfg.filter.set(k, v).map_err(|e| usage!("[filter] {e}"))?;
                    }
                }
                Some(s) if s.starts_with("noise.") => {
                    let name = &s["noise.".len()..];
                    for (k, v) in props.iter() {
                        noise_overrides.push((name.to_string(), k.to_string(), num::<f64>(k, v)?));
                    }
                }
                Some(s) => return Err(usage!("unknown config section [{s}]")),
            }
        }
        for (name, key, value) in noise_overrides {
            let Some(kind) = cfg.noises.iter_mut().find(|n| n.name() == name) else {
                return Err(usage!("[noise.{name}] does not match a configured noise"));
            };
            kind.set_param(&key, value).map_err(|e| usage!("[noise.{name}] {e}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_bench(&mut self, key: &str, value: &str) -> LabResult<()> {
        match key {
            "out" => self.out = PathBuf::from(value.trim()),
            "seed" => self.seed = num(key, value)?,
            "dataset" => self.dataset = Some(PathBuf::from(value.trim())),
            "count" => self.count = num(key, value)?,
            "size" => self.size = num(key, value)?,
            "sigma" => self.sigma = Some(num(key, value)?),
            "noises" => {
                self.noises = list(value)
                    .map(|n| NoiseKind::from_name(n).ok_or_else(|| usage!("unknown noise `{n}`")))
                    .collect::<LabResult<_>>()?;
            }
            "algorithms" | "models" => {
                let parsed: Vec<Method> = list(value)
                    .map(|n| Method::from_name(n).ok_or_else(|| usage!("unknown algorithm `{n}`")))
                    .collect::<LabResult<_>>()?;
                if key == "algorithms" {
                    self.methods.retain(|m| matches!(m, Method::Model(_)));
                } else {
                    self.methods.retain(|m| !matches!(m, Method::Model(_)));
                }
                for m in parsed {
                    if !self.methods.contains(&m) {
                        self.methods.push(m);
                    }
                }
            }
            _ => return Err(usage!("unknown [bench] key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.noises.is_empty() {
            return Err(usage!("at least one noise is required"));
        }
        if self.methods.is_empty() {
            return Err(usage!("at least one algorithm or model is required"));
        }
        if self.dataset.is_none() && (self.count == 0 || self.size == 0) {
            return Err(usage!("count and size must be positive"));
        }
        for n in &self.noises {
            n.validate().map_err(|e| usage!("{e}"))?;
        }
        Ok(())
    }

    pub fn has_models(&self) -> bool {
        self.methods.iter().any(|m| matches!(m, Method::Model(_)))
    }
}
