//! Vanilla U-Net with padded 3×3 convolutions and a single-channel head.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::graph::{ParamId, ParamStore, Tape, Var};
use super::scalar::Scalar;
use super::tensor::{Shape, Tensor};
use crate::error::{bail, Result};
use crate::rng::Rng;

pub const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub depth: usize,
    pub base_channels: usize,
}

impl UNetConfig {
    pub const DESK_DEPTH: usize = 2;
    pub const DESK_BASE: usize = 16;

    pub fn new(in_channels: usize, depth: usize, base_channels: usize) -> Result<Self> {
        let cfg = Self { in_channels, depth, base_channels };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Depth 2, base 16.
    pub fn desk(in_channels: usize) -> Self {
        Self { in_channels, depth: Self::DESK_DEPTH, base_channels: Self::DESK_BASE }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.in_channels) {
            bail!(InvalidArgument, "in_channels must be 1 or 2, got {}", self.in_channels);
        }
        if self.depth == 0 || self.depth > MAX_DEPTH {
            bail!(InvalidArgument, "depth must be in 1..={}, got {}", MAX_DEPTH, self.depth);
        }
        if self.base_channels == 0 || self.base_channels > 1024 {
            bail!(InvalidArgument, "base_channels must be in 1..=1024, got {}", self.base_channels);
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c != self.in_channels {
            bail!(Shape, "U-Net expects {} input channels, got {}", self.in_channels, shape.c);
        }
        let m = self.multiple();
        if shape.h == 0 || shape.w == 0 || shape.h % m != 0 || shape.w % m != 0 {
            bail!(
                InvalidArgument,
                "input {}x{} is not divisible by 2^{} = {}",
                shape.w,
                shape.h,
                self.depth,
                m
            );
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// How a weight tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// N(0, 2 / fan_in).
    He { fan_in: usize },
    Zero,
}

/// One parameter slot of a U-Net: suffix name, shape and initializer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

fn conv_specs(out: &mut Vec<ParamSpec>, name: &str, cin: usize, cout: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: Shape::new(cout, cin, k, k),
        init: Init::He { fan_in: cin * k * k },
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: Shape::new(cout, 1, 1, 1),
        init: Init::Zero,
    });
}

fn upconv_specs(out: &mut Vec<ParamSpec>, name: &str, cin: usize, cout: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: Shape::new(cin, cout, 2, 2),
        init: Init::He { fan_in: cin },
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: Shape::new(cout, 1, 1, 1),
        init: Init::Zero,
    });
}

/// Parameter slots in registration order.
pub fn param_layout(cfg: &UNetConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let mut cin = cfg.in_channels;
    for level in 0..cfg.depth {
        let c = cfg.width(level);
        conv_specs(&mut out, &format!("enc{level}.conv1"), cin, c, 3);
        conv_specs(&mut out, &format!("enc{level}.conv2"), c, c, 3);
        cin = c;
    }
    let cb = cfg.width(cfg.depth);
    conv_specs(&mut out, "bott.conv1", cin, cb, 3);
    conv_specs(&mut out, "bott.conv2", cb, cb, 3);
    let mut cin = cb;
    for level in (0..cfg.depth).rev() {
        let c = cfg.width(level);
        upconv_specs(&mut out, &format!("dec{level}.up"), cin, c);
        conv_specs(&mut out, &format!("dec{level}.conv1"), 2 * c, c, 3);
        conv_specs(&mut out, &format!("dec{level}.conv2"), c, c, 3);
        cin = c;
    }
    conv_specs(&mut out, "out", cin, 1, 1);
    out
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

/// U-Net bound to parameters in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    prefix: String,
    ids: Vec<ParamId>,
}

impl UNet {
    /// Registers freshly initialized parameters under `prefix`.
    pub fn register<T: Scalar>(
        cfg: UNetConfig,
        prefix: &str,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut ids = Vec::new();
        for spec in param_layout(&cfg) {
            let mut t = Tensor::zeros(spec.shape);
            if let Init::He { fan_in } = spec.init {
                let std = (2.0 / fan_in as f64).sqrt();
                for v in t.data_mut() {
                    *v = T::from_f64(rng.normal() * std);
                }
            }
            ids.push(store.register(format!("{prefix}{}", spec.name), t)?);
        }
        Ok(Self { cfg, prefix: prefix.into(), ids })
    }

    /// Binds to parameters already present in `store`, checking shapes.
    pub fn bind<T: Scalar>(cfg: UNetConfig, prefix: &str, store: &ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let mut ids = Vec::new();
        for spec in param_layout(&cfg) {
            let name = format!("{prefix}{}", spec.name);
            let Some(id) = store.get_id(&name) else {
                bail!(InvalidArgument, "missing parameter {}", name);
            };
            if store.value(id).shape() != spec.shape {
                bail!(
                    Shape,
                    "parameter {} has shape {}, expected {}",
                    name,
                    store.value(id).shape(),
                    spec.shape
                );
            }
            ids.push(id);
        }
        Ok(Self { cfg, prefix: prefix.into(), ids })
    }

    pub fn config(&self) -> UNetConfig {
        self.cfg
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.ids
    }

    fn layer(&self, i: usize) -> Layer {
        Layer { w: self.ids[2 * i], b: self.ids[2 * i + 1] }
    }

    fn load<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, i: usize) -> (Var, Var) {
        let l = self.layer(i);
        (tape.param(store, l.w), tape.param(store, l.b))
    }

    fn conv_relu<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        i: usize,
    ) -> Result<Var> {
        let (w, b) = self.load(tape, store, i);
        let y = tape.conv3x3(x, w, b)?;
        Ok(tape.relu(y))
    }

    /// Records the forward pass on `tape`; output shape (N, 1, H, W).
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        self.cfg.check_input(tape.shape(x))?;
        let mut layer = 0;
        let mut h = x;
        let mut skips = Vec::with_capacity(self.cfg.depth);
        for _ in 0..self.cfg.depth {
            h = self.conv_relu(tape, store, h, layer)?;
            h = self.conv_relu(tape, store, h, layer + 1)?;
            layer += 2;
            skips.push(h);
            h = tape.maxpool2(h)?;
        }
        h = self.conv_relu(tape, store, h, layer)?;
        h = self.conv_relu(tape, store, h, layer + 1)?;
        layer += 2;
        while let Some(skip) = skips.pop() {
            let (w, b) = self.load(tape, store, layer);
            let up = tape.upconv2(h, w, b)?;
            h = tape.concat(up, skip)?;
            h = self.conv_relu(tape, store, h, layer + 1)?;
            h = self.conv_relu(tape, store, h, layer + 2)?;
            layer += 3;
        }
        let (w, b) = self.load(tape, store, layer);
        tape.conv1x1(h, w, b)
    }
}

/// Parameters for a standalone U-Net, deterministic in `seed`.
pub fn init_weights<T: Scalar>(cfg: &UNetConfig, seed: u64) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    UNet::register(*cfg, "", &mut store, &mut Rng::new(seed))?;
    Ok(store)
}

/// Inference through a standalone U-Net whose parameters carry no prefix.
pub fn unet_forward<T: Scalar>(
    cfg: &UNetConfig,
    params: &ParamStore<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let net = UNet::bind(*cfg, "", params)?;
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let y = net.forward(&mut tape, params, xv)?;
    Ok(tape.value(y).clone())
}
