//! Gaussian, AWGN and speckle corruption with a seeded generator.
//!
//! Every corruption first draws an additive noise field (kept in `f64`) and
//! then adds it to the image, optionally clipping the result to `[0, 1]`.
//! The `*_field` functions expose the pre-clip field for statistical checks.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Noise family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Additive `N(mean, var)`.
    Gaussian { mean: f64, var: f64 },
    /// Additive zero-mean Gaussian whose per-image variance is itself drawn
    /// from `N(loc, scale²)` and clamped at zero.
    Awgn { loc: f64, scale: f64 },
    /// Multiplicative: `x + x·n`, `n ~ N(mean, var)`.
    Speckle { mean: f64, var: f64 },
}

impl NoiseKind {
    pub const GAUSSIAN_DEFAULT: NoiseKind = NoiseKind::Gaussian {
        mean: 0.0,
        var: 0.005,
    };
    pub const AWGN_DEFAULT: NoiseKind = NoiseKind::Awgn {
        loc: 0.01,
        scale: 0.0001,
    };
    pub const SPECKLE_DEFAULT: NoiseKind = NoiseKind::Speckle {
        mean: 0.1,
        var: 0.01,
    };

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::Awgn { .. } => "awgn",
            NoiseKind::Speckle { .. } => "speckle",
        }
    }

    /// Default parameters for a family name.
    pub fn from_name(name: &str) -> Option<NoiseKind> {
        match name {
            "gaussian" => Some(Self::GAUSSIAN_DEFAULT),
            "awgn" => Some(Self::AWGN_DEFAULT),
            "speckle" => Some(Self::SPECKLE_DEFAULT),
            _ => None,
        }
    }

    /// Parameter names and values, in a fixed order.
    pub fn params(&self) -> [(&'static str, f64); 2] {
        match *self {
            NoiseKind::Gaussian { mean, var } | NoiseKind::Speckle { mean, var } => {
                [("mean", mean), ("var", var)]
            }
            NoiseKind::Awgn { loc, scale } => [("loc", loc), ("scale", scale)],
        }
    }

    /// Overrides one parameter by name.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match (self, key) {
            (NoiseKind::Gaussian { mean, .. } | NoiseKind::Speckle { mean, .. }, "mean") => mean,
            (NoiseKind::Gaussian { var, .. } | NoiseKind::Speckle { var, .. }, "var") => var,
            (NoiseKind::Awgn { loc, .. }, "loc") => loc,
            (NoiseKind::Awgn { scale, .. }, "scale") => scale,
            (kind, _) => bail!(InvalidArgument, "{} noise has no parameter `{}`", kind.name(), key),
        };
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { var, .. } | NoiseKind::Speckle { var, .. } if !(var >= 0.0) => {
                bail!(InvalidArgument, "noise variance {} must be >= 0", var)
            }
            NoiseKind::Awgn { scale, .. } if !(scale >= 0.0) => {
                bail!(InvalidArgument, "AWGN scale {} must be >= 0", scale)
            }
            _ => Ok(()),
        }
    }
}

/// Complete description of one corruption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
    pub clip: bool,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            seed,
            clip: true,
        })
    }

    /// Additive pre-clip noise field this spec produces on `image`.
    pub fn noise_field(&self, image: &Image) -> Vec<f64> {
        let mut rng = Rng::new(self.seed);
        match self.kind {
            NoiseKind::Gaussian { mean, var } => gaussian_field(image.len(), mean, var, &mut rng),
            NoiseKind::Awgn { loc, scale } => awgn_field(image.len(), loc, scale, &mut rng),
            NoiseKind::Speckle { mean, var } => speckle_field(image, mean, var, &mut rng),
        }
    }

    pub fn apply(&self, image: &Image) -> Image {
        apply_field(image, &self.noise_field(image), self.clip)
    }
}

/// `len` i.i.d. draws of `N(mean, var)`.
pub fn gaussian_field(len: usize, mean: f64, var: f64, rng: &mut Rng) -> Vec<f64> {
    let sd = var.max(0.0).sqrt();
    (0..len).map(|_| mean + sd * rng.normal()).collect()
}

/// Samples the per-image variance, then a zero-mean Gaussian field with it.
/// A degenerate distribution (`scale == 0`) consumes no variate, so the
/// result matches [`gaussian_field`] with `var = loc` exactly.
pub fn awgn_field(len: usize, loc: f64, scale: f64, rng: &mut Rng) -> Vec<f64> {
    let var = awgn_variance(loc, scale, rng);
    gaussian_field(len, 0.0, var, rng)
}

/// Per-image variance draw used by [`awgn_field`].
pub fn awgn_variance(loc: f64, scale: f64, rng: &mut Rng) -> f64 {
    if scale > 0.0 {
        (loc + scale * rng.normal()).max(0.0)
    } else {
        loc.max(0.0)
    }
}

/// `x ⊙ g` where `g` is the Gaussian field for the same generator state.
pub fn speckle_field(image: &Image, mean: f64, var: f64, rng: &mut Rng) -> Vec<f64> {
    let mut g = gaussian_field(image.len(), mean, var, rng);
    for (n, &x) in g.iter_mut().zip(image.data()) {
        *n *= x as f64;
    }
    g
}

pub fn apply_field(image: &Image, field: &[f64], clip: bool) -> Image {
    debug_assert_eq!(field.len(), image.len());
    let data = image
        .data()
        .iter()
        .zip(field)
        .map(|(&x, &n)| {
            let v = x as f64 + n;
            if clip {
                v.clamp(0.0, 1.0) as f32
            } else {
                v as f32
            }
        })
        .collect();
    Image::new(image.width(), image.height(), data).expect("shape preserved")
}

/// Adds `N(mean, var)` noise and clips to `[0, 1]`.
pub fn add_gaussian(image: &Image, mean: f64, var: f64, rng: &mut Rng) -> Result<Image> {
    NoiseKind::Gaussian { mean, var }.validate()?;
    Ok(apply_field(image, &gaussian_field(image.len(), mean, var, rng), true))
}

/// Adds AWGN with a randomly drawn per-image variance and clips to `[0, 1]`.
pub fn add_awgn(image: &Image, loc: f64, scale: f64, rng: &mut Rng) -> Result<Image> {
    NoiseKind::Awgn { loc, scale }.validate()?;
    Ok(apply_field(image, &awgn_field(image.len(), loc, scale, rng), true))
}

/// Applies multiplicative speckle and clips to `[0, 1]`.
pub fn add_speckle(image: &Image, mean: f64, var: f64, rng: &mut Rng) -> Result<Image> {
    NoiseKind::Speckle { mean, var }.validate()?;
    Ok(apply_field(image, &speckle_field(image, mean, var, rng), true))
}
