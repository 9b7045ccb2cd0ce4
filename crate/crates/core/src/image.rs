//! Single-channel raster images, synthetic phantoms and dataset splitting.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::num::NonZeroUsize;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::rng::Rng;

/// Largest accepted side length.
pub const MAX_SIDE: usize = 8192;

/// Row-major single-channel image with nominal intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            bail!(
                Shape,
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            );
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    /// Builds an image from `f(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f64` samples, rounding each to `f32`.
    pub fn from_f64(width: usize, height: usize, data: &[f64]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| v as f32).collect())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy with every sample clamped to `[0, 1]`.
    pub fn clipped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn clip_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        bail!(
            InvalidArgument,
            "image dimensions {}x{} outside 1..={}",
            width,
            height,
            MAX_SIDE
        );
    }
    Ok(())
}

/// Recipe for a synthetic test image: flat background, a linear intensity
/// ramp, overlapping filled ellipses and band-limited texture inside them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    size: usize,
    ellipse_count: NonZeroUsize,
    texture_amplitude: f64,
    seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            ellipse_count: NonZeroUsize::new(6).unwrap(),
            texture_amplitude: 0.05,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn new(
        size: usize,
        ellipse_count: NonZeroUsize,
        texture_amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        check_dims(size, size)?;
        if !(0.0..=0.3).contains(&texture_amplitude) {
            bail!(
                InvalidArgument,
                "texture amplitude {} outside [0, 0.3]",
                texture_amplitude
            );
        }
        Ok(Self {
            size,
            ellipse_count,
            texture_amplitude,
            seed,
        })
    }

    /// Default recipe at the given size and seed.
    pub fn with_size_seed(size: usize, seed: u64) -> Result<Self> {
        let d = Self::default();
        Self::new(size, d.ellipse_count, d.texture_amplitude, seed)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn ellipse_count(&self) -> NonZeroUsize {
        self.ellipse_count
    }

    pub fn texture_amplitude(&self) -> f64 {
        self.texture_amplitude
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub const PHANTOM_BACKGROUND: f32 = 0.05;

const TEXTURE_WAVES: usize = 6;

/// Generates the phantom described by `spec`. Pure function of `spec`.
pub fn gen_phantom(spec: &PhantomSpec) -> Image {
    let n = spec.size;
    let s = n as f64;
    let mut rng = Rng::new(spec.seed);
    let mut px = vec![PHANTOM_BACKGROUND as f64; n * n];
    let mut in_ellipse = vec![false; n * n];

    // Ramp: a horizontal band whose intensity varies linearly along x.
    let band_h = (n / 8).max(1);
    let band_y0 = ((rng.uniform_range(0.05, 0.8) * s) as usize).min(n - band_h);
    let (mut lo, mut hi) = (rng.uniform_range(0.1, 0.3), rng.uniform_range(0.6, 0.9));
    if rng.uniform() < 0.5 {
        core::mem::swap(&mut lo, &mut hi);
    }
    for y in band_y0..band_y0 + band_h {
        for x in 0..n {
            let t = if n > 1 { x as f64 / (n - 1) as f64 } else { 0.0 };
            px[y * n + x] = lo + (hi - lo) * t;
        }
    }

    for _ in 0..spec.ellipse_count.get() {
        let cx = rng.uniform_range(0.2, 0.8) * s;
        let cy = rng.uniform_range(0.2, 0.8) * s;
        let ax = rng.uniform_range(0.08, 0.3) * s;
        let ay = rng.uniform_range(0.08, 0.3) * s;
        let theta = rng.uniform_range(0.0, PI);
        let value = rng.uniform_range(0.2, 0.95);
        let (sin, cos) = theta.sin_cos();
        for y in 0..n {
            let dy = y as f64 + 0.5 - cy;
            for x in 0..n {
                let dx = x as f64 + 0.5 - cx;
                let u = (dx * cos + dy * sin) / ax;
                let v = (-dx * sin + dy * cos) / ay;
                if u * u + v * v <= 1.0 {
                    px[y * n + x] = value;
                    in_ellipse[y * n + x] = true;
                }
            }
        }
    }

    if spec.texture_amplitude > 0.0 {
        // Sum of plane waves with frequencies between 2 and n/8 cycles per
        // image, scaled so the texture stays within +-amplitude.
        let f_hi = (s / 8.0).max(2.0);
        let waves: Vec<(f64, f64, f64)> = (0..TEXTURE_WAVES)
            .map(|_| {
                let f = rng.uniform_range(2.0, f_hi);
                let dir = rng.uniform_range(0.0, 2.0 * PI);
                let phase = rng.uniform_range(0.0, 2.0 * PI);
                (f * dir.cos() / s, f * dir.sin() / s, phase)
            })
            .collect();
        let scale = spec.texture_amplitude / TEXTURE_WAVES as f64;
        for y in 0..n {
            for x in 0..n {
                let i = y * n + x;
                if !in_ellipse[i] {
                    continue;
                }
                let t: f64 = waves
                    .iter()
                    .map(|&(fx, fy, ph)| (2.0 * PI * (fx * x as f64 + fy * y as f64) + ph).sin())
                    .sum();
                px[i] += scale * t;
            }
        }
    }

    let data = px.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    Image {
        width: n,
        height: n,
        data,
    }
}

/// Disjoint train/validation partition of a list of identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
}

/// Seeded shuffle followed by a cut. `train_ratio` is the training fraction;
/// validation receives `round(len * (1 - train_ratio))` items.
pub fn split_dataset<T: Clone>(ids: &[T], train_ratio: f64, seed: u64) -> Result<DatasetSplit<T>> {
    if ids.is_empty() {
        bail!(InvalidArgument, "cannot split an empty dataset");
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        bail!(InvalidArgument, "train ratio {} outside (0, 1)", train_ratio);
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_val = ((ids.len() as f64 * (1.0 - train_ratio)).round() as usize).min(ids.len());
    let val = order[..n_val].iter().map(|&i| ids[i].clone()).collect();
    let train = order[n_val..].iter().map(|&i| ids[i].clone()).collect();
    Ok(DatasetSplit { train, val })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::filled(MAX_SIDE + 1, 1, 0.0).is_err());
    }

    #[test]
    fn phantom_is_deterministic() {
        let spec = PhantomSpec::with_size_seed(64, 9).unwrap();
        assert_eq!(gen_phantom(&spec), gen_phantom(&spec));
        let other = PhantomSpec::with_size_seed(64, 10).unwrap();
        assert_ne!(gen_phantom(&spec), gen_phantom(&other));
    }

    #[test]
    fn phantom_single_ellipse_has_two_plateaus() {
        for seed in 0..20 {
            let spec = PhantomSpec::new(128, NonZeroUsize::new(1).unwrap(), 0.0, seed).unwrap();
            let img = gen_phantom(&spec);
            let mut hist = [0usize; 256];
            for &v in img.data() {
                hist[((v * 255.0).round() as usize).min(255)] += 1;
            }
            // A plateau is a histogram mode holding at least 2% of the pixels;
            // the ramp spreads over ~150 bins and never qualifies.
            let modes = hist.iter().filter(|&&c| c * 50 >= img.len()).count();
            assert_eq!(modes, 2, "seed {seed}");
        }
    }

    #[test]
    fn phantom_mean_in_range_and_clipped() {
        let img = gen_phantom(&PhantomSpec::default());
        let m = img.mean();
        assert!(m > 0.05 && m < 0.95);
        let (lo, hi) = img.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn phantom_rejects_texture_out_of_range() {
        assert!(PhantomSpec::new(32, NonZeroUsize::new(1).unwrap(), 0.31, 0).is_err());
    }

    #[test]
    fn split_examples() {
        let ids: Vec<u32> = (0..10).collect();
        let s = split_dataset(&ids, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (8, 2));
        let s = split_dataset(&[7u32], 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (1, 0));
        assert!(split_dataset::<u32>(&[], 0.8, 1).is_err());
        assert!(split_dataset(&ids, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1usize..200, seed in any::<u64>()) {
            let ids: Vec<usize> = (0..n).collect();
            let s = split_dataset(&ids, 0.8, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, ids);
            let frac = s.val.len() as f64 / n as f64;
            prop_assert!((frac - 0.2).abs() <= 1.0 / n as f64);
            prop_assert_eq!(split_dataset(&(0..n).collect::<Vec<_>>(), 0.8, seed).unwrap(), s);
        }
    }

    #[test]
    fn split_seed_changes_permutation() {
        let ids: Vec<u32> = (0..50).collect();
        let a = split_dataset(&ids, 0.8, 1).unwrap();
        let b = split_dataset(&ids, 0.8, 2).unwrap();
        assert_ne!(a, b);
    }
}
