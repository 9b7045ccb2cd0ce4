//! Orthonormal Haar DWT, soft-threshold shrinkage (VisuShrink and
//! BayesShrink) and the MAD noise estimator.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::boundary::reflect;
use crate::error::{bail, Result};
use crate::image::Image;

/// Threshold selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shrink {
    /// Per-subband `σ²/σ_x`.
    Bayes,
    /// Global universal threshold `σ·sqrt(2 ln n)`.
    Visu,
}

/// How a noise level was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMethod {
    Known,
    Mad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub method: SigmaMethod,
}

impl SigmaEstimate {
    pub fn known(sigma: f64) -> Self {
        Self {
            sigma,
            method: SigmaMethod::Known,
        }
    }

    /// `sigma` if given, otherwise [`estimate_sigma`].
    pub fn resolve(image: &Image, sigma: Option<f64>) -> Self {
        match sigma {
            Some(s) => Self::known(s),
            None => estimate_sigma(image),
        }
    }
}

/// One decomposition level: detail subbands of a (possibly padded) plane.
#[derive(Debug, Clone)]
pub struct HaarLevel {
    /// Plane size before padding to even dimensions.
    pub width: usize,
    pub height: usize,
    pub lh: Vec<f64>,
    pub hl: Vec<f64>,
    pub hh: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HaarPyramid {
    pub levels: Vec<HaarLevel>,
    pub approx: Vec<f64>,
    pub approx_width: usize,
    pub approx_height: usize,
}

/// One 2-D Haar analysis step. Odd dimensions are first extended by one
/// reflected row/column. Returns (LL, LH, HL, HH) at half size.
fn haar_split(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, usize, usize) {
    let (hw, hh_) = (w.div_ceil(2), h.div_ceil(2));
    let at = |x: usize, y: usize| src[reflect(y as isize, h) * w + reflect(x as isize, w)];
    let n = hw * hh_;
    let (mut ll, mut lh, mut hl, mut hh) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for j in 0..hh_ {
        for i in 0..hw {
            let a = at(2 * i, 2 * j);
            let b = at(2 * i + 1, 2 * j);
            let c = at(2 * i, 2 * j + 1);
            let d = at(2 * i + 1, 2 * j + 1);
            let k = j * hw + i;
            ll[k] = (a + b + c + d) * 0.5;
            lh[k] = (a - b + c - d) * 0.5;
            hl[k] = (a + b - c - d) * 0.5;
            hh[k] = (a - b - c + d) * 0.5;
        }
    }
    (ll, lh, hl, hh, hw, hh_)
}

fn haar_merge(ll: &[f64], level: &HaarLevel) -> Vec<f64> {
    let (w, h) = (level.width, level.height);
    let hw = w.div_ceil(2);
    let mut out = vec![0.0; w * h];
    for j in 0..h.div_ceil(2) {
        for i in 0..hw {
            let k = j * hw + i;
            let (s, p, q, r) = (ll[k], level.lh[k], level.hl[k], level.hh[k]);
            let quad = [
                (s + p + q + r) * 0.5,
                (s - p + q - r) * 0.5,
                (s + p - q - r) * 0.5,
                (s - p - q + r) * 0.5,
            ];
            for (t, v) in quad.into_iter().enumerate() {
                let (x, y) = (2 * i + (t & 1), 2 * j + (t >> 1));
                if x < w && y < h {
                    out[y * w + x] = v;
                }
            }
        }
    }
    out
}

pub fn haar_forward(src: &[f64], w: usize, h: usize, levels: usize) -> HaarPyramid {
    let mut approx = src.to_vec();
    let (mut cw, mut ch) = (w, h);
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (ll, lh, hl, hh, nw, nh) = haar_split(&approx, cw, ch);
        out.push(HaarLevel {
            width: cw,
            height: ch,
            lh,
            hl,
            hh,
        });
        approx = ll;
        cw = nw;
        ch = nh;
    }
    HaarPyramid {
        levels: out,
        approx,
        approx_width: cw,
        approx_height: ch,
    }
}

pub fn haar_inverse(pyr: &HaarPyramid) -> Vec<f64> {
    let mut approx = pyr.approx.clone();
    for level in pyr.levels.iter().rev() {
        approx = haar_merge(&approx, level);
    }
    approx
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Noise standard deviation from the finest diagonal Haar subband:
/// `median(|HH|) / 0.6745`. Odd trailing rows/columns are ignored.
pub fn estimate_sigma(image: &Image) -> SigmaEstimate {
    let (w, h) = (image.width() / 2 * 2, image.height() / 2 * 2);
    if w == 0 || h == 0 {
        return SigmaEstimate {
            sigma: 0.0,
            method: SigmaMethod::Mad,
        };
    }
    let px = |x: usize, y: usize| image.get(x, y) as f64;
    let mut d: Vec<f64> = Vec::with_capacity(w * h / 4);
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            d.push(((px(x, y) - px(x + 1, y) - px(x, y + 1) + px(x + 1, y + 1)) * 0.5).abs());
        }
    }
    SigmaEstimate {
        sigma: median(&mut d) / 0.6745,
        method: SigmaMethod::Mad,
    }
}

/// Soft-threshold wavelet shrinkage over `levels` Haar levels.
pub fn wavelet_denoise(image: &Image, mode: Shrink, levels: usize, sigma: Option<f64>) -> Result<Image> {
    let (w, h) = (image.width(), image.height());
    if levels == 0 || levels >= usize::BITS as usize || w < (1 << levels) || h < (1 << levels) {
        bail!(
            InvalidArgument,
            "{}x{} image too small for {} wavelet levels",
            w,
            h,
            levels
        );
    }
    let sigma = SigmaEstimate::resolve(image, sigma).sigma;
    let mut pyr = haar_forward(&image.to_f64(), w, h, levels);
    let universal = sigma * (2.0 * ((w * h) as f64).ln()).sqrt();
    for level in &mut pyr.levels {
        for band in [&mut level.lh, &mut level.hl, &mut level.hh] {
            let t = match mode {
                Shrink::Visu => universal,
                Shrink::Bayes => bayes_threshold(band, sigma),
            };
            for v in band.iter_mut() {
                *v = soft(*v, t);
            }
        }
    }
    let out = haar_inverse(&pyr);
    let mut img = Image::from_f64(w, h, &out)?;
    img.clip_in_place();
    Ok(img)
}

/// `σ²/σ_x` with `σ_x = sqrt(max(E[d²] − σ², 0))`; a subband with no
/// signal energy gets its largest magnitude as threshold.
fn bayes_threshold(band: &[f64], sigma: f64) -> f64 {
    let second_moment = band.iter().map(|v| v * v).sum::<f64>() / band.len() as f64;
    let sigma_x = (second_moment - sigma * sigma).max(0.0).sqrt();
    if sigma_x == 0.0 {
        band.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        sigma * sigma / sigma_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{gen_phantom, PhantomSpec};
    use crate::metrics::{mse, psnr};
    use crate::noise::add_gaussian;
    use crate::rng::Rng;

    #[test]
    fn haar_perfect_reconstruction_odd_sizes() {
        let mut rng = Rng::new(1);
        for (w, h) in [(37, 29), (64, 64), (9, 16)] {
            let src: Vec<f64> = (0..w * h).map(|_| rng.uniform()).collect();
            let pyr = haar_forward(&src, w, h, 3);
            let back = haar_inverse(&pyr);
            for (a, b) in src.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(40, 24, 0.6).unwrap();
        for mode in [Shrink::Bayes, Shrink::Visu] {
            let out = wavelet_denoise(&img, mode, 3, None).unwrap();
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = gen_phantom(&PhantomSpec::default());
        for mode in [Shrink::Bayes, Shrink::Visu] {
            let out = wavelet_denoise(&img, mode, 3, Some(0.0)).unwrap();
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_small_rejected() {
        let img = Image::filled(7, 16, 0.1).unwrap();
        assert!(wavelet_denoise(&img, Shrink::Bayes, 3, None).is_err());
    }

    #[test]
    fn visu_smooths_more_than_bayes() {
        let clean = gen_phantom(&PhantomSpec::with_size_seed(128, 21).unwrap());
        let noisy = add_gaussian(&clean, 0.0, 0.005, &mut Rng::new(8)).unwrap();
        let b = wavelet_denoise(&noisy, Shrink::Bayes, 3, None).unwrap();
        let v = wavelet_denoise(&noisy, Shrink::Visu, 3, None).unwrap();
        let p_noisy = psnr(&clean, &noisy, 1.0).unwrap();
        assert!(psnr(&clean, &b, 1.0).unwrap() > p_noisy);
        assert!(psnr(&clean, &v, 1.0).unwrap() > p_noisy);
        assert!(mse(&clean, &v).unwrap() > mse(&clean, &b).unwrap());
    }

    #[test]
    fn sigma_estimates() {
        assert_eq!(estimate_sigma(&Image::filled(32, 32, 0.4).unwrap()).sigma, 0.0);
        let mut rng = Rng::new(12);
        let sd = 0.005f64.sqrt();
        let noise = Image::from_fn(256, 256, |_, _| (sd * rng.normal()) as f32).unwrap();
        let s = estimate_sigma(&noise).sigma;
        assert!((s - sd).abs() < 0.1 * sd, "{s}");
        let ramp = Image::from_fn(256, 256, |x, y| {
            noise.get(x, y) + 0.5 * x as f32 / 255.0 + 0.2 * y as f32 / 255.0
        })
        .unwrap();
        let s2 = estimate_sigma(&ramp).sigma;
        assert!((s2 - s).abs() < 0.05 * s, "{s} vs {s2}");
    }
}
