//! Non-local means.
//!
//! The filter visits one search offset at a time: the squared difference
//! between the image and its shifted copy is box-summed over the patch
//! footprint, giving the patch distance of every pixel for that offset in
//! `O(pixels)`. Samples outside the image are read through reflection.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::boundary::reflect;
use super::wavelet::SigmaEstimate;
use crate::error::{bail, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmParams {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Filtering strength; `None` selects `0.8·σ`.
    pub h: Option<f64>,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self {
            patch_radius: 3,
            search_radius: 10,
            h: None,
        }
    }
}

impl NlmParams {
    pub fn strength(&self, sigma: f64) -> f64 {
        self.h.unwrap_or(0.8 * sigma)
    }
}

/// Weight for a mean squared patch distance. With `h = 0` this is the
/// limit of the kernel: 1 for distances not above the `2σ²` allowance,
/// 0 otherwise.
#[inline]
pub fn nlm_weight(d2: f64, sigma: f64, h: f64) -> f64 {
    let excess = (d2 - 2.0 * sigma * sigma).max(0.0);
    let h2 = h * h;
    if h2 == 0.0 {
        if excess == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (-excess / h2).exp()
    }
}

fn resolve(image: &Image, params: &NlmParams, sigma: Option<f64>) -> Result<(f64, f64)> {
    let sigma = SigmaEstimate::resolve(image, sigma).sigma;
    let h = params.strength(sigma);
    if !(h >= 0.0) {
        bail!(InvalidArgument, "NLM strength h must be positive, got {}", h);
    }
    Ok((sigma, h))
}

pub fn nlm(image: &Image, params: &NlmParams, sigma: Option<f64>) -> Result<Image> {
    let (sigma, h) = resolve(image, params, sigma)?;
    let (w, hgt) = (image.width(), image.height());
    let pr = params.patch_radius as isize;
    let sr = params.search_radius as isize;
    let src = image.to_f64();

    // Image extended by pr + sr on every side.
    let pad = pr + sr;
    let ew = w + 2 * pad as usize;
    let eh = hgt + 2 * pad as usize;
    let mut ext = vec![0.0; ew * eh];
    for y in 0..eh {
        let sy = reflect(y as isize - pad, hgt);
        for x in 0..ew {
            ext[y * ew + x] = src[sy * w + reflect(x as isize - pad, w)];
        }
    }

    // Region of pixels whose patch distance is needed: image plus pr margin.
    let rw = w + 2 * pr as usize;
    let rh = hgt + 2 * pr as usize;
    let k = (2 * pr + 1) as usize;
    let norm = 1.0 / (k * k) as f64;
    let mut diff = vec![0.0; rw * rh];
    let mut rows = vec![0.0; w * rh];
    let mut num = vec![0.0; w * hgt];
    let mut den = vec![0.0; w * hgt];

    for dy in -sr..=sr {
        for dx in -sr..=sr {
            for y in 0..rh {
                let a = (y as isize + sr) as usize * ew + sr as usize;
                let b = (y as isize + sr + dy) as usize * ew + (sr + dx) as usize;
                for x in 0..rw {
                    let d = ext[a + x] - ext[b + x];
                    diff[y * rw + x] = d * d;
                }
            }
            for y in 0..rh {
                let row = &diff[y * rw..(y + 1) * rw];
                let mut acc: f64 = row[..k].iter().sum();
                rows[y * w] = acc;
                for x in 1..w {
                    acc += row[x + k - 1] - row[x - 1];
                    rows[y * w + x] = acc;
                }
            }
            for x in 0..w {
                let mut acc: f64 = (0..k).map(|j| rows[j * w + x]).sum();
                for y in 0..hgt {
                    if y > 0 {
                        acc += rows[(y + k - 1) * w + x] - rows[(y - 1) * w + x];
                    }
                    let wgt = nlm_weight(acc * norm, sigma, h);
                    let q = ext[(y as isize + pad + dy) as usize * ew + (x as isize + pad + dx) as usize];
                    num[y * w + x] += wgt * q;
                    den[y * w + x] += wgt;
                }
            }
        }
    }
    let out: Vec<f64> = num.iter().zip(&den).map(|(n, d)| n / d).collect();
    Image::from_f64(w, hgt, &out)
}

/// Weights of every search-window offset `(dx, dy)` for pixel `(x, y)`,
/// evaluated directly from the definition.
pub fn nlm_pixel_weights(
    image: &Image,
    x: usize,
    y: usize,
    params: &NlmParams,
    sigma: Option<f64>,
) -> Result<Vec<((isize, isize), f64)>> {
    let (sigma, h) = resolve(image, params, sigma)?;
    let (w, hgt) = (image.width(), image.height());
    let at = |x: isize, y: isize| image.data()[reflect(y, hgt) * w + reflect(x, w)] as f64;
    let pr = params.patch_radius as isize;
    let sr = params.search_radius as isize;
    let (x, y) = (x as isize, y as isize);
    let mut out = Vec::new();
    for dy in -sr..=sr {
        for dx in -sr..=sr {
            let mut d2 = 0.0;
            for py in -pr..=pr {
                for px in -pr..=pr {
                    let d = at(x + px, y + py) - at(x + dx + px, y + dy + py);
                    d2 += d * d;
                }
            }
            let n = ((2 * pr + 1) * (2 * pr + 1)) as f64;
            out.push(((dx, dy), nlm_weight(d2 / n, sigma, h)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(24, 20, 0.42).unwrap();
        let out = nlm(&img, &NlmParams::default(), None).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));
    }

    #[test]
    fn twin_halves_share_weight() {
        let mut rng = Rng::new(17);
        let half: Vec<f32> = (0..10 * 20).map(|_| rng.uniform() as f32).collect();
        let img = Image::from_fn(20, 20, |x, y| half[y * 10 + x % 10]).unwrap();
        let params = NlmParams {
            h: Some(0.05),
            ..NlmParams::default()
        };
        let weights = nlm_pixel_weights(&img, 5, 10, &params, Some(0.05)).unwrap();
        let get = |o: (isize, isize)| weights.iter().find(|(d, _)| *d == o).unwrap().1;
        let self_w = get((0, 0));
        let twin = get((10, 0));
        assert!(twin > 0.9 * self_w);
        // A generic neighbour gets far less.
        assert!(get((3, 0)) < 0.5 * self_w);
    }

    #[test]
    fn output_within_input_range() {
        let mut rng = Rng::new(2);
        let img = Image::from_fn(24, 24, |_, _| (0.2 + 0.5 * rng.uniform()) as f32).unwrap();
        let out = nlm(&img, &NlmParams::default(), Some(0.1)).unwrap();
        let (lo, hi) = img.min_max();
        assert!(out.data().iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
    }
}
