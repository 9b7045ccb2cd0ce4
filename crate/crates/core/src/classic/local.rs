//! Neighbourhood filters: mean, median, Gaussian and bilateral.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::boundary::{box_mean, reflect, separable};
use crate::error::{bail, Result};
use crate::image::Image;

fn check_radius(radius: usize) -> Result<()> {
    if radius == 0 {
        bail!(InvalidArgument, "filter radius must be >= 1");
    }
    Ok(())
}

fn check_sigma(name: &str, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        bail!(InvalidArgument, "{} must be a positive finite number, got {}", name, sigma);
    }
    Ok(())
}

/// Arithmetic mean of the `(2r+1)²` neighbourhood.
pub fn mean_filter(image: &Image, radius: usize) -> Result<Image> {
    check_radius(radius)?;
    let out = box_mean(&image.to_f64(), image.width(), image.height(), radius);
    Image::from_f64(image.width(), image.height(), &out)
}

/// Median of the `(2r+1)²` neighbourhood.
pub fn median_filter(image: &Image, radius: usize) -> Result<Image> {
    check_radius(radius)?;
    let (w, h) = (image.width(), image.height());
    let r = radius as isize;
    let k = 2 * radius + 1;
    let mut buf: Vec<f32> = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            buf.clear();
            for dy in -r..=r {
                let row = reflect(y + dy, h) * w;
                for dx in -r..=r {
                    buf.push(image.data()[row + reflect(x + dx, w)]);
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable_by(mid, f32::total_cmp);
            out.push(*m);
        }
    }
    Image::new(w, h, out)
}

/// Normalized 1-D Gaussian with half-width `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let s2 = 2.0 * sigma * sigma;
    let k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / s2).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian smoothing.
pub fn gaussian_filter(image: &Image, sigma: f64) -> Result<Image> {
    check_sigma("gaussian sigma", sigma)?;
    let out = separable(&image.to_f64(), image.width(), image.height(), &gaussian_kernel(sigma));
    Image::from_f64(image.width(), image.height(), &out)
}

/// Edge-preserving average weighted by spatial distance and intensity
/// difference; window half-width `ceil(3σ_spatial)`.
pub fn bilateral_filter(image: &Image, sigma_spatial: f64, sigma_range: f64) -> Result<Image> {
    check_sigma("bilateral spatial sigma", sigma_spatial)?;
    check_sigma("bilateral range sigma", sigma_range)?;
    let (w, h) = (image.width(), image.height());
    let r = (3.0 * sigma_spatial).ceil() as isize;
    let k = (2 * r + 1) as usize;
    let ss = 2.0 * sigma_spatial * sigma_spatial;
    let sr = 2.0 * sigma_range * sigma_range;
    let mut spatial = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / ss).exp());
        }
    }
    let src = image.to_f64();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = src[y as usize * w + x as usize];
            let (mut num, mut den) = (0.0, 0.0);
            let mut si = 0;
            for dy in -r..=r {
                let row = reflect(y + dy, h) * w;
                for dx in -r..=r {
                    let v = src[row + reflect(x + dx, w)];
                    let d = v - center;
                    let wgt = spatial[si] * (-(d * d) / sr).exp();
                    num += wgt * v;
                    den += wgt;
                    si += 1;
                }
            }
            out.push(num / den);
        }
    }
    Image::from_f64(w, h, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;

    #[test]
    fn constant_images_unchanged() {
        let img = Image::filled(17, 9, 0.37).unwrap();
        for out in [
            mean_filter(&img, 1).unwrap(),
            median_filter(&img, 2).unwrap(),
            gaussian_filter(&img, 1.3).unwrap(),
            bilateral_filter(&img, 2.0, 0.1).unwrap(),
        ] {
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mean_of_three_by_three_center() {
        let img = Image::new(3, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]).unwrap();
        let out = mean_filter(&img, 1).unwrap();
        assert!((out.get(1, 1) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn median_removes_hot_pixel() {
        let mut img = Image::filled(9, 9, 0.2).unwrap();
        img.set(4, 4, 1.0);
        let out = median_filter(&img, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn radius_zero_rejected() {
        let img = Image::filled(4, 4, 0.0).unwrap();
        assert!(mean_filter(&img, 0).is_err());
        assert!(median_filter(&img, 0).is_err());
        assert!(gaussian_filter(&img, 0.0).is_err());
        assert!(bilateral_filter(&img, 1.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_reduces_white_noise_variance() {
        let mut rng = Rng::new(4);
        let img = Image::from_fn(64, 64, |_, _| rng.uniform() as f32).unwrap();
        let var = |im: &Image| {
            let m = im.mean();
            im.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / im.len() as f64
        };
        assert!(var(&gaussian_filter(&img, 1.0).unwrap()) < var(&img));
    }

    #[test]
    fn bilateral_wide_range_is_gaussian() {
        let mut rng = Rng::new(5);
        let img = Image::from_fn(32, 32, |_, _| rng.uniform() as f32).unwrap();
        let b = bilateral_filter(&img, 2.0, 1e6).unwrap();
        let g = gaussian_filter(&img, 2.0).unwrap();
        for (x, y) in b.data().iter().zip(g.data()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn bilateral_preserves_step_edge() {
        let img = Image::from_fn(32, 16, |x, _| if x < 16 { 0.2 } else { 0.8 }).unwrap();
        let b = bilateral_filter(&img, 2.0, 0.1).unwrap();
        let g = gaussian_filter(&img, 2.0).unwrap();
        // Pixel just left of the edge: how far each filter pulls it.
        let moved_b = (b.get(15, 8) - 0.2).abs();
        let moved_g = (g.get(15, 8) - 0.2).abs();
        assert!(moved_g > 0.05);
        assert!(moved_b < 0.1 * moved_g, "{moved_b} vs {moved_g}");
    }
}
