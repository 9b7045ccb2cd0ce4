use alloc::vec::Vec;

use super::boundary::box_mean;
use super::wavelet::SigmaEstimate;
use crate::error::{bail, Result};
use crate::image::Image;

/// Locally adaptive Wiener filter:
/// `μ + max(σ²_local − ν², 0) / max(σ²_local, ν²) · (x − μ)`
/// with window statistics over a `window × window` neighbourhood and noise
/// power `ν² = σ²` (estimated when `sigma` is `None`). Output is clipped.
pub fn wiener_filter(image: &Image, window: usize, sigma: Option<f64>) -> Result<Image> {
    if window < 3 || window % 2 == 0 {
        bail!(InvalidArgument, "wiener window must be odd and >= 3, got {}", window);
    }
    let (w, h) = (image.width(), image.height());
    let noise_power = {
        let s = SigmaEstimate::resolve(image, sigma).sigma;
        s * s
    };
    let x = image.to_f64();
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mu = box_mean(&x, w, h, window / 2);
    let mu2 = box_mean(&sq, w, h, window / 2);
    let out: Vec<f64> = x
        .iter()
        .zip(mu.iter().zip(&mu2))
        .map(|(&v, (&m, &m2))| {
            let local = (m2 - m * m).max(0.0);
            let den = local.max(noise_power);
            if den == 0.0 {
                v
            } else {
                m + (local - noise_power).max(0.0) / den * (v - m)
            }
        })
        .collect();
    let mut img = Image::from_f64(w, h, &out)?;
    img.clip_in_place();
    Ok(img)
}
