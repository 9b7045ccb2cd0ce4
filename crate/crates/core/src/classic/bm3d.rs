//! Two-stage BM3D: block matching, collaborative hard thresholding in a
//! 2-D DCT × 1-D Haar transform domain, then an empirical Wiener pass
//! guided by the first-stage estimate.
//!
//! Aggregation uses per-group weights only (no Kaiser window). Reference
//! blocks are visited in a fixed raster order, so the output is
//! bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct Bm3dParams {
    pub block: usize,
    pub step: usize,
    pub search_radius: usize,
    pub max_group: usize,
    /// Mean squared per-pixel distance cut-off for the hard-threshold stage.
    pub match_threshold_ht: f64,
    /// Same, for the Wiener stage (measured on the basic estimate).
    pub match_threshold_wie: f64,
    pub lambda_3d: f64,
}

impl Default for Bm3dParams {
    fn default() -> Self {
        Self {
            block: 8,
            step: 4,
            search_radius: 19,
            max_group: 16,
            match_threshold_ht: 0.085,
            match_threshold_wie: 0.025,
            lambda_3d: 2.7,
        }
    }
}

impl Bm3dParams {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.max_group, 1 | 2 | 4 | 8 | 16) {
            bail!(InvalidArgument, "bm3d max_group must be one of 1, 2, 4, 8, 16, got {}", self.max_group);
        }
        if self.block < 2 || self.step == 0 || self.step > self.block {
            bail!(
                InvalidArgument,
                "bm3d needs block >= 2 and 1 <= step <= block, got block {} step {}",
                self.block,
                self.step
            );
        }
        Ok(())
    }
}

/// Which aggregation stage a pass performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    HardThreshold,
    Wiener,
}

/// Orthonormal DCT-II basis, row `k` holding frequency `k`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let alpha = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = alpha * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

struct Transform {
    n: usize,
    dct: Vec<f64>,
    scratch: Vec<f64>,
}

impl Transform {
    fn new(n: usize) -> Self {
        Self {
            n,
            dct: dct_matrix(n),
            scratch: vec![0.0; n * n],
        }
    }

    /// In-place `C·B·Cᵀ`.
    fn forward(&mut self, b: &mut [f64]) {
        let n = self.n;
        let c = &self.dct;
        for k in 0..n {
            for j in 0..n {
                self.scratch[k * n + j] = (0..n).map(|i| c[k * n + i] * b[i * n + j]).sum();
            }
        }
        for k in 0..n {
            for l in 0..n {
                b[k * n + l] = (0..n).map(|j| self.scratch[k * n + j] * c[l * n + j]).sum();
            }
        }
    }

    /// In-place `Cᵀ·X·C`.
    fn inverse(&mut self, b: &mut [f64]) {
        let n = self.n;
        let c = &self.dct;
        for i in 0..n {
            for l in 0..n {
                self.scratch[i * n + l] = (0..n).map(|k| c[k * n + i] * b[k * n + l]).sum();
            }
        }
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = (0..n).map(|l| self.scratch[i * n + l] * c[l * n + j]).sum();
            }
        }
    }
}

/// Full orthonormal Haar decomposition across the group axis, applied to
/// each of `stride` coefficient positions. `len` must be a power of two.
fn haar_group_forward(g: &mut [f64], len: usize, stride: usize, tmp: &mut Vec<f64>) {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    tmp.resize(len, 0.0);
    for p in 0..stride {
        let mut n = len;
        while n > 1 {
            let half = n / 2;
            for i in 0..half {
                let a = g[(2 * i) * stride + p];
                let b = g[(2 * i + 1) * stride + p];
                tmp[i] = (a + b) * s;
                tmp[half + i] = (a - b) * s;
            }
            for i in 0..n {
                g[i * stride + p] = tmp[i];
            }
            n = half;
        }
    }
}

fn haar_group_inverse(g: &mut [f64], len: usize, stride: usize, tmp: &mut Vec<f64>) {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    tmp.resize(len, 0.0);
    for p in 0..stride {
        let mut n = 2;
        while n <= len {
            let half = n / 2;
            for i in 0..half {
                let a = g[i * stride + p];
                let d = g[(half + i) * stride + p];
                tmp[2 * i] = (a + d) * s;
                tmp[2 * i + 1] = (a - d) * s;
            }
            for i in 0..n {
                g[i * stride + p] = tmp[i];
            }
            n *= 2;
        }
    }
}

/// Reference positions along one axis: `0, step, 2·step, …` with the last
/// block clamped flush to the border.
fn grid(len: usize, block: usize, step: usize) -> Vec<usize> {
    let last = len - block;
    let mut v: Vec<usize> = (0..=last).step_by(step).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

struct Plane<'a> {
    data: &'a [f64],
    width: usize,
    height: usize,
}

impl Plane<'_> {
    fn block(&self, x: usize, y: usize, n: usize, out: &mut [f64]) {
        for j in 0..n {
            let row = (y + j) * self.width + x;
            out[j * n..(j + 1) * n].copy_from_slice(&self.data[row..row + n]);
        }
    }

    fn distance(&self, (ax, ay): (usize, usize), (bx, by): (usize, usize), n: usize) -> f64 {
        let mut acc = 0.0;
        for j in 0..n {
            let ra = &self.data[(ay + j) * self.width + ax..][..n];
            let rb = &self.data[(by + j) * self.width + bx..][..n];
            for (a, b) in ra.iter().zip(rb) {
                let d = a - b;
                acc += d * d;
            }
        }
        acc / (n * n) as f64
    }
}

/// Up to `max_group` block positions most similar to `reference`, reference
/// first, truncated to a power of two.
fn match_blocks(
    plane: &Plane,
    reference: (usize, usize),
    params: &Bm3dParams,
    threshold: f64,
    candidates: &mut Vec<(f64, usize, usize)>,
) -> Vec<(usize, usize)> {
    let n = params.block;
    let (rx, ry) = reference;
    let r = params.search_radius;
    let x0 = rx.saturating_sub(r);
    let x1 = (rx + r).min(plane.width - n);
    let y0 = ry.saturating_sub(r);
    let y1 = (ry + r).min(plane.height - n);
    candidates.clear();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if (x, y) == reference {
                continue;
            }
            let d = plane.distance(reference, (x, y), n);
            if d <= threshold {
                candidates.push((d, y, x));
            }
        }
    }
    let keep = (params.max_group - 1).min(candidates.len());
    if keep > 0 && keep < candidates.len() {
        candidates.select_nth_unstable_by(keep - 1, |a, b| a.partial_cmp(b).unwrap());
    }
    candidates.truncate(keep);
    candidates.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let size = 1usize << (usize::BITS - 1 - (keep + 1).leading_zeros());
    let mut group = Vec::with_capacity(size);
    group.push(reference);
    group.extend(candidates.iter().take(size - 1).map(|&(_, y, x)| (x, y)));
    group
}

/// Accumulated weighted estimates and weights.
pub struct Aggregation {
    pub numerator: Vec<f64>,
    pub weight: Vec<f64>,
}

fn run_stage(
    noisy: &Plane,
    guide: &Plane,
    sigma: f64,
    params: &Bm3dParams,
    stage: Stage,
) -> Aggregation {
    let n = params.block;
    let nn = n * n;
    let (w, h) = (noisy.width, noisy.height);
    let mut agg = Aggregation {
        numerator: vec![0.0; w * h],
        weight: vec![0.0; w * h],
    };
    let mut tf = Transform::new(n);
    let mut candidates = Vec::new();
    let mut tmp = Vec::new();
    let mut group = vec![0.0; params.max_group * nn];
    let mut pilot = vec![0.0; params.max_group * nn];
    let sigma2 = sigma * sigma;
    let threshold = params.lambda_3d * sigma;
    let match_threshold = match stage {
        Stage::HardThreshold => params.match_threshold_ht,
        Stage::Wiener => params.match_threshold_wie,
    };

    for &ry in &grid(h, n, params.step) {
        for &rx in &grid(w, n, params.step) {
            let members = match_blocks(guide, (rx, ry), params, match_threshold, &mut candidates);
            let len = members.len();
            let g = &mut group[..len * nn];
            for (i, &(x, y)) in members.iter().enumerate() {
                noisy.block(x, y, n, &mut g[i * nn..(i + 1) * nn]);
                tf.forward(&mut g[i * nn..(i + 1) * nn]);
            }
            haar_group_forward(g, len, nn, &mut tmp);

            let group_weight = match stage {
                Stage::HardThreshold => {
                    let mut retained = 0usize;
                    for (i, c) in g.iter_mut().enumerate() {
                        if i != 0 && c.abs() < threshold {
                            *c = 0.0;
                        }
                        if *c != 0.0 {
                            retained += 1;
                        }
                    }
                    if retained > 0 {
                        1.0 / (sigma2 * retained as f64)
                    } else {
                        1.0 / sigma2
                    }
                }
                Stage::Wiener => {
                    let p = &mut pilot[..len * nn];
                    for (i, &(x, y)) in members.iter().enumerate() {
                        guide.block(x, y, n, &mut p[i * nn..(i + 1) * nn]);
                        tf.forward(&mut p[i * nn..(i + 1) * nn]);
                    }
                    haar_group_forward(p, len, nn, &mut tmp);
                    let mut energy = 0.0;
                    for (i, (c, &b)) in g.iter_mut().zip(p.iter()).enumerate() {
                        let b2 = b * b;
                        // The group DC passes unshrunk, as in the first stage.
                        let wie = if i == 0 { 1.0 } else { b2 / (b2 + sigma2) };
                        *c *= wie;
                        energy += wie * wie;
                    }
                    if energy > 0.0 {
                        1.0 / (sigma2 * energy)
                    } else {
                        1.0 / sigma2
                    }
                }
            };

            haar_group_inverse(g, len, nn, &mut tmp);
            for (i, &(x, y)) in members.iter().enumerate() {
                let blk = &mut g[i * nn..(i + 1) * nn];
                tf.inverse(blk);
                for j in 0..n {
                    let row = (y + j) * w + x;
                    for k in 0..n {
                        agg.numerator[row + k] += group_weight * blk[j * n + k];
                        agg.weight[row + k] += group_weight;
                    }
                }
            }
        }
    }
    agg
}

fn finish(agg: &Aggregation) -> Vec<f64> {
    agg.numerator
        .iter()
        .zip(&agg.weight)
        .map(|(n, w)| n / w)
        .collect()
}

/// First-stage (hard threshold) aggregation on its own.
pub fn bm3d_basic_aggregation(image: &Image, sigma: f64, params: &Bm3dParams) -> Result<Aggregation> {
    check(image, sigma, params)?;
    let data = image.to_f64();
    let plane = Plane {
        data: &data,
        width: image.width(),
        height: image.height(),
    };
    Ok(run_stage(&plane, &plane, sigma, params, Stage::HardThreshold))
}

fn check(image: &Image, sigma: f64, params: &Bm3dParams) -> Result<()> {
    params.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        bail!(InvalidArgument, "bm3d sigma must be > 0, got {}", sigma);
    }
    if image.width() < 2 * params.block || image.height() < 2 * params.block {
        bail!(
            InvalidArgument,
            "bm3d needs images of at least {0}x{0}, got {1}x{2}",
            2 * params.block,
            image.width(),
            image.height()
        );
    }
    Ok(())
}

/// Two-stage BM3D with noise standard deviation `sigma`. Output is clipped.
pub fn bm3d(image: &Image, sigma: f64, params: &Bm3dParams) -> Result<Image> {
    check(image, sigma, params)?;
    let (w, h) = (image.width(), image.height());
    let data = image.to_f64();
    let noisy = Plane {
        data: &data,
        width: w,
        height: h,
    };
    let basic = finish(&run_stage(&noisy, &noisy, sigma, params, Stage::HardThreshold));
    let guide = Plane {
        data: &basic,
        width: w,
        height: h,
    };
    let out = finish(&run_stage(&noisy, &guide, sigma, params, Stage::Wiener));
    let mut img = Image::from_f64(w, h, &out)?;
    img.clip_in_place();
    Ok(img)
}
