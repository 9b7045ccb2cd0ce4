//! Full-reference quality metrics: MSE, PSNR and SSIM.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::image::Image;

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        bail!(
            Shape,
            "images differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        );
    }
    Ok(())
}

/// Mean squared difference over all pixels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(L² / MSE)` in decibels; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, data_range))
}

pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

/// SSIM constants and window.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub window_radius: usize,
    pub window_sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            window_radius: 5,
            window_sigma: 1.5,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        let v = self.k1 * self.data_range;
        v * v
    }

    pub fn c2(&self) -> f64 {
        let v = self.k2 * self.data_range;
        v * v
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }

    pub fn window_size(&self) -> usize {
        2 * self.window_radius + 1
    }

    /// 1-D normalized Gaussian; the 2-D window is its outer product.
    pub fn window_1d(&self) -> Vec<f64> {
        let r = self.window_radius as isize;
        let s2 = 2.0 * self.window_sigma * self.window_sigma;
        let w: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / s2).exp()).collect();
        let sum: f64 = w.iter().sum();
        w.into_iter().map(|v| v / sum).collect()
    }
}

/// Window statistics at one valid-region position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    pub mu_x: f64,
    pub mu_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

/// Per-pixel SSIM over the valid region (no padding).
#[derive(Debug, Clone)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    pub stats: Vec<LocalStats>,
}

impl SsimMap {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

// Valid-region separable correlation of a plane with a symmetric kernel.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut rows = Vec::with_capacity(ow * h);
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows.push(row[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, &kj) in k.iter().enumerate() {
                acc += rows[(y + j) * ow + x] * kj;
            }
            out.push(acc);
        }
    }
    (out, ow, oh)
}

fn component(v: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        v
    } else {
        v.powf(exponent)
    }
}

/// Per-pixel SSIM map with its local statistics.
pub fn ssim_map(a: &Image, b: &Image, params: &SsimParams) -> Result<SsimMap> {
    check_same(a, b)?;
    let win = params.window_size();
    if a.width() < win || a.height() < win {
        bail!(
            InvalidArgument,
            "SSIM needs images of at least {0}x{0}, got {1}x{2}",
            win,
            a.width(),
            a.height()
        );
    }
    let (w, h) = (a.width(), a.height());
    let k = params.window_1d();
    let x = a.to_f64();
    let y = b.to_f64();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, ow, oh) = filter_valid(&x, w, h, &k);
    let (my, ..) = filter_valid(&y, w, h, &k);
    let (exx, ..) = filter_valid(&xx, w, h, &k);
    let (eyy, ..) = filter_valid(&yy, w, h, &k);
    let (exy, ..) = filter_valid(&xy, w, h, &k);

    let (c1, c2, c3) = (params.c1(), params.c2(), params.c3());
    let mut scores = Vec::with_capacity(ow * oh);
    let mut stats = Vec::with_capacity(ow * oh);
    for i in 0..ow * oh {
        let (mu_x, mu_y) = (mx[i], my[i]);
        let var_x = exx[i] - mu_x * mu_x;
        let var_y = eyy[i] - mu_y * mu_y;
        debug_assert!(var_x >= -1e-12 && var_y >= -1e-12);
        let var_x = var_x.max(0.0);
        let var_y = var_y.max(0.0);
        let cov_xy = exy[i] - mu_x * mu_y;
        let (sx, sy) = (var_x.sqrt(), var_y.sqrt());
        let l = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
        let c = (2.0 * sx * sy + c2) / (var_x + var_y + c2);
        let s = (cov_xy + c3) / (sx * sy + c3);
        scores.push(
            component(l, params.alpha) * component(c, params.beta) * component(s, params.gamma),
        );
        stats.push(LocalStats {
            mu_x,
            mu_y,
            var_x,
            var_y,
            cov_xy,
        });
    }
    Ok(SsimMap {
        width: ow,
        height: oh,
        scores,
        stats,
    })
}

/// Mean SSIM over the valid region.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    Ok(ssim_map(a, b, params)?.mean())
}

/// One measured (image, algorithm, noise) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub image_id: String,
    pub algorithm: String,
    pub noise: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricRow {
    /// Measures `estimate` against `reference` with unit data range.
    pub fn measure(
        image_id: &str,
        algorithm: &str,
        noise: &str,
        reference: &Image,
        estimate: &Image,
    ) -> Result<Self> {
        let mse = mse(reference, estimate)?;
        Ok(Self {
            image_id: image_id.into(),
            algorithm: algorithm.into(),
            noise: noise.into(),
            mse,
            psnr_db: psnr_from_mse(mse, 1.0),
            ssim: ssim(reference, estimate, &SsimParams::default())?,
        })
    }
}

pub const AGGREGATE_ID: &str = "__mean__";
pub const CSV_HEADER: &str = "image_id,algorithm,noise,mse,psnr_db,ssim";

/// Per-image rows plus per-(algorithm, noise) means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
    }

    /// Rows sorted by (algorithm, noise, image_id).
    pub fn sorted_rows(&self) -> Vec<&MetricRow> {
        let mut rows: Vec<&MetricRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            (&a.algorithm, &a.noise, &a.image_id).cmp(&(&b.algorithm, &b.noise, &b.image_id))
        });
        rows
    }

    /// Means per (algorithm, noise). PSNR averages finite entries only and is
    /// `+inf` when every entry is infinite.
    pub fn aggregates(&self) -> Vec<MetricRow> {
        #[derive(Default)]
        struct Acc {
            n: usize,
            mse: f64,
            ssim: f64,
            psnr: f64,
            psnr_n: usize,
        }
        let mut groups: BTreeMap<(&str, &str), Acc> = BTreeMap::new();
        for r in self.sorted_rows() {
            let acc = groups.entry((&r.algorithm, &r.noise)).or_default();
            acc.n += 1;
            acc.mse += r.mse;
            acc.ssim += r.ssim;
            if r.psnr_db.is_finite() {
                acc.psnr += r.psnr_db;
                acc.psnr_n += 1;
            }
        }
        groups
            .into_iter()
            .map(|((algorithm, noise), acc)| MetricRow {
                image_id: AGGREGATE_ID.into(),
                algorithm: algorithm.into(),
                noise: noise.into(),
                mse: acc.mse / acc.n as f64,
                psnr_db: if acc.psnr_n == 0 {
                    f64::INFINITY
                } else {
                    acc.psnr / acc.psnr_n as f64
                },
                ssim: acc.ssim / acc.n as f64,
            })
            .collect()
    }

    /// Aggregate row for one (algorithm, noise) pair.
    pub fn aggregate(&self, algorithm: &str, noise: &str) -> Option<MetricRow> {
        self.aggregates()
            .into_iter()
            .find(|r| r.algorithm == algorithm && r.noise == noise)
    }

    /// CSV with header, per-image rows, then aggregate rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let aggregates = self.aggregates();
        for r in self.sorted_rows().into_iter().chain(aggregates.iter()) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.image_id,
                r.algorithm,
                r.noise,
                r.mse,
                format_psnr(r.psnr_db),
                r.ssim
            );
        }
        out
    }
}

/// Infinite PSNR is written as `inf`.
pub fn format_psnr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        alloc::format!("{v}")
    }
}
