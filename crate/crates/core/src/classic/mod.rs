//! Classical denoisers and the name registry used by the benchmark harness.

pub mod bm3d;
pub mod boundary;
pub mod local;
pub mod nlm;
pub mod wavelet;
pub mod wiener;

use alloc::string::String;

pub use bm3d::{bm3d, Bm3dParams};
pub use local::{bilateral_filter, gaussian_filter, mean_filter, median_filter};
pub use nlm::{nlm, NlmParams};
pub use wavelet::{estimate_sigma, wavelet_denoise, Shrink, SigmaEstimate, SigmaMethod};
pub use wiener::wiener_filter;

use crate::error::{bail, Result};
use crate::image::Image;

/// Tunables for every classical filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Box / median half-width (1 gives a 3×3 window).
    pub kernel_radius: usize,
    pub gaussian_sigma: f64,
    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
    pub wavelet_levels: usize,
    pub wiener_window: usize,
    pub nlm: NlmParams,
    pub bm3d: Bm3dParams,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            kernel_radius: 1,
            gaussian_sigma: 1.0,
            bilateral_sigma_spatial: 2.0,
            bilateral_sigma_range: 0.1,
            wavelet_levels: 3,
            wiener_window: 5,
            nlm: NlmParams::default(),
            bm3d: Bm3dParams::default(),
        }
    }
}

impl FilterParams {
    /// Overrides one parameter from a `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: core::str::FromStr>(key: &str, v: &str) -> Result<T> {
            match v.trim().parse() {
                Ok(x) => Ok(x),
                Err(_) => bail!(InvalidArgument, "bad value `{}` for parameter `{}`", v, key),
            }
        }
        match key {
            "radius" | "kernel_radius" => self.kernel_radius = num(key, value)?,
            "sigma_gauss" | "gaussian_sigma" => self.gaussian_sigma = num(key, value)?,
            "sigma_spatial" => self.bilateral_sigma_spatial = num(key, value)?,
            "sigma_range" => self.bilateral_sigma_range = num(key, value)?,
            "levels" => self.wavelet_levels = num(key, value)?,
            "window" => self.wiener_window = num(key, value)?,
            "patch_radius" => self.nlm.patch_radius = num(key, value)?,
            "search_radius" => {
                self.nlm.search_radius = num(key, value)?;
                self.bm3d.search_radius = self.nlm.search_radius;
            }
            "h" => self.nlm.h = Some(num(key, value)?),
            "block" => self.bm3d.block = num(key, value)?,
            "step" => self.bm3d.step = num(key, value)?,
            "max_group" => self.bm3d.max_group = num(key, value)?,
            "match_threshold_ht" => self.bm3d.match_threshold_ht = num(key, value)?,
            "match_threshold_wie" => self.bm3d.match_threshold_wie = num(key, value)?,
            "lambda_3d" => self.bm3d.lambda_3d = num(key, value)?,
            _ => bail!(InvalidArgument, "unknown filter parameter `{}`", key),
        }
        Ok(())
    }
}

/// Registered classical algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Mean,
    Median,
    Gaussian,
    Bilateral,
    WaveletB,
    WaveletV,
    Wiener,
    Nlm,
    Bm3d,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Mean,
        Algorithm::Median,
        Algorithm::Gaussian,
        Algorithm::Bilateral,
        Algorithm::WaveletB,
        Algorithm::WaveletV,
        Algorithm::Wiener,
        Algorithm::Nlm,
        Algorithm::Bm3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mean => "mean",
            Algorithm::Median => "median",
            Algorithm::Gaussian => "gaussian",
            Algorithm::Bilateral => "bilateral",
            Algorithm::WaveletB => "wavelet_b",
            Algorithm::WaveletV => "wavelet_v",
            Algorithm::Wiener => "wiener",
            Algorithm::Nlm => "nlm",
            Algorithm::Bm3d => "bm3d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Comma-separated list of valid names.
    pub fn names() -> String {
        let mut s = String::new();
        for (i, a) in Self::ALL.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(a.name());
        }
        s
    }

    /// Whether the algorithm consumes a noise level.
    pub fn uses_sigma(self) -> bool {
        matches!(
            self,
            Algorithm::WaveletB | Algorithm::WaveletV | Algorithm::Wiener | Algorithm::Nlm | Algorithm::Bm3d
        )
    }

    /// Runs the filter. `sigma` is estimated with the MAD rule when absent.
    /// The result is clipped to `[0, 1]`.
    pub fn apply(self, image: &Image, sigma: Option<f64>, p: &FilterParams) -> Result<Image> {
        let mut out = match self {
            Algorithm::Mean => mean_filter(image, p.kernel_radius)?,
            Algorithm::Median => median_filter(image, p.kernel_radius)?,
            Algorithm::Gaussian => gaussian_filter(image, p.gaussian_sigma)?,
            Algorithm::Bilateral => {
                bilateral_filter(image, p.bilateral_sigma_spatial, p.bilateral_sigma_range)?
            }
            Algorithm::WaveletB => wavelet_denoise(image, Shrink::Bayes, p.wavelet_levels, sigma)?,
            Algorithm::WaveletV => wavelet_denoise(image, Shrink::Visu, p.wavelet_levels, sigma)?,
            Algorithm::Wiener => wiener_filter(image, p.wiener_window, sigma)?,
            Algorithm::Nlm => nlm(image, &p.nlm, sigma)?,
            Algorithm::Bm3d => {
                let s = SigmaEstimate::resolve(image, sigma).sigma;
                bm3d(image, s, &p.bm3d)?
            }
        };
        out.clip_in_place();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::from_name(a.name()), Some(a));
        }
        assert_eq!(Algorithm::from_name("redcnn"), None);
        assert!(Algorithm::names().starts_with("mean, median"));
    }

    #[test]
    fn param_overrides() {
        let mut p = FilterParams::default();
        p.set("radius", "2").unwrap();
        p.set("h", "0.05").unwrap();
        assert_eq!(p.kernel_radius, 2);
        assert_eq!(p.nlm.h, Some(0.05));
        assert!(p.set("radius", "x").is_err());
        assert!(p.set("nope", "1").is_err());
    }

    #[test]
    fn every_filter_keeps_constants() {
        let img = Image::filled(32, 32, 0.5).unwrap();
        for a in Algorithm::ALL {
            let sigma = if a == Algorithm::Bm3d { Some(0.05) } else { None };
            let out = a.apply(&img, sigma, &FilterParams::default()).unwrap();
            assert!(
                out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6),
                "{}",
                a.name()
            );
        }
    }
}
