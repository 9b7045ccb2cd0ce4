//! Optimized filters against direct per-pixel evaluation.

use dpl_core::classic::{bilateral_filter, gaussian_filter, mean_filter, median_filter, nlm, NlmParams};
use dpl_core::{Image, Rng};
use proptest::prelude::*;

fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn px(img: &Image, x: isize, y: isize) -> f64 {
    img.get(mirror(x, img.width()), mirror(y, img.height())) as f64
}

/// Applies `f` to the reflect-extended `(2r+1)²` window of every pixel,
/// given as (dx, dy, value) triples.
fn per_window(img: &Image, r: isize, f: impl Fn(&[(isize, isize, f64)], f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.len());
    let mut win = Vec::new();
    for y in 0..img.height() as isize {
        for x in 0..img.width() as isize {
            win.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    win.push((dx, dy, px(img, x + dx, y + dy)));
                }
            }
            out.push(f(&win, px(img, x, y)));
        }
    }
    out
}

fn brute_mean(img: &Image, r: isize) -> Vec<f64> {
    per_window(img, r, |w, _| w.iter().map(|t| t.2).sum::<f64>() / w.len() as f64)
}

fn brute_median(img: &Image, r: isize) -> Vec<f64> {
    per_window(img, r, |w, _| {
        let mut v: Vec<f64> = w.iter().map(|t| t.2).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    })
}

fn brute_gaussian(img: &Image, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    per_window(img, r, |w, _| {
        let (mut num, mut den) = (0.0, 0.0);
        for &(dx, dy, v) in w {
            let k = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            num += k * v;
            den += k;
        }
        num / den
    })
}

fn brute_bilateral(img: &Image, ss: f64, sr: f64) -> Vec<f64> {
    let r = (3.0 * ss).ceil() as isize;
    per_window(img, r, |w, c| {
        let (mut num, mut den) = (0.0, 0.0);
        for &(dx, dy, v) in w {
            let k = (-((dx * dx + dy * dy) as f64) / (2.0 * ss * ss)).exp() * (-((v - c) * (v - c)) / (2.0 * sr * sr)).exp();
            num += k * v;
            den += k;
        }
        num / den
    })
}

fn brute_nlm(img: &Image, pr: isize, sr: isize, sigma: f64, h: f64) -> Vec<f64> {
    let npatch = ((2 * pr + 1) * (2 * pr + 1)) as f64;
    let mut out = Vec::new();
    for y in 0..img.height() as isize {
        for x in 0..img.width() as isize {
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -sr..=sr {
                for dx in -sr..=sr {
                    let mut d2 = 0.0;
                    for py in -pr..=pr {
                        for qx in -pr..=pr {
                            let d = px(img, x + qx, y + py) - px(img, x + dx + qx, y + dy + py);
                            d2 += d * d;
                        }
                    }
                    let w = (-(d2 / npatch - 2.0 * sigma * sigma).max(0.0) / (h * h)).exp();
                    num += w * px(img, x + dx, y + dy);
                    den += w;
                }
            }
            out.push(num / den);
        }
    }
    out
}

fn gap(a: &Image, b: &[f64]) -> f64 {
    a.data().iter().zip(b).map(|(&p, &q)| (p as f64 - q).abs()).fold(0.0, f64::max)
}

fn image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = Rng::new(seed);
    Image::from_fn(w, h, |_, _| rng.uniform() as f32).unwrap()
}

prop_compose! {
    fn any_image()(w in 1usize..=24, h in 1usize..=24, seed in any::<u64>()) -> Image {
        image(w, h, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mean_matches_brute_force(img in any_image(), r in 1usize..=3) {
        prop_assert!(gap(&mean_filter(&img, r).unwrap(), &brute_mean(&img, r as isize)) <= 1e-6);
    }

    #[test]
    fn median_matches_brute_force(img in any_image(), r in 1usize..=3) {
        prop_assert!(gap(&median_filter(&img, r).unwrap(), &brute_median(&img, r as isize)) <= 1e-6);
    }

    #[test]
    fn gaussian_matches_brute_force(img in any_image(), sigma in 0.3f64..2.5) {
        prop_assert!(gap(&gaussian_filter(&img, sigma).unwrap(), &brute_gaussian(&img, sigma)) <= 1e-6);
    }

    #[test]
    fn bilateral_matches_brute_force(img in any_image(), ss in 0.5f64..2.0, sr in 0.05f64..0.5) {
        prop_assert!(gap(&bilateral_filter(&img, ss, sr).unwrap(), &brute_bilateral(&img, ss, sr)) <= 1e-6);
    }

    #[test]
    fn nlm_matches_brute_force(
        img in any_image(),
        pr in 0usize..=2,
        sr in 1usize..=3,
        sigma in 0.02f64..0.2,
    ) {
        let p = NlmParams { patch_radius: pr, search_radius: sr, h: None };
        let fast = nlm(&img, &p, Some(sigma)).unwrap();
        prop_assert!(gap(&fast, &brute_nlm(&img, pr as isize, sr as isize, sigma, 0.8 * sigma)) <= 1e-6);
    }
}

#[test]
fn full_size_inputs_match() {
    let img = image(48, 48, 77);
    assert!(gap(&mean_filter(&img, 2).unwrap(), &brute_mean(&img, 2)) <= 1e-6);
    assert!(gap(&median_filter(&img, 2).unwrap(), &brute_median(&img, 2)) <= 1e-6);
    assert!(gap(&gaussian_filter(&img, 1.5).unwrap(), &brute_gaussian(&img, 1.5)) <= 1e-6);
    let p = NlmParams { patch_radius: 3, search_radius: 10, h: Some(0.05) };
    let small = image(20, 20, 78);
    assert!(gap(&nlm(&small, &p, Some(0.07)).unwrap(), &brute_nlm(&small, 3, 10, 0.07, 0.05)) <= 1e-6);
}
