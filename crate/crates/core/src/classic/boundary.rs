//! Reflect boundary handling and separable filtering helpers.

use alloc::vec;
use alloc::vec::Vec;

/// Mirror index about the edge samples without repeating them
/// (`-1 -> 1`, `n -> n - 2`), folding repeatedly for large offsets.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Correlates every row, then every column, with `kernel` (odd length,
/// centred), reading outside samples through [`reflect`].
pub fn separable(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    let mut line = vec![0.0; w.max(h) + 2 * r as usize];
    for y in 0..h {
        for (i, v) in line[..w + 2 * r as usize].iter_mut().enumerate() {
            *v = src[y * w + reflect(i as isize - r, w)];
        }
        for x in 0..w {
            tmp[y * w + x] = line[x..x + kernel.len()]
                .iter()
                .zip(kernel)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        for (i, v) in line[..h + 2 * r as usize].iter_mut().enumerate() {
            *v = tmp[reflect(i as isize - r, h) * w + x];
        }
        for y in 0..h {
            out[y * w + x] = line[y..y + kernel.len()]
                .iter()
                .zip(kernel)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

/// Mean over the `(2r+1)²` reflect-extended neighbourhood, computed with
/// running sums along rows then columns.
pub fn box_mean(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let k = 2 * r + 1;
    let ri = r as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let at = |i: isize| row[reflect(i, w)];
        let mut acc: f64 = (-ri..=ri).map(at).sum();
        tmp[y * w] = acc;
        for x in 1..w as isize {
            acc += at(x + ri) - at(x - 1 - ri);
            tmp[y * w + x as usize] = acc;
        }
    }
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        let at = |i: isize| tmp[reflect(i, h) * w + x];
        let mut acc: f64 = (-ri..=ri).map(at).sum();
        out[x] = acc * norm;
        for y in 1..h as isize {
            acc += at(y + ri) - at(y - 1 - ri);
            out[y as usize * w + x] = acc * norm;
        }
    }
    out
}
