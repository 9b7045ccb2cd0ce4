//! Forward and backward kernels for the U-Net layer set. Convolutions are
//! lowered to GEMM through an im2col buffer.

use alloc::vec;
use alloc::vec::Vec;

use super::scalar::{gemm, Mat, Scalar};
use super::tensor::{Shape, Tensor};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.cols();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * cols;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut col[row + oy * g.wo..row + (oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let cols = g.cols();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * cols;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &col[row + oy * g.wo..row + (oy + 1) * g.wo];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            plane[iy as usize * g.w + ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_geom(
    x: Shape,
    w: Shape,
    b: Shape,
    stride: usize,
    pad: usize,
) -> Result<ConvGeom> {
    if w.h != w.w || w.h == 0 {
        bail!(Shape, "conv kernel must be square, got {}", w);
    }
    if w.c != x.c {
        bail!(Shape, "conv weight {} expects {} input channels, input is {}", w, w.c, x);
    }
    if b.numel() != w.n {
        bail!(Shape, "conv bias has {} values for {} output channels", b.numel(), w.n);
    }
    if stride == 0 || x.h + 2 * pad < w.h || x.w + 2 * pad < w.w {
        bail!(Shape, "conv with stride {} pad {} does not fit input {}", stride, pad, x);
    }
    Ok(ConvGeom {
        cin: x.c,
        h: x.h,
        w: x.w,
        k: w.h,
        stride,
        pad,
        ho: (x.h + 2 * pad - w.h) / stride + 1,
        wo: (x.w + 2 * pad - w.w) / stride + 1,
    })
}

/// Cross-correlation with zero padding.
pub(crate) fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    g: &ConvGeom,
) -> Tensor<T> {
    let xs = x.shape();
    let cout = w.shape().n;
    let out_shape = Shape::new(xs.n, cout, g.ho, g.wo);
    let mut out = Tensor::zeros(out_shape);
    let (rows, cols) = (g.rows(), g.cols());
    let pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); rows * cols] };
    let in_len = xs.c * xs.plane();
    for n in 0..xs.n {
        let xn = &x.data()[n * in_len..(n + 1) * in_len];
        let src = if pointwise {
            xn
        } else {
            im2col(xn, g, &mut col);
            &col
        };
        let on = &mut out.data_mut()[n * cout * cols..(n + 1) * cout * cols];
        for (co, chunk) in on.chunks_mut(cols).enumerate() {
            chunk.fill(b.data()[co]);
        }
        gemm(cout, rows, cols, Mat::rows(w.data(), rows), Mat::rows(src, cols), on, true);
    }
    out
}

/// Returns (dx if requested, dw, db).
pub(crate) fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let cout = w.shape().n;
    let (rows, cols) = (g.rows(), g.cols());
    let pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::new(cout, 1, 1, 1));
    let mut dx = need_dx.then(|| Tensor::zeros(xs));
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); rows * cols] };
    let mut dcol = vec![T::zero(); rows * cols];
    let in_len = xs.c * xs.plane();
    for n in 0..xs.n {
        let xn = &x.data()[n * in_len..(n + 1) * in_len];
        let gn = &gout.data()[n * cout * cols..(n + 1) * cout * cols];
        for (co, chunk) in gn.chunks(cols).enumerate() {
            db.data_mut()[co] += chunk.iter().copied().sum::<T>();
        }
        let src = if pointwise {
            xn
        } else {
            im2col(xn, g, &mut col);
            &col
        };
        // dW (cout × rows) += G (cout × cols) · colᵀ (cols × rows)
        gemm(cout, cols, rows, Mat::rows(gn, cols), Mat::rows_t(src, cols), dw.data_mut(), true);
        if let Some(dx) = dx.as_mut() {
            // dcol (rows × cols) = Wᵀ (rows × cout) · G (cout × cols)
            let dxn = &mut dx.data_mut()[n * in_len..(n + 1) * in_len];
            if pointwise {
                gemm(rows, cout, cols, Mat::rows_t(w.data(), rows), Mat::rows(gn, cols), dxn, true);
            } else {
                gemm(rows, cout, cols, Mat::rows_t(w.data(), rows), Mat::rows(gn, cols), &mut dcol, false);
                col2im_add(&dcol, g, dxn);
            }
        }
    }
    (dx, dw, db)
}

/// 2×2 transposed convolution, stride 2. Weight shape (C_in, C_out, 2, 2).
pub(crate) fn upconv_check(x: Shape, w: Shape, b: Shape) -> Result<()> {
    if w.h != 2 || w.w != 2 || w.n != x.c {
        bail!(Shape, "upconv weight {} incompatible with input {}", w, x);
    }
    if b.numel() != w.c {
        bail!(Shape, "upconv bias has {} values for {} output channels", b.numel(), w.c);
    }
    Ok(())
}

pub(crate) fn upconv_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let xs = x.shape();
    let (cin, cout) = (xs.c, w.shape().c);
    let hw = xs.plane();
    let r = cout * 4;
    let out_shape = Shape::new(xs.n, cout, 2 * xs.h, 2 * xs.w);
    let mut out = Tensor::zeros(out_shape);
    let mut y = vec![T::zero(); r * hw];
    let ow = 2 * xs.w;
    for n in 0..xs.n {
        let xn = &x.data()[n * cin * hw..(n + 1) * cin * hw];
        // Y (r × hw) = Wᵀ (r × cin) · X (cin × hw)
        gemm(r, cin, hw, Mat::rows_t(w.data(), r), Mat::rows(xn, hw), &mut y, false);
        let on = &mut out.data_mut()[n * cout * 4 * hw..(n + 1) * cout * 4 * hw];
        for co in 0..cout {
            let bias = b.data()[co];
            let plane = &mut on[co * 4 * hw..(co + 1) * 4 * hw];
            for a in 0..2 {
                for c in 0..2 {
                    let src = &y[(co * 4 + a * 2 + c) * hw..][..hw];
                    for i in 0..xs.h {
                        for j in 0..xs.w {
                            plane[(2 * i + a) * ow + 2 * j + c] = src[i * xs.w + j] + bias;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn upconv_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    need_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let (cin, cout) = (xs.c, w.shape().c);
    let hw = xs.plane();
    let r = cout * 4;
    let ow = 2 * xs.w;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::new(cout, 1, 1, 1));
    let mut dx = need_dx.then(|| Tensor::zeros(xs));
    let mut gy = vec![T::zero(); r * hw];
    for n in 0..xs.n {
        let gn = &gout.data()[n * cout * 4 * hw..(n + 1) * cout * 4 * hw];
        for co in 0..cout {
            let plane = &gn[co * 4 * hw..(co + 1) * 4 * hw];
            db.data_mut()[co] += plane.iter().copied().sum::<T>();
            for a in 0..2 {
                for c in 0..2 {
                    let dst = &mut gy[(co * 4 + a * 2 + c) * hw..][..hw];
                    for i in 0..xs.h {
                        for j in 0..xs.w {
                            dst[i * xs.w + j] = plane[(2 * i + a) * ow + 2 * j + c];
                        }
                    }
                }
            }
        }
        let xn = &x.data()[n * cin * hw..(n + 1) * cin * hw];
        // dW (cin × r) += X (cin × hw) · Gᵀ (hw × r)
        gemm(cin, hw, r, Mat::rows(xn, hw), Mat::rows_t(&gy, hw), dw.data_mut(), true);
        if let Some(dx) = dx.as_mut() {
            // dX (cin × hw) = W (cin × r) · G (r × hw)
            let dxn = &mut dx.data_mut()[n * cin * hw..(n + 1) * cin * hw];
            gemm(cin, r, hw, Mat::rows(w.data(), r), Mat::rows(&gy, hw), dxn, false);
        }
    }
    (dx, dw, db)
}

/// 2×2 max pooling; returns output and the flat input index of each maximum
/// (first in scan order on ties).
pub(crate) fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        bail!(Shape, "maxpool2 needs even height and width, got {}", s);
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let mut arg = Vec::with_capacity(out.len());
    let src = x.data();
    let mut o = 0;
    for p in 0..s.n * s.c {
        let base = p * s.plane();
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * s.w + 2 * j;
                for idx in [
                    best + 1,
                    base + (2 * i + 1) * s.w + 2 * j,
                    base + (2 * i + 1) * s.w + 2 * j + 1,
                ] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.data_mut()[o] = src[best];
                arg.push(best as u32);
                o += 1;
            }
        }
    }
    Ok((out, arg))
}
