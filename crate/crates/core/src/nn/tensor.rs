use alloc::vec;
use alloc::vec::Vec;

use super::scalar::Scalar;
use crate::error::{bail, Result};
use crate::image::Image;

/// Four-axis shape: batch, channels, height, width. Weight tensors reuse the
/// axes as (out, in, kernel height, kernel width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl core::fmt::Display for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major N×C×H×W array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            bail!(Shape, "shape {} needs {} values, got {}", shape, shape.numel(), data.len());
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn full(shape: Shape, v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.numel()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self::full(Shape::scalar(), v)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stacks equally sized images into an (N, 1, H, W) batch.
    pub fn from_images(images: &[&Image]) -> Result<Self> {
        let Some(first) = images.first() else {
            bail!(InvalidArgument, "cannot batch zero images");
        };
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            if img.width() != w || img.height() != h {
                bail!(Shape, "batch images must share one size");
            }
            data.extend(img.data().iter().map(|&v| T::from_f64(v as f64)));
        }
        Self::new(Shape::new(images.len(), 1, h, w), data)
    }

    /// Splits a single-channel batch back into images.
    pub fn to_images(&self) -> Result<Vec<Image>> {
        if self.shape.c != 1 {
            bail!(Shape, "expected one channel, got {}", self.shape.c);
        }
        let plane = self.shape.plane();
        self.data
            .chunks(plane)
            .map(|c| {
                Image::new(
                    self.shape.w,
                    self.shape.h,
                    c.iter().map(|v| v.as_f64() as f32).collect(),
                )
            })
            .collect()
    }

    /// Converts element type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}
