//! Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
//! walking indices backwards visits every node after all of its consumers.

use alloc::string::String;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::scalar::Scalar;
use super::tensor::{Shape, Tensor};
use crate::error::{bail, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters and their accumulated gradients, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), grads: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.get_id(&name).is_some() {
            bail!(InvalidArgument, "parameter {} registered twice", name);
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn get_id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    /// Replaces a value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            bail!(
                Shape,
                "parameter {} has shape {}, got {}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            );
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub(crate) fn value_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &Tensor<T>) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(T::zero());
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
        }
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    UpConv { x: Var, w: Var, b: Var },
    Relu(Var),
    MaxPool { x: Var, argmax: Vec<u32> },
    Concat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// Gradients from one backward pass, indexed by node.
#[derive(Debug)]
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Grads<T> {
    /// Gradient reaching `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Single-use computation graph.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Free variable whose gradient is reported by [`Tape::backward_grads`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copies a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    /// 2-D cross-correlation with zero padding; weight shape (C_out, C_in, k, k).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = kernels::conv_geom(self.shape(x), self.shape(w), self.shape(b), stride, pad)?;
        let out = kernels::conv_forward(self.value(x), self.value(w), self.value(b), &geom);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(out, Op::Conv { x, w, b, geom }, ng))
    }

    /// 3×3 convolution, stride 1, padding 1.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        if self.shape(w).h != 3 {
            bail!(Shape, "conv3x3 needs a 3×3 kernel, got {}", self.shape(w));
        }
        self.conv2d(x, w, b, 1, 1)
    }

    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        if self.shape(w).h != 1 {
            bail!(Shape, "conv1x1 needs a 1×1 kernel, got {}", self.shape(w));
        }
        self.conv2d(x, w, b, 1, 0)
    }

    /// 2×2 transposed convolution with stride 2; weight shape (C_in, C_out, 2, 2).
    pub fn upconv2(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        kernels::upconv_check(self.shape(x), self.shape(w), self.shape(b))?;
        let out = kernels::upconv_forward(self.value(x), self.value(w), self.value(b));
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(out, Op::UpConv { x, w, b }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if !(*v > T::zero()) {
                *v = T::zero();
            }
        }
        let ng = self.needs(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = kernels::maxpool_forward(self.value(x))?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::MaxPool { x, argmax }, ng))
    }

    /// Channel concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            bail!(Shape, "concat needs matching N, H, W: {} vs {}", sa, sb);
        }
        let shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..sa.n {
            data.extend_from_slice(&self.value(a).data()[n * la..(n + 1) * la]);
            data.extend_from_slice(&self.value(b).data()[n * lb..(n + 1) * lb]);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(a, b), ng))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            bail!(Shape, "{} of {} and {}", what, self.shape(a), self.shape(b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Mean of `(a - b)²` over every element; accumulated in f64.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            bail!(Shape, "mse of {} and {}", self.shape(a), self.shape(b));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let sum: f64 = va
            .iter()
            .zip(vb)
            .map(|(&x, &y)| {
                let d = x.as_f64() - y.as_f64();
                d * d
            })
            .sum();
        let out = Tensor::scalar(T::from_f64(sum / va.len() as f64));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mse(a, b), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|v| v.as_f64()).sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(a), ng)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward_grads(&self, loss: Var) -> Result<Grads<T>> {
        if self.value(loss).len() != 1 {
            bail!(InvalidArgument, "backward needs a scalar loss, got {}", self.shape(loss));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        if !self.needs(loss) {
            return Ok(Grads { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let g = match &node.op {
                Op::Input | Op::Leaf | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(&node.op, &node.value, g, &mut grads);
        }
        Ok(Grads { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::Conv { x, w, b, geom } => {
                let (dx, dw, db) = kernels::conv_backward(
                    self.value(*x),
                    self.value(*w),
                    &g,
                    geom,
                    self.needs(*x),
                );
                self.route_affine(*x, *w, *b, dx, dw, db, grads);
            }
            Op::UpConv { x, w, b } => {
                let (dx, dw, db) =
                    kernels::upconv_backward(self.value(*x), self.value(*w), &g, self.needs(*x));
                self.route_affine(*x, *w, *b, dx, dw, db, grads);
            }
            Op::Relu(x) => {
                let mut d = g;
                for (gv, &o) in d.data_mut().iter_mut().zip(out.data()) {
                    if !(o > T::zero()) {
                        *gv = T::zero();
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::MaxPool { x, argmax } => {
                let mut d = Tensor::zeros(self.shape(*x));
                for (&gv, &idx) in g.data().iter().zip(argmax) {
                    d.data_mut()[idx as usize] += gv;
                }
                accumulate(grads, *x, d);
            }
            Op::Concat(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
                let mut da = Vec::with_capacity(sa.numel());
                let mut db = Vec::with_capacity(sb.numel());
                for chunk in g.data().chunks(la + lb) {
                    da.extend_from_slice(&chunk[..la]);
                    db.extend_from_slice(&chunk[la..]);
                }
                if self.needs(*a) {
                    accumulate(grads, *a, Tensor::new(sa, da).expect("concat split"));
                }
                if self.needs(*b) {
                    accumulate(grads, *b, Tensor::new(sb, db).expect("concat split"));
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    let mut neg = g;
                    for v in neg.data_mut() {
                        *v = -*v;
                    }
                    accumulate(grads, *b, neg);
                }
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let scale = g.data()[0] * T::from_f64(2.0 / va.len() as f64);
                let data = va
                    .data()
                    .iter()
                    .zip(vb.data())
                    .map(|(&x, &y)| scale * (x - y))
                    .collect();
                let da = Tensor::new(va.shape(), data).expect("mse shape");
                if self.needs(*b) {
                    let mut neg = da.clone();
                    for v in neg.data_mut() {
                        *v = -*v;
                    }
                    accumulate(grads, *b, neg);
                }
                if self.needs(*a) {
                    accumulate(grads, *a, da);
                }
            }
            Op::Sum(a) => {
                accumulate(grads, *a, Tensor::full(self.shape(*a), g.data()[0]));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn route_affine(
        &self,
        x: Var,
        w: Var,
        b: Var,
        dx: Option<Tensor<T>>,
        dw: Tensor<T>,
        db: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        if let Some(dx) = dx {
            accumulate(grads, x, dx);
        }
        if self.needs(w) {
            accumulate(grads, w, dw);
        }
        if self.needs(b) {
            let shape = self.shape(b);
            accumulate(grads, b, Tensor::new(shape, db.into_data()).expect("bias shape"));
        }
    }

    /// Reverse pass that adds parameter gradients into `store`. Gradients
    /// accumulate across calls until [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.backward_grads(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.grads[id.0].add_assign(g);
            }
        }
        Ok(())
    }
}
