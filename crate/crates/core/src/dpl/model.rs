use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::nn::{Adam, AdamConfig, ParamStore, Scalar, Tape, Tensor, UNet, UNetConfig, Var};
use crate::rng::Rng;

/// Which network a [`DplModel`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Noise estimator, context estimator and fusion reconstructor.
    Dpl,
    /// The context estimator alone trained on `L_c`.
    UnetBaseline,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dpl => "dpl",
            ModelKind::UnetBaseline => "unet",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dpl" => Some(ModelKind::Dpl),
            "unet" | "unet_baseline" => Some(ModelKind::UnetBaseline),
            _ => None,
        }
    }

    /// Loss terms this kind is trained on.
    pub fn terms(self) -> LossTerms {
        match self {
            ModelKind::Dpl => LossTerms::ALL,
            ModelKind::UnetBaseline => LossTerms::CONTEXT,
        }
    }
}

/// Parameter-name prefixes of the three sub-networks.
pub const NOISE_PREFIX: &str = "noise.";
pub const CONTEXT_PREFIX: &str = "context.";
pub const FUSION_PREFIX: &str = "fusion.";

/// Selects which loss terms enter the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub noise: bool,
    pub context: bool,
    pub fusion: bool,
}

impl LossTerms {
    pub const ALL: Self = Self { noise: true, context: true, fusion: true };
    pub const CONTEXT: Self = Self { noise: false, context: true, fusion: false };
    pub const NOISE: Self = Self { noise: true, context: false, fusion: false };
    pub const FUSION: Self = Self { noise: false, context: false, fusion: true };
}

/// Per-batch losses. `l_o` is `(l_n + l_c) + l_f`; disabled terms are 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_n: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub l_o: f64,
    pub batch: usize,
}

impl LossReport {
    pub fn new(l_n: f64, l_c: f64, l_f: f64, batch: usize) -> Self {
        Self { l_n, l_c, l_f, l_o: l_n + l_c + l_f, batch }
    }

    pub fn is_finite(&self) -> bool {
        self.l_n.is_finite() && self.l_c.is_finite() && self.l_f.is_finite() && self.l_o.is_finite()
    }
}

/// Every tensor of one forward pass: `eta` is the predicted noise,
/// `x_dd = x - eta`, `x_d` the context prediction and `y_hat` the fused output.
#[derive(Debug, Clone, PartialEq)]
pub struct DplBatch<T> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub eta: Tensor<T>,
    pub x_dd: Tensor<T>,
    pub x_d: Tensor<T>,
    pub y_hat: Tensor<T>,
}

/// Mean squared difference over every element, accumulated in f64.
pub fn tensor_mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p.as_f64() - q.as_f64();
            d * d
        })
        .sum();
    sum / a.len() as f64
}

/// `L_n = mse(Y, X″)`, `L_c = mse(Y, X′)`, `L_f = mse(Y, Y′)`.
pub fn dpl_loss<T: Scalar>(batch: &DplBatch<T>) -> LossReport {
    LossReport::new(
        tensor_mse(&batch.x_dd, &batch.y),
        tensor_mse(&batch.x_d, &batch.y),
        tensor_mse(&batch.y_hat, &batch.y),
        batch.x.shape().n,
    )
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DplVars {
    pub x: Var,
    pub eta: Option<Var>,
    pub x_dd: Option<Var>,
    pub x_d: Var,
    pub y_hat: Option<Var>,
}

impl DplVars {
    /// The model's denoised estimate.
    pub fn output(&self) -> Var {
        self.y_hat.unwrap_or(self.x_d)
    }
}

/// The dual-path network (or the U-Net baseline) with one Adam per sub-network.
#[derive(Debug, Clone)]
pub struct DplModel<T> {
    kind: ModelKind,
    depth: usize,
    base: usize,
    store: ParamStore<T>,
    noise: Option<UNet>,
    context: UNet,
    fusion: Option<UNet>,
    optimizers: Vec<Adam<T>>,
}

impl<T: Scalar> DplModel<T> {
    /// Fresh model; sub-networks are initialized in the order noise, context,
    /// fusion from one stream seeded by `seed`.
    pub fn new(kind: ModelKind, depth: usize, base: usize, seed: u64, adam: AdamConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let one = UNetConfig::new(1, depth, base)?;
        let (noise, context, fusion) = match kind {
            ModelKind::Dpl => {
                let noise = UNet::register(one, NOISE_PREFIX, &mut store, &mut rng)?;
                let context = UNet::register(one, CONTEXT_PREFIX, &mut store, &mut rng)?;
                let two = UNetConfig::new(2, depth, base)?;
                let fusion = UNet::register(two, FUSION_PREFIX, &mut store, &mut rng)?;
                (Some(noise), context, Some(fusion))
            }
            ModelKind::UnetBaseline => {
                (None, UNet::register(one, CONTEXT_PREFIX, &mut store, &mut rng)?, None)
            }
        };
        Self::assemble(kind, depth, base, store, noise, context, fusion, adam)
    }

    /// Wraps existing parameters, e.g. loaded from a checkpoint.
    pub fn from_params(
        kind: ModelKind,
        depth: usize,
        base: usize,
        store: ParamStore<T>,
        adam: AdamConfig,
    ) -> Result<Self> {
        let one = UNetConfig::new(1, depth, base)?;
        let context = UNet::bind(one, CONTEXT_PREFIX, &store)?;
        let (noise, fusion) = match kind {
            ModelKind::Dpl => {
                let two = UNetConfig::new(2, depth, base)?;
                (
                    Some(UNet::bind(one, NOISE_PREFIX, &store)?),
                    Some(UNet::bind(two, FUSION_PREFIX, &store)?),
                )
            }
            ModelKind::UnetBaseline => (None, None),
        };
        let expected = context.param_ids().len()
            + noise.as_ref().map_or(0, |n| n.param_ids().len())
            + fusion.as_ref().map_or(0, |n| n.param_ids().len());
        if store.len() != expected {
            bail!(
                InvalidArgument,
                "{} parameters present, a {} model of depth {} base {} has {}",
                store.len(),
                kind.name(),
                depth,
                base,
                expected
            );
        }
        Self::assemble(kind, depth, base, store, noise, context, fusion, adam)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ModelKind,
        depth: usize,
        base: usize,
        store: ParamStore<T>,
        noise: Option<UNet>,
        context: UNet,
        fusion: Option<UNet>,
        adam: AdamConfig,
    ) -> Result<Self> {
        let mut optimizers = Vec::new();
        for net in noise.iter().chain(Some(&context)).chain(fusion.iter()) {
            optimizers.push(Adam::new(adam, net.param_ids(), &store)?);
        }
        Ok(Self { kind, depth, base, store, noise, context, fusion, optimizers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn base_channels(&self) -> usize {
        self.base
    }

    /// Input sides must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn noise_net(&self) -> Option<&UNet> {
        self.noise.as_ref()
    }

    pub fn context_net(&self) -> &UNet {
        &self.context
    }

    pub fn fusion_net(&self) -> Option<&UNet> {
        self.fusion.as_ref()
    }

    /// One optimizer per present sub-network, in the order noise, context, fusion.
    pub fn optimizers(&self) -> &[Adam<T>] {
        &self.optimizers
    }

    /// Completed optimizer steps.
    pub fn steps(&self) -> u64 {
        self.optimizers[0].steps()
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        self.context.config().check_input(x.shape())
    }

    /// Records the forward pass on `tape`.
    pub fn forward_on(&self, tape: &mut Tape<T>, x: Var) -> Result<DplVars> {
        let x_d = self.context.forward(tape, &self.store, x)?;
        let (Some(noise), Some(fusion)) = (&self.noise, &self.fusion) else {
            return Ok(DplVars { x, eta: None, x_dd: None, x_d, y_hat: None });
        };
        let eta = noise.forward(tape, &self.store, x)?;
        let x_dd = tape.sub(x, eta)?;
        let cat = tape.concat(x_d, x_dd)?;
        let y_hat = fusion.forward(tape, &self.store, cat)?;
        Ok(DplVars { x, eta: Some(eta), x_dd: Some(x_dd), x_d, y_hat: Some(y_hat) })
    }

    /// Full forward pass of a dual-path model against targets `y`.
    pub fn forward(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<DplBatch<T>> {
        if self.kind != ModelKind::Dpl {
            bail!(InvalidArgument, "the unet baseline has no dual-path forward");
        }
        if x.shape() != y.shape() {
            bail!(Shape, "input {} and target {} differ", x.shape(), y.shape());
        }
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let v = self.forward_on(&mut tape, xv)?;
        let get = |o: Option<Var>| tape.value(o.expect("dual-path node")).clone();
        Ok(DplBatch {
            x: x.clone(),
            y: y.clone(),
            eta: get(v.eta),
            x_dd: get(v.x_dd),
            x_d: tape.value(v.x_d).clone(),
            y_hat: get(v.y_hat),
        })
    }

    /// Denoised estimate: `Y′` for the dual-path model, `X′` for the baseline.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let v = self.forward_on(&mut tape, xv)?;
        Ok(tape.value(v.output()).clone())
    }

    /// Clears gradients, runs forward and backward over the selected terms and
    /// leaves gradients in the parameter store. Returns the full loss report.
    pub fn backward(&mut self, x: &Tensor<T>, y: &Tensor<T>, terms: LossTerms) -> Result<LossReport> {
        if x.shape() != y.shape() {
            bail!(Shape, "input {} and target {} differ", x.shape(), y.shape());
        }
        self.store.zero_grad();
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let yv = tape.input(y.clone());
        let v = self.forward_on(&mut tape, xv)?;
        let l_c = tape.mse(v.x_d, yv)?;
        let mut parts = Vec::new();
        let mut report = LossReport::new(0.0, tensor_mse(tape.value(v.x_d), y), 0.0, x.shape().n);
        if let (Some(x_dd), Some(y_hat)) = (v.x_dd, v.y_hat) {
            let l_n = tape.mse(x_dd, yv)?;
            let l_f = tape.mse(y_hat, yv)?;
            report = LossReport::new(
                tensor_mse(tape.value(x_dd), y),
                report.l_c,
                tensor_mse(tape.value(y_hat), y),
                report.batch,
            );
            if terms.noise {
                parts.push(l_n);
            }
            if terms.context {
                parts.push(l_c);
            }
            if terms.fusion {
                parts.push(l_f);
            }
        } else if terms.context {
            parts.push(l_c);
        }
        let Some((&first, rest)) = parts.split_first() else {
            return Ok(report);
        };
        let mut total = first;
        for &p in rest {
            total = tape.add(total, p)?;
        }
        tape.backward(total, &mut self.store)?;
        Ok(report)
    }

    /// Applies one Adam step per sub-network from the stored gradients.
    pub fn step(&mut self) {
        for opt in &mut self.optimizers {
            opt.step(&mut self.store);
        }
    }

    /// Forward, backward on the kind's loss terms, one optimizer step.
    /// Returns the losses measured before the step.
    pub fn train_step(&mut self, x: &Tensor<T>, y: &Tensor<T>) -> Result<LossReport> {
        let report = self.backward(x, y, self.kind.terms())?;
        if !report.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.steps() as usize + 1,
                l_n: report.l_n,
                l_c: report.l_c,
                l_f: report.l_f,
                l_o: report.l_o,
            });
        }
        self.step();
        Ok(report)
    }

    /// Replaces every parameter value with those of `other` (same layout).
    pub fn load_values(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.store.len() {
            bail!(InvalidArgument, "parameter count {} != {}", other.len(), self.store.len());
        }
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            if other.name(id) != self.store.name(id) {
                bail!(InvalidArgument, "parameter {} != {}", other.name(id), self.store.name(id));
            }
            self.store.set_value(id, other.value(id).clone())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Shape, Tensor};


    fn rand_tensor(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        let data = (0..shape.numel()).map(|_| rng.uniform_range(lo, hi)).collect();
        Tensor::new(shape, data).unwrap()
    }

    fn small(kind: ModelKind, seed: u64) -> DplModel<f64> {
        DplModel::new(kind, 1, 4, seed, AdamConfig::default()).unwrap()
    }

    #[test]
    fn kind_names() {
        assert_eq!(ModelKind::from_name("dpl"), Some(ModelKind::Dpl));
        assert_eq!(ModelKind::from_name("unet"), Some(ModelKind::UnetBaseline));
        assert_eq!(ModelKind::from_name("unet_baseline"), Some(ModelKind::UnetBaseline));
        assert_eq!(ModelKind::from_name("cnn"), None);
    }

    #[test]
    fn layout_prefixes_and_channels() {
        let m = small(ModelKind::Dpl, 0);
        let names: Vec<&str> = m.params().iter().map(|(n, _)| n).collect();
        assert!(names[0].starts_with(NOISE_PREFIX));
        assert!(names.last().unwrap().starts_with(FUSION_PREFIX));
        assert_eq!(m.fusion_net().unwrap().config().in_channels, 2);
        assert_eq!(m.optimizers().len(), 3);
        let b = small(ModelKind::UnetBaseline, 0);
        assert!(b.params().iter().all(|(n, _)| n.starts_with(CONTEXT_PREFIX)));
        assert_eq!(b.optimizers().len(), 1);
    }

    #[test]
    fn residual_is_exact() {
        let m = small(ModelKind::Dpl, 1);
        let x = rand_tensor(Shape::new(2, 1, 16, 16), 2, 0.0, 1.0);
        let y = rand_tensor(Shape::new(2, 1, 16, 16), 3, 0.0, 1.0);
        let b = m.forward(&x, &y).unwrap();
        for ((&xdd, &eta), &xv) in b.x_dd.data().iter().zip(b.eta.data()).zip(x.data()) {
            assert_eq!(xdd, xv - eta);
        }
    }

    #[test]
    fn zero_noise_net_passes_input() {
        let mut m = small(ModelKind::Dpl, 1);
        let ids: Vec<_> = m.noise_net().unwrap().param_ids().to_vec();
        for id in ids {
            m.params_mut().value_mut(id).data_mut().fill(0.0);
        }
        let x = rand_tensor(Shape::new(1, 1, 16, 16), 4, 0.0, 1.0);
        let b = m.forward(&x, &x).unwrap();
        assert!(b.eta.data().iter().all(|&v| v == 0.0));
        assert_eq!(b.x_dd, x);
    }

    #[test]
    fn output_shapes() {
        for depth in 1..=2 {
            for size in [32, 64] {
                let m = DplModel::<f32>::new(ModelKind::Dpl, depth, 2, 0, AdamConfig::default()).unwrap();
                let x = Tensor::full(Shape::new(1, 1, size, size), 0.3f32);
                let b = m.forward(&x, &x).unwrap();
                for t in [&b.eta, &b.x_dd, &b.x_d, &b.y_hat] {
                    assert_eq!(t.shape(), x.shape());
                }
            }
        }
    }

    #[test]
    fn fusion_channel_order_matters() {
        let m = small(ModelKind::Dpl, 5);
        let x = rand_tensor(Shape::new(1, 1, 16, 16), 6, 0.0, 1.0);
        let b = m.forward(&x, &x).unwrap();
        let fusion = m.fusion_net().unwrap();
        let mut tape = Tape::new();
        let xd = tape.input(b.x_d.clone());
        let xdd = tape.input(b.x_dd.clone());
        let swapped = tape.concat(xdd, xd).unwrap();
        let y = fusion.forward(&mut tape, m.params(), swapped).unwrap();
        assert_ne!(tape.value(y), &b.y_hat);
    }

    #[test]
    fn loss_hand_values() {
        let s = Shape::new(2, 1, 2, 2);
        let half = Tensor::full(s, 0.5f64);
        let batch = DplBatch {
            x: half.clone(),
            y: Tensor::zeros(s),
            eta: Tensor::zeros(s),
            x_dd: half.clone(),
            x_d: half.clone(),
            y_hat: half,
        };
        let r = dpl_loss(&batch);
        assert_eq!((r.l_n, r.l_c, r.l_f, r.l_o, r.batch), (0.25, 0.25, 0.25, 0.75, 2));
        let y = rand_tensor(s, 1, 0.0, 1.0);
        let same = DplBatch {
            x: y.clone(),
            y: y.clone(),
            eta: Tensor::zeros(s),
            x_dd: y.clone(),
            x_d: y.clone(),
            y_hat: y,
        };
        let r = dpl_loss(&same);
        assert_eq!((r.l_n, r.l_c, r.l_f, r.l_o), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn report_sum_is_exact() {
        let m = small(ModelKind::Dpl, 8);
        let x = rand_tensor(Shape::new(2, 1, 16, 16), 9, 0.0, 1.0);
        let y = rand_tensor(Shape::new(2, 1, 16, 16), 10, 0.0, 1.0);
        let r = dpl_loss(&m.forward(&x, &y).unwrap());
        assert_eq!(r.l_o, r.l_n + r.l_c + r.l_f);
    }

    fn grad_norms(m: &DplModel<f64>) -> [f64; 3] {
        let nets = [m.noise_net().unwrap(), m.context_net(), m.fusion_net().unwrap()];
        nets.map(|n| {
            n.param_ids()
                .iter()
                .flat_map(|&id| m.params().grad(id).data().iter())
                .map(|g| g * g)
                .sum::<f64>()
        })
    }

    #[test]
    fn gradient_isolation() {
        let mut m = small(ModelKind::Dpl, 11);
        let x = rand_tensor(Shape::new(2, 1, 16, 16), 12, 0.0, 1.0);
        let y = rand_tensor(Shape::new(2, 1, 16, 16), 13, 0.0, 1.0);
        m.backward(&x, &y, LossTerms::NOISE).unwrap();
        let [n, c, f] = grad_norms(&m);
        assert!(n > 0.0 && c == 0.0 && f == 0.0);
        m.backward(&x, &y, LossTerms::CONTEXT).unwrap();
        let [n, c, f] = grad_norms(&m);
        assert!(n == 0.0 && c > 0.0 && f == 0.0);
        m.backward(&x, &y, LossTerms::FUSION).unwrap();
        let [n, c, f] = grad_norms(&m);
        assert!(n > 0.0 && c > 0.0 && f > 0.0);
    }

    #[test]
    fn zero_lr_keeps_everything() {
        let mut m = DplModel::<f64>::new(ModelKind::Dpl, 1, 4, 3, AdamConfig::with_lr(0.0)).unwrap();
        let before = m.params().clone();
        let x = rand_tensor(Shape::new(2, 1, 16, 16), 14, 0.0, 1.0);
        let y = rand_tensor(Shape::new(2, 1, 16, 16), 15, 0.0, 1.0);
        let a = m.train_step(&x, &y).unwrap();
        let b = m.train_step(&x, &y).unwrap();
        assert_eq!(a, b);
        for ((_, p), (_, q)) in before.iter().zip(m.params().iter()) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut m = small(ModelKind::Dpl, 3);
        let mut x = rand_tensor(Shape::new(1, 1, 16, 16), 16, 0.0, 1.0);
        x.data_mut()[0] = f64::NAN;
        let y = rand_tensor(Shape::new(1, 1, 16, 16), 17, 0.0, 1.0);
        match m.train_step(&x, &y) {
            Err(Error::NonFiniteLoss { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn end_to_end_gradients() {
        let mut m = small(ModelKind::Dpl, 21);
        let x = rand_tensor(Shape::new(1, 1, 16, 16), 22, 0.0, 1.0);
        let y = rand_tensor(Shape::new(1, 1, 16, 16), 23, 0.0, 1.0);
        m.backward(&x, &y, LossTerms::ALL).unwrap();
        let analytic = m.params().clone();
        let mut rng = Rng::new(24);
        let step = 1e-5;
        let nets: Vec<Vec<_>> = [m.noise_net().unwrap(), m.context_net(), m.fusion_net().unwrap()]
            .iter()
            .map(|n| n.param_ids().to_vec())
            .collect();
        let mut worst = 0.0f64;
        for ids in nets {
            for _ in 0..5 {
                let id = ids[rng.index(ids.len())];
                let k = rng.index(m.params().value(id).len());
                let orig = m.params().value(id).data()[k];
                let mut loss_at = |v: f64| {
                    m.params_mut().value_mut(id).data_mut()[k] = v;
                    dpl_loss(&m.forward(&x, &y).unwrap()).l_o
                };
                let numeric = (loss_at(orig + step) - loss_at(orig - step)) / (2.0 * step);
                loss_at(orig);
                let a = analytic.grad(id).data()[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn from_params_round_trip() {
        let m = small(ModelKind::Dpl, 30);
        let again = DplModel::from_params(ModelKind::Dpl, 1, 4, m.params().clone(), AdamConfig::default())
            .unwrap();
        let x = rand_tensor(Shape::new(1, 1, 16, 16), 31, 0.0, 1.0);
        assert_eq!(m.predict(&x).unwrap(), again.predict(&x).unwrap());
        assert!(DplModel::from_params(ModelKind::Dpl, 2, 4, m.params().clone(), AdamConfig::default())
            .is_err());
        assert!(DplModel::from_params(
            ModelKind::UnetBaseline,
            1,
            4,
            m.params().clone(),
            AdamConfig::default()
        )
        .is_err());
    }
}
