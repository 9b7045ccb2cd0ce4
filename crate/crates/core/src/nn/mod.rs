//! Dense tensors, a reverse-mode autodiff tape, the U-Net layer set and Adam.

mod adam;
mod graph;
mod kernels;
mod scalar;
mod tensor;
mod unet;

pub use adam::{Adam, AdamConfig};
pub use graph::{Grads, ParamId, ParamStore, Tape, Var};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
pub use unet::{init_weights, param_layout, unet_forward, Init, ParamSpec, UNet, UNetConfig};

#[cfg(test)]
pub(crate) mod fd {
    use super::*;
    use alloc::vec::Vec;

    /// Largest relative error between analytic and central-difference
    /// gradients of `f` with respect to every element of every leaf.
    pub fn max_rel_error(
        leaves: &[Tensor<f64>],
        step: f64,
        f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    ) -> f64 {
        let eval = |vals: &[Tensor<f64>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = f(&mut tape, &vars);
            tape.value(loss).data()[0]
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward_grads(loss).unwrap();
        let mut worst = 0.0f64;
        for (li, leaf) in leaves.iter().enumerate() {
            let zero = Tensor::zeros(leaf.shape());
            let analytic = grads.get(vars[li]).unwrap_or(&zero);
            for k in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li].data_mut()[k] += step;
                let mut minus = leaves.to_vec();
                minus[li].data_mut()[k] -= step;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let a = analytic.data()[k];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        worst
    }

    pub fn random(shape: Shape, seed: u64, scale: f64) -> Tensor<f64> {
        let mut rng = crate::rng::Rng::new(seed);
        let data = (0..shape.numel()).map(|_| rng.normal() * scale).collect();
        Tensor::new(shape, data).unwrap()
    }
}
