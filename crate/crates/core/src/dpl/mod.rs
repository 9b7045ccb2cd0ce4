//! Dual-path denoiser: noise estimator, context estimator and fusion
//! reconstructor trained on `L_o = L_n + L_c + L_f`.

mod model;
mod train;

pub use model::{
    dpl_loss, tensor_mse, DplBatch, DplModel, DplVars, LossReport, LossTerms, ModelKind,
    CONTEXT_PREFIX, FUSION_PREFIX, NOISE_PREFIX,
};
pub use train::{
    batch_tensors, evaluate, loss_csv, mean_psnr, train, LossRecord, Pair, TrainConfig,
    TrainOutcome, NOISY_LABEL,
};
