use alloc::string::String;

/// Errors raised by the denoising core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor or image shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced a non-finite loss.
    #[error(
        "non-finite loss at iteration {iteration}: l_n={l_n} l_c={l_c} l_f={l_f} l_o={l_o}"
    )]
    NonFiniteLoss {
        iteration: usize,
        l_n: f64,
        l_c: f64,
        l_f: f64,
        l_o: f64,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
