//! Dense linear algebra and seeded randomness.
//!
//! Everything is `f64`. There is no broadcasting: binary operations on tensors
//! of different shapes fail with [`Error::ShapeMismatch`](crate::Error).

mod rng;
mod tensor;

pub use rng::{derive_seed, SimRng};
pub use tensor::{kernels, BinaryOp, Tensor, UnaryOp};

/// Logistic sigmoid, `1 / (1 + e^{-z})`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
