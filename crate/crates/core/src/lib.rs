pub mod acceptance;
pub mod dataset;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod hermite;
pub mod loss;
pub mod measures;
pub mod mitigation;
pub mod moments;
pub mod numerics;
pub mod oracle;
pub mod pnd;
pub mod serde_matrix;
pub mod sweeps;
pub mod vibronic;

pub use error::{Error, Result};
pub use gaussian::{GaussianState, GbsSpec};
pub use loss::LossModel;
pub use pnd::{Pnd, PndOptions};
