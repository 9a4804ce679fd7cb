pub mod autodiff;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nets;
pub mod projection;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
