pub mod effective;
pub mod error;
pub mod evolution;
pub mod fft;
pub mod grid;
pub mod linalg;
pub mod linearized;
pub mod normal_form;
pub mod ops;
pub mod pipeline;
pub mod potential;
pub mod scattering;
pub mod soliton;
pub mod spectrum;

pub use error::{Error, Result};
