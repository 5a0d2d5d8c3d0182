//! Standing-wave solitons of the radial nonlinear Klein-Gordon equation
//! ψ_tt − Δψ + F′(|ψ|)ψ/|ψ| = 0 with F(s) = ½Ω²s² + R(s).

pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nonlinearity;
pub mod quadrature;
pub mod minimize;
pub mod radial;
pub mod thresholds;

pub use error::{Error, Result};
