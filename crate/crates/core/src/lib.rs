//! Rough volatility under the historical and pricing measures: Volterra
//! drivers, change-of-measure diagnostics, forward-variance bootstrap and
//! extraction of the volatility risk premium.

pub mod cir;
pub mod config;
pub mod curve;
pub mod error;
pub mod forecastr;
pub mod gauss;
pub mod gfo;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod mc;
pub mod measure;
pub mod models;
pub mod pipeline;
pub mod premium;
pub mod quadrature;

pub use error::{Error, Result};
