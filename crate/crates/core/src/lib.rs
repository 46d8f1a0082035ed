//! Groundwater time-series toolkit.
//!
//! Covers the full analysis chain for quarterly monitoring-station data:
//!
//! * [`dataio`]: long-format CSV ingestion into a masked station × time × variable panel
//! * [`var`]: equation-wise least-squares VAR(p) estimation, lag selection, stability, forecasting
//! * [`diagnostics`]: Portmanteau, multivariate ARCH-LM, Jarque–Bera and OLS-CUSUM
//! * [`structural`]: Granger causality, orthogonalised impulse responses, FEVD
//! * [`copula`]: pseudo-observations, Gaussian-copula beta regression, directional dependence networks
//! * [`shelflife`]: rolling-origin forecast errors and the APE-threshold shelf-life horizon

pub mod copula;
pub mod dataio;
pub mod diagnostics;
pub mod error;
mod linalg;
pub mod plot;
pub mod shelflife;
pub mod stats;
pub mod structural;
pub mod var;

pub use error::{Error, Result};
