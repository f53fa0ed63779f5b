//! Area-variation-rate crash indicator.
//!
//! A window of `N` lag-`T` absolute increments is turned into a normalised measure,
//! its partition function `Z(q)`, the exponent `tau(q)`, generalised dimensions
//! `D_q` and the specific-heat analogue `C(q) = -tau''(q)`. The area under `C`
//! is tracked as the window slides by `l`, and its relative change against the
//! mean of all earlier windows, `zeta(n)`, is the indicator. Every value uses
//! only data before the index it is reported at.
//!
//! - [`ingest`]: series parsing, synthetic noise, output tables
//! - [`mfcore`]: single-window spectrum
//! - [`engine`]: sliding windows and `zeta(n)`
//! - [`detect`]: jumps, second lobe, noise reference, robustness sweep
//! - [`cli`]: the `avr` command

pub mod cli;
pub mod detect;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod mfcore;
pub mod report;

pub use detect::{Classification, DetectionPolicy, EventFlag};
pub use engine::{AnalysisConfig, WindowResult};
pub use error::{Error, Result};
pub use ingest::{PriceSeries, SeriesFormat, SyntheticSpec};
pub use mfcore::{QGrid, Spectrum};
