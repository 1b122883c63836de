//! Deep reinforcement learning for portfolio management.
//!
//! The crate provides the pieces of an EIIE (ensemble of identical
//! independent evaluators) trading agent and the harness around it:
//!
//! * [`marketdata`]: candles, asset selection, aligned price matrices and
//!   normalized price tensors.
//! * [`portfolio`]: weight drift, the exact transaction remainder factor and
//!   returns.
//! * [`autodiff`]: a small reverse-mode engine with Adam and gradient checks.
//! * [`policy`]: CNN, RNN and LSTM policy networks.
//! * [`pvm`]: the portfolio-vector memory.
//! * [`trainer`]: geometric batch sampling, offline and rolling training.
//! * [`baselines`]: classical online portfolio selection strategies.
//! * [`backtest`] and [`metrics`]: exact-cost backtests and performance
//!   measures.

pub mod autodiff;
pub mod backtest;
pub mod baselines;
pub mod error;
pub mod marketdata;
pub mod metrics;
pub mod policy;
pub mod portfolio;
pub mod pvm;
pub mod trainer;

pub use error::{Error, Result};
