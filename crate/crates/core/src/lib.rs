//! Toolkit for checking whether logged rating data rewards long-horizon
//! recommendation policies.
//!
//! The pipeline: ingest rating logs ([`data`]), fit an environment
//! simulator ([`simulator`]), train Random/POP/greedy/Q-learning agents
//! ([`agents`]), run the interactive protocol ([`eval`]) and compare greedy
//! against beam-search planning ([`oracle`]).
//!
//! Numeric components are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the width used by the command-line tool.

pub mod agents;
pub mod cli;
pub mod data;
mod error;
pub mod eval;
pub mod oracle;
pub mod persist;
mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::{clamp, dot, Scalar};

/// Default-precision matrix-factorization simulator.
pub type MfModel = simulator::MatrixFactorization<f64>;
pub type MfModel32 = simulator::MatrixFactorization<f32>;
pub type SyntheticEnv = simulator::SyntheticEnv<f64>;
pub type SyntheticEnv32 = simulator::SyntheticEnv<f32>;
/// Default-precision value model (GreedyRM at `gamma = 0`, DQNR otherwise).
pub type ValueModel = agents::QNetwork<f64>;
pub type ValueModel32 = agents::QNetwork<f32>;
pub type State = simulator::State<f64>;
