//! Deep reinforcement learning for trading daily continuous futures.
//!
//! Pipeline: [`market_data`] series feed [`indicators`] state features, the
//! [`env`] turns target positions into volatility-scaled, cost-aware rewards,
//! [`agents`] learn positions (DQN, policy gradients, A2C) on a small LSTM
//! from [`nn`], [`baselines`] provide classical momentum rules, and
//! [`evaluation`] runs walk-forward backtests and portfolio metrics.

pub mod agents;
pub mod baselines;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod indicators;
pub mod market_data;
pub mod nn;

pub use error::{Error, Result};
