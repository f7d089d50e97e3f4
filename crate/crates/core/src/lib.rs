//! Threshold equilibria of a producer-consumer commodity game.
//!
//! The producer steers the price with impulses, the consumer switches the
//! demand drift between expansion and contraction. Value functions are
//! piecewise closed form, best responses come from smooth-pasting systems,
//! and equilibria from iterating the two best-response maps.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod consumer;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod pasting;
pub mod piecewise;
pub mod producer;
pub mod report;
pub mod strategy;

pub use error::{Error, Result};
pub use model::{Model, ModelParams, Player, QuadProfit, Regime};
pub use piecewise::{PiecewiseValue, ValuePair};
pub use strategy::{ConsumerStrategy, ProducerRow, ProducerStrategy, StrategyPair, Threshold};
