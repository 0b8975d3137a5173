//! Load scheduling for dairy farms: battery and water-heater MDP
//! environments over an hourly year of load/PV/tariff data, calibrated
//! short-horizon forecasts, a family of reinforcement-learning agents with a
//! hand-rolled differentiable substrate, and an evaluation suite with exact
//! statistics.

pub mod agents;
pub mod battery;
pub mod calendar;
pub mod cli;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod heater;
pub mod metrics;
pub mod neural;

pub use error::{Error, Result};
