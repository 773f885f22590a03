//! Agent-based computational economic market simulation.
//!
//! A model is assembled from interchangeable blocks — agent populations, an
//! excess-demand calculator and a price calculator — bound to a market state
//! and advanced in discrete steps:
//!
//! ```no_run
//! let config = abcem_core::parse_config("configs/cross.xml")?;
//! let run = abcem_core::run_simulation(&config, 0)?;
//! let returns = abcem_core::analysis::log_returns(&run.price_series)?;
//! println!("kurtosis {}", abcem_core::analysis::excess_kurtosis(&returns)?);
//! # Ok::<(), abcem_core::Error>(())
//! ```

// `!(x > 0.0)` is the validation idiom throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} != {b} (tol {})", $tol);
    }};
}

pub mod agents;
pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod market;
pub mod output;
pub mod rng;

pub use config::{parse_config, parse_config_str, AgentBlock, ConfigError, SimulationConfig};
pub use engine::{run_repetitions, run_simulation, Market, RunOutput};
pub use error::{Error, Result};
pub use market::{ExcessDemandCalculator, PriceRule};
pub use rng::{GeneratorSpec, RandomSource, RandomStream};
