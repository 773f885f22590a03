//! Shared fixtures for the benchmarks.

use abcem_core::{engine::build_market, GeneratorSpec, Market, RandomStream, SimulationConfig};

/// Basic Cross configuration with `agents` traders.
pub fn cross(agents: usize) -> SimulationConfig {
    let mut c = SimulationConfig::cross_basic();
    c.set_agent_count(agents).expect("positive agent count");
    c
}

/// Noisy LLS configuration with `agents` investors.
pub fn lls(agents: usize) -> SimulationConfig {
    let mut c = SimulationConfig::lls_basic(0.2);
    c.set_agent_count(agents).expect("positive agent count");
    c
}

/// Harras configuration on a square lattice of `side × side` agents.
pub fn harras(side: usize) -> SimulationConfig {
    let mut c = SimulationConfig::harras_basic();
    c.set_agent_count(side * side).expect("square agent count");
    c
}

/// A freshly initialised market and the stream that drives it.
pub fn market(config: &SimulationConfig, seed: u64) -> (Market, RandomStream) {
    let mut rng = RandomStream::new(GeneratorSpec::pooled(seed, 1 << 16)).expect("valid generator");
    let market = build_market(config, &mut rng).expect("valid configuration");
    (market, rng)
}
