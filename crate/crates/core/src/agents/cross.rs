//! Threshold agents with herding and inaction pressures.
//!
//! Each agent holds a long (`+1`) or short (`-1`) position. It switches when
//! its accumulated herding pressure exceeds its herding threshold, or when the
//! price leaves its inaction interval around the price of its last switch.

use crate::error::{Error, Result};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossAgent {
    pub position: i8,
    pub herding_pressure: f64,
    pub switch_price: f64,
    pub inaction_threshold: f64,
    pub herding_threshold: f64,
}

/// Optional wealth bookkeeping with a fixed stock fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthExtension {
    pub interest_rate: f64,
    pub stock_fraction: f64,
    pub initial_wealth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub wealth: Option<WealthExtension>,
}

impl CrossParams {
    /// Basic parameter set: `A1 = 0.1, A2 = 0.3, b1 = 25, b2 = 100`.
    pub fn basic() -> Self {
        Self { a1: 0.1, a2: 0.3, b1: 25.0, b2: 100.0, wealth: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a1 < self.a2) {
            return Err(Error::InvalidParameter(format!(
                "Cross inaction thresholds need 0 < A1 < A2, got A1={} A2={}",
                self.a1, self.a2
            )));
        }
        if !(self.b1 > 0.0 && self.b1 < self.b2) {
            return Err(Error::InvalidParameter(format!(
                "Cross herding thresholds need 0 < b1 < b2, got b1={} b2={}",
                self.b1, self.b2
            )));
        }
        if let Some(w) = self.wealth {
            if !(w.interest_rate > 0.0) || !(w.stock_fraction >= 0.0 && w.stock_fraction <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "Cross wealth extension needs r > 0 and γ in [0, 1], got r={} γ={}",
                    w.interest_rate, w.stock_fraction
                )));
            }
            if !(w.initial_wealth > 0.0) {
                return Err(Error::InvalidParameter("Cross initial wealth must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `[m/(1+α), m(1+α)]`
pub fn inaction_interval(switch_price: f64, alpha: f64) -> (f64, f64) {
    (switch_price / (1.0 + alpha), switch_price * (1.0 + alpha))
}

/// Adds `Δt·|ED|` while the agent's position opposes the aggregate.
#[inline]
pub fn update_herding_pressure(pressure: f64, position: i8, ed: f64, delta_t: f64) -> f64 {
    if f64::from(position) * ed < 0.0 {
        pressure + delta_t * ed.abs()
    } else {
        pressure
    }
}

/// Herding pressure first, then the switching rule. Returns whether the agent
/// switched; simultaneous triggers flip the position once.
#[inline]
pub fn update_cross_agent(agent: &mut CrossAgent, price: f64, ed: f64, delta_t: f64) -> bool {
    agent.herding_pressure = update_herding_pressure(agent.herding_pressure, agent.position, ed, delta_t);
    let scale = 1.0 + agent.inaction_threshold;
    let outside = price * scale < agent.switch_price || price > agent.switch_price * scale;
    if agent.herding_pressure > agent.herding_threshold || outside {
        agent.position = -agent.position;
        agent.herding_pressure = 0.0;
        agent.switch_price = price;
        true
    } else {
        false
    }
}

/// `w + Δt[(1−γ)r + γ(S_now − S_prev)/(Δt·S_now)]·w`
pub fn update_cross_wealth(
    wealth: f64,
    gamma: f64,
    r: f64,
    price_now: f64,
    price_prev: f64,
    delta_t: f64,
) -> Result<f64> {
    let w = wealth * cross_wealth_factor(gamma, r, price_now, price_prev, delta_t);
    crate::error::finite("wealth", w)
}

#[inline]
fn cross_wealth_factor(gamma: f64, r: f64, price_now: f64, price_prev: f64, delta_t: f64) -> f64 {
    1.0 + delta_t * ((1.0 - gamma) * r + gamma * (price_now - price_prev) / (delta_t * price_now))
}

#[derive(Debug, Clone)]
pub struct CrossPopulation {
    agents: Vec<CrossAgent>,
    wealth: Option<(WealthExtension, Vec<f64>)>,
    position_sum: i64,
    switches_last_step: usize,
}

impl CrossPopulation {
    /// Draws, per agent in index order: `α ~ U(A1,A2)`, `β ~ U(B1,B2)`,
    /// `c ~ U(B1,B2)`, `σ ~ U{-1,1}`, where `B = b·Δt`.
    pub fn new<R: RandomSource>(
        count: usize,
        params: &CrossParams,
        delta_t: f64,
        initial_price: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::NoAgents);
        }
        params.validate()?;
        let (big_b1, big_b2) = (params.b1 * delta_t, params.b2 * delta_t);
        let mut agents = Vec::with_capacity(count);
        for _ in 0..count {
            let inaction_threshold = rng.next_uniform(params.a1, params.a2)?;
            let herding_threshold = rng.next_uniform(big_b1, big_b2)?;
            let herding_pressure = big_b1 + rng.next_uniform01() * (big_b2 - big_b1);
            let position = rng.next_discrete_uniform(&[-1i8, 1])?;
            agents.push(CrossAgent {
                position,
                herding_pressure,
                switch_price: initial_price,
                inaction_threshold,
                herding_threshold,
            });
        }
        Ok(Self::from_agents(agents, params.wealth))
    }

    pub fn from_agents(agents: Vec<CrossAgent>, wealth: Option<WealthExtension>) -> Self {
        let position_sum = agents.iter().map(|a| i64::from(a.position)).sum();
        let wealth = wealth.map(|w| (w, vec![w.initial_wealth; agents.len()]));
        Self { agents, wealth, position_sum, switches_last_step: 0 }
    }

    pub fn agents(&self) -> &[CrossAgent] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Σ σ_i, maintained across updates.
    pub fn position_sum(&self) -> f64 {
        self.position_sum as f64
    }

    pub fn wealth(&self) -> Option<&[f64]> {
        self.wealth.as_ref().map(|(_, w)| w.as_slice())
    }

    pub fn switches_last_step(&self) -> usize {
        self.switches_last_step
    }

    pub fn update(&mut self, price: f64, prev_price: f64, ed: f64, delta_t: f64) -> Result<()> {
        let mut delta: i64 = 0;
        let mut switches = 0;
        for agent in &mut self.agents {
            if update_cross_agent(agent, price, ed, delta_t) {
                switches += 1;
                delta += 2 * i64::from(agent.position);
            }
        }
        self.position_sum += delta;
        self.switches_last_step = switches;
        if let Some((ext, wealth)) = &mut self.wealth {
            let factor = cross_wealth_factor(ext.stock_fraction, ext.interest_rate, price, prev_price, delta_t);
            for w in wealth.iter_mut() {
                *w *= factor;
            }
            if let Some(&w) = wealth.first() {
                if !w.is_finite() || w <= 0.0 {
                    return Err(Error::NonPositiveWealth(w));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stub::ConstantSource;
    use crate::rng::{GeneratorSpec, RandomStream};

    fn agent(position: i8, c: f64, m: f64, alpha: f64, beta: f64) -> CrossAgent {
        CrossAgent {
            position,
            herding_pressure: c,
            switch_price: m,
            inaction_threshold: alpha,
            herding_threshold: beta,
        }
    }

    #[test]
    fn population_draws_within_table_ranges() {
        let mut rng = RandomStream::new(GeneratorSpec::on_the_fly(1)).unwrap();
        let dt = 4e-5;
        let pop = CrossPopulation::new(1000, &CrossParams::basic(), dt, 1.0, &mut rng).unwrap();
        for a in pop.agents() {
            assert!((0.1..0.3).contains(&a.inaction_threshold));
            assert!((25.0 * dt..100.0 * dt).contains(&a.herding_threshold));
            assert!((25.0 * dt..=100.0 * dt).contains(&a.herding_pressure));
            assert!(a.position == 1 || a.position == -1);
            assert_eq!(a.switch_price, 1.0);
        }
        let sum: i64 = pop.agents().iter().map(|a| i64::from(a.position)).sum();
        assert_eq!(pop.position_sum(), sum as f64);
    }

    #[test]
    fn population_with_constant_stub() {
        let mut rng = ConstantSource::new(0.5, 0.0);
        let pop = CrossPopulation::new(3, &CrossParams::basic(), 4e-5, 1.0, &mut rng).unwrap();
        for a in pop.agents() {
            assert_eq!(a.inaction_threshold, 0.2);
            assert_eq!(a.position, 1);
        }
        let single = CrossPopulation::new(1, &CrossParams::basic(), 4e-5, 1.0, &mut rng).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn population_rejects_bad_ranges() {
        let mut rng = ConstantSource::zero();
        let bad = CrossParams { a1: 0.3, a2: 0.1, ..CrossParams::basic() };
        assert!(CrossPopulation::new(4, &bad, 1.0, 1.0, &mut rng).is_err());
        let bad = CrossParams { b1: 100.0, b2: 25.0, ..CrossParams::basic() };
        assert!(CrossPopulation::new(4, &bad, 1.0, 1.0, &mut rng).is_err());
        assert!(CrossPopulation::new(0, &CrossParams::basic(), 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn inaction_interval_arithmetic() {
        let (lo, hi) = inaction_interval(1.0, 0.1);
        assert!((lo - 0.909091).abs() < 1e-6 && (hi - 1.1).abs() < 1e-15);
        let (lo, hi) = inaction_interval(2.0, 0.3);
        assert!((lo - 1.538462).abs() < 1e-6 && (hi - 2.6).abs() < 1e-15);
        let (lo, hi) = inaction_interval(1.0, 1e-12);
        assert!(hi - lo < 1e-11);
    }

    #[test]
    fn herding_pressure_rules() {
        let c = update_herding_pressure(1e-3, 1, -0.5, 4e-5);
        assert!((c - 1.02e-3).abs() < 1e-15);
        assert_eq!(update_herding_pressure(1e-3, 1, 0.3, 4e-5), 1e-3);
        assert_eq!(update_herding_pressure(1e-3, -1, 0.0, 4e-5), 1e-3);
    }

    #[test]
    fn switch_on_herding_threshold() {
        let mut a = agent(1, 5e-3, 1.0, 0.2, 1e-3);
        assert!(update_cross_agent(&mut a, 1.05, 0.4, 4e-5));
        assert_eq!((a.position, a.herding_pressure, a.switch_price), (-1, 0.0, 1.05));
    }

    #[test]
    fn switch_on_leaving_inaction_interval() {
        let mut a = agent(-1, 0.0, 1.0, 0.1, 1.0);
        assert!(update_cross_agent(&mut a, 1.2, -0.1, 4e-5));
        assert_eq!(a.position, 1);
        assert_eq!(a.switch_price, 1.2);
        let (lo, hi) = inaction_interval(a.switch_price, a.inaction_threshold);
        assert!(lo < 1.2 && 1.2 < hi);
    }

    #[test]
    fn no_switch_inside_thresholds() {
        let mut a = agent(1, 1e-4, 1.0, 0.1, 1e-3);
        let before = a;
        assert!(!update_cross_agent(&mut a, 1.05, 0.3, 4e-5));
        assert_eq!(a, before);
    }

    #[test]
    fn simultaneous_triggers_flip_once() {
        let mut a = agent(1, 1.0, 1.0, 0.1, 1e-3);
        assert!(update_cross_agent(&mut a, 2.0, 0.5, 4e-5));
        assert_eq!(a.position, -1);
    }

    #[test]
    fn wealth_update_examples() {
        assert_eq!(update_cross_wealth(1.3, 1.0, 0.01, 1.1, 1.1, 0.5).unwrap(), 1.3);
        assert!((update_cross_wealth(1.0, 0.0, 0.01, 1.0, 1.0, 1.0).unwrap() - 1.01).abs() < 1e-15);
        let w = update_cross_wealth(1.0, 0.5, 0.01, 1.1, 1.0, 1.0).unwrap();
        assert!((w - (1.0 + 0.005 + 0.5 * 0.1 / 1.1)).abs() < 1e-15);
        assert!((w - 1.050455).abs() < 1e-6);
    }

    #[test]
    fn position_sum_tracks_switches() {
        let agents = vec![agent(1, 1.0, 1.0, 0.1, 1e-3), agent(1, 0.0, 1.0, 0.1, 1.0), agent(-1, 0.0, 1.0, 0.1, 1.0)];
        let mut pop = CrossPopulation::from_agents(agents, None);
        assert_eq!(pop.position_sum(), 1.0);
        pop.update(1.0, 1.0, 0.3, 4e-5).unwrap();
        assert_eq!(pop.switches_last_step(), 1);
        assert_eq!(pop.position_sum(), -1.0);
    }
}
