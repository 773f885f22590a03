//! The stock exchange: one step computes the excess demand of the current
//! agent states, moves the price, then lets every agent react to it.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::agents::{CrossPopulation, HarrasPopulation, LlsPopulation};
use crate::config::{AgentBlock, SimulationConfig};
use crate::error::{finite, Error, Result};
use crate::market::{solve_rational_price_near, ExcessDemandCalculator, ExcessDemandView, PriceRule};
use crate::rng::{GeneratorSpec, RandomSource, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationClock {
    pub step: usize,
    pub delta_t: f64,
    pub num_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub price: f64,
    pub prev_price: f64,
    pub excess_demand: f64,
    pub prev_excess_demand: f64,
    pub clock: SimulationClock,
}

/// One agent block.
#[derive(Debug, Clone)]
pub enum Population {
    Cross(CrossPopulation),
    Lls(LlsPopulation),
    Harras(HarrasPopulation),
}

impl Population {
    pub fn class_name(&self) -> &'static str {
        match self {
            Population::Cross(_) => "AgentCross",
            Population::Lls(_) => "AgentLLS",
            Population::Harras(_) => "AgentHarras",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Population::Cross(p) => p.len(),
            Population::Lls(p) => p.len(),
            Population::Harras(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the block can re-evaluate itself at a hypothetical price.
    pub fn bisection_capable(&self) -> bool {
        matches!(self, Population::Lls(_))
    }

    /// Sum of microscopic excess demands: positions for Cross agents, signed
    /// volumes for Harras agents, unmet share demand for LLS agents.
    pub fn demand_sum(&self, price: f64) -> f64 {
        match self {
            Population::Cross(p) => p.position_sum(),
            Population::Lls(p) => p.share_demand_excess(price),
            Population::Harras(p) => p.signed_volume(),
        }
    }

    fn prepare<R: RandomSource>(&mut self, price: f64, rng: &mut R) -> Result<()> {
        match self {
            Population::Lls(p) => p.prepare_step(price, rng),
            _ => Ok(()),
        }
    }

    fn update<R: RandomSource>(
        &mut self,
        price: f64,
        prev_price: f64,
        ed: f64,
        delta_t: f64,
        rng: &mut R,
    ) -> Result<()> {
        match self {
            Population::Cross(p) => p.update(price, prev_price, ed, delta_t),
            Population::Lls(p) => p.commit(price),
            Population::Harras(p) => p.update(price, rng),
        }
    }

    fn record(&self, prefix: &str, out: &mut Vec<(String, f64)>) {
        let mut push = |name: &str, v: f64| out.push((format!("{prefix}{name}"), v));
        match self {
            Population::Cross(p) => {
                push("switches", p.switches_last_step() as f64);
                if let Some(w) = p.wealth() {
                    push("wealth_mean", w.iter().sum::<f64>() / w.len() as f64);
                }
            }
            Population::Lls(p) => {
                push("dividend", p.dividend());
                for (g, w) in p.group_wealth().into_iter().enumerate() {
                    push(&format!("wealth_group_{g}"), w);
                }
                let last = p.last_decisions();
                for (g, gs) in last.gamma_star.iter().enumerate() {
                    push(&format!("gamma_star_group_{g}"), *gs);
                }
                let frac = if last.total == 0 { f64::NAN } else { last.boundary as f64 / last.total as f64 };
                push("boundary_fraction", frac);
            }
            Population::Harras(p) => {
                push("news_weight", p.feedback().news_weight);
                let active = p.actions().iter().filter(|&&a| a != 0).count();
                push("active_fraction", active as f64 / p.len() as f64);
            }
        }
    }

    fn final_state(&self, prefix: &str, out: &mut BTreeMap<String, Vec<f64>>) {
        match self {
            Population::Cross(p) => {
                if let Some(w) = p.wealth() {
                    out.insert(format!("{prefix}wealth"), w.to_vec());
                }
            }
            Population::Lls(p) => {
                out.insert(format!("{prefix}wealth"), p.agents().iter().map(|a| a.wealth).collect());
                out.insert(format!("{prefix}group"), p.agents().iter().map(|a| a.group as f64).collect());
            }
            Population::Harras(p) => {
                out.insert(format!("{prefix}cash"), p.cash().to_vec());
                out.insert(format!("{prefix}shares"), p.shares().to_vec());
            }
        }
    }

    fn counters(&self, prefix: &str, out: &mut BTreeMap<String, u64>) {
        if let Population::Lls(p) = self {
            let (b, t) = p.decision_counts();
            out.insert(format!("{prefix}boundary_decisions"), b);
            out.insert(format!("{prefix}total_decisions"), t);
        }
    }
}

/// Agents, aggregator and price rule bound to a market state.
#[derive(Debug, Clone)]
pub struct Market {
    pub populations: Vec<Population>,
    pub ed_calculator: ExcessDemandCalculator,
    pub price_rule: PriceRule,
    pub state: MarketState,
}

impl Market {
    /// Assembles a market at step 0. The previous excess demand starts equal
    /// to the current one, so the first step sees `ΔED = 0`.
    pub fn new(
        populations: Vec<Population>,
        ed_calculator: ExcessDemandCalculator,
        price_rule: PriceRule,
        initial_price: f64,
        delta_t: f64,
        num_steps: usize,
    ) -> Result<Self> {
        if populations.is_empty() || populations.iter().all(Population::is_empty) {
            return Err(Error::NoAgents);
        }
        if !(initial_price > 0.0) || !initial_price.is_finite() {
            return Err(Error::NonPositivePrice(initial_price));
        }
        if !(delta_t > 0.0) || !delta_t.is_finite() {
            return Err(Error::InvalidParameter(format!("Δt must be positive, got {delta_t}")));
        }
        if price_rule.is_rational() {
            if let Some(p) = populations.iter().find(|p| !p.bisection_capable()) {
                return Err(Error::NotBisectionCapable { class: p.class_name() });
            }
        }
        let mut market = Self {
            populations,
            ed_calculator,
            price_rule,
            state: MarketState {
                price: initial_price,
                prev_price: initial_price,
                excess_demand: 0.0,
                prev_excess_demand: 0.0,
                clock: SimulationClock { step: 0, delta_t, num_steps },
            },
        };
        let ed = market.compute_excess_demand(initial_price)?;
        market.state.excess_demand = ed;
        market.state.prev_excess_demand = ed;
        Ok(market)
    }

    pub fn agent_count(&self) -> usize {
        self.populations.iter().map(Population::len).sum()
    }

    /// Aggregate excess demand of the current agent states at `price`.
    pub fn compute_excess_demand(&self, price: f64) -> Result<f64> {
        let n = self.agent_count();
        if n == 0 {
            return Err(Error::NoAgents);
        }
        let total: f64 = self.populations.iter().map(|p| p.demand_sum(price)).sum();
        let ed = match self.ed_calculator {
            ExcessDemandCalculator::Mean => total / n as f64,
            ExcessDemandCalculator::Harras { lambda } => total / (lambda * n as f64),
        };
        finite("excess demand", ed)
    }

    /// Advances by one step; errors carry the index of the failing step.
    pub fn step<R: RandomSource>(&mut self, rng: &mut R) -> Result<()> {
        let k = self.state.clock.step;
        self.step_inner(rng).map_err(|e| e.at_step(k))
    }

    fn step_inner<R: RandomSource>(&mut self, rng: &mut R) -> Result<()> {
        let s = self.state;
        let dt = s.clock.delta_t;
        for p in &mut self.populations {
            p.prepare(s.price, rng)?;
        }
        let ed = ExcessDemandView::new(s.excess_demand, s.prev_excess_demand);
        let price = match self.price_rule {
            PriceRule::Bisection(settings) => {
                let (mut lower, upper) = settings.bracket(s.price);
                let floor = self
                    .populations
                    .iter()
                    .filter_map(|p| match p {
                        Population::Lls(l) => Some(l.bracket_floor()),
                        _ => None,
                    })
                    .fold(0.0, f64::max);
                if floor * (1.0 + 1e-9) > lower {
                    lower = floor * (1.0 + 1e-9);
                }
                let pops = &mut self.populations;
                solve_rational_price_near(
                    |candidate| {
                        let mut total = 0.0;
                        for p in pops.iter_mut() {
                            if let Population::Lls(l) = p {
                                total += l.clearance_mismatch(candidate)?;
                            }
                        }
                        Ok(total)
                    },
                    lower,
                    upper,
                    s.price,
                    settings.epsilon,
                    settings.max_iterations,
                )?
            }
            rule => {
                let eta = if rule.uses_noise() { rng.next_standard_normal() } else { 0.0 };
                rule.explicit_price(s.price, ed, dt, eta)?
            }
        };
        for p in &mut self.populations {
            p.update(price, s.price, ed.current, dt, rng)?;
        }
        let next_ed = self.compute_excess_demand(price)?;
        self.state = MarketState {
            price,
            prev_price: s.price,
            excess_demand: next_ed,
            prev_excess_demand: s.excess_demand,
            clock: SimulationClock { step: s.clock.step + 1, ..s.clock },
        };
        Ok(())
    }

    fn prefixes(&self) -> Vec<String> {
        if self.populations.len() == 1 {
            vec![String::new()]
        } else {
            (0..self.populations.len()).map(|i| format!("block{i}_")).collect()
        }
    }

    /// Per-step observables of all blocks, in a fixed order.
    pub fn observables(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (p, prefix) in self.populations.iter().zip(self.prefixes()) {
            p.record(&prefix, &mut out);
        }
        out
    }

    pub fn final_state(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (p, prefix) in self.populations.iter().zip(self.prefixes()) {
            p.final_state(&prefix, &mut out);
        }
        out
    }

    pub fn counters(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for (p, prefix) in self.populations.iter().zip(self.prefixes()) {
            p.counters(&prefix, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub master: u64,
    pub run_index: u64,
    pub run_seed: u64,
}

/// Recorded series of one run. Every series holds `num_steps + 1` values,
/// the first being the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub price_series: Vec<f64>,
    pub ed_series: Vec<f64>,
    pub observable_series: BTreeMap<String, Vec<f64>>,
    /// Per-agent values after the last step.
    pub final_state: BTreeMap<String, Vec<f64>>,
    pub counters: BTreeMap<String, u64>,
    pub wall_time: Duration,
    pub embedded_config: String,
    pub seed_record: SeedRecord,
}

impl RunOutput {
    pub fn len(&self) -> usize {
        self.price_series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price_series.is_empty()
    }
}

/// Collects series step by step.
#[derive(Debug, Default)]
pub struct Recorder {
    selection: Option<Vec<String>>,
    price: Vec<f64>,
    ed: Vec<f64>,
    observables: BTreeMap<String, Vec<f64>>,
}

impl Recorder {
    /// `selection = None` records every observable.
    pub fn new(selection: Option<Vec<String>>, capacity: usize) -> Self {
        Self {
            selection,
            price: Vec::with_capacity(capacity),
            ed: Vec::with_capacity(capacity),
            observables: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, market: &Market) {
        self.price.push(market.state.price);
        self.ed.push(market.state.excess_demand);
        for (name, v) in market.observables() {
            if let Some(sel) = &self.selection {
                if !sel.contains(&name) {
                    continue;
                }
            }
            self.observables.entry(name).or_default().push(v);
        }
    }
}

/// Runs `num_steps` steps, recording the initial state and every step.
/// Returns the recorder and the time spent in the step loop.
pub fn run_market<R: RandomSource>(market: &mut Market, recorder: &mut Recorder, rng: &mut R) -> Result<Duration> {
    recorder.record(market);
    let start = Instant::now();
    for _ in 0..market.state.clock.num_steps {
        market.step(rng)?;
        recorder.record(market);
    }
    Ok(start.elapsed())
}

/// Seed of repetition `run_index`: the SplitMix64 finaliser applied to
/// `master + (run_index + 1)·0x9E3779B97F4A7C15`. A bijection of the
/// pre-image, so distinct indices below 2⁶⁴ map to distinct seeds.
pub fn derive_run_seed(master_seed: u64, run_index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the market of a validated configuration, drawing initial agent
/// states from `rng` block by block.
pub fn build_market<R: RandomSource>(config: &SimulationConfig, rng: &mut R) -> Result<Market> {
    let plan = &config.run;
    let mut populations = Vec::with_capacity(config.agents.len());
    for block in &config.agents {
        populations.push(match block {
            AgentBlock::Cross { count, params } => {
                Population::Cross(CrossPopulation::new(*count, params, plan.delta_t, plan.initial_price, rng)?)
            }
            AgentBlock::Lls { params } => Population::Lls(LlsPopulation::new(params.clone(), plan.delta_t, rng)?),
            AgentBlock::Harras { count, params } => Population::Harras(HarrasPopulation::new(*count, *params, rng)?),
        });
    }
    Market::new(populations, config.ed_calculator, config.price_rule, plan.initial_price, plan.delta_t, plan.num_steps)
}

/// One repetition of a configuration. Bitwise reproducible for a fixed
/// configuration, master seed and run index.
pub fn run_simulation(config: &SimulationConfig, run_index: u64) -> Result<RunOutput> {
    config.validate()?;
    let master = config.run.seed;
    let run_seed = derive_run_seed(master, run_index);
    let mut rng = RandomStream::new(GeneratorSpec { seed: run_seed, ..config.rng })?;
    let mut market = build_market(config, &mut rng)?;
    let mut recorder = Recorder::new(config.record.clone(), config.run.num_steps + 1);
    let wall_time = run_market(&mut market, &mut recorder, &mut rng)?;
    Ok(RunOutput {
        price_series: recorder.price,
        ed_series: recorder.ed,
        observable_series: recorder.observables,
        final_state: market.final_state(),
        counters: market.counters(),
        wall_time,
        embedded_config: config.source_text(),
        seed_record: SeedRecord { master, run_index, run_seed },
    })
}

/// All repetitions of the plan, in parallel; results are in run order and
/// independent of thread placement.
pub fn run_repetitions(config: &SimulationConfig) -> Vec<Result<RunOutput>> {
    use rayon::prelude::*;
    (0..config.run.repetitions as u64).into_par_iter().map(|i| run_simulation(config, i)).collect()
}

/// Wall time of the step loop alone (initialisation and IO excluded).
pub fn measure_runtime(config: &SimulationConfig) -> Result<Duration> {
    Ok(run_simulation(config, 0)?.wall_time)
}
