//! Log-utility investors in a rational market.
//!
//! Each agent splits its wealth between a bond paying `r` and a stock paying a
//! dividend. The stock fraction maximises the expected log of next-period
//! wealth over the agent's memory of past returns, blurred by noise. The
//! price clears the market: the shares demanded at the candidate price equal
//! the fixed share supply.

use crate::error::{finite, Error, Result};
use crate::rng::RandomSource;

pub const GAMMA_MIN: f64 = 0.01;
pub const GAMMA_MAX: f64 = 0.99;
/// Absolute tolerance on an interior optimum.
pub const GAMMA_TOLERANCE: f64 = 1e-8;

/// Price in the denominator of the stock return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnDenominator {
    /// `x = ((S_now − S_prev)/Δt + D) / S_now`
    #[default]
    Current,
    /// `x = ((S_now − S_prev)/Δt + D) / S_prev`
    Previous,
}

/// How memory lengths react to the step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryScaling {
    /// `m̄ = round(m/Δt)`, at least one step.
    #[default]
    Scaled,
    /// `m̄ = m` steps regardless of `Δt`.
    Fixed,
}

pub fn effective_memory(memory: usize, delta_t: f64, scaling: MemoryScaling) -> usize {
    match scaling {
        MemoryScaling::Fixed => memory.max(1),
        MemoryScaling::Scaled => ((memory as f64 / delta_t).round() as usize).max(1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LlsGroup {
    pub count: usize,
    pub memory: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlsParams {
    pub groups: Vec<LlsGroup>,
    pub sigma_gamma: f64,
    pub interest_rate: f64,
    pub z1: f64,
    pub z2: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
    pub initial_wealth: f64,
    pub initial_shares: f64,
    pub initial_gamma: f64,
    pub initial_dividend: f64,
    pub scaling: MemoryScaling,
    pub denominator: ReturnDenominator,
    /// Noise on `γ` is truncated at `± noise_truncation · σ_γ`.
    pub noise_truncation: f64,
    /// Whether the return at the candidate price joins the memory window.
    pub include_candidate_return: bool,
}

impl LlsParams {
    /// One group of 100 investors with memory 15.
    pub fn basic(sigma_gamma: f64) -> Self {
        Self {
            groups: vec![LlsGroup { count: 100, memory: 15 }],
            sigma_gamma,
            interest_rate: 0.04,
            z1: 0.05,
            z2: 0.05,
            mu_h: 0.0415,
            sigma_h: 0.003,
            initial_wealth: 1000.0,
            initial_shares: 100.0,
            initial_gamma: 0.4,
            initial_dividend: 0.2,
            scaling: MemoryScaling::Scaled,
            denominator: ReturnDenominator::Current,
            noise_truncation: 2.0,
            include_candidate_return: false,
        }
    }

    /// Three equal groups with memories 10, 141 and 256.
    pub fn three_groups(per_group: usize) -> Self {
        Self {
            groups: [10, 141, 256].iter().map(|&memory| LlsGroup { count: per_group, memory }).collect(),
            sigma_gamma: 0.2,
            interest_rate: 0.0001,
            z1: 0.00015,
            z2: 0.00015,
            initial_dividend: 0.004,
            ..Self::basic(0.2)
        }
    }

    pub fn validate(&self, delta_t: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.groups.is_empty() || self.groups.iter().any(|g| g.count == 0) {
            return bad("LLS groups need at least one agent each".into());
        }
        if self.groups.iter().any(|g| g.memory == 0) {
            return bad("LLS memory must be at least one step".into());
        }
        if !(self.sigma_gamma >= 0.0) || !(self.sigma_h >= 0.0) {
            return bad("LLS standard deviations must be non-negative".into());
        }
        if !(self.noise_truncation > 0.0) {
            return bad("LLS noise truncation must be positive".into());
        }
        if !(self.z1 <= self.z2) {
            return bad(format!("LLS dividend growth needs z1 <= z2, got {} > {}", self.z1, self.z2));
        }
        if !(1.0 + delta_t * self.z1 > 0.0) {
            return bad("LLS dividend growth bounds allow a non-positive dividend".into());
        }
        if !(self.initial_dividend > 0.0) || !(self.initial_wealth > 0.0) || !(self.initial_shares > 0.0) {
            return bad("LLS initial dividend, wealth and shares must be positive".into());
        }
        if !(GAMMA_MIN..=GAMMA_MAX).contains(&self.initial_gamma) {
            return bad(format!("LLS initial γ must lie in [{GAMMA_MIN}, {GAMMA_MAX}]"));
        }
        Ok(())
    }
}

/// `D' = (1 + Δt·z̃)·D`, `z̃ ~ U(z1, z2)`; no draw when `z1 == z2`.
pub fn dividend_step<R: RandomSource>(dividend: f64, z1: f64, z2: f64, delta_t: f64, rng: &mut R) -> Result<f64> {
    let z = if z1 == z2 { z1 } else { rng.next_uniform(z1, z2)? };
    let next = (1.0 + delta_t * z) * dividend;
    if next > 0.0 {
        Ok(next)
    } else {
        Err(Error::InvalidParameter(format!("dividend became non-positive ({next})")))
    }
}

pub fn stock_return_x(
    price_now: f64,
    price_prev: f64,
    dividend: f64,
    delta_t: f64,
    denominator: ReturnDenominator,
) -> f64 {
    let numerator = (price_now - price_prev) / delta_t + dividend;
    match denominator {
        ReturnDenominator::Current => numerator / price_now,
        ReturnDenominator::Previous => numerator / price_prev,
    }
}

/// Mean of `log((1−γ)w(1+rΔt) + γw(1+xΔt))` over the window.
pub fn expected_log_utility(gamma: f64, window: &[f64], r: f64, delta_t: f64, wealth: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::InvalidParameter("empty return window".into()));
    }
    let mut acc = 0.0;
    for &x in window {
        let arg = (1.0 - gamma) * wealth * (1.0 + r * delta_t) + gamma * wealth * (1.0 + x * delta_t);
        if !(arg > 0.0) {
            return Err(Error::UtilityDomain(arg));
        }
        acc += arg.ln();
    }
    Ok(acc / window.len() as f64)
}

/// `f(γ) = (1/m) Σ Δt(x_j − r) / (Δt(x_j − r)γ + 1 + Δt·r)`.
pub fn first_order_condition(gamma: f64, window: &[f64], r: f64, delta_t: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::InvalidParameter("empty return window".into()));
    }
    let base = 1.0 + delta_t * r;
    let mut acc = 0.0;
    for &x in window {
        let y = delta_t * (x - r);
        let den = y * gamma + base;
        if den == 0.0 {
            return Err(Error::VanishingDenominator);
        }
        acc += y / den;
    }
    Ok(acc / window.len() as f64)
}

/// Derivative of [`first_order_condition`] with respect to `γ`; never positive.
fn foc_slope(gamma: f64, window: &[f64], r: f64, delta_t: f64) -> f64 {
    let base = 1.0 + delta_t * r;
    let acc: f64 = window
        .iter()
        .map(|&x| {
            let y = delta_t * (x - r);
            let den = y * gamma + base;
            -(y * y) / (den * den)
        })
        .sum();
    acc / window.len() as f64
}

/// Maximiser of the expected log utility over `[0.01, 0.99]`.
///
/// Boundary cases follow from the sign of the first-order condition; an
/// interior root is located by Newton steps kept inside a shrinking sign
/// bracket (bisection whenever a Newton step would leave it).
pub fn optimal_investment(window: &[f64], r: f64, delta_t: f64) -> Result<f64> {
    let f_lo = first_order_condition(GAMMA_MIN, window, r, delta_t)?;
    if f_lo <= 0.0 {
        return Ok(GAMMA_MIN);
    }
    let f_hi = first_order_condition(GAMMA_MAX, window, r, delta_t)?;
    if f_hi >= 0.0 {
        return Ok(GAMMA_MAX);
    }
    let (mut lo, mut hi) = (GAMMA_MIN, GAMMA_MAX);
    let mut g = GAMMA_MIN - f_lo * (GAMMA_MAX - GAMMA_MIN) / (f_hi - f_lo);
    for _ in 0..200 {
        let f = first_order_condition(g, window, r, delta_t)?;
        if f == 0.0 {
            return Ok(g);
        }
        if f > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        if hi - lo <= GAMMA_TOLERANCE {
            return Ok(0.5 * (lo + hi));
        }
        let slope = foc_slope(g, window, r, delta_t);
        let newton = if slope < 0.0 { g - f / slope } else { f64::NAN };
        let step_ok = newton > lo && newton < hi;
        let next = if step_ok { newton } else { 0.5 * (lo + hi) };
        if step_ok && (next - g).abs() <= 0.5 * GAMMA_TOLERANCE {
            return Ok(next);
        }
        g = next;
    }
    Err(Error::InvalidParameter("optimal investment search did not converge".into()))
}

/// `γ* + ε`, `ε` normal with standard deviation `σ_γ` truncated at
/// `± truncation·σ_γ`, then clamped to `[0.01, 0.99]`. No draw when `σ_γ = 0`.
pub fn perturb_investment<R: RandomSource>(
    gamma_star: f64,
    sigma_gamma: f64,
    truncation: f64,
    rng: &mut R,
) -> Result<f64> {
    let eps = investment_noise(sigma_gamma, truncation, rng)?;
    Ok((gamma_star + eps).clamp(GAMMA_MIN, GAMMA_MAX))
}

fn investment_noise<R: RandomSource>(sigma_gamma: f64, truncation: f64, rng: &mut R) -> Result<f64> {
    if sigma_gamma == 0.0 {
        return Ok(0.0);
    }
    let bound = truncation * sigma_gamma;
    Ok(rng.next_truncated_normal(0.0, sigma_gamma, -bound, bound)?)
}

/// `w·(1 + Δt((1−γ)r + γx))`.
pub fn lls_wealth_update(wealth: f64, gamma: f64, r: f64, x: f64, delta_t: f64) -> Result<f64> {
    let w = finite("wealth", wealth * (1.0 + delta_t * ((1.0 - gamma) * r + gamma * x)))?;
    if w > 0.0 {
        Ok(w)
    } else {
        Err(Error::NonPositiveWealth(w))
    }
}

pub fn is_boundary_decision(gamma_star: f64) -> bool {
    gamma_star == GAMMA_MIN || gamma_star == GAMMA_MAX
}

/// Fraction of recorded pre-noise optima sitting on a boundary.
pub fn decision_fraction_boundary(gamma_stars: &[f64]) -> f64 {
    if gamma_stars.is_empty() {
        return 0.0;
    }
    gamma_stars.iter().filter(|&&g| is_boundary_decision(g)).count() as f64 / gamma_stars.len() as f64
}

/// Past returns, most recent last; contiguous for slicing windows.
#[derive(Debug, Clone)]
pub struct ReturnHistory {
    buffer: Vec<f64>,
    start: usize,
    capacity: usize,
}

impl ReturnHistory {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { buffer: Vec::with_capacity(2 * capacity), start: 0, capacity }
    }

    /// History pre-filled with `capacity` draws of `N(μ_h, σ_h)`.
    pub fn seeded<R: RandomSource>(capacity: usize, mu: f64, sigma: f64, rng: &mut R) -> Result<Self> {
        let mut h = Self::new(capacity);
        for _ in 0..h.capacity {
            h.push(rng.next_normal(mu, sigma)?);
        }
        Ok(h)
    }

    pub fn push(&mut self, x: f64) {
        if self.buffer.len() == 2 * self.capacity {
            self.buffer.drain(..self.start);
            self.start = 0;
        }
        self.buffer.push(x);
        if self.buffer.len() - self.start > self.capacity {
            self.start += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len() - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `m` most recent returns, oldest first.
    pub fn recent(&self, m: usize) -> &[f64] {
        let all = &self.buffer[self.start..];
        &all[all.len().saturating_sub(m)..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlsAgent {
    pub wealth: f64,
    pub shares: f64,
    pub gamma: f64,
    pub group: usize,
}

#[derive(Debug, Clone, Default)]
struct PendingStep {
    prev_price: f64,
    dividend: f64,
    noise: Vec<f64>,
    /// Pre-noise optimum per group when it does not depend on the candidate.
    gamma_star: Option<Vec<f64>>,
}

/// Decisions of the most recently committed step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionRecord {
    pub gamma_star: Vec<f64>,
    pub boundary: u64,
    pub total: u64,
}

#[derive(Debug, Clone)]
pub struct LlsPopulation {
    params: LlsParams,
    delta_t: f64,
    agents: Vec<LlsAgent>,
    memory: Vec<usize>,
    group_sizes: Vec<usize>,
    history: ReturnHistory,
    dividend: f64,
    total_shares: f64,
    pending: Option<PendingStep>,
    window_scratch: Vec<f64>,
    last: DecisionRecord,
    boundary_decisions: u64,
    total_decisions: u64,
}

impl LlsPopulation {
    /// Agents start from the table values; the shared history holds
    /// `max m̄` draws of `N(μ_h, σ_h)`.
    pub fn new<R: RandomSource>(params: LlsParams, delta_t: f64, rng: &mut R) -> Result<Self> {
        params.validate(delta_t)?;
        let memory: Vec<usize> =
            params.groups.iter().map(|g| effective_memory(g.memory, delta_t, params.scaling)).collect();
        let capacity = memory.iter().copied().max().unwrap_or(1);
        let history = ReturnHistory::seeded(capacity, params.mu_h, params.sigma_h, rng)?;
        let mut agents = Vec::new();
        for (group, g) in params.groups.iter().enumerate() {
            agents.extend((0..g.count).map(|_| LlsAgent {
                wealth: params.initial_wealth,
                shares: params.initial_shares,
                gamma: params.initial_gamma,
                group,
            }));
        }
        let total_shares = agents.iter().map(|a| a.shares).sum();
        let group_sizes = params.groups.iter().map(|g| g.count).collect();
        Ok(Self {
            dividend: params.initial_dividend,
            last: DecisionRecord { gamma_star: vec![f64::NAN; params.groups.len()], ..Default::default() },
            params,
            delta_t,
            agents,
            memory,
            group_sizes,
            history,
            total_shares,
            pending: None,
            window_scratch: Vec::new(),
            boundary_decisions: 0,
            total_decisions: 0,
        })
    }

    /// Population with explicit agents and history, for hand-checked steps.
    pub fn from_parts(params: LlsParams, delta_t: f64, agents: Vec<LlsAgent>, history: ReturnHistory) -> Result<Self> {
        params.validate(delta_t)?;
        let memory: Vec<usize> =
            params.groups.iter().map(|g| effective_memory(g.memory, delta_t, params.scaling)).collect();
        if agents.iter().any(|a| a.group >= memory.len()) {
            return Err(Error::InvalidParameter("LLS agent refers to an unknown group".into()));
        }
        let total_shares = agents.iter().map(|a| a.shares).sum();
        let mut group_sizes = vec![0; memory.len()];
        for a in &agents {
            group_sizes[a.group] += 1;
        }
        Ok(Self {
            dividend: params.initial_dividend,
            last: DecisionRecord { gamma_star: vec![f64::NAN; memory.len()], ..Default::default() },
            params,
            delta_t,
            agents,
            memory,
            group_sizes,
            history,
            total_shares,
            pending: None,
            window_scratch: Vec::new(),
            boundary_decisions: 0,
            total_decisions: 0,
        })
    }

    pub fn params(&self) -> &LlsParams {
        &self.params
    }

    pub fn agents(&self) -> &[LlsAgent] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.memory.len()
    }

    pub fn effective_memories(&self) -> &[usize] {
        &self.memory
    }

    pub fn history(&self) -> &ReturnHistory {
        &self.history
    }

    pub fn dividend(&self) -> f64 {
        self.dividend
    }

    pub fn total_shares(&self) -> f64 {
        self.total_shares
    }

    pub fn last_decisions(&self) -> &DecisionRecord {
        &self.last
    }

    /// (boundary, total) pre-noise decisions over all committed steps.
    pub fn decision_counts(&self) -> (u64, u64) {
        (self.boundary_decisions, self.total_decisions)
    }

    pub fn group_wealth(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.memory.len()];
        for a in &self.agents {
            sums[a.group] += a.wealth;
        }
        sums
    }

    /// `Σ (γ_i w_i / S − n_i)`: unmet share demand at `price`.
    pub fn share_demand_excess(&self, price: f64) -> f64 {
        self.agents.iter().map(|a| a.gamma * a.wealth / price - a.shares).sum()
    }

    /// Draws the next dividend, then the noise of every agent in index order.
    pub fn prepare_step<R: RandomSource>(&mut self, prev_price: f64, rng: &mut R) -> Result<()> {
        let p = &self.params;
        let dividend = dividend_step(self.dividend, p.z1, p.z2, self.delta_t, rng)?;
        let mut noise = Vec::with_capacity(self.agents.len());
        for _ in 0..self.agents.len() {
            noise.push(investment_noise(p.sigma_gamma, p.noise_truncation, rng)?);
        }
        let gamma_star = if p.include_candidate_return {
            None
        } else {
            let mut g = Vec::with_capacity(self.memory.len());
            for &m in &self.memory {
                g.push(optimal_investment(self.history.recent(m), p.interest_rate, self.delta_t)?);
            }
            Some(g)
        };
        self.pending = Some(PendingStep { prev_price, dividend, noise, gamma_star });
        Ok(())
    }

    fn pending(&self) -> &PendingStep {
        self.pending.as_ref().expect("prepare_step must precede clearing")
    }

    fn candidate_return(&self, price: f64) -> f64 {
        let pend = self.pending();
        stock_return_x(price, pend.prev_price, pend.dividend, self.delta_t, self.params.denominator)
    }

    fn gamma_stars_at(&mut self, x: f64) -> Result<Vec<f64>> {
        if let Some(g) = &self.pending().gamma_star {
            return Ok(g.clone());
        }
        let mut out = Vec::with_capacity(self.memory.len());
        for &m in &self.memory {
            self.window_scratch.clear();
            self.window_scratch.extend_from_slice(self.history.recent(m.saturating_sub(1)));
            self.window_scratch.push(x);
            out.push(optimal_investment(&self.window_scratch, self.params.interest_rate, self.delta_t)?);
        }
        Ok(out)
    }

    /// Lowest price worth bracketing: every hypothetical wealth is positive
    /// above it and, when the optimum does not depend on the candidate, the
    /// mismatch decreases above it.
    pub fn bracket_floor(&self) -> f64 {
        let pend = self.pending();
        let (dt, r, sp) = (self.delta_t, self.params.interest_rate, pend.prev_price);
        let k = sp - dt * pend.dividend;
        let mut floor: f64 = 0.0;
        for a in &self.agents {
            let base = 1.0 + dt * (1.0 - a.gamma) * r;
            let threshold = match self.params.denominator {
                ReturnDenominator::Current => a.gamma * k / (base + a.gamma),
                ReturnDenominator::Previous if a.gamma > 0.0 => k - base * sp / a.gamma,
                ReturnDenominator::Previous => 0.0,
            };
            floor = floor.max(threshold);
        }
        if let (Some(gs), ReturnDenominator::Current) = (&pend.gamma_star, self.params.denominator) {
            let (mut p, mut q) = (0.0, 0.0);
            for (a, eps) in self.agents.iter().zip(&pend.noise) {
                let gn = (gs[a.group] + eps).clamp(GAMMA_MIN, GAMMA_MAX);
                p += gn * a.wealth * (1.0 + dt * (1.0 - a.gamma) * r);
                q += gn * a.wealth * a.gamma;
            }
            if p + q > 0.0 {
                floor = floor.max(2.0 * q * k / (p + q));
            }
        }
        floor
    }

    /// `Σ γ_k(S) w_k(S) / S − n` at a candidate price.
    pub fn clearance_mismatch(&mut self, price: f64) -> Result<f64> {
        if !(price > 0.0) {
            return Err(Error::NonPositivePrice(price));
        }
        let x = self.candidate_return(price);
        let gs = self.gamma_stars_at(x)?;
        let (dt, r) = (self.delta_t, self.params.interest_rate);
        let pend = self.pending();
        let mut demand = 0.0;
        for (a, eps) in self.agents.iter().zip(&pend.noise) {
            let w = a.wealth * (1.0 + dt * ((1.0 - a.gamma) * r + a.gamma * x));
            if !(w > 0.0) {
                return Err(Error::NonPositiveWealth(w));
            }
            let gn = (gs[a.group] + eps).clamp(GAMMA_MIN, GAMMA_MAX);
            demand += gn * w;
        }
        Ok(demand / price - self.total_shares)
    }

    /// Writes wealth, investment fractions, holdings and history at the
    /// accepted price.
    pub fn commit(&mut self, price: f64) -> Result<()> {
        let x = self.candidate_return(price);
        let gs = self.gamma_stars_at(x)?;
        let pend = self.pending.take().expect("prepare_step must precede commit");
        let r = self.params.interest_rate;
        for (a, eps) in self.agents.iter_mut().zip(&pend.noise) {
            a.wealth = lls_wealth_update(a.wealth, a.gamma, r, x, self.delta_t)?;
            a.gamma = (gs[a.group] + eps).clamp(GAMMA_MIN, GAMMA_MAX);
            a.shares = a.gamma * a.wealth / price;
        }
        self.history.push(x);
        self.dividend = pend.dividend;
        let boundary: u64 =
            gs.iter().zip(&self.group_sizes).filter(|(g, _)| is_boundary_decision(**g)).map(|(_, &n)| n as u64).sum();
        let total = self.agents.len() as u64;
        self.boundary_decisions += boundary;
        self.total_decisions += total;
        self.last = DecisionRecord { gamma_star: gs, boundary, total };
        Ok(())
    }
}
