//! Opinion-driven traders on a periodic square lattice.
//!
//! An agent's opinion mixes the expected actions of its four neighbours, a
//! public news stream and private noise. It buys or sells a fixed fraction of
//! its cash or stock once the opinion crosses its threshold, and the trust in
//! news and neighbours adapts to how well they predicted the market.

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Lower bound on `σ_ED` used when dividing by it.
pub const SIGMA_ED_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpinionVariant {
    /// Neighbour term `Σ k_ij E[σ_j]` as originally written.
    PaperEq,
    /// Neighbour term averaged over the four neighbours.
    #[default]
    NormalizedQuarter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    side: usize,
    neighbors: Vec<[u32; 4]>,
}

impl Lattice {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Up, down, left, right.
    pub fn neighbors(&self, i: usize) -> [usize; 4] {
        self.neighbors[i].map(|j| j as usize)
    }
}

/// Von Neumann neighbourhood on an `L × L` torus, `L² = n`.
pub fn build_lattice(n: usize) -> Result<Lattice> {
    let side = (n as f64).sqrt().round() as usize;
    if n == 0 || side * side != n {
        return Err(Error::InvalidParameter(format!("{n} agents do not fill a square lattice")));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidParameter(format!("lattice of {n} agents is too large")));
    }
    let neighbors = (0..n)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            let at = |r: usize, c: usize| (r * side + c) as u32;
            [
                at((row + side - 1) % side, col),
                at((row + 1) % side, col),
                at(row, (col + side - 1) % side),
                at(row, (col + 1) % side),
            ]
        })
        .collect();
    Ok(Lattice { side, neighbors })
}

/// `c1·[¼]Σ k_ij E_j + c2·u·n + c3·ε`.
#[allow(clippy::too_many_arguments)]
pub fn compute_opinion(
    weights: [f64; 3],
    trust: &[f64; 4],
    expectations: &[i8; 4],
    news_weight: f64,
    news: f64,
    private: f64,
    variant: OpinionVariant,
) -> f64 {
    let mut social: f64 = trust.iter().zip(expectations).map(|(k, &e)| k * f64::from(e)).sum();
    if variant == OpinionVariant::NormalizedQuarter {
        social *= 0.25;
    }
    weights[0] * social + weights[1] * news_weight * news + weights[2] * private
}

/// Strict thresholds: buy above `ψ̄`, sell below `−ψ̄`, otherwise wait.
pub fn decide_action(opinion: f64, threshold: f64) -> i8 {
    if opinion > threshold {
        1
    } else if opinion < -threshold {
        -1
    } else {
        0
    }
}

/// Shares traded: `g·w/S` when buying, `g·q` when selling.
pub fn trading_volume(action: i8, g: f64, cash: f64, shares: f64, price: f64) -> f64 {
    match action {
        1 => g * cash / price,
        -1 => g * shares,
        _ => 0.0,
    }
}

/// `(w − σvS, q + σv)`.
pub fn settle_trade(cash: f64, shares: f64, action: i8, volume: f64, price: f64) -> (f64, f64) {
    let s = f64::from(action);
    (cash - s * volume * price, shares + s * volume)
}

/// Exponentially smoothed statistics of the excess demand plus the news weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketFeedback {
    pub alpha: f64,
    pub news_weight: f64,
    pub variance: f64,
    pub mean: f64,
}

impl MarketFeedback {
    /// Folds the previous excess demand into mean and variance (mean first).
    pub fn update_moments(&mut self, ed_prev: f64) {
        let a = self.alpha;
        self.mean = a * self.mean + (1.0 - a) * ed_prev;
        let dev = ed_prev - self.mean;
        self.variance = a * self.variance + (1.0 - a) * dev * dev;
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt().max(SIGMA_ED_FLOOR)
    }
}

/// `α·weight + (1−α)·signal·ED/σ_ED`, the rule shared by `u` and `k_ij`.
#[inline]
pub fn adapt_weight(weight: f64, alpha: f64, signal: f64, ed: f64, sigma_ed: f64) -> f64 {
    alpha * weight + (1.0 - alpha) * signal * ed / sigma_ed.max(SIGMA_ED_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrasParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub omega: f64,
    pub g: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub initial_cash: f64,
    pub initial_shares: f64,
    pub initial_variance: f64,
    pub opinion: OpinionVariant,
}

impl HarrasParams {
    pub fn basic() -> Self {
        Self {
            c1: 0.0,
            c2: 1.0,
            c3: 1.0,
            omega: 2.0,
            g: 0.02,
            alpha: 0.95,
            lambda: 0.25,
            initial_cash: 1.0,
            initial_shares: 1.0,
            initial_variance: 0.1,
            opinion: OpinionVariant::NormalizedQuarter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c3 >= 0.0 && self.omega >= 0.0) {
            return bad("Harras weight bounds C1..C3 and Ω must be non-negative");
        }
        if !(self.g > 0.0 && self.g < 1.0) {
            return bad("Harras trading fraction g must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("Harras smoothing α must lie in (0, 1]");
        }
        if !(self.lambda > 0.0) {
            return bad("Harras market depth λ must be positive");
        }
        if !(self.initial_variance >= 0.0) || !(self.initial_shares >= 0.0) {
            return bad("Harras initial variance and shares must be non-negative");
        }
        Ok(())
    }
}

/// Uniform draw on `[0, hi)`, degenerate (no draw) when `hi == 0`.
fn uniform_upto<R: RandomSource>(rng: &mut R, hi: f64) -> Result<f64> {
    if hi == 0.0 {
        Ok(0.0)
    } else {
        Ok(rng.next_uniform(0.0, hi)?)
    }
}

#[derive(Debug, Clone)]
pub struct HarrasPopulation {
    params: HarrasParams,
    lattice: Lattice,
    cash: Vec<f64>,
    shares: Vec<f64>,
    action: Vec<i8>,
    volume: Vec<f64>,
    threshold: Vec<f64>,
    weights: Vec<[f64; 3]>,
    trust: Vec<[f64; 4]>,
    expectations: Vec<[i8; 4]>,
    order: Vec<usize>,
    feedback: MarketFeedback,
    news_prev: f64,
    ed_prev: f64,
    steps: usize,
}

impl HarrasPopulation {
    /// Draws, per agent in index order: `c1, c2, c3` (skipping any with a zero
    /// bound), `ψ̄`, four trust weights `k_ij ~ U(0,1)` and four expectations
    /// `~ U{−1,0,1}`.
    pub fn new<R: RandomSource>(n: usize, params: HarrasParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let lattice = build_lattice(n)?;
        let mut weights = Vec::with_capacity(n);
        let mut threshold = Vec::with_capacity(n);
        let mut trust = Vec::with_capacity(n);
        let mut expectations = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push([uniform_upto(rng, params.c1)?, uniform_upto(rng, params.c2)?, uniform_upto(rng, params.c3)?]);
            threshold.push(uniform_upto(rng, params.omega)?);
            let mut k = [0.0; 4];
            for kj in &mut k {
                *kj = rng.next_uniform01();
            }
            trust.push(k);
            let mut e = [0i8; 4];
            for ej in &mut e {
                *ej = rng.next_discrete_uniform(&[-1i8, 0, 1])?;
            }
            expectations.push(e);
        }
        Ok(Self {
            lattice,
            cash: vec![params.initial_cash; n],
            shares: vec![params.initial_shares; n],
            action: vec![0; n],
            volume: vec![0.0; n],
            threshold,
            weights,
            trust,
            expectations,
            order: (0..n).collect(),
            feedback: MarketFeedback {
                alpha: params.alpha,
                news_weight: 0.0,
                variance: params.initial_variance,
                mean: 0.0,
            },
            news_prev: 0.0,
            ed_prev: 0.0,
            steps: 0,
            params,
        })
    }

    pub fn params(&self) -> &HarrasParams {
        &self.params
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.cash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cash.is_empty()
    }

    pub fn cash(&self) -> &[f64] {
        &self.cash
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn actions(&self) -> &[i8] {
        &self.action
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    pub fn trust(&self) -> &[[f64; 4]] {
        &self.trust
    }

    pub fn expectations(&self) -> &[[i8; 4]] {
        &self.expectations
    }

    pub fn feedback(&self) -> &MarketFeedback {
        &self.feedback
    }

    /// Update order of the most recent step.
    pub fn last_order(&self) -> &[usize] {
        &self.order
    }

    /// `Σ σ_i v_i`.
    pub fn signed_volume(&self) -> f64 {
        self.action.iter().zip(&self.volume).map(|(&s, &v)| f64::from(s) * v).sum()
    }

    /// `Σ σ_i v_i / (λN)`.
    pub fn excess_demand(&self) -> f64 {
        self.signed_volume() / (self.params.lambda * self.len() as f64)
    }

    /// One step at the already-updated price.
    ///
    /// Settles the previous orders at `price`, draws the news, a random update
    /// order and one private signal per agent in that order, forms new orders,
    /// then adapts the feedback weights to the resulting excess demand.
    pub fn update<R: RandomSource>(&mut self, price: f64, rng: &mut R) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            let (w, q) = settle_trade(self.cash[i], self.shares[i], self.action[i], self.volume[i], price);
            self.cash[i] = w;
            self.shares[i] = q;
        }

        let news = rng.next_standard_normal();
        for i in 0..n {
            self.order[i] = i;
        }
        for i in 0..n.saturating_sub(1) {
            let j = i + rng.next_index(n - i);
            self.order.swap(i, j);
        }

        // expectations of this step: last observed neighbour actions, except
        // right after the initial state, which carries drawn expectations
        let previous_expectations = if self.steps == 0 {
            self.expectations.clone()
        } else {
            let observed: Vec<[i8; 4]> =
                (0..n).map(|i| self.lattice.neighbors[i].map(|j| self.action[j as usize])).collect();
            std::mem::replace(&mut self.expectations, observed)
        };

        let p = self.params;
        let u = self.feedback.news_weight;
        for &i in &self.order {
            let eps = rng.next_standard_normal();
            let psi = compute_opinion(self.weights[i], &self.trust[i], &self.expectations[i], u, news, eps, p.opinion);
            let a = decide_action(psi, self.threshold[i]);
            self.action[i] = a;
            self.volume[i] = trading_volume(a, p.g, self.cash[i], self.shares[i], price);
        }

        let ed = self.excess_demand();
        self.feedback.update_moments(self.ed_prev);
        let sigma = self.feedback.sigma();
        self.feedback.news_weight = adapt_weight(u, p.alpha, self.news_prev, ed, sigma);
        for (k, e) in self.trust.iter_mut().zip(&previous_expectations) {
            for j in 0..4 {
                k[j] = adapt_weight(k[j], p.alpha, f64::from(e[j]), ed, sigma);
            }
        }
        if !ed.is_finite() || !self.feedback.news_weight.is_finite() {
            return Err(Error::NonFinite { quantity: "Harras feedback", value: ed });
        }
        self.news_prev = news;
        self.ed_prev = ed;
        self.steps += 1;
        Ok(())
    }
}
