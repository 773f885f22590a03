//! Excess-demand aggregation and price formation.
//!
//! Irrational markets advance the price explicitly from the excess demand
//! ([`PriceRule::CrossExponential`], [`PriceRule::GeneralSde`],
//! [`PriceRule::HarrasLog`]); a rational market defines the price implicitly
//! as the root of the aggregate excess demand and solves for it by bisection
//! ([`solve_rational_price`]).

use crate::error::{finite, BisectionError, Error, Result};

/// Relative interval width below which bisection stops on a flat mismatch.
pub const BISECTION_WIDTH_FLOOR: f64 = 1e-12;

/// Current and previous aggregate excess demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessDemandView {
    pub current: f64,
    pub previous: f64,
}

impl ExcessDemandView {
    pub fn new(current: f64, previous: f64) -> Self {
        Self { current, previous }
    }

    pub fn delta(&self) -> f64 {
        self.current - self.previous
    }
}

/// Arithmetic mean of microscopic excess demands.
pub fn aggregate_excess_demand(micro: &[f64]) -> Result<f64> {
    if micro.is_empty() {
        return Err(Error::NoAgents);
    }
    Ok(micro.iter().sum::<f64>() / micro.len() as f64)
}

/// `(1/(λN)) Σ σ_i v_i`.
pub fn harras_excess_demand(actions: &[i8], volumes: &[f64], lambda: f64) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::NoAgents);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("market depth λ must be positive, got {lambda}")));
    }
    assert_eq!(actions.len(), volumes.len());
    let signed: f64 = actions.iter().zip(volumes).map(|(&s, &v)| f64::from(s) * v).sum();
    Ok(signed / (lambda * actions.len() as f64))
}

/// `S · exp((1 + θ|ED|)·√Δt·η + κ·ΔED)`.
pub fn price_cross_exponential(
    price: f64,
    ed: ExcessDemandView,
    theta: f64,
    kappa: f64,
    delta_t: f64,
    eta: f64,
) -> Result<f64> {
    let exponent = (1.0 + theta * ed.current.abs()) * delta_t.sqrt() * eta + kappa * delta_t * (ed.delta() / delta_t);
    positive_price(price * exponent.exp())
}

/// Drift coefficient of the SDE price rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    /// `F¹ = κ · S · dED/dt`, with the derivative taken as `ΔED/Δt`. The
    /// market depth `κ` defaults to 1; the exponential rule's value makes the
    /// Euler step its first-order expansion.
    EdDerivative { market_depth: f64 },
    /// `F² = S · ED`.
    EdLevel,
}

impl Drift {
    pub fn evaluate(self, price: f64, ed: ExcessDemandView, delta_t: f64) -> f64 {
        match self {
            Drift::EdDerivative { market_depth } => market_depth * price * ed.delta() / delta_t,
            Drift::EdLevel => price * ed.current,
        }
    }
}

/// Diffusion coefficient of the SDE price rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusion {
    /// `G = S (1 + θ|ED|)`.
    CrossHeteroskedastic { theta: f64 },
    /// `G ≡ 0`: a deterministic explicit Euler step.
    Zero,
}

impl Diffusion {
    pub fn evaluate(self, price: f64, ed: ExcessDemandView) -> f64 {
        match self {
            Diffusion::CrossHeteroskedastic { theta } => evaluate_diffusion_cross(price, ed.current, theta),
            Diffusion::Zero => 0.0,
        }
    }
}

pub fn evaluate_diffusion_cross(price: f64, ed: f64, theta: f64) -> f64 {
    price * (1.0 + theta * ed.abs())
}

/// One Euler–Maruyama step `S + Δt·F + √Δt·G·η`.
pub fn price_general_sde(price: f64, drift: f64, diffusion: f64, delta_t: f64, eta: f64) -> Result<f64> {
    let next = price + delta_t * drift + delta_t.sqrt() * diffusion * eta;
    positive_price(finite("price", next)?)
}

/// `S · exp(ED)`, the log-price rule `log S' = log S + ED`.
pub fn price_harras_log(price: f64, ed: f64) -> Result<f64> {
    positive_price(price * ed.exp())
}

fn positive_price(price: f64) -> Result<f64> {
    let price = finite("price", price)?;
    if price > 0.0 {
        Ok(price)
    } else {
        Err(Error::NonPositivePrice(price))
    }
}

/// Settings of the bisection used by rational markets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionSettings {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Bounds are multiples of the current price rather than absolute prices.
    pub relative_bounds: bool,
}

impl BisectionSettings {
    pub fn bracket(&self, current_price: f64) -> (f64, f64) {
        if self.relative_bounds {
            (self.lower_bound * current_price, self.upper_bound * current_price)
        } else {
            (self.lower_bound, self.upper_bound)
        }
    }
}

/// Finds `S` in `[lower, upper]` with `|mismatch(S)| < epsilon` by bisection.
///
/// Terminates early when the bracket shrinks below
/// [`BISECTION_WIDTH_FLOOR`] relative to its midpoint. Errors from the
/// mismatch callback abort the search unchanged.
pub fn solve_rational_price<F>(
    mut mismatch: F,
    lower: f64,
    upper: f64,
    epsilon: f64,
    max_iterations: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lower < upper) || !(lower > 0.0) || !upper.is_finite() {
        return Err(BisectionError::InvalidBracket { lower, upper }.into());
    }
    let eval = |f: &mut F, at: f64| -> Result<f64> {
        let value = f(at)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(BisectionError::NonFinite { at, value }.into())
        }
    };
    let (mut lo, mut hi) = (lower, upper);
    let f_lo = eval(&mut mismatch, lo)?;
    if f_lo.abs() < epsilon {
        return Ok(lo);
    }
    let f_hi = eval(&mut mismatch, hi)?;
    if f_hi.abs() < epsilon {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(BisectionError::NoSignChange { lower, upper, f_lower: f_lo, f_upper: f_hi }.into());
    }
    let lo_negative = f_lo < 0.0;
    let mut residual = f_lo.abs().min(f_hi.abs());
    for _ in 0..max_iterations {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(&mut mismatch, mid)?;
        if f_mid.abs() < epsilon || (hi - lo) <= BISECTION_WIDTH_FLOOR * mid.abs() {
            return Ok(mid);
        }
        residual = f_mid.abs();
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(BisectionError::MaxIterations { iterations: max_iterations, residual }.into())
}

/// First log-offset of the outward scan in [`solve_rational_price_near`].
const SCAN_FIRST_STEP: f64 = 0.00995033085316809; // ln 1.01
const SCAN_GROWTH: f64 = 1.5;

/// Root search for a mismatch that may cross zero more than once.
///
/// Scans outward from `anchor` (clamped into `[lower, upper]`), alternating
/// up and down on a geometrically widening log grid, and bisects the nearest
/// *downward* crossing — positive mismatch below, negative above, the stable
/// clearing price of a demand curve. When no such crossing exists the
/// nearest sign change of either orientation is used.
pub fn solve_rational_price_near<F>(
    mut mismatch: F,
    lower: f64,
    upper: f64,
    anchor: f64,
    epsilon: f64,
    max_iterations: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lower < upper) || !(lower > 0.0) || !upper.is_finite() {
        return Err(BisectionError::InvalidBracket { lower, upper }.into());
    }
    let mut eval = |at: f64| -> Result<f64> {
        let value = mismatch(at)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(BisectionError::NonFinite { at, value }.into())
        }
    };
    let anchor = if anchor.is_finite() && anchor > 0.0 { anchor.clamp(lower, upper) } else { lower };
    let f_anchor = eval(anchor)?;
    if f_anchor.abs() < epsilon {
        return Ok(anchor);
    }
    // (point, value) of the outermost evaluation on each side
    let (mut up, mut down) = ((anchor, f_anchor), (anchor, f_anchor));
    let mut fallback: Option<(f64, f64)> = None;
    let mut offset = SCAN_FIRST_STEP;
    while up.0 < upper || down.0 > lower {
        for upward in [true, false] {
            let (prev, bound) = if upward { (up, upper) } else { (down, lower) };
            if prev.0 == bound {
                continue;
            }
            let at = if upward { (anchor * offset.exp()).min(upper) } else { (anchor * (-offset).exp()).max(lower) };
            let f = eval(at)?;
            if f.abs() < epsilon {
                return Ok(at);
            }
            let (lo, hi) = if upward { ((prev.0, prev.1), (at, f)) } else { ((at, f), (prev.0, prev.1)) };
            if lo.1 > 0.0 && hi.1 < 0.0 {
                return solve_rational_price(&mut eval, lo.0, hi.0, epsilon, max_iterations);
            }
            if fallback.is_none() && lo.1.signum() != hi.1.signum() {
                fallback = Some((lo.0, hi.0));
            }
            if upward {
                up = (at, f);
            } else {
                down = (at, f);
            }
        }
        offset *= SCAN_GROWTH;
    }
    match fallback {
        Some((lo, hi)) => solve_rational_price(&mut eval, lo, hi, epsilon, max_iterations),
        None => Err(BisectionError::NoSignChange { lower, upper, f_lower: down.1, f_upper: up.1 }.into()),
    }
}

/// How aggregate excess demand is formed from the agent populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExcessDemandCalculator {
    /// Mean of microscopic excess demands.
    Mean,
    /// `Σ σ_i v_i / (λN)`.
    Harras { lambda: f64 },
}

/// Price-formation mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriceRule {
    CrossExponential { theta: f64, kappa: f64 },
    GeneralSde { drift: Drift, diffusion: Diffusion },
    HarrasLog,
    Bisection(BisectionSettings),
}

impl PriceRule {
    pub fn is_rational(&self) -> bool {
        matches!(self, PriceRule::Bisection(_))
    }

    /// Whether the rule consumes one standard normal per step.
    pub fn uses_noise(&self) -> bool {
        match self {
            PriceRule::CrossExponential { .. } => true,
            PriceRule::GeneralSde { diffusion, .. } => *diffusion != Diffusion::Zero,
            PriceRule::HarrasLog | PriceRule::Bisection(_) => false,
        }
    }

    /// Explicit update. Panics for the rational rule, which needs the agents.
    pub fn explicit_price(&self, price: f64, ed: ExcessDemandView, delta_t: f64, eta: f64) -> Result<f64> {
        match *self {
            PriceRule::CrossExponential { theta, kappa } => {
                price_cross_exponential(price, ed, theta, kappa, delta_t, eta)
            }
            PriceRule::GeneralSde { drift, diffusion } => price_general_sde(
                price,
                drift.evaluate(price, ed, delta_t),
                diffusion.evaluate(price, ed),
                delta_t,
                eta,
            ),
            PriceRule::HarrasLog => price_harras_log(price, ed.current),
            PriceRule::Bisection(_) => unreachable!("rational markets are solved with the agents"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn mean_excess_demand() {
        assert_eq!(aggregate_excess_demand(&[1.0, 1.0, -1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(aggregate_excess_demand(&[1.0, 1.0, 1.0, -1.0]).unwrap(), 0.5);
        assert_eq!(aggregate_excess_demand(&[1.0; 7]).unwrap(), 1.0);
        assert!(matches!(aggregate_excess_demand(&[]), Err(Error::NoAgents)));
    }

    #[test]
    fn harras_ed() {
        assert_eq!(harras_excess_demand(&[0, 0, 0], &[0.1, 0.2, 0.3], 0.25).unwrap(), 0.0);
        assert_eq!(harras_excess_demand(&[1, -1], &[0.02, 0.02], 0.25).unwrap(), 0.0);
        assert_close!(harras_excess_demand(&[1], &[0.02], 0.25).unwrap(), 0.08, 1e-15);
        assert!(harras_excess_demand(&[], &[], 0.25).is_err());
    }

    #[test]
    fn cross_exponential_rule() {
        let flat = ExcessDemandView::new(0.3, 0.3);
        assert_eq!(price_cross_exponential(1.7, flat, 2.0, 0.2, 4e-5, 0.0).unwrap(), 1.7);

        let jump = ExcessDemandView::new(0.2, 0.0);
        assert_close!(price_cross_exponential(1.0, jump, 0.0, 0.2, 4e-5, 0.0).unwrap(), 0.04f64.exp(), 1e-14);
        assert_close!(price_cross_exponential(1.0, jump, 0.0, 0.2, 4e-5, 0.0).unwrap(), 1.040811, 1e-6);

        let level = ExcessDemandView::new(0.5, 0.5);
        let s = price_cross_exponential(1.0, level, 2.0, 0.2, 4e-5, 1.0).unwrap();
        assert_close!(s, (2.0 * 4e-5f64.sqrt()).exp(), 1e-14);
        assert_close!(s, 1.012729, 1e-6);
    }

    #[test]
    fn general_sde_rule() {
        assert_eq!(price_general_sde(1.3, 0.0, 0.0, 0.01, 1.7).unwrap(), 1.3);

        let dt = 4e-5;
        let ed = ExcessDemandView::new(0.2, 0.0);
        let f1 = Drift::EdDerivative { market_depth: 1.0 }.evaluate(1.0, ed, dt);
        assert_close!(price_general_sde(1.0, f1, 0.0, dt, 0.0).unwrap(), 1.2, 1e-12);
        let damped = Drift::EdDerivative { market_depth: 0.2 }.evaluate(1.0, ed, dt);
        assert_close!(price_general_sde(1.0, damped, 0.0, dt, 0.0).unwrap(), 1.04, 1e-12);

        let ed = ExcessDemandView::new(0.1, 0.1);
        let f2 = Drift::EdLevel.evaluate(2.0, ed, 0.01);
        assert_close!(price_general_sde(2.0, f2, 0.0, 0.01, 0.0).unwrap(), 2.002, 1e-15);

        assert!(matches!(price_general_sde(1.0, -200.0, 0.0, 0.01, 0.0), Err(Error::NonPositivePrice(_))));
    }

    #[test]
    fn cross_diffusion() {
        assert_eq!(evaluate_diffusion_cross(3.0, 0.7, 0.0), 3.0);
        assert_eq!(evaluate_diffusion_cross(1.0, -0.5, 2.0), 2.0);
        assert_eq!(evaluate_diffusion_cross(4.0, 0.0, 2.0), 4.0);
    }

    #[test]
    fn harras_log_rule() {
        assert_eq!(price_harras_log(1.5, 0.0).unwrap(), 1.5);
        assert_close!(price_harras_log(1.0, 0.1).unwrap(), 1.105171, 1e-6);
        assert_close!(price_harras_log(2.0, -0.1).unwrap(), 1.809675, 1e-6);
    }

    #[test]
    fn bisection_linear_root() {
        let root = solve_rational_price(|s| Ok(s - 2.0), 1e-9, 4.0, 1e-6, 200).unwrap();
        assert_close!(root, 2.0, 1e-6);
    }

    #[test]
    fn bisection_clearance_closed_form() {
        // single agent: γ w / S − n = 0 at S = γ w / n
        let (gamma, wealth, shares) = (0.4, 1000.0, 100.0);
        let root = solve_rational_price(|s| Ok(gamma * wealth / s - shares), 0.01, 200.0, 1e-9, 500).unwrap();
        assert_close!(root, 4.0, 1e-9);
    }

    #[test]
    fn bisection_requires_sign_change() {
        let err = solve_rational_price(|s| Ok(s + 1.0), 0.01, 200.0, 0.1, 10_000).unwrap_err();
        assert!(matches!(err, Error::Bisection(BisectionError::NoSignChange { .. })));
        let err = solve_rational_price(Ok, 2.0, 1.0, 0.1, 10).unwrap_err();
        assert!(matches!(err, Error::Bisection(BisectionError::InvalidBracket { .. })));
    }

    #[test]
    fn bisection_iteration_limit() {
        let err = solve_rational_price(|s| Ok(s - 2.0), 0.5, 4.0, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::Bisection(BisectionError::MaxIterations { iterations: 3, .. })));
    }

    #[test]
    fn bisection_stops_on_flat_plateau() {
        // step function: never below epsilon, the width floor ends the search
        let root = solve_rational_price(|s| Ok(if s < 3.0 { -1.0 } else { 1.0 }), 1.0, 5.0, 1e-3, 1000).unwrap();
        assert_close!(root, 3.0, 1e-9);
    }

    #[test]
    fn bisection_propagates_callback_errors() {
        let err = solve_rational_price(|_| Err(Error::UtilityDomain(-1.0)), 1.0, 2.0, 0.1, 10).unwrap_err();
        assert!(matches!(err, Error::UtilityDomain(_)));
    }

    #[test]
    fn near_search_prefers_stable_crossing() {
        // crash root 0.5 and boom root 8 are downward crossings, 2 is upward
        let f = |s: f64| Ok(-(s - 0.5) * (s - 2.0) * (s - 8.0));
        let root = solve_rational_price_near(f, 0.01, 200.0, 1.0, 1e-9, 500).unwrap();
        assert_close!(root, 0.5, 1e-6);
        let root = solve_rational_price_near(f, 0.01, 200.0, 5.0, 1e-9, 500).unwrap();
        assert_close!(root, 8.0, 1e-6);
    }

    #[test]
    fn near_search_matches_bisection_on_monotone_demand() {
        let (gamma, wealth, shares) = (0.4, 1000.0, 100.0);
        let f = |s: f64| Ok(gamma * wealth / s - shares);
        let a = solve_rational_price_near(f, 0.01, 200.0, 3.0, 1e-9, 500).unwrap();
        assert_close!(a, 4.0, 1e-9);
        // anchor outside the bracket is clamped
        let b = solve_rational_price_near(f, 0.01, 200.0, 1e6, 1e-9, 500).unwrap();
        assert_close!(b, 4.0, 1e-9);
    }

    #[test]
    fn near_search_falls_back_and_reports_failure() {
        let root = solve_rational_price_near(|s| Ok(s - 2.0), 0.5, 4.0, 3.0, 1e-9, 500).unwrap();
        assert_close!(root, 2.0, 1e-9);
        let err = solve_rational_price_near(|s| Ok(s + 1.0), 0.01, 200.0, 1.0, 0.1, 100).unwrap_err();
        assert!(matches!(err, Error::Bisection(BisectionError::NoSignChange { .. })));
    }
}
