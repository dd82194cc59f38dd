//! Rate functions at a fixed time `t`.
//!
//! All evaluators are total on the extended reals: outside the effective
//! domain they return `f64::INFINITY` rather than an error.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::optim::{bisect_increasing, golden_min, maximize_concave};
use crate::stochastic::{ArrivalModel, ServiceModel};

/// Golden-section width used by the pointwise minimisations.
pub const POINTWISE_TOL: f64 = 1e-10;

/// A rate value together with the point achieving it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateValue {
    pub value: f64,
    /// Minimiser (or maximiser for Legendre transforms); empty for closed forms.
    pub optimizer: Vec<f64>,
    pub iterations: usize,
    /// Optimality residual, 0 for closed forms.
    pub residual: f64,
    /// The value is an upper bound rather than a certified infimum.
    pub upper_bound_only: bool,
}

impl RateValue {
    pub fn closed(value: f64) -> Self {
        Self {
            value,
            optimizer: Vec::new(),
            iterations: 0,
            residual: 0.0,
            upper_bound_only: false,
        }
    }

    pub fn infinite() -> Self {
        Self::closed(f64::INFINITY)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Time points `0 <= t_1 < .. < t_d <= t` inside the horizon `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    t: f64,
    points: Vec<f64>,
}

impl Partition {
    pub fn new(t: f64, points: Vec<f64>) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid("t", format!("horizon must lie in (0, 1], got {t}")));
        }
        if points.is_empty() {
            return Err(Error::InvalidPartition("needs at least one point".into()));
        }
        if points[0] < 0.0 || *points.last().unwrap() > t {
            return Err(Error::InvalidPartition(format!("points must lie in [0, {t}]")));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition("points must be strictly increasing".into()));
        }
        Ok(Self { t, points })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `t_i - t_{i-1}` with `t_0 = 0`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.points
            .iter()
            .map(|&p| {
                let d = p - prev;
                prev = p;
                d
            })
            .collect()
    }
}

/// `a ln(a/b)` with `0 ln 0 = 0`, and `+inf` when `a > 0 >= b`.
pub fn xlogx_over(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

/// `I_t(x) = t ln(t/x) + (1-t) ln((1-t)/(1-x))` as a plain number.
pub fn os_rate(t: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::INFINITY;
    }
    (xlogx_over(t, x) + xlogx_over(1.0 - t, 1.0 - x)).max(0.0)
}

/// Rate function of the `⌊nt⌋`-th uniform order statistic.
pub fn rate_os(t: f64, x: f64) -> RateValue {
    RateValue::closed(os_rate(t, x))
}

/// Rate of the order statistics of a general arrival law, `I_t(F(y))`.
/// Only strictly increasing, absolutely continuous `F` are supported.
pub fn rate_os_general(t: f64, y: f64, arrival: &ArrivalModel) -> Result<RateValue> {
    if !(arrival.is_strictly_increasing() && arrival.is_absolutely_continuous()) {
        return Err(Error::NotStrictlyIncreasing);
    }
    if y < 0.0 {
        return Ok(RateValue::infinite());
    }
    Ok(rate_os(t, arrival.cdf(y)))
}

/// `Λ*_t(x) = t Λ*(x/t)` from the closed-form per-unit rate.
pub fn scaled_rate(model: &ServiceModel, t: f64, x: f64) -> f64 {
    if t <= 0.0 {
        return if x == 0.0 { 0.0 } else { f64::INFINITY };
    }
    t * model.rate_function(x / t)
}

/// Legendre transform `sup_θ {θx - t φ(θ)}` computed numerically by concave
/// maximisation over the CGF domain, tolerance 1e-10 in θ.
pub fn legendre(model: &ServiceModel, t: f64, x: f64) -> RateValue {
    if t <= 0.0 {
        return RateValue::closed(if x == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let (lo, hi) = model.support();
    if x < t * lo || x > t * hi {
        return RateValue::infinite();
    }
    let dom = model.domain();
    let ext = maximize_concave(|th| th * x - t * model.cgf(th), dom.lo, dom.hi, 0.0, POINTWISE_TOL);
    RateValue {
        value: ext.value.max(0.0),
        optimizer: vec![ext.arg],
        iterations: ext.iterations,
        residual: ext.width,
        upper_bound_only: false,
    }
}

/// Feasible range of `x₁` in the offered-load rate: `x₁ ∈ (0, 1)` must be
/// above `y` and `x₂ = x₁ - y` must lie in the scaled support hull.
fn offered_interval(t: f64, y: f64, model: &ServiceModel) -> (f64, f64) {
    let (slo, shi) = model.support();
    let lo = y.max(0.0).max(y + t * slo);
    let hi = (y + t * shi).min(1.0);
    (lo, hi)
}

/// `J_t(y) = inf { I_t(x₁) + Λ*_t(x₂) : x₁ = x₂ + y }`, minimised over
/// `x₁` by golden section. The optimizer is `[x₁, x₂]`.
pub fn rate_offered(t: f64, y: f64, model: &ServiceModel) -> RateValue {
    let (lo, hi) = offered_interval(t, y, model);
    let objective = |x1: f64| os_rate(t, x1) + scaled_rate(model, t, x1 - y);
    if lo >= hi {
        // a degenerate service law pins x₁ to a single point
        let (slo, shi) = model.support();
        if slo == shi {
            let x1 = y + t * slo;
            if x1 > 0.0 && x1 < 1.0 && x1 >= y {
                return RateValue {
                    value: os_rate(t, x1),
                    optimizer: vec![x1, x1 - y],
                    iterations: 0,
                    residual: 0.0,
                    upper_bound_only: false,
                };
            }
        }
        return RateValue::infinite();
    }
    let ext = golden_min(objective, lo, hi, POINTWISE_TOL, 500);
    RateValue {
        value: ext.value.max(0.0),
        optimizer: vec![ext.arg, ext.arg - y],
        iterations: ext.iterations,
        residual: ext.width,
        upper_bound_only: false,
    }
}

/// Stationary point of the offered-load objective for unit-mean exponential
/// service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicReport {
    /// Root in `(max(y,0), 1)`; `None` when that interval is empty.
    pub root: Option<f64>,
    /// Objective value at the root (`+inf` without a root).
    pub value: f64,
    /// First-order condition at the root.
    pub foc_residual: f64,
    /// `x³ - (2+t+y)x² + 2(t+y)x - ty` at the root.
    pub derived_cubic_residual: f64,
    /// `x³ - yx² - 2tx + ty` at the root.
    pub printed_cubic_residual: f64,
}

/// Derivative in `x₁` of the unit-mean exponential offered-load objective.
pub fn offered_foc_exp(t: f64, y: f64, x: f64) -> f64 {
    -t / x + (1.0 - t) / (1.0 - x) - t / (x - y) + 1.0
}

pub fn derived_cubic(t: f64, y: f64, x: f64) -> f64 {
    x.powi(3) - (2.0 + t + y) * x * x + 2.0 * (t + y) * x - t * y
}

pub fn printed_cubic(t: f64, y: f64, x: f64) -> f64 {
    x.powi(3) - y * x * x - 2.0 * t * x + t * y
}

/// Solves the first-order condition by bisection. It is increasing on
/// `(max(y,0), 1)` and runs from `-inf` to `+inf` there, so a root exists
/// whenever the interval is nonempty.
pub fn cubic_stationarity_exp(t: f64, y: f64) -> CubicReport {
    let lo = y.max(0.0);
    if !(lo < 1.0) || !(t > 0.0 && t < 1.0) {
        return CubicReport {
            root: None,
            value: f64::INFINITY,
            foc_residual: f64::NAN,
            derived_cubic_residual: f64::NAN,
            printed_cubic_residual: f64::NAN,
        };
    }
    let g = |x: f64| {
        if x <= lo {
            f64::NEG_INFINITY
        } else if x >= 1.0 {
            f64::INFINITY
        } else {
            offered_foc_exp(t, y, x)
        }
    };
    let x = bisect_increasing(g, lo, 1.0, 400);
    let unit = ServiceModel::exponential(1.0).expect("valid rate");
    CubicReport {
        root: Some(x),
        value: os_rate(t, x) + scaled_rate(&unit, t, x - y),
        foc_residual: offered_foc_exp(t, y, x),
        derived_cubic_residual: derived_cubic(t, y, x),
        printed_cubic_residual: printed_cubic(t, y, x),
    }
}

/// Rate of the increments `(T_(⌊nt_i⌋) - T_(⌊nt_{i-1}⌋))_i`:
/// `Σ (t_i - t_{i-1}) ln((t_i - t_{i-1})/y_i) + (1-t_d) ln((1-t_d)/(1-Σy))`.
///
/// The tail term uses the last partition point; with `t_d = t` this is the
/// usual form, and it keeps the value nonnegative when `t_d < t`.
pub fn rate_increments(partition: &Partition, y: &[f64]) -> Result<RateValue> {
    let incs = partition.increments();
    if y.len() != incs.len() {
        return Err(invalid(
            "y",
            format!("expected {} increments, got {}", incs.len(), y.len()),
        ));
    }
    if y.iter().any(|&v| v < 0.0) {
        return Ok(RateValue::infinite());
    }
    let total: f64 = y.iter().sum();
    if total >= 1.0 {
        return Ok(RateValue::infinite());
    }
    let td = *partition.points().last().unwrap();
    let head: f64 = incs.iter().zip(y).map(|(&d, &v)| xlogx_over(d, v)).sum();
    let tail = xlogx_over(1.0 - td, 1.0 - total);
    Ok(RateValue::closed((head + tail).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::ArrivalKind;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Bernoulli KL written as a sum over outcomes.
    fn bernoulli_kl(p: f64, q: f64) -> f64 {
        [(p, q), (1.0 - p, 1.0 - q)]
            .iter()
            .map(|&(a, b)| if a == 0.0 { 0.0 } else { a * a.ln() - a * b.ln() })
            .sum()
    }

    #[test]
    fn os_rate_examples() {
        assert_eq!(rate_os(0.5, 0.5).value, 0.0);
        assert!(close(rate_os(0.5, 0.3).value, bernoulli_kl(0.5, 0.3), 1e-14));
        assert!(close(rate_os(0.5, 0.3).value, 0.087177, 5e-7));
        assert!(close(rate_os(0.25, 0.5).value, 0.130812, 5e-7));
        assert!(rate_os(0.5, 0.0).value.is_infinite());
        assert!(rate_os(0.5, 1.0).value.is_infinite());
        assert!(close(rate_os(1.0, 0.5).value, 2f64.ln(), 1e-15));
    }

    #[test]
    fn os_rate_is_bernoulli_kl_and_convex() {
        for &t in &[0.1, 0.25, 0.5, 0.9] {
            for i in 1..200 {
                let x = i as f64 / 200.0;
                assert!(close(os_rate(t, x), bernoulli_kl(t, x), 1e-12));
                let x2 = (x + 0.37).min(0.999);
                let mid = os_rate(t, 0.5 * (x + x2));
                assert!(mid <= 0.5 * (os_rate(t, x) + os_rate(t, x2)) + 1e-12);
            }
        }
    }

    #[test]
    fn os_level_sets_are_intervals() {
        let t = 0.3;
        for &c in &[0.01, 0.1, 0.5] {
            let inside: Vec<bool> = (1..1000).map(|i| os_rate(t, i as f64 / 1000.0) <= c).collect();
            let switches = inside.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(switches <= 2, "level {c}: {switches} switches");
        }
    }

    #[test]
    fn general_arrivals_compose_with_cdf() {
        let u = ArrivalModel::uniform();
        assert_eq!(rate_os_general(0.4, 0.7, &u).unwrap(), rate_os(0.4, 0.7));
        let sq = ArrivalModel::new(ArrivalKind::Power { exponent: 2.0 }).unwrap();
        assert!(rate_os_general(0.5, 0.5f64.sqrt(), &sq).unwrap().value < 1e-15);
        let v = rate_os_general(0.5, 0.3, &sq).unwrap().value;
        assert!(close(v, bernoulli_kl(0.5, 0.09), 1e-12));
        let flat = ArrivalModel::new(ArrivalKind::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (0.3, 0.5), (0.6, 0.5), (1.0, 1.0)],
        })
        .unwrap();
        assert_eq!(rate_os_general(0.5, 0.2, &flat), Err(Error::NotStrictlyIncreasing));
    }

    #[test]
    fn legendre_examples() {
        let e = ServiceModel::exponential(1.0).unwrap();
        assert!(legendre(&e, 0.5, 0.5).value < 1e-15);
        assert!(close(legendre(&e, 0.5, 1.0).value, 0.153426, 5e-7));
        assert!(legendre(&e, 0.5, -0.1).value.is_infinite());
        let d = ServiceModel::deterministic(2.0).unwrap();
        assert_eq!(legendre(&d, 0.5, 1.0).value, 0.0);
        assert!(legendre(&d, 0.5, 1.1).value.is_infinite());
        assert!(legendre(&d, 0.5, 0.9).value.is_infinite());
    }

    #[test]
    fn legendre_matches_exponential_closed_form() {
        let e = ServiceModel::exponential(1.0).unwrap();
        for &t in &[0.25, 0.5, 0.75] {
            for i in 0..=59 {
                let x = 0.05 + i as f64 * 0.05;
                let closed = x - t + t * (t / x).ln();
                let num = legendre(&e, t, x).value;
                assert!(close(num, closed, 1e-8), "t={t} x={x}: {num} vs {closed}");
            }
        }
    }

    #[test]
    fn legendre_matches_gamma_and_empirical_closed_forms() {
        let g = ServiceModel::gamma(2.5, 0.4).unwrap();
        let emp = ServiceModel::empirical(&[(0.5, 0.3), (2.0, 0.7)]).unwrap();
        for i in 1..40 {
            let x = 0.05 * i as f64;
            assert!(close(legendre(&g, 0.6, x).value, scaled_rate(&g, 0.6, x), 1e-8));
            let xe = 0.6 * (0.5 + 1.5 * i as f64 / 40.0);
            assert!(close(legendre(&emp, 0.6, xe).value, scaled_rate(&emp, 0.6, xe), 1e-8));
        }
    }

    #[test]
    fn legendre_is_convex() {
        let g = ServiceModel::gamma(0.7, 1.3).unwrap();
        for i in 1..60 {
            let (a, b) = (0.03 * i as f64, 0.03 * i as f64 + 0.5);
            let mid = legendre(&g, 0.5, 0.5 * (a + b)).value;
            assert!(mid <= 0.5 * (legendre(&g, 0.5, a).value + legendre(&g, 0.5, b).value) + 1e-12);
        }
    }

    /// Grid minimisation with step 1e-5 over x₁.
    fn offered_brute(t: f64, y: f64) -> (f64, f64) {
        let lo = y.max(0.0);
        let mut best = (f64::INFINITY, f64::NAN);
        let mut x = lo + 1e-5;
        while x < 1.0 {
            let x2 = x - y;
            let v = t * (t / x).ln() + (1.0 - t) * ((1.0 - t) / (1.0 - x)).ln() + (x2 - t + t * (t / x2).ln());
            if v < best.0 {
                best = (v, x);
            }
            x += 1e-5;
        }
        best
    }

    #[test]
    fn offered_rate_examples() {
        let e = ServiceModel::exponential(1.0).unwrap();
        let r = rate_offered(0.5, 0.0, &e);
        assert!(r.value < 1e-15);
        assert!(close(r.optimizer[0], 0.5, 1e-6));

        let r = rate_offered(0.5, 0.2, &e);
        let (bv, bx) = offered_brute(0.5, 0.2);
        assert!(close(r.value, bv, 1e-8), "{} vs {bv}", r.value);
        assert!(close(r.optimizer[0], bx, 2e-5));
        // the oracle gives 0.030175; the commonly quoted 0.0303 is a loose rounding
        assert!(close(r.value, 0.030175, 1e-6), "{}", r.value);
        assert!(close(r.value, 0.0303, 2e-4));
        assert!(close(r.optimizer[0], 0.578, 5e-4), "{}", r.optimizer[0]);

        assert!(rate_offered(0.5, 1.0, &e).value.is_infinite());
        assert!(rate_offered(0.5, 1.3, &e).value.is_infinite());
    }

    #[test]
    fn offered_rate_vanishes_at_fluid_point() {
        for &mean in &[0.5, 1.0, 1.5] {
            let e = ServiceModel::exponential_mean(mean).unwrap();
            let t = 0.4;
            let r = rate_offered(t, t - t * mean, &e);
            assert!(r.value < 1e-12, "mean {mean}: {}", r.value);
            assert!(close(r.optimizer[0], t, 1e-5));
        }
    }

    #[test]
    fn offered_rate_deterministic_service_reduces_to_os_rate() {
        let d = ServiceModel::deterministic(0.5).unwrap();
        let r = rate_offered(0.5, 0.1, &d);
        assert!(close(r.value, os_rate(0.5, 0.35), 1e-15));
    }

    #[test]
    fn offered_rate_is_convex_in_y() {
        let e = ServiceModel::exponential(1.0).unwrap();
        for i in 0..40 {
            let (a, b) = (-0.6 + 0.03 * i as f64, -0.3 + 0.03 * i as f64);
            let mid = rate_offered(0.5, 0.5 * (a + b), &e).value;
            let avg = 0.5 * (rate_offered(0.5, a, &e).value + rate_offered(0.5, b, &e).value);
            assert!(mid <= avg + 1e-9, "{a} {b}: {mid} > {avg}");
        }
    }

    #[test]
    fn cubic_report_matches_optimizer() {
        let e = ServiceModel::exponential(1.0).unwrap();
        let rep = cubic_stationarity_exp(0.5, 0.0);
        assert!(close(rep.root.unwrap(), 0.5, 1e-12));
        for &(t, y) in &[(0.5, 0.2), (0.3, -0.2), (0.7, 0.4)] {
            let rep = cubic_stationarity_exp(t, y);
            let r = rate_offered(t, y, &e);
            let x = rep.root.unwrap();
            assert!(close(x, r.optimizer[0], 1e-5));
            assert!((rep.value - r.value).abs() <= 1e-8);
            assert!(rep.derived_cubic_residual.abs() < 1e-9);
        }
        let rep = cubic_stationarity_exp(0.5, 0.2);
        assert!(rep.printed_cubic_residual.abs() > 1e-3);
        assert!(cubic_stationarity_exp(0.5, 1.2).root.is_none());
    }

    #[test]
    fn increments_examples() {
        let p = Partition::new(0.5, vec![0.25, 0.5]).unwrap();
        assert_eq!(rate_increments(&p, &[0.25, 0.25]).unwrap().value, 0.0);
        let v = rate_increments(&p, &[0.1, 0.3]).unwrap().value;
        let expected = 0.25 * 2.5f64.ln() + 0.25 * (0.25f64 / 0.3).ln() + 0.5 * (0.5f64 / 0.6).ln();
        assert!(close(v, expected, 1e-14));
        assert!(rate_increments(&p, &[0.5, 0.5]).unwrap().value.is_infinite());
        assert!(rate_increments(&p, &[0.5]).is_err());
        for i in 1..100 {
            let y = i as f64 / 100.0;
            let one = Partition::new(0.3, vec![0.3]).unwrap();
            assert!(close(rate_increments(&one, &[y]).unwrap().value, os_rate(0.3, y), 1e-14));
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(0.5, vec![]).is_err());
        assert!(Partition::new(0.5, vec![0.3, 0.3]).is_err());
        assert!(Partition::new(0.5, vec![0.6]).is_err());
        assert!(Partition::new(0.0, vec![0.0]).is_err());
    }
}
