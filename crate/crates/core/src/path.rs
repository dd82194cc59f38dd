//! Path-space rate functionals on uniform grids.
//!
//! A path on `[0, t]` is stored by its values at `s_k = k t / m`; slopes are
//! backward differences and integrals are left Riemann sums over segments.
//! Piecewise-linear grid paths are absolutely continuous, so singular parts
//! never appear. Arrivals are uniform throughout this module.
//!
//! Offered-load paths `ψ` are linked to the arrival path `φ` and the service
//! path `σ` by `σ = φ + ψ` (service minus arrivals).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optim::{bisect_increasing, golden_min};
use crate::queue::fluid_workload_uniform;
use crate::rate::{os_rate, scaled_rate, xlogx_over, RateValue, POINTWISE_TOL};
use crate::stochastic::{ServiceKind, ServiceModel};

/// Values of a path at `k t / m`, `k = 0..m`, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    t: f64,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(t: f64, values: Vec<f64>) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid("t", format!("horizon must lie in (0, 1], got {t}")));
        }
        if values.len() < 2 {
            return Err(invalid("values", "a grid path needs at least one segment"));
        }
        if values[0] != 0.0 {
            return Err(invalid("values", "a grid path starts at 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "grid path values must be finite"));
        }
        Ok(Self { t, values })
    }

    /// Samples `f` on the grid; `f(0)` is replaced by 0.
    pub fn from_fn(t: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = (0..=m).map(|k| f(t * k as f64 / m as f64)).collect();
        values[0] = 0.0;
        Self::new(t, values)
    }

    /// Path with the given segment slopes.
    pub fn from_slopes(t: f64, slopes: &[f64]) -> Result<Self> {
        let h = t / slopes.len() as f64;
        let mut values = Vec::with_capacity(slopes.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for d in slopes {
            acc += h * d;
            values.push(acc);
        }
        Self::new(t, values)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.t / self.m() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `d_k = (v_k - v_{k-1}) / h`, `k = 1..m`.
    pub fn slopes(&self) -> Vec<f64> {
        let h = self.step();
        self.values.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    /// `Γ(ψ)(t) = ψ(t) - min_k ψ(s_k)`.
    pub fn reflected_terminal(&self) -> f64 {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        self.terminal() - min
    }
}

/// Which service path is paired with an offered-load path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferedConvention {
    /// `σ = φ + ψ`: the fluid path has zero rate.
    #[default]
    Sum,
    /// `σ = φ - ψ`, kept for comparison only.
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathOptimizerConfig {
    /// Grid segments for the workload rate.
    pub m: usize,
    /// Allowed gap between the window value and its certificate.
    pub tolerance: f64,
    /// Bisection steps for inner and outer root finding.
    pub max_iterations: usize,
    pub convention: OfferedConvention,
}

impl Default for PathOptimizerConfig {
    fn default() -> Self {
        Self {
            m: 200,
            tolerance: 1e-9,
            max_iterations: 200,
            convention: OfferedConvention::Sum,
        }
    }
}

impl PathOptimizerConfig {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 10 {
            return Err(invalid("m", format!("need at least 10 grid segments, got {}", self.m)));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// `(1-t) ln((1-t)/(1-S))`.
fn terminal_term(t: f64, s: f64) -> f64 {
    if s >= 1.0 {
        return f64::INFINITY;
    }
    xlogx_over(1.0 - t, 1.0 - s)
}

/// Discretised arrival-path rate
/// `Λ̂_t(φ) = -h Σ ln d_k + (1-t) ln((1-t)/(1-φ(t)))`.
pub fn rate_os_path(phi: &GridPath) -> RateValue {
    let h = phi.step();
    let slopes = phi.slopes();
    if slopes.iter().any(|&d| d <= 0.0) || phi.terminal() >= 1.0 {
        return RateValue::infinite();
    }
    let body: f64 = slopes.iter().map(|d| -h * d.ln()).sum();
    RateValue::closed(body + terminal_term(phi.t(), phi.terminal()))
}

/// Discretised service-path rate `Î_t(σ) = h Σ Λ*(d_k)` with the per-unit
/// Cramér rate.
pub fn rate_service_path(sigma: &GridPath, model: &ServiceModel) -> RateValue {
    let h = sigma.step();
    let slopes = sigma.slopes();
    if slopes.iter().any(|&d| d < 0.0) {
        return RateValue::infinite();
    }
    RateValue::closed(slopes.iter().map(|&d| h * model.rate_function(d)).sum())
}

/// Gradient of `Λ̂_t` with respect to the grid values `v_1..v_m`.
pub fn os_path_gradient(phi: &GridPath) -> Vec<f64> {
    let d = phi.slopes();
    let m = d.len();
    let t = phi.t();
    (0..m)
        .map(|k| {
            if k + 1 < m {
                -1.0 / d[k] + 1.0 / d[k + 1]
            } else {
                -1.0 / d[k] + (1.0 - t) / (1.0 - phi.terminal())
            }
        })
        .collect()
}

/// Gradient of `Î_t` with respect to the grid values `v_1..v_m`.
pub fn service_path_gradient(sigma: &GridPath, model: &ServiceModel) -> Vec<f64> {
    let d = sigma.slopes();
    let m = d.len();
    (0..m)
        .map(|k| {
            let here = model.rate_slope(d[k]);
            if k + 1 < m {
                here - model.rate_slope(d[k + 1])
            } else {
                here
            }
        })
        .collect()
}

/// Optimal arrival path for a given offered-load path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfferedPathRate {
    pub value: f64,
    /// Minimising arrival path; `None` when the value is infinite.
    pub phi: Option<GridPath>,
    /// Multiplier of the terminal constraint.
    pub multiplier: f64,
    /// `|λ - (1-t)/(1-φ(t))|` at the returned path.
    pub residual: f64,
    pub iterations: usize,
}

impl OfferedPathRate {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            phi: None,
            multiplier: f64::NAN,
            residual: 0.0,
            iterations: 0,
        }
    }

    pub fn to_rate_value(&self) -> RateValue {
        RateValue {
            value: self.value,
            optimizer: self.phi.as_ref().map(|p| p.values().to_vec()).unwrap_or_default(),
            iterations: self.iterations,
            residual: self.residual,
            upper_bound_only: false,
        }
    }
}

/// Per-segment problem `min_a -ln a + Λ*(a + b) + λ a` over the slopes `a`
/// keeping the service slope `a + b` inside the support.
struct Segment<'a> {
    model: &'a ServiceModel,
    b: f64,
    lo: f64,
    hi: f64,
}

impl Segment<'_> {
    fn new(model: &ServiceModel, b: f64) -> Option<Segment<'_>> {
        let (zlo, zhi) = model.support();
        let lo = (zlo - b).max(0.0);
        let hi = zhi - b;
        if matches!(model.kind(), ServiceKind::Deterministic { .. }) {
            return (hi > 0.0).then_some(Segment { model, b, lo: hi, hi });
        }
        (hi > lo).then_some(Segment { model, b, lo, hi })
    }

    fn argmin(&self, lambda: f64, max_iter: usize) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let g = |a: f64| {
            if a <= self.lo {
                f64::NEG_INFINITY
            } else if a >= self.hi {
                f64::INFINITY
            } else {
                -1.0 / a + self.model.rate_slope(a + self.b) + lambda
            }
        };
        let hi = if self.hi.is_finite() {
            self.hi
        } else {
            let mut hi = (2.0 * self.lo).max(1.0);
            while g(hi) < 0.0 {
                hi *= 2.0;
                if hi > 1e15 {
                    break;
                }
            }
            hi
        };
        bisect_increasing(g, self.lo, hi, max_iter)
    }

    fn cost(&self, a: f64) -> f64 {
        -a.ln() + self.model.rate_function(a + self.b)
    }
}

/// `Ĵ_t(ψ) = inf_φ Λ̂_t(φ) + Î_t(σ)` over increasing arrival paths `φ`.
///
/// The objective separates across segments once the terminal value
/// `S = φ(t)` is priced by a multiplier `λ`; optimality requires
/// `λ = (1-t)/(1-S(λ))`, which is found by bisection since `S(λ)` is
/// decreasing.
pub fn rate_offered_path(psi: &GridPath, model: &ServiceModel, cfg: &PathOptimizerConfig) -> OfferedPathRate {
    let sign = match cfg.convention {
        OfferedConvention::Sum => 1.0,
        OfferedConvention::Difference => -1.0,
    };
    let t = psi.t();
    let h = psi.step();
    let b: Vec<f64> = psi.slopes().iter().map(|d| sign * d).collect();

    // distinct slopes share one segment problem
    let mut distinct: Vec<f64> = b.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut segments = Vec::with_capacity(distinct.len());
    for &bk in &distinct {
        match Segment::new(model, bk) {
            Some(s) => segments.push(s),
            None => return OfferedPathRate::infinite(),
        }
    }
    let counts: Vec<f64> = distinct
        .iter()
        .map(|v| b.iter().filter(|x| *x == v).count() as f64)
        .collect();
    let s_min: f64 = segments.iter().zip(&counts).map(|(s, c)| h * c * s.lo).sum();
    if s_min >= 1.0 {
        return OfferedPathRate::infinite();
    }

    let max_iter = cfg.max_iterations;
    let total = |lambda: f64| -> f64 {
        segments
            .iter()
            .zip(&counts)
            .map(|(s, c)| h * c * s.argmin(lambda, max_iter))
            .sum()
    };
    let lambda = if t >= 1.0 {
        // the terminal term is only the constraint S < 1
        if total(0.0) < 1.0 {
            0.0
        } else {
            let target = 1.0 - 1e-12;
            let mut hi = 1.0;
            while total(hi) > target {
                hi *= 2.0;
            }
            bisect_increasing(|l| target - total(l), 0.0, hi, max_iter)
        }
    } else {
        let r = |l: f64| {
            let s = total(l);
            if s >= 1.0 {
                f64::NEG_INFINITY
            } else {
                l - (1.0 - t) / (1.0 - s)
            }
        };
        let mut hi = 1.0;
        while r(hi) <= 0.0 {
            hi *= 2.0;
        }
        bisect_increasing(r, 0.0, hi, max_iter)
    };

    let slopes_for: Vec<f64> = segments.iter().map(|s| s.argmin(lambda, max_iter)).collect();
    let costs: Vec<f64> = segments.iter().zip(&slopes_for).map(|(s, &a)| s.cost(a)).collect();
    let a: Vec<f64> = b
        .iter()
        .map(|bk| {
            let i = distinct.partition_point(|v| v < bk);
            slopes_for[i]
        })
        .collect();
    let phi = GridPath::from_slopes(t, &a).expect("finite slopes");
    let s = phi.terminal();
    let body: f64 = costs.iter().zip(&counts).map(|(c, n)| h * n * c).sum();
    let value = (body + terminal_term(t, s)).max(0.0);
    let residual = if t >= 1.0 { 0.0 } else { (lambda - (1.0 - t) / (1.0 - s)).abs() };
    OfferedPathRate {
        value,
        phi: Some(phi),
        multiplier: lambda,
        residual,
        iterations: max_iter,
    }
}

/// Result of the workload rate `J̃_t(y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadRate {
    pub value: f64,
    /// Offered-load path achieving the value (always feasible when finite).
    pub psi: Option<GridPath>,
    /// Length of the final busy window, `0` for the trivial path.
    pub window: f64,
    /// `|Γ(ψ)(t) - y|`.
    pub constraint_residual: f64,
    /// `Ĵ_t(ψ)` re-evaluated by [`rate_offered_path`].
    pub certificate: f64,
    pub upper_bound_only: bool,
}

impl WorkloadRate {
    pub fn to_rate_value(&self) -> RateValue {
        RateValue {
            value: self.value,
            optimizer: self.psi.as_ref().map(|p| p.values().to_vec()).unwrap_or_default(),
            iterations: 0,
            residual: self.constraint_residual,
            upper_bound_only: self.upper_bound_only,
        }
    }
}

/// Inner problem for a busy window of length `len` ending at `t`:
/// `min_x I_L(x) + Λ*_L(max(L m, x + y))`, where `x` is the arrival mass in
/// the window and the arrivals before it are spread optimally.
/// Returns `(value, x)`.
fn window_value(model: &ServiceModel, len: f64, y: f64) -> (f64, f64) {
    let mean = model.mean();
    let (_, shi) = model.support();
    let xhi = (len * shi - y).min(1.0);
    if !(xhi > 0.0) {
        return (f64::INFINITY, f64::NAN);
    }
    let obj = |x: f64| os_rate(len, x) + scaled_rate(model, len, (len * mean).max(x + y));
    let e = golden_min(obj, 0.0, xhi, POINTWISE_TOL, 500);
    (e.value.max(0.0), e.arg)
}

/// Overloaded side `y < W̄(t)`: the whole horizon is one busy period and the
/// service total is capped at `x + y`.
fn overload_value(model: &ServiceModel, t: f64, y: f64) -> (f64, f64) {
    let mean = model.mean();
    let (slo, _) = model.support();
    let xlo = (t * slo - y).max(0.0);
    if !(xlo < 1.0) {
        return (f64::INFINITY, f64::NAN);
    }
    let obj = |x: f64| os_rate(t, x) + scaled_rate(model, t, (t * mean).min(x + y));
    let e = golden_min(obj, xlo, 1.0, POINTWISE_TOL, 500);
    (e.value.max(0.0), e.arg)
}

/// Two-piece offered-load path: slopes `(c1 - a1)` before the window and
/// `(c2 - a2)` inside it.
fn two_piece_path(t: f64, m: usize, k: usize, pre: f64, inside: f64) -> GridPath {
    let slopes: Vec<f64> = (0..m).map(|i| if i < m - k { pre } else { inside }).collect();
    GridPath::from_slopes(t, &slopes).expect("finite slopes")
}

/// Pulls `psi` towards the fluid path until `Γ(ψ)(t) = y`. The rate is
/// convex in `ψ` and vanishes at the fluid path, so this never increases it.
fn settle_on_level(psi: GridPath, fluid: &GridPath, y: f64, max_iter: usize) -> GridPath {
    let gap = |lam: f64| {
        let v: Vec<f64> = psi
            .values()
            .iter()
            .zip(fluid.values())
            .map(|(p, f)| (1.0 - lam) * p + lam * f)
            .collect();
        GridPath::new(psi.t(), v).expect("finite")
    };
    let g0 = psi.reflected_terminal() - y;
    let g1 = fluid.reflected_terminal() - y;
    if g0.abs() <= 1e-12 || g0.signum() == g1.signum() {
        return psi;
    }
    // g(λ) runs from g0 to g1; orient so it increases
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let lam = bisect_increasing(|l| dir * (gap(l).reflected_terminal() - y), 0.0, 1.0, max_iter);
    gap(lam)
}

/// Workload rate `J̃_t(y) = inf { Ĵ_t(ψ) : Γ(ψ)(t) = y }` on the grid with
/// `cfg.m` segments.
///
/// For `y` at or above the fluid workload the constraint can be relaxed to
/// `Γ(ψ)(t) >= y`, which holds iff some final window `[t-L, t]` carries an
/// increment of at least `y`. For a fixed window the optimal slopes are
/// constant inside and outside it, which leaves a scalar problem per grid
/// window length. Below the fluid workload the relaxed constraint is
/// `Γ(ψ)(t) <= y` and the uniform path is optimal.
pub fn rate_workload(t: f64, y: f64, model: &ServiceModel, cfg: &PathOptimizerConfig) -> Result<WorkloadRate> {
    cfg.validate()?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid("t", format!("time must lie in (0, 1], got {t}")));
    }
    if y < 0.0 || y.is_nan() {
        return Ok(WorkloadRate {
            value: f64::INFINITY,
            psi: None,
            window: f64::NAN,
            constraint_residual: f64::NAN,
            certificate: f64::INFINITY,
            upper_bound_only: false,
        });
    }
    let m = cfg.m;
    let mean = model.mean();
    let fluid_level = fluid_workload_uniform(1.0 / mean, t);
    let fluid = GridPath::from_fn(t, m, |s| s * mean - s)?;
    let h = t / m as f64;

    let (value, k, x) = if y == 0.0 && fluid_level == 0.0 {
        (0.0, 0, f64::NAN)
    } else if y >= fluid_level {
        let mut best = (f64::INFINITY, 0, f64::NAN);
        for k in 1..=m {
            let (v, x) = window_value(model, k as f64 * h, y);
            if v < best.0 {
                best = (v, k, x);
            }
        }
        best
    } else {
        let (v, x) = overload_value(model, t, y);
        (v, m, x)
    };
    if !value.is_finite() {
        return Ok(WorkloadRate {
            value,
            psi: None,
            window: k as f64 * h,
            constraint_residual: f64::NAN,
            certificate: f64::INFINITY,
            upper_bound_only: false,
        });
    }

    let psi = if k == 0 {
        fluid.clone()
    } else {
        let len = k as f64 * h;
        let a2 = x / len;
        let c2 = if y >= fluid_level {
            (len * mean).max(x + y) / len
        } else {
            (len * mean).min(x + y) / len
        };
        let pre = if k < m { mean - (1.0 - x) / (1.0 - len) } else { 0.0 };
        two_piece_path(t, m, k, pre, c2 - a2)
    };
    let psi = settle_on_level(psi, &fluid, y, cfg.max_iterations);
    let residual = (psi.reflected_terminal() - y).abs();
    let certificate = rate_offered_path(&psi, model, cfg).value;
    let mismatch = certificate - value > cfg.tolerance.max(1e-7 * value.abs());
    Ok(WorkloadRate {
        value: if mismatch { certificate } else { value },
        psi: Some(psi),
        window: k as f64 * h,
        constraint_residual: residual,
        certificate,
        upper_bound_only: mismatch || residual > 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_mean(mean: f64) -> ServiceModel {
        ServiceModel::exponential_mean(mean).unwrap()
    }

    #[test]
    fn os_path_examples() {
        let id = GridPath::from_fn(0.5, 100, |s| s).unwrap();
        assert!(rate_os_path(&id).value.abs() < 1e-12);
        // -∫ log(2s) ds over [0, 1/2] = 1/2, terminal 0.5 log(0.5/0.75)
        let exact = 0.5 + 0.5 * (0.5f64 / 0.75).ln();
        assert!((exact - 0.297267).abs() < 5e-7);
        let sq = GridPath::from_fn(0.5, 1000, |s| s * s).unwrap();
        let v = rate_os_path(&sq).value;
        assert!((v - exact).abs() < 1e-3, "{v}");
        let mut flat = id.values().to_vec();
        flat[5] = flat[4];
        flat.iter_mut().skip(6).for_each(|v| *v -= 0.005);
        assert!(rate_os_path(&GridPath::new(0.5, flat).unwrap()).value.is_infinite());
        let over = GridPath::from_fn(0.5, 10, |s| 2.0 * s).unwrap();
        assert!(rate_os_path(&over).value.is_infinite());
    }

    #[test]
    fn os_path_refinement_is_first_order() {
        for f in [|s: f64| s * s, |s: f64| s * s * s + 0.1 * s] {
            let mut prev_gap = f64::INFINITY;
            let fine = rate_os_path(&GridPath::from_fn(0.5, 6400, f).unwrap()).value;
            for m in [50, 100, 200, 400] {
                let a = rate_os_path(&GridPath::from_fn(0.5, m, f).unwrap()).value;
                let b = rate_os_path(&GridPath::from_fn(0.5, 2 * m, f).unwrap()).value;
                assert!((a - b).abs() * m as f64 <= 2.0);
                let gap = (a - fine).abs();
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
        }
    }

    #[test]
    fn service_path_examples() {
        let e = exp_mean(1.0);
        let id = GridPath::from_fn(0.5, 50, |s| s).unwrap();
        assert!(rate_service_path(&id, &e).value.abs() < 1e-14);
        let two = GridPath::from_fn(0.5, 50, |s| 2.0 * s).unwrap();
        let v = rate_service_path(&two, &e).value;
        assert!((v - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((v - 0.153426).abs() < 5e-7);
        let d = ServiceModel::deterministic(1.0).unwrap();
        assert_eq!(rate_service_path(&id, &d).value, 0.0);
        assert!(rate_service_path(&two, &d).value.is_infinite());
    }

    #[test]
    fn gradients_match_central_differences() {
        let g = ServiceModel::gamma(2.0, 0.6).unwrap();
        let phi = GridPath::from_fn(0.6, 12, |s| 0.8 * s + 0.3 * s * s + 0.02 * (9.0 * s).sin()).unwrap();
        let grad_os = os_path_gradient(&phi);
        let grad_sv = service_path_gradient(&phi, &g);
        let eps = 1e-6;
        for k in 1..=phi.m() {
            let bump = |delta: f64| {
                let mut v = phi.values().to_vec();
                v[k] += delta;
                GridPath::new(0.6, v).unwrap()
            };
            let fd_os = (rate_os_path(&bump(eps)).value - rate_os_path(&bump(-eps)).value) / (2.0 * eps);
            let fd_sv =
                (rate_service_path(&bump(eps), &g).value - rate_service_path(&bump(-eps), &g).value) / (2.0 * eps);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
            assert!(rel(grad_os[k - 1], fd_os) < 1e-6, "k={k}: {} vs {fd_os}", grad_os[k - 1]);
            assert!(rel(grad_sv[k - 1], fd_sv) < 1e-6, "k={k}: {} vs {fd_sv}", grad_sv[k - 1]);
        }
    }

    #[test]
    fn offered_path_vanishes_on_fluid() {
        let cfg = PathOptimizerConfig::default();
        for &(mu, t) in &[(0.8, 0.5), (1.25, 0.5), (1.0, 0.75)] {
            let mean = 1.0 / mu;
            let psi = GridPath::from_fn(t, 200, |s| s * mean - s).unwrap();
            let r = rate_offered_path(&psi, &exp_mean(mean), &cfg);
            assert!(r.value <= 1e-3 && r.value >= 0.0, "{}", r.value);
            let phi = r.phi.unwrap();
            assert!(phi.slopes().iter().all(|a| (a - 1.0).abs() < 1e-8));
        }
    }

    #[test]
    fn offered_path_zero_psi_matches_two_slope_search() {
        let e = exp_mean(2.0);
        let t = 0.5;
        let m = 20;
        let psi = GridPath::new(t, vec![0.0; m + 1]).unwrap();
        let r = rate_offered_path(&psi, &e, &PathOptimizerConfig::default());
        // exhaustive search over two slopes, first and second half
        let h = t / m as f64;
        let mut best = f64::INFINITY;
        for i in 1..400 {
            for j in 1..400 {
                let (a1, a2) = (0.01 * i as f64, 0.01 * j as f64);
                let s = 0.5 * t * (a1 + a2);
                if s >= 1.0 {
                    continue;
                }
                let body: f64 = (0..m)
                    .map(|k| {
                        let a = if k < m / 2 { a1 } else { a2 };
                        h * (-a.ln() + (a / 2.0 - 1.0 - (a / 2.0).ln()))
                    })
                    .sum();
                best = best.min(body + (1.0 - t) * ((1.0 - t) / (1.0 - s)).ln());
            }
        }
        assert!(r.value > 0.01);
        assert!((r.value - best).abs() < 5e-3, "{} vs {best}", r.value);
        assert!(r.value <= best + 1e-12);
    }

    #[test]
    fn offered_path_generic_matches_brute_force_on_small_grid() {
        // m = 2, exponential mean 1: grid search over both arrival slopes
        let e = exp_mean(1.0);
        let t = 0.4;
        let psi = GridPath::new(t, vec![0.0, 0.05, -0.02]).unwrap();
        let b = psi.slopes();
        let r = rate_offered_path(&psi, &e, &PathOptimizerConfig::default());
        let h = t / 2.0;
        let mut best = f64::INFINITY;
        for i in 1..1500 {
            for j in 1..1500 {
                let a = [0.002 * i as f64, 0.002 * j as f64];
                if a[0] + b[0] <= 0.0 || a[1] + b[1] <= 0.0 || h * (a[0] + a[1]) >= 1.0 {
                    continue;
                }
                let v: f64 = (0..2).map(|k| h * (-a[k].ln() + (a[k] + b[k] - 1.0 - (a[k] + b[k]).ln()))).sum::<f64>()
                    + (1.0 - t) * ((1.0 - t) / (1.0 - h * (a[0] + a[1]))).ln();
                best = best.min(v);
            }
        }
        assert!(r.value <= best + 1e-12);
        assert!((r.value - best).abs() < 1e-4, "{} vs {best}", r.value);
    }

    #[test]
    fn offered_path_infeasible_jump() {
        let e = exp_mean(1.0);
        let mut v: Vec<f64> = (0..=20).map(|k| 0.01 * k as f64).collect();
        v.iter_mut().skip(10).for_each(|x| *x -= 1.2);
        let psi = GridPath::new(0.5, v).unwrap();
        assert!(rate_offered_path(&psi, &e, &PathOptimizerConfig::default()).value.is_infinite());
        let d = ServiceModel::deterministic(1.0).unwrap();
        let up = GridPath::from_fn(0.5, 20, |s| 3.0 * s).unwrap();
        assert!(rate_offered_path(&up, &d, &PathOptimizerConfig::default()).value.is_infinite());
    }

    #[test]
    fn difference_convention_penalises_fluid() {
        let cfg = PathOptimizerConfig {
            convention: OfferedConvention::Difference,
            ..PathOptimizerConfig::default()
        };
        let psi = GridPath::from_fn(0.5, 50, |s| 0.5 * s).unwrap();
        let r = rate_offered_path(&psi, &exp_mean(1.5), &cfg);
        assert!(r.value > 1e-3);
    }

    #[test]
    fn workload_rate_at_fluid_and_underload() {
        let cfg = PathOptimizerConfig::default();
        for &(mu, t) in &[(0.8, 0.5), (1.25, 0.5), (1.0, 0.75)] {
            let e = exp_mean(1.0 / mu);
            let w = fluid_workload_uniform(mu, t);
            let r = rate_workload(t, w, &e, &cfg).unwrap();
            assert!(r.value <= 1e-3, "mu={mu}: {}", r.value);
            assert!(r.constraint_residual < 1e-9);
        }
        let r = rate_workload(0.5, 0.0, &exp_mean(0.2), &cfg).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(rate_workload(0.5, -0.1, &exp_mean(1.0), &cfg).unwrap().value.is_infinite());
    }

    #[test]
    fn workload_rate_refines_and_is_certified() {
        let e = exp_mean(1.0);
        let vals: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&m| {
                let r = rate_workload(0.5, 0.3, &e, &PathOptimizerConfig::with_m(m)).unwrap();
                assert!(!r.upper_bound_only);
                assert!(r.constraint_residual < 1e-9);
                assert!((r.certificate - r.value).abs() < 1e-6, "{} vs {}", r.certificate, r.value);
                r.value
            })
            .collect();
        assert!(vals[0] > 0.0 && vals[0].is_finite());
        assert!(vals[1] <= vals[0] && vals[2] <= vals[1]);
        assert!((vals[1] - vals[2]).abs() <= 0.05 * vals[2]);
    }

    #[test]
    fn workload_rate_is_nondecreasing_above_fluid() {
        let e = exp_mean(1.25);
        let cfg = PathOptimizerConfig::with_m(50);
        let w = fluid_workload_uniform(0.8, 0.5);
        let mut prev = 0.0;
        for i in 0..30 {
            let y = w + 0.02 * i as f64;
            let v = rate_workload(0.5, y, &e, &cfg).unwrap().value;
            assert!(v >= prev - 1e-6, "y={y}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn workload_rate_below_fluid_is_certified() {
        let e = exp_mean(1.5);
        let cfg = PathOptimizerConfig::with_m(40);
        let r = rate_workload(0.6, 0.1, &e, &cfg).unwrap();
        assert!(r.value > 0.0 && r.value.is_finite());
        assert!(!r.upper_bound_only);
        assert!((r.certificate - r.value).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(PathOptimizerConfig::with_m(9).validate().is_err());
        assert!(rate_workload(0.5, 0.1, &exp_mean(1.0), &PathOptimizerConfig::with_m(5)).is_err());
    }
}
