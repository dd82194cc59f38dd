//! Critical time-scale for a buffer-exceedance target.
//!
//! The large-deviation bound `P(W^n(t) > w) ≈ exp(-n J̃_t((w, ∞)))` is
//! tabulated over a time grid and `t*` is the first grid time at which it
//! falls to the target `p`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::path::{rate_workload, PathOptimizerConfig};
use crate::queue::fluid_workload_uniform;
use crate::rate::RateValue;
use crate::stochastic::ServiceModel;

/// Offset above the threshold at which the open-set infimum is evaluated.
pub const TAIL_EPS: f64 = 1e-6;

/// `J̃_t((w, ∞)) = inf_{y > w} J̃_t(y)`.
///
/// Above the fluid workload `y ↦ J̃_t(y)` is nondecreasing, so the infimum
/// sits just above `max(w, W̄(t))`; a short scan further out guards against
/// numerical non-monotonicity.
pub fn rate_tail(t: f64, w: f64, model: &ServiceModel, cfg: &PathOptimizerConfig) -> Result<RateValue> {
    if w.is_nan() {
        return Err(invalid("w", "buffer level is NaN"));
    }
    let fluid = fluid_workload_uniform(1.0 / model.mean(), t);
    if w < fluid {
        let mut r = RateValue::closed(0.0);
        r.optimizer = vec![fluid];
        return Ok(r);
    }
    let y0 = w.max(fluid) + TAIL_EPS;
    let base = rate_workload(t, y0, model, cfg)?;
    let mut best = (base.value, y0, base.upper_bound_only, base.constraint_residual);
    let spread = y0.max(0.05);
    for f in [0.01, 0.05, 0.1, 0.2, 0.5] {
        let y = y0 + f * spread;
        let r = rate_workload(t, y, model, cfg)?;
        if r.value < best.0 {
            best = (r.value, y, r.upper_bound_only, r.constraint_residual);
        }
    }
    Ok(RateValue {
        value: best.0,
        optimizer: vec![best.1],
        iterations: 6,
        residual: best.3,
        upper_bound_only: best.2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthQuery {
    pub w: f64,
    pub p: f64,
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub model: ServiceModel,
    pub cfg: PathOptimizerConfig,
}

impl BandwidthQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0) {
            return Err(invalid("w", "buffer level must be nonnegative"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid("p", format!("target must lie in (0, 1], got {}", self.p)));
        }
        if self.n == 0 {
            return Err(invalid("n", "population size must be at least 1"));
        }
        if self.t_grid.is_empty() {
            return Err(invalid("t_grid", "time grid is empty"));
        }
        if self.t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(invalid("t_grid", "times must lie in (0, 1]"));
        }
        if self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("t_grid", "times must be strictly increasing"));
        }
        self.cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub t: f64,
    pub rate: f64,
    /// `exp(-n rate)`.
    pub bound: f64,
    pub residual: f64,
    pub upper_bound_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub rows: Vec<BandwidthRow>,
    /// First grid time with `bound <= p`; `+inf` when there is none.
    pub t_star: f64,
}

pub fn critical_time(q: &BandwidthQuery) -> Result<BandwidthReport> {
    q.validate()?;
    let rows: Vec<Result<BandwidthRow>> = q
        .t_grid
        .par_iter()
        .map(|&t| {
            let r = rate_tail(t, q.w, &q.model, &q.cfg)?;
            Ok(BandwidthRow {
                t,
                rate: r.value,
                bound: (-(q.n as f64) * r.value).exp(),
                residual: r.residual,
                upper_bound_only: r.upper_bound_only,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let t_star = rows
        .iter()
        .find(|r| r.bound <= q.p)
        .map_or(f64::INFINITY, |r| r.t);
    Ok(BandwidthReport { rows, t_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(p: f64, n: usize, mean: f64) -> BandwidthQuery {
        BandwidthQuery {
            w: 0.3,
            p,
            n,
            t_grid: (1..=9).map(|i| 0.1 * i as f64).collect(),
            model: ServiceModel::exponential_mean(mean).unwrap(),
            cfg: PathOptimizerConfig::with_m(50),
        }
    }

    #[test]
    fn tail_rate_zero_below_fluid() {
        let e = ServiceModel::exponential_mean(1.25).unwrap();
        let cfg = PathOptimizerConfig::with_m(50);
        assert_eq!(rate_tail(0.5, 0.1, &e, &cfg).unwrap().value, 0.0);
        assert_eq!(rate_tail(0.5, 0.0, &e, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn tail_rate_critical_load_refines() {
        let e = ServiceModel::exponential_mean(1.0).unwrap();
        let a = rate_tail(0.5, 0.3, &e, &PathOptimizerConfig::with_m(100)).unwrap();
        let b = rate_tail(0.5, 0.3, &e, &PathOptimizerConfig::with_m(200)).unwrap();
        assert!(a.value > 0.0 && a.value.is_finite());
        assert!((a.value - b.value).abs() <= 0.05 * b.value);
        assert!(!a.upper_bound_only && a.residual < 1e-6);
    }

    #[test]
    fn bound_nonincreasing_in_w() {
        let e = ServiceModel::exponential_mean(1.0).unwrap();
        let cfg = PathOptimizerConfig::with_m(40);
        let mut prev = f64::INFINITY;
        for i in 0..15 {
            let r = rate_tail(0.6, 0.05 * i as f64, &e, &cfg).unwrap();
            let bound = (-100.0 * r.value).exp();
            assert!(bound <= prev + 1e-9);
            prev = bound;
        }
    }

    #[test]
    fn critical_time_properties() {
        let r = critical_time(&query(1.0, 200, 1.0)).unwrap();
        assert_eq!(r.t_star, 0.1);
        let mut prev = 0.0;
        for p in [1e-1, 1e-2, 1e-3] {
            let ts = critical_time(&query(p, 200, 1.0)).unwrap().t_star;
            assert!(ts >= prev);
            prev = ts;
        }
        let r = critical_time(&query(1e-3, 200, 1.0)).unwrap();
        assert!(r.rows.iter().all(|row| row.rate >= 0.0 && (row.residual < 1e-6 || row.upper_bound_only)));
        let mut bad = query(0.5, 10, 1.0);
        bad.t_grid = vec![0.5, 0.4];
        assert!(critical_time(&bad).is_err());
    }

    #[test]
    fn large_population_hits_first_positive_rate() {
        let q = query(1e-3, 1_000_000, 1.25);
        let r = critical_time(&q).unwrap();
        let first_pos = r.rows.iter().find(|row| row.rate > 0.0).map(|row| row.t).unwrap();
        assert_eq!(r.t_star, first_pos);
    }
}
