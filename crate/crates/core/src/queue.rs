//! Finite-population paths of the RS/GI/1 queue and their fluid limit.
//!
//! Index conventions: `T_(0) = 0`, `ν_0 = 0`, and the scaled service of job
//! `i` is `ν_i / n`. The offered load is
//! `X^n(t) = n^{-1} Σ_{i<=⌊nt⌋} ν_i - T_(⌊nt⌋)` and the per-job workload
//! follows the Lindley recursion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stochastic::{sample_uniform_order_stats_with, ArrivalModel, OrderStatMethod, ServiceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Right-continuous with left limits.
    Step,
    /// Piecewise linear between grid points.
    Linear,
}

/// Values on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: Vec<f64>,
    values: Vec<f64>,
    kind: PathKind,
}

impl SamplePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(invalid("grid", "grid and values must be nonempty and of equal length"));
        }
        if grid[0] != 0.0 {
            return Err(invalid("grid", "grid must start at 0"));
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid("grid", format!("grid not strictly increasing at index {}", i + 1)));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("values", "NaN in path values"));
        }
        Ok(Self { grid, values, kind })
    }

    /// Uniform grid `{0, h, 2h, .., horizon}` with `segments` pieces.
    pub fn uniform_grid(horizon: f64, segments: usize) -> Vec<f64> {
        (0..=segments)
            .map(|k| horizon * k as f64 / segments as f64)
            .collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Value at `s`; a step path returns the post-jump value at grid points.
    /// Outside the grid the path is held constant.
    pub fn eval(&self, s: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g <= s);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.grid.len() {
            return *self.values.last().unwrap();
        }
        match self.kind {
            PathKind::Step => self.values[i - 1],
            PathKind::Linear => {
                let (g0, g1) = (self.grid[i - 1], self.grid[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                v0 + (v1 - v0) * (s - g0) / (g1 - g0)
            }
        }
    }

    /// Left limit at `s`.
    pub fn left_limit(&self, s: f64) -> f64 {
        match self.kind {
            PathKind::Linear => self.eval(s),
            PathKind::Step => {
                let i = self.grid.partition_point(|&g| g < s);
                if i == 0 {
                    self.values[0]
                } else {
                    self.values[i - 1]
                }
            }
        }
    }

    /// Exact sup-norm distance between two step/linear paths over the union
    /// of their grids. Both paths are affine between consecutive points of
    /// the merged grid, so the supremum is attained at a right value or a
    /// left limit of a merged grid point.
    pub fn sup_distance(&self, other: &SamplePath) -> f64 {
        let mut merged: Vec<f64> = self.grid.iter().chain(other.grid.iter()).copied().collect();
        merged.sort_by(f64::total_cmp);
        merged.dedup();
        let mut sup: f64 = 0.0;
        for (i, &g) in merged.iter().enumerate() {
            sup = sup.max((self.eval(g) - other.eval(g)).abs());
            if i > 0 {
                sup = sup.max((self.left_limit(g) - other.left_limit(g)).abs());
            }
        }
        sup
    }
}

/// One realisation of the `n`-job system.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueRealization {
    epochs: Vec<f64>,
    services: Vec<f64>,
    scaled: Vec<f64>,
}

impl QueueRealization {
    /// Sorted epochs `T_(1..n)` and positive services `ν_1..n`.
    pub fn new(epochs: Vec<f64>, services: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = services.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("services", format!("services must be positive and finite, got {bad}")));
        }
        Self::new_unchecked_services(epochs, services)
    }

    /// Like [`new`](Self::new) but accepts zero services. Only meant for
    /// limiting cases such as a pure-arrival system.
    #[doc(hidden)]
    pub fn new_unchecked_services(epochs: Vec<f64>, services: Vec<f64>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(invalid("epochs", "population size must be at least 1"));
        }
        if epochs.len() != services.len() {
            return Err(invalid("services", "epochs and services differ in length"));
        }
        if epochs[0] < 0.0 || epochs.iter().any(|e| !e.is_finite()) {
            return Err(invalid("epochs", "epochs must be finite and nonnegative"));
        }
        if let Some(i) = epochs.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::UnsortedEpochs { index: i + 1 });
        }
        let n = epochs.len() as f64;
        let scaled = services.iter().map(|v| v / n).collect();
        Ok(Self {
            epochs,
            services,
            scaled,
        })
    }

    /// Draws epochs as the order statistics of `arrival` (uniform order
    /// statistics pushed through the quantile function) and i.i.d. services.
    /// Epochs are drawn first, then services.
    pub fn sample<R: Rng + ?Sized>(
        n: usize,
        arrival: &ArrivalModel,
        service: &ServiceModel,
        method: OrderStatMethod,
        rng: &mut R,
    ) -> Result<Self> {
        let mut epochs = sample_uniform_order_stats_with(n, method, rng)?;
        if !matches!(arrival.kind(), crate::stochastic::ArrivalKind::Uniform) {
            epochs.iter_mut().for_each(|u| *u = arrival.quantile(*u));
        }
        let services = service.sample_n(n, rng);
        Self::new(epochs, services)
    }

    pub fn n(&self) -> usize {
        self.epochs.len()
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn services(&self) -> &[f64] {
        &self.services
    }

    /// `ν_i / n`.
    pub fn scaled_services(&self) -> &[f64] {
        &self.scaled
    }

    /// `T_(j)` with `T_(0) = 0`.
    pub fn epoch(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.epochs[j - 1]
        }
    }

    /// `ν_j / n` with `ν_0 = 0`.
    pub fn scaled_service(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.scaled[j - 1]
        }
    }

    /// `max_i ν_i/n + max_j (T_(j) - T_(j-1))`: sup-norm bound between the
    /// offered load and its linear interpolation.
    pub fn interpolation_bound(&self) -> f64 {
        let max_service = self.scaled.iter().copied().fold(0.0, f64::max);
        let max_spacing = (1..=self.n())
            .map(|j| self.epoch(j) - self.epoch(j - 1))
            .fold(0.0, f64::max);
        max_service + max_spacing
    }
}

/// `⌊n t⌋`, robust to `t` being a rounded multiple of `1/n`.
pub fn floor_index(n: usize, t: f64) -> usize {
    let k = (n as f64 * t + 1e-9).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n)
    }
}

/// Offered load `X^n` as a step path on `{0, 1/n, .., 1}`.
pub fn offered_load_path(q: &QueueRealization) -> SamplePath {
    let n = q.n();
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut s = 0.0;
    for j in 1..=n {
        s += q.scaled_service(j);
        values.push(s - q.epoch(j));
    }
    SamplePath::new(SamplePath::uniform_grid(1.0, n), values, PathKind::Step).expect("valid grid")
}

/// Per-job workload `W_0..W_n` by the Lindley recursion
/// `W_j = (W_{j-1} + ν_{j-1}/n - (T_(j) - T_(j-1)))_+`, `W_0 = 0`.
pub fn lindley_workload(q: &QueueRealization) -> Vec<f64> {
    let n = q.n();
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    for j in 1..=n {
        let prev = w[j - 1];
        let next = prev + q.scaled_service(j - 1) - (q.epoch(j) - q.epoch(j - 1));
        w.push(next.max(0.0));
    }
    w
}

/// Unravelled form of the recursion,
/// `W_j = (S_{j-1} - T_(j)) + max_{0<=i<=j-1} (T_(i+1) - S_i)` with
/// `S_i = Σ_{k<=i} ν_k/n`.
pub fn lindley_max_representation(q: &QueueRealization) -> Vec<f64> {
    let n = q.n();
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    let mut s_prev = 0.0; // S_{j-1}
    let mut best = f64::NEG_INFINITY; // max_{i<=j-1} (T_(i+1) - S_i)
    for j in 1..=n {
        if j >= 2 {
            s_prev += q.scaled_service(j - 1);
        }
        best = best.max(q.epoch(j) - s_prev);
        w.push(s_prev - q.epoch(j) + best);
    }
    w
}

/// Workload process `W^n(t) = W_{⌊nt⌋}` as a step path.
pub fn workload_path(q: &QueueRealization) -> SamplePath {
    let w = lindley_workload(q);
    SamplePath::new(SamplePath::uniform_grid(1.0, q.n()), w, PathKind::Step).expect("valid grid")
}

pub fn workload_at(q: &QueueRealization, t: f64) -> f64 {
    lindley_workload(q)[floor_index(q.n(), t)]
}

/// Skorokhod regulator `Γ(x)(t) = x(t) + max_{s<=t} (-x(s))`, computed on
/// the grid of `x` with one running-minimum pass.
pub fn reflect(x: &SamplePath) -> SamplePath {
    let mut running_min = f64::INFINITY;
    let values = x
        .values()
        .iter()
        .map(|&v| {
            running_min = running_min.min(v);
            v - running_min
        })
        .collect();
    SamplePath {
        grid: x.grid.clone(),
        values,
        kind: x.kind,
    }
}

/// Linear interpolation through the jump levels of a step path.
pub fn interpolate(x: &SamplePath) -> SamplePath {
    SamplePath {
        grid: x.grid.clone(),
        values: x.values.clone(),
        kind: PathKind::Linear,
    }
}

/// Default fluid grid: 1001 uniform points on [0, 1].
pub fn default_fluid_grid() -> Vec<f64> {
    SamplePath::uniform_grid(1.0, 1000)
}

/// Fluid workload `W̄ = (1/μ) Γ(F - M)`, `M(t) = μ t`, on `grid`.
pub fn fluid_workload(arrival: &ArrivalModel, mu: f64, grid: &[f64]) -> Result<SamplePath> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid("mu", format!("service rate must be positive, got {mu}")));
    }
    let netput: Vec<f64> = grid.iter().map(|&t| arrival.cdf(t) - mu * t).collect();
    let x = SamplePath::new(grid.to_vec(), netput, PathKind::Linear)?;
    let mut w = reflect(&x);
    w.values.iter_mut().for_each(|v| *v /= mu);
    Ok(w)
}

/// Fluid offered load `X̄(s) = s/μ - s` for uniform arrivals.
pub fn fluid_offered_uniform(mu: f64, s: f64) -> f64 {
    s / mu - s
}

/// Fluid workload for uniform arrivals, `t (1/μ - 1)_+`.
pub fn fluid_workload_uniform(mu: f64, t: f64) -> f64 {
    (t / mu - t).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngSpec;
    use proptest::prelude::*;

    fn step(values: Vec<f64>) -> SamplePath {
        let n = values.len() - 1;
        SamplePath::new(SamplePath::uniform_grid(1.0, n), values, PathKind::Step).unwrap()
    }

    #[test]
    fn offered_load_hand_examples() {
        let q = QueueRealization::new(vec![0.2, 0.6], vec![1.0, 1.0]).unwrap();
        let x = offered_load_path(&q);
        assert_eq!(x.eval(0.0), 0.0);
        assert_eq!(x.eval(0.49), 0.0);
        assert!((x.eval(0.5) - 0.3).abs() < 1e-15);
        assert!((x.eval(0.99) - 0.3).abs() < 1e-15);
        assert!((x.eval(1.0) - 0.4).abs() < 1e-15);

        let q = QueueRealization::new(vec![0.5], vec![2.0]).unwrap();
        let x = offered_load_path(&q);
        assert_eq!(x.eval(0.7), 0.0);
        assert_eq!(x.eval(1.0), 1.5);
    }

    #[test]
    fn pure_arrival_offered_load_is_minus_epochs() {
        let epochs = vec![0.1, 0.3, 0.35, 0.8];
        let q = QueueRealization::new_unchecked_services(epochs.clone(), vec![0.0; 4]).unwrap();
        let x = offered_load_path(&q);
        for (j, &v) in x.values().iter().enumerate() {
            assert_eq!(v, -q.epoch(j));
            assert!(v <= 0.0);
        }
        assert!(lindley_workload(&q).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn lindley_hand_examples() {
        let q = QueueRealization::new(vec![0.2, 0.3], vec![1.0, 1.0]).unwrap();
        let w = lindley_workload(&q);
        assert_eq!(w[1], 0.0);
        assert!((w[2] - 0.4).abs() < 1e-15);
        let q = QueueRealization::new(vec![0.4], vec![3.0]).unwrap();
        assert_eq!(lindley_workload(&q), vec![0.0, 0.0]);
    }

    #[test]
    fn unsorted_epochs_rejected() {
        let err = QueueRealization::new(vec![0.3, 0.2], vec![1.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::UnsortedEpochs { index: 1 });
        assert!(QueueRealization::new(vec![0.3], vec![0.0]).is_err());
    }

    #[test]
    fn reflection_examples() {
        let x = step(vec![0.0, 0.5, 0.2, 0.7]);
        assert_eq!(reflect(&x).values(), x.values());
        let y = reflect(&step(vec![0.0, -0.3, 0.1]));
        assert_eq!(y.values()[0], 0.0);
        assert_eq!(y.values()[1], 0.0);
        assert!((y.values()[2] - 0.4).abs() < 1e-15);
        let grid = SamplePath::uniform_grid(1.0, 50);
        let down = SamplePath::new(grid.clone(), grid.iter().map(|s| -s).collect(), PathKind::Linear).unwrap();
        assert!(reflect(&down).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fluid_examples() {
        let grid = default_fluid_grid();
        let u = ArrivalModel::uniform();
        let w = fluid_workload(&u, 1.0, &grid).unwrap();
        assert!(w.values().iter().all(|&v| v.abs() < 1e-15));
        let w = fluid_workload(&u, 0.5, &grid).unwrap();
        assert!((w.eval(0.7) - 0.7).abs() < 1e-12);
        let w = fluid_workload(&u, 2.0, &grid).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
        assert!(fluid_workload(&u, 0.0, &grid).is_err());
        assert!(fluid_workload(&u, -1.0, &grid).is_err());
        assert_eq!(fluid_workload_uniform(0.8, 0.5), 0.5 / 0.8 - 0.5);
    }

    #[test]
    fn interpolation_n1_and_spacing_bound() {
        let q = QueueRealization::new(vec![0.5], vec![2.0]).unwrap();
        let lin = interpolate(&offered_load_path(&q));
        assert_eq!(lin.kind(), PathKind::Linear);
        assert!((lin.eval(0.5) - 0.75).abs() < 1e-15);

        // deterministic spacings 1/n: arrival process vs its interpolation
        let n = 40;
        let epochs: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
        let t_step = SamplePath::new(
            SamplePath::uniform_grid(1.0, n),
            std::iter::once(0.0).chain(epochs.iter().copied()).collect(),
            PathKind::Step,
        )
        .unwrap();
        let d = t_step.sup_distance(&interpolate(&t_step));
        assert!(d <= 1.0 / n as f64 + 1e-15, "{d}");
    }

    #[test]
    fn sup_distance_step_vs_linear_uses_left_limits() {
        let s = step(vec![0.0, 1.0]);
        let l = interpolate(&s);
        // left limit at 1 of the step path is 0, linear reaches 1
        assert_eq!(s.sup_distance(&l), 1.0);
    }

    #[test]
    fn sampled_realization_is_valid() {
        let mut rng = RngSpec::new(1, 2).rng();
        let svc = ServiceModel::exponential(1.0).unwrap();
        let arr = ArrivalModel::new(crate::stochastic::ArrivalKind::Power { exponent: 2.0 }).unwrap();
        let q = QueueRealization::sample(100, &arr, &svc, OrderStatMethod::Sort, &mut rng).unwrap();
        assert_eq!(q.n(), 100);
        assert!(q.epochs().windows(2).all(|w| w[0] <= w[1]));
        for (s, v) in q.scaled_services().iter().zip(q.services()) {
            assert_eq!(*s, v / 100.0);
        }
    }

    #[test]
    fn floor_index_tolerates_rounding() {
        assert_eq!(floor_index(20, 0.7), 14);
        assert_eq!(floor_index(10, 0.3), 3);
        assert_eq!(floor_index(3, 1.0), 3);
        assert_eq!(floor_index(3, 0.0), 0);
    }

    proptest! {
        #[test]
        fn lindley_matches_max_form(
            gaps in proptest::collection::vec(0.0f64..1.0, 1..60),
            svc in proptest::collection::vec(0.01f64..3.0, 60),
        ) {
            let total: f64 = gaps.iter().sum::<f64>() + 0.5;
            let mut acc = 0.0;
            let epochs: Vec<f64> = gaps.iter().map(|g| { acc += g / total; acc }).collect();
            let services = svc[..epochs.len()].to_vec();
            let q = QueueRealization::new(epochs, services).unwrap();
            let a = lindley_workload(&q);
            let b = lindley_max_representation(&q);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn reflection_is_idempotent_nonnegative_and_2_lipschitz(
            xs in proptest::collection::vec(-2.0f64..2.0, 1..40),
            noise in proptest::collection::vec(-0.5f64..0.5, 40),
        ) {
            let mut a = vec![0.0];
            a.extend(xs.iter().copied());
            let mut b = vec![0.0];
            b.extend(xs.iter().zip(&noise).map(|(x, e)| x + e));
            let (pa, pb) = (step(a), step(b));
            let ra = reflect(&pa);
            prop_assert!(ra.values().iter().all(|&v| v >= 0.0));
            let rra = reflect(&ra);
            prop_assert_eq!(rra.values(), ra.values());
            let lhs = ra.sup_distance(&reflect(&pb));
            prop_assert!(lhs <= 2.0 * pa.sup_distance(&pb) + 1e-15);
        }
    }
}
