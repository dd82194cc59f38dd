//! Service and arrival laws, seeded random streams, uniform order
//! statistics and exponential tilting.
//!
//! A [`ServiceModel`] carries its cumulant generating function
//! `φ(θ) = log E[exp(θν)]` together with the open interval on which it is
//! finite. Every supported family is closed under exponential tilting, so
//! [`ServiceModel::tilt`] returns another model of the same kind.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim;

/// Seed plus stream id. Identical specs reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent child stream, used to partition replications across
    /// workers. Children of distinct parents do not collide.
    pub fn substream(&self, index: u64) -> RngSpec {
        RngSpec {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_F42D_4C95_7F2D))),
            stream: index,
        }
    }
}

/// Open interval `(lo, hi)` on which the CGF is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfDomain {
    pub lo: f64,
    pub hi: f64,
}

impl CgfDomain {
    pub fn contains(&self, theta: f64) -> bool {
        theta > self.lo && theta < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceKind {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Gamma { shape: f64, scale: f64 },
    /// Finite support: distinct positive atoms with normalised weights.
    Empirical { atoms: Vec<f64>, weights: Vec<f64> },
}

/// A strictly positive service-time law with a CGF that is finite near 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceModel {
    kind: ServiceKind,
}

impl ServiceModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("rate", format!("must be positive and finite, got {rate}")));
        }
        Ok(Self {
            kind: ServiceKind::Exponential { rate },
        })
    }

    pub fn exponential_mean(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(invalid("mean", format!("must be positive and finite, got {mean}")));
        }
        Self::exponential(1.0 / mean)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(invalid("value", format!("service must be strictly positive, got {value}")));
        }
        Ok(Self {
            kind: ServiceKind::Deterministic { value },
        })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(invalid("shape", format!("must be positive, got {shape}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("scale", format!("must be positive, got {scale}")));
        }
        Ok(Self {
            kind: ServiceKind::Gamma { shape, scale },
        })
    }

    /// Finite-support law from `(atom, weight)` pairs. Weights are
    /// normalised; repeated atoms are merged.
    pub fn empirical(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("atoms", "at least one atom is required"));
        }
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for &(x, w) in pairs {
            if !(x.is_finite() && x > 0.0) {
                return Err(invalid("atoms", format!("atoms must be strictly positive, got {x}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("weights", format!("weights must be positive, got {w}")));
            }
            sorted.push((x, w));
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, w) in sorted {
            if atoms.last() == Some(&x) {
                *weights.last_mut().unwrap() += w;
            } else {
                atoms.push(x);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            kind: ServiceKind::Empirical { atoms, weights },
        })
    }

    /// Validating constructor from a deserialised kind.
    pub fn from_kind(kind: ServiceKind) -> Result<Self> {
        match kind {
            ServiceKind::Exponential { rate } => Self::exponential(rate),
            ServiceKind::Deterministic { value } => Self::deterministic(value),
            ServiceKind::Gamma { shape, scale } => Self::gamma(shape, scale),
            ServiceKind::Empirical { atoms, weights } => {
                if atoms.len() != weights.len() {
                    return Err(invalid("weights", "atoms and weights differ in length"));
                }
                let pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
                Self::empirical(&pairs)
            }
        }
    }

    pub fn kind(&self) -> &ServiceKind {
        &self.kind
    }

    /// Mean service time `1/μ`.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            ServiceKind::Exponential { rate } => 1.0 / rate,
            ServiceKind::Deterministic { value } => *value,
            ServiceKind::Gamma { shape, scale } => shape * scale,
            ServiceKind::Empirical { atoms, weights } => {
                atoms.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
        }
    }

    /// Service rate `μ`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn variance(&self) -> f64 {
        self.cgf_second(0.0)
    }

    pub fn domain(&self) -> CgfDomain {
        match &self.kind {
            ServiceKind::Exponential { rate } => CgfDomain {
                lo: f64::NEG_INFINITY,
                hi: *rate,
            },
            ServiceKind::Gamma { scale, .. } => CgfDomain {
                lo: f64::NEG_INFINITY,
                hi: 1.0 / scale,
            },
            ServiceKind::Deterministic { .. } | ServiceKind::Empirical { .. } => CgfDomain {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
        }
    }

    /// Closed hull `[lo, hi]` of the support.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            ServiceKind::Exponential { .. } | ServiceKind::Gamma { .. } => (0.0, f64::INFINITY),
            ServiceKind::Deterministic { value } => (*value, *value),
            ServiceKind::Empirical { atoms, .. } => (atoms[0], *atoms.last().unwrap()),
        }
    }

    /// `φ(θ)`; `+inf` outside the open domain (boundary included).
    pub fn cgf(&self, theta: f64) -> f64 {
        if !self.domain().contains(theta) {
            return f64::INFINITY;
        }
        match &self.kind {
            ServiceKind::Exponential { rate } => -(-theta / rate).ln_1p(),
            ServiceKind::Deterministic { value } => theta * value,
            ServiceKind::Gamma { shape, scale } => -shape * (-scale * theta).ln_1p(),
            ServiceKind::Empirical { atoms, weights } => {
                let m = atoms
                    .iter()
                    .map(|x| theta * x)
                    .fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = atoms
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * (theta * x - m).exp())
                    .sum();
                m + s.ln()
            }
        }
    }

    /// `φ'(θ)`: mean of the θ-tilted law.
    pub fn cgf_derivative(&self, theta: f64) -> f64 {
        if !self.domain().contains(theta) {
            return f64::INFINITY;
        }
        match &self.kind {
            ServiceKind::Exponential { rate } => 1.0 / (rate - theta),
            ServiceKind::Deterministic { value } => *value,
            ServiceKind::Gamma { shape, scale } => shape * scale / (1.0 - scale * theta),
            ServiceKind::Empirical { .. } => {
                let (w, x) = self.tilted_atoms(theta);
                w.iter().zip(x).map(|(w, x)| w * x).sum()
            }
        }
    }

    /// `φ''(θ)`: variance of the θ-tilted law.
    pub fn cgf_second(&self, theta: f64) -> f64 {
        if !self.domain().contains(theta) {
            return f64::INFINITY;
        }
        match &self.kind {
            ServiceKind::Exponential { rate } => 1.0 / (rate - theta).powi(2),
            ServiceKind::Deterministic { .. } => 0.0,
            ServiceKind::Gamma { shape, scale } => shape * (scale / (1.0 - scale * theta)).powi(2),
            ServiceKind::Empirical { .. } => {
                let (w, x) = self.tilted_atoms(theta);
                let m: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
                w.iter().zip(x).map(|(w, x)| w * (x - m).powi(2)).sum()
            }
        }
    }

    fn tilted_atoms(&self, theta: f64) -> (Vec<f64>, &[f64]) {
        match &self.kind {
            ServiceKind::Empirical { atoms, weights } => {
                let m = atoms
                    .iter()
                    .map(|x| theta * x)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut w: Vec<f64> = atoms
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * (theta * x - m).exp())
                    .collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= s);
                (w, atoms.as_slice())
            }
            _ => unreachable!("tilted_atoms is only defined for empirical laws"),
        }
    }

    /// Exponentially tilted law `dP_θ/dP = e^{θx}/E[e^{θν}]`, whose CGF is
    /// `φ(θ+λ) - φ(θ)`.
    pub fn tilt(&self, theta: f64) -> Result<ServiceModel> {
        let dom = self.domain();
        if !theta.is_finite() || !dom.contains(theta) {
            return Err(Error::TiltOutsideDomain {
                theta,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        if theta == 0.0 {
            return Ok(self.clone());
        }
        match &self.kind {
            ServiceKind::Exponential { rate } => Self::exponential(rate - theta),
            ServiceKind::Deterministic { .. } => Ok(self.clone()),
            ServiceKind::Gamma { shape, scale } => Self::gamma(*shape, scale / (1.0 - scale * theta)),
            ServiceKind::Empirical { .. } => {
                let (w, x) = self.tilted_atoms(theta);
                let atoms = x.to_vec();
                let pairs: Vec<(f64, f64)> = atoms.into_iter().zip(w).collect();
                Self::empirical(&pairs)
            }
        }
    }

    /// Per-unit Cramér rate `Λ*(z) = sup_θ {θz - φ(θ)}`, in closed form
    /// where one exists.
    pub fn rate_function(&self, z: f64) -> f64 {
        match &self.kind {
            ServiceKind::Exponential { rate } => {
                if z <= 0.0 {
                    f64::INFINITY
                } else {
                    let rz = rate * z;
                    rz - 1.0 - rz.ln()
                }
            }
            ServiceKind::Gamma { shape, scale } => {
                if z <= 0.0 {
                    f64::INFINITY
                } else {
                    let u = z / (shape * scale);
                    shape * (u - 1.0 - u.ln())
                }
            }
            ServiceKind::Deterministic { value } => {
                if (z - value).abs() <= 1e-9 * value {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ServiceKind::Empirical { atoms, weights } => {
                let (lo, hi) = (atoms[0], *atoms.last().unwrap());
                if z < lo || z > hi {
                    f64::INFINITY
                } else if z == lo {
                    -weights[0].ln()
                } else if z == hi {
                    -weights.last().unwrap().ln()
                } else {
                    let theta = self.rate_slope(z);
                    (theta * z - self.cgf(theta)).max(0.0)
                }
            }
        }
    }

    /// Derivative of [`rate_function`](Self::rate_function): the tilt
    /// `θ*(z)` with `φ'(θ*) = z`. `±inf` at and beyond the support edges.
    pub fn rate_slope(&self, z: f64) -> f64 {
        match &self.kind {
            ServiceKind::Exponential { rate } => {
                if z <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate - 1.0 / z
                }
            }
            ServiceKind::Gamma { shape, scale } => {
                if z <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    1.0 / scale - shape / z
                }
            }
            ServiceKind::Deterministic { value } => {
                if z < *value {
                    f64::NEG_INFINITY
                } else if z > *value {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            ServiceKind::Empirical { atoms, .. } => {
                let (lo, hi) = (atoms[0], *atoms.last().unwrap());
                if z <= lo {
                    return f64::NEG_INFINITY;
                }
                if z >= hi {
                    return f64::INFINITY;
                }
                let g = |th: f64| self.cgf_derivative(th) - z;
                let mut a = -1.0;
                while g(a) > 0.0 {
                    a *= 2.0;
                }
                let mut b = 1.0;
                while g(b) < 0.0 {
                    b *= 2.0;
                }
                optim::bisect_increasing(g, a, b, 200)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ServiceKind::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            ServiceKind::Deterministic { value } => *value,
            ServiceKind::Gamma { shape, scale } => rand_distr::Gamma::new(*shape, *scale)
                .expect("validated gamma parameters")
                .sample(rng),
            ServiceKind::Empirical { atoms, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *x;
                    }
                }
                *atoms.last().unwrap()
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// `n` i.i.d. service times drawn from the stream `rng`.
pub fn sample_service(n: usize, model: &ServiceModel, rng: &RngSpec) -> Vec<f64> {
    model.sample_n(n, &mut rng.rng())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalKind {
    /// Uniform on [0, 1].
    Uniform,
    /// `F(y) = y^exponent` on [0, 1].
    Power { exponent: f64 },
    /// `F(y) = 1 - exp(-rate * y)` on [0, inf).
    Exponential { rate: f64 },
    /// Piecewise-linear CDF through `(x, F(x))` knots, starting at `(0, 0)`
    /// and ending at `F = 1`. Flat pieces are allowed.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

/// Law `F` of the unordered arrival epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalModel {
    kind: ArrivalKind,
}

impl ArrivalModel {
    pub fn uniform() -> Self {
        Self {
            kind: ArrivalKind::Uniform,
        }
    }

    pub fn new(kind: ArrivalKind) -> Result<Self> {
        match &kind {
            ArrivalKind::Uniform => {}
            ArrivalKind::Power { exponent } => {
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return Err(invalid("exponent", format!("must be positive, got {exponent}")));
                }
            }
            ArrivalKind::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(invalid("rate", format!("must be positive, got {rate}")));
                }
            }
            ArrivalKind::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(invalid("knots", "need at least two knots"));
                }
                if knots[0] != (0.0, 0.0) {
                    return Err(invalid("knots", "first knot must be (0, 0)"));
                }
                if knots.last().unwrap().1 != 1.0 {
                    return Err(invalid("knots", "last knot must reach F = 1"));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(invalid("knots", "knot abscissae must be strictly increasing"));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(invalid("knots", "CDF values must be nondecreasing"));
                    }
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn kind(&self) -> &ArrivalKind {
        &self.kind
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            ArrivalKind::Uniform => y.min(1.0),
            ArrivalKind::Power { exponent } => y.min(1.0).powf(*exponent),
            ArrivalKind::Exponential { rate } => -(-rate * y).exp_m1(),
            ArrivalKind::PiecewiseLinear { knots } => {
                let i = knots.partition_point(|k| k.0 <= y);
                if i >= knots.len() {
                    return 1.0;
                }
                let (x0, f0) = knots[i - 1];
                let (x1, f1) = knots[i];
                f0 + (f1 - f0) * (y - x0) / (x1 - x0)
            }
        }
    }

    /// Generalised inverse `inf{y : F(y) >= u}`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ArrivalKind::Uniform => u,
            ArrivalKind::Power { exponent } => u.powf(1.0 / exponent),
            ArrivalKind::Exponential { rate } => -(-u).ln_1p() / rate,
            ArrivalKind::PiecewiseLinear { knots } => {
                if u <= 0.0 {
                    return 0.0;
                }
                let i = knots.partition_point(|k| k.1 < u);
                let i = i.min(knots.len() - 1);
                let (x0, f0) = knots[i - 1];
                let (x1, f1) = knots[i];
                if f1 == f0 {
                    x0
                } else {
                    x0 + (x1 - x0) * (u - f0) / (f1 - f0)
                }
            }
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        true
    }

    pub fn is_strictly_increasing(&self) -> bool {
        match &self.kind {
            ArrivalKind::PiecewiseLinear { knots } => knots.windows(2).all(|w| w[1].1 > w[0].1),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStatMethod {
    /// Sort `n` i.i.d. uniforms.
    Sort,
    /// Normalised partial sums of `n + 1` unit exponentials.
    ExpoRatio,
}

/// Ordered epochs `Z_j / Z_{n+1}` from the exponentials `ξ_1..ξ_{n+1}`.
pub fn expo_ratio_epochs(xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() < 2 {
        return Err(invalid("xi", "need n + 1 >= 2 exponentials"));
    }
    let mut z = 0.0;
    let mut partial: Vec<f64> = xi
        .iter()
        .map(|x| {
            z += x;
            z
        })
        .collect();
    let total = partial.pop().unwrap();
    partial.iter_mut().for_each(|p| *p /= total);
    Ok(partial)
}

pub fn sample_uniform_order_stats_with<R: Rng + ?Sized>(
    n: usize,
    method: OrderStatMethod,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n", "population size must be at least 1"));
    }
    match method {
        OrderStatMethod::Sort => {
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            u.sort_by(f64::total_cmp);
            Ok(u)
        }
        OrderStatMethod::ExpoRatio => {
            let xi: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
            expo_ratio_epochs(&xi)
        }
    }
}

/// `n` ordered Uniform(0,1) epochs.
pub fn sample_uniform_order_stats(n: usize, method: OrderStatMethod, rng: &RngSpec) -> Result<Vec<f64>> {
    sample_uniform_order_stats_with(n, method, &mut rng.rng())
}
