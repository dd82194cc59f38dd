//! Exact tails, crude Monte Carlo and importance sampling for the rare
//! events of the transitory queue, plus empirical decay-rate checks.
//!
//! Replications are cut into fixed-size chunks; chunk `c` draws from
//! `rng.substream(c)`, and chunk sums are reduced in chunk order, so results
//! depend only on the seed and never on the thread count.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::optim::golden_min;
use crate::queue::{floor_index, lindley_workload, QueueRealization};
use crate::rate::{os_rate, scaled_rate, POINTWISE_TOL};
use crate::stochastic::{
    expo_ratio_epochs, sample_uniform_order_stats_with, ArrivalKind, ArrivalModel, OrderStatMethod, RngSpec,
    ServiceModel,
};

/// Replications per RNG substream.
pub const CHUNK: usize = 1024;
const Z95: f64 = 1.959_963_984_540_054;

/// Exact probability together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProbability {
    pub p: f64,
    pub log_p: f64,
}

impl TailProbability {
    fn from_log(log_p: f64) -> Self {
        Self { p: log_p.exp(), log_p }
    }
}

/// `ln P(Bin(n, a) = j)` for all `j`, built outward from the mode.
fn binomial_log_pmf(n: usize, a: f64) -> Vec<f64> {
    let (la, lb) = (a.ln(), (-a).ln_1p());
    let mode = (((n + 1) as f64 * a).floor() as usize).min(n);
    let log_choose_mode: f64 = (1..=mode)
        .map(|i| ((n - mode + i) as f64 / i as f64).ln())
        .sum();
    let mut out = vec![0.0; n + 1];
    out[mode] = log_choose_mode + mode as f64 * la + (n - mode) as f64 * lb;
    let odds = la - lb;
    for j in mode..n {
        out[j + 1] = out[j] + ((n - j) as f64 / (j + 1) as f64).ln() + odds;
    }
    for j in (1..=mode).rev() {
        out[j - 1] = out[j] + (j as f64 / (n - j + 1) as f64).ln() - odds;
    }
    out
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(1 - e^x)` for `x <= 0`.
fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Validates the query and settles the cases that need no summation.
fn os_tail_edge_cases(n: usize, t: f64, a: f64) -> Result<Option<TailProbability>> {
    if n == 0 {
        return Err(invalid("n", "population size must be at least 1"));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid("t", format!("time must lie in (0, 1], got {t}")));
    }
    let k = floor_index(n, t);
    if k == 0 || a >= 1.0 {
        return Ok(Some(TailProbability { p: 1.0, log_p: 0.0 }));
    }
    if a <= 0.0 {
        return Ok(Some(TailProbability {
            p: 0.0,
            log_p: f64::NEG_INFINITY,
        }));
    }
    Ok(None)
}

/// `P(T_(⌊nt⌋) <= a) = P(Bin(n, a) >= ⌊nt⌋)`, summed in log space from the
/// smaller tail.
pub fn exact_os_tail(n: usize, t: f64, a: f64) -> Result<TailProbability> {
    if let Some(p) = os_tail_edge_cases(n, t, a)? {
        return Ok(p);
    }
    let k = floor_index(n, t);
    let pmf = binomial_log_pmf(n, a);
    let mean = n as f64 * a;
    let log_p = if k as f64 > mean {
        log_sum_exp(&pmf[k..])
    } else {
        log1m_exp(log_sum_exp(&pmf[..k]))
    };
    Ok(TailProbability::from_log(log_p.min(0.0)))
}

/// Same probability as `1 - P(Bin(n, a) <= k-1)`, with the lower tail
/// accumulated term by term from `j = k-1` downwards. Used as an independent
/// cross-check of [`exact_os_tail`].
pub fn exact_os_tail_by_complement(n: usize, t: f64, a: f64) -> Result<TailProbability> {
    if let Some(p) = os_tail_edge_cases(n, t, a)? {
        return Ok(p);
    }
    let k = floor_index(n, t);
    let pmf = binomial_log_pmf(n, a);
    let mut lower = 0.0;
    for j in (0..k).rev() {
        lower += pmf[j].exp();
    }
    let p = (1.0 - lower).max(0.0);
    Ok(TailProbability { p, log_p: p.ln() })
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ChunkSums {
    w: Kahan,
    w2: Kahan,
    hits: u64,
    reps: u64,
}

/// Runs `reps` replications of `one` (returning the weight of a replication,
/// 0 for a miss) over parallel chunks.
fn run_chunks<F>(reps: usize, rng: &RngSpec, one: F) -> Result<ChunkSums>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let partial: Vec<Result<ChunkSums>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c as u64).rng();
            let count = CHUNK.min(reps - c * CHUNK);
            let mut s = ChunkSums::default();
            for _ in 0..count {
                let w = one(&mut r)?;
                s.w.add(w);
                s.w2.add(w * w);
                s.hits += (w != 0.0) as u64;
                s.reps += 1;
            }
            Ok(s)
        })
        .collect();
    let mut total = ChunkSums::default();
    for p in partial {
        let p = p?;
        total.w.add(p.w.sum);
        total.w2.add(p.w2.sum);
        total.hits += p.hits;
        total.reps += p.reps;
    }
    Ok(total)
}

/// Tilts used by the importance sampler. `first` applies to the spacing
/// exponentials `ξ_1..ξ_k`, `rest` to `ξ_{k+1}..ξ_{n+1}`, and `service` to
/// the services of jobs `1..k`, where `k = ⌊nt⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Tilts {
    pub first: f64,
    pub rest: f64,
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub reps: u64,
    /// Replications with a nonzero contribution.
    pub hits: u64,
    /// Sample variance of a single replication's contribution.
    pub variance: f64,
    pub std_error: f64,
    pub ci_normal: (f64, f64),
    /// Delta-method interval for `ln p`, mapped back.
    pub ci_log: (f64, f64),
    /// Wilson score interval, reported for crude MC when fewer than 30 hits.
    pub ci_wilson: Option<(f64, f64)>,
    pub tilts: Option<Tilts>,
}

impl McEstimate {
    fn from_sums(s: ChunkSums, tilts: Option<Tilts>) -> Self {
        let r = s.reps as f64;
        let p = s.w.sum / r;
        let variance = if s.reps > 1 {
            ((s.w2.sum - r * p * p) / (r - 1.0)).max(0.0)
        } else {
            0.0
        };
        let se = (variance / r).sqrt();
        let upper_cap = p.max(1.0);
        let ci_normal = ((p - Z95 * se).max(0.0), (p + Z95 * se).min(upper_cap));
        let ci_log = if p > 0.0 {
            let f = (Z95 * se / p).exp();
            (p / f, (p * f).min(upper_cap))
        } else {
            (0.0, 0.0)
        };
        let ci_wilson = (tilts.is_none() && s.hits < 30).then(|| wilson(s.hits as f64, r));
        Self {
            p_hat: p,
            reps: s.reps,
            hits: s.hits,
            variance,
            std_error: se,
            ci_normal,
            ci_log,
            ci_wilson,
            tilts,
        }
    }

    /// Preferred interval: Wilson when available, else the log-scale one
    /// (or the normal one when nothing was hit).
    pub fn ci(&self) -> (f64, f64) {
        match self.ci_wilson {
            Some(ci) => ci,
            None if self.p_hat > 0.0 => self.ci_log,
            None => self.ci_normal,
        }
    }

    pub fn relative_half_width(&self) -> f64 {
        if self.p_hat > 0.0 {
            Z95 * self.std_error / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

fn wilson(k: f64, n: f64) -> (f64, f64) {
    let p = k / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Population size with arrival and service laws.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTemplate {
    pub n: usize,
    pub arrival: ArrivalModel,
    pub service: ServiceModel,
}

impl QueueTemplate {
    pub fn new(n: usize, arrival: ArrivalModel, service: ServiceModel) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "population size must be at least 1"));
        }
        Ok(Self { n, arrival, service })
    }

    pub fn uniform(n: usize, service: ServiceModel) -> Result<Self> {
        Self::new(n, ArrivalModel::uniform(), service)
    }
}

/// Event `{X <= threshold}` or `{X > threshold}` at time `t` for population `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    AtMost,
    Exceeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailQuery {
    pub n: usize,
    pub t: f64,
    pub threshold: f64,
    pub direction: Direction,
}

impl TailQuery {
    pub fn new(n: usize, t: f64, threshold: f64, direction: Direction) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "population size must be at least 1"));
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid("t", format!("time must lie in (0, 1], got {t}")));
        }
        Ok(Self { n, t, threshold, direction })
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 100 {
        return Err(invalid("reps", format!("need at least 100 replications, got {reps}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid("t", format!("time must lie in (0, 1], got {t}")));
    }
    Ok(())
}

/// Crude Monte Carlo estimate of `P(W^n(t) > w)`. For each replication the
/// epochs are drawn first and the services after them.
pub fn mc_workload_tail(
    q: &QueueTemplate,
    t: f64,
    w: f64,
    reps: usize,
    method: OrderStatMethod,
    rng: &RngSpec,
) -> Result<McEstimate> {
    check_reps(reps)?;
    check_time(t)?;
    let k = floor_index(q.n, t);
    let sums = run_chunks(reps, rng, |r| {
        let real = QueueRealization::sample(q.n, &q.arrival, &q.service, method, r)?;
        Ok(if lindley_workload(&real)[k] > w { 1.0 } else { 0.0 })
    })?;
    Ok(McEstimate::from_sums(sums, None))
}

/// Checks that every tilt is admissible: spacing tilts below 1 and the
/// service tilt inside the open CGF domain.
fn validated_tilts(service: &ServiceModel, tilts: &Tilts) -> Result<ServiceModel> {
    for th in [tilts.first, tilts.rest] {
        if !(th < 1.0 && th.is_finite()) {
            return Err(crate::Error::TiltOutsideDomain {
                theta: th,
                lo: f64::NEG_INFINITY,
                hi: 1.0,
            });
        }
    }
    service.tilt(tilts.service)
}

/// Draws `n + 1` spacing exponentials, the first `k` with mean
/// `1/(1-θ_first)` and the rest with mean `1/(1-θ_rest)`, and returns them
/// with the log likelihood ratio of the draw.
fn tilted_spacings<R: Rng + ?Sized>(n: usize, k: usize, tilts: &Tilts, rng: &mut R) -> (Vec<f64>, f64) {
    let mut xi = Vec::with_capacity(n + 1);
    let mut log_lr = 0.0;
    for i in 0..=n {
        let th = if i < k { tilts.first } else { tilts.rest };
        let e: f64 = Exp1.sample(rng);
        let x = e / (1.0 - th);
        xi.push(x);
        if th != 0.0 {
            log_lr += -th * x - (-th).ln_1p();
        }
    }
    (xi, log_lr)
}

/// Importance-sampling estimate of `P(W^n(t) > w)`.
///
/// Epochs come from normalised partial sums of exponentially tilted spacings
/// and services `1..k` from the tilted service law; each hit is weighted by
/// the exact likelihood ratio. With all tilts zero the draws and the result
/// coincide with [`mc_workload_tail`] using [`OrderStatMethod::ExpoRatio`].
pub fn is_workload_tail(q: &QueueTemplate, t: f64, w: f64, tilts: Tilts, reps: usize, rng: &RngSpec) -> Result<McEstimate> {
    check_reps(reps)?;
    check_time(t)?;
    let tilted = validated_tilts(&q.service, &tilts)?;
    let k = floor_index(q.n, t);
    let n = q.n;
    let phi = q.service.cgf(tilts.service);
    let uniform = matches!(q.arrival.kind(), ArrivalKind::Uniform);
    let sums = run_chunks(reps, rng, |r| {
        let (xi, mut log_lr) = tilted_spacings(n, k, &tilts, r);
        let mut epochs = expo_ratio_epochs(&xi)?;
        if !uniform {
            epochs.iter_mut().for_each(|u| *u = q.arrival.quantile(*u));
        }
        let mut services = Vec::with_capacity(n);
        for i in 0..n {
            let v = if i < k { tilted.sample(r) } else { q.service.sample(r) };
            if i < k && tilts.service != 0.0 {
                log_lr += -tilts.service * v + phi;
            }
            services.push(v);
        }
        let real = QueueRealization::new(epochs, services)?;
        Ok(if lindley_workload(&real)[k] > w { log_lr.exp() } else { 0.0 })
    })?;
    Ok(McEstimate::from_sums(sums, Some(tilts)))
}

/// Crude Monte Carlo estimate of `P(T_(⌊nt⌋) <= a)` for uniform epochs.
pub fn mc_os_tail(n: usize, t: f64, a: f64, reps: usize, method: OrderStatMethod, rng: &RngSpec) -> Result<McEstimate> {
    check_reps(reps)?;
    check_time(t)?;
    let k = floor_index(n, t);
    let sums = run_chunks(reps, rng, |r| {
        let e = sample_uniform_order_stats_with(n, method, r)?;
        let tk = if k == 0 { 0.0 } else { e[k - 1] };
        Ok(if tk <= a { 1.0 } else { 0.0 })
    })?;
    Ok(McEstimate::from_sums(sums, None))
}

/// Importance-sampling estimate of `P(T_(⌊nt⌋) <= a)` using only the
/// spacing tilts (`tilts.service` is ignored).
pub fn is_os_tail(n: usize, t: f64, a: f64, tilts: Tilts, reps: usize, rng: &RngSpec) -> Result<McEstimate> {
    check_reps(reps)?;
    check_time(t)?;
    let tilts = Tilts { service: 0.0, ..tilts };
    validated_tilts(&ServiceModel::deterministic(1.0)?, &tilts)?;
    let k = floor_index(n, t);
    let sums = run_chunks(reps, rng, |r| {
        let (xi, log_lr) = tilted_spacings(n, k, &tilts, r);
        let e = expo_ratio_epochs(&xi)?;
        let tk = if k == 0 { 0.0 } else { e[k - 1] };
        Ok(if tk <= a { log_lr.exp() } else { 0.0 })
    })?;
    Ok(McEstimate::from_sums(sums, Some(tilts)))
}

/// Spacing tilts that make `T_(⌊nt⌋) ≈ x` typical: the first block is
/// stretched to mean `x/t`, the rest to mean `(1-x)/(1-t)`.
pub fn os_tilts(t: f64, x: f64) -> Tilts {
    Tilts {
        first: 1.0 - t / x,
        rest: (t - x) / (1.0 - x),
        service: 0.0,
    }
}

/// Heuristic tilts for `P(W^n(t) > w)` with uniform arrivals: take the
/// cheapest way to build workload `w` over the whole horizon, arrivals up to
/// `t` totalling `x*` and services `x* + w`, and tilt towards it.
pub fn default_workload_tilts(service: &ServiceModel, t: f64, w: f64) -> Tilts {
    let mean = service.mean();
    let w = w.max(0.0);
    let obj = |x: f64| os_rate(t, x) + scaled_rate(service, t, (t * mean).max(x + w));
    let x = golden_min(obj, 0.0, 1.0, POINTWISE_TOL, 500).arg;
    let target = (t * mean).max(x + w) / t;
    let service_tilt = service.rate_slope(target);
    let dom = service.domain();
    let service_tilt = if service_tilt.is_finite() && dom.contains(service_tilt) {
        service_tilt
    } else {
        0.0
    };
    Tilts {
        service: service_tilt,
        ..os_tilts(t, x)
    }
}

/// Probability of one query in a decay-rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourcedProbability {
    pub p: f64,
    /// Confidence band for `p`, when the source is random.
    pub band: Option<(f64, f64)>,
}

/// Supplier of `p_n` for [`ldp_slope`].
pub trait ProbabilitySource {
    fn probability(&self, n: usize) -> Result<SourcedProbability>;
}

impl<F> ProbabilitySource for F
where
    F: Fn(usize) -> Result<SourcedProbability>,
{
    fn probability(&self, n: usize) -> Result<SourcedProbability> {
        self(n)
    }
}

/// `P(T_(⌊nt⌋) <= a)` from [`exact_os_tail`].
#[derive(Debug, Clone, Copy)]
pub struct ExactOsSource {
    pub t: f64,
    pub a: f64,
}

impl ProbabilitySource for ExactOsSource {
    fn probability(&self, n: usize) -> Result<SourcedProbability> {
        Ok(SourcedProbability {
            p: exact_os_tail(n, self.t, self.a)?.p,
            band: None,
        })
    }
}

/// `P(T_(⌊nt⌋) <= a)` estimated by crude MC or by importance sampling.
#[derive(Debug, Clone, Copy)]
pub struct SampledOsSource {
    pub t: f64,
    pub a: f64,
    pub reps: usize,
    pub rng: RngSpec,
    /// `None` for crude MC.
    pub tilts: Option<Tilts>,
}

impl ProbabilitySource for SampledOsSource {
    fn probability(&self, n: usize) -> Result<SourcedProbability> {
        let rng = self.rng.substream(n as u64);
        let est = match self.tilts {
            None => mc_os_tail(n, self.t, self.a, self.reps, OrderStatMethod::ExpoRatio, &rng)?,
            Some(tl) => is_os_tail(n, self.t, self.a, tl, self.reps, &rng)?,
        };
        Ok(SourcedProbability {
            p: est.p_hat,
            band: Some(est.ci()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub n: usize,
    pub p: f64,
    /// `-(1/n) ln p_n`.
    pub decay: f64,
    pub rate_ref: f64,
    /// `|decay - rate_ref|`.
    pub gap: f64,
    /// Range of the gap over the confidence band of `p_n`, if any.
    pub gap_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
    /// Values of `n` dropped because `p_n = 0`.
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
    /// Gaps strictly decrease along the retained `n` (in the given order).
    pub gaps_strictly_decreasing: bool,
}

/// Compares `-(1/n) ln p_n` with the reference rate for each `n`.
pub fn ldp_slope(n_list: &[usize], rate_ref: f64, source: &dyn ProbabilitySource) -> Result<SlopeReport> {
    if n_list.len() < 3 {
        return Err(invalid("n_list", "need at least three population sizes"));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for &n in n_list {
        let sp = source.probability(n)?;
        if !(sp.p > 0.0) {
            excluded.push(n);
            warnings.push(format!("n = {n}: estimated probability is 0, excluded"));
            continue;
        }
        let nf = n as f64;
        let decay = -sp.p.ln() / nf;
        let gap_band = sp.band.map(|(lo, hi)| {
            let d_lo = -hi.ln() / nf;
            let d_hi = if lo > 0.0 { -lo.ln() / nf } else { f64::INFINITY };
            let g = |d: f64| (d - rate_ref).abs();
            let lo_gap = if d_lo <= rate_ref && rate_ref <= d_hi { 0.0 } else { g(d_lo).min(g(d_hi)) };
            (lo_gap, g(d_lo).max(g(d_hi)))
        });
        rows.push(SlopeRow {
            n,
            p: sp.p,
            decay,
            rate_ref,
            gap: (decay - rate_ref).abs(),
            gap_band,
        });
    }
    let gaps_strictly_decreasing = rows.len() >= 2 && rows.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(SlopeReport {
        rows,
        excluded,
        warnings,
        gaps_strictly_decreasing,
    })
}
