//! Oracles shared by the integration tests.
#![allow(dead_code)]

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(U_(m) >= c_m for m = 1..K)` for `n` i.i.d. uniforms and nondecreasing
/// boundaries `c`, by a dynamic programme over the number of points below
/// the current boundary.
pub fn prob_order_stats_above(n: usize, c: &[f64]) -> f64 {
    let mut dist = vec![0.0; n + 1];
    dist[0] = 1.0;
    let mut prev = 0.0_f64;
    for (j, &cj) in c.iter().enumerate() {
        let cj = cj.max(prev).max(0.0);
        if cj >= 1.0 {
            return 0.0;
        }
        let q = (cj - prev) / (1.0 - prev);
        let mut next = vec![0.0; n + 1];
        for (r, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for add in 0..=(n - r) {
                let nr = r + add;
                // at most j points (0-based j) may lie below c_{j+1}
                if nr <= j {
                    next[nr] += p * binom(n - r, add) * q.powi(add as i32) * (1.0 - q).powi((n - r - add) as i32);
                }
            }
        }
        dist = next;
        prev = cj;
    }
    dist.iter().sum()
}

/// Exact `P(W_k > w)`, `k = ⌊nt⌋`, for uniform arrivals and a discrete
/// service law, by enumerating the services of jobs `1..k-1`.
///
/// Given the services, `W_k > w` iff `T_(k) - T_(k-m) < D_m - w` for some
/// `m < k`, where `D_m` sums the last `m` scaled services before job `k`.
/// Spacings are exchangeable, so the backward gaps `T_(k) - T_(k-m)` have
/// the joint law of `U_(m)`.
pub fn exact_workload_tail_discrete(n: usize, t: f64, w: f64, atoms: &[(f64, f64)]) -> f64 {
    assert!(w >= 0.0);
    let k = (n as f64 * t + 1e-9).floor() as usize;
    if k <= 1 {
        return 0.0;
    }
    let jobs = k - 1;
    let mut total = 0.0;
    let mut idx = vec![0usize; jobs];
    loop {
        let weight: f64 = idx.iter().map(|&i| atoms[i].1).product();
        let nu: Vec<f64> = idx.iter().map(|&i| atoms[i].0 / n as f64).collect();
        let c: Vec<f64> = (1..k).map(|m| nu[jobs - m..].iter().sum::<f64>() - w).collect();
        total += weight * (1.0 - prob_order_stats_above(n, &c));
        // next combination
        let mut pos = 0;
        loop {
            if pos == jobs {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < atoms.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
