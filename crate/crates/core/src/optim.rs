//! One-dimensional solvers shared by the rate-function evaluators.
//!
//! Everything here works on extended reals: objective values of
//! `f64::INFINITY` are legal and simply lose every comparison.

/// Inverse golden ratio, (sqrt(5) - 1) / 2.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a one-dimensional search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub arg: f64,
    pub value: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
    pub converged: bool,
}

/// Golden-section minimisation of a unimodal `f` on the open interval
/// `(lo, hi)`. Only interior points are evaluated. On plateaus the left
/// probe wins, so the leftmost minimiser is returned.
pub fn golden_min<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Extremum
where
    F: FnMut(f64) -> f64,
{
    assert!(lo < hi, "empty bracket ({lo}, {hi})");
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    // absolute width for |x| <= 1, relative beyond
    while (b - a) > tol * (0.5 * (a.abs() + b.abs())).max(1.0) && iterations < max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
        if c >= d {
            // bracket collapsed to adjacent floats
            break;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let (arg, value) = [(c, fc), (mid, fm), (d, fd)]
        .into_iter()
        .fold((mid, fm), |best, cand| if cand.1 < best.1 { cand } else { best });
    Extremum {
        arg,
        value,
        iterations,
        width: b - a,
        converged: iterations < max_iter,
    }
}

/// Maximises a concave `f` over the open interval `(lo, hi)` starting from
/// the interior point `start`. The bracket is grown geometrically (towards a
/// finite boundary by halving the remaining gap), then refined by golden
/// section to width `tol`.
///
/// If the objective keeps increasing all the way to the edge of the search
/// range the supremum is reported: `+inf` when the increments do not die out,
/// the last finite value otherwise.
pub fn maximize_concave<F>(mut f: F, lo: f64, hi: f64, start: f64, tol: f64) -> Extremum
where
    F: FnMut(f64) -> f64,
{
    const MAX_ABS: f64 = 1e12;
    const MAX_GROW: usize = 200;
    debug_assert!(lo < start && start < hi);

    let f0 = f(start);
    let step0 = 1.0_f64;
    let advance = |from: f64, step: f64, dir: f64| -> f64 {
        let edge = if dir > 0.0 { hi } else { lo };
        if edge.is_finite() {
            let gap = (edge - from).abs();
            from + dir * step.min(0.5 * gap)
        } else {
            from + dir * step
        }
    };

    let right = advance(start, step0, 1.0);
    let left = advance(start, step0, -1.0);
    let fr = f(right);
    let fl = f(left);

    let (a, b, grow_iters);
    if fr <= f0 && fl <= f0 {
        a = left;
        b = right;
        grow_iters = 0;
    } else {
        let dir = if fr > f0 { 1.0 } else { -1.0 };
        let (mut prev, mut cur, mut fcur) = if dir > 0.0 {
            (start, right, fr)
        } else {
            (start, left, fl)
        };
        let mut fprev = f0;
        let mut step = step0;
        let mut iters = 0;
        loop {
            step *= 2.0;
            let next = advance(cur, step, dir);
            let exhausted = next == cur || next.abs() > MAX_ABS || iters >= MAX_GROW;
            if exhausted {
                // Supremum approached at the end of the search range.
                let increment = fcur - fprev;
                let value = if fcur.is_infinite()
                    || increment > 1e-12 * fcur.abs().max(1.0) && next.abs() > MAX_ABS
                {
                    f64::INFINITY
                } else {
                    fcur
                };
                return Extremum {
                    arg: cur,
                    value,
                    iterations: iters,
                    width: 0.0,
                    converged: true,
                };
            }
            let fnext = f(next);
            iters += 1;
            if fnext < fcur {
                a = prev.min(next);
                b = prev.max(next);
                break;
            }
            prev = cur;
            fprev = fcur;
            cur = next;
            fcur = fnext;
        }
        grow_iters = iters;
    }

    let res = golden_min(|x| -f(x), a, b, tol, 400);
    let mut out = Extremum {
        arg: res.arg,
        value: -res.value,
        iterations: grow_iters + res.iterations,
        width: res.width,
        converged: res.converged,
    };
    if f0 > out.value {
        out.arg = start;
        out.value = f0;
    }
    out
}

/// Root of a nondecreasing function `g` on `[lo, hi]` by bisection.
/// Returns the endpoint when `g` does not change sign.
pub fn bisect_increasing<G>(mut g: G, mut lo: f64, mut hi: f64, max_iter: usize) -> f64
where
    G: FnMut(f64) -> f64,
{
    if g(lo) >= 0.0 {
        return lo;
    }
    if g(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of a nondecreasing `g` on `(lo, +inf)`: grows an upper bracket from
/// `lo + 1` by doubling, then bisects. `lo` itself is never evaluated.
pub fn bisect_increasing_unbounded<G>(mut g: G, lo: f64, max_iter: usize) -> f64
where
    G: FnMut(f64) -> f64,
{
    let mut hi = lo.abs().max(1.0) + lo;
    let mut width = hi - lo;
    let mut guard = 0;
    while g(hi) < 0.0 && guard < 2000 {
        width *= 2.0;
        hi = lo + width;
        guard += 1;
    }
    // lower end: approach lo from above until negative
    let mut low = lo + 0.5 * (hi - lo);
    let mut guard = 0;
    while g(low) >= 0.0 && guard < 2000 {
        low = lo + 0.5 * (low - lo);
        if low <= lo {
            return low.max(lo);
        }
        guard += 1;
    }
    bisect_increasing(g, low, hi, max_iter)
}
