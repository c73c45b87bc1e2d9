//! Scalar search utilities: log-spaced grids, golden-section maximization,
//! and bisection.

/// `n` points from `a` to `b`, equally spaced in log scale. Endpoints are
/// exact. Requires `0 < a < b` and `n >= 2`.
pub(crate) fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    debug_assert!(a > 0.0 && a < b && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = a;
    v[n - 1] = b;
    v
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `f` on `[a, b]` to relative interval
/// tolerance `rel_tol`. Returns `(x, f(x))` for the best point probed,
/// including the bracket endpoints.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    debug_assert!(a <= b);
    let mut lo = a;
    let mut hi = b;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = (x1, f1);
    if f2 > best.1 {
        best = (x2, f2);
    }
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > rel_tol * scale {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        let (xc, fc) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if fc > best.1 {
            best = (xc, fc);
        }
    }
    for (x, fx) in [(a, f(a)), (b, f(b))] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Bisection for a root of `f` on `[a, b]`, assuming `f(a) < 0 <= f(b)`.
/// Iterates until the interval can no longer be split in floating point,
/// which is far tighter than any fixed tolerance.
pub(crate) fn bisect_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    let mut lo = a;
    let mut hi = b;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
