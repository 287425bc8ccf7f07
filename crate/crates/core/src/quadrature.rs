//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.
//!
//! Intervals are bisected in order of decreasing error estimate until the
//! summed estimate meets `max(abs_tol, rel_tol * |I|)` or the interval
//! budget is exhausted. Breakpoints let callers split at known kinks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 2000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = f_center * WGK[7];
    let mut res_g = f_center * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the
/// subintervals delimited by `points` (which must be nondecreasing).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, error) = kronrod15(&f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    while total_err > tol.abs.max(tol.rel * total.abs()) && heap.len() < tol.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the drift of the running totals.
    let intervals = heap.len();
    let (value, error) = heap
        .into_iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Estimate {
        value,
        error,
        intervals,
    }
}

/// Sorted, deduplicated breakpoints clipped to `[a, b]`, including both ends.
pub fn breakpoints(a: f64, b: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = interior
        .into_iter()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Composite Simpson rule on uniformly spaced samples (odd count required;
/// a trailing even sample is handled with a trapezoid panel).
pub fn simpson_uniform(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let panels = if (n - 1).is_multiple_of(2) { n - 1 } else { n - 2 };
    let mut sum = 0.0;
    for k in (0..panels).step_by(2) {
        sum += values[k] + 4.0 * values[k + 1] + values[k + 2];
    }
    let mut total = sum * dx / 3.0;
    if panels < n - 1 {
        total += 0.5 * dx * (values[n - 2] + values[n - 1]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, Tolerance::default());
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((est.value - exact).abs() < 1e-13);
    }

    #[test]
    fn kinked_integrand_with_breaks() {
        let f = |x: f64| (1.0 - x * x).max(0.0).sqrt();
        let est = integrate_with_breaks(f, &[-2.0, -1.0, 1.0, 2.0], Tolerance::new(1e-12, 1e-12));
        assert!((est.value - PI / 2.0).abs() < 1e-10, "{}", est.value);
    }

    #[test]
    fn exponential_tail() {
        let est = integrate(|x| (-x).exp(), 0.0, 60.0, Tolerance::default());
        assert!((est.value - (1.0 - (-60.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn simpson_cubic_exact() {
        let dx = 0.1;
        let v: Vec<f64> = (0..11).map(|k| (k as f64 * dx).powi(3)).collect();
        assert!((simpson_uniform(&v, dx) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn breakpoints_clip_and_sort() {
        let b = breakpoints(0.0, 1.0, [0.5, -1.0, 0.25, 0.5, 3.0, f64::NAN]);
        assert_eq!(b, vec![0.0, 0.25, 0.5, 1.0]);
    }
}
