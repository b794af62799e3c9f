//! Small numerical toolkit: log-space helpers, quadrature, compensated sums.

use std::sync::OnceLock;

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

pub const LN_2: f64 = std::f64::consts::LN_2;
/// Largest exponent argument accepted before the result is treated as overflow.
pub const EXP_GUARD: f64 = 700.0;

/// log C(n, m). Exact-sum form for small m, log-gamma otherwise.
pub fn ln_binomial(n: u64, m: u64) -> f64 {
    if m > n {
        return f64::NEG_INFINITY;
    }
    let m = m.min(n - m);
    if m <= 20 {
        let mut s = 0.0;
        for i in 0..m {
            s += ((n - i) as f64 / (i + 1) as f64).ln();
        }
        s
    } else {
        let (n, m) = (n as f64, m as f64);
        ln_gamma(n + 1.0) - ln_gamma(m + 1.0) - ln_gamma(n - m + 1.0)
    }
}

/// ln erfc(x), accurate far into the right tail.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        let x2 = x * x;
        let inv = 1.0 / (2.0 * x2);
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv + 105.0 * inv.powi(4);
        -x2 - (x * std::f64::consts::PI.sqrt()).ln() + series.ln()
    }
}

/// ln P(Z > z) for standard normal Z.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < -8.0 {
        // sf is essentially 1; use log1p of the left tail.
        (-0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln_1p()
    } else {
        ln_erfc(z / std::f64::consts::SQRT_2) - LN_2
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// z with -ln P(Z > z) = y, for y >= 0. Newton-polished in log space.
pub fn normal_isf_ln(y: f64) -> f64 {
    if y <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let p = (-y).exp();
    let mut z = if p > 1e-300 {
        std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    } else {
        (2.0 * y).sqrt()
    };
    for _ in 0..4 {
        let f = -ln_normal_sf(z) - y;
        // d/dz [-ln sf] = pdf/sf
        let ln_pdf = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let d = (ln_pdf - ln_normal_sf(z)).exp();
        if !d.is_finite() || d == 0.0 {
            break;
        }
        let step = f / d;
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// ln(e^a + e^b).
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln(1 - e^{-x}) for x >= 0.
pub fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Kahan sum of a slice in index order.
pub fn kahan_sum(xs: &[f64]) -> f64 {
    let mut k = KahanSum::new();
    for &x in xs {
        k.add(x);
    }
    k.value()
}

const GL_ORDER: usize = 16;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

/// Gauss-Legendre integral of `f` over `[a, b]` split into `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let nodes = gauss_legendre();
    let h = (b - a) / panels as f64;
    let mut total = KahanSum::new();
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for &(x, w) in nodes {
            s += w * f(mid + 0.5 * h * x);
        }
        total.add(0.5 * h * s);
    }
    total.value()
}

/// Integral over consecutive breakpoints, each interval integrated with `panels` panels.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], panels: usize) -> f64 {
    let mut total = KahanSum::new();
    for w in breaks.windows(2) {
        total.add(integrate(&f, w[0], w[1], panels));
    }
    total.value()
}

/// Geometric breakpoints `0, lo, lo*r, ..., hi`.
pub fn geometric_breaks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    let r = (hi / lo).powf(1.0 / (count.max(2) - 1) as f64);
    let mut x = lo;
    for _ in 0..count {
        v.push(x.min(hi));
        x *= r;
    }
    v.dedup();
    v
}

/// Root of a non-decreasing function `f(x) - y` on `[0, inf)` by doubling bracket and bisection.
pub fn monotone_inverse<F: Fn(f64) -> f64>(f: F, y: f64, rel_tol: f64) -> f64 {
    if f(0.0) >= y {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) < y {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= y {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_and_large() {
        assert!((ln_binomial(5, 2) - 10f64.ln()).abs() < 1e-14);
        assert_eq!(ln_binomial(7, 0), 0.0);
        let direct: f64 = (0..30).map(|i| ((100 - i) as f64 / (i + 1) as f64).ln()).sum();
        assert!((ln_binomial(100, 30) - direct).abs() < 1e-9);
    }

    #[test]
    fn ln_erfc_matches_in_overlap() {
        for &x in &[1.0, 5.0, 20.0, 24.9] {
            assert!((ln_erfc(x) - erfc(x).ln()).abs() < 1e-9 * erfc(x).ln().abs());
        }
        // continuity across the switch
        assert!((ln_erfc(24.999_999) - ln_erfc(25.0)).abs() < 1e-4);
    }

    #[test]
    fn normal_isf_roundtrip() {
        for &y in &[0.01, 0.7, 3.0, 40.0, 600.0, 2000.0] {
            let z = normal_isf_ln(y);
            assert!((-ln_normal_sf(z) - y).abs() < 1e-9 * y.max(1.0), "y={y}");
        }
    }

    #[test]
    fn quadrature_polynomial_and_exp() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1);
        assert!((v - 9.0).abs() < 1e-12);
        let br = geometric_breaks(1e-3, 60.0, 40);
        let e = integrate_breaks(|x| (-x).exp(), &br, 2);
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_inverse() {
        let r = monotone_inverse(|x| x.sqrt(), 3.0, 1e-13);
        assert!((r - 9.0).abs() < 1e-10);
        assert_eq!(monotone_inverse(|x| x, 0.0, 1e-12), 0.0);
    }

    #[test]
    fn kahan_beats_naive() {
        let xs: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat(1e-16).take(10_000)).collect();
        assert!((kahan_sum(&xs) - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
