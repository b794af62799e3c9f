//! Symmetric kernels: evaluation, fast U-statistics, centering, phi_n and tail functions I.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{
    geometric_breaks, integrate_breaks, ln_add_exp, ln_binomial, ln_one_minus_exp_neg, KahanSum, LN_2,
};
use crate::rng::{derive_stream, RngStream};
use crate::tail_models::{DistributionModel, TailClass};

/// Largest subset count the brute-force evaluator will enumerate.
pub const BRUTEFORCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    AbsDiff,
    SquaredDiff,
    MaxAbs { m: usize },
    OmegaSq,
    Product,
    Identity,
}

pub const KERNEL_TOKENS: [&str; 6] = ["absdiff", "sqdiff", "maxabs", "omegasq", "product", "identity"];

impl KernelFamily {
    pub fn order(&self) -> usize {
        match *self {
            Self::MaxAbs { m } => m,
            Self::Identity => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::MaxAbs { m } if m == 0 => Err(Error::ParameterDomain("maxabs order must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Uncentered kernel value. `args.len()` must equal the order.
    #[inline]
    pub fn eval_raw(&self, args: &[f64]) -> f64 {
        match *self {
            Self::AbsDiff => (args[0] - args[1]).abs(),
            Self::SquaredDiff => {
                let d = args[0] - args[1];
                d * d
            }
            Self::MaxAbs { .. } => args.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            Self::OmegaSq => 0.5 * (args[0] * args[0] + args[1] * args[1]) - args[0].max(args[1]),
            Self::Product => args[0] * args[1],
            Self::Identity => args[0],
        }
    }

    /// Uncentered U-statistic by the fast path. May reorder `xs`.
    pub fn u_raw_mut(&self, xs: &mut [f64]) -> f64 {
        let n = xs.len();
        let nf = n as f64;
        match *self {
            Self::Identity => {
                let mut s = KahanSum::new();
                xs.iter().for_each(|&x| s.add(x));
                s.value() / nf
            }
            Self::AbsDiff => {
                xs.sort_unstable_by(f64::total_cmp);
                let mut s = KahanSum::new();
                for (i, &x) in xs.iter().enumerate() {
                    s.add((2.0 * i as f64 - nf + 1.0) * x);
                }
                s.value() / (0.5 * nf * (nf - 1.0))
            }
            Self::SquaredDiff => {
                let mut s = KahanSum::new();
                xs.iter().for_each(|&x| s.add(x));
                let mean = s.value() / nf;
                let mut q = KahanSum::new();
                xs.iter().for_each(|&x| q.add((x - mean) * (x - mean)));
                nf * q.value() / (0.5 * nf * (nf - 1.0))
            }
            Self::MaxAbs { m } => {
                for x in xs.iter_mut() {
                    *x = x.abs();
                }
                xs.sort_unstable_by(f64::total_cmp);
                // w_i = C(i-1, m-1) / C(n, m), 1-based, built downward from w_n = m/n.
                let mut w = m as f64 / nf;
                let mut s = KahanSum::new();
                let mut i = n;
                while i >= m {
                    s.add(w * xs[i - 1]);
                    if i == m {
                        break;
                    }
                    w *= (i - m) as f64 / (i - 1) as f64;
                    i -= 1;
                }
                s.value()
            }
            Self::OmegaSq => {
                xs.sort_unstable_by(f64::total_cmp);
                let mut sq = KahanSum::new();
                let mut lin = KahanSum::new();
                for (i, &x) in xs.iter().enumerate() {
                    sq.add(x * x);
                    lin.add(i as f64 * x);
                }
                (0.5 * (nf - 1.0) * sq.value() - lin.value()) / (0.5 * nf * (nf - 1.0))
            }
            Self::Product => {
                let mut s = KahanSum::new();
                let mut q = KahanSum::new();
                for &x in xs.iter() {
                    s.add(x);
                    q.add(x * x);
                }
                let s = s.value();
                (s * s - q.value()) / (nf * (nf - 1.0))
            }
        }
    }

    /// Exact closed-form centering constant where one is available.
    fn closed_centering(&self, model: &DistributionModel) -> Option<f64> {
        match *self {
            Self::SquaredDiff => Some(2.0 * model.variance()),
            Self::Product => Some(model.mean() * model.mean()),
            Self::Identity => Some(model.mean()),
            Self::AbsDiff => match *model {
                DistributionModel::Exponential { rate } => Some(1.0 / rate),
                _ => None,
            },
            _ => None,
        }
    }

    /// Whether E h^2 is finite under the model.
    pub fn second_moment_finite(&self, model: &DistributionModel) -> bool {
        match *self {
            Self::SquaredDiff | Self::OmegaSq => model.abs_moment(4.0).is_finite(),
            _ => model.abs_moment(2.0).is_finite(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AbsDiff => write!(f, "absdiff"),
            Self::SquaredDiff => write!(f, "sqdiff"),
            Self::MaxAbs { m } => write!(f, "maxabs{{m={m}}}"),
            Self::OmegaSq => write!(f, "omegasq"),
            Self::Product => write!(f, "product"),
            Self::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = crate::token::split_token(s)?;
        let mut p = crate::token::Params::new(name, body)?;
        let fam = match name {
            "absdiff" => Self::AbsDiff,
            "sqdiff" => Self::SquaredDiff,
            "maxabs" => {
                let m = p.take("m", Some(2.0))?;
                if m.fract() != 0.0 || m < 1.0 || m > 64.0 {
                    return Err(Error::ParameterDomain(format!("maxabs order must be an integer in [1, 64], got {m}")));
                }
                Self::MaxAbs { m: m as usize }
            }
            "omegasq" => Self::OmegaSq,
            "product" => Self::Product,
            "identity" => Self::Identity,
            _ => return Err(crate::token::unknown(name, &KERNEL_TOKENS)),
        };
        p.finish()?;
        Ok(fam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Centering {
    pub value: f64,
    pub std_error: f64,
    pub method: CenteringMethod,
}

/// A kernel bound to its centering constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub centering: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, centering: f64) -> Self {
        Self { family, centering }
    }

    /// The uncentered kernel.
    pub fn raw(family: KernelFamily) -> Self {
        Self { family, centering: 0.0 }
    }

    /// Kernel centered under `model`.
    pub fn centered(family: KernelFamily, model: &DistributionModel) -> Result<Self> {
        let c = centering_constant(family, model)?;
        Ok(Self { family, centering: c.value })
    }

    pub fn order(&self) -> usize {
        self.family.order()
    }

    pub fn eval_kernel(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.order() {
            return Err(Error::Arity { expected: self.order(), got: args.len() });
        }
        Ok(self.family.eval_raw(args) - self.centering)
    }

    pub fn u_statistic(&self, sample: &[f64]) -> Result<f64> {
        self.check_size(sample.len())?;
        let mut buf = sample.to_vec();
        Ok(self.family.u_raw_mut(&mut buf) - self.centering)
    }

    /// Fast path on a scratch buffer that may be reordered.
    #[inline]
    pub fn u_statistic_mut(&self, sample: &mut [f64]) -> f64 {
        self.family.u_raw_mut(sample) - self.centering
    }

    pub fn u_statistic_bruteforce(&self, sample: &[f64]) -> Result<f64> {
        self.bruteforce_mean(sample, |h| h)
    }

    /// Brute-force U-statistic of the kernel truncated at L: h 1(h <= L).
    pub fn u_statistic_truncated_bruteforce(&self, sample: &[f64], l: f64) -> Result<f64> {
        self.bruteforce_mean(sample, |h| if h <= l { h } else { 0.0 })
    }

    fn check_size(&self, n: usize) -> Result<()> {
        if n < self.order() {
            return Err(Error::Size(format!(
                "sample of size {n} is smaller than kernel order {}",
                self.order()
            )));
        }
        Ok(())
    }

    fn bruteforce_mean<F: Fn(f64) -> f64>(&self, sample: &[f64], f: F) -> Result<f64> {
        let n = sample.len();
        let m = self.order();
        self.check_size(n)?;
        let count = ln_binomial(n as u64, m as u64).exp();
        if count > BRUTEFORCE_LIMIT * (1.0 + 1e-9) {
            return Err(Error::Size(format!("C({n},{m}) exceeds the brute-force limit")));
        }
        let mut idx: Vec<usize> = (0..m).collect();
        let mut args = vec![0.0; m];
        let mut total = KahanSum::new();
        let mut k = 0u64;
        loop {
            for (a, &i) in args.iter_mut().zip(&idx) {
                *a = sample[i];
            }
            total.add(f(self.family.eval_raw(&args) - self.centering));
            k += 1;
            // next combination in lexicographic order
            let mut p = m;
            loop {
                if p == 0 {
                    return Ok(total.value() / k as f64);
                }
                p -= 1;
                if idx[p] < n - m + p {
                    idx[p] += 1;
                    for q in p + 1..m {
                        idx[q] = idx[q - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// One kernel draw h(X_1..X_m) with fresh arguments from the model.
    #[inline]
    pub fn draw(&self, model: &DistributionModel, stream: &mut RngStream, scratch: &mut [f64]) -> f64 {
        model.sample_into(stream, scratch);
        self.family.eval_raw(scratch) - self.centering
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

/// Integral over x in [0, inf) of `g(x, P(|X| > x))`.
fn integrate_abs<G: Fn(f64, f64) -> f64>(model: &DistributionModel, g: G) -> f64 {
    let hi = model.abs_quantile_ln_tail(740.0);
    let lo = (model.abs_quantile_ln_tail(1e-9)).max(hi * 1e-300).max(1e-300);
    let mut breaks = geometric_breaks(lo, hi, 700);
    if let DistributionModel::Pareto { scale, .. } = *model.base() {
        breaks.push(scale);
    }
    breaks.push(std::f64::consts::E);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    integrate_breaks(|x| g(x, model.true_tail(x)), &breaks, 1)
}

/// Centering constant c = E h_raw under the model.
pub fn centering_constant(family: KernelFamily, model: &DistributionModel) -> Result<Centering> {
    family.validate()?;
    model.validate()?;
    if !family.second_moment_finite(model) {
        return Err(Error::Domain(format!("{family} under {model} has infinite second moment")));
    }
    if let Some(v) = family.closed_centering(model) {
        return Ok(Centering { value: v, std_error: 0.0, method: CenteringMethod::ClosedForm });
    }
    let signed = model.is_signed();
    let value = match family {
        KernelFamily::AbsDiff => {
            // E|X - Y| = integral of 2 F (1 - F) over the real line
            if signed {
                integrate_abs(model, |_, s| 2.0 * s - s * s)
            } else {
                integrate_abs(model, |_, s| 2.0 * s * (1.0 - s))
            }
        }
        KernelFamily::MaxAbs { m } => integrate_abs(model, |_, s| -((m as f64) * (-s).ln_1p()).exp_m1()),
        KernelFamily::OmegaSq => {
            let emax = if signed {
                integrate_abs(model, |_, s| s - 0.5 * s * s)
            } else {
                integrate_abs(model, |_, s| 2.0 * s - s * s)
            };
            model.second_moment() - emax
        }
        _ => unreachable!("closed forms cover the remaining kernels"),
    };
    Ok(Centering { value, std_error: 0.0, method: CenteringMethod::Quadrature })
}

/// Monte Carlo estimate of E h_raw with its standard error.
pub fn centering_constant_mc(
    family: KernelFamily,
    model: &DistributionModel,
    reps: u64,
    seed: u64,
) -> Result<Centering> {
    family.validate()?;
    let spec = KernelSpec::raw(family);
    let (mean, se) = crate::mc_engine::mc_mean(reps, seed, "centering", |s| {
        let mut buf = [0.0; 64];
        let buf = &mut buf[..family.order()];
        let h = spec.draw(model, s, buf);
        (h, h * h)
    });
    Ok(Centering { value: mean, std_error: se, method: CenteringMethod::MonteCarlo })
}

/// E h^2 of the centered kernel.
pub fn kernel_second_moment(kernel: &KernelSpec, model: &DistributionModel) -> Result<f64> {
    let fam = kernel.family;
    if !fam.second_moment_finite(model) {
        return Err(Error::Domain(format!("{fam} under {model} has infinite second moment")));
    }
    let c = kernel.centering;
    let m1 = model.mean();
    let m2 = model.second_moment();
    let raw2 = match fam {
        KernelFamily::Identity => m2,
        KernelFamily::AbsDiff => 2.0 * (m2 - m1 * m1),
        KernelFamily::Product => m2 * m2,
        KernelFamily::SquaredDiff => {
            let (m3, m4) = if model.is_signed() { (0.0, model.abs_moment(4.0)) } else { (model.abs_moment(3.0), model.abs_moment(4.0)) };
            2.0 * m4 - 8.0 * m3 * m1 + 6.0 * m2 * m2
        }
        KernelFamily::MaxAbs { m } => integrate_abs(model, |x, s| 2.0 * x * -((m as f64) * (-s).ln_1p()).exp_m1()),
        KernelFamily::OmegaSq => {
            let spec = KernelSpec::raw(fam);
            let (sq, _) = crate::mc_engine::mc_mean(1_000_000, 0x5eed, "second-moment", |s| {
                let mut buf = [0.0; 2];
                let h = spec.draw(model, s, &mut buf);
                (h * h, h * h * h * h)
            });
            sq
        }
    };
    // E (h_raw - c)^2 = E h_raw^2 - 2 c E h_raw + c^2 with E h_raw approximately c
    let mean_raw = centering_constant(fam, model).map(|x| x.value).unwrap_or(c);
    Ok((raw2 - 2.0 * c * mean_raw + c * c).max(0.0))
}

/// R = J^{-1}(log 2n), the half-width of the typical box.
pub fn typical_radius(model: &DistributionModel, n: u64) -> f64 {
    model.j_inverse((2.0 * n as f64).ln())
}

fn phi_supported(kernel: &KernelSpec) -> Result<()> {
    match kernel.family {
        KernelFamily::Product | KernelFamily::Identity => Err(Error::Unsupported(format!(
            "no closed-form phi_n for the {} kernel",
            kernel.family
        ))),
        _ => Ok(()),
    }
}

/// phi_n(x): infimum of h(X_1..X_{m-1}, x) over the typical box.
pub fn phi_value(kernel: &KernelSpec, model: &DistributionModel, n: u64, x: f64) -> Result<f64> {
    phi_supported(kernel)?;
    let c = kernel.centering;
    let r = typical_radius(model, n);
    Ok(match kernel.family {
        KernelFamily::AbsDiff => {
            if x.abs() <= r {
                -c
            } else {
                x.abs() - r - c
            }
        }
        KernelFamily::SquaredDiff => {
            if x.abs() <= r {
                -c
            } else {
                (x.abs() - r).powi(2) - c
            }
        }
        KernelFamily::MaxAbs { .. } => x.abs() - c,
        KernelFamily::OmegaSq => {
            if r < 1.0 {
                return Err(Error::Regime(format!("typical radius {r} < 1; n = {n} is too small")));
            }
            if x > 0.5 {
                0.5 * x * x - x - c
            } else {
                0.5 * x * x - 0.5 - c
            }
        }
        _ => unreachable!(),
    })
}

fn ln_sf(model: &DistributionModel, x: f64) -> f64 {
    if model.is_signed() {
        if x >= 0.0 {
            model.ln_true_tail(x) - LN_2
        } else {
            (-0.5 * model.true_tail(-x)).ln_1p()
        }
    } else if x < 0.0 {
        0.0
    } else {
        model.ln_true_tail(x)
    }
}

fn ln_cdf(model: &DistributionModel, x: f64) -> f64 {
    if model.is_signed() {
        if x <= 0.0 {
            model.ln_true_tail(-x) - LN_2
        } else {
            (-0.5 * model.true_tail(x)).ln_1p()
        }
    } else if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        (-model.true_tail(x)).ln_1p()
    }
}

/// ln P(phi_n(X) >= n t / m).
pub fn ln_phi_tail(kernel: &KernelSpec, model: &DistributionModel, n: u64, t: f64) -> Result<f64> {
    phi_supported(kernel)?;
    let m = kernel.order() as f64;
    let s = n as f64 * t / m;
    let c = kernel.centering;
    let r = typical_radius(model, n);
    Ok(match kernel.family {
        KernelFamily::AbsDiff => {
            if s + c <= 0.0 {
                0.0
            } else {
                model.ln_true_tail(s + r + c)
            }
        }
        KernelFamily::SquaredDiff => {
            if s + c <= 0.0 {
                0.0
            } else {
                model.ln_true_tail(r + (s + c).sqrt())
            }
        }
        KernelFamily::MaxAbs { .. } => {
            if s + c <= 0.0 {
                0.0
            } else {
                model.ln_true_tail(s + c)
            }
        }
        KernelFamily::OmegaSq => {
            if r < 1.0 {
                return Err(Error::Regime(format!("typical radius {r} < 1; n = {n} is too small")));
            }
            let q = 2.0 * s + 2.0 * c + 1.0;
            if q <= 0.25 {
                0.0
            } else {
                let root = q.sqrt();
                ln_add_exp(ln_sf(model, 1.0 + root), ln_cdf(model, -root))
            }
        }
        _ => unreachable!(),
    })
}

/// P(phi_n(X) >= n t / m).
pub fn phi_tail(kernel: &KernelSpec, model: &DistributionModel, n: u64, t: f64) -> Result<f64> {
    ln_phi_tail(kernel, model, n, t).map(f64::exp)
}

/// How the raw kernel is dominated by a function of the absolute arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Domination {
    /// h_raw <= max |X_i| among `m` arguments, compared at level `s` (or sqrt(s)).
    Max { m: usize, sqrt: bool },
    /// h_raw <= |X| + |Y|, at level `s` (or sqrt(s)).
    Sum { sqrt: bool },
    /// h_raw <= (M^2 + N^2)/2 + N with N = min(|X|,|Y|), M = max.
    Omega,
    /// h_raw <= |X||Y|, halved for symmetric laws.
    Prod,
    /// h_raw = X.
    Single,
}

/// ln(1 - (1 - e^{-j})^m), stable for large j.
fn ln_union_of_m(j: f64, m: usize) -> f64 {
    if j == 0.0 {
        return 0.0;
    }
    let mf = m as f64;
    if j > 30.0 {
        // 1 - (1 - p)^m <= m p, and the gap is below p^2 here
        return mf.ln() - j;
    }
    let ln_keep = mf * ln_one_minus_exp_neg(j);
    ln_one_minus_exp_neg(-ln_keep)
}

/// Tail function I for a centered kernel under a model: P(h > u) <= exp(-I(u)).
#[derive(Debug, Clone)]
pub struct KernelTail {
    pub kernel: KernelSpec,
    pub model: DistributionModel,
    dom: Domination,
    subweibull: Option<(f64, f64)>,
}

const GRID_UNIFORM: usize = 160;
const GRID_J: usize = 160;

impl KernelTail {
    fn new(kernel: KernelSpec, model: DistributionModel) -> Self {
        let signed = model.is_signed();
        let dom = match kernel.family {
            KernelFamily::MaxAbs { m } => Domination::Max { m, sqrt: false },
            KernelFamily::AbsDiff if !signed => Domination::Max { m: 2, sqrt: false },
            KernelFamily::AbsDiff => Domination::Sum { sqrt: false },
            KernelFamily::SquaredDiff if !signed => Domination::Max { m: 2, sqrt: true },
            KernelFamily::SquaredDiff => Domination::Sum { sqrt: true },
            KernelFamily::OmegaSq => Domination::Omega,
            KernelFamily::Product => Domination::Prod,
            KernelFamily::Identity => Domination::Single,
        };
        let mut me = Self { kernel, model, dom, subweibull: None };
        me.subweibull = me.fit_subweibull();
        me
    }

    fn g(&self, x: f64) -> f64 {
        -self.model.j_value(x)
    }

    /// ln of the upper bound on P(h_raw > s).
    pub fn ln_raw_exceedance_bound(&self, s: f64) -> f64 {
        let ln_p = match self.dom {
            Domination::Single => {
                if s <= 0.0 && !self.model.is_signed() {
                    0.0
                } else if s <= 0.0 {
                    0.0
                } else if self.model.is_signed() {
                    self.g(s) - LN_2
                } else {
                    self.g(s)
                }
            }
            Domination::Max { m, sqrt } => {
                if s <= 0.0 {
                    0.0
                } else {
                    let level = if sqrt { s.sqrt() } else { s };
                    let j = self.model.j_value(level);
                    ln_union_of_m(j, m)
                }
            }
            Domination::Sum { sqrt } => {
                if s <= 0.0 {
                    0.0
                } else {
                    let level = if sqrt { s.sqrt() } else { s };
                    self.pair_bound(level / 2.0, |v| (level - v).max(0.0))
                }
            }
            Domination::Omega => {
                if s <= 0.0 {
                    0.0
                } else {
                    let q = 0.5 * (-1.0 + (1.0 + 4.0 * s).sqrt());
                    self.pair_bound(q, |v| (2.0 * s - v * v - 2.0 * v).max(0.0).sqrt())
                }
            }
            Domination::Prod => {
                if s <= 0.0 {
                    0.0
                } else {
                    let half = if self.model.is_signed() { -LN_2 } else { 0.0 };
                    half + self.pair_bound(s.sqrt(), |v| if v > 0.0 { s / v } else { f64::INFINITY })
                }
            }
        };
        ln_p.min(0.0)
    }

    /// Union bound over a grid 0 = v_0 < ... < v_K = q for the event f(N, M) > s,
    /// where N <= M are the ordered absolute arguments and w(v) is the
    /// threshold M must exceed when N <= v.
    fn pair_bound<W: Fn(f64) -> f64>(&self, q: f64, w: W) -> f64 {
        let jq = self.model.j_value(q);
        let mut vs: Vec<f64> = Vec::with_capacity(GRID_UNIFORM + GRID_J + 2);
        for i in 1..=GRID_UNIFORM {
            vs.push(q * i as f64 / GRID_UNIFORM as f64);
        }
        for i in 1..GRID_J {
            let v = self.model.j_inverse(jq * i as f64 / GRID_J as f64);
            if v > 0.0 && v < q {
                vs.push(v);
            }
        }
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        // ln g_j = -J(w(v_j)), non-decreasing in j
        let ln_g: Vec<f64> = vs.iter().map(|&v| self.g(w(v))).collect();
        let mut acc = ln_g[0];
        for j in 0..vs.len() - 1 {
            let d = ln_g[j + 1] - ln_g[j];
            if d > 0.0 {
                let term = self.g(vs[j]) + ln_g[j + 1] + ln_one_minus_exp_neg(d);
                acc = ln_add_exp(acc, term);
            }
        }
        ln_add_exp(LN_2 + acc, -2.0 * jq)
    }

    /// I(u) >= 0.
    pub fn eval(&self, u: f64) -> f64 {
        (-self.ln_raw_exceedance_bound(u + self.kernel.centering)).max(0.0)
    }

    /// alpha exponent of I inherited from the model.
    pub fn alpha(&self) -> Option<f64> {
        let a = match self.model.tail_class() {
            TailClass::SubWeibull { alpha } => alpha,
            _ => return None,
        };
        Some(match self.kernel.family {
            KernelFamily::SquaredDiff | KernelFamily::OmegaSq | KernelFamily::Product => 2.0 * a,
            _ => a,
        })
    }

    /// Polynomial tail index of h when the model has polynomial tails.
    pub fn polynomial_index(&self) -> Option<f64> {
        polynomial_index_for(self.kernel.family, &self.model)
    }

    fn fit_subweibull(&self) -> Option<(f64, f64)> {
        let alpha = self.alpha()?;
        let ratio: f64 = 1.05;
        let mut u = 1e-6;
        let mut best = f64::INFINITY;
        while u < 1e15 {
            best = best.min(self.eval(u) / u.powf(1.0 / alpha));
            u *= ratio;
        }
        // between grid points I is non-decreasing, so the minorant loses at most ratio^{1/alpha}
        let c = 0.99 * best * ratio.powf(-1.0 / alpha);
        (c > 0.0 && c.is_finite()).then_some((alpha, c))
    }

    /// (alpha, c) with I(u) >= c u^{1/alpha}, when I admits such a power-law minorant.
    pub fn subweibull(&self) -> Option<(f64, f64)> {
        self.subweibull
    }

    /// Largest u (on a log grid) at which I is still clamped to zero.
    pub fn validity_threshold(&self) -> f64 {
        let mut u = 1e-6;
        let mut last = 0.0;
        while u < 1e12 {
            if self.eval(u) == 0.0 {
                last = u;
            }
            u *= 1.1;
        }
        last
    }
}

/// Polynomial tail index of h under a polynomial-tailed model.
pub fn polynomial_index_for(family: KernelFamily, model: &DistributionModel) -> Option<f64> {
    let g = match model.tail_class() {
        TailClass::Polynomial { gamma } => gamma,
        _ => return None,
    };
    Some(match family {
        KernelFamily::SquaredDiff | KernelFamily::OmegaSq => g / 2.0,
        _ => g,
    })
}

/// Kernel tail function I for the pair.
pub fn kernel_tail_i(kernel: &KernelSpec, model: &DistributionModel) -> Result<KernelTail> {
    kernel.family.validate()?;
    model.validate()?;
    if !kernel.family.second_moment_finite(model) {
        return Err(Error::Unsupported(format!(
            "{} under {model} has infinite variance",
            kernel.family
        )));
    }
    Ok(KernelTail::new(*kernel, model.clone()))
}

fn prob_interval(model: &DistributionModel, a: f64, b: f64) -> f64 {
    if b <= a {
        0.0
    } else {
        (model.cdf(b) - model.cdf(a)).max(0.0)
    }
}

/// P(h(x, Y) > s) for the raw pair kernel with x fixed.
fn conditional_exceedance(family: KernelFamily, model: &DistributionModel, x: f64, s: f64) -> f64 {
    match family {
        KernelFamily::AbsDiff => {
            if s < 0.0 {
                1.0
            } else {
                model.sf(x + s) + model.cdf(x - s)
            }
        }
        KernelFamily::SquaredDiff => {
            if s < 0.0 {
                1.0
            } else {
                let r = s.sqrt();
                model.sf(x + r) + model.cdf(x - r)
            }
        }
        KernelFamily::Product => {
            if x > 0.0 {
                model.sf(s / x)
            } else if x < 0.0 {
                model.cdf(s / x)
            } else if s < 0.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelFamily::OmegaSq => {
            let mut p = 0.0;
            // y <= x: y^2/2 > s - x^2/2 + x
            let r1 = s - 0.5 * x * x + x;
            if r1 < 0.0 {
                p += model.cdf(x);
            } else {
                let a = (2.0 * r1).sqrt();
                p += model.cdf((-a).min(x));
                if a < x {
                    p += prob_interval(model, a, x);
                }
            }
            // y > x: (y - 1)^2 > 2 (s - x^2/2) + 1
            let q = 2.0 * (s - 0.5 * x * x) + 1.0;
            if q < 0.0 {
                p += model.sf(x);
            } else {
                let r = q.sqrt();
                p += model.sf((1.0 + r).max(x));
                if 1.0 - r > x {
                    p += prob_interval(model, x, 1.0 - r);
                }
            }
            p
        }
        _ => unreachable!(),
    }
}

/// P(h > u) for the centered kernel, by one-dimensional quadrature over the first argument.
pub fn kernel_exceedance(kernel: &KernelSpec, model: &DistributionModel, u: f64) -> f64 {
    let s = u + kernel.centering;
    match kernel.family {
        KernelFamily::MaxAbs { m } => {
            if s < 0.0 {
                1.0
            } else {
                -((m as f64) * (-model.true_tail(s)).ln_1p()).exp_m1()
            }
        }
        KernelFamily::Identity => model.sf(s),
        fam => {
            let breaks = geometric_breaks(1e-7, 745.0, 400);
            let f = |y: f64| {
                let x = model.abs_quantile_ln_tail(y);
                let inner = if model.is_signed() {
                    0.5 * (conditional_exceedance(fam, model, x, s) + conditional_exceedance(fam, model, -x, s))
                } else {
                    conditional_exceedance(fam, model, x, s)
                };
                inner * (-y).exp()
            };
            integrate_breaks(f, &breaks, 1).clamp(0.0, 1.0)
        }
    }
}

/// Independent kernel draws for validation.
pub fn kernel_draws(kernel: &KernelSpec, model: &DistributionModel, count: usize, seed: u64) -> Vec<f64> {
    let mut s = derive_stream(seed, "kernel-draws", 0);
    let mut buf = vec![0.0; kernel.order()];
    (0..count).map(|_| kernel.draw(model, &mut s, &mut buf)).collect()
}
