//! Truncated exponential moment v(L, eta), its caps, and the three-term upper bound.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernels::{kernel_second_moment, kernel_tail_i, polynomial_index_for, KernelFamily, KernelSpec, KernelTail};
use crate::mc_engine::sum_replicates;
use crate::numeric::{ln_add_exp, ln_binomial, EXP_GUARD};
use crate::rng::StreamFamily;
use crate::tail_models::DistributionModel;

pub const DEFAULT_BETA: f64 = 0.9;
pub const DEFAULT_V_REPS: u64 = 1_000_000;
/// Fewest kernel draws accepted by `estimate_v`.
pub const MIN_V_REPS: u64 = 100_000;

/// How v(kt, beta I(kt)/kt) is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VMode {
    McEstimate { reps: u64, seed: u64 },
    SubweibullCap,
    PolynomialCap { scale: f64 },
}

impl VMode {
    pub fn token(&self) -> &'static str {
        match self {
            Self::McEstimate { .. } => "mc_estimate",
            Self::SubweibullCap => "subweibull_cap",
            Self::PolynomialCap { .. } => "polynomial_cap",
        }
    }
}

/// Default beta: 0.9, or below both admissible limits for polynomial kernels.
pub fn default_beta(tail: &KernelTail) -> f64 {
    default_beta_for(tail.kernel.family, &tail.model)
}

pub fn default_beta_for(family: KernelFamily, model: &DistributionModel) -> f64 {
    match polynomial_index_for(family, model) {
        Some(g) => DEFAULT_BETA.min(1.0 - 2.0 / g - 0.05),
        None => DEFAULT_BETA,
    }
}

/// Default v mode: the subWeibull cap when available, else Monte Carlo.
pub fn default_v_mode(tail: &KernelTail, seed: u64) -> VMode {
    if tail.subweibull().is_some() {
        VMode::SubweibullCap
    } else {
        VMode::McEstimate { reps: DEFAULT_V_REPS, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[inline]
fn v_integrand(h: f64, l: f64, eta: f64) -> f64 {
    let hl = if h <= l { h } else { 0.0 };
    if h <= 0.0 {
        hl * hl
    } else {
        hl * hl * (eta * hl).exp()
    }
}

/// Monte Carlo estimate of v(L, eta) = E[h_L^2 1(h <= 0) + h_L^2 e^{eta h_L} 1(h > 0)].
pub fn estimate_v(
    kernel: &KernelSpec,
    model: &DistributionModel,
    l: f64,
    eta: f64,
    reps: u64,
    family: &StreamFamily,
) -> Result<VEstimate> {
    if !(l > 0.0) || !(eta >= 0.0) {
        return Err(Error::Domain(format!("need L > 0 and eta >= 0, got L={l}, eta={eta}")));
    }
    if eta * l > EXP_GUARD {
        return Err(Error::Regime(format!("eta * L = {} exceeds the overflow guard", eta * l)));
    }
    if reps < MIN_V_REPS {
        return Err(Error::Size(format!("estimate_v needs at least {MIN_V_REPS} draws, got {reps}")));
    }
    let m = kernel.order();
    let [s1, s2] = sum_replicates(reps, family, |s| {
        let mut buf = [0.0; 64];
        let h = kernel.draw(model, s, &mut buf[..m]);
        let w = v_integrand(h, l, eta);
        [w, w * w]
    });
    let n = reps as f64;
    let mean = s1 / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(VEstimate { value: mean, std_error: (var / n).sqrt() })
}

/// Cap on v(L, eta) for L > 1 and eta <= beta I(L)/L, given I(t) >= c t^{1/alpha}.
pub fn subweibull_v_cap(alpha: f64, c: f64, beta: f64, second_moment: f64) -> Result<f64> {
    if !(beta < 1.0) || !(beta >= 0.0) {
        return Err(Error::Domain(format!("subWeibull cap needs beta in [0, 1), got {beta}")));
    }
    if !(alpha >= 1.0) || !(c > 0.0) {
        return Err(Error::Domain(format!("subWeibull cap needs alpha >= 1 and c > 0, got alpha={alpha}, c={c}")));
    }
    let d = (1.0 - beta) * c;
    Ok(second_moment + gamma(2.0 * alpha + 1.0) / d.powf(2.0 * alpha)
        + beta * c * gamma(3.0 * alpha + 1.0) / (3.0 * d.powf(3.0 * alpha)))
}

/// C L^{2 - (1 - beta) gamma} log L.
pub fn polynomial_v_cap(gamma_index: f64, beta: f64, l: f64, scale_c: f64) -> Result<f64> {
    if !(gamma_index > 2.0) {
        return Err(Error::Domain(format!("polynomial cap needs gamma > 2, got {gamma_index}")));
    }
    if !(beta > 0.0 && beta < 1.0 - 1.0 / gamma_index) {
        return Err(Error::Domain(format!(
            "polynomial cap needs 0 < beta < 1 - 1/gamma = {}, got {beta}",
            1.0 - 1.0 / gamma_index
        )));
    }
    if !(l > 1.0) {
        return Err(Error::Domain(format!("polynomial cap needs L > 1, got {l}")));
    }
    Ok(scale_c * l.powf(2.0 - (1.0 - beta) * gamma_index) * l.ln())
}

/// Calibrated scale: the largest ratio of estimate_v to the unit-scale cap over the grid.
pub fn calibrate_polynomial_scale(
    tail: &KernelTail,
    beta: f64,
    l_grid: &[f64],
    reps: u64,
    family: &StreamFamily,
) -> Result<f64> {
    let g = tail
        .polynomial_index()
        .ok_or_else(|| Error::NotApplicable("kernel tail is not polynomial".into()))?;
    let mut best: f64 = 0.0;
    for &l in l_grid {
        let eta = beta * tail.eval(l) / l;
        let v = estimate_v(&tail.kernel, &tail.model, l, eta, reps, family)?;
        best = best.max(v.value / polynomial_v_cap(g, beta, l, 1.0)?);
    }
    Ok(best)
}

/// 1 - (beta / 2t) (I(kt)/kt) v.
pub fn c_factor(t: f64, beta: f64, k: u64, i_kt: f64, v: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    1.0 - (beta / (2.0 * t)) * (i_kt / (k as f64 * t)) * v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Gaussian,
    LargeDeviation,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::LargeDeviation => "large_deviation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundBreakdown {
    pub n: u64,
    pub m: usize,
    pub k: u64,
    pub t: f64,
    pub beta: f64,
    pub i_kt: f64,
    pub v_used: f64,
    pub c_factor: f64,
    pub gaussian_term: f64,
    pub intermediate_term: f64,
    /// min(1, C(n,m) e^{-I(kt)}).
    pub union_term: f64,
    pub total: f64,
    pub ln_gaussian: f64,
    pub ln_intermediate: f64,
    /// ln C(n,m) - I(kt), unclamped.
    pub ln_union: f64,
    /// ln of the unclamped sum of the three terms.
    pub ln_sum: f64,
    pub ln_total: f64,
    pub region: Region,
}

#[derive(Debug, Clone)]
pub struct BoundInput {
    pub n: u64,
    pub m: usize,
    pub t: f64,
    pub beta: f64,
    pub kernel: KernelSpec,
    pub model: DistributionModel,
    pub v_mode: VMode,
}

impl BoundInput {
    pub fn new(kernel: KernelSpec, model: DistributionModel, n: u64, t: f64, beta: f64, v_mode: VMode) -> Self {
        Self { n, m: kernel.order(), t, beta, kernel, model, v_mode }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m != self.kernel.order() {
            return Err(Error::Arity { expected: self.kernel.order(), got: self.m });
        }
        if self.n < self.m as u64 {
            return Err(Error::Size(format!("n = {} is below m = {}", self.n, self.m)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.t >= 0.0) {
            return Err(Error::Domain(format!("t must be >= 0, got {}", self.t)));
        }
        Ok(())
    }
}

/// Reusable evaluator for one (kernel, model, beta, v mode) across many (n, t).
#[derive(Debug, Clone)]
pub struct BoundEvaluator {
    pub tail: KernelTail,
    pub beta: f64,
    pub v_mode: VMode,
    pub second_moment: f64,
    pub stream_id: String,
}

impl BoundEvaluator {
    pub fn new(kernel: &KernelSpec, model: &DistributionModel, beta: f64, v_mode: VMode) -> Result<Self> {
        let tail = kernel_tail_i(kernel, model)?;
        Self::from_tail(tail, beta, v_mode)
    }

    pub fn from_tail(tail: KernelTail, beta: f64, v_mode: VMode) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
        }
        match v_mode {
            VMode::SubweibullCap => {
                if tail.subweibull().is_none() {
                    return Err(Error::NotApplicable(format!(
                        "{} under {} has no power-law minorant for I",
                        tail.kernel, tail.model
                    )));
                }
                if beta >= 1.0 {
                    return Err(Error::Domain("subWeibull cap needs beta < 1".into()));
                }
            }
            VMode::PolynomialCap { .. } => {
                let g = tail
                    .polynomial_index()
                    .ok_or_else(|| Error::NotApplicable("kernel tail is not polynomial".into()))?;
                polynomial_v_cap(g, beta, 2.0, 1.0)?;
            }
            VMode::McEstimate { reps, .. } => {
                if reps < MIN_V_REPS {
                    return Err(Error::Size(format!("v estimation needs at least {MIN_V_REPS} draws")));
                }
            }
        }
        let second_moment = kernel_second_moment(&tail.kernel, &tail.model)?;
        let stream_id = format!("v/{}/{}", tail.kernel, tail.model);
        Ok(Self { tail, beta, v_mode, second_moment, stream_id })
    }

    /// v used at truncation L = kt with eta = beta I(L) / L.
    pub fn v_at(&self, l: f64, i_l: f64) -> Result<f64> {
        let beta = self.beta;
        // h_L <= L on h > 0, so v <= E h^2 e^{beta I(L)} always
        let crude = if beta * i_l < EXP_GUARD { self.second_moment * (beta * i_l).exp() } else { f64::INFINITY };
        match self.v_mode {
            VMode::SubweibullCap => {
                let (a, c) = self.tail.subweibull().expect("checked at construction");
                if l > 1.0 {
                    Ok(crude.min(subweibull_v_cap(a, c, beta, self.second_moment)?))
                } else {
                    Ok(crude)
                }
            }
            VMode::PolynomialCap { scale } => {
                let g = self.tail.polynomial_index().expect("checked at construction");
                if l > 1.0 {
                    Ok(crude.min(polynomial_v_cap(g, beta, l, scale)?))
                } else {
                    Ok(crude)
                }
            }
            VMode::McEstimate { reps, seed } => {
                let fam = StreamFamily::new(seed, &self.stream_id);
                Ok(estimate_v(&self.tail.kernel, &self.tail.model, l, beta * i_l / l, reps, &fam)?.value)
            }
        }
    }

    pub fn evaluate(&self, n: u64, t: f64) -> Result<BoundBreakdown> {
        let m = self.tail.kernel.order();
        if n < m as u64 {
            return Err(Error::Size(format!("n = {n} is below m = {m}")));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t must be >= 0, got {t}")));
        }
        let k = n / m as u64;
        let kf = k as f64;
        let l = kf * t;
        let beta = self.beta;
        let i_kt = self.tail.eval(l);
        let ln_binom = ln_binomial(n, m as u64);
        let ln_union = ln_binom - i_kt;
        if t == 0.0 {
            return Ok(BoundBreakdown {
                n,
                m,
                k,
                t,
                beta,
                i_kt,
                v_used: self.second_moment,
                c_factor: 1.0,
                gaussian_term: 1.0,
                intermediate_term: 1.0,
                union_term: ln_union.exp().min(1.0),
                total: 1.0,
                ln_gaussian: 0.0,
                ln_intermediate: 0.0,
                ln_union,
                ln_sum: ln_add_exp(LN_TWO, ln_union),
                ln_total: 0.0,
                region: Region::Gaussian,
            });
        }
        let v = self.v_at(l, i_kt)?;
        let cf = c_factor(t, beta, k, i_kt, v);
        let ln_gaussian = -kf * t * t / (2.0 * v);
        let ln_intermediate = -beta * i_kt * cf.max(0.5);
        let ln_sum = ln_add_exp(ln_add_exp(ln_gaussian, ln_intermediate), ln_union);
        let ln_total = ln_sum.min(0.0);
        let region = if ln_gaussian >= ln_intermediate && ln_gaussian >= ln_union {
            Region::Gaussian
        } else {
            Region::LargeDeviation
        };
        Ok(BoundBreakdown {
            n,
            m,
            k,
            t,
            beta,
            i_kt,
            v_used: v,
            c_factor: cf,
            gaussian_term: ln_gaussian.exp(),
            intermediate_term: ln_intermediate.exp(),
            union_term: ln_union.min(0.0).exp(),
            total: ln_total.exp(),
            ln_gaussian,
            ln_intermediate,
            ln_union,
            ln_sum,
            ln_total,
            region,
        })
    }
}

const LN_TWO: f64 = std::f64::consts::LN_2;

/// The three-term upper bound on P(U_n > t).
pub fn evaluate_upper_bound(input: &BoundInput) -> Result<BoundBreakdown> {
    input.validate()?;
    BoundEvaluator::new(&input.kernel, &input.model, input.beta, input.v_mode)?.evaluate(input.n, input.t)
}

/// Boundary scale k^{-(alpha-1)/(2 alpha - 1)} between the Gaussian and large-deviation regimes.
pub fn classify_gaussian_boundary(input: &BoundInput) -> Result<f64> {
    input.validate()?;
    let tail = kernel_tail_i(&input.kernel, &input.model)?;
    let (alpha, _) = tail
        .subweibull()
        .ok_or_else(|| Error::NotApplicable("no subWeibull parameters for this pair".into()))?;
    let k = input.n / input.m as u64;
    gaussian_boundary(alpha, k)
}

pub fn gaussian_boundary(alpha: f64, k: u64) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::NotApplicable(format!("boundary needs alpha >= 1, got {alpha}")));
    }
    Ok((k as f64).powf(-(alpha - 1.0) / (2.0 * alpha - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfChainReport {
    pub n: u64,
    pub k: u64,
    pub l: f64,
    pub lambda: f64,
    /// E exp(lambda U_n(h_L)).
    pub mgf_u: f64,
    pub mgf_u_se: f64,
    /// (E exp((lambda/k) h_L))^k.
    pub mgf_product: f64,
    pub mgf_product_se: f64,
    /// exp(k v(L, lambda/k) (lambda/k)^2 / 2).
    pub gaussian_envelope: f64,
    pub gaussian_envelope_se: f64,
    /// mgf_product - mgf_u, non-negative in theory.
    pub gap1: f64,
    pub gap1_se: f64,
    /// gaussian_envelope - mgf_product, non-negative in theory.
    pub gap2: f64,
    pub gap2_se: f64,
}

/// Monte Carlo check of the MGF chain E e^{lambda U_n(h_L)} <= (E e^{lambda h_L / k})^k <= e^{k v eta^2 / 2}.
pub fn mgf_chain_check(
    kernel: &KernelSpec,
    model: &DistributionModel,
    n: u64,
    l: f64,
    lambda: f64,
    reps: u64,
    seed: u64,
) -> Result<MgfChainReport> {
    let m = kernel.order() as u64;
    if n < m || n > 30 {
        return Err(Error::Size(format!("mgf chain check needs m <= n <= 30, got n = {n}")));
    }
    let k = n / m;
    let eta = lambda / k as f64;
    if lambda * l > EXP_GUARD || eta * l > EXP_GUARD {
        return Err(Error::Regime("lambda L exceeds the overflow guard".into()));
    }
    let stem = format!("mgf/{kernel}/{model}/n={n}");
    let fam_u = StreamFamily::new(seed, &format!("{stem}/u"));
    let [a1, a2] = sum_replicates(reps, &fam_u, |s| {
        let xs = model.sample(s, n as usize);
        let u = kernel.u_statistic_truncated_bruteforce(&xs, l).expect("n within limits");
        let e = (lambda * u).exp();
        [e, e * e]
    });
    let fam_h = StreamFamily::new(seed, &format!("{stem}/h"));
    let mo = kernel.order();
    let [x1, x2, y1, y2, xy] = sum_replicates(reps, &fam_h, |s| {
        let mut buf = [0.0; 64];
        let h = kernel.draw(model, s, &mut buf[..mo]);
        let hl = if h <= l { h } else { 0.0 };
        let x = (eta * hl).exp();
        let y = v_integrand(h, l, eta);
        [x, x * x, y, y * y, x * y]
    });
    let r = reps as f64;
    let kf = k as f64;
    let (ma, va) = (a1 / r, (a2 / r - (a1 / r).powi(2)).max(0.0));
    let (mx, vx) = (x1 / r, (x2 / r - (x1 / r).powi(2)).max(0.0));
    let (my, vy) = (y1 / r, (y2 / r - (y1 / r).powi(2)).max(0.0));
    let cxy = xy / r - mx * my;
    let mgf_u_se = (va / r).sqrt();
    let mgf_product = mx.powf(kf);
    let dprod = kf * mx.powf(kf - 1.0);
    let mgf_product_se = dprod * (vx / r).sqrt();
    let gaussian_envelope = (kf * my * eta * eta / 2.0).exp();
    let denv = gaussian_envelope * kf * eta * eta / 2.0;
    let gaussian_envelope_se = denv * (vy / r).sqrt();
    let gap2_var = (denv * denv * vy + dprod * dprod * vx - 2.0 * denv * dprod * cxy).max(0.0) / r;
    Ok(MgfChainReport {
        n,
        k,
        l,
        lambda,
        mgf_u: ma,
        mgf_u_se,
        mgf_product,
        mgf_product_se,
        gaussian_envelope,
        gaussian_envelope_se,
        gap1: mgf_product - ma,
        gap1_se: (mgf_u_se * mgf_u_se + mgf_product_se * mgf_product_se).sqrt(),
        gap2: gaussian_envelope - mgf_product,
        gap2_se: gap2_var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_examples() {
        let v = subweibull_v_cap(1.0, 1.0, 1e-12, 1.0).unwrap();
        assert!((v - 3.0).abs() < 1e-9);
        let v = subweibull_v_cap(2.0, 1.0, 0.5, 2.0).unwrap();
        let want = 2.0 + 24.0 / 0.5f64.powi(4) + 0.5 * 720.0 / (3.0 * 0.5f64.powi(6));
        assert!((v - want).abs() < 1e-9 * want);
        assert!(subweibull_v_cap(2.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn polynomial_cap_examples() {
        let v = polynomial_v_cap(4.0, 0.5, std::f64::consts::E, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let a = polynomial_v_cap(3.0, 0.6, 10.0, 1.0).unwrap();
        let b = polynomial_v_cap(3.0, 0.6, 100.0, 1.0).unwrap();
        assert!(b > a);
        assert!(polynomial_v_cap(3.0, 0.9, 10.0, 1.0).is_err());
    }

    #[test]
    fn c_factor_examples() {
        assert_eq!(c_factor(1.0, 0.0, 10, 5.0, 2.0), 1.0);
        let c = c_factor(1.0, 1.0, 10, 10f64.sqrt(), 2.0);
        assert!((c - (1.0 - 10f64.sqrt() / 10.0)).abs() < 1e-15);
        assert!((c - 0.6838).abs() < 1e-4);
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(gaussian_boundary(1.0, 1000).unwrap(), 1.0);
        let b = gaussian_boundary(2.0, 10_000).unwrap();
        assert!((b - 10f64.powf(-4.0 / 3.0)).abs() < 1e-15);
        assert!(gaussian_boundary(2.0, 100).unwrap() > gaussian_boundary(2.0, 1000).unwrap());
        assert!(gaussian_boundary(0.5, 10).is_err());
    }

    #[test]
    fn bound_term_algebra() {
        let m = DistributionModel::exponential(1.0).unwrap();
        let k = KernelSpec::centered(KernelFamily::MaxAbs { m: 2 }, &m).unwrap();
        let ev = BoundEvaluator::new(&k, &m, 0.9, VMode::SubweibullCap).unwrap();
        for &t in &[0.01, 0.5, 2.0, 10.0] {
            let b = ev.evaluate(100, t).unwrap();
            assert!(b.total >= b.gaussian_term.min(1.0) && b.total >= b.intermediate_term && b.total >= b.union_term);
            assert!(b.total <= 1.0);
            let ratio = b.ln_union + b.i_kt;
            let want = ln_binomial(100, 2);
            assert!((ratio - want).abs() <= 1e-12 * want);
        }
        let b = ev.evaluate(100, 0.0).unwrap();
        assert_eq!(b.total, 1.0);
        let b = ev.evaluate(100, 1e-6).unwrap();
        assert!(b.total == 1.0 && b.gaussian_term > 0.999);
    }

    #[test]
    fn floor_activates_when_v_huge() {
        let m = DistributionModel::exponential(1.0).unwrap();
        let k = KernelSpec::centered(KernelFamily::MaxAbs { m: 2 }, &m).unwrap();
        let tail = kernel_tail_i(&k, &m).unwrap();
        let ev = BoundEvaluator::from_tail(tail, 1.0, VMode::PolynomialCap { scale: 1.0 });
        assert!(ev.is_err());
        let i = 40.0;
        let c = c_factor(1.0, 1.0, 50, i, 1e9);
        assert_eq!((-1.0 * i * c.max(0.5)).exp(), (-i / 2.0).exp());
    }

    #[test]
    fn v_at_zero_eta_is_second_moment() {
        let m = DistributionModel::exponential(1.0).unwrap();
        let k = KernelSpec::centered(KernelFamily::Identity, &m).unwrap();
        let fam = StreamFamily::new(5, "v0");
        let v = estimate_v(&k, &m, 1e6, 0.0, 200_000, &fam).unwrap();
        assert!((v.value - 1.0).abs() < 4.0 * v.std_error);
        assert!(estimate_v(&k, &m, 1000.0, 1.0, 200_000, &fam).is_err());
        assert!(estimate_v(&k, &m, 10.0, 0.1, 1000, &fam).is_err());
    }

    #[test]
    fn mgf_chain_trivial_cases() {
        let m = DistributionModel::exponential(1.0).unwrap();
        let k = KernelSpec::centered(KernelFamily::AbsDiff, &m).unwrap();
        let r = mgf_chain_check(&k, &m, 10, 5.0, 0.0, 1000, 1).unwrap();
        assert_eq!((r.mgf_u, r.mgf_product, r.gaussian_envelope), (1.0, 1.0, 1.0));
        assert!(mgf_chain_check(&k, &m, 40, 5.0, 1.0, 10, 1).is_err());
    }
}
