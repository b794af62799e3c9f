//! Lower-bound sandwich, large-deviation ratio scans, assumption checks, product-kernel analysis.

use serde::Serialize;

use crate::bounds::{estimate_v, BoundBreakdown, BoundEvaluator, VMode};
use crate::error::{Error, Result};
use crate::kernels::{kernel_exceedance, kernel_tail_i, ln_phi_tail, typical_radius, KernelFamily, KernelSpec};
use crate::mc_engine::{clopper_pearson, count_exceedances, mc_mean, sum_replicates};
use crate::numeric::{ln_add_exp, ln_binomial, monotone_inverse, LN_2};
use crate::rng::StreamFamily;
use crate::tail_models::DistributionModel;

/// Default constant in the lower bound, below 0.9 (1/sqrt(e) - 1/2).
pub const DEFAULT_LOWER_C: f64 = 0.09;
/// Sample sizes below this carry a regime warning on the lower bound.
pub const LOWER_BOUND_N0: u64 = 20;
/// Exceedances needed before a ratio is reported.
pub const MIN_EXCEEDANCES: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub ln_value: f64,
    pub regime_ok: bool,
    pub warning: Option<String>,
}

/// C P(phi_n(X) >= n t / m).
pub fn lower_bound(kernel: &KernelSpec, model: &DistributionModel, n: u64, t: f64, c: f64) -> Result<LowerBound> {
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("lower-bound constant must be >= 0, got {c}")));
    }
    let ln_phi = ln_phi_tail(kernel, model, n, t)?;
    let ln_value = if c == 0.0 { f64::NEG_INFINITY } else { c.ln() + ln_phi };
    let regime_ok = n >= LOWER_BOUND_N0;
    Ok(LowerBound {
        value: ln_value.exp(),
        ln_value,
        regime_ok,
        warning: (!regime_ok).then(|| format!("n = {n} is below the validity threshold {LOWER_BOUND_N0}")),
    })
}

/// Monte Carlo evidence that the lower-bound constant is honest at this n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundCheck {
    pub n: u64,
    pub radius: f64,
    /// P(U_{n-1} >= 0).
    pub p_nonneg: f64,
    /// P(|X_i| <= R for all i < n).
    pub box_mass: f64,
    /// P(U_{n-1} >= 0 and all |X_i| <= R), the factor the bound actually needs.
    pub joint: f64,
    pub joint_se: f64,
    pub ok: bool,
}

pub fn check_lower_bound_regime(
    kernel: &KernelSpec,
    model: &DistributionModel,
    n: u64,
    c: f64,
    reps: u64,
    seed: u64,
) -> Result<LowerBoundCheck> {
    let m = kernel.order() as u64;
    if n <= m {
        return Err(Error::Size(format!("need n > m, got n = {n}")));
    }
    let r = typical_radius(model, n);
    let fam = StreamFamily::new(seed, &format!("lb-check/{kernel}/{model}/n={n}"));
    let n1 = (n - 1) as usize;
    let [a, b, j] = sum_replicates(reps, &fam, |s| {
        let mut xs = model.sample(s, n1);
        let inside = xs.iter().all(|x| x.abs() <= r);
        let nonneg = kernel.u_statistic_mut(&mut xs) >= 0.0;
        [nonneg as u8 as f64, inside as u8 as f64, (nonneg && inside) as u8 as f64]
    });
    let rf = reps as f64;
    let joint = j / rf;
    let p_nonneg = a / rf;
    let box_mass = b / rf;
    let min_box = 1.0 / std::f64::consts::E.sqrt() - 0.05;
    Ok(LowerBoundCheck {
        n,
        radius: r,
        p_nonneg,
        box_mass,
        joint,
        joint_se: (joint * (1.0 - joint) / rf).sqrt(),
        ok: p_nonneg >= 0.45 && box_mass >= min_box && joint >= c,
    })
}

/// Replicate budget policy for ratio scans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSettings {
    pub experiment_id: String,
    pub seed: u64,
    pub pilot_replications: u64,
    pub target_exceedances: u64,
    pub max_replications: u64,
    pub ci_level: f64,
    pub lower_c: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            experiment_id: "scan".into(),
            seed: 0,
            pilot_replications: 100_000,
            target_exceedances: 120,
            max_replications: 10_000_000,
            ci_level: 0.99,
            lower_c: DEFAULT_LOWER_C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPoint {
    pub n: u64,
    pub k: u64,
    pub t: f64,
    pub i_kt: f64,
    pub exceedances: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub neg_log_phat: Option<f64>,
    pub ratio: Option<f64>,
    /// Delta-method standard error of the ratio.
    pub ratio_se: Option<f64>,
    pub lower_bound: f64,
    pub ln_lower_bound: f64,
    pub bound_total: f64,
    pub ln_bound_total: f64,
    pub censored: bool,
    pub sandwich_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCurve {
    pub t: f64,
    pub points: Vec<RatioPoint>,
}

pub fn scan_stream_id(experiment_id: &str, n: u64, pilot: bool) -> String {
    format!("{experiment_id}/ldp/n={n}/{}", if pilot { "pilot" } else { "main" })
}

/// Budget giving about `target` expected exceedances, from a pilot count or a probability floor.
pub fn scan_budget(settings: &ScanSettings, pilot_exceedances: u64, p_floor: f64) -> u64 {
    let target = settings.target_exceedances as f64;
    let b = if pilot_exceedances > 0 {
        target * settings.pilot_replications as f64 / pilot_exceedances as f64
    } else if p_floor > 0.0 {
        target / p_floor
    } else {
        f64::INFINITY
    };
    (b.ceil() as u64).clamp(settings.pilot_replications.min(settings.max_replications), settings.max_replications)
}

/// One ratio point at a fixed budget on the main stream.
#[allow(clippy::too_many_arguments)]
pub fn scan_point_with_budget(
    kernel: &KernelSpec,
    model: &DistributionModel,
    evaluator: &BoundEvaluator,
    n: u64,
    t: f64,
    budget: u64,
    settings: &ScanSettings,
) -> Result<RatioPoint> {
    let fam = StreamFamily::new(settings.seed, &scan_stream_id(&settings.experiment_id, n, false));
    let e = count_exceedances(kernel, model, n as usize, t, 0..budget, &fam);
    let bound = evaluator.evaluate(n, t)?;
    let lb = lower_bound(kernel, model, n, t, settings.lower_c)?;
    let (lo, hi) = clopper_pearson(e, budget, settings.ci_level);
    let p = e as f64 / budget as f64;
    let censored = e < MIN_EXCEEDANCES;
    let i_kt = bound.i_kt;
    let (neg_log, ratio, ratio_se) = if censored {
        (None, None, None)
    } else {
        let nl = -p.ln();
        let se = ((1.0 - p) / e as f64).sqrt() / i_kt;
        (Some(nl), Some(nl / i_kt), Some(se))
    };
    let sandwich_ok = lb.value <= hi && lo <= bound.total;
    Ok(RatioPoint {
        n,
        k: bound.k,
        t,
        i_kt,
        exceedances: e,
        trials: budget,
        p_hat: p,
        ci_low: lo,
        ci_high: hi,
        neg_log_phat: neg_log,
        ratio,
        ratio_se,
        lower_bound: lb.value,
        ln_lower_bound: lb.ln_value,
        bound_total: bound.total,
        ln_bound_total: bound.ln_total,
        censored,
        sandwich_ok,
    })
}

/// Ratio -log P(U_n > t) / I(kt) across sample sizes, with auto-scaled budgets.
pub fn ldp_ratio_scan(
    kernel: &KernelSpec,
    model: &DistributionModel,
    evaluator: &BoundEvaluator,
    t: f64,
    n_list: &[u64],
    settings: &ScanSettings,
) -> Result<RatioCurve> {
    if matches!(kernel.family, KernelFamily::Product | KernelFamily::Identity) {
        return Err(Error::Unsupported(format!("ratio scans are not defined for the {} kernel", kernel.family)));
    }
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let pilot = StreamFamily::new(settings.seed, &scan_stream_id(&settings.experiment_id, n, true));
        let e_pilot = count_exceedances(kernel, model, n as usize, t, 0..settings.pilot_replications, &pilot);
        let floor = lower_bound(kernel, model, n, t, settings.lower_c)?.value;
        let budget = scan_budget(settings, e_pilot, floor);
        points.push(scan_point_with_budget(kernel, model, evaluator, n, t, budget, settings)?);
    }
    Ok(RatioCurve { t, points })
}

/// A flag with the numbers behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub ok: bool,
    pub evidence: Vec<(String, f64)>,
    pub note: Option<String>,
}

impl Check {
    fn new(ok: bool, evidence: Vec<(&str, f64)>) -> Self {
        Self { ok, evidence: evidence.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.evidence.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub kernel: String,
    pub model: String,
    pub n: u64,
    pub t: f64,
    pub centered_ok: Check,
    pub tight_i_ok: Check,
    pub tight_j_ok: Check,
    pub subweibull_ok: Check,
    pub deviation_zone_ok: Check,
    pub subadditive_ok: Check,
    pub superlog_ok: Check,
    pub beta_limits: Check,
}

/// Largest shifted sub-additivity violation over deterministic random pairs in (0, T]^2.
pub fn subadditivity_violation(model: &DistributionModel, pairs: u64, seed: u64) -> f64 {
    let top = model.j_inverse(50.0);
    let b = model.subadditivity_shift();
    let fam = StreamFamily::new(seed, "subadditivity");
    let mut worst = f64::NEG_INFINITY;
    for r in 0..pairs {
        let mut s = fam.replicate(r);
        let t1 = top * (1.0 - s.uniform());
        let t2 = top * (1.0 - s.uniform());
        let v = model.j_value(t1 + t2) - model.j_value(t1) - model.j_value(t2) - b;
        worst = worst.max(v);
    }
    worst
}

/// Numeric battery for the standing assumptions. Always produces a report.
pub fn check_assumptions(kernel: &KernelSpec, model: &DistributionModel, n: u64, t: f64) -> AssumptionReport {
    let m = kernel.order() as u64;
    let k = (n / m.max(1)).max(1);
    let tail = kernel_tail_i(kernel, model);

    // centering: mean of h over 1e6 draws
    let mo = kernel.order();
    let (mean, se) = mc_mean(1_000_000, 0xC3, &format!("check-center/{kernel}/{model}"), |s| {
        let mut buf = [0.0; 64];
        let h = kernel.draw(model, s, &mut buf[..mo]);
        (h, h * h)
    });
    let z = if se > 0.0 { mean / se } else { 0.0 };
    let centered_ok = Check::new(z.abs() <= 4.0, vec![("mean", mean), ("std_error", se), ("z", z)]);

    let (tight_i_ok, subweibull_kernel, deviation_zone_ok) = match &tail {
        Ok(tail) => {
            let mut ev = Vec::new();
            let mut last = f64::NAN;
            for &level in &[5.0, 20.0, 80.0, 320.0] {
                let u = monotone_inverse(|u| tail.eval(u), level, 1e-10);
                let p = kernel_exceedance(kernel, model, u);
                let r = if p > 0.0 { -p.ln() / tail.eval(u) } else { f64::INFINITY };
                ev.push((format!("ratio_at_I={level}"), r));
                last = r;
            }
            let mut c = Check::new((last - 1.0).abs() < 0.1, vec![]);
            c.evidence = ev;
            let sw = match tail.subweibull() {
                Some((a, cc)) => vec![("kernel_alpha", a), ("kernel_c", cc)],
                None => vec![],
            };
            // kt^2 / I(kt) must diverge in k; compare k against 100 k
            let zone = |k: f64| {
                let i = tail.eval(k * t);
                if i > 0.0 { k * t * t / i } else { 0.0 }
            };
            let (z1, z2) = (zone(k as f64), zone(100.0 * k as f64));
            let i_kt = tail.eval(k as f64 * t);
            let growing = t > 0.0 && z2 > 2.0 * z1;
            (c, sw, Check::new(growing, vec![("kt2_over_I", z1), ("kt2_over_I_at_100k", z2), ("I_kt", i_kt)]))
        }
        Err(e) => (
            Check::new(false, vec![]).with_note(e.to_string()),
            vec![],
            Check::new(false, vec![]).with_note(e.to_string()),
        ),
    };

    let mut ev = Vec::new();
    let mut dev = Vec::new();
    // log-scale families leave f64 range in t before J = 1e6; their ladder ends at t = 1e300
    let top = model.j_value(1e300).min(1e6);
    for &f in &[1e-3, 1e-2, 1e-1, 1.0] {
        let u = top * f;
        let x = model.j_inverse(u);
        let r = -model.ln_true_tail(x) / model.j_value(x);
        ev.push((format!("ratio_at_J={u:e}"), r));
        dev.push((r - 1.0).abs());
    }
    let mono = dev.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let mut tight_j_ok = Check::new(mono && dev[3] < 0.05, vec![]);
    tight_j_ok.evidence = ev;

    let subweibull_ok = match model.subweibull_params() {
        Some((a, c)) => {
            let mut evid = vec![("alpha", a), ("c", c)];
            evid.extend(subweibull_kernel.iter().copied());
            let chk = Check::new(a > 1.0 && c > 0.0, evid);
            if a <= 1.0 {
                chk.with_note("alpha = 1 sits on the boundary; a strictly larger alpha is required")
            } else {
                chk
            }
        }
        None => Check::new(false, subweibull_kernel.clone()).with_note("no power-law minorant for J"),
    };

    let b = model.subadditivity_shift();
    let worst = subadditivity_violation(model, 10_000, 0xB0);
    let subadditive_ok = Check::new(worst <= 1e-9, vec![("b", b), ("max_violation", worst)]);

    let mut ev = Vec::new();
    let mut vals = Vec::new();
    for &y in &[10.0, 100.0, 1e3, 1e4] {
        let x = model.j_inverse(y);
        let r = model.j_value(x) / x.ln();
        ev.push((format!("J_over_log_t_at_J={y:e}"), r));
        vals.push(r);
    }
    let growing = vals.windows(2).all(|w| w[1] > 1.5 * w[0]);
    let mut superlog_ok = Check::new(growing, vec![]);
    superlog_ok.evidence = ev;
    if !growing {
        superlog_ok = superlog_ok.with_note("J(t)/log t does not diverge");
    }

    let beta_limits = match tail.as_ref().ok().and_then(|t| t.polynomial_index()) {
        Some(g) => Check::new(true, vec![("gamma", g), ("beta_max_variance_limit", 1.0 - 2.0 / g), ("beta_max_cap", 1.0 - 1.0 / g)]),
        None => Check::new(true, vec![("beta_max", 1.0)]),
    };

    AssumptionReport {
        kernel: kernel.to_string(),
        model: model.to_string(),
        n,
        t,
        centered_ok,
        tight_i_ok,
        tight_j_ok,
        subweibull_ok,
        deviation_zone_ok,
        subadditive_ok,
        superlog_ok,
        beta_limits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductIdentity {
    pub u_n: f64,
    /// Sample mean.
    pub s_n: f64,
    /// Sum of squares.
    pub t_n: f64,
    pub u_bruteforce: Option<f64>,
}

/// U_n = n/(n-1) S_n^2 - T_n/(n(n-1)) for the product kernel.
pub fn product_identity(sample: &[f64]) -> Result<ProductIdentity> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Size(format!("product identity needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let s_n = crate::numeric::kahan_sum(sample) / nf;
    let sq: Vec<f64> = sample.iter().map(|x| x * x).collect();
    let t_n = crate::numeric::kahan_sum(&sq);
    let u_n = nf / (nf - 1.0) * s_n * s_n - t_n / (nf * (nf - 1.0));
    let u_bruteforce = if n <= 12 {
        Some(KernelSpec::raw(KernelFamily::Product).u_statistic_bruteforce(sample)?)
    } else {
        None
    };
    Ok(ProductIdentity { u_n, s_n, t_n, u_bruteforce })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductBound {
    pub n: u64,
    pub t: f64,
    pub beta: f64,
    /// Deviation level of the sample mean, sqrt(t/2).
    pub tau: f64,
    pub i2_l: f64,
    pub v_used: f64,
    pub c_factor: f64,
    /// Bound on P(U_n > t) through 2 P(S_n > tau), clamped to 1.
    pub composite: f64,
    pub ln_composite_unclamped: f64,
    /// Direct three-term bound on the product kernel.
    pub naive: BoundBreakdown,
}

/// Bound on P(U_n > t) for the product kernel via U_n <= 2 S_n^2, plus the direct bound.
pub fn product_tail_bound(
    model: &DistributionModel,
    n: u64,
    t: f64,
    beta: f64,
    v_reps: u64,
    seed: u64,
) -> Result<ProductBound> {
    if !model.is_symmetric() {
        return Err(Error::Unsupported(format!("product-kernel analysis needs a symmetric law, got {model}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    let prod = KernelSpec::centered(KernelFamily::Product, model)?;
    let naive = BoundEvaluator::new(&prod, model, beta, VMode::McEstimate { reps: v_reps, seed })?.evaluate(n, t)?;

    // order-one kernel h(x) = x, k = n, deviation tau, with I_2(u) = J(u) - log 2
    let ident = KernelSpec::centered(KernelFamily::Identity, model)?;
    let tau = (t / 2.0).sqrt();
    let kf = n as f64;
    let l = kf * tau;
    let i2 = (model.j_value(l) - LN_2).max(0.0);
    let fam = StreamFamily::new(seed, &format!("product-v/{model}"));
    let v = estimate_v(&ident, model, l, beta * i2 / l, v_reps, &fam)?.value;
    let cf = crate::bounds::c_factor(tau, beta, n, i2, v);
    let ln_g = -kf * tau * tau / (2.0 * v);
    let ln_mid = -beta * i2 * cf.max(0.5);
    let ln_union = ln_binomial(n, 1) - i2;
    let ln_sum = LN_2 + ln_add_exp(ln_add_exp(ln_g, ln_mid), ln_union);
    Ok(ProductBound {
        n,
        t,
        beta,
        tau,
        i2_l: i2,
        v_used: v,
        c_factor: cf,
        composite: ln_sum.min(0.0).exp(),
        ln_composite_unclamped: ln_sum,
        naive,
    })
}

/// Least-squares slope of log y on log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
