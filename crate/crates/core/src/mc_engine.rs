//! Deterministic parallel Monte Carlo for P(U_n > t) curves.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::inv_beta_reg;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::numeric::KahanSum;
use crate::rng::{RngStream, StreamFamily};
use crate::tail_models::DistributionModel;

pub use crate::rng::{derive_stream, hash_experiment_id};

/// Replicates per work item. Reductions combine batches in index order.
pub const BATCH: u64 = 4096;

fn batches(reps: u64) -> Vec<(u64, u64)> {
    let nb = reps.div_ceil(BATCH);
    (0..nb).map(|b| (b * BATCH, ((b + 1) * BATCH).min(reps))).collect()
}

/// Run `f` over each replicate stream, collecting per-replicate outputs in index order.
pub fn map_replicates<T, F>(reps: u64, family: &StreamFamily, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    let parts: Vec<Vec<T>> = batches(reps)
        .into_par_iter()
        .map(|(lo, hi)| {
            (lo..hi)
                .map(|r| {
                    let mut s = family.replicate(r);
                    f(&mut s)
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Sums of a vector of per-replicate statistics, deterministic for any thread count.
pub fn sum_replicates<const D: usize, F>(reps: u64, family: &StreamFamily, f: F) -> [f64; D]
where
    F: Fn(&mut RngStream) -> [f64; D] + Sync,
{
    let parts: Vec<[f64; D]> = batches(reps)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = [KahanSum::new(); D];
            for r in lo..hi {
                let mut s = family.replicate(r);
                let v = f(&mut s);
                for (a, x) in acc.iter_mut().zip(v) {
                    a.add(x);
                }
            }
            acc.map(|a| a.value())
        })
        .collect();
    let mut tot = [KahanSum::new(); D];
    for p in parts {
        for (a, x) in tot.iter_mut().zip(p) {
            a.add(x);
        }
    }
    tot.map(|a| a.value())
}

/// Mean and standard error of a per-replicate value; `f` returns (x, x^2).
pub fn mc_mean<F>(reps: u64, seed: u64, id: &str, f: F) -> (f64, f64)
where
    F: Fn(&mut RngStream) -> (f64, f64) + Sync,
{
    let fam = StreamFamily::new(seed, id);
    let [s1, s2] = sum_replicates(reps, &fam, |s| {
        let (a, b) = f(s);
        [a, b]
    });
    let n = reps as f64;
    let mean = s1 / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Simulated U_n values, one per replicate, in replicate order.
pub fn simulate_u(kernel: &KernelSpec, model: &DistributionModel, n: usize, reps: u64, family: &StreamFamily) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = batches(reps)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut buf = vec![0.0; n];
            (lo..hi)
                .map(|r| {
                    let mut s = family.replicate(r);
                    model.sample_into(&mut s, &mut buf);
                    kernel.u_statistic_mut(&mut buf)
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Number of replicates in `[0, reps)` with U_n > t.
pub fn count_exceedances(
    kernel: &KernelSpec,
    model: &DistributionModel,
    n: usize,
    t: f64,
    range: std::ops::Range<u64>,
    family: &StreamFamily,
) -> u64 {
    let nb = (range.end - range.start).div_ceil(BATCH);
    (0..nb)
        .into_par_iter()
        .map(|b| {
            let lo = range.start + b * BATCH;
            let hi = (lo + BATCH).min(range.end);
            let mut buf = vec![0.0; n];
            let mut c = 0u64;
            for r in lo..hi {
                let mut s = family.replicate(r);
                model.sample_into(&mut s, &mut buf);
                if kernel.u_statistic_mut(&mut buf) > t {
                    c += 1;
                }
            }
            c
        })
        .sum()
}

/// Exact equal-tailed binomial interval at confidence `level`.
pub fn clopper_pearson(exceedances: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(exceedances <= trials && trials > 0);
    let a = 1.0 - level;
    let (k, n) = (exceedances as f64, trials as f64);
    let lo = if exceedances == 0 { 0.0 } else { inv_beta_reg(k, n - k + 1.0, a / 2.0) };
    let hi = if exceedances == trials { 1.0 } else { inv_beta_reg(k + 1.0, n - k, 1.0 - a / 2.0) };
    let p = k / n;
    (lo.min(p), hi.max(p))
}

/// Number of exceedances of each grid value among sorted samples (strict `>`).
pub fn exceedances_sorted(sorted: &[f64], grid: &[f64]) -> Vec<u64> {
    grid.iter()
        .map(|&t| (sorted.len() - sorted.partition_point(|&u| u <= t)) as u64)
        .collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TailPoint {
    pub t: f64,
    pub exceedances: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Upper bound total, when attached.
    pub bound_total: Option<f64>,
    pub ln_bound_total: Option<f64>,
    /// Lower bound C P(phi_n >= nt/m), when attached.
    pub lower_bound: Option<f64>,
    pub ln_lower_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TailCurve {
    pub n: u64,
    pub ci_level: f64,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    pub fn from_counts(n: u64, grid: &[f64], counts: &[u64], trials: u64, level: f64) -> Self {
        let points = grid
            .iter()
            .zip(counts)
            .map(|(&t, &e)| {
                let (lo, hi) = clopper_pearson(e, trials, level);
                TailPoint {
                    t,
                    exceedances: e,
                    trials,
                    p_hat: e as f64 / trials as f64,
                    ci_low: lo,
                    ci_high: hi,
                    bound_total: None,
                    ln_bound_total: None,
                    lower_bound: None,
                    ln_lower_bound: None,
                }
            })
            .collect();
        Self { n, ci_level: level, points }
    }
}

/// Empirical tail curve of U_n for one sample size, all grid points sharing replicates.
pub fn estimate_tail_curve(
    kernel: &KernelSpec,
    model: &DistributionModel,
    n: u64,
    grid: &[f64],
    reps: u64,
    level: f64,
    family: &StreamFamily,
) -> Result<TailCurve> {
    if (n as usize) < kernel.order() {
        return Err(Error::Size(format!("n = {n} is below the kernel order {}", kernel.order())));
    }
    if reps == 0 {
        return Err(Error::Size("zero replications".into()));
    }
    let mut u = simulate_u(kernel, model, n as usize, reps, family);
    u.sort_unstable_by(f64::total_cmp);
    let counts = exceedances_sorted(&u, grid);
    Ok(TailCurve::from_counts(n, grid, &counts, reps, level))
}

/// Stream family id for the tail stage at one n.
pub fn tail_stream_id(experiment_id: &str, n: u64) -> String {
    format!("{experiment_id}/tail/n={n}")
}

/// Tail curves for every n in the config, with upper and lower bounds attached.
pub fn run_tail_estimation(config: &crate::config::ExperimentConfig) -> Result<Vec<TailCurve>> {
    config.validate()?;
    let ctx = crate::experiment::Context::build(config)?;
    tail_curves(&ctx, config)
}

/// Tail curves against an already resolved experiment context.
pub fn tail_curves(ctx: &crate::experiment::Context, config: &crate::config::ExperimentConfig) -> Result<Vec<TailCurve>> {
    let mut out = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let fam = StreamFamily::new(config.mc.seed, &tail_stream_id(&config.experiment_id, n));
        let mut curve = estimate_tail_curve(
            &ctx.kernel,
            &config.model,
            n,
            &config.t_grid,
            config.mc.replications,
            config.mc.ci_level,
            &fam,
        )?;
        for p in curve.points.iter_mut() {
            if let Ok(b) = ctx.bound(n, p.t) {
                p.bound_total = Some(b.total);
                p.ln_bound_total = Some(b.ln_total);
            }
            if let Ok(lb) = crate::ldp::lower_bound(&ctx.kernel, &config.model, n, p.t, config.lower_bound_c) {
                p.lower_bound = Some(lb.value);
                p.ln_lower_bound = Some(lb.ln_value);
            }
        }
        out.push(curve);
    }
    Ok(out)
}
