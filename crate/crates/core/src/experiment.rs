//! Pipeline orchestration: check -> bound -> tail -> ldp-scan, with CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{calibrate_polynomial_scale, default_v_mode, BoundBreakdown, BoundEvaluator, VMode};
use crate::config::{ExperimentConfig, VModeChoice};
use crate::error::{Error, Result};
use crate::kernels::{centering_constant, kernel_tail_i, Centering, KernelFamily, KernelSpec};
use crate::ldp::{check_assumptions, ldp_ratio_scan, AssumptionReport, RatioCurve, ScanSettings};
use crate::mc_engine::{tail_curves, TailCurve};
use crate::rng::StreamFamily;

/// Version tag of the distribution and kernel catalogs.
pub const CATALOG_VERSION: &str = "1";

pub const BOUND_COLUMNS: [&str; 16] = [
    "n", "m", "k", "t", "beta", "v_used", "c_factor", "gauss", "mid", "union", "total", "region", "ln_gauss",
    "ln_mid", "ln_union", "ln_total",
];
pub const TAIL_COLUMNS: [&str; 14] = [
    "n", "t", "exceedances", "trials", "p_hat", "ci_low", "ci_high", "ln_p_hat", "ln_ci_low", "ln_ci_high",
    "bound_total", "lower_bound", "ln_bound_total", "ln_lower_bound",
];
pub const LDP_COLUMNS: [&str; 12] = [
    "n", "k", "t", "I_kt", "p_hat", "neg_log_phat", "ratio", "lower_bound", "bound_total", "censored",
    "ln_lower_bound", "ln_bound_total",
];

/// Resolved per-experiment state shared by the stages.
#[derive(Debug, Clone)]
pub struct Context {
    pub kernel: KernelSpec,
    pub centering: Centering,
    pub evaluator: BoundEvaluator,
    pub v_mode: VMode,
    pub polynomial_scale: Option<f64>,
}

impl Context {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let centering = centering_constant(config.kernel, &config.model)?;
        let kernel = KernelSpec::new(config.kernel, centering.value);
        let tail = kernel_tail_i(&kernel, &config.model)?;
        let seed = config.mc.seed;
        let mc = VMode::McEstimate { reps: config.v_replications, seed };
        let mut polynomial_scale = None;
        let v_mode = match config.v_mode {
            VModeChoice::Auto => match default_v_mode(&tail, seed) {
                VMode::McEstimate { .. } => mc,
                other => other,
            },
            VModeChoice::McEstimate => mc,
            VModeChoice::SubweibullCap => VMode::SubweibullCap,
            VModeChoice::PolynomialCap => {
                let fam = StreamFamily::new(seed, &format!("{}/calibration", config.experiment_id));
                let scale = calibrate_polynomial_scale(&tail, config.beta, &[10.0, 100.0, 1000.0], config.v_replications, &fam)?;
                polynomial_scale = Some(scale);
                VMode::PolynomialCap { scale }
            }
        };
        let evaluator = BoundEvaluator::from_tail(tail, config.beta, v_mode)?;
        Ok(Self { kernel, centering, evaluator, v_mode, polynomial_scale })
    }

    pub fn bound(&self, n: u64, t: f64) -> Result<BoundBreakdown> {
        self.evaluator.evaluate(n, t)
    }
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn ln(x: f64) -> String {
    f(x.ln())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Runtime(format!("csv: {e}"))
}

pub fn bound_rows(ctx: &Context, config: &ExperimentConfig) -> Result<Vec<BoundBreakdown>> {
    let mut out = Vec::new();
    for &n in &config.n_values {
        for &t in &config.t_grid {
            out.push(ctx.bound(n, t)?);
        }
    }
    Ok(out)
}

pub fn bound_csv_rows(rows: &[BoundBreakdown]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|b| {
            vec![
                b.n.to_string(),
                b.m.to_string(),
                b.k.to_string(),
                f(b.t),
                f(b.beta),
                f(b.v_used),
                f(b.c_factor),
                f(b.gaussian_term),
                f(b.intermediate_term),
                f(b.union_term),
                f(b.total),
                b.region.as_str().to_string(),
                f(b.ln_gaussian),
                f(b.ln_intermediate),
                f(b.ln_union),
                f(b.ln_total),
            ]
        })
        .collect()
}

pub fn tail_csv_rows(curves: &[TailCurve]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in curves {
        for p in &c.points {
            rows.push(vec![
                c.n.to_string(),
                f(p.t),
                p.exceedances.to_string(),
                p.trials.to_string(),
                f(p.p_hat),
                f(p.ci_low),
                f(p.ci_high),
                ln(p.p_hat),
                ln(p.ci_low),
                ln(p.ci_high),
                opt(p.bound_total),
                opt(p.lower_bound),
                opt(p.ln_bound_total),
                opt(p.ln_lower_bound),
            ]);
        }
    }
    rows
}

pub fn ldp_csv_rows(curve: &RatioCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                p.k.to_string(),
                f(p.t),
                f(p.i_kt),
                f(p.p_hat),
                opt(p.neg_log_phat),
                opt(p.ratio),
                f(p.lower_bound),
                f(p.bound_total),
                p.censored.to_string(),
                f(p.ln_lower_bound),
                f(p.ln_bound_total),
            ]
        })
        .collect()
}

pub fn scan_settings(config: &ExperimentConfig) -> ScanSettings {
    ScanSettings {
        experiment_id: config.experiment_id.clone(),
        seed: config.mc.seed,
        pilot_replications: config.ldp.pilot_replications,
        target_exceedances: config.ldp.target_exceedances,
        max_replications: config.ldp.max_replications,
        ci_level: config.mc.ci_level,
        lower_c: config.lower_bound_c,
    }
}

pub fn scan_supported(kernel: KernelFamily) -> bool {
    !matches!(kernel, KernelFamily::Product | KernelFamily::Identity)
}

pub fn run_check(ctx: &Context, config: &ExperimentConfig) -> Vec<AssumptionReport> {
    config
        .n_values
        .iter()
        .map(|&n| check_assumptions(&ctx.kernel, &config.model, n, config.ldp.t))
        .collect()
}

pub fn run_scan(ctx: &Context, config: &ExperimentConfig) -> Result<Option<RatioCurve>> {
    if !scan_supported(config.kernel) {
        return Ok(None);
    }
    ldp_ratio_scan(&ctx.kernel, &config.model, &ctx.evaluator, config.ldp.t, &config.ldp.n_values, &scan_settings(config))
        .map(Some)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    pub file: Option<String>,
    pub sha256: Option<String>,
    pub rows: Option<usize>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub package_version: String,
    pub catalog_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub config_toml: String,
    pub centering: Option<Centering>,
    pub v_mode: Option<VMode>,
    pub polynomial_scale: Option<f64>,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
    pub wall_clock_seconds: f64,
}

/// Artifacts of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<AssumptionReport>,
    pub bounds: Vec<BoundBreakdown>,
    pub curves: Vec<TailCurve>,
    pub scan: Option<RatioCurve>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let d = Sha256::digest(&bytes);
    Ok(d.iter().map(|b| format!("{b:02x}")).collect())
}

/// Names of the pipeline stages in execution order.
pub const STAGES: [&str; 4] = ["check", "bound", "tail", "ldp-scan"];

/// Error from a pipeline stage, after the partial manifest has been written.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: String,
    pub error: Error,
    pub manifest_path: PathBuf,
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

/// Run the whole pipeline, or only the listed stages, writing artifacts into `out_dir`.
pub fn run_experiment_stages(
    config: &ExperimentConfig,
    out_dir: &Path,
    stages: &[&str],
) -> std::result::Result<RunOutcome, StageFailure> {
    let start = Instant::now();
    let _ = std::fs::create_dir_all(out_dir);
    let mut manifest = Manifest {
        experiment_id: config.experiment_id.clone(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        catalog_version: CATALOG_VERSION.to_string(),
        seed: config.mc.seed,
        config: config.clone(),
        config_toml: config.to_toml(),
        centering: None,
        v_mode: None,
        polynomial_scale: None,
        stages: Vec::new(),
        failed_stage: None,
        wall_clock_seconds: 0.0,
    };
    let manifest_path = out_dir.join(&config.outputs.manifest);
    let write_manifest = |m: &mut Manifest| {
        m.wall_clock_seconds = start.elapsed().as_secs_f64();
        if let Ok(s) = serde_json::to_string_pretty(m) {
            let _ = std::fs::write(&manifest_path, s);
        }
    };
    let fail = |m: &mut Manifest, stage: &str, e: Error| {
        m.failed_stage = Some(stage.to_string());
        m.stages.push(StageRecord {
            name: stage.to_string(),
            status: "failed".into(),
            file: None,
            sha256: None,
            rows: None,
            message: Some(e.to_string()),
        });
        write_manifest(m);
        StageFailure { stage: stage.to_string(), error: e, manifest_path: manifest_path.clone() }
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return Err(fail(&mut manifest, "setup", e.into()));
    }
    if let Err(e) = config.validate() {
        return Err(fail(&mut manifest, "setup", e));
    }
    let ctx = match Context::build(config) {
        Ok(c) => c,
        Err(e) => return Err(fail(&mut manifest, "setup", e)),
    };
    manifest.centering = Some(ctx.centering);
    manifest.v_mode = Some(ctx.v_mode);
    manifest.polynomial_scale = ctx.polynomial_scale;

    let record = |m: &mut Manifest, name: &str, file: &str, rows: usize| -> Result<()> {
        let path = out_dir.join(file);
        m.stages.push(StageRecord {
            name: name.to_string(),
            status: "ok".into(),
            file: Some(file.to_string()),
            sha256: Some(sha256_file(&path)?),
            rows: Some(rows),
            message: None,
        });
        Ok(())
    };

    let mut outcome = RunOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest: manifest.clone(),
        reports: Vec::new(),
        bounds: Vec::new(),
        curves: Vec::new(),
        scan: None,
    };

    for stage in STAGES.iter().filter(|s| stages.contains(s)) {
        let res: Result<()> = (|| match *stage {
            "check" => {
                let reports = run_check(&ctx, config);
                let file = &config.outputs.check;
                std::fs::write(out_dir.join(file), serde_json::to_string_pretty(&reports).expect("serializable") + "\n")?;
                record(&mut manifest, stage, file, reports.len())?;
                outcome.reports = reports;
                Ok(())
            }
            "bound" => {
                let rows = bound_rows(&ctx, config)?;
                let file = &config.outputs.bound;
                let csv_rows = bound_csv_rows(&rows);
                write_csv(&out_dir.join(file), &BOUND_COLUMNS, &csv_rows)?;
                record(&mut manifest, stage, file, csv_rows.len())?;
                outcome.bounds = rows;
                Ok(())
            }
            "tail" => {
                let curves = tail_curves(&ctx, config)?;
                let file = &config.outputs.tail;
                let csv_rows = tail_csv_rows(&curves);
                write_csv(&out_dir.join(file), &TAIL_COLUMNS, &csv_rows)?;
                record(&mut manifest, stage, file, csv_rows.len())?;
                outcome.curves = curves;
                Ok(())
            }
            "ldp-scan" => match run_scan(&ctx, config)? {
                Some(curve) => {
                    let file = &config.outputs.ldp_scan;
                    let csv_rows = ldp_csv_rows(&curve);
                    write_csv(&out_dir.join(file), &LDP_COLUMNS, &csv_rows)?;
                    record(&mut manifest, stage, file, csv_rows.len())?;
                    outcome.scan = Some(curve);
                    Ok(())
                }
                None => {
                    manifest.stages.push(StageRecord {
                        name: stage.to_string(),
                        status: "skipped".into(),
                        file: None,
                        sha256: None,
                        rows: None,
                        message: Some(format!("no closed-form phi_n for the {} kernel", config.kernel)),
                    });
                    Ok(())
                }
            },
            _ => unreachable!(),
        })();
        if let Err(e) = res {
            return Err(fail(&mut manifest, stage, e));
        }
    }
    write_manifest(&mut manifest);
    outcome.manifest = manifest;
    Ok(outcome)
}

/// Full pipeline.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> std::result::Result<RunOutcome, StageFailure> {
    run_experiment_stages(config, out_dir, &STAGES)
}

/// Property violations found in a run: bound validity, sandwich, scan sandwich.
pub fn property_violations(outcome: &RunOutcome) -> Vec<String> {
    let mut v = Vec::new();
    for c in &outcome.curves {
        for p in &c.points {
            if p.exceedances >= 50 {
                if let Some(b) = p.bound_total {
                    if b < p.ci_low {
                        v.push(format!("n={} t={}: upper bound {b:e} below CI low {:e}", c.n, p.t, p.ci_low));
                    }
                }
            }
            if p.exceedances >= 100 {
                if let Some(lb) = p.lower_bound {
                    if lb > p.ci_high {
                        v.push(format!("n={} t={}: lower bound {lb:e} above CI high {:e}", c.n, p.t, p.ci_high));
                    }
                }
            }
        }
    }
    if let Some(s) = &outcome.scan {
        for p in &s.points {
            if !p.censored && !p.sandwich_ok {
                v.push(format!("scan n={}: sandwich violated", p.n));
            }
        }
    }
    v
}
