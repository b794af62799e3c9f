//! Python bindings. Results come back as plain dicts, lists and floats.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;
use utail::bounds::{calibrate_polynomial_scale, default_v_mode, BoundEvaluator, VMode, DEFAULT_V_REPS};
use utail::config::{parse_config, V_MODE_TOKENS};
use utail::error::Error;
use utail::experiment::{run_experiment as run_pipeline, CATALOG_VERSION};
use utail::kernels::{kernel_tail_i, KernelFamily, KernelSpec, KERNEL_TOKENS};
use utail::ldp::DEFAULT_LOWER_C;
use utail::mc_engine::{clopper_pearson as cp, estimate_tail_curve};
use utail::rng::StreamFamily;
use utail::tail_models::DistributionModel;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::Syntax { .. }
        | Error::UnknownToken { .. }
        | Error::ParameterDomain(_)
        | Error::Domain(_)
        | Error::Arity { .. }
        | Error::Size(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(x) => match (x.as_u64(), x.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => x.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for it in items {
                list.append(to_py(py, it)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, it) in map {
                d.set_item(k, to_py(py, it)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn model(token: &str) -> PyResult<DistributionModel> {
    token.parse::<DistributionModel>().map_err(py_err)
}

fn family(token: &str) -> PyResult<KernelFamily> {
    token.parse::<KernelFamily>().map_err(py_err)
}

fn centered(kernel: &str, model_token: &str) -> PyResult<(KernelSpec, DistributionModel)> {
    let m = model(model_token)?;
    let k = KernelSpec::centered(family(kernel)?, &m).map_err(py_err)?;
    Ok((k, m))
}

/// Families, kernels and v modes known to the library.
#[pyfunction]
fn catalog(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let models: Vec<Value> = DistributionModel::catalog()
        .iter()
        .map(|m| {
            serde_json::json!({
                "family": m.family_name(),
                "token": m.to_string(),
                "subadditivity_shift": m.subadditivity_shift(),
            })
        })
        .collect();
    let v = serde_json::json!({
        "catalog_version": CATALOG_VERSION,
        "models": models,
        "kernels": KERNEL_TOKENS,
        "v_modes": V_MODE_TOKENS,
    });
    to_py(py, &v)
}

/// J(t) = -log P(|X| > t).
#[pyfunction]
fn j_value(model_token: &str, t: f64) -> PyResult<f64> {
    Ok(model(model_token)?.j_value(t))
}

/// Exact P(|X| > t).
#[pyfunction]
fn true_tail(model_token: &str, t: f64) -> PyResult<f64> {
    Ok(model(model_token)?.true_tail(t))
}

/// U-statistic of `sample` with kernel h - centering, fast path or full enumeration.
#[pyfunction]
#[pyo3(signature = (kernel, sample, centering = 0.0, bruteforce = false))]
fn u_statistic(kernel: &str, sample: Vec<f64>, centering: f64, bruteforce: bool) -> PyResult<f64> {
    let k = KernelSpec::new(family(kernel)?, centering);
    if bruteforce { k.u_statistic_bruteforce(&sample) } else { k.u_statistic(&sample) }.map_err(py_err)
}

/// Centering constant E h under the model.
#[pyfunction]
fn centering(kernel: &str, model_token: &str) -> PyResult<f64> {
    Ok(centered(kernel, model_token)?.0.centering)
}

/// Tail function I(u) of the centered kernel.
#[pyfunction]
fn kernel_tail(kernel: &str, model_token: &str, u: f64) -> PyResult<f64> {
    let (k, m) = centered(kernel, model_token)?;
    Ok(kernel_tail_i(&k, &m).map_err(py_err)?.eval(u))
}

/// Three-term upper bound on P(U_n > t) for the centered kernel.
#[pyfunction]
#[pyo3(signature = (kernel, model_token, n, t, beta = 0.9, v_mode = "auto", v_reps = DEFAULT_V_REPS, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn upper_bound<'py>(
    py: Python<'py>,
    kernel: &str,
    model_token: &str,
    n: u64,
    t: f64,
    beta: f64,
    v_mode: &str,
    v_reps: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (k, m) = centered(kernel, model_token)?;
    let tail = kernel_tail_i(&k, &m).map_err(py_err)?;
    let mode = match v_mode {
        "auto" => match default_v_mode(&tail, seed) {
            VMode::McEstimate { .. } => VMode::McEstimate { reps: v_reps, seed },
            other => other,
        },
        "mc_estimate" => VMode::McEstimate { reps: v_reps, seed },
        "subweibull_cap" => VMode::SubweibullCap,
        "polynomial_cap" => {
            let fam = StreamFamily::new(seed, "python/calibration");
            let scale = calibrate_polynomial_scale(&tail, beta, &[10.0, 100.0, 1000.0], v_reps, &fam).map_err(py_err)?;
            VMode::PolynomialCap { scale }
        }
        other => return Err(PyValueError::new_err(format!("unknown v_mode `{other}`; expected one of {V_MODE_TOKENS:?}"))),
    };
    let b = BoundEvaluator::from_tail(tail, beta, mode).and_then(|e| e.evaluate(n, t)).map_err(py_err)?;
    serialize(py, &b)
}

/// C * P(phi_n >= n t / m), the lower bound.
#[pyfunction]
#[pyo3(signature = (kernel, model_token, n, t, c = DEFAULT_LOWER_C))]
fn lower_bound(kernel: &str, model_token: &str, n: u64, t: f64, c: f64) -> PyResult<f64> {
    let (k, m) = centered(kernel, model_token)?;
    Ok(utail::ldp::lower_bound(&k, &m, n, t, c).map_err(py_err)?.value)
}

/// Monte Carlo tail curve of the centered U_n over `grid`.
#[pyfunction]
#[pyo3(signature = (kernel, model_token, n, grid, reps, seed = 0, ci_level = 0.99))]
#[allow(clippy::too_many_arguments)]
fn tail_estimate<'py>(
    py: Python<'py>,
    kernel: &str,
    model_token: &str,
    n: u64,
    grid: Vec<f64>,
    reps: u64,
    seed: u64,
    ci_level: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (k, m) = centered(kernel, model_token)?;
    let fam = StreamFamily::new(seed, &format!("python/{k}/{m}/n={n}"));
    let curve = py.detach(|| estimate_tail_curve(&k, &m, n, &grid, reps, ci_level, &fam)).map_err(py_err)?;
    serialize(py, &curve)
}

/// Exact binomial interval.
#[pyfunction]
#[pyo3(signature = (exceedances, trials, level = 0.99))]
fn clopper_pearson(exceedances: u64, trials: u64, level: f64) -> PyResult<(f64, f64)> {
    if exceedances > trials {
        return Err(PyValueError::new_err("exceedances must not exceed trials"));
    }
    Ok(cp(exceedances, trials, level))
}

/// Parse and validate config text; returns the normalized TOML echo.
#[pyfunction]
fn check_config(text: &str) -> PyResult<String> {
    Ok(parse_config(text).map_err(py_err)?.to_toml())
}

/// Full pipeline into `out_dir`; returns the manifest.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_text: &str, out_dir: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_text).map_err(py_err)?;
    let outcome = py
        .detach(|| run_pipeline(&cfg, Path::new(out_dir)))
        .map_err(|f| PyRuntimeError::new_err(f.to_string()))?;
    serialize(py, &outcome.manifest)
}

#[pymodule]
fn utail_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(j_value, m)?)?;
    m.add_function(wrap_pyfunction!(true_tail, m)?)?;
    m.add_function(wrap_pyfunction!(u_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(centering, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_tail, m)?)?;
    m.add_function(wrap_pyfunction!(upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tail_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
