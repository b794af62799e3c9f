//! Experiment configuration: TOML text in, validated `ExperimentConfig` out.
//!
//! Grammar (all keys except `model`, `kernel`, `n_values`, `t_grid` optional):
//!
//! ```toml
//! experiment_id = "maxabs-weibull"
//! model = "weibull{scale=1.0,shape=0.5}"
//! kernel = "maxabs{m=2}"
//! n_values = [20, 50, 100]
//! t_grid = [0.5, 1.0, 2.0]
//! beta = 0.9                 # default 0.9 (lower for polynomial tails)
//! v_mode = "auto"            # auto | mc_estimate | subweibull_cap | polynomial_cap
//! v_replications = 1000000
//! lower_bound_c = 0.09
//!
//! [mc]
//! replications = 100000
//! seed = 42
//! ci_level = 0.99
//!
//! [ldp]
//! t = 1.0
//! n_values = [20, 40, 80]
//! pilot_replications = 100000
//! target_exceedances = 120
//! max_replications = 10000000
//!
//! [outputs]
//! bound = "bound.csv"
//! tail = "tail.csv"
//! ldp_scan = "ldp_scan.csv"
//! check = "check.json"
//! manifest = "manifest.json"
//! ```

use serde::Serialize;
use toml::{Table, Value};

use crate::bounds::{default_beta_for, DEFAULT_V_REPS, MIN_V_REPS};
use crate::error::{Error, Result, Violation};
use crate::kernels::KernelFamily;
use crate::ldp::DEFAULT_LOWER_C;
use crate::tail_models::DistributionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VModeChoice {
    Auto,
    McEstimate,
    SubweibullCap,
    PolynomialCap,
}

pub const V_MODE_TOKENS: [&str; 4] = ["auto", "mc_estimate", "subweibull_cap", "polynomial_cap"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub replications: u64,
    pub seed: u64,
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpConfig {
    pub t: f64,
    pub n_values: Vec<u64>,
    pub pilot_replications: u64,
    pub target_exceedances: u64,
    pub max_replications: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outputs {
    pub bound: String,
    pub tail: String,
    pub ldp_scan: String,
    pub check: String,
    pub manifest: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            bound: "bound.csv".into(),
            tail: "tail.csv".into(),
            ldp_scan: "ldp_scan.csv".into(),
            check: "check.json".into(),
            manifest: "manifest.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    #[serde(serialize_with = "as_token")]
    pub model: DistributionModel,
    #[serde(serialize_with = "as_token")]
    pub kernel: KernelFamily,
    pub n_values: Vec<u64>,
    pub t_grid: Vec<f64>,
    pub beta: f64,
    pub v_mode: VModeChoice,
    pub v_replications: u64,
    pub lower_bound_c: f64,
    pub mc: McConfig,
    pub ldp: LdpConfig,
    pub outputs: Outputs,
}

fn as_token<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

const TOP_KEYS: [&str; 12] = [
    "experiment_id",
    "model",
    "kernel",
    "n_values",
    "t_grid",
    "beta",
    "v_mode",
    "v_replications",
    "lower_bound_c",
    "mc",
    "ldp",
    "outputs",
];
const MC_KEYS: [&str; 3] = ["replications", "seed", "ci_level"];
const LDP_KEYS: [&str; 5] = ["t", "n_values", "pilot_replications", "target_exceedances", "max_replications"];
const OUTPUT_KEYS: [&str; 5] = ["bound", "tail", "ldp_scan", "check", "manifest"];

struct Collector {
    v: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.v.push(Violation { field: field.to_string(), message: message.into() });
    }

    fn unknown_keys(&mut self, prefix: &str, table: &Table, known: &[&str]) {
        for k in table.keys() {
            if !known.contains(&k.as_str()) {
                let sugg = crate::token::suggestions(k, known);
                let hint = if sugg.is_empty() { String::new() } else { format!("; did you mean {}", sugg.join(", ")) };
                self.push(&format!("{prefix}{k}"), format!("unknown key{hint}"));
            }
        }
    }

    fn string(&mut self, t: &Table, key: &str, field: &str) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(field, "expected a string");
                None
            }
        }
    }

    fn float(&mut self, t: &Table, key: &str, field: &str) -> Option<f64> {
        match t.get(key) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(_) => {
                self.push(field, "expected a number");
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, key: &str, field: &str) -> Option<u64> {
        match t.get(key) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::Integer(_)) => {
                self.push(field, "must be non-negative");
                None
            }
            Some(_) => {
                self.push(field, "expected an integer");
                None
            }
        }
    }

    fn uint_list(&mut self, t: &Table, key: &str, field: &str) -> Option<Vec<u64>> {
        match t.get(key) {
            None => None,
            Some(Value::Array(a)) => {
                let mut out = Vec::new();
                for (i, v) in a.iter().enumerate() {
                    match v {
                        Value::Integer(x) if *x > 0 => out.push(*x as u64),
                        _ => {
                            self.push(&format!("{field}[{i}]"), "expected a positive integer");
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.push(field, "expected a list of integers");
                None
            }
        }
    }

    fn float_list(&mut self, t: &Table, key: &str, field: &str) -> Option<Vec<f64>> {
        match t.get(key) {
            None => None,
            Some(Value::Array(a)) => {
                let mut out = Vec::new();
                for (i, v) in a.iter().enumerate() {
                    match v {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(x) => out.push(*x as f64),
                        _ => {
                            self.push(&format!("{field}[{i}]"), "expected a number");
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.push(field, "expected a list of numbers");
                None
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, key: &str) -> Option<&'a Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(x)) => Some(x),
            Some(_) => {
                self.push(key, "expected a table");
                None
            }
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, col)
}

fn token_message(e: &Error) -> String {
    match e {
        Error::UnknownToken { token, suggestions } if !suggestions.is_empty() => {
            format!("unknown token `{token}`; did you mean {}", suggestions.join(", "))
        }
        Error::UnknownToken { token, .. } => format!("unknown token `{token}`"),
        Error::ParameterDomain(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Parse and validate config text, reporting every violation found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        Error::Syntax { line, column, message: e.message().to_string() }
    })?;
    let mut c = Collector { v: Vec::new() };
    c.unknown_keys("", &table, &TOP_KEYS);

    let experiment_id = c.string(&table, "experiment_id", "experiment_id").unwrap_or_else(|| "experiment".into());
    if experiment_id.is_empty() {
        c.push("experiment_id", "must not be empty");
    }
    let model = match c.string(&table, "model", "model") {
        None => {
            if !table.contains_key("model") {
                c.push("model", "required");
            }
            None
        }
        Some(s) => match s.parse::<DistributionModel>() {
            Ok(m) => Some(m),
            Err(e) => {
                c.push("model", token_message(&e));
                None
            }
        },
    };
    let kernel = match c.string(&table, "kernel", "kernel") {
        None => {
            if !table.contains_key("kernel") {
                c.push("kernel", "required");
            }
            None
        }
        Some(s) => match s.parse::<KernelFamily>() {
            Ok(k) => Some(k),
            Err(e) => {
                c.push("kernel", token_message(&e));
                None
            }
        },
    };
    let n_values = c.uint_list(&table, "n_values", "n_values");
    if !table.contains_key("n_values") {
        c.push("n_values", "required");
    }
    if let (Some(ns), Some(k)) = (&n_values, &kernel) {
        if ns.is_empty() {
            c.push("n_values", "must not be empty");
        }
        for (i, &n) in ns.iter().enumerate() {
            if (n as usize) < k.order() {
                c.push(&format!("n_values[{i}]"), format!("{n} is below the kernel order {}", k.order()));
            }
        }
    }
    let t_grid = c.float_list(&table, "t_grid", "t_grid");
    if !table.contains_key("t_grid") {
        c.push("t_grid", "required");
    }
    if let Some(g) = &t_grid {
        if g.is_empty() {
            c.push("t_grid", "must not be empty");
        }
        if g.iter().any(|x| !x.is_finite()) {
            c.push("t_grid", "values must be finite");
        }
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            c.push("t_grid", "must be strictly increasing");
        }
    }
    let beta = c.float(&table, "beta", "beta");
    if let Some(b) = beta {
        if !(b > 0.0 && b <= 1.0) {
            c.push("beta", format!("must lie in (0, 1], got {b}"));
        }
    }
    let v_mode = match c.string(&table, "v_mode", "v_mode").as_deref() {
        None | Some("auto") => VModeChoice::Auto,
        Some("mc_estimate") => VModeChoice::McEstimate,
        Some("subweibull_cap") => VModeChoice::SubweibullCap,
        Some("polynomial_cap") => VModeChoice::PolynomialCap,
        Some(other) => {
            let s = crate::token::suggestions(other, &V_MODE_TOKENS);
            c.push("v_mode", format!("unknown token `{other}`; expected one of {}", if s.is_empty() { V_MODE_TOKENS.join(", ") } else { s.join(", ") }));
            VModeChoice::Auto
        }
    };
    let v_replications = c.uint(&table, "v_replications", "v_replications").unwrap_or(DEFAULT_V_REPS);
    if v_replications < MIN_V_REPS {
        c.push("v_replications", format!("must be at least {MIN_V_REPS}"));
    }
    let lower_bound_c = c.float(&table, "lower_bound_c", "lower_bound_c").unwrap_or(DEFAULT_LOWER_C);
    if !(lower_bound_c >= 0.0) {
        c.push("lower_bound_c", "must be >= 0");
    }

    let empty = Table::new();
    let mc_t = c.table(&table, "mc").unwrap_or(&empty);
    c.unknown_keys("mc.", mc_t, &MC_KEYS);
    let mc = McConfig {
        replications: c.uint(mc_t, "replications", "mc.replications").unwrap_or(100_000),
        seed: c.uint(mc_t, "seed", "mc.seed").unwrap_or(0),
        ci_level: c.float(mc_t, "ci_level", "mc.ci_level").unwrap_or(0.99),
    };
    if mc.replications < 1000 {
        c.push("mc.replications", "must be at least 1000");
    }
    if !(mc.ci_level > 0.0 && mc.ci_level < 1.0) {
        c.push("mc.ci_level", "must lie in (0, 1)");
    }

    let ldp_t = c.table(&table, "ldp").unwrap_or(&empty);
    c.unknown_keys("ldp.", ldp_t, &LDP_KEYS);
    let ldp = LdpConfig {
        t: c.float(ldp_t, "t", "ldp.t").unwrap_or(1.0),
        n_values: c.uint_list(ldp_t, "n_values", "ldp.n_values").or_else(|| n_values.clone()).unwrap_or_default(),
        pilot_replications: c.uint(ldp_t, "pilot_replications", "ldp.pilot_replications").unwrap_or(100_000),
        target_exceedances: c.uint(ldp_t, "target_exceedances", "ldp.target_exceedances").unwrap_or(120),
        max_replications: c.uint(ldp_t, "max_replications", "ldp.max_replications").unwrap_or(10_000_000),
    };
    if !(ldp.t > 0.0 && ldp.t.is_finite()) {
        c.push("ldp.t", "must be > 0");
    }
    if ldp.pilot_replications == 0 {
        c.push("ldp.pilot_replications", "must be positive");
    }
    if ldp.max_replications < ldp.pilot_replications {
        c.push("ldp.max_replications", "must be at least ldp.pilot_replications");
    }
    if let Some(k) = &kernel {
        for (i, &n) in ldp.n_values.iter().enumerate() {
            if (n as usize) < k.order() {
                c.push(&format!("ldp.n_values[{i}]"), format!("{n} is below the kernel order {}", k.order()));
            }
        }
    }

    let out_t = c.table(&table, "outputs").unwrap_or(&empty);
    c.unknown_keys("outputs.", out_t, &OUTPUT_KEYS);
    let d = Outputs::default();
    let outputs = Outputs {
        bound: c.string(out_t, "bound", "outputs.bound").unwrap_or(d.bound),
        tail: c.string(out_t, "tail", "outputs.tail").unwrap_or(d.tail),
        ldp_scan: c.string(out_t, "ldp_scan", "outputs.ldp_scan").unwrap_or(d.ldp_scan),
        check: c.string(out_t, "check", "outputs.check").unwrap_or(d.check),
        manifest: c.string(out_t, "manifest", "outputs.manifest").unwrap_or(d.manifest),
    };

    if let (Some(m), Some(k)) = (&model, &kernel) {
        if !k.second_moment_finite(m) {
            c.push("kernel", format!("{k} has infinite variance under {m}"));
        }
    }

    if !c.v.is_empty() {
        return Err(Error::Config(c.v));
    }
    let model = model.expect("checked");
    let kernel = kernel.expect("checked");
    let beta = beta.unwrap_or_else(|| default_beta_for(kernel, &model));
    Ok(ExperimentConfig {
        experiment_id,
        model,
        kernel,
        n_values: n_values.expect("checked"),
        t_grid: t_grid.expect("checked"),
        beta,
        v_mode,
        v_replications,
        lower_bound_c,
        mc,
        ldp,
        outputs,
    })
}

impl ExperimentConfig {
    /// Re-check invariants on a config built in code.
    pub fn validate(&self) -> Result<()> {
        let mut c = Collector { v: Vec::new() };
        if self.n_values.is_empty() {
            c.push("n_values", "must not be empty");
        }
        if self.n_values.iter().any(|&n| (n as usize) < self.kernel.order()) {
            c.push("n_values", "entries must be at least the kernel order");
        }
        if self.t_grid.is_empty() || self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            c.push("t_grid", "must be non-empty and strictly increasing");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            c.push("beta", "must lie in (0, 1]");
        }
        if self.mc.replications < 1000 {
            c.push("mc.replications", "must be at least 1000");
        }
        if !(self.mc.ci_level > 0.0 && self.mc.ci_level < 1.0) {
            c.push("mc.ci_level", "must lie in (0, 1)");
        }
        if let Err(e) = self.model.validate() {
            c.push("model", e.to_string());
        }
        if let Err(e) = self.kernel.validate() {
            c.push("kernel", e.to_string());
        }
        if c.v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(c.v))
        }
    }

    /// Echo as TOML text that parses back to an equal config.
    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("experiment_id".into(), Value::String(self.experiment_id.clone()));
        t.insert("model".into(), Value::String(self.model.to_string()));
        t.insert("kernel".into(), Value::String(self.kernel.to_string()));
        t.insert("n_values".into(), Value::Array(self.n_values.iter().map(|&n| Value::Integer(n as i64)).collect()));
        t.insert("t_grid".into(), Value::Array(self.t_grid.iter().map(|&x| Value::Float(x)).collect()));
        t.insert("beta".into(), Value::Float(self.beta));
        let vm = serde_json::to_value(self.v_mode).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        t.insert("v_mode".into(), Value::String(vm));
        t.insert("v_replications".into(), Value::Integer(self.v_replications as i64));
        t.insert("lower_bound_c".into(), Value::Float(self.lower_bound_c));
        let mut mc = Table::new();
        mc.insert("replications".into(), Value::Integer(self.mc.replications as i64));
        mc.insert("seed".into(), Value::Integer(self.mc.seed as i64));
        mc.insert("ci_level".into(), Value::Float(self.mc.ci_level));
        t.insert("mc".into(), Value::Table(mc));
        let mut ldp = Table::new();
        ldp.insert("t".into(), Value::Float(self.ldp.t));
        ldp.insert("n_values".into(), Value::Array(self.ldp.n_values.iter().map(|&n| Value::Integer(n as i64)).collect()));
        ldp.insert("pilot_replications".into(), Value::Integer(self.ldp.pilot_replications as i64));
        ldp.insert("target_exceedances".into(), Value::Integer(self.ldp.target_exceedances as i64));
        ldp.insert("max_replications".into(), Value::Integer(self.ldp.max_replications as i64));
        t.insert("ldp".into(), Value::Table(ldp));
        let mut o = Table::new();
        o.insert("bound".into(), Value::String(self.outputs.bound.clone()));
        o.insert("tail".into(), Value::String(self.outputs.tail.clone()));
        o.insert("ldp_scan".into(), Value::String(self.outputs.ldp_scan.clone()));
        o.insert("check".into(), Value::String(self.outputs.check.clone()));
        o.insert("manifest".into(), Value::String(self.outputs.manifest.clone()));
        t.insert("outputs".into(), Value::Table(o));
        toml::to_string(&t).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
model = "exponential{rate=1}"
kernel = "absdiff"
n_values = [20]
t_grid = [0.5, 1.0]
"#;

    #[test]
    fn minimal_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.beta, 0.9);
        assert_eq!(c.mc.ci_level, 0.99);
        assert_eq!(c.v_mode, VModeChoice::Auto);
        assert_eq!(c.ldp.n_values, vec![20]);
    }

    #[test]
    fn grid_order_violation_names_field() {
        let text = MINIMAL.replace("[0.5, 1.0]", "[1.0, 0.5]");
        match parse_config(&text) {
            Err(Error::Config(v)) => assert!(v.iter().any(|x| x.field == "t_grid")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_kernel_suggests() {
        let text = MINIMAL.replace("absdiff", "prod");
        match parse_config(&text) {
            Err(Error::Config(v)) => {
                let k = v.iter().find(|x| x.field == "kernel").unwrap();
                assert!(k.message.contains("product"), "{}", k.message);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"
model = "weibull{shape=2}"
kernel = "absdiff"
n_values = [1]
t_grid = [2.0, 1.0]
beta = 1.5
colour = 1
"#;
        match parse_config(text) {
            Err(Error::Config(v)) => {
                let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
                for f in ["model", "n_values[0]", "t_grid", "beta", "colour"] {
                    assert!(fields.contains(&f), "{f} missing from {fields:?}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_location() {
        match parse_config("model = \"x\"\nkernel = \n") {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toml_echo_roundtrip() {
        let c = parse_config(MINIMAL).unwrap();
        let back = parse_config(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
