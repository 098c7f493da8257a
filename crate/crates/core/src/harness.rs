//! Config-driven runs: parse a TOML problem file, execute the pipeline of
//! the requested mode and write fields, traces and the certificate report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{fmt_num, moser_chain, Certificate, Check};
use crate::conditions::{
    epsilon_split, falsify_condition, gamma_ratio_sup, lmax, log_grid, param_map, q_double_star, ConditionError,
    ConditionKind, FalsifyOptions, SemilinearitySpec, Verdict,
};
use crate::counterexample::{blowup_study, strip_solution, study_geometry, BlowupVerdict, CaseTag, StripGeometry, SymbolProblem};
use crate::discrete::{ComplexField, Elliptic, Field, FieldIoError};
use crate::domain::{build_domain, BoundingBox, DomainSpec};
use crate::expr::{parse_expr, Var};
use crate::sandwich::{SandwichError, SandwichResult};
use crate::semilinear::{compute_lambda1, solve_semilinear, uniqueness_probe, SemilinearError, SemilinearOptions};

/// First line of every report.
pub const REPORT_HEADER: &str = "semicert report v1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{module}/{stage}: {message}")]
    Stage {
        module: &'static str,
        stage: &'static str,
        message: String,
        exit: ExitKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Pass,
    CheckFailed,
    Witness,
    NoConvergence,
    ConfigOrIo,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Pass => 0,
            ExitKind::ConfigOrIo => 1,
            ExitKind::CheckFailed => 2,
            ExitKind::Witness => 3,
            ExitKind::NoConvergence => 4,
        }
    }
}

impl HarnessError {
    pub fn exit(&self) -> ExitKind {
        match self {
            HarnessError::Stage { exit, .. } => *exit,
            _ => ExitKind::ConfigOrIo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Audit,
    Counterexample,
}

/// A number, or an expression in `lambda1`, `eps` and `Lmax`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Scalar {
    fn resolve(&self, what: &str, params: &std::collections::HashMap<String, f64>) -> Result<f64, HarnessError> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Expr(text) => {
                let e = parse_expr(text, 1).map_err(|e| HarnessError::Config(format!("{what}: {e}")))?;
                if !e.uses_only(|v| matches!(v, Var::Param(_))) {
                    return Err(HarnessError::Config(format!("{what} may only use lambda1, eps and Lmax")));
                }
                let missing: Vec<String> = e.free_vars().into_iter().filter(|n| !params.contains_key(n)).collect();
                if !missing.is_empty() {
                    return Err(HarnessError::Config(format!("{what} references {} before it is known", missing.join(", "))));
                }
                e.bind(params)
                    .eval::<f64>(&crate::expr::Point::at(&[0.0], 0.0))
                    .map_err(|e| HarnessError::Config(format!("{what}: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: String,
    pub h: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub inner: Option<f64>,
    pub outer: Option<f64>,
    /// `[[lo..., hi...], ...]` boxes of a union.
    pub boxes: Option<Vec<Vec<f64>>>,
    pub indicator: Option<String>,
    pub bbox_lo: Option<Vec<f64>>,
    pub bbox_hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: String,
    pub beta: Option<String>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            kind: "dirichlet".into(),
            beta: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearityConfig {
    pub f: String,
    pub h: String,
    pub h0: String,
    pub gamma: String,
    pub epsilon: Scalar,
    #[serde(rename = "L")]
    pub l: Scalar,
    #[serde(rename = "L0")]
    pub l0: Option<Scalar>,
    pub q: f64,
    pub d_hat: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solve: f64,
    pub sandwich: Option<f64>,
    pub domination: f64,
    pub falsify_budget: usize,
    pub gamma_cap: f64,
    pub uniqueness_trials: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solve: 1e-10,
            sandwich: None,
            domination: 1e-8,
            falsify_budget: 2000,
            gamma_cap: 1e8,
            uniqueness_trials: 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub case: String,
    /// `ε = epsilon_factor·λ₁` in cases (ii) and (iii).
    pub epsilon_factor: f64,
    /// `ε` in case (i).
    pub epsilon: f64,
    /// `r = r_factor·L_max`.
    pub r_factor: f64,
    pub widths: Vec<f64>,
    pub h: f64,
    pub strip_width: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            case: "iii".into(),
            epsilon_factor: 3.0,
            epsilon: 1.0,
            r_factor: 1.0,
            widths: vec![10.0, 20.0, 40.0, 80.0],
            h: std::f64::consts::PI / 16.0,
            strip_width: std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    pub semilinearity: Option<SemilinearityConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.mode != Mode::Counterexample {
            if self.domain.is_none() {
                return Err(HarnessError::Config("missing [domain] table".into()));
            }
            if self.semilinearity.is_none() {
                return Err(HarnessError::Config("missing [semilinearity] table".into()));
            }
        }
        let t = &self.tolerances;
        if !(t.solve > 0.0) || !(t.domination >= 0.0) || t.sandwich.is_some_and(|s| !(s > 0.0)) {
            return Err(HarnessError::Config("tolerances must be positive".into()));
        }
        if !matches!(self.boundary.kind.as_str(), "dirichlet" | "robin") {
            return Err(HarnessError::Config(format!("unknown boundary kind `{}`", self.boundary.kind)));
        }
        if self.boundary.kind == "robin" && self.boundary.beta.is_none() {
            return Err(HarnessError::Config("robin boundary needs beta".into()));
        }
        Ok(())
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit: ExitKind,
    pub certificate: Certificate,
    pub report_path: PathBuf,
    pub output_dir: PathBuf,
    /// Set when the run stopped before all checks could be computed.
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.exit.code()
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn field_io(path: &Path, e: FieldIoError) -> HarnessError {
    match e {
        FieldIoError::Io { source, .. } => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(other.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Efld,
    Csv,
}

pub fn write_field(u: &Field<f64>, path: &Path, format: FieldFormat) -> Result<(), HarnessError> {
    if path.as_os_str().is_empty() {
        return Err(HarnessError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty path"),
        });
    }
    match format {
        FieldFormat::Efld => u.write_efld(path),
        FieldFormat::Csv => u.write_csv(path),
    }
    .map_err(|e| field_io(path, e))
}

pub fn write_complex_field(u: &ComplexField<f64>, path: &Path, format: FieldFormat) -> Result<(), HarnessError> {
    if path.as_os_str().is_empty() {
        return Err(HarnessError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty path"),
        });
    }
    match format {
        FieldFormat::Efld => u.write_efld(path),
        FieldFormat::Csv => u.write_csv(path),
    }
    .map_err(|e| field_io(path, e))
}

/// Build the `DomainSpec` and bounding box described by `[domain]`.
pub fn domain_spec(cfg: &DomainConfig) -> Result<(DomainSpec, BoundingBox<f64>), HarnessError> {
    let need = |v: &Option<Vec<f64>>, k: &str| v.clone().ok_or_else(|| HarnessError::Config(format!("domain.{k} missing")));
    let needf = |v: Option<f64>, k: &str| v.ok_or_else(|| HarnessError::Config(format!("domain.{k} missing")));
    let (spec, lo, hi) = match cfg.shape.as_str() {
        "interval" => {
            let (a, b) = (needf(cfg.a, "a")?, needf(cfg.b, "b")?);
            (DomainSpec::Interval { a, b }, vec![a], vec![b])
        }
        "box" | "lshape" => {
            let (lo, hi) = (need(&cfg.lo, "lo")?, need(&cfg.hi, "hi")?);
            let spec = if cfg.shape == "box" {
                DomainSpec::Box {
                    lo: lo.clone(),
                    hi: hi.clone(),
                }
            } else {
                DomainSpec::LShape {
                    lo: lo.clone(),
                    hi: hi.clone(),
                }
            };
            (spec, lo, hi)
        }
        "disk" | "annulus" => {
            let center = need(&cfg.center, "center")?;
            let (spec, reach) = if cfg.shape == "disk" {
                let radius = needf(cfg.radius, "radius")?;
                (
                    DomainSpec::Disk {
                        center: center.clone(),
                        radius,
                    },
                    radius,
                )
            } else {
                let (inner, outer) = (needf(cfg.inner, "inner")?, needf(cfg.outer, "outer")?);
                (
                    DomainSpec::Annulus {
                        center: center.clone(),
                        inner,
                        outer,
                    },
                    outer,
                )
            };
            let lo = center.iter().map(|c| c - reach).collect();
            let hi = center.iter().map(|c| c + reach).collect();
            (spec, lo, hi)
        }
        "union" => {
            let raw = cfg.boxes.clone().ok_or_else(|| HarnessError::Config("domain.boxes missing".into()))?;
            let mut boxes = Vec::new();
            for b in raw {
                if b.len() % 2 != 0 || b.is_empty() {
                    return Err(HarnessError::Config("each union box is [lo..., hi...]".into()));
                }
                let d = b.len() / 2;
                boxes.push((b[..d].to_vec(), b[d..].to_vec()));
            }
            let d = boxes[0].0.len();
            let lo = (0..d).map(|a| boxes.iter().map(|b| b.0[a]).fold(f64::INFINITY, f64::min)).collect();
            let hi = (0..d).map(|a| boxes.iter().map(|b| b.1[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
            (DomainSpec::UnionOfBoxes(boxes), lo, hi)
        }
        "indicator" => {
            let lo = need(&cfg.bbox_lo, "bbox_lo")?;
            let text = cfg
                .indicator
                .as_deref()
                .ok_or_else(|| HarnessError::Config("domain.indicator missing".into()))?;
            let e = parse_expr(text, lo.len()).map_err(|e| HarnessError::Config(format!("domain.indicator: {e}")))?;
            (DomainSpec::Indicator(e), lo, need(&cfg.bbox_hi, "bbox_hi")?)
        }
        other => return Err(HarnessError::Config(format!("unknown domain shape `{other}`"))),
    };
    let lo = cfg.bbox_lo.clone().unwrap_or(lo);
    let hi = cfg.bbox_hi.clone().unwrap_or(hi);
    if lo.len() != hi.len() {
        return Err(HarnessError::Config("bounding box corners differ in dimension".into()));
    }
    Ok((spec, BoundingBox::new(lo, hi)))
}

fn stage(module: &'static str, stage_name: &'static str, exit: ExitKind) -> impl FnOnce(String) -> HarnessError {
    move |message| HarnessError::Stage {
        module,
        stage: stage_name,
        message,
        exit,
    }
}

fn semilinear_exit(e: &SemilinearError) -> ExitKind {
    match e {
        SemilinearError::Precondition { .. } => ExitKind::Witness,
        SemilinearError::Condition(ConditionError::Threshold { .. }) => ExitKind::Witness,
        SemilinearError::NoConvergence { .. } | SemilinearError::Solve(_) => ExitKind::NoConvergence,
        SemilinearError::Sandwich(SandwichError::NoConvergence { .. } | SandwichError::Solve(_)) => {
            ExitKind::NoConvergence
        }
        SemilinearError::Sandwich(SandwichError::Threshold(_) | SandwichError::NegativeData { .. }) => {
            ExitKind::Witness
        }
        SemilinearError::Sandwich(_) => ExitKind::CheckFailed,
        _ => ExitKind::ConfigOrIo,
    }
}

struct Prepared {
    op: Elliptic<f64>,
    spec: SemilinearitySpec<f64>,
    lambda1: f64,
}

fn build_operator(cfg: &RunConfig) -> Result<Elliptic<f64>, HarnessError> {
    let dcfg = cfg.domain.as_ref().expect("validated");
    let (spec, bbox) = domain_spec(dcfg)?;
    let dom = build_domain(&spec, dcfg.h, &bbox).map_err(|e| stage("domain", "build", ExitKind::ConfigOrIo)(e.to_string()))?;
    match cfg.boundary.kind.as_str() {
        "robin" => {
            let text = cfg.boundary.beta.as_deref().expect("validated");
            let beta = parse_expr(text, dom.dim()).map_err(|e| HarnessError::Config(format!("boundary.beta: {e}")))?;
            Elliptic::robin(&dom, &beta).map_err(|e| stage("discrete", "assemble", ExitKind::ConfigOrIo)(e.to_string()))
        }
        _ => Ok(Elliptic::dirichlet(Arc::new(dom))),
    }
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, HarnessError> {
    let op = build_operator(cfg)?;
    let s = cfg.semilinearity.as_ref().expect("validated");
    let dim = op.domain().dim();
    let parse = |text: &str, what: &str| parse_expr(text, dim).map_err(|e| HarnessError::Config(format!("semilinearity.{what}: {e}")));
    let (f, h, h0, gamma) = (parse(&s.f, "f")?, parse(&s.h, "h")?, parse(&s.h0, "h0")?, parse(&s.gamma, "gamma")?);
    let lambda1 = compute_lambda1(&op).map_err(|e| stage("discrete", "eigenvalue", ExitKind::NoConvergence)(e.to_string()))?;
    let mut params = std::collections::HashMap::from([("lambda1".to_string(), lambda1)]);
    let epsilon = s.epsilon.resolve("epsilon", &params)?;
    params = param_map(lambda1, epsilon);
    let l = s.l.resolve("L", &params)?;
    let l0 = match &s.l0 {
        Some(v) => v.resolve("L0", &params)?,
        None => l,
    };
    let d_hat = s.d_hat.unwrap_or(dim as f64);
    let spec = SemilinearitySpec::new(f, h, h0, gamma, epsilon, l, l0, s.q, d_hat)
        .map_err(|e| stage("conditions", "spec", ExitKind::ConfigOrIo)(e.to_string()))?;
    Ok(Prepared { op, spec, lambda1 })
}

fn verdict_check(kind: ConditionKind, v: &Verdict<f64>) -> Check {
    let name = format!("falsify_{kind}");
    let claim = format!("no {kind} witness within budget");
    match v {
        Verdict::Pass { samples } => Check::new(&name, &claim, 0.0, 0.0).with("samples", samples),
        Verdict::Skipped(reason) => Check::skipped(&name, &claim, reason),
        Verdict::Witness(w) => {
            let mut c = Check::new(&name, &claim, w.rhs - w.lhs, w.slack);
            c.witness = Some(format!("x = {:?}, s = {:?}, xi = {:?}, lhs = {}, rhs = {}", w.x, w.s, w.xi, fmt_num(w.lhs), fmt_num(w.rhs)));
            c
        }
    }
}

fn constants(cert: &mut Certificate, p: &Prepared) {
    let s = &p.spec;
    let split = epsilon_split(s.epsilon, p.lambda1);
    cert.constant("lambda1", fmt_num(p.lambda1));
    cert.constant("eps", fmt_num(s.epsilon));
    cert.constant("L", fmt_num(s.l));
    cert.constant("L0", fmt_num(s.l0));
    cert.constant("Lmax", fmt_num(lmax(s.epsilon, p.lambda1)));
    cert.constant("eps1", fmt_num(split.eps1));
    cert.constant("eps2", fmt_num(split.eps2));
    cert.constant("delta1", fmt_num(split.delta1));
    cert.constant("q", fmt_num(s.q));
    cert.constant("d_hat", fmt_num(s.d_hat));
    if let Ok(qss) = q_double_star(s.q, s.d_hat) {
        cert.constant("q**", fmt_num(qss));
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, HarnessError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Output { dir })
    }

    fn text(&self, name: &str, body: &str) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    }

    fn field(&self, stem: &str, u: &Field<f64>) -> Result<(), HarnessError> {
        write_field(u, &self.dir.join(format!("{stem}.efld")), FieldFormat::Efld)?;
        write_field(u, &self.dir.join(format!("{stem}.csv")), FieldFormat::Csv)
    }

    fn complex_field(&self, stem: &str, u: &ComplexField<f64>) -> Result<(), HarnessError> {
        write_complex_field(u, &self.dir.join(format!("{stem}.efld")), FieldFormat::Efld)?;
        write_complex_field(u, &self.dir.join(format!("{stem}.csv")), FieldFormat::Csv)
    }
}

fn sandwich_trace(r: &SandwichResult<f64>) -> String {
    let mut s = String::from("iteration,update_norm,contraction_ratio\n");
    for (i, u) in r.update_norms.iter().enumerate() {
        let ratio = if i >= 1 { r.contraction_ratios.get(i - 1).map(|v| fmt_num(*v)).unwrap_or_default() } else { String::new() };
        let _ = writeln!(s, "{},{},{}", i + 1, fmt_num(*u), ratio);
    }
    s
}

/// Read, run and report. IO and config problems before the output directory
/// exists come back as `Err`; everything later is folded into the outcome.
/// `mode` replaces the config's own mode when given.
pub fn run_config(path: &Path, overrides: &Overrides, mode: Option<Mode>) -> Result<RunOutcome, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    if let Some(t) = overrides.tol {
        if !(t > 0.0) {
            return Err(HarnessError::Config("--tol must be positive".into()));
        }
        cfg.tolerances.solve = t;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(o) = &overrides.out {
        cfg.output = o.clone();
    } else if cfg.output.is_relative() {
        cfg.output = path.parent().unwrap_or(Path::new(".")).join(&cfg.output);
    }
    let hash_input = format!("{text}\n--mode={:?}\n--tol={:?}\n--seed={}\n", cfg.mode, overrides.tol, cfg.seed);
    let hash = sha256_hex(hash_input.as_bytes());
    run_parsed(&cfg, &hash)
}

pub fn run_parsed(cfg: &RunConfig, config_hash: &str) -> Result<RunOutcome, HarnessError> {
    let out = Output::new(cfg.output.clone())?;
    let mut cert = Certificate::new(cfg.seed, config_hash);
    let result = match cfg.mode {
        Mode::Solve => run_solve(cfg, &out, &mut cert),
        Mode::Audit => run_audit(cfg, &mut cert),
        Mode::Counterexample => run_counterexample(cfg, &out, &mut cert),
    };
    let (exit, error) = match result {
        Ok(()) if cert.all_pass() => (ExitKind::Pass, None),
        Ok(()) => (
            if cert.checks.iter().any(|c| c.name.starts_with("falsify_") && !c.passed()) {
                ExitKind::Witness
            } else {
                ExitKind::CheckFailed
            },
            None,
        ),
        Err(e @ HarnessError::Io { .. }) => return Err(e),
        Err(e) => (e.exit(), Some(e.to_string())),
    };
    let mut report = String::new();
    let _ = writeln!(report, "{REPORT_HEADER}");
    let _ = writeln!(report, "mode: {:?}", cfg.mode);
    let _ = writeln!(report, "status: {}", exit.code());
    if let Some(e) = &error {
        let _ = writeln!(report, "error: {e}");
    }
    report.push_str(&cert.render_text());
    let _ = writeln!(report, "[certificate]");
    report.push_str(&cert.machine_lines());
    out.text("report.txt", &report)?;
    Ok(RunOutcome {
        exit,
        certificate: cert,
        report_path: out.dir.join("report.txt"),
        output_dir: out.dir.clone(),
        error,
    })
}

/// Machine-readable section of a report.
pub fn certificate_section(report: &str) -> Option<&str> {
    report.find("[certificate]\n").map(|i| &report[i + "[certificate]\n".len()..])
}

fn falsify_opts(cfg: &RunConfig) -> FalsifyOptions<f64> {
    FalsifyOptions {
        seed: cfg.seed,
        gamma_cap: cfg.tolerances.gamma_cap,
        ..FalsifyOptions::default()
    }
}

fn run_audit(cfg: &RunConfig, cert: &mut Certificate) -> Result<(), HarnessError> {
    let p = prepare(cfg)?;
    constants(cert, &p);
    let opts = falsify_opts(cfg);
    let dom = p.op.domain();
    if let Some((x, name, v)) = p
        .spec
        .check_data_sign(dom, p.lambda1)
        .map_err(|e| stage("conditions", "data", ExitKind::ConfigOrIo)(e.to_string()))?
    {
        let mut c = Check::new("data_sign", "h >= 0 and h0 >= 0", v, 0.0);
        c.witness = Some(format!("{name} at x = {x:?}"));
        cert.push(c);
    }
    let l_max = lmax(p.spec.epsilon, p.lambda1);
    cert.push(Check::new("threshold", "L < Lmax", l_max - p.spec.l, 0.0).with("Lmax", fmt_num(l_max)));
    for kind in [
        ConditionKind::Coercive,
        ConditionKind::Growth,
        ConditionKind::Monotone,
        ConditionKind::Gamma0,
        ConditionKind::GammaInf,
    ] {
        let v = falsify_condition(kind, &p.spec, dom, p.lambda1, cfg.tolerances.falsify_budget, &opts)
            .map_err(|e| stage("conditions", "falsify", ExitKind::ConfigOrIo)(e.to_string()))?;
        let mut c = verdict_check(kind, &v);
        if kind == ConditionKind::Monotone && !v.is_pass() {
            // Monotonicity is only needed for uniqueness.
            c.values.push(("role".into(), "uniqueness only".into()));
            if matches!(v, Verdict::Witness(_)) {
                c.verdict = crate::analysis::CheckVerdict::Skipped;
            }
        }
        if kind == ConditionKind::GammaInf && v.is_pass() {
            let bound = p.spec.bind_params(p.lambda1);
            if let Ok(qss) = q_double_star(p.spec.q, p.spec.d_hat) {
                if qss.is_finite() {
                    if let Ok((sup, at)) = gamma_ratio_sup(&bound.gamma, &log_grid(1e2, 1e8, 61), qss / 2.0) {
                        c.values.push(("sup_ratio".into(), fmt_num(sup)));
                        c.values.push(("at".into(), fmt_num(at)));
                    }
                }
            }
        }
        cert.push(c);
    }
    Ok(())
}

fn run_solve(cfg: &RunConfig, out: &Output, cert: &mut Certificate) -> Result<(), HarnessError> {
    let p = prepare(cfg)?;
    constants(cert, &p);
    let tol = cfg.tolerances.solve;
    let opts = SemilinearOptions {
        lambda1: Some(p.lambda1),
        falsify: falsify_opts(cfg),
        budget: cfg.tolerances.falsify_budget,
        sandwich_tol: cfg.tolerances.sandwich,
        ..SemilinearOptions::default()
    };
    let dom = p.op.domain();
    if let Some((x, name, v)) = p
        .spec
        .check_data_sign(dom, p.lambda1)
        .map_err(|e| stage("conditions", "data", ExitKind::ConfigOrIo)(e.to_string()))?
    {
        let mut c = Check::new("falsify_data_sign", "h >= 0 and h0 >= 0", v, 0.0);
        c.witness = Some(format!("{name} at x = {x:?}"));
        cert.push(c);
        return Ok(());
    }
    for kind in [ConditionKind::Coercive, ConditionKind::Growth] {
        let v = falsify_condition(kind, &p.spec, dom, p.lambda1, opts.budget, &opts.falsify)
            .map_err(|e| stage("conditions", "falsify", ExitKind::ConfigOrIo)(e.to_string()))?;
        let c = verdict_check(kind, &v);
        let failed = !c.passed();
        cert.push(c);
        if failed {
            return Ok(());
        }
    }
    let run_opts = SemilinearOptions {
        check_preconditions: false,
        ..opts.clone()
    };
    let report = solve_semilinear(&p.op, &p.spec, tol, &run_opts).map_err(|e| {
        let exit = semilinear_exit(&e);
        stage("semilinear", "solve", exit)(e.to_string())
    })?;
    cert.constant("mu", fmt_num(report.mu));
    cert.constant("s0", fmt_num(report.s0));
    cert.constant("alpha", fmt_num(report.upper.alpha));
    cert.constant("rho0", fmt_num(report.h1.rho0));
    cert.constant("C", fmt_num(report.h1.c));
    cert.constant("levels", report.levels.len());
    let bound = report.upper.alpha.sqrt() + 1e-8;
    for (name, r) in [("contraction_upper", &report.upper), ("contraction_lower", &report.lower)] {
        cert.push(
            Check::new(name, "contraction ratio <= sqrt(alpha)", bound - r.max_ratio(), 0.0)
                .with("max_ratio", fmt_num(r.max_ratio()))
                .with("iterations", r.iterations),
        );
    }
    for c in &report.checks {
        cert.push(c.clone());
    }
    let hdata = report.h.clone();
    match moser_chain(&report.u, &hdata, p.spec.q, p.spec.d_hat) {
        Ok(chain) => {
            let finite = chain.norms.iter().all(|v| v.is_finite());
            let monotone = chain.norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
            let margin = if finite && monotone { chain.c1.map_or(0.0, |c| c - 1.0) } else { -1.0 };
            let mut c = Check::new("moser_chain", "finite monotone chain with fitted C1 >= 1", margin, 0.0)
                .with("qss", fmt_num(chain.qss))
                .with("ratio", fmt_num(chain.ratio))
                .with("steps", chain.exponents.len());
            if let Some(raw) = chain.c1_raw {
                c = c.with("C1_fitted_raw", fmt_num(raw));
            }
            cert.push(c);
        }
        Err(e) => cert.push(Check::skipped("moser_chain", "finite monotone chain with fitted C1 >= 1", &e.to_string())),
    }
    let mono = falsify_condition(ConditionKind::Monotone, &p.spec, dom, p.lambda1, opts.budget, &opts.falsify)
        .map_err(|e| stage("conditions", "falsify", ExitKind::ConfigOrIo)(e.to_string()))?;
    let claim = "solutions from random starts agree in H1 within 20 tol";
    if !mono.is_pass() || cfg.tolerances.uniqueness_trials < 2 {
        let reason = if mono.is_pass() { "fewer than two trials" } else { "monotonicity not established" };
        cert.push(Check::skipped("uniqueness", claim, reason));
    } else {
        let u = uniqueness_probe(&p.op, &p.spec, cfg.tolerances.uniqueness_trials, tol, cfg.seed, &run_opts)
            .map_err(|e| stage("semilinear", "uniqueness", semilinear_exit(&e))(e.to_string()))?;
        cert.push(
            Check::new("uniqueness", claim, u.threshold - u.max_distance, 0.0)
                .with("trials", u.trials)
                .with("max_distance", fmt_num(u.max_distance)),
        );
    }
    cert.notes.push("operator for the sandwich problems: Lap - (lambda1 - eps)".into());
    out.field("u", &report.u)?;
    out.field("v_lower", &report.lower.v)?;
    out.field("v_upper", &report.upper.v)?;
    out.text("trace_levels.csv", &report.level_csv())?;
    out.text("trace_sandwich_upper.csv", &sandwich_trace(&report.upper))?;
    out.text("trace_sandwich_lower.csv", &sandwich_trace(&report.lower))?;
    Ok(())
}

fn run_counterexample(cfg: &RunConfig, out: &Output, cert: &mut Certificate) -> Result<(), HarnessError> {
    let c = &cfg.counterexample;
    let case: CaseTag = c.case.parse().map_err(|e: crate::counterexample::CounterexampleError| HarnessError::Config(e.to_string()))?;
    if !(c.h > 0.0) || !(c.strip_width > 0.0) {
        return Err(HarnessError::Config("counterexample.h and strip_width must be positive".into()));
    }
    let geom = StripGeometry::strip(c.strip_width, c.h);
    let (lambda1, epsilon) = match case {
        CaseTag::I => (0.0, c.epsilon),
        _ => {
            let l = geom.lambda1();
            (l, c.epsilon_factor * l)
        }
    };
    let r = c.r_factor * lmax(epsilon, lambda1);
    let sp = SymbolProblem::new(case, lambda1, epsilon, r, 2)
        .map_err(|e| stage("counterexample", "choose_b", ExitKind::ConfigOrIo)(e.to_string()))?;
    let study = blowup_study(&sp, &c.widths, geom.h, c.strip_width)
        .map_err(|e| stage("counterexample", "blowup_study", ExitKind::ConfigOrIo)(e.to_string()))?;
    cert.constant("case", case);
    cert.constant("lambda1", fmt_num(lambda1));
    cert.constant("eps", fmt_num(epsilon));
    cert.constant("Lmax", fmt_num(sp.lmax()));
    cert.constant("r", fmt_num(r));
    cert.constant("b", format!("[{}, {}]", fmt_num(sp.b[0]), fmt_num(sp.b[1])));
    cert.constant("b_control", format!("[{}, {}]", fmt_num(study.b_control[0]), fmt_num(study.b_control[1])));
    cert.constant("zeta", fmt_num(study.zeta));
    cert.constant("xi", fmt_num(study.xi));
    cert.constant("h", fmt_num(study.h));
    cert.constant("verdict", study.verdict);
    if let Some(f) = &study.failure {
        cert.notes.push(format!("study stopped: {f}"));
    }
    let growth = study.min_growth().unwrap_or(f64::NAN);
    let spread = study.control_spread().unwrap_or(f64::NAN);
    let claim = "resonant ratio grows >= 1.5x per doubling, control within 2x";
    let mut check = if study.verdict == BlowupVerdict::Inconclusive {
        Check::new("blowup", claim, -1.0, 0.0).with("reason", "fewer than two widths")
    } else {
        let margin = (growth - crate::counterexample::GROWTH_FACTOR).min(crate::counterexample::CONTROL_FACTOR - spread);
        Check::new("blowup", claim, if margin.is_nan() { -1.0 } else { margin }, 0.0)
    };
    check = check
        .with("verdict", study.verdict)
        .with("min_growth", fmt_num(growth))
        .with("control_spread", fmt_num(spread));
    cert.push(check);
    out.text("blowup.csv", &study.csv())?;
    if let Some(row) = study.rows.last() {
        let u = resonant_field(&sp, row.t, c)?;
        out.complex_field("u_resonant", &u)?;
    }
    Ok(())
}

/// The resonant solution at half-width `t` as a field on the strip grid.
fn resonant_field(sp: &SymbolProblem<f64>, t: f64, c: &CounterexampleConfig) -> Result<ComplexField<f64>, HarnessError> {
    let fail = |e: String| stage("counterexample", "resonant_field", ExitKind::ConfigOrIo)(e);
    let geom = study_geometry(sp.case, t, c.h, c.strip_width);
    let (zeta, xi) = sp.symbol_zero().map_err(|e| fail(e.to_string()))?;
    let sol = strip_solution(&geom, t, &sp.b, sp.lambda1, sp.epsilon, zeta, xi[0]).map_err(|e| fail(e.to_string()))?;
    let h = geom.h;
    let lo = vec![geom.x1_lo, -t];
    let hi = vec![geom.x1_lo + h * (sol.n1 + 1) as f64, -t + h * (sol.n2 + 1) as f64];
    let dom = build_domain(&DomainSpec::Box { lo: lo.clone(), hi: hi.clone() }, h, &BoundingBox::new(lo, hi))
        .map_err(|e| fail(e.to_string()))?;
    if dom.len() != sol.u.len() {
        return Err(fail(format!("strip grid has {} nodes, solution {}", dom.len(), sol.u.len())));
    }
    let values = (0..dom.len())
        .map(|n| {
            let x = dom.coords(n);
            let i = ((x[0] - geom.x1_lo) / h).round() as usize - 1;
            let j = ((x[1] + t) / h).round() as usize - 1;
            sol.u[j * sol.n1 + i]
        })
        .collect();
    Ok(ComplexField::from_values(&Arc::new(dom), values))
}

/// The partial config used by tests and the CLI to describe a solve problem
/// inline.
pub fn solve_config_text(domain: &str, semilinearity: &str, extra: &str) -> String {
    format!("mode = \"solve\"\n{extra}\n[domain]\n{domain}\n[semilinearity]\n{semilinearity}\n")
}
