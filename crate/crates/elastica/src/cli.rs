//! Experiment driver: JSON configs, convergence sweeps, spectra and gap
//! studies, CSV export and run manifests.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_array, make_curve, ClosedCurve, CurveSpec, InclusionArray};
use crate::kernels::{LamePair, Mat2};
use crate::solvers::{error_snorm, Assembly, LoadSpec, SolutionBundle};
use crate::spectra::{gap_row, np_spectrum, unit_cell_constants, GapRow, NpMode, SpectralReport, Subspace};

/// Margin used for the uniform admissibility of `(λ̃/μ̃, 1)` in Case 3.
pub const CASE3_DELTA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Spectrum,
    Solve,
    Converge,
    Gap,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Spectrum => "spectrum",
            Kind::Solve => "solve",
            Kind::Converge => "converge",
            Kind::Gap => "gap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: NpMode,
    #[serde(default = "default_subspace")]
    pub subspace: Subspace,
}

fn default_mode() -> NpMode {
    NpMode::Neumann
}
fn default_subspace() -> Subspace {
    Subspace::Full
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { kind: None, seed: 0, mode: default_mode(), subspace: default_subspace() }
    }
}

/// A single period or a list of periods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Periods {
    One(f64),
    Many(Vec<f64>),
}

impl Periods {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Periods::One(e) => vec![*e],
            Periods::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "default_outer")]
    pub outer: CurveSpec,
    #[serde(default = "default_omega")]
    pub omega: CurveSpec,
    #[serde(default = "default_eps")]
    pub eps: Periods,
    #[serde(rename = "N_incl", default = "default_n_incl")]
    pub n_incl: usize,
    #[serde(rename = "N_outer", default = "default_n_outer")]
    pub n_outer: usize,
}

fn default_outer() -> CurveSpec {
    CurveSpec::Circle { center: [0.0, 0.0], radius: 2.0 }
}
fn default_omega() -> CurveSpec {
    CurveSpec::Circle { center: [0.0, 0.0], radius: 0.25 }
}
fn default_eps() -> Periods {
    Periods::Many(vec![1.0, 0.5])
}
fn default_n_incl() -> usize {
    64
}
fn default_n_outer() -> usize {
    256
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            outer: default_outer(),
            omega: default_omega(),
            eps: default_eps(),
            n_incl: default_n_incl(),
            n_outer: default_n_outer(),
        }
    }
}

/// Contrast sweep: Case 1 varies `λ̃` at fixed `μ̃`, Case 2 scales
/// `(λ̃, μ̃) = t·(λ̃₀, μ̃₀)`, Case 3 varies `μ̃` at fixed `λ̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contrast {
    pub case: u8,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub lambda_tilde: f64,
    #[serde(default = "one")]
    pub mu_tilde: f64,
}

/// Uniform admissibility of the rescaled pair `(λ̃/μ̃, 1)`.
pub fn case3_admissible(p: LamePair) -> bool {
    LamePair { lambda: p.lambda / p.mu, mu: 1.0 }.is_uniformly_admissible(CASE3_DELTA)
}

fn one() -> f64 {
    1.0
}

impl Contrast {
    /// Inclusion pair at sweep parameter `v`.
    pub fn pair(&self, v: f64) -> LamePair {
        match self.case {
            1 => LamePair { lambda: v, mu: self.mu_tilde },
            2 => LamePair { lambda: v * self.lambda_tilde, mu: v * self.mu_tilde },
            _ => LamePair { lambda: self.lambda_tilde, mu: v },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub mu: f64,
    pub contrast: Option<Contrast>,
}

impl Default for MaterialSection {
    fn default() -> Self {
        MaterialSection { lambda: 1.0, mu: 1.0, contrast: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    #[serde(rename = "A")]
    pub a: Mat2,
}

impl Default for LoadSection {
    fn default() -> Self {
        LoadSection { a: [[1.0, 0.0], [0.0, -1.0]] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("results") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub load: LoadSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    /// Exit code 2: the config does not parse or validate.
    Config { path: String, message: String },
    /// Exit code 3: a numerical or I/O operation failed.
    Numerical(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config { path, message } if path.is_empty() || path == "." => write!(f, "config: {message}"),
            RunError::Config { path, message } => write!(f, "config: {path}: {message}"),
            RunError::Numerical(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numerical(e)
    }
}

fn invalid(path: &str, message: impl Into<String>) -> RunError {
    RunError::Config { path: path.into(), message: message.into() }
}

impl Config {
    pub fn from_json(text: &str) -> std::result::Result<Self, RunError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| invalid(&e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RunError::Config { path: path.display().to_string(), message: source.to_string() })?;
        Self::from_json(&text)
    }

    pub fn outer(&self) -> Result<ClosedCurve> {
        make_curve(self.geometry.outer.clone())
    }

    pub fn omega(&self) -> Result<ClosedCurve> {
        make_curve(self.geometry.omega.clone())
    }

    pub fn background(&self) -> LamePair {
        LamePair { lambda: self.material.lambda, mu: self.material.mu }
    }

    /// Schema-level checks, run before any numerics.
    pub fn validate(&self) -> std::result::Result<(), RunError> {
        let g = &self.geometry;
        self.outer().map_err(|e| invalid("geometry.outer", e.to_string()))?;
        self.omega().map_err(|e| invalid("geometry.omega", e.to_string()))?;
        let eps = g.eps.values();
        if eps.is_empty() {
            return Err(invalid("geometry.eps", "at least one period is required"));
        }
        for (i, e) in eps.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(invalid(&format!("geometry.eps[{i}]"), format!("period must lie in (0, 1], got {e}")));
            }
        }
        for (name, n) in [("geometry.N_incl", g.n_incl), ("geometry.N_outer", g.n_outer)] {
            if n < 8 || n % 2 == 1 {
                return Err(invalid(name, format!("need an even node count ≥ 8, got {n}")));
            }
        }
        let m = &self.material;
        if !(m.mu > 0.0 && m.mu.is_finite()) {
            return Err(invalid("material.mu", format!("must be positive, got {}", m.mu)));
        }
        if !self.background().is_admissible() {
            return Err(invalid("material.lambda", format!("pair ({}, {}) is not admissible", m.lambda, m.mu)));
        }
        if let Some(c) = &m.contrast {
            if !(1..=3).contains(&c.case) {
                return Err(invalid("material.contrast.case", format!("must be 1, 2 or 3, got {}", c.case)));
            }
            for (name, v) in [("material.contrast.lambda_tilde", c.lambda_tilde), ("material.contrast.mu_tilde", c.mu_tilde)] {
                if !v.is_finite() {
                    return Err(invalid(name, "must be finite"));
                }
            }
            if c.values.is_empty() {
                return Err(invalid("material.contrast.values", "at least one value is required"));
            }
            for (i, v) in c.values.iter().enumerate() {
                let path = format!("material.contrast.values[{i}]");
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(invalid(&path, format!("must be positive, got {v}")));
                }
                let p = c.pair(*v);
                if !p.is_admissible() {
                    return Err(invalid(&path, format!("inclusion pair ({}, {}) is not admissible", p.lambda, p.mu)));
                }
                if c.case == 3 && !case3_admissible(p) {
                    return Err(invalid(&path, "rescaled pair (λ̃/μ̃, 1) is not uniformly admissible"));
                }
            }
        }
        if self.load.a.iter().flatten().any(|v| !v.is_finite()) || self.load.a[0][1] != self.load.a[1][0] {
            return Err(invalid("load.A", "must be a finite symmetric 2×2 matrix"));
        }
        Ok(())
    }

    fn contrast(&self) -> std::result::Result<&Contrast, RunError> {
        self.material.contrast.as_ref().ok_or_else(|| invalid("material.contrast", "required for this run kind"))
    }
}

/// One point of a convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub case: u8,
    pub param: f64,
    /// `‖φ − φ_lim‖_{𝕊ᴺ}`.
    pub error: f64,
    /// `‖𝕊⁻¹𝐆‖_{𝕊ᴺ}`.
    pub load_norm: f64,
    /// `‖φ‖_{𝕊ᴺ}`.
    pub phi_norm: f64,
    pub eps: f64,
    pub n_incl: usize,
    pub n_outer: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Invalid(format!("need at least 3 points, got {}", x.len().min(y.len()))));
    }
    if x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Invalid("parameters must be positive".into()));
    }
    if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NothingToFit("errors must be positive and finite".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let (lo, hi) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi - lo < 2.0 - 1e-12 {
        return Err(Error::Invalid(format!("parameters span {:.2} decades, need 2", hi - lo)));
    }
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, r_squared })
}

pub fn fit_rate(records: &[ConvergenceRecord]) -> Result<RateFit> {
    let x: Vec<f64> = records.iter().map(|r| r.param).collect();
    let y: Vec<f64> = records.iter().map(|r| r.error).collect();
    fit_power_law(&x, &y)
}

/// Rows of a CSV export.
pub trait CsvRows {
    fn header() -> &'static [&'static str];
    fn row(&self) -> Vec<String>;
}

/// Scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl CsvRows for ConvergenceRecord {
    fn header() -> &'static [&'static str] {
        &["case", "param", "error", "load_norm", "phi_norm", "seconds"]
    }
    fn row(&self) -> Vec<String> {
        vec![self.case.to_string(), fmt_float(self.param), fmt_float(self.error), fmt_float(self.load_norm), fmt_float(self.phi_norm), fmt_float(self.seconds)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub mode: NpMode,
    pub subspace: Subspace,
    pub eps: f64,
    pub index: usize,
    pub theta: f64,
}

impl CsvRows for SpectrumRow {
    fn header() -> &'static [&'static str] {
        &["mode", "subspace", "eps", "index", "theta"]
    }
    fn row(&self) -> Vec<String> {
        vec![self.mode.to_string(), self.subspace.to_string(), fmt_float(self.eps), self.index.to_string(), fmt_float(self.theta)]
    }
}

/// Spectrum rows of a report, ascending in `θ`.
pub fn spectrum_rows(report: &SpectralReport, eps: f64) -> Vec<SpectrumRow> {
    let mut ev = report.eigenvalues.clone();
    ev.sort_by(f64::total_cmp);
    ev.into_iter()
        .enumerate()
        .map(|(index, theta)| SpectrumRow { mode: report.mode, subspace: report.subspace, eps, index, theta })
        .collect()
}

impl CsvRows for GapRow {
    fn header() -> &'static [&'static str] {
        &["eps", "mN", "MN", "mD", "MD", "delta1"]
    }
    fn row(&self) -> Vec<String> {
        [self.eps, self.m_n, self.big_m_n, self.m_d, self.big_m_d, self.delta1].iter().map(|v| fmt_float(*v)).collect()
    }
}

/// Density of one transmission solve at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub param: f64,
    pub component: usize,
    pub node: usize,
    pub x: [f64; 2],
    pub phi: [f64; 2],
}

impl CsvRows for DensityRow {
    fn header() -> &'static [&'static str] {
        &["param", "component", "node", "x", "y", "phi_x", "phi_y"]
    }
    fn row(&self) -> Vec<String> {
        vec![
            fmt_float(self.param),
            self.component.to_string(),
            self.node.to_string(),
            fmt_float(self.x[0]),
            fmt_float(self.x[1]),
            fmt_float(self.phi[0]),
            fmt_float(self.phi[1]),
        ]
    }
}

pub fn export_csv<T: CsvRows>(rows: &[T], path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(T::header())?;
    for r in rows {
        w.write_record(r.row())?;
    }
    w.flush().map_err(io)
}

/// Threads from the flag, then `ELASTICA_NP_THREADS`, then available parallelism.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("ELASTICA_NP_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Applies `f` to every item on up to `threads` workers; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every item processed")).collect()
}

fn build(cfg: &Config, eps: f64) -> Result<InclusionArray> {
    build_array(&cfg.outer()?, &cfg.omega()?, eps, cfg.geometry.n_incl, cfg.geometry.n_outer)
}

fn limit_solution(asm: &Arc<Assembly>, c: &Contrast, load: &LoadSpec) -> Result<SolutionBundle> {
    match c.case {
        1 => asm.limit_stokes(c.mu_tilde, load),
        2 => asm.limit_soft(load),
        _ => asm.limit_rigid(load),
    }
}

/// Sweep of one contrast case at one period, points dispatched to workers.
pub fn converge_sweep(cfg: &Config, eps: f64, threads: usize) -> Result<Vec<ConvergenceRecord>> {
    let c = cfg.material.contrast.as_ref().ok_or_else(|| Error::Invalid("contrast sweep required".into()))?;
    let load = LoadSpec::new(cfg.load.a)?;
    let asm = Assembly::new(&build(cfg, eps)?, cfg.background())?;
    let lim = limit_solution(&asm, c, &load)?;
    let load_norm = asm.load_norm(&asm.background(&load));
    let mut values = c.values.clone();
    values.sort_by(f64::total_cmp);
    let results = parallel_map(&values, threads, |&v| -> Result<ConvergenceRecord> {
        let start = Instant::now();
        let pair = c.pair(v);
        if c.case == 3 && !case3_admissible(pair) {
            return Err(Error::Inadmissible { lambda: pair.lambda / pair.mu, mu: 1.0 });
        }
        let sol = asm.transmission(pair, &load)?;
        let error = error_snorm(&sol, &lim)?;
        let phi_norm = sol.snorm();
        Ok(ConvergenceRecord {
            case: c.case,
            param: v,
            error,
            load_norm,
            phi_norm,
            eps,
            n_incl: cfg.geometry.n_incl,
            n_outer: cfg.geometry.n_outer,
            seconds: start.elapsed().as_secs_f64(),
        })
    });
    results.into_iter().collect()
}

/// Sweep-wide constant `C = max ‖φ‖/‖𝕊⁻¹𝐆‖` and the bound check `‖φ‖ ≤ C‖𝕊⁻¹𝐆‖`.
pub fn stability_constant(records: &[ConvergenceRecord]) -> Result<f64> {
    let c = records.iter().map(|r| if r.load_norm > 0.0 { r.phi_norm / r.load_norm } else { 0.0 }).fold(0.0, f64::max);
    if !c.is_finite() {
        return Err(Error::Invalid("non-finite stability constant".into()));
    }
    for r in records {
        if r.phi_norm > c * r.load_norm * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::Invalid(format!("stability bound fails at parameter {}", r.param)));
        }
    }
    Ok(c)
}

/// Files written by a run and a JSON summary for the manifest.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: Kind,
    version: &'static str,
    config: &'a Config,
    threads: usize,
    seconds: f64,
    files: Vec<String>,
    summary: &'a serde_json::Value,
}

/// Executes `kind` with the given config and writes results plus `manifest.json` into `out`.
pub fn run_config(kind: Kind, cfg: &Config, out: &Path, threads: usize) -> std::result::Result<RunOutput, RunError> {
    if let Some(k) = cfg.run.kind {
        if k != kind {
            return Err(invalid("run.kind", format!("config is for `{k}`, command is `{kind}`")));
        }
    }
    if matches!(kind, Kind::Converge | Kind::Solve) {
        cfg.contrast()?;
    }
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })?;
    let start = Instant::now();
    let mut result = match kind {
        Kind::Spectrum => run_spectrum(cfg, out, threads)?,
        Kind::Solve => run_solve(cfg, out, threads)?,
        Kind::Converge => run_converge(cfg, out, threads)?,
        Kind::Gap => run_gap(cfg, out, threads)?,
    };
    let path = out.join("manifest.json");
    let manifest = Manifest {
        kind,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        threads,
        seconds: start.elapsed().as_secs_f64(),
        files: result.files.iter().map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect(),
        summary: &result.summary,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let io = |source| Error::Io { path: path.display().to_string(), source };
    File::create(&path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(io)?;
    result.files.push(path);
    Ok(result)
}

fn run_spectrum(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutput> {
    let pair = cfg.background();
    let eps = cfg.geometry.eps.values();
    let reports = parallel_map(&eps, threads, |&e| -> Result<SpectralReport> {
        let a = build(cfg, e)?;
        np_spectrum(&a.inclusions, &a.outer_mesh, pair, cfg.run.mode, cfg.run.subspace)
    });
    let mut rows = vec![];
    let mut summary = vec![];
    for (e, r) in eps.iter().zip(reports) {
        let r = r?;
        rows.extend(spectrum_rows(&r, *e));
        summary.push(serde_json::json!({
            "eps": e, "components": r.components, "dof": r.dof, "m": r.m, "M": r.big_m,
            "delta1": r.delta1, "near_half": r.near_half, "asymmetry": r.asymmetry,
        }));
    }
    let path = out.join("spectrum.csv");
    export_csv(&rows, &path)?;
    Ok(RunOutput { files: vec![path], summary: serde_json::Value::Array(summary) })
}

fn run_solve(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutput> {
    let c = cfg.material.contrast.as_ref().expect("validated");
    let load = LoadSpec::new(cfg.load.a)?;
    let mut rows = vec![];
    let mut summary = vec![];
    for e in cfg.geometry.eps.values() {
        let asm = Assembly::new(&build(cfg, e)?, cfg.background())?;
        let lim = limit_solution(&asm, c, &load)?;
        let mut values = c.values.clone();
        values.sort_by(f64::total_cmp);
        let sols = parallel_map(&values, threads, |&v| asm.transmission(c.pair(v), &load));
        let mesh = asm.mesh();
        for (v, sol) in values.iter().zip(sols) {
            let sol = sol?;
            for (ci, comp) in mesh.components.iter().enumerate() {
                for j in 0..comp.n {
                    let d = 2 * (comp.offset + j);
                    rows.push(DensityRow { param: *v, component: ci, node: j, x: comp.nodes[j], phi: [sol.phi[d], sol.phi[d + 1]] });
                }
            }
            summary.push(serde_json::json!({
                "eps": e, "param": v, "phi_norm": sol.snorm(), "error": error_snorm(&sol, &lim)?,
            }));
        }
    }
    let path = out.join("solve.csv");
    export_csv(&rows, &path)?;
    Ok(RunOutput { files: vec![path], summary: serde_json::Value::Array(summary) })
}

fn run_converge(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutput> {
    let mut records = vec![];
    let mut summary = vec![];
    for e in cfg.geometry.eps.values() {
        let rec = converge_sweep(cfg, e, threads)?;
        let fit = fit_rate(&rec).ok();
        let constant = stability_constant(&rec)?;
        summary.push(serde_json::json!({
            "eps": e,
            "slope": fit.map(|f| f.slope),
            "r_squared": fit.map(|f| f.r_squared),
            "stability_constant": constant,
        }));
        records.extend(rec);
    }
    let path = out.join("converge.csv");
    export_csv(&records, &path)?;
    Ok(RunOutput { files: vec![path], summary: serde_json::Value::Array(summary) })
}

fn run_gap(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutput> {
    let (outer, omega, pair) = (cfg.outer()?, cfg.omega()?, cfg.background());
    let cell = unit_cell_constants(&omega, pair, cfg.geometry.n_incl)?;
    let eps = cfg.geometry.eps.values();
    let rows = parallel_map(&eps, threads, |&e| gap_row(&outer, &omega, pair, e, cfg.geometry.n_incl, cfg.geometry.n_outer))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("gap.csv");
    export_csv(&rows, &path)?;
    let delta1 = rows.iter().map(|r| r.delta1).fold(f64::INFINITY, f64::min);
    let summary = serde_json::json!({
        "cell": cell,
        "delta1": delta1,
        "rows": rows.iter().map(|r| serde_json::json!({
            "eps": r.eps, "cells": r.cells, "ordering_slack": r.ordering_slack(), "cell_slack": r.cell_slack(&cell),
        })).collect::<Vec<_>>(),
    });
    Ok(RunOutput { files: vec![path], summary })
}
