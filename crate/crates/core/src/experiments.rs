//! Experiment drivers behind the command-line interface.
//!
//! Every driver validates its configuration, writes CSV files with 17
//! significant digits, and places a `<file>.meta.json` sidecar next to each
//! output carrying the configuration and library version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gpr::{sample_collocation, CollocationSet, Geometry, GprModel, ProblemData};
use crate::heat::{fd_residual, heat_exact, heat_grid, heat_problem, heat_source};
use crate::kernels::{monte_carlo_kernel, KernelFamily, KernelSpec};
use crate::nie::{nie_solve_grid, toy_predict, ToyConfig};
use crate::operators::{Axis, DomainGrid, End, Face, LinearDiffOp};
use crate::points::PointSet;
use crate::spectral::{
    augmented_source, crossing_index, cumulative_curve, eig_kernel, eig_lkhatl, figure_of_merit_qn,
};
use crate::VERSION;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noise variance as a function of the number of bulk points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseRule {
    /// `sigma2 = v`.
    Fixed(f64),
    /// `sigma2 = v / n_bulk`.
    InverseBulk(f64),
    /// `sigma2 = v * n_bulk`.
    ProportionalBulk(f64),
}

impl NoiseRule {
    pub fn sigma2(&self, n_bulk: usize) -> f64 {
        match *self {
            NoiseRule::Fixed(v) => v,
            NoiseRule::InverseBulk(v) => v / n_bulk as f64,
            NoiseRule::ProportionalBulk(v) => v * n_bulk as f64,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let v = match *self {
            NoiseRule::Fixed(v) | NoiseRule::InverseBulk(v) | NoiseRule::ProportionalBulk(v) => v,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} must be positive")))
        }
    }
}

/// Placement of bulk collocation points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// I.i.d. uniform draws.
    Iid,
    /// Cell midpoints of a uniform lattice.
    Lattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range1 {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range1 {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i + 1 == self.n { self.hi } else { self.lo + i as f64 * h }).collect()
    }
}

fn check_experiment(name: &Option<String>, expected: &str) -> Result<()> {
    match name {
        Some(n) if n != expected => {
            Err(Error::Config(format!("config is for experiment {n:?}, not {expected:?}")))
        }
        _ => Ok(()),
    }
}

/// Half-line toy problem: GPR against the neurally-informed equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub l: f64,
    pub g0: f64,
    pub x_max: f64,
    pub n_bulk: Vec<usize>,
    pub inset_n_bulk: Vec<usize>,
    pub sigma2_bulk: NoiseRule,
    pub n_boundary: usize,
    pub sigma2_boundary: NoiseRule,
    pub x_star: Range1,
    pub x_probe: f64,
    pub placement: Placement,
    pub seed: u64,
    /// Grid for the discretized equation, `[0, grid_length]`.
    pub grid_length: f64,
    pub grid_points: usize,
}

impl Default for ToyExperimentConfig {
    fn default() -> Self {
        ToyExperimentConfig {
            experiment: None,
            l: 1.0,
            g0: 2.5,
            x_max: 512.0,
            n_bulk: vec![128, 1024, 8192],
            inset_n_bulk: (7..=13).map(|p| 1usize << p).collect(),
            sigma2_bulk: NoiseRule::Fixed(0.125),
            n_boundary: 1,
            sigma2_boundary: NoiseRule::InverseBulk(1.0 / 64.0),
            x_star: Range1 { lo: 0.0, hi: 6.0, n: 61 },
            x_probe: 1.2,
            placement: Placement::Iid,
            seed: 0,
            grid_length: 200.0,
            grid_points: 2001,
        }
    }
}

impl ToyExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_experiment(&self.experiment, "toy")?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.l) && pos(self.x_max) && pos(self.grid_length)) || !self.g0.is_finite() {
            return Err(Error::Config("l, x_max and grid_length must be positive, g0 finite".into()));
        }
        if self.n_bulk.is_empty() || self.n_bulk.contains(&0) || self.inset_n_bulk.contains(&0) {
            return Err(Error::Config("n_bulk must be a non-empty list of positive counts".into()));
        }
        if self.n_boundary == 0 {
            return Err(Error::Config("the toy problem needs at least one boundary point".into()));
        }
        if self.x_star.n == 0 || self.x_star.lo < 0.0 || self.x_star.hi < self.x_star.lo {
            return Err(Error::Config("x_star must be a non-empty range in [0, inf)".into()));
        }
        if self.x_star.hi > self.grid_length || self.x_probe < 0.0 || self.grid_points < 8 {
            return Err(Error::Config("x_star must lie inside the grid and x_probe must be >= 0".into()));
        }
        self.sigma2_bulk.validate("sigma2_bulk")?;
        self.sigma2_boundary.validate("sigma2_boundary")?;
        Ok(())
    }

    pub fn collocation(&self, n: usize) -> Result<CollocationSet> {
        let s2 = self.sigma2_bulk.sigma2(n);
        let s2b = self.sigma2_boundary.sigma2(n);
        let geometry = Geometry::interval(0.0, self.x_max, &[End::Lo]);
        match self.placement {
            Placement::Iid => sample_collocation(&geometry, n, self.n_boundary, s2, s2b, self.seed),
            Placement::Lattice => {
                let h = self.x_max / n as f64;
                let bulk: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
                CollocationSet::new(
                    PointSet::from_scalars(&bulk),
                    PointSet::from_scalars(&vec![0.0; self.n_boundary]),
                    s2,
                    s2b,
                )
            }
        }
    }

    /// Couplings entering the analytic solution for `n` bulk points.
    pub fn toy_config(&self, n: usize) -> ToyConfig {
        ToyConfig::from_data_densities(
            self.l,
            self.g0,
            n,
            self.sigma2_bulk.sigma2(n),
            self.n_boundary,
            self.sigma2_boundary.sigma2(n),
            self.x_max,
        )
    }

    /// Couplings read literally as `n / sigma2`, without measure factors.
    pub fn literal_toy_config(&self, n: usize) -> ToyConfig {
        ToyConfig {
            x_max: self.x_max,
            ..ToyConfig::new(
                self.l,
                self.g0,
                n as f64 / self.sigma2_bulk.sigma2(n),
                self.n_boundary as f64 / self.sigma2_boundary.sigma2(n),
            )
        }
    }

    pub fn problem(&self) -> ProblemData {
        let g0 = self.g0;
        ProblemData::new(|_| 0.0, move |_| g0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(self.l))
    }
}

/// Heat equation diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub kernel: KernelSpec,
    /// Initialization scale applied to the kernel.
    pub alpha: f64,
    pub a_values: Vec<f64>,
    pub residual_grid: [usize; 2],
    pub fd_accuracy: usize,
    pub spectral_grid: [usize; 2],
    pub operator_grid: [usize; 2],
    pub n_bulk: Vec<usize>,
    pub n_boundary: usize,
    pub sigma2_bulk: f64,
    pub sigma2_boundary: f64,
    pub test_grid: [usize; 2],
    pub eta_ladder: Vec<f64>,
    pub crossing_threshold: f64,
    pub seed: u64,
}

impl Default for HeatExperimentConfig {
    fn default() -> Self {
        HeatExperimentConfig {
            experiment: None,
            kernel: KernelSpec::erf(1.0),
            alpha: 2.0,
            a_values: vec![1.0 / 16.0, 1.0 / 32.0],
            residual_grid: [201, 101],
            fd_accuracy: 4,
            spectral_grid: [64, 32],
            operator_grid: [32, 16],
            n_bulk: vec![64, 128, 256],
            n_boundary: 64,
            sigma2_bulk: 1e-3,
            sigma2_boundary: 1e-3,
            test_grid: [41, 21],
            eta_ladder: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            crossing_threshold: 0.99,
            seed: 0,
        }
    }
}

impl HeatExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_experiment(&self.experiment, "heat")?;
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.a_values.is_empty() || self.a_values.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config("a_values must be positive".into()));
        }
        for g in [self.residual_grid, self.spectral_grid, self.operator_grid, self.test_grid] {
            if g[0] < 2 || g[1] < 2 {
                return Err(Error::Config("grids need at least two nodes per axis".into()));
            }
        }
        if !(self.sigma2_bulk > 0.0 && self.sigma2_boundary > 0.0) {
            return Err(Error::Config("noise variances must be positive".into()));
        }
        if self.eta_ladder.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("eta_ladder must be non-negative".into()));
        }
        if !(self.crossing_threshold > 0.0 && self.crossing_threshold <= 1.0) {
            return Err(Error::Config("crossing_threshold must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn scaled_kernel(&self) -> KernelSpec {
        self.kernel.scaled_init(self.alpha)
    }

    pub fn eta_boundary(&self) -> f64 {
        self.n_boundary as f64 / self.sigma2_boundary
    }
}

/// A scalar function named in a configuration file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionSpec {
    Const(f64),
    HeatSource(f64),
    HeatExact(f64),
}

impl FunctionSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            FunctionSpec::Const(c) => c,
            FunctionSpec::HeatSource(a) => heat_source(a, x[0], x[1]),
            FunctionSpec::HeatExact(a) => heat_exact(a, x[0], x[1]),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            FunctionSpec::Const(_) => None,
            _ => Some(2),
        }
    }
}

impl Serialize for FunctionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text = match self {
            FunctionSpec::Const(c) => format!("const:{c:?}"),
            FunctionSpec::HeatSource(a) => format!("heat_source:{a:?}"),
            FunctionSpec::HeatExact(a) => format!("heat_exact:{a:?}"),
        };
        s.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for FunctionSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (kind, v) = s.split_once(':').ok_or_else(|| D::Error::custom(format!("bad function {s:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| D::Error::custom(format!("bad function parameter in {s:?}")))?;
        if !v.is_finite() {
            return Err(D::Error::custom("function parameter must be finite"));
        }
        match kind {
            "const" => Ok(FunctionSpec::Const(v)),
            "heat_source" if v > 0.0 => Ok(FunctionSpec::HeatSource(v)),
            "heat_exact" if v > 0.0 => Ok(FunctionSpec::HeatExact(v)),
            _ => Err(D::Error::custom(format!("unknown function {s:?}"))),
        }
    }
}

/// Spectral diagnostics of `L K^ L^dagger` for a user-specified problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub kernel: KernelSpec,
    pub operator: LinearDiffOp,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub faces: Vec<Face>,
    pub source: FunctionSpec,
    pub boundary: FunctionSpec,
    pub eta_boundary: f64,
    pub eta_bulk: Vec<f64>,
    /// Function whose expansion in the eigenbasis of `K` is reported.
    #[serde(default)]
    pub target: Option<FunctionSpec>,
}

impl SpectralExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_experiment(&self.experiment, "spectral")?;
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        let d = self.axes.len();
        if d != self.operator.dim() {
            return Err(Error::Config("operator and axes differ in dimension".into()));
        }
        for f in [Some(self.source), Some(self.boundary), self.target].into_iter().flatten() {
            if f.dim().is_some_and(|fd| fd != d) {
                return Err(Error::Config(format!("function {f:?} needs a {}-dimensional grid", fd_of(&f))));
            }
        }
        if !(self.eta_boundary.is_finite() && self.eta_boundary >= 0.0) {
            return Err(Error::Config("eta_boundary must be non-negative".into()));
        }
        if self.eta_bulk.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("eta_bulk must be non-negative".into()));
        }
        if self.eta_boundary > 0.0 && self.faces.is_empty() {
            return Err(Error::Config("eta_boundary > 0 needs boundary faces".into()));
        }
        Ok(())
    }
}

fn fd_of(f: &FunctionSpec) -> usize {
    f.dim().unwrap_or(1)
}

/// Monte-Carlo check of the kernel closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub families: Vec<KernelFamily>,
    pub l: f64,
    pub alpha: f64,
    pub pairs: usize,
    pub width: usize,
    pub n_nets: usize,
    pub input_dim: usize,
    /// Points are drawn uniformly from `[-range, range]^input_dim`.
    pub range: f64,
    pub seed: u64,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        KernelCheckConfig {
            experiment: None,
            families: vec![KernelFamily::CosineFeature, KernelFamily::SineFeature, KernelFamily::ErfArcsine],
            l: 1.0,
            alpha: 1.0,
            pairs: 10,
            width: 100,
            n_nets: 10_000,
            input_dim: 1,
            range: 2.0,
            seed: 0,
        }
    }
}

impl KernelCheckConfig {
    pub fn validate(&self) -> Result<()> {
        check_experiment(&self.experiment, "kernel-check")?;
        if let Some(f) = self.families.iter().find(|f| !f.has_feature_map()) {
            return Err(Error::UnsupportedFamily(f.name()));
        }
        if self.families.is_empty() || self.pairs == 0 || self.input_dim == 0 {
            return Err(Error::Config("families, pairs and input_dim must be non-empty".into()));
        }
        if self.width.saturating_mul(self.n_nets) < 1000 || self.n_nets < 2 {
            return Err(Error::Config("width * n_nets must be at least 1000 with n_nets >= 2".into()));
        }
        if !(self.l > 0.0 && self.alpha > 0.0 && self.range > 0.0) {
            return Err(Error::Config("l, alpha and range must be positive".into()));
        }
        Ok(())
    }
}

/// Parses a configuration document, mapping schema errors to config errors.
pub fn parse_config<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// A CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Output directory with sidecar bookkeeping.
pub struct OutputDir {
    dir: PathBuf,
    experiment: &'static str,
    config: Value,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn new(dir: &Path, experiment: &'static str, config: &impl Serialize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), experiment, config: serde_json::to_value(config)?, files: Vec::new() })
    }

    fn sidecar(&mut self, name: &str, columns: Option<&[&str]>) -> Result<()> {
        let mut meta = json!({
            "file": name,
            "experiment": self.experiment,
            "library": "pinn-spectral",
            "version": VERSION,
            "config": self.config,
        });
        if let Some(c) = columns {
            meta["columns"] = json!(c);
        }
        let path = self.dir.join(format!("{name}.meta.json"));
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
        self.files.push(path);
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(path.clone());
        self.sidecar(name, Some(header))?;
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(path.clone());
        self.sidecar(name, None)?;
        Ok(path)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

/// Files written by a driver and its summary document.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Writes `error.json` describing a failed run.
pub fn write_error_report(dir: &Path, experiment: &str, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("error.json");
    let report = json!({
        "experiment": experiment,
        "error": err.to_string(),
        "kind": error_kind(err),
        "exit_code": err.exit_code(),
        "library": "pinn-spectral",
        "version": VERSION,
    });
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(path)
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::InvalidInput(_) => "invalid_input",
        Error::UnsupportedFamily(_) => "unsupported_family",
        Error::DerivativeOrder { .. } => "derivative_order",
        Error::GridTooSmall { .. } => "grid_too_small",
        Error::IllConditioned { .. } => "ill_conditioned",
        Error::Singular(_) => "singular",
        Error::QuadratureNonConvergence { .. } => "quadrature",
        Error::Asymmetric(_) => "asymmetric",
        Error::NegativeEigenvalue { .. } => "negative_eigenvalue",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// Least-squares line `y = slope x + intercept` with its `R^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput("linear fit needs two or more points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Log-log fit of `g0 - f(x_probe)` against `n`.
pub fn powerlaw_fit(ns: &[usize], gaps: &[f64]) -> Result<LinearFit> {
    if gaps.iter().any(|g| g.is_nan() || *g <= 0.0) {
        return Err(Error::Domain("power-law fit needs positive gaps".into()));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    linear_fit(&x, &y)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

/// Toy experiment: GPR and the neurally-informed equation for each `n_bulk`,
/// the power-law inset, and a summary.
pub fn run_toy(cfg: &ToyExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut dir = OutputDir::new(out, "toy", cfg)?;
    let xs = cfg.x_star.values();
    let problem = cfg.problem();
    let grid = DomainGrid::interval(0.0, cfg.grid_length, cfg.grid_points, &[End::Lo])?;
    let grid_x: Vec<f64> = grid.points().iter().map(|p| p[0]).collect();
    let mut curves = Vec::new();
    let mut prev_gap = f64::INFINITY;
    let mut non_increasing = true;
    for &n in &cfg.n_bulk {
        let colloc = cfg.collocation(n)?;
        let model = GprModel::fit(&problem, &colloc)?;
        let f_gpr = model.predict(&PointSet::from_scalars(&xs))?;
        let toy = cfg.toy_config(n);
        let analytic = toy_predict(&toy, &xs)?;
        let (eb, ed) = toy.grid_couplings(cfg.grid_length);
        let sol = nie_solve_grid(&problem, &grid, eb, ed)?;
        let f_grid: Vec<f64> = xs.iter().map(|&x| interpolate(&grid_x, &sol.f0, x)).collect();
        let gap = f_gpr.iter().zip(&analytic.f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let grid_gap = f_grid.iter().zip(&analytic.f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        non_increasing &= gap <= prev_gap;
        prev_gap = gap;
        let rows: Vec<Vec<Cell>> = (0..xs.len())
            .map(|i| vec![xs[i].into(), f_gpr[i].into(), analytic.f[i].into(), f_grid[i].into()])
            .collect();
        dir.write_csv(&format!("toy_n{n}.csv"), &["x_star", "f_gpr", "f_nie_analytic", "f_nie_grid"], &rows)?;
        log::info!("toy n={n}: max gap {gap:.4e}");
        curves.push(json!({
            "n_bulk": n,
            "sigma2_bulk": colloc.sigma2_bulk,
            "sigma2_boundary": colloc.sigma2_boundary,
            "eta_bulk_data": colloc.eta_bulk(),
            "eta_boundary_data": colloc.eta_boundary(),
            "eta_bulk_green": toy.eta_bulk,
            "eta_boundary_green": toy.eta_boundary,
            "delta": analytic.delta,
            "g00": analytic.g00,
            "kappa": analytic.kappa,
            "max_gap": gap,
            "max_gap_over_g0": gap / cfg.g0.abs().max(f64::MIN_POSITIVE),
            "grid_vs_analytic_max_gap": grid_gap,
            "grid_residual_norm": sol.residual_norm,
            "gpr_jitter": model.jitter,
        }));
    }

    let inset = |literal: bool| -> Result<Vec<f64>> {
        cfg.inset_n_bulk
            .iter()
            .map(|&n| {
                let toy = if literal { cfg.literal_toy_config(n) } else { cfg.toy_config(n) };
                Ok(cfg.g0 - toy_predict(&toy, &[cfg.x_probe])?.f[0])
            })
            .collect()
    };
    let gaps = inset(false)?;
    let rows: Vec<Vec<Cell>> = cfg.inset_n_bulk.iter().zip(&gaps).map(|(&n, &g)| vec![n.into(), g.into()]).collect();
    dir.write_csv("inset.csv", &["n_bulk", "g0_minus_f_nie"], &rows)?;
    let fit = if cfg.inset_n_bulk.len() >= 2 { Some(powerlaw_fit(&cfg.inset_n_bulk, &gaps)?) } else { None };
    let literal_gaps = inset(true)?;
    let literal_fit =
        if cfg.inset_n_bulk.len() >= 2 { powerlaw_fit(&cfg.inset_n_bulk, &literal_gaps).ok() } else { None };

    let summary = json!({
        "experiment": "toy",
        "g0": cfg.g0,
        "x_probe": cfg.x_probe,
        "curves": curves,
        "max_gap": cfg.n_bulk.iter().zip(&curves).map(|(n, c)| (n.to_string(), c["max_gap"].clone())).collect::<serde_json::Map<_, _>>(),
        "gap_non_increasing": non_increasing,
        "inset": { "n_bulk": cfg.inset_n_bulk, "g0_minus_f_nie": gaps },
        "powerlaw": fit,
        "literal_couplings": { "g0_minus_f_nie": literal_gaps, "powerlaw": literal_fit },
        "version": VERSION,
    });
    dir.write_json("summary.json", &summary)?;
    Ok(RunReport { files: dir.files().to_vec(), summary })
}

/// Outcome of the heat diagnostics for one width `a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatWidthSummary {
    pub a: f64,
    pub fd_residual_max_abs: f64,
    pub fd_residual_relative: f64,
    pub boundary_max_abs: f64,
    pub crossing_k_u: Option<usize>,
    pub crossing_lkhatl_phi_hat: Option<usize>,
    pub qn: Vec<f64>,
}

/// Heat experiment: residual of the exact solution, GPR error against `n`,
/// cumulative spectral functions, and `Q_n` over a coupling ladder.
pub fn run_heat(cfg: &HeatExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut dir = OutputDir::new(out, "heat", cfg)?;
    let kernel = cfg.scaled_kernel();
    let k_grid = heat_grid(cfg.spectral_grid[0], cfg.spectral_grid[1])?;
    let k_decomp = eig_kernel(&kernel, &k_grid)?;
    let op_grid = heat_grid(cfg.operator_grid[0], cfg.operator_grid[1])?;
    let eta_b = cfg.eta_boundary();
    let op_decomp = eig_lkhatl(&LinearDiffOp::heat(), &kernel, &op_grid, eta_b)?;

    let mut residual_rows = Vec::new();
    let mut gpr_rows = Vec::new();
    let mut qn_rows = Vec::new();
    let mut widths = Vec::new();
    let test = heat_grid(cfg.test_grid[0], cfg.test_grid[1])?;
    for (ia, &a) in cfg.a_values.iter().enumerate() {
        let res = fd_residual(a, cfg.residual_grid[0], cfg.residual_grid[1], cfg.fd_accuracy)?;
        let rg = heat_grid(cfg.residual_grid[0], cfg.residual_grid[1])?;
        let bmax = rg
            .boundary_points()
            .iter()
            .filter(|p| p[0].abs() == 1.0)
            .map(|p| heat_exact(a, p[0], p[1]).abs())
            .fold(0.0, f64::max);
        residual_rows.push(vec![a.into(), res.max_abs.into(), res.max_source.into(), res.relative().into(), bmax.into()]);

        let problem = heat_problem(a, kernel)?;
        let u_test = test.eval(|p| heat_exact(a, p[0], p[1]));
        for &n in &cfg.n_bulk {
            let colloc = sample_collocation(
                &Geometry::heat_slab(),
                n,
                cfg.n_boundary,
                cfg.sigma2_bulk,
                cfg.sigma2_boundary,
                cfg.seed,
            )?;
            let pred = GprModel::fit(&problem, &colloc)?.predict(test.points())?;
            let err: Vec<f64> = pred.iter().zip(&u_test).map(|(p, u)| p - u).collect();
            let rmse = (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
            let max_err = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            gpr_rows.push(vec![a.into(), n.into(), cfg.n_boundary.into(), rmse.into(), max_err.into()]);
        }

        let tag = format!("a{ia}");
        let u = k_grid.eval(|p| heat_exact(a, p[0], p[1]));
        let curve_u = cumulative_curve(&k_decomp, &u)?;
        write_ak(&mut dir, &format!("ak_K_u_{tag}.csv"), &curve_u, &k_decomp.eigvals)?;
        let phi_hat = augmented_source(&problem, &op_grid, eta_b)?;
        let curve_phi = cumulative_curve(&op_decomp, &phi_hat)?;
        write_ak(&mut dir, &format!("ak_LKhatL_phihat_{tag}.csv"), &curve_phi, &op_decomp.eigvals)?;
        let expansion = op_decomp.expand_source(&phi_hat)?;
        let mut qn = Vec::new();
        for &eta in &cfg.eta_ladder {
            let q = figure_of_merit_qn(&expansion, eta)?;
            qn_rows.push(vec![a.into(), eta.into(), q.into()]);
            qn.push(q);
        }
        widths.push(HeatWidthSummary {
            a,
            fd_residual_max_abs: res.max_abs,
            fd_residual_relative: res.relative(),
            boundary_max_abs: bmax,
            crossing_k_u: crossing_index(&curve_u, cfg.crossing_threshold),
            crossing_lkhatl_phi_hat: crossing_index(&curve_phi, cfg.crossing_threshold),
            qn,
        });
    }
    dir.write_csv(
        "residual.csv",
        &["a", "max_abs_residual", "max_abs_source", "relative_residual", "max_abs_boundary_value"],
        &residual_rows,
    )?;
    dir.write_csv("gpr_error.csv", &["a", "n_bulk", "n_boundary", "rmse", "max_abs_error"], &gpr_rows)?;
    dir.write_csv("qn.csv", &["a", "eta_bulk", "q_n"], &qn_rows)?;
    let summary = json!({
        "experiment": "heat",
        "kernel": kernel,
        "eta_boundary": eta_b,
        "crossing_threshold": cfg.crossing_threshold,
        "widths": widths,
        "version": VERSION,
    });
    dir.write_json("summary.json", &summary)?;
    Ok(RunReport { files: dir.files().to_vec(), summary })
}

fn write_ak(dir: &mut OutputDir, name: &str, curve: &[f64], eigvals: &[f64]) -> Result<()> {
    let rows: Vec<Vec<Cell>> = curve
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, a)| {
            let l = eigvals[k - 1];
            let nl = if l > 0.0 { Cell::Float(-l.ln()) } else { Cell::Text(String::new()) };
            vec![k.into(), (*a).into(), nl]
        })
        .collect();
    dir.write_csv(name, &["k", "a_k", "neg_log_lambda"], &rows)?;
    Ok(())
}

/// Spectral experiment on a user grid.
pub fn run_spectral(cfg: &SpectralExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut dir = OutputDir::new(out, "spectral", cfg)?;
    let grid = DomainGrid::new(cfg.axes.clone(), cfg.faces.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let (src, bdry) = (cfg.source, cfg.boundary);
    let problem = ProblemData::new(move |x| src.eval(x), move |x| bdry.eval(x), cfg.operator.clone(), cfg.kernel);
    let decomp = eig_lkhatl(&cfg.operator, &cfg.kernel, &grid, cfg.eta_boundary)?;
    let rows: Vec<Vec<Cell>> =
        decomp.eigvals.iter().enumerate().map(|(k, l)| vec![(k + 1).into(), (*l).into()]).collect();
    dir.write_csv("eigenvalues.csv", &["k", "lambda"], &rows)?;
    let phi_hat = augmented_source(&problem, &grid, cfg.eta_boundary)?;
    let curve = cumulative_curve(&decomp, &phi_hat)?;
    write_ak(&mut dir, "ak_phihat.csv", &curve, &decomp.eigvals)?;
    let expansion = decomp.expand_source(&phi_hat)?;
    let qn: Vec<Value> = cfg
        .eta_bulk
        .iter()
        .map(|&eta| Ok(json!({"eta_bulk": eta, "q_n": figure_of_merit_qn(&expansion, eta)?})))
        .collect::<Result<_>>()?;
    let trace: f64 = decomp.eigvals.iter().sum();
    let mut summary = json!({
        "experiment": "spectral",
        "qn": qn,
        "retained_modes": expansion.retained,
        "outside_span_norm": expansion.outside_span_norm,
        "source_norm": expansion.norm,
        "eigenvalue_sum": trace,
        "quadrature_trace": decomp.quadrature_trace(),
        "version": VERSION,
    });
    if let Some(target) = cfg.target {
        let kd = eig_kernel(&cfg.kernel, &grid)?;
        let f = grid.eval(|x| target.eval(x));
        let curve = cumulative_curve(&kd, &f)?;
        write_ak(&mut dir, "ak_K_target.csv", &curve, &kd.eigvals)?;
        summary["target_crossing_0_99"] = json!(crossing_index(&curve, 0.99));
    }
    dir.write_json("qn.json", &summary)?;
    Ok(RunReport { files: dir.files().to_vec(), summary })
}

/// One Monte-Carlo comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelCheckRow {
    pub family: KernelFamily,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub closed_form: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub samples: usize,
}

/// Monte-Carlo versus closed-form kernel values at random point pairs.
pub fn kernel_check_rows(cfg: &KernelCheckConfig) -> Result<Vec<KernelCheckRow>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for (fi, &family) in cfg.families.iter().enumerate() {
        let spec = KernelSpec::with_defaults(family, cfg.l).scaled_init(cfg.alpha);
        for p in 0..cfg.pairs {
            let x: Vec<f64> = (0..cfg.input_dim).map(|_| rng.gen_range(-cfg.range..cfg.range)).collect();
            let y: Vec<f64> = (0..cfg.input_dim).map(|_| rng.gen_range(-cfg.range..cfg.range)).collect();
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((fi * 10_007 + p) as u64);
            let mc = monte_carlo_kernel(&spec, &x, &y, cfg.width, cfg.n_nets, seed)?;
            let closed = spec.eval(&x, &y)?;
            let z = (mc.estimate - closed) / mc.std_error;
            rows.push(KernelCheckRow {
                family,
                x,
                y,
                closed_form: closed,
                estimate: mc.estimate,
                std_error: mc.std_error,
                z,
                samples: mc.samples(),
            });
        }
    }
    Ok(rows)
}

pub fn run_kernel_check(cfg: &KernelCheckConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let rows = kernel_check_rows(cfg)?;
    let mut dir = OutputDir::new(out, "kernel-check", cfg)?;
    let fmt_point = |p: &[f64]| p.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(" ");
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.name().into(),
                Cell::Text(fmt_point(&r.x)),
                Cell::Text(fmt_point(&r.y)),
                r.closed_form.into(),
                r.estimate.into(),
                r.std_error.into(),
                r.z.into(),
                r.samples.into(),
                cfg.seed.to_string().as_str().into(),
            ]
        })
        .collect();
    dir.write_csv(
        "kernel_check.csv",
        &["family", "x", "y", "closed_form", "estimate", "std_error", "z", "samples", "seed"],
        &table,
    )?;
    let max_abs_z = rows.iter().fold(0.0f64, |m, r| m.max(r.z.abs()));
    let summary = json!({
        "experiment": "kernel-check",
        "seed": cfg.seed,
        "width": cfg.width,
        "n_nets": cfg.n_nets,
        "samples_per_pair": cfg.width * cfg.n_nets,
        "max_abs_z": max_abs_z,
        "all_within_3_sigma": max_abs_z <= 3.0,
        "version": VERSION,
    });
    dir.write_json("summary.json", &summary)?;
    Ok(RunReport { files: dir.files().to_vec(), summary })
}
