//! Experiment configuration: a TOML file with one table per concern.
//!
//! Every key except `[system]` has a default. [`ExperimentConfig::validate`]
//! checks the whole file before anything is computed and reports each
//! problem with the line of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use gpsys_core::bootstrap::bootstrap_chain;
use gpsys_core::grid::{Boundary, CutoffProfile, Field, Grid};
use gpsys_core::nonlinearity::{sobolev_exponents, CouplingMatrix, CriticalExponent, SystemParams};
use gpsys_core::subsolution::default_bumps;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub rescaled: RescaledSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub exponents: ExponentSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Space dimension `N`.
    pub space_dim: usize,
    /// Nonlinearity exponent, `p = 2r + 1`.
    pub r: f64,
    /// Rows of the symmetric coupling matrix; its size sets `M`.
    pub coupling: Vec<Vec<f64>>,
}

/// Physical grid `[-L, L]^N` with `n` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub half_extent: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_extent: 16.0, points: 1025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    Constant,
    Gaussian,
    File,
}

/// Physical initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    /// Per-component values (`constant`) or amplitudes (`gaussian`); a
    /// single entry applies to every component.
    pub values: Vec<f64>,
    /// Gaussian profile `a exp(-|x|^2 / width^2)`.
    pub width: f64,
    /// Field file for `file`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { kind: InitialKind::Gaussian, values: vec![2.0], width: 2.0, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub boundary: Boundary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    pub safety: f64,
    /// Sup-norm blow-up threshold.
    pub threshold: f64,
    pub t_max: f64,
    pub max_jump: f64,
    pub max_steps: usize,
    /// Fit the blow-up rate after a detected blow-up.
    pub rate_experiment: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            boundary: Boundary::Dirichlet,
            dt_init: None,
            safety: 0.5,
            threshold: 1e6,
            t_max: 10.0,
            max_jump: 0.1,
            max_steps: 50_000_000,
            rate_experiment: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaledInitial {
    Zero,
    Constant,
    StationaryKappa,
    PerturbedKappa,
    File,
}

/// Rescaled-variable run on `[-L, L]^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RescaledSection {
    pub half_extent: f64,
    pub points: usize,
    pub boundary: Boundary,
    pub initial: RescaledInitial,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Step in `s`; defaults to half the stability limit, rounded to divide `s_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    pub s_max: f64,
    pub record_every: usize,
}

impl Default for RescaledSection {
    fn default() -> Self {
        Self {
            half_extent: 10.0,
            points: 201,
            boundary: Boundary::Dirichlet,
            initial: RescaledInitial::PerturbedKappa,
            values: vec![1.0],
            path: None,
            ds: None,
            s_max: 5.0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    pub ball_radii: Vec<f64>,
    pub q: Vec<f64>,
    pub cutoff_radii: Vec<f64>,
    pub tolerance_scale: f64,
    /// Target exponent and radius of the bootstrap chain evaluated on the run.
    pub chain_q_target: f64,
    pub chain_radius: f64,
    /// Mask threshold of the pointwise subsolution check; default `1e-3 sup w`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsolution_delta: Option<f64>,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            ball_radii: vec![3.0],
            q: vec![2.0],
            cutoff_radii: vec![2.0],
            tolerance_scale: 1.0,
            chain_q_target: 2.2,
            chain_radius: 2.0,
            subsolution_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub structure_samples: usize,
    /// Points per axis of each level; successive levels halve `h`.
    pub resolutions: Vec<usize>,
    pub s_max: f64,
    /// `ds = ds_factor h^2` on the coarsest level, halved per level.
    pub ds_factor: f64,
    pub min_ratio: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { structure_samples: 1000, resolutions: vec![101, 201], s_max: 1.0, ds_factor: 0.2, min_ratio: 3.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentSection {
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub q_target: f64,
    pub r_target: f64,
}

impl Default for ExponentSection {
    fn default() -> Self {
        Self { q: 2.0, qbar: None, lambda: None, q_target: 3.0, r_target: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write a physical field snapshot every this many accepted steps (0: none).
    pub snapshot_every: usize,
    pub trajectory: String,
    pub energy: String,
    pub monitor: String,
    pub rate: String,
    pub schedule: String,
    pub verify: String,
    pub summary: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_every: 0,
            trajectory: "trajectory.csv".into(),
            energy: "energy.csv".into(),
            monitor: "monitor.json".into(),
            rate: "rate.json".into(),
            schedule: "schedule.json".into(),
            verify: "verify.json".into(),
            summary: "summary.json".into(),
        }
    }
}

/// One validation problem, located at a `[section] key`.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub section: String,
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub issues: Vec<Issue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            let at = if issue.section.is_empty() { issue.key.clone() } else { format!("[{}] {}", issue.section, issue.key) };
            match issue.line {
                Some(line) => write!(f, "{}:{}: {}: {}", self.origin, line, at, issue.message)?,
                None => write!(f, "{}: {} (default): {}", self.origin, at, issue.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Line (1-based) of `key` inside `[section]`, or of the section header when
/// the key is absent.
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (k, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            if current == section {
                header = Some(k + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if lhs.trim().trim_matches('"') == key {
                return Some(k + 1);
            }
        }
    }
    header
}

/// Everything the commands need, built from a validated config.
#[derive(Debug, Clone)]
pub struct Plan {
    pub params: SystemParams,
    pub grid: Grid,
    pub u0: Field,
    pub rescaled_grid: Grid,
    pub w0: Field,
}

struct Checker<'a> {
    source: &'a str,
    issues: Vec<Issue>,
}

impl Checker<'_> {
    fn push(&mut self, section: &str, key: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            line: locate(self.source, section, key),
            section: section.into(),
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, section: &str, key: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(section, key, format!("must be a positive finite number, got {v}"));
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(source: &str) -> Result<Self, String> {
        toml::from_str(source).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> anyhow::Result<(Self, String)> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok((Self::from_toml(&source).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?, source))
    }

    fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
        match base {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        }
    }

    /// Checks every section against `source` (the text the config was read
    /// from, used for line numbers) and builds the run plan. `base` resolves
    /// relative field-file paths.
    pub fn validate(&self, source: &str, origin: &str, base: Option<&Path>) -> Result<Plan, ConfigError> {
        let mut c = Checker { source, issues: Vec::new() };
        let params = self.check_system(&mut c);

        let dim = self.system.space_dim;
        let supported = (1..=2).contains(&dim);
        let mut build = |section: &str, half_extent: f64, points: usize| {
            if !supported {
                return None;
            }
            Grid::new(dim, half_extent, points).map_err(|e| c.push(section, "points", e.to_string())).ok()
        };
        let grid = build("grid", self.grid.half_extent, self.grid.points);
        let rescaled_grid = build("rescaled", self.rescaled.half_extent, self.rescaled.points);

        self.check_solver(&mut c);
        self.check_rescaled(&mut c);
        self.check_monitors(&mut c, params.as_ref());
        self.check_verify(&mut c);
        self.check_exponents(&mut c);

        let mut u0 = None;
        let mut w0 = None;
        if let (Some(params), Some(grid)) = (&params, grid) {
            u0 = self.physical_initial(&mut c, params, grid, base);
        }
        if let (Some(params), Some(grid)) = (&params, rescaled_grid) {
            w0 = self.rescaled_initial(&mut c, params, grid, base);
        }

        if !c.issues.is_empty() {
            return Err(ConfigError { origin: origin.into(), issues: c.issues });
        }
        Ok(Plan {
            params: params.unwrap(),
            grid: grid.unwrap(),
            u0: u0.unwrap(),
            rescaled_grid: rescaled_grid.unwrap(),
            w0: w0.unwrap(),
        })
    }

    fn check_system(&self, c: &mut Checker) -> Option<SystemParams> {
        let s = &self.system;
        let coupling = match CouplingMatrix::new(s.coupling.clone()) {
            Ok(m) => Some(m),
            Err(e) => {
                c.push("system", "coupling", e.to_string());
                None
            }
        };
        if !(s.r.is_finite() && s.r > 0.0) {
            c.push("system", "r", format!("must be positive, got {}", s.r));
            return None;
        }
        if s.space_dim == 0 {
            c.push("system", "space_dim", "must be at least 1");
            return None;
        }
        let p = 2.0 * s.r + 1.0;
        if self.solver.rate_experiment {
            if let Ok((CriticalExponent::Finite(p_s), _)) = sobolev_exponents(s.space_dim as i64) {
                if p >= p_s {
                    c.push(
                        "system",
                        "r",
                        format!(
                            "the rate experiment requires the subcritical range 1 < p < p_S(N); \
                             p = 2r+1 = {p} but p_S({}) = {p_s}",
                            s.space_dim
                        ),
                    );
                }
            }
        }
        if s.space_dim > 2 {
            c.push("system", "space_dim", format!("grids support N = 1 or 2, got {}", s.space_dim));
        }
        let params = SystemParams::new(s.space_dim, s.r, coupling?);
        match params {
            Ok(p) => Some(p),
            Err(e) => {
                c.push("system", "r", e.to_string());
                None
            }
        }
    }

    fn check_solver(&self, c: &mut Checker) {
        let s = &self.solver;
        if let Some(dt) = s.dt_init {
            c.positive("solver", "dt_init", dt);
        }
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            c.push("solver", "safety", format!("must lie in (0, 1], got {}", s.safety));
        }
        c.positive("solver", "threshold", s.threshold);
        c.positive("solver", "t_max", s.t_max);
        c.positive("solver", "max_jump", s.max_jump);
        if s.max_steps == 0 {
            c.push("solver", "max_steps", "must be at least 1");
        }
    }

    fn check_rescaled(&self, c: &mut Checker) {
        let r = &self.rescaled;
        if let Some(ds) = r.ds {
            c.positive("rescaled", "ds", ds);
        }
        c.positive("rescaled", "s_max", r.s_max);
        if r.record_every == 0 {
            c.push("rescaled", "record_every", "must be at least 1");
        }
    }

    fn check_monitors(&self, c: &mut Checker, params: Option<&SystemParams>) {
        let m = &self.monitors;
        let l = self.rescaled.half_extent;
        for &r in &m.ball_radii {
            c.positive("monitors", "ball_radii", r);
            if r > l {
                c.push("monitors", "ball_radii", format!("ball radius {r} exceeds the rescaled half extent {l}"));
            }
        }
        for &q in &m.q {
            if !(q >= 2.0 && q.is_finite()) {
                c.push("monitors", "q", format!("integrability exponents must be >= 2, got {q}"));
            }
        }
        if m.ball_radii.is_empty() {
            c.push("monitors", "ball_radii", "needs at least one radius");
        }
        if m.q.is_empty() {
            c.push("monitors", "q", "needs at least one exponent");
        }
        if m.cutoff_radii.is_empty() {
            c.push("monitors", "cutoff_radii", "needs at least one radius");
        }
        for &r in &m.cutoff_radii {
            match CutoffProfile::new(r) {
                Ok(cut) if cut.reach() > l => c.push(
                    "monitors",
                    "cutoff_radii",
                    format!("cutoff of radius {r} reaches {} beyond the rescaled half extent {l}", cut.reach()),
                ),
                Ok(_) => {}
                Err(e) => c.push("monitors", "cutoff_radii", e.to_string()),
            }
        }
        c.positive("monitors", "tolerance_scale", m.tolerance_scale);
        if let Some(d) = m.subsolution_delta {
            c.positive("monitors", "subsolution_delta", d);
        }
        for (centre, radius) in default_bumps() {
            let reach = CutoffProfile::new(radius).map(|b| b.reach() + centre.abs()).unwrap_or(f64::INFINITY);
            if reach > l {
                c.push(
                    "rescaled",
                    "half_extent",
                    format!("test bump at {centre} with radius {radius} reaches {reach}, beyond the half extent {l}"),
                );
                break;
            }
        }
        if let Some(params) = params {
            match bootstrap_chain(params.p(), m.chain_q_target, m.chain_radius) {
                Ok(chain) => {
                    let r0 = chain.stages[0].1;
                    if r0 > l {
                        c.push(
                            "monitors",
                            "chain_q_target",
                            format!(
                                "bootstrap chain starts at radius {r0} ({} steps), beyond the half extent {l}",
                                chain.m
                            ),
                        );
                    }
                }
                Err(e) => c.push("monitors", "chain_q_target", e.to_string()),
            }
        }
    }

    fn check_verify(&self, c: &mut Checker) {
        let v = &self.verify;
        if v.structure_samples == 0 {
            c.push("verify", "structure_samples", "must be at least 1");
        }
        if v.resolutions.is_empty() {
            c.push("verify", "resolutions", "needs at least one resolution");
        }
        for &n in &v.resolutions {
            if let Err(e) = Grid::new(1, self.rescaled.half_extent, n) {
                c.push("verify", "resolutions", e.to_string());
            }
        }
        for pair in v.resolutions.windows(2) {
            if pair[1] != 2 * pair[0] - 1 {
                c.push(
                    "verify",
                    "resolutions",
                    format!("successive levels must halve h (n -> 2n - 1), got {} then {}", pair[0], pair[1]),
                );
            }
        }
        c.positive("verify", "s_max", v.s_max);
        c.positive("verify", "ds_factor", v.ds_factor);
        if !(v.min_ratio > 1.0) {
            c.push("verify", "min_ratio", format!("must exceed 1, got {}", v.min_ratio));
        }
    }

    fn check_exponents(&self, c: &mut Checker) {
        let e = &self.exponents;
        if !(e.q >= 2.0) {
            c.push("exponents", "q", format!("must be >= 2, got {}", e.q));
        }
        if !(e.q_target >= 2.0) {
            c.push("exponents", "q_target", format!("must be >= 2, got {}", e.q_target));
        }
        c.positive("exponents", "r_target", e.r_target);
    }

    /// Component values; a single value applies to every component.
    fn values_for(c: &mut Checker, section: &str, values: &[f64], m: usize) -> Option<Vec<f64>> {
        let out = match values.len() {
            1 => vec![values[0]; m],
            k if k == m => values.to_vec(),
            k => {
                c.push(section, "values", format!("expected 1 or {m} component values, got {k}"));
                return None;
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            c.push(section, "values", "values must be finite");
            return None;
        }
        Some(out)
    }

    fn read_field(c: &mut Checker, section: &str, path: Option<&str>, base: Option<&Path>, grid: Grid, m: usize) -> Option<Field> {
        let Some(path) = path else {
            c.push(section, "path", "kind `file` needs a path");
            return None;
        };
        let full = Self::resolve(base, path);
        let field = std::fs::File::open(&full)
            .map_err(|e| e.to_string())
            .and_then(|f| Field::read_csv(std::io::BufReader::new(f)).map_err(|e| e.to_string()));
        match field {
            Ok(f) if f.grid() == &grid && f.components() == m => Some(f),
            Ok(_) => {
                c.push(section, "path", format!("{} does not match the configured grid and component count", full.display()));
                None
            }
            Err(e) => {
                c.push(section, "path", format!("{}: {e}", full.display()));
                None
            }
        }
    }

    fn physical_initial(&self, c: &mut Checker, params: &SystemParams, grid: Grid, base: Option<&Path>) -> Option<Field> {
        let m = params.components();
        let i = &self.initial;
        match i.kind {
            InitialKind::Zero => Some(Field::zeros(grid, m)),
            InitialKind::Constant => {
                Self::values_for(c, "initial", &i.values, m).map(|v| gpsys_core::scenarios::constant(grid, &v))
            }
            InitialKind::Gaussian => {
                let v = Self::values_for(c, "initial", &i.values, m)?;
                match gpsys_core::scenarios::gaussian_bump(grid, &v, i.width) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        c.push("initial", "width", e.to_string());
                        None
                    }
                }
            }
            InitialKind::File => Self::read_field(c, "initial", i.path.as_deref(), base, grid, m),
        }
    }

    fn rescaled_initial(&self, c: &mut Checker, params: &SystemParams, grid: Grid, base: Option<&Path>) -> Option<Field> {
        use gpsys_core::scenarios;
        let m = params.components();
        let r = &self.rescaled;
        let built = match r.initial {
            RescaledInitial::Zero => Ok(Field::zeros(grid, m)),
            RescaledInitial::Constant => {
                return Self::values_for(c, "rescaled", &r.values, m).map(|v| scenarios::constant(grid, &v));
            }
            RescaledInitial::StationaryKappa => scenarios::stationary_kappa(params, grid),
            RescaledInitial::PerturbedKappa => scenarios::perturbed_kappa(params, grid),
            RescaledInitial::File => return Self::read_field(c, "rescaled", r.path.as_deref(), base, grid, m),
        };
        match built {
            Ok(f) => Some(f),
            Err(e) => {
                c.push("rescaled", "initial", e.to_string());
                None
            }
        }
    }
}
