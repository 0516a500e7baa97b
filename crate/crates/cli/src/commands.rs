//! The subcommands. Each one writes its artifacts into the output directory
//! and returns a short summary, or a [`Failure`] that selects the exit code.

use std::fmt;
use std::path::PathBuf;

use gpsys_core::bootstrap::{bootstrap_chain, verify_schedule_on_run, BootstrapChain, StageReport};
use gpsys_core::energy::{
    check_identity_dissipation, check_identity_mass, check_local_identities, convergence_check, energy_series,
    ConvergenceCheck, IdentityReport, MonitorReport,
};
use gpsys_core::grid::{Boundary, CutoffProfile, Grid};
use gpsys_core::nonlinearity::{
    check_structure, default_sphere_resolution, sobolev_exponents, structure_constants, CriticalExponent,
    StructureConstants, StructureReport, SystemParams,
};
use gpsys_core::physical::{fit_rate, Controls, Outcome, PhysicalSolver, RateFit};
use gpsys_core::selfsimilar::{RescaledSolver, RescaledTrajectory};
use gpsys_core::subsolution::{default_bumps, subsolution_residual, SubsolutionReport};
use serde::Serialize;

use crate::config::{ExperimentConfig, Plan};
use crate::exponents::{schedule_document, ExponentRequest, ScheduleDocument};
use crate::output::{csv_table, fmt_f64, write_bytes, write_json};

/// Relative bar for the structure identities.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug)]
pub enum Failure {
    /// I/O or numerical breakdown.
    Runtime(anyhow::Error),
    /// Invalid configuration or arguments.
    Validation(String),
    NoBlowUp(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Validation(_) => 2,
            Failure::NoBlowUp(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Runtime(_) => "runtime-error",
            Failure::Validation(_) => "validation-error",
            Failure::NoBlowUp(_) => "no-blow-up-detected",
            Failure::Verification(_) => "verification-failed",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Runtime(e) => write!(f, "{}: {e:#}", self.kind()),
            Failure::Validation(m) | Failure::NoBlowUp(m) | Failure::Verification(m) => {
                write!(f, "{}: {m}", self.kind())
            }
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<gpsys_core::Error> for Failure {
    fn from(e: gpsys_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// A validated experiment bound to an output directory.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plan: Plan,
    pub out: PathBuf,
}

impl Experiment {
    fn tol_scale(&self) -> f64 {
        self.config.monitors.tolerance_scale
    }
}

#[derive(Debug, Clone, Serialize)]
struct SystemInfo<'a> {
    params: &'a SystemParams,
    subcritical: bool,
    p_sobolev: CriticalExponent,
}

fn system_info(params: &SystemParams) -> SystemInfo<'_> {
    let (p_sobolev, _) = sobolev_exponents(params.space_dim() as i64).expect("validated dimension");
    SystemInfo { params, subcritical: params.is_subcritical(), p_sobolev }
}

#[derive(Debug, Clone, Serialize)]
struct RateDocument<'a> {
    system: SystemInfo<'a>,
    grid: Grid,
    boundary: Boundary,
    controls: Controls,
    #[serde(flatten)]
    outcome: Outcome,
    accepted_steps: usize,
    rejections: usize,
    /// `1/(p-1)`, the self-similar rate.
    expected_exponent: f64,
    rate: Option<RateFit>,
    rate_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub outcome: Outcome,
    pub rate: Option<RateFit>,
}

pub fn simulate(ex: &Experiment) -> Result<SimulateSummary, Failure> {
    let cfg = &ex.config;
    let params = &ex.plan.params;
    let solver = PhysicalSolver::new(params.clone(), ex.plan.grid, cfg.solver.boundary)?;
    let controls = Controls {
        dt_init: cfg.solver.dt_init,
        safety: cfg.solver.safety,
        threshold: cfg.solver.threshold,
        t_max: cfg.solver.t_max,
        max_jump: cfg.solver.max_jump,
        snapshot_every: cfg.outputs.snapshot_every,
        max_steps: cfg.solver.max_steps,
    };
    let run = solver.run_to_blowup(&ex.plan.u0, &controls)?;
    let traj = &run.trajectory;

    write_bytes(
        &ex.out,
        &cfg.outputs.trajectory,
        &csv_table(&["t", "sup_norm", "dt"], traj.samples.iter().map(|s| vec![s.t, s.sup_norm, s.dt])),
    )?;
    if !traj.snapshots.is_empty() {
        let mut index = String::from("index,t,file\n");
        for (k, snap) in traj.snapshots.iter().enumerate() {
            let name = format!("snapshots/snapshot_{k:05}.csv");
            let mut buf = Vec::new();
            snap.u.write_csv(&mut buf).map_err(anyhow::Error::from)?;
            write_bytes(&ex.out, &name, &buf)?;
            index.push_str(&format!("{k},{},{name}\n", fmt_f64(snap.t)));
        }
        write_bytes(&ex.out, "snapshots.csv", index.as_bytes())?;
    }

    let (rate, rate_error) = match &run.outcome {
        Outcome::BlowUp(est) if cfg.solver.rate_experiment => match fit_rate(traj, est.t_est, params) {
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        },
        _ => (None, None),
    };
    let doc = RateDocument {
        system: system_info(params),
        grid: ex.plan.grid,
        boundary: cfg.solver.boundary,
        controls,
        outcome: run.outcome.clone(),
        accepted_steps: traj.samples.len() - 1,
        rejections: traj.rejections,
        expected_exponent: params.beta_exp(),
        rate,
        rate_error: rate_error.clone(),
    };
    write_json(&ex.out, &cfg.outputs.rate, &doc)?;

    match &run.outcome {
        Outcome::NoBlowUp { t_final, sup_final } => Err(Failure::NoBlowUp(format!(
            "sup norm {} at t = {} stayed below the threshold {}",
            fmt_f64(*sup_final),
            fmt_f64(*t_final),
            fmt_f64(cfg.solver.threshold)
        ))),
        Outcome::BlowUp(_) => match rate_error {
            Some(e) => Err(Failure::Runtime(anyhow::anyhow!("rate fit failed: {e}"))),
            None => Ok(SimulateSummary { outcome: run.outcome, rate }),
        },
    }
}

/// `(ds, steps)` covering `[0, s_max]`.
fn rescaled_steps(ds: Option<f64>, s_max: f64, solver: &RescaledSolver) -> (f64, usize) {
    match ds {
        Some(ds) => (ds, (s_max / ds - 1e-9).ceil().max(1.0) as usize),
        None => {
            let steps = (s_max / solver.stable_ds(0.5)).ceil().max(1.0) as usize;
            (s_max / steps as f64, steps)
        }
    }
}

fn identity_reports(
    traj: &RescaledTrajectory,
    params: &SystemParams,
    cutoff: &CutoffProfile,
    tol_scale: f64,
) -> Result<Vec<IdentityReport>, Failure> {
    let (local_mass, local_dissipation) = check_local_identities(traj, cutoff, params, tol_scale)?;
    Ok(vec![
        check_identity_mass(traj, params, tol_scale)?,
        check_identity_dissipation(traj, params, tol_scale)?,
        local_mass,
        local_dissipation,
    ])
}

#[derive(Debug, Clone, Serialize)]
struct MonitorDocument<'a> {
    system: SystemInfo<'a>,
    grid: Grid,
    boundary: Boundary,
    ds: f64,
    steps: usize,
    record_every: usize,
    frames: usize,
    s_final: f64,
    constants: StructureConstants,
    monitors: Vec<MonitorReport>,
    identities: Vec<IdentityReport>,
    chain: BootstrapChain<f64>,
    stages: Vec<StageReport>,
    passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaledSummary {
    pub frames: usize,
    pub monitors_passed: usize,
    pub monitors_total: usize,
    pub passed: bool,
}

pub fn rescaled(ex: &Experiment) -> Result<RescaledSummary, Failure> {
    let cfg = &ex.config;
    let rc = &cfg.rescaled;
    let mc = &cfg.monitors;
    let params = &ex.plan.params;
    let solver = RescaledSolver::new(params.clone(), ex.plan.rescaled_grid, rc.boundary)?;
    let (ds, steps) = rescaled_steps(rc.ds, rc.s_max, &solver);
    let traj = solver.evolve(&ex.plan.w0, 0.0, ds, steps, rc.record_every)?;

    let cutoff = CutoffProfile::new(mc.cutoff_radii[0])?;
    let series = energy_series(&traj, params, &cutoff, mc.ball_radii[0])?;
    write_bytes(
        &ex.out,
        &cfg.outputs.energy,
        &csv_table(
            &["s", "E", "E_loc", "l2rho", "w12rho", "lp1rho_ball", "dissipation"],
            series.iter().map(|e| vec![e.s, e.energy, e.local_energy, e.l2rho, e.w12rho, e.lp1rho_ball, e.dissipation]),
        ),
    )?;

    let constants = structure_constants(params, default_sphere_resolution(params.components()))?;
    let mut monitors = Vec::new();
    for &radius in &mc.ball_radii {
        for &q in &mc.q {
            monitors.push(gpsys_core::energy::monitor_bounds(
                &traj,
                radius,
                q,
                params,
                &constants,
                &cutoff,
                ex.tol_scale(),
            )?);
        }
    }
    let mut identities = Vec::new();
    for &radius in &mc.cutoff_radii {
        let reports = identity_reports(&traj, params, &CutoffProfile::new(radius)?, ex.tol_scale())?;
        if identities.is_empty() {
            identities.extend(reports);
        } else {
            identities.extend(reports.into_iter().skip(2));
        }
    }
    let chain = bootstrap_chain(params.p(), mc.chain_q_target, mc.chain_radius)?;
    let stages = verify_schedule_on_run(&chain, &traj, params)?;

    let monitors_passed = monitors.iter().filter(|m| m.passed).count();
    let passed = monitors_passed == monitors.len();
    let doc = MonitorDocument {
        system: system_info(params),
        grid: ex.plan.rescaled_grid,
        boundary: rc.boundary,
        ds,
        steps,
        record_every: rc.record_every,
        frames: traj.len(),
        s_final: *traj.s.last().unwrap(),
        constants,
        monitors,
        identities,
        chain,
        stages,
        passed,
    };
    write_json(&ex.out, &cfg.outputs.monitor, &doc)?;
    let summary = RescaledSummary { frames: traj.len(), monitors_passed, monitors_total: doc.monitors.len(), passed };
    if passed {
        Ok(summary)
    } else {
        Err(Failure::Verification(format!(
            "{} of {} monitor reports failed",
            summary.monitors_total - monitors_passed,
            summary.monitors_total
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Level {
    pub points: usize,
    pub h: f64,
    pub ds: f64,
    pub steps: usize,
    pub identities: Vec<IdentityReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyDocument {
    pub seed: u64,
    pub structure: StructureReport,
    pub structure_tolerance: f64,
    pub structure_passed: bool,
    pub levels: Vec<Level>,
    pub convergence: Vec<ConvergenceCheck>,
    /// Set when only one resolution was run, so no order could be measured.
    pub convergence_inconclusive: bool,
    pub identities_passed: bool,
    pub subsolution: SubsolutionReport,
    pub passed: bool,
}

/// Runs the rescaled flow from the configured initial data at `points`
/// nodes per axis for the verification horizon.
fn verification_run(ex: &Experiment, points: usize, ds: f64) -> Result<(RescaledTrajectory, usize), Failure> {
    let cfg = &ex.config;
    let params = &ex.plan.params;
    let grid = Grid::new(params.space_dim(), cfg.rescaled.half_extent, points)?;
    let w0 = if grid == ex.plan.rescaled_grid {
        ex.plan.w0.clone()
    } else {
        use crate::config::RescaledInitial as R;
        match cfg.rescaled.initial {
            R::Zero => gpsys_core::grid::Field::zeros(grid, params.components()),
            R::Constant => {
                let v = &cfg.rescaled.values;
                let v = if v.len() == 1 { vec![v[0]; params.components()] } else { v.clone() };
                gpsys_core::scenarios::constant(grid, &v)
            }
            R::StationaryKappa => gpsys_core::scenarios::stationary_kappa(params, grid)?,
            R::PerturbedKappa => gpsys_core::scenarios::perturbed_kappa(params, grid)?,
            R::File => {
                return Err(Failure::Validation(
                    "[verify] resolutions: file initial data exists on one grid only; use a single resolution equal to [rescaled] points".into(),
                ))
            }
        }
    };
    let solver = RescaledSolver::new(params.clone(), grid, cfg.rescaled.boundary)?;
    let steps = (cfg.verify.s_max / ds).round().max(2.0) as usize;
    Ok((solver.evolve(&w0, 0.0, ds, steps, 1)?, steps))
}

pub fn verify(ex: &Experiment, seed: u64) -> Result<VerifyDocument, Failure> {
    let cfg = &ex.config;
    let vc = &cfg.verify;
    let params = &ex.plan.params;
    let tol_scale = ex.tol_scale();

    let structure = check_structure(params, vc.structure_samples, seed)?;
    let structure_tolerance = STRUCTURE_TOL * tol_scale;
    let structure_passed = structure.g_positive && structure.max_violation() <= structure_tolerance;

    let cutoff = CutoffProfile::new(cfg.monitors.cutoff_radii[0])?;
    let h0 = 2.0 * cfg.rescaled.half_extent / (vc.resolutions[0] - 1) as f64;
    let mut ds = vc.ds_factor * h0 * h0;
    let mut levels = Vec::new();
    let mut finest = None;
    for &points in &vc.resolutions {
        let (traj, steps) = verification_run(ex, points, ds)?;
        levels.push(Level {
            points,
            h: traj.grid().spacing(),
            ds,
            steps,
            identities: identity_reports(&traj, params, &cutoff, tol_scale)?,
        });
        finest = Some(traj);
        ds *= 0.5;
    }
    let convergence: Vec<ConvergenceCheck> = (0..4)
        .map(|k| {
            let reports: Vec<IdentityReport> = levels.iter().map(|l| l.identities[k].clone()).collect();
            convergence_check(&reports, vc.min_ratio)
        })
        .collect();
    let convergence_inconclusive = convergence.iter().any(|c| !c.conclusive);
    let identities_passed = levels.iter().all(|l| l.identities.iter().all(|r| r.passed));

    let subsolution = subsolution_residual(
        finest.as_ref().expect("at least one level"),
        params,
        cfg.monitors.subsolution_delta,
        &default_bumps(),
        tol_scale,
    )?;

    let passed = structure_passed && identities_passed && convergence.iter().all(|c| c.passed) && subsolution.passed;
    let doc = VerifyDocument {
        seed,
        structure,
        structure_tolerance,
        structure_passed,
        levels,
        convergence,
        convergence_inconclusive,
        identities_passed,
        subsolution,
        passed,
    };
    write_json(&ex.out, &cfg.outputs.verify, &doc)?;
    if passed {
        Ok(doc)
    } else {
        let mut failed = Vec::new();
        if !doc.structure_passed {
            failed.push("structure".to_string());
        }
        if !doc.identities_passed {
            failed.push("identity tolerance".to_string());
        }
        failed.extend(doc.convergence.iter().filter(|c| !c.passed).map(|c| format!("{} convergence", c.name)));
        if !doc.subsolution.passed {
            failed.push("subsolution".to_string());
        }
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

/// Shortest decimal that reads back as `v`, so config values keep their
/// exact rational meaning.
fn literal(v: f64) -> String {
    format!("{v}")
}

/// The exponent request implied by a config's `[system]` and `[exponents]`.
pub fn exponent_request(cfg: &ExperimentConfig) -> ExponentRequest {
    let e = &cfg.exponents;
    ExponentRequest {
        p: literal(2.0 * cfg.system.r + 1.0),
        q: literal(e.q),
        qbar: e.qbar.map(literal),
        lambda: e.lambda.map(literal),
        q_target: Some(literal(e.q_target)),
        r_target: Some(literal(e.r_target)),
    }
}

/// Builds the schedule document and writes it to `out/name` when `out` is set.
pub fn exponents(req: &ExponentRequest, out: Option<(&std::path::Path, &str)>) -> Result<ScheduleDocument, Failure> {
    let doc = schedule_document(req).map_err(Failure::Validation)?;
    if let Some((dir, name)) = out {
        write_json(dir, name, &doc)?;
    }
    Ok(doc)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepStatus {
    pub command: &'static str,
    pub exit_code: u8,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub seed: u64,
    pub steps: Vec<StepStatus>,
    pub simulate: Option<SimulateSummary>,
    pub rescaled: Option<RescaledSummary>,
    pub verify_passed: Option<bool>,
    pub convergence_inconclusive: Option<bool>,
    pub schedule: Option<ScheduleDocument>,
}

fn status<T>(command: &'static str, r: &Result<T, Failure>) -> StepStatus {
    match r {
        Ok(_) => StepStatus { command, exit_code: 0, status: "ok".into() },
        Err(f) => StepStatus { command, exit_code: f.exit_code(), status: f.to_string() },
    }
}

/// Runs every command into one directory and writes a summary. The exit
/// code is the most severe of the parts: runtime, then verification, then
/// no-blow-up.
pub fn report(ex: &Experiment, seed: u64) -> Result<ReportSummary, Failure> {
    let cfg = &ex.config;
    let sim = simulate(ex);
    let res = rescaled(ex);
    let ver = verify(ex, seed);
    let exp = exponents(&exponent_request(cfg), Some((&ex.out, &cfg.outputs.schedule)));
    let steps = vec![status("simulate", &sim), status("rescaled", &res), status("verify", &ver), status("exponents", &exp)];
    let summary = ReportSummary {
        seed,
        steps: steps.clone(),
        simulate: sim.as_ref().ok().cloned(),
        rescaled: res.as_ref().ok().cloned(),
        verify_passed: ver.as_ref().ok().map(|d| d.passed),
        convergence_inconclusive: ver.as_ref().ok().map(|d| d.convergence_inconclusive),
        schedule: exp.as_ref().ok().cloned(),
    };
    write_json(&ex.out, &cfg.outputs.summary, &summary)?;
    let worst = [1u8, 2, 4, 3].into_iter().find(|code| steps.iter().any(|s| s.exit_code == *code));
    match worst {
        None => Ok(summary),
        Some(code) => {
            let msg = steps
                .iter()
                .filter(|s| s.exit_code == code)
                .map(|s| format!("{}: {}", s.command, s.status))
                .collect::<Vec<_>>()
                .join("; ");
            Err(match code {
                1 => Failure::Runtime(anyhow::anyhow!(msg)),
                2 => Failure::Validation(msg),
                4 => Failure::Verification(msg),
                _ => Failure::NoBlowUp(msg),
            })
        }
    }
}
