//! Weighted energies of the rescaled flow, discrete checks of the mass and
//! dissipation identities (global and localized), and run monitors.
//!
//! Integrals use trapezoidal node weights times `rho` for zeroth-order
//! terms and edge difference quotients, weighted at edge midpoints, for
//! gradient terms. Localized gradient terms use the edge average of
//! `psi^2`, and the coupling terms `2 int psi v . grad psi grad w rho` use
//! `(psi_j^2 - psi_i^2)` times the edge average of `v`. With these choices
//! the four identities hold exactly for the semi-discrete flow, so the
//! residuals measure time discretization only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    gradient, weighted_dirichlet_integral, weighted_power_integral, Boundary, CutoffProfile, DiffusionStencil, Field,
    Grid, Weighting,
};
use crate::nonlinearity::{StructureConstants, SystemParams};
use crate::par;
use crate::selfsimilar::{to_selfsimilar, RescaledSolver, RescaledTrajectory};

fn gaussian_stencil(grid: Grid) -> DiffusionStencil {
    DiffusionStencil::new(grid, Weighting::Gaussian, Boundary::Neumann)
}

/// `int G(W) rho` with node weights `weights` (`w_i rho_i` times any localization).
fn potential_sum(w: &Field, params: &SystemParams, weights: &[f64]) -> f64 {
    par::sum_indexed(w.grid().num_nodes(), |i| {
        if weights[i] == 0.0 {
            0.0
        } else {
            weights[i] * params.potential(w.node(i))
        }
    })
}

fn mass_sum(w: &Field, weights: &[f64]) -> f64 {
    par::sum_indexed(w.grid().num_nodes(), |i| {
        let n = w.norm_at(i);
        weights[i] * n * n
    })
}

/// `E[W] = 1/2 int (|grad W|^2 + |W|^2/(p-1)) rho - int G(W) rho`.
pub fn global_energy(w: &Field, params: &SystemParams) -> f64 {
    let st = gaussian_stencil(*w.grid());
    let grad = st.dirichlet_energy(w, |_, _| 1.0);
    0.5 * (grad + params.beta_exp() * mass_sum(w, st.mass())) - potential_sum(w, params, st.mass())
}

/// Localized sums for a nodal cutoff `psi`.
struct LocalSums {
    grad: f64,
    mass: f64,
    potential: f64,
}

fn psi_nodes(grid: &Grid, cutoff: &CutoffProfile) -> Result<Vec<f64>> {
    if cutoff.reach() > grid.half_extent() * (1.0 + 1e-12) {
        return Err(Error::Truncation(format!(
            "cutoff support of radius {} exceeds grid half extent {}",
            cutoff.reach(),
            grid.half_extent()
        )));
    }
    let dim = grid.space_dim();
    Ok(par::map_indexed(grid.num_nodes(), |i| cutoff.value(&grid.point(i)[..dim])))
}

fn local_sums(st: &DiffusionStencil, w: &Field, psi: &[f64], params: &SystemParams) -> LocalSums {
    let psi2_mass: Vec<f64> = st.mass().iter().zip(psi).map(|(m, s)| m * s * s).collect();
    let grad = st.dirichlet_energy(w, |i, axis| {
        let j = i + st.grid().stride(axis);
        0.5 * (psi[i] * psi[i] + psi[j] * psi[j])
    });
    LocalSums { grad, mass: mass_sum(w, &psi2_mass), potential: potential_sum(w, params, &psi2_mass) }
}

/// `sum_e c_e (psi_j^2 - psi_i^2) vbar_e . (w_j - w_i)`, the discrete
/// `2 int psi v . (grad psi . grad w) rho`.
fn coupling_sum(st: &DiffusionStencil, w: &Field, v: &Field, psi: &[f64]) -> f64 {
    let g = st.grid();
    let m = w.components();
    par::sum_indexed(g.num_nodes(), |i| {
        let mut acc = 0.0;
        for axis in 0..g.space_dim() {
            let c = st.edge_weights(axis)[i];
            if c == 0.0 {
                continue;
            }
            let j = i + g.stride(axis);
            let dpsi2 = psi[j] * psi[j] - psi[i] * psi[i];
            if dpsi2 == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for k in 0..m {
                dot += 0.5 * (v.get(i, k) + v.get(j, k)) * (w.get(j, k) - w.get(i, k));
            }
            acc += c * dpsi2 * dot;
        }
        acc
    })
}

/// `E_psi[W] = 1/2 int psi^2 (|grad W|^2 + |W|^2/(p-1)) rho - int psi^2 G(W) rho`.
pub fn local_energy(w: &Field, cutoff: &CutoffProfile, params: &SystemParams) -> Result<f64> {
    let psi = psi_nodes(w.grid(), cutoff)?;
    let st = gaussian_stencil(*w.grid());
    let s = local_sums(&st, w, &psi, params);
    Ok(0.5 * (s.grad + params.beta_exp() * s.mass) - s.potential)
}

/// Per-frame record of the monitored quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub s: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "E_loc")]
    pub local_energy: f64,
    /// `||W||_{L^2_rho}`
    pub l2rho: f64,
    /// `||W||_{W^{1,2}_rho}`
    pub w12rho: f64,
    /// `||W||_{L^{p+1}_rho(B_R)}`
    pub lp1rho_ball: f64,
    /// `int |W_s|^2 rho`, with `W_s` from the right-hand side.
    pub dissipation: f64,
}

/// Energy table of a trajectory with local cutoff `cutoff` and ball radius `ball_radius`.
pub fn energy_series(
    traj: &RescaledTrajectory,
    params: &SystemParams,
    cutoff: &CutoffProfile,
    ball_radius: f64,
) -> Result<Vec<EnergySample>> {
    let grid = *traj.grid();
    let solver = RescaledSolver::new(params.clone(), grid, traj.boundary)?;
    let psi = psi_nodes(&grid, cutoff)?;
    grid.ball_weights(ball_radius)?;
    let st = solver.stencil();
    let p = params.p();
    let beta = params.beta_exp();
    traj.s
        .iter()
        .zip(&traj.fields)
        .map(|(&s, w)| {
            let grad = st.dirichlet_energy(w, |_, _| 1.0);
            let mass = mass_sum(w, st.mass());
            let energy = 0.5 * (grad + beta * mass) - potential_sum(w, params, st.mass());
            let loc = local_sums(st, w, &psi, params);
            let ws = solver.rhs(w);
            Ok(EnergySample {
                s,
                energy,
                local_energy: 0.5 * (loc.grad + beta * loc.mass) - loc.potential,
                l2rho: mass.sqrt(),
                w12rho: (grad + beta * mass).sqrt(),
                lp1rho_ball: weighted_power_integral(w, p + 1.0, Some(ball_radius))?.powf(1.0 / (p + 1.0)),
                dissipation: mass_sum(&ws, st.mass()),
            })
        })
        .collect()
}

/// Residual series of one discrete identity along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub max_residual: f64,
    /// `s` at which the maximum occurs.
    pub witness_s: f64,
    /// `max_s (||W||^2_{W^{1,2}_rho} + int G(W) rho)`, the frame scale.
    pub scale: f64,
    pub h: f64,
    pub ds: f64,
    /// `10 (h^2 + ds^2) scale`, times the caller's tolerance multiplier.
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip)]
    pub residuals: Vec<(f64, f64)>,
}

fn frame_scale(w: &Field, st: &DiffusionStencil, params: &SystemParams) -> f64 {
    st.dirichlet_energy(w, |_, _| 1.0) + params.beta_exp() * mass_sum(w, st.mass()) + potential_sum(w, params, st.mass())
}

fn identity_setup(traj: &RescaledTrajectory, params: &SystemParams) -> Result<RescaledSolver> {
    if traj.len() < 3 {
        return Err(Error::Window(format!("identity checks need at least 3 frames, got {}", traj.len())));
    }
    traj.check_uniform()?;
    RescaledSolver::new(params.clone(), *traj.grid(), traj.boundary)
}

fn build_report(
    name: &str,
    traj: &RescaledTrajectory,
    solver: &RescaledSolver,
    lhs_quantity: &[f64],
    rhs: &[f64],
    tol_scale: f64,
) -> IdentityReport {
    let dsf = traj.ds;
    let residuals: Vec<(f64, f64)> = (1..traj.len() - 1)
        .map(|k| {
            let d = (lhs_quantity[k + 1] - lhs_quantity[k - 1]) / (2.0 * dsf);
            (traj.s[k], d - rhs[k])
        })
        .collect();
    let (witness_s, max_residual) =
        residuals.iter().fold((traj.s[1], 0.0), |acc, &(s, r)| if r.abs() > acc.1 { (s, r.abs()) } else { acc });
    let scale = traj.fields.iter().map(|w| frame_scale(w, solver.stencil(), solver.params())).fold(0.0, f64::max);
    let h = traj.grid().spacing();
    let tolerance = tol_scale * 10.0 * (h * h + dsf * dsf) * scale;
    IdentityReport {
        name: name.to_string(),
        max_residual,
        witness_s,
        scale,
        h,
        ds: dsf,
        tolerance,
        passed: max_residual <= tolerance,
        residuals,
    }
}

/// `1/2 d/ds int |W|^2 rho = -2 E[W] + (p-1) int G(W) rho`.
pub fn check_identity_mass(traj: &RescaledTrajectory, params: &SystemParams, tol_scale: f64) -> Result<IdentityReport> {
    let solver = identity_setup(traj, params)?;
    let st = solver.stencil();
    let p = params.p();
    let (lhs, rhs): (Vec<f64>, Vec<f64>) = traj
        .fields
        .iter()
        .map(|w| {
            let grad = st.dirichlet_energy(w, |_, _| 1.0);
            let mass = mass_sum(w, st.mass());
            let pot = potential_sum(w, params, st.mass());
            let e = 0.5 * (grad + params.beta_exp() * mass) - pot;
            (0.5 * mass, -2.0 * e + (p - 1.0) * pot)
        })
        .unzip();
    Ok(build_report("mass", traj, &solver, &lhs, &rhs, tol_scale))
}

/// `d/ds E[W] = -int |W_s|^2 rho`.
pub fn check_identity_dissipation(
    traj: &RescaledTrajectory,
    params: &SystemParams,
    tol_scale: f64,
) -> Result<IdentityReport> {
    let solver = identity_setup(traj, params)?;
    let st = solver.stencil();
    let (lhs, rhs): (Vec<f64>, Vec<f64>) = traj
        .fields
        .iter()
        .map(|w| {
            let grad = st.dirichlet_energy(w, |_, _| 1.0);
            let mass = mass_sum(w, st.mass());
            let e = 0.5 * (grad + params.beta_exp() * mass) - potential_sum(w, params, st.mass());
            let ws = solver.rhs(w);
            (e, -mass_sum(&ws, st.mass()))
        })
        .unzip();
    Ok(build_report("dissipation", traj, &solver, &lhs, &rhs, tol_scale))
}

/// The localized mass and dissipation identities for cutoff `psi`:
/// `1/2 d/ds int psi^2 |W|^2 rho = -2 E_psi + (p-1) int psi^2 G rho - 2 int psi W . (grad psi . grad W) rho`
/// and `d/ds E_psi = -int psi^2 |W_s|^2 rho - 2 int psi W_s . (grad psi . grad W) rho`.
pub fn check_local_identities(
    traj: &RescaledTrajectory,
    cutoff: &CutoffProfile,
    params: &SystemParams,
    tol_scale: f64,
) -> Result<(IdentityReport, IdentityReport)> {
    let solver = identity_setup(traj, params)?;
    let st = solver.stencil();
    let psi = psi_nodes(traj.grid(), cutoff)?;
    let psi2_mass: Vec<f64> = st.mass().iter().zip(&psi).map(|(m, s)| m * s * s).collect();
    let p = params.p();
    let beta = params.beta_exp();
    let rows: Vec<[f64; 4]> = traj
        .fields
        .iter()
        .map(|w| {
            let loc = local_sums(st, w, &psi, params);
            let e_psi = 0.5 * (loc.grad + beta * loc.mass) - loc.potential;
            let ws = solver.rhs(w);
            [
                0.5 * loc.mass,
                -2.0 * e_psi + (p - 1.0) * loc.potential - coupling_sum(st, w, w, &psi),
                e_psi,
                -mass_sum(&ws, &psi2_mass) - coupling_sum(st, w, &ws, &psi),
            ]
        })
        .collect();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    Ok((
        build_report("local_mass", traj, &solver, &col(0), &col(1), tol_scale),
        build_report("local_dissipation", traj, &solver, &col(2), &col(3), tol_scale),
    ))
}

/// Residual reduction between two resolutions.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCheck {
    pub name: String,
    pub residuals: Vec<f64>,
    /// Coarse residual over fine residual; `None` with a single resolution.
    pub ratio: Option<f64>,
    pub observed_order: Option<f64>,
    pub min_ratio: f64,
    /// `false` when fewer than two resolutions were supplied.
    pub conclusive: bool,
    pub passed: bool,
}

/// Compares identity reports at successively halved `(h, ds)`.
pub fn convergence_check(reports: &[IdentityReport], min_ratio: f64) -> ConvergenceCheck {
    let residuals: Vec<f64> = reports.iter().map(|r| r.max_residual).collect();
    let name = reports.first().map(|r| r.name.clone()).unwrap_or_default();
    if reports.len() < 2 {
        return ConvergenceCheck {
            name,
            residuals,
            ratio: None,
            observed_order: None,
            min_ratio,
            conclusive: false,
            passed: reports.iter().all(|r| r.passed),
        };
    }
    let ratio = residuals
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { w[0] / w[1] })
        .fold(f64::INFINITY, f64::min);
    // residuals at round-off level carry no order information
    let floor = reports.iter().all(|r| r.max_residual <= 1e-12 * r.scale.max(1.0));
    ConvergenceCheck {
        name,
        residuals,
        ratio: Some(ratio),
        observed_order: Some(ratio.log2()),
        min_ratio,
        conclusive: true,
        passed: floor || ratio >= min_ratio,
    }
}

/// A monitored value with the `s` where it was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub s: f64,
}

impl Extremum {
    fn max_of(it: impl IntoIterator<Item = (f64, f64)>) -> Self {
        it.into_iter().fold(Extremum { value: f64::NEG_INFINITY, s: f64::NAN }, |a, (s, v)| {
            if v > a.value {
                Extremum { value: v, s }
            } else {
                a
            }
        })
    }

    fn min_of(it: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let m = Self::max_of(it.into_iter().map(|(s, v)| (s, -v)));
        Extremum { value: -m.value, s: m.s }
    }
}

/// Sliding unit-window integrals starting at each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSample {
    pub s: f64,
    /// `int_s^{s+1} ||W||_{L^{p+1}_rho}^{2(p+1)}`
    pub lp1_power: f64,
    /// `int_s^{s+1} (int_{B_R} |W|^{p+1} rho)^q`
    pub ball_lp1: f64,
    /// `int_s^{s+1} ||W; W^{1,2}_rho(B_R)||^{2q}`
    pub ball_w12: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub s0: f64,
    pub energy_s0: f64,
    pub tolerance: f64,
    /// `max_{s' > s} (E(s') - E(s))`, with the later time as witness.
    pub monotonicity_defect: Extremum,
    pub min_energy: Extremum,
    /// `int_{s0}^{S} int |W_s|^2 rho` over the run horizon.
    pub cumulative_dissipation: f64,
    /// `|cumulative dissipation - (E(s0) - E(S))|`.
    pub dissipation_balance: f64,
    pub max_l2rho: Extremum,
    pub max_lp1_window: Extremum,
    /// `max_s ||W||^2_{W^{1,2}_rho} / (1 + ||W_s||_{L^2_rho})`.
    pub max_sobolev_ratio: Extremum,
    pub max_local_energy: Extremum,
    pub min_local_energy: Extremum,
    pub ball_radius: f64,
    pub q: f64,
    pub max_ball_lp1_window: Extremum,
    pub max_ball_w12_window: Extremum,
    /// `min_s ((p-1) int G rho - c_1 (int |W|^2 rho)^{(p+1)/2})`.
    pub min_jensen_defect: Extremum,
    pub jensen_constant: f64,
    pub energy_nonincreasing: bool,
    pub energy_bounded_below: bool,
    pub dissipation_bounded: bool,
    pub jensen_holds: bool,
    pub passed: bool,
    pub windows: Vec<WindowSample>,
}

/// Trapezoid cumulative integral of `v` over `s`.
fn cumulative(s: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    for k in 1..s.len() {
        out[k] = out[k - 1] + 0.5 * (s[k] - s[k - 1]) * (v[k] + v[k - 1]);
    }
    out
}

/// Unit-window integrals `int_{s_k}^{s_k+1}` for every frame whose window
/// fits, by linear interpolation of the cumulative integral.
pub(crate) fn unit_windows(s: &[f64], v: &[f64]) -> Vec<f64> {
    let c = cumulative(s, v);
    let end = *s.last().unwrap();
    let at = |x: f64| -> f64 {
        let k = s.partition_point(|&t| t <= x).clamp(1, s.len() - 1);
        let f = (x - s[k - 1]) / (s[k] - s[k - 1]);
        c[k - 1] + f * (c[k] - c[k - 1])
    };
    s.iter()
        .enumerate()
        .take_while(|&(_, &a)| a + 1.0 <= end + 1e-9)
        .map(|(k, &a)| at(a + 1.0) - c[k])
        .collect()
}

/// Evaluates every monitored quantity along a rescaled trajectory.
#[allow(clippy::too_many_arguments)]
pub fn monitor_bounds(
    traj: &RescaledTrajectory,
    ball_radius: f64,
    q: f64,
    params: &SystemParams,
    constants: &StructureConstants,
    cutoff: &CutoffProfile,
    tol_scale: f64,
) -> Result<MonitorReport> {
    if !(q >= 2.0) {
        return Err(Error::Domain(format!("integrability exponent q must be >= 2, got {q}")));
    }
    if traj.is_empty() || traj.s.last().unwrap() - traj.s[0] < 2.0 - 1e-9 {
        return Err(Error::Window("monitors need a trajectory spanning at least 2 units of s".into()));
    }
    traj.check_uniform()?;
    let samples = energy_series(traj, params, cutoff, ball_radius)?;
    let grid = *traj.grid();
    let p = params.p();
    let beta = params.beta_exp();
    let n_dim = grid.space_dim() as f64;
    let st = gaussian_stencil(grid);
    let jensen_constant = (p - 1.0) * constants.c_g * (4.0 * std::f64::consts::PI).powf(-n_dim * (p - 1.0) / 4.0);

    let mut lp1_pow = Vec::with_capacity(traj.len());
    let mut ball_lp1 = Vec::with_capacity(traj.len());
    let mut ball_w12 = Vec::with_capacity(traj.len());
    let mut jensen = Vec::with_capacity(traj.len());
    for (w, smp) in traj.fields.iter().zip(&samples) {
        lp1_pow.push(weighted_power_integral(w, p + 1.0, None)?.powi(2));
        ball_lp1.push(weighted_power_integral(w, p + 1.0, Some(ball_radius))?.powf(q));
        let b = weighted_dirichlet_integral(w, Some(ball_radius))? + beta * weighted_power_integral(w, 2.0, Some(ball_radius))?;
        ball_w12.push(b.powf(q));
        let pot = potential_sum(w, params, st.mass());
        jensen.push((p - 1.0) * pot - jensen_constant * (smp.l2rho * smp.l2rho).powf((p + 1.0) / 2.0));
    }

    let s = &traj.s;
    let e: Vec<f64> = samples.iter().map(|x| x.energy).collect();
    let mut later = (f64::NEG_INFINITY, 0usize);
    let mut monotonicity_defect = Extremum { value: f64::NEG_INFINITY, s: f64::NAN };
    for k in (0..e.len()).rev() {
        if later.0 - e[k] > monotonicity_defect.value {
            monotonicity_defect = Extremum { value: later.0 - e[k], s: s[later.1] };
        }
        if e[k] > later.0 {
            later = (e[k], k);
        }
    }
    let diss: Vec<f64> = samples.iter().map(|x| x.dissipation).collect();
    let cumulative_dissipation = *cumulative(s, &diss).last().unwrap();
    let energy_s0 = e[0];
    let scale = 1f64.max(energy_s0.abs()).max(samples[0].l2rho.powi(2));
    let tolerance = 1e-8 * scale * tol_scale;

    let win = |v: &[f64]| unit_windows(s, v);
    let (w1, w2, w3) = (win(&lp1_pow), win(&ball_lp1), win(&ball_w12));
    let windows: Vec<WindowSample> = (0..w1.len())
        .map(|k| WindowSample { s: s[k], lp1_power: w1[k], ball_lp1: w2[k], ball_w12: w3[k] })
        .collect();

    let min_energy = Extremum::min_of(s.iter().copied().zip(e.iter().copied()));
    let min_jensen_defect = Extremum::min_of(s.iter().copied().zip(jensen.iter().copied()));
    let energy_nonincreasing = monotonicity_defect.value <= tolerance;
    let energy_bounded_below = min_energy.value >= -tolerance;
    let dissipation_bounded = cumulative_dissipation <= energy_s0 + tolerance;
    let jensen_holds = min_jensen_defect.value >= -tolerance;
    Ok(MonitorReport {
        s0: s[0],
        energy_s0,
        tolerance,
        monotonicity_defect,
        min_energy,
        cumulative_dissipation,
        dissipation_balance: (cumulative_dissipation - (energy_s0 - e[e.len() - 1])).abs(),
        max_l2rho: Extremum::max_of(samples.iter().map(|x| (x.s, x.l2rho))),
        max_lp1_window: Extremum::max_of(windows.iter().map(|x| (x.s, x.lp1_power))),
        max_sobolev_ratio: Extremum::max_of(samples.iter().map(|x| (x.s, x.w12rho.powi(2) / (1.0 + x.dissipation.sqrt())))),
        max_local_energy: Extremum::max_of(samples.iter().map(|x| (x.s, x.local_energy))),
        min_local_energy: Extremum::min_of(samples.iter().map(|x| (x.s, x.local_energy))),
        ball_radius,
        q,
        max_ball_lp1_window: Extremum::max_of(windows.iter().map(|x| (x.s, x.ball_lp1))),
        max_ball_w12_window: Extremum::max_of(windows.iter().map(|x| (x.s, x.ball_w12))),
        min_jensen_defect,
        jensen_constant,
        energy_nonincreasing,
        energy_bounded_below,
        dissipation_bounded,
        jensen_holds,
        passed: energy_nonincreasing && energy_bounded_below && dissipation_bounded && jensen_holds,
        windows,
    })
}

/// Initial energies over a set of centres, with the a priori bound from
/// the sup norms of the data and its gradient.
#[derive(Debug, Clone, Serialize)]
pub struct InitialEnergyBound {
    pub max_energy: f64,
    pub witness_center: Vec<f64>,
    pub energies: Vec<f64>,
    /// `1/2 (4 pi)^{N/2} T^{2/(p-1)} (T sup|grad U0|^2 + sup|U0|^2/(p-1))`.
    pub crude_bound: f64,
}

/// `max_a E[W_a](0)` over `centers`, each frame sampled on `y_grid`.
pub fn initial_energy_bound(
    u0: &Field,
    centers: &[Vec<f64>],
    blowup_time: f64,
    params: &SystemParams,
    y_grid: &Grid,
) -> Result<InitialEnergyBound> {
    if centers.is_empty() {
        return Err(Error::Domain("at least one centre is required".into()));
    }
    let energies = centers
        .iter()
        .map(|a| Ok(global_energy(&to_selfsimilar(u0, 0.0, a, blowup_time, params, y_grid)?.w, params)))
        .collect::<Result<Vec<f64>>>()?;
    let (k, max_energy) = energies
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    let grads = gradient(u0);
    let sup_grad = (0..u0.grid().num_nodes())
        .map(|i| grads.iter().map(|g| g.node(i).iter().map(|x| x * x).sum::<f64>()).sum::<f64>())
        .fold(0.0, f64::max);
    let sup_u = u0.sup_norm().powi(2);
    let n = u0.grid().space_dim() as f64;
    let beta = params.beta_exp();
    let crude_bound = 0.5
        * (4.0 * std::f64::consts::PI).powf(n / 2.0)
        * blowup_time.powf(2.0 * beta)
        * (blowup_time * sup_grad + beta * sup_u);
    Ok(InitialEnergyBound { max_energy, witness_center: centers[k].clone(), energies, crude_bound })
}
