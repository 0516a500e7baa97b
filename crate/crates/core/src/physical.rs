//! Method-of-lines integration of `U_t = Delta U + F(U)` up to blow-up,
//! blow-up time extrapolation and the rate fit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, DiffusionStencil, Field, Grid, Weighting};
use crate::nonlinearity::SystemParams;
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalState {
    pub t: f64,
    pub u: Field,
}

/// Step-size and stopping controls for [`PhysicalSolver::run_to_blowup`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Controls {
    /// Initial step; clipped to the stability limit. `None` uses the limit.
    pub dt_init: Option<f64>,
    /// Fraction of `h^2 / (2N)` used as the stability limit.
    pub safety: f64,
    /// Stop once the sup norm reaches this value.
    pub threshold: f64,
    pub t_max: f64,
    /// Relative sup-norm change per step above which the step is redone with `dt / 2`.
    pub max_jump: f64,
    /// Keep a field snapshot every this many accepted steps (0 keeps none).
    pub snapshot_every: usize,
    pub max_steps: usize,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            dt_init: None,
            safety: 0.5,
            threshold: 1e6,
            t_max: 10.0,
            max_jump: 0.1,
            snapshot_every: 0,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub sup_norm: f64,
    /// Step that produced this sample (0 for the initial state).
    pub dt: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub snapshots: Vec<PhysicalState>,
    pub rejections: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sup_norm).collect()
    }

    /// Builds a trajectory from `(t, sup_norm)` pairs, e.g. a closed-form solution.
    pub fn from_series(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut prev = None;
        let samples = points
            .into_iter()
            .map(|(t, sup_norm)| {
                let dt = prev.map_or(0.0, |p| t - p);
                prev = Some(t);
                TrajectorySample { t, sup_norm, dt }
            })
            .collect();
        Self { samples, snapshots: Vec::new(), rejections: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupEstimate {
    pub t_est: f64,
    pub fit_window: (f64, f64),
    /// Root-mean-square misfit of the affine model for `sup^(1-p)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    BlowUp(BlowupEstimate),
    NoBlowUp { t_final: f64, sup_final: f64 },
}

#[derive(Debug, Clone)]
pub struct Run {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub final_state: PhysicalState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Slope of `log sup` against `-log(T - t)`.
    pub exponent: f64,
    /// Median of `(T - t)^(1/(p-1)) sup` over the window.
    pub plateau: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the log-log fit.
    pub misfit: f64,
    /// `(max - min) / median` of the plateau series over the two decades of
    /// `T - t` closest to blow-up inside the window.
    pub plateau_spread: f64,
    pub samples: usize,
}

/// Explicit solver for the physical system on a fixed grid.
#[derive(Debug, Clone)]
pub struct PhysicalSolver {
    params: SystemParams,
    stencil: DiffusionStencil,
}

impl PhysicalSolver {
    pub fn new(params: SystemParams, grid: Grid, boundary: Boundary) -> Result<Self> {
        if params.space_dim() != grid.space_dim() {
            return Err(Error::InvalidParams(format!(
                "system dimension {} does not match grid dimension {}",
                params.space_dim(),
                grid.space_dim()
            )));
        }
        Ok(Self { params, stencil: DiffusionStencil::new(grid, Weighting::Uniform, boundary) })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        self.stencil.grid()
    }

    pub fn boundary(&self) -> Boundary {
        self.stencil.boundary()
    }

    /// `safety * h^2 / (2N)`.
    pub fn stable_dt(&self, safety: f64) -> f64 {
        let h = self.grid().spacing();
        safety * h * h / (2.0 * self.grid().space_dim() as f64)
    }

    /// `Delta U + F(U)`; zero at frozen boundary nodes under the Dirichlet closure.
    pub fn rhs(&self, u: &Field) -> Field {
        let m = u.components();
        let mut out = Field::zeros(*self.grid(), m);
        par::for_each_chunk_mut(out.values_mut(), m, |i, node| {
            if !self.stencil.is_active(i) {
                return;
            }
            self.params.gradient_into(u.node(i), node);
            for (c, o) in node.iter_mut().enumerate() {
                *o += self.stencil.apply_node(u, i, c);
            }
        });
        out
    }

    /// One classical Runge-Kutta step.
    pub fn step(&self, state: &PhysicalState, dt: f64) -> Result<PhysicalState> {
        let u = rk4(&state.u, dt, |x| self.rhs(x));
        if !u.is_finite() {
            return Err(Error::Overflow { t: state.t + dt, detail: "non-finite values after step".into() });
        }
        Ok(PhysicalState { t: state.t + dt, u })
    }

    /// Integrates from `u0` at `t = 0` until the sup norm reaches the
    /// threshold or `t_max` passes, then extrapolates the blow-up time.
    pub fn run_to_blowup(&self, u0: &Field, controls: &Controls) -> Result<Run> {
        validate_controls(controls)?;
        if u0.grid() != self.grid() || u0.components() != self.params.components() {
            return Err(Error::InvalidParams("initial field does not match solver grid or components".into()));
        }
        if !u0.is_finite() {
            return Err(Error::Domain("initial data must be finite".into()));
        }
        let mut u = u0.clone();
        if self.boundary() == Boundary::Dirichlet {
            u.zero_boundary();
        }
        let mut state = PhysicalState { t: 0.0, u };
        let mut sup = state.u.sup_norm();
        let mut traj = Trajectory {
            samples: vec![TrajectorySample { t: 0.0, sup_norm: sup, dt: 0.0 }],
            snapshots: Vec::new(),
            rejections: 0,
        };
        if controls.snapshot_every > 0 {
            traj.snapshots.push(state.clone());
        }
        if sup == 0.0 {
            return Ok(Run { trajectory: traj, outcome: Outcome::NoBlowUp { t_final: 0.0, sup_final: 0.0 }, final_state: state });
        }

        let limit = self.stable_dt(controls.safety);
        let mut dt = controls.dt_init.map_or(limit, |d| d.min(limit));
        let mut steps = 0usize;
        let mut consecutive_rejections = 0usize;
        while sup < controls.threshold && state.t < controls.t_max {
            if steps >= controls.max_steps {
                return Err(Error::Domain(format!("step budget of {} exhausted at t = {}", controls.max_steps, state.t)));
            }
            let trial = self.step(&state, dt);
            let accept = match &trial {
                Ok(next) => ((next.u.sup_norm() - sup) / sup).abs() <= controls.max_jump,
                Err(_) => false,
            };
            if !accept {
                traj.rejections += 1;
                consecutive_rejections += 1;
                dt *= 0.5;
                if consecutive_rejections > 200 || dt <= f64::MIN_POSITIVE {
                    return Err(trial.err().unwrap_or(Error::Overflow {
                        t: state.t,
                        detail: "step size underflow while resolving growth".into(),
                    }));
                }
                continue;
            }
            consecutive_rejections = 0;
            state = trial?;
            sup = state.u.sup_norm();
            steps += 1;
            traj.samples.push(TrajectorySample { t: state.t, sup_norm: sup, dt });
            if controls.snapshot_every > 0 && steps.is_multiple_of(controls.snapshot_every) {
                traj.snapshots.push(state.clone());
            }
        }
        if controls.snapshot_every > 0 && !steps.is_multiple_of(controls.snapshot_every) {
            traj.snapshots.push(state.clone());
        }
        let outcome = if sup >= controls.threshold {
            Outcome::BlowUp(estimate_blowup_time(&traj, self.params.p())?)
        } else {
            Outcome::NoBlowUp { t_final: state.t, sup_final: sup }
        };
        Ok(Run { trajectory: traj, outcome, final_state: state })
    }
}

fn validate_controls(c: &Controls) -> Result<()> {
    let pos = |x: f64| x.is_finite() && x > 0.0;
    if !(pos(c.safety) && c.safety <= 1.0) {
        return Err(Error::InvalidParams(format!("safety factor must lie in (0, 1], got {}", c.safety)));
    }
    if !pos(c.threshold) || !pos(c.t_max) || !pos(c.max_jump) {
        return Err(Error::InvalidParams("threshold, t_max and max_jump must be positive".into()));
    }
    if let Some(d) = c.dt_init {
        if !pos(d) {
            return Err(Error::InvalidParams(format!("dt_init must be positive, got {d}")));
        }
    }
    Ok(())
}

/// Classical four-stage Runge-Kutta update of `u` under `f`.
pub(crate) fn rk4(u: &Field, dt: f64, f: impl Fn(&Field) -> Field) -> Field {
    let k1 = f(u);
    let mut tmp = u.clone();
    tmp.add_scaled(0.5 * dt, &k1);
    let k2 = f(&tmp);
    tmp.values_mut().copy_from_slice(u.values());
    tmp.add_scaled(0.5 * dt, &k2);
    let k3 = f(&tmp);
    tmp.values_mut().copy_from_slice(u.values());
    tmp.add_scaled(dt, &k3);
    let k4 = f(&tmp);
    let mut out = u.clone();
    let w = dt / 6.0;
    for (((o, a), (b, c)), d) in out
        .values_mut()
        .iter_mut()
        .zip(k1.values())
        .zip(k2.values().iter().zip(k3.values()))
        .zip(k4.values())
    {
        *o += w * (a + 2.0 * b + 2.0 * c + d);
    }
    out
}

/// `Delta U + F(U)` on `u`'s grid.
pub fn rhs_physical(u: &Field, params: &SystemParams, boundary: Boundary) -> Result<Field> {
    Ok(PhysicalSolver::new(params.clone(), *u.grid(), boundary)?.rhs(u))
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, (ss / n).sqrt())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Fits `sup^(1-p) = c (T - t)` over the final decade of growth
/// (samples with `sup >= sup_last / 10`) and returns its zero.
pub fn estimate_blowup_time(traj: &Trajectory, p: f64) -> Result<BlowupEstimate> {
    let last = traj.samples.last().ok_or_else(|| Error::FitWindow("empty trajectory".into()))?;
    let window: Vec<&TrajectorySample> =
        traj.samples.iter().filter(|s| s.sup_norm > 0.0 && s.sup_norm >= last.sup_norm / 10.0).collect();
    if window.len() < 3 {
        return Err(Error::FitWindow(format!("final decade holds only {} samples", window.len())));
    }
    let t0 = window[0].t;
    let xs: Vec<f64> = window.iter().map(|s| s.t - t0).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.sup_norm.powf(1.0 - p)).collect();
    let (a, b, residual) = linear_fit(&xs, &ys);
    if !(b < 0.0) {
        return Err(Error::FitWindow("sup norm is not growing over the final decade".into()));
    }
    Ok(BlowupEstimate { t_est: t0 - a / b, fit_window: (window[0].t, last.t), residual })
}

/// Fits the blow-up exponent over the samples with `T - t` between ten
/// times and `10^5` times its final value.
pub fn fit_rate(traj: &Trajectory, t_est: f64, params: &SystemParams) -> Result<RateFit> {
    fit_rate_p(traj, t_est, params.p())
}

/// [`fit_rate`] for a bare exponent `p`.
pub fn fit_rate_p(traj: &Trajectory, t_est: f64, p: f64) -> Result<RateFit> {
    let last = traj.samples.last().ok_or_else(|| Error::FitWindow("empty trajectory".into()))?;
    let delta_last = t_est - last.t;
    if !(delta_last > 0.0) {
        return Err(Error::FitWindow(format!("estimated blow-up time {t_est} does not exceed the final time {}", last.t)));
    }
    let lo = 10.0 * delta_last;
    let hi = lo * 1e4;
    let window: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.sup_norm > 0.0)
        .map(|s| (s.t, t_est - s.t, s.sup_norm))
        .filter(|&(_, d, _)| d >= lo && d <= hi)
        .collect();
    if window.len() < 20 {
        return Err(Error::FitWindow(format!("fit window holds {} samples, need at least 20", window.len())));
    }
    let dmax = window.iter().map(|w| w.1).fold(0.0, f64::max);
    let dmin = window.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    if (dmax / dmin).log10() < 2.0 {
        return Err(Error::FitWindow(format!("T - t spans only {:.2} decades, need 2", (dmax / dmin).log10())));
    }
    let xs: Vec<f64> = window.iter().map(|w| -w.1.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|w| w.2.ln()).collect();
    let (_, exponent, misfit) = linear_fit(&xs, &ys);
    let b = 1.0 / (p - 1.0);
    let plateau_series: Vec<(f64, f64)> = window.iter().map(|w| (w.1, w.1.powf(b) * w.2)).collect();
    let plateau = median(plateau_series.iter().map(|x| x.1).collect());
    let tail: Vec<f64> = plateau_series.iter().filter(|x| x.0 <= 100.0 * dmin).map(|x| x.1).collect();
    let tmax = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tmin = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let plateau_spread = (tmax - tmin) / median(tail);
    let t_lo = window.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
    let t_hi = window.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit { exponent, plateau, window: (t_lo, t_hi), misfit, plateau_spread, samples: window.len() })
}

/// `Z(x) = T^(1/(p-1)) U0(sqrt(T) x)` sampled on `target`.
pub fn similarity_normalize(u0: &Field, t_scale: f64, params: &SystemParams, target: &Grid) -> Result<Field> {
    rescale(u0, t_scale.sqrt(), t_scale.powf(params.beta_exp()), t_scale, target)
}

/// Inverse of [`similarity_normalize`]: `U(x) = T^(-1/(p-1)) Z(x / sqrt(T))`.
pub fn similarity_denormalize(z: &Field, t_scale: f64, params: &SystemParams, target: &Grid) -> Result<Field> {
    rescale(z, 1.0 / t_scale.sqrt(), t_scale.powf(-params.beta_exp()), t_scale, target)
}

fn rescale(f: &Field, stretch: f64, amp: f64, t_scale: f64, target: &Grid) -> Result<Field> {
    if !(t_scale.is_finite() && t_scale > 0.0) {
        return Err(Error::Domain(format!("time scale must be positive, got {t_scale}")));
    }
    if target.space_dim() != f.grid().space_dim() {
        return Err(Error::InvalidParams("target grid dimension differs from field".into()));
    }
    let m = f.components();
    let dim = target.space_dim();
    let mut out = Field::zeros(*target, m);
    let mut err = None;
    for i in 0..target.num_nodes() {
        let p = target.point(i);
        let x = [p[0] * stretch, p[1] * stretch];
        if let Err(e) = f.sample(&x[..dim], out.node_mut(i)) {
            err = Some(e);
            break;
        }
        for v in out.node_mut(i) {
            *v *= amp;
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::CouplingMatrix;
    use proptest::prelude::*;

    fn scalar(r: f64) -> SystemParams {
        SystemParams::new(1, r, CouplingMatrix::ones(1)).unwrap()
    }

    fn constant(grid: Grid, vals: &[f64]) -> Field {
        Field::from_fn(grid, vals.len(), |_, o| o.copy_from_slice(vals))
    }

    #[test]
    fn zero_is_an_equilibrium() {
        let g = Grid::new(1, 4.0, 33).unwrap();
        let s = PhysicalSolver::new(scalar(1.0), g, Boundary::Dirichlet).unwrap();
        let z = Field::zeros(g, 1);
        assert!(s.rhs(&z).values().iter().all(|v| *v == 0.0));
        let next = s.step(&PhysicalState { t: 0.0, u: z.clone() }, 1e-3).unwrap();
        assert_eq!(next.u, z);
    }

    #[test]
    fn constant_data_sees_only_the_reaction() {
        let g = Grid::new(1, 4.0, 33).unwrap();
        let s = PhysicalSolver::new(SystemParams::new(1, 1.0, CouplingMatrix::ones(2)).unwrap(), g, Boundary::Dirichlet).unwrap();
        let rhs = s.rhs(&constant(g, &[0.5, 1.5]));
        // F_1 = 0.5 (0.25 + 2.25), F_2 = 1.5 (0.25 + 2.25)
        for i in 1..32 {
            assert!((rhs.get(i, 0) - 1.25).abs() < 1e-12);
            assert!((rhs.get(i, 1) - 3.75).abs() < 1e-12);
        }
        assert_eq!(rhs.node(0), &[0.0, 0.0]);
    }

    #[test]
    fn sine_rhs_second_order() {
        let mut errs = vec![];
        for n in [65, 129] {
            let g = Grid::new(1, 3.0, n).unwrap();
            let u = Field::from_fn(g, 1, |p, o| o[0] = p[0].sin());
            let rhs = rhs_physical(&u, &scalar(1.0), Boundary::Dirichlet).unwrap();
            let e = (1..n - 1)
                .map(|i| {
                    let x = g.point(i)[0];
                    (rhs.get(i, 0) - (-x.sin() + x.sin().powi(3))).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.8, "{errs:?}");
    }

    #[test]
    fn ode_step_matches_closed_form() {
        let g = Grid::new(1, 1.0, 17).unwrap();
        let s = PhysicalSolver::new(scalar(1.0), g, Boundary::Neumann).unwrap();
        let dt = 1e-4;
        let next = s.step(&PhysicalState { t: 0.0, u: constant(g, &[1.0]) }, dt).unwrap();
        let exact = (2.0 * (0.5 - dt)).powf(-0.5);
        for v in next.u.values() {
            assert!((v - exact).abs() < 1e-17_f64.max(10.0 * dt.powi(5)));
        }
    }

    #[test]
    fn small_data_decays() {
        let g = Grid::new(1, 8.0, 129).unwrap();
        let s = PhysicalSolver::new(scalar(1.0), g, Boundary::Dirichlet).unwrap();
        let mut st = PhysicalState { t: 0.0, u: Field::from_fn(g, 1, |p, o| o[0] = 0.01 * (-p[0] * p[0]).exp()) };
        let dt = s.stable_dt(0.5);
        for _ in 0..50 {
            let next = s.step(&st, dt).unwrap();
            assert!(next.u.sup_norm() <= st.u.sup_norm());
            st = next;
        }
    }

    fn ode_run(vals: &[f64], coupling: CouplingMatrix, dt_init: Option<f64>) -> (Run, SystemParams) {
        let params = SystemParams::new(1, 1.0, coupling).unwrap();
        let g = Grid::new(1, 1.0, 17).unwrap();
        let s = PhysicalSolver::new(params.clone(), g, Boundary::Neumann).unwrap();
        let c = Controls { dt_init, ..Controls::default() };
        (s.run_to_blowup(&constant(g, vals), &c).unwrap(), params)
    }

    #[test]
    fn ode_mode_blowup_times() {
        for dt in [1e-3, 5e-4] {
            let (run, params) = ode_run(&[1.0], CouplingMatrix::ones(1), Some(dt));
            let Outcome::BlowUp(est) = run.outcome else { panic!("no blow-up") };
            assert!((est.t_est - 0.5).abs() < 5e-3 * 0.5, "{est:?}");
            let fit = fit_rate(&run.trajectory, est.t_est, &params).unwrap();
            assert!((fit.exponent - 0.5).abs() < 1e-2, "{fit:?}");
        }
        let (run, _) = ode_run(&[1.0, 1.0], CouplingMatrix::ones(2), None);
        let Outcome::BlowUp(est) = run.outcome else { panic!("no blow-up") };
        assert!((est.t_est - 0.25).abs() < 2.5e-3);
    }

    #[test]
    fn ode_mode_global_error_is_small_before_final_decade() {
        let (run, _) = ode_run(&[1.0], CouplingMatrix::ones(1), Some(1e-3));
        for s in run.trajectory.samples.iter().filter(|s| s.t < 0.4) {
            let exact = (2.0 * (0.5 - s.t)).powf(-0.5);
            assert!((s.sup_norm - exact).abs() < 1e-10, "t={}", s.t);
        }
    }

    #[test]
    fn larger_data_blows_up_sooner() {
        let t = |a: f64| match ode_run(&[a], CouplingMatrix::ones(1), None).0.outcome {
            Outcome::BlowUp(e) => e.t_est,
            _ => panic!(),
        };
        let (a, b, c) = (t(1.0), t(1.2), t(2.0));
        assert!(a > b && b > c);
    }

    #[test]
    fn zero_data_reports_no_blowup() {
        let (run, _) = ode_run(&[0.0], CouplingMatrix::ones(1), None);
        assert!(matches!(run.outcome, Outcome::NoBlowUp { .. }));
    }

    #[test]
    fn symmetric_components_stay_identical() {
        let params = SystemParams::new(1, 1.0, CouplingMatrix::ones(2)).unwrap();
        let g = Grid::new(1, 6.0, 65).unwrap();
        let s = PhysicalSolver::new(params, g, Boundary::Dirichlet).unwrap();
        let u0 = Field::from_fn(g, 2, |p, o| o.fill(1.5 * (-p[0] * p[0] / 2.0).exp()));
        let c = Controls { threshold: 1e3, ..Controls::default() };
        let run = s.run_to_blowup(&u0, &c).unwrap();
        for node in run.final_state.u.values().chunks(2) {
            assert_eq!(node[0], node[1]);
        }
    }

    #[test]
    fn exact_trajectories_give_exact_exponents() {
        for (p, t_end) in [(3.0, 0.5), (2.0, 1.0)] {
            let b = 1.0 / (p - 1.0);
            let traj = Trajectory::from_series((0..400).map(|k| {
                let delta = t_end * 10f64.powf(-7.0 * k as f64 / 399.0);
                (t_end - delta, ((p - 1.0) * delta).powf(-b))
            }));
            let fit = fit_rate_p(&traj, t_end, p).unwrap();
            assert!((fit.exponent - b).abs() < 1e-9);
            assert!((fit.plateau - (p - 1.0).powf(-b)).abs() < 1e-9);
            assert!(fit.plateau_spread < 1e-9);
        }
    }

    #[test]
    fn short_windows_are_rejected() {
        let traj = Trajectory::from_series((0..10).map(|k| (k as f64 * 0.01, 1.0 + k as f64)));
        assert!(matches!(fit_rate_p(&traj, 0.2, 3.0), Err(Error::FitWindow(_))));
    }

    #[test]
    fn normalization_of_constants_and_round_trip() {
        let params = scalar(1.0);
        let src = Grid::new(1, 8.0, 161).unwrap();
        let dst = Grid::new(1, 4.0, 81).unwrap();
        let z = similarity_normalize(&constant(src, &[0.3]), 4.0, &params, &dst).unwrap();
        assert!(z.values().iter().all(|v| (v - 0.6).abs() < 1e-14));
        let same = similarity_normalize(&constant(src, &[0.3]), 1.0, &params, &src).unwrap();
        assert_eq!(same, constant(src, &[0.3]));
        assert!(matches!(
            similarity_normalize(&constant(src, &[0.3]), 4.0, &params, &src),
            Err(Error::Truncation(_))
        ));

        let mut errs = vec![];
        for n in [81, 161] {
            let g = Grid::new(1, 8.0, n).unwrap();
            let small = Grid::new(1, 4.0, (n - 1) / 2 + 1).unwrap();
            let u = Field::from_fn(g, 1, |p, o| o[0] = (-p[0] * p[0] / 2.0).exp());
            let z = similarity_normalize(&u, 2.3, &params, &small).unwrap();
            let back = similarity_denormalize(&z, 2.3, &params, &small).unwrap();
            let e = (0..small.num_nodes())
                .map(|i| (back.get(i, 0) - (-small.point(i)[0].powi(2) / 2.0).exp()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    proptest! {
        #[test]
        fn scaling_equivariance(c in 0.1f64..2.0, lambda in 0.2f64..3.0) {
            let params = scalar(1.0);
            let g = Grid::new(1, 2.0, 17).unwrap();
            let k = lambda.powf(2.0 / (params.p() - 1.0));
            let a = rhs_physical(&constant(g, &[k * c]), &params, Boundary::Neumann).unwrap();
            let b = rhs_physical(&constant(g, &[c]), &params, Boundary::Neumann).unwrap();
            let scale = lambda.powf(2.0 / (params.p() - 1.0) + 2.0);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - scale * y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn scalar_reduction(r in 0.2f64..2.0, vals in proptest::collection::vec(-2.0f64..2.0, 17)) {
            let params = scalar(r);
            let g = Grid::new(1, 2.0, 17).unwrap();
            let u = Field::from_values(g, 1, vals).unwrap();
            let rhs = rhs_physical(&u, &params, Boundary::Neumann).unwrap();
            let lap = DiffusionStencil::new(g, Weighting::Uniform, Boundary::Neumann).apply(&u);
            for i in 0..17 {
                let x = u.get(i, 0);
                let expect = lap.get(i, 0) + x.abs().powf(params.p() - 1.0) * x;
                prop_assert!((rhs.get(i, 0) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }
}
