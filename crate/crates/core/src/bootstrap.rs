//! Exponent bookkeeping for the integrability bootstrap: the constants
//! `p1, qbar, lambda_q, lambda, theta, alpha`, their feasibility conditions
//! and the chain of exponents and radii that raises `q` from 2.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f64` and
//! in exact rational arithmetic.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};
use serde::Serialize;

use crate::energy::unit_windows;
use crate::error::{Error, Result};
use crate::grid::{weighted_dirichlet_integral, weighted_power_integral};
use crate::nonlinearity::SystemParams;
use crate::selfsimilar::RescaledTrajectory;

/// Field used for exponent arithmetic.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(self) -> f64;
    /// Largest integer not above `self`.
    fn floor_int(self) -> i64;
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(self) -> f64 {
        self
    }

    /// Rounds values within `1e-12` relative of an integer onto it, so that
    /// decimal inputs such as `(p+1)(q-2) = 4` are not floored to 3.
    fn floor_int(self) -> i64 {
        let r = self.round();
        if (self - r).abs() <= 1e-12 * r.abs().max(1.0) {
            r as i64
        } else {
            self.floor() as i64
        }
    }
}

impl Scalar for Rational64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn floor_int(self) -> i64 {
        self.floor().to_integer()
    }
}

fn two<T: Scalar>() -> T {
    T::one() + T::one()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSchedule<T> {
    pub p: T,
    pub q: T,
    /// `1 + 1/p`
    pub p1: T,
    pub qbar: T,
    /// `p + 1 - (p-1)/(q+1)`
    pub lambda_q: T,
    pub lambda: T,
    /// `(p+1)(lambda-2) / ((p-1) lambda)`
    pub theta: T,
    /// `2 / ((1-theta) qbar)`
    pub alpha: T,
    /// Hoelder conjugate of `alpha`.
    pub alpha_conj: T,
    /// `theta qbar alpha' / p1`, required in `(1, q)`.
    pub holder_ratio: T,
}

impl<T: Scalar> ExponentSchedule<T> {
    pub fn to_f64(&self) -> ExponentSchedule<f64> {
        ExponentSchedule {
            p: self.p.to_f64(),
            q: self.q.to_f64(),
            p1: self.p1.to_f64(),
            qbar: self.qbar.to_f64(),
            lambda_q: self.lambda_q.to_f64(),
            lambda: self.lambda.to_f64(),
            theta: self.theta.to_f64(),
            alpha: self.alpha.to_f64(),
            alpha_conj: self.alpha_conj.to_f64(),
            holder_ratio: self.holder_ratio.to_f64(),
        }
    }

    /// `alpha > 1`.
    pub fn alpha_condition(&self) -> bool {
        self.alpha > T::one()
    }

    /// `1 < theta qbar alpha' / p1 < q`.
    pub fn holder_condition(&self) -> bool {
        self.holder_ratio > T::one() && self.holder_ratio < self.q
    }
}

pub const COND_QBAR: &str = "q < qbar < q + 1/(p+1)";
pub const COND_LAMBDA: &str = "2 < lambda < lambda_q";
pub const COND_ALPHA: &str = "alpha > 1";
pub const COND_HOLDER: &str = "1 < theta*qbar*alpha'/p1 < q";

fn infeasible(condition: &'static str, detail: String) -> Error {
    Error::Infeasible { condition, detail }
}

/// `p + 1 - (p-1)/(q+1)`.
pub fn lambda_q<T: Scalar>(p: T, q: T) -> T {
    p + T::one() - (p - T::one()) / (q + T::one())
}

/// `(p-1) lambda / ((p+1) - lambda)`; increasing on `(2, lambda_q)` with
/// value `(p+1) q + 2` at `lambda_q`.
pub fn threshold_map<T: Scalar>(p: T, lambda: T) -> T {
    (p - T::one()) * lambda / (p + T::one() - lambda)
}

fn check_pq<T: Scalar>(p: T, q: T) -> Result<()> {
    if !(p > T::one()) {
        return Err(Error::Domain(format!("p must exceed 1, got {:?}", p)));
    }
    if !(q >= two()) {
        return Err(Error::Domain(format!("q must be at least 2, got {:?}", q)));
    }
    Ok(())
}

/// Default `qbar = q + 1/(2(p+1))`, the midpoint of the admissible interval.
pub fn default_qbar<T: Scalar>(p: T, q: T) -> T {
    q + T::one() / (two::<T>() * (p + T::one()))
}

/// Evaluates the schedule at a given `lambda` and checks every condition.
pub fn schedule_at<T: Scalar>(p: T, q: T, qbar: Option<T>, lambda: T) -> Result<ExponentSchedule<T>> {
    check_pq(p, q)?;
    let one = T::one();
    let qbar = qbar.unwrap_or_else(|| default_qbar(p, q));
    if !(qbar > q && qbar < q + one / (p + one)) {
        return Err(infeasible(COND_QBAR, format!("qbar = {:?}", qbar)));
    }
    let lq = lambda_q(p, q);
    if !(lambda > two() && lambda < lq) {
        return Err(infeasible(COND_LAMBDA, format!("lambda = {:?}, lambda_q = {:?}", lambda, lq)));
    }
    let theta = (p + one) * (lambda - two()) / ((p - one) * lambda);
    if !(theta < one) {
        return Err(infeasible(COND_ALPHA, format!("theta = {:?} >= 1", theta)));
    }
    let alpha = two::<T>() / ((one - theta) * qbar);
    if !(alpha > one) {
        return Err(infeasible(COND_ALPHA, format!("alpha = {:?}", alpha)));
    }
    let alpha_conj = alpha / (alpha - one);
    let p1 = one + one / p;
    let holder_ratio = theta * qbar * alpha_conj / p1;
    let s = ExponentSchedule { p, q, p1, qbar, lambda_q: lq, lambda, theta, alpha, alpha_conj, holder_ratio };
    if !s.holder_condition() {
        return Err(infeasible(COND_HOLDER, format!("theta*qbar*alpha'/p1 = {:?}", holder_ratio)));
    }
    Ok(s)
}

/// Offset below `lambda_q` where the search starts.
pub const LAMBDA_TOP_OFFSET: f64 = 1e-6;
/// Bisection tolerance for the feasibility threshold.
pub const LAMBDA_TOL: f64 = 1e-9;

/// Builds the schedule for `p`, `q`. Missing `qbar` takes the default; a
/// missing `lambda` is chosen inside the feasible upper subinterval of
/// `(2, lambda_q)`: the lower end is located by bisection and `lambda` is
/// the midpoint between it and `lambda_q - 1e-6`.
pub fn exponent_schedule(p: f64, q: f64, qbar: Option<f64>, lambda: Option<f64>) -> Result<ExponentSchedule<f64>> {
    check_pq(p, q)?;
    if let Some(l) = lambda {
        return schedule_at(p, q, qbar, l);
    }
    let hi = lambda_q(p, q) - LAMBDA_TOP_OFFSET;
    schedule_at(p, q, qbar, hi)?;
    let mut lo = 2.0;
    let mut top = hi;
    while top - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + top);
        if schedule_at(p, q, qbar, mid).is_ok() {
            top = mid;
        } else {
            lo = mid;
        }
    }
    schedule_at(p, q, qbar, 0.5 * (top + hi))
}

/// Exponents `q_k` and radii `R_k` of the bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapChain<T> {
    /// Number of steps, `floor((p+1)(q_target - 2)) + 1`.
    pub m: i64,
    pub increment: T,
    /// `(q_k, R_k)` for `k = 0..=m`, from `(2, 4^m R_target)` to `(q_target, R_target)`.
    pub stages: Vec<(T, T)>,
}

impl<T: Scalar> BootstrapChain<T> {
    pub fn to_f64(&self) -> BootstrapChain<f64> {
        BootstrapChain {
            m: self.m,
            increment: self.increment.to_f64(),
            stages: self.stages.iter().map(|(q, r)| (q.to_f64(), r.to_f64())).collect(),
        }
    }
}

/// Chain from `q = 2` to `q_target` in `m` equal steps of size
/// `(q_target - 2)/m < 1/(p+1)`, with radii shrinking by 4 per step.
pub fn bootstrap_chain<T: Scalar>(p: T, q_target: T, r_target: T) -> Result<BootstrapChain<T>> {
    check_pq(p, q_target)?;
    if !(r_target > T::zero()) {
        return Err(Error::Domain(format!("target radius must be positive, got {:?}", r_target)));
    }
    let gap = q_target - two();
    if gap == T::zero() {
        return Ok(BootstrapChain { m: 0, increment: T::zero(), stages: vec![(q_target, r_target)] });
    }
    let m = ((p + T::one()) * gap).floor_int() + 1;
    let mt = T::from_ratio(m, 1);
    let increment = gap / mt;
    let four = two::<T>() * two::<T>();
    let mut radius = r_target;
    for _ in 0..m {
        radius = radius * four;
    }
    let mut stages = Vec::with_capacity(m as usize + 1);
    for k in 0..=m {
        let q = if k == m { q_target } else { two::<T>() + T::from_ratio(k, 1) * increment };
        stages.push((q, radius));
        radius = radius / four;
    }
    Ok(BootstrapChain { m, increment, stages })
}

/// Window statistics of `int_s^{s+1} ||W; W^{1,2}_rho(B_R)||^{2q}` for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageReport {
    pub q: f64,
    pub radius: f64,
    pub max_window: f64,
    pub max_at: f64,
    pub min_window: f64,
    pub last_window: f64,
}

/// Evaluates the unit-window integrals for every chain stage.
pub fn verify_schedule_on_run(
    chain: &BootstrapChain<f64>,
    traj: &RescaledTrajectory,
    params: &SystemParams,
) -> Result<Vec<StageReport>> {
    if traj.is_empty() || traj.s.last().unwrap() - traj.s[0] < 2.0 - 1e-9 {
        return Err(Error::Window("schedule check needs a trajectory spanning at least 2 units of s".into()));
    }
    traj.check_uniform()?;
    let beta = params.beta_exp();
    chain
        .stages
        .iter()
        .map(|&(q, radius)| {
            let norms = traj
                .fields
                .iter()
                .map(|w| {
                    let sq = weighted_dirichlet_integral(w, Some(radius))?
                        + beta * weighted_power_integral(w, 2.0, Some(radius))?;
                    Ok(sq.powf(q))
                })
                .collect::<Result<Vec<f64>>>()?;
            let win = unit_windows(&traj.s, &norms);
            let (max_at, max_window) =
                win.iter().enumerate().fold((traj.s[0], f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (traj.s[k], v) } else { a });
            Ok(StageReport {
                q,
                radius,
                max_window,
                max_at,
                min_window: win.iter().cloned().fold(f64::INFINITY, f64::min),
                last_window: *win.last().unwrap(),
            })
        })
        .collect()
}
