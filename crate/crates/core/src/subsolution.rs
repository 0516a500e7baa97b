//! The component sum `w = sum_i |w_i|` and checks that it satisfies
//! `w_s <= Delta w - y/2 . grad w - w/(p-1) + (sum_ij beta_ij) w^p`
//! pointwise on sign-definite regions and weakly against nonnegative bumps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CutoffProfile, Field, Grid};
use crate::nonlinearity::SystemParams;
use crate::par;
use crate::selfsimilar::{RescaledSolver, RescaledTrajectory};

/// Nonnegative scalar grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Field);

impl ScalarField {
    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn sup(&self) -> f64 {
        self.0.sup_norm()
    }
}

/// `w = sum_i |w_i|` nodewise.
pub fn aggregate_w(w: &Field) -> ScalarField {
    let m = w.components();
    let vals = w.values().chunks(m).map(|n| n.iter().map(|x| x.abs()).sum()).collect();
    ScalarField(Field::from_values(*w.grid(), 1, vals).expect("one value per node"))
}

/// Pointwise residual at one node of the smooth region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResidual {
    pub node: usize,
    pub w: f64,
    /// `w_s - (Delta w - y/2 . grad w) + w/(p-1) - (sum beta) w^p`
    pub r: f64,
}

/// Nodes where every component exceeds `delta` in modulus at the node and
/// all its stencil neighbours, and the node is not frozen.
fn smooth_mask(solver: &RescaledSolver, w: &Field, delta: f64) -> Vec<bool> {
    let g = solver.grid();
    let sign_definite: Vec<bool> = w.values().chunks(w.components()).map(|n| n.iter().all(|x| x.abs() > delta)).collect();
    (0..g.num_nodes())
        .map(|i| {
            if !sign_definite[i] || !solver.stencil().is_active(i) || g.on_boundary(i) {
                return false;
            }
            (0..g.space_dim()).all(|a| {
                let s = g.stride(a);
                sign_definite[i + s] && sign_definite[i - s]
            })
        })
        .collect()
}

/// Residuals on the smooth region of one frame, with `w_s` from the flow.
pub fn pointwise_residuals(solver: &RescaledSolver, w: &Field, delta: f64) -> Vec<PointResidual> {
    let params = solver.params();
    let agg = aggregate_w(w);
    let ws = solver.rhs(w);
    let mask = smooth_mask(solver, w, delta);
    let total = params.coupling().total();
    let (beta, p) = (params.beta_exp(), params.p());
    let m = w.components();
    (0..w.grid().num_nodes())
        .filter(|&i| mask[i])
        .map(|i| {
            let wi = agg.values()[i];
            let dw: f64 = (0..m).map(|c| w.get(i, c).signum() * ws.get(i, c)).sum();
            let lin = solver.stencil().apply_node(agg.as_field(), i, 0);
            PointResidual { node: i, w: wi, r: dw - lin + beta * wi - total * wi.powf(p) }
        })
        .collect()
}

/// Weak-form residual extremum for one test bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpResult {
    pub center: f64,
    pub radius: f64,
    pub max_residual: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionReport {
    pub delta: f64,
    pub masked_nodes: usize,
    /// Set when no node qualifies for the pointwise check.
    pub mask_empty: bool,
    pub pointwise_max: Option<f64>,
    pub pointwise_witness_s: Option<f64>,
    pub pointwise_witness_y: Option<Vec<f64>>,
    pub weak: Vec<BumpResult>,
    pub weak_max: f64,
    /// `10 (h^2 + ds^2) scale` times the caller's multiplier.
    pub tolerance: f64,
    pub pointwise_passed: bool,
    pub weak_passed: bool,
    pub passed: bool,
}

/// Default test bumps as `(centre, radius)`: radii 1, 2, 3 and centres
/// -2, 0, 2 on the first axis.
pub fn default_bumps() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for r in [1.0, 2.0, 3.0] {
        for c in [-2.0, 0.0, 2.0] {
            out.push((c, r));
        }
    }
    out
}

/// Runs the pointwise and weak checks on a trajectory. `delta = None`
/// uses `1e-3 max_s sup w`.
pub fn subsolution_residual(
    traj: &RescaledTrajectory,
    params: &SystemParams,
    delta: Option<f64>,
    bumps: &[(f64, f64)],
    tol_scale: f64,
) -> Result<SubsolutionReport> {
    if traj.len() < 3 {
        return Err(Error::Window(format!("subsolution check needs at least 3 frames, got {}", traj.len())));
    }
    traj.check_uniform()?;
    let grid = *traj.grid();
    let dim = grid.space_dim();
    let solver = RescaledSolver::new(params.clone(), grid, traj.boundary)?;
    let aggs: Vec<ScalarField> = traj.fields.iter().map(aggregate_w).collect();
    let delta = match delta {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Domain(format!("mask threshold must be positive, got {d}"))),
        None => 1e-3 * aggs.iter().map(|a| a.sup()).fold(0.0, f64::max),
    };

    let mut masked_nodes = 0;
    let mut point_best: Option<(f64, f64, usize)> = None;
    for (k, w) in traj.fields.iter().enumerate() {
        for pr in pointwise_residuals(&solver, w, delta) {
            masked_nodes += 1;
            if point_best.is_none_or(|b| pr.r > b.0) {
                point_best = Some((pr.r, traj.s[k], pr.node));
            }
        }
    }

    let st = solver.stencil();
    let total = params.coupling().total();
    let (beta, p) = (params.beta_exp(), params.p());
    let mut weak = Vec::with_capacity(bumps.len());
    for &(c, r) in bumps {
        let mut centre = vec![0.0; dim];
        centre[0] = c;
        let bump = CutoffProfile::new(r)?.translated(&centre);
        if bump.reach() > grid.half_extent() * (1.0 + 1e-12) {
            return Err(Error::Truncation(format!("test bump centred at {c} with radius {r} leaves the grid")));
        }
        let zeta = Field::from_fn(grid, 1, |y, o| o[0] = bump.value(y));
        let zm: Vec<f64> = st.mass().iter().zip(zeta.values()).map(|(m, z)| m * z).collect();
        let moment = |a: &ScalarField| par::sum_indexed(grid.num_nodes(), |i| zm[i] * a.values()[i]);
        let moments: Vec<f64> = aggs.iter().map(moment).collect();
        let mut best = BumpResult { center: c, radius: r, max_residual: f64::NEG_INFINITY, s: f64::NAN };
        for k in 1..traj.len() - 1 {
            let a = &aggs[k];
            let dt_term = (moments[k + 1] - moments[k - 1]) / (2.0 * traj.ds);
            // sum_e c_e (zeta_j - zeta_i)(w_j - w_i) = -sum_i m_i rho_i zeta_i (L w)_i
            let grad_term = (0..dim)
                .map(|axis| {
                    let s = grid.stride(axis);
                    let e = st.edge_weights(axis);
                    par::sum_indexed(grid.num_nodes(), |i| {
                        if e[i] == 0.0 {
                            0.0
                        } else {
                            e[i] * (zeta.get(i + s, 0) - zeta.get(i, 0)) * (a.values()[i + s] - a.values()[i])
                        }
                    })
                })
                .sum::<f64>();
            let react = par::sum_indexed(grid.num_nodes(), |i| {
                let wi = a.values()[i];
                zm[i] * (beta * wi - total * wi.powf(p))
            });
            let res = dt_term + grad_term + react;
            if res > best.max_residual {
                best.max_residual = res;
                best.s = traj.s[k];
            }
        }
        weak.push(best);
    }

    let scale = traj
        .fields
        .iter()
        .map(|w| {
            st.dirichlet_energy(w, |_, _| 1.0)
                + beta * par::sum_indexed(grid.num_nodes(), |i| st.mass()[i] * w.norm_at(i).powi(2))
                + par::sum_indexed(grid.num_nodes(), |i| st.mass()[i] * params.potential(w.node(i)))
        })
        .fold(0.0, f64::max);
    let h = grid.spacing();
    let tolerance = tol_scale * 10.0 * (h * h + traj.ds * traj.ds) * scale.max(1.0);
    let weak_max = weak.iter().map(|b| b.max_residual).fold(f64::NEG_INFINITY, f64::max);
    let pointwise_passed = point_best.is_none_or(|b| b.0 <= tolerance);
    let weak_passed = weak_max <= tolerance;
    Ok(SubsolutionReport {
        delta,
        masked_nodes,
        mask_empty: masked_nodes == 0,
        pointwise_max: point_best.map(|b| b.0),
        pointwise_witness_s: point_best.map(|b| b.1),
        pointwise_witness_y: point_best.map(|b| grid.point(b.2)[..dim].to_vec()),
        weak,
        weak_max,
        tolerance,
        pointwise_passed,
        weak_passed,
        passed: pointwise_passed && weak_passed,
    })
}
