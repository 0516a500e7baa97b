//! Similarity variables `y = (x - a)/sqrt(T - t)`, `s = -log(T - t)`,
//! `W = (T - t)^(1/(p-1)) U` and the rescaled flow
//! `W_s = Delta W - y/2 . grad W - W/(p-1) + F(W)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, DiffusionStencil, Field, Grid, Point, Weighting};
use crate::nonlinearity::SystemParams;
use crate::par;
use crate::physical::rk4;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarFrame {
    pub center: Point,
    pub blowup_time: f64,
    pub s: f64,
    pub w: Field,
}

fn check_times(t: f64, blowup_time: f64) -> Result<f64> {
    if !(blowup_time.is_finite() && blowup_time > 0.0 && t >= 0.0 && t < blowup_time) {
        return Err(Error::Domain(format!("need 0 <= t < T, got t = {t}, T = {blowup_time}")));
    }
    Ok(blowup_time - t)
}

/// Samples `W(y) = (T-t)^(1/(p-1)) U(a + sqrt(T-t) y)` on `y_grid`.
pub fn to_selfsimilar(
    u: &Field,
    t: f64,
    center: &[f64],
    blowup_time: f64,
    params: &SystemParams,
    y_grid: &Grid,
) -> Result<SelfSimilarFrame> {
    let tau = check_times(t, blowup_time)?;
    let dim = y_grid.space_dim();
    if u.grid().space_dim() != dim || center.len() != dim {
        return Err(Error::InvalidParams("dimension mismatch between field, centre and y-grid".into()));
    }
    let root = tau.sqrt();
    let amp = tau.powf(params.beta_exp());
    let mut w = Field::zeros(*y_grid, u.components());
    for i in 0..y_grid.num_nodes() {
        let y = y_grid.point(i);
        let mut x = [0.0; 2];
        for d in 0..dim {
            x[d] = center[d] + root * y[d];
        }
        u.sample(&x[..dim], w.node_mut(i))?;
        w.node_mut(i).iter_mut().for_each(|v| *v *= amp);
    }
    let mut c = [0.0; 2];
    c[..dim].copy_from_slice(center);
    Ok(SelfSimilarFrame { center: c, blowup_time, s: -tau.ln(), w })
}

/// Inverse map: `U(x) = (T-t)^(-1/(p-1)) W((x - a)/sqrt(T-t))` on `x_grid`,
/// with `t = T - e^(-s)`.
pub fn from_selfsimilar(frame: &SelfSimilarFrame, params: &SystemParams, x_grid: &Grid) -> Result<(Field, f64)> {
    let tau = (-frame.s).exp();
    let t = frame.blowup_time - tau;
    let dim = x_grid.space_dim();
    let root = tau.sqrt();
    let amp = tau.powf(-params.beta_exp());
    let mut u = Field::zeros(*x_grid, frame.w.components());
    for i in 0..x_grid.num_nodes() {
        let x = x_grid.point(i);
        let mut y = [0.0; 2];
        for d in 0..dim {
            y[d] = (x[d] - frame.center[d]) / root;
        }
        frame.w.sample(&y[..dim], u.node_mut(i))?;
        u.node_mut(i).iter_mut().for_each(|v| *v *= amp);
    }
    Ok((u, t))
}

/// Constant solution with equal components, `kappa^(p-1) sum_j beta_1j = 1/(p-1)`.
pub fn kappa_constant(params: &SystemParams) -> Result<Vec<f64>> {
    let b = params.coupling();
    let m = b.size();
    let s0 = b.row_sum(0);
    for i in 1..m {
        if (b.row_sum(i) - s0).abs() > 1e-14 * s0 {
            return Err(Error::Unsupported("equal-component constant state needs equal coupling row sums".into()));
        }
    }
    let k = (params.beta_exp() / s0).powf(1.0 / (params.p() - 1.0));
    Ok(vec![k; m])
}

/// Explicit solver for the rescaled system on a fixed `y`-grid.
///
/// The linear part is the conservative form `rho^{-1} div(rho grad W)`,
/// which makes the discrete energy an exact Lyapunov functional of the
/// semi-discrete flow.
#[derive(Debug, Clone)]
pub struct RescaledSolver {
    params: SystemParams,
    stencil: DiffusionStencil,
}

impl RescaledSolver {
    pub fn new(params: SystemParams, grid: Grid, boundary: Boundary) -> Result<Self> {
        if params.space_dim() != grid.space_dim() {
            return Err(Error::InvalidParams(format!(
                "system dimension {} does not match grid dimension {}",
                params.space_dim(),
                grid.space_dim()
            )));
        }
        Ok(Self { params, stencil: DiffusionStencil::new(grid, Weighting::Gaussian, boundary) })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        self.stencil.grid()
    }

    pub fn stencil(&self) -> &DiffusionStencil {
        &self.stencil
    }

    pub fn boundary(&self) -> Boundary {
        self.stencil.boundary()
    }

    /// Step size within the RK4 stability interval of the linear part.
    pub fn stable_ds(&self, safety: f64) -> f64 {
        safety * 2.5 / (self.stencil.spectral_bound() + self.params.beta_exp())
    }

    /// `W_s`; zero at frozen boundary nodes under the Dirichlet closure.
    pub fn rhs(&self, w: &Field) -> Field {
        let m = w.components();
        let beta = self.params.beta_exp();
        let mut out = Field::zeros(*self.grid(), m);
        par::for_each_chunk_mut(out.values_mut(), m, |i, node| {
            if !self.stencil.is_active(i) {
                return;
            }
            self.params.gradient_into(w.node(i), node);
            for (c, o) in node.iter_mut().enumerate() {
                *o += self.stencil.apply_node(w, i, c) - beta * w.get(i, c);
            }
        });
        out
    }

    pub fn step(&self, frame: &SelfSimilarFrame, ds: f64) -> Result<SelfSimilarFrame> {
        let w = rk4(&frame.w, ds, |x| self.rhs(x));
        if !w.is_finite() {
            return Err(Error::Overflow { t: frame.s + ds, detail: "rescaled solution became non-finite".into() });
        }
        Ok(SelfSimilarFrame { w, s: frame.s + ds, ..frame.clone() })
    }

    /// Runs `steps` steps of size `ds` from `w0` at `s0`, keeping every
    /// `record_every`-th frame (the first and last are always kept when
    /// `steps` is a multiple of `record_every`).
    pub fn evolve(&self, w0: &Field, s0: f64, ds: f64, steps: usize, record_every: usize) -> Result<RescaledTrajectory> {
        if !(ds.is_finite() && ds > 0.0) || record_every == 0 {
            return Err(Error::InvalidParams("ds must be positive and record_every at least 1".into()));
        }
        if w0.grid() != self.grid() || w0.components() != self.params.components() {
            return Err(Error::InvalidParams("initial field does not match solver grid or components".into()));
        }
        let mut w = w0.clone();
        if self.boundary() == Boundary::Dirichlet {
            w.zero_boundary();
        }
        let mut frame = SelfSimilarFrame { center: [0.0; 2], blowup_time: 1.0, s: s0, w };
        let mut traj = RescaledTrajectory {
            boundary: self.boundary(),
            ds: ds * record_every as f64,
            s: vec![s0],
            fields: vec![frame.w.clone()],
        };
        for k in 1..=steps {
            frame = self.step(&frame, ds)?;
            frame.s = s0 + k as f64 * ds;
            if k % record_every == 0 {
                traj.s.push(frame.s);
                traj.fields.push(frame.w.clone());
            }
        }
        Ok(traj)
    }
}

/// Uniformly sampled rescaled trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct RescaledTrajectory {
    #[serde(skip)]
    pub boundary: Boundary,
    /// Spacing between stored frames.
    pub ds: f64,
    pub s: Vec<f64>,
    #[serde(skip)]
    pub fields: Vec<Field>,
}

impl RescaledTrajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    /// Checks that frames are uniformly spaced in `s`.
    pub fn check_uniform(&self) -> Result<()> {
        for k in 1..self.s.len() {
            let d = self.s[k] - self.s[k - 1];
            if (d - self.ds).abs() > 1e-9 * self.ds.max(1e-300) {
                return Err(Error::Resampling(format!("spacing {d} at frame {k} differs from {}", self.ds)));
            }
        }
        Ok(())
    }

    /// Constant trajectory `W(s) = w` over `frames` samples.
    pub fn constant(w: Field, boundary: Boundary, ds: f64, frames: usize) -> Self {
        Self {
            boundary,
            ds,
            s: (0..frames).map(|k| k as f64 * ds).collect(),
            fields: vec![w; frames],
        }
    }
}

/// `Delta W - y/2 . grad W - W/(p-1) + F(W)` on `w`'s grid.
pub fn rhs_rescaled(w: &Field, params: &SystemParams, boundary: Boundary) -> Result<Field> {
    Ok(RescaledSolver::new(params.clone(), *w.grid(), boundary)?.rhs(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::drift_laplacian;
    use crate::nonlinearity::CouplingMatrix;
    use crate::physical::{PhysicalSolver, PhysicalState};

    fn params(m: usize, r: f64, identity: bool) -> SystemParams {
        let c = if identity { CouplingMatrix::identity(m) } else { CouplingMatrix::ones(m) };
        SystemParams::new(1, r, c).unwrap()
    }

    fn constant(grid: Grid, vals: &[f64]) -> Field {
        Field::from_fn(grid, vals.len(), |_, o| o.copy_from_slice(vals))
    }

    #[test]
    fn kappa_values() {
        assert!((kappa_constant(&params(1, 1.0, false)).unwrap()[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(kappa_constant(&params(2, 1.0, false)).unwrap(), vec![0.5, 0.5]);
        assert!((kappa_constant(&params(1, 0.5, false)).unwrap()[0] - 1.0).abs() < 1e-15);
        let lopsided = SystemParams::new(1, 1.0, CouplingMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap()).unwrap();
        assert!(matches!(kappa_constant(&lopsided), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kappa_is_a_fixed_point() {
        let g = Grid::new(1, 10.0, 101).unwrap();
        for prm in [params(1, 1.0, false), params(2, 1.0, false), params(2, 0.5, true)] {
            let k = kappa_constant(&prm).unwrap();
            for b in [Boundary::Dirichlet, Boundary::Neumann] {
                let rhs = rhs_rescaled(&constant(g, &k), &prm, b).unwrap();
                for i in 1..100 {
                    assert!(rhs.node(i).iter().all(|v| v.abs() <= 1e-10));
                }
            }
        }
    }

    #[test]
    fn stationary_state_is_preserved() {
        let g = Grid::new(1, 10.0, 101).unwrap();
        let prm = params(1, 1.0, false);
        let k = kappa_constant(&prm).unwrap();
        let solver = RescaledSolver::new(prm, g, Boundary::Neumann).unwrap();
        let traj = solver.evolve(&constant(g, &k), 0.0, solver.stable_ds(0.5), 50, 10).unwrap();
        for f in &traj.fields {
            assert!(f.values().iter().all(|v| (v - k[0]).abs() < 1e-13));
        }
        let zero = solver.evolve(&Field::zeros(g, 1), 0.0, 1e-3, 5, 1).unwrap();
        assert!(zero.fields.iter().all(|f| f.sup_norm() == 0.0));
    }

    #[test]
    fn linear_part_matches_drift_form() {
        let mut errs = vec![];
        for n in [81, 161] {
            let g = Grid::new(1, 8.0, n).unwrap();
            let prm = params(1, 1.0, false);
            let w = Field::from_fn(g, 1, |p, o| o[0] = 0.3 * (0.8 * p[0]).cos());
            let rhs = rhs_rescaled(&w, &prm, Boundary::Neumann).unwrap();
            let lin = drift_laplacian(&w);
            let e = (1..n - 1)
                .map(|i| {
                    let x = w.get(i, 0);
                    (rhs.get(i, 0) + 0.5 * x - x.powi(3) - lin.get(i, 0)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn transforms_of_constants() {
        let prm = params(1, 1.0, false);
        let x = Grid::new(1, 8.0, 161).unwrap();
        let y = Grid::new(1, 4.0, 81).unwrap();
        let f = to_selfsimilar(&constant(x, &[0.7]), 3.0, &[0.0], 4.0, &prm, &y).unwrap();
        assert_eq!(f.s, 0.0);
        assert!(f.w.values().iter().all(|v| (v - 0.7).abs() < 1e-15));

        // exact ODE solution maps to the constant profile 2^(-1/2)
        for t in [0.0, 0.3, 0.49] {
            let u = constant(x, &[(2.0f64 * (0.5 - t)).powf(-0.5)]);
            let f = to_selfsimilar(&u, t, &[1.5], 0.5, &prm, &y).unwrap();
            assert!(f.w.values().iter().all(|v| (v - 0.5f64.sqrt()).abs() < 1e-12));
        }

        let frame = SelfSimilarFrame { center: [0.0; 2], blowup_time: 1.0, s: 4f64.ln(), w: constant(y, &[1.0]) };
        let (u, t) = from_selfsimilar(&frame, &prm, &Grid::new(1, 1.0, 17).unwrap()).unwrap();
        assert!((t - 0.75).abs() < 1e-15);
        assert!(u.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(matches!(from_selfsimilar(&frame, &prm, &x), Err(Error::Truncation(_))));
    }

    #[test]
    fn round_trip_and_center_covariance() {
        let prm = params(1, 1.0, false);
        let mut errs = vec![];
        for n in [161, 321] {
            let x = Grid::new(1, 8.0, n).unwrap();
            let y = Grid::new(1, 6.0, n).unwrap();
            let u = Field::from_fn(x, 1, |p, o| o[0] = (-(p[0] - 0.5).powi(2)).exp());
            let f = to_selfsimilar(&u, 0.0, &[0.5], 1.0, &prm, &y).unwrap();
            let (back, _) = from_selfsimilar(&f, &prm, &Grid::new(1, 4.0, (n - 1) / 2 + 1).unwrap()).unwrap();
            let e = (0..back.grid().num_nodes())
                .map(|i| (back.get(i, 0) - (-(back.grid().point(i)[0] - 0.5).powi(2)).exp()).abs())
                .fold(0.0, f64::max);
            errs.push(e);

            let centred = Field::from_fn(x, 1, |p, o| o[0] = (-p[0] * p[0]).exp());
            let g = to_selfsimilar(&centred, 0.0, &[0.0], 1.0, &prm, &y).unwrap();
            let diff = f.w.values().iter().zip(g.w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-3, "{diff}");
        }
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn solvers_agree_through_the_transform() {
        // U_t = U_xx + U^3 with T = 1, compared at s = 1 on |y| <= 2
        let prm = params(1, 1.0, false);
        let mut errs = vec![];
        for n in [161, 321] {
            let x = Grid::new(1, 12.0, 2 * n - 1).unwrap();
            let y = Grid::new(1, 8.0, n).unwrap();
            let u0 = Field::from_fn(x, 1, |p, o| o[0] = 0.4 * (-p[0] * p[0] / 4.0).exp());
            let phys = PhysicalSolver::new(prm.clone(), x, Boundary::Dirichlet).unwrap();
            let t_end = 1.0 - (-1.0f64).exp();
            let dt = phys.stable_dt(0.5);
            let steps = (t_end / dt).ceil() as usize;
            let dt = t_end / steps as f64;
            let mut st = PhysicalState { t: 0.0, u: u0.clone() };
            for _ in 0..steps {
                st = phys.step(&st, dt).unwrap();
            }
            let target = to_selfsimilar(&st.u, t_end, &[0.0], 1.0, &prm, &y).unwrap();

            let resc = RescaledSolver::new(prm.clone(), y, Boundary::Neumann).unwrap();
            let f0 = to_selfsimilar(&u0, 0.0, &[0.0], 1.0, &prm, &y).unwrap();
            let ds0 = resc.stable_ds(0.5);
            let k = (1.0 / ds0).ceil() as usize;
            let traj = resc.evolve(&f0.w, 0.0, 1.0 / k as f64, k, k).unwrap();
            let w = traj.fields.last().unwrap();
            let e = (0..n)
                .filter(|&i| y.point(i)[0].abs() <= 2.0)
                .map(|i| (w.get(i, 0) - target.w.get(i, 0)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[1] < 1e-3 && errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn two_dimensional_fixed_point() {
        let g = Grid::new(2, 6.0, 31).unwrap();
        let prm = SystemParams::new(2, 1.0, CouplingMatrix::ones(2)).unwrap();
        let k = kappa_constant(&prm).unwrap();
        let rhs = rhs_rescaled(&constant(g, &k), &prm, Boundary::Neumann).unwrap();
        assert!(rhs.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniformity_check() {
        let g = Grid::new(1, 2.0, 17).unwrap();
        let mut t = RescaledTrajectory::constant(Field::zeros(g, 1), Boundary::Dirichlet, 0.1, 4);
        assert!(t.check_uniform().is_ok());
        t.s[2] += 0.01;
        assert!(matches!(t.check_uniform(), Err(Error::Resampling(_))));
    }
}
