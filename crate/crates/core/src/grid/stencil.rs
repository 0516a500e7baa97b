use serde::{Deserialize, Serialize};

use super::{gaussian_weight, Field, Grid};
use crate::par;

/// Closure at the truncation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Boundary nodes are held fixed (zero after projection).
    Dirichlet,
    /// Zero flux through the boundary (mirror ghost nodes).
    Neumann,
}

/// Weight of the diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `Delta u`.
    Uniform,
    /// `rho^{-1} div(rho grad u) = Delta u - y/2 . grad u`.
    Gaussian,
}

/// Conservative second-order stencil for `rho^{-1} div(rho grad u)`.
///
/// For node `i` the operator is
/// `(1 / (w_i rho_i)) * sum_e omega_e rho_e (u_j - u_i) / h^2`, the sum
/// running over edges `e = (i, j)`; `w_i` and `omega_e` are trapezoidal
/// node and edge weights and `rho_e` is evaluated at the edge midpoint.
/// It is the negative gradient, in the `w rho` inner product, of
/// `1/2 sum_e omega_e rho_e |(u_j - u_i)/h|^2`.
#[derive(Debug, Clone)]
pub struct DiffusionStencil {
    grid: Grid,
    boundary: Boundary,
    weighting: Weighting,
    /// `omega_e rho_e / h^2` for the edge leaving each node along each axis.
    edges: [Vec<f64>; 2],
    /// `w_i rho_i`.
    mass: Vec<f64>,
}

impl DiffusionStencil {
    pub fn new(grid: Grid, weighting: Weighting, boundary: Boundary) -> Self {
        let h2 = grid.spacing() * grid.spacing();
        let dim = grid.space_dim();
        let rho = |p: &[f64]| match weighting {
            Weighting::Uniform => 1.0,
            Weighting::Gaussian => gaussian_weight(p),
        };
        let mut edges = [Vec::new(), Vec::new()];
        for (axis, e) in edges.iter_mut().enumerate().take(dim) {
            *e = par::map_indexed(grid.num_nodes(), |i| {
                if !grid.has_forward(i, axis) {
                    return 0.0;
                }
                let m = grid.edge_midpoint(i, axis);
                grid.edge_weight(i, axis) * rho(&m[..dim]) / h2
            });
        }
        let mass = par::map_indexed(grid.num_nodes(), |i| {
            let p = grid.point(i);
            grid.node_weight(i) * rho(&p[..dim])
        });
        Self { grid, boundary, weighting, edges, mass }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Node weights `w_i rho_i`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Edge weights `omega_e rho_e / h^2` along `axis`, indexed by lower node.
    pub fn edge_weights(&self, axis: usize) -> &[f64] {
        &self.edges[axis]
    }

    /// Whether the node evolves (Dirichlet boundary nodes are frozen).
    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        !(self.boundary == Boundary::Dirichlet && self.grid.on_boundary(idx))
    }

    /// Operator value at node `idx`, component `c`, ignoring the boundary closure.
    #[inline]
    pub fn apply_node(&self, u: &Field, idx: usize, c: usize) -> f64 {
        let m = u.components();
        let vals = u.values();
        let ui = vals[idx * m + c];
        let mut acc = 0.0;
        for axis in 0..self.grid.space_dim() {
            let s = self.grid.stride(axis);
            let e = &self.edges[axis];
            if self.grid.has_forward(idx, axis) {
                acc += e[idx] * (vals[(idx + s) * m + c] - ui);
            }
            if self.grid.has_backward(idx, axis) {
                acc += e[idx - s] * (vals[(idx - s) * m + c] - ui);
            }
        }
        acc / self.mass[idx]
    }

    /// Applies the operator to every component; inactive nodes get zero.
    pub fn apply(&self, u: &Field) -> Field {
        let mut out = Field::zeros(self.grid, u.components());
        par::for_each_chunk_mut(out.values_mut(), u.components(), |i, node| {
            if self.is_active(i) {
                for (c, o) in node.iter_mut().enumerate() {
                    *o = self.apply_node(u, i, c);
                }
            }
        });
        out
    }

    /// `sum_e mult(e) omega_e rho_e |u_j - u_i|^2 / h^2` over all edges and
    /// components, i.e. `int mult |grad u|^2 rho`.
    pub fn dirichlet_energy<F>(&self, u: &Field, mult: F) -> f64
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let m = u.components();
        let vals = u.values();
        par::sum_indexed(self.grid.num_nodes(), |i| {
            let mut acc = 0.0;
            for axis in 0..self.grid.space_dim() {
                let w = self.edges[axis][i];
                if w == 0.0 {
                    continue;
                }
                let k = mult(i, axis);
                if k == 0.0 {
                    continue;
                }
                let j = i + self.grid.stride(axis);
                let mut d2 = 0.0;
                for c in 0..m {
                    let d = vals[j * m + c] - vals[i * m + c];
                    d2 += d * d;
                }
                acc += k * w * d2;
            }
            acc
        })
    }

    /// Gershgorin bound on the spectral radius of the operator.
    pub fn spectral_bound(&self) -> f64 {
        (0..self.grid.num_nodes())
            .filter(|&i| self.is_active(i))
            .map(|i| {
                let mut acc = 0.0;
                for axis in 0..self.grid.space_dim() {
                    let s = self.grid.stride(axis);
                    if self.grid.has_forward(i, axis) {
                        acc += self.edges[axis][i];
                    }
                    if self.grid.has_backward(i, axis) {
                        acc += self.edges[axis][i - s];
                    }
                }
                2.0 * acc / self.mass[i]
            })
            .fold(0.0, f64::max)
    }
}

/// Second derivative along `axis` at `idx`: central in the interior,
/// one-sided second order at the ends.
fn second_diff(f: &Field, idx: usize, axis: usize, c: usize) -> f64 {
    let g = f.grid();
    let h2 = g.spacing() * g.spacing();
    let s = g.stride(axis);
    let k = g.split(idx)[axis];
    let n = g.points_per_axis();
    let v = |i: usize| f.get(i, c);
    if k == 0 {
        (2.0 * v(idx) - 5.0 * v(idx + s) + 4.0 * v(idx + 2 * s) - v(idx + 3 * s)) / h2
    } else if k + 1 == n {
        (2.0 * v(idx) - 5.0 * v(idx - s) + 4.0 * v(idx - 2 * s) - v(idx - 3 * s)) / h2
    } else {
        (v(idx + s) - 2.0 * v(idx) + v(idx - s)) / h2
    }
}

fn first_diff(f: &Field, idx: usize, axis: usize, c: usize) -> f64 {
    let g = f.grid();
    let h = g.spacing();
    let s = g.stride(axis);
    let k = g.split(idx)[axis];
    let n = g.points_per_axis();
    let v = |i: usize| f.get(i, c);
    if k == 0 {
        (-3.0 * v(idx) + 4.0 * v(idx + s) - v(idx + 2 * s)) / (2.0 * h)
    } else if k + 1 == n {
        (3.0 * v(idx) - 4.0 * v(idx - s) + v(idx - 2 * s)) / (2.0 * h)
    } else {
        (v(idx + s) - v(idx - s)) / (2.0 * h)
    }
}

/// Second-order Laplacian of every component.
pub fn laplacian(f: &Field) -> Field {
    let g = *f.grid();
    let mut out = Field::zeros(g, f.components());
    par::for_each_chunk_mut(out.values_mut(), f.components(), |i, node| {
        for (c, o) in node.iter_mut().enumerate() {
            *o = (0..g.space_dim()).map(|a| second_diff(f, i, a, c)).sum();
        }
    });
    out
}

/// Second-order gradient: one field per axis, each with the components of `f`.
pub fn gradient(f: &Field) -> Vec<Field> {
    let g = *f.grid();
    (0..g.space_dim())
        .map(|axis| {
            let mut out = Field::zeros(g, f.components());
            par::for_each_chunk_mut(out.values_mut(), f.components(), |i, node| {
                for (c, o) in node.iter_mut().enumerate() {
                    *o = first_diff(f, i, axis, c);
                }
            });
            out
        })
        .collect()
}

/// Non-divergence form `Delta f - y/2 . grad f` with central differences.
pub fn drift_laplacian(f: &Field) -> Field {
    let g = *f.grid();
    let mut out = laplacian(f);
    let grads = gradient(f);
    let m = f.components();
    par::for_each_chunk_mut(out.values_mut(), m, |i, node| {
        let p = g.point(i);
        for (c, o) in node.iter_mut().enumerate() {
            for (axis, ga) in grads.iter().enumerate() {
                *o -= 0.5 * p[axis] * ga.get(i, c);
            }
        }
    });
    out
}

/// Divergence form `rho^{-1} div(rho grad f)` with the conservative stencil
/// and zero-flux closure.
pub fn weighted_divergence(f: &Field) -> Field {
    DiffusionStencil::new(*f.grid(), Weighting::Gaussian, Boundary::Neumann).apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_annihilated() {
        let g = Grid::new(2, 2.0, 17).unwrap();
        let f = Field::from_fn(g, 2, |_, o| o.copy_from_slice(&[3.0, -1.0]));
        assert!(laplacian(&f).values().iter().all(|v| v.abs() < 1e-12));
        assert!(gradient(&f).iter().all(|gf| gf.values().iter().all(|v| v.abs() < 1e-12)));
        let st = DiffusionStencil::new(g, Weighting::Gaussian, Boundary::Neumann);
        assert!(st.apply(&f).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_laplacian_is_exact() {
        let g = Grid::new(1, 3.0, 33).unwrap();
        let f = Field::from_fn(g, 1, |p, o| o[0] = p[0] * p[0]);
        for v in laplacian(&f).values() {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_laplacian_error_bound() {
        let g = Grid::new(1, 3.0, 65).unwrap();
        let h = g.spacing();
        let f = Field::from_fn(g, 1, |p, o| o[0] = p[0].sin());
        let lap = laplacian(&f);
        for i in 1..g.num_nodes() - 1 {
            let exact = -g.point(i)[0].sin();
            assert!((lap.get(i, 0) - exact).abs() <= h * h / 12.0 + 1e-12);
        }
    }

    #[test]
    fn divergence_form_agrees_with_drift_form() {
        let mut errs = vec![];
        for n in [41, 81, 161] {
            let g = Grid::new(1, 6.0, n).unwrap();
            let f = Field::from_fn(g, 1, |p, o| o[0] = (0.7 * p[0]).sin() + 0.2 * p[0] * p[0]);
            let a = weighted_divergence(&f);
            let b = drift_laplacian(&f);
            let e = (1..n - 1).map(|i| (a.get(i, 0) - b.get(i, 0)).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn divergence_form_agrees_in_2d() {
        let mut errs = vec![];
        for n in [21, 41, 81] {
            let g = Grid::new(2, 3.0, n).unwrap();
            let f = Field::from_fn(g, 1, |p, o| o[0] = (p[0] - 0.5 * p[1]).cos());
            let a = weighted_divergence(&f);
            let b = drift_laplacian(&f);
            let e = (0..g.num_nodes())
                .filter(|&i| !g.on_boundary(i))
                .map(|i| (a.get(i, 0) - b.get(i, 0)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn stencil_is_variational_derivative() {
        // d/du_i of the Dirichlet energy equals -2 * mass_i * (operator u)_i
        let g = Grid::new(2, 2.0, 17).unwrap();
        let st = DiffusionStencil::new(g, Weighting::Gaussian, Boundary::Neumann);
        let f = Field::from_fn(g, 1, |p, o| o[0] = (p[0] * 1.3).sin() * (p[1] + 0.2).cos());
        let op = st.apply(&f);
        for idx in [0, 5, 40, 144, 200] {
            let eps = 1e-6;
            let mut fp = f.clone();
            fp.values_mut()[idx] += eps;
            let mut fm = f.clone();
            fm.values_mut()[idx] -= eps;
            let d = (st.dirichlet_energy(&fp, |_, _| 1.0) - st.dirichlet_energy(&fm, |_, _| 1.0)) / (2.0 * eps);
            let expect = -2.0 * st.mass()[idx] * op.get(idx, 0);
            assert!((d - expect).abs() < 1e-6 * (1.0 + expect.abs()), "{idx}: {d} vs {expect}");
        }
    }
}
