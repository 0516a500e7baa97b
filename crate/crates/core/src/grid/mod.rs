//! Truncated uniform grids, the Gaussian weight `rho(y) = exp(-|y|^2/4)`,
//! weighted quadrature and norms, discrete differential operators and
//! smooth cutoff profiles.
//!
//! A [`Grid`] covers `[-L, L]^N` (`N` in `{1, 2}`) with `n` nodes per axis,
//! `n` odd so that the origin is a node. Integrals use the composite
//! trapezoidal rule: node weights are products of one-dimensional weights
//! `h` (interior) and `h/2` (end points). Gradient energies live on edges:
//! the edge between a node and its `+e_d` neighbour carries the difference
//! quotient, weighted by `h` times the trapezoidal weights of the remaining
//! axes and by `rho` at the edge midpoint. With these weights the
//! `rho`-weighted diffusion operator of [`DiffusionStencil`] is exactly the
//! negative variational derivative of the discrete Dirichlet energy.

mod cutoff;
mod field;
mod stencil;

pub use cutoff::CutoffProfile;
pub use field::Field;
pub use stencil::{drift_laplacian, gradient, laplacian, weighted_divergence, Boundary, DiffusionStencil, Weighting};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// A point of `R^N`, stored with unused trailing coordinates set to zero.
pub type Point = [f64; 2];

/// `rho(y) = exp(-|y|^2 / 4)`.
#[inline]
pub fn gaussian_weight(y: &[f64]) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    (-0.25 * r2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    space_dim: usize,
    half_extent: f64,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(space_dim: usize, half_extent: f64, points_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&space_dim) {
            return Err(Error::Unsupported(format!("grids support N in {{1, 2}}, got {space_dim}")));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::InvalidParams(format!("half extent must be positive, got {half_extent}")));
        }
        if points_per_axis < 17 || points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "points per axis must be odd and at least 17, got {points_per_axis}"
            )));
        }
        Ok(Self { space_dim, half_extent, points_per_axis })
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// `h = 2L / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.points_per_axis - 1) as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.points_per_axis.pow(self.space_dim as u32)
    }

    /// Coordinate of the `k`-th node along an axis; exact at `-L`, `0`, `L`.
    #[inline]
    pub fn axis_coord(&self, k: usize) -> f64 {
        let last = (self.points_per_axis - 1) as f64;
        self.half_extent * ((2 * k) as f64 - last) / last
    }

    #[inline]
    pub fn axis_weight(&self, k: usize) -> f64 {
        let h = self.spacing();
        if k == 0 || k + 1 == self.points_per_axis {
            0.5 * h
        } else {
            h
        }
    }

    #[inline]
    pub fn split(&self, idx: usize) -> [usize; 2] {
        if self.space_dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points_per_axis, idx % self.points_per_axis]
        }
    }

    #[inline]
    pub fn join(&self, ij: [usize; 2]) -> usize {
        if self.space_dim == 1 {
            ij[0]
        } else {
            ij[0] * self.points_per_axis + ij[1]
        }
    }

    /// Index stride of a unit step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        if self.space_dim == 2 && axis == 0 {
            self.points_per_axis
        } else {
            1
        }
    }

    pub fn origin_index(&self) -> usize {
        let c = (self.points_per_axis - 1) / 2;
        self.join([c, c])
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let ij = self.split(idx);
        let mut p = [0.0; 2];
        for d in 0..self.space_dim {
            p[d] = self.axis_coord(ij[d]);
        }
        p
    }

    #[inline]
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    #[inline]
    pub fn node_weight(&self, idx: usize) -> f64 {
        let ij = self.split(idx);
        (0..self.space_dim).map(|d| self.axis_weight(ij[d])).product()
    }

    #[inline]
    pub fn on_boundary(&self, idx: usize) -> bool {
        let ij = self.split(idx);
        (0..self.space_dim).any(|d| ij[d] == 0 || ij[d] + 1 == self.points_per_axis)
    }

    /// Whether the node has a neighbour in direction `+e_axis`.
    #[inline]
    pub fn has_forward(&self, idx: usize, axis: usize) -> bool {
        self.split(idx)[axis] + 1 < self.points_per_axis
    }

    #[inline]
    pub fn has_backward(&self, idx: usize, axis: usize) -> bool {
        self.split(idx)[axis] > 0
    }

    /// Midpoint of the edge from `idx` to its `+e_axis` neighbour.
    #[inline]
    pub fn edge_midpoint(&self, idx: usize, axis: usize) -> Point {
        let mut p = self.point(idx);
        p[axis] += 0.5 * self.spacing();
        p
    }

    /// Trapezoidal weight of the edge from `idx` along `axis`: `h` times the
    /// node weights of the other axes.
    #[inline]
    pub fn edge_weight(&self, idx: usize, axis: usize) -> f64 {
        let ij = self.split(idx);
        let mut w = self.spacing();
        for d in 0..self.space_dim {
            if d != axis {
                w *= self.axis_weight(ij[d]);
            }
        }
        w
    }

    /// Trapezoidal node weights times `rho` at each node.
    pub fn rho_weights(&self) -> Vec<f64> {
        par::map_indexed(self.num_nodes(), |i| {
            let p = self.point(i);
            self.node_weight(i) * gaussian_weight(&p[..self.space_dim])
        })
    }

    fn check_ball(&self, radius: f64) -> Result<()> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
        }
        if radius > self.half_extent * (1.0 + 1e-12) {
            return Err(Error::Truncation(format!(
                "ball of radius {radius} exceeds grid half extent {}",
                self.half_extent
            )));
        }
        Ok(())
    }

    /// Quadrature weights restricted to the centred ball `B_R`.
    ///
    /// In one dimension the weight of node `k` is the integral of its hat
    /// function over `[-R, R]`, i.e. the trapezoidal rule of the clipped
    /// interval (second order for any `R`). In two dimensions nodes whose
    /// centres lie in the closed ball keep their full trapezoidal weight.
    pub fn ball_weights(&self, radius: f64) -> Result<Vec<f64>> {
        self.check_ball(radius)?;
        let h = self.spacing();
        Ok(par::map_indexed(self.num_nodes(), |i| {
            if self.space_dim == 1 {
                let y = self.axis_coord(i);
                let mut w = 0.0;
                // left half-hat on [y - h, y], right half-hat on [y, y + h]
                if i > 0 {
                    w += hat_integral(y - h, y, -radius, radius, h, false);
                }
                if i + 1 < self.points_per_axis {
                    w += hat_integral(y, y + h, -radius, radius, h, true);
                }
                w
            } else if self.radius(i) <= radius * (1.0 + 1e-12) {
                self.node_weight(i)
            } else {
                0.0
            }
        }))
    }

    /// Fraction of the edge from `idx` along `axis` that counts as inside
    /// `B_R`: the clipped length in one dimension, midpoint inclusion in two.
    pub fn ball_edge_fraction(&self, idx: usize, axis: usize, radius: f64) -> f64 {
        let m = self.edge_midpoint(idx, axis);
        if self.space_dim == 1 {
            let h = self.spacing();
            let a = (m[0] - 0.5 * h).max(-radius);
            let b = (m[0] + 0.5 * h).min(radius);
            ((b - a) / h).clamp(0.0, 1.0)
        } else if (m[0] * m[0] + m[1] * m[1]).sqrt() <= radius * (1.0 + 1e-12) {
            1.0
        } else {
            0.0
        }
    }

    /// Multilinear interpolation weights for `point`; `None` outside the grid.
    pub fn locate(&self, point: &[f64]) -> Option<Vec<(usize, f64)>> {
        let h = self.spacing();
        let tol = 1e-12 * self.half_extent;
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for d in 0..self.space_dim {
            let x = point[d];
            if !(x.is_finite()) || x < -self.half_extent - tol || x > self.half_extent + tol {
                return None;
            }
            let s = ((x + self.half_extent) / h).clamp(0.0, (self.points_per_axis - 1) as f64);
            let k = (s.floor() as usize).min(self.points_per_axis - 2);
            base[d] = k;
            frac[d] = s - k as f64;
        }
        let mut out = Vec::with_capacity(1 << self.space_dim);
        if self.space_dim == 1 {
            out.push((base[0], 1.0 - frac[0]));
            out.push((base[0] + 1, frac[0]));
        } else {
            for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
                for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                    out.push((self.join([base[0] + di, base[1] + dj]), wi * wj));
                }
            }
        }
        Some(out)
    }
}

/// Integral over `[lo, hi] ∩ [a, b]` of the half-hat that equals 1 at the
/// node and 0 one spacing away; the node sits at `lo` when `node_at_lo`.
fn hat_integral(lo: f64, hi: f64, a: f64, b: f64, h: f64, node_at_lo: bool) -> f64 {
    let x0 = lo.max(a);
    let x1 = hi.min(b);
    if x1 <= x0 {
        return 0.0;
    }
    let node = if node_at_lo { lo } else { hi };
    let hat = |x: f64| 1.0 - (x - node).abs() / h;
    0.5 * (hat(x0) + hat(x1)) * (x1 - x0)
}

fn check_field_region(f: &Field, region_radius: Option<f64>) -> Result<Vec<f64>> {
    let grid = f.grid();
    let weights = match region_radius {
        Some(r) => grid.ball_weights(r)?,
        None => (0..grid.num_nodes()).map(|i| grid.node_weight(i)).collect(),
    };
    Ok(weights)
}

/// `(int |f|^q rho dy)^(1/q)` over the grid or over `B_R`; `|f|` is the
/// Euclidean norm across components.
pub fn weighted_lebesgue_norm(f: &Field, q: f64, region_radius: Option<f64>) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("Lebesgue exponent must be >= 1, got {q}")));
    }
    Ok(weighted_power_integral(f, q, region_radius)?.powf(1.0 / q))
}

/// `int |f|^q rho dy` over the grid or over `B_R`.
pub fn weighted_power_integral(f: &Field, q: f64, region_radius: Option<f64>) -> Result<f64> {
    let grid = f.grid();
    let weights = check_field_region(f, region_radius)?;
    let dim = grid.space_dim();
    Ok(par::sum_indexed(grid.num_nodes(), |i| {
        if weights[i] == 0.0 {
            return 0.0;
        }
        let p = grid.point(i);
        let n = f.norm_at(i);
        let v = if q == 2.0 { n * n } else { n.powf(q) };
        weights[i] * gaussian_weight(&p[..dim]) * v
    }))
}

/// `int |grad f|^2 rho dy` with edge difference quotients, over the grid or `B_R`.
pub fn weighted_dirichlet_integral(f: &Field, region_radius: Option<f64>) -> Result<f64> {
    let grid = *f.grid();
    if let Some(r) = region_radius {
        grid.check_ball(r)?;
    }
    let stencil = DiffusionStencil::new(grid, Weighting::Gaussian, Boundary::Neumann);
    Ok(match region_radius {
        None => stencil.dirichlet_energy(f, |_, _| 1.0),
        Some(r) => stencil.dirichlet_energy(f, |i, d| grid.ball_edge_fraction(i, d, r)),
    })
}

/// `(int (|grad f|^2 + beta |f|^2) rho dy)^(1/2)` over the grid or `B_R`.
pub fn weighted_sobolev_norm(f: &Field, beta_exp: f64, region_radius: Option<f64>) -> Result<f64> {
    let grad = weighted_dirichlet_integral(f, region_radius)?;
    let mass = weighted_power_integral(f, 2.0, region_radius)?;
    Ok((grad + beta_exp * mass).sqrt())
}

/// Max over nodes of the per-node Euclidean component norm.
pub fn sup_norm(f: &Field) -> f64 {
    f.sup_norm()
}
