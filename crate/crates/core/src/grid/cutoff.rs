use serde::Serialize;

use super::Point;
use crate::error::{Error, Result};

/// Radial cutoff `phi(x) = profile(|x - c| / R)` with `profile = 1` on
/// `[0, 1]`, `0` on `[2, inf)` and the smooth step
/// `s(u) = e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)})` in between, evaluated at
/// `u = 2 - t`. The step is symmetric about `t = 3/2`, where it equals 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffProfile {
    radius: f64,
    center: Point,
}

/// Logistic form of the smooth step: `s = 1 / (1 + e^{-z})`,
/// `z(u) = 1/(1-u) - 1/u`. Returns `(s, s', s'')`.
fn smooth_step(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let v = 1.0 - u;
    let z = 1.0 / v - 1.0 / u;
    let s = 1.0 / (1.0 + (-z).exp());
    let ds = s * (1.0 - s);
    if ds == 0.0 {
        return (s, 0.0, 0.0);
    }
    let z1 = 1.0 / (v * v) + 1.0 / (u * u);
    let z2 = 2.0 / (v * v * v) - 2.0 / (u * u * u);
    (s, ds * z1, ds * (1.0 - 2.0 * s) * z1 * z1 + ds * z2)
}

impl CutoffProfile {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!("cutoff radius must be positive, got {radius}")));
        }
        Ok(Self { radius, center: [0.0; 2] })
    }

    /// Same profile centred at `center`.
    pub fn translated(mut self, center: &[f64]) -> Self {
        self.center = [0.0; 2];
        self.center[..center.len()].copy_from_slice(center);
        self
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> Point {
        self.center
    }

    /// Radius of the support, `2R` plus the distance of the centre from the origin.
    pub fn reach(&self) -> f64 {
        2.0 * self.radius + (self.center[0].powi(2) + self.center[1].powi(2)).sqrt()
    }

    /// The one-dimensional profile and its first two derivatives at `t >= 0`.
    pub fn profile(t: f64) -> (f64, f64, f64) {
        let (s, ds, d2s) = smooth_step(2.0 - t);
        (s, -ds, d2s)
    }

    fn offset(&self, x: &[f64]) -> (Point, f64) {
        let mut d = [0.0; 2];
        for (k, v) in x.iter().enumerate() {
            d[k] = v - self.center[k];
        }
        (d, (d[0] * d[0] + d[1] * d[1]).sqrt())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (_, r) = self.offset(x);
        Self::profile(r / self.radius).0
    }

    pub fn gradient(&self, x: &[f64]) -> Point {
        let (d, r) = self.offset(x);
        if r == 0.0 {
            return [0.0; 2];
        }
        let (_, dp, _) = Self::profile(r / self.radius);
        let scale = dp / (self.radius * r);
        [scale * d[0], scale * d[1]]
    }

    /// Laplacian in `R^N`, `N = x.len()`.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let (_, r) = self.offset(x);
        let (_, dp, d2p) = Self::profile(r / self.radius);
        let n = x.len() as f64;
        if r == 0.0 {
            return n * d2p / (self.radius * self.radius);
        }
        d2p / (self.radius * self.radius) + (n - 1.0) * dp / (self.radius * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_support_and_midpoint() {
        let c = CutoffProfile::new(2.0).unwrap();
        assert_eq!(c.value(&[1.0]), 1.0);
        assert_eq!(c.value(&[6.0]), 0.0);
        assert!((c.value(&[3.0]) - 0.5).abs() < 1e-15);
        assert!((c.value(&[0.0, -3.0]) - 0.5).abs() < 1e-15);
        assert!(CutoffProfile::new(0.0).is_err());
    }

    #[test]
    fn monotone_and_bounded() {
        let mut prev = 1.0;
        for k in 0..=400 {
            let t = k as f64 * 0.01;
            let (v, d, _) = CutoffProfile::profile(t);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            assert!(d <= 0.0);
            prev = v;
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = 1e-5;
        for k in 1..100 {
            let t = 1.0 + k as f64 * 0.01;
            let (v0, d, d2) = CutoffProfile::profile(t);
            let (vp, _, _) = CutoffProfile::profile(t + h);
            let (vm, _, _) = CutoffProfile::profile(t - h);
            assert!(((vp - vm) / (2.0 * h) - d).abs() < 1e-6 * (1.0 + d.abs()), "t={t}");
            assert!(((vp - 2.0 * v0 + vm) / (h * h) - d2).abs() < 1e-3 * (1.0 + d2.abs()), "t={t}");
        }
    }

    #[test]
    fn second_differences_bounded_under_refinement() {
        let c = CutoffProfile::new(1.0).unwrap();
        let mut maxes = vec![];
        for n in [100, 200, 400, 800] {
            let h = 3.0 / n as f64;
            let m = (1..n)
                .map(|k| {
                    let x = k as f64 * h;
                    ((c.value(&[x + h]) - 2.0 * c.value(&[x]) + c.value(&[x - h])) / (h * h)).abs()
                })
                .fold(0.0, f64::max);
            maxes.push(m);
        }
        let lo = maxes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = maxes.iter().cloned().fold(0.0, f64::max);
        assert!(hi < 1.1 * lo, "{maxes:?}");
    }

    #[test]
    fn gradient_and_laplacian_in_2d() {
        let c = CutoffProfile::new(1.0).unwrap().translated(&[0.3, -0.2]);
        let h = 1e-4;
        let x = [1.4, 0.7];
        let g = c.gradient(&x);
        let gx = (c.value(&[x[0] + h, x[1]]) - c.value(&[x[0] - h, x[1]])) / (2.0 * h);
        let gy = (c.value(&[x[0], x[1] + h]) - c.value(&[x[0], x[1] - h])) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-6 && (g[1] - gy).abs() < 1e-6);
        let lap = (c.value(&[x[0] + h, x[1]]) + c.value(&[x[0] - h, x[1]]) + c.value(&[x[0], x[1] + h])
            + c.value(&[x[0], x[1] - h])
            - 4.0 * c.value(&x))
            / (h * h);
        assert!((c.laplacian(&x) - lap).abs() < 1e-4);
        assert_eq!(c.gradient(&[0.3, -0.2]), [0.0, 0.0]);
    }
}
