//! The coupled power nonlinearity `G`, its gradient `F`, the structure
//! constants `c_G`, `C_F`, and the critical exponents.
//!
//! For a state `U = (u_1, ..., u_M)` the potential is
//!
//! ```text
//! G(U) = 1/(2(r+1)) * sum_{i,j} beta_ij |u_i|^(r+1) |u_j|^(r+1)
//! ```
//!
//! and `F = grad G` has components `F_i = sum_j beta_ij |u_i|^(r-1) |u_j|^(r+1) u_i`.
//! `G` is homogeneous of degree `p + 1` with `p = 2r + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::par;

/// Symmetric, entrywise nonnegative coupling matrix with positive diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    /// Builds a coupling matrix from its rows, validating the sign and
    /// symmetry constraints.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidParams("coupling matrix must have at least one row".into()));
        }
        let mut entries = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidParams(format!(
                    "coupling row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        let m = Self { size, entries };
        m.validate()?;
        Ok(m)
    }

    /// The all-ones coupling of size `m`.
    pub fn ones(m: usize) -> Self {
        Self { size: m, entries: vec![1.0; m * m] }
    }

    pub fn identity(m: usize) -> Self {
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            entries[i * m + i] = 1.0;
        }
        Self { size: m, entries }
    }

    fn validate(&self) -> Result<()> {
        let m = self.size;
        for i in 0..m {
            for j in 0..m {
                let b = self.get(i, j);
                if !b.is_finite() {
                    return Err(Error::InvalidParams(format!("beta[{i}][{j}] is not finite")));
                }
                if b < 0.0 {
                    return Err(Error::InvalidParams(format!("beta[{i}][{j}] = {b} is negative")));
                }
                if b != self.get(j, i) {
                    return Err(Error::InvalidParams(format!(
                        "coupling is not symmetric: beta[{i}][{j}] = {b} but beta[{j}][{i}] = {}",
                        self.get(j, i)
                    )));
                }
            }
            if self.get(i, i) <= 0.0 {
                return Err(Error::InvalidParams(format!("diagonal beta[{i}][{i}] must be positive")));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries[i * self.size..(i + 1) * self.size].iter().sum()
    }

    /// Sum of all entries, the coefficient of `w^p` in the scalar majorant
    /// equation for `w = sum |w_i|`.
    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// A critical exponent that is either finite or `+infinity` (dimensions 1, 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalExponent {
    Finite(f64),
    Infinite,
}

impl CriticalExponent {
    /// `true` when `p` lies strictly below this exponent.
    pub fn exceeds(&self, p: f64) -> bool {
        match self {
            CriticalExponent::Finite(v) => p < *v,
            CriticalExponent::Infinite => true,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            CriticalExponent::Finite(v) => *v,
            CriticalExponent::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for CriticalExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CriticalExponent::Finite(v) => s.serialize_f64(*v),
            CriticalExponent::Infinite => s.serialize_str("infinity"),
        }
    }
}

/// Sobolev exponent `p_S` and the exponent `p_B` for space dimension `n`.
pub fn sobolev_exponents(n: i64) -> Result<(CriticalExponent, CriticalExponent)> {
    if n <= 0 {
        return Err(Error::Domain(format!("space dimension must be positive, got {n}")));
    }
    if n <= 2 {
        return Ok((CriticalExponent::Infinite, CriticalExponent::Infinite));
    }
    let nf = n as f64;
    let p_s = (nf + 2.0) / (nf - 2.0);
    let p_b = nf * (nf + 2.0) / ((nf - 1.0) * (nf - 1.0));
    debug_assert!(p_s > p_b);
    Ok((CriticalExponent::Finite(p_s), CriticalExponent::Finite(p_b)))
}

/// Dimensions, exponent and coupling of the system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    space_dim: usize,
    r: f64,
    p: f64,
    beta_exp: f64,
    coupling: CouplingMatrix,
}

impl SystemParams {
    pub fn new(space_dim: usize, r: f64, coupling: CouplingMatrix) -> Result<Self> {
        if space_dim == 0 {
            return Err(Error::InvalidParams("space dimension must be at least 1".into()));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParams(format!("exponent r must be positive, got {r}")));
        }
        let p = 2.0 * r + 1.0;
        Ok(Self { space_dim, r, p, beta_exp: 1.0 / (p - 1.0), coupling })
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn components(&self) -> usize {
        self.coupling.size()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `p = 2r + 1`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// The rescaling exponent `1/(p-1)`.
    pub fn beta_exp(&self) -> f64 {
        self.beta_exp
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    /// `1 < p < p_S(N)`.
    pub fn is_subcritical(&self) -> bool {
        let (p_s, _) = sobolev_exponents(self.space_dim as i64).expect("space_dim >= 1");
        self.p > 1.0 && p_s.exceeds(self.p)
    }

    #[inline]
    fn abs_pow_r1(&self, x: f64) -> f64 {
        if self.r == 1.0 {
            x * x
        } else {
            x.abs().powf(self.r + 1.0)
        }
    }

    #[inline]
    fn signed_pow_r(&self, x: f64) -> f64 {
        if self.r == 1.0 {
            x
        } else if x == 0.0 {
            0.0
        } else {
            x.abs().powf(self.r).copysign(x)
        }
    }

    /// `G(U)` without input validation; `u.len()` must equal `M`.
    #[inline]
    pub fn potential(&self, u: &[f64]) -> f64 {
        let m = self.coupling.size();
        debug_assert_eq!(u.len(), m);
        let mut sum = 0.0;
        for i in 0..m {
            let ai = self.abs_pow_r1(u[i]);
            if ai == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..m {
                row += self.coupling.get(i, j) * self.abs_pow_r1(u[j]);
            }
            sum += ai * row;
        }
        sum / (2.0 * (self.r + 1.0))
    }

    /// Writes `F(U)` into `out` without input validation.
    ///
    /// Uses `|u_i|^r sgn(u_i)` in place of `|u_i|^(r-1) u_i`, so `u_i = 0`
    /// gives `F_i = 0` for every `r > 0`.
    #[inline]
    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let m = self.coupling.size();
        debug_assert_eq!(u.len(), m);
        debug_assert_eq!(out.len(), m);
        for i in 0..m {
            let lead = self.signed_pow_r(u[i]);
            if lead == 0.0 {
                out[i] = 0.0;
                continue;
            }
            let mut row = 0.0;
            for j in 0..m {
                row += self.coupling.get(i, j) * self.abs_pow_r1(u[j]);
            }
            out[i] = lead * row;
        }
    }
}

fn check_input(u: &[f64], params: &SystemParams) -> Result<()> {
    if u.len() != params.components() {
        return Err(Error::Domain(format!(
            "state has {} components, system has {}",
            u.len(),
            params.components()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("state contains non-finite values".into()));
    }
    Ok(())
}

/// Evaluates the potential `G(U)`.
pub fn eval_g(u: &[f64], params: &SystemParams) -> Result<f64> {
    check_input(u, params)?;
    Ok(params.potential(u))
}

/// Evaluates the nonlinearity `F(U) = grad G(U)`.
pub fn eval_f(u: &[f64], params: &SystemParams) -> Result<Vec<f64>> {
    check_input(u, params)?;
    let mut out = vec![0.0; u.len()];
    params.gradient_into(u, &mut out);
    Ok(out)
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `c_G = min_{|U|=1} G(U)` and `C_F = max_{|U|=1} |F(U)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureConstants {
    pub c_g: f64,
    pub c_f: f64,
}

/// Point on the unit sphere of `R^m` from hyperspherical angles.
fn sphere_point(angles: &[f64], out: &mut [f64]) {
    let m = out.len();
    let mut sin_prod = 1.0;
    for k in 0..m - 1 {
        out[k] = sin_prod * angles[k].cos();
        sin_prod *= angles[k].sin();
    }
    out[m - 1] = sin_prod;
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes `objective` over the unit sphere: dense angular sampling,
/// then cyclic golden-section refinement inside the best cell.
fn sphere_minimize<F>(m: usize, resolution: usize, objective: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if m == 1 {
        return objective(&[1.0]).min(objective(&[-1.0]));
    }
    let n_angles = m - 1;
    let spacing: Vec<f64> = (0..n_angles)
        .map(|k| {
            if k + 1 < n_angles {
                std::f64::consts::PI / (resolution - 1) as f64
            } else {
                std::f64::consts::TAU / resolution as f64
            }
        })
        .collect();
    let decode = |mut idx: usize, angles: &mut [f64]| {
        for k in (0..n_angles).rev() {
            angles[k] = (idx % resolution) as f64 * spacing[k];
            idx /= resolution;
        }
    };
    let total = resolution.pow(n_angles as u32);
    let values = par::map_indexed(total, |idx| {
        let mut angles = [0.0; 3];
        let mut point = [0.0; 4];
        decode(idx, &mut angles[..n_angles]);
        sphere_point(&angles[..n_angles], &mut point[..m]);
        objective(&point[..m])
    });
    let (best_idx, mut best) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });

    let mut angles = vec![0.0; n_angles];
    decode(best_idx, &mut angles);
    let eval_at = |angles: &[f64]| {
        let mut point = [0.0; 4];
        sphere_point(angles, &mut point[..m]);
        objective(&point[..m])
    };
    for _sweep in 0..4 {
        for k in 0..n_angles {
            let center = angles[k];
            let (arg, val) = golden_min(center - spacing[k], center + spacing[k], |x| {
                let mut trial = angles.clone();
                trial[k] = x;
                eval_at(&trial)
            });
            if val < best {
                best = val;
                angles[k] = arg;
            }
        }
    }
    best
}

/// Default angular resolution for [`structure_constants`] at `m` components.
pub fn default_sphere_resolution(m: usize) -> usize {
    match m {
        0..=2 => 4096,
        3 => 256,
        _ => 64,
    }
}

/// Extremizes `G` and `|F|` over the unit sphere of `R^M` (`M <= 4`).
pub fn structure_constants(params: &SystemParams, resolution: usize) -> Result<StructureConstants> {
    let m = params.components();
    if m > 4 {
        return Err(Error::Unsupported(format!(
            "dense sphere sampling supports at most 4 components, got {m}"
        )));
    }
    if resolution < 16 {
        return Err(Error::Domain(format!("sphere resolution must be >= 16, got {resolution}")));
    }
    let c_g = sphere_minimize(m, resolution, |u| params.potential(u));
    let neg_f = sphere_minimize(m, resolution, |u| {
        let mut f = [0.0; 4];
        params.gradient_into(u, &mut f[..m]);
        -norm(&f[..m])
    });
    Ok(StructureConstants { c_g, c_f: -neg_f })
}

/// Maximum relative violation of each homogeneity/structure relation over a
/// random sample set.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    pub constants: StructureConstants,
    /// `G(lambda U) = lambda^(p+1) G(U)`
    pub homogeneity_g: f64,
    /// `F(lambda U) = lambda^p F(U)`
    pub homogeneity_f: f64,
    /// `U . F(U) = (p+1) G(U)`
    pub euler: f64,
    /// `|F(U)| <= C_F |U|^p`
    pub f_bound: f64,
    /// `c_G |U|^(p+1) <= G(U)`
    pub g_lower: f64,
    /// `G(U) <= C_F |U|^(p+1)`
    pub g_upper: f64,
    /// `G(U) > 0` for every nonzero sample.
    pub g_positive: bool,
    pub zero_lambda_samples: usize,
}

impl StructureReport {
    pub fn max_violation(&self) -> f64 {
        [self.homogeneity_g, self.homogeneity_f, self.euler, self.f_bound, self.g_lower, self.g_upper]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checks the homogeneity, Euler and sandwich relations of `G` and `F` on
/// `sample_count` seeded random states. Every tenth sample uses `lambda = 0`.
pub fn check_structure(params: &SystemParams, sample_count: usize, seed: u64) -> Result<StructureReport> {
    if sample_count == 0 {
        return Err(Error::Domain("sample_count must be at least 1".into()));
    }
    let m = params.components();
    let constants = structure_constants(params, default_sphere_resolution(m))?;
    let p = params.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = StructureReport {
        samples: sample_count,
        constants,
        homogeneity_g: 0.0,
        homogeneity_f: 0.0,
        euler: 0.0,
        f_bound: 0.0,
        g_lower: 0.0,
        g_upper: 0.0,
        g_positive: true,
        zero_lambda_samples: 0,
    };
    let mut u = vec![0.0; m];
    let mut lu = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut lf = vec![0.0; m];
    for k in 0..sample_count {
        let magnitude = 10f64.powf(rng.random_range(-1.0..1.0));
        for x in u.iter_mut() {
            *x = magnitude * rng.random_range(-1.0..1.0);
        }
        let lambda = if k % 10 == 0 {
            report.zero_lambda_samples += 1;
            0.0
        } else {
            rng.random_range(0.0..4.0)
        };
        for (y, x) in lu.iter_mut().zip(&u) {
            *y = lambda * x;
        }
        let g = params.potential(&u);
        let lg = params.potential(&lu);
        params.gradient_into(&u, &mut f);
        params.gradient_into(&lu, &mut lf);

        report.homogeneity_g = report.homogeneity_g.max(rel(lg, lambda.powf(p + 1.0) * g));
        let scaled: Vec<f64> = f.iter().map(|x| lambda.powf(p) * x).collect();
        let diff: Vec<f64> = lf.iter().zip(&scaled).map(|(a, b)| a - b).collect();
        let fscale = norm(&lf).max(norm(&scaled));
        if fscale > 0.0 {
            report.homogeneity_f = report.homogeneity_f.max(norm(&diff) / fscale);
        }
        let dot: f64 = u.iter().zip(&f).map(|(a, b)| a * b).sum();
        report.euler = report.euler.max(rel(dot, (p + 1.0) * g));

        let un = norm(&u);
        let fb = constants.c_f * un.powf(p);
        report.f_bound = report.f_bound.max((norm(&f) - fb).max(0.0) / fb);
        let lower = constants.c_g * un.powf(p + 1.0);
        let upper = constants.c_f * un.powf(p + 1.0);
        report.g_lower = report.g_lower.max((lower - g).max(0.0) / g);
        report.g_upper = report.g_upper.max((g - upper).max(0.0) / upper);
        if un > 0.0 && g <= 0.0 {
            report.g_positive = false;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(m: usize, r: f64, coupling: CouplingMatrix) -> SystemParams {
        assert_eq!(coupling.size(), m);
        SystemParams::new(1, r, coupling).unwrap()
    }

    #[test]
    fn potential_hand_values() {
        let p1 = params(1, 1.0, CouplingMatrix::ones(1));
        assert_relative_eq!(eval_g(&[2.0], &p1).unwrap(), 4.0);
        assert_eq!(eval_g(&[0.0], &p1).unwrap(), 0.0);
        let p2 = params(2, 1.0, CouplingMatrix::ones(2));
        assert_relative_eq!(eval_g(&[1.0, 1.0], &p2).unwrap(), 1.0);
        assert_eq!(eval_g(&[0.0, 0.0], &p2).unwrap(), 0.0);
    }

    #[test]
    fn gradient_hand_values() {
        let p1 = params(1, 1.0, CouplingMatrix::ones(1));
        assert_eq!(eval_f(&[2.0], &p1).unwrap(), vec![8.0]);
        let p2 = params(2, 1.0, CouplingMatrix::ones(2));
        let u = [1.0, -1.0];
        let f = eval_f(&u, &p2).unwrap();
        assert_eq!(f, vec![2.0, -2.0]);
        let dot: f64 = u.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, 4.0);
        assert_relative_eq!(dot, (p2.p() + 1.0) * eval_g(&u, &p2).unwrap());
    }

    #[test]
    fn zero_component_is_regular_for_small_r() {
        let p = params(2, 0.25, CouplingMatrix::ones(2));
        let f = eval_f(&[0.0, 0.7], &p).unwrap();
        assert_eq!(f[0], 0.0);
        assert!(f[1] > 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let p = params(1, 1.0, CouplingMatrix::ones(1));
        assert!(matches!(eval_g(&[f64::NAN], &p), Err(Error::Domain(_))));
        assert!(matches!(eval_f(&[f64::INFINITY], &p), Err(Error::Domain(_))));
        assert!(eval_g(&[1.0, 2.0], &p).is_err());
    }

    #[test]
    fn coupling_validation() {
        assert!(CouplingMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![1.0, -0.5], vec![-0.5, 1.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).is_ok());
        assert!(SystemParams::new(1, 0.0, CouplingMatrix::ones(1)).is_err());
    }

    #[test]
    fn exponents_follow_definitions() {
        let (s3, b3) = sobolev_exponents(3).unwrap();
        assert_eq!(s3, CriticalExponent::Finite(5.0));
        assert_eq!(b3, CriticalExponent::Finite(15.0 / 4.0));
        let (s4, b4) = sobolev_exponents(4).unwrap();
        assert_eq!(s4, CriticalExponent::Finite(3.0));
        assert_eq!(b4, CriticalExponent::Finite(8.0 / 3.0));
        assert_eq!(sobolev_exponents(1).unwrap(), (CriticalExponent::Infinite, CriticalExponent::Infinite));
        assert_eq!(sobolev_exponents(2).unwrap().0, CriticalExponent::Infinite);
        assert!(sobolev_exponents(0).is_err());
        for n in 3..40 {
            let (s, b) = sobolev_exponents(n).unwrap();
            assert!(s.as_f64() > b.as_f64());
        }
    }

    #[test]
    fn subcriticality() {
        let c = CouplingMatrix::ones(1);
        assert!(SystemParams::new(3, 1.0, c.clone()).unwrap().is_subcritical());
        assert!(!SystemParams::new(3, 2.0, c.clone()).unwrap().is_subcritical());
        assert!(SystemParams::new(1, 50.0, c).unwrap().is_subcritical());
    }

    #[test]
    fn sphere_extrema_known_cases() {
        let cases = [
            (params(1, 1.0, CouplingMatrix::ones(1)), 0.25, 1.0),
            (params(2, 1.0, CouplingMatrix::ones(2)), 0.25, 1.0),
            (params(2, 1.0, CouplingMatrix::identity(2)), 0.125, 1.0),
        ];
        for (p, cg, cf) in cases {
            let c = structure_constants(&p, 256).unwrap();
            assert!((c.c_g - cg).abs() < 1e-10, "{c:?}");
            assert!((c.c_f - cf).abs() < 1e-10, "{c:?}");
            assert!(c.c_g <= c.c_f);
        }
    }

    #[test]
    fn sphere_extrema_three_components() {
        // identity coupling, r = 1: min (u1^4+u2^4+u3^4)/4 on the sphere is 1/12.
        let p = params(3, 1.0, CouplingMatrix::identity(3));
        let c = structure_constants(&p, 64).unwrap();
        assert!((c.c_g - 1.0 / 12.0).abs() < 1e-9, "{c:?}");
        assert!((c.c_f - 1.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn sphere_rejects_large_m_and_low_resolution() {
        let p = params(5, 1.0, CouplingMatrix::ones(5));
        assert!(matches!(structure_constants(&p, 64), Err(Error::Unsupported(_))));
        let p = params(1, 1.0, CouplingMatrix::ones(1));
        assert!(structure_constants(&p, 8).is_err());
    }

    #[test]
    fn structure_report_small_run() {
        let p = params(2, 0.5, CouplingMatrix::identity(2));
        let rep = check_structure(&p, 200, 7).unwrap();
        assert!(rep.euler <= 1e-12);
        assert!(rep.max_violation() <= 1e-12, "{rep:?}");
        assert!(rep.g_positive);
        assert_eq!(rep.zero_lambda_samples, 20);
        assert!(check_structure(&p, 0, 7).is_err());
    }
}
