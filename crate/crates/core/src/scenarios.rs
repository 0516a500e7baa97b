//! Initial data used by the benchmarks.

use crate::error::{Error, Result};
use crate::grid::{CutoffProfile, Field, Grid};
use crate::nonlinearity::SystemParams;
use crate::selfsimilar::kappa_constant;

/// Spatially constant field.
pub fn constant(grid: Grid, values: &[f64]) -> Field {
    Field::from_fn(grid, values.len(), |_, o| o.copy_from_slice(values))
}

/// `amplitude_c exp(-|x|^2 / width^2)` in every component `c`.
pub fn gaussian_bump(grid: Grid, amplitudes: &[f64], width: f64) -> Result<Field> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Domain(format!("bump width must be positive, got {width}")));
    }
    Ok(Field::from_fn(grid, amplitudes.len(), |x, o| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = (-r2 / (width * width)).exp();
        for (v, a) in o.iter_mut().zip(amplitudes) {
            *v = a * g;
        }
    }))
}

/// The constant self-similar state `kappa` on `grid`.
pub fn stationary_kappa(params: &SystemParams, grid: Grid) -> Result<Field> {
    Ok(constant(grid, &kappa_constant(params)?))
}

/// `kappa phi(|y|) (1 - 0.2 exp(-|y|^2/2))` with `phi` the cutoff of radius
/// `L/2`: below `kappa` everywhere and zero near the truncation boundary.
pub fn perturbed_kappa(params: &SystemParams, grid: Grid) -> Result<Field> {
    let k = kappa_constant(params)?;
    let cut = CutoffProfile::new(grid.half_extent() / 2.0)?;
    Ok(Field::from_fn(grid, k.len(), |y, o| {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let f = cut.value(y) * (1.0 - 0.2 * (-r2 / 2.0).exp());
        for (v, kc) in o.iter_mut().zip(&k) {
            *v = kc * f;
        }
    }))
}
