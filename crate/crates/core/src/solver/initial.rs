//! Named initial vorticity fields and heat-semigroup mollification.

use super::{diffuse, DiffusionScheme};
use crate::error::{FlowError, Result};
use crate::grid::{Grid, ScalarField};
use crate::motion::Mat2;
use crate::special::{bessel_j0, j0_first_zero};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPreset {
    /// `amplitude * J0(j01 r)`, the first radial Dirichlet eigenmode.
    BesselMode { amplitude: f64 },
    /// `amplitude * (1 - r^2)^2`.
    RadialPoly { amplitude: f64 },
    /// `amplitude * (1 - |y - y0|^2 / width^2)^3` inside the support.
    OffsetBump { amplitude: f64, x0: f64, y0: f64, width: f64 },
    /// `amplitude` on `r < radius`, zero outside.
    DiskIndicator { amplitude: f64, radius: f64 },
}

impl InitialPreset {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::BesselMode { .. } => "bessel_mode",
            InitialPreset::RadialPoly { .. } => "radial_poly",
            InitialPreset::OffsetBump { .. } => "offset_bump",
            InitialPreset::DiskIndicator { .. } => "disk_indicator",
        }
    }

    pub fn sample(&self, grid: Grid) -> Result<ScalarField> {
        Ok(match *self {
            InitialPreset::BesselMode { amplitude } => {
                let k = j0_first_zero();
                ScalarField::from_polar(grid, |r, _| amplitude * bessel_j0(k * r))
            }
            InitialPreset::RadialPoly { amplitude } => {
                ScalarField::from_polar(grid, |r, _| amplitude * (1.0 - r * r).powi(2))
            }
            InitialPreset::OffsetBump {
                amplitude,
                x0,
                y0,
                width,
            } => {
                if !(width > 0.0) {
                    return Err(FlowError::Argument("bump width must be positive".into()));
                }
                ScalarField::from_cartesian(grid, |x, y| {
                    let s = 1.0 - ((x - x0).powi(2) + (y - y0).powi(2)) / (width * width);
                    amplitude * s.max(0.0).powi(3)
                })
            }
            InitialPreset::DiskIndicator { amplitude, radius } => {
                ScalarField::from_polar(grid, |r, _| if r < radius { amplitude } else { 0.0 })
            }
        })
    }
}

/// Sub-steps used by [`mollify_initial`]; at least 8 and of size at most `nu / 8`.
pub const MOLLIFY_SUBSTEPS: usize = 64;

/// Applies the Dirichlet heat semigroup on the unit disk for time `nu`.
pub fn mollify_initial(omega0: &ScalarField, nu: f64) -> Result<ScalarField> {
    mollify_initial_with_metric(omega0, nu, &Mat2::identity())
}

/// As [`mollify_initial`] for the pulled-back heat operator `q^{jk} d_j d_k`
/// (the initial domain of a motion whose `Psi(., 0)` is not the identity).
pub fn mollify_initial_with_metric(omega0: &ScalarField, nu: f64, q: &Mat2) -> Result<ScalarField> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(FlowError::Argument(format!("viscosity must be >= 0, got {nu}")));
    }
    if nu == 0.0 {
        return Ok(omega0.clone());
    }
    let s = nu / MOLLIFY_SUBSTEPS as f64;
    let mut w = omega0.clone();
    for _ in 0..MOLLIFY_SUBSTEPS {
        w = diffuse(&w, q, s, DiffusionScheme::BackwardEuler)?;
    }
    Ok(w)
}
