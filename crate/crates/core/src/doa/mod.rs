//! Direction finding at a transmitter array: snapshot synthesis, sample
//! covariance, signal/noise subspace split and the 2-D MUSIC search.

mod music;
mod snapshots;
mod subspace;

pub use music::{estimate_doa, estimate_spectrum, music_spectrum, DoaEstimate, MusicSpectrum, SearchGrid};
pub use snapshots::{sample_covariance, synthesize_snapshots, SnapshotBatch};
pub use subspace::{subspace_split, Projector, SubspaceSplit};

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{direction_to_unit_vector, ArrayGeometry, ElementGrid, SphericalDirection};
use crate::C64;

/// Plane-wave phase response of an array; every entry has unit modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    values: DVector<C64>,
}

impl SteeringVector {
    pub fn values(&self) -> &DVector<C64> {
        &self.values
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Entry `m` is `exp(−j k r_m · u(θ, φ))` with `r_m` in the array's local frame.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    dir: SphericalDirection,
    wavelength: f64,
) -> Result<SteeringVector> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::input(format!("wavelength must be positive, got {wavelength}")));
    }
    let k = 2.0 * PI / wavelength;
    let u = direction_to_unit_vector(dir);
    let values = DVector::from_iterator(
        geometry.len(),
        geometry.grid().local_positions().iter().map(|p| C64::cis(-k * p.dot(&u))),
    );
    Ok(SteeringVector { values })
}

/// Separable steering evaluation on a rectangular planar lattice:
/// `α[r·cols + c] = X_c(u_x) · Y_r(u_y)`.
#[derive(Clone, Debug)]
pub(crate) struct SteeringEvaluator {
    xs: Vec<f64>,
    ys: Vec<f64>,
    k: f64,
}

impl SteeringEvaluator {
    pub(crate) fn new(grid: &ElementGrid, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::input(format!("wavelength must be positive, got {wavelength}")));
        }
        let s = grid.spacing();
        let x0 = (grid.cols() as f64 - 1.0) / 2.0;
        let y0 = (grid.rows() as f64 - 1.0) / 2.0;
        Ok(Self {
            xs: (0..grid.cols()).map(|c| (c as f64 - x0) * s).collect(),
            ys: (0..grid.rows()).map(|r| (r as f64 - y0) * s).collect(),
            k: 2.0 * PI / wavelength,
        })
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub(crate) fn rows(&self) -> usize {
        self.ys.len()
    }

    pub(crate) fn cols(&self) -> usize {
        self.xs.len()
    }

    /// Per-column factors `X_c` and per-row factors `Y_r`, by geometric recurrence.
    pub(crate) fn axis_phases(&self, dir: SphericalDirection, xph: &mut [C64], yph: &mut [C64]) {
        let st = dir.elevation_theta.sin();
        let (sp, cp) = dir.azimuth_phi.sin_cos();
        for (coords, out, u) in [(&self.xs, xph, st * cp), (&self.ys, yph, st * sp)] {
            let step = if coords.len() > 1 { coords[1] - coords[0] } else { 0.0 };
            let w = C64::cis(-self.k * step * u);
            let mut v = C64::cis(-self.k * coords[0] * u);
            for o in out.iter_mut() {
                *o = v;
                v *= w;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn fill(&self, dir: SphericalDirection, out: &mut [C64]) {
        let mut xph = vec![C64::new(0.0, 0.0); self.cols()];
        let mut yph = vec![C64::new(0.0, 0.0); self.rows()];
        self.axis_phases(dir, &mut xph, &mut yph);
        let cols = self.cols();
        for (r, y) in yph.iter().enumerate() {
            for (o, x) in out[r * cols..(r + 1) * cols].iter_mut().zip(&xph) {
                *o = y * x;
            }
        }
    }
}
