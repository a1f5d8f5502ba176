use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::snapshots::{sample_covariance, SnapshotBatch};
use super::subspace::{subspace_split, Projector};
use super::SteeringEvaluator;
use crate::error::{Error, Result, StageExt};
use crate::geometry::{wrap_angle, ArrayGeometry, SphericalDirection};
use crate::C64;

/// Relative floor on the noise-subspace energy so the pseudospectrum stays finite.
const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Coarse search lattice and refinement resolution. The azimuth always spans
/// (−180°, 180°].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchGrid {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub coarse_step_deg: f64,
    pub refine_step_deg: f64,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            theta_min_deg: 0.0,
            theta_max_deg: 80.0,
            coarse_step_deg: 0.5,
            refine_step_deg: 0.01,
        }
    }
}

impl SearchGrid {
    fn validate(&self) -> Result<()> {
        let ok = self.theta_min_deg >= 0.0
            && self.theta_max_deg <= 180.0
            && self.theta_min_deg <= self.theta_max_deg
            && self.coarse_step_deg > 0.0
            && self.coarse_step_deg <= 360.0
            && self.refine_step_deg > 0.0
            && self.refine_step_deg <= self.coarse_step_deg;
        if !ok {
            return Err(Error::config(format!("invalid DOA search grid {self:?}")));
        }
        Ok(())
    }

    pub fn theta_values(&self) -> Vec<f64> {
        let n = ((self.theta_max_deg - self.theta_min_deg) / self.coarse_step_deg + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| (self.theta_min_deg + i as f64 * self.coarse_step_deg).to_radians())
            .collect()
    }

    pub fn phi_values(&self) -> Vec<f64> {
        let n = (360.0 / self.coarse_step_deg + 1e-9).floor() as usize;
        (1..=n)
            .map(|i| (180.0 - (n - i) as f64 * self.coarse_step_deg).to_radians())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub direction: SphericalDirection,
    pub peak_value: f64,
    pub refined: bool,
}

#[derive(Clone, Debug)]
pub struct MusicSpectrum {
    pub theta_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    /// Rows follow `theta_grid`, columns follow `phi_grid`.
    pub pseudospectrum: DMatrix<f64>,
    pub peak: DoaEstimate,
}

impl MusicSpectrum {
    /// `theta_deg,phi_deg,pseudospectrum_db`, normalized to 0 dB at the grid maximum.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<music spectrum csv>", e);
        let max = self.pseudospectrum.max();
        writeln!(out, "theta_deg,phi_deg,pseudospectrum_db").map_err(io)?;
        for (i, t) in self.theta_grid.iter().enumerate() {
            for (j, p) in self.phi_grid.iter().enumerate() {
                let db = 10.0 * (self.pseudospectrum[(i, j)] / max).log10();
                writeln!(out, "{},{},{}", t.to_degrees(), p.to_degrees(), db).map_err(io)?;
            }
        }
        Ok(())
    }
}

struct Scratch {
    x: Vec<C64>,
    y: Vec<C64>,
}

struct Objective<'a> {
    eval: SteeringEvaluator,
    projector: &'a Projector,
    floor: f64,
    theta_min: f64,
    theta_max: f64,
}

impl Objective<'_> {
    fn scratch(&self) -> Scratch {
        Scratch {
            x: vec![C64::new(0.0, 0.0); self.eval.cols()],
            y: vec![C64::new(0.0, 0.0); self.eval.rows()],
        }
    }

    fn denominator(&self, theta: f64, phi: f64, buf: &mut Scratch) -> f64 {
        self.eval
            .axis_phases(SphericalDirection::new(theta, phi), &mut buf.x, &mut buf.y);
        self.projector
            .noise_energy_separable(&buf.x, &buf.y)
            .max(self.floor)
    }

    fn clamp_theta(&self, theta: f64) -> f64 {
        theta.clamp(self.theta_min, self.theta_max)
    }

    /// Pattern search from a grid point, halving the step until it is below
    /// `stop`, then a per-axis parabolic fit on the denominator.
    fn refine(&self, theta: f64, phi: f64, start_step: f64, stop: f64) -> (f64, f64, f64) {
        let mut buf = self.scratch();
        let (mut t, mut p) = (theta, phi);
        let mut d = self.denominator(t, p, &mut buf);
        let mut h = start_step;
        let mut guard = 0;
        while h >= stop && guard < 10_000 {
            guard += 1;
            let mut best = (t, p, d);
            for dt in [-1.0, 0.0, 1.0] {
                for dp in [-1.0, 0.0, 1.0] {
                    if dt == 0.0 && dp == 0.0 {
                        continue;
                    }
                    let ct = self.clamp_theta(t + dt * h);
                    let cp = p + dp * h;
                    let cd = self.denominator(ct, cp, &mut buf);
                    if cd < best.2 {
                        best = (ct, cp, cd);
                    }
                }
            }
            if best.2 < d {
                (t, p, d) = best;
            } else {
                h *= 0.5;
            }
        }
        let vertex = |lo: f64, mid: f64, hi: f64| {
            let curv = lo - 2.0 * mid + hi;
            if curv > 0.0 {
                (0.5 * (lo - hi) / curv).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        };
        let lo = self.denominator(self.clamp_theta(t - h), p, &mut buf);
        let hi = self.denominator(self.clamp_theta(t + h), p, &mut buf);
        let t_fit = self.clamp_theta(t + h * vertex(lo, d, hi));
        let lo = self.denominator(t_fit, p - h, &mut buf);
        let mid = self.denominator(t_fit, p, &mut buf);
        let hi = self.denominator(t_fit, p + h, &mut buf);
        let p_fit = p + h * vertex(lo, mid, hi);
        let d_fit = self.denominator(t_fit, p_fit, &mut buf);
        if d_fit <= d {
            (t_fit, p_fit, d_fit)
        } else {
            (t, p, d)
        }
    }
}

/// Reciprocal MUSIC pseudospectrum `1 / (αᴴ U_N U_Nᴴ α)` on the coarse grid,
/// with the global maximum refined to sub-grid precision.
pub fn music_spectrum(
    geometry: &ArrayGeometry,
    projector: &Projector,
    wavelength: f64,
    grid: &SearchGrid,
) -> Result<MusicSpectrum> {
    grid.validate()?;
    if projector.dim() != geometry.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.len(),
            found: projector.dim(),
        });
    }
    let objective = Objective {
        eval: SteeringEvaluator::new(geometry.grid(), wavelength)?,
        projector,
        floor: DENOMINATOR_FLOOR * geometry.len() as f64,
        theta_min: grid.theta_min_deg.to_radians(),
        theta_max: grid.theta_max_deg.to_radians(),
    };
    let thetas = grid.theta_values();
    let phis = grid.phi_values();
    if thetas.is_empty() || phis.is_empty() {
        return Err(Error::config("DOA search grid is empty"));
    }
    let rows: Vec<Vec<f64>> = thetas
        .par_iter()
        .map(|&t| {
            let mut buf = objective.scratch();
            phis.iter()
                .map(|&p| 1.0 / objective.denominator(t, p, &mut buf))
                .collect()
        })
        .collect();
    let pseudospectrum = DMatrix::from_fn(thetas.len(), phis.len(), |i, j| rows[i][j]);

    let (mut bi, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > best {
                (bi, bj, best) = (i, j, v);
            }
        }
    }
    let (t, p, d) = objective.refine(
        thetas[bi],
        phis[bj],
        grid.coarse_step_deg.to_radians(),
        grid.refine_step_deg.to_radians() / 8.0,
    );
    let direction = SphericalDirection::new(t, wrap_angle(p));
    Ok(MusicSpectrum {
        theta_grid: thetas,
        phi_grid: phis,
        pseudospectrum,
        peak: DoaEstimate {
            direction,
            peak_value: 1.0 / d,
            refined: true,
        },
    })
}

/// Covariance, subspace split and MUSIC search for one batch.
pub fn estimate_spectrum(
    batch: &SnapshotBatch,
    geometry: &ArrayGeometry,
    wavelength: f64,
    grid: &SearchGrid,
) -> Result<MusicSpectrum> {
    if batch.elements() != geometry.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.len(),
            found: batch.elements(),
        });
    }
    let r = sample_covariance(batch).stage("covariance")?;
    let split = subspace_split(&r, batch.source_count).stage("subspace")?;
    music_spectrum(geometry, &split.projector(), wavelength, grid).stage("music")
}

pub fn estimate_doa(
    batch: &SnapshotBatch,
    geometry: &ArrayGeometry,
    wavelength: f64,
    grid: &SearchGrid,
) -> Result<DoaEstimate> {
    Ok(estimate_spectrum(batch, geometry, wavelength, grid)?.peak)
}
