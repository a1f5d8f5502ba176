use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::steering_vector;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, SphericalDirection};
use crate::C64;

/// `M × T` array observations of `source_count` narrowband sources in noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBatch {
    pub snapshots: DMatrix<C64>,
    pub noise_power: f64,
    pub source_count: usize,
}

impl SnapshotBatch {
    pub fn elements(&self) -> usize {
        self.snapshots.nrows()
    }

    pub fn len(&self) -> usize {
        self.snapshots.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.ncols() == 0
    }
}

/// Circular complex Gaussian sample with variance `power`.
fn complex_gaussian(rng: &mut ChaCha8Rng, power: f64) -> C64 {
    let sigma = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(sigma * re, sigma * im)
}

/// Column `t` is `sqrt(echo_power) · s_t · α(true_dir) + n_t` with unit-power
/// Gaussian symbols `s_t` and per-element noise of variance `noise_power`.
/// The random stream is consumed column by column: `s_t` first, then `n_t`.
pub fn synthesize_snapshots(
    geometry: &ArrayGeometry,
    true_dir: SphericalDirection,
    wavelength: f64,
    echo_power: f64,
    noise_power: f64,
    snapshot_count: usize,
    seed: u64,
) -> Result<SnapshotBatch> {
    if snapshot_count == 0 {
        return Err(Error::config("snapshot count must be at least 1"));
    }
    if !(echo_power >= 0.0 && echo_power.is_finite()) {
        return Err(Error::input(format!("echo power must be non-negative, got {echo_power}")));
    }
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::input(format!("noise power must be non-negative, got {noise_power}")));
    }
    let m = geometry.len();
    if snapshot_count < m {
        log::warn!("{snapshot_count} snapshots for {m} elements: sample covariance is rank deficient");
    }
    let alpha = steering_vector(geometry, true_dir, wavelength)?.into_inner() * C64::from(echo_power.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(m * snapshot_count);
    for _ in 0..snapshot_count {
        let s = complex_gaussian(&mut rng, 1.0);
        for a in alpha.iter() {
            let n = if noise_power > 0.0 {
                complex_gaussian(&mut rng, noise_power)
            } else {
                C64::new(0.0, 0.0)
            };
            data.push(a * s + n);
        }
    }
    Ok(SnapshotBatch {
        snapshots: DMatrix::from_vec(m, snapshot_count, data),
        noise_power,
        source_count: 1,
    })
}

/// `R = (1/T) Σ_t x_t x_tᴴ`, symmetrized so it is Hermitian to the last bit.
pub fn sample_covariance(batch: &SnapshotBatch) -> Result<DMatrix<C64>> {
    if batch.is_empty() || batch.elements() == 0 {
        return Err(Error::input("snapshot batch is empty"));
    }
    let x = &batch.snapshots;
    let t = C64::from(batch.len() as f64);
    let r = (x * x.adjoint()).map(|v| v / t);
    Ok((&r + r.adjoint()).map(|v| v * 0.5))
}
