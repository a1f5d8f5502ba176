use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::C64;

/// Relative Hermitian-symmetry tolerance accepted by [`subspace_split`].
const HERMITIAN_TOL: f64 = 1e-10;

/// Eigendecomposition of a covariance, sorted by descending eigenvalue.
#[derive(Clone, Debug)]
pub struct SubspaceSplit {
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: DMatrix<C64>,
    pub source_count: usize,
}

impl SubspaceSplit {
    pub fn signal_basis(&self) -> DMatrix<C64> {
        self.eigenvectors.columns(0, self.source_count).into_owned()
    }

    pub fn noise_basis(&self) -> DMatrix<C64> {
        let m = self.eigenvectors.ncols();
        self.eigenvectors
            .columns(self.source_count, m - self.source_count)
            .into_owned()
    }

    /// `U Λ Uᴴ`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// Noise-subspace projector, evaluated through whichever basis is smaller.
    pub fn projector(&self) -> Projector {
        let m = self.eigenvectors.nrows();
        if self.source_count <= m - self.source_count {
            Projector::from_signal_basis(&self.signal_basis())
        } else {
            Projector::from_noise_basis(&self.noise_basis())
        }
    }
}

/// Evaluates `αᴴ U_N U_Nᴴ α` for candidate steering vectors, either directly
/// from the noise basis or as `‖α‖² − ‖U_Sᴴ α‖²` from the signal basis.
#[derive(Clone, Debug)]
pub struct Projector {
    /// Conjugated basis columns, each stored contiguously.
    conj_columns: Vec<Vec<C64>>,
    complement: bool,
    dim: usize,
}

impl Projector {
    /// Same quantity as [`Projector::noise_energy`] for a separable steering
    /// vector `α[r·cols + c] = y[r] · x[c]`, without forming `α`.
    pub(crate) fn noise_energy_separable(&self, x: &[C64], y: &[C64]) -> f64 {
        let cols = x.len();
        let mut captured = 0.0;
        for u in &self.conj_columns {
            let (mut sr, mut si) = (0.0, 0.0);
            for (row, yr) in u.chunks_exact(cols).zip(y) {
                let (mut ir, mut ii) = (0.0, 0.0);
                for (p, q) in row.iter().zip(x) {
                    ir += p.re * q.re - p.im * q.im;
                    ii += p.re * q.im + p.im * q.re;
                }
                sr += ir * yr.re - ii * yr.im;
                si += ir * yr.im + ii * yr.re;
            }
            captured += sr * sr + si * si;
        }
        if self.complement {
            let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            nx * ny - captured
        } else {
            captured
        }
    }

    pub fn from_noise_basis(noise: &DMatrix<C64>) -> Self {
        Self::new(noise, false)
    }

    pub fn from_signal_basis(signal: &DMatrix<C64>) -> Self {
        Self::new(signal, true)
    }

    fn new(basis: &DMatrix<C64>, complement: bool) -> Self {
        Self {
            conj_columns: basis
                .column_iter()
                .map(|c| c.iter().map(|v| v.conj()).collect())
                .collect(),
            complement,
            dim: basis.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Squared norm of the noise-subspace component of `alpha`.
    pub fn noise_energy(&self, alpha: &[C64]) -> f64 {
        let captured: f64 = self
            .conj_columns
            .iter()
            .map(|u| {
                u.iter()
                    .zip(alpha)
                    .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
                    .norm_sqr()
            })
            .sum();
        if self.complement {
            let total: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
            total - captured
        } else {
            captured
        }
    }
}

/// Split a Hermitian covariance into `source_count` signal and `M − source_count`
/// noise eigenvectors.
pub fn subspace_split(r: &DMatrix<C64>, source_count: usize) -> Result<SubspaceSplit> {
    let m = r.nrows();
    if r.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, found: r.ncols() });
    }
    if source_count == 0 || source_count >= m {
        return Err(Error::config(format!(
            "source count must satisfy 1 <= K < M = {m}, got {source_count}"
        )));
    }
    let asym = (r - r.adjoint()).norm();
    if asym > HERMITIAN_TOL * r.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::input(format!(
            "covariance is not Hermitian (‖R − Rᴴ‖ = {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(m, m, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok(SubspaceSplit {
        eigenvalues,
        eigenvectors,
        source_count,
    })
}
