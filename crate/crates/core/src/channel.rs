//! Element-pair propagation model between two arrays.
//!
//! Entry `(n, m)` couples transmit element `m` to receive element `n`:
//!
//! ```text
//! C[n][m] = λ / (4π l) · sqrt(G_T(θ_T) · G_R(θ_R)) · exp(−j (k l − φ0))
//! ```
//!
//! so `|C[n][m]|²` is the Friis power-coupling factor `λ² G_T G_R / (16π² l²)`
//! for unit transmit power. Element gains are evaluated at the pair's
//! departure/arrival angle relative to each element's own boresight.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ArrayId, Scenario, SphericalDirection};
use crate::C64;

/// Free-space wave impedance, ohms.
pub const FREE_SPACE_IMPEDANCE: f64 = 376.730;

/// Peak element gain used throughout the reference scenarios, dBi.
pub const DEFAULT_GAIN_DBI: f64 = 4.97;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Element pattern `G(θ) = g_max · cos^q(θ)` on the front hemisphere, zero behind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainPattern {
    pub g_max: f64,
    pub rolloff_exponent: f64,
}

impl GainPattern {
    pub fn new(g_max: f64, rolloff_exponent: f64) -> Result<Self> {
        if !(g_max > 0.0 && g_max.is_finite()) {
            return Err(Error::config(format!("g_max must be positive, got {g_max}")));
        }
        if !(rolloff_exponent >= 0.0 && rolloff_exponent.is_finite()) {
            return Err(Error::config(format!(
                "rolloff exponent must be non-negative, got {rolloff_exponent}"
            )));
        }
        Ok(Self {
            g_max,
            rolloff_exponent,
        })
    }

    /// Peak gain in dBi with the exponent chosen so the hemisphere
    /// directivity `2(q + 1)` equals the peak gain.
    pub fn from_dbi(peak_dbi: f64) -> Result<Self> {
        let g_max = db_to_linear(peak_dbi);
        Self::new(g_max, Self::matched_exponent(g_max))
    }

    /// `q` with `2(q + 1) = g_max`, floored at 0 (isotropic hemisphere).
    pub fn matched_exponent(g_max: f64) -> f64 {
        (g_max / 2.0 - 1.0).max(0.0)
    }

    /// Gain for a direction whose cosine to boresight is `cos_theta`.
    #[inline]
    pub fn gain_cos(&self, cos_theta: f64) -> f64 {
        if cos_theta <= 0.0 {
            0.0
        } else if self.rolloff_exponent == 0.0 {
            self.g_max
        } else {
            self.g_max * cos_theta.min(1.0).powf(self.rolloff_exponent)
        }
    }
}

impl Default for GainPattern {
    fn default() -> Self {
        Self::from_dbi(DEFAULT_GAIN_DBI).expect("default pattern is valid")
    }
}

/// Time-averaged Poynting magnitude `E² / (2μ)`, W/m².
pub fn power_density(e_field_amplitude: f64, wave_impedance: f64) -> Result<f64> {
    if !(wave_impedance > 0.0) {
        return Err(Error::input(format!(
            "wave impedance must be positive, got {wave_impedance}"
        )));
    }
    Ok(e_field_amplitude * e_field_amplitude / (2.0 * wave_impedance))
}

/// Linear element gain toward `direction` (measured from the element's boresight).
/// Directions on or behind the array plane get zero gain.
pub fn element_gain(pattern: &GainPattern, direction: SphericalDirection) -> f64 {
    let theta = direction.elevation_theta;
    if !(0.0..PI / 2.0).contains(&theta) {
        return 0.0;
    }
    pattern.gain_cos(theta.cos())
}

/// Complex coupling between every transmit/receive element pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    /// N×M, row = receive element, column = transmit element.
    entries: DMatrix<C64>,
    distances: DMatrix<f64>,
    wavelength: f64,
}

impl ChannelMatrix {
    pub fn from_parts(entries: DMatrix<C64>, distances: DMatrix<f64>, wavelength: f64) -> Result<Self> {
        if entries.shape() != distances.shape() {
            return Err(Error::DimensionMismatch {
                expected: entries.len(),
                found: distances.len(),
            });
        }
        if !(wavelength > 0.0) {
            return Err(Error::input("wavelength must be positive"));
        }
        Ok(Self {
            entries,
            distances,
            wavelength,
        })
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Number of receive elements (rows).
    pub fn rx_len(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of transmit elements (columns).
    pub fn tx_len(&self) -> usize {
        self.entries.ncols()
    }

    /// Channel for the opposite direction. Reciprocity makes it the transpose.
    pub fn reversed(&self) -> ChannelMatrix {
        Self {
            entries: self.entries.transpose(),
            distances: self.distances.transpose(),
            wavelength: self.wavelength,
        }
    }

    /// Field at the receive elements for transmit amplitudes `a`.
    pub fn propagate(&self, a: &DVector<C64>) -> Result<DVector<C64>> {
        check_len(self.tx_len(), a.len())?;
        Ok(&self.entries * a)
    }

    /// Field at the transmit elements for amplitudes `r` re-radiated by the receiver.
    pub fn propagate_back(&self, r: &DVector<C64>) -> Result<DVector<C64>> {
        check_len(self.rx_len(), r.len())?;
        Ok(self.entries.tr_mul(r))
    }

    /// Row-major CSV dump: a comment header with dimensions and wavelength,
    /// then `rx,tx,distance_m,magnitude,phase_rad`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<channel csv>", e);
        writeln!(
            out,
            "# rows={} cols={} wavelength_m={}",
            self.rx_len(),
            self.tx_len(),
            self.wavelength
        )
        .map_err(io)?;
        writeln!(out, "rx,tx,distance_m,magnitude,phase_rad").map_err(io)?;
        for n in 0..self.rx_len() {
            for m in 0..self.tx_len() {
                let c = self.entries[(n, m)];
                writeln!(
                    out,
                    "{n},{m},{},{},{}",
                    self.distances[(n, m)],
                    c.norm(),
                    c.arg()
                )
                .map_err(io)?;
            }
        }
        Ok(())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Channel from every element of `from` to every element of `to`.
/// Rows index `to`, columns index `from`.
pub fn channel_between(
    from: &ArrayGeometry,
    to: &ArrayGeometry,
    wavelength: f64,
    pattern_from: &GainPattern,
    pattern_to: &GainPattern,
    phi0: f64,
) -> Result<ChannelMatrix> {
    if !(wavelength > 0.0) {
        return Err(Error::input("wavelength must be positive"));
    }
    let k = 2.0 * PI / wavelength;
    let n_rows = to.len();
    let n_cols = from.len();
    let from_pos = from.element_positions();
    let to_pos = to.element_positions();
    let b_from = from.boresight();
    let b_to = to.boresight();

    let mut entries = vec![C64::new(0.0, 0.0); n_rows * n_cols];
    let mut distances = vec![0.0; n_rows * n_cols];
    // Column-major storage: one chunk per transmit element.
    entries
        .par_chunks_mut(n_rows)
        .zip(distances.par_chunks_mut(n_rows))
        .enumerate()
        .try_for_each(|(m, (col, dcol))| -> Result<()> {
            let p = from_pos[m];
            for (n, (entry, dist)) in col.iter_mut().zip(dcol.iter_mut()).enumerate() {
                let d = to_pos[n] - p;
                let l = d.norm();
                if !(l > 0.0) {
                    return Err(Error::degenerate(format!(
                        "transmit element {m} coincides with receive element {n}"
                    )));
                }
                let g_from = pattern_from.gain_cos(d.dot(&b_from) / l);
                let g_to = pattern_to.gain_cos((-d).dot(&b_to) / l);
                let amplitude = wavelength / (4.0 * PI * l) * (g_from * g_to).sqrt();
                *entry = C64::from_polar(amplitude, -(k * l - phi0));
                *dist = l;
            }
            Ok(())
        })?;
    ChannelMatrix::from_parts(
        DMatrix::from_vec(n_rows, n_cols, entries),
        DMatrix::from_vec(n_rows, n_cols, distances),
        wavelength,
    )
}

/// Channel from transmitter `tx` to the receiver array with zero initial phase.
pub fn build_channel(
    scenario: &Scenario,
    tx: ArrayId,
    pattern_tx: &GainPattern,
    pattern_rx: &GainPattern,
) -> Result<ChannelMatrix> {
    build_channel_with_phase(scenario, tx, pattern_tx, pattern_rx, 0.0)
}

pub fn build_channel_with_phase(
    scenario: &Scenario,
    tx: ArrayId,
    pattern_tx: &GainPattern,
    pattern_rx: &GainPattern,
    phi0: f64,
) -> Result<ChannelMatrix> {
    if tx == ArrayId::Rx {
        return Err(Error::input("channel source must be a transmitter"));
    }
    channel_between(
        scenario.array(tx),
        &scenario.rx,
        scenario.wavelength,
        pattern_tx,
        pattern_rx,
        phi0,
    )
}

/// Per-receive-element power `|Σ_m C[n][m] a_m|²` and their sum, W.
pub fn receive_power(channel: &ChannelMatrix, tx_amplitudes: &DVector<C64>) -> Result<(Vec<f64>, f64)> {
    if tx_amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::input("transmit amplitudes must be finite"));
    }
    let field = channel.propagate(tx_amplitudes)?;
    let per_element: Vec<f64> = field.iter().map(|c| c.norm_sqr()).collect();
    let total = per_element.iter().sum();
    Ok((per_element, total))
}

/// Total received power over total transmitted power.
pub fn transmission_efficiency(channel: &ChannelMatrix, tx_amplitudes: &DVector<C64>) -> Result<f64> {
    let p_tx: f64 = tx_amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if !(p_tx > 0.0) {
        return Err(Error::input("transmit power must be positive"));
    }
    let (_, p_rx) = receive_power(channel, tx_amplitudes)?;
    Ok(p_rx / p_tx)
}
