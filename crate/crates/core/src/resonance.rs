//! Phase-conjugate round-trip iteration between one transmitter and the
//! passive receiver, and spatial field maps of the resulting beam.
//!
//! One round trip maps the transmit amplitudes `a` to
//!
//! ```text
//! b = C a                          (arrives at Rx)
//! r = sqrt(δ) · conj(b) · e^{jΔφ_R} (reflected)
//! c = Cᵀ r                         (arrives back at Tx)
//! a' = sqrt(f_PA(|c|²)) · e^{j(−arg c + Δφ_T)}
//! ```
//!
//! In the linear regime `a' ∝ CᴴC a`, so the loop is a power iteration whose
//! fixed direction is the dominant right singular vector of `C`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, ChannelMatrix, GainPattern, FREE_SPACE_IMPEDANCE};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, ArrayGeometry};
use crate::C64;

/// Transmit power above which the loop is considered to have diverged.
const DIVERGENCE_POWER: f64 = 1e100;
/// Transmit power below which the loop is considered to have died out.
const UNDERFLOW_POWER: f64 = 1e-280;

/// Per-element power amplifier `f_PA(p) = min(gain · p, p_saturation)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifierModel {
    pub gain_linear: f64,
    /// Output cap per element, W. `f64::INFINITY` disables saturation.
    pub p_saturation: f64,
}

impl AmplifierModel {
    pub fn new(gain_linear: f64, p_saturation: f64) -> Result<Self> {
        if !(gain_linear > 0.0 && gain_linear.is_finite()) {
            return Err(Error::config(format!(
                "amplifier gain must be positive, got {gain_linear}"
            )));
        }
        if !(p_saturation > 0.0) {
            return Err(Error::config(format!(
                "saturation power must be positive, got {p_saturation}"
            )));
        }
        Ok(Self {
            gain_linear,
            p_saturation,
        })
    }

    pub fn from_db(gain_db: f64, p_saturation: f64) -> Result<Self> {
        Self::new(db_to_linear(gain_db), p_saturation)
    }

    pub fn linear(gain_linear: f64) -> Result<Self> {
        Self::new(gain_linear, f64::INFINITY)
    }

    #[inline]
    pub fn output_power(&self, input_power: f64) -> f64 {
        (self.gain_linear * input_power).min(self.p_saturation)
    }

    #[inline]
    pub fn saturates(&self, input_power: f64) -> bool {
        self.gain_linear * input_power >= self.p_saturation
    }
}

/// `−phase_in + delta_phi`, wrapped to (−π, π].
pub fn conjugate_phase(phase_in: f64, delta_phi: f64) -> f64 {
    wrap_angle(-phase_in + delta_phi)
}

/// Passive receiver: re-radiate a fraction `δ` of the incident power with conjugated phase.
pub fn rx_reflect(
    rx_incident: &DVector<C64>,
    reflection_ratio: f64,
    delta_phi: f64,
) -> Result<DVector<C64>> {
    if !(reflection_ratio > 0.0 && reflection_ratio <= 1.0) {
        return Err(Error::config(format!(
            "reflection ratio must lie in (0, 1], got {reflection_ratio}"
        )));
    }
    let scale = C64::from_polar(reflection_ratio.sqrt(), delta_phi);
    Ok(rx_incident.map(|b| b.conj() * scale))
}

/// Active transmitter: amplify each element's incident power and conjugate its phase.
pub fn tx_amplify(tx_incident: &DVector<C64>, amp: &AmplifierModel, delta_phi: f64) -> DVector<C64> {
    tx_incident.map(|c| {
        let p = c.norm_sqr();
        if p == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(amp.output_power(p).sqrt(), conjugate_phase(c.arg(), delta_phi))
        }
    })
}

/// Loop parameters other than the amplifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub reflection_ratio: f64,
    /// Total initial transmit power, spread uniformly with zero phase, W.
    pub initial_tx_power: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub delta_phi_tx: f64,
    pub delta_phi_rx: f64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            reflection_ratio: 0.004,
            initial_tx_power: 1e-3,
            tolerance: 1e-6,
            max_iterations: 1000,
            delta_phi_tx: 0.0,
            delta_phi_rx: 0.0,
        }
    }
}

impl ResonanceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.initial_tx_power > 0.0 && self.initial_tx_power.is_finite()) {
            return Err(Error::config("initial transmit power must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if !(self.reflection_ratio > 0.0 && self.reflection_ratio <= 1.0) {
            return Err(Error::config(format!(
                "reflection ratio must lie in (0, 1], got {}",
                self.reflection_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub iteration: usize,
    pub p_tx_total: f64,
    pub p_rx_total: f64,
    pub efficiency: f64,
    /// Largest single-element transmit power in this round trip, W.
    pub p_tx_max_element: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceState {
    /// Transmit amplitudes of the last recorded round trip (`|a_m|² = P_Tm`).
    pub tx_amplitudes: DVector<C64>,
    /// `C · tx_amplitudes`.
    pub rx_amplitudes: DVector<C64>,
    /// Echo arriving back at the transmitter in the last round trip.
    pub tx_incident: DVector<C64>,
    pub iteration: usize,
    pub power_history: Vec<PowerRecord>,
    /// Power, efficiency and mode all settled within tolerance.
    pub converged: bool,
    /// Mode shape and efficiency settled; total power may still drift
    /// (e.g. a sub-unity linear loop that decays geometrically).
    pub mode_converged: bool,
}

impl ResonanceState {
    pub fn efficiency(&self) -> f64 {
        self.power_history.last().map_or(0.0, |r| r.efficiency)
    }

    /// Per-element echo power `|c_m|²` at the transmitter, W.
    pub fn echo_powers(&self) -> Vec<f64> {
        self.tx_incident.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `iteration,p_tx_total,p_rx_total,efficiency`.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<power history csv>", e);
        writeln!(out, "iteration,p_tx_total,p_rx_total,efficiency").map_err(io)?;
        for r in &self.power_history {
            writeln!(
                out,
                "{},{},{},{}",
                r.iteration, r.p_tx_total, r.p_rx_total, r.efficiency
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

fn alignment(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dotc(b).norm() / (na * nb)
}

fn relative_change(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        (new - old).abs() / new.abs().max(old.abs())
    }
}

/// Iterate the round trip from a uniform zero-phase start until the loop
/// settles, dies out, diverges or hits `max_iterations`.
pub fn run_resonance(
    channel: &ChannelMatrix,
    amp: &AmplifierModel,
    config: &ResonanceConfig,
) -> Result<ResonanceState> {
    config.validate()?;
    let m = channel.tx_len();
    let start = (config.initial_tx_power / m as f64).sqrt();
    let a0 = DVector::from_element(m, C64::new(start, 0.0));
    run_resonance_from(channel, amp, config, a0)
}

/// As [`run_resonance`] with an explicit starting excitation.
pub fn run_resonance_from(
    channel: &ChannelMatrix,
    amp: &AmplifierModel,
    config: &ResonanceConfig,
    initial: DVector<C64>,
) -> Result<ResonanceState> {
    config.validate()?;
    if initial.len() != channel.tx_len() {
        return Err(Error::DimensionMismatch {
            expected: channel.tx_len(),
            found: initial.len(),
        });
    }
    let tol = config.tolerance;
    let mut a = initial;
    let mut history: Vec<PowerRecord> = Vec::new();
    let mut prev_a: Option<DVector<C64>> = None;
    let mut converged = false;
    let mut mode_converged = false;
    let mut b;
    let mut c;
    let mut iteration = 0;

    loop {
        iteration += 1;
        let p_tx: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let p_tx_max = a.iter().map(|x| x.norm_sqr()).fold(0.0, f64::max);
        b = channel.propagate(&a)?;
        let p_rx: f64 = b.iter().map(|x| x.norm_sqr()).sum();
        let efficiency = if p_tx > 0.0 { p_rx / p_tx } else { 0.0 };
        history.push(PowerRecord {
            iteration,
            p_tx_total: p_tx,
            p_rx_total: p_rx,
            efficiency,
            p_tx_max_element: p_tx_max,
        });

        let r = rx_reflect(&b, config.reflection_ratio, config.delta_phi_rx)?;
        c = channel.propagate_back(&r)?;
        let saturated = c.iter().any(|x| amp.saturates(x.norm_sqr()));

        if let (Some(prev), [.., before, last]) = (&prev_a, history.as_slice()) {
            let mode_ok = alignment(&a, prev) >= 1.0 - tol
                && relative_change(last.efficiency, before.efficiency) <= tol;
            let power_ok = relative_change(last.p_rx_total, before.p_rx_total) <= tol;
            mode_converged = mode_ok;
            if mode_ok && power_ok {
                converged = true;
                break;
            }
            // A linear loop whose power cannot settle: it either decays
            // forever or grows with no cap. The mode is all we will get.
            let decaying = last.p_rx_total < before.p_rx_total;
            if mode_ok && !saturated && (decaying || amp.p_saturation.is_infinite()) {
                break;
            }
        }
        if !(p_tx.is_finite() && p_tx < DIVERGENCE_POWER) {
            log::warn!("resonance diverged at iteration {iteration} (P_T = {p_tx:e} W)");
            mode_converged = false;
            break;
        }
        if p_tx < UNDERFLOW_POWER {
            log::warn!("resonance died out at iteration {iteration}");
            break;
        }
        if iteration >= config.max_iterations {
            break;
        }
        let next = tx_amplify(&c, amp, config.delta_phi_tx);
        prev_a = Some(std::mem::replace(&mut a, next));
    }

    Ok(ResonanceState {
        tx_amplitudes: a,
        rx_amplitudes: b,
        tx_incident: c,
        iteration,
        power_history: history,
        converged,
        mode_converged,
    })
}

/// Axis-aligned box sampled on a regular lattice. Points are ordered with x
/// varying fastest, then y, then z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Result<Vec<Vector3<f64>>> {
        if self.is_empty() {
            return Err(Error::config("field-map grid has no points"));
        }
        for ax in 0..3 {
            if !(self.min[ax] <= self.max[ax]) {
                return Err(Error::config("field-map grid bounds are inverted"));
            }
        }
        let axis = |ax: usize, i: usize| {
            if self.counts[ax] == 1 {
                0.5 * (self.min[ax] + self.max[ax])
            } else {
                self.min[ax] + (self.max[ax] - self.min[ax]) * i as f64 / (self.counts[ax] - 1) as f64
            }
        };
        let [nx, ny, nz] = self.counts;
        let mut pts = Vec::with_capacity(self.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    pts.push(Vector3::new(axis(0, i), axis(1, j), axis(2, k)));
                }
            }
        }
        Ok(pts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldMap {
    pub grid: Option<GridSpec>,
    pub grid_points: Vec<Vector3<f64>>,
    /// W/m² at each point.
    pub power_density: Vec<f64>,
    pub iteration_snapshot: usize,
}

impl FieldMap {
    /// Add the power of an independent (mutually incoherent) source.
    pub fn accumulate(&mut self, other: &FieldMap) -> Result<()> {
        if self.grid_points != other.grid_points {
            return Err(Error::input("field maps are sampled on different points"));
        }
        for (p, q) in self.power_density.iter_mut().zip(&other.power_density) {
            *p += q;
        }
        Ok(())
    }

    pub fn peak(&self) -> Option<(Vector3<f64>, f64)> {
        self.power_density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &p)| (self.grid_points[i], p))
    }

    /// `x,y,z,power_density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<field map csv>", e);
        writeln!(out, "x,y,z,power_density").map_err(io)?;
        for (p, w) in self.grid_points.iter().zip(&self.power_density) {
            writeln!(out, "{},{},{},{}", p.x, p.y, p.z, w).map_err(io)?;
        }
        Ok(())
    }

    /// Dense lattice for plotting: two header lines with the counts and bounds,
    /// then one value per line in x-fastest order.
    pub fn write_dense<W: Write>(&self, mut out: W) -> Result<()> {
        let grid = self
            .grid
            .ok_or_else(|| Error::input("field map was not sampled on a regular grid"))?;
        let io = |e| Error::io("<field map grid>", e);
        writeln!(out, "# nx={} ny={} nz={}", grid.counts[0], grid.counts[1], grid.counts[2]).map_err(io)?;
        writeln!(
            out,
            "# bounds={},{},{},{},{},{}",
            grid.min[0], grid.max[0], grid.min[1], grid.max[1], grid.min[2], grid.max[2]
        )
        .map_err(io)?;
        for w in &self.power_density {
            writeln!(out, "{w}").map_err(io)?;
        }
        Ok(())
    }
}

/// Coherent field of one transmitting array at arbitrary points.
pub fn field_at_points(
    array: &ArrayGeometry,
    amplitudes: &DVector<C64>,
    wavelength: f64,
    pattern: &GainPattern,
    points: &[Vector3<f64>],
) -> Result<Vec<f64>> {
    if amplitudes.len() != array.len() {
        return Err(Error::DimensionMismatch {
            expected: array.len(),
            found: amplitudes.len(),
        });
    }
    let k = 2.0 * PI / wavelength;
    let positions = array.element_positions();
    let boresight = array.boresight();
    let mu = FREE_SPACE_IMPEDANCE;
    points
        .par_iter()
        .map(|r| {
            let mut e = C64::new(0.0, 0.0);
            for (p, a) in positions.iter().zip(amplitudes.iter()) {
                let d = r - p;
                let l = d.norm();
                if !(l > 0.0) {
                    return Err(Error::degenerate(format!(
                        "field point ({}, {}, {}) coincides with an element",
                        r.x, r.y, r.z
                    )));
                }
                let p_m = a.norm_sqr();
                if p_m == 0.0 {
                    continue;
                }
                let g = pattern.gain_cos(d.dot(&boresight) / l);
                let w = p_m * g / (4.0 * PI * l * l);
                e += C64::from_polar((2.0 * mu * w).sqrt(), -(k * l - a.arg()));
            }
            Ok(e.norm_sqr() / (2.0 * mu))
        })
        .collect()
}

/// Power density of one transmitter's current excitation over `grid`.
pub fn compute_field_map(
    state: &ResonanceState,
    array: &ArrayGeometry,
    wavelength: f64,
    pattern: &GainPattern,
    grid: &GridSpec,
) -> Result<FieldMap> {
    let points = grid.points()?;
    let power_density = field_at_points(array, &state.tx_amplitudes, wavelength, pattern, &points)?;
    Ok(FieldMap {
        grid: Some(*grid),
        grid_points: points,
        power_density,
        iteration_snapshot: state.iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel, channel_between};
    use crate::geometry::{build_scenario, ArrayConfig, ArrayId, ScenarioConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(origin: [f64; 3], boresight: [f64; 3]) -> ArrayGeometry {
        ArrayConfig { rows: 1, cols: 1, boresight, ..ArrayConfig::transmitter(origin) }
            .build()
            .unwrap()
    }

    fn small_channel(n: usize, rx: [f64; 3]) -> ChannelMatrix {
        let s = build_scenario(&ScenarioConfig {
            tx1: ArrayConfig { rows: n, cols: n, ..ArrayConfig::transmitter([0.0, 0.0, 0.0]) },
            tx2: ArrayConfig { rows: 1, cols: 1, ..ArrayConfig::transmitter([2.0, 0.0, 0.0]) },
            rx: ArrayConfig { rows: n, cols: n, ..ArrayConfig::receiver(rx) },
            ..ScenarioConfig::default()
        })
        .unwrap();
        build_channel(&s, ArrayId::Tx1, &GainPattern::default(), &GainPattern::default()).unwrap()
    }

    fn top_singular(c: &ChannelMatrix) -> (f64, DVector<C64>) {
        let svd = c.entries().clone().svd(false, true);
        let (k, &s) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        (s, svd.v_t.unwrap().row(k).adjoint())
    }

    #[test]
    fn conjugate_phase_examples() {
        assert_abs_diff_eq!(conjugate_phase(0.3, 0.0), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(conjugate_phase(PI, 0.0), PI, epsilon = 1e-15);
        let (kl, phi0, dphi) = (2.1, 0.4, 0.2);
        assert_abs_diff_eq!(
            conjugate_phase(-kl + phi0, dphi),
            wrap_angle(kl - phi0 + dphi),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rx_reflect_examples() {
        let x = DVector::from_vec(vec![C64::from_polar(1e-3f64.sqrt(), 0.9), C64::new(0.0, 0.0)]);
        let pure = rx_reflect(&x, 1.0, 0.0).unwrap();
        assert_eq!(pure[0], x[0].conj());
        let r = rx_reflect(&x, 0.004, 0.0).unwrap();
        assert_relative_eq!(r[0].norm_sqr(), 4e-6, max_relative = 1e-12);
        assert_eq!(r[1], C64::new(0.0, 0.0));
        assert!(rx_reflect(&x, 0.0, 0.0).is_err());
        assert!(rx_reflect(&x, 1.5, 0.0).is_err());
    }

    #[test]
    fn tx_amplify_examples() {
        let amp = AmplifierModel::from_db(24.0, 1.0).unwrap();
        let x = DVector::from_vec(vec![
            C64::from_polar(1e-6f64.sqrt(), -1.2),
            C64::from_polar(1.0, 0.5),
            C64::new(0.0, 0.0),
        ]);
        let y = tx_amplify(&x, &amp, 0.0);
        assert_relative_eq!(y[0].norm_sqr(), 251.19e-6, max_relative = 1e-4);
        assert_abs_diff_eq!(y[0].arg(), 1.2, epsilon = 1e-12);
        assert_relative_eq!(y[1].norm_sqr(), 1.0, max_relative = 1e-12);
        assert_abs_diff_eq!(y[1].arg(), -0.5, epsilon = 1e-12);
        assert_eq!(y[2], C64::new(0.0, 0.0));
    }

    #[test]
    fn amplifier_is_monotone_and_clipped() {
        let amp = AmplifierModel::new(100.0, 0.5).unwrap();
        assert_eq!(amp.output_power(0.0), 0.0);
        let mut prev = 0.0;
        for i in 0..100 {
            let out = amp.output_power(i as f64 * 1e-3);
            assert!(out >= prev && out <= 0.5);
            prev = out;
        }
        assert!(AmplifierModel::new(0.0, 1.0).is_err());
        assert!(AmplifierModel::new(1.0, 0.0).is_err());
    }

    #[test]
    fn single_element_settles_at_friis_coupling() {
        let tx = single([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let rx = single([0.0, 0.0, 1.0], [0.0, 0.0, -1.0]);
        let iso = GainPattern::new(1.0, 0.0).unwrap();
        let c = channel_between(&tx, &rx, 0.01, &iso, &iso, 0.0).unwrap();
        let amp = AmplifierModel::from_db(40.0, 0.01).unwrap();
        let state = run_resonance(&c, &amp, &ResonanceConfig::default()).unwrap();
        assert!(state.mode_converged);
        assert!(state.iteration <= 2);
        assert_relative_eq!(state.efficiency(), 6.3326e-7, max_relative = 1e-4);
    }

    #[test]
    fn linear_mode_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let rx = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.3..1.5),
            ];
            let c = small_channel(4, rx);
            let (s1, v) = top_singular(&c);
            let cfg = ResonanceConfig::default();
            // Unit loop gain keeps the power level stable.
            let amp = AmplifierModel::linear(1.0 / (cfg.reflection_ratio * s1.powi(4))).unwrap();
            let state = run_resonance(&c, &amp, &cfg).unwrap();
            assert!(state.mode_converged, "not converged after {}", state.iteration);
            assert!(alignment(&state.tx_amplitudes, &v) >= 0.999);
            assert_relative_eq!(state.efficiency(), s1 * s1, max_relative = 1e-4);
        }
    }

    #[test]
    fn ramp_up_is_monotone_without_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..=5);
            let rx = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.3..2.0),
            ];
            let c = small_channel(n, rx);
            let cfg = ResonanceConfig { max_iterations: 40, ..ResonanceConfig::default() };
            let a0 = DVector::from_element(n * n, C64::new(1.0, 0.0));
            let eff0 = crate::channel::transmission_efficiency(&c, &a0).unwrap();
            // Loop gain exceeds one from the first round trip.
            let amp = AmplifierModel::linear(2.0 / (cfg.reflection_ratio * eff0 * eff0)).unwrap();
            let state = run_resonance(&c, &amp, &cfg).unwrap();
            for w in state.power_history.windows(2) {
                assert!(w[1].p_rx_total >= w[0].p_rx_total);
            }
        }
    }

    #[test]
    fn saturation_caps_every_element() {
        let c = small_channel(6, [0.1, 0.2, 0.6]);
        let amp = AmplifierModel::from_db(80.0, 2e-3).unwrap();
        let state = run_resonance(&c, &amp, &ResonanceConfig::default()).unwrap();
        assert!(state.converged);
        for r in &state.power_history {
            assert!(r.p_tx_max_element <= 2e-3 * (1.0 + 1e-12));
            assert!((0.0..=1.0).contains(&r.efficiency));
        }
        assert!(state.power_history.last().unwrap().p_rx_total > state.power_history[0].p_rx_total);
    }

    #[test]
    fn runs_are_bit_identical() {
        let c = small_channel(5, [0.3, -0.1, 1.0]);
        let amp = AmplifierModel::from_db(70.0, 1e-2).unwrap();
        let a = run_resonance(&c, &amp, &ResonanceConfig::default()).unwrap();
        let b = run_resonance(&c, &amp, &ResonanceConfig::default()).unwrap();
        assert_eq!(a.power_history, b.power_history);
        assert_eq!(a.tx_amplitudes, b.tx_amplitudes);
    }

    #[test]
    fn unbounded_growth_is_not_converged_power() {
        let c = small_channel(3, [0.0, 0.0, 0.5]);
        let (s1, _) = top_singular(&c);
        let cfg = ResonanceConfig { max_iterations: 5000, ..ResonanceConfig::default() };
        let amp = AmplifierModel::linear(1e3 / (cfg.reflection_ratio * s1.powi(4))).unwrap();
        let state = run_resonance(&c, &amp, &cfg).unwrap();
        assert!(!state.converged);
        assert!(state.mode_converged);
    }

    #[test]
    fn history_csv_layout() {
        let c = small_channel(2, [0.0, 0.0, 0.5]);
        let amp = AmplifierModel::from_db(40.0, 1e-2).unwrap();
        let state = run_resonance(&c, &amp, &ResonanceConfig::default()).unwrap();
        let mut buf = Vec::new();
        state.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,p_tx_total,p_rx_total,efficiency");
        assert_eq!(text.lines().count(), state.power_history.len() + 1);
    }

    #[test]
    fn single_element_field_falls_off_as_inverse_square() {
        let tx = single([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let a = DVector::from_element(1, C64::new(1.0, 0.0));
        let p = GainPattern::default();
        let pts: Vec<_> = [1.0, 2.0, 4.0].iter().map(|&z| Vector3::new(0.0, 0.0, z)).collect();
        let w = field_at_points(&tx, &a, 0.01, &p, &pts).unwrap();
        assert_relative_eq!(w[0], p.g_max / (4.0 * PI), max_relative = 1e-12);
        assert_relative_eq!(w[0] / w[1], 4.0, max_relative = 1e-12);
        assert_relative_eq!(w[1] / w[2], 4.0, max_relative = 1e-12);
        assert!(field_at_points(&tx, &a, 0.01, &p, &[Vector3::zeros()]).is_err());
    }

    #[test]
    fn grid_points_and_dense_export() {
        let grid = GridSpec { min: [0.0, -1.0, 1.0], max: [1.0, 1.0, 1.0], counts: [2, 3, 1] };
        let pts = grid.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], Vector3::new(1.0, -1.0, 1.0));
        assert_eq!(pts[2], Vector3::new(0.0, 0.0, 1.0));
        let tx = single([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let state = ResonanceState {
            tx_amplitudes: DVector::from_element(1, C64::new(1.0, 0.0)),
            rx_amplitudes: DVector::zeros(1),
            tx_incident: DVector::zeros(1),
            iteration: 0,
            power_history: Vec::new(),
            converged: false,
            mode_converged: false,
        };
        let map = compute_field_map(&state, &tx, 0.01, &GainPattern::default(), &grid).unwrap();
        assert!(map.power_density.iter().all(|&w| w >= 0.0));
        let mut buf = Vec::new();
        map.write_dense(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# nx=2 ny=3 nz=1\n# bounds=0,1,-1,1,1,1\n"));
        assert_eq!(text.lines().count(), 8);

        let mut sum = map.clone();
        sum.accumulate(&map).unwrap();
        assert_relative_eq!(sum.power_density[0], 2.0 * map.power_density[0]);
        let empty = GridSpec { counts: [0, 1, 1], ..grid };
        assert!(empty.points().is_err());
    }
}
