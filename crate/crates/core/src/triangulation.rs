//! Receiver position from two bearings and the known transmitter baseline.
//!
//! The triangle (Tx1, Tx2, Rx) has interior angles γ1 at Tx1 and γ2 at Tx2,
//! both measured as unsigned angles between the bearing and the baseline.
//! The sine rule gives `R1 = d · sin γ2 / sin(γ1 + γ2)` and the estimate is
//! `tx1 + R1 · u1`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{direction_to_unit_vector, Scenario, SphericalDirection};

/// `sin(γ1 + γ2)` below this makes the range unbounded.
pub const SINE_TOLERANCE: f64 = 1e-6;
/// Smallest interior angle accepted, radians.
const MIN_INTERIOR_ANGLE: f64 = 1e-9;
/// Bearings whose closest approach exceeds this are flagged, meters.
pub const SKEW_TOLERANCE_M: f64 = 0.01;

/// Two bearings, each expressed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangulationInput {
    pub doa1: SphericalDirection,
    pub doa2: SphericalDirection,
    pub tx1_origin: Vector3<f64>,
    pub tx2_origin: Vector3<f64>,
    pub baseline_d: f64,
}

impl TriangulationInput {
    pub fn new(
        doa1: SphericalDirection,
        doa2: SphericalDirection,
        tx1_origin: Vector3<f64>,
        tx2_origin: Vector3<f64>,
    ) -> Result<Self> {
        let baseline_d = (tx2_origin - tx1_origin).norm();
        if !(baseline_d > 0.0) {
            return Err(Error::degenerate("transmitters share the same origin"));
        }
        Ok(Self {
            doa1,
            doa2,
            tx1_origin,
            tx2_origin,
            baseline_d,
        })
    }

    /// Bearings measured in each transmitter's local frame, rotated to world.
    pub fn from_local(
        scenario: &Scenario,
        doa1_local: SphericalDirection,
        doa2_local: SphericalDirection,
    ) -> Result<Self> {
        Self::new(
            scenario.tx1.direction_to_world(doa1_local),
            scenario.tx2.direction_to_world(doa2_local),
            scenario.tx1.origin(),
            scenario.tx2.origin(),
        )
    }

    fn baseline_unit(&self) -> Vector3<f64> {
        (self.tx2_origin - self.tx1_origin) / self.baseline_d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    Ok,
    NearDegenerate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionEstimate {
    pub coordinates: Vector3<f64>,
    pub range_r1: f64,
    pub range_r2: f64,
    pub interior_angles: (f64, f64),
    /// Closest approach between the two bearing lines, meters.
    pub skew_distance: f64,
    pub condition_flag: ConditionFlag,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Unsigned interior angles (γ1 at Tx1 against the baseline, γ2 at Tx2 against its reverse).
pub fn interior_angles(input: &TriangulationInput) -> Result<(f64, f64)> {
    let b = input.baseline_unit();
    let u1 = direction_to_unit_vector(input.doa1);
    let u2 = direction_to_unit_vector(input.doa2);
    if !(u1.iter().chain(u2.iter()).all(|v| v.is_finite())) {
        return Err(Error::input("bearing angles must be finite"));
    }
    let g1 = angle_between(&u1, &b);
    let g2 = angle_between(&u2, &(-b));
    if g1 < MIN_INTERIOR_ANGLE || g2 < MIN_INTERIOR_ANGLE {
        return Err(Error::degenerate("receiver bearing lies along the baseline"));
    }
    if g1 + g2 >= PI {
        return Err(Error::degenerate(format!(
            "bearings diverge: γ1 + γ2 = {:.6}° ≥ 180°",
            (g1 + g2).to_degrees()
        )));
    }
    Ok((g1, g2))
}

/// `R1 = d · sin γ2 / sin(γ1 + γ2)`.
pub fn range_from_sine_rule(gamma1: f64, gamma2: f64, baseline_d: f64) -> Result<f64> {
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::degenerate("interior angles must be positive"));
    }
    if !(baseline_d > 0.0) {
        return Err(Error::degenerate("baseline must be positive"));
    }
    let s = (gamma1 + gamma2).sin();
    if !(gamma1 + gamma2 < PI) || s < SINE_TOLERANCE {
        return Err(Error::degenerate(format!(
            "near-parallel bearings: sin(γ1 + γ2) = {s:e}"
        )));
    }
    Ok(baseline_d * gamma2.sin() / s)
}

fn skew_distance(input: &TriangulationInput, u1: &Vector3<f64>, u2: &Vector3<f64>) -> f64 {
    let w = input.tx2_origin - input.tx1_origin;
    let n = u1.cross(u2);
    let nn = n.norm();
    if nn < 1e-15 {
        // Parallel lines: perpendicular distance from one line to the other.
        return (w - u1 * w.dot(u1)).norm();
    }
    (w.dot(&n) / nn).abs()
}

pub fn triangulate(input: &TriangulationInput) -> Result<PositionEstimate> {
    let (g1, g2) = interior_angles(input)?;
    let r1 = range_from_sine_rule(g1, g2, input.baseline_d)?;
    let r2 = input.baseline_d * g1.sin() / (g1 + g2).sin();
    let u1 = direction_to_unit_vector(input.doa1);
    let u2 = direction_to_unit_vector(input.doa2);
    let skew = skew_distance(input, &u1, &u2);
    Ok(PositionEstimate {
        coordinates: input.tx1_origin + u1 * r1,
        range_r1: r1,
        range_r2: r2,
        interior_angles: (g1, g2),
        skew_distance: skew,
        condition_flag: if skew > SKEW_TOLERANCE_M {
            ConditionFlag::NearDegenerate
        } else {
            ConditionFlag::Ok
        },
    })
}

/// `sqrt(mean ‖p̂_i − p‖²)`.
pub fn rmse(trials: &[Vector3<f64>], truth: &Vector3<f64>) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::input("no trials to aggregate"));
    }
    let sum: f64 = trials.iter().map(|p| (p - truth).norm_squared()).sum();
    Ok((sum / trials.len() as f64).sqrt())
}

/// `trial,x_hat,y_hat,z_hat,err_x,err_y,err_z,err_norm`.
pub fn write_trials_csv<W: Write>(
    mut out: W,
    trials: &[Vector3<f64>],
    truth: &Vector3<f64>,
) -> Result<()> {
    let io = |e| Error::io("<trial csv>", e);
    writeln!(out, "trial,x_hat,y_hat,z_hat,err_x,err_y,err_z,err_norm").map_err(io)?;
    for (i, p) in trials.iter().enumerate() {
        let e = p - truth;
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            p.x,
            p.y,
            p.z,
            e.x,
            e.y,
            e.z,
            e.norm()
        )
        .map_err(io)?;
    }
    Ok(())
}
