//! Scenario geometry: element lattices, array placement and the spherical
//! angle convention shared by every other module.
//!
//! Angles follow the `u = (sin θ cos φ, sin θ sin φ, cos θ)` convention: the
//! elevation θ is measured from an array's boresight (local +z) and the
//! azimuth φ from its in-plane axis (local +x), wrapped to (−π, π].
//!
//! Each array carries a right-handed local frame
//! `(in_plane_axis, boresight × in_plane_axis, boresight)`. Element `(r, c)`
//! sits at local `((c − (cols−1)/2)·s, (r − (rows−1)/2)·s, 0)` and is stored
//! at index `r·cols + c`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Orthonormality tolerance for array orientation vectors.
const ORIENTATION_TOL: f64 = 1e-12;

const WAVELENGTH_REL_TOL: f64 = 1e-6;

/// Wrap an angle to (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rectangular lattice of elements in an array's local plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementGrid {
    rows: usize,
    cols: usize,
    spacing: f64,
    local_positions: Vec<Vector3<f64>>,
}

impl ElementGrid {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!(
                "element grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::config(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        let x0 = (cols as f64 - 1.0) / 2.0;
        let y0 = (rows as f64 - 1.0) / 2.0;
        let local_positions = (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| {
                    Vector3::new((c as f64 - x0) * spacing, (r as f64 - y0) * spacing, 0.0)
                })
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            spacing,
            local_positions,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.local_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_positions.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Element coordinates in the array's local frame, meters.
    pub fn local_positions(&self) -> &[Vector3<f64>] {
        &self.local_positions
    }
}

/// One antenna array placed in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    grid: ElementGrid,
    origin: Vector3<f64>,
    boresight: Vector3<f64>,
    in_plane_axis: Vector3<f64>,
    /// Columns are the local x, y, z axes expressed in world coordinates.
    rotation: Matrix3<f64>,
    world_positions: Vec<Vector3<f64>>,
}

impl ArrayGeometry {
    /// Place `grid` at `origin`. Orientation vectors are normalized first and
    /// must then be orthogonal.
    pub fn new(
        grid: ElementGrid,
        origin: Vector3<f64>,
        boresight: Vector3<f64>,
        in_plane_axis: Vector3<f64>,
    ) -> Result<Self> {
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::config("array origin must be finite"));
        }
        let b_norm = boresight.norm();
        let i_norm = in_plane_axis.norm();
        if !(b_norm > 0.0 && b_norm.is_finite() && i_norm > 0.0 && i_norm.is_finite()) {
            return Err(Error::config(
                "array orientation vectors must be finite and non-zero",
            ));
        }
        let boresight = boresight / b_norm;
        let in_plane_axis = in_plane_axis / i_norm;
        let dot = boresight.dot(&in_plane_axis);
        if dot.abs() > ORIENTATION_TOL {
            return Err(Error::config(format!(
                "boresight and in-plane axis are not orthogonal (dot = {dot:e})"
            )));
        }
        let y_axis = boresight.cross(&in_plane_axis);
        let rotation = Matrix3::from_columns(&[in_plane_axis, y_axis, boresight]);
        let world_positions = grid
            .local_positions()
            .iter()
            .map(|p| origin + rotation * p)
            .collect();
        Ok(Self {
            grid,
            origin,
            boresight,
            in_plane_axis,
            rotation,
            world_positions,
        })
    }

    pub fn grid(&self) -> &ElementGrid {
        &self.grid
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn boresight(&self) -> Vector3<f64> {
        self.boresight
    }

    pub fn in_plane_axis(&self) -> Vector3<f64> {
        self.in_plane_axis
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn element_positions(&self) -> &[Vector3<f64>] {
        &self.world_positions
    }

    pub fn local_to_world(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn world_to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v
    }

    /// Direction from the array center to `point`, in the array's local frame.
    pub fn direction_to(&self, point: &Vector3<f64>) -> Result<SphericalDirection> {
        let d = point - self.origin;
        let norm = d.norm();
        if !(norm > 0.0) {
            return Err(Error::degenerate(
                "target point coincides with the array origin",
            ));
        }
        Ok(unit_vector_to_direction(&self.world_to_local(&(d / norm))))
    }

    /// Convert a direction measured in this array's local frame to the world frame.
    pub fn direction_to_world(&self, dir: SphericalDirection) -> SphericalDirection {
        unit_vector_to_direction(&self.local_to_world(&direction_to_unit_vector(dir)))
    }

    /// The centered `rows × cols` block of elements, as its own geometry,
    /// plus the parent indices of the selected elements in subarray order.
    pub fn central_subarray(&self, rows: usize, cols: usize) -> Result<(ArrayGeometry, Vec<usize>)> {
        if rows == 0 || cols == 0 || rows > self.grid.rows() || cols > self.grid.cols() {
            return Err(Error::config(format!(
                "subarray {rows}x{cols} does not fit in a {}x{} array",
                self.grid.rows(),
                self.grid.cols()
            )));
        }
        let r0 = (self.grid.rows() - rows) / 2;
        let c0 = (self.grid.cols() - cols) / 2;
        let indices: Vec<usize> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r0 + r, c0 + c)))
            .map(|(r, c)| self.grid.index(r, c))
            .collect();
        // Center of the selected block in the parent's local frame; non-zero
        // only when parities differ.
        let first = self.grid.local_positions()[indices[0]];
        let last = self.grid.local_positions()[indices[indices.len() - 1]];
        let center_local = (first + last) / 2.0;
        let sub = ArrayGeometry::new(
            ElementGrid::new(rows, cols, self.grid.spacing())?,
            self.origin + self.rotation * center_local,
            self.boresight,
            self.in_plane_axis,
        )?;
        Ok((sub, indices))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayId {
    Tx1,
    Tx2,
    Rx,
}

impl ArrayId {
    pub fn name(self) -> &'static str {
        match self {
            ArrayId::Tx1 => "tx1",
            ArrayId::Tx2 => "tx2",
            ArrayId::Rx => "rx",
        }
    }
}

/// (elevation θ, azimuth φ) in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    pub elevation_theta: f64,
    pub azimuth_phi: f64,
}

impl SphericalDirection {
    pub fn new(elevation_theta: f64, azimuth_phi: f64) -> Self {
        Self {
            elevation_theta,
            azimuth_phi,
        }
    }

    pub fn from_degrees(elevation_deg: f64, azimuth_deg: f64) -> Self {
        Self::new(elevation_deg.to_radians(), azimuth_deg.to_radians())
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_theta.to_degrees()
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_phi.to_degrees()
    }

    /// Same direction with the azimuth wrapped to (−π, π].
    pub fn wrapped(self) -> Self {
        Self::new(self.elevation_theta, wrap_angle(self.azimuth_phi))
    }

    /// Great-circle angle to another direction, radians.
    pub fn angle_to(&self, other: &SphericalDirection) -> f64 {
        let a = direction_to_unit_vector(*self);
        let b = direction_to_unit_vector(*other);
        // atan2 form stays accurate for tiny separations.
        a.cross(&b).norm().atan2(a.dot(&b))
    }
}

pub fn direction_to_unit_vector(dir: SphericalDirection) -> Vector3<f64> {
    let (st, ct) = dir.elevation_theta.sin_cos();
    let (sp, cp) = dir.azimuth_phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Inverse of [`direction_to_unit_vector`] for a unit (or any non-zero) vector.
pub fn unit_vector_to_direction(v: &Vector3<f64>) -> SphericalDirection {
    let rho = (v.x * v.x + v.y * v.y).sqrt();
    let theta = rho.atan2(v.z);
    let phi = if rho == 0.0 { 0.0 } else { v.y.atan2(v.x) };
    SphericalDirection::new(theta, phi).wrapped()
}

/// Serializable placement of one array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub origin: [f64; 3],
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_rows")]
    pub cols: usize,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    pub boresight: [f64; 3],
    #[serde(default = "default_in_plane")]
    pub in_plane_axis: [f64; 3],
}

fn default_rows() -> usize {
    40
}

fn default_spacing() -> f64 {
    0.005
}

fn default_in_plane() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl ArrayConfig {
    /// 40×40 transmitter in the z = const plane facing +z.
    pub fn transmitter(origin: [f64; 3]) -> Self {
        Self {
            origin,
            rows: default_rows(),
            cols: default_rows(),
            spacing_m: default_spacing(),
            boresight: [0.0, 0.0, 1.0],
            in_plane_axis: default_in_plane(),
        }
    }

    /// 40×40 receiver facing −z toward the transmitter plane.
    pub fn receiver(origin: [f64; 3]) -> Self {
        Self {
            boresight: [0.0, 0.0, -1.0],
            ..Self::transmitter(origin)
        }
    }

    pub fn build(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(
            ElementGrid::new(self.rows, self.cols, self.spacing_m)?,
            Vector3::from(self.origin),
            Vector3::from(self.boresight),
            Vector3::from(self.in_plane_axis),
        )
    }
}

/// Declarative scenario description. Missing fields take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frequency_hz: f64,
    /// Optional; checked against `frequency_hz` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
    pub tx1: ArrayConfig,
    pub tx2: ArrayConfig,
    pub rx: ArrayConfig,
}

fn default_frequency() -> f64 {
    30e9
}

impl Default for ScenarioConfig {
    /// Table-style defaults: 30 GHz, 40×40 arrays at half-wavelength pitch,
    /// transmitters at (0,0,0) and (2,0,0), receiver at (0,1,3).
    fn default() -> Self {
        Self {
            frequency_hz: default_frequency(),
            wavelength_m: None,
            tx1: ArrayConfig::transmitter([0.0, 0.0, 0.0]),
            tx2: ArrayConfig::transmitter([2.0, 0.0, 0.0]),
            rx: ArrayConfig::receiver([0.0, 1.0, 3.0]),
        }
    }
}

/// Fully materialized scenario. Immutable once built.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub tx1: ArrayGeometry,
    pub tx2: ArrayGeometry,
    pub rx: ArrayGeometry,
    pub wavelength: f64,
    pub frequency: f64,
    pub baseline_d: f64,
    /// Every Tx-element to Rx-element distance satisfies `l ≥ 2D²/λ`.
    pub far_field_ok: bool,
}

impl Scenario {
    pub fn array(&self, id: ArrayId) -> &ArrayGeometry {
        match id {
            ArrayId::Tx1 => &self.tx1,
            ArrayId::Tx2 => &self.tx2,
            ArrayId::Rx => &self.rx,
        }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Single-element far-field distance `2D²/λ`, with D the larger element pitch.
    pub fn far_field_distance(&self, tx: ArrayId) -> f64 {
        let d = self
            .array(tx)
            .grid()
            .spacing()
            .max(self.rx.grid().spacing());
        2.0 * d * d / self.wavelength
    }
}

fn min_pair_distance(a: &ArrayGeometry, b: &ArrayGeometry) -> f64 {
    a.element_positions()
        .iter()
        .flat_map(|p| b.element_positions().iter().map(move |q| (p - q).norm()))
        .fold(f64::INFINITY, f64::min)
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let f = config.frequency_hz;
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::config(format!("frequency must be positive, got {f}")));
    }
    let wavelength = SPEED_OF_LIGHT / f;
    if let Some(given) = config.wavelength_m {
        let rel = (given * f / SPEED_OF_LIGHT - 1.0).abs();
        if !(rel <= WAVELENGTH_REL_TOL) {
            return Err(Error::config(format!(
                "wavelength {given} m is inconsistent with frequency {f} Hz \
                 (expected {wavelength} m)"
            )));
        }
    }
    let tx1 = config.tx1.build()?;
    let tx2 = config.tx2.build()?;
    let rx = config.rx.build()?;
    let baseline_d = (tx2.origin() - tx1.origin()).norm();
    if !(baseline_d > 1e-12) {
        return Err(Error::degenerate("tx1 and tx2 share the same origin"));
    }
    let mut scenario = Scenario {
        tx1,
        tx2,
        rx,
        wavelength,
        frequency: f,
        baseline_d,
        far_field_ok: true,
    };
    for tx in [ArrayId::Tx1, ArrayId::Tx2] {
        let limit = scenario.far_field_distance(tx);
        let closest = min_pair_distance(scenario.array(tx), &scenario.rx);
        if closest < limit {
            log::warn!(
                "{}: closest element pair is {closest:.4} m, inside the single-element \
                 far-field distance {limit:.4} m",
                tx.name()
            );
            scenario.far_field_ok = false;
        }
    }
    Ok(scenario)
}

/// Exact direction from an array's center to `to_point`, in that array's local frame.
pub fn true_direction(
    scenario: &Scenario,
    from_array: ArrayId,
    to_point: &Vector3<f64>,
) -> Result<SphericalDirection> {
    scenario.array(from_array).direction_to(to_point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn table_defaults_build() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.tx1.len(), 1600);
        assert_abs_diff_eq!(s.wavelength, 0.01, epsilon = 1e-5);
        assert_abs_diff_eq!(s.baseline_d, 2.0, epsilon = 1e-15);
        assert!(s.far_field_ok);
    }

    #[test]
    fn zero_baseline_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.tx2.origin = cfg.tx1.origin;
        assert!(matches!(build_scenario(&cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn inconsistent_wavelength_is_rejected() {
        let cfg = ScenarioConfig {
            wavelength_m: Some(0.01),
            ..ScenarioConfig::default()
        };
        assert!(matches!(build_scenario(&cfg), Err(Error::InvalidConfig(_))));
        let cfg = ScenarioConfig {
            wavelength_m: Some(SPEED_OF_LIGHT / 30e9),
            ..ScenarioConfig::default()
        };
        assert!(build_scenario(&cfg).is_ok());
    }

    #[test]
    fn non_orthogonal_orientation_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.rx.in_plane_axis = [1.0, 0.0, 0.1];
        assert!(matches!(build_scenario(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn close_arrays_flag_far_field() {
        let mut cfg = ScenarioConfig { rx: ArrayConfig::receiver([0.0, 0.0, 0.001]), ..Default::default() };
        cfg.rx.rows = 2;
        cfg.rx.cols = 2;
        let s = build_scenario(&cfg).unwrap();
        assert!(!s.far_field_ok);
    }

    #[test]
    fn grid_spacing_and_order() {
        let g = ElementGrid::new(3, 4, 0.5).unwrap();
        assert_eq!(g.len(), 12);
        let p = g.local_positions();
        assert_abs_diff_eq!((p[1] - p[0]).norm(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!((p[g.index(1, 0)] - p[0]).norm(), 0.5, epsilon = 1e-15);
        let centroid: Vector3<f64> = p.iter().sum::<Vector3<f64>>() / 12.0;
        assert_abs_diff_eq!(centroid.norm(), 0.0, epsilon = 1e-15);
        assert!(ElementGrid::new(0, 3, 0.5).is_err());
        assert!(ElementGrid::new(2, 3, 0.0).is_err());
    }

    #[test]
    fn rotation_is_orthonormal_for_receiver() {
        let rx = ArrayConfig::receiver([0.0, 1.0, 3.0]).build().unwrap();
        let r = rx.rotation();
        assert_abs_diff_eq!((r.transpose() * r - Matrix3::identity()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_vector_examples() {
        let v = direction_to_unit_vector(SphericalDirection::new(0.0, 1.234));
        assert_abs_diff_eq!(v, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        let v = direction_to_unit_vector(SphericalDirection::new(PI / 2.0, 0.0));
        assert_abs_diff_eq!(v, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let v = direction_to_unit_vector(SphericalDirection::from_degrees(30.0, 45.0));
        assert_abs_diff_eq!(v, Vector3::new(0.35355, 0.35355, 0.86603), epsilon = 5e-6);
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn true_direction_examples() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        let d = true_direction(&s, ArrayId::Tx1, &Vector3::new(0.0, 0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(d.elevation_theta, 0.0, epsilon = 1e-15);
        let d = true_direction(&s, ArrayId::Tx1, &Vector3::new(1.0, 1.0, 2f64.sqrt())).unwrap();
        assert_abs_diff_eq!(d.elevation_deg(), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.azimuth_deg(), 45.0, epsilon = 1e-12);
        assert!(true_direction(&s, ArrayId::Tx1, &Vector3::zeros()).is_err());
    }

    #[test]
    fn wrap_angle_branch() {
        assert_abs_diff_eq!(wrap_angle(PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-0.3), -0.3, epsilon = 1e-15);
    }

    #[test]
    fn central_subarray_indices() {
        let tx = ArrayConfig::transmitter([0.0, 0.0, 0.0]).build().unwrap();
        let (sub, idx) = tx.central_subarray(8, 8).unwrap();
        assert_eq!(idx.len(), 64);
        assert_abs_diff_eq!(sub.origin().norm(), 0.0, epsilon = 1e-15);
        for (k, &i) in idx.iter().enumerate() {
            assert_abs_diff_eq!(
                (sub.element_positions()[k] - tx.element_positions()[i]).norm(),
                0.0,
                epsilon = 1e-15
            );
        }
        let (odd, _) = tx.central_subarray(7, 8).unwrap();
        assert!(odd.origin().norm() > 0.0);
        assert!(tx.central_subarray(41, 8).is_err());
    }

    #[test]
    fn element_distances_are_role_symmetric() {
        let s = build_scenario(&ScenarioConfig {
            tx1: ArrayConfig { rows: 4, cols: 5, ..ArrayConfig::transmitter([0.0, 0.0, 0.0]) },
            rx: ArrayConfig { rows: 3, cols: 3, ..ArrayConfig::receiver([0.3, 1.0, 2.0]) },
            ..ScenarioConfig::default()
        })
        .unwrap();
        for p in s.tx1.element_positions() {
            for q in s.rx.element_positions() {
                assert_eq!((q - p).norm(), (p - q).norm());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn direction_round_trip(
            theta in 0.01f64..1.5,
            phi in -PI..PI,
            range in 0.5f64..6.0,
            ox in -2.0f64..2.0,
            oy in -2.0f64..2.0,
        ) {
            let tx = ArrayConfig::transmitter([ox, oy, 0.0]).build().unwrap();
            let dir = SphericalDirection::new(theta, phi);
            let point = tx.origin() + range * tx.local_to_world(&direction_to_unit_vector(dir));
            let back = tx.direction_to(&point).unwrap();
            prop_assert!((back.elevation_theta - theta).abs() < 1e-9);
            prop_assert!(wrap_angle(back.azimuth_phi - phi).abs() < 1e-9);
        }

        #[test]
        fn receiver_frame_round_trip(theta in 0.01f64..1.5, phi in -PI..PI) {
            let rx = ArrayConfig::receiver([0.5, 1.0, 3.0]).build().unwrap();
            let dir = SphericalDirection::new(theta, phi);
            let point = rx.origin() + 2.0 * rx.local_to_world(&direction_to_unit_vector(dir));
            let back = rx.direction_to(&point).unwrap();
            prop_assert!(back.angle_to(&dir) < 1e-9);
        }
    }
}
