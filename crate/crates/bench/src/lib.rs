//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use resbeam_core::harness::{prepare, PreparedScenario};
use resbeam_core::{
    build_channel, build_scenario, sample_covariance, synthesize_snapshots, ArrayConfig, ArrayGeometry, ArrayId,
    ChannelMatrix, GainPattern, Result, Scenario, ScenarioConfig, SimulationConfig, SnapshotBatch,
    SphericalDirection, C64,
};

pub const WAVELENGTH: f64 = 0.01;

/// Default scenario with every array resized to `n × n`.
pub fn scenario(n: usize) -> Result<Scenario> {
    let mut cfg = ScenarioConfig::default();
    for a in [&mut cfg.tx1, &mut cfg.tx2, &mut cfg.rx] {
        a.rows = n;
        a.cols = n;
    }
    build_scenario(&cfg)
}

pub fn channel(n: usize) -> Result<ChannelMatrix> {
    let s = scenario(n)?;
    let p = GainPattern::default();
    build_channel(&s, ArrayId::Tx1, &p, &p)
}

pub fn subarray(n: usize) -> Result<ArrayGeometry> {
    ArrayConfig { rows: n, cols: n, ..ArrayConfig::transmitter([0.0, 0.0, 0.0]) }.build()
}

/// Noisy snapshots from a source at 30°, 45° on an `n × n` subarray.
pub fn batch(n: usize, snapshots: usize) -> Result<(ArrayGeometry, SnapshotBatch)> {
    let g = subarray(n)?;
    let dir = SphericalDirection::from_degrees(30.0, 45.0);
    let b = synthesize_snapshots(&g, dir, WAVELENGTH, 4e-5, 2e-5, snapshots, 7)?;
    Ok((g, b))
}

pub fn covariance(n: usize, snapshots: usize) -> Result<(ArrayGeometry, DMatrix<C64>)> {
    let (g, b) = batch(n, snapshots)?;
    Ok((g, sample_covariance(&b)?))
}

/// Default full-size scenario with both resonators settled.
pub fn prepared() -> Result<PreparedScenario> {
    prepare(&SimulationConfig::default())
}
