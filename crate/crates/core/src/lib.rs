//! Simulation of a two-transmitter resonant beam positioning system: channel
//! modelling, phase-conjugate resonance, MUSIC direction finding and
//! sine-rule triangulation, plus a seeded experiment harness.

// NaN-rejecting range checks are written as `!(x >= lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod doa;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod resonance;
pub mod triangulation;

pub use nalgebra::Complex;

/// Complex sample type used for all field amplitudes.
pub type C64 = Complex<f64>;

pub use channel::{
    build_channel, build_channel_with_phase, channel_between, element_gain, power_density,
    receive_power, transmission_efficiency, ChannelMatrix, GainPattern, FREE_SPACE_IMPEDANCE,
};
pub use error::{Error, Result};
pub use geometry::{
    build_scenario, true_direction, ArrayConfig, ArrayGeometry, ArrayId, ElementGrid, Scenario,
    ScenarioConfig, SphericalDirection,
};
pub use resonance::{
    compute_field_map, conjugate_phase, run_resonance, rx_reflect, tx_amplify, AmplifierModel,
    FieldMap, GridSpec, PowerRecord, ResonanceConfig, ResonanceState,
};
pub use doa::{
    estimate_doa, music_spectrum, sample_covariance, steering_vector, subspace_split,
    synthesize_snapshots, DoaEstimate, MusicSpectrum, SearchGrid, SnapshotBatch, SteeringVector,
    SubspaceSplit,
};
pub use triangulation::{
    interior_angles, range_from_sine_rule, rmse, triangulate, ConditionFlag, PositionEstimate,
    TriangulationInput,
};
pub use harness::{
    derive_seed, preset, run_experiment, run_pipeline, sweep_efficiency, sweep_rmse,
    ExperimentSpec, ResultRow, ResultTable, SimulationConfig, SweepOutcome, TableFormat,
};
