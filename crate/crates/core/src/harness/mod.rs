//! Experiment orchestration: declarative specs, seeded Monte Carlo sweeps and
//! result tables.

mod pipeline;
mod presets;
mod results;
mod sweep;

pub use pipeline::{prepare, prepare_link, run_pipeline, LinkSummary, PreparedLink, PreparedScenario, TrialOutcome};
pub use presets::{preset, preset_names, PRESETS};
pub use results::{ResultMetadata, ResultRow, ResultTable, TableFormat};
pub use sweep::{run_experiment, sweep_efficiency, sweep_rmse, SweepOutcome, TrialRecord};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{GainPattern, DEFAULT_GAIN_DBI};
use crate::doa::SearchGrid;
use crate::error::{Error, Result};
use crate::geometry::{direction_to_unit_vector, ScenarioConfig, SphericalDirection};
use crate::resonance::{AmplifierModel, GridSpec, ResonanceConfig};

/// Element pattern and propagation constants shared by every link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub gain_dbi: f64,
    /// Pattern exponent; derived from the peak gain when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rolloff_exponent: Option<f64>,
    pub phi0: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            gain_dbi: DEFAULT_GAIN_DBI,
            rolloff_exponent: None,
            phi0: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn pattern(&self) -> Result<GainPattern> {
        match self.rolloff_exponent {
            Some(q) => GainPattern::new(crate::channel::db_to_linear(self.gain_dbi), q),
            None => GainPattern::from_dbi(self.gain_dbi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplifierConfig {
    pub gain_db: f64,
    /// Per-element output cap, W. `null` disables saturation.
    pub p_saturation_w: Option<f64>,
}

impl Default for AmplifierConfig {
    fn default() -> Self {
        Self {
            gain_db: 40.0,
            p_saturation_w: Some(0.01),
        }
    }
}

impl AmplifierConfig {
    pub fn model(&self) -> Result<AmplifierModel> {
        AmplifierModel::from_db(self.gain_db, self.p_saturation_w.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoaConfig {
    pub subarray_rows: usize,
    pub subarray_cols: usize,
    pub snapshots: usize,
    pub noise_power_w: f64,
    pub grid: SearchGrid,
}

impl Default for DoaConfig {
    fn default() -> Self {
        Self {
            subarray_rows: 8,
            subarray_cols: 8,
            snapshots: 1024,
            noise_power_w: 2e-5,
            grid: SearchGrid::default(),
        }
    }
}

/// Everything needed to run one end-to-end localization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: ScenarioConfig,
    pub link: LinkConfig,
    pub amplifier: AmplifierConfig,
    pub resonance: ResonanceConfig,
    pub doa: DoaConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    RxX,
    RxY,
    RxZ,
    BaselineD,
    /// Rx elevation seen from Tx1, degrees.
    Elevation,
    /// Rx azimuth seen from Tx1, degrees.
    Azimuth,
    /// Rx range from Tx1, meters.
    Distance,
    /// Side length of every (square) array.
    ArraySize,
    NoisePower,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RxX => "rx_x",
            SweepParameter::RxY => "rx_y",
            SweepParameter::RxZ => "rx_z",
            SweepParameter::BaselineD => "baseline_d",
            SweepParameter::Elevation => "elevation",
            SweepParameter::Azimuth => "azimuth",
            SweepParameter::Distance => "distance",
            SweepParameter::ArraySize => "array_size",
            SweepParameter::NoisePower => "noise_power",
        }
    }

    fn is_polar(self) -> bool {
        matches!(
            self,
            SweepParameter::Elevation | SweepParameter::Azimuth | SweepParameter::Distance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Receiver placement relative to Tx1, used by the polar sweep parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarAnchor {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub distance_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub label: String,
    #[serde(default)]
    pub overrides: BTreeMap<SweepParameter, f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Full pipeline Monte Carlo: position RMSE, error range, DOA error.
    #[default]
    Rmse,
    /// Steady-state Tx1 link efficiency only.
    Efficiency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_polar: Option<PolarAnchor>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_monte_carlo_k")]
    pub monte_carlo_k: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_map: Option<GridSpec>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

fn default_monte_carlo_k() -> usize {
    100
}

fn default_master_seed() -> u64 {
    1
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("experiment name must not be empty"));
        }
        if self.monte_carlo_k == 0 {
            return Err(Error::config("monte_carlo_k must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep has no values"));
            }
            for &v in &sweep.values {
                check_bounds(sweep.parameter, v)?;
            }
        }
        for s in &self.series {
            for (&p, &v) in &s.overrides {
                check_bounds(p, v)?;
            }
        }
        Ok(())
    }

    /// Series to run; a spec without explicit series has one unnamed series.
    pub fn series_list(&self) -> Vec<SeriesSpec> {
        if self.series.is_empty() {
            vec![SeriesSpec {
                label: String::new(),
                overrides: BTreeMap::new(),
            }]
        } else {
            self.series.clone()
        }
    }

    /// Sweep values, or a single NaN placeholder for a fixed-point experiment.
    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .map_or_else(|| vec![f64::NAN], |s| s.values.clone())
    }

    /// Simulation configuration for one (series, sweep value) point.
    pub fn point_config(&self, series: &SeriesSpec, sweep_value: f64) -> Result<SimulationConfig> {
        let mut cfg = self.simulation.clone();
        let mut polar = self.rx_polar;
        let mut settings: Vec<(SweepParameter, f64)> =
            series.overrides.iter().map(|(&p, &v)| (p, v)).collect();
        if let Some(sweep) = &self.sweep {
            settings.push((sweep.parameter, sweep_value));
        }
        for (param, value) in settings {
            if param.is_polar() {
                let anchor = polar.get_or_insert_with(|| polar_of(&cfg));
                match param {
                    SweepParameter::Elevation => anchor.elevation_deg = value,
                    SweepParameter::Azimuth => anchor.azimuth_deg = value,
                    _ => anchor.distance_m = value,
                }
            } else {
                apply_parameter(&mut cfg, param, value)?;
            }
        }
        if let Some(anchor) = polar {
            let tx1 = cfg.scenario.tx1.build()?;
            let dir = SphericalDirection::from_degrees(anchor.elevation_deg, anchor.azimuth_deg);
            let rx = tx1.origin() + tx1.local_to_world(&direction_to_unit_vector(dir)) * anchor.distance_m;
            cfg.scenario.rx.origin = rx.into();
        }
        Ok(cfg)
    }
}

fn check_bounds(param: SweepParameter, v: f64) -> Result<()> {
    let ok = v.is_finite()
        && match param {
            SweepParameter::RxX | SweepParameter::RxY | SweepParameter::RxZ => true,
            SweepParameter::BaselineD | SweepParameter::Distance => v > 0.0,
            SweepParameter::Elevation => (0.0..90.0).contains(&v),
            SweepParameter::Azimuth => (-360.0..=360.0).contains(&v),
            SweepParameter::ArraySize => v >= 1.0 && v.fract() == 0.0,
            SweepParameter::NoisePower => v >= 0.0,
        };
    if !ok {
        return Err(Error::config(format!(
            "{} = {v} is outside its physical range",
            param.name()
        )));
    }
    Ok(())
}

fn polar_of(cfg: &SimulationConfig) -> PolarAnchor {
    let rx = Vector3::from(cfg.scenario.rx.origin);
    let tx = Vector3::from(cfg.scenario.tx1.origin);
    let d = rx - tx;
    let dir = cfg
        .scenario
        .tx1
        .build()
        .ok()
        .and_then(|a| a.direction_to(&rx).ok())
        .unwrap_or(SphericalDirection::new(0.0, 0.0));
    PolarAnchor {
        elevation_deg: dir.elevation_deg(),
        azimuth_deg: dir.azimuth_deg(),
        distance_m: d.norm(),
    }
}

fn apply_parameter(cfg: &mut SimulationConfig, param: SweepParameter, value: f64) -> Result<()> {
    let sc = &mut cfg.scenario;
    match param {
        SweepParameter::RxX => sc.rx.origin[0] = value,
        SweepParameter::RxY => sc.rx.origin[1] = value,
        SweepParameter::RxZ => sc.rx.origin[2] = value,
        SweepParameter::BaselineD => {
            let t1 = Vector3::from(sc.tx1.origin);
            let dir = (Vector3::from(sc.tx2.origin) - t1)
                .try_normalize(0.0)
                .unwrap_or_else(Vector3::x);
            sc.tx2.origin = (t1 + dir * value).into();
        }
        SweepParameter::ArraySize => {
            let n = value as usize;
            for a in [&mut sc.tx1, &mut sc.tx2, &mut sc.rx] {
                a.rows = n;
                a.cols = n;
            }
            let d = &mut cfg.doa;
            d.subarray_rows = d.subarray_rows.min(n);
            d.subarray_cols = d.subarray_cols.min(n);
        }
        SweepParameter::NoisePower => cfg.doa.noise_power_w = value,
        SweepParameter::Elevation | SweepParameter::Azimuth | SweepParameter::Distance => {
            unreachable!("polar parameters are applied through the anchor")
        }
    }
    Ok(())
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed: SplitMix64 folded over (master, series, sweep index, trial).
pub fn derive_seed(master: u64, series: u64, sweep_index: u64, trial: u64) -> u64 {
    [series, sweep_index, trial]
        .iter()
        .fold(splitmix64(master), |h, &v| splitmix64(h ^ v))
}

/// Independent stream for one consumer (e.g. each transmitter) within a trial.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
