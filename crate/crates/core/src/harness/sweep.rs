use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{prepare, prepare_link, TrialOutcome};
use super::results::{ResultMetadata, ResultRow, ResultTable};
use super::{derive_seed, ExperimentSpec, Metric};
use crate::error::{Error, Result, StageExt};
use crate::geometry::{build_scenario, ArrayId};
use crate::triangulation::rmse;

/// Per-trial result, kept alongside the aggregated table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub series: String,
    pub sweep_value: Option<f64>,
    pub sweep_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_z: f64,
    pub x_hat: Option<f64>,
    pub y_hat: Option<f64>,
    pub z_hat: Option<f64>,
    pub err_norm: Option<f64>,
    pub doa_err_tx1_deg: Option<f64>,
    pub doa_err_tx2_deg: Option<f64>,
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn truth(&self) -> Vector3<f64> {
        Vector3::new(self.truth_x, self.truth_y, self.truth_z)
    }

    pub fn estimate(&self) -> Option<Vector3<f64>> {
        Some(Vector3::new(self.x_hat?, self.y_hat?, self.z_hat?))
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub table: ResultTable,
    /// Ordered by series, sweep index, then trial.
    pub trials: Vec<TrialRecord>,
}

impl SweepOutcome {
    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trials {
            w.serialize(t)?;
        }
        w.flush().map_err(|e| Error::io("<trials csv>", e))?;
        Ok(())
    }

    /// Trials belonging to one table row.
    pub fn trials_for(&self, series: &str, sweep_index: usize) -> impl Iterator<Item = &TrialRecord> {
        let series = series.to_string();
        self.trials
            .iter()
            .filter(move |t| t.series == series && t.sweep_index == sweep_index)
    }
}

fn metadata(spec: &ExperimentSpec, metric: Metric) -> ResultMetadata {
    ResultMetadata {
        name: spec.name.clone(),
        metric,
        spec_hash: spec.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: None,
    }
}

fn sweep_value(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn failed_row(series: &str, value: f64, truth: Option<[f64; 3]>, trials: usize, err: &Error) -> ResultRow {
    ResultRow {
        series: series.to_string(),
        sweep_value: sweep_value(value),
        truth_x: truth.map(|t| t[0]),
        truth_y: truth.map(|t| t[1]),
        truth_z: truth.map(|t| t[2]),
        trials,
        failures: trials,
        rmse_m: None,
        median_err_m: None,
        err_min_m: None,
        err_max_m: None,
        mean_doa_err_deg: None,
        mean_efficiency: None,
        error: Some(err.to_string()),
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Monte Carlo position accuracy at every (series, sweep value) point.
pub fn sweep_rmse(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let k = spec.monte_carlo_k;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (si, series) in spec.series_list().iter().enumerate() {
        for (vi, &value) in spec.sweep_values().iter().enumerate() {
            log::info!("{} [{}] point {}: {value}", spec.name, series.label, vi);
            let cfg = match spec.point_config(series, value).stage("geometry") {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("{e}");
                    rows.push(failed_row(&series.label, value, None, 0, &e));
                    continue;
                }
            };
            let rx = cfg.scenario.rx.origin;
            let prep = match prepare(&cfg) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("point {vi} failed: {e}");
                    rows.push(failed_row(&series.label, value, Some(rx), k, &e));
                    continue;
                }
            };
            let outcomes: Vec<(u64, Result<TrialOutcome>)> = (0..k)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(spec.master_seed, si as u64, vi as u64, t as u64);
                    (seed, prep.trial(seed))
                })
                .collect();

            let truth = prep.truth;
            let mut positions = Vec::new();
            let mut errors = Vec::new();
            let mut doa_errs = Vec::new();
            let mut first_failure = None;
            for (t, (seed, outcome)) in outcomes.into_iter().enumerate() {
                let mut rec = TrialRecord {
                    series: series.label.clone(),
                    sweep_value: sweep_value(value),
                    sweep_index: vi,
                    trial: t,
                    seed,
                    truth_x: truth.x,
                    truth_y: truth.y,
                    truth_z: truth.z,
                    x_hat: None,
                    y_hat: None,
                    z_hat: None,
                    err_norm: None,
                    doa_err_tx1_deg: None,
                    doa_err_tx2_deg: None,
                    failure: None,
                };
                match outcome {
                    Ok(o) => {
                        let p = o.position.coordinates;
                        (rec.x_hat, rec.y_hat, rec.z_hat) = (Some(p.x), Some(p.y), Some(p.z));
                        rec.err_norm = Some(o.error_m);
                        rec.doa_err_tx1_deg = Some(o.doa_error_deg[0]);
                        rec.doa_err_tx2_deg = Some(o.doa_error_deg[1]);
                        positions.push(p);
                        errors.push(o.error_m);
                        doa_errs.push(0.5 * (o.doa_error_deg[0] + o.doa_error_deg[1]));
                    }
                    Err(e) => {
                        rec.failure = Some(e.to_string());
                        first_failure.get_or_insert(e);
                    }
                }
                trials.push(rec);
            }
            let failures = k - positions.len();
            if positions.is_empty() {
                let e = first_failure.expect("at least one trial ran");
                rows.push(failed_row(&series.label, value, Some(rx), k, &e));
                continue;
            }
            errors.sort_by(f64::total_cmp);
            let n = positions.len() as f64;
            rows.push(ResultRow {
                series: series.label.clone(),
                sweep_value: sweep_value(value),
                truth_x: Some(truth.x),
                truth_y: Some(truth.y),
                truth_z: Some(truth.z),
                trials: k,
                failures,
                rmse_m: Some(rmse(&positions, &truth)?),
                median_err_m: Some(median(&errors)),
                err_min_m: errors.first().copied(),
                err_max_m: errors.last().copied(),
                mean_doa_err_deg: Some(doa_errs.iter().sum::<f64>() / n),
                mean_efficiency: Some(0.5 * (prep.links[0].efficiency + prep.links[1].efficiency)),
                error: None,
            });
        }
    }
    Ok(SweepOutcome {
        table: ResultTable {
            metadata: metadata(spec, Metric::Rmse),
            rows,
        },
        trials,
    })
}

/// Steady-state Tx1 → Rx efficiency at every (series, sweep value) point.
pub fn sweep_efficiency(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    for series in spec.series_list() {
        for (vi, &value) in spec.sweep_values().iter().enumerate() {
            log::info!("{} [{}] point {}: {value}", spec.name, series.label, vi);
            let result = spec.point_config(&series, value).stage("geometry").and_then(|cfg| {
                let scenario = build_scenario(&cfg.scenario).stage("geometry")?;
                let link = prepare_link(&scenario, &cfg, ArrayId::Tx1)?;
                Ok((cfg.scenario.rx.origin, link.state.efficiency()))
            });
            rows.push(match result {
                Ok((rx, eff)) => ResultRow {
                    series: series.label.clone(),
                    sweep_value: sweep_value(value),
                    truth_x: Some(rx[0]),
                    truth_y: Some(rx[1]),
                    truth_z: Some(rx[2]),
                    trials: 0,
                    failures: 0,
                    rmse_m: None,
                    median_err_m: None,
                    err_min_m: None,
                    err_max_m: None,
                    mean_doa_err_deg: None,
                    mean_efficiency: Some(eff),
                    error: None,
                },
                Err(e) => {
                    log::warn!("point {vi} failed: {e}");
                    failed_row(&series.label, value, None, 0, &e)
                }
            });
        }
    }
    Ok(ResultTable {
        metadata: metadata(spec, Metric::Efficiency),
        rows,
    })
}

/// Run the sweep selected by the spec's metric.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    match spec.metric {
        Metric::Rmse => sweep_rmse(spec),
        Metric::Efficiency => Ok(SweepOutcome {
            table: sweep_efficiency(spec)?,
            trials: Vec::new(),
        }),
    }
}
