use nalgebra::Vector3;

use super::{sub_seed, SimulationConfig};
use crate::channel::build_channel_with_phase;
use crate::doa::{estimate_spectrum, synthesize_snapshots, DoaEstimate, MusicSpectrum};
use crate::error::{Error, Result, StageExt};
use crate::geometry::{build_scenario, ArrayGeometry, ArrayId, Scenario, SphericalDirection};
use crate::resonance::{run_resonance, ResonanceState};
use crate::triangulation::{triangulate, PositionEstimate, TriangulationInput};

/// Steady state of one transmitter's resonator.
#[derive(Clone, Debug)]
pub struct LinkSummary {
    pub tx: ArrayId,
    pub state: ResonanceState,
}

/// Build the channel for `tx` and iterate its resonator to steady state.
pub fn prepare_link(scenario: &Scenario, config: &SimulationConfig, tx: ArrayId) -> Result<LinkSummary> {
    let pattern = config.link.pattern().stage("channel")?;
    let channel = build_channel_with_phase(scenario, tx, &pattern, &pattern, config.link.phi0).stage("channel")?;
    let amp = config.amplifier.model().stage("resonance")?;
    let state = run_resonance(&channel, &amp, &config.resonance).stage("resonance")?;
    if !state.converged {
        let decaying = matches!(
            state.power_history.as_slice(),
            [.., a, b] if b.p_rx_total < a.p_rx_total
        );
        if state.mode_converged && decaying {
            log::warn!(
                "{} loop gain is below unity: the echo decays, mode settled after {} round trips",
                tx.name(),
                state.iteration
            );
        } else {
            log::warn!(
                "{} resonator stopped after {} round trips without full convergence (mode settled: {})",
                tx.name(),
                state.iteration,
                state.mode_converged
            );
        }
    }
    Ok(LinkSummary { tx, state })
}

/// Everything a DOA trial needs from one transmitter.
#[derive(Clone, Debug)]
pub struct PreparedLink {
    pub tx: ArrayId,
    pub subarray: ArrayGeometry,
    /// Exact bearing of the receiver in the subarray frame.
    pub true_direction: SphericalDirection,
    /// Mean steady-state echo power per subarray element, W.
    pub echo_power: f64,
    pub efficiency: f64,
    pub converged: bool,
    pub mode_converged: bool,
    pub iterations: usize,
}

/// Deterministic part of a pipeline run, shared by all Monte Carlo trials at one point.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub config: SimulationConfig,
    pub scenario: Scenario,
    pub truth: Vector3<f64>,
    pub links: [PreparedLink; 2],
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub seed: u64,
    pub doa: [DoaEstimate; 2],
    /// Great-circle error of each bearing, degrees.
    pub doa_error_deg: [f64; 2],
    pub position: PositionEstimate,
    pub error_m: f64,
}

fn prepare_doa_link(scenario: &Scenario, config: &SimulationConfig, summary: LinkSummary) -> Result<PreparedLink> {
    let d = &config.doa;
    let (subarray, indices) = scenario
        .array(summary.tx)
        .central_subarray(d.subarray_rows, d.subarray_cols)?;
    let true_direction = subarray.direction_to(&scenario.rx.origin())?;
    let echo = summary.state.echo_powers();
    let echo_power = indices.iter().map(|&i| echo[i]).sum::<f64>() / indices.len() as f64;
    Ok(PreparedLink {
        tx: summary.tx,
        subarray,
        true_direction,
        echo_power,
        efficiency: summary.state.efficiency(),
        converged: summary.state.converged,
        mode_converged: summary.state.mode_converged,
        iterations: summary.state.iteration,
    })
}

/// Build the scenario, both channels and both resonators.
pub fn prepare(config: &SimulationConfig) -> Result<PreparedScenario> {
    let scenario = build_scenario(&config.scenario).stage("geometry")?;
    let mut links = Vec::with_capacity(2);
    for tx in [ArrayId::Tx1, ArrayId::Tx2] {
        let summary = prepare_link(&scenario, config, tx)?;
        links.push(prepare_doa_link(&scenario, config, summary).stage("doa")?);
    }
    let links: [PreparedLink; 2] = links.try_into().expect("two links");
    Ok(PreparedScenario {
        config: config.clone(),
        truth: scenario.rx.origin(),
        scenario,
        links,
    })
}

impl PreparedScenario {
    /// MUSIC spectrum of one noisy snapshot batch at link `idx` (0 = Tx1, 1 = Tx2).
    pub fn spectrum(&self, idx: usize, trial_seed: u64) -> Result<MusicSpectrum> {
        let link = self
            .links
            .get(idx)
            .ok_or_else(|| Error::input(format!("no link {idx}")))?;
        let d = &self.config.doa;
        let batch = synthesize_snapshots(
            &link.subarray,
            link.true_direction,
            self.scenario.wavelength,
            link.echo_power,
            d.noise_power_w,
            d.snapshots,
            sub_seed(trial_seed, idx as u64 + 1),
        )?;
        estimate_spectrum(&batch, &link.subarray, self.scenario.wavelength, &d.grid)
    }

    /// One seeded Monte Carlo trial: snapshots, DOA at both transmitters, triangulation.
    pub fn trial(&self, seed: u64) -> Result<TrialOutcome> {
        let s1 = self.spectrum(0, seed).stage("doa")?;
        let s2 = self.spectrum(1, seed).stage("doa")?;
        let doa = [s1.peak, s2.peak];
        let doa_error_deg = [0, 1].map(|i| doa[i].direction.angle_to(&self.links[i].true_direction).to_degrees());
        let [l1, l2] = &self.links;
        let input = TriangulationInput::new(
            l1.subarray.direction_to_world(doa[0].direction),
            l2.subarray.direction_to_world(doa[1].direction),
            l1.subarray.origin(),
            l2.subarray.origin(),
        )
        .stage("triangulation")?;
        let position = triangulate(&input).stage("triangulation")?;
        Ok(TrialOutcome {
            seed,
            doa,
            doa_error_deg,
            error_m: (position.coordinates - self.truth).norm(),
            position,
        })
    }
}

/// `prepare` followed by one trial.
pub fn run_pipeline(config: &SimulationConfig, seed: u64) -> Result<(PreparedScenario, TrialOutcome)> {
    let prepared = prepare(config)?;
    let outcome = prepared.trial(seed)?;
    Ok((prepared, outcome))
}
