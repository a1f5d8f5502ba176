mod common;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resbeam_core::resonance::field_at_points;
use resbeam_core::*;

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.2 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

/// Random small scenario with the receiver somewhere in front of Tx1.
fn random_small(rng: &mut ChaCha8Rng, max_n: usize) -> ScenarioConfig {
    let n = |rng: &mut ChaCha8Rng| rng.random_range(1..=max_n);
    let (r1, c1, r2, c2) = (n(rng), n(rng), n(rng), n(rng));
    let rx = [
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(0.2..1.0),
    ];
    ScenarioConfig {
        tx1: ArrayConfig { rows: r1, cols: c1, ..ArrayConfig::transmitter([0.0, 0.0, 0.0]) },
        tx2: ArrayConfig { rows: 2, cols: 2, ..ArrayConfig::transmitter([2.0, 0.0, 0.0]) },
        rx: ArrayConfig { rows: r2, cols: c2, ..ArrayConfig::receiver(rx) },
        ..ScenarioConfig::default()
    }
}

#[test]
fn channel_matches_direct_friis_on_tilted_arrays() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let pattern = GainPattern::default();
    for _ in 0..10 {
        let b_tx = random_unit(&mut rng);
        let b_rx = (random_unit(&mut rng) * 0.5 - b_tx).normalize();
        let ip_tx = b_tx.cross(&random_unit(&mut rng));
        let ip_rx = b_rx.cross(&random_unit(&mut rng));
        if ip_tx.norm() < 0.3 || ip_rx.norm() < 0.3 {
            continue;
        }
        let (ip_tx, ip_rx) = (ip_tx.normalize(), ip_rx.normalize());
        let tx_cfg = ArrayConfig {
            origin: [0.1, -0.2, 0.0],
            rows: 3,
            cols: 4,
            spacing_m: 0.005,
            boresight: b_tx.into(),
            in_plane_axis: ip_tx.into(),
        };
        let rx_origin = Vector3::new(0.1, -0.2, 0.0) + b_tx * 0.8;
        let rx_cfg = ArrayConfig {
            origin: rx_origin.into(),
            rows: 5,
            cols: 2,
            spacing_m: 0.007,
            boresight: b_rx.into(),
            in_plane_axis: ip_rx.into(),
        };
        let tx = tx_cfg.build().unwrap();
        let rx = rx_cfg.build().unwrap();
        let lambda = 0.01;
        let c = resbeam_core::channel_between(&tx, &rx, lambda, &pattern, &pattern, 0.0).unwrap();

        let tx_pos = common::element_positions(tx_cfg.origin.into(), b_tx, ip_tx, 3, 4, 0.005);
        let rx_pos = common::element_positions(rx_origin, b_rx, ip_rx, 5, 2, 0.007);
        let expected = common::channel(&tx_pos, b_tx, &rx_pos, b_rx, lambda, pattern.g_max, pattern.rolloff_exponent);
        let scale = expected.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        assert!((c.entries() - &expected).norm() <= 1e-12 * scale * 10.0);
    }
}

#[test]
fn resonant_mode_is_the_dominant_singular_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pattern = GainPattern::default();
    for case in 0..20 {
        let s = build_scenario(&random_small(&mut rng, 8)).unwrap();
        let ch = build_channel(&s, ArrayId::Tx1, &pattern, &pattern).unwrap();
        let (sigma, v) = common::dominant_right_singular(ch.entries());
        let cfg = ResonanceConfig::default();
        let g = 1.0 / (cfg.reflection_ratio * sigma.powi(4));
        let amp = AmplifierModel::linear(g).unwrap();
        let state = run_resonance(&ch, &amp, &cfg).unwrap();
        assert!(state.mode_converged, "case {case}");
        let a = common::alignment(&state.tx_amplitudes, &v);
        assert!(a >= 0.999, "case {case}: alignment {a}");
    }
}

#[test]
fn efficiency_is_bounded_for_random_excitations() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let pattern = GainPattern::default();
    let s = build_scenario(&random_small(&mut rng, 6)).unwrap();
    let ch = build_channel(&s, ArrayId::Tx1, &pattern, &pattern).unwrap();
    let (sigma, _) = common::dominant_right_singular(ch.entries());
    for _ in 0..1000 {
        let a = DVector::from_fn(ch.tx_len(), |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let eff = transmission_efficiency(&ch, &a).unwrap();
        assert!((0.0..=1.0).contains(&eff));
        assert!(eff <= sigma * sigma * (1.0 + 1e-12));
    }
}

fn default_link() -> (Scenario, ChannelMatrix, AmplifierModel, GainPattern) {
    let s = build_scenario(&ScenarioConfig::default()).unwrap();
    let pattern = GainPattern::default();
    let ch = build_channel(&s, ArrayId::Tx1, &pattern, &pattern).unwrap();
    let amp = AmplifierModel::from_db(40.0, 0.01).unwrap();
    (s, ch, amp, pattern)
}

/// Points on a circle of radius `range` around `origin`, in the plane spanned
/// by `axis` and `normal`, at angles `offsets_deg` from `axis`.
fn fan(origin: Vector3<f64>, axis: Vector3<f64>, normal: Vector3<f64>, range: f64, offsets_deg: &[f64]) -> Vec<Vector3<f64>> {
    let a = axis.normalize();
    let n = (normal - a * normal.dot(&a)).normalize();
    offsets_deg
        .iter()
        .map(|d| {
            let t = d.to_radians();
            origin + (a * t.cos() + n * t.sin()) * range
        })
        .collect()
}

#[test]
fn steady_state_concentrates_energy_on_the_link() {
    let (s, ch, amp, pattern) = default_link();
    let cfg = ResonanceConfig::default();
    let converged = run_resonance(&ch, &amp, &cfg).unwrap();
    let first = run_resonance(&ch, &amp, &ResonanceConfig { max_iterations: 1, ..cfg }).unwrap();

    let last = converged.power_history.last().unwrap().p_rx_total;
    let initial = first.power_history.last().unwrap().p_rx_total;
    assert!(last > initial, "{last} vs {initial}");

    let origin = s.tx1.origin();
    let axis = s.rx.origin() - origin;
    let offsets: Vec<f64> = (-60..=60).map(|d| d as f64 * 0.5).collect();
    let range = axis.norm();
    let points = fan(origin, axis, Vector3::x(), range, &offsets);
    let on_axis = 60;

    let field = |state: &ResonanceState| field_at_points(&s.tx1, &state.tx_amplitudes, s.wavelength, &pattern, &points).unwrap();
    let conv = field(&converged);
    let init = field(&first);

    let peak_c = conv.iter().cloned().fold(0.0, f64::max);
    let peak_i = init.iter().cloned().fold(0.0, f64::max);
    assert!(conv[on_axis] >= 0.9 * peak_c);
    for (i, off) in offsets.iter().enumerate() {
        if off.abs() >= 15.0 {
            let db = 10.0 * (conv[on_axis] / conv[i]).log10();
            assert!(db >= 10.0, "offset {off}: {db} dB");
        }
    }

    // Sidelobe level: strongest point outside the main lobe (first null).
    let sidelobe_ratio = |f: &[f64]| {
        let mut j = on_axis;
        while j + 1 < f.len() && f[j + 1] < f[j] {
            j += 1;
        }
        let side = f[j..].iter().cloned().fold(0.0, f64::max);
        side / f[on_axis]
    };
    assert!(peak_c > peak_i, "{peak_c} vs {peak_i}");
    assert!(
        sidelobe_ratio(&conv) < sidelobe_ratio(&init),
        "{} vs {}",
        sidelobe_ratio(&conv),
        sidelobe_ratio(&init)
    );
}

#[test]
fn saturation_cap_holds_on_the_full_array() {
    let (_, ch, amp, _) = default_link();
    let state = run_resonance(&ch, &amp, &ResonanceConfig::default()).unwrap();
    assert!(state.converged);
    for rec in &state.power_history {
        assert!(rec.p_tx_max_element <= 0.01 * (1.0 + 1e-12));
    }
    let eff = state.efficiency();
    assert!(eff > 0.5 && eff <= 1.0, "{eff}");
}
