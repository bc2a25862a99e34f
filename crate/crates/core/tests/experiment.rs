use qtransistor::circuit::{CircuitParams, Site};
use qtransistor::dynamics::QuantumState;
use qtransistor::effective::{find_off_point, g_eff_three_level, g_eff_two_level};
use qtransistor::experiment::*;
use qtransistor::linalg::max_abs;
use qtransistor::Error;

fn params() -> CircuitParams {
    CircuitParams::default()
}

fn cfg(state: &str, duration: f64) -> ScheduleConfig {
    ScheduleConfig {
        coupler_state: state.into(),
        interaction_ns: duration,
        ..ScheduleConfig::default()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn range(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn closed_gate_schedule_keeps_coupler_at_off_point() {
    let p = params();
    let s = build_transistor_schedule(&cfg("0", 60.0), &p).unwrap();
    let off = p.omega2 + p.g1 * p.g2 / p.g12;
    assert_eq!(s.segments.len(), 3);
    for seg in &s.segments {
        assert!((seg.omegac_ghz - off).abs() < 1e-6);
    }
    assert_eq!(s.segments[0].pi_pulses, vec![Site::Q2]);
    assert_eq!(s.coupler_state, 0);
}

#[test]
fn open_gate_schedule() {
    let p = params();
    let s = build_transistor_schedule(&cfg("|1>", 60.0), &p).unwrap();
    assert!(s.segments[0].pi_pulses.contains(&Site::Coupler));
    assert_eq!(s.segment_start(0), 0.0);
    let inter = s.interaction().unwrap();
    assert_eq!(inter.omegac_ghz, 6.183);
    assert!((inter.omega1_ghz - p.omega2).abs() < 0.02);
    for k in [0, 2] {
        assert!((s.segments[k].omega1_ghz - p.omega2 - 0.050).abs() < 1e-12);
    }
}

#[test]
fn unknown_coupler_tag() {
    let p = params();
    for tag in ["2", "|+>", ""] {
        assert!(matches!(
            build_transistor_schedule(&cfg(tag, 60.0), &p),
            Err(Error::UnknownCouplerState(_))
        ));
    }
}

#[test]
fn zero_duration_interaction_keeps_prepared_state() {
    let p = params();
    for (tag, n) in [("0", 0), ("1", 1)] {
        let s = build_transistor_schedule(&cfg(tag, 0.0), &p).unwrap();
        let frame = idle_frame(&s, &p).unwrap();
        let psi0 = QuantumState::fock(p.levels, [0, 0, 0]);
        let out = run_schedule_final(&s, &p, &psi0, false, &frame).unwrap();
        let pops = frame.frame_populations(&out);
        let idx = p.basis().index(&[0, 1, n]);
        assert!((pops[idx] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn closed_gate_blocks_transfer() {
    let p = params();
    let s = build_transistor_schedule(&cfg("0", 100.0), &p).unwrap();
    let frame = idle_frame(&s, &p).unwrap();
    let t = linspace(0.0, 100.0, 201);
    let traj = run_schedule(&s, &p, &QuantumState::fock(3, [0, 0, 0]), false, &frame, &t).unwrap();
    for q in traj.qubit_populations(&frame) {
        assert!(q[1] >= 0.99, "P01 = {}", q[1]);
    }
}

#[test]
fn open_gate_transfers() {
    let p = params();
    let run = run_transistor(&p, 1, &TransistorConfig::default()).unwrap();
    assert!(run.summary.peak_p10 > 0.95);
    let t_peak = run.summary.transfer_time_ns;
    assert!((t_peak - 59.0).abs() < 0.15 * 59.0, "{t_peak}");
    // first maximum near 1/(4|g̃|) of the three-level estimate
    let g = g_eff_three_level(&p, p.omega2 - 6.183, 1).unwrap().value.abs();
    assert!((t_peak - 1.0 / (4.0 * g)).abs() < 0.07 * t_peak);
}

#[test]
fn segment_splitting_is_invisible() {
    let p = params();
    let s = build_transistor_schedule(&cfg("1", 70.0), &p).unwrap();
    let mut split = s.clone();
    let mut second = split.segments[1].clone();
    split.segments[1].duration_ns = 30.0;
    second.duration_ns = 40.0;
    second.pi_pulses.clear();
    split.segments.insert(2, second);
    let frame = idle_frame(&s, &p).unwrap();
    let psi0 = QuantumState::fock(3, [0, 0, 0]);
    for noisy in [false, true] {
        let a = run_schedule_final(&s, &p, &psi0, noisy, &frame).unwrap();
        let b = run_schedule_final(&split, &p, &psi0, noisy, &frame).unwrap();
        let tol = if noisy { 1e-7 } else { 1e-10 };
        assert!(max_abs(&(a.density_matrix() - b.density_matrix())) < tol);
    }
}

#[test]
fn sample_times_are_validated() {
    let p = params();
    let s = build_transistor_schedule(&cfg("0", 10.0), &p).unwrap();
    let frame = idle_frame(&s, &p).unwrap();
    let psi0 = QuantumState::fock(3, [0, 0, 0]);
    assert!(run_schedule(&s, &p, &psi0, false, &frame, &[0.0, 11.0]).is_err());
    assert!(run_schedule(&s, &p, &psi0, false, &frame, &[5.0, 1.0]).is_err());
}

#[test]
fn chevron_populations_are_conserved() {
    let p = params();
    let t = linspace(0.0, 200.0, 41);
    let s = build_transistor_schedule(&cfg("0", 200.0), &p).unwrap();
    let frame = idle_frame(&s, &p).unwrap();
    for wc in [5.9, 6.4] {
        let sc = ScheduleConfig {
            interaction_omegac_ghz: Some(wc),
            ..cfg("0", 200.0)
        };
        let s = build_transistor_schedule(&sc, &p).unwrap();
        let traj = run_schedule(&s, &p, &QuantumState::fock(3, [0, 0, 0]), false, &frame, &t).unwrap();
        for st in &traj.states {
            let all: f64 = frame.frame_populations(st).iter().sum();
            let q = frame.qubit_populations(st);
            let leakage = all - q[1] - q[2];
            assert!((q[1] + q[2] + leakage - 1.0).abs() < 1e-6);
            assert!(leakage >= -1e-12 && leakage < 0.02, "{leakage}");
        }
    }
}

#[test]
fn chevron_off_point_row_is_flat() {
    let p = params();
    let off = p.omega2 + p.g1 * p.g2 / p.g12;
    let t = linspace(0.0, 200.0, 81);
    let data = chevron_scan(&p, 0, &[off, off - 0.3], &t, &ScanOptions::default()).unwrap();
    assert_eq!(data.population.len(), 2);
    assert!(data.population.iter().all(|row| row.len() == t.len()));
    assert!(data.population.iter().flatten().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
    assert!(range(&data.population[0]) < 0.02);
    assert!(range(&data.population[1]) > 0.1);
}

#[test]
fn chevron_frequency_grows_toward_the_qubits() {
    let p = params();
    let t = linspace(0.0, 1000.0, 201);
    let grid = [6.05, 5.95, 5.85, 5.75];
    let data = chevron_scan(&p, 0, &grid, &t, &ScanOptions::default()).unwrap();
    let f: Vec<f64> = data.fitted.iter().map(|r| r.as_ref().unwrap().frequency_mhz).collect();
    assert!(f.windows(2).all(|w| w[1] > w[0]), "{f:?}");
}

#[test]
fn excited_coupler_chevron_has_flat_row_at_its_off_point() {
    let p = params();
    let delta1 = find_off_point(&p, 1, (-2.6, -1.9)).unwrap();
    let off = p.omega2 - delta1;
    let t = linspace(0.0, 300.0, 61);
    let data = chevron_scan(&p, 1, &[off - 0.1, off, off + 0.1], &t, &ScanOptions::default()).unwrap();
    assert!(range(&data.population[1]) < 0.02);
    assert!(range(&data.population[0]) > 0.1);
    assert!(range(&data.population[2]) > 0.1);
}

#[test]
fn fitted_row_at_operating_point_matches_three_level_estimate() {
    let p = params();
    let delta = -1.564;
    let rows = coupling_vs_detuning(&p, 1, &[delta], &ScanOptions::default()).unwrap();
    let fitted = rows[0].fitted_2g_mhz.unwrap();
    let oracle = 2.0 * g_eff_three_level(&p, delta, 1).unwrap().value.abs() * 1e3;
    assert!((fitted - oracle).abs() < 0.05 * oracle, "{fitted} vs {oracle}");
    // the fit sees the exact dressed splitting
    assert!((fitted - rows[0].dressed_gap_mhz).abs() < 1e-3);
}

#[test]
fn ground_coupler_curve_follows_the_formula() {
    let p = params();
    let grid = linspace(-2.6, -1.1, 7);
    let rows = coupling_vs_detuning(&p, 0, &grid, &ScanOptions::default()).unwrap();
    for r in &rows {
        let f = r.fitted_2g_mhz.unwrap();
        assert!((f - r.formula3_2g_mhz).abs() <= (0.05 * r.formula3_2g_mhz).max(0.3), "{r:?}");
        assert_eq!(r.formula2_2g_mhz.to_bits(), r.formula3_2g_mhz.to_bits());
    }
}

#[test]
fn excited_coupler_two_level_formula_deviates() {
    let p = params();
    for delta in [-2.4, -1.8] {
        let rows = coupling_vs_detuning(&p, 1, &[delta], &ScanOptions::default()).unwrap();
        let r = &rows[0];
        let fitted = r.fitted_2g_mhz.unwrap();
        assert!((fitted - r.formula3_2g_mhz).abs() <= (0.05 * r.formula3_2g_mhz).max(0.3));
        let g2 = g_eff_two_level(&p, delta, 1).unwrap().value;
        let g3 = g_eff_three_level(&p, delta, 1).unwrap().value;
        assert!(((g3 - g2) - 2.0 * p.g1 * p.g2 / (delta - p.alpha_c)).abs() < 1e-12);
        assert!((fitted - r.formula2_2g_mhz).abs() > 5.0 * (fitted - r.formula3_2g_mhz).abs());
    }
}

#[test]
fn off_point_rows_are_slow() {
    let p = params();
    for n in [0u8, 1] {
        let delta = find_off_point(&p, n, if n == 0 { (-2.0, -1.2) } else { (-2.6, -1.9) }).unwrap();
        let rows = coupling_vs_detuning(&p, n, &[delta], &ScanOptions::default()).unwrap();
        assert!(rows[0].fitted_2g_mhz.unwrap() < 0.3, "{:?}", rows[0]);
    }
}

#[test]
fn fitted_frequency_is_stable_under_grid_refinement() {
    let p = params();
    let coarse = coupling_vs_detuning(&p, 1, &[-1.7], &ScanOptions::default()).unwrap();
    let fine = coupling_vs_detuning(&p, 1, &[-1.7], &ScanOptions { samples: 511, ..ScanOptions::default() }).unwrap();
    let (a, b) = (coarse[0].fitted_2g_mhz.unwrap(), fine[0].fitted_2g_mhz.unwrap());
    assert!((a - b).abs() < 1e-3 * b);
}

#[test]
fn noiseless_gates_reach_their_targets() {
    let p = params();
    let open = simulate_qpt(&p, 1, &QptConfig::default()).unwrap();
    assert!(open.fidelity >= 0.99, "{}", open.fidelity);
    assert!((open.chi_trace - 1.0).abs() < 1e-6);
    let closed = simulate_qpt(&p, 0, &QptConfig::default()).unwrap();
    assert!(closed.fidelity >= 0.995, "{}", closed.fidelity);
    // both gates share one pulse length
    assert_eq!(open.calibration.duration_ns, closed.calibration.duration_ns);
}

#[test]
fn qpt_with_shots_is_deterministic() {
    let p = params();
    let cfg = QptConfig {
        shots: Some(500),
        bootstrap_resamples: 20,
        seed: 11,
        ..QptConfig::default()
    };
    let a = simulate_qpt(&p, 0, &cfg).unwrap();
    let b = simulate_qpt(&p, 0, &cfg).unwrap();
    assert_eq!(a.fidelity, b.fidelity);
    assert_eq!(a.bootstrap, b.bootstrap);
    assert_eq!(a.records.len(), 144);
}
