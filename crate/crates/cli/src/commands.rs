use std::path::Path;

use qtransistor::experiment::{
    chevron_scan, coupling_vs_detuning, parse_coupler_state, run_transistor, simulate_qpt, GateConfig, QptConfig,
    ScanOptions, ScheduleConfig, TransistorConfig,
};
use qtransistor::linalg::{CMatrix, C64};
use qtransistor::tomography::{
    bootstrap, ideal_iswap, process_fidelity, process_from_records, readout_index, simulate_measurement, Axis,
    ProcessMatrix, ReadoutMatrix, TomographyRecord,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, opt_num, write_atomic, write_csv, write_json};

fn scan_options(cfg: &RunConfig) -> ScanOptions {
    let e = &cfg.experiment;
    ScanOptions {
        noisy: e.noisy,
        resonance: e.resonance,
        samples: e.coupling_samples,
        max_noisy_window_ns: e.max_noisy_window_ns,
    }
}

fn schedule_config(cfg: &RunConfig, coupler_state: &str) -> ScheduleConfig {
    let e = &cfg.experiment;
    ScheduleConfig {
        coupler_state: coupler_state.to_string(),
        interaction_omegac_ghz: e.interaction_omegac_ghz,
        idle_detuning_ghz: e.idle_detuning_ghz,
        idle_omegac_ghz: e.idle_omegac_ghz,
        resonance: e.resonance,
        ..ScheduleConfig::default()
    }
}

pub fn chevron(cfg: &RunConfig) -> Result<(), CliError> {
    let n = parse_coupler_state(&cfg.experiment.coupler_state)?;
    let e = &cfg.experiment;
    let data = chevron_scan(&cfg.circuit, n, &e.omegac_grid_ghz, &e.t_grid_ns, &scan_options(cfg))?;
    let mut rows = Vec::with_capacity(data.omegac_grid.len() * data.t_grid.len());
    for (wc, trace) in data.omegac_grid.iter().zip(&data.population) {
        for (t, p) in data.t_grid.iter().zip(trace) {
            rows.push(vec![num(*wc), num(*t), num(*p)]);
        }
    }
    write_csv(&cfg.output.path(&cfg.output.chevron_csv), &["omegac_ghz", "t_ns", "p01"], &rows)
}

pub fn coupling_curve(cfg: &RunConfig) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let opts = scan_options(cfg);
    let mut rows = Vec::new();
    for &n in &e.coupling_curve_states {
        for r in coupling_vs_detuning(&cfg.circuit, n, &e.delta_grid_ghz, &opts)? {
            rows.push(vec![
                num(r.delta_ghz),
                opt_num(r.fitted_2g_mhz),
                num(r.formula3_2g_mhz),
                num(r.formula2_2g_mhz),
                r.coupler_state.to_string(),
            ]);
        }
    }
    write_csv(
        &cfg.output.path(&cfg.output.coupling_csv),
        &["delta_ghz", "fitted_2g_mhz", "formula3_2g_mhz", "formula2_2g_mhz", "coupler_state"],
        &rows,
    )
}

pub fn transistor(cfg: &RunConfig) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let tc = TransistorConfig {
        schedule: schedule_config(cfg, "1"),
        window_ns: e.transistor_window_ns,
        samples: e.transistor_samples,
        noisy: e.noisy,
    };
    let header = ["t_ns", "p00", "p01", "p10", "p11"];
    let mut summaries = Vec::new();
    for (n, name) in [(1u8, &cfg.output.transistor_open_csv), (0u8, &cfg.output.transistor_closed_csv)] {
        let run = run_transistor(&cfg.circuit, n, &tc)?;
        let rows: Vec<Vec<String>> = run
            .times
            .iter()
            .zip(&run.populations)
            .map(|(t, p)| vec![num(*t), num(p[0]), num(p[1]), num(p[2]), num(p[3])])
            .collect();
        write_csv(&cfg.output.path(name), &header, &rows)?;
        summaries.push(run.summary);
    }
    let closed = summaries.pop();
    let open = summaries.pop();
    write_json(&cfg.output.path(&cfg.output.transistor_json), &json!({ "open": open, "closed": closed }))
}

fn ideal_process(n: u8) -> Result<ProcessMatrix, CliError> {
    let u = if n == 1 { ideal_iswap() } else { CMatrix::identity(4, 4) };
    Ok(ProcessMatrix::from_unitary(&u, "ideal")?)
}

fn chi_parts(chi: &ProcessMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = &chi.chi;
    (
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].re).collect()).collect(),
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].im).collect()).collect(),
    )
}

fn with_source<T: Serialize>(value: &T, source: &str) -> Value {
    let mut v = serde_json::to_value(value).expect("report serializes");
    if let Value::Object(map) = &mut v {
        map.insert("source".into(), Value::String(source.into()));
    }
    v
}

pub fn qpt(cfg: &RunConfig, records: Option<&Path>) -> Result<(), CliError> {
    let n = parse_coupler_state(&cfg.experiment.coupler_state)?;
    match records {
        Some(path) => qpt_from_records(cfg, n, path),
        None => qpt_simulated(cfg, n),
    }
}

fn qpt_simulated(cfg: &RunConfig, n: u8) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let qc = QptConfig {
        gate: GateConfig {
            schedule: schedule_config(cfg, &e.coupler_state),
            duration_ns: e.gate_duration_ns,
        },
        noisy: e.noisy,
        shots: e.shots,
        readout: e.readout()?,
        correct_readout: e.correct_readout,
        bootstrap_resamples: e.bootstrap_resamples,
        seed: e.seed,
    };
    let result = simulate_qpt(&cfg.circuit, n, &qc)?;
    if !result.records.is_empty() {
        let mut text = String::new();
        for r in &result.records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        write_atomic(&cfg.output.path(&cfg.output.qpt_records_jsonl), text.as_bytes())?;
    }
    write_json(&cfg.output.path(&cfg.output.qpt_json), &with_source(&result, "simulation"))
}

fn read_records(path: &Path) -> Result<Vec<TomographyRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read records {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), k + 1)))
        })
        .collect()
}

fn corrected(records: &[TomographyRecord], m: Option<&ReadoutMatrix>) -> qtransistor::Result<Vec<TomographyRecord>> {
    let Some(m) = m else {
        return Ok(records.to_vec());
    };
    records
        .iter()
        .map(|r| Ok(TomographyRecord::from_populations(r.input_state_id, r.basis, m.correct(r.frequencies()?, true)?)))
        .collect()
}

#[derive(Serialize)]
struct RecordsReport {
    coupler_state: u8,
    records: usize,
    readout_corrected: bool,
    fidelity: f64,
    chi_trace: f64,
    chi_real: Vec<Vec<f64>>,
    chi_imag: Vec<Vec<f64>>,
    bootstrap: Option<qtransistor::tomography::BootstrapBand>,
}

fn qpt_from_records(cfg: &RunConfig, n: u8, path: &Path) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let records = read_records(path)?;
    let readout = if e.correct_readout { e.readout()? } else { None };
    let label = "records";
    let ideal = ideal_process(n)?;
    let chi = process_from_records(&corrected(&records, readout.as_ref())?, label)?;
    let has_counts = records.iter().all(|r| r.counts.is_some());
    let band = if has_counts && e.bootstrap_resamples >= 2 {
        Some(bootstrap(&records, e.bootstrap_resamples, e.seed ^ 0xB007, |data| {
            process_fidelity(&process_from_records(&corrected(data, readout.as_ref())?, label)?, &ideal)
        })?)
    } else {
        None
    };
    let (chi_real, chi_imag) = chi_parts(&chi);
    let report = RecordsReport {
        coupler_state: n,
        records: records.len(),
        readout_corrected: readout.is_some(),
        fidelity: process_fidelity(&chi, &ideal)?,
        chi_trace: chi.trace(),
        chi_real,
        chi_imag,
        bootstrap: band,
    };
    write_json(&cfg.output.path(&cfg.output.qpt_json), &with_source(&report, "records"))
}

const ROUND_TRIP_TRUTH: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

pub fn readout_cal(cfg: &RunConfig) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let model = match e.readout()? {
        Some(m) => m,
        None => ReadoutMatrix::from_flip_errors((0.03, 0.05), (0.03, 0.05))?,
    };
    let mut columns = [[0.0; 4]; 4];
    for (j, col) in columns.iter_mut().enumerate() {
        *col = match e.shots {
            None => model.column(j),
            Some(shots) => {
                let (q1, q2) = (j % 2, j / 2);
                let mut rho = CMatrix::zeros(4, 4);
                rho[(2 * q1 + q2, 2 * q1 + q2)] = C64::new(1.0, 0.0);
                debug_assert_eq!(readout_index(q1, q2), j);
                let seed = e.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j as u64);
                simulate_measurement(&rho, j, [Axis::Z, Axis::Z], shots, &model, seed)?.frequencies()?
            }
        };
    }
    let m = ReadoutMatrix::from_calibration(columns)?;
    let inverse = m.inverse()?;
    let measured = m.apply(ROUND_TRIP_TRUTH);
    let back = m.correct(measured, false)?;
    let residual = back
        .iter()
        .zip(ROUND_TRIP_TRUTH)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let entries = m.entries();
    let column_sums: Vec<f64> = (0..4).map(|j| (0..4).map(|i| entries[i][j]).sum()).collect();
    let report = json!({
        "order": ["00", "10", "01", "11"],
        "shots": e.shots,
        "model": model.entries(),
        "matrix": entries,
        "inverse": inverse,
        "column_sums": column_sums,
        "condition_number": m.condition_number(),
        "round_trip": {
            "p_true": ROUND_TRIP_TRUTH,
            "p_measured": measured,
            "p_corrected": back,
            "max_residual": residual,
        },
    });
    write_json(&cfg.output.path(&cfg.output.readout_json), &report)
}
