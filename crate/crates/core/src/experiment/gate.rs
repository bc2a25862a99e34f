//! Open- and closed-gate transistor runs, gate calibration and simulated
//! process tomography.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{full_hamiltonian, CircuitParams};
use crate::dynamics::{Propagator, QuantumState};
use crate::error::{Error, Result};
use crate::linalg::{trace, CMatrix, C64};
use crate::tomography::{
    bootstrap, ideal_iswap, prepare_input_states, process_fidelity, process_from_records, process_from_states,
    simulate_measurement, Axis, BootstrapBand, ProcessMatrix, ReadoutMatrix, TomographyRecord,
};

use super::fit::{fit_oscillation, FitResult};
use super::frame::ComputationalFrame;
use super::scan::calibrate_resonance;
use super::schedule::{
    build_transistor_schedule, idle_frame, parse_coupler_state, run_schedule, PulseSchedule, ScheduleConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransistorConfig {
    /// Interaction settings; `coupler_state` and `interaction_ns` are
    /// overridden per run.
    pub schedule: ScheduleConfig,
    pub window_ns: f64,
    pub samples: usize,
    pub noisy: bool,
}

impl Default for TransistorConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            window_ns: 150.0,
            samples: 601,
            noisy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransistorSummary {
    pub coupler_state: u8,
    pub noisy: bool,
    pub interaction_omegac_ghz: f64,
    pub interaction_omega1_ghz: f64,
    /// Time of the largest P(|10⟩) in the window.
    pub transfer_time_ns: f64,
    pub peak_p10: f64,
    /// Exchange frequency fitted to the P(|10⟩) trace (MHz).
    pub fitted_2g_mhz: Option<f64>,
    /// Half a fitted exchange period, 1/(2·f).
    pub fit_transfer_time_ns: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TransistorRun {
    /// Interaction time (ns).
    pub times: Vec<f64>,
    /// [p00, p01, p10, p11] per sample, coupler traced out.
    pub populations: Vec<[f64; 4]>,
    pub fit: Option<FitResult>,
    pub summary: TransistorSummary,
}

/// Index and parabola-refined position of the maximum of a uniformly
/// sampled trace.
fn refined_peak(t: &[f64], v: &[f64]) -> (f64, f64) {
    let k = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).expect("nonempty trace");
    if k == 0 || k + 1 == v.len() {
        return (t[k], v[k]);
    }
    let (a, b, c) = (v[k - 1], v[k], v[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (t[k], v[k]);
    }
    let shift = 0.5 * (a - c) / denom;
    let dt = t[k + 1] - t[k];
    (t[k] + shift * dt, b - 0.25 * (a - c) * shift)
}

/// Prepare |01⟩ (plus a coupler excitation for the open gate), interact for
/// `window_ns` and record the two-qubit populations along the way.
pub fn run_transistor(p: &CircuitParams, coupler_state: u8, cfg: &TransistorConfig) -> Result<TransistorRun> {
    if cfg.samples < 2 || !(cfg.window_ns > 0.0) {
        return Err(Error::InvalidSchedule("transistor run needs a positive window and 2+ samples".into()));
    }
    let sc = ScheduleConfig {
        coupler_state: coupler_state.to_string(),
        interaction_ns: cfg.window_ns,
        ..cfg.schedule.clone()
    };
    let schedule = build_transistor_schedule(&sc, p)?;
    let frame = idle_frame(&schedule, p)?;
    let (start, _) = schedule.interaction_window().expect("interaction segment");
    let n = cfg.samples;
    let times: Vec<f64> = (0..n).map(|k| cfg.window_ns * k as f64 / (n - 1) as f64).collect();
    let absolute: Vec<f64> = times.iter().map(|t| t + start).collect();
    let psi0 = QuantumState::fock(p.levels, [0, 0, 0]);
    let traj = run_schedule(&schedule, p, &psi0, cfg.noisy, &frame, &absolute)?;
    let populations = traj.qubit_populations(&frame);
    let p10: Vec<f64> = populations.iter().map(|q| q[2]).collect();
    let (transfer, peak) = refined_peak(&times, &p10);
    let fit = if n >= 8 {
        match fit_oscillation(&times, &p10) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("transistor trace fit failed: {e}");
                None
            }
        }
    } else {
        None
    };
    let fitted = fit.as_ref().filter(|f| !f.flat).map(|f| f.frequency_mhz);
    let interaction = schedule.interaction().expect("interaction segment");
    Ok(TransistorRun {
        summary: TransistorSummary {
            coupler_state: schedule.coupler_state,
            noisy: cfg.noisy,
            interaction_omegac_ghz: interaction.omegac_ghz,
            interaction_omega1_ghz: interaction.omega1_ghz,
            transfer_time_ns: transfer,
            peak_p10: peak,
            fitted_2g_mhz: fitted,
            fit_transfer_time_ns: fitted.map(|f| 1e3 / (2.0 * f)),
        },
        times,
        populations,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub schedule: ScheduleConfig,
    /// Gate time; half an open-gate exchange period when absent.
    pub duration_ns: Option<f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            duration_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCalibration {
    pub coupler_state: u8,
    /// "iSWAP" for an excited coupler, "identity" otherwise.
    pub target: String,
    pub duration_ns: f64,
    pub open_gap_mhz: f64,
    pub interaction_omega1_ghz: f64,
    pub interaction_omegac_ghz: f64,
    pub idle_omega1_ghz: f64,
    pub idle_omegac_ghz: f64,
    /// Virtual Z angles (Q1, Q2) applied before the gate.
    pub pre_phases: [f64; 2],
    /// Virtual Z angles (Q1, Q2) applied after the gate.
    pub post_phases: [f64; 2],
    /// |Tr(U_target† V)|²/16 of the phase-corrected noiseless gate block.
    pub unitary_fidelity: f64,
}

/// diag(1, e^{iφ2}, e^{iφ1}, e^{i(φ1+φ2)}) in the |q1 q2⟩ order.
pub fn virtual_z(phases: [f64; 2]) -> CMatrix {
    let [a, b] = phases;
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::from_polar(1.0, b),
        C64::from_polar(1.0, a),
        C64::from_polar(1.0, a + b),
    ]))
}

/// Single-qubit Z angles (post Q1, post Q2, pre Q1, pre Q2) maximizing
/// |Tr(target† Z_post B Z_pre)|. Coordinate ascent: each angle enters every
/// term with exponent 0 or 1, so its optimum given the others is the phase
/// that aligns the two partial sums.
pub fn optimize_virtual_z(block: &CMatrix, target: &CMatrix) -> ([f64; 2], [f64; 2], f64) {
    let mut terms = Vec::with_capacity(16);
    for j in 0..4 {
        for i in 0..4 {
            let t = target[(j, i)].conj() * block[(j, i)];
            if t.norm() > 0.0 {
                terms.push((t, [j / 2, j % 2, i / 2, i % 2]));
            }
        }
    }
    let value = |x: &[f64; 4]| {
        terms
            .iter()
            .map(|(t, e)| t * C64::from_polar(1.0, (0..4).map(|m| e[m] as f64 * x[m]).sum()))
            .sum::<C64>()
    };
    let mut best = ([0.0; 4], -1.0);
    let starts = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
    for s in 0..81usize {
        let mut x = [starts[s % 3], starts[s / 3 % 3], starts[s / 9 % 3], starts[s / 27 % 3]];
        let mut current = value(&x).norm();
        for _ in 0..1000 {
            for m in 0..4 {
                let (mut s0, mut s1) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for (t, e) in &terms {
                    let phase: f64 = (0..4).filter(|&k| k != m).map(|k| e[k] as f64 * x[k]).sum();
                    let z = t * C64::from_polar(1.0, phase);
                    if e[m] == 1 {
                        s1 += z;
                    } else {
                        s0 += z;
                    }
                }
                if s1.norm() > 0.0 {
                    x[m] = if s0.norm() > 0.0 { s0.arg() - s1.arg() } else { -s1.arg() };
                }
            }
            let next = value(&x).norm();
            let done = next - current < 1e-15;
            current = next;
            if done {
                break;
            }
        }
        if current > best.1 {
            best = (x, current);
        }
    }
    let (x, v) = best;
    let wrap = |a: f64| (a + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    ([wrap(x[0]), wrap(x[1])], [wrap(x[2]), wrap(x[3])], v * v / 16.0)
}

/// The transistor as a two-qubit gate: the coupler is parked in `n`, the
/// qubits interact for the gate time and are read out in the idle frame.
#[derive(Debug, Clone)]
pub struct TransistorGate {
    params: CircuitParams,
    schedule: PulseSchedule,
    frame: ComputationalFrame,
    calibration: GateCalibration,
    unitary: CMatrix,
}

impl TransistorGate {
    pub fn calibrate(p: &CircuitParams, coupler_state: u8, cfg: &GateConfig) -> Result<Self> {
        p.validate()?;
        let n = parse_coupler_state(&coupler_state.to_string())?;
        let open_cfg = ScheduleConfig {
            coupler_state: "1".into(),
            ..cfg.schedule.clone()
        };
        let open_wc = open_cfg.interaction_omegac_ghz.unwrap_or(p.omega_c);
        let open_gap = calibrate_resonance(p, open_wc, 1, cfg.schedule.resonance)?.gap_ghz;
        let duration = match cfg.duration_ns {
            Some(d) => d,
            None => 1.0 / (2.0 * open_gap),
        };
        let sc = ScheduleConfig {
            coupler_state: n.to_string(),
            interaction_ns: duration,
            ..cfg.schedule.clone()
        };
        let mut schedule = build_transistor_schedule(&sc, p)?;
        // inputs are prepared directly in the frame
        for seg in &mut schedule.segments {
            seg.pi_pulses.clear();
        }
        let frame = idle_frame(&schedule, p)?;
        let dim = p.basis().dim();
        let mut unitary = CMatrix::identity(dim, dim);
        for seg in &schedule.segments {
            if seg.duration_ns > 0.0 {
                let h = full_hamiltonian(&p.at(seg.omega1_ghz, seg.omegac_ghz))?;
                unitary = Propagator::new(&h)?.unitary(seg.duration_ns) * unitary;
            }
        }
        let target = if n == 1 { ideal_iswap() } else { CMatrix::identity(4, 4) };
        let block = Self::block_of(&frame, &unitary, n);
        let (post, pre, fidelity) = optimize_virtual_z(&block, &target);
        let interaction = schedule.interaction().expect("interaction segment");
        let (idle_w1, idle_wc) = schedule.idle_point();
        let calibration = GateCalibration {
            coupler_state: n,
            target: if n == 1 { "iSWAP" } else { "identity" }.into(),
            duration_ns: duration,
            open_gap_mhz: open_gap * 1e3,
            interaction_omega1_ghz: interaction.omega1_ghz,
            interaction_omegac_ghz: interaction.omegac_ghz,
            idle_omega1_ghz: idle_w1,
            idle_omegac_ghz: idle_wc,
            pre_phases: pre,
            post_phases: post,
            unitary_fidelity: fidelity,
        };
        Ok(Self {
            params: p.clone(),
            schedule,
            frame,
            calibration,
            unitary,
        })
    }

    fn block_of(frame: &ComputationalFrame, u: &CMatrix, n: u8) -> CMatrix {
        let w = frame.unitary().adjoint() * u * frame.unitary();
        let levels = frame.levels();
        let idx = |a: usize| (a / 2) * levels * levels + (a % 2) * levels + n as usize;
        CMatrix::from_fn(4, 4, |r, c| w[(idx(r), idx(c))])
    }

    pub fn calibration(&self) -> &GateCalibration {
        &self.calibration
    }

    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    pub fn frame(&self) -> &ComputationalFrame {
        &self.frame
    }

    pub fn target(&self) -> CMatrix {
        if self.calibration.coupler_state == 1 {
            ideal_iswap()
        } else {
            CMatrix::identity(4, 4)
        }
    }

    /// Noiseless 4×4 gate block in the frame, virtual Z corrections included.
    pub fn corrected_block(&self) -> CMatrix {
        let b = Self::block_of(&self.frame, &self.unitary, self.calibration.coupler_state);
        virtual_z(self.calibration.post_phases) * b * virtual_z(self.calibration.pre_phases)
    }

    /// Map a two-qubit input state through the gate. The output is the
    /// coupler-traced qubit block, so its trace drops by any leakage.
    pub fn apply(&self, rho_q: &CMatrix, noisy: bool) -> Result<CMatrix> {
        let pre = virtual_z(self.calibration.pre_phases);
        let post = virtual_z(self.calibration.post_phases);
        let input = &pre * rho_q * pre.adjoint();
        let state = self.frame.embed_qubit_state(&input, self.calibration.coupler_state as usize)?;
        let out = if noisy {
            let total = self.schedule.total_duration();
            run_schedule(&self.schedule, &self.params, &state, true, &self.frame, &[total])?
                .states
                .pop()
                .expect("one sample")
        } else {
            state.transform(&self.unitary)
        };
        let reduced = self.frame.reduced_qubit_state(&out);
        Ok(&post * reduced * post.adjoint())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QptConfig {
    pub gate: GateConfig,
    pub noisy: bool,
    /// Shots per tomography setting; exact populations when absent.
    pub shots: Option<u64>,
    pub readout: Option<ReadoutMatrix>,
    /// Invert the readout matrix before state reconstruction.
    pub correct_readout: bool,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for QptConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            noisy: false,
            shots: None,
            readout: None,
            correct_readout: true,
            bootstrap_resamples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QptResult {
    pub coupler_state: u8,
    pub noisy: bool,
    pub calibration: GateCalibration,
    pub fidelity: f64,
    pub chi_trace: f64,
    pub chi_real: Vec<Vec<f64>>,
    pub chi_imag: Vec<Vec<f64>>,
    /// Mean population lost from the computational block over the inputs.
    pub mean_leakage: f64,
    pub shots: Option<u64>,
    pub bootstrap: Option<BootstrapBand>,
    #[serde(skip)]
    pub process: ProcessMatrix,
    #[serde(skip)]
    pub records: Vec<TomographyRecord>,
}

fn corrected(records: &[TomographyRecord], readout: Option<&ReadoutMatrix>) -> Result<Vec<TomographyRecord>> {
    let Some(m) = readout else {
        return Ok(records.to_vec());
    };
    records
        .iter()
        .map(|r| {
            let p = m.correct(r.frequencies()?, true)?;
            Ok(TomographyRecord::from_populations(r.input_state_id, r.basis, p))
        })
        .collect()
}

fn record_seed(seed: u64, input: usize, setting: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((9 * input + setting) as u64)
}

/// Simulated 16-input process tomography of the gate with the coupler in
/// `coupler_state`. Each output is renormalized to the computational block
/// before reconstruction; the lost weight is reported as leakage.
pub fn simulate_qpt(p: &CircuitParams, coupler_state: u8, cfg: &QptConfig) -> Result<QptResult> {
    let gate = TransistorGate::calibrate(p, coupler_state, &cfg.gate)?;
    let label = if coupler_state == 1 { "transistor (open)" } else { "transistor (closed)" };
    let inputs: Vec<CMatrix> = prepare_input_states().iter().map(|s| s.density_matrix()).collect();
    let raw = inputs
        .par_iter()
        .map(|rho| gate.apply(rho, cfg.noisy))
        .collect::<Result<Vec<_>>>()?;
    let mut leakage = 0.0;
    let outputs: Vec<CMatrix> = raw
        .iter()
        .map(|o| {
            let tr = trace(o).re;
            leakage += (1.0 - tr) / 16.0;
            o.unscale(tr)
        })
        .collect();
    let ideal = ProcessMatrix::from_unitary(&gate.target(), "ideal")?;

    let (process, records, band) = match cfg.shots {
        None => (process_from_states(&inputs, &outputs, label)?, Vec::new(), None),
        Some(shots) => {
            let readout = cfg.readout.unwrap_or_else(ReadoutMatrix::identity);
            let mut records = Vec::with_capacity(144);
            for (j, rho) in outputs.iter().enumerate() {
                let rho = (rho + rho.adjoint()).scale(0.5);
                for (s, (a, b)) in Axis::ALL.iter().flat_map(|a| Axis::ALL.iter().map(move |b| (*a, *b))).enumerate() {
                    records.push(simulate_measurement(&rho, j, [a, b], shots, &readout, record_seed(cfg.seed, j, s))?);
                }
            }
            let correction = if cfg.correct_readout { cfg.readout.as_ref() } else { None };
            let process = process_from_records(&corrected(&records, correction)?, label)?;
            let band = if cfg.bootstrap_resamples >= 2 {
                Some(bootstrap(&records, cfg.bootstrap_resamples, cfg.seed ^ 0xB007, |data| {
                    let chi = process_from_records(&corrected(data, correction)?, label)?;
                    process_fidelity(&chi, &ideal)
                })?)
            } else {
                None
            };
            (process, records, band)
        }
    };
    let fidelity = process_fidelity(&process, &ideal)?;
    let chi = &process.chi;
    Ok(QptResult {
        coupler_state,
        noisy: cfg.noisy,
        calibration: gate.calibration().clone(),
        fidelity,
        chi_trace: process.trace(),
        chi_real: (0..16).map(|r| (0..16).map(|c| chi[(r, c)].re).collect()).collect(),
        chi_imag: (0..16).map(|r| (0..16).map(|c| chi[(r, c)].im).collect()).collect(),
        mean_leakage: leakage,
        shots: cfg.shots,
        bootstrap: band,
        process,
        records,
    })
}
