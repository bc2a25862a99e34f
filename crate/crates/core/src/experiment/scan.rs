//! Resonance calibration, chevron scans and the coupling-versus-detuning
//! curve.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{full_hamiltonian, CircuitParams};
use crate::dynamics::QuantumState;
use crate::effective::{g_eff_three_level, g_eff_two_level};
use crate::error::{Error, Result};
use crate::linalg::eigh;

use super::fit::{fit_oscillation, FitResult};
use super::schedule::{build_transistor_schedule, idle_frame, run_schedule, ScheduleConfig};

/// Half-width of the ω1 window searched for the qubit-qubit resonance (GHz).
const RESONANCE_WINDOW_GHZ: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResonanceMode {
    /// ω1 such that the two single-excitation dressed levels are closest.
    #[default]
    Dressed,
    /// ω1 = ω2.
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub omega1_ghz: f64,
    /// Splitting of the two hybridized single-excitation levels (GHz); the
    /// exchange frequency |2g̃| at the calibrated point.
    pub gap_ghz: f64,
}

/// Splitting (GHz) between the two eigenstates with the largest weight on
/// |1 0 n⟩ and |0 1 n⟩.
pub fn exchange_gap(p: &CircuitParams, omega1: f64, omega_c: f64, n: u8) -> Result<f64> {
    let q = p.at(omega1, omega_c);
    let h = full_hamiltonian(&q)?;
    let basis = h.basis().clone();
    let nc = n as usize;
    if nc >= p.levels {
        return Err(Error::UnknownCouplerState(n.to_string()));
    }
    let (i10, i01) = (basis.index(&[1, 0, nc]), basis.index(&[0, 1, nc]));
    let (energies, vectors) = eigh(h.matrix());
    let mut weight: Vec<(usize, f64)> = (0..energies.len())
        .map(|k| (k, vectors[(i10, k)].norm_sqr() + vectors[(i01, k)].norm_sqr()))
        .collect();
    weight.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((energies[weight[0].0] - energies[weight[1].0]).abs() / TAU)
}

/// Q1 frequency that puts the qubits on resonance with the coupler at
/// `omega_c` in state `n`. The dressed mode minimizes the exchange gap by
/// golden-section search within ±20 MHz of ω2.
pub fn calibrate_resonance(p: &CircuitParams, omega_c: f64, n: u8, mode: ResonanceMode) -> Result<Resonance> {
    if n > 1 {
        return Err(Error::UnknownCouplerState(n.to_string()));
    }
    if mode == ResonanceMode::Bare {
        return Ok(Resonance {
            omega1_ghz: p.omega2,
            gap_ghz: exchange_gap(p, p.omega2, omega_c, n)?,
        });
    }
    let gap = |w: f64| exchange_gap(p, w, omega_c, n);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (p.omega2 - RESONANCE_WINDOW_GHZ, p.omega2 + RESONANCE_WINDOW_GHZ);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (gap(x1)?, gap(x2)?);
    while b - a > 1e-9 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = gap(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = gap(x2)?;
        }
    }
    let w = 0.5 * (a + b);
    if (w - p.omega2).abs() > RESONANCE_WINDOW_GHZ * 0.999 {
        log::warn!("dressed resonance at the edge of the search window (ω1 = {w} GHz)");
    }
    Ok(Resonance {
        omega1_ghz: w,
        gap_ghz: gap(w)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub noisy: bool,
    pub resonance: ResonanceMode,
    /// Samples per coupling-curve trace.
    pub samples: usize,
    /// Longest simulated window for noisy coupling-curve traces (ns).
    pub max_noisy_window_ns: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            noisy: false,
            resonance: ResonanceMode::Dressed,
            samples: 256,
            max_noisy_window_ns: 1000.0,
        }
    }
}

/// P(|01⟩) traces over interaction time, one row per coupler frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChevronData {
    pub coupler_state: u8,
    pub omegac_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Q1 frequency used on each row.
    pub omega1: Vec<f64>,
    /// population[row][k] = P(|01⟩) at (omegac_grid[row], t_grid[k]).
    pub population: Vec<Vec<f64>>,
    /// None where the row could not be fitted.
    pub fitted: Vec<Option<FitResult>>,
}

/// P(|01⟩) in the idle frame, traced over the coupler, for an interaction at
/// `omega_c` sampled at interaction times `t_grid`.
fn exchange_trace(
    p: &CircuitParams,
    n: u8,
    omega_c: f64,
    t_grid: &[f64],
    opts: &ScanOptions,
) -> Result<(f64, Vec<f64>)> {
    let cfg = ScheduleConfig {
        coupler_state: n.to_string(),
        interaction_omegac_ghz: Some(omega_c),
        interaction_ns: t_grid.last().copied().unwrap_or(0.0),
        resonance: opts.resonance,
        ..ScheduleConfig::default()
    };
    let schedule = build_transistor_schedule(&cfg, p)?;
    let frame = idle_frame(&schedule, p)?;
    let psi0 = QuantumState::fock(p.levels, [0, 0, 0]);
    let traj = run_schedule(&schedule, p, &psi0, opts.noisy, &frame, t_grid)?;
    let omega1 = schedule.interaction().expect("interaction segment").omega1_ghz;
    Ok((omega1, traj.qubit_populations(&frame).iter().map(|q| q[1]).collect()))
}

fn fit_or_warn(t: &[f64], v: &[f64], what: impl Fn() -> String) -> Option<FitResult> {
    match fit_oscillation(t, v) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("{}: {e}", what());
            None
        }
    }
}

/// Rows are simulated in parallel; each is started in |0 1 n⟩ (dressed) and
/// fitted independently. Times are interaction durations in ns.
pub fn chevron_scan(
    p: &CircuitParams,
    coupler_state: u8,
    omegac_grid: &[f64],
    t_grid: &[f64],
    opts: &ScanOptions,
) -> Result<ChevronData> {
    if omegac_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InsufficientData("chevron grids must be nonempty".into()));
    }
    if coupler_state > 1 {
        return Err(Error::UnknownCouplerState(coupler_state.to_string()));
    }
    let rows = omegac_grid
        .par_iter()
        .map(|&wc| exchange_trace(p, coupler_state, wc, t_grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let fitted = omegac_grid
        .iter()
        .zip(&rows)
        .map(|(wc, (_, v))| {
            if t_grid.len() < 8 {
                return None;
            }
            fit_or_warn(t_grid, v, || format!("chevron row ωc = {wc} GHz"))
        })
        .collect();
    let (omega1, population) = rows.into_iter().unzip();
    Ok(ChevronData {
        coupler_state,
        omegac_grid: omegac_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        omega1,
        population,
        fitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    /// ω2 − ωc (GHz).
    pub delta_ghz: f64,
    pub omegac_ghz: f64,
    pub omega1_ghz: f64,
    /// Fitted exchange frequency |2g̃| (MHz) from the simulated trace.
    pub fitted_2g_mhz: Option<f64>,
    /// Splitting of the dressed levels at the calibrated point (MHz).
    pub dressed_gap_mhz: f64,
    pub formula3_2g_mhz: f64,
    pub formula2_2g_mhz: f64,
    pub coupler_state: u8,
    pub window_ns: f64,
}

/// For each Δ: put the coupler at ωc = ω2 − Δ, bring the qubits on
/// resonance, simulate the exchange over about three periods and fit it.
/// Both closed-form couplings are evaluated alongside.
pub fn coupling_vs_detuning(
    p: &CircuitParams,
    coupler_state: u8,
    delta_grid: &[f64],
    opts: &ScanOptions,
) -> Result<Vec<CouplingRow>> {
    if delta_grid.is_empty() {
        return Err(Error::InsufficientData("detuning grid must be nonempty".into()));
    }
    if coupler_state > 1 {
        return Err(Error::UnknownCouplerState(coupler_state.to_string()));
    }
    if opts.samples < 8 {
        return Err(Error::InsufficientData("need at least 8 samples per trace".into()));
    }
    delta_grid
        .par_iter()
        .map(|&delta| {
            let f3 = g_eff_three_level(p, delta, coupler_state)?.rabi_mhz();
            let f2 = g_eff_two_level(p, delta, coupler_state)?.rabi_mhz();
            let wc = p.omega2 - delta;
            let res = calibrate_resonance(p, wc, coupler_state, opts.resonance)?;
            // about three exchange periods, bounded for near-zero couplings
            let mut window = (3.0 / res.gap_ghz.max(1e-12)).clamp(100.0, 1e5);
            if opts.noisy {
                window = window.min(opts.max_noisy_window_ns);
            }
            let n = opts.samples;
            let t: Vec<f64> = (0..n).map(|k| window * k as f64 / (n - 1) as f64).collect();
            let (omega1, trace) = exchange_trace(p, coupler_state, wc, &t, opts)?;
            let fit = fit_or_warn(&t, &trace, || format!("coupling trace at Δ = {delta} GHz"));
            Ok(CouplingRow {
                delta_ghz: delta,
                omegac_ghz: wc,
                omega1_ghz: omega1,
                fitted_2g_mhz: fit.map(|f| f.frequency_mhz),
                dressed_gap_mhz: res.gap_ghz * 1e3,
                formula3_2g_mhz: f3,
                formula2_2g_mhz: f2,
                coupler_state,
                window_ns: window,
            })
        })
        .collect()
}
