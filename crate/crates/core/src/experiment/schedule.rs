//! Piecewise-constant control sequence of the transistor experiment:
//! prepare at idle, jump to the interaction point, jump back and measure.

use serde::{Deserialize, Serialize};

use crate::circuit::{full_hamiltonian, CircuitParams, Site};
use crate::dynamics::{collapse_channels_from_coherence, LindbladSolver, Propagator, QuantumState};
use crate::effective::find_off_point;
use crate::error::{Error, Result};

use super::frame::ComputationalFrame;
use super::scan::{calibrate_resonance, ResonanceMode};

/// Qubit detuning ω1 − ω2 at the idling point (GHz).
pub const IDLE_DETUNING_GHZ: f64 = 0.050;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Idle,
    Interaction,
}

/// One constant-frequency stretch. Its π-pulses act instantaneously at the
/// segment start, before any evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration_ns: f64,
    pub omega1_ghz: f64,
    pub omegac_ghz: f64,
    pub pi_pulses: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<Segment>,
    pub coupler_state: u8,
}

impl PulseSchedule {
    /// Zero-length segments are allowed and act as pure pulse slots.
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidSchedule("no segments".into()));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.duration_ns >= 0.0) || !s.duration_ns.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "segment {k} has invalid duration {}",
                    s.duration_ns
                )));
            }
            if !s.omega1_ghz.is_finite() || !s.omegac_ghz.is_finite() {
                return Err(Error::InvalidSchedule(format!("segment {k} has a non-finite frequency")));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    pub fn segment_start(&self, index: usize) -> f64 {
        self.segments[..index].iter().map(|s| s.duration_ns).sum()
    }

    /// (start, end) of the first interaction segment.
    pub fn interaction_window(&self) -> Option<(f64, f64)> {
        let k = self.segments.iter().position(|s| s.kind == SegmentKind::Interaction)?;
        let start = self.segment_start(k);
        Some((start, start + self.segments[k].duration_ns))
    }

    pub fn interaction(&self) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == SegmentKind::Interaction)
    }

    /// Idle operating point (ω1, ωc) of the first segment.
    pub fn idle_point(&self) -> (f64, f64) {
        let s = &self.segments[0];
        (s.omega1_ghz, s.omegac_ghz)
    }
}

/// Accepts `0`, `1`, `|0>`, `|1>`, `|0⟩`, `|1⟩`, `ground`, `excited`.
pub fn parse_coupler_state(tag: &str) -> Result<u8> {
    match tag.trim() {
        "0" | "|0>" | "|0⟩" | "ground" => Ok(0),
        "1" | "|1>" | "|1⟩" | "excited" => Ok(1),
        other => Err(Error::UnknownCouplerState(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub coupler_state: String,
    /// Coupler frequency during the interaction. Defaults to the device
    /// operating point (`omegac_ghz` of the circuit) for an excited coupler
    /// and to the idle point for a coupler in |0⟩.
    pub interaction_omegac_ghz: Option<f64>,
    pub interaction_ns: f64,
    /// Q1 frequency during the interaction; calibrated on resonance with Q2
    /// when absent.
    pub interaction_omega1_ghz: Option<f64>,
    pub idle_detuning_ghz: f64,
    /// Coupler idle frequency; the |0⟩-state off point when absent.
    pub idle_omegac_ghz: Option<f64>,
    pub prepare: Vec<Site>,
    pub pre_idle_ns: f64,
    pub post_idle_ns: f64,
    pub resonance: ResonanceMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            coupler_state: "1".into(),
            interaction_omegac_ghz: None,
            interaction_ns: 60.0,
            interaction_omega1_ghz: None,
            idle_detuning_ghz: IDLE_DETUNING_GHZ,
            idle_omegac_ghz: None,
            prepare: vec![Site::Q2],
            pre_idle_ns: 0.0,
            post_idle_ns: 0.0,
            resonance: ResonanceMode::Dressed,
        }
    }
}

/// Coupler frequency of the |0⟩-state off point, with ω = ω2.
pub fn idle_off_point(p: &CircuitParams) -> Result<f64> {
    let delta = find_off_point(p, 0, (-20.0, -1e-3))?;
    Ok(p.omega2 - delta)
}

/// (ω1, ωc) at the idling point.
pub fn idle_point(p: &CircuitParams, cfg: &ScheduleConfig) -> Result<(f64, f64)> {
    let wc = match cfg.idle_omegac_ghz {
        Some(w) => w,
        None => idle_off_point(p)?,
    };
    Ok((p.omega2 + cfg.idle_detuning_ghz, wc))
}

pub fn build_transistor_schedule(cfg: &ScheduleConfig, p: &CircuitParams) -> Result<PulseSchedule> {
    let n = parse_coupler_state(&cfg.coupler_state)?;
    let (w1_idle, wc_idle) = idle_point(p, cfg)?;
    let wc_int = match (cfg.interaction_omegac_ghz, n) {
        (Some(w), _) => w,
        (None, 0) => wc_idle,
        (None, _) => p.omega_c,
    };
    let w1_int = match cfg.interaction_omega1_ghz {
        Some(w) => w,
        None => calibrate_resonance(p, wc_int, n, cfg.resonance)?.omega1_ghz,
    };
    let mut pulses = cfg.prepare.clone();
    if n == 1 {
        pulses.push(Site::Coupler);
    }
    let schedule = PulseSchedule {
        segments: vec![
            Segment {
                kind: SegmentKind::Idle,
                duration_ns: cfg.pre_idle_ns,
                omega1_ghz: w1_idle,
                omegac_ghz: wc_idle,
                pi_pulses: pulses,
            },
            Segment {
                kind: SegmentKind::Interaction,
                duration_ns: cfg.interaction_ns,
                omega1_ghz: w1_int,
                omegac_ghz: wc_int,
                pi_pulses: vec![],
            },
            Segment {
                kind: SegmentKind::Idle,
                duration_ns: cfg.post_idle_ns,
                omega1_ghz: w1_idle,
                omegac_ghz: wc_idle,
                pi_pulses: vec![],
            },
        ],
        coupler_state: n,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Frame of dressed computational states at the schedule's idle point.
pub fn idle_frame(s: &PulseSchedule, p: &CircuitParams) -> Result<ComputationalFrame> {
    let (w1, wc) = s.idle_point();
    ComputationalFrame::from_idle_hamiltonian(&full_hamiltonian(&p.at(w1, wc))?)
}

/// Lab-basis states sampled along a schedule.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
}

impl Trajectory {
    /// [p00, p01, p10, p11] per sample, read out in `frame`.
    pub fn qubit_populations(&self, frame: &ComputationalFrame) -> Vec<[f64; 4]> {
        self.states.iter().map(|s| frame.qubit_populations(s)).collect()
    }
}

/// Propagate `psi0` through the schedule and sample at absolute times
/// `t_grid`. A sample time on a segment boundary is taken after that
/// segment's pulses. Unitary evolution unless `noisy`, in which case every
/// segment is integrated with the Lindblad equation using the coherence
/// times of `p`.
pub fn run_schedule(
    s: &PulseSchedule,
    p: &CircuitParams,
    psi0: &QuantumState,
    noisy: bool,
    frame: &ComputationalFrame,
    t_grid: &[f64],
) -> Result<Trajectory> {
    s.validate()?;
    let total = s.total_duration();
    for w in t_grid.windows(2) {
        if !(w[1] >= w[0]) {
            return Err(Error::InvalidSchedule("sample times must be ascending".into()));
        }
    }
    if let (Some(&first), Some(&last)) = (t_grid.first(), t_grid.last()) {
        if first < 0.0 || last > total * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidSchedule(format!(
                "sample times must lie in [0, {total}] ns"
            )));
        }
    }
    let channels = if noisy {
        collapse_channels_from_coherence(p)?
    } else {
        Vec::new()
    };
    let mut state = if noisy { psi0.to_density() } else { psi0.clone() };
    let mut out: Vec<Option<QuantumState>> = vec![None; t_grid.len()];
    let last_index = s.segments.len() - 1;
    let mut t0 = 0.0;

    for (k, seg) in s.segments.iter().enumerate() {
        for &site in &seg.pi_pulses {
            state = state.transform(&frame.pi_pulse(site)?);
        }
        let t1 = t0 + seg.duration_ns;
        let members: Vec<usize> = (0..t_grid.len())
            .filter(|&i| {
                let t = t_grid[i];
                out[i].is_none() && t >= t0 && (t < t1 || k == last_index)
            })
            .collect();
        let rel: Vec<f64> = members.iter().map(|&i| (t_grid[i] - t0).clamp(0.0, seg.duration_ns)).collect();

        if seg.duration_ns > 0.0 || !rel.is_empty() {
            let h = full_hamiltonian(&p.at(seg.omega1_ghz, seg.omegac_ghz))?;
            if noisy {
                let mut grid = rel.clone();
                grid.push(seg.duration_ns);
                let solver = LindbladSolver::new(&h, &channels)?.with_auto_frame();
                let mut states = solver.solve(&state, &grid)?;
                state = states.pop().expect("final time");
                for (&i, st) in members.iter().zip(states) {
                    out[i] = Some(st);
                }
            } else {
                let prop = Propagator::new(&h)?;
                for (&i, &r) in members.iter().zip(&rel) {
                    out[i] = Some(prop.evolve(&state, r)?);
                }
                state = prop.evolve(&state, seg.duration_ns)?;
            }
        }
        t0 = t1;
    }
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states: out.into_iter().map(|s| s.expect("every sample assigned")).collect(),
    })
}

/// Final state after the whole schedule.
pub fn run_schedule_final(
    s: &PulseSchedule,
    p: &CircuitParams,
    psi0: &QuantumState,
    noisy: bool,
    frame: &ComputationalFrame,
) -> Result<QuantumState> {
    let traj = run_schedule(s, p, psi0, noisy, frame, &[s.total_duration()])?;
    Ok(traj.states.into_iter().next().expect("one sample"))
}
