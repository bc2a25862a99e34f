//! Measurement protocols: pulse schedules, chevron scans, oscillation fits,
//! the open/closed transistor runs and simulated process tomography.

mod fit;
mod frame;
mod gate;
mod scan;
mod schedule;

pub use fit::{fit_oscillation, FitResult};
pub use frame::ComputationalFrame;
pub use gate::{
    optimize_virtual_z, run_transistor, simulate_qpt, virtual_z, GateCalibration, GateConfig, QptConfig, QptResult,
    TransistorConfig, TransistorGate, TransistorRun, TransistorSummary,
};
pub use scan::{
    calibrate_resonance, chevron_scan, coupling_vs_detuning, exchange_gap, ChevronData, CouplingRow, Resonance,
    ResonanceMode, ScanOptions,
};
pub use schedule::{
    build_transistor_schedule, idle_frame, idle_off_point, idle_point, parse_coupler_state, run_schedule,
    run_schedule_final, PulseSchedule, ScheduleConfig, Segment, SegmentKind, Trajectory, IDLE_DETUNING_GHZ,
};
