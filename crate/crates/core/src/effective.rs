//! Closed-form effective qubit-qubit couplings mediated by the coupler.
//!
//! Sign convention: Δ = ω − ωc with the coupler above the qubits, so the
//! operating detunings are negative. All couplings are in GHz (linear).
//!
//! Eliminating the coupler to second order gives, for coupler state |n⟩,
//!
//! ```text
//! two-level coupler:    g = g12 + (−1)^n g1 g2 / Δ
//! three-level coupler:  g = g12 + g1 g2 (2 / (Δ − δ_n1 αc) − 1 / Δ)
//! ```
//!
//! Both expressions coincide for n = 0. The elimination also produces a
//! state-dependent energy shift h0; it drives no exchange, so it is left out
//! of the reduced 2×2 Hamiltonian (the full model keeps it automatically).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::circuit::{Basis, CircuitParams, OperatorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detunings {
    /// ω1 − ωc
    pub delta: f64,
    /// ω1 − (ωc + αc)
    pub delta_tilde: f64,
    /// (ω1 + α1) − ωc
    pub delta_tilde_prime: f64,
    /// (ω1 + α1) − (ωc + αc)
    pub delta_double_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplerModel {
    TwoLevel,
    ThreeLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoupling {
    /// Signed coupling in GHz.
    pub value: f64,
    pub coupler_state: u8,
    pub model: CouplerModel,
    pub delta: f64,
}

impl EffectiveCoupling {
    /// Vacuum-Rabi frequency |2g| in MHz, the quantity a population fit sees.
    pub fn rabi_mhz(&self) -> f64 {
        2.0 * self.value.abs() * 1e3
    }
}

pub fn detunings(p: &CircuitParams) -> Detunings {
    let w = p.omega1;
    let wt = p.omega1 + p.alpha1;
    let wc = p.omega_c;
    let wct = p.omega_c + p.alpha_c;
    Detunings {
        delta: w - wc,
        delta_tilde: w - wct,
        delta_tilde_prime: wt - wc,
        delta_double_tilde: wt - wct,
    }
}

fn check_state(n: u8) -> Result<()> {
    if n > 1 {
        return Err(Error::UnknownCouplerState(n.to_string()));
    }
    Ok(())
}

pub fn g_eff_two_level(p: &CircuitParams, delta: f64, n: u8) -> Result<EffectiveCoupling> {
    check_state(n)?;
    if delta == 0.0 {
        return Err(Error::ResonanceSingularity { delta });
    }
    let sign = if n == 0 { 1.0 } else { -1.0 };
    Ok(EffectiveCoupling {
        value: p.g12 + sign * p.g1 * p.g2 / delta,
        coupler_state: n,
        model: CouplerModel::TwoLevel,
        delta,
    })
}

pub fn g_eff_three_level(p: &CircuitParams, delta: f64, n: u8) -> Result<EffectiveCoupling> {
    check_state(n)?;
    if n == 0 {
        // identical expression, and kept bitwise identical on purpose
        return Ok(EffectiveCoupling {
            model: CouplerModel::ThreeLevel,
            ..g_eff_two_level(p, delta, 0)?
        });
    }
    let shifted = delta - p.alpha_c;
    if delta == 0.0 || shifted == 0.0 {
        return Err(Error::ResonanceSingularity { delta });
    }
    Ok(EffectiveCoupling {
        value: p.g12 + p.g1 * p.g2 * (2.0 / shifted - 1.0 / delta),
        coupler_state: n,
        model: CouplerModel::ThreeLevel,
        delta,
    })
}

pub fn g_eff(p: &CircuitParams, delta: f64, n: u8, model: CouplerModel) -> Result<EffectiveCoupling> {
    match model {
        CouplerModel::TwoLevel => g_eff_two_level(p, delta, n),
        CouplerModel::ThreeLevel => g_eff_three_level(p, delta, n),
    }
}

/// Single-excitation exchange Hamiltonian 2π g [[0,1],[1,0]] on {|10⟩, |01⟩}.
pub fn effective_two_qubit_hamiltonian(p: &CircuitParams, delta: f64, n: u8) -> Result<OperatorMatrix> {
    let g = g_eff_three_level(p, delta, n)?.value;
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = c(TAU * g);
    m[(1, 0)] = c(TAU * g);
    OperatorMatrix::new(m, Basis::named(vec!["|10⟩".into(), "|01⟩".into()]))
}

/// Δ where the three-level coupling vanishes, bracketed by `interval`.
///
/// Bisection narrows the bracket to 1e−6 GHz, then a bracket-preserving
/// secant iteration polishes to 1e−9 GHz.
pub fn find_off_point(p: &CircuitParams, n: u8, interval: (f64, f64)) -> Result<f64> {
    check_state(n)?;
    let (lo, hi) = interval;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInterval {
            lo,
            hi,
            reason: "expected finite bounds with lo < hi".into(),
        });
    }
    let mut poles = vec![0.0];
    if n == 1 {
        poles.push(p.alpha_c);
    }
    if let Some(&pole) = poles.iter().find(|&&x| lo <= x && x <= hi) {
        return Err(Error::InvalidInterval {
            lo,
            hi,
            reason: format!("contains the singularity at {pole} GHz"),
        });
    }

    let f = |d: f64| g_eff_three_level(p, d, n).map(|g| g.value);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot { lo, hi });
    }

    while b - a > 1e-6 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }

    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let s = b - fb * (b - a) / (fb - fa);
        // fall back to bisection if the secant leaves the bracket
        let next = if s > a && s < b { s } else { 0.5 * (a + b) };
        let fn_ = f(next)?;
        let step = (next - x).abs();
        x = next;
        if fn_ == 0.0 {
            break;
        }
        if fn_.signum() == fa.signum() {
            a = next;
            fa = fn_;
        } else {
            b = next;
            fb = fn_;
        }
        if step < 1e-9 || b - a < 1e-9 {
            break;
        }
    }
    Ok(x)
}
