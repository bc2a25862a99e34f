//! Sinusoid fit v(t) = offset + amplitude·cos(2π f t + phase).

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const FLAT_AMPLITUDE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Oscillation frequency in MHz.
    pub frequency_mhz: f64,
    pub amplitude: f64,
    /// Radians, referenced to t = 0.
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    /// Set when the signal carries no resolvable oscillation; the frequency
    /// is then reported as 0.
    pub flat: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn evaluate(&self, t_ns: f64) -> f64 {
        let f = self.frequency_mhz * 1e-3;
        self.offset + self.amplitude * (std::f64::consts::TAU * f * t_ns + self.phase).cos()
    }
}

/// Frequency (cycles per sample unit) of the strongest non-DC component,
/// from a zero-padded FFT refined by a parabola through the peak bins.
fn spectral_peak(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    let padded = (16 * n).max(4096).next_power_of_two();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mag: Vec<f64> = buf[..padded / 2 + 1].iter().map(|z| z.norm()).collect();
    let k = (1..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(1);
    let shift = if k + 1 < mag.len() {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    (k as f64 + shift) / (padded as f64 * dt)
}

/// Linear least squares for (offset, a, b) at fixed frequency.
fn linear_part(t: &[f64], v: &[f64], f: f64) -> [f64; 3] {
    let w = std::f64::consts::TAU * f;
    let a = DMatrix::from_fn(t.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (w * t[i]).cos(),
        _ => (w * t[i]).sin(),
    });
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(v), 1e-12)
        .expect("svd with both factors");
    [sol[0], sol[1], sol[2]]
}

fn residuals(t: &[f64], v: &[f64], x: &[f64; 4]) -> DVector<f64> {
    let w = std::f64::consts::TAU * x[3];
    DVector::from_fn(t.len(), |i, _| x[0] + x[1] * (w * t[i]).cos() + x[2] * (w * t[i]).sin() - v[i])
}

fn rms(r: &DVector<f64>) -> f64 {
    (r.norm_squared() / r.len() as f64).sqrt()
}

/// Least-squares sinusoid fit on a uniform time grid (ns). Initial frequency
/// from the spectrum, then Levenberg–Marquardt on (offset, a, b, f) with
/// v = offset + a cos ωt + b sin ωt.
pub fn fit_oscillation(t: &[f64], values: &[f64]) -> Result<FitResult> {
    if t.len() != values.len() {
        return Err(Error::InsufficientData(format!(
            "{} times but {} values",
            t.len(),
            values.len()
        )));
    }
    if t.len() < 8 {
        return Err(Error::InsufficientData(format!("need at least 8 samples, got {}", t.len())));
    }
    if t.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData("non-finite sample".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::InsufficientData("time grid must be uniform and ascending".into()));
    }

    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let spread = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread < FLAT_AMPLITUDE {
        let r = DVector::from_iterator(values.len(), values.iter().map(|v| v - mean));
        return Ok(FitResult {
            frequency_mhz: 0.0,
            amplitude: spread,
            phase: 0.0,
            offset: mean,
            residual_rms: rms(&r),
            flat: true,
            iterations: 0,
        });
    }

    let f0 = spectral_peak(values, dt);
    let [c0, a0, b0] = linear_part(t, values, f0);
    let mut x = [c0, a0, b0, f0];
    let mut r = residuals(t, values, &x);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let w = std::f64::consts::TAU * x[3];
        let jac = DMatrix::from_fn(t.len(), 4, |i, j| {
            let (s, c) = (w * t[i]).sin_cos();
            match j {
                0 => 1.0,
                1 => c,
                2 => s,
                _ => std::f64::consts::TAU * t[i] * (x[2] * c - x[1] * s),
            }
        });
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        let mut step_norm = 0.0;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [x[0] + step[0], x[1] + step[1], x[2] + step[2], x[3] + step[3]];
            let r_trial = residuals(t, values, &trial);
            let c_trial = r_trial.norm_squared();
            step_norm = (0..4)
                .map(|k| (step[k] / x[k].abs().max(1e-12)).powi(2))
                .sum::<f64>()
                .sqrt();
            if c_trial <= cost {
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if step_norm < 1e-10 || cost == 0.0 {
            converged = true;
            break;
        }
        if !accepted {
            // no downhill step left at any damping: a minimum to machine precision
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            residual_rms: rms(&r),
            residuals: r.iter().copied().collect(),
        });
    }

    let [offset, a, b, mut f] = x;
    let mut b = b;
    if f < 0.0 {
        f = -f;
        b = -b;
    }
    let amplitude = a.hypot(b);
    let span = t[t.len() - 1] - t[0];
    if f * span < 0.5 && amplitude >= FLAT_AMPLITUDE {
        log::warn!("fit window covers less than half a period ({:.3} MHz over {span} ns)", f * 1e3);
    }
    let flat = amplitude < FLAT_AMPLITUDE;
    Ok(FitResult {
        frequency_mhz: if flat { 0.0 } else { f * 1e3 },
        amplitude,
        phase: (-b).atan2(a),
        offset,
        residual_rms: rms(&r),
        flat,
        iterations,
    })
}
