//! Adaptive Dormand–Prince 5(4) integration of the Lindblad equation
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_k γ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})
//! ```
//!
//! written as dρ = X + X† + Σ L ρ L† with X = −i H_eff ρ and
//! H_eff = H − (i/2) Σ γ L†L. Operators are stored as sparse triplets since
//! the circuit Hamiltonian and all jump operators are very sparse.
//!
//! Optionally the integration runs in the frame rotating with a conserved
//! diagonal generator G (for the circuit: total excitation number). This is
//! an exact change of variables, not a rotating-wave approximation. It
//! removes the fast 2π·ω·N phases and with them most of the step count.
//! Returned states are always in the lab frame.

use crate::circuit::{Basis, OperatorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{eigh, hermiticity_error, max_abs, trace, CMatrix, C64, I};

use super::{CollapseChannel, QuantumState};

type Triplets = Vec<(usize, usize, C64)>;

// Dormand–Prince tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone)]
struct Frame {
    generator: Vec<f64>,
    omega: f64,
}

#[derive(Debug, Clone)]
pub struct LindbladSolver {
    dim: usize,
    basis: Basis,
    hamiltonian: CMatrix,
    jumps: Vec<Triplets>,
    /// −i H_eff in the working frame
    drift: Triplets,
    frame: Option<Frame>,
    rtol: f64,
    atol: f64,
}

fn triplets(m: &CMatrix, cutoff: f64) -> Triplets {
    let mut out = Vec::new();
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let z = m[(row, col)];
            if z.norm() > cutoff {
                out.push((row, col, z));
            }
        }
    }
    out
}

impl LindbladSolver {
    pub fn new(h: &OperatorMatrix, channels: &[CollapseChannel]) -> Result<Self> {
        if !h.is_hermitian(1e-12) {
            return Err(Error::InvalidState("Hamiltonian is not Hermitian".into()));
        }
        let dim = h.dim();
        let mut jumps = Vec::new();
        for ch in channels {
            if !(ch.rate >= 0.0) {
                return Err(Error::NegativeRate(ch.rate));
            }
            if ch.operator.dim() != dim {
                return Err(Error::InvalidDimension(format!(
                    "collapse operator `{}` has dimension {}, Hamiltonian {}",
                    ch.label,
                    ch.operator.dim(),
                    dim
                )));
            }
            if ch.rate == 0.0 {
                continue;
            }
            let scaled = ch.operator.matrix().scale(ch.rate.sqrt());
            jumps.push(triplets(&scaled, 0.0));
        }
        let mut solver = Self {
            dim,
            basis: h.basis().clone(),
            hamiltonian: h.matrix().clone(),
            jumps,
            drift: Vec::new(),
            frame: None,
            rtol: 1e-9,
            atol: 1e-10,
        };
        solver.rebuild_drift();
        Ok(solver)
    }

    /// Integrate in the frame rotating at `omega` (rad/ns) with the diagonal
    /// generator `generator`. H must commute with G and every jump operator
    /// must change G by a fixed amount, otherwise the frame is rejected.
    pub fn with_frame(mut self, generator: &[f64], omega: f64) -> Result<Self> {
        if generator.len() != self.dim {
            return Err(Error::InvalidFrame(format!(
                "generator has {} entries for dimension {}",
                generator.len(),
                self.dim
            )));
        }
        let scale = max_abs(&self.hamiltonian).max(1.0);
        for col in 0..self.dim {
            for row in 0..self.dim {
                if self.hamiltonian[(row, col)].norm() > 1e-13 * scale
                    && (generator[row] - generator[col]).abs() > 1e-12
                {
                    return Err(Error::InvalidFrame(format!(
                        "Hamiltonian couples generator values {} and {}",
                        generator[row], generator[col]
                    )));
                }
            }
        }
        for jump in &self.jumps {
            let mut shift: Option<f64> = None;
            for &(row, col, _) in jump {
                let s = generator[row] - generator[col];
                match shift {
                    None => shift = Some(s),
                    Some(prev) if (prev - s).abs() > 1e-12 => {
                        return Err(Error::InvalidFrame(
                            "a collapse operator mixes different generator shifts".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        self.frame = Some(Frame {
            generator: generator.to_vec(),
            omega,
        });
        self.rebuild_drift();
        Ok(self)
    }

    /// Use the total-occupation frame of a product basis when it is exact for
    /// this generator, with the reference frequency fitted to the diagonal of
    /// H. Falls back to the lab frame otherwise.
    pub fn with_auto_frame(self) -> Self {
        if !self.basis.is_product() {
            return self;
        }
        let generator: Vec<f64> = (0..self.dim)
            .map(|i| self.basis.label(i).iter().sum::<usize>() as f64)
            .collect();
        let norm: f64 = generator.iter().map(|g| g * g).sum();
        if norm == 0.0 {
            return self;
        }
        let omega = generator
            .iter()
            .enumerate()
            .map(|(i, g)| g * self.hamiltonian[(i, i)].re)
            .sum::<f64>()
            / norm;
        let fallback = self.clone();
        self.with_frame(&generator, omega).unwrap_or(fallback)
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    fn rebuild_drift(&mut self) {
        let n = self.dim;
        let mut h = self.hamiltonian.clone();
        if let Some(frame) = &self.frame {
            for i in 0..n {
                h[(i, i)] -= C64::new(frame.omega * frame.generator[i], 0.0);
            }
        }
        let mut drift = h.map(|z| -I * z);
        for jump in &self.jumps {
            // −½ L†L
            let mut l = CMatrix::zeros(n, n);
            for &(r, c, v) in jump {
                l[(r, c)] = v;
            }
            drift -= (l.adjoint() * &l).scale(0.5);
        }
        self.drift = triplets(&drift, 0.0);
    }

    /// Column-major dρ/dt.
    fn rhs(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let n = self.dim;
        let x = scratch;
        x.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(j, k, a) in &self.drift {
            for col in 0..n {
                x[j + col * n] += a * rho[k + col * n];
            }
        }
        for col in 0..n {
            for row in 0..n {
                out[row + col * n] = x[row + col * n] + x[col + row * n].conj();
            }
        }
        for jump in &self.jumps {
            // Y = L ρ into scratch, then out += Y L†
            x.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for &(j, k, v) in jump {
                for col in 0..n {
                    x[j + col * n] += v * rho[k + col * n];
                }
            }
            for &(m, k, v) in jump {
                let cv = v.conj();
                for row in 0..n {
                    out[row + m * n] += x[row + k * n] * cv;
                }
            }
        }
    }

    fn check_initial(&self, rho0: &QuantumState) -> Result<CMatrix> {
        if rho0.dim() != self.dim {
            return Err(Error::InvalidDimension(format!(
                "initial state of dimension {} for a Hamiltonian of dimension {}",
                rho0.dim(),
                self.dim
            )));
        }
        let rho = rho0.density_matrix();
        let tol = 1e-7;
        if hermiticity_error(&rho) > tol {
            return Err(Error::InvalidState("initial density matrix is not Hermitian".into()));
        }
        let tr = trace(&rho);
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidState(format!("initial density matrix has trace {tr}")));
        }
        if !rho0.is_pure() {
            let (values, _) = eigh(&rho);
            if values[0] < -tol {
                return Err(Error::InvalidState(format!(
                    "initial density matrix has eigenvalue {:.3e}",
                    values[0]
                )));
            }
        }
        Ok(rho)
    }

    fn to_lab(&self, y: &[C64], t: f64) -> CMatrix {
        let n = self.dim;
        let mut m = CMatrix::from_column_slice(n, n, y);
        if let Some(frame) = &self.frame {
            for col in 0..n {
                for row in 0..n {
                    let dg = frame.generator[row] - frame.generator[col];
                    if dg != 0.0 {
                        m[(row, col)] *= (-I * frame.omega * dg * t).exp();
                    }
                }
            }
        }
        m
    }

    /// States at every time in `t_grid` (ns, ascending, starting from 0).
    pub fn solve(&self, rho0: &QuantumState, t_grid: &[f64]) -> Result<Vec<QuantumState>> {
        let rho = self.check_initial(rho0)?;
        for w in t_grid.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::Integration {
                    t: w[1],
                    reason: "time grid must be ascending".into(),
                });
            }
        }
        if let Some(&first) = t_grid.first() {
            if !(first >= 0.0) || !t_grid.last().unwrap().is_finite() {
                return Err(Error::Integration {
                    t: first,
                    reason: "time grid must be finite and non-negative".into(),
                });
            }
        }

        let len = self.dim * self.dim;
        let mut y: Vec<C64> = rho.as_slice().to_vec();
        let mut k = vec![vec![C64::new(0.0, 0.0); len]; 7];
        let mut stage = vec![C64::new(0.0, 0.0); len];
        let mut y_new = vec![C64::new(0.0, 0.0); len];
        let mut scratch = vec![C64::new(0.0, 0.0); len];

        let mut t = 0.0;
        let mut h = 1e-3;
        let mut fsal_valid = false;
        let mut steps = 0usize;
        let mut rejected = 0usize;
        let mut out = Vec::with_capacity(t_grid.len());

        for &target in t_grid {
            while t < target {
                if steps + rejected > MAX_STEPS {
                    return Err(Error::Integration {
                        t,
                        reason: "step budget exhausted".into(),
                    });
                }
                let remaining = target - t;
                let last = h >= remaining;
                let step = if last { remaining } else { h };
                if step < 1e-14 * target.max(1.0) && !last {
                    return Err(Error::Integration {
                        t,
                        reason: format!("step size underflow ({step:.3e} ns)"),
                    });
                }

                if !fsal_valid {
                    let (k0, _) = k.split_at_mut(1);
                    self.rhs(&y, &mut k0[0], &mut scratch);
                }
                let stages: [(&[f64], usize); 5] = [
                    (&[A21], 1),
                    (&[A31, A32], 2),
                    (&[A41, A42, A43], 3),
                    (&[A51, A52, A53, A54], 4),
                    (&[A61, A62, A63, A64, A65], 5),
                ];
                for (coeffs, idx) in stages {
                    for i in 0..len {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, &a) in coeffs.iter().enumerate() {
                            acc += k[j][i] * a;
                        }
                        stage[i] = y[i] + acc * step;
                    }
                    let (_, rest) = k.split_at_mut(idx);
                    self.rhs(&stage, &mut rest[0], &mut scratch);
                }
                for i in 0..len {
                    y_new[i] = y[i]
                        + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * step;
                }
                {
                    let (_, rest) = k.split_at_mut(6);
                    self.rhs(&y_new, &mut rest[0], &mut scratch);
                }

                let mut err_max: f64 = 0.0;
                for i in 0..len {
                    let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6
                        + k[6][i] * E7)
                        * step;
                    let sc = self.atol + self.rtol * y[i].norm().max(y_new[i].norm());
                    err_max = err_max.max(e.norm() / sc);
                }
                // max norm: a mean over the mostly-empty matrix hides local error
                let err = err_max;
                if !err.is_finite() {
                    return Err(Error::Integration {
                        t,
                        reason: "non-finite error estimate".into(),
                    });
                }

                let factor = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
                if err <= 1.0 {
                    t = if last { target } else { t + step };
                    std::mem::swap(&mut y, &mut y_new);
                    k.swap(0, 6);
                    fsal_valid = true;
                    steps += 1;
                    // a truncated final step says nothing about the natural size
                    if !last || factor < 1.0 {
                        h = step * factor.clamp(0.2, 5.0);
                    }
                } else {
                    h = step * factor.clamp(0.2, 1.0);
                    fsal_valid = true;
                    rejected += 1;
                }
            }
            out.push(QuantumState::density_unchecked(self.to_lab(&y, t), self.basis.clone()));
        }
        log::debug!(
            "lindblad: {} accepted, {} rejected steps to t = {} ns",
            steps,
            rejected,
            t
        );
        Ok(out)
    }
}

/// Lab-frame Lindblad trajectory sampled on `t_grid`.
pub fn evolve_lindblad(
    h: &OperatorMatrix,
    rho0: &QuantumState,
    channels: &[CollapseChannel],
    t_grid: &[f64],
) -> Result<Vec<QuantumState>> {
    LindbladSolver::new(h, channels)?.with_auto_frame().solve(rho0, t_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{full_hamiltonian, CircuitParams, Site};
    use crate::dynamics::{collapse_channels_from_coherence, dephasing_channel, relaxation_channel, Propagator};
    use crate::linalg::CVector;
    use std::f64::consts::TAU;

    fn excitation_numbers(levels: usize) -> Vec<f64> {
        let basis = Basis::circuit(levels);
        (0..basis.dim()).map(|i| basis.label(i).iter().sum::<usize>() as f64).collect()
    }

    #[test]
    fn closed_system_matches_unitary() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let mut v = CVector::zeros(27);
        v[p.basis().index(&[0, 1, 1])] = C64::new(0.6, 0.0);
        v[p.basis().index(&[1, 0, 0])] = C64::new(0.0, 0.8);
        let psi0 = QuantumState::pure(v, p.basis()).unwrap();
        let grid = [0.0, 5.0, 20.0, 40.0];
        let prop = Propagator::new(&h).unwrap();

        let lab = LindbladSolver::new(&h, &[]).unwrap().solve(&psi0, &grid).unwrap();
        let auto = evolve_lindblad(&h, &psi0, &[], &grid).unwrap();
        let rotating = LindbladSolver::new(&h, &[])
            .unwrap()
            .with_frame(&excitation_numbers(3), TAU * p.omega2)
            .unwrap()
            .solve(&psi0, &grid)
            .unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = prop.evolve(&psi0, t).unwrap().density_matrix();
            assert!(max_abs(&(lab[i].density_matrix() - &exact)) < 1e-5, "lab t = {t}");
            assert!(max_abs(&(auto[i].density_matrix() - &exact)) < 1e-7, "auto t = {t}: {:e}", max_abs(&(auto[i].density_matrix() - &exact)));
            assert!(max_abs(&(rotating[i].density_matrix() - &exact)) < 1e-7, "frame t = {t}");
        }
    }

    #[test]
    fn trace_hermiticity_positivity() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let channels = collapse_channels_from_coherence(&p).unwrap();
        let mut v = CVector::from_fn(27, |i, _| C64::new(1.0 / (1.0 + i as f64), (i % 3) as f64 * 0.1));
        v.unscale_mut(v.norm());
        let psi0 = QuantumState::pure(v, p.basis()).unwrap();
        let grid: Vec<f64> = (0..=6).map(|k| 50.0 * k as f64).collect();
        let traj = LindbladSolver::new(&h, &channels)
            .unwrap()
            .with_frame(&excitation_numbers(3), TAU * p.omega2)
            .unwrap()
            .solve(&psi0, &grid)
            .unwrap();
        for s in &traj {
            let rho = s.density_matrix();
            assert!((trace(&rho).re - 1.0).abs() < 1e-7);
            assert!(hermiticity_error(&rho) < 1e-10);
            assert!(eigh(&rho).0[0] > -1e-7);
        }
    }

    #[test]
    fn single_mode_decay_rates() {
        // one qubit of the circuit, everything else decoupled and empty
        let p = CircuitParams {
            g1: 0.0,
            g2: 0.0,
            g12: 0.0,
            ..CircuitParams::default()
        };
        let h = full_hamiltonian(&p).unwrap();
        let (t1, gphi) = (200.0, 0.004);
        let channels = vec![
            relaxation_channel(Site::Q2, 3, 1.0 / t1).unwrap(),
            dephasing_channel(Site::Q2, 3, gphi).unwrap(),
        ];
        let basis = p.basis();
        let (i0, i1) = (basis.index(&[0, 0, 0]), basis.index(&[0, 1, 0]));
        let mut v = CVector::zeros(27);
        v[i0] = C64::new(0.5f64.sqrt(), 0.0);
        v[i1] = C64::new(0.5f64.sqrt(), 0.0);
        let psi0 = QuantumState::pure(v, basis).unwrap();
        let t = 150.0;
        let rho = evolve_lindblad(&h, &psi0, &channels, &[t]).unwrap()[0].density_matrix();
        let excited = 0.5 * (-t / t1).exp();
        assert!((rho[(i1, i1)].re - excited).abs() < 1e-8);
        let coherence = 0.5 * (-t / (2.0 * t1) - gphi * t).exp();
        assert!((rho[(i0, i1)].norm() - coherence).abs() < 1e-7, "{} vs {}", rho[(i0, i1)].norm(), coherence);
    }

    #[test]
    fn frame_rejects_incompatible_generator() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let mut g = excitation_numbers(3);
        g[1] += 0.5;
        assert!(matches!(
            LindbladSolver::new(&h, &[]).unwrap().with_frame(&g, 1.0),
            Err(Error::InvalidFrame(_))
        ));
    }

    #[test]
    fn input_validation() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let psi = QuantumState::fock(3, [0, 0, 0]);
        assert!(evolve_lindblad(&h, &psi, &[], &[2.0, 1.0]).is_err());
        let wrong = QuantumState::basis_state(Basis::single(2), 0);
        assert!(evolve_lindblad(&h, &wrong, &[], &[1.0]).is_err());
        let out = evolve_lindblad(&h, &psi, &[], &[0.0]).unwrap();
        assert_eq!(out[0].density_matrix(), psi.density_matrix());
    }
}
