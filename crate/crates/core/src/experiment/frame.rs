//! Computational frame at the idling point.
//!
//! At idle the qubits and the coupler are far detuned but still weakly
//! hybridized. Preparing or reading out bare product states there would show
//! a few percent of spurious population in the wrong states. The experiment
//! calibrates its single-qubit pulses and readout on the dressed idle
//! eigenstates instead, which is what this frame represents.
//!
//! The frame unitary T block-diagonalizes the idle Hamiltonian with respect
//! to the coupler occupation while staying as close to the identity as
//! possible (least-action block diagonalization):
//!
//! ```text
//! T = V · V_bd† · (V_bd V_bd†)^(−1/2)
//! ```
//!
//! where V holds the idle eigenvectors and V_bd keeps, for each eigenvector,
//! only the coupler-number block it mostly lives in. Within a coupler block
//! the qubits stay in their bare product basis, so a near-resonant qubit
//! pair at idle is not artificially rotated into its dressed eigenstates.

use crate::circuit::{embed_op, Basis, OperatorMatrix, Site};
use crate::dynamics::QuantumState;
use crate::error::{Error, Result};
use crate::linalg::{eigh, inverse_sqrt_hpd, max_abs, CMatrix, C64};

#[derive(Debug, Clone)]
pub struct ComputationalFrame {
    levels: usize,
    basis: Basis,
    t: CMatrix,
}

impl ComputationalFrame {
    /// The trivial frame: bare product states.
    pub fn bare(levels: usize) -> Self {
        let basis = Basis::circuit(levels);
        let d = basis.dim();
        Self {
            levels,
            basis,
            t: CMatrix::identity(d, d),
        }
    }

    pub fn from_idle_hamiltonian(h: &OperatorMatrix) -> Result<Self> {
        let basis = h.basis().clone();
        if basis.dims().len() != 3 || !basis.is_product() {
            return Err(Error::Frame("expected a three-element circuit basis".into()));
        }
        let levels = basis.dims()[2];
        let d = basis.dim();
        let block: Vec<usize> = (0..d).map(|i| basis.label(i)[2]).collect();
        let (_, v) = eigh(h.matrix());

        let mut v_bd = CMatrix::zeros(d, d);
        for k in 0..d {
            let mut weight = vec![0.0; levels];
            for i in 0..d {
                weight[block[i]] += v[(i, k)].norm_sqr();
            }
            let best = (0..levels)
                .max_by(|&a, &b| weight[a].total_cmp(&weight[b]))
                .expect("levels >= 2");
            for i in 0..d {
                if block[i] == best {
                    v_bd[(i, k)] = v[(i, k)];
                }
            }
        }
        let overlap = &v_bd * v_bd.adjoint();
        let inv_sqrt = inverse_sqrt_hpd(&overlap)
            .ok_or_else(|| Error::Frame("idle eigenvectors do not cover every coupler block".into()))?;
        let t = &v * v_bd.adjoint() * inv_sqrt;
        let unitarity = max_abs(&(t.adjoint() * &t - CMatrix::identity(d, d)));
        if unitarity > 1e-8 {
            return Err(Error::Frame(format!("frame unitary deviates by {unitarity:.2e}")));
        }
        Ok(Self { levels, basis, t })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Columns are the dressed computational states T|n1 n2 nc⟩.
    pub fn unitary(&self) -> &CMatrix {
        &self.t
    }

    /// Largest element of T†HT coupling different coupler blocks.
    pub fn off_block_residual(&self, h: &OperatorMatrix) -> f64 {
        let m = self.t.adjoint() * h.matrix() * &self.t;
        let mut worst: f64 = 0.0;
        for col in 0..m.ncols() {
            for row in 0..m.nrows() {
                if self.basis.label(row)[2] != self.basis.label(col)[2] {
                    worst = worst.max(m[(row, col)].norm());
                }
            }
        }
        worst
    }

    /// Dressed version of a bare-frame operator: T A T†.
    pub fn dress(&self, op: &CMatrix) -> CMatrix {
        &self.t * op * self.t.adjoint()
    }

    /// Dressed computational state T|n1 n2 nc⟩.
    pub fn state(&self, occupation: [usize; 3]) -> QuantumState {
        let index = self.basis.index(&occupation);
        QuantumState::pure(self.t.column(index).into_owned(), self.basis.clone()).expect("unitary column")
    }

    /// Exact X on the {|0⟩, |1⟩} levels of one element, applied in the frame.
    pub fn pi_pulse(&self, site: Site) -> Result<CMatrix> {
        let d = self.levels;
        let mut x = CMatrix::zeros(d, d);
        x[(0, 1)] = C64::new(1.0, 0.0);
        x[(1, 0)] = C64::new(1.0, 0.0);
        for k in 2..d {
            x[(k, k)] = C64::new(1.0, 0.0);
        }
        let x = OperatorMatrix::new(x, Basis::single(d))?;
        Ok(self.dress(embed_op(&x, site, d)?.matrix()))
    }

    /// Populations of all frame states, in basis order.
    pub fn frame_populations(&self, state: &QuantumState) -> Vec<f64> {
        match state.amplitudes() {
            Some(v) => (self.t.adjoint() * v).iter().map(|z| z.norm_sqr()).collect(),
            None => {
                let rho = state.density_matrix();
                let m = self.t.adjoint() * rho * &self.t;
                (0..m.nrows()).map(|i| m[(i, i)].re).collect()
            }
        }
    }

    /// Two-qubit populations [p00, p01, p10, p11] (labels |q1 q2⟩), summed
    /// over every coupler level. Readout is a two-state discriminator: any
    /// excited qubit level reads as 1, so the four entries sum to the trace.
    pub fn qubit_populations(&self, state: &QuantumState) -> [f64; 4] {
        let pops = self.frame_populations(state);
        let mut out = [0.0; 4];
        for (i, p) in pops.iter().enumerate() {
            let occ = self.basis.label(i);
            out[2 * occ[0].min(1) + occ[1].min(1)] += p;
        }
        out
    }

    /// Two-qubit density matrix (index 2·q1 + q2) with the coupler traced
    /// out; qubit leakage levels are dropped, so the trace may be below 1.
    pub fn reduced_qubit_state(&self, state: &QuantumState) -> CMatrix {
        let rho = state.density_matrix();
        let m = self.t.adjoint() * rho * &self.t;
        let mut out = CMatrix::zeros(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for nc in 0..self.levels {
                    let i = self.basis.index(&[a / 2, a % 2, nc]);
                    let j = self.basis.index(&[b / 2, b % 2, nc]);
                    acc += m[(i, j)];
                }
                out[(a, b)] = acc;
            }
        }
        out
    }

    /// T (ρ_q ⊗ |n⟩⟨n|) T† for a two-qubit state ρ_q (index 2·q1 + q2).
    pub fn embed_qubit_state(&self, rho_q: &CMatrix, coupler: usize) -> Result<QuantumState> {
        if rho_q.nrows() != 4 || rho_q.ncols() != 4 {
            return Err(Error::InvalidDimension("two-qubit state must be 4x4".into()));
        }
        let d = self.basis.dim();
        let mut bare = CMatrix::zeros(d, d);
        for a in 0..4 {
            for b in 0..4 {
                let i = self.basis.index(&[a / 2, a % 2, coupler]);
                let j = self.basis.index(&[b / 2, b % 2, coupler]);
                bare[(i, j)] = rho_q[(a, b)];
            }
        }
        QuantumState::density(self.dress(&bare), self.basis.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{full_hamiltonian, CircuitParams};

    fn idle() -> OperatorMatrix {
        let p = CircuitParams::default();
        let off = p.omega2 + p.g1 * p.g2 / p.g12;
        full_hamiltonian(&p.at(p.omega2 + 0.05, off)).unwrap()
    }

    #[test]
    fn frame_is_unitary_and_block_diagonalizes() {
        let h = idle();
        let f = ComputationalFrame::from_idle_hamiltonian(&h).unwrap();
        let d = 27;
        assert!(max_abs(&(f.unitary().adjoint() * f.unitary() - CMatrix::identity(d, d))) < 1e-10);
        assert!(f.off_block_residual(&h) < 1e-8 * h.max_abs());
        // close to identity: the dispersive dressing is small
        let t = f.unitary();
        for i in 0..d {
            assert!(t[(i, i)].norm() > 0.95);
        }
    }

    #[test]
    fn pulses_and_populations() {
        let f = ComputationalFrame::from_idle_hamiltonian(&idle()).unwrap();
        let ground = f.state([0, 0, 0]);
        let x2 = f.pi_pulse(Site::Q2).unwrap();
        let prepared = ground.transform(&x2);
        let p = f.qubit_populations(&prepared);
        assert!((p[1] - 1.0).abs() < 1e-12);
        let xc = f.pi_pulse(Site::Coupler).unwrap();
        let both = prepared.transform(&xc);
        assert!((f.frame_populations(&both)[f.basis.index(&[0, 1, 1])] - 1.0).abs() < 1e-12);
        // traced over the coupler the qubit state is still |01⟩
        let rho = f.reduced_qubit_state(&both);
        assert!((rho[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_round_trip() {
        let f = ComputationalFrame::from_idle_hamiltonian(&idle()).unwrap();
        let rho = crate::tomography::prepare_input_states()[11].density_matrix();
        let full = f.embed_qubit_state(&rho, 1).unwrap();
        assert!(max_abs(&(f.reduced_qubit_state(&full) - &rho)) < 1e-12);
    }
}
