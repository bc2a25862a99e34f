//! Time evolution of the circuit: exact unitary propagation and the
//! Lindblad master equation with relaxation and pure dephasing.

mod lindblad;

use std::f64::consts::SQRT_2;

use crate::circuit::{site_lowering, site_number, Basis, CircuitParams, OperatorMatrix, Site};
use crate::error::{Error, Result};
use crate::linalg::{eigh, hermiticity_error, trace, CMatrix, CVector, C64, I};

pub use lindblad::{evolve_lindblad, LindbladSolver};

const NORM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum StateData {
    Pure(CVector),
    Density(CMatrix),
}

/// Pure state or density matrix on a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    data: StateData,
    basis: Basis,
}

impl QuantumState {
    pub fn pure(amplitudes: CVector, basis: Basis) -> Result<Self> {
        check_dim(amplitudes.len(), &basis)?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            data: StateData::Pure(amplitudes),
            basis,
        })
    }

    /// Normalizes `amplitudes` first; fails only on a zero vector.
    pub fn pure_normalized(amplitudes: CVector, basis: Basis) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::pure(amplitudes.unscale(norm), basis)
    }

    pub fn density(rho: CMatrix, basis: Basis) -> Result<Self> {
        check_dim(rho.nrows(), &basis)?;
        if !rho.is_square() {
            return Err(Error::InvalidState("density matrix is not square".into()));
        }
        check_density(&rho)?;
        Ok(Self {
            data: StateData::Density(rho),
            basis,
        })
    }

    /// Integrator output: trusted without the eigenvalue check.
    pub(crate) fn density_unchecked(rho: CMatrix, basis: Basis) -> Self {
        Self {
            data: StateData::Density(rho),
            basis,
        }
    }

    pub fn basis_state(basis: Basis, index: usize) -> Self {
        let mut v = CVector::zeros(basis.dim());
        v[index] = C64::new(1.0, 0.0);
        Self {
            data: StateData::Pure(v),
            basis,
        }
    }

    /// |n1 n2 nc⟩ of the circuit basis.
    pub fn fock(levels: usize, occupation: [usize; 3]) -> Self {
        let basis = Basis::circuit(levels);
        let index = basis.index(&occupation);
        Self::basis_state(basis, index)
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn amplitudes(&self) -> Option<&CVector> {
        match &self.data {
            StateData::Pure(v) => Some(v),
            StateData::Density(_) => None,
        }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn basis_labels(&self) -> Vec<String> {
        self.basis.labels()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.data {
            StateData::Pure(v) => v * v.adjoint(),
            StateData::Density(m) => m.clone(),
        }
    }

    pub fn to_density(&self) -> Self {
        Self {
            data: StateData::Density(self.density_matrix()),
            basis: self.basis.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.data {
            StateData::Pure(v) => v.norm_squared(),
            StateData::Density(m) => trace(m).re,
        }
    }

    /// Re Tr(Aρ), or ⟨ψ|A|ψ⟩ for pure states.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        match &self.data {
            StateData::Pure(v) => v.dotc(&(op * v)).re,
            StateData::Density(m) => (op * m).trace().re,
        }
    }

    /// Probability of basis state `index`.
    pub fn population(&self, index: usize) -> f64 {
        match &self.data {
            StateData::Pure(v) => v[index].norm_sqr(),
            StateData::Density(m) => m[(index, index)].re,
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.population(i)).collect()
    }

    /// Apply a unitary (or any operator) on the left and right as U ρ U†.
    pub fn transform(&self, u: &CMatrix) -> Self {
        let data = match &self.data {
            StateData::Pure(v) => StateData::Pure(u * v),
            StateData::Density(m) => StateData::Density(u * m * u.adjoint()),
        };
        Self {
            data,
            basis: self.basis.clone(),
        }
    }
}

fn check_dim(n: usize, basis: &Basis) -> Result<()> {
    if n != basis.dim() {
        return Err(Error::InvalidDimension(format!(
            "state of dimension {n} on a basis of dimension {}",
            basis.dim()
        )));
    }
    Ok(())
}

fn check_density(rho: &CMatrix) -> Result<()> {
    let herm = hermiticity_error(rho);
    if herm > TRACE_TOL {
        return Err(Error::InvalidState(format!("density matrix not Hermitian ({herm:.2e})")));
    }
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("density matrix trace {tr} is not 1")));
    }
    let (values, _) = eigh(rho);
    if values[0] < -EIG_TOL {
        return Err(Error::InvalidState(format!(
            "density matrix has negative eigenvalue {:.3e}",
            values[0]
        )));
    }
    Ok(())
}

/// Lindblad jump operator with its rate (1/ns). The dissipator is
/// γ (L ρ L† − ½{L†L, ρ}).
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub operator: OperatorMatrix,
    pub rate: f64,
    pub label: String,
}

impl CollapseChannel {
    pub fn new(operator: OperatorMatrix, rate: f64, label: impl Into<String>) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::NegativeRate(rate));
        }
        Ok(Self {
            operator,
            rate,
            label: label.into(),
        })
    }
}

/// Pure-dephasing channel of one element at rate `gamma`, normalized so that
/// the |0⟩–|1⟩ coherence of that element decays as exp(−γt).
///
/// The jump operator is √2·a†a: with L = a†a alone the same coherence would
/// decay at γ/2, and the Table-based rate 1/T2 − 1/(2T1) is by definition a
/// coherence decay rate.
pub fn dephasing_channel(site: Site, levels: usize, gamma: f64) -> Result<CollapseChannel> {
    let n = site_number(site, levels)?;
    CollapseChannel::new(n.scale(SQRT_2), gamma, format!("dephasing {}", site.name()))
}

pub fn relaxation_channel(site: Site, levels: usize, gamma: f64) -> Result<CollapseChannel> {
    CollapseChannel::new(site_lowering(site, levels)?, gamma, format!("relaxation {}", site.name()))
}

/// Relaxation (a, 1/T1) and pure dephasing (γφ = 1/T2 − 1/(2T1)) for every
/// element with finite coherence times. Channels with zero rate are omitted.
pub fn collapse_channels_from_coherence(p: &CircuitParams) -> Result<Vec<CollapseChannel>> {
    p.validate()?;
    let mut out = Vec::new();
    for site in Site::ALL {
        let coh = p.coherence(site);
        let gamma1 = if coh.t1.is_finite() { 1.0 / coh.t1 } else { 0.0 };
        let gamma2 = if coh.t2.is_finite() { 1.0 / coh.t2 } else { 0.0 };
        let gamma_phi = gamma2 - 0.5 * gamma1;
        if gamma1 > 0.0 {
            out.push(relaxation_channel(site, p.levels, gamma1)?);
        }
        // rounding at T2 = 2 T1 can leave a tiny negative remainder
        if gamma_phi > 1e-15 {
            out.push(dephasing_channel(site, p.levels, gamma_phi)?);
        }
    }
    Ok(out)
}

/// Spectral decomposition of a time-independent Hamiltonian, reusable for
/// any number of evolution times.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Vec<f64>,
    vectors: CMatrix,
    basis: Basis,
}

impl Propagator {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        if !h.is_hermitian(1e-12) {
            return Err(Error::InvalidState(format!(
                "Hamiltonian not Hermitian (relative error {:.2e})",
                h.relative_hermiticity_error()
            )));
        }
        let (values, vectors) = eigh(h.matrix());
        Ok(Self {
            energies: values.iter().copied().collect(),
            vectors,
            basis: h.basis().clone(),
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// exp(−iHt).
    pub fn unitary(&self, t: f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &e) in self.energies.iter().enumerate() {
            let mut col = scaled.column_mut(k);
            col *= (-I * e * t).exp();
        }
        scaled * self.vectors.adjoint()
    }

    pub fn evolve(&self, state: &QuantumState, t: f64) -> Result<QuantumState> {
        if state.basis().dim() != self.basis.dim() {
            return Err(Error::InvalidDimension(format!(
                "state of dimension {} for a Hamiltonian of dimension {}",
                state.dim(),
                self.basis.dim()
            )));
        }
        if t == 0.0 {
            return Ok(state.clone());
        }
        match state.data() {
            StateData::Pure(v) => {
                // rotate into the eigenbasis, attach phases, rotate back
                let mut coeffs = self.vectors.adjoint() * v;
                for (k, &e) in self.energies.iter().enumerate() {
                    coeffs[k] *= (-I * e * t).exp();
                }
                Ok(QuantumState {
                    data: StateData::Pure(&self.vectors * coeffs),
                    basis: state.basis().clone(),
                })
            }
            StateData::Density(_) => Ok(state.transform(&self.unitary(t))),
        }
    }
}

/// ψ(t) = exp(−iHt) ψ0.
pub fn evolve_unitary(h: &OperatorMatrix, psi0: &QuantumState, t: f64) -> Result<QuantumState> {
    Propagator::new(h)?.evolve(psi0, t)
}

/// Tr(P ρ(t)) for every state of a trajectory and every projector; one row
/// per time point.
pub fn populations(traj: &[QuantumState], projectors: &[OperatorMatrix]) -> Vec<Vec<f64>> {
    traj.iter()
        .map(|state| projectors.iter().map(|p| state.expectation(p.matrix())).collect())
        .collect()
}

/// Projector onto the span of the given basis indices.
pub fn projector(basis: &Basis, indices: &[usize]) -> OperatorMatrix {
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for &i in indices {
        m[(i, i)] = C64::new(1.0, 0.0);
    }
    OperatorMatrix::new(m, basis.clone()).expect("square by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{full_hamiltonian, total_number};
    use crate::effective::{effective_two_qubit_hamiltonian, g_eff_three_level};
    use std::f64::consts::TAU;

    #[test]
    fn zero_time_is_identity() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let psi = QuantumState::fock(3, [0, 1, 0]);
        assert_eq!(evolve_unitary(&h, &psi, 0.0).unwrap(), psi);
    }

    #[test]
    fn effective_exchange_is_sin_squared() {
        let p = CircuitParams::default();
        let h = effective_two_qubit_hamiltonian(&p, -1.564, 1).unwrap();
        let g = g_eff_three_level(&p, -1.564, 1).unwrap().value;
        let prop = Propagator::new(&h).unwrap();
        let psi0 = QuantumState::basis_state(h.basis().clone(), 0);
        for k in 0..40 {
            let t = 3.0 * k as f64;
            let psi = prop.evolve(&psi0, t).unwrap();
            let expected = (TAU * g * t).sin().powi(2);
            assert!((psi.population(1) - expected).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn norm_and_energy_conserved() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let mut v = CVector::from_fn(27, |i, _| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
        v.unscale_mut(v.norm());
        let psi0 = QuantumState::pure(v, p.basis()).unwrap();
        let e0 = psi0.expectation(h.matrix());
        let prop = Propagator::new(&h).unwrap();
        for &t in &[0.3, 17.0, 250.0, 4000.0] {
            let psi = prop.evolve(&psi0, t).unwrap();
            assert!((psi.trace() - 1.0).abs() < 1e-9);
            assert!((psi.expectation(h.matrix()) - e0).abs() < 1e-9 * e0.abs());
        }
    }

    #[test]
    fn unitary_matrix_matches_vector_path() {
        let p = CircuitParams::default();
        let prop = Propagator::new(&full_hamiltonian(&p).unwrap()).unwrap();
        let psi0 = QuantumState::fock(3, [1, 0, 1]);
        let a = prop.evolve(&psi0, 12.5).unwrap();
        let b = prop.evolve(&psi0.to_density(), 12.5).unwrap();
        assert!(crate::linalg::max_abs(&(a.density_matrix() - b.density_matrix())) < 1e-12);
    }

    #[test]
    fn coherence_rates() {
        let p = CircuitParams::default();
        let channels = collapse_channels_from_coherence(&p).unwrap();
        let find = |label: &str| channels.iter().find(|c| c.label == label).unwrap().rate;
        assert!((find("relaxation Q2") - 1.0 / 6580.0).abs() < 1e-15);
        assert!((find("relaxation Q2") - 1.52e-4).abs() < 1e-6);
        let phi = find("dephasing Q2");
        assert!((phi - (1.0 / 7430.0 - 0.5 / 6580.0)).abs() < 1e-15);
        assert!((phi - 5.86e-5).abs() < 1e-7);

        let q = CircuitParams {
            t2_q1: 2.0 * p.t1_q1,
            t1_c: f64::INFINITY,
            t2_c: f64::INFINITY,
            ..p.clone()
        };
        let channels = collapse_channels_from_coherence(&q).unwrap();
        assert!(!channels.iter().any(|c| c.label == "dephasing Q1"));
        assert!(!channels.iter().any(|c| c.label.ends_with(" C")));

        let bad = CircuitParams {
            t2_c: 3.0 * p.t1_c,
            ..p
        };
        assert!(matches!(
            collapse_channels_from_coherence(&bad),
            Err(Error::InvalidCoherence { .. })
        ));
    }

    #[test]
    fn negative_rate_rejected() {
        let a = site_lowering(Site::Q1, 3).unwrap();
        assert!(matches!(CollapseChannel::new(a, -1.0, "x"), Err(Error::NegativeRate(_))));
    }

    #[test]
    fn state_validation() {
        let basis = Basis::single(2);
        assert!(QuantumState::pure(CVector::from_element(2, C64::new(1.0, 0.0)), basis.clone()).is_err());
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.2, 0.0), C64::new(-0.2, 0.0)]));
        assert!(QuantumState::density(bad, basis.clone()).is_err());
        assert!(QuantumState::density(CMatrix::identity(3, 3).scale(1.0 / 3.0), basis).is_err());
    }

    #[test]
    fn projector_populations_sum_to_one() {
        let p = CircuitParams::default();
        let basis = p.basis();
        let prop = Propagator::new(&full_hamiltonian(&p).unwrap()).unwrap();
        let psi0 = QuantumState::fock(3, [0, 1, 1]);
        let traj: Vec<_> = (0..5).map(|k| prop.evolve(&psi0, 7.0 * k as f64).unwrap()).collect();
        let projectors: Vec<_> = (0..basis.dim()).map(|i| projector(&basis, &[i])).collect();
        for row in populations(&traj, &projectors) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= -1e-9 && x <= 1.0 + 1e-9));
        }
        let n = total_number(3).unwrap();
        assert!((traj[3].expectation(n.matrix()) - 2.0).abs() < 1e-10);
    }
}
