//! Two-qubit state and process tomography.
//!
//! Conventions used throughout:
//!
//! * two-qubit density matrices are indexed by `2·q1 + q2` (Q1 is the slow
//!   index, matching the Kronecker order Q1 ⊗ Q2);
//! * Pauli operators are unnormalized, P_{4a+b} = σ_a ⊗ σ_b with
//!   σ = (I, X, Y, Z), so Tr(P_m P_n) = 4 δ_mn;
//! * the process matrix expands E(ρ) = Σ χ_mn P_m ρ P_n and has Tr χ = 1 for
//!   trace-preserving maps;
//! * readout population vectors are ordered (p00, p10, p01, p11), i.e.
//!   indexed by `q1 + 2·q2`.

mod measurement;
mod readout;

use std::sync::OnceLock;

use nalgebra::linalg::FullPivLU;
use serde::{Deserialize, Serialize};

use crate::circuit::Basis;
use crate::dynamics::QuantumState;
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, from_spectrum, project_to_simplex, trace, CMatrix, CVector, C64, I};

pub use measurement::{bootstrap, simulate_measurement, BootstrapBand};
pub use readout::ReadoutMatrix;

pub const PAULI_LABELS: [&str; 16] = [
    "II", "IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX", "ZY", "ZZ",
];

/// Single-qubit Pauli matrix, index 0..4 for I, X, Y, Z.
pub fn pauli(index: usize) -> CMatrix {
    let (o, l) = (c(0.0), c(1.0));
    let entries = match index {
        0 => [l, o, o, l],
        1 => [o, l, l, o],
        2 => [o, -I, I, o],
        3 => [l, o, o, -l],
        _ => panic!("Pauli index {index} out of range"),
    };
    CMatrix::from_row_slice(2, 2, &entries)
}

/// Two-qubit Pauli operator P_m, m = 4a + b.
pub fn pauli2(m: usize) -> CMatrix {
    pauli(m / 4).kronecker(&pauli(m % 4))
}

pub fn two_qubit_basis() -> Basis {
    Basis::product(vec![2, 2])
}

/// Single-qubit measurement axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn pauli_index(self) -> usize {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }

    /// Rotation taking the eigenbasis of this axis onto the z basis.
    pub fn rotation(self) -> CMatrix {
        let h = (0.5f64).sqrt();
        match self {
            Axis::X => CMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)]),
            // H · S†
            Axis::Y => CMatrix::from_row_slice(2, 2, &[c(h), -I * h, c(h), I * h]),
            Axis::Z => CMatrix::identity(2, 2),
        }
    }
}

/// One tomography setting: the measured population vector (or raw counts)
/// for one input state measured along (axis of Q1, axis of Q2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyRecord {
    pub input_state_id: usize,
    pub basis: [Axis; 2],
    /// (p00, p10, p01, p11)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populations: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<[u64; 4]>,
    pub shots: u64,
}

impl TomographyRecord {
    pub fn from_populations(input_state_id: usize, basis: [Axis; 2], populations: [f64; 4]) -> Self {
        Self {
            input_state_id,
            basis,
            populations: Some(populations),
            counts: None,
            shots: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_state_id >= 16 {
            return Err(Error::IncompleteData(format!(
                "input_state_id {} outside 0..16",
                self.input_state_id
            )));
        }
        match (&self.populations, &self.counts) {
            (Some(p), _) => {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::IncompleteData(format!("populations sum to {sum}")));
                }
            }
            (None, Some(k)) => {
                if k.iter().sum::<u64>() != self.shots || self.shots == 0 {
                    return Err(Error::IncompleteData(format!(
                        "counts sum to {} for {} shots",
                        k.iter().sum::<u64>(),
                        self.shots
                    )));
                }
            }
            (None, None) => {
                return Err(Error::IncompleteData("record carries neither populations nor counts".into()))
            }
        }
        Ok(())
    }

    /// Outcome frequencies in readout order.
    pub fn frequencies(&self) -> Result<[f64; 4]> {
        self.validate()?;
        if let Some(p) = self.populations {
            return Ok(p);
        }
        let k = self.counts.expect("validated");
        let n = self.shots as f64;
        Ok([k[0] as f64 / n, k[1] as f64 / n, k[2] as f64 / n, k[3] as f64 / n])
    }
}

/// Readout-order index of outcome (q1, q2).
pub fn readout_index(q1: usize, q2: usize) -> usize {
    q1 + 2 * q2
}

/// The 16 product inputs |a⟩⊗|b⟩ with a, b from (|0⟩, |1⟩, |+⟩, |+i⟩);
/// state `4a + b` has Q1 in state a.
pub fn prepare_input_states() -> Vec<QuantumState> {
    let h = (0.5f64).sqrt();
    let singles = [
        [c(1.0), c(0.0)],
        [c(0.0), c(1.0)],
        [c(h), c(h)],
        [c(h), I * h],
    ];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            let v = CVector::from_vec(vec![a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]);
            out.push(QuantumState::pure(v, two_qubit_basis()).expect("normalized product"));
        }
    }
    out
}

/// Hermitize, then replace the spectrum by its Euclidean projection onto the
/// probability simplex. This is the Frobenius-nearest density matrix.
pub fn project_to_physical(rho: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(rho);
    let projected = project_to_simplex(values.as_slice(), 1.0);
    from_spectrum(&projected, &vectors)
}

/// Linear-inversion state tomography from the nine (σ_a, σ_b) settings of
/// one input state, followed by physical projection.
pub fn state_tomography(records: &[TomographyRecord]) -> Result<QuantumState> {
    let mut settings: [[Option<[f64; 4]>; 3]; 3] = Default::default();
    for r in records {
        let slot = &mut settings[r.basis[0].pauli_index() - 1][r.basis[1].pauli_index() - 1];
        if slot.is_some() {
            return Err(Error::IncompleteData(format!("duplicate setting {:?}", r.basis)));
        }
        *slot = Some(r.frequencies()?);
    }
    let mut expect = [0.0; 16];
    let mut single1 = [0.0; 4];
    let mut single2 = [0.0; 4];
    for a in 0..3 {
        for b in 0..3 {
            let p = settings[a][b].ok_or_else(|| {
                Error::IncompleteData(format!("missing setting {:?}{:?}", Axis::ALL[a], Axis::ALL[b]))
            })?;
            let mut zz = 0.0;
            let mut z1 = 0.0;
            let mut z2 = 0.0;
            for q1 in 0..2 {
                for q2 in 0..2 {
                    let pr = p[readout_index(q1, q2)];
                    let s1 = if q1 == 0 { 1.0 } else { -1.0 };
                    let s2 = if q2 == 0 { 1.0 } else { -1.0 };
                    zz += s1 * s2 * pr;
                    z1 += s1 * pr;
                    z2 += s2 * pr;
                }
            }
            expect[4 * (a + 1) + (b + 1)] = zz;
            // each marginal is seen in three settings; average them
            single1[a + 1] += z1 / 3.0;
            single2[b + 1] += z2 / 3.0;
        }
    }
    expect[0] = 1.0;
    for k in 1..4 {
        expect[4 * k] = single1[k];
        expect[k] = single2[k];
    }
    let mut rho = CMatrix::zeros(4, 4);
    for (m, &e) in expect.iter().enumerate() {
        rho += pauli2(m).scale(0.25 * e);
    }
    QuantumState::density(project_to_physical(&rho), two_qubit_basis())
}

/// 16×16 χ matrix in the Pauli basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    pub chi: CMatrix,
    pub label: String,
}

impl ProcessMatrix {
    pub fn new(chi: CMatrix, label: impl Into<String>) -> Result<Self> {
        if chi.nrows() != 16 || chi.ncols() != 16 {
            return Err(Error::InvalidDimension(format!(
                "process matrix must be 16x16, got {}x{}",
                chi.nrows(),
                chi.ncols()
            )));
        }
        Ok(Self {
            chi,
            label: label.into(),
        })
    }

    pub fn trace(&self) -> f64 {
        trace(&self.chi).re
    }

    /// χ of the unitary channel ρ ↦ UρU†.
    pub fn from_unitary(u: &CMatrix, label: impl Into<String>) -> Result<Self> {
        if u.nrows() != 4 || u.ncols() != 4 {
            return Err(Error::InvalidDimension("unitary must be 4x4".into()));
        }
        let coeffs: Vec<C64> = (0..16).map(|m| (pauli2(m) * u).trace() / 4.0).collect();
        let chi = CMatrix::from_fn(16, 16, |m, n| coeffs[m] * coeffs[n].conj());
        Self::new(chi, label)
    }

    /// Apply the channel represented by χ.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(4, 4);
        let paulis: Vec<CMatrix> = (0..16).map(pauli2).collect();
        for m in 0..16 {
            let left = &paulis[m] * rho;
            for n in 0..16 {
                let z = self.chi[(m, n)];
                if z != c(0.0) {
                    out += (&left * &paulis[n]) * z;
                }
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.chi).0[0]
    }
}

pub fn ideal_iswap() -> CMatrix {
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = c(1.0);
    u[(1, 2)] = I;
    u[(2, 1)] = I;
    u[(3, 3)] = c(1.0);
    u
}

struct Inversion {
    inputs: Vec<CMatrix>,
    lu: FullPivLU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Linear map χ ↦ (E(ρ_j))_j for the standard inputs, factorized once.
fn standard_inversion() -> &'static Result<Inversion, (usize, usize)> {
    static CELL: OnceLock<Result<Inversion, (usize, usize)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let inputs: Vec<CMatrix> = prepare_input_states().iter().map(|s| s.density_matrix()).collect();
        build_inversion(inputs)
    })
}

fn build_inversion(inputs: Vec<CMatrix>) -> Result<Inversion, (usize, usize)> {
    let paulis: Vec<CMatrix> = (0..16).map(pauli2).collect();
    let rows = 16 * inputs.len();
    let mut b = CMatrix::zeros(rows, 256);
    for (j, rho) in inputs.iter().enumerate() {
        for m in 0..16 {
            let left = &paulis[m] * rho;
            for n in 0..16 {
                let term = &left * &paulis[n];
                for (e, z) in term.iter().enumerate() {
                    b[(16 * j + e, 16 * m + n)] = *z;
                }
            }
        }
    }
    if rows != 256 {
        return Err((0, 256));
    }
    let lu = b.full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..256).map(|k| u[(k, k)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    let rank = pivots.iter().filter(|&&x| x > 1e-10 * largest).count();
    if rank < 256 {
        return Err((rank, 256));
    }
    Ok(Inversion { inputs, lu })
}

/// χ from the outputs E(ρ_j) for the given inputs ρ_j: linear inversion,
/// Hermitization, then physical projection at fixed trace.
pub fn process_from_states(inputs: &[CMatrix], outputs: &[CMatrix], label: &str) -> Result<ProcessMatrix> {
    if inputs.len() != outputs.len() {
        return Err(Error::IncompleteData(format!(
            "{} inputs but {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    let standard = standard_inversion();
    let owned;
    let inversion = match standard {
        Ok(inv) if inv.inputs.len() == inputs.len()
            && inv.inputs.iter().zip(inputs).all(|(a, b)| (a - b).norm() < 1e-12) =>
        {
            inv
        }
        _ => {
            owned = build_inversion(inputs.to_vec())
                .map_err(|(rank, expected)| Error::RankDeficient { rank, expected })?;
            &owned
        }
    };
    let mut rhs = CVector::zeros(256);
    for (j, out) in outputs.iter().enumerate() {
        if out.nrows() != 4 || out.ncols() != 4 {
            return Err(Error::InvalidDimension("output states must be 4x4".into()));
        }
        for (e, z) in out.iter().enumerate() {
            rhs[16 * j + e] = *z;
        }
    }
    let x = inversion
        .lu
        .solve(&rhs)
        .ok_or(Error::RankDeficient { rank: 0, expected: 256 })?;
    let chi = CMatrix::from_fn(16, 16, |m, n| x[16 * m + n]);
    let chi = (&chi + chi.adjoint()).scale(0.5);
    let tr = trace(&chi).re;
    // keep the trace (leakage shows up as Tr χ < 1), project the shape
    let chi = if tr > 0.0 {
        project_to_physical(&chi.unscale(tr)).scale(tr)
    } else {
        chi
    };
    ProcessMatrix::new(chi, label)
}

/// Process tomography of a channel given as a map on 4×4 density matrices.
pub fn process_tomography<F>(channel: F, label: &str) -> Result<ProcessMatrix>
where
    F: FnMut(&CMatrix) -> Result<CMatrix>,
{
    let inputs: Vec<CMatrix> = prepare_input_states().iter().map(|s| s.density_matrix()).collect();
    let outputs = inputs.iter().map(channel).collect::<Result<Vec<_>>>()?;
    process_from_states(&inputs, &outputs, label)
}

/// Full measured-data pipeline: per-input state tomography of all 16 × 9
/// records, then process inversion.
pub fn process_from_records(records: &[TomographyRecord], label: &str) -> Result<ProcessMatrix> {
    let mut grouped: Vec<Vec<TomographyRecord>> = vec![Vec::new(); 16];
    for r in records {
        r.validate()?;
        grouped[r.input_state_id].push(r.clone());
    }
    let outputs = grouped
        .iter()
        .enumerate()
        .map(|(j, group)| {
            if group.is_empty() {
                return Err(Error::IncompleteData(format!("no records for input state {j}")));
            }
            Ok(state_tomography(group)?.density_matrix())
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<CMatrix> = prepare_input_states().iter().map(|s| s.density_matrix()).collect();
    process_from_states(&inputs, &outputs, label)
}

/// F = Re Tr(χ_exp χ_ideal), clamped to [0, 1].
pub fn process_fidelity(chi_exp: &ProcessMatrix, chi_ideal: &ProcessMatrix) -> Result<f64> {
    let (ta, tb) = (chi_exp.trace(), chi_ideal.trace());
    if (ta - 1.0).abs() > 1e-3 || (tb - 1.0).abs() > 1e-3 {
        return Err(Error::ConventionMismatch(ta, tb));
    }
    let f = (&chi_exp.chi * &chi_ideal.chi).trace().re;
    let clamped = f.clamp(0.0, 1.0);
    if (clamped - f).abs() > 1e-6 {
        log::warn!("process fidelity {f} clamped to {clamped}");
    }
    Ok(clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn exact_records(rho: &CMatrix, input: usize) -> Vec<TomographyRecord> {
        let mut out = Vec::new();
        for a in Axis::ALL {
            for b in Axis::ALL {
                let u = a.rotation().kronecker(&b.rotation());
                let rotated = &u * rho * u.adjoint();
                let mut p = [0.0; 4];
                for q1 in 0..2 {
                    for q2 in 0..2 {
                        p[readout_index(q1, q2)] = rotated[(2 * q1 + q2, 2 * q1 + q2)].re;
                    }
                }
                let sum: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= sum);
                out.push(TomographyRecord::from_populations(input, [a, b], p));
            }
        }
        out
    }

    #[test]
    fn paulis_orthogonal() {
        for m in 0..16 {
            for n in 0..16 {
                let ip = (pauli2(m).adjoint() * pauli2(n)).trace();
                let expected = if m == n { 4.0 } else { 0.0 };
                assert!((ip - c(expected)).norm() < 1e-14);
            }
        }
        assert_eq!(PAULI_LABELS[5], "XX");
    }

    #[test]
    fn input_states() {
        let states = prepare_input_states();
        assert_eq!(states.len(), 16);
        assert_eq!(states[0].population(0), 1.0);
        for s in &states {
            assert!((s.trace() - 1.0).abs() < 1e-15);
        }
        // the four single-qubit projectors span the operator space
        let h = (0.5f64).sqrt();
        let kets = [[c(1.0), c(0.0)], [c(0.0), c(1.0)], [c(h), c(h)], [c(h), I * h]];
        let mut gram = CMatrix::zeros(4, 4);
        for (col, k) in kets.iter().enumerate() {
            let v = CVector::from_vec(k.to_vec());
            let proj = &v * v.adjoint();
            for (row, z) in proj.iter().enumerate() {
                gram[(row, col)] = *z;
            }
        }
        assert_eq!(gram.rank(1e-10), 4);
    }

    #[test]
    fn state_tomography_round_trips() {
        let ground = prepare_input_states()[0].density_matrix();
        let rho = state_tomography(&exact_records(&ground, 0)).unwrap().density_matrix();
        assert!(max_abs(&(rho - &ground)) < 1e-10);

        let h = (0.5f64).sqrt();
        let bell = CVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]);
        let bell_rho = &bell * bell.adjoint();
        let rho = state_tomography(&exact_records(&bell_rho, 0)).unwrap();
        assert!((rho.expectation(&bell_rho) - 1.0).abs() < 1e-10);

        let mut partial = exact_records(&bell_rho, 0);
        partial.pop();
        assert!(matches!(state_tomography(&partial), Err(Error::IncompleteData(_))));
    }

    #[test]
    fn physical_projection() {
        let psd = prepare_input_states()[7].density_matrix();
        assert!(max_abs(&(project_to_physical(&psd) - &psd)) < 1e-12);
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.1), c(-0.1)]));
        let fixed = project_to_physical(&bad);
        assert!((fixed[(0, 0)] - c(1.0)).norm() < 1e-12 && fixed[(1, 1)].norm() < 1e-12);
        assert!(eigh(&fixed).0[0] >= -1e-15);
    }

    #[test]
    fn identity_and_iswap_chi() {
        let id = process_tomography(|rho| Ok(rho.clone()), "identity").unwrap();
        assert!((id.chi[(0, 0)] - c(1.0)).norm() < 1e-10);
        assert!((max_abs(&id.chi) - 1.0).abs() < 1e-10);

        let u = ideal_iswap();
        let chi = process_tomography(|rho| Ok(&u * rho * u.adjoint()), "iswap").unwrap();
        let (ii, xx, yy, zz) = (0, 5, 10, 15);
        for &k in &[ii, xx, yy, zz] {
            assert!((chi.chi[(k, k)] - c(0.25)).norm() < 1e-10);
        }
        // c = (1/2, i/2, i/2, 1/2) so χ_{II,XX} = (1/2)(−i/2)
        assert!((chi.chi[(ii, xx)] - C64::new(0.0, -0.25)).norm() < 1e-10);
        assert!((chi.chi[(xx, yy)] - c(0.25)).norm() < 1e-10);
        let analytic = ProcessMatrix::from_unitary(&u, "iswap").unwrap();
        assert!(max_abs(&(&analytic.chi - &chi.chi)) < 1e-10);
        assert!((process_fidelity(&chi, &analytic).unwrap() - 1.0).abs() < 1e-10);

        // brute-force check of the analytic expansion on every input
        for rho in prepare_input_states().iter().map(|s| s.density_matrix()) {
            assert!(max_abs(&(analytic.apply(&rho) - &u * &rho * u.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn depolarizing_is_diagonal() {
        let p = 0.3;
        let chi = process_tomography(
            |rho| Ok(rho.scale(1.0 - p) + CMatrix::identity(4, 4).scale(p / 4.0)),
            "depolarizing",
        )
        .unwrap();
        for m in 0..16 {
            for n in 0..16 {
                if m != n {
                    assert!(chi.chi[(m, n)].norm() < 1e-10);
                }
            }
        }
        assert!((chi.chi[(0, 0)].re - (1.0 - 15.0 * p / 16.0)).abs() < 1e-10);
        assert!((chi.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn records_pipeline_and_rank_error() {
        let u = ideal_iswap();
        let mut records = Vec::new();
        for (j, s) in prepare_input_states().iter().enumerate() {
            let out = &u * s.density_matrix() * u.adjoint();
            records.extend(exact_records(&out, j));
        }
        let chi = process_from_records(&records, "iswap").unwrap();
        let ideal = ProcessMatrix::from_unitary(&u, "iswap").unwrap();
        assert!((process_fidelity(&chi, &ideal).unwrap() - 1.0).abs() < 1e-9);

        let zero = prepare_input_states()[0].density_matrix();
        let inputs = vec![zero.clone(); 16];
        assert!(matches!(
            process_from_states(&inputs, &inputs, "x"),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn fidelity_convention_and_symmetry() {
        let a = ProcessMatrix::from_unitary(&ideal_iswap(), "a").unwrap();
        let b = ProcessMatrix::from_unitary(&CMatrix::identity(4, 4), "b").unwrap();
        let fab = process_fidelity(&a, &b).unwrap();
        assert!((fab - process_fidelity(&b, &a).unwrap()).abs() < 1e-15);
        assert!((fab - 0.25).abs() < 1e-12);
        let half = ProcessMatrix::new(a.chi.scale(0.5), "half").unwrap();
        assert!(matches!(process_fidelity(&half, &b), Err(Error::ConventionMismatch(..))));
    }
}
