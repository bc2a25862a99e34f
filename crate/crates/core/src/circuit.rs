//! Truncated multilevel operators and the qubit-coupler-qubit Hamiltonian.
//!
//! Units: frequencies are linear GHz, times ns. Every Hamiltonian returned
//! here carries the explicit 2π, so it is in rad/ns and `exp(-i H t)` needs
//! no further scaling.
//!
//! Product basis ordering is fixed to (Q1, Q2, C): the state
//! `|n1 n2 nc⟩` sits at index `n1·d² + n2·d + nc` for truncation `d`.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_error, max_abs, CMatrix, C64};

/// One of the three circuit elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    Q1,
    Q2,
    #[serde(rename = "C")]
    Coupler,
}

impl Site {
    pub const ALL: [Site; 3] = [Site::Q1, Site::Q2, Site::Coupler];

    pub fn index(self) -> usize {
        match self {
            Site::Q1 => 0,
            Site::Q2 => 1,
            Site::Coupler => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Site::Q1 => "Q1",
            Site::Q2 => "Q2",
            Site::Coupler => "C",
        }
    }
}

/// Tensor-product basis with per-factor dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    dims: Vec<usize>,
    names: Option<Vec<String>>,
}

impl Basis {
    pub fn single(dim: usize) -> Self {
        Self::product(vec![dim])
    }

    pub fn product(dims: Vec<usize>) -> Self {
        Self { dims, names: None }
    }

    /// Flat basis with explicit state names, e.g. a restricted subspace.
    pub fn named(names: Vec<String>) -> Self {
        Self {
            dims: vec![names.len()],
            names: Some(names),
        }
    }

    /// The three-element basis (Q1, Q2, C) with `levels` per element.
    pub fn circuit(levels: usize) -> Self {
        Self::product(vec![levels; 3])
    }

    /// True for plain tensor-product bases with occupation labels.
    pub fn is_product(&self) -> bool {
        self.names.is_none()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Occupation tuple of basis index `i`.
    pub fn label(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = i % d;
            i /= d;
        }
        out
    }

    pub fn index(&self, occupation: &[usize]) -> usize {
        assert_eq!(occupation.len(), self.dims.len(), "occupation arity");
        occupation
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&n, &d)| {
                assert!(n < d, "occupation {n} outside truncation {d}");
                acc * d + n
            })
    }

    pub fn labels(&self) -> Vec<String> {
        if let Some(names) = &self.names {
            return names.clone();
        }
        (0..self.dim())
            .map(|i| {
                let digits: Vec<String> = self.label(i).iter().map(|n| n.to_string()).collect();
                format!("|{}⟩", digits.join(" "))
            })
            .collect()
    }
}

/// Dense complex operator on a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    matrix: CMatrix,
    basis: Basis,
}

impl OperatorMatrix {
    pub fn new(matrix: CMatrix, basis: Basis) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != basis.dim() {
            return Err(Error::InvalidDimension(format!(
                "{}x{} matrix on a basis of dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        Ok(Self { matrix, basis })
    }

    pub fn identity(basis: Basis) -> Self {
        let d = basis.dim();
        Self {
            matrix: CMatrix::identity(d, d),
            basis,
        }
    }

    pub fn zeros(basis: Basis) -> Self {
        let d = basis.dim();
        Self {
            matrix: CMatrix::zeros(d, d),
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn basis_labels(&self) -> Vec<String> {
        self.basis.labels()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Matrix element between two occupation labels.
    pub fn element(&self, bra: &[usize], ket: &[usize]) -> C64 {
        self.matrix[(self.basis.index(bra), self.basis.index(ket))]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            basis: self.basis.clone(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.scale(factor),
            basis: self.basis.clone(),
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            basis: self.basis.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// max |H − H†| relative to max |H| (absolute when H = 0).
    pub fn relative_hermiticity_error(&self) -> f64 {
        let scale = self.max_abs();
        let err = hermiticity_error(&self.matrix);
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.relative_hermiticity_error() <= rel_tol
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.basis, rhs.basis, "basis mismatch");
        OperatorMatrix {
            matrix: &self.matrix + &rhs.matrix,
            basis: self.basis.clone(),
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.basis, rhs.basis, "basis mismatch");
        OperatorMatrix {
            matrix: &self.matrix - &rhs.matrix,
            basis: self.basis.clone(),
        }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.basis, rhs.basis, "basis mismatch");
        OperatorMatrix {
            matrix: &self.matrix * &rhs.matrix,
            basis: self.basis.clone(),
        }
    }
}

impl fmt::Display for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.matrix)
    }
}

/// Relaxation and dephasing times of one element, in ns. `f64::INFINITY`
/// means the process is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub t1: f64,
    pub t2: f64,
}

/// Device parameters. Defaults are the measured values of the reference
/// device (idling frequencies, anharmonicities, couplings, idling T1/T2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitParams {
    #[serde(rename = "omega1_ghz")]
    pub omega1: f64,
    #[serde(rename = "omega2_ghz")]
    pub omega2: f64,
    #[serde(rename = "omegac_ghz")]
    pub omega_c: f64,
    #[serde(rename = "alpha1_ghz")]
    pub alpha1: f64,
    #[serde(rename = "alpha2_ghz")]
    pub alpha2: f64,
    #[serde(rename = "alphac_ghz")]
    pub alpha_c: f64,
    #[serde(rename = "g1_ghz")]
    pub g1: f64,
    #[serde(rename = "g2_ghz")]
    pub g2: f64,
    /// Direct qubit-qubit coupling. Its sign is not fixed by measurement;
    /// positive by default and allowed to be negative.
    #[serde(rename = "g12_ghz")]
    pub g12: f64,
    #[serde(rename = "t1_q1_ns", with = "infinite_as_null")]
    pub t1_q1: f64,
    #[serde(rename = "t1_q2_ns", with = "infinite_as_null")]
    pub t1_q2: f64,
    #[serde(rename = "t1_c_ns", with = "infinite_as_null")]
    pub t1_c: f64,
    #[serde(rename = "t2_q1_ns", with = "infinite_as_null")]
    pub t2_q1: f64,
    #[serde(rename = "t2_q2_ns", with = "infinite_as_null")]
    pub t2_q2: f64,
    #[serde(rename = "t2_c_ns", with = "infinite_as_null")]
    pub t2_c: f64,
    pub levels: usize,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            omega1: 4.670,
            omega2: 4.619,
            omega_c: 6.183,
            alpha1: -0.222,
            alpha2: -0.242,
            alpha_c: -0.378,
            g1: 0.110,
            g2: 0.105,
            g12: 0.0075,
            t1_q1: 6510.0,
            t1_q2: 6580.0,
            t1_c: 4060.0,
            t2_q1: 540.0,
            t2_q2: 7430.0,
            t2_c: 270.0,
            levels: 3,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidDimension(format!(
                "levels must be >= 2, got {}",
                self.levels
            )));
        }
        let finite = [
            ("omega1_ghz", self.omega1),
            ("omega2_ghz", self.omega2),
            ("omegac_ghz", self.omega_c),
            ("alpha1_ghz", self.alpha1),
            ("alpha2_ghz", self.alpha2),
            ("alphac_ghz", self.alpha_c),
            ("g1_ghz", self.g1),
            ("g2_ghz", self.g2),
            ("g12_ghz", self.g12),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.g1 < 0.0 || self.g2 < 0.0 {
            return Err(Error::InvalidParams(
                "qubit-coupler couplings g1, g2 must be non-negative".into(),
            ));
        }
        for site in Site::ALL {
            let coh = self.coherence(site);
            if !(coh.t1 > 0.0) || !(coh.t2 > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "coherence times of {} must be positive",
                    site.name()
                )));
            }
            if coh.t2 > 2.0 * coh.t1 {
                return Err(Error::InvalidCoherence {
                    element: site.name(),
                    t1: coh.t1,
                    t2: coh.t2,
                });
            }
        }
        Ok(())
    }

    pub fn frequency(&self, site: Site) -> f64 {
        match site {
            Site::Q1 => self.omega1,
            Site::Q2 => self.omega2,
            Site::Coupler => self.omega_c,
        }
    }

    pub fn anharmonicity(&self, site: Site) -> f64 {
        match site {
            Site::Q1 => self.alpha1,
            Site::Q2 => self.alpha2,
            Site::Coupler => self.alpha_c,
        }
    }

    pub fn coherence(&self, site: Site) -> Coherence {
        match site {
            Site::Q1 => Coherence {
                t1: self.t1_q1,
                t2: self.t2_q1,
            },
            Site::Q2 => Coherence {
                t1: self.t1_q2,
                t2: self.t2_q2,
            },
            Site::Coupler => Coherence {
                t1: self.t1_c,
                t2: self.t2_c,
            },
        }
    }

    /// Same device with Q1 and coupler moved to new frequencies (Q2 is fixed).
    pub fn at(&self, omega1: f64, omega_c: f64) -> Self {
        Self {
            omega1,
            omega_c,
            ..self.clone()
        }
    }

    /// Disable all decoherence.
    pub fn noiseless(&self) -> Self {
        Self {
            t1_q1: f64::INFINITY,
            t1_q2: f64::INFINITY,
            t1_c: f64::INFINITY,
            t2_q1: f64::INFINITY,
            t2_q2: f64::INFINITY,
            t2_c: f64::INFINITY,
            ..self.clone()
        }
    }

    pub fn basis(&self) -> Basis {
        Basis::circuit(self.levels)
    }
}

/// Lowering operator on `d` levels: √k at (k−1, k).
pub fn annihilation_op(d: usize) -> Result<OperatorMatrix> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!(
            "annihilation operator needs d >= 2, got {d}"
        )));
    }
    let mut m = CMatrix::zeros(d, d);
    for k in 1..d {
        m[(k - 1, k)] = c((k as f64).sqrt());
    }
    OperatorMatrix::new(m, Basis::single(d))
}

/// Kronecker embedding of a single-element operator at `site` of the
/// (Q1, Q2, C) product space.
pub fn embed_op(op: &OperatorMatrix, site: Site, levels: usize) -> Result<OperatorMatrix> {
    if op.dim() != levels {
        return Err(Error::InvalidDimension(format!(
            "operator of dimension {} cannot sit on an element with {} levels",
            op.dim(),
            levels
        )));
    }
    let id = CMatrix::identity(levels, levels);
    let factors: Vec<&CMatrix> = Site::ALL
        .iter()
        .map(|&s| if s == site { op.matrix() } else { &id })
        .collect();
    let full = factors[0].kronecker(factors[1]).kronecker(factors[2]);
    OperatorMatrix::new(full, Basis::circuit(levels))
}

/// Lowering operator of `site` in the full circuit space.
pub fn site_lowering(site: Site, levels: usize) -> Result<OperatorMatrix> {
    embed_op(&annihilation_op(levels)?, site, levels)
}

/// Number operator of `site` in the full circuit space.
pub fn site_number(site: Site, levels: usize) -> Result<OperatorMatrix> {
    let a = site_lowering(site, levels)?;
    Ok(&a.adjoint() * &a)
}

/// Total excitation number n1 + n2 + nc.
pub fn total_number(levels: usize) -> Result<OperatorMatrix> {
    let basis = Basis::circuit(levels);
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for i in 0..basis.dim() {
        m[(i, i)] = c(basis.label(i).iter().sum::<usize>() as f64);
    }
    OperatorMatrix::new(m, basis)
}

/// H0 = Σ 2π[ω n + (α/2) a†a†aa], diagonal in the product basis.
pub fn bare_hamiltonian(p: &CircuitParams) -> Result<OperatorMatrix> {
    p.validate()?;
    let basis = p.basis();
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for i in 0..basis.dim() {
        let occ = basis.label(i);
        let energy: f64 = Site::ALL
            .iter()
            .map(|&s| {
                let n = occ[s.index()] as f64;
                p.frequency(s) * n + 0.5 * p.anharmonicity(s) * n * (n - 1.0)
            })
            .sum();
        m[(i, i)] = c(TAU * energy);
    }
    OperatorMatrix::new(m, basis)
}

/// V0 = 2π[g1(a1†ac + h.c.) + g2(a2†ac + h.c.) + g12(a1†a2 + h.c.)].
pub fn interaction_hamiltonian(p: &CircuitParams) -> Result<OperatorMatrix> {
    p.validate()?;
    let d = p.levels;
    let a1 = site_lowering(Site::Q1, d)?;
    let a2 = site_lowering(Site::Q2, d)?;
    let ac = site_lowering(Site::Coupler, d)?;
    let exchange = |x: &OperatorMatrix, y: &OperatorMatrix, g: f64| -> OperatorMatrix {
        let hop = &x.adjoint() * y;
        (&hop + &hop.adjoint()).scale(TAU * g)
    };
    let v = &(&exchange(&a1, &ac, p.g1) + &exchange(&a2, &ac, p.g2)) + &exchange(&a1, &a2, p.g12);
    Ok(v)
}

/// H = H0 + V0.
pub fn full_hamiltonian(p: &CircuitParams) -> Result<OperatorMatrix> {
    Ok(&bare_hamiltonian(p)? + &interaction_hamiltonian(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn close(a: C64, b: f64) -> bool {
        (a - c(b)).norm() < 1e-12
    }

    #[test]
    fn lowering_operator_entries() {
        let a2 = annihilation_op(2).unwrap();
        assert!(close(a2.get(0, 1), 1.0));
        assert!(close(a2.get(0, 0), 0.0) && close(a2.get(1, 0), 0.0) && close(a2.get(1, 1), 0.0));

        let a3 = annihilation_op(3).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                let expected = match (r, col) {
                    (0, 1) => 1.0,
                    (1, 2) => SQRT_2,
                    _ => 0.0,
                };
                assert!(close(a3.get(r, col), expected), "({r},{col})");
            }
        }
        assert!(matches!(annihilation_op(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn truncated_commutator_is_identity_below_the_top_level() {
        for d in 2..6 {
            let a = annihilation_op(d).unwrap();
            let comm = a.commutator(&a.adjoint());
            for i in 0..d - 1 {
                for j in 0..d - 1 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(close(comm.get(i, j), expected));
                }
            }
        }
    }

    #[test]
    fn embedding_identity_and_locality() {
        let id = OperatorMatrix::identity(Basis::single(3));
        for s in Site::ALL {
            let e = embed_op(&id, s, 3).unwrap();
            assert_eq!(e.matrix(), &CMatrix::identity(27, 27));
        }
        let a1 = site_lowering(Site::Q1, 3).unwrap();
        // a1 |1 2 1⟩ = |0 2 1⟩
        assert!(close(a1.element(&[0, 2, 1], &[1, 2, 1]), 1.0));
        assert!(close(a1.element(&[1, 1, 1], &[1, 2, 1]), 0.0));
        let a2 = site_lowering(Site::Q2, 3).unwrap();
        assert!(a1.commutator(&a2).max_abs() < 1e-15);
        assert!(embed_op(&annihilation_op(2).unwrap(), Site::Q1, 3).is_err());
    }

    #[test]
    fn basis_index_convention() {
        let b = Basis::circuit(3);
        assert_eq!(b.index(&[1, 0, 0]), 9);
        assert_eq!(b.index(&[0, 1, 0]), 3);
        assert_eq!(b.index(&[0, 0, 1]), 1);
        assert_eq!(b.label(14), vec![1, 1, 2]);
        assert_eq!(b.labels()[9], "|1 0 0⟩");
    }

    #[test]
    fn bare_energies() {
        let p = CircuitParams::default();
        let h0 = bare_hamiltonian(&p).unwrap();
        assert!((h0.element(&[1, 0, 0], &[1, 0, 0]).re - TAU * 4.670).abs() < 1e-12);
        let e200 = h0.element(&[2, 0, 0], &[2, 0, 0]).re;
        assert!((e200 - TAU * (2.0 * 4.670 - 0.222)).abs() < 1e-12);

        let harmonic = CircuitParams {
            alpha1: 0.0,
            alpha2: 0.0,
            alpha_c: 0.0,
            ..p
        };
        let h = bare_hamiltonian(&harmonic).unwrap();
        let e1 = h.element(&[0, 0, 1], &[0, 0, 1]).re;
        let e2 = h.element(&[0, 0, 2], &[0, 0, 2]).re;
        assert!((e2 - 2.0 * e1).abs() < 1e-12);
    }

    #[test]
    fn interaction_matrix_elements() {
        let p = CircuitParams::default();
        let v = interaction_hamiltonian(&p).unwrap();
        assert!(close(v.element(&[0, 0, 1], &[1, 0, 0]), TAU * 0.110));
        assert!(close(v.element(&[0, 0, 1], &[0, 1, 0]), TAU * 0.105));
        assert!(close(v.element(&[0, 1, 0], &[1, 0, 0]), TAU * 0.0075));
        let decoupled = CircuitParams {
            g1: 0.0,
            g2: 0.0,
            g12: 0.0,
            ..p
        };
        assert_eq!(interaction_hamiltonian(&decoupled).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn full_hamiltonian_conserves_excitations() {
        let p = CircuitParams::default();
        let h = full_hamiltonian(&p).unwrap();
        let n = total_number(p.levels).unwrap();
        assert!(h.commutator(&n).max_abs() < 1e-12 * h.max_abs());
        assert!(h.is_hermitian(1e-12));
        let sum = &bare_hamiltonian(&p).unwrap() + &interaction_hamiltonian(&p).unwrap();
        assert_eq!(sum.matrix(), h.matrix());
    }

    #[test]
    fn params_validation() {
        let mut p = CircuitParams::default();
        assert!(p.validate().is_ok());
        p.t2_q2 = 2.0 * p.t1_q2 + 1.0;
        assert!(matches!(p.validate(), Err(Error::InvalidCoherence { .. })));
        let p = CircuitParams {
            levels: 1,
            ..CircuitParams::default()
        };
        assert!(p.validate().is_err());
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
