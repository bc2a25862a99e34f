//! Readout assignment matrix: p_measured = M p_true in the order
//! (p00, p10, p01, p11).

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::project_to_simplex;

const CONDITION_WARN: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutMatrix {
    /// Row-major entries; column j is the measured distribution when the
    /// true outcome is j.
    entries: [[f64; 4]; 4],
}

impl ReadoutMatrix {
    pub fn new(entries: [[f64; 4]; 4]) -> Result<Self> {
        for (j, col_sum) in (0..4).map(|j| (j, (0..4).map(|i| entries[i][j]).sum::<f64>())) {
            if (col_sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "readout matrix column {j} sums to {col_sum}"
                )));
            }
        }
        if entries.iter().flatten().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidParams("readout matrix entries must lie in [0, 1]".into()));
        }
        let m = Self { entries };
        let cond = m.condition_number();
        if !cond.is_finite() || cond > 1e15 {
            return Err(Error::SingularMatrix(format!(
                "readout matrix is singular (condition number {cond:.3e})"
            )));
        }
        if cond > CONDITION_WARN {
            log::warn!("readout matrix is ill-conditioned (condition number {cond:.3e})");
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self {
            entries: Matrix4::<f64>::identity().transpose().into(),
        }
    }

    /// Independent per-qubit errors: `e0` = P(read 1 | 0), `e1` = P(read 0 | 1).
    pub fn from_flip_errors(q1: (f64, f64), q2: (f64, f64)) -> Result<Self> {
        let single = |(e0, e1): (f64, f64)| [[1.0 - e0, e1], [e0, 1.0 - e1]];
        let (m1, m2) = (single(q1), single(q2));
        let mut entries = [[0.0; 4]; 4];
        // index = q1 + 2 q2, so M = M_q2 ⊗ M_q1
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = m2[i / 2][j / 2] * m1[i % 2][j % 2];
            }
        }
        Self::new(entries)
    }

    /// Build M from measured distributions of the four prepared basis states,
    /// given in readout order.
    pub fn from_calibration(columns: [[f64; 4]; 4]) -> Result<Self> {
        let mut entries = [[0.0; 4]; 4];
        for (j, col) in columns.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                entries[i][j] = x;
            }
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> [[f64; 4]; 4] {
        self.entries
    }

    fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.entries[i][j])
    }

    pub fn column(&self, j: usize) -> [f64; 4] {
        [self.entries[0][j], self.entries[1][j], self.entries[2][j], self.entries[3][j]]
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix().singular_values();
        sv.max() / sv.min()
    }

    pub fn inverse(&self) -> Result<[[f64; 4]; 4]> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("readout matrix is not invertible".into()))?;
        Ok(inv.transpose().into())
    }

    pub fn apply(&self, p_true: [f64; 4]) -> [f64; 4] {
        (self.matrix() * Vector4::from(p_true)).into()
    }

    /// p_true = M⁻¹ p_measured, optionally projected onto the simplex.
    pub fn correct(&self, p_measured: [f64; 4], project: bool) -> Result<[f64; 4]> {
        let lu = self.matrix().lu();
        let p = lu
            .solve(&Vector4::from(p_measured))
            .ok_or_else(|| Error::SingularMatrix("readout matrix is not invertible".into()))?;
        if !project {
            return Ok(p.into());
        }
        let proj = project_to_simplex(p.as_slice(), 1.0);
        Ok([proj[0], proj[1], proj[2], proj[3]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_transparent() {
        let m = ReadoutMatrix::identity();
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(m.apply(p), p);
        assert_eq!(m.correct(p, false).unwrap(), p);
        assert_eq!(ReadoutMatrix::from_flip_errors((0.0, 0.0), (0.0, 0.0)).unwrap(), m);
    }

    #[test]
    fn flip_model_layout() {
        let m = ReadoutMatrix::from_flip_errors((0.03, 0.05), (0.02, 0.04)).unwrap();
        for j in 0..4 {
            assert!((m.column(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // prepared |10⟩ (q1 = 1), read as |00⟩: Q1 decays, Q2 reads right
        assert!((m.entries()[0][1] - 0.05 * 0.98).abs() < 1e-15);
        // prepared |00⟩, read as |01⟩ (q2 = 1)
        assert!((m.entries()[2][0] - 0.97 * 0.02).abs() < 1e-15);
    }

    #[test]
    fn calibration_round_trip() {
        let truth = ReadoutMatrix::from_flip_errors((0.03, 0.05), (0.03, 0.05)).unwrap();
        // calibration: measured distribution of each prepared basis state
        let columns = [0, 1, 2, 3].map(|j| {
            let mut p = [0.0; 4];
            p[j] = 1.0;
            truth.apply(p)
        });
        let m = ReadoutMatrix::from_calibration(columns).unwrap();
        let p_true = [0.4, 0.1, 0.35, 0.15];
        let back = m.correct(m.apply(p_true), false).unwrap();
        for k in 0..4 {
            assert!((back[k] - p_true[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut e = [[0.25; 4]; 4];
        assert!(matches!(ReadoutMatrix::new(e), Err(Error::SingularMatrix(_))));
        e[0][0] = 0.5;
        assert!(ReadoutMatrix::new(e).is_err());
    }

    #[test]
    fn projection_keeps_simplex() {
        let m = ReadoutMatrix::from_flip_errors((0.1, 0.1), (0.1, 0.1)).unwrap();
        let p = m.correct([1.0, 0.0, 0.0, 0.0], true).unwrap();
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
