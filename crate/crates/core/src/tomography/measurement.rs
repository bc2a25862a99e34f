//! Synthetic shot-noise measurement and bootstrap error bars.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{readout_index, Axis, ReadoutMatrix, TomographyRecord};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

fn weighted(p: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(p.iter().map(|&x| x.max(0.0)))
        .map_err(|e| Error::InvalidState(format!("cannot sample from {p:?}: {e}")))
}

/// Born probabilities of a two-qubit state measured along `basis`, in
/// readout order.
pub fn born_probabilities(rho: &CMatrix, basis: [Axis; 2]) -> [f64; 4] {
    let u = basis[0].rotation().kronecker(&basis[1].rotation());
    let rotated = &u * rho * u.adjoint();
    let mut p = [0.0; 4];
    for q1 in 0..2 {
        for q2 in 0..2 {
            p[readout_index(q1, q2)] = rotated[(2 * q1 + q2, 2 * q1 + q2)].re;
        }
    }
    p
}

/// Sample `shots` projective measurements of `rho` along `basis`, each
/// outcome then passed through the assignment errors of `readout`.
pub fn simulate_measurement(
    rho: &CMatrix,
    input_state_id: usize,
    basis: [Axis; 2],
    shots: u64,
    readout: &ReadoutMatrix,
    seed: u64,
) -> Result<TomographyRecord> {
    if shots == 0 {
        return Err(Error::InsufficientData("shots must be at least 1".into()));
    }
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(Error::InvalidDimension("measurement expects a two-qubit state".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let born = weighted(&born_probabilities(rho, basis))?;
    let assign = (0..4)
        .map(|j| weighted(&readout.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = [0u64; 4];
    for _ in 0..shots {
        let truth = born.sample(&mut rng);
        counts[assign[truth].sample(&mut rng)] += 1;
    }
    Ok(TomographyRecord {
        input_state_id,
        basis,
        populations: None,
        counts: Some(counts),
        shots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    /// Estimate on the original data.
    pub point: f64,
    pub mean: f64,
    pub std: f64,
    /// 2.5 % and 97.5 % quantiles of the resampled estimates.
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

impl BootstrapBand {
    pub fn contains(&self, x: f64, margin: f64) -> bool {
        self.lo - margin <= x && x <= self.hi + margin
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Parametric bootstrap: every counted record is redrawn multinomially from
/// its own observed frequencies, and `estimator` is re-evaluated on each
/// resampled data set. Population-only records are held fixed.
pub fn bootstrap<F>(records: &[TomographyRecord], resamples: usize, seed: u64, mut estimator: F) -> Result<BootstrapBand>
where
    F: FnMut(&[TomographyRecord]) -> Result<f64>,
{
    if resamples < 2 {
        return Err(Error::InsufficientData("bootstrap needs at least 2 resamples".into()));
    }
    let point = estimator(records)?;
    let samplers = records
        .iter()
        .map(|r| match r.counts {
            Some(_) => weighted(&r.frequencies()?).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates = Vec::with_capacity(resamples);
    let mut data = records.to_vec();
    for _ in 0..resamples {
        for (r, sampler) in data.iter_mut().zip(&samplers) {
            if let Some(dist) = sampler {
                let mut counts = [0u64; 4];
                for _ in 0..r.shots {
                    counts[dist.sample(&mut rng)] += 1;
                }
                r.counts = Some(counts);
            }
        }
        estimates.push(estimator(&data)?);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let std = (estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    estimates.sort_by(f64::total_cmp);
    Ok(BootstrapBand {
        point,
        mean,
        std,
        lo: quantile(&estimates, 0.025),
        hi: quantile(&estimates, 0.975),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVector};
    use crate::tomography::prepare_input_states;

    #[test]
    fn ideal_readout_of_ground_state() {
        let rho = prepare_input_states()[0].density_matrix();
        let r = simulate_measurement(&rho, 0, [Axis::Z, Axis::Z], 500, &ReadoutMatrix::identity(), 1).unwrap();
        assert_eq!(r.counts, Some([500, 0, 0, 0]));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let rho = prepare_input_states()[10].density_matrix();
        let m = ReadoutMatrix::from_flip_errors((0.03, 0.05), (0.03, 0.05)).unwrap();
        let a = simulate_measurement(&rho, 10, [Axis::X, Axis::Y], 2000, &m, 42).unwrap();
        let b = simulate_measurement(&rho, 10, [Axis::X, Axis::Y], 2000, &m, 42).unwrap();
        assert_eq!(a, b);
        let c2 = simulate_measurement(&rho, 10, [Axis::X, Axis::Y], 2000, &m, 43).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn large_sample_matches_born_rule() {
        // |0⟩ ⊗ (cos θ|0⟩ + sin θ|1⟩) measured in z: p01 = sin² θ
        let theta: f64 = 0.4;
        let v = CVector::from_vec(vec![c(theta.cos()), c(theta.sin()), c(0.0), c(0.0)]);
        let rho = &v * v.adjoint();
        let m = ReadoutMatrix::from_flip_errors((0.03, 0.05), (0.02, 0.04)).unwrap();
        let shots = 1_000_000u64;
        let r = simulate_measurement(&rho, 0, [Axis::Z, Axis::Z], shots, &m, 7).unwrap();
        let expected = m.apply(born_probabilities(&rho, [Axis::Z, Axis::Z]));
        let freq = r.frequencies().unwrap();
        for k in 0..4 {
            let sigma = (expected[k] * (1.0 - expected[k]) / shots as f64).sqrt();
            assert!((freq[k] - expected[k]).abs() <= 3.0 * sigma.max(1e-12), "outcome {k}");
        }
    }

    #[test]
    fn bootstrap_band_brackets_point() {
        let rho = prepare_input_states()[2].density_matrix();
        let records: Vec<_> = (0..3)
            .map(|k| simulate_measurement(&rho, 2, [Axis::X, Axis::Z], 1000, &ReadoutMatrix::identity(), k).unwrap())
            .collect();
        let band = bootstrap(&records, 200, 9, |data| Ok(data[0].frequencies()?[0])).unwrap();
        assert!(band.lo <= band.point && band.point <= band.hi);
        // binomial standard error of a ~0.5 frequency with 1000 shots
        assert!((band.std - (0.25f64 / 1000.0).sqrt()).abs() < 0.005);
    }
}
