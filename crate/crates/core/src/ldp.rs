//! Walsh–Fourier analysis of computational-basis output distributions.
//!
//! A distribution `Pr` on `{0,1}^n` is expanded as `f(x) = 2^n Pr(x) =
//! Σ_T f̂(T) χ_T(x)` with `χ_T(x) = (−1)^{Σ_{i∈T} x_i}`, so
//! `f̂(T) = Σ_x Pr(x) χ_T(x)` and `f̂(∅) = 1`. Subsets `T` and outcomes `x`
//! share the bit convention of the simulator: qubit 1 is the most
//! significant bit.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qstate::DensityMatrix;

pub const MAX_FOURIER_BITS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n > MAX_FOURIER_BITS {
            return Err(Error::DimensionCap { dim: 1 << n.min(63), cap: 1 << MAX_FOURIER_BITS });
        }
        if probs.len() != 1 << n {
            return Err(Error::InvalidArgument(format!("{} probabilities for {n} bits", probs.len())));
        }
        if let Some(p) = probs.iter().find(|&&p| p < 0.0) {
            return Err(Error::OutOfRange { name: "probability", value: *p, range: "[0, 1]" });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::BadTrace { trace: total });
        }
        Ok(Self { n, probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, vec![1.0 / (1u64 << n) as f64; 1 << n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Draws `shots` samples and returns the empirical distribution.
    pub fn sample_shots(&self, shots: usize, rng: &mut impl Rng) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidArgument("shots must be positive".into()));
        }
        let mut cumulative = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cumulative.push(acc);
        }
        let mut counts = vec![0usize; self.probs.len()];
        for _ in 0..shots {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cumulative.partition_point(|&c| c <= u).min(counts.len() - 1);
            counts[idx] += 1;
        }
        Self::new(self.n, counts.iter().map(|&c| c as f64 / shots as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierSpectrum {
    n: usize,
    /// Indexed by the bitmask of `T`.
    coefficients: Vec<f64>,
}

impl FourierSpectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, mask: usize) -> f64 {
        self.coefficients[mask]
    }

    /// Mask of the subset containing 1-based qubit labels `qubits`.
    pub fn mask_of(&self, qubits: &[usize]) -> usize {
        qubits.iter().fold(0, |m, &q| m | 1 << (self.n - q))
    }

    /// Inverse transform back to probabilities.
    pub fn to_probs(&self) -> Vec<f64> {
        let mut v = self.coefficients.clone();
        walsh_hadamard(&mut v);
        let scale = (1u64 << self.n) as f64;
        v.iter().map(|x| x / scale).collect()
    }
}

/// In-place unnormalized fast Walsh–Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Born-rule distribution of `ρ` followed by independent bit flips at rate `q`.
pub fn measure_distribution(rho: &DensityMatrix, readout_flip: f64) -> Result<OutputDistribution> {
    if !rho.layout().is_qubits() {
        return Err(Error::InvalidArgument("measurement needs a qubit layout".into()));
    }
    if !(0.0..=0.5).contains(&readout_flip) {
        return Err(Error::OutOfRange { name: "readout_flip", value: readout_flip, range: "[0, 1/2]" });
    }
    let n = rho.layout().len();
    let mut probs: Vec<f64> = (0..rho.dim()).map(|i| rho.data()[(i, i)].re.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    if readout_flip > 0.0 {
        for bit in 0..n {
            let stride = 1 << bit;
            for i in 0..probs.len() {
                if i & stride == 0 {
                    let (a, b) = (probs[i], probs[i | stride]);
                    probs[i] = (1.0 - readout_flip) * a + readout_flip * b;
                    probs[i | stride] = readout_flip * a + (1.0 - readout_flip) * b;
                }
            }
        }
    }
    OutputDistribution::new(n, probs)
}

pub fn fourier_spectrum(dist: &OutputDistribution) -> FourierSpectrum {
    let mut coefficients = dist.probs.clone();
    walsh_hadamard(&mut coefficients);
    FourierSpectrum { n: dist.n, coefficients }
}

/// `W_k = Σ_{|T|=k} f̂(T)²` for `k = 0..=n`.
pub fn degree_profile(spec: &FourierSpectrum) -> Vec<f64> {
    let mut w = vec![0.0; spec.n + 1];
    for (mask, c) in spec.coefficients.iter().enumerate() {
        w[mask.count_ones() as usize] += c * c;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowDegreeMass {
    /// Non-constant Fourier weight at degrees `1..=d` over all non-constant weight.
    pub mass_fraction: f64,
    /// Same ratio with the degree-0 term counted in both sums.
    pub mass_fraction_with_constant: f64,
    /// `‖Pr − Pr_{≤d}‖_2`, with the truncation left unclipped.
    pub l2_truncation_error: f64,
}

pub fn low_degree_mass(spec: &FourierSpectrum, d: usize) -> Result<LowDegreeMass> {
    if d > spec.n {
        return Err(Error::InvalidArgument(format!("degree {d} exceeds n = {}", spec.n)));
    }
    let profile = degree_profile(spec);
    let non_constant: f64 = profile[1..].iter().sum();
    let low: f64 = profile[1..=d].iter().sum();
    let mass_fraction = if non_constant > 0.0 { low / non_constant } else { 1.0 };
    let total: f64 = profile.iter().sum();
    let mass_fraction_with_constant = (profile[0] + low) / total;
    // Parseval for the truncation residual: ‖Pr − Pr_{≤d}‖² = 2^{-n} Σ_{|T|>d} f̂(T)².
    let tail: f64 = profile[d + 1..].iter().sum();
    let l2_truncation_error = (tail / (1u64 << spec.n) as f64).sqrt();
    Ok(LowDegreeMass { mass_fraction, mass_fraction_with_constant, l2_truncation_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{PureState, SubsystemLayout};
    use crate::wstates::w_state;

    #[test]
    fn point_mass_and_uniform() {
        let zero = PureState::basis(SubsystemLayout::qubits(3).unwrap(), 0).unwrap().density();
        let d = measure_distribution(&zero, 0.0).unwrap();
        assert_eq!(d.probs()[0], 1.0);
        let s = fourier_spectrum(&d);
        assert!(s.coefficients().iter().all(|&c| (c - 1.0).abs() < 1e-15));
        let m = low_degree_mass(&s, 3).unwrap();
        assert!((m.mass_fraction - 1.0).abs() < 1e-15 && m.l2_truncation_error.abs() < 1e-15);

        let u = OutputDistribution::uniform(3).unwrap();
        let s = fourier_spectrum(&u);
        assert!((s.coefficient(0) - 1.0).abs() < 1e-15);
        assert!(s.coefficients()[1..].iter().all(|c| c.abs() < 1e-15));
        for d in 0..=3 {
            let m = low_degree_mass(&s, d).unwrap();
            assert_eq!(m.mass_fraction, 1.0);
            assert!(m.l2_truncation_error < 1e-15);
        }
        assert_eq!(degree_profile(&s), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maximally_mixed_is_uniform_under_flips() {
        let rho = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(3).unwrap());
        for q in [0.0, 0.1, 0.5] {
            let d = measure_distribution(&rho, q).unwrap();
            assert!(d.probs().iter().all(|p| (p - 0.125).abs() < 1e-15));
        }
    }

    #[test]
    fn w3_distribution_and_singletons() {
        let d = measure_distribution(&w_state(3).unwrap().density(), 0.0).unwrap();
        for (i, p) in d.probs().iter().enumerate() {
            let expected = if [1, 2, 4].contains(&i) { 1.0 / 3.0 } else { 0.0 };
            assert!((p - expected).abs() < 1e-15);
        }
        let s = fourier_spectrum(&d);
        // Each bit is 1 with probability 1/3, so E[(-1)^{x_i}] = 1 - 2/3.
        for q in 1..=3 {
            assert!((s.coefficient(s.mask_of(&[q])) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn w_profile_matches_expectations() {
        // Uniform on weight-1 strings: f̂(T) = 1 − 2|T|/n.
        for n in 2..=6 {
            let d = measure_distribution(&w_state(n).unwrap().density(), 0.0).unwrap();
            let profile = degree_profile(&fourier_spectrum(&d));
            for (k, w) in profile.iter().enumerate() {
                let coef = 1.0 - 2.0 * k as f64 / n as f64;
                let binom = (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64);
                assert!((w - binom * coef * coef).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn errors() {
        let s = fourier_spectrum(&OutputDistribution::uniform(2).unwrap());
        assert!(low_degree_mass(&s, 3).is_err());
        assert!(OutputDistribution::new(2, vec![0.5, 0.5, 0.1, -0.1]).is_err());
        assert!(OutputDistribution::new(2, vec![0.5, 0.5]).is_err());
        let rho = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(1).unwrap());
        assert!(measure_distribution(&rho, 0.7).is_err());
    }

    #[test]
    fn shot_sampling_is_seeded() {
        use rand::SeedableRng;
        let d = measure_distribution(&w_state(3).unwrap().density(), 0.05).unwrap();
        let a = d.sample_shots(1000, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = d.sample_shots(1000, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
