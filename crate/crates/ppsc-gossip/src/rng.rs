//! Seeded random streams and Gaussian tail utilities.
//!
//! Everything random in this crate flows through [`Seed`]: a single root value
//! from which independent substreams are derived by `(trial, stage)` labels.
//! Two runs with the same root, trial index and stage label consume identical
//! random sequences, which is what makes experiment CSVs byte-reproducible.
//!
//! The tail helpers work with the upper Gaussian tail
//! `Q(w) = P[N(0,1) > w] = erfc(w/√2)/2` and its inverse, plus the noise
//! multiplier `κ(ε, δ)` that converts a privacy budget into a noise scale.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// `√(2π)`, the normalization constant of the standard normal density.
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomnessError {
    /// The tail inverse and the noise multiplier are only defined for
    /// `delta` in `(0, 1/2]`.
    #[error("delta must lie in (0, 1/2], got {0}")]
    DeltaOutOfRange(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("standard deviation must be non-negative and finite, got {0}")]
    NegativeSigma(f64),
}

/// Root seed for a whole experiment.
///
/// Substreams are identified by `(trial, stage)`; the stage label is a short
/// static string such as `"consensus"` or `"mixing-floor"`. Distinct labels
/// (or trial indices) give statistically independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(u64);

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed(root)
    }

    pub fn root(&self) -> u64 {
        self.0
    }

    /// Derive the substream for one `(trial, stage)` pair.
    pub fn stream(&self, trial: u64, stage: &str) -> ChaCha12Rng {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a offset basis
        for b in self
            .0
            .to_le_bytes()
            .into_iter()
            .chain(trial.to_le_bytes())
            .chain(stage.bytes())
        {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        ChaCha12Rng::seed_from_u64(h)
    }
}

/// One draw from `N(0, sigma²)`. `sigma = 0` returns exactly `0.0`.
pub fn gaussian(rng: &mut ChaCha12Rng, sigma: f64) -> Result<f64, RandomnessError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(RandomnessError::NegativeSigma(sigma));
    }
    Ok(sample_scaled(rng, sigma))
}

/// A vector of `dim` independent `N(0, sigma²)` draws.
pub fn gaussian_vector(
    rng: &mut ChaCha12Rng,
    sigma: f64,
    dim: usize,
) -> Result<DVector<f64>, RandomnessError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(RandomnessError::NegativeSigma(sigma));
    }
    Ok(DVector::from_fn(dim, |_, _| sample_scaled(rng, sigma)))
}

/// Internal unchecked draw; `sigma = 0` short-circuits to an exact zero
/// without consuming randomness.
pub(crate) fn sample_scaled(rng: &mut ChaCha12Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Upper Gaussian tail `Q(w) = P[N(0,1) > w]`.
///
/// Evaluated as `erfc(w/√2)/2`, which keeps full relative accuracy deep into
/// the tail (needed when inverting at small `delta`).
pub fn gaussian_tail(w: f64) -> f64 {
    0.5 * libm::erfc(w / std::f64::consts::SQRT_2)
}

/// Inverse of [`gaussian_tail`] on `delta ∈ (0, 1/2]`; returns `w ≥ 0` with
/// `Q(w) = delta` to machine-level relative accuracy.
///
/// Bisection on `[0, 40]` brackets the root, then a few Newton steps polish
/// it. `Q(40)` underflows to zero, so any representable `delta` in range is
/// bracketed.
pub fn gaussian_tail_inverse(delta: f64) -> Result<f64, RandomnessError> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(RandomnessError::DeltaOutOfRange(delta));
    }
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    // Invariant: Q(lo) >= delta > Q(hi).
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gaussian_tail(mid) >= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut w = 0.5 * (lo + hi);
    for _ in 0..4 {
        let density = (-0.5 * w * w).exp() / SQRT_2PI;
        if density < 1e-300 {
            break;
        }
        w += (gaussian_tail(w) - delta) / density;
    }
    Ok(w.max(0.0))
}

/// Noise multiplier `κ(ε, δ) = (Q⁻¹(δ) + √(Q⁻¹(δ)² + 2ε)) / (2ε)`,
/// the positive root of `ε·κ² − Q⁻¹(δ)·κ − 1/2 = 0`.
pub fn noise_multiplier(epsilon: f64, delta: f64) -> Result<f64, RandomnessError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(RandomnessError::BadEpsilon(epsilon));
    }
    let w = gaussian_tail_inverse(delta)?;
    Ok((w + (w * w + 2.0 * epsilon).sqrt()) / (2.0 * epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn tail_at_zero_is_one_half() {
        assert_eq!(gaussian_tail(0.0), 0.5);
    }

    #[test]
    fn tail_matches_reference_values() {
        // Frozen against scipy: Q(1.281551565) and the far left tail.
        assert_abs_diff_eq!(gaussian_tail(1.281_551_565), 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(gaussian_tail(-40.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tail_inverse_frozen_values() {
        // scipy norm.isf references.
        assert_eq!(gaussian_tail_inverse(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            gaussian_tail_inverse(0.1).unwrap(),
            1.281_551_565_544_600_4,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            gaussian_tail_inverse(1e-6).unwrap(),
            4.753_424_308_822_899,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            gaussian_tail_inverse(1e-8).unwrap(),
            5.612_001_244_174_789,
            epsilon = 1e-5
        );
    }

    #[test]
    fn tail_inverse_rejects_out_of_range() {
        for bad in [0.0, -0.3, 0.500_000_1, 0.9, f64::NAN] {
            assert!(matches!(
                gaussian_tail_inverse(bad),
                Err(RandomnessError::DeltaOutOfRange(_))
            ));
        }
    }

    #[test]
    fn inverse_composes_with_tail_on_zero_to_eight() {
        let mut w = 0.0;
        while w <= 8.0 {
            let delta = gaussian_tail(w);
            let back = gaussian_tail_inverse(delta).unwrap();
            assert_abs_diff_eq!(back, w, epsilon = 1e-9);
            w += 0.125;
        }
    }

    #[test]
    fn tail_inverse_has_relative_accuracy_in_the_tail() {
        // The privacy-bound tightness checks need |Q(w) - delta| small
        // relative to delta, not just absolutely.
        for delta in [1e-8, 1e-6, 1e-4, 1e-2, 0.4] {
            let w = gaussian_tail_inverse(delta).unwrap();
            let err = (gaussian_tail(w) - delta).abs() / delta;
            assert!(err < 1e-12, "delta={delta}: relative error {err}");
        }
    }

    #[test]
    fn multiplier_frozen_values() {
        // scipy-derived: (Q⁻¹(δ) + sqrt(Q⁻¹(δ)² + 2ε)) / (2ε).
        assert_abs_diff_eq!(
            noise_multiplier(1.0, 0.1).unwrap(),
            1.595_026_066_391_568_5,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            noise_multiplier(1e-3, 1e-6).unwrap(),
            4753.529_493_822_938,
            epsilon = 1e-3
        );
    }

    #[test]
    fn multiplier_satisfies_its_root_identity() {
        for epsilon in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            for delta in [1e-8, 1e-6, 1e-4, 1e-2, 0.4] {
                let k = noise_multiplier(epsilon, delta).unwrap();
                let w = gaussian_tail_inverse(delta).unwrap();
                let residual = epsilon * k * k - w * k - 0.5;
                assert!(
                    residual.abs() <= 1e-9,
                    "eps={epsilon} delta={delta}: residual {residual}"
                );
            }
        }
    }

    #[test]
    fn multiplier_rejects_bad_budgets() {
        assert!(noise_multiplier(0.0, 0.1).is_err());
        assert!(noise_multiplier(-1.0, 0.1).is_err());
        assert!(noise_multiplier(1.0, 0.0).is_err());
        assert!(noise_multiplier(1.0, 0.6).is_err());
    }

    #[test]
    fn zero_sigma_is_exactly_zero() {
        let mut rng = Seed::new(3).stream(0, "test");
        assert_eq!(gaussian(&mut rng, 0.0).unwrap(), 0.0);
        let v = gaussian_vector(&mut rng, 0.0, 4).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = Seed::new(3).stream(0, "test");
        assert!(matches!(
            gaussian(&mut rng, -1.0),
            Err(RandomnessError::NegativeSigma(_))
        ));
        assert!(gaussian_vector(&mut rng, f64::NAN, 2).is_err());
    }

    #[test]
    fn sample_moments_match_sigma() {
        let mut rng = Seed::new(99).stream(0, "moments");
        let sigma = 2.0;
        let n = 1_000_000usize;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = gaussian(&mut rng, sigma).unwrap();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // 5-sigma CLT bands.
        assert!(mean.abs() < 5.0 * sigma / (n as f64).sqrt());
        let var_tol = 5.0 * (2.0f64).sqrt() * sigma * sigma / (n as f64).sqrt();
        assert!((var - sigma * sigma).abs() < var_tol);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let seed = Seed::new(42);
        let a: Vec<u64> = (0..8).map({
            let mut r = seed.stream(1, "alpha");
            move |_| r.random::<u64>()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = seed.stream(1, "alpha");
            move |_| r.random::<u64>()
        }).collect();
        assert_eq!(a, b);

        let mut other_trial = seed.stream(2, "alpha");
        let mut other_stage = seed.stream(1, "beta");
        let mut other_root = Seed::new(43).stream(1, "alpha");
        assert_ne!(a[0], other_trial.random::<u64>());
        assert_ne!(a[0], other_stage.random::<u64>());
        assert_ne!(a[0], other_root.random::<u64>());
    }
}
