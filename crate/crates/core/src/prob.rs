//! Class-probability vectors.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on the sum-to-one invariant.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// A length-`M` vector of non-negative entries summing to 1 (within
/// [`SUM_TOLERANCE`]). Every probability emitted by the visual layer, the
/// voting layer, and the integration network is one of these.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbVector<T: Real>(Vec<T>);

impl<T: Real> ClassProbVector<T> {
    /// Wraps an already-normalized vector, validating the invariant.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        let mut sum = 0.0;
        for (i, v) in values.iter().enumerate() {
            let v = v.as_f64();
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "probability entry {i} is {v}, want finite and non-negative"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "probability vector sums to {sum}, want 1 within {SUM_TOLERANCE}"
            )));
        }
        Ok(Self(values))
    }

    /// L1-normalizes non-negative scores into a probability vector. An
    /// all-zero score vector falls back to the uniform distribution.
    pub fn from_scores(scores: &[T]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("score vector must be non-empty"));
        }
        let mut total = T::zero();
        for (i, s) in scores.iter().enumerate() {
            if !s.is_finite() || *s < T::zero() {
                return Err(Error::invalid(format!(
                    "score entry {i} is {s}, want finite and non-negative"
                )));
            }
            total += *s;
        }
        if total <= T::zero() {
            return Self::uniform(scores.len());
        }
        Ok(Self(scores.iter().map(|&s| s / total).collect()))
    }

    /// The uniform distribution over `class_count` classes.
    pub fn uniform(class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::invalid("class count must be at least 1"));
        }
        let p = T::one() / T::of(class_count as f64);
        Ok(Self(vec![p; class_count]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// Index of the largest entry; ties broken by the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.0.len() {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_vectors() {
        assert!(ClassProbVector::<f64>::new(vec![]).is_err());
        assert!(ClassProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ClassProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn zero_scores_fall_back_to_uniform() {
        let p = ClassProbVector::from_scores(&[0.0f64, 0.0, 0.0]).unwrap();
        assert_eq!(p.as_slice(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let p = ClassProbVector::new(vec![0.25f64; 4]).unwrap();
        assert_eq!(p.argmax(), 0);
        let p = ClassProbVector::new(vec![0.2f64, 0.5, 0.3]).unwrap();
        assert_eq!(p.argmax(), 1);
    }

    proptest! {
        #[test]
        fn from_scores_always_yields_valid_vector(
            scores in prop::collection::vec(0.0f64..1e6, 1..16)
        ) {
            let p = ClassProbVector::from_scores(&scores).unwrap();
            let sum: f64 = p.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= SUM_TOLERANCE);
            prop_assert!(p.as_slice().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn argmax_invariant_under_positive_scaling(
            scores in prop::collection::vec(0.0f64..1.0, 1..12),
            scale in 0.001f64..1000.0
        ) {
            let p = ClassProbVector::from_scores(&scores).unwrap();
            let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
            let q = ClassProbVector::from_scores(&scaled).unwrap();
            prop_assert_eq!(p.argmax(), q.argmax());
        }
    }
}
