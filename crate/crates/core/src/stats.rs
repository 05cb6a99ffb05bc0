//! Summation and Monte Carlo error bookkeeping shared by the estimators.
//!
//! Samples of an [`EmpiricalMeasure`](crate::sim::EmpiricalMeasure) come from a
//! single ergodic chain, so neighbouring samples are correlated. Standard
//! errors are therefore computed by non-overlapping batch means: the sample
//! sequence is cut into contiguous blocks, each block yields its own estimate,
//! and the spread of the block estimates gives the error.

use serde::{Deserialize, Serialize};

/// Default number of batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 64;

/// Neumaier compensated summation.
///
/// The result only depends on the order of the input, never on thread
/// scheduling, which is what makes exact-mode reductions reproducible.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A value with its standard error. Exact quantities carry `stderr == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    pub fn scale(self, factor: f64) -> Self {
        Estimate {
            value: self.value * factor,
            stderr: self.stderr * factor.abs(),
        }
    }

    /// `value + k * stderr`.
    pub fn upper(self, k: f64) -> f64 {
        self.value + k * self.stderr
    }
}

/// Partition of a sample sequence into contiguous batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLayout {
    /// `bounds[b]..bounds[b + 1]` are the sample indices of batch `b`.
    pub bounds: Vec<usize>,
    /// Total sample weight of each batch; sums to one.
    pub weights: Vec<f64>,
}

impl BatchLayout {
    pub fn new(sample_weights: &[f64], batches: usize) -> Self {
        let n = sample_weights.len();
        let b = batches.clamp(1, n.max(1));
        let bounds: Vec<usize> = (0..=b).map(|i| i * n / b).collect();
        let weights = bounds
            .windows(2)
            .map(|w| compensated_sum(sample_weights[w[0]..w[1]].iter().copied()))
            .collect();
        BatchLayout { bounds, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Standard error of a weighted mean whose per-batch means are `batch_values`.
    ///
    /// With `B` batches of weight `W_b` this is
    /// `sqrt(B / (B - 1) * sum_b W_b^2 (v_b - v)^2)`, which reduces to the usual
    /// batch-means formula for equal weights. Fewer than two batches give 0.
    pub fn stderr(&self, batch_values: &[f64]) -> f64 {
        let b = self.len();
        if b < 2 {
            return 0.0;
        }
        let mean = compensated_sum(self.weights.iter().zip(batch_values).map(|(w, v)| w * v));
        let ss = compensated_sum(
            self.weights
                .iter()
                .zip(batch_values)
                .map(|(w, v)| w * w * (v - mean) * (v - mean)),
        );
        (b as f64 / (b as f64 - 1.0) * ss).max(0.0).sqrt()
    }
}

/// A weighted mean together with its per-batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchedValue {
    pub value: f64,
    pub batches: Vec<f64>,
}

impl BatchedValue {
    /// Standard error of `sum_r coeff_r * rows_r` for rows over the same layout.
    pub fn linear_stderr(layout: &BatchLayout, rows: &[&BatchedValue], coeffs: &[f64]) -> f64 {
        let combined: Vec<f64> = (0..layout.len())
            .map(|b| compensated_sum(rows.iter().zip(coeffs).map(|(r, c)| c * r.batches[b])))
            .collect();
        layout.stderr(&combined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn batch_layout_covers_all_samples() {
        let w = vec![0.1; 10];
        let layout = BatchLayout::new(&w, 4);
        assert_eq!(layout.bounds, vec![0, 2, 5, 7, 10]);
        assert!((layout.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_batches_match_textbook_batch_means() {
        let layout = BatchLayout {
            bounds: vec![0, 1, 2, 3, 4],
            weights: vec![0.25; 4],
        };
        let v = [1.0, 2.0, 3.0, 4.0];
        // sample variance of batch means is 5/3, divided by B = 4
        let expected = (5.0_f64 / 3.0 / 4.0).sqrt();
        assert!((layout.stderr(&v) - expected).abs() < 1e-14);
    }

    #[test]
    fn single_batch_has_zero_error() {
        let layout = BatchLayout::new(&[1.0], 64);
        assert_eq!(layout.len(), 1);
        assert_eq!(layout.stderr(&[3.0]), 0.0);
    }
}
