//! Dense double-precision tensors (rank ≤ 2) with a reverse-mode operation tape.

mod adam;
mod gradcheck;
mod graph;
mod store;

pub use adam::{Adam, AdamConfig, StepInfo};
pub use gradcheck::{check_gradients, check_gradients_steps, GradCheckReport, ParamCheck, Stencil};
pub use graph::{Gradients, Graph, Var};
pub use store::{ParamId, ParameterStore};

use rand::Rng;

use crate::error::{Error, Result};

/// A row-major matrix. Vectors are `n × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if rows * cols != data.len() {
            return Err(Error::Internal(format!(
                "shape {rows}x{cols} does not match {} values",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    /// Entries drawn uniformly from `[-bound, bound)`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Numerically stable softmax over a slice.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_is_distribution(v in prop::collection::vec(-500.0f64..500.0, 1..20)) {
            let p = softmax(&v).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let p = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
