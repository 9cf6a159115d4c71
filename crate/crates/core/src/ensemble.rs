//! Weighted combination of two models' logits and the logit-to-probability
//! bridge. Combination happens in logit space, before a single softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{shape_str, Matrix};

/// Per-example decoder scores: `Z` rows per axis, one column per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsTensor {
    pub example_id: String,
    pub verb_logits: Matrix,
    pub noun_logits: Matrix,
}

impl LogitsTensor {
    pub fn new(example_id: impl Into<String>, verb_logits: Matrix, noun_logits: Matrix) -> Result<Self> {
        let t = Self {
            example_id: example_id.into(),
            verb_logits,
            noun_logits,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn steps(&self) -> usize {
        self.verb_logits.rows()
    }

    pub fn shape(&self) -> String {
        format!(
            "verb {} / noun {}",
            shape_str(&self.verb_logits),
            shape_str(&self.noun_logits)
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.verb_logits.rows() != self.noun_logits.rows() {
            return Err(Error::ShapeMismatch {
                left: format!("verb_logits {}", shape_str(&self.verb_logits)),
                right: format!("noun_logits {}", shape_str(&self.noun_logits)),
            });
        }
        if self.verb_logits.rows() == 0 || self.verb_logits.cols() == 0 || self.noun_logits.cols() == 0 {
            return Err(Error::InvalidConfig(format!(
                "example {}: empty logits ({})",
                self.example_id,
                self.shape()
            )));
        }
        let all = self.verb_logits.as_slice().iter().chain(self.noun_logits.as_slice());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "example {}: non-finite logit",
                self.example_id
            )));
        }
        Ok(())
    }
}

/// The two scalar weights of the ensemble. Unconstrained: they need not sum
/// to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl EnsembleWeights {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

impl Default for EnsembleWeights {
    fn default() -> Self {
        Self { alpha: 0.6, beta: 1.4 }
    }
}

/// A zero weight drops its term, so `(1, 0)` reproduces `a` bit for bit,
/// signed zeros included.
fn weighted_sum(a: &Matrix, b: &Matrix, w: EnsembleWeights) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            if w.beta == 0.0 {
                w.alpha * x
            } else if w.alpha == 0.0 {
                w.beta * y
            } else {
                w.alpha * x + w.beta * y
            }
        })
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shapes checked by caller")
}

/// `alpha * a + beta * b`, elementwise on both axes.
pub fn combine_logits(a: &LogitsTensor, b: &LogitsTensor, w: EnsembleWeights) -> Result<LogitsTensor> {
    if a.example_id != b.example_id {
        return Err(Error::ExampleIdMismatch {
            left: a.example_id.clone(),
            right: b.example_id.clone(),
        });
    }
    if a.verb_logits.shape() != b.verb_logits.shape() || a.noun_logits.shape() != b.noun_logits.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    if !(w.alpha.is_finite() && w.beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite ensemble weights {w:?}")));
    }
    Ok(LogitsTensor {
        example_id: a.example_id.clone(),
        verb_logits: weighted_sum(&a.verb_logits, &b.verb_logits, w),
        noun_logits: weighted_sum(&a.noun_logits, &b.noun_logits, w),
    })
}

/// Per-step class distributions for both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistributions {
    pub example_id: String,
    pub verb_probs: Matrix,
    pub noun_probs: Matrix,
}

impl StepDistributions {
    pub fn steps(&self) -> usize {
        self.verb_probs.rows()
    }
}

/// Max-subtracted softmax of one row, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    softmax_into(row, &mut out);
    out
}

fn softmax_matrix(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        softmax_into(m.row(r), out.row_mut(r));
    }
    out
}

pub fn softmax_rows(logits: &LogitsTensor) -> StepDistributions {
    StepDistributions {
        example_id: logits.example_id.clone(),
        verb_probs: softmax_matrix(&logits.verb_logits),
        noun_probs: softmax_matrix(&logits.noun_logits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(id: &str, v: f64, n: f64) -> LogitsTensor {
        LogitsTensor::new(id, Matrix::filled(2, 3, v), Matrix::filled(2, 4, n)).unwrap()
    }

    #[test]
    fn identity_weights() {
        let a = LogitsTensor::new(
            "x",
            Matrix::from_rows(vec![vec![0.1, -3.7, 1e10], vec![2.5, -0.0, -0.3]]).unwrap(),
            Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(),
        )
        .unwrap();
        let b = LogitsTensor::new("x", Matrix::filled(2, 3, 7.0), Matrix::filled(2, 1, 3.0)).unwrap();
        let out = combine_logits(&a, &b, EnsembleWeights::new(1.0, 0.0)).unwrap();
        let bits = |t: &LogitsTensor| -> Vec<u64> { t.verb_logits.as_slice().iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&out), bits(&a));
        assert_eq!(out, a);
    }

    #[test]
    fn midpoint() {
        let out = combine_logits(
            &tensor("x", 2.0, 2.0),
            &tensor("x", 4.0, 4.0),
            EnsembleWeights::new(0.5, 0.5),
        )
        .unwrap();
        assert!(out.verb_logits.as_slice().iter().all(|&x| x == 3.0));
        assert!(out.noun_logits.as_slice().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn mismatches_are_errors() {
        let a = tensor("x", 0.0, 0.0);
        let b = LogitsTensor::new("x", Matrix::filled(3, 3, 0.0), Matrix::filled(3, 4, 0.0)).unwrap();
        let err = combine_logits(&a, &b, EnsembleWeights::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("3x3"), "{msg}");
        assert!(matches!(
            combine_logits(&a, &tensor("y", 0.0, 0.0), EnsembleWeights::default()),
            Err(Error::ExampleIdMismatch { .. })
        ));
    }

    #[test]
    fn softmax_edge_rows() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() <= 1e-12 && p[1] <= 1e-12);
        let p = softmax(&[1e6, -1e6, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn non_finite_logits_rejected() {
        let t = LogitsTensor::new("x", Matrix::filled(1, 2, f64::NAN), Matrix::filled(1, 2, 0.0));
        assert!(t.is_err());
        let t = LogitsTensor::new("x", Matrix::filled(1, 2, 0.0), Matrix::filled(2, 2, 0.0));
        assert!(t.is_err());
    }

    #[test]
    fn logits_json_shape() {
        let t: LogitsTensor =
            serde_json::from_str(r#"{"example_id":"e","verb_logits":[[1.0,2.0]],"noun_logits":[[0.5]]}"#).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.verb_logits.get(0, 1), 2.0);
    }
}
