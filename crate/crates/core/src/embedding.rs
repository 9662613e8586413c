use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// A dense embedding. When `normalized` is set the L2 norm is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub dims: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn raw(values: Vec<f64>) -> Self {
        Self { dims: values.len(), values, normalized: false }
    }

    /// Unit-length copy; `None` for empty, zero or non-finite vectors.
    pub fn unit(values: Vec<f64>) -> Option<Self> {
        let n = norm(&values);
        if values.is_empty() || !n.is_finite() || n == 0.0 {
            return None;
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / n).collect();
        Some(Self { dims: values.len(), values, normalized: true })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Cosine similarity; 0 when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vectors() {
        let v = EmbeddingVector::unit(vec![3.0, 4.0]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(v.values, [0.6, 0.8]);
        assert!(EmbeddingVector::unit(vec![0.0, 0.0]).is_none());
        assert!(EmbeddingVector::unit(vec![f64::NAN]).is_none());
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0], &[1.0]), 0.0);
    }
}
