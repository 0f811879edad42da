//! Seeded parameter initialization. Values are drawn in f64 and cast, so the
//! same seed gives the same starting point at either precision.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::numeric::tensor::{Real, Tensor};

pub const EMBEDDING_SCALE: f64 = 0.05;

pub fn uniform<T: Real, R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-scale, scale);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("sized from shape")
}

/// Embedding tables: uniform in ±0.05.
pub fn embedding<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    uniform(rng, &[rows, cols], EMBEDDING_SCALE)
}

/// Glorot-uniform matrix for input projections.
pub fn xavier<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, &[rows, cols], scale)
}

/// Square matrix with orthonormal rows (Gram-Schmidt on a Gaussian draw).
pub fn orthogonal<T: Real, R: Rng>(rng: &mut R, n: usize) -> Tensor<T> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let proj: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(r) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Redraw the rare near-dependent vector.
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let data = rows.into_iter().flatten().map(T::from_f64).collect();
    Tensor::new(vec![n, n], data).expect("n x n")
}
