//! Dense-inverse Gaussian-process posterior, written without the library's
//! kernel or factorization code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub struct DenseGp {
    pub lengthscales: Vec<f64>,
    pub amplitude: f64,
    pub noise: f64,
    pub offset: f64,
    pub points: Vec<Vec<f64>>,
    inverse: DMatrix<f64>,
    weights: DVector<f64>,
}

pub fn se(a: &[f64], b: &[f64], lengthscales: &[f64], amplitude: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        let u = (a[j] - b[j]) / lengthscales[j];
        s += u * u;
    }
    amplitude * (-0.5 * s).exp()
}

impl DenseGp {
    pub fn new(points: &[Vec<f64>], ys: &[f64], lengthscales: &[f64], amplitude: f64, noise: f64, offset: f64) -> Self {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = se(&points[i], &points[j], lengthscales, amplitude);
            }
            k[(i, i)] += noise;
        }
        // LU for every size: the small-matrix cofactor inverse loses digits on
        // nearly duplicated points.
        let inverse = k.lu().try_inverse().expect("covariance is invertible");
        let y = DVector::from_iterator(n, ys.iter().map(|v| v - offset));
        let weights = &inverse * y;
        DenseGp {
            lengthscales: lengthscales.to_vec(),
            amplitude,
            noise,
            offset,
            points: points.to_vec(),
            inverse,
            weights,
        }
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| se(p, x, &self.lengthscales, self.amplitude)),
        )
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        if self.points.is_empty() {
            return self.offset;
        }
        self.offset + self.cross(x).dot(&self.weights)
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        if self.points.is_empty() {
            return self.amplitude;
        }
        let k = self.cross(x);
        self.amplitude - k.dot(&(&self.inverse * &k))
    }
}

/// Concatenation of two point/value lists.
pub fn joined(a: &[Vec<f64>], ay: &[f64], b: &[Vec<f64>], by: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = a.to_vec();
    points.extend_from_slice(b);
    let mut ys = ay.to_vec();
    ys.extend_from_slice(by);
    (points, ys)
}
