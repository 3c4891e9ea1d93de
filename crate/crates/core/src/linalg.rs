//! Small dense symmetric matrices and a cyclic Jacobi eigensolver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix stored as rows. Symmetry is checked on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::Config(format!(
                    "matrix row of length {} in a {dim}x{dim} matrix",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("matrix entries must be finite".into()));
            }
            data.extend_from_slice(row);
        }
        let m = Self { dim, data };
        let scale = m.max_abs().max(T::one());
        for i in 0..dim {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > T::epsilon() * T::lit(16.0) * scale {
                    return Err(Error::Config(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![T::one(); dim])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn scalar(value: T) -> Self {
        Self { dim: 1, data: vec![value] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim.max(1)).take(self.dim).map(<[T]>::to_vec).collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn trace(&self) -> T {
        (0..self.dim).fold(T::zero(), |acc, i| acc + self.get(i, i))
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        debug_assert_eq!(v.len(), self.dim);
        let mut acc = T::zero();
        for i in 0..self.dim {
            let row = v.iter().enumerate().fold(T::zero(), |r, (j, &vj)| r + self.get(i, j) * vj);
            acc = acc + v[i] * row;
        }
        acc
    }

    /// `M v` into `out`.
    pub fn mul_vec(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).fold(T::zero(), |acc, j| acc + self.get(i, j) * v[j]);
        }
    }

    /// Plain product; the result is symmetrised, so only call it where the
    /// exact product is known to be symmetric (e.g. `A B A` with `A`, `B`
    /// symmetric).
    fn sandwich(&self, middle: &Self) -> Self {
        let d = self.dim;
        let mut tmp = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                tmp[i * d + j] = (0..d).fold(T::zero(), |acc, k| acc + self.get(i, k) * middle.get(k, j));
            }
        }
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let v = (0..d).fold(T::zero(), |acc, k| acc + tmp[i * d + k] * self.get(k, j));
                out.set(i, j, v);
            }
        }
        for i in 0..d {
            for j in 0..i {
                let avg = (out.get(i, j) + out.get(j, i)) * T::lit(0.5);
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        out
    }

    /// Trace of `self · other` without forming the product.
    pub fn trace_product(&self, other: &Self) -> T {
        let d = self.dim;
        let mut acc = T::zero();
        for i in 0..d {
            for k in 0..d {
                acc = acc + self.get(i, k) * other.get(k, i);
            }
        }
        acc
    }

    /// Eigenvalues and eigenvectors (columns of the returned rows-major
    /// matrix) by cyclic Jacobi rotations.
    pub fn eigen(&self) -> (Vec<T>, Vec<Vec<T>>) {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut v = vec![T::zero(); d * d];
        for i in 0..d {
            v[i * d + i] = T::one();
        }
        let norm = self.data.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
        let threshold = T::epsilon() * norm.max(T::min_positive_value());
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..d {
                for j in (i + 1)..d {
                    off = off + a[i * d + j] * a[i * d + j];
                }
            }
            if off.sqrt() <= threshold {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq.is_zero() {
                        continue;
                    }
                    let app = a[p * d + p];
                    let aqq = a[q * d + q];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                    for k in 0..d {
                        let vkp = v[k * d + p];
                        let vkq = v[k * d + q];
                        v[k * d + p] = c * vkp - s * vkq;
                        v[k * d + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..d).map(|i| a[i * d + i]).collect();
        let vectors = v.chunks(d.max(1)).take(d).map(<[T]>::to_vec).collect();
        (values, vectors)
    }

    /// Symmetric square root of a positive-semidefinite matrix. Eigenvalues
    /// above `-tol·max(1, ‖M‖)` are clamped to zero; anything lower is an
    /// error.
    pub fn sqrt_psd(&self, tol: T) -> Result<Self> {
        let (values, vectors) = self.eigen();
        let scale = values.iter().fold(T::one(), |m, v| m.max(v.abs()));
        let d = self.dim;
        let mut out = Self::zeros(d);
        for (k, &lambda) in values.iter().enumerate() {
            if lambda < -tol * scale {
                return Err(Error::Numeric {
                    message: format!("matrix is not positive semidefinite (eigenvalue {lambda})"),
                    achieved: lambda.to_f64().unwrap_or(f64::NAN),
                });
            }
            let root = lambda.max(T::zero()).sqrt();
            for i in 0..d {
                for j in 0..d {
                    let v = out.get(i, j) + root * vectors[i][k] * vectors[j][k];
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// `A M A` for symmetric `A`.
    pub fn congruence(&self, a: &Self) -> Result<Self> {
        if a.dim != self.dim {
            return Err(Error::Config(format!(
                "dimension mismatch: {} vs {}",
                a.dim, self.dim
            )));
        }
        Ok(a.sandwich(self))
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for SymMatrix<T> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl<T: Scalar> From<SymMatrix<T>> for Vec<Vec<T>> {
    fn from(m: SymMatrix<T>) -> Self {
        m.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_two_by_two() {
        let m = SymMatrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (mut vals, _) = m.eigen();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = SymMatrix::from_rows(vec![
            vec![4.0f64, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap();
        let r: SymMatrix<f64> = m.sqrt_psd(1e-12).unwrap();
        let back = SymMatrix::identity(3).congruence(&r).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.get(i, j) - m.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(SymMatrix::from_rows(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        let m = SymMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(m.sqrt_psd(1e-9), Err(Error::Numeric { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let m = SymMatrix::<f32>::diagonal(&[3.0, 1.0]);
        let (vals, _) = m.eigen();
        assert_eq!(vals, vec![3.0, 1.0]);
    }
}
