//! Covariance and symmetric eigendecomposition (cyclic Jacobi).

use crate::error::{Error, Result};
use crate::scalar::{fold_halves, Scalar};
use crate::tensor::DenseMatrix;

/// Eigenpairs sorted by descending eigenvalue. Column `j` of `vectors`
/// is the unit eigenvector for `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    pub vectors: DenseMatrix<T>,
}

impl<T: Scalar> Eigen<T> {
    pub fn vector(&self, j: usize) -> Vec<T> {
        self.vectors.column(j)
    }
}

/// Column means.
pub fn column_means<T: Scalar>(x: &DenseMatrix<T>) -> Vec<T> {
    let n = T::from_usize_lossy(x.n());
    (0..x.d())
        .map(|j| fold_halves(&mut x.column(j)) / n)
        .collect()
}

/// Sample covariance of the columns (divisor `n − 1`).
pub fn covariance<T: Scalar>(x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if x.n() < 2 {
        return Err(Error::InvalidParameter("covariance needs n >= 2".into()));
    }
    let d = x.d();
    let means = column_means(x);
    let centered: Vec<Vec<T>> = (0..d)
        .map(|j| x.column(j).into_iter().map(|v| v - means[j]).collect())
        .collect();
    let denom = T::from_usize_lossy(x.n() - 1);
    let mut c = vec![T::zero(); d * d];
    let mut scratch = Vec::new();
    for a in 0..d {
        for b in a..d {
            let v = T::dot_pairwise(&centered[a], &centered[b], &mut scratch) / denom;
            c[a * d + b] = v;
            c[b * d + a] = v;
        }
    }
    DenseMatrix::from_vec(d, d, c)
}

/// Eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen<T: Scalar>(m: &DenseMatrix<T>) -> Result<Eigen<T>> {
    let d = m.n();
    if d == 0 || m.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a non-empty square matrix, got {}x{}",
            m.n(),
            m.d()
        )));
    }
    let mut a: Vec<T> = m.values().to_vec();
    let mut v = vec![T::zero(); d * d];
    for i in 0..d {
        v[i * d + i] = T::one();
    }
    let two = T::one() + T::one();
    let half = T::one() / two;
    let scale = a.iter().fold(T::zero(), |s, &x| s.max(x.abs()));
    let tol = T::epsilon() * T::epsilon() * scale * scale;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..d {
            for q in p + 1..d {
                off = off + a[p * d + q] * a[p * d + q];
            }
        }
        if off <= tol || scale == T::zero() {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) * half / apq;
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

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| crate::ops::topk::float_cmp(a[j * d + j], a[i * d + i]).then(i.cmp(&j)));
    let values: Vec<T> = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vectors = vec![T::zero(); d * d];
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..d {
            vectors[r * d + newc] = v[r * d + oldc];
        }
    }
    Ok(Eigen {
        values,
        vectors: DenseMatrix::from_vec(d, d, vectors)?,
    })
}

/// Eigenpairs of the column covariance of `x`; negative eigenvalues from
/// rounding are clamped to zero.
pub fn covariance_eigen<T: Scalar>(x: &DenseMatrix<T>) -> Result<Eigen<T>> {
    if x.d() == 0 {
        return Err(Error::DimensionMismatch("covariance of zero columns".into()));
    }
    let c = covariance(x)?;
    let mut e = symmetric_eigen(&c)?;
    for v in &mut e.values {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(e)
}

/// Project rows onto the first `components` eigenvectors.
pub fn project<T: Scalar>(x: &DenseMatrix<T>, eigen: &Eigen<T>, components: usize) -> Result<DenseMatrix<T>> {
    let d = x.d();
    if eigen.vectors.n() != d {
        return Err(Error::DimensionMismatch("projection basis does not match data".into()));
    }
    let basis: Vec<Vec<T>> = (0..components).map(|j| eigen.vector(j)).collect();
    let mut out = Vec::with_capacity(x.n() * components);
    let mut scratch = Vec::new();
    for r in x.rows() {
        out.extend(basis.iter().map(|b| T::dot_pairwise(r, b, &mut scratch)));
    }
    DenseMatrix::from_vec(x.n(), components, out)
}
