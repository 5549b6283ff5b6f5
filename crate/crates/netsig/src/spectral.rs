//! Dense symmetric eigendecomposition of the adjacency matrix.
//!
//! The RDPG null constrains projections onto the top adjacency eigenvectors.
//! A cyclic Jacobi solver is enough here: the P matrix downstream is dense
//! anyway, so graphs are desk-scale and robustness beats asymptotics.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Top-d eigenpairs of a symmetric matrix, sorted by descending algebraic
/// eigenvalue. Columns are unit eigenvectors with the sign convention that
/// the first entry of nonnegligible magnitude is positive.
#[derive(Debug, Clone)]
pub struct EigenBasis<S> {
    n: usize,
    values: Vec<S>,
    /// Column-major: `vectors[m]` is eigenvector m, length n.
    vectors: Vec<Vec<S>>,
}

impl<S: Scalar> EigenBasis<S> {
    /// Assemble a basis from explicit constraint vectors. Used for custom
    /// constraints (e.g. the all-ones vector, which reproduces the
    /// configuration model as a rank-one special case).
    pub fn from_columns(n: usize, values: Vec<S>, vectors: Vec<Vec<S>>) -> Result<Self> {
        if values.len() != vectors.len() {
            return Err(Error::usage("values/vectors length mismatch"));
        }
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::usage("constraint vector length != n"));
        }
        Ok(EigenBasis { n, values, vectors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn column(&self, m: usize) -> &[S] {
        &self.vectors[m]
    }

    pub fn columns(&self) -> &[Vec<S>] {
        &self.vectors
    }
}

/// Full eigendecomposition of a dense symmetric matrix (row-major, n x n)
/// by cyclic Jacobi rotations. Returns (eigenvalues, eigenvectors) with
/// eigenvector k stored as column k of the returned row-major matrix.
pub fn jacobi_eigen<S: Scalar>(a: &mut [S], n: usize) -> (Vec<S>, Vec<S>) {
    assert_eq!(a.len(), n * n);
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }
    if n <= 1 {
        return (a.iter().step_by(n.max(1) + 1).copied().collect(), v);
    }

    let frob: S = a.iter().map(|&x| x * x).sum::<S>().sqrt();
    let stop = frob * S::epsilon() * S::cast(n);

    for _sweep in 0..64 {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if (off + off).sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (S::cast(2.0) * apq);
                let t = if theta >= S::zero() {
                    S::one() / (theta + (theta * theta + S::one()).sqrt())
                } else {
                    -S::one() / (-theta + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[p * n + k] = a[k * n + p];
                        a[k * n + q] = s * akp + c * akq;
                        a[q * n + k] = a[k * n + q];
                    }
                }
                let two = S::cast(2.0);
                a[p * n + p] = c * c * app - two * s * c * apq + s * s * aqq;
                a[q * n + q] = s * s * app + two * s * c * apq + c * c * aqq;
                a[p * n + q] = S::zero();
                a[q * n + p] = S::zero();

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, v)
}

/// Top-d eigenpairs of the adjacency matrix, by descending algebraic
/// eigenvalue (not by magnitude).
pub fn top_eigenpairs<S: Scalar>(g: &Graph, d: usize) -> Result<EigenBasis<S>> {
    let n = g.node_count();
    if d == 0 || d > n {
        return Err(Error::usage(format!("rank {d} out of range 1..={n}")));
    }
    let mut a = vec![S::zero(); n * n];
    for &(i, j) in g.edges() {
        a[i as usize * n + j as usize] = S::one();
        a[j as usize * n + i as usize] = S::one();
    }
    let (values, vecmat) = jacobi_eigen(&mut a, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[y].partial_cmp(&values[x]).expect("finite eigenvalues"));

    let mut out_values = Vec::with_capacity(d);
    let mut out_vectors = Vec::with_capacity(d);
    for &idx in order.iter().take(d) {
        out_values.push(values[idx]);
        let mut col: Vec<S> = (0..n).map(|k| vecmat[k * n + idx]).collect();
        // unit norm, then deterministic sign
        let norm: S = col.iter().map(|&x| x * x).sum::<S>().sqrt();
        if norm > S::zero() {
            for x in &mut col {
                *x /= norm;
            }
        }
        let threshold = S::cast(1e-9);
        if let Some(first) = col.iter().find(|x| x.abs() > threshold) {
            if *first < S::zero() {
                for x in &mut col {
                    *x = -*x;
                }
            }
        }
        out_vectors.push(col);
    }
    EigenBasis::from_columns(n, out_values, out_vectors)
}
