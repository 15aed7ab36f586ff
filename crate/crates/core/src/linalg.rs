//! Small dense helpers shared by the geometric modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular value below which a frame counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).min()
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).max()
}

/// Modified Gram-Schmidt, run twice. Fails if the columns are numerically dependent.
pub fn gram_schmidt(raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = singular_values(raw);
    let top = sv.max();
    if raw.ncols() == 0 || !(top > 0.0) || !top.is_finite() {
        return Err(Error::RankDeficient(0.0));
    }
    let rel = sv.min() / top;
    if rel < RANK_TOL {
        return Err(Error::RankDeficient(rel));
    }
    Ok(gram_schmidt_fast(raw))
}

/// Gram-Schmidt (twice) without the rank check, for hot loops on frames known
/// to be well conditioned.
pub fn gram_schmidt_fast(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = raw.clone();
    for _ in 0..2 {
        for j in 0..q.ncols() {
            for i in 0..j {
                let p = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-p, &qi, 1.0);
            }
            let n = q.column(j).norm();
            q.column_mut(j).unscale_mut(n);
        }
    }
    q
}

/// Orthonormal basis of the orthogonal complement of an orthonormal frame.
///
/// Built greedily from the standard basis so the result is deterministic.
pub fn orthogonal_complement(frame: &DMatrix<f64>) -> DMatrix<f64> {
    let d = frame.nrows();
    let want = d - frame.ncols();
    let mut basis: Vec<DVector<f64>> = frame.column_iter().map(|c| c.clone_owned()).collect();
    let mut out = Vec::with_capacity(want);
    // Pick the standard vectors with the largest residual first.
    while out.len() < want {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..d {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let p = b.dot(&v);
                    v.axpy(-p, b, 1.0);
                }
            }
            let n = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn + 1e-12) {
                best = Some((n, v / n));
            }
        }
        let (_, v) = best.expect("d > 0");
        basis.push(v.clone());
        out.push(v);
    }
    if out.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Solves `a x = b` for square `a`, returning `None` when `a` is singular.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::InvalidDimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Serde adapter storing a matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_spans_the_rest() {
        let f = gram_schmidt(&DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0])).unwrap();
        let c = orthogonal_complement(&f);
        assert_eq!(c.ncols(), 2);
        let all = DMatrix::from_columns(&[f.column(0), c.column(0), c.column(1)]);
        let gram = all.transpose() * &all;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn dependent_columns_are_rejected() {
        let m = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(gram_schmidt(&m), Err(Error::RankDeficient(_))));
    }
}
