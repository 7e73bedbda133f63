//! Dense row-major matrices and the cosine-similarity primitives built on them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix, rejecting inconsistent sizes and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "Matrix::new",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equally sized rows. Fails on ragged input or an empty list.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).ok_or(Error::Shape {
            context: "Matrix::from_rows",
            expected: 1,
            got: 0,
        })?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    context: "Matrix::from_rows",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul_tn", self.rows, other.rows)?;
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &aki) in a.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                for (oij, bkj) in out.row_mut(i).iter_mut().zip(b) {
                    *oij += aki * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul_nt", self.cols, other.cols)?;
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(self.row(i), other.row(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Rows scaled to unit Euclidean norm.
    pub fn normalize_rows(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..out.rows {
            let n = norm(out.row(i));
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroNorm { row: i });
            }
            out.row_mut(i).iter_mut().for_each(|x| *x /= n);
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Returns `v / ‖v‖`.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm { row: 0 });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine similarity between every row of `a` and every row of `b`.
///
/// Rows need not be normalized. A zero row in either input is an error that
/// names the offending row of that input.
pub fn cosine_sim_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dim("cosine_sim_matrix", a.cols, b.cols)?;
    let an = a.normalize_rows()?;
    let bn = b.normalize_rows()?;
    let mut out = an.matmul_nt(&bn)?;
    out.data.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn normalize_three_four() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_random_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = l2_normalize(&v).unwrap();
        let n: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_is_rejected() {
        assert_eq!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroNorm { row: 0 }));
        let a = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(cosine_sim_matrix(&a, &b), Err(Error::ZeroNorm { row: 1 }));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![0.0; 3]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn self_and_orthogonal_similarity() {
        let a = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 1.0, 0.0, 0.0]).unwrap();
        let s = cosine_sim_matrix(&a, &b).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn cosine_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(3, 4, &mut rng);
        let b = random(2, 4, &mut rng);
        let s = cosine_sim_matrix(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut d = 0.0;
                let mut na = 0.0;
                let mut nb = 0.0;
                for k in 0..4 {
                    d += a.get(i, k) * b.get(j, k);
                    na += a.get(i, k) * a.get(i, k);
                    nb += b.get(j, k) * b.get(j, k);
                }
                assert!((s.get(i, j) - d / (na.sqrt() * nb.sqrt())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let ab = a.matmul(&b).unwrap();
        let ab_tn = a.transpose().matmul_tn(&b).unwrap();
        let ab_nt = a.matmul_nt(&b.transpose()).unwrap();
        for ((x, y), z) in ab
            .as_slice()
            .iter()
            .zip(ab_tn.as_slice())
            .zip(ab_nt.as_slice())
        {
            assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
        }
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }

    proptest::proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            seed in 0u64..1000,
            c in 0.001f64..1000.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(3, 5, &mut rng);
            let b = random(4, 5, &mut rng);
            let s1 = cosine_sim_matrix(&a, &b).unwrap();
            let s2 = cosine_sim_matrix(&a.scale(c), &b).unwrap();
            for (x, y) in s1.as_slice().iter().zip(s2.as_slice()) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
                proptest::prop_assert!(x.abs() <= 1.0);
            }
        }
    }
}
