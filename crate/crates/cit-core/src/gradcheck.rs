//! Central finite differences, used as the independent oracle for every
//! hand-written backward pass.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let plus = f(&probe);
        probe[k] = orig - eps;
        let minus = f(&probe);
        probe[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle { coord: k });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Largest `|a - b| / max(|a|, |b|, 1e-8)` across coordinates.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn linear_is_exact() {
        let a = [3.0, -0.5, 2.0];
        let f = |x: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let g = finite_diff_grad(f, &[0.25, 0.5, -1.0], 1e-3).unwrap();
        for (gi, ai) in g.iter().zip(a) {
            assert!((gi - ai).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_evaluation_is_reported() {
        let f = |x: &[f64]| if x[1] > 0.5 { f64::NAN } else { x[0] };
        assert_eq!(
            finite_diff_grad(f, &[0.0, 0.5], 0.1),
            Err(Error::Oracle { coord: 1 })
        );
    }
}
