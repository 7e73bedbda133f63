//! Contrastive objectives with exact analytic gradients.
//!
//! Logits are `l_ij = exp(log_scale) · img_i · txt_j`; the temperature is
//! `τ = exp(-log_scale)`. Inputs are expected to be row-normalized already.
//! Gradients are taken with respect to those normalized rows; the model
//! applies the normalization Jacobian.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Which contrastive objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Image-to-text cross entropy only.
    #[default]
    Img2txt,
    /// Mean of image-to-text and text-to-image cross entropy.
    Bidirectional,
}

/// Loss value with gradients for both embedding matrices and the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_img: Matrix,
    pub grad_txt: Matrix,
    pub grad_log_tau: f64,
}

fn check_batch(img: &Matrix, txt: &Matrix) -> Result<usize> {
    if img.rows() != txt.rows() {
        return Err(Error::Shape {
            context: "contrastive batch rows",
            expected: img.rows(),
            got: txt.rows(),
        });
    }
    if img.cols() != txt.cols() {
        return Err(Error::Shape {
            context: "contrastive batch cols",
            expected: img.cols(),
            got: txt.cols(),
        });
    }
    if img.rows() < 2 {
        return Err(Error::BatchTooSmall { n: img.rows() });
    }
    Ok(img.rows())
}

/// Scaled similarity logits `exp(log_tau) · img · txtᵀ`.
pub fn logits(img: &Matrix, txt: &Matrix, log_tau: f64) -> Result<Matrix> {
    Ok(img.matmul_nt(txt)?.scale(libm::exp(log_tau)))
}

/// Row-wise softmax, computed with the max subtracted.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = libm::exp(*x - m);
            z += *x;
        }
        row.iter_mut().for_each(|x| *x /= z);
    }
    out
}

/// Image-to-text InfoNCE: mean over images of `-log softmax(l_i)_i`.
pub fn img2txt_infonce(img: &Matrix, txt: &Matrix, log_tau: f64) -> Result<LossGrad> {
    let n = check_batch(img, txt)?;
    let scale = libm::exp(log_tau);
    let sim = img.matmul_nt(txt)?;
    let l = sim.scale(scale);

    let mut loss = 0.0;
    // dloss/dlogits = (softmax - onehot) / n
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let row = l.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| libm::exp(x - m)).sum();
        let lse = m + libm::log(z);
        loss += lse - row[i];
        let gi = g.row_mut(i);
        for (j, x) in row.iter().enumerate() {
            gi[j] = libm::exp(x - lse) / n as f64;
        }
        gi[i] -= 1.0 / n as f64;
    }
    loss /= n as f64;

    let grad_img = g.matmul(txt)?.scale(scale);
    let grad_txt = g.matmul_tn(img)?.scale(scale);
    let grad_log_tau = scale
        * g.as_slice()
            .iter()
            .zip(sim.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    Ok(LossGrad {
        loss,
        grad_img,
        grad_txt,
        grad_log_tau,
    })
}

/// Mean of the image-to-text and text-to-image InfoNCE losses.
pub fn bidirectional_clip_loss(img: &Matrix, txt: &Matrix, log_tau: f64) -> Result<LossGrad> {
    check_batch(img, txt)?;
    let fwd = img2txt_infonce(img, txt, log_tau)?;
    let bwd = img2txt_infonce(txt, img, log_tau)?;
    let avg = |a: &Matrix, b: &Matrix| -> Matrix {
        let data: Vec<f64> = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        Matrix::from_fn(a.rows(), a.cols(), |i, j| data[i * a.cols() + j])
    };
    Ok(LossGrad {
        loss: 0.5 * (fwd.loss + bwd.loss),
        grad_img: avg(&fwd.grad_img, &bwd.grad_txt),
        grad_txt: avg(&fwd.grad_txt, &bwd.grad_img),
        grad_log_tau: 0.5 * (fwd.grad_log_tau + bwd.grad_log_tau),
    })
}

/// Dispatches on [`Objective`].
pub fn contrastive_loss(
    objective: Objective,
    img: &Matrix,
    txt: &Matrix,
    log_tau: f64,
) -> Result<LossGrad> {
    match objective {
        Objective::Img2txt => img2txt_infonce(img, txt, log_tau),
        Objective::Bidirectional => bidirectional_clip_loss(img, txt, log_tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_rel_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
            .normalize_rows()
            .unwrap()
    }

    fn check_gradients(objective: Objective, n: usize, d: usize, seed: u64, eps: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_unit_rows(n, d, &mut rng);
        let txt = random_unit_rows(n, d, &mut rng);
        let log_tau: f64 = rng.random_range(0.0..2.5);
        let lg = contrastive_loss(objective, &img, &txt, log_tau).unwrap();

        let mut flat: Vec<f64> = img.as_slice().to_vec();
        flat.extend_from_slice(txt.as_slice());
        flat.push(log_tau);
        let f = |x: &[f64]| {
            let a = Matrix::new(n, d, x[..n * d].to_vec()).unwrap();
            let b = Matrix::new(n, d, x[n * d..2 * n * d].to_vec()).unwrap();
            contrastive_loss(objective, &a, &b, x[2 * n * d])
                .unwrap()
                .loss
        };
        let numeric = finite_diff_grad(f, &flat, eps).unwrap();
        let mut analytic: Vec<f64> = lg.grad_img.as_slice().to_vec();
        analytic.extend_from_slice(lg.grad_txt.as_slice());
        analytic.push(lg.grad_log_tau);
        max_rel_error(&analytic, &numeric)
    }

    #[test]
    fn uniform_logits_give_log_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_unit_rows(4, 3, &mut rng);
        let txt = Matrix::from_fn(4, 3, |_, _| 1.0 / 3f64.sqrt());
        let lg = img2txt_infonce(&img, &txt, 2.0).unwrap();
        assert!((lg.loss - 4f64.ln()).abs() < 1e-12);

        // every image equally similar to the shared text: both directions uniform
        let img = Matrix::from_fn(4, 3, |i, j| match j {
            0 => 0.5,
            _ if j == 1 + i % 2 => 0.75f64.sqrt(),
            _ => 0.0,
        });
        let txt = Matrix::from_fn(4, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        for obj in [Objective::Img2txt, Objective::Bidirectional] {
            let lg = contrastive_loss(obj, &img, &txt, 1.0).unwrap();
            assert!((lg.loss - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_identity_pairs_have_vanishing_loss() {
        let eye = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        let lg = img2txt_infonce(&eye, &eye, 100f64.ln()).unwrap();
        assert!(lg.loss < 1e-10, "loss {}", lg.loss);
    }

    #[test]
    fn symmetric_logits_make_objectives_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_unit_rows(5, 6, &mut rng);
        let a = img2txt_infonce(&x, &x, 1.3).unwrap();
        let b = bidirectional_clip_loss(&x, &x, 1.3).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let x = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(
            img2txt_infonce(&x, &x, 0.0),
            Err(Error::BatchTooSmall { n: 1 })
        );
        assert_eq!(
            bidirectional_clip_loss(&x, &x, 0.0),
            Err(Error::BatchTooSmall { n: 1 })
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(check_gradients(Objective::Img2txt, 5, 7, 42, 1e-6) < 1e-5);
        assert!(check_gradients(Objective::Bidirectional, 5, 7, 43, 1e-6) < 1e-5);
    }

    // eps = 1e-5 keeps cancellation error below 1e-5 relative even on
    // entries near 1e-5 in magnitude
    #[test]
    fn gradients_match_over_many_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in 0..100 {
            let n = rng.random_range(2..=8);
            let d = rng.random_range(2..=16);
            for obj in [Objective::Img2txt, Objective::Bidirectional] {
                let e = check_gradients(obj, n, d, 1000 + k, 1e-5);
                assert!(e < 1e-5, "{obj:?} n={n} d={d}: {e}");
            }
        }
    }

    #[test]
    fn duplicated_text_rows_bound_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = random_unit_rows(6, 5, &mut rng);
        let shared = random_unit_rows(1, 5, &mut rng);
        let mut txt = random_unit_rows(6, 5, &mut rng);
        // rows 0..3 share one text
        for i in 0..3 {
            txt.row_mut(i).copy_from_slice(shared.row(0));
        }
        let lg = img2txt_infonce(&img, &txt, 3.0).unwrap();
        // each image among the duplicates can do no better than 1/3 on its own column
        let per_row = softmax_rows(&logits(&img, &txt, 3.0).unwrap());
        let mut dup_loss = 0.0;
        for i in 0..3 {
            dup_loss -= per_row.get(i, i).ln();
            assert!(per_row.get(i, i) <= 1.0 / 3.0 + 1e-12);
        }
        assert!(dup_loss / 3.0 >= 3f64.ln() - 1e-9);
        assert!(lg.loss.is_finite());
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_sum_to_one(seed in 0u64..500, log_tau in -1.0f64..4.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_unit_rows(6, 4, &mut rng);
            let b = random_unit_rows(6, 4, &mut rng);
            let p = softmax_rows(&logits(&a, &b, log_tau).unwrap());
            for r in p.iter_rows() {
                proptest::prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn losses_are_permutation_invariant(seed in 0u64..500, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_unit_rows(n, 5, &mut rng);
            let b = random_unit_rows(n, 5, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pa = Matrix::from_fn(n, 5, |i, j| a.get(perm[i], j));
            let pb = Matrix::from_fn(n, 5, |i, j| b.get(perm[i], j));
            for obj in [Objective::Img2txt, Objective::Bidirectional] {
                let x = contrastive_loss(obj, &a, &b, 1.7).unwrap().loss;
                let y = contrastive_loss(obj, &pa, &pb, 1.7).unwrap().loss;
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
