//! Dual-tower model with a locked vision side.
//!
//! Vision: `raw_img · vision_map` (frozen) `· vision_proj`, row-normalized.
//! Text: `raw_txt · text_map` (frozen), then two trainable
//! `tanh` layers giving the pooled feature, then `· text_proj`, row-normalized.

mod optim;

pub use optim::{OptimState, ScheduleConfig};

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, Error, Result};
use crate::linalg::Matrix;
use crate::loss::{contrastive_loss, Objective};

/// Largest allowed logit scale, `exp(log_tau)`.
pub const MAX_LOGIT_SCALE: f64 = 100.0;
/// Smallest allowed logit scale.
pub const MIN_LOGIT_SCALE: f64 = 1.0;
/// Initial temperature; the logit scale starts at its reciprocal.
pub const INIT_TEMPERATURE: f64 = 0.07;

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub raw_img_dim: usize,
    pub raw_txt_dim: usize,
    pub backbone_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.raw_img_dim,
            self.raw_txt_dim,
            self.backbone_dim,
            self.hidden_dim,
            self.embed_dim,
        ];
        if all.contains(&0) {
            return Err(config_err("all model dimensions must be >= 1"));
        }
        Ok(())
    }

    /// Small widths used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            raw_img_dim: 4,
            raw_txt_dim: 5,
            backbone_dim: 3,
            hidden_dim: 4,
            embed_dim: 3,
        }
    }
}

/// Weight-decay group of a trainable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayGroup {
    Projection,
    Other,
    None,
}

/// Borrowed view of one trainable tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub group: DecayGroup,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: &'static str,
    pub group: DecayGroup,
    pub data: &'a mut [f64],
}

/// Frozen backbones. Never written after initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBackbones {
    pub vision_map: Matrix,
    pub text_map: Matrix,
}

impl FrozenBackbones {
    /// SHA-256 over the little-endian bytes of every frozen tensor.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in [self.vision_map.as_slice(), self.text_map.as_slice()] {
            for x in t {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Everything the optimizer updates. Also used to carry gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParams {
    pub text_w1: Matrix,
    pub text_b1: Vec<f64>,
    pub text_w2: Matrix,
    pub text_b2: Vec<f64>,
    pub vision_proj: Matrix,
    pub text_proj: Matrix,
    pub log_tau: f64,
}

impl TrainableParams {
    /// Tensors in declaration order.
    pub fn tensors(&self) -> [TensorRef<'_>; 7] {
        [
            TensorRef {
                name: "text_w1",
                group: DecayGroup::Other,
                data: self.text_w1.as_slice(),
            },
            TensorRef {
                name: "text_b1",
                group: DecayGroup::None,
                data: &self.text_b1,
            },
            TensorRef {
                name: "text_w2",
                group: DecayGroup::Other,
                data: self.text_w2.as_slice(),
            },
            TensorRef {
                name: "text_b2",
                group: DecayGroup::None,
                data: &self.text_b2,
            },
            TensorRef {
                name: "vision_proj",
                group: DecayGroup::Projection,
                data: self.vision_proj.as_slice(),
            },
            TensorRef {
                name: "text_proj",
                group: DecayGroup::Projection,
                data: self.text_proj.as_slice(),
            },
            TensorRef {
                name: "log_tau",
                group: DecayGroup::None,
                data: core::slice::from_ref(&self.log_tau),
            },
        ]
    }

    pub fn tensors_mut(&mut self) -> [TensorMut<'_>; 7] {
        [
            TensorMut {
                name: "text_w1",
                group: DecayGroup::Other,
                data: self.text_w1.as_mut_slice(),
            },
            TensorMut {
                name: "text_b1",
                group: DecayGroup::None,
                data: &mut self.text_b1,
            },
            TensorMut {
                name: "text_w2",
                group: DecayGroup::Other,
                data: self.text_w2.as_mut_slice(),
            },
            TensorMut {
                name: "text_b2",
                group: DecayGroup::None,
                data: &mut self.text_b2,
            },
            TensorMut {
                name: "vision_proj",
                group: DecayGroup::Projection,
                data: self.vision_proj.as_mut_slice(),
            },
            TensorMut {
                name: "text_proj",
                group: DecayGroup::Projection,
                data: self.text_proj.as_mut_slice(),
            },
            TensorMut {
                name: "log_tau",
                group: DecayGroup::None,
                data: core::slice::from_mut(&mut self.log_tau),
            },
        ]
    }

    /// All-zero tensors shaped for `dims`.
    pub fn zeros(dims: &Dims) -> Self {
        let h = dims.hidden_dim;
        Self {
            text_w1: Matrix::zeros(h, h),
            text_b1: vec![0.0; h],
            text_w2: Matrix::zeros(h, h),
            text_b2: vec![0.0; h],
            vision_proj: Matrix::zeros(dims.backbone_dim, dims.embed_dim),
            text_proj: Matrix::zeros(h, dims.embed_dim),
            log_tau: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            text_w1: Matrix::zeros(self.text_w1.rows(), self.text_w1.cols()),
            text_b1: vec![0.0; self.text_b1.len()],
            text_w2: Matrix::zeros(self.text_w2.rows(), self.text_w2.cols()),
            text_b2: vec![0.0; self.text_b2.len()],
            vision_proj: Matrix::zeros(self.vision_proj.rows(), self.vision_proj.cols()),
            text_proj: Matrix::zeros(self.text_proj.rows(), self.text_proj.cols()),
            log_tau: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    /// Overwrites all entries from a flat slice in declaration order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.tensors().iter().map(|t| t.data.len()).sum();
        if total != flat.len() {
            return Err(Error::Shape {
                context: "TrainableParams::assign_flat",
                expected: total,
                got: flat.len(),
            });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn logit_scale(&self) -> f64 {
        libm::exp(self.log_tau)
    }

    pub(crate) fn clamp_log_tau(&mut self) {
        self.log_tau = self
            .log_tau
            .clamp(libm::log(MIN_LOGIT_SCALE), libm::log(MAX_LOGIT_SCALE));
    }
}

/// Complete model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub frozen: FrozenBackbones,
    pub trainable: TrainableParams,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let std = 1.0 / libm::sqrt(rows as f64);
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

/// Deterministic initialization: Gaussian weights with std `1/sqrt(fan_in)`,
/// zero biases, logit scale `1/0.07`.
pub fn init_params(seed: u64, dims: &Dims) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vision_map = gaussian(dims.raw_img_dim, dims.backbone_dim, &mut rng);
    let text_map = gaussian(dims.raw_txt_dim, dims.hidden_dim, &mut rng);
    let trainable = TrainableParams {
        text_w1: gaussian(dims.hidden_dim, dims.hidden_dim, &mut rng),
        text_b1: vec![0.0; dims.hidden_dim],
        text_w2: gaussian(dims.hidden_dim, dims.hidden_dim, &mut rng),
        text_b2: vec![0.0; dims.hidden_dim],
        vision_proj: gaussian(dims.backbone_dim, dims.embed_dim, &mut rng),
        text_proj: gaussian(dims.hidden_dim, dims.embed_dim, &mut rng),
        log_tau: libm::log(1.0 / INIT_TEMPERATURE),
    };
    Ok(ModelParams {
        dims: *dims,
        frozen: FrozenBackbones {
            vision_map,
            text_map,
        },
        trainable,
    })
}

/// Which text representation a caller wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureStage {
    /// Text-tower output before the projection head.
    #[default]
    Pooled,
    /// Normalized output of the projection head.
    Projected,
}

/// Text-tower outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    /// Not normalized.
    pub pooled: Matrix,
    /// Unit rows.
    pub projected: Matrix,
}

struct TextTrace {
    h0: Matrix,
    a1: Matrix,
    pooled: Matrix,
    z: Matrix,
    projected: Matrix,
}

struct VisionTrace {
    feat: Matrix,
    z: Matrix,
    projected: Matrix,
}

fn check_cols(context: &'static str, m: &Matrix, expected: usize) -> Result<()> {
    if m.cols() != expected {
        return Err(Error::Shape {
            context,
            expected,
            got: m.cols(),
        });
    }
    Ok(())
}

fn dense_tanh(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut out = x.matmul(w)?;
    for i in 0..out.rows() {
        for (o, bj) in out.row_mut(i).iter_mut().zip(b) {
            *o = libm::tanh(*o + bj);
        }
    }
    Ok(out)
}

impl ModelParams {
    /// Pooled text feature only; the projection head is skipped.
    pub fn pooled_text(&self, raw_txt: &Matrix) -> Result<Matrix> {
        check_cols("forward_text", raw_txt, self.dims.raw_txt_dim)?;
        let t = &self.trainable;
        let h0 = raw_txt.matmul(&self.frozen.text_map)?;
        let a1 = dense_tanh(&h0, &t.text_w1, &t.text_b1)?;
        dense_tanh(&a1, &t.text_w2, &t.text_b2)
    }

    fn text_trace(&self, raw_txt: &Matrix) -> Result<TextTrace> {
        check_cols("forward_text", raw_txt, self.dims.raw_txt_dim)?;
        let t = &self.trainable;
        let h0 = raw_txt.matmul(&self.frozen.text_map)?;
        let a1 = dense_tanh(&h0, &t.text_w1, &t.text_b1)?;
        let pooled = dense_tanh(&a1, &t.text_w2, &t.text_b2)?;
        let z = pooled.matmul(&t.text_proj)?;
        let projected = z.normalize_rows()?;
        Ok(TextTrace {
            h0,
            a1,
            pooled,
            z,
            projected,
        })
    }

    fn vision_trace(&self, raw_img: &Matrix) -> Result<VisionTrace> {
        check_cols("forward_vision", raw_img, self.dims.raw_img_dim)?;
        let feat = raw_img.matmul(&self.frozen.vision_map)?;
        let z = feat.matmul(&self.trainable.vision_proj)?;
        let projected = z.normalize_rows()?;
        Ok(VisionTrace { feat, z, projected })
    }

    pub fn forward_text(&self, raw_txt: &Matrix) -> Result<TextFeatures> {
        let tr = self.text_trace(raw_txt)?;
        Ok(TextFeatures {
            pooled: tr.pooled,
            projected: tr.projected,
        })
    }

    /// Text features at the requested stage (pooled rows are left unnormalized).
    pub fn text_features(&self, raw_txt: &Matrix, stage: FeatureStage) -> Result<Matrix> {
        match stage {
            FeatureStage::Pooled => self.pooled_text(raw_txt),
            FeatureStage::Projected => Ok(self.text_trace(raw_txt)?.projected),
        }
    }

    /// Unit-norm image embeddings.
    pub fn forward_vision(&self, raw_img: &Matrix) -> Result<Matrix> {
        Ok(self.vision_trace(raw_img)?.projected)
    }

    /// Contrastive loss on a batch with gradients for every trainable tensor.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        objective: Objective,
    ) -> Result<(f64, TrainableParams)> {
        if batch.img.rows() != batch.txt.rows() {
            return Err(Error::Shape {
                context: "batch rows",
                expected: batch.img.rows(),
                got: batch.txt.rows(),
            });
        }
        let vis = self.vision_trace(&batch.img)?;
        let txt = self.text_trace(&batch.txt)?;
        let t = &self.trainable;
        let lg = contrastive_loss(objective, &vis.projected, &txt.projected, t.log_tau)?;

        let dz_img = normalize_backward(&vis.z, &vis.projected, &lg.grad_img);
        let dz_txt = normalize_backward(&txt.z, &txt.projected, &lg.grad_txt);

        let vision_proj = vis.feat.matmul_tn(&dz_img)?;
        let text_proj = txt.pooled.matmul_tn(&dz_txt)?;

        let mut d_pre2 = dz_txt.matmul_nt(&t.text_proj)?;
        tanh_backward(&mut d_pre2, &txt.pooled);
        let text_w2 = txt.a1.matmul_tn(&d_pre2)?;
        let text_b2 = column_sums(&d_pre2);

        let mut d_pre1 = d_pre2.matmul_nt(&t.text_w2)?;
        tanh_backward(&mut d_pre1, &txt.a1);
        let text_w1 = txt.h0.matmul_tn(&d_pre1)?;
        let text_b1 = column_sums(&d_pre1);

        let grads = TrainableParams {
            text_w1,
            text_b1,
            text_w2,
            text_b2,
            vision_proj,
            text_proj,
            log_tau: lg.grad_log_tau,
        };
        Ok((lg.loss, grads))
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    ///
    /// The frozen backbones are never touched. A non-finite loss or gradient
    /// leaves the parameters unchanged and reports [`Error::NonFiniteLoss`].
    pub fn backward_and_step(
        &mut self,
        optim: &mut OptimState,
        schedule: &ScheduleConfig,
        batch: &Batch,
        objective: Objective,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(batch, objective)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: optim.step() + 1,
            });
        }
        optim.apply(&mut self.trainable, &grads, schedule);
        if !self.trainable.is_finite() {
            return Err(Error::NonFiniteLoss { step: optim.step() });
        }
        Ok(loss)
    }
}

/// A training batch of raw paired features.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub img: Matrix,
    pub txt: Matrix,
}

/// Jacobian of `y = z/‖z‖` applied row-wise: `dz = (dy - y (y·dy)) / ‖z‖`.
fn normalize_backward(z: &Matrix, y: &Matrix, dy: &Matrix) -> Matrix {
    let mut dz = dy.clone();
    for i in 0..z.rows() {
        let r = crate::linalg::norm(z.row(i));
        let yi = y.row(i);
        let proj = crate::linalg::dot(yi, dy.row(i));
        for (d, yk) in dz.row_mut(i).iter_mut().zip(yi) {
            *d = (*d - yk * proj) / r;
        }
    }
    dz
}

fn tanh_backward(grad: &mut Matrix, out: &Matrix) {
    for (g, y) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
        *g *= 1.0 - y * y;
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in m.iter_rows() {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_rel_error};
    use rand::Rng;

    fn random_batch(dims: &Dims, n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch {
            img: Matrix::from_fn(n, dims.raw_img_dim, |_, _| rng.random_range(-1.0..1.0)),
            txt: Matrix::from_fn(n, dims.raw_txt_dim, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let dims = Dims {
            embed_dim: 8,
            ..Dims::tiny()
        };
        let a = init_params(7, &dims).unwrap();
        let b = init_params(7, &dims).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(8, &dims).unwrap());
        assert_eq!(a.trainable.vision_proj.rows(), dims.backbone_dim);
        assert_eq!(a.trainable.vision_proj.cols(), 8);
        assert!((a.trainable.logit_scale() - 1.0 / 0.07).abs() < 1e-9);
    }

    #[test]
    fn init_rejects_zero_dims() {
        let dims = Dims {
            hidden_dim: 0,
            ..Dims::tiny()
        };
        assert!(matches!(init_params(0, &dims), Err(Error::Config(_))));
    }

    #[test]
    fn init_std_matches_fan_in() {
        let dims = Dims {
            raw_img_dim: 64,
            raw_txt_dim: 8,
            backbone_dim: 200,
            hidden_dim: 8,
            embed_dim: 4,
        };
        let p = init_params(3, &dims).unwrap();
        let xs = p.frozen.vision_map.as_slice();
        assert!(xs.len() >= 10_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let target = 1.0 / 8.0;
        assert!((var.sqrt() - target).abs() < 0.2 * target);
    }

    #[test]
    fn zero_text_row_follows_the_bias_path() {
        let dims = Dims::tiny();
        let mut p = init_params(4, &dims).unwrap();
        p.trainable.text_b1 = vec![0.1, -0.2, 0.3, 0.05];
        p.trainable.text_b2 = vec![-0.3, 0.2, 0.1, 0.4];
        let zero = Matrix::zeros(1, dims.raw_txt_dim);
        let pooled = p.forward_text(&zero).unwrap().pooled;

        // scalar recomputation: layer 1 sees only its bias
        let t = &p.trainable;
        let mut a1 = [0.0; 4];
        for j in 0..4 {
            a1[j] = t.text_b1[j].tanh();
        }
        for j in 0..4 {
            let mut s = t.text_b2[j];
            for k in 0..4 {
                s += a1[k] * t.text_w2.get(k, j);
            }
            assert!((pooled.get(0, j) - s.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_contracts() {
        let dims = Dims::tiny();
        let p = init_params(5, &dims).unwrap();
        let b = random_batch(&dims, 3, 1);
        let mut txt = b.txt.clone();
        let row0 = txt.row(0).to_vec();
        txt.row_mut(2).copy_from_slice(&row0);
        let f = p.forward_text(&txt).unwrap();
        assert_eq!(f.pooled.row(0), f.pooled.row(2));
        for r in f.projected.iter_rows() {
            assert!((crate::linalg::norm(r) - 1.0).abs() < 1e-12);
        }
        let v = p.forward_vision(&b.img).unwrap();
        assert_eq!(v, p.forward_vision(&b.img).unwrap());
        for r in v.iter_rows() {
            assert!((crate::linalg::norm(r) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(p.forward_vision(&b.txt), Err(Error::Shape { .. })));
        assert!(matches!(p.forward_text(&b.img), Err(Error::Shape { .. })));
    }

    fn end_to_end_error(objective: Objective, seed: u64) -> f64 {
        let dims = Dims::tiny();
        let p = init_params(seed, &dims).unwrap();
        let mut p = p;
        // move off the zero-bias point so every bias gradient is exercised
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for b in p
            .trainable
            .text_b1
            .iter_mut()
            .chain(p.trainable.text_b2.iter_mut())
        {
            *b = rng.random_range(-0.3..0.3);
        }
        p.trainable.log_tau = rng.random_range(0.5..2.5);
        let batch = random_batch(&dims, 4, seed + 7);
        let (_, grads) = p.loss_and_grads(&batch, objective).unwrap();
        let x0 = p.trainable.flatten();
        let f = |x: &[f64]| {
            let mut q = p.clone();
            q.trainable.assign_flat(x).unwrap();
            q.loss_and_grads(&batch, objective).unwrap().0
        };
        let numeric = finite_diff_grad(f, &x0, 1e-6).unwrap();
        max_rel_error(&grads.flatten(), &numeric)
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for seed in 0..5 {
            assert!(end_to_end_error(Objective::Img2txt, seed) < 1e-4);
            assert!(end_to_end_error(Objective::Bidirectional, seed) < 1e-4);
        }
    }

    #[test]
    fn zero_lr_changes_nothing_but_the_counter() {
        let dims = Dims::tiny();
        let mut p = init_params(9, &dims).unwrap();
        let before = p.clone();
        let mut opt = OptimState::new(&p.trainable);
        let s = ScheduleConfig {
            base_lr: 0.0,
            min_lr: 0.0,
            total_steps: 10,
            ..Default::default()
        };
        let batch = random_batch(&dims, 4, 2);
        let loss = p
            .backward_and_step(&mut opt, &s, &batch, Objective::Img2txt)
            .unwrap();
        assert!(loss.is_finite());
        assert_eq!(p, before);
        assert_eq!(opt.step(), 1);
    }

    #[test]
    fn training_reduces_loss_and_keeps_backbones_frozen() {
        let dims = Dims {
            backbone_dim: 4,
            embed_dim: 4,
            ..Dims::tiny()
        };
        let mut p = init_params(1, &dims).unwrap();
        let fp = p.frozen.fingerprint();
        // separable toy batch: each pair shares one basis direction
        let batch = Batch {
            img: Matrix::from_fn(4, dims.raw_img_dim, |i, j| if i == j { 1.0 } else { 0.0 }),
            txt: Matrix::from_fn(4, dims.raw_txt_dim, |i, j| if i == j { 1.0 } else { 0.0 }),
        };
        let s = ScheduleConfig {
            base_lr: 1e-2,
            min_lr: 1e-2,
            warmup_fraction: 0.0,
            total_steps: 50,
            ..Default::default()
        };
        let mut opt = OptimState::new(&p.trainable);
        let mut losses = Vec::new();
        for _ in 0..50 {
            losses.push(
                p.backward_and_step(&mut opt, &s, &batch, Objective::Img2txt)
                    .unwrap(),
            );
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
        assert_eq!(p.frozen.fingerprint(), fp);
        assert!(p.trainable.logit_scale() <= MAX_LOGIT_SCALE + 1e-12);
    }

    #[test]
    fn logit_scale_is_clamped() {
        let mut t = init_params(1, &Dims::tiny()).unwrap().trainable;
        t.log_tau = 10.0;
        t.clamp_log_tau();
        assert!((t.logit_scale() - 100.0).abs() < 1e-9);
        t.log_tau = -3.0;
        t.clamp_log_tau();
        assert_eq!(t.logit_scale(), 1.0);
    }
}
