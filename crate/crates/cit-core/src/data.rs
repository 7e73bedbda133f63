//! Planted-concept synthetic corpus and the record-source abstraction.
//!
//! Each concept `c` has an image direction `u_c` and a text direction `v_c`.
//! A stream record is one of:
//! - clean: `(u_c + ε, v_c + ε')` for a uniformly drawn concept,
//! - distractor: unrelated random image and text directions,
//! - foreign: random image, text drawn orthogonally to every `v_c`.
//!
//! Records are a pure function of `(spec, id)`, so any record can be
//! regenerated from its id.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curation::{MetaEntry, Metadata};
use crate::error::{config_err, Error, Result};
use crate::eval::{EvalItem, EvalSet};
use crate::linalg::{dot, norm};

/// Hidden label of distractor records.
pub const DISTRACTOR_LABEL: i64 = -1;
/// Hidden label of foreign-subspace records.
pub const FOREIGN_LABEL: i64 = -2;

const MAX_REJECTION_TRIES: usize = 10_000;
const MAX_PAIRWISE_COSINE: f64 = 0.5;

/// One raw image-text sample. `diag_label` is ground truth for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: u64,
    #[serde(rename = "img")]
    pub raw_img: Vec<f64>,
    #[serde(rename = "txt")]
    pub raw_txt: Vec<f64>,
    #[serde(rename = "label", default)]
    pub diag_label: Option<i64>,
}

/// A record without its diagnostic label: what training consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub id: u64,
    pub raw_img: Vec<f64>,
    pub raw_txt: Vec<f64>,
}

/// Text-only view of a record: what curation consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TextView {
    pub id: u64,
    pub raw_txt: Vec<f64>,
}

impl PairRecord {
    pub fn strip(self) -> TrainPair {
        TrainPair {
            id: self.id,
            raw_img: self.raw_img,
            raw_txt: self.raw_txt,
        }
    }

    pub fn text_view(&self) -> TextView {
        TextView {
            id: self.id,
            raw_txt: self.raw_txt.clone(),
        }
    }
}

/// A stream of raw pairs. Curation pulls text views and re-fetches the
/// selected pairs by id; the unfiltered baseline pulls pairs directly.
pub trait RecordSource {
    fn next_text_batch(&mut self, n: usize) -> Result<Vec<TextView>>;

    /// Full pairs for ids previously returned by this source, in the given order.
    fn fetch(&mut self, ids: &[u64]) -> Result<Vec<TrainPair>>;

    fn next_pair_batch(&mut self, n: usize) -> Result<Vec<TrainPair>>;

    /// Times a finite backing store has wrapped around.
    fn exhaustion_count(&self) -> u64 {
        0
    }
}

/// Knobs for [`SyntheticCorpusSpec::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    pub n_concepts: usize,
    pub raw_img_dim: usize,
    pub raw_txt_dim: usize,
    /// `(clean, distractor, foreign)`; must sum to one.
    pub fractions: (f64, f64, f64),
    /// Per-coordinate standard deviation of the additive noise.
    pub noise_sigma: f64,
    pub prompts_per_concept: usize,
    /// Norm of the random offset separating each metadata prompt from `v_c`.
    pub prompt_offset_norm: f64,
    /// Multiplier on distractor text vectors.
    pub distractor_text_scale: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            n_concepts: 8,
            raw_img_dim: 32,
            raw_txt_dim: 32,
            fractions: (0.25, 0.55, 0.20),
            noise_sigma: 0.1,
            prompts_per_concept: 2,
            prompt_offset_norm: 0.3,
            distractor_text_scale: 1.0,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 || libm::fabs(a + b + c - 1.0) > 1e-12 {
            return Err(config_err(
                "corpus fractions must be nonnegative and sum to 1",
            ));
        }
        if self.n_concepts < 2 {
            return Err(config_err("need at least 2 concepts"));
        }
        if self.raw_img_dim == 0 || self.raw_txt_dim == 0 {
            return Err(config_err("raw dimensions must be >= 1"));
        }
        if c > 0.0 && self.raw_txt_dim <= self.n_concepts {
            return Err(config_err(
                "foreign texts need raw_txt_dim > n_concepts for an orthogonal subspace",
            ));
        }
        if self.noise_sigma.is_nan()
            || self.noise_sigma < 0.0
            || self.prompt_offset_norm.is_nan()
            || self.prompt_offset_norm < 0.0
        {
            return Err(config_err("noise and offsets must be nonnegative"));
        }
        if self.prompts_per_concept == 0 {
            return Err(config_err("need at least one prompt per concept"));
        }
        if !(self.distractor_text_scale > 0.0 && self.distractor_text_scale.is_finite()) {
            return Err(config_err("distractor_text_scale must be positive"));
        }
        Ok(())
    }
}

/// Ground truth of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub params: CorpusParams,
    /// `u_c`, unit vectors in image space.
    pub concept_img: Vec<Vec<f64>>,
    /// `v_c`, unit vectors in text space.
    pub concept_txt: Vec<Vec<f64>>,
    /// Per concept, one offset per metadata prompt.
    pub prompt_offsets: Vec<Vec<Vec<f64>>>,
    pub stream_seed: u64,
}

fn gaussian_vec(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v = gaussian_vec(d, rng);
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn spread_directions(k: usize, d: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut tries = 0;
    while out.len() < k {
        tries += 1;
        if tries > MAX_REJECTION_TRIES {
            return Err(config_err(alloc::format!(
                "could not place {k} directions with pairwise |cos| < {MAX_PAIRWISE_COSINE} in {d} dims"
            )));
        }
        let v = random_unit(d, rng);
        if out
            .iter()
            .all(|u| libm::fabs(dot(u, &v)) < MAX_PAIRWISE_COSINE)
        {
            out.push(v);
        }
    }
    Ok(out)
}

impl SyntheticCorpusSpec {
    /// Draws concept directions and prompt offsets from `spec_seed`.
    pub fn generate(params: &CorpusParams, spec_seed: u64, stream_seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec_seed);
        let concept_img = spread_directions(params.n_concepts, params.raw_img_dim, &mut rng)?;
        let concept_txt = spread_directions(params.n_concepts, params.raw_txt_dim, &mut rng)?;
        let prompt_offsets = (0..params.n_concepts)
            .map(|_| {
                (0..params.prompts_per_concept)
                    .map(|_| {
                        random_unit(params.raw_txt_dim, &mut rng)
                            .into_iter()
                            .map(|x| x * params.prompt_offset_norm)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            concept_img,
            concept_txt,
            prompt_offsets,
            stream_seed,
        })
    }

    pub fn n_concepts(&self) -> usize {
        self.concept_img.len()
    }

    /// Checks internal consistency of a deserialized spec.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let k = self.params.n_concepts;
        let ok = self.concept_img.len() == k
            && self.concept_txt.len() == k
            && self.prompt_offsets.len() == k
            && self
                .concept_img
                .iter()
                .all(|v| v.len() == self.params.raw_img_dim)
            && self
                .concept_txt
                .iter()
                .all(|v| v.len() == self.params.raw_txt_dim)
            && self
                .prompt_offsets
                .iter()
                .flatten()
                .all(|v| v.len() == self.params.raw_txt_dim);
        if !ok {
            return Err(config_err("corpus spec dimensions are inconsistent"));
        }
        Ok(())
    }

    /// Metadata with one entry per concept; prompts are `v_c + offset`.
    pub fn metadata(&self) -> Metadata {
        let entries = self
            .concept_txt
            .iter()
            .zip(&self.prompt_offsets)
            .enumerate()
            .map(|(c, (v, offsets))| MetaEntry {
                class_id: c as u32,
                name: concept_name(c),
                prompts: offsets
                    .iter()
                    .map(|o| v.iter().zip(o).map(|(a, b)| a + b).collect())
                    .collect(),
            })
            .collect();
        Metadata { entries }
    }

    /// Balanced held-out images `u_c + ε`, labelled by concept.
    pub fn eval_set(&self, n: usize, seed: u64) -> Result<EvalSet> {
        if n == 0 {
            return Err(config_err("eval set size must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.n_concepts();
        let sigma = self.params.noise_sigma;
        let items = (0..n)
            .map(|i| {
                let c = i % k;
                EvalItem {
                    raw_img: add_noise(&self.concept_img[c], sigma, &mut rng),
                    label: c as u32,
                }
            })
            .collect();
        EvalSet::new(items)
    }
}

pub fn concept_name(c: usize) -> String {
    alloc::format!("concept_{c}")
}

fn add_noise(v: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    v.iter()
        .map(|x| {
            if sigma == 0.0 {
                *x
            } else {
                let z: f64 = StandardNormal.sample(rng);
                x + sigma * z
            }
        })
        .collect()
}

/// Record generator with the orthonormal basis of `span{v_c}` precomputed.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: SyntheticCorpusSpec,
    text_basis: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(spec: SyntheticCorpusSpec) -> Result<Self> {
        spec.validate()?;
        let mut text_basis: Vec<Vec<f64>> = Vec::new();
        for v in &spec.concept_txt {
            let mut w = v.clone();
            for b in &text_basis {
                let p = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&w);
            if n > 1e-10 {
                text_basis.push(w.into_iter().map(|x| x / n).collect());
            }
        }
        Ok(Self { spec, text_basis })
    }

    pub fn spec(&self) -> &SyntheticCorpusSpec {
        &self.spec
    }

    /// The record with the given id; pure in `(spec, id)`.
    pub fn record(&self, id: u64) -> PairRecord {
        let p = &self.spec.params;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.stream_seed);
        rng.set_stream(id);
        let (clean, distractor, _) = p.fractions;
        let u: f64 = rng.random();
        let (raw_img, raw_txt, label) = if u < clean {
            let c = rng.random_range(0..self.spec.n_concepts());
            (
                add_noise(&self.spec.concept_img[c], p.noise_sigma, &mut rng),
                add_noise(&self.spec.concept_txt[c], p.noise_sigma, &mut rng),
                c as i64,
            )
        } else if u < clean + distractor {
            let img = random_unit(p.raw_img_dim, &mut rng);
            let txt: Vec<f64> = random_unit(p.raw_txt_dim, &mut rng)
                .into_iter()
                .map(|x| x * p.distractor_text_scale)
                .collect();
            (
                add_noise(&img, p.noise_sigma, &mut rng),
                add_noise(&txt, p.noise_sigma, &mut rng),
                DISTRACTOR_LABEL,
            )
        } else {
            let img = random_unit(p.raw_img_dim, &mut rng);
            let txt = self.foreign_direction(&mut rng);
            (
                add_noise(&img, p.noise_sigma, &mut rng),
                add_noise(&txt, p.noise_sigma, &mut rng),
                FOREIGN_LABEL,
            )
        };
        PairRecord {
            id,
            raw_img,
            raw_txt,
            diag_label: Some(label),
        }
    }

    fn foreign_direction(&self, rng: &mut impl Rng) -> Vec<f64> {
        loop {
            let mut w = gaussian_vec(self.spec.params.raw_txt_dim, rng);
            for b in &self.text_basis {
                let p = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&w);
            if n > 1e-6 {
                return w.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

/// Unbounded synthetic stream; ids are consecutive from zero.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    generator: Generator,
    cursor: u64,
}

impl SyntheticStream {
    pub fn new(spec: SyntheticCorpusSpec) -> Result<Self> {
        Ok(Self {
            generator: Generator::new(spec)?,
            cursor: 0,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Next `n` labelled records.
    pub fn next_raw_batch(&mut self, n: usize) -> Result<Vec<PairRecord>> {
        if n == 0 {
            return Err(config_err("raw batch size must be >= 1"));
        }
        let start = self.cursor;
        self.cursor += n as u64;
        Ok((start..self.cursor)
            .map(|id| self.generator.record(id))
            .collect())
    }
}

impl RecordSource for SyntheticStream {
    fn next_text_batch(&mut self, n: usize) -> Result<Vec<TextView>> {
        Ok(self
            .next_raw_batch(n)?
            .into_iter()
            .map(|r| TextView {
                id: r.id,
                raw_txt: r.raw_txt,
            })
            .collect())
    }

    fn fetch(&mut self, ids: &[u64]) -> Result<Vec<TrainPair>> {
        ids.iter()
            .map(|&id| {
                if id >= self.cursor {
                    return Err(Error::Source(alloc::format!(
                        "id {id} has not been streamed yet"
                    )));
                }
                Ok(self.generator.record(id).strip())
            })
            .collect()
    }

    fn next_pair_batch(&mut self, n: usize) -> Result<Vec<TrainPair>> {
        Ok(self
            .next_raw_batch(n)?
            .into_iter()
            .map(PairRecord::strip)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(fractions: (f64, f64, f64), sigma: f64) -> CorpusParams {
        CorpusParams {
            fractions,
            noise_sigma: sigma,
            ..Default::default()
        }
    }

    #[test]
    fn concept_directions_are_spread_and_deterministic() {
        let p = CorpusParams {
            n_concepts: 4,
            ..Default::default()
        };
        let s = SyntheticCorpusSpec::generate(&p, 3, 0).unwrap();
        for dirs in [&s.concept_img, &s.concept_txt] {
            for (i, a) in dirs.iter().enumerate() {
                assert!((norm(a) - 1.0).abs() < 1e-12);
                for b in &dirs[i + 1..] {
                    assert!(dot(a, b).abs() < 0.5);
                }
            }
        }
        assert_eq!(s, SyntheticCorpusSpec::generate(&p, 3, 0).unwrap());
    }

    #[test]
    fn fraction_sum_rule() {
        assert!(params((0.2, 0.5, 0.3), 0.1).validate().is_ok());
        assert!(matches!(
            SyntheticCorpusSpec::generate(&params((0.2, 0.5, 0.4), 0.1), 0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejection_sampling_gives_up_when_crowded() {
        let p = CorpusParams {
            n_concepts: 20,
            raw_img_dim: 2,
            raw_txt_dim: 32,
            fractions: (1.0, 0.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(
            SyntheticCorpusSpec::generate(&p, 0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_noise_clean_records_are_exact() {
        let spec = SyntheticCorpusSpec::generate(&params((1.0, 0.0, 0.0), 0.0), 1, 2).unwrap();
        let mut s = SyntheticStream::new(spec.clone()).unwrap();
        for r in s.next_raw_batch(50).unwrap() {
            let c = r.diag_label.unwrap() as usize;
            assert_eq!(r.raw_txt, spec.concept_txt[c]);
            assert_eq!(r.raw_img, spec.concept_img[c]);
        }
    }

    #[test]
    fn empirical_fractions_match() {
        let spec = SyntheticCorpusSpec::generate(&params((0.3, 0.5, 0.2), 0.1), 1, 9).unwrap();
        let mut s = SyntheticStream::new(spec).unwrap();
        let recs = s.next_raw_batch(10_000).unwrap();
        let count = |f: &dyn Fn(i64) -> bool| {
            recs.iter().filter(|r| f(r.diag_label.unwrap())).count() as f64 / 1e4
        };
        assert!((count(&|l| l >= 0) - 0.3).abs() < 0.02);
        assert!((count(&|l| l == DISTRACTOR_LABEL) - 0.5).abs() < 0.02);
        assert!((count(&|l| l == FOREIGN_LABEL) - 0.2).abs() < 0.02);
    }

    #[test]
    fn streams_are_deterministic() {
        let spec = SyntheticCorpusSpec::generate(&CorpusParams::default(), 1, 4).unwrap();
        let mut a = SyntheticStream::new(spec.clone()).unwrap();
        let mut b = SyntheticStream::new(spec).unwrap();
        let ra = a.next_raw_batch(20).unwrap();
        assert_eq!(ra, b.next_raw_batch(20).unwrap());
        assert_eq!(
            ra.iter().map(|r| r.id).collect::<Vec<_>>(),
            (0..20).collect::<Vec<_>>()
        );
        // fetch regenerates the same pair
        let fetched = a.fetch(&[3, 7]).unwrap();
        assert_eq!(fetched[0], ra[3].clone().strip());
        assert_eq!(fetched[1], ra[7].clone().strip());
        assert!(a.fetch(&[1000]).is_err());
    }

    #[test]
    fn foreign_texts_avoid_concept_span() {
        let spec = SyntheticCorpusSpec::generate(&params((0.0, 0.0, 1.0), 0.0), 5, 5).unwrap();
        let mut s = SyntheticStream::new(spec.clone()).unwrap();
        for r in s.next_raw_batch(200).unwrap() {
            assert_eq!(r.diag_label, Some(FOREIGN_LABEL));
            for v in &spec.concept_txt {
                assert!(dot(&r.raw_txt, v).abs() / norm(&r.raw_txt) < 0.05);
            }
        }
    }

    #[test]
    fn distractor_scale_applies_to_text_only() {
        let mut p = params((0.0, 1.0, 0.0), 0.0);
        p.distractor_text_scale = 1e3;
        let spec = SyntheticCorpusSpec::generate(&p, 5, 5).unwrap();
        let r = SyntheticStream::new(spec)
            .unwrap()
            .next_raw_batch(1)
            .unwrap()
            .remove(0);
        assert!((norm(&r.raw_txt) - 1e3).abs() < 1e-9);
        assert!((norm(&r.raw_img) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metadata_and_eval_follow_the_spec() {
        let spec = SyntheticCorpusSpec::generate(&CorpusParams::default(), 2, 2).unwrap();
        let m = spec.metadata();
        assert_eq!(m.entries.len(), 8);
        assert!(m.entries.iter().all(|e| e.prompts.len() == 2));
        let e = spec.eval_set(800, 1).unwrap();
        assert_eq!(e.items().len(), 800);
        for c in 0..8 {
            assert_eq!(e.items().iter().filter(|i| i.label == c).count(), 100);
        }
        assert!(spec.eval_set(0, 1).is_err());
    }
}
