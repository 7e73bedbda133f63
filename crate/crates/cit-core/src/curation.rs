//! Metadata-driven selection of training pairs from a raw stream.
//!
//! Every candidate text is embedded with the current text tower and scored
//! by its best cosine similarity to any metadata entry. A raw batch keeps
//! the candidates above the threshold when enough of them pass; otherwise
//! it keeps a minimal fraction of best-scoring candidates.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{RecordSource, TrainPair};
use crate::error::{config_err, Error, Result};
use crate::linalg::{cosine_sim_matrix, Matrix};
use crate::model::{FeatureStage, ModelParams};

/// One class of the target task and its prompt vectors in raw text space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEntry {
    #[serde(rename = "id")]
    pub class_id: u32,
    pub name: String,
    pub prompts: Vec<Vec<f64>>,
}

/// Task metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(rename = "classes")]
    pub entries: Vec<MetaEntry>,
}

impl Metadata {
    pub fn validate(&self, raw_txt_dim: usize) -> Result<()> {
        if self.entries.is_empty() {
            return Err(config_err("metadata needs at least one entry"));
        }
        for e in &self.entries {
            if e.prompts.is_empty() {
                return Err(config_err(alloc::format!(
                    "class {} has no prompts",
                    e.class_id
                )));
            }
            for p in &e.prompts {
                if p.len() != raw_txt_dim {
                    return Err(Error::Shape {
                        context: "metadata prompt",
                        expected: raw_txt_dim,
                        got: p.len(),
                    });
                }
            }
        }
        let ids: BTreeSet<u32> = self.entries.iter().map(|e| e.class_id).collect();
        if ids.len() != self.entries.len() {
            return Err(config_err("metadata class ids must be unique"));
        }
        Ok(())
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.class_id)
    }
}

/// Selection knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    /// Candidates need a best similarity strictly above this.
    pub threshold: f64,
    /// Minimal fraction of a raw batch to keep.
    pub min_ratio: f64,
    /// Pairs to collect per curation round.
    pub expected_pairs: usize,
    /// Candidates pulled per raw batch.
    pub raw_batch: usize,
    pub feature_stage: FeatureStage,
    pub max_raw_batches: usize,
    /// Skip ids already selected in an earlier round.
    pub dedup: bool,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.55,
            min_ratio: 0.01,
            expected_pairs: 6400,
            raw_batch: 512,
            feature_stage: FeatureStage::Pooled,
            max_raw_batches: 100_000,
            dedup: false,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > -1.0 && self.threshold < 1.0) {
            return Err(config_err("threshold must lie in (-1, 1)"));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return Err(config_err("min_ratio must lie in (0, 1]"));
        }
        if self.expected_pairs == 0 || self.raw_batch == 0 || self.max_raw_batches == 0 {
            return Err(config_err(
                "expected_pairs, raw_batch and max_raw_batches must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Result of applying the selection rule to one raw batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyDecision {
    /// Selected positions, ascending.
    pub selected: Vec<usize>,
    /// Candidates strictly above the threshold.
    pub passed: usize,
    /// Whether the top-k branch was taken.
    pub fallback: bool,
}

/// Size of the fallback set, `ceil(gamma * n)` clamped to `[1, n]`.
///
/// Products within 1e-9 of an integer round down so that, e.g., `0.05 * 20`
/// yields 1 despite `0.05` being stored slightly above one twentieth.
pub fn fallback_size(n: usize, gamma: f64) -> usize {
    let k = libm::ceil(gamma * n as f64 - 1e-9) as usize;
    k.clamp(1, n.max(1))
}

/// Threshold set if its ratio exceeds `gamma`, else the top `ceil(gamma·n)`
/// candidates (ties to the lower index).
pub fn data_proxy(v_max: &[f64], threshold: f64, gamma: f64) -> ProxyDecision {
    let n = v_max.len();
    let above: Vec<usize> = (0..n).filter(|&i| v_max[i] > threshold).collect();
    let passed = above.len();
    if n > 0 && passed as f64 / n as f64 > gamma {
        return ProxyDecision {
            selected: above,
            passed,
            fallback: false,
        };
    }
    let k = fallback_size(n, gamma).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v_max[b].total_cmp(&v_max[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();
    ProxyDecision {
        selected,
        passed,
        fallback: true,
    }
}

/// Per-entry prompt ensemble: embed every prompt at `stage`, normalize,
/// average within the entry, renormalize. One row per entry.
pub fn prompt_ensemble(
    params: &ModelParams,
    metadata: &Metadata,
    stage: FeatureStage,
) -> Result<Matrix> {
    metadata.validate(params.dims.raw_txt_dim)?;
    let all: Vec<&Vec<f64>> = metadata
        .entries
        .iter()
        .flat_map(|e| e.prompts.iter())
        .collect();
    let raw = Matrix::from_rows(&all)?;
    let feats = params.text_features(&raw, stage)?.normalize_rows()?;
    let width = feats.cols();
    let mut out = Matrix::zeros(metadata.entries.len(), width);
    let mut r = 0;
    for (i, e) in metadata.entries.iter().enumerate() {
        let row = out.row_mut(i);
        for _ in &e.prompts {
            for (o, x) in row.iter_mut().zip(feats.row(r)) {
                *o += x;
            }
            r += 1;
        }
        let k = e.prompts.len() as f64;
        row.iter_mut().for_each(|x| *x /= k);
    }
    out.normalize_rows()
}

/// Metadata embeddings used for scoring, from the current weights.
pub fn embed_metadata_for_curation(
    params: &ModelParams,
    metadata: &Metadata,
    stage: FeatureStage,
) -> Result<Matrix> {
    prompt_ensemble(params, metadata, stage)
}

/// Best cosine similarity and its metadata row, for every text row.
/// Ties go to the lower row.
pub fn best_matches(txt_emb: &Matrix, meta_emb: &Matrix) -> Result<Vec<(f64, usize)>> {
    let sim = cosine_sim_matrix(txt_emb, meta_emb)?;
    Ok(sim
        .iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((f64::NEG_INFINITY, 0), |best, (j, &s)| {
                    if s > best.0 {
                        (s, j)
                    } else {
                        best
                    }
                })
        })
        .collect())
}

/// `v_max[i] = max_j cos(txt_i, meta_j)`.
pub fn max_meta_similarity(txt_emb: &Matrix, meta_emb: &Matrix) -> Result<Vec<f64>> {
    Ok(best_matches(txt_emb, meta_emb)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

/// What one curation round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationOutcome {
    /// Selected pairs in pull order.
    pub curated: Vec<TrainPair>,
    /// Per raw batch, fraction of candidates above the threshold.
    pub batch_ratios: Vec<f64>,
    pub fallback_count: usize,
    pub raw_seen: usize,
    /// Candidates above the threshold, over all raw batches.
    pub passed: usize,
}

impl CurationOutcome {
    /// Fraction of all candidates seen that passed the threshold.
    pub fn ratio(&self) -> f64 {
        if self.raw_seen == 0 {
            0.0
        } else {
            self.passed as f64 / self.raw_seen as f64
        }
    }

    pub fn ids(&self) -> Vec<u64> {
        self.curated.iter().map(|p| p.id).collect()
    }
}

/// Curation with state carried across rounds (the dedup memory).
#[derive(Debug, Clone)]
pub struct Curator {
    config: CurationConfig,
    seen: BTreeSet<u64>,
}

impl Curator {
    pub fn new(config: CurationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            seen: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &CurationConfig {
        &self.config
    }

    /// Collects at least `target` pairs from `source`.
    pub fn curate_n(
        &mut self,
        params: &ModelParams,
        source: &mut dyn RecordSource,
        metadata: &Metadata,
        target: usize,
    ) -> Result<CurationOutcome> {
        let cfg = &self.config;
        let meta_emb = embed_metadata_for_curation(params, metadata, cfg.feature_stage)?;
        let mut out = CurationOutcome {
            curated: Vec::with_capacity(target + cfg.raw_batch),
            batch_ratios: Vec::new(),
            fallback_count: 0,
            raw_seen: 0,
            passed: 0,
        };
        let mut batches = 0;
        while out.curated.len() < target {
            if batches >= cfg.max_raw_batches {
                return Err(Error::CurationStarvation { batches });
            }
            batches += 1;
            let views = source.next_text_batch(cfg.raw_batch)?;
            if views.is_empty() {
                return Err(Error::EmptySource);
            }
            let raw = Matrix::from_rows(&views.iter().map(|v| &v.raw_txt).collect::<Vec<_>>())?;
            let feats = params.text_features(&raw, cfg.feature_stage)?;
            let v_max = max_meta_similarity(&feats, &meta_emb)?;
            let decision = data_proxy(&v_max, cfg.threshold, cfg.min_ratio);

            out.raw_seen += views.len();
            out.passed += decision.passed;
            out.batch_ratios
                .push(decision.passed as f64 / views.len() as f64);
            if decision.fallback {
                out.fallback_count += 1;
            }
            let mut ids: Vec<u64> = decision.selected.iter().map(|&i| views[i].id).collect();
            if cfg.dedup {
                ids.retain(|id| self.seen.insert(*id));
            }
            out.curated.extend(source.fetch(&ids)?);
        }
        Ok(out)
    }
}

/// One curation round of `config.expected_pairs` pairs without dedup memory.
pub fn curate(
    params: &ModelParams,
    source: &mut dyn RecordSource,
    metadata: &Metadata,
    config: &CurationConfig,
) -> Result<CurationOutcome> {
    Curator::new(config.clone())?.curate_n(params, source, metadata, config.expected_pairs)
}
