//! Zero-shot classification with prompt-ensembled class embeddings, and
//! coverage statistics of raw text against the metadata.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curation::{best_matches, prompt_ensemble, Metadata};
use crate::error::{config_err, Result};
use crate::linalg::Matrix;
use crate::model::{FeatureStage, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    #[serde(rename = "img")]
    pub raw_img: Vec<f64>,
    pub label: u32,
}

/// Nonempty labelled image set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    items: Vec<EvalItem>,
}

impl EvalSet {
    pub fn new(items: Vec<EvalItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(config_err("eval set must not be empty"));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Labels must name metadata classes.
    pub fn check_labels(&self, metadata: &Metadata) -> Result<()> {
        for it in &self.items {
            if !metadata.class_ids().any(|c| c == it.label) {
                return Err(config_err(alloc::format!(
                    "eval label {} is not a metadata class",
                    it.label
                )));
            }
        }
        Ok(())
    }
}

/// Unit class embeddings in the shared space, with their class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings {
    pub class_ids: Vec<u32>,
    pub emb: Matrix,
}

/// Per class: normalize each prompt's projected embedding, average, renormalize.
pub fn class_embeddings_for_eval(
    params: &ModelParams,
    metadata: &Metadata,
) -> Result<ClassEmbeddings> {
    Ok(ClassEmbeddings {
        class_ids: metadata.class_ids().collect(),
        emb: prompt_ensemble(params, metadata, FeatureStage::Projected)?,
    })
}

/// Index of the largest score; equal scores resolve to the lowest class id.
pub fn argmax_class(scores: &[f64], class_ids: &[u32]) -> u32 {
    let mut best = 0;
    for j in 1..scores.len() {
        if scores[j] > scores[best] || (scores[j] == scores[best] && class_ids[j] < class_ids[best])
        {
            best = j;
        }
    }
    class_ids[best]
}

/// Predicted class for each row of `raw_imgs`.
pub fn predict(
    params: &ModelParams,
    classes: &ClassEmbeddings,
    raw_imgs: &Matrix,
) -> Result<Vec<u32>> {
    let img = params.forward_vision(raw_imgs)?;
    let sims = img.matmul_nt(&classes.emb)?;
    Ok(sims
        .iter_rows()
        .map(|r| argmax_class(r, &classes.class_ids))
        .collect())
}

pub fn classify(params: &ModelParams, classes: &ClassEmbeddings, raw_img: &[f64]) -> Result<u32> {
    let m = Matrix::from_rows(&[raw_img])?;
    Ok(predict(params, classes, &m)?[0])
}

/// Fraction of eval items whose prediction equals the label.
pub fn accuracy(params: &ModelParams, eval: &EvalSet, metadata: &Metadata) -> Result<f64> {
    let classes = class_embeddings_for_eval(params, metadata)?;
    let imgs = Matrix::from_rows(&eval.items.iter().map(|i| &i.raw_img).collect::<Vec<_>>())?;
    let pred = predict(params, &classes, &imgs)?;
    let correct = pred
        .iter()
        .zip(&eval.items)
        .filter(|(p, it)| **p == it.label)
        .count();
    Ok(correct as f64 / eval.len() as f64)
}

/// Best similarity and matching metadata row for every raw text.
pub fn score_texts(
    params: &ModelParams,
    metadata: &Metadata,
    raw_txt: &Matrix,
    stage: FeatureStage,
) -> Result<Vec<(f64, usize)>> {
    let meta = prompt_ensemble(params, metadata, stage)?;
    let feats = params.text_features(raw_txt, stage)?;
    best_matches(&feats, &meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCoverage {
    pub class_id: u32,
    pub name: String,
    /// Texts whose best match is this class.
    pub count: usize,
    /// Of those, how many clear the threshold.
    pub kept: usize,
}

impl ClassCoverage {
    pub fn keep_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.kept as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub per_class: Vec<ClassCoverage>,
    pub total: usize,
    /// Kept texts averaged over classes.
    pub pairs_per_class: f64,
    /// Fraction of all texts above the threshold.
    pub keep_rate: f64,
}

/// Assigns each scored text to its best-matching class and counts how many
/// clear `threshold`. `scored` pairs come from [`score_texts`].
pub fn coverage_stats(
    scored: &[(f64, usize)],
    metadata: &Metadata,
    threshold: f64,
) -> Result<CoverageStats> {
    if scored.is_empty() {
        return Err(config_err("coverage needs at least one scored text"));
    }
    let mut per_class: Vec<ClassCoverage> = metadata
        .entries
        .iter()
        .map(|e| ClassCoverage {
            class_id: e.class_id,
            name: e.name.clone(),
            count: 0,
            kept: 0,
        })
        .collect();
    let mut kept = 0;
    for &(v, j) in scored {
        let c = per_class
            .get_mut(j)
            .ok_or_else(|| config_err(alloc::format!("metadata row {j} out of range")))?;
        c.count += 1;
        if v > threshold {
            c.kept += 1;
            kept += 1;
        }
    }
    Ok(CoverageStats {
        pairs_per_class: kept as f64 / per_class.len() as f64,
        keep_rate: kept as f64 / scored.len() as f64,
        total: scored.len(),
        per_class,
    })
}

/// Per-class counts of a hidden-label assignment, for checking coverage.
pub fn label_histogram(labels: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for l in labels {
        h[l] += 1;
    }
    h
}
