//! Dataset labeling: oracle scores for every frame, a frozen τ, and the
//! `labels.jsonl` / `labels.meta.json` pair.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TauPolicy;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{check_tau, label, oracle_score, percentile_tau, LabeledSample};

pub const LABELS_FILE: &str = "labels.jsonl";
pub const META_FILE: &str = "labels.meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsMeta {
    pub tau: f64,
    pub tau_policy: TauPolicy,
    pub n_samples: usize,
    pub n_high: usize,
    pub n_low: usize,
    /// In-domain train frames the percentile was taken over.
    pub n_train: usize,
    pub train_low_fraction: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub meta: LabelsMeta,
    pub samples: BTreeMap<String, LabeledSample>,
}

impl LabelSet {
    pub fn get(&self, frame_id: &str) -> Result<&LabeledSample> {
        self.samples
            .get(frame_id)
            .ok_or_else(|| Error::Data(format!("no label for frame {frame_id}")))
    }

    pub fn tau(&self) -> f64 {
        self.meta.tau
    }
}

/// Oracle score of every manifest frame, in manifest order. A missing
/// reference is a hard error naming its graphic.
pub fn score_dataset(ds: &Dataset) -> Result<Vec<(String, f64)>> {
    let mut refs = BTreeMap::new();
    for e in &ds.manifest.entries {
        if !refs.contains_key(&e.graphic_id) {
            refs.insert(e.graphic_id.clone(), ds.load_reference(&e.graphic_id)?);
        }
    }
    ds.manifest
        .entries
        .par_iter()
        .map(|e| {
            let img = ds.load_image(e)?;
            Ok((e.frame_id.clone(), oracle_score(&img, &refs[&e.graphic_id])?))
        })
        .collect()
}

/// Resolves τ under a policy given the in-domain train scores.
pub fn resolve_tau(policy: TauPolicy, train_scores: &[f64]) -> Result<f64> {
    let tau = match policy {
        TauPolicy::Fixed { tau } => tau,
        TauPolicy::TrainPercentile { percentile } => percentile_tau(train_scores, percentile)?,
    };
    check_tau(tau).map_err(|_| {
        Error::Numeric(format!(
            "tau policy {policy:?} produced {tau}, outside (0, 1); the train scores are degenerate"
        ))
    })?;
    Ok(tau)
}

pub fn label_dataset(ds: &Dataset, policy: TauPolicy) -> Result<LabelSet> {
    let scores = score_dataset(ds)?;
    let primary = ds.primary_domain();
    let train: BTreeMap<&str, ()> = ds
        .entries(primary, Split::Train)
        .into_iter()
        .map(|e| (e.frame_id.as_str(), ()))
        .collect();
    let train_scores: Vec<f64> = scores
        .iter()
        .filter(|(id, _)| train.contains_key(id.as_str()))
        .map(|&(_, s)| s)
        .collect();
    let tau = resolve_tau(policy, &train_scores)?;
    let samples: BTreeMap<String, LabeledSample> =
        scores.iter().map(|(id, s)| (id.clone(), label(id, *s, tau))).collect();
    let n_low = samples.values().filter(|l| l.label.is_low()).count();
    let train_low = train_scores.iter().filter(|&&s| s < tau).count();
    let meta = LabelsMeta {
        tau,
        tau_policy: policy,
        n_samples: samples.len(),
        n_high: samples.len() - n_low,
        n_low,
        n_train: train_scores.len(),
        train_low_fraction: if train_scores.is_empty() {
            0.0
        } else {
            train_low as f64 / train_scores.len() as f64
        },
        config_hash: ds.config_hash().to_string(),
    };
    Ok(LabelSet { meta, samples })
}

/// Writes labels in manifest order.
pub fn write_labels(dir: &Path, ds: &Dataset, labels: &LabelSet) -> Result<()> {
    let ordered: Vec<&LabeledSample> = ds
        .manifest
        .entries
        .iter()
        .filter_map(|e| labels.samples.get(&e.frame_id))
        .collect();
    io::write_jsonl(&dir.join(LABELS_FILE), &ordered)?;
    io::write_json(&dir.join(META_FILE), &labels.meta)
}

pub fn read_labels(dir: &Path) -> Result<LabelSet> {
    let meta_path = dir.join(META_FILE);
    for path in [dir.join(LABELS_FILE), meta_path.clone()] {
        if !path.exists() {
            return Err(Error::Data(format!(
                "dataset is not labeled: missing labels file {}",
                path.display()
            )));
        }
    }
    let meta: LabelsMeta = io::read_json(&meta_path)?;
    let rows: Vec<LabeledSample> = io::read_jsonl(&dir.join(LABELS_FILE))?;
    for r in &rows {
        if r.label != crate::oracle::QualityLabel::from_score(r.s, meta.tau) {
            return Err(Error::Data(format!("label of {} disagrees with tau {}", r.frame_id, meta.tau)));
        }
    }
    Ok(LabelSet {
        meta,
        samples: rows.into_iter().map(|r| (r.frame_id.clone(), r)).collect(),
    })
}
