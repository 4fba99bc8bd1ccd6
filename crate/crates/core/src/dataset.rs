//! Synthetic corpus on disk: references, captured frames, and the manifest.
//!
//! Layout under the dataset directory:
//! `config.json`, `manifest.jsonl`, `sessions.jsonl`,
//! `references/<graphic_id>.{pgm,json}`, `frames/<frame_id>.pgm`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::{
    generate_session_from_print, print_seed, print_simulate, DegradationParams, DomainId, PrintDomainModel,
    TrajectoryKind,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::graphic::{generate_reference, load_reference, render, save_reference, DigitalReference};
use crate::io;
use crate::raster::{read_pgm, write_pgm};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_id: String,
    pub graphic_id: String,
    pub session_id: String,
    pub domain_id: DomainId,
    pub split: Split,
    /// Relative to the dataset directory.
    pub image_path: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub seed: u64,
    pub params: DegradationParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub graphic_id: String,
    pub domain_id: DomainId,
    pub split: Split,
    pub trajectory_kind: TrajectoryKind,
    /// In temporal order.
    pub frames: Vec<FrameRecord>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub config_hash: String,
}

impl DatasetManifest {
    /// Every graphic's entries share one split.
    pub fn check_split_hygiene(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &self.entries {
            match seen.insert(&e.graphic_id, e.split) {
                Some(prev) if prev != e.split => {
                    return Err(Error::Data(format!(
                        "graphic {} appears in both {prev:?} and {:?}",
                        e.graphic_id, e.split
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn domains(&self) -> BTreeSet<DomainId> {
        self.entries.iter().map(|e| e.domain_id).collect()
    }
}

/// Per-domain graphic-level split: a seeded shuffle cut at the rounded
/// train and val counts; the remainder is test.
pub fn assign_splits(n_graphics: usize, fractions: (f64, f64, f64), root_seed: u64, domain: DomainId) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n_graphics).collect();
    order.shuffle(&mut seed::rng(root_seed, &format!("split/{}", domain.as_str())));
    let n_train = ((fractions.0 * n_graphics as f64).round() as usize).min(n_graphics);
    let n_val = ((fractions.1 * n_graphics as f64).round() as usize).min(n_graphics - n_train);
    let mut splits = vec![Split::Test; n_graphics];
    for (rank, &g) in order.iter().enumerate() {
        splits[g] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

pub fn graphic_id(domain: DomainId, index: usize) -> String {
    format!("{}-g{index:03}", domain.short())
}

struct GraphicPlan {
    domain: DomainId,
    index: usize,
    split: Split,
}

struct GraphicOutput {
    reference: DigitalReference,
    entries: Vec<ManifestEntry>,
    sessions: Vec<SessionRecord>,
}

fn build_graphic(cfg: &PipelineConfig, hash: &str, plan: &GraphicPlan, out_dir: &Path) -> Result<GraphicOutput> {
    let d = &cfg.dataset;
    let gid = graphic_id(plan.domain, plan.index);
    let gseed = seed::derive(d.seed, &format!("graphic/{gid}"));
    let mut reference = generate_reference(gseed, d.grid_cells, d.cell_size_px, d.density)?;
    reference.graphic_id = gid.clone();
    save_reference(&out_dir.join("references"), &reference)?;

    let model = PrintDomainModel::preset(plan.domain);
    let printed = print_simulate(&render(&reference), &model, print_seed(&reference, plan.domain));
    let mut entries = Vec::new();
    let mut sessions = Vec::new();
    for j in 0..d.sessions_per_graphic {
        let session_id = format!("{gid}-s{j}");
        let kind = TrajectoryKind::ALL[(plan.index * d.sessions_per_graphic + j) % TrajectoryKind::ALL.len()];
        let sseed = seed::derive(d.seed, &format!("session/{session_id}"));
        let session = generate_session_from_print(
            &reference,
            &printed,
            plan.domain,
            kind,
            d.frames_per_session,
            sseed,
            session_id.clone(),
        )?;
        let mut frames = Vec::new();
        for f in &session.frames {
            let rel = format!("frames/{}.pgm", f.frame_id);
            write_pgm(&out_dir.join(&rel), &f.image)?;
            entries.push(ManifestEntry {
                frame_id: f.frame_id.clone(),
                graphic_id: gid.clone(),
                session_id: session_id.clone(),
                domain_id: plan.domain,
                split: plan.split,
                image_path: rel,
                config_hash: hash.to_string(),
            });
            frames.push(FrameRecord {
                frame_id: f.frame_id.clone(),
                seed: f.seed,
                params: f.params,
            });
        }
        sessions.push(SessionRecord {
            session_id,
            graphic_id: gid.clone(),
            domain_id: plan.domain,
            split: plan.split,
            trajectory_kind: kind,
            frames,
            config_hash: hash.to_string(),
        });
    }
    Ok(GraphicOutput {
        reference,
        entries,
        sessions,
    })
}

/// Generates the corpus into `out_dir`. Graphics are built in parallel; the
/// written files do not depend on scheduling.
pub fn build_dataset(cfg: &PipelineConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let hash = cfg.config_hash();
    io::ensure_dir(&out_dir.join("references"))?;
    io::ensure_dir(&out_dir.join("frames"))?;
    let mut plans = Vec::new();
    for &domain in &d.domains {
        let splits = assign_splits(d.graphics_per_domain, (d.split.train, d.split.val, d.split.test), d.seed, domain);
        plans.extend(splits.into_iter().enumerate().map(|(index, split)| GraphicPlan { domain, index, split }));
    }
    let outputs = plans
        .par_iter()
        .map(|p| build_graphic(cfg, &hash, p, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<ManifestEntry> = outputs.iter().flat_map(|o| o.entries.iter().cloned()).collect();
    let sessions: Vec<SessionRecord> = outputs.iter().flat_map(|o| o.sessions.iter().cloned()).collect();
    debug_assert!(outputs.iter().all(|o| o.reference.graphic_id.len() > 2));
    io::write_json(&out_dir.join("config.json"), cfg)?;
    io::write_jsonl(&out_dir.join("manifest.jsonl"), &entries)?;
    io::write_jsonl(&out_dir.join("sessions.jsonl"), &sessions)?;
    let manifest = DatasetManifest {
        entries,
        config_hash: hash,
    };
    manifest.check_split_hygiene()?;
    Ok(manifest)
}

/// A generated dataset opened from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub config: PipelineConfig,
    pub manifest: DatasetManifest,
    pub sessions: Vec<SessionRecord>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let config_path = dir.join("config.json");
        let config: PipelineConfig = io::read_json(&config_path)?;
        config.validate()?;
        let entries: Vec<ManifestEntry> = io::read_jsonl(&dir.join("manifest.jsonl"))?;
        let sessions: Vec<SessionRecord> = io::read_jsonl(&dir.join("sessions.jsonl"))?;
        let hash = config.config_hash();
        if let Some(e) = entries.iter().find(|e| e.config_hash != hash) {
            return Err(Error::Data(format!(
                "manifest entry {} carries config_hash {} but config.json hashes to {hash}",
                e.frame_id, e.config_hash
            )));
        }
        let manifest = DatasetManifest {
            entries,
            config_hash: hash,
        };
        manifest.check_split_hygiene()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            manifest,
            sessions,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn entries(&self, domain: DomainId, split: Split) -> Vec<&ManifestEntry> {
        self.manifest
            .entries
            .iter()
            .filter(|e| e.domain_id == domain && e.split == split)
            .collect()
    }

    pub fn load_image(&self, entry: &ManifestEntry) -> Result<GrayImage> {
        read_pgm(&self.dir.join(&entry.image_path))
    }

    pub fn load_reference(&self, graphic_id: &str) -> Result<DigitalReference> {
        load_reference(&self.dir.join("references"), graphic_id)
    }

    pub fn primary_domain(&self) -> DomainId {
        self.config.primary_domain()
    }

    pub fn cross_domain(&self) -> Option<DomainId> {
        self.config.cross_domain()
    }
}
