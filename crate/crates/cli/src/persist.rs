//! File formats: JSONL triplet datasets and record files, JSON manifests
//! and checkpoints, CSV loss trajectories.
//!
//! Triplet rows serialize with a fixed key order (id, iteration, question,
//! image, winner, loser, candidates, prompt), one object per line, UTF-8,
//! line-feed terminated. All writers are deterministic byte-for-byte for
//! identical inputs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shape_core::backend::Policy;
use shape_core::eval::{CaptionRecord, ObjectVocabulary, PopeSplit, YesNoLabel, YesNoRecord};
use shape_core::forge::PreferenceDataset;
use shape_core::manifest::RunManifest;
use shape_core::types::{CandidateAnswer, PreferenceTriplet, Sample, SampleImage};

/// Image reference as persisted: a toy-context id or a file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Toy(u64),
    Path(String),
}

impl ImageRef {
    pub fn from_sample(sample: &Sample) -> Result<ImageRef> {
        match &sample.image {
            SampleImage::ToyContext(id) => Ok(ImageRef::Toy(*id)),
            SampleImage::Path(path) => Ok(ImageRef::Path(path.clone())),
            SampleImage::Tensor(_) => {
                bail!("sample {} holds inline pixels; datasets persist paths or toy ids", sample.id)
            }
        }
    }

    pub fn to_sample_image(&self) -> SampleImage {
        match self {
            ImageRef::Toy(id) => SampleImage::ToyContext(*id),
            ImageRef::Path(path) => SampleImage::Path(path.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub augmentation: String,
    pub text: String,
}

/// One dataset line; key order is fixed by declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRow {
    pub id: String,
    pub iteration: u32,
    pub question: String,
    pub image: ImageRef,
    pub winner: String,
    pub loser: String,
    pub candidates: Vec<CandidateRow>,
    pub prompt: String,
}

impl TripletRow {
    pub fn from_triplet(triplet: &PreferenceTriplet, sample: &Sample) -> Result<TripletRow> {
        Ok(TripletRow {
            id: triplet.sample_id.clone(),
            iteration: triplet.iteration,
            question: triplet.question.clone(),
            image: ImageRef::from_sample(sample)?,
            winner: triplet.winner.clone(),
            loser: triplet.loser.clone(),
            candidates: triplet
                .candidates
                .iter()
                .map(|c| CandidateRow {
                    augmentation: c.augmentation_name.clone(),
                    text: c.text.clone(),
                })
                .collect(),
            prompt: triplet.prompt.clone(),
        })
    }

    pub fn to_triplet(&self) -> Result<PreferenceTriplet> {
        Ok(PreferenceTriplet::new(
            &self.id,
            self.iteration,
            &self.question,
            &self.winner,
            &self.loser,
            self.candidates
                .iter()
                .map(|c| CandidateAnswer::new(&c.augmentation, &c.text))
                .collect(),
            &self.prompt,
        )?)
    }

    pub fn to_sample(&self) -> Result<Sample> {
        Ok(Sample::new(
            &self.id,
            self.image.to_sample_image(),
            &self.question,
        )?)
    }
}

/// Rows for a dataset, joined with its samples by id.
pub fn dataset_rows(dataset: &PreferenceDataset, samples: &[Sample]) -> Result<Vec<TripletRow>> {
    let by_id: std::collections::HashMap<&str, &Sample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    dataset
        .triplets
        .iter()
        .map(|t| {
            let sample = by_id
                .get(t.sample_id.as_str())
                .with_context(|| format!("sample {} missing for dataset row", t.sample_id))?;
            TripletRow::from_triplet(t, sample)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, rows: &[TripletRow]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TripletRow>> {
    read_jsonl_records(path)
}

/// Generic JSONL reader with 1-based line numbers in errors.
pub fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("{}: reading line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Input sample line: `{"id": ..., "image": path-or-int, "question": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRow {
    pub id: String,
    pub image: ImageRef,
    pub question: String,
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let rows: Vec<SampleRow> = read_jsonl_records(path)?;
    if rows.is_empty() {
        bail!("{}: no samples", path.display());
    }
    let mut seen = BTreeSet::new();
    rows.iter()
        .map(|row| {
            if !seen.insert(row.id.clone()) {
                bail!("{}: duplicate sample id {:?}", path.display(), row.id);
            }
            Ok(Sample::new(
                &row.id,
                row.image.to_sample_image(),
                &row.question,
            )?)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRow {
    pub image_id: String,
    pub caption: String,
    pub ground_truth: Vec<String>,
}

pub fn read_caption_records(path: &Path) -> Result<Vec<CaptionRecord>> {
    let rows: Vec<CaptionRow> = read_jsonl_records(path)?;
    Ok(rows
        .into_iter()
        .map(|r| CaptionRecord {
            image_id: r.image_id,
            caption: r.caption,
            ground_truth: r.ground_truth.into_iter().collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YesNoRow {
    pub image_id: String,
    pub question: String,
    pub label: YesNoLabel,
    pub split: PopeSplit,
    pub prediction: String,
}

pub fn read_yesno_records(path: &Path) -> Result<Vec<YesNoRecord>> {
    let rows: Vec<YesNoRow> = read_jsonl_records(path)?;
    Ok(rows
        .into_iter()
        .map(|r| YesNoRecord {
            image_id: r.image_id,
            question: r.question,
            label: r.label,
            split: r.split,
            prediction: r.prediction,
        })
        .collect())
}

/// One judging job: a question plus two answers to compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRow {
    pub question: String,
    pub answer_a: String,
    pub answer_b: String,
}

/// One recorded verdict line: `{"verdict": "A" | "B" | "TIE" | ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRow {
    pub verdict: String,
}

pub fn read_vocabulary(path: &Path) -> Result<ObjectVocabulary> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading vocabulary {}", path.display()))?;
    Ok(ObjectVocabulary::parse(&text)?)
}

/// Checkpoint document: dimensions, content id, and full weights as
/// round-trip decimal floats.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointDoc {
    pub vocab_size: usize,
    pub context_size: usize,
    pub checkpoint_id: String,
    pub weights: Vec<f64>,
}

pub fn write_checkpoint(path: &Path, policy: &Policy) -> Result<()> {
    let doc = CheckpointDoc {
        vocab_size: policy.vocab_size(),
        context_size: policy.context_size(),
        checkpoint_id: policy.checkpoint_id(),
        weights: policy.weights().to_vec(),
    };
    let mut text = serde_json::to_string(&doc)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> Result<Policy> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .with_context(|| format!("reading {}", path.display()))?;
    let doc: CheckpointDoc =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let policy = Policy::with_weights(doc.vocab_size, doc.context_size, doc.weights)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    if policy.checkpoint_id() != doc.checkpoint_id {
        bail!(
            "{}: checkpoint id mismatch (stored {}, recomputed {})",
            path.display(),
            doc.checkpoint_id,
            policy.checkpoint_id()
        );
    }
    Ok(policy)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    manifest.validate()?;
    Ok(manifest)
}

/// `step,mean_loss` with 1-based steps.
pub fn trajectory_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,mean_loss\n");
    for (i, loss) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, loss);
    }
    out
}

pub fn write_trajectory(path: &Path, losses: &[f64]) -> Result<()> {
    std::fs::write(path, trajectory_csv(losses))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut losses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "step,mean_loss" {
                bail!("{}: unexpected header {line:?}", path.display());
            }
            continue;
        }
        let (_, loss) = line
            .split_once(',')
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        losses.push(
            loss.parse::<f64>()
                .with_context(|| format!("{}: line {}", path.display(), i + 1))?,
        );
    }
    Ok(losses)
}
