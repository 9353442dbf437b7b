//! Preference-triplet factory and the iterative alignment loop.
//!
//! For each sample, the backend answers the original input (the loser),
//! answers every augmented input (the candidates), and summarizes the
//! candidates under the prompt (the winner). The weaker single-augmentation
//! mode swaps the roles: the original answer wins, the augmented one loses.
//!
//! The outer loop rebuilds the dataset against the current reference model,
//! trains a new policy on it, then promotes that policy to reference for
//! the next round.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationSpec;
use crate::backend::{toy_context_for_sample, Backend, BackendError, Policy};
use crate::dpo::{self, DpoError, EncodedTriplet, IterativeDpo, TrainConfig};
use crate::hash::{derive_seed, sha256_hex, StableHasher};
use crate::manifest::{IterationRecord, ManifestError, RunManifest};
use crate::types::{CandidateAnswer, PreferenceTriplet, Sample, SampleImage, TypeError};

/// The published summarization prompt.
pub const DEFAULT_SUMMARY_PROMPT: &str =
    "Please provide a comprehensive summary based on the following candidate answers.";

// Stream tags keeping dataset-building and training draws independent.
const STREAM_DATASET: u64 = 0xD5;
const STREAM_TRAIN: u64 = 0x7A;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("augmentation bank must be non-empty")]
    EmptyBank,
    #[error("summary prompt must be non-empty")]
    EmptyPrompt,
    #[error("sample list must be non-empty")]
    NoSamples,
    #[error("iterations must be >= 1")]
    ZeroIterations,
    #[error("forge iteration tag must be >= 1")]
    ZeroIterationTag,
    #[error("sample {sample_id}: backend failed on augmentation {augmentation_index:?}: {source}")]
    Generation {
        sample_id: String,
        augmentation_index: Option<usize>,
        #[source]
        source: BackendError,
    },
    #[error("sample {sample_id}: summarize failed: {source}")]
    Summarize {
        sample_id: String,
        #[source]
        source: BackendError,
    },
    #[error("sample {sample_id} missing from the sample list")]
    UnknownSample { sample_id: String },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Dpo(#[from] DpoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("sink failed: {0}")]
    Sink(String),
}

/// Triplet construction mode: the summarization scheme, or the weaker
/// original-vs-augmented baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForgeMode {
    Shape,
    Seva,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub mode: ForgeMode,
    pub aug_specs: Vec<AugmentationSpec>,
    pub prompt: String,
    pub iteration: u32,
    /// Drop triplets whose winner and loser coincide. Off by default; they
    /// carry zero margin and are merely counted.
    pub filter_degenerate: bool,
}

impl ForgeConfig {
    pub fn new(mode: ForgeMode, aug_specs: Vec<AugmentationSpec>) -> ForgeConfig {
        ForgeConfig {
            mode,
            aug_specs,
            prompt: DEFAULT_SUMMARY_PROMPT.to_string(),
            iteration: 1,
            filter_degenerate: false,
        }
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.aug_specs.is_empty() {
            return Err(ForgeError::EmptyBank);
        }
        if self.mode == ForgeMode::Shape && self.prompt.is_empty() {
            return Err(ForgeError::EmptyPrompt);
        }
        if self.iteration == 0 {
            return Err(ForgeError::ZeroIterationTag);
        }
        Ok(())
    }
}

/// What to do when one sample fails: abort, or keep going and record it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    FailFast,
    SkipAndRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub index: usize,
    pub message: String,
}

/// An ordered dataset of triplets plus the digest of the inputs it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub triplets: Vec<PreferenceTriplet>,
    pub source_digest: String,
    pub iteration: u32,
}

/// Dataset plus per-run bookkeeping: skipped samples and degenerate count.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub dataset: PreferenceDataset,
    pub failures: Vec<FailureRecord>,
    pub degenerate: usize,
}

/// Builds one triplet for `sample` according to the configured mode.
pub fn build_triplet(
    backend: &dyn Backend,
    sample: &Sample,
    cfg: &ForgeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PreferenceTriplet, ForgeError> {
    cfg.validate()?;
    let original = backend.answer(sample, None, rng).map_err(|source| {
        ForgeError::Generation {
            sample_id: sample.id.clone(),
            augmentation_index: None,
            source,
        }
    })?;
    match cfg.mode {
        ForgeMode::Shape => {
            let mut candidates = Vec::with_capacity(cfg.aug_specs.len());
            for (index, spec) in cfg.aug_specs.iter().enumerate() {
                let text = backend
                    .answer(sample, Some((index, spec)), rng)
                    .map_err(|source| ForgeError::Generation {
                        sample_id: sample.id.clone(),
                        augmentation_index: Some(index),
                        source,
                    })?;
                candidates.push(CandidateAnswer::new(spec.name(), text));
            }
            let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
            let winner = backend
                .summarize(&texts, &cfg.prompt, rng)
                .map_err(|source| ForgeError::Summarize {
                    sample_id: sample.id.clone(),
                    source,
                })?;
            Ok(PreferenceTriplet::new(
                &sample.id,
                cfg.iteration,
                &sample.question,
                winner,
                original,
                candidates,
                &cfg.prompt,
            )?)
        }
        ForgeMode::Seva => {
            // Baseline: original answer wins, one augmented answer loses.
            let spec = &cfg.aug_specs[0];
            let loser = backend
                .answer(sample, Some((0, spec)), rng)
                .map_err(|source| ForgeError::Generation {
                    sample_id: sample.id.clone(),
                    augmentation_index: Some(0),
                    source,
                })?;
            let candidates = vec![CandidateAnswer::new(spec.name(), loser.clone())];
            Ok(PreferenceTriplet::new(
                &sample.id,
                cfg.iteration,
                &sample.question,
                original,
                loser,
                candidates,
                &cfg.prompt,
            )?)
        }
    }
}

/// Stable digest over the sample list (ids, image references, questions).
pub fn samples_digest(samples: &[Sample]) -> String {
    let mut h = StableHasher::new();
    for s in samples {
        h.write_str(&s.id);
        match &s.image {
            SampleImage::ToyContext(id) => {
                h.write_str("toy");
                h.write_u64(*id);
            }
            SampleImage::Path(p) => {
                h.write_str("path");
                h.write_str(p);
            }
            SampleImage::Tensor(t) => {
                h.write_str("tensor");
                h.write_u64(t.height() as u64);
                h.write_u64(t.width() as u64);
                h.write_u64(t.channels() as u64);
                for &v in t.data() {
                    h.write_u64(v.to_bits());
                }
            }
        }
        h.write_str(&s.question);
    }
    sha256_hex(&h.finish().to_le_bytes())
}

/// Builds one triplet per sample with bounded parallelism.
///
/// Each sample draws from its own generator seeded by `(seed, index)`, and
/// results are gathered in input order, so the output is identical for any
/// `max_in_flight`.
pub fn build_dataset(
    backend: &dyn Backend,
    samples: &[Sample],
    cfg: &ForgeConfig,
    seed: u64,
    max_in_flight: usize,
    failure_policy: FailurePolicy,
) -> Result<BuildReport, ForgeError> {
    if samples.is_empty() {
        return Err(ForgeError::NoSamples);
    }
    cfg.validate()?;
    let workers = max_in_flight.max(1).min(samples.len());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<PreferenceTriplet, ForgeError>>>> =
        (0..samples.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= samples.len() || abort.load(Ordering::SeqCst) {
                    break;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                let result = build_triplet(backend, &samples[i], cfg, &mut rng);
                if result.is_err() && failure_policy == FailurePolicy::FailFast {
                    abort.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut triplets = Vec::with_capacity(samples.len());
    let mut failures = Vec::new();
    let mut degenerate = 0;
    for (index, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().unwrap() {
            Some(Ok(triplet)) => {
                if triplet.is_degenerate() {
                    degenerate += 1;
                    if cfg.filter_degenerate {
                        continue;
                    }
                }
                triplets.push(triplet);
            }
            Some(Err(e)) => match failure_policy {
                FailurePolicy::FailFast => return Err(e),
                FailurePolicy::SkipAndRecord => failures.push(FailureRecord {
                    sample_id: samples[index].id.clone(),
                    index,
                    message: e.to_string(),
                }),
            },
            // Only reachable under fail-fast abort; surface the first error.
            None => {
                debug_assert!(abort.load(Ordering::SeqCst));
            }
        }
    }
    Ok(BuildReport {
        dataset: PreferenceDataset {
            triplets,
            source_digest: samples_digest(samples),
            iteration: cfg.iteration,
        },
        failures,
        degenerate,
    })
}

/// Encodes a dataset for the toy trainer: contexts from the originating
/// samples, token sequences from the winner/loser texts.
pub fn encode_for_training(
    dataset: &PreferenceDataset,
    samples: &[Sample],
    vocab_size: u32,
    context_size: usize,
) -> Result<Vec<EncodedTriplet>, ForgeError> {
    let by_id: std::collections::HashMap<&str, &Sample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    dataset
        .triplets
        .iter()
        .map(|t| {
            let sample = by_id
                .get(t.sample_id.as_str())
                .ok_or_else(|| ForgeError::UnknownSample {
                    sample_id: t.sample_id.clone(),
                })?;
            let context = toy_context_for_sample(sample, context_size);
            Ok(EncodedTriplet {
                context_w: context,
                context_l: context,
                winner: crate::backend::encode_text(&t.winner, vocab_size)
                    .map_err(|source| ForgeError::Generation {
                        sample_id: t.sample_id.clone(),
                        augmentation_index: None,
                        source,
                    })?,
                loser: crate::backend::encode_text(&t.loser, vocab_size).map_err(|source| {
                    ForgeError::Generation {
                        sample_id: t.sample_id.clone(),
                        augmentation_index: None,
                        source,
                    }
                })?,
            })
        })
        .collect()
}

/// Where run artifacts go: the CLI persists to disk, tests to memory.
pub trait RunSink {
    /// Records a checkpoint for iteration `t` (0 = the initial model);
    /// returns a location string for the manifest.
    fn record_checkpoint(&mut self, t: usize, policy: &Policy) -> Result<String, ForgeError>;
    fn record_dataset(
        &mut self,
        t: usize,
        dataset: &PreferenceDataset,
        samples: &[Sample],
    ) -> Result<String, ForgeError>;
    fn record_trajectory(&mut self, t: usize, losses: &[f64]) -> Result<String, ForgeError>;
}

/// In-memory sink for tests and library callers.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub checkpoints: Vec<(usize, Policy)>,
    pub datasets: Vec<(usize, PreferenceDataset)>,
    pub trajectories: Vec<(usize, Vec<f64>)>,
}

impl RunSink for MemorySink {
    fn record_checkpoint(&mut self, t: usize, policy: &Policy) -> Result<String, ForgeError> {
        self.checkpoints.push((t, policy.clone()));
        Ok(format!("mem://checkpoint/{t}"))
    }

    fn record_dataset(
        &mut self,
        t: usize,
        dataset: &PreferenceDataset,
        _samples: &[Sample],
    ) -> Result<String, ForgeError> {
        self.datasets.push((t, dataset.clone()));
        Ok(format!("mem://dataset/{t}"))
    }

    fn record_trajectory(&mut self, t: usize, losses: &[f64]) -> Result<String, ForgeError> {
        self.trajectories.push((t, losses.to_vec()));
        Ok(format!("mem://trajectory/{t}"))
    }
}

/// Options for the iterative loop beyond the forge/train configs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub iterations: usize,
    pub seed: u64,
    pub max_in_flight: usize,
    pub failure_policy: FailurePolicy,
    /// Digest of the launching configuration, recorded in the manifest.
    pub config_digest: String,
    /// Extra informational hyperparameters for the manifest (for example a
    /// LoRA rank from a mirrored large-scale setup). Never interpreted.
    pub extra_hparams: Vec<(String, serde_json::Value)>,
}

impl RunOptions {
    pub fn new(iterations: usize, seed: u64) -> RunOptions {
        RunOptions {
            iterations,
            seed,
            max_in_flight: 1,
            failure_policy: FailurePolicy::FailFast,
            config_digest: String::new(),
            extra_hparams: Vec::new(),
        }
    }
}

/// Runs the full loop: for each iteration, rebuild the dataset from the
/// current reference, train against it, record everything, and promote the
/// trained policy to reference.
///
/// `make_backend` receives the current reference so the toy backend samples
/// from the frozen model of the ongoing iteration; backends that ignore the
/// policy (mock) simply disregard it.
pub fn run_iterations(
    initial: Policy,
    samples: &[Sample],
    forge_cfg: &ForgeConfig,
    train_cfg: &TrainConfig,
    opts: &RunOptions,
    make_backend: &dyn Fn(&Policy) -> Box<dyn Backend>,
    sink: &mut dyn RunSink,
) -> Result<(Policy, RunManifest), ForgeError> {
    if opts.iterations == 0 {
        return Err(ForgeError::ZeroIterations);
    }
    if samples.is_empty() {
        return Err(ForgeError::NoSamples);
    }
    forge_cfg.validate()?;
    train_cfg.validate().map_err(ForgeError::Dpo)?;

    let mut state = IterativeDpo::new(initial);
    let initial_checkpoint_id = state.reference().checkpoint_id();
    let initial_checkpoint_path = sink.record_checkpoint(0, state.reference())?;
    let mut iterations = Vec::with_capacity(opts.iterations);

    for t in 1..=opts.iterations {
        let reference_checkpoint_id = state.reference().checkpoint_id();
        let backend = make_backend(state.reference());
        let mut cfg = forge_cfg.clone();
        cfg.iteration = t as u32;
        let dataset_seed = derive_seed(derive_seed(opts.seed, STREAM_DATASET), t as u64);
        let report = build_dataset(
            backend.as_ref(),
            samples,
            &cfg,
            dataset_seed,
            opts.max_in_flight,
            opts.failure_policy,
        )?;
        let dataset_path = sink.record_dataset(t, &report.dataset, samples)?;

        let encoded = encode_for_training(
            &report.dataset,
            samples,
            state.reference().vocab_size() as u32,
            state.reference().context_size(),
        )?;
        let mut tcfg = train_cfg.clone();
        tcfg.seed = derive_seed(derive_seed(opts.seed, STREAM_TRAIN), t as u64);
        let outcome = dpo::train(state.reference(), state.reference(), &encoded, &tcfg)?;

        let trajectory_path = sink.record_trajectory(t, &outcome.trajectory)?;
        let checkpoint_id = outcome.policy.checkpoint_id();
        let checkpoint_path = sink.record_checkpoint(t, &outcome.policy)?;
        iterations.push(IterationRecord {
            index: t as u32,
            dataset_path,
            checkpoint_id,
            checkpoint_path,
            reference_checkpoint_id,
            trajectory_path,
        });
        state.complete_iteration(outcome.policy);
        state.update_reference()?;
    }

    let mut recorded_hparams: std::collections::BTreeMap<String, serde_json::Value> =
        std::collections::BTreeMap::new();
    recorded_hparams.insert("beta".into(), serde_json::json!(train_cfg.beta));
    recorded_hparams.insert(
        "learning_rate".into(),
        serde_json::json!(train_cfg.learning_rate),
    );
    recorded_hparams.insert("steps".into(), serde_json::json!(train_cfg.steps));
    recorded_hparams.insert("batch_size".into(), serde_json::json!(train_cfg.batch_size));
    for (k, v) in &opts.extra_hparams {
        recorded_hparams.insert(k.clone(), v.clone());
    }

    let mut run_material = Vec::new();
    run_material.extend_from_slice(opts.config_digest.as_bytes());
    run_material.extend_from_slice(&opts.seed.to_le_bytes());
    let manifest = RunManifest {
        run_id: sha256_hex(&run_material)[..16].to_string(),
        seed: opts.seed,
        config_digest: opts.config_digest.clone(),
        initial_checkpoint_id,
        initial_checkpoint_path,
        iterations,
        recorded_hparams,
    };
    manifest.validate()?;
    Ok((state.reference().clone(), manifest))
}
