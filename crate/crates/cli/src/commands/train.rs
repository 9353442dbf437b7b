//! `train`: one DPO phase over an existing JSONL dataset.

use std::path::PathBuf;

use anyhow::{Context, Result};
use shape_core::backend::Policy;
use shape_core::dpo;
use shape_core::forge::{encode_for_training, PreferenceDataset};

use crate::config::LoadedConfig;
use crate::persist;

pub struct TrainArgs {
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub init: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub json: bool,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let LoadedConfig { config, .. } = crate::config::load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let rows = persist::read_jsonl(&args.dataset)?;
    anyhow::ensure!(!rows.is_empty(), "{}: empty dataset", args.dataset.display());

    let samples = rows
        .iter()
        .map(persist::TripletRow::to_sample)
        .collect::<Result<Vec<_>>>()?;
    let triplets = rows
        .iter()
        .map(persist::TripletRow::to_triplet)
        .collect::<Result<Vec<_>>>()?;
    let iteration = triplets.first().map(|t| t.iteration).unwrap_or(1);
    let dataset = PreferenceDataset {
        triplets,
        source_digest: shape_core::forge::samples_digest(&samples),
        iteration,
    };

    let initial = match &args.init {
        Some(path) => persist::read_checkpoint(path)?,
        None => Policy::uniform(config.model.vocab_size, config.model.context_size),
    };
    let reference = initial.clone();
    let encoded = encode_for_training(
        &dataset,
        &samples,
        initial.vocab_size() as u32,
        initial.context_size(),
    )?;
    let train_cfg = config.train.train_config(seed)?;
    let outcome = dpo::train(&initial, &reference, &encoded, &train_cfg)?;
    let margin = dpo::mean_margin(&outcome.policy, &reference, &encoded, train_cfg.beta)?;

    let out_dir = args.out.clone().unwrap_or_else(|| config.output_dir());
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    let trajectory_path = out_dir.join("trajectory.csv");
    persist::write_checkpoint(&checkpoint_path, &outcome.policy)?;
    persist::write_trajectory(&trajectory_path, &outcome.trajectory)?;

    let first = outcome.trajectory.first().copied().unwrap_or(f64::NAN);
    let last = outcome.trajectory.last().copied().unwrap_or(f64::NAN);
    super::emit(
        args.json,
        &serde_json::json!({
            "checkpoint": checkpoint_path.display().to_string(),
            "trajectory": trajectory_path.display().to_string(),
            "checkpoint_id": outcome.policy.checkpoint_id(),
            "steps": outcome.trajectory.len(),
            "first_loss": first,
            "final_loss": last,
            "mean_margin": margin,
        }),
        &[
            format!(
                "trained {} steps on {} triplets: loss {first:.6} -> {last:.6}, mean margin {margin:.6}",
                outcome.trajectory.len(),
                encoded.len()
            ),
            format!("checkpoint: {}", checkpoint_path.display()),
            format!("trajectory: {}", trajectory_path.display()),
        ],
    );
    Ok(())
}
