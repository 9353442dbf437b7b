//! `report`: merge a run's loss trajectories into one plottable CSV plus a
//! summary of the iteration chain.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};

use crate::persist;

pub struct ReportArgs {
    pub manifest: PathBuf,
    pub out: Option<PathBuf>,
    pub json: bool,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let manifest = persist::read_manifest(&args.manifest)?;
    let base = args
        .manifest
        .parent()
        .context("manifest path has no parent directory")?;

    let mut merged = String::from("step,mean_loss\n");
    let mut global_step = 0usize;
    let mut iteration_summaries = Vec::new();
    for record in &manifest.iterations {
        let losses = persist::read_trajectory(&base.join(&record.trajectory_path))?;
        for loss in &losses {
            global_step += 1;
            let _ = writeln!(merged, "{global_step},{loss}");
        }
        iteration_summaries.push(serde_json::json!({
            "iteration": record.index,
            "dataset": record.dataset_path,
            "checkpoint_id": record.checkpoint_id,
            "reference_checkpoint_id": record.reference_checkpoint_id,
            "steps": losses.len(),
            "first_loss": losses.first(),
            "final_loss": losses.last(),
        }));
    }

    let summary = serde_json::json!({
        "run_id": manifest.run_id,
        "seed": manifest.seed,
        "config_digest": manifest.config_digest,
        "initial_checkpoint_id": manifest.initial_checkpoint_id,
        "recorded_hparams": manifest.recorded_hparams,
        "iterations": iteration_summaries,
        "total_steps": global_step,
    });

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, &merged)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        let json_path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(&json_path, text)
            .with_context(|| format!("writing {}", json_path.display()))?;
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{merged}");
    }
    Ok(())
}
