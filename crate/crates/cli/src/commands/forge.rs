//! `forge build` and `forge run`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use shape_core::backend::{Backend, MockBackend, Policy, ToyBackend};
use shape_core::forge::{
    build_dataset, run_iterations, PreferenceDataset, RunOptions, RunSink,
};
use shape_core::types::Sample;

use crate::config::{AppConfig, BackendKind, LoadedConfig};
use crate::persist;

pub struct BuildArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub out: Option<PathBuf>,
    pub json: bool,
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let LoadedConfig { config, .. } = crate::config::load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let max_in_flight = args.max_in_flight.unwrap_or(config.max_in_flight);
    let samples = persist::read_samples(config.samples_file()?)?;
    let backend = super::make_backend(&config)?;
    let forge_cfg = config.forge.forge_config()?;

    let report = build_dataset(
        backend.as_ref(),
        &samples,
        &forge_cfg,
        seed,
        max_in_flight,
        config.failure_policy,
    )?;

    let out_path = match &args.out {
        Some(path) => path.clone(),
        None => {
            let dir = config.output_dir();
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            dir.join("dataset.jsonl")
        }
    };
    let rows = persist::dataset_rows(&report.dataset, &samples)?;
    persist::write_jsonl(&out_path, &rows)?;

    super::emit(
        args.json,
        &serde_json::json!({
            "dataset": out_path.display().to_string(),
            "triplets": report.dataset.triplets.len(),
            "failures": report.failures,
            "degenerate": report.degenerate,
            "source_digest": report.dataset.source_digest,
        }),
        &[
            format!(
                "wrote {} triplets to {}",
                report.dataset.triplets.len(),
                out_path.display()
            ),
            format!(
                "failures: {}, degenerate: {}",
                report.failures.len(),
                report.degenerate
            ),
        ],
    );
    Ok(())
}

/// Filesystem sink: everything lands in one directory, with paths recorded
/// relative to it so output bytes do not depend on where the directory is.
pub struct DirSink {
    root: PathBuf,
    samples_written: bool,
}

impl DirSink {
    pub fn new(root: &Path) -> Result<DirSink> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating {}", root.display()))?;
        Ok(DirSink {
            root: root.to_path_buf(),
            samples_written: false,
        })
    }

    fn write(&self, name: &str, contents: impl FnOnce(&Path) -> Result<()>) -> Result<String, shape_core::forge::ForgeError> {
        contents(&self.root.join(name))
            .map_err(|e| shape_core::forge::ForgeError::Sink(format!("{name}: {e}")))?;
        Ok(name.to_string())
    }
}

impl RunSink for DirSink {
    fn record_checkpoint(
        &mut self,
        t: usize,
        policy: &Policy,
    ) -> Result<String, shape_core::forge::ForgeError> {
        self.write(&format!("checkpoint_t{t}.json"), |path| {
            persist::write_checkpoint(path, policy)
        })
    }

    fn record_dataset(
        &mut self,
        t: usize,
        dataset: &PreferenceDataset,
        samples: &[Sample],
    ) -> Result<String, shape_core::forge::ForgeError> {
        self.samples_written = true;
        self.write(&format!("dataset_t{t}.jsonl"), |path| {
            let rows = persist::dataset_rows(dataset, samples)?;
            persist::write_jsonl(path, &rows)
        })
    }

    fn record_trajectory(
        &mut self,
        t: usize,
        losses: &[f64],
    ) -> Result<String, shape_core::forge::ForgeError> {
        self.write(&format!("trajectory_t{t}.csv"), |path| {
            persist::write_trajectory(path, losses)
        })
    }
}

pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub out: Option<PathBuf>,
    pub json: bool,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let LoadedConfig { config, digest } = crate::config::load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let samples = persist::read_samples(config.samples_file()?)?;
    let forge_cfg = config.forge.forge_config()?;
    let train_cfg = config.train.train_config(seed)?;
    let initial = Policy::uniform(config.model.vocab_size, config.model.context_size);

    let factory = backend_factory(&config)?;
    let out_dir = args.out.clone().unwrap_or_else(|| config.output_dir());
    let mut sink = DirSink::new(&out_dir)?;
    let opts = RunOptions {
        iterations: config.forge.iterations,
        seed,
        max_in_flight: args.max_in_flight.unwrap_or(config.max_in_flight),
        failure_policy: config.failure_policy,
        config_digest: digest,
        extra_hparams: config.manifest_hparams(),
    };

    let (final_policy, manifest) =
        run_iterations(initial, &samples, &forge_cfg, &train_cfg, &opts, factory.as_ref(), &mut sink)?;

    let manifest_path = out_dir.join("manifest.json");
    persist::write_manifest(&manifest_path, &manifest)?;

    let mut lines = Vec::new();
    for record in &manifest.iterations {
        lines.push(format!(
            "iteration {}: dataset {}, checkpoint {}, reference {}",
            record.index,
            record.dataset_path,
            &record.checkpoint_id[..12],
            &record.reference_checkpoint_id[..12],
        ));
    }
    lines.push(format!("final checkpoint: {}", final_policy.checkpoint_id()));
    lines.push(format!("manifest: {}", manifest_path.display()));
    super::emit(
        args.json,
        &serde_json::json!({
            "manifest": manifest_path.display().to_string(),
            "run_id": manifest.run_id,
            "iterations": manifest.iterations.len(),
            "final_checkpoint": final_policy.checkpoint_id(),
        }),
        &lines,
    );
    Ok(())
}

type BackendFactory = Box<dyn Fn(&Policy) -> Box<dyn Backend>>;

/// The iterative loop needs a backend per reference policy; remote
/// backends only produce datasets, training needs the differentiable toy
/// policy, so `forge run` accepts toy and mock backends only.
fn backend_factory(config: &AppConfig) -> Result<BackendFactory> {
    match config.backend.kind {
        BackendKind::Mock => Ok(Box::new(|_: &Policy| {
            Box::new(MockBackend::new()) as Box<dyn Backend>
        })),
        BackendKind::Toy => {
            let max_tokens = config.generation.max_tokens;
            let temperature = config.generation.temperature;
            Ok(Box::new(move |reference: &Policy| {
                Box::new(
                    ToyBackend::new(reference.clone(), max_tokens, temperature)
                        .expect("validated generation settings"),
                ) as Box<dyn Backend>
            }))
        }
        BackendKind::Remote => {
            bail!("forge run trains the toy policy; use backend.kind = \"toy\" or \"mock\" (remote backends only build datasets via `forge build`)")
        }
    }
}
