//! Run manifests: the per-iteration record of what a run produced.
//!
//! The manifest pins the reference chain of the iterative loop: iteration
//! `t` must have been trained against the checkpoint produced by iteration
//! `t - 1` (the initial model for `t = 1`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("iteration indices must start at 1 and increase strictly; found {found} at position {position}")]
    BadIterationIndex { position: usize, found: u32 },
    #[error("iteration {iteration} references checkpoint {found}, expected {expected}")]
    BrokenReferenceChain {
        iteration: u32,
        expected: String,
        found: String,
    },
}

/// One iteration's outputs: where its dataset, checkpoint, and loss
/// trajectory live, and which checkpoint it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub dataset_path: String,
    pub checkpoint_id: String,
    pub checkpoint_path: String,
    pub reference_checkpoint_id: String,
    pub trajectory_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub config_digest: String,
    pub initial_checkpoint_id: String,
    pub initial_checkpoint_path: String,
    pub iterations: Vec<IterationRecord>,
    /// Informational hyperparameters (beta, learning_rate, steps,
    /// lora_rank, ...); recorded, never interpreted.
    pub recorded_hparams: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    /// Checks the index and reference-chain invariants.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut expected_ref = self.initial_checkpoint_id.clone();
        for (position, rec) in self.iterations.iter().enumerate() {
            let expected_index = position as u32 + 1;
            if rec.index != expected_index {
                return Err(ManifestError::BadIterationIndex {
                    position,
                    found: rec.index,
                });
            }
            if rec.reference_checkpoint_id != expected_ref {
                return Err(ManifestError::BrokenReferenceChain {
                    iteration: rec.index,
                    expected: expected_ref,
                    found: rec.reference_checkpoint_id.clone(),
                });
            }
            expected_ref = rec.checkpoint_id.clone();
        }
        Ok(())
    }

    /// All file paths the manifest references, each exactly once per record.
    pub fn referenced_paths(&self) -> Vec<&str> {
        let mut paths = vec![self.initial_checkpoint_path.as_str()];
        for rec in &self.iterations {
            paths.push(rec.dataset_path.as_str());
            paths.push(rec.checkpoint_path.as_str());
            paths.push(rec.trajectory_path.as_str());
        }
        paths
    }
}
