//! Self-supervised preference alignment at desk scale.
//!
//! This crate turns plain image-question samples into winner/loser
//! preference triplets by answering augmented views of each image and
//! summarizing the candidates, trains a toy tabular policy with the DPO
//! loss under an iteratively updated reference model, and scores outputs
//! with caption-hallucination ratios, yes/no probe accuracy, and a pairwise
//! judge harness.
//!
//! Modules:
//! - [`image`], [`types`], [`manifest`]: shared domain types.
//! - [`augment`]: the image-side augmentation bank and noise schedule.
//! - [`backend`]: answer generators (toy policy, remote client, mock).
//! - [`dpo`]: Bradley-Terry and DPO math, analytic gradients, trainer.
//! - [`forge`]: triplet construction and the iterative loop.
//! - [`eval`]: metrics and the judge harness.
//! - [`testkit`]: a scripted loopback chat server for tests.

pub mod augment;
pub mod backend;
pub mod dpo;
pub mod eval;
pub mod forge;
pub mod hash;
pub mod image;
pub mod manifest;
pub mod testkit;
pub mod types;

pub use augment::{AugmentationSpec, NoiseSchedule};
pub use backend::{Backend, BackendError, MockBackend, Policy, RemoteClient, RemoteConfig, ToyBackend};
pub use dpo::{EncodedTriplet, TrainConfig};
pub use forge::{ForgeConfig, ForgeMode, PreferenceDataset};
pub use image::ImageTensor;
pub use manifest::{IterationRecord, RunManifest};
pub use types::{CandidateAnswer, PreferenceTriplet, Sample, SampleImage, TokenSequence};
