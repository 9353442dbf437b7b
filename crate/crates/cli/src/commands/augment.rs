//! `augment preview`: apply a named preset to an image file.

use std::path::PathBuf;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shape_core::augment::AugmentationSpec;

use crate::imgio;

pub struct PreviewArgs {
    pub input: PathBuf,
    pub preset: String,
    pub out: PathBuf,
    pub seed: u64,
    pub json: bool,
}

pub fn preview(args: &PreviewArgs) -> Result<()> {
    let spec = AugmentationSpec::preset(&args.preset)?;
    let img = imgio::load_image(&args.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let out = spec.apply(&img, &mut rng)?;
    imgio::save_image(&args.out, &out)?;
    super::emit(
        args.json,
        &serde_json::json!({
            "input": args.input.display().to_string(),
            "output": args.out.display().to_string(),
            "preset": args.preset,
            "spec": spec.name(),
            "height": out.height(),
            "width": out.width(),
            "channels": out.channels(),
        }),
        &[format!(
            "applied {} to {} -> {}",
            spec.name(),
            args.input.display(),
            args.out.display()
        )],
    );
    Ok(())
}
