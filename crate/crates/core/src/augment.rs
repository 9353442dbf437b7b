//! Image augmentation bank: crop, forward-diffusion noise, contrast, gamma,
//! horizontal flip, and identity.
//!
//! Every operation is a pure function over an immutable input image plus an
//! explicitly seeded generator, so identical `(input, spec, seed)` triples
//! produce bit-identical outputs. Outputs always preserve dimensions and
//! stay in `[0, 1]`.
//!
//! The diffusion transforms corrupt an image with the forward process
//! `x_t = sqrt(alpha_bar_t) * x_0 + sqrt(1 - alpha_bar_t) * eps` under a
//! linear beta schedule. Two strengths are provided as presets: a weak one
//! at `t = 200` and a strong one at `t = 500`, both over 1000 total steps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::image::{validate_image, ImageError, ImageTensor};

/// Default schedule: linear beta from 1e-4 to 0.02 over 1000 steps.
pub const DEFAULT_TOTAL_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Aspect-ratio jitter bounds for random crops.
const CROP_ASPECT_MIN: f64 = 0.75;
const CROP_ASPECT_MAX: f64 = 4.0 / 3.0;
const CROP_MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("total steps must be >= 1")]
    ZeroSteps,
    #[error("beta_start {beta_start} must be < beta_end {beta_end}")]
    BetaOrder { beta_start: f64, beta_end: f64 },
    #[error("beta values must lie in (0, 1): got {beta}")]
    BetaRange { beta: f64 },
    #[error("diffusion step {t} exceeds total steps {total}")]
    StepOutOfRange { t: usize, total: usize },
    #[error("crop scale bounds invalid: require 0 < s_min <= s_max <= 1, got [{s_min}, {s_max}]")]
    CropScale { s_min: f64, s_max: f64 },
    #[error("image too small to crop: {height}x{width}")]
    ImageTooSmall { height: usize, width: usize },
    #[error("contrast factor must be > 0, got {factor}")]
    BadContrast { factor: f64 },
    #[error("gamma value must be > 0, got {value}")]
    BadGamma { value: f64 },
    #[error("augmentation {index} ({name}) failed: {source}")]
    SpecFailed {
        index: usize,
        name: String,
        #[source]
        source: Box<AugmentError>,
    },
    #[error("unknown augmentation preset: {0}")]
    UnknownPreset(String),
}

/// One configured transform. A list of these defines a candidate bank.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum AugmentationSpec {
    Identity,
    HFlip,
    Crop {
        s_min: f64,
        s_max: f64,
    },
    DiffusionNoise {
        t: usize,
        total_steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
    Contrast {
        factor: f64,
    },
    Gamma {
        value: f64,
    },
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        match *self {
            AugmentationSpec::Identity | AugmentationSpec::HFlip => Ok(()),
            AugmentationSpec::Crop { s_min, s_max } => {
                if s_min > 0.0 && s_min <= s_max && s_max <= 1.0 {
                    Ok(())
                } else {
                    Err(AugmentError::CropScale { s_min, s_max })
                }
            }
            AugmentationSpec::DiffusionNoise {
                t,
                total_steps,
                beta_start,
                beta_end,
            } => {
                let schedule = NoiseSchedule::linear(total_steps, beta_start, beta_end)?;
                if t > schedule.total_steps() {
                    return Err(AugmentError::StepOutOfRange {
                        t,
                        total: schedule.total_steps(),
                    });
                }
                Ok(())
            }
            AugmentationSpec::Contrast { factor } => {
                if factor > 0.0 {
                    Ok(())
                } else {
                    Err(AugmentError::BadContrast { factor })
                }
            }
            AugmentationSpec::Gamma { value } => {
                if value > 0.0 {
                    Ok(())
                } else {
                    Err(AugmentError::BadGamma { value })
                }
            }
        }
    }

    /// Canonical label used for candidate provenance and config files.
    pub fn name(&self) -> String {
        match self {
            AugmentationSpec::Identity => "identity".to_string(),
            AugmentationSpec::HFlip => "hflip".to_string(),
            AugmentationSpec::Crop { s_min, s_max } => format!("crop({s_min},{s_max})"),
            AugmentationSpec::DiffusionNoise { t, total_steps, .. } => {
                format!("diffusion(t={t}/{total_steps})")
            }
            AugmentationSpec::Contrast { factor } => format!("contrast({factor})"),
            AugmentationSpec::Gamma { value } => format!("gamma({value})"),
        }
    }

    /// Resolves a named preset to its fixed parameters.
    ///
    /// `crop` follows the stronger published range `[0.2, 0.5]`; the weaker
    /// `crop-0-20` variant (scales up to 20% of the area) is also provided
    /// since both ranges appear in circulation. See the README.
    pub fn preset(name: &str) -> Result<AugmentationSpec, AugmentError> {
        match name {
            "identity" => Ok(AugmentationSpec::Identity),
            "hflip" => Ok(AugmentationSpec::HFlip),
            "crop" => Ok(AugmentationSpec::Crop {
                s_min: 0.2,
                s_max: 0.5,
            }),
            "crop-0-20" => Ok(AugmentationSpec::Crop {
                s_min: 0.01,
                s_max: 0.2,
            }),
            "diffusion-s" => Ok(AugmentationSpec::DiffusionNoise {
                t: 500,
                total_steps: DEFAULT_TOTAL_STEPS,
                beta_start: DEFAULT_BETA_START,
                beta_end: DEFAULT_BETA_END,
            }),
            "diffusion-w" => Ok(AugmentationSpec::DiffusionNoise {
                t: 200,
                total_steps: DEFAULT_TOTAL_STEPS,
                beta_start: DEFAULT_BETA_START,
                beta_end: DEFAULT_BETA_END,
            }),
            "contrast" => Ok(AugmentationSpec::Contrast { factor: 2.0 }),
            "gamma" => Ok(AugmentationSpec::Gamma { value: 0.8 }),
            other => Err(AugmentError::UnknownPreset(other.to_string())),
        }
    }

    /// The contrast + weak-diffusion + gamma bank, the published default
    /// composition for building candidate answers.
    pub fn candidate3_bank() -> Vec<AugmentationSpec> {
        vec![
            AugmentationSpec::preset("contrast").unwrap(),
            AugmentationSpec::preset("diffusion-w").unwrap(),
            AugmentationSpec::preset("gamma").unwrap(),
        ]
    }

    /// Applies this transform to `img`, drawing any randomness from `rng`.
    pub fn apply(
        &self,
        img: &ImageTensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<ImageTensor, AugmentError> {
        self.validate()?;
        match *self {
            AugmentationSpec::Identity => Ok(img.clone()),
            AugmentationSpec::HFlip => Ok(hflip(img)),
            AugmentationSpec::Crop { s_min, s_max } => crop(img, s_min, s_max, rng),
            AugmentationSpec::DiffusionNoise {
                t,
                total_steps,
                beta_start,
                beta_end,
            } => {
                let schedule = NoiseSchedule::linear(total_steps, beta_start, beta_end)?;
                diffuse(img, t, &schedule, rng)
            }
            AugmentationSpec::Contrast { factor } => contrast(img, factor),
            AugmentationSpec::Gamma { value } => gamma(img, value),
        }
    }
}

/// Forward-diffusion variance schedule with precomputed cumulative products.
///
/// `alpha_bar[t]` is the product of `(1 - beta_s)` over the first `t` steps;
/// `alpha_bar[0] = 1` exactly (the empty product), and the sequence is
/// strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly interpolated beta from `beta_start` to `beta_end` inclusive.
    pub fn linear(
        total_steps: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> Result<Self, AugmentError> {
        if total_steps == 0 {
            return Err(AugmentError::ZeroSteps);
        }
        if beta_start.is_nan() || beta_end.is_nan() || beta_start >= beta_end {
            return Err(AugmentError::BetaOrder {
                beta_start,
                beta_end,
            });
        }
        let mut beta = Vec::with_capacity(total_steps);
        for i in 0..total_steps {
            let b = if total_steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (total_steps - 1) as f64
            };
            if !(0.0 < b && b < 1.0) {
                return Err(AugmentError::BetaRange { beta: b });
            }
            beta.push(b);
        }
        let mut alpha_bar = Vec::with_capacity(total_steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for &b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(NoiseSchedule { beta, alpha_bar })
    }

    pub fn total_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Cumulative product `alpha_bar_t`; `t` ranges over `0..=total_steps`.
    pub fn alpha_bar(&self, t: usize) -> Option<f64> {
        self.alpha_bar.get(t).copied()
    }

    pub fn alpha_bar_all(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// Builds a linear schedule; see [`NoiseSchedule::linear`].
pub fn build_schedule(
    total_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, AugmentError> {
    NoiseSchedule::linear(total_steps, beta_start, beta_end)
}

/// Raw forward-diffusion draw at step `t`, before clamping.
///
/// Exposed separately because the clamped output is a biased estimator of
/// the process mean once `sqrt(1 - alpha_bar_t)` is comparable to the
/// distance to the range boundary, and statistical checks need the
/// unclamped values.
pub fn diffuse_raw(
    img: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, AugmentError> {
    let alpha_bar = schedule
        .alpha_bar(t)
        .ok_or(AugmentError::StepOutOfRange {
            t,
            total: schedule.total_steps(),
        })?;
    let signal = alpha_bar.sqrt();
    let noise = (1.0 - alpha_bar).sqrt();
    let normal = StandardNormal;
    Ok(img
        .data()
        .iter()
        .map(|&v| {
            let eps: f64 = normal.sample(rng);
            signal * v + noise * eps
        })
        .collect())
}

/// Forward-diffusion corruption at step `t`, clamped back into `[0, 1]`.
pub fn diffuse(
    img: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<ImageTensor, AugmentError> {
    let raw = diffuse_raw(img, t, schedule, rng)?;
    let data = raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ImageTensor::new(
        img.height(),
        img.width(),
        img.channels(),
        data,
    )?)
}

/// A crop rectangle in pixel coordinates, plus how it was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    /// True when the sampler exhausted its attempts and fell back to a
    /// centered crop at the maximum scale.
    pub fallback: bool,
}

impl CropRect {
    pub fn area_fraction(&self, img_height: usize, img_width: usize) -> f64 {
        (self.width * self.height) as f64 / (img_height * img_width) as f64
    }
}

/// Samples a crop rectangle with area fraction in `[s_min, s_max]` and
/// aspect ratio jittered in `[3/4, 4/3]`.
///
/// Integer rounding can push a candidate rectangle outside the requested
/// area range, so candidates are re-checked after rounding; after
/// `CROP_MAX_ATTEMPTS` failures the sampler falls back to a centered crop
/// at scale `s_max`.
pub fn sample_crop_rect(
    img_height: usize,
    img_width: usize,
    s_min: f64,
    s_max: f64,
    rng: &mut ChaCha8Rng,
) -> CropRect {
    let area = (img_height * img_width) as f64;
    for _ in 0..CROP_MAX_ATTEMPTS {
        let scale = rng.random_range(s_min..=s_max);
        let ratio = rng.random_range(CROP_ASPECT_MIN..=CROP_ASPECT_MAX);
        let target = area * scale;
        let w = (target * ratio).sqrt().round() as i64;
        let h = (target / ratio).sqrt().round() as i64;
        if w < 1 || h < 1 || w > img_width as i64 || h > img_height as i64 {
            continue;
        }
        let (w, h) = (w as usize, h as usize);
        let fraction = (w * h) as f64 / area;
        if fraction < s_min || fraction > s_max {
            continue;
        }
        let x = rng.random_range(0..=img_width - w);
        let y = rng.random_range(0..=img_height - h);
        return CropRect {
            x,
            y,
            width: w,
            height: h,
            fallback: false,
        };
    }
    let w = ((img_width as f64 * s_max.sqrt()).floor() as usize).clamp(1, img_width);
    let h = ((img_height as f64 * s_max.sqrt()).floor() as usize).clamp(1, img_height);
    CropRect {
        x: (img_width - w) / 2,
        y: (img_height - h) / 2,
        width: w,
        height: h,
        fallback: true,
    }
}

/// Random crop-and-resize: takes a random rectangle and scales it back to
/// the original dimensions with bilinear interpolation.
pub fn crop(
    img: &ImageTensor,
    s_min: f64,
    s_max: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ImageTensor, AugmentError> {
    AugmentationSpec::Crop { s_min, s_max }.validate()?;
    if img.height() < 2 || img.width() < 2 {
        return Err(AugmentError::ImageTooSmall {
            height: img.height(),
            width: img.width(),
        });
    }
    let rect = sample_crop_rect(img.height(), img.width(), s_min, s_max, rng);
    Ok(resize_bilinear(img, rect, img.height(), img.width())?)
}

/// Bilinear resample of `rect` within `img` up to `out_h x out_w`.
///
/// Uses half-pixel centers; when the rectangle covers the full frame and the
/// output dimensions match the input, every sample lands exactly on a source
/// pixel and the result is an exact copy.
pub fn resize_bilinear(
    img: &ImageTensor,
    rect: CropRect,
    out_h: usize,
    out_w: usize,
) -> Result<ImageTensor, ImageError> {
    let channels = img.channels();
    let mut data = Vec::with_capacity(out_h * out_w * channels);
    let sy_scale = rect.height as f64 / out_h as f64;
    let sx_scale = rect.width as f64 / out_w as f64;
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (rect.height - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(rect.height - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (rect.width - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(rect.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..channels {
                let v00 = img.get(rect.y + y0, rect.x + x0, c);
                let v01 = img.get(rect.y + y0, rect.x + x1, c);
                let v10 = img.get(rect.y + y1, rect.x + x0, c);
                let v11 = img.get(rect.y + y1, rect.x + x1, c);
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                let v = top + (bottom - top) * fy;
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor::new(out_h, out_w, channels, data)
}

/// Mean luma: ITU-R 601 weights for 3-channel images, plain mean otherwise.
pub fn mean_luma(img: &ImageTensor) -> f64 {
    let pixels = (img.height() * img.width()) as f64;
    if img.channels() == 3 {
        let mut acc = 0.0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                acc += 0.299 * img.get(y, x, 0) + 0.587 * img.get(y, x, 1) + 0.114 * img.get(y, x, 2);
            }
        }
        acc / pixels
    } else {
        img.data().iter().sum::<f64>() / pixels
    }
}

/// Contrast adjustment about the mean luma: `clamp(mu + factor * (v - mu))`.
pub fn contrast(img: &ImageTensor, factor: f64) -> Result<ImageTensor, AugmentError> {
    if factor <= 0.0 {
        return Err(AugmentError::BadContrast { factor });
    }
    let mu = mean_luma(img);
    // Written as v + (factor - 1)(v - mu) so factor 1 is an exact identity.
    Ok(img.map(|v| (v + (factor - 1.0) * (v - mu)).clamp(0.0, 1.0))?)
}

/// Gamma correction `v -> v^g`; values below 1 lighten dark regions.
pub fn gamma(img: &ImageTensor, value: f64) -> Result<ImageTensor, AugmentError> {
    if value <= 0.0 {
        return Err(AugmentError::BadGamma { value });
    }
    Ok(img.map(|v| v.powf(value).clamp(0.0, 1.0))?)
}

/// Horizontal flip: columns reversed within each row and channel.
pub fn hflip(img: &ImageTensor) -> ImageTensor {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data.push(img.get(y, w - 1 - x, ch));
            }
        }
    }
    ImageTensor::new(h, w, c, data).expect("flip preserves validity")
}

/// Applies every spec in order, returning one output per spec.
///
/// Randomness is drawn sequentially from the one generator, so the full
/// bank is reproducible from a single seed. Failures carry the index of the
/// offending spec.
pub fn apply_bank(
    img: &ImageTensor,
    specs: &[AugmentationSpec],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ImageTensor>, AugmentError> {
    let mut out = Vec::with_capacity(specs.len());
    for (index, spec) in specs.iter().enumerate() {
        let result = spec
            .apply(img, rng)
            .and_then(|augmented| Ok(validate_image(augmented)?));
        match result {
            Ok(augmented) => out.push(augmented),
            Err(source) => {
                return Err(AugmentError::SpecFailed {
                    index,
                    name: spec.name(),
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(out)
}
