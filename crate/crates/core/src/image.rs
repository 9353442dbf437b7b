//! Image tensors: the substrate every augmentation operates on.
//!
//! An [`ImageTensor`] is a row-major `H x W x C` array of floats in `[0, 1]`
//! with one or three channels. Validation is strict: any non-finite or
//! out-of-range element is rejected with the first offending index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {height}x{width}")]
    ZeroDimension { height: usize, width: usize },
    #[error("channel count must be 1 or 3, got {channels}")]
    BadChannels { channels: usize },
    #[error("image data length mismatch: expected {expected} ({height}x{width}x{channels}), got {actual}")]
    LengthMismatch {
        expected: usize,
        actual: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("image value out of range at index {index}: {value}")]
    OutOfRange { index: usize, value: f64 },
    #[error("image value not finite at index {index}")]
    NonFinite { index: usize },
}

/// A validated `H x W x C` image with every element finite and in `[0, 1]`.
///
/// Immutable after construction; equality is exact element-wise equality,
/// which the determinism tests rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::ZeroDimension { height, width });
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannels { channels });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: data.len(),
                height,
                width,
                channels,
            });
        }
        let img = ImageTensor {
            height,
            width,
            channels,
            data,
        };
        img.check_values()?;
        Ok(img)
    }

    /// Constant-valued image, handy for tests and synthetic inputs.
    pub fn constant(
        height: usize,
        width: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self, ImageError> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    fn check_values(&self) -> Result<(), ImageError> {
        for (index, &value) in self.data.iter().enumerate() {
            if !value.is_finite() {
                return Err(ImageError::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(ImageError::OutOfRange { index, value });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index_of(y, x, c)]
    }

    /// Per-element map under the same dimensions; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, ImageError> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Re-checks every invariant and returns the image unchanged if all hold.
pub fn validate_image(img: ImageTensor) -> Result<ImageTensor, ImageError> {
    // Construction already validates; deserialized or externally produced
    // tensors go through here before any augmentation touches them.
    ImageTensor::new(img.height, img.width, img.channels, img.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_in_range_constant() {
        let img = ImageTensor::constant(2, 2, 3, 0.5).unwrap();
        assert_eq!(validate_image(img.clone()).unwrap(), img);
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = ImageTensor::new(2, 2, 3, vec![0.5; 11]).unwrap_err();
        assert_eq!(
            err,
            ImageError::LengthMismatch {
                expected: 12,
                actual: 11,
                height: 2,
                width: 2,
                channels: 3,
            }
        );
        assert!(err.to_string().contains("length mismatch"));
    }

    #[test]
    fn rejects_out_of_range_with_first_index() {
        let mut data = vec![0.5; 12];
        data[0] = 1.000_000_1;
        let err = ImageTensor::new(2, 2, 3, data).unwrap_err();
        assert_eq!(
            err,
            ImageError::OutOfRange {
                index: 0,
                value: 1.000_000_1
            }
        );
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![0.5; 4];
        data[2] = f64::NAN;
        let err = ImageTensor::new(2, 2, 1, data).unwrap_err();
        assert_eq!(err, ImageError::NonFinite { index: 2 });
    }

    #[test]
    fn rejects_bad_channels_and_zero_dims() {
        assert!(matches!(
            ImageTensor::new(2, 2, 2, vec![0.0; 8]),
            Err(ImageError::BadChannels { channels: 2 })
        ));
        assert!(matches!(
            ImageTensor::new(0, 2, 1, vec![]),
            Err(ImageError::ZeroDimension { .. })
        ));
    }
}
