//! Image file I/O for the preview command: PNG and binary PPM (P6,
//! maxval 255), with round-half-to-even 8-bit quantization on write.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;
use shape_core::ImageTensor;

pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Loads a PNG or PPM file into a tensor; grayscale stays single-channel.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let decoded =
        image::open(path).with_context(|| format!("decoding {}", path.display()))?;
    let tensor = match decoded {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let data = gray.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
            ImageTensor::new(h as usize, w as usize, 1, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb
                .pixels()
                .flat_map(|p| p.0.iter().map(|&v| f64::from(v) / 255.0))
                .collect();
            ImageTensor::new(h as usize, w as usize, 3, data)
        }
    };
    tensor.map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Saves by extension: `.png` or `.ppm` (P6).
pub fn save_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => save_png(path, img),
        "ppm" => save_ppm(path, img),
        other => bail!("unsupported output extension {other:?}; use .png or .ppm"),
    }
}

fn to_rgb_bytes(img: &ImageTensor) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(img.height() * img.width() * 3);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.channels() == 3 {
                for c in 0..3 {
                    bytes.push(quantize_u8(img.get(y, x, c)));
                }
            } else {
                let v = quantize_u8(img.get(y, x, 0));
                bytes.extend_from_slice(&[v, v, v]);
            }
        }
    }
    bytes
}

fn save_png(path: &Path, img: &ImageTensor) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.channels() == 1 {
        let buf = image::GrayImage::from_fn(w, h, |x, y| {
            image::Luma([quantize_u8(img.get(y as usize, x as usize, 0))])
        });
        buf.save(path)
            .with_context(|| format!("writing {}", path.display()))
    } else {
        let buf = image::RgbImage::from_raw(w, h, to_rgb_bytes(img)).expect("sized buffer");
        buf.save(path)
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn save_ppm(path: &Path, img: &ImageTensor) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let encoder = PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary));
    encoder
        .write_image(
            &to_rgb_bytes(img),
            img.width() as u32,
            img.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_to_even() {
        // 0.5 * 255 = 127.5 exactly; the tie resolves to the even side.
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!((127.5f64).round_ties_even(), 128.0);
        assert_eq!((126.5f64).round_ties_even(), 126.0);
        assert_eq!(quantize_u8(0.0), 0);
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(-0.2), 0);
        assert_eq!(quantize_u8(1.7), 255);
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = std::env::temp_dir().join(format!("imgio-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let img = ImageTensor::new(
            2,
            2,
            3,
            vec![
                0.0, 0.5, 1.0, 0.25, 0.75, 0.125, 1.0, 0.0, 0.5, 0.2, 0.4, 0.6,
            ],
        )
        .unwrap();
        for name in ["t.png", "t.ppm"] {
            let path = dir.join(name);
            save_image(&path, &img).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!((back.height(), back.width(), back.channels()), (2, 2, 3));
            for (a, b) in img.data().iter().zip(back.data().iter()) {
                assert!(
                    (a - b).abs() <= 0.5 / 255.0 + 1e-12,
                    "quantization error too large: {a} vs {b}"
                );
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
