//! PNG and binary PGM/PPM reading and writing.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Drop an alpha channel instead of rejecting the file.
    pub strip_alpha: bool,
}

/// Output quantization depth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    #[default]
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::UnsupportedFormat(format!("bit depth {other}"))),
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_image_with(path, LoadOptions::default())
}

pub fn load_image_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Image> {
    let path = path.as_ref();
    let read_err = |source| Error::Read {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| read_err(image::ImageError::IoError(e)))?
        .with_guessed_format()
        .map_err(|e| read_err(image::ImageError::IoError(e)))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {other:?}",
                path.display()
            )))
        }
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unrecognized",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(read_err)?;
    from_dynamic(decoded, opts).map_err(|e| match e {
        Error::UnsupportedLayout(msg) => {
            Error::UnsupportedLayout(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

fn from_dynamic(img: DynamicImage, opts: LoadOptions) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let has_alpha = img.color().has_alpha();
    if has_alpha && !opts.strip_alpha {
        return Err(Error::UnsupportedLayout(
            "alpha channel present (enable strip_alpha to drop it)".into(),
        ));
    }
    let to_unit8 = |v: &[u8]| v.iter().map(|&p| p as f64 / 255.0).collect::<Vec<_>>();
    let to_unit16 = |v: &[u16]| v.iter().map(|&p| p as f64 / 65535.0).collect::<Vec<_>>();
    let (channels, samples, depth) = match img {
        DynamicImage::ImageLuma8(b) => (1, to_unit8(b.as_raw()), 8),
        DynamicImage::ImageRgb8(b) => (3, to_unit8(b.as_raw()), 8),
        DynamicImage::ImageLuma16(b) => (1, to_unit16(b.as_raw()), 16),
        DynamicImage::ImageRgb16(b) => (3, to_unit16(b.as_raw()), 16),
        DynamicImage::ImageLumaA8(_) => (1, to_unit8(img.to_luma8().as_raw()), 8),
        DynamicImage::ImageRgba8(_) => (3, to_unit8(img.to_rgb8().as_raw()), 8),
        DynamicImage::ImageLumaA16(_) => (1, to_unit16(img.to_luma16().as_raw()), 16),
        DynamicImage::ImageRgba16(_) => (3, to_unit16(img.to_rgb16().as_raw()), 16),
        other => {
            return Err(Error::UnsupportedLayout(format!(
                "{:?} samples",
                other.color()
            )))
        }
    };
    Ok(Image::from_samples(w, h, channels, samples)?.with_source_bit_depth(depth))
}

/// Quantizes one sample: `round(s * max)`, halves rounding up.
pub fn quantize(sample: f64, depth: BitDepth) -> u16 {
    (sample.clamp(0.0, 1.0) * depth.max_value()).round() as u16
}

/// Writes PNG (`.png`) or binary PGM/PPM (`.pgm`, `.ppm`, `.pnm`).
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)
        .map_err(|_| Error::UnsupportedFormat(format!("{}: unknown extension", path.display())))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!("{}: {format:?}", path.display())));
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantized_u8(img)).expect("buffer size"),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantized_u8(img)).expect("buffer size"),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantized_u16(img)).expect("buffer size"),
        ),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantized_u16(img)).expect("buffer size"),
        ),
        (c, _) => return Err(Error::UnsupportedLayout(format!("{c} channels"))),
    };
    dynamic
        .save_with_format(path, format)
        .map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
}

fn quantized_u8(img: &Image) -> Vec<u8> {
    img.samples()
        .iter()
        .map(|&s| quantize(s, BitDepth::Eight) as u8)
        .collect()
}

fn quantized_u16(img: &Image) -> Vec<u16> {
    img.samples()
        .iter()
        .map(|&s| quantize(s, BitDepth::Sixteen))
        .collect()
}

/// Loads every PNG/PGM/PPM file in `dir`, sorted by file name.
pub fn load_dir(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<Vec<(String, Image)>> {
    let dir = dir.as_ref();
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "pnm")) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            load_image_with(&p, opts).map(|img| (name, img))
        })
        .collect()
}
