//! Image and image-stack containers.
//!
//! Samples are stored interleaved (`[r, g, b, r, g, b, ...]` for RGB) as `f64`
//! in the canonical range `[0, 1]`. Quantization to 8 or 16 bits only happens
//! at the file boundary, see [`crate::io`].

use crate::error::{Error, Result};

/// Number of histogram bins per channel.
pub const HISTOGRAM_BINS: usize = 256;

/// A real-valued raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f64>,
    source_bit_depth: u8,
}

impl Image {
    /// Builds an image from interleaved samples. Samples are clamped to `[0, 1]`;
    /// non-finite samples are rejected.
    pub fn from_samples(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedLayout(format!(
                "{channels} channels (expected 1 or 3)"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height}x{channels} image",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample at {pos}")));
        }
        let mut img = Self {
            width,
            height,
            channels,
            samples,
            source_bit_depth: 8,
        };
        img.clamp();
        Ok(img)
    }

    /// Constant image, every sample set to `value` (clamped).
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_samples(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    samples.push(f(x, y, c));
                }
            }
        }
        Self::from_samples(width, height, channels, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// `(width, height, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn source_bit_depth(&self) -> u8 {
        self.source_bit_depth
    }

    pub fn with_source_bit_depth(mut self, depth: u8) -> Self {
        self.source_bit_depth = depth;
        self
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    /// Iterator over the samples of one channel in raster order.
    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().skip(c).step_by(self.channels).copied()
    }

    /// Copies one channel out as a gray image-sized vector.
    pub fn channel_vec(&self, c: usize) -> Vec<f64> {
        self.channel(c).collect()
    }

    /// Returns a new image with `f(sample, channel)` applied to every sample,
    /// clamped to `[0, 1]`. Non-finite results clamp to 0.
    pub fn map(&self, mut f: impl FnMut(f64, usize) -> f64) -> Image {
        let channels = self.channels;
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| f(s, i % channels))
            .collect();
        let mut out = Image {
            samples,
            ..self.clone_meta()
        };
        out.clamp();
        out
    }

    pub(crate) fn clone_meta(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples: Vec::new(),
            source_bit_depth: self.source_bit_depth,
        }
    }

    /// Replaces the samples, keeping the shape. Used by operations that build
    /// their output sample buffer directly.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Image {
        debug_assert_eq!(samples.len(), self.samples.len());
        let mut out = Image {
            samples,
            ..self.clone_meta()
        };
        out.clamp();
        out
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub(crate) fn clamp(&mut self) {
        for s in &mut self.samples {
            *s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Histogram bin of a `[0, 1]` sample: `floor(s * 255)`, with 1.0 in bin 255.
pub fn bin_index(sample: f64) -> usize {
    ((sample * 255.0).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Per-channel 256-bin histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: Vec<[u64; HISTOGRAM_BINS]>,
    total: u64,
}

impl Histogram {
    pub fn channels(&self) -> usize {
        self.bins.len()
    }

    pub fn channel(&self, c: usize) -> &[u64; HISTOGRAM_BINS] {
        &self.bins[c]
    }

    /// Pixel count (each channel's bins sum to this).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Cumulative counts of one channel.
    pub fn cumulative(&self, c: usize) -> [u64; HISTOGRAM_BINS] {
        let mut cdf = [0u64; HISTOGRAM_BINS];
        let mut acc = 0;
        for (k, &n) in self.bins[c].iter().enumerate() {
            acc += n;
            cdf[k] = acc;
        }
        cdf
    }
}

pub fn histogram(img: &Image) -> Histogram {
    let mut bins = vec![[0u64; HISTOGRAM_BINS]; img.channels()];
    for (i, &s) in img.samples().iter().enumerate() {
        bins[i % img.channels()][bin_index(s)] += 1;
    }
    Histogram {
        bins,
        total: img.pixel_count() as u64,
    }
}

/// N pre-registered images of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    images: Vec<Image>,
    scene_id: String,
}

impl ImageStack {
    /// Builds and validates a stack.
    pub fn new(scene_id: impl Into<String>, images: Vec<Image>) -> Result<Self> {
        validate_images(&images)?;
        Ok(Self {
            images,
            scene_id: scene_id.into(),
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn into_images(self) -> Vec<Image> {
        self.images
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Shape of every member image.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.images[0].shape()
    }

    /// The values of all N cameras at sample index `i`, written into `out`.
    pub(crate) fn column_into(&self, i: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.images.iter().map(|img| img.samples[i]));
    }
}

/// Checks the stack invariants: N >= 2 and identical width, height, channels.
pub fn validate_stack(stack: &ImageStack) -> Result<()> {
    validate_images(&stack.images)
}

pub(crate) fn validate_images(images: &[Image]) -> Result<()> {
    if images.len() < 2 {
        return Err(Error::StackTooSmall(images.len()));
    }
    let first = &images[0];
    for (index, img) in images.iter().enumerate().skip(1) {
        if (img.width, img.height) != (first.width, first.height) {
            return Err(Error::DimensionMismatch {
                index,
                expected: (first.width, first.height),
                found: (img.width, img.height),
            });
        }
        if img.channels != first.channels {
            return Err(Error::ChannelMismatch {
                index,
                expected: first.channels,
                found: img.channels,
            });
        }
    }
    Ok(())
}
