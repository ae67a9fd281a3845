//! Raster loading and the normalized grid every other stage consumes.

use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An `height × width × channels` raster with values in `[0, 1]`.
///
/// Row 0 is the top image row. Values are stored row-major with channels
/// interleaved, so pixel `(i, j)` channel `c` lives at `(i * width + j) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
    source_id: String,
}

impl ImageGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
        source_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        if height == 0 || width == 0 {
            return Err(IngestError::InvalidGrid(format!(
                "empty grid {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(IngestError::InvalidGrid(format!(
                "channel count {channels} is not 1 or 3"
            )));
        }
        if values.len() != height * width * channels {
            return Err(IngestError::InvalidGrid(format!(
                "expected {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IngestError::InvalidGrid(format!(
                "value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
            source_id: source_id.into(),
        })
    }

    /// Builds a grid by evaluating `f(i, j, c)`; panics if any value leaves `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    values.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, values, "synthetic").expect("valid synthetic grid")
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[(i * self.width + j) * self.channels + c]
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.width + j) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.channels)
    }

    /// Three-channel view; single-channel grids are broadcast to `(v, v, v)`.
    pub fn to_rgb(&self) -> ImageGrid {
        if self.channels == 3 {
            return self.clone();
        }
        let values = self.values.iter().flat_map(|&v| [v, v, v]).collect();
        ImageGrid {
            channels: 3,
            values,
            ..self.clone()
        }
    }

    /// Writes an 8-bit PNG. Values are rounded to the nearest of 256 levels.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
            ImageFormat::Png,
        )
        .map_err(|e| IngestError::CorruptImage(e.to_string()))
    }
}

/// Decodes a PNG, JPEG or BMP file into a normalized grid.
///
/// Grayscale sources (with or without alpha) yield one channel, everything
/// else three. Alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid, IngestError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(IngestError::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(IngestError::Io)?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Bmp) => {}
        Some(other) => return Err(IngestError::UnsupportedFormat(format!("{other:?}"))),
        None => {
            return Err(IngestError::UnsupportedFormat(
                path.extension()
                    .map(|e| e.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "unknown".into()),
            ))
        }
    }
    let decoded = reader
        .decode()
        .map_err(|e| IngestError::CorruptImage(e.to_string()))?;
    let id = path.to_string_lossy().into_owned();
    Ok(from_dynamic(&decoded, id))
}

fn from_dynamic(img: &DynamicImage, source_id: String) -> ImageGrid {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    let (channels, raw) = if gray {
        (1, img.to_luma8().into_raw())
    } else {
        (3, img.to_rgb8().into_raw())
    };
    let values = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    ImageGrid {
        height,
        width,
        channels,
        values,
        source_id,
    }
}

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// BT.601 luma of one RGB pixel, kept inside `[min, max]` of its channels.
#[inline]
pub(crate) fn luma(rgb: &[f64]) -> f64 {
    let v = LUMA_WEIGHTS[0] * rgb[0] + LUMA_WEIGHTS[1] * rgb[1] + LUMA_WEIGHTS[2] * rgb[2];
    clamp_to_channels(v, rgb)
}

/// Clamps a convex combination of `rgb` back into the channel range, absorbing rounding.
#[inline]
pub(crate) fn clamp_to_channels(v: f64, rgb: &[f64]) -> f64 {
    let lo = rgb.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rgb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.clamp(lo, hi)
}

pub fn to_grayscale(img: &ImageGrid) -> ImageGrid {
    if img.channels == 1 {
        return img.clone();
    }
    let values = img.pixels().map(luma).collect();
    ImageGrid {
        channels: 1,
        values,
        ..img.clone()
    }
}
