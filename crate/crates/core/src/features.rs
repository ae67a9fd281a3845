//! Feature lifts: the per-pixel coordinates appended after `(x, y)`.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::ingest::{clamp_to_channels, luma, ImageGrid, LUMA_WEIGHTS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("invalid dimension count {0}, expected 3, 4 or 5")]
    InvalidDims(u8),
    #[error("unknown feature strategy '{0}'")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    RgbMean,
    Fourier,
    Brightness,
    Grayscale,
    HsvValue,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::RgbMean,
        FeatureKind::Fourier,
        FeatureKind::Brightness,
        FeatureKind::Grayscale,
        FeatureKind::HsvValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::RgbMean => "rgb-mean",
            FeatureKind::Fourier => "fourier",
            FeatureKind::Brightness => "brightness",
            FeatureKind::Grayscale => "grayscale",
            FeatureKind::HsvValue => "hsv-v",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FeatureError::UnknownKind(s.to_string()))
    }
}

/// Single-channel reductions of an RGB pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Brightness,
    Grayscale,
    HsvValue,
}

/// Which lift to apply and how many output dimensions the cloud has.
///
/// With `dims` of 4 or 5 the kind is ignored and the raw color channels
/// become coordinates: `(R, B)` or `(R, G, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureStrategy {
    kind: FeatureKind,
    dims: u8,
}

impl FeatureStrategy {
    pub fn new(kind: FeatureKind, dims: u8) -> Result<Self, FeatureError> {
        if !(3..=5).contains(&dims) {
            return Err(FeatureError::InvalidDims(dims));
        }
        Ok(Self { kind, dims })
    }

    pub fn surface(kind: FeatureKind) -> Self {
        Self { kind, dims: 3 }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dims(&self) -> u8 {
        self.dims
    }

    pub fn depth(&self) -> usize {
        usize::from(self.dims) - 2
    }

    /// Short label used in manifests, e.g. `hsv-v` or `rgb-5d`.
    pub fn label(&self) -> String {
        match self.dims {
            3 => self.kind.name().to_string(),
            d => format!("rgb-{d}d"),
        }
    }

    pub fn extract(&self, img: &ImageGrid) -> FeatureField {
        match (self.dims, self.kind) {
            (3, FeatureKind::RgbMean) => z_rgb_mean(img),
            (3, FeatureKind::Fourier) => z_fourier(img),
            (3, FeatureKind::Brightness) => z_channel(img, ChannelKind::Brightness),
            (3, FeatureKind::Grayscale) => z_channel(img, ChannelKind::Grayscale),
            (3, FeatureKind::HsvValue) => z_channel(img, ChannelKind::HsvValue),
            (d, _) => lift_multidim(img, d).expect("dims validated at construction"),
        }
    }
}

/// `height × width × depth` feature values, row-major with features interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub values: Vec<f64>,
}

impl FeatureField {
    #[inline]
    pub fn get(&self, i: usize, j: usize, d: usize) -> f64 {
        self.values[(i * self.width + j) * self.depth + d]
    }

    /// One feature as a flat row-major plane.
    pub fn channel(&self, d: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(d)
            .step_by(self.depth)
            .copied()
            .collect()
    }
}

fn scalar_field(img: &ImageGrid, f: impl Fn(&[f64]) -> f64) -> FeatureField {
    let rgb = img.to_rgb();
    FeatureField {
        height: img.height(),
        width: img.width(),
        depth: 1,
        values: rgb.pixels().map(f).collect(),
    }
}

/// Mean of the three color channels.
pub fn z_rgb_mean(img: &ImageGrid) -> FeatureField {
    scalar_field(img, |p| clamp_to_channels((p[0] + p[1] + p[2]) / 3.0, p))
}

pub fn z_channel(img: &ImageGrid, kind: ChannelKind) -> FeatureField {
    match kind {
        ChannelKind::Grayscale => scalar_field(img, luma),
        ChannelKind::Brightness => scalar_field(img, |p| {
            let sq = LUMA_WEIGHTS[0] * p[0] * p[0]
                + LUMA_WEIGHTS[1] * p[1] * p[1]
                + LUMA_WEIGHTS[2] * p[2] * p[2];
            clamp_to_channels(sq.sqrt(), p)
        }),
        ChannelKind::HsvValue => scalar_field(img, |p| p[0].max(p[1]).max(p[2])),
    }
}

/// Raw color channels as trailing coordinates: `(R, B)` for 4 dims, `(R, G, B)` for 5.
pub fn lift_multidim(img: &ImageGrid, dims: u8) -> Result<FeatureField, FeatureError> {
    let picks: &[usize] = match dims {
        4 => &[0, 2],
        5 => &[0, 1, 2],
        d => return Err(FeatureError::InvalidDims(d)),
    };
    let rgb = img.to_rgb();
    let values = rgb
        .pixels()
        .flat_map(|p| picks.iter().map(move |&c| p[c]))
        .collect();
    Ok(FeatureField {
        height: img.height(),
        width: img.width(),
        depth: picks.len(),
        values,
    })
}

/// Per-bin L2 norm across channels of each channel's full 2D DFT.
///
/// Bin `(i, j)` of the result is `sqrt(sum_c |F_c(i, j)|^2)` with
/// `F_c(u, v) = sum_{a,b} I(a, b, c) exp(-2 pi i (u a / m + v b / n))`.
pub fn fourier_magnitude(img: &ImageGrid) -> Vec<f64> {
    let (m, n) = (img.height(), img.width());
    let rgb = img.to_rgb();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(n);
    let col_fft = planner.plan_fft_forward(m);

    let mut energy = vec![0.0; m * n];
    let mut buf = vec![Complex::new(0.0, 0.0); m * n];
    let mut column = vec![Complex::new(0.0, 0.0); m];
    for c in 0..3 {
        for (slot, px) in buf.iter_mut().zip(rgb.pixels()) {
            *slot = Complex::new(px[c], 0.0);
        }
        for row in buf.chunks_exact_mut(n) {
            row_fft.process(row);
        }
        for j in 0..n {
            for i in 0..m {
                column[i] = buf[i * n + j];
            }
            col_fft.process(&mut column);
            for i in 0..m {
                buf[i * n + j] = column[i];
            }
        }
        for (e, z) in energy.iter_mut().zip(&buf) {
            *e += z.norm_sqr();
        }
    }
    energy.into_iter().map(f64::sqrt).collect()
}

/// Fourier-magnitude lift, `log1p`-compressed and min-max normalized to `[0, 1]`.
pub fn z_fourier(img: &ImageGrid) -> FeatureField {
    let compressed: Vec<f64> = fourier_magnitude(img).into_iter().map(f64::ln_1p).collect();
    let lo = compressed.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = compressed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span > 0.0 {
        compressed
            .iter()
            .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; compressed.len()]
    };
    FeatureField {
        height: img.height(),
        width: img.width(),
        depth: 1,
        values,
    }
}
