//! Reconstruction fidelity, point statistics and multi-seed repeatability.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ingest::{to_grayscale, ImageGrid};
use crate::off::encode_off;
use crate::pipeline::{convert_grid, ConversionConfig, PipelineError};
use crate::sampler::DenseCloud;
use crate::spatial::KdTree;

pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
pub const HISTOGRAM_BINS: usize = 32;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("cloud has no points")]
    EmptyCloud,
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("repeatability needs at least two seeds, got {0}")]
    TooFewSeeds(usize),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Splats each point's first feature back onto the `height × width` lattice.
///
/// Points land on their nearest pixel and hits are averaged. Pixels with no
/// hit copy the value of the nearest hit pixel.
pub fn reconstruct_image(
    cloud: &DenseCloud,
    height: usize,
    width: usize,
) -> Result<ImageGrid, QualityError> {
    if cloud.is_empty() {
        return Err(QualityError::EmptyCloud);
    }
    assert!(cloud.dims >= 3, "cloud has no feature coordinate");
    let scale = cloud.feature_scale;
    let mut sum = vec![0.0; height * width];
    let mut hits = vec![0u32; height * width];
    for p in cloud.iter() {
        let j = (p[0].round().max(0.0) as usize).min(width - 1);
        let up = (p[1].round().max(0.0) as usize).min(height - 1);
        let i = height - 1 - up;
        let v = if scale > 0.0 { p[2] / scale } else { 0.0 };
        sum[i * width + j] += v;
        hits[i * width + j] += 1;
    }
    let mut hit_coords = Vec::new();
    let mut hit_values = Vec::new();
    for (k, (&s, &h)) in sum.iter().zip(&hits).enumerate() {
        if h > 0 {
            hit_coords.extend_from_slice(&[(k / width) as f64, (k % width) as f64]);
            hit_values.push(s / f64::from(h));
        }
    }
    let tree = KdTree::new(&hit_coords, 2);
    let mut values = Vec::with_capacity(height * width);
    for k in 0..height * width {
        let v = if hits[k] > 0 {
            sum[k] / f64::from(hits[k])
        } else {
            let q = [(k / width) as f64, (k % width) as f64];
            let (id, _) = tree.nearest(&q).expect("at least one hit");
            hit_values[id]
        };
        values.push(v.clamp(0.0, 1.0));
    }
    Ok(ImageGrid::new(height, width, 1, values, "reconstruction").expect("values in range"))
}

fn same_size(a: &ImageGrid, b: &ImageGrid) -> Result<(), QualityError> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(QualityError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    Ok(())
}

/// Mean SSIM over every 8×8 window (uniform weights, population moments).
///
/// Images smaller than the window use a single window covering them.
pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64, QualityError> {
    same_size(a, b)?;
    let (ga, gb) = (to_grayscale(a), to_grayscale(b));
    let (x, y) = (ga.values(), gb.values());
    let (m, n) = (a.height(), a.width());
    let (wh, ww) = (SSIM_WINDOW.min(m), SSIM_WINDOW.min(n));
    let count = (wh * ww) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for i0 in 0..=m - wh {
        for j0 in 0..=n - ww {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in i0..i0 + wh {
                for j in j0..j0 + ww {
                    let (u, v) = (x[i * n + j], y[i * n + j]);
                    sx += u;
                    sy += v;
                    sxx += u * u;
                    syy += v * v;
                    sxy += u * v;
                }
            }
            let (mx, my) = (sx / count, sy / count);
            let vx = (sxx / count - mx * mx).max(0.0);
            let vy = (syy / count - my * my).max(0.0);
            let cov = sxy / count - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Peak signal-to-noise ratio on the `[0, 1]` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    /// The inputs are identical.
    Infinite,
    Decibels(f64),
}

impl Psnr {
    pub fn decibels(self) -> Option<f64> {
        match self {
            Psnr::Infinite => None,
            Psnr::Decibels(d) => Some(d),
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Infinite => f.write_str("inf"),
            Psnr::Decibels(d) => write!(f, "{d:.4}"),
        }
    }
}

pub fn psnr(a: &ImageGrid, b: &ImageGrid) -> Result<Psnr, QualityError> {
    same_size(a, b)?;
    let (ga, gb) = (to_grayscale(a), to_grayscale(b));
    let mse = ga
        .values()
        .iter()
        .zip(gb.values())
        .map(|(u, v)| (u - v).powi(2))
        .sum::<f64>()
        / ga.values().len() as f64;
    if mse == 0.0 {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Decibels(10.0 * (1.0 / mse).log10()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudStats {
    pub count: usize,
    /// Per-axis `(min, max)`.
    pub bbox: Vec<(f64, f64)>,
    pub mean_nn_distance: f64,
    /// Nearest-neighbor distances binned over `[0, bbox diagonal]`.
    pub nn_distance_histogram: [u64; HISTOGRAM_BINS],
    pub axis_mean: Vec<f64>,
    pub axis_variance: Vec<f64>,
    /// Fewer than two points, so nearest-neighbor figures are placeholders.
    pub degenerate: bool,
}

impl CloudStats {
    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox
            .iter()
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count={}", self.count);
        let _ = writeln!(s, "degenerate={}", self.degenerate);
        let _ = writeln!(s, "mean_nn_distance={}", self.mean_nn_distance);
        for (a, (lo, hi)) in self.bbox.iter().enumerate() {
            let _ = writeln!(s, "axis.{a}.min={lo}");
            let _ = writeln!(s, "axis.{a}.max={hi}");
            let _ = writeln!(s, "axis.{a}.mean={}", self.axis_mean[a]);
            let _ = writeln!(s, "axis.{a}.variance={}", self.axis_variance[a]);
        }
        let hist: Vec<String> = self
            .nn_distance_histogram
            .iter()
            .map(u64::to_string)
            .collect();
        let _ = writeln!(s, "nn_histogram={}", hist.join(","));
        s
    }
}

pub fn cloud_stats(cloud: &DenseCloud) -> CloudStats {
    point_stats(&cloud.points, cloud.dims)
}

/// Statistics for a point-major coordinate buffer.
pub fn point_stats(points: &[f64], dims: usize) -> CloudStats {
    let count = points.len() / dims;
    assert!(count >= 1, "statistics need at least one point");
    let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
    let mut axis_mean = vec![0.0; dims];
    for p in points.chunks_exact(dims) {
        for (a, &v) in p.iter().enumerate() {
            bbox[a].0 = bbox[a].0.min(v);
            bbox[a].1 = bbox[a].1.max(v);
            axis_mean[a] += v;
        }
    }
    axis_mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut axis_variance = vec![0.0; dims];
    for p in points.chunks_exact(dims) {
        for (a, &v) in p.iter().enumerate() {
            axis_variance[a] += (v - axis_mean[a]).powi(2);
        }
    }
    axis_variance.iter_mut().for_each(|v| *v /= count as f64);

    let diagonal = bbox
        .iter()
        .map(|(lo, hi)| (hi - lo).powi(2))
        .sum::<f64>()
        .sqrt();
    let tree = KdTree::new(points, dims);
    let distances: Vec<f64> = (0..count)
        .map(|id| tree.nearest_other(id).unwrap_or(0.0))
        .collect();
    let mut histogram = [0u64; HISTOGRAM_BINS];
    for &d in &distances {
        let bin = if diagonal > 0.0 {
            ((d / diagonal) * HISTOGRAM_BINS as f64) as usize
        } else {
            0
        };
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let degenerate = count < 2;
    let mean_nn_distance = if degenerate {
        0.0
    } else {
        distances.iter().sum::<f64>() / count as f64
    };
    CloudStats {
        count,
        bbox,
        mean_nn_distance,
        nn_distance_histogram: histogram,
        axis_mean,
        axis_variance,
        degenerate,
    }
}

/// Total-variation distance between two histograms, each normalized by its own mass.
pub fn histogram_tv(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedPair {
    pub first: u64,
    pub second: u64,
    pub ssim: f64,
    pub histogram_tv: f64,
    pub byte_identical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub seeds: Vec<u64>,
    pub checksums: Vec<String>,
    pub pairs: Vec<SeedPair>,
}

impl RepeatabilityReport {
    /// Repeated seeds reproduced their output byte for byte.
    pub fn deterministic(&self) -> bool {
        self.pairs
            .iter()
            .filter(|p| p.first == p.second)
            .all(|p| p.byte_identical)
    }

    pub fn min_ssim(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.ssim)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_histogram_tv(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.histogram_tv)
            .fold(0.0, f64::max)
    }

    /// Human-readable lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "seeds {} vs {}: ssim {:.6}, lattice tv {:.6}, identical bytes {}",
                p.first, p.second, p.ssim, p.histogram_tv, p.byte_identical
            );
        }
        let _ = writeln!(s, "deterministic: {}", self.deterministic());
        s
    }

    /// Machine-readable `key=value` summary.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds={}", seeds.join(","));
        for (k, sum) in self.checksums.iter().enumerate() {
            let _ = writeln!(s, "run.{k}.checksum={sum}");
        }
        for (k, p) in self.pairs.iter().enumerate() {
            let _ = writeln!(s, "pair.{k}.seeds={},{}", p.first, p.second);
            let _ = writeln!(s, "pair.{k}.ssim={}", p.ssim);
            let _ = writeln!(s, "pair.{k}.histogram_tv={}", p.histogram_tv);
            let _ = writeln!(s, "pair.{k}.byte_identical={}", p.byte_identical);
        }
        let _ = writeln!(s, "min_ssim={}", self.min_ssim());
        let _ = writeln!(s, "max_histogram_tv={}", self.max_histogram_tv());
        let _ = writeln!(s, "deterministic={}", self.deterministic());
        s
    }
}

struct SeedRun {
    bytes: Vec<u8>,
    reconstruction: ImageGrid,
    histogram: Vec<u64>,
}

/// Runs the full pipeline once per seed and compares every pair of runs.
///
/// Seeds run in parallel; results are reported in seed-list order.
pub fn repeatability_report(
    img: &ImageGrid,
    config: &ConversionConfig,
    seeds: &[u64],
) -> Result<RepeatabilityReport, QualityError> {
    if seeds.len() < 2 {
        return Err(QualityError::TooFewSeeds(seeds.len()));
    }
    let (m, n) = (img.height(), img.width());
    let run = |seed: u64| -> Result<SeedRun, QualityError> {
        let out = convert_grid(img, config, seed)?;
        let bytes = encode_off(&out.cloud).map_err(PipelineError::from_write)?;
        Ok(SeedRun {
            bytes,
            reconstruction: reconstruct_image(&out.cloud, m, n)?,
            histogram: out.cloud.lattice_histogram(),
        })
    };
    let runs: Vec<Result<SeedRun, QualityError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut pairs = Vec::new();
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            pairs.push(SeedPair {
                first: seeds[a],
                second: seeds[b],
                ssim: ssim(&runs[a].reconstruction, &runs[b].reconstruction)?,
                histogram_tv: histogram_tv(&runs[a].histogram, &runs[b].histogram),
                byte_identical: runs[a].bytes == runs[b].bytes,
            });
        }
    }
    Ok(RepeatabilityReport {
        seeds: seeds.to_vec(),
        checksums: runs
            .iter()
            .map(|r| crate::pipeline::checksum(&r.bytes))
            .collect(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constant(m: usize, n: usize, v: f64) -> ImageGrid {
        ImageGrid::from_fn(m, n, 1, |_, _, _| v)
    }

    #[test]
    fn ssim_identity_and_constants() {
        let img = ImageGrid::from_fn(12, 10, 1, |i, j, _| ((i * 3 + j * 5) % 7) as f64 / 6.0);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
        let s = ssim(&constant(8, 8, 0.0), &constant(8, 8, 1.0)).unwrap();
        assert_abs_diff_eq!(s, SSIM_C1 / (1.0 + SSIM_C1), epsilon = 1e-15);
        assert!(s.abs() < 1e-3);
    }

    #[test]
    fn ssim_color_inputs_use_luma() {
        let rgb = ImageGrid::from_fn(9, 9, 3, |i, j, c| ((i + j + c) % 4) as f64 / 3.0);
        let gray = to_grayscale(&rgb);
        assert_eq!(ssim(&rgb, &gray).unwrap(), 1.0);
    }

    #[test]
    fn size_mismatch() {
        assert!(matches!(
            ssim(&constant(4, 4, 0.0), &constant(4, 5, 0.0)),
            Err(QualityError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            psnr(&constant(4, 4, 0.0), &constant(5, 4, 0.0)),
            Err(QualityError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psnr_values() {
        let a = constant(6, 6, 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        let d = psnr(&a, &constant(6, 6, 0.5)).unwrap().decibels().unwrap();
        assert_abs_diff_eq!(d, 10.0 * 4f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(d, 6.0206, epsilon = 1e-4);
    }

    #[test]
    fn stats_two_points() {
        let s = point_stats(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3);
        assert_eq!(s.mean_nn_distance, 1.0);
        assert!(!s.degenerate);
        assert_eq!(s.nn_distance_histogram.iter().sum::<u64>(), 2);
        assert_eq!(s.axis_mean, vec![0.5, 0.0, 0.0]);
        assert_eq!(s.axis_variance, vec![0.25, 0.0, 0.0]);
    }

    #[test]
    fn stats_single_point() {
        let s = point_stats(&[1.0, 2.0, 3.0], 3);
        assert!(s.degenerate);
        assert_eq!(s.mean_nn_distance, 0.0);
        assert_eq!(s.nn_distance_histogram[0], 1);
    }

    #[test]
    fn tv_of_histograms() {
        assert_eq!(histogram_tv(&[1, 1], &[2, 2]), 0.0);
        assert_eq!(histogram_tv(&[1, 0], &[0, 3]), 1.0);
    }
}
