//! Curvature-weighted dense sampling of the lifted surface.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`; uniform reals take the top 53 bits of each
//! `u64` draw. Both steps are fully specified, so a seed reproduces the same
//! cloud on every platform.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::curvature::{fit_quadratic_patch, CurvatureField, QuadraticPatch};
use crate::features::FeatureStrategy;
use crate::mesh::{FaceKind, SurfaceMesh};

pub const DEFAULT_DELTA: f64 = 1e-6;

/// Jittered `(x, y)` offsets stay within this distance of their lattice point.
pub const JITTER: f64 = 0.5;

const POISSON_ATTEMPTS_PER_POINT: usize = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("mesh has no points")]
    EmptyMesh,
    #[error("point count must be at least 1")]
    InvalidN,
    #[error("curvature field is {kappa:?} but mesh is {mesh:?}")]
    DimensionMismatch {
        kappa: (usize, usize),
        mesh: (usize, usize),
    },
    #[error("unknown sampler mode '{0}'")]
    UnknownMode(String),
}

/// Seeded uniform source shared by every sampler in the crate.
#[derive(Debug, Clone)]
pub struct SampleRng(ChaCha8Rng);

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Per-image seed for batch runs; independent of scheduling.
pub fn derive_seed(master: u64, ordinal: u64) -> u64 {
    master ^ ordinal
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplingDistribution {
    /// Normalizes nonnegative weights; an all-zero input becomes uniform.
    pub fn from_weights(raw: &[f64]) -> Self {
        assert!(!raw.is_empty(), "empty distribution");
        assert!(
            raw.iter().all(|w| w.is_finite() && *w >= 0.0),
            "weights must be finite and nonnegative"
        );
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            return Self::from_weights(&vec![1.0; raw.len()]);
        }
        let weights = raw.iter().map(|w| w / total).collect();
        let mut running = 0.0;
        let cumulative = raw
            .iter()
            .map(|w| {
                running += w;
                running / total
            })
            .collect();
        Self {
            weights,
            cumulative,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `P(i) ∝ |kappa_i| + delta`.
pub fn curvature_distribution(kf: &CurvatureField, delta: f64) -> SamplingDistribution {
    let raw: Vec<f64> = kf.kappa.iter().map(|k| k.abs() + delta).collect();
    SamplingDistribution::from_weights(&raw)
}

/// Smallest (0-based) index whose cumulative weight reaches `r`.
#[inline]
pub fn inverse_cdf_sample(dist: &SamplingDistribution, r: f64) -> usize {
    dist.cumulative
        .partition_point(|&c| c < r)
        .min(dist.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SamplerMode {
    #[default]
    MonteCarlo,
    PoissonDisk,
}

impl SamplerMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplerMode::MonteCarlo => "monte-carlo",
            SamplerMode::PoissonDisk => "poisson-disk",
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerMode {
    type Err = SampleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monte-carlo" => Ok(SamplerMode::MonteCarlo),
            "poisson-disk" => Ok(SamplerMode::PoissonDisk),
            other => Err(SampleError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub strategy: FeatureStrategy,
    pub face_kind: FaceKind,
    pub mode: SamplerMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCloud {
    pub dims: usize,
    /// `len() * dims` coordinates, point-major.
    pub points: Vec<f64>,
    /// Lattice index each point was drawn from.
    pub sources: Vec<usize>,
    pub seed: u64,
    pub provenance: Provenance,
    /// Lattice the cloud was drawn over, `(height, width)`.
    pub lattice: (usize, usize),
    /// Factor that maps `[0, 1]` features to mesh units.
    pub feature_scale: f64,
}

impl DenseCloud {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dims..(k + 1) * self.dims]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dims)
    }

    /// Number of draws per lattice index.
    pub fn lattice_histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.lattice.0 * self.lattice.1];
        for &s in &self.sources {
            h[s] += 1;
        }
        h
    }
}

/// Evaluates feature coordinates at sub-pixel offsets from local quadratic fits.
///
/// The fitted constant term is replaced by the lattice value, so the
/// evaluated surface passes through every sparse point. Patches are fitted
/// lazily with radius 1, widened to 2 on degenerate borders; where neither
/// works the lattice value is used as-is. Results are clamped to the
/// cloud's per-feature range.
struct SurfaceEvaluator<'a> {
    mesh: &'a SurfaceMesh,
    ranges: Vec<(f64, f64)>,
    patches: Vec<Option<Option<QuadraticPatch>>>,
}

impl<'a> SurfaceEvaluator<'a> {
    fn new(mesh: &'a SurfaceMesh) -> Self {
        Self {
            mesh,
            ranges: mesh.cloud.feature_ranges(),
            patches: vec![None; mesh.cloud.len()],
        }
    }

    fn emit(&mut self, idx: usize, dx: f64, dy: f64, out: &mut Vec<f64>) {
        let cloud = &self.mesh.cloud;
        let patch = self.patches[idx]
            .get_or_insert_with(|| {
                let at = cloud.project(idx);
                fit_quadratic_patch(cloud, at, 1)
                    .or_else(|_| fit_quadratic_patch(cloud, at, 2))
                    .ok()
            })
            .as_ref();
        let base = cloud.point_at(idx);
        out.push(base[0] + dx);
        out.push(base[1] + dy);
        for (d, &(lo, hi)) in self.ranges.iter().enumerate() {
            let anchor = base[2 + d];
            let v = match patch {
                Some(p) => anchor + (p.eval(d, dx, dy) - p.coeffs[d][0]),
                None => anchor,
            };
            out.push(v.clamp(lo, hi));
        }
    }
}

pub fn densify(
    mesh: &SurfaceMesh,
    kf: &CurvatureField,
    n: usize,
    seed: u64,
    mode: SamplerMode,
) -> Result<DenseCloud, SampleError> {
    check_inputs(mesh, kf, n)?;
    let dist = curvature_distribution(kf, DEFAULT_DELTA);
    densify_with_distribution(mesh, &dist, n, seed, mode)
}

fn check_inputs(mesh: &SurfaceMesh, kf: &CurvatureField, n: usize) -> Result<(), SampleError> {
    if mesh.cloud.is_empty() {
        return Err(SampleError::EmptyMesh);
    }
    if n == 0 {
        return Err(SampleError::InvalidN);
    }
    let mesh_dims = (mesh.cloud.height(), mesh.cloud.width());
    if (kf.height, kf.width) != mesh_dims {
        return Err(SampleError::DimensionMismatch {
            kappa: (kf.height, kf.width),
            mesh: mesh_dims,
        });
    }
    Ok(())
}

/// Draws `n` points from an explicit lattice distribution.
///
/// Monte Carlo draws, per point and in this order: `r` for the index, then
/// the x and y jitter. A cloud of `n` points is therefore a prefix of the
/// cloud of any larger `n` under the same seed.
pub fn densify_with_distribution(
    mesh: &SurfaceMesh,
    dist: &SamplingDistribution,
    n: usize,
    seed: u64,
    mode: SamplerMode,
) -> Result<DenseCloud, SampleError> {
    if mesh.cloud.is_empty() {
        return Err(SampleError::EmptyMesh);
    }
    if n == 0 {
        return Err(SampleError::InvalidN);
    }
    assert_eq!(dist.len(), mesh.cloud.len(), "distribution size mismatch");
    let mut rng = SampleRng::new(seed);
    let mut eval = SurfaceEvaluator::new(mesh);
    let dims = mesh.cloud.dims();
    let mut points = Vec::with_capacity(n * dims);
    let mut sources = Vec::with_capacity(n);

    if mode == SamplerMode::PoissonDisk {
        poisson_darts(
            mesh,
            dist,
            n,
            &mut rng,
            &mut eval,
            &mut points,
            &mut sources,
        );
    }
    while sources.len() < n {
        let (idx, dx, dy) = draw(dist, &mut rng);
        eval.emit(idx, dx, dy, &mut points);
        sources.push(idx);
    }

    Ok(DenseCloud {
        dims,
        points,
        sources,
        seed,
        provenance: Provenance {
            strategy: mesh.cloud.strategy(),
            face_kind: mesh.face_kind,
            mode,
        },
        lattice: (mesh.cloud.height(), mesh.cloud.width()),
        feature_scale: mesh.cloud.feature_scale(),
    })
}

#[inline]
fn draw(dist: &SamplingDistribution, rng: &mut SampleRng) -> (usize, f64, f64) {
    // 1 - u lies in (0, 1], so a zero-weight leading bin is never chosen.
    let r = 1.0 - rng.next_f64();
    let idx = inverse_cdf_sample(dist, r);
    let dx = rng.next_f64() - JITTER;
    let dy = rng.next_f64() - JITTER;
    (idx, dx, dy)
}

/// Dart throwing in the `(x, y)` footprint with exclusion radius
/// `0.5 / sqrt(n * P(i))` mesh units around each candidate.
fn poisson_darts(
    mesh: &SurfaceMesh,
    dist: &SamplingDistribution,
    n: usize,
    rng: &mut SampleRng,
    eval: &mut SurfaceEvaluator<'_>,
    points: &mut Vec<f64>,
    sources: &mut Vec<usize>,
) {
    let (height, width) = (mesh.cloud.height(), mesh.cloud.width());
    let max_radius = height.max(width) as f64;
    // Bucket grid of unit cells covering the jittered footprint.
    let (gw, gh) = (width + 2, height + 2);
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); gw * gh];
    let bucket_of = |x: f64, y: f64| -> (usize, usize) {
        let bx = ((x + 1.0).floor().max(0.0) as usize).min(gw - 1);
        let by = ((y + 1.0).floor().max(0.0) as usize).min(gh - 1);
        (bx, by)
    };

    let mut attempts = 0;
    while sources.len() < n && attempts < POISSON_ATTEMPTS_PER_POINT * n {
        attempts += 1;
        let (idx, dx, dy) = draw(dist, rng);
        let p = mesh.cloud.point_at(idx);
        let (x, y) = (p[0] + dx, p[1] + dy);
        let radius = (0.5 / (n as f64 * dist.weights()[idx]).sqrt()).min(max_radius);
        let reach = radius.ceil() as isize;
        let (bx, by) = bucket_of(x, y);
        let mut clear = true;
        'scan: for cy in (by as isize - reach).max(0)..=(by as isize + reach).min(gh as isize - 1) {
            for cx in (bx as isize - reach).max(0)..=(bx as isize + reach).min(gw as isize - 1) {
                for &(qx, qy) in &buckets[cy as usize * gw + cx as usize] {
                    if (qx - x).powi(2) + (qy - y).powi(2) < radius * radius {
                        clear = false;
                        break 'scan;
                    }
                }
            }
        }
        if clear {
            buckets[by * gw + bx].push((x, y));
            eval.emit(idx, dx, dy, points);
            sources.push(idx);
        }
    }
}
