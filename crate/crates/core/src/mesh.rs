//! Sparse point cloud assembly and lattice face construction.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::features::{FeatureField, FeatureStrategy};
use crate::ingest::ImageGrid;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("lattice index ({i}, {j}) outside {height}x{width}")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        height: usize,
        width: usize,
    },
    #[error("point buffer has {got} values, expected {expected}")]
    BadPointBuffer { got: usize, expected: usize },
    #[error("unknown face kind '{0}'")]
    UnknownFaceKind(String),
}

/// An `height × width` pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub height: usize,
    pub width: usize,
}

impl Lattice {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, (i, j): (usize, usize)) -> Result<(), MeshError> {
        if i < self.height && j < self.width {
            Ok(())
        } else {
            Err(MeshError::IndexOutOfRange {
                i,
                j,
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Neighborhood predicate: `|i - k| <= 1 && |j - l| <= 1`.
    ///
    /// A point is adjacent to itself. The `(mn)^2` indicator tensor this
    /// describes is never materialized.
    pub fn adjacent(&self, p: (usize, usize), q: (usize, usize)) -> Result<bool, MeshError> {
        self.check(p)?;
        self.check(q)?;
        Ok(p.0.abs_diff(q.0) <= 1 && p.1.abs_diff(q.1) <= 1)
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        (idx / self.width, idx % self.width)
    }
}

/// One point per pixel: `(x, y, f_1, .., f_{dims-2})`.
///
/// `x = j`, `y = (height - 1) - i`, and features are scaled by
/// `max(height, width) - 1` so every axis spans the same extent.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCloud {
    lattice: Lattice,
    dims: usize,
    points: Vec<f64>,
    strategy: FeatureStrategy,
}

impl SparseCloud {
    /// Wraps an explicit point buffer (`height * width * dims` values in lattice order).
    pub fn from_points(
        lattice: Lattice,
        strategy: FeatureStrategy,
        points: Vec<f64>,
    ) -> Result<Self, MeshError> {
        let dims = usize::from(strategy.dims());
        let expected = lattice.len() * dims;
        if points.len() != expected {
            return Err(MeshError::BadPointBuffer {
                got: points.len(),
                expected,
            });
        }
        Ok(Self {
            lattice,
            dims,
            points,
            strategy,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn height(&self) -> usize {
        self.lattice.height
    }

    pub fn width(&self) -> usize {
        self.lattice.width
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims - 2
    }

    pub fn strategy(&self) -> FeatureStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Factor applied to `[0, 1]` features to reach mesh units.
    pub fn feature_scale(&self) -> f64 {
        feature_scale(self.lattice)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize, j: usize) -> &[f64] {
        self.point_at(self.lattice.flat(i, j))
    }

    pub fn point_at(&self, idx: usize) -> &[f64] {
        &self.points[idx * self.dims..(idx + 1) * self.dims]
    }

    /// Feature `d` at lattice `(i, j)`, in mesh units.
    #[inline]
    pub fn feature(&self, i: usize, j: usize, d: usize) -> f64 {
        self.points[self.lattice.flat(i, j) * self.dims + 2 + d]
    }

    /// Projection back to the pixel lattice; identity on indices.
    pub fn project(&self, idx: usize) -> (usize, usize) {
        self.lattice.unflat(idx)
    }

    /// Per-feature `(min, max)` over all points.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.depth())
            .map(|d| {
                self.points
                    .iter()
                    .skip(2 + d)
                    .step_by(self.dims)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    /// Per-axis `(min, max)` across all coordinates.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![
            (0.0, (self.width() - 1) as f64),
            (0.0, (self.height() - 1) as f64),
        ];
        b.extend(self.feature_ranges());
        b
    }
}

pub(crate) fn feature_scale(lattice: Lattice) -> f64 {
    (lattice.height.max(lattice.width) - 1) as f64
}

pub fn build_sparse_cloud(img: &ImageGrid, strategy: FeatureStrategy) -> SparseCloud {
    let field = strategy.extract(img);
    sparse_cloud_from_field(&field, strategy)
}

pub fn sparse_cloud_from_field(field: &FeatureField, strategy: FeatureStrategy) -> SparseCloud {
    let lattice = Lattice::new(field.height, field.width);
    let dims = usize::from(strategy.dims());
    assert_eq!(field.depth, dims - 2, "field depth does not match strategy");
    let scale = feature_scale(lattice);
    let mut points = Vec::with_capacity(lattice.len() * dims);
    for i in 0..lattice.height {
        for j in 0..lattice.width {
            points.push(j as f64);
            points.push((lattice.height - 1 - i) as f64);
            for d in 0..field.depth {
                points.push(field.get(i, j, d) * scale);
            }
        }
    }
    SparseCloud {
        lattice,
        dims,
        points,
        strategy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceKind {
    Triangle,
    Square,
}

impl FaceKind {
    pub fn arity(self) -> usize {
        match self {
            FaceKind::Triangle => 3,
            FaceKind::Square => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaceKind::Triangle => "triangle",
            FaceKind::Square => "square",
        }
    }
}

impl fmt::Display for FaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaceKind {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangle" => Ok(FaceKind::Triangle),
            "square" => Ok(FaceKind::Square),
            other => Err(MeshError::UnknownFaceKind(other.to_string())),
        }
    }
}

/// The sparse cloud plus its polygonal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub cloud: SparseCloud,
    pub face_kind: FaceKind,
    faces: Vec<usize>,
}

impl SurfaceMesh {
    pub fn face_count(&self) -> usize {
        self.faces.len() / self.face_kind.arity()
    }

    pub fn faces(&self) -> std::slice::ChunksExact<'_, usize> {
        self.faces.chunks_exact(self.face_kind.arity())
    }
}

/// Faces over every 2×2 cell.
///
/// Quads run `(i,j) (i,j+1) (i+1,j+1) (i+1,j)`; triangles split each quad
/// along the `(i,j)-(i+1,j+1)` diagonal, keeping the same winding.
pub fn build_faces(cloud: SparseCloud, face_kind: FaceKind) -> SurfaceMesh {
    let lat = cloud.lattice();
    let cells = lat.height.saturating_sub(1) * lat.width.saturating_sub(1);
    let per_cell = match face_kind {
        FaceKind::Triangle => 6,
        FaceKind::Square => 4,
    };
    let mut faces = Vec::with_capacity(cells * per_cell);
    for i in 0..lat.height.saturating_sub(1) {
        for j in 0..lat.width.saturating_sub(1) {
            let a = lat.flat(i, j);
            let b = lat.flat(i, j + 1);
            let c = lat.flat(i + 1, j + 1);
            let d = lat.flat(i + 1, j);
            match face_kind {
                FaceKind::Square => faces.extend_from_slice(&[a, b, c, d]),
                FaceKind::Triangle => faces.extend_from_slice(&[a, b, c, a, c, d]),
            }
        }
    }
    SurfaceMesh {
        cloud,
        face_kind,
        faces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use proptest::prelude::*;

    fn rgb_mean() -> FeatureStrategy {
        FeatureStrategy::surface(FeatureKind::RgbMean)
    }

    #[test]
    fn black_two_by_two() {
        let img = ImageGrid::from_fn(2, 2, 3, |_, _, _| 0.0);
        let cloud = build_sparse_cloud(&img, rgb_mean());
        assert_eq!(cloud.len(), 4);
        assert_eq!(cloud.point(0, 0), &[0.0, 1.0, 0.0]);
        assert_eq!(cloud.point(1, 1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn single_pixel_collapses_to_origin() {
        let img = ImageGrid::from_fn(1, 1, 3, |_, _, _| 1.0);
        let cloud = build_sparse_cloud(&img, rgb_mean());
        assert_eq!(cloud.points(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn ramp_scaled_by_extent() {
        let img = ImageGrid::from_fn(3, 3, 3, |_, j, _| j as f64 / 2.0);
        let cloud = build_sparse_cloud(&img, rgb_mean());
        for i in 0..3 {
            let zs: Vec<f64> = (0..3).map(|j| cloud.feature(i, j, 0)).collect();
            assert_eq!(zs, vec![0.0, 1.0, 2.0]);
        }
    }

    #[test]
    fn adjacency_predicate() {
        let lat = Lattice::new(3, 3);
        assert!(lat.adjacent((0, 0), (0, 1)).unwrap());
        assert!(!lat.adjacent((0, 0), (2, 0)).unwrap());
        assert!(lat.adjacent((0, 0), (0, 0)).unwrap());
        assert!(lat.adjacent((1, 1), (2, 2)).unwrap());
        assert!(matches!(
            lat.adjacent((0, 0), (3, 0)),
            Err(MeshError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn face_counts_small() {
        let cloud = build_sparse_cloud(&ImageGrid::from_fn(3, 3, 3, |_, _, _| 0.5), rgb_mean());
        assert_eq!(
            build_faces(cloud.clone(), FaceKind::Triangle).face_count(),
            8
        );
        assert_eq!(build_faces(cloud, FaceKind::Square).face_count(), 4);
        let strip = build_sparse_cloud(&ImageGrid::from_fn(1, 5, 3, |_, _, _| 0.5), rgb_mean());
        assert_eq!(
            build_faces(strip.clone(), FaceKind::Triangle).face_count(),
            0
        );
        assert_eq!(build_faces(strip, FaceKind::Square).face_count(), 0);
    }

    #[test]
    fn square_face_vertex_order() {
        let cloud = build_sparse_cloud(&ImageGrid::from_fn(2, 2, 3, |_, _, _| 0.0), rgb_mean());
        let mesh = build_faces(cloud, FaceKind::Square);
        assert_eq!(mesh.faces().next().unwrap(), &[0, 1, 3, 2]);
    }

    proptest! {
        #[test]
        fn lattice_regularity(m in 2usize..40, n in 2usize..40, tri in any::<bool>()) {
            let kind = if tri { FaceKind::Triangle } else { FaceKind::Square };
            let img = ImageGrid::from_fn(m, n, 1, |i, j, _| ((i * 31 + j * 17) % 11) as f64 / 10.0);
            let mesh = build_faces(build_sparse_cloud(&img, rgb_mean()), kind);
            let lat = mesh.cloud.lattice();
            let mut uses = vec![0usize; lat.len()];
            for face in mesh.faces() {
                for (a, &p) in face.iter().enumerate() {
                    uses[p] += 1;
                    for &q in &face[a + 1..] {
                        prop_assert_ne!(p, q);
                        prop_assert!(lat.adjacent(lat.unflat(p), lat.unflat(q)).unwrap());
                    }
                }
            }
            let per_interior = if tri { 6 } else { 4 };
            for i in 1..m - 1 {
                for j in 1..n - 1 {
                    prop_assert_eq!(uses[lat.flat(i, j)], per_interior);
                }
            }
        }

        #[test]
        fn footprint_tiles_lattice(m in 1usize..20, n in 1usize..20) {
            let img = ImageGrid::from_fn(m, n, 3, |_, _, _| 0.25);
            let cloud = build_sparse_cloud(&img, rgb_mean());
            let mut seen = std::collections::HashSet::new();
            for idx in 0..cloud.len() {
                let p = cloud.point_at(idx);
                let (i, j) = cloud.project(idx);
                prop_assert_eq!(p[0], j as f64);
                prop_assert_eq!(p[1], (m - 1 - i) as f64);
                prop_assert!(seen.insert((p[0] as i64, p[1] as i64)));
            }
            prop_assert_eq!(seen.len(), m * n);
        }
    }
}
