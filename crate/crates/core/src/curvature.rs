//! Finite-difference derivatives and Gaussian curvature of lattice height fields.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::SparseCloud;

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CurvatureError {
    #[error("neighborhood of ({i}, {j}) cannot support a quadratic fit")]
    DegenerateNeighborhood { i: usize, j: usize },
}

/// A single-valued function on an `height × width` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(height, width, values)
    }

    /// Feature `d` of a sparse cloud, in mesh units.
    pub fn from_cloud(cloud: &SparseCloud, d: usize) -> Self {
        Self::from_fn(cloud.height(), cloud.width(), |i, j| cloud.feature(i, j, d))
    }

    /// Value with replicate padding outside the lattice.
    #[inline]
    fn at(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.height as isize - 1) as usize;
        let j = j.clamp(0, self.width as isize - 1) as usize;
        self.values[i * self.width + j]
    }
}

/// Symmetric 2×2 Hessian `[[ii, ij], [ij, jj]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hessian {
    pub ii: f64,
    pub ij: f64,
    pub jj: f64,
}

impl Hessian {
    pub fn det(&self) -> f64 {
        self.ii * self.jj - self.ij * self.ij
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialField {
    pub height: usize,
    pub width: usize,
    /// `(dI/di, dI/dj)` per lattice point.
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Hessian>,
}

pub fn differential_fields(z: &ScalarGrid) -> DifferentialField {
    differential_fields_with_spacing(z, 1.0)
}

/// Central differences with lattice spacing `h`, replicate-padded at the border.
pub fn differential_fields_with_spacing(z: &ScalarGrid, h: f64) -> DifferentialField {
    let n = z.height * z.width;
    let mut grad = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    let (h2, hh) = (2.0 * h, h * h);
    for i in 0..z.height as isize {
        for j in 0..z.width as isize {
            let c = z.at(i, j);
            let (up, down) = (z.at(i - 1, j), z.at(i + 1, j));
            let (left, right) = (z.at(i, j - 1), z.at(i, j + 1));
            grad.push([(down - up) / h2, (right - left) / h2]);
            let cross =
                z.at(i + 1, j + 1) - z.at(i + 1, j - 1) - z.at(i - 1, j + 1) + z.at(i - 1, j - 1);
            hess.push(Hessian {
                ii: (down - 2.0 * c + up) / hh,
                ij: cross / (4.0 * hh),
                jj: (right - 2.0 * c + left) / hh,
            });
        }
    }
    DifferentialField {
        height: z.height,
        width: z.width,
        grad,
        hess,
    }
}

/// How determinant and gradient combine into a curvature value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurvatureModel {
    /// `det(H) / (|grad|^2 + eps)`.
    #[default]
    GradientNormalized,
    /// Gaussian curvature of the graph surface, `det(H) / (1 + |grad|^2)^2`.
    GraphSurface,
}

impl CurvatureModel {
    /// Curvature for one point, clamped to `|kappa| <= 1 / eps`.
    #[inline]
    pub fn kappa(self, hess: &Hessian, grad: [f64; 2], epsilon: f64) -> f64 {
        let g2 = grad[0] * grad[0] + grad[1] * grad[1];
        let k = match self {
            CurvatureModel::GradientNormalized => hess.det() / (g2 + epsilon),
            CurvatureModel::GraphSurface => hess.det() / ((1.0 + g2) * (1.0 + g2)),
        };
        let cap = 1.0 / epsilon;
        k.clamp(-cap, cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub height: usize,
    pub width: usize,
    pub kappa: Vec<f64>,
    pub epsilon: f64,
}

pub fn gaussian_curvature(d: &DifferentialField, epsilon: f64) -> CurvatureField {
    gaussian_curvature_with(d, epsilon, CurvatureModel::GradientNormalized)
}

pub fn gaussian_curvature_with(
    d: &DifferentialField,
    epsilon: f64,
    model: CurvatureModel,
) -> CurvatureField {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let kappa = d
        .hess
        .iter()
        .zip(&d.grad)
        .map(|(h, &g)| model.kappa(h, g, epsilon))
        .collect();
    CurvatureField {
        height: d.height,
        width: d.width,
        kappa,
        epsilon,
    }
}

/// Curvature of a sparse cloud's feature surfaces.
///
/// A single feature yields signed curvature. With several features each
/// channel's graph is handled separately and the field is the mean of `|kappa|`.
pub fn cloud_curvature(cloud: &SparseCloud, epsilon: f64, model: CurvatureModel) -> CurvatureField {
    let depth = cloud.depth();
    let fields: Vec<CurvatureField> = (0..depth)
        .map(|d| {
            let diff = differential_fields(&ScalarGrid::from_cloud(cloud, d));
            gaussian_curvature_with(&diff, epsilon, model)
        })
        .collect();
    if depth == 1 {
        return fields.into_iter().next().expect("one field");
    }
    let n = cloud.len();
    let kappa = (0..n)
        .map(|p| fields.iter().map(|f| f.kappa[p].abs()).sum::<f64>() / depth as f64)
        .collect();
    CurvatureField {
        height: cloud.height(),
        width: cloud.width(),
        kappa,
        epsilon,
    }
}

/// Local quadratic model `S0 + x Sx + y Sy + x^2 Sxx + 2xy Sxy + y^2 Syy`
/// around a lattice point, in cloud `(x, y)` offsets.
///
/// One coefficient set per feature channel, ordered `[S0, Sx, Sy, Sxx, Sxy, Syy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPatch {
    pub coeffs: Vec<[f64; 6]>,
}

impl QuadraticPatch {
    pub fn eval(&self, d: usize, dx: f64, dy: f64) -> f64 {
        let c = &self.coeffs[d];
        c[0] + dx * c[1] + dy * c[2] + dx * dx * c[3] + 2.0 * dx * dy * c[4] + dy * dy * c[5]
    }

    /// The model's true second derivatives (twice the quadratic coefficients).
    pub fn hessian(&self, d: usize) -> Hessian {
        let c = &self.coeffs[d];
        Hessian {
            ii: 2.0 * c[3],
            ij: 2.0 * c[4],
            jj: 2.0 * c[5],
        }
    }

    pub fn gradient(&self, d: usize) -> [f64; 2] {
        [self.coeffs[d][1], self.coeffs[d][2]]
    }
}

const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares quadratic fit over the `(2r+1)^2` neighborhood, clipped at the border.
pub fn fit_quadratic_patch(
    cloud: &SparseCloud,
    at: (usize, usize),
    radius: usize,
) -> Result<QuadraticPatch, CurvatureError> {
    let (ci, cj) = at;
    let degenerate = CurvatureError::DegenerateNeighborhood { i: ci, j: cj };
    let i0 = ci.saturating_sub(radius);
    let i1 = (ci + radius).min(cloud.height() - 1);
    let j0 = cj.saturating_sub(radius);
    let j1 = (cj + radius).min(cloud.width() - 1);
    let rows = (i1 - i0 + 1) * (j1 - j0 + 1);
    if rows < 6 {
        return Err(degenerate);
    }
    let depth = cloud.depth();
    let mut design = DMatrix::<f64>::zeros(rows, 6);
    let mut rhs = DMatrix::<f64>::zeros(rows, depth);
    let center = cloud.point(ci, cj);
    let (cx, cy) = (center[0], center[1]);
    let mut r = 0;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let p = cloud.point(i, j);
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            let row = [1.0, dx, dy, dx * dx, 2.0 * dx * dy, dy * dy];
            for (c, v) in row.into_iter().enumerate() {
                design[(r, c)] = v;
            }
            for d in 0..depth {
                rhs[(r, d)] = p[2 + d];
            }
            r += 1;
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin / smax < RANK_TOLERANCE {
        return Err(degenerate);
    }
    let solution = svd
        .solve(&rhs, RANK_TOLERANCE * smax)
        .map_err(|_| degenerate)?;
    let coeffs = (0..depth)
        .map(|d| {
            let col: DVector<f64> = solution.column(d).into_owned();
            [col[0], col[1], col[2], col[3], col[4], col[5]]
        })
        .collect();
    Ok(QuadraticPatch { coeffs })
}

/// Fits the first feature channel and evaluates curvature from the fitted Hessian.
pub fn quadratic_fit_curvature(
    cloud: &SparseCloud,
    at: (usize, usize),
    radius: usize,
    epsilon: f64,
) -> Result<([f64; 6], f64), CurvatureError> {
    let patch = fit_quadratic_patch(cloud, at, radius)?;
    let kappa =
        CurvatureModel::GradientNormalized.kappa(&patch.hessian(0), patch.gradient(0), epsilon);
    Ok((patch.coeffs[0], kappa))
}
