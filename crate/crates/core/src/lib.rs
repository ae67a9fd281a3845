//! Convert raster images into higher-dimensional point clouds.
//!
//! Each pixel becomes a lattice point lifted by one or more image features.
//! Adjacent points are joined into faces, the discrete Gaussian curvature of
//! the resulting surface becomes a sampling density, and a dense cloud is drawn
//! from it and written in the OFF/nOFF text format.
//!
//! ```
//! use hypercloud::{convert_grid, ConversionConfig, ImageGrid};
//!
//! let img = ImageGrid::from_fn(16, 16, 1, |i, j, _| ((i * j) % 5) as f64 / 4.0);
//! let config = ConversionConfig { points: 256, ..Default::default() };
//! let out = convert_grid(&img, &config, 7).unwrap();
//! assert_eq!(out.cloud.len(), 256);
//! assert_eq!(out.mesh.face_count(), 2 * 15 * 15);
//! ```

pub mod curvature;
pub mod features;
pub mod ingest;
pub mod manifest;
pub mod mesh;
pub mod off;
pub mod pipeline;
pub mod quality;
pub mod sampler;
pub mod spatial;

pub use curvature::{cloud_curvature, gaussian_curvature, CurvatureField, CurvatureModel};
pub use features::{FeatureKind, FeatureStrategy};
pub use ingest::{load_image, ImageGrid};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use mesh::{build_faces, build_sparse_cloud, FaceKind, Lattice, SparseCloud, SurfaceMesh};
pub use off::{parse_off, read_off, write_off, OffDocument, ToOff};
pub use pipeline::{convert_dataset, convert_grid, convert_one, ConversionConfig, PipelineError};
pub use quality::{cloud_stats, psnr, repeatability_report, ssim, CloudStats, Psnr};
pub use sampler::{densify, DenseCloud, SamplerMode};
