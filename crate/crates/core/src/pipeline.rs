//! End-to-end conversion: single images and class-labelled datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curvature::{cloud_curvature, CurvatureField, CurvatureModel, DEFAULT_EPSILON};
use crate::features::{FeatureKind, FeatureStrategy};
use crate::ingest::{load_image, ImageGrid};
use crate::manifest::{DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};
use crate::mesh::{build_faces, build_sparse_cloud, FaceKind, SurfaceMesh};
use crate::off::{encode_off, OffError};
use crate::sampler::{
    curvature_distribution, densify_with_distribution, derive_seed, DenseCloud, SampleError,
    SamplerMode, DEFAULT_DELTA,
};

pub const DEFAULT_POINTS: usize = 2048;
pub const DEFAULT_SEED: u64 = 42;
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Features,
    Mesh,
    Curvature,
    Sample,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Mesh => "mesh",
            Stage::Curvature => "curvature",
            Stage::Sample => "sample",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("no images found under {0}")]
    EmptyDataset(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("manifest {path}, line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn at(stage: Stage, err: impl std::error::Error + Send + Sync + 'static) -> Self {
        PipelineError::Stage {
            stage,
            source: Box::new(err),
        }
    }

    pub(crate) fn from_write(err: OffError) -> Self {
        Self::at(Stage::Write, err)
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionConfig {
    pub strategy: FeatureStrategy,
    pub face_kind: FaceKind,
    pub points: usize,
    pub mode: SamplerMode,
    pub master_seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub curvature_model: CurvatureModel,
    pub workers: usize,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            strategy: FeatureStrategy::surface(FeatureKind::RgbMean),
            face_kind: FaceKind::Triangle,
            points: DEFAULT_POINTS,
            mode: SamplerMode::MonteCarlo,
            master_seed: DEFAULT_SEED,
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            curvature_model: CurvatureModel::GradientNormalized,
            workers: 1,
        }
    }
}

impl ConversionConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.points == 0 {
            return Err(PipelineError::InvalidConfig(
                "points must be at least 1".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PipelineError::InvalidConfig(
                "epsilon must be positive".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(PipelineError::InvalidConfig(
                "delta must be positive".into(),
            ));
        }
        if self.workers == 0 {
            return Err(PipelineError::InvalidConfig(
                "workers must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Wall time spent in each stage of one conversion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub ingest: Duration,
    pub features: Duration,
    pub curvature: Duration,
    pub sample: Duration,
    pub write: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.ingest + self.features + self.curvature + self.sample + self.write
    }
}

/// Everything one conversion produces in memory.
#[derive(Debug, Clone)]
pub struct Conversion {
    pub mesh: SurfaceMesh,
    pub curvature: CurvatureField,
    pub cloud: DenseCloud,
    pub timings: StageTimings,
}

/// Features → sparse cloud → faces → curvature → dense cloud for one image.
pub fn convert_grid(
    img: &ImageGrid,
    config: &ConversionConfig,
    seed: u64,
) -> Result<Conversion, PipelineError> {
    config.validate()?;
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let cloud = build_sparse_cloud(img, config.strategy);
    let mesh = build_faces(cloud, config.face_kind);
    timings.features = t.elapsed();

    let t = Instant::now();
    let curvature = cloud_curvature(&mesh.cloud, config.epsilon, config.curvature_model);
    let dist = curvature_distribution(&curvature, config.delta);
    timings.curvature = t.elapsed();

    let t = Instant::now();
    let dense = densify_with_distribution(&mesh, &dist, config.points, seed, config.mode)
        .map_err(|e: SampleError| PipelineError::at(Stage::Sample, e))?;
    timings.sample = t.elapsed();

    Ok(Conversion {
        mesh,
        curvature,
        cloud: dense,
        timings,
    })
}

/// Outcome of `convert_one`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionRecord {
    pub height: usize,
    pub width: usize,
    pub points: usize,
    pub seed: u64,
    pub bytes: usize,
    /// SHA-256 of the emitted OFF bytes, lowercase hex.
    pub checksum: String,
    pub timings: StageTimings,
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Converts one image file to a dense-cloud OFF file, seeded with `config.master_seed`.
pub fn convert_one(
    input: impl AsRef<Path>,
    config: &ConversionConfig,
    output: impl AsRef<Path>,
) -> Result<ConversionRecord, PipelineError> {
    convert_file(input.as_ref(), config, config.master_seed, output.as_ref())
}

fn convert_file(
    input: &Path,
    config: &ConversionConfig,
    seed: u64,
    output: &Path,
) -> Result<ConversionRecord, PipelineError> {
    config.validate()?;
    let t = Instant::now();
    let img = load_image(input).map_err(|e| PipelineError::at(Stage::Ingest, e))?;
    let ingest = t.elapsed();
    let mut out = convert_grid(&img, config, seed)?;
    out.timings.ingest = ingest;

    let t = Instant::now();
    let bytes = encode_off(&out.cloud).map_err(PipelineError::from_write)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::at(Stage::Write, e))?;
    }
    std::fs::write(output, &bytes).map_err(|e| PipelineError::at(Stage::Write, e))?;
    out.timings.write = t.elapsed();

    Ok(ConversionRecord {
        height: img.height(),
        width: img.width(),
        points: out.cloud.len(),
        seed,
        bytes: bytes.len(),
        checksum: checksum(&bytes),
        timings: out.timings,
    })
}

/// An image found under a dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub label: String,
    /// Path relative to the dataset root, `/`-separated.
    pub relative: String,
    pub path: PathBuf,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Images under `root/<class>/`, ordered lexicographically by relative path.
pub fn scan_dataset(root: &Path) -> Result<Vec<DatasetItem>, PipelineError> {
    let mut items = Vec::new();
    for class in std::fs::read_dir(root)? {
        let class = class?;
        if !class.file_type()?.is_dir() {
            continue;
        }
        let label = class.file_name().to_string_lossy().into_owned();
        for file in std::fs::read_dir(class.path())? {
            let file = file?;
            let path = file.path();
            if file.file_type()?.is_file() && is_image(&path) {
                let name = file.file_name().to_string_lossy().into_owned();
                items.push(DatasetItem {
                    relative: format!("{label}/{name}"),
                    label: label.clone(),
                    path,
                });
            }
        }
    }
    items.sort_by(|a, b| a.relative.cmp(&b.relative));
    if items.is_empty() {
        return Err(PipelineError::EmptyDataset(root.to_path_buf()));
    }
    Ok(items)
}

fn output_relative(item: &DatasetItem) -> String {
    let stem = Path::new(&item.relative)
        .file_stem()
        .expect("image file has a name")
        .to_string_lossy()
        .into_owned();
    format!("{}/{stem}.off", item.label)
}

/// A manifest entry and whether it was freshly converted, or the failure message.
type ItemResult = Result<(ManifestEntry, bool), String>;

/// Result of a batch run.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub manifest: DatasetManifest,
    pub converted: usize,
    pub skipped: usize,
    /// Inputs that failed, with the error message; the rest of the batch still ran.
    pub failures: Vec<(PathBuf, String)>,
}

/// Converts every image under `root/<class>/` into `out_root/<class>/<stem>.off`
/// and writes `out_root/manifest.tsv`.
///
/// Image `k` in lexicographic order gets seed `master_seed ^ k`. Entries whose
/// output already exists with the recorded checksum and settings are kept
/// without reconverting.
pub fn convert_dataset(
    root: impl AsRef<Path>,
    config: &ConversionConfig,
    out_root: impl AsRef<Path>,
) -> Result<BatchOutcome, PipelineError> {
    config.validate()?;
    let (root, out_root) = (root.as_ref(), out_root.as_ref());
    let items = scan_dataset(root)?;
    std::fs::create_dir_all(out_root)?;
    let manifest_path = out_root.join(MANIFEST_FILE);
    let previous: BTreeMap<String, ManifestEntry> = if manifest_path.exists() {
        DatasetManifest::read(&manifest_path)?
            .entries
            .into_iter()
            .map(|e| (e.source.clone(), e))
            .collect()
    } else {
        BTreeMap::new()
    };

    let strategy_label = config.strategy.label();
    let reusable = |item: &DatasetItem, seed: u64| -> Option<ManifestEntry> {
        let old = previous.get(&item.relative)?;
        let out = output_relative(item);
        let matches = old.output == out
            && old.seed == seed
            && old.strategy == strategy_label
            && old.faces == config.face_kind.name()
            && old.sampler == config.mode.name()
            && old.points == config.points;
        if !matches {
            return None;
        }
        let bytes = std::fs::read(out_root.join(&out)).ok()?;
        (checksum(&bytes) == old.checksum).then(|| old.clone())
    };

    let slots: Vec<Mutex<Option<ItemResult>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(item) = items.get(k) else { break };
        let seed = derive_seed(config.master_seed, k as u64);
        let result = match reusable(item, seed) {
            Some(entry) => Ok((entry, false)),
            None => {
                let out = output_relative(item);
                convert_file(&item.path, config, seed, &out_root.join(&out))
                    .map(|rec| {
                        let entry = ManifestEntry {
                            source: item.relative.clone(),
                            output: out,
                            label: item.label.clone(),
                            height: rec.height,
                            width: rec.width,
                            seed,
                            strategy: strategy_label.clone(),
                            faces: config.face_kind.name().to_string(),
                            sampler: config.mode.name().to_string(),
                            points: rec.points,
                            checksum: rec.checksum,
                            split: Split::Train,
                        };
                        (entry, true)
                    })
                    .map_err(|e| e.to_string())
            }
        };
        *slots[k].lock().expect("slot lock") = Some(result);
    };
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(items.len()) {
            scope.spawn(work);
        }
    });

    let mut entries = Vec::new();
    let (mut converted, mut skipped) = (0, 0);
    let mut failures = Vec::new();
    for (item, slot) in items.iter().zip(slots) {
        match slot
            .into_inner()
            .expect("slot lock")
            .expect("every item processed")
        {
            Ok((entry, fresh)) => {
                if fresh {
                    converted += 1;
                } else {
                    skipped += 1;
                }
                entries.push(entry);
            }
            Err(msg) => failures.push((item.path.clone(), msg)),
        }
    }
    let mut manifest = DatasetManifest { entries };
    manifest.assign_splits(config.master_seed);
    manifest.write(&manifest_path)?;
    Ok(BatchOutcome {
        manifest,
        converted,
        skipped,
        failures,
    })
}
