use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypercloud::manifest::MANIFEST_FILE;
use hypercloud::off::OffHeader;
use hypercloud::pipeline::{checksum, DEFAULT_POINTS, DEFAULT_SEED};
use hypercloud::quality::point_stats;
use hypercloud::{
    build_faces, build_sparse_cloud, convert_dataset, convert_one, load_image, read_off,
    repeatability_report, write_off, ConversionConfig, CurvatureModel, DatasetManifest, FaceKind,
    FeatureKind, FeatureStrategy, SamplerMode,
};

#[derive(Parser)]
#[command(
    name = "hypercloud",
    version,
    about = "Convert images into curvature-sampled point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert one image into a dense point cloud OFF file.
    Convert {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the sparse surface mesh here.
        #[arg(long)]
        mesh_out: Option<PathBuf>,
        #[command(flatten)]
        opts: ConvertOpts,
    },
    /// Convert a dataset laid out as one subdirectory per class.
    Batch {
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConvertOpts,
    },
    /// Point statistics for an OFF file.
    Stats {
        input: PathBuf,
        /// Write the key=value report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a batch output's checksums, or the seed repeatability of one image.
    Verify {
        /// A batch output directory, or an image.
        input: PathBuf,
        /// Seeds to compare when verifying an image.
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2])]
        seeds: Vec<u64>,
        /// Write the key=value summary here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: ConvertOpts,
    },
    /// Print an OFF file's header.
    Inspect { input: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    RgbMean,
    Fourier,
    Brightness,
    Grayscale,
    HsvV,
}

#[derive(Clone, Copy, ValueEnum)]
enum FacesArg {
    Triangle,
    Square,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    MonteCarlo,
    PoissonDisk,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurvatureArg {
    GradientNormalized,
    GraphSurface,
}

#[derive(Args)]
struct ConvertOpts {
    #[arg(long, value_enum, default_value = "rgb-mean")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=5))]
    dims: u8,
    #[arg(long, value_enum, default_value = "triangle")]
    faces: FacesArg,
    #[arg(long, default_value_t = DEFAULT_POINTS, value_parser = parse_points)]
    points: usize,
    #[arg(long, env = "HYPERCLOUD_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "monte-carlo")]
    sampler: SamplerArg,
    #[arg(long, value_enum, default_value = "gradient-normalized")]
    curvature: CurvatureArg,
    /// Defaults to the number of available cores.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

fn parse_points(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

impl ConvertOpts {
    fn config(&self) -> Result<ConversionConfig, String> {
        let kind = match self.strategy {
            StrategyArg::RgbMean => FeatureKind::RgbMean,
            StrategyArg::Fourier => FeatureKind::Fourier,
            StrategyArg::Brightness => FeatureKind::Brightness,
            StrategyArg::Grayscale => FeatureKind::Grayscale,
            StrategyArg::HsvV => FeatureKind::HsvValue,
        };
        let workers = match self.workers {
            Some(w) => w as usize,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(ConversionConfig {
            strategy: FeatureStrategy::new(kind, self.dims).map_err(|e| e.to_string())?,
            face_kind: match self.faces {
                FacesArg::Triangle => FaceKind::Triangle,
                FacesArg::Square => FaceKind::Square,
            },
            points: self.points,
            mode: match self.sampler {
                SamplerArg::MonteCarlo => SamplerMode::MonteCarlo,
                SamplerArg::PoissonDisk => SamplerMode::PoissonDisk,
            },
            master_seed: self.seed,
            curvature_model: match self.curvature {
                CurvatureArg::GradientNormalized => CurvatureModel::GradientNormalized,
                CurvatureArg::GraphSurface => CurvatureModel::GraphSurface,
            },
            workers,
            ..Default::default()
        })
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Convert {
            input,
            out,
            mesh_out,
            opts,
        } => convert(&input, &out, mesh_out.as_deref(), &opts.config()?),
        Command::Batch { root, out, opts } => batch(&root, &out, &opts.config()?),
        Command::Stats { input, out } => stats(&input, out.as_deref()),
        Command::Verify {
            input,
            seeds,
            out,
            opts,
        } => {
            if input.is_dir() {
                verify_batch(&input, out.as_deref())
            } else {
                verify_image(&input, &seeds, out.as_deref(), &opts.config()?)
            }
        }
        Command::Inspect { input } => inspect(&input),
    }
}

fn convert(
    input: &Path,
    out: &Path,
    mesh_out: Option<&Path>,
    config: &ConversionConfig,
) -> Result<ExitCode, String> {
    let rec = convert_one(input, config, out).map_err(|e| e.to_string())?;
    if let Some(path) = mesh_out {
        let img = load_image(input).map_err(|e| e.to_string())?;
        let mesh = build_faces(build_sparse_cloud(&img, config.strategy), config.face_kind);
        write_off(&mesh, path).map_err(|e| e.to_string())?;
    }
    let t = rec.timings;
    println!("output={}", out.display());
    println!("height={}\nwidth={}", rec.height, rec.width);
    println!("points={}\nseed={}", rec.points, rec.seed);
    println!("bytes={}\nchecksum={}", rec.bytes, rec.checksum);
    for (stage, d) in [
        ("ingest", t.ingest),
        ("features", t.features),
        ("curvature", t.curvature),
        ("sample", t.sample),
        ("write", t.write),
    ] {
        println!("time.{stage}_ms={:.3}", d.as_secs_f64() * 1e3);
    }
    Ok(ExitCode::SUCCESS)
}

fn batch(root: &Path, out: &Path, config: &ConversionConfig) -> Result<ExitCode, String> {
    let outcome = convert_dataset(root, config, out).map_err(|e| e.to_string())?;
    let totals = outcome.manifest.totals();
    println!("manifest={}", out.join(MANIFEST_FILE).display());
    println!(
        "converted={}\nskipped={}",
        outcome.converted, outcome.skipped
    );
    println!("failed={}", outcome.failures.len());
    for (label, count) in &totals.per_class {
        println!("class.{label}={count}");
    }
    println!("train={}\ntest={}", totals.train, totals.test);
    for (path, msg) in &outcome.failures {
        eprintln!("failed: {}: {msg}", path.display());
    }
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn stats(input: &Path, out: Option<&Path>) -> Result<ExitCode, String> {
    let doc = read_off(input).map_err(|e| format!("{}: {e}", input.display()))?;
    if doc.vertices.is_empty() {
        return Err(format!("{}: no vertices", input.display()));
    }
    let dims = doc.header.dims();
    let flat: Vec<f64> = doc.vertices.iter().flatten().copied().collect();
    let report = point_stats(&flat, dims).to_key_value();
    print!("{report}");
    if let Some(path) = out {
        std::fs::write(path, &report).map_err(|e| e.to_string())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_batch(dir: &Path, out: Option<&Path>) -> Result<ExitCode, String> {
    let manifest = DatasetManifest::read(dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for e in &manifest.entries {
        match std::fs::read(dir.join(&e.output)) {
            Ok(bytes) if checksum(&bytes) == e.checksum => {}
            Ok(_) => bad.push(format!("{}: checksum mismatch", e.output)),
            Err(err) => bad.push(format!("{}: {err}", e.output)),
        }
    }
    for line in &bad {
        println!("mismatch {line}");
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "entries={}", manifest.entries.len());
    let _ = writeln!(summary, "mismatches={}", bad.len());
    let _ = writeln!(summary, "ok={}", bad.is_empty());
    print!("{summary}");
    if let Some(path) = out {
        std::fs::write(path, &summary).map_err(|e| e.to_string())?;
    }
    Ok(if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn verify_image(
    input: &Path,
    seeds: &[u64],
    out: Option<&Path>,
    config: &ConversionConfig,
) -> Result<ExitCode, String> {
    let img = load_image(input).map_err(|e| e.to_string())?;
    let report = repeatability_report(&img, config, seeds).map_err(|e| e.to_string())?;
    print!("{}", report.to_text());
    if let Some(path) = out {
        std::fs::write(path, report.to_key_value()).map_err(|e| e.to_string())?;
    }
    Ok(if report.deterministic() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn inspect(input: &Path) -> Result<ExitCode, String> {
    let doc = read_off(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let format = match doc.header {
        OffHeader::Off => "OFF".to_string(),
        OffHeader::NOff(d) => format!("nOFF (dimension {d})"),
    };
    println!("format: {format}");
    println!("vertices: {}", doc.vertex_count());
    println!("faces: {}", doc.face_count());
    println!("edges: {}", doc.edge_count);
    if let Some(first) = doc.faces.first() {
        println!("face arity: {}", first.len());
    }
    let dims = doc.header.dims();
    for axis in 0..dims {
        let (lo, hi) = doc
            .vertices
            .iter()
            .map(|v| v[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        println!("axis {axis}: [{lo}, {hi}]");
    }
    Ok(ExitCode::SUCCESS)
}
