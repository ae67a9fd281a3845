//! Release gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hypercloud::curvature::{
    differential_fields, differential_fields_with_spacing, gaussian_curvature, ScalarGrid,
    DEFAULT_EPSILON,
};
use hypercloud::features::z_rgb_mean;
use hypercloud::mesh::Lattice;
use hypercloud::off::encode_off;
use hypercloud::quality::reconstruct_image;
use hypercloud::sampler::{inverse_cdf_sample, SampleRng, SamplingDistribution};
use hypercloud::{
    build_faces, build_sparse_cloud, convert_grid, densify, parse_off, ssim, ConversionConfig,
    CurvatureModel, FaceKind, FeatureKind, FeatureStrategy, ImageGrid, SamplerMode,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const RGB_MEAN_TOL: f64 = 1e-12;
const CURVATURE_TOL: f64 = 1e-9;
const CONVERGENCE_RATIO: (f64, f64) = (3.0, 5.0);
const TV_LIMIT: f64 = 0.01;
const FIDELITY_SHARE: f64 = 0.9;
const SCALING_SLACK: f64 = 2.0;

/// Name, runtime budget and check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_image(seed: u64, height: usize, width: usize) -> ImageGrid {
    let mut rng = SampleRng::new(seed);
    ImageGrid::from_fn(height, width, 3, |_, _, _| rng.next_f64())
}

fn natural_image(seed: u64, size: usize) -> ImageGrid {
    let mut rng = SampleRng::new(seed);
    let s = size as f64;
    let blobs: Vec<[f64; 6]> = (0..6)
        .map(|_| {
            let mut b = [0.0; 6];
            b[0] = rng.next_f64() * s;
            b[1] = rng.next_f64() * s;
            b[2] = 3.0 + rng.next_f64() * 10.0;
            for v in &mut b[3..] {
                *v = rng.next_f64();
            }
            b
        })
        .collect();
    let grain: Vec<f64> = (0..size * size * 3).map(|_| rng.next_f64() - 0.5).collect();
    ImageGrid::from_fn(size, size, 3, |i, j, c| {
        let mut v = 0.15 + 0.2 * j as f64 / s;
        for b in &blobs {
            let d2 = (i as f64 - b[0]).powi(2) + (j as f64 - b[1]).powi(2);
            v += 0.5 * b[3 + c] * (-d2 / (2.0 * b[2] * b[2])).exp();
        }
        (v + 0.04 * grain[(i * size + j) * 3 + c]).clamp(0.0, 1.0)
    })
}

fn rgb_mean_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let img = random_image(seed, 16, 16);
        let field = z_rgb_mean(&img);
        for (k, rgb) in img.values().chunks_exact(3).enumerate() {
            let oracle = rgb.iter().sum::<f64>() / 3.0;
            worst = worst.max((field.values[k] - oracle).abs());
        }
    }
    outcome(worst <= RGB_MEAN_TOL, format!("max deviation {worst:.3e}"))
}

fn face_counts() -> Outcome {
    let mut rng = SampleRng::new(4);
    for _ in 0..50 {
        let m = 2 + (rng.next_f64() * 63.0) as usize;
        let n = 2 + (rng.next_f64() * 63.0) as usize;
        let lattice = Lattice::new(m, n);
        let cloud = build_sparse_cloud(
            &random_image(m as u64 * 100 + n as u64, m, n),
            FeatureStrategy::surface(FeatureKind::RgbMean),
        );
        for (kind, expected) in [
            (FaceKind::Triangle, 2 * (m - 1) * (n - 1)),
            (FaceKind::Square, (m - 1) * (n - 1)),
        ] {
            let mesh = build_faces(cloud.clone(), kind);
            if mesh.face_count() != expected {
                return outcome(
                    false,
                    format!("{m}x{n} {kind}: {} faces", mesh.face_count()),
                );
            }
            for face in mesh.faces() {
                for &a in face {
                    for &b in face {
                        if a == b {
                            continue;
                        }
                        if !lattice
                            .adjacent(lattice.unflat(a), lattice.unflat(b))
                            .unwrap()
                        {
                            return outcome(false, format!("{m}x{n}: face {face:?} not adjacent"));
                        }
                    }
                }
            }
        }
    }
    outcome(true, "50 lattices, both face kinds")
}

fn sine_error(h: f64) -> f64 {
    let steps = (8.0 / h).round() as usize + 1;
    let z = ScalarGrid::from_fn(steps, steps, |i, j| {
        ((i as f64 * h) / 4.0).sin() * ((j as f64 * h) / 4.0).sin()
    });
    let kf = gaussian_curvature(&differential_fields_with_spacing(&z, h), DEFAULT_EPSILON);
    let stride = (1.0 / h).round() as usize;
    let mut worst: f64 = 0.0;
    for a in 1..8 {
        for b in 1..8 {
            let (u, v) = (a as f64 / 4.0, b as f64 / 4.0);
            let (gu, gv) = (u.cos() * v.sin() / 4.0, u.sin() * v.cos() / 4.0);
            let (huu, huv) = (-u.sin() * v.sin() / 16.0, u.cos() * v.cos() / 16.0);
            let exact = (huu * huu - huv * huv) / (gu * gu + gv * gv + DEFAULT_EPSILON);
            worst = worst.max((kf.kappa[a * stride * steps + b * stride] - exact).abs());
        }
    }
    worst
}

fn curvature_oracle() -> Outcome {
    let z = ScalarGrid::from_fn(9, 9, |i, j| (i * i + j * j) as f64 / 2.0);
    let d = differential_fields(&z);
    let kf = gaussian_curvature(&d, DEFAULT_EPSILON);
    let mut worst: f64 = 0.0;
    for i in 1..8 {
        for j in 1..8 {
            let k = i * 9 + j;
            let h = d.hess[k];
            if (h.ii, h.ij, h.jj) != (1.0, 0.0, 1.0) {
                return outcome(false, format!("hessian at ({i},{j}) is {h:?}"));
            }
            let [gi, gj] = d.grad[k];
            let direct = (h.ii * h.jj - h.ij * h.ij) / (gi * gi + gj * gj + DEFAULT_EPSILON);
            worst = worst.max((kf.kappa[k] - direct).abs());
        }
    }
    let errors: Vec<f64> = [1.0, 0.5, 0.25].into_iter().map(sine_error).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let (lo, hi) = CONVERGENCE_RATIO;
    let pass = worst <= CURVATURE_TOL && ratios.iter().all(|r| (lo..=hi).contains(r));
    outcome(
        pass,
        format!(
            "paraboloid deviation {worst:.1e}, halving ratios {:.3} {:.3}",
            ratios[0], ratios[1]
        ),
    )
}

fn sampler_law() -> Outcome {
    let mut rng = SampleRng::new(31);
    let mut checked = 0;
    while checked < 100_000 {
        let len = 1 + (rng.next_f64() * 64.0) as usize;
        let weights: Vec<f64> = (0..len)
            .map(|_| {
                if rng.next_f64() < 0.1 {
                    0.0
                } else {
                    rng.next_f64()
                }
            })
            .collect();
        let dist = SamplingDistribution::from_weights(&weights);
        for _ in 0..20 {
            let r = rng.next_f64();
            let scan = dist
                .cumulative()
                .iter()
                .position(|&c| c >= r)
                .unwrap_or(len - 1);
            if inverse_cdf_sample(&dist, r) != scan {
                return outcome(false, format!("mismatch at r={r}"));
            }
            checked += 1;
        }
    }
    let weights: Vec<f64> = (0..256).map(|_| rng.next_f64() * rng.next_f64()).collect();
    let dist = SamplingDistribution::from_weights(&weights);
    let draws = 1_000_000;
    let mut counts = vec![0u64; 256];
    for _ in 0..draws {
        counts[inverse_cdf_sample(&dist, 1.0 - rng.next_f64())] += 1;
    }
    let tv = counts
        .iter()
        .zip(dist.weights())
        .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    outcome(
        tv < TV_LIMIT,
        format!("{checked} oracle agreements, TV {tv:.5}"),
    )
}

fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hypercloud"))
        .args(args)
        .env_remove("HYPERCLOUD_SEED")
        .envs(envs.iter().copied())
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for k in 0..20 {
        let class = data.join(if k % 2 == 0 { "even" } else { "odd" });
        std::fs::create_dir_all(&class).unwrap();
        natural_image(k, 32)
            .save_png(class.join(format!("{k:02}.png")))
            .unwrap();
    }
    let d = |p: &Path| p.to_str().unwrap().to_string();
    let input = d(&data.join("even").join("00.png"));
    let (a, b, c) = (
        dir.path().join("a.off"),
        dir.path().join("b.off"),
        dir.path().join("c.off"),
    );
    let result = (|| -> Result<Outcome, String> {
        run_cli(&["convert", &input, "--out", &d(&a), "--seed", "5"], &[])?;
        run_cli(&["convert", &input, "--out", &d(&b), "--seed", "5"], &[])?;
        run_cli(
            &["convert", &input, "--out", &d(&c)],
            &[("HYPERCLOUD_SEED", "5")],
        )?;
        let same_runs = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
        let same_env = std::fs::read(&a).unwrap() == std::fs::read(&c).unwrap();
        let (one, four) = (dir.path().join("w1"), dir.path().join("w4"));
        run_cli(
            &[
                "batch",
                &d(&data),
                "--out",
                &d(&one),
                "--workers",
                "1",
                "--points",
                "1024",
            ],
            &[],
        )?;
        run_cli(
            &[
                "batch",
                &d(&data),
                "--out",
                &d(&four),
                "--workers",
                "4",
                "--points",
                "1024",
            ],
            &[],
        )?;
        let (t1, t4) = (tree_bytes(&one), tree_bytes(&four));
        let same_batch = t1.len() == 21 && t1 == t4;
        Ok(outcome(
            same_runs && same_env && same_batch,
            format!(
                "repeat runs identical {same_runs}, env seed identical {same_env}, \
                 1 vs 4 workers identical {same_batch} ({} files)",
                t1.len()
            ),
        ))
    })();
    result.unwrap_or_else(|e| outcome(false, format!("cli failed: {e}")))
}

fn off_round_trip() -> Outcome {
    let config = Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let counts = std::cell::Cell::new([0usize; 6]);
    let items = (
        any::<u64>(),
        1usize..=24,
        1usize..=24,
        3u8..=5,
        any::<bool>(),
        prop::option::of(1usize..400),
    );
    let result = runner.run(&items, |(seed, m, n, dims, square, points)| {
        let img = random_image(seed, m, n);
        let strategy = FeatureStrategy::new(FeatureKind::RgbMean, dims).unwrap();
        let faces = if square {
            FaceKind::Square
        } else {
            FaceKind::Triangle
        };
        let mesh = build_faces(build_sparse_cloud(&img, strategy), faces);
        let first = match points {
            None => encode_off(&mesh).unwrap(),
            Some(n) => {
                let kf = hypercloud::cloud_curvature(
                    &mesh.cloud,
                    DEFAULT_EPSILON,
                    CurvatureModel::default(),
                );
                encode_off(&densify(&mesh, &kf, n, seed, SamplerMode::MonteCarlo).unwrap()).unwrap()
            }
        };
        let doc = parse_off(std::str::from_utf8(&first).unwrap()).unwrap();
        prop_assert_eq!(encode_off(&doc).unwrap(), first);
        let mut c = counts.get();
        c[usize::from(dims - 3) * 2 + usize::from(points.is_some())] += 1;
        counts.set(c);
        Ok(())
    });
    let c = counts.get();
    let detail = format!(
        "{} items; meshes/clouds 3D {}/{}, 4D {}/{}, 5D {}/{}",
        c.iter().sum::<usize>(),
        c[0],
        c[1],
        c[2],
        c[3],
        c[4],
        c[5]
    );
    match result {
        Ok(()) => outcome(c.iter().all(|&k| k > 0), detail),
        Err(e) => outcome(false, format!("{detail}: {e}")),
    }
}

fn fidelity_trend() -> Outcome {
    let mut monotone = 0;
    for k in 0..20 {
        let img = natural_image(1000 + k, 64);
        let target = z_rgb_mean(&img);
        let target = ImageGrid::new(64, 64, 1, target.values, "target").unwrap();
        let scores: Vec<f64> = [1024, 2048, 4096]
            .into_iter()
            .map(|n| {
                let config = ConversionConfig {
                    points: n,
                    ..Default::default()
                };
                let out = convert_grid(&img, &config, 42).unwrap();
                ssim(&reconstruct_image(&out.cloud, 64, 64).unwrap(), &target).unwrap()
            })
            .collect();
        if scores[0] <= scores[1] && scores[1] <= scores[2] {
            monotone += 1;
        }
    }
    let share = monotone as f64 / 20.0;
    outcome(
        share >= FIDELITY_SHARE,
        format!("{monotone}/20 images nondecreasing"),
    )
}

fn scaling() -> Outcome {
    let images: Vec<ImageGrid> = (0..5).map(|k| natural_image(2000 + k, 64)).collect();
    let time = |n: usize| -> Duration {
        (0..3)
            .map(|_| {
                let t = Instant::now();
                for img in &images {
                    let config = ConversionConfig {
                        points: n,
                        ..Default::default()
                    };
                    let out = convert_grid(img, &config, 42).unwrap();
                    std::hint::black_box(encode_off(&out.cloud).unwrap());
                }
                t.elapsed()
            })
            .min()
            .unwrap()
    };
    let t1024 = time(1024);
    let t4096 = time(4096);
    let bound = t1024.mul_f64(4.0 * SCALING_SLACK);
    outcome(
        t4096 <= bound,
        format!(
            "t1024 {:.1} ms, t4096 {:.1} ms, bound {:.1} ms",
            ms(t1024),
            ms(t4096),
            ms(bound)
        ),
    )
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "rgb-mean exactness",
            Duration::from_secs(1),
            rgb_mean_exactness,
        ),
        ("face-count identities", Duration::from_secs(5), face_counts),
        ("curvature oracle", Duration::from_secs(5), curvature_oracle),
        ("sampler law", Duration::from_secs(30), sampler_law),
        ("determinism", Duration::from_secs(10), determinism),
        ("off round-trip", Duration::from_secs(10), off_round_trip),
        ("fidelity trend", Duration::from_secs(120), fidelity_trend),
        ("scaling", Duration::from_secs(120), scaling),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= budget;
        let pass = result.pass && in_budget;
        failed += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
