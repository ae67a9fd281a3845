//! Browser bindings: curvature heatmaps, curvature-weighted sampling and
//! reconstruction fidelity for images drawn on a canvas.
//!
//! Inputs are canvas `ImageData` buffers (RGBA, 8 bits per channel, row-major
//! from the top-left); alpha is ignored.

use hypercloud::curvature::DEFAULT_EPSILON;
use hypercloud::quality::reconstruct_image;
use hypercloud::{
    cloud_curvature, convert_grid, ssim, ConversionConfig, CurvatureModel, FaceKind, FeatureKind,
    FeatureStrategy, ImageGrid, SamplerMode,
};
use wasm_bindgen::prelude::*;

/// Heatmap palette stops, dark to bright.
const PALETTE: [[f64; 3]; 5] = [
    [13.0, 8.0, 135.0],
    [126.0, 3.0, 168.0],
    [204.0, 71.0, 120.0],
    [248.0, 149.0, 64.0],
    [240.0, 249.0, 33.0],
];

fn grid_from_rgba(rgba: &[u8], width: usize, height: usize) -> Result<ImageGrid, String> {
    if width == 0 || height == 0 || rgba.len() != width * height * 4 {
        return Err(format!(
            "expected {width}x{height} RGBA ({} bytes), got {} bytes",
            width * height * 4,
            rgba.len()
        ));
    }
    let values = rgba
        .chunks_exact(4)
        .flat_map(|p| p[..3].iter().map(|&v| f64::from(v) / 255.0))
        .collect();
    ImageGrid::new(height, width, 3, values, "canvas").map_err(|e| e.to_string())
}

fn parse_config(
    strategy: &str,
    model: &str,
    mode: &str,
    points: usize,
) -> Result<ConversionConfig, String> {
    let kind: FeatureKind = strategy
        .parse()
        .map_err(|e: hypercloud::features::FeatureError| e.to_string())?;
    let curvature_model = match model {
        "gradient-normalized" => CurvatureModel::GradientNormalized,
        "graph-surface" => CurvatureModel::GraphSurface,
        other => return Err(format!("unknown curvature model '{other}'")),
    };
    let mode: SamplerMode = mode
        .parse()
        .map_err(|e: hypercloud::sampler::SampleError| e.to_string())?;
    if points == 0 {
        return Err("point count must be at least 1".into());
    }
    Ok(ConversionConfig {
        strategy: FeatureStrategy::surface(kind),
        face_kind: FaceKind::Triangle,
        points,
        mode,
        curvature_model,
        ..Default::default()
    })
}

fn palette(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let k = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - k as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (PALETTE[k][c] * (1.0 - f) + PALETTE[k + 1][c] * f).round() as u8;
    }
    out
}

/// RGBA heatmap of `log(1 + |kappa|)`, scaled to the image's maximum.
pub fn heatmap(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
) -> Result<Vec<u8>, String> {
    let img = grid_from_rgba(rgba, width, height)?;
    let config = parse_config(strategy, model, "monte-carlo", 1)?;
    let cloud = hypercloud::build_sparse_cloud(&img, config.strategy);
    let kf = cloud_curvature(&cloud, DEFAULT_EPSILON, config.curvature_model);
    let level: Vec<f64> = kf.kappa.iter().map(|k| k.abs().ln_1p()).collect();
    let top = level.iter().copied().fold(0.0, f64::max);
    Ok(level
        .iter()
        .flat_map(|&v| {
            let [r, g, b] = palette(if top > 0.0 { v / top } else { 0.0 });
            [r, g, b, 255]
        })
        .collect())
}

/// Dense cloud as flat `x, y, z` triples in pixel units with `y` pointing down,
/// ready to plot over the source image.
#[allow(clippy::too_many_arguments)]
pub fn sample(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
    mode: &str,
    points: usize,
    seed: u64,
) -> Result<Vec<f32>, String> {
    let img = grid_from_rgba(rgba, width, height)?;
    let config = parse_config(strategy, model, mode, points)?;
    let out = convert_grid(&img, &config, seed).map_err(|e| e.to_string())?;
    let scale = out.cloud.feature_scale;
    let top = (height - 1) as f64;
    Ok(out
        .cloud
        .iter()
        .flat_map(|p| {
            let z = if scale > 0.0 { p[2] / scale } else { 0.0 };
            [p[0] as f32, (top - p[1]) as f32, z as f32]
        })
        .collect())
}

/// Reconstruction from `points` samples as RGBA grayscale, plus its SSIM
/// against the feature image.
pub fn reconstruct(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
    points: usize,
    seed: u64,
) -> Result<(Vec<u8>, f64), String> {
    let img = grid_from_rgba(rgba, width, height)?;
    let config = parse_config(strategy, model, "monte-carlo", points)?;
    let out = convert_grid(&img, &config, seed).map_err(|e| e.to_string())?;
    let rec = reconstruct_image(&out.cloud, height, width).map_err(|e| e.to_string())?;
    let field = config.strategy.extract(&img);
    let target =
        ImageGrid::new(height, width, 1, field.values, "feature").map_err(|e| e.to_string())?;
    let score = ssim(&rec, &target).map_err(|e| e.to_string())?;
    let pixels = rec
        .values()
        .iter()
        .flat_map(|&v| {
            let g = (v * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect();
    Ok((pixels, score))
}

#[wasm_bindgen]
pub struct Reconstruction {
    pixels: Vec<u8>,
    ssim: f64,
}

#[wasm_bindgen]
impl Reconstruction {
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ssim(&self) -> f64 {
        self.ssim
    }
}

#[wasm_bindgen(js_name = curvatureHeatmap)]
pub fn curvature_heatmap(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
) -> Result<Vec<u8>, JsError> {
    heatmap(rgba, width, height, strategy, model).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = densePoints)]
#[allow(clippy::too_many_arguments)]
pub fn dense_points(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
    mode: &str,
    points: usize,
    seed: u64,
) -> Result<Vec<f32>, JsError> {
    sample(rgba, width, height, strategy, model, mode, points, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = reconstruction)]
pub fn reconstruction(
    rgba: &[u8],
    width: usize,
    height: usize,
    strategy: &str,
    model: &str,
    points: usize,
    seed: u64,
) -> Result<Reconstruction, JsError> {
    let (pixels, ssim) = reconstruct(rgba, width, height, strategy, model, points, seed)
        .map_err(|e| JsError::new(&e))?;
    Ok(Reconstruction { pixels, ssim })
}
