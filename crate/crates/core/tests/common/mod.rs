#![allow(dead_code)]

use hypercloud::sampler::SampleRng;
use hypercloud::ImageGrid;

pub fn random_image(seed: u64, height: usize, width: usize, channels: usize) -> ImageGrid {
    let mut rng = SampleRng::new(seed);
    ImageGrid::from_fn(height, width, channels, |_, _, _| rng.next_f64())
}

/// Smooth shading, a handful of colored blobs and faint per-pixel noise.
pub fn natural_image(seed: u64, size: usize, noise: f64) -> ImageGrid {
    let mut rng = SampleRng::new(seed);
    let s = size as f64;
    let blobs: Vec<[f64; 6]> = (0..6)
        .map(|_| {
            [
                rng.next_f64() * s,
                rng.next_f64() * s,
                3.0 + rng.next_f64() * 10.0,
                rng.next_f64(),
                rng.next_f64(),
                rng.next_f64(),
            ]
        })
        .collect();
    let grain: Vec<f64> = (0..size * size * 3).map(|_| rng.next_f64() - 0.5).collect();
    ImageGrid::from_fn(size, size, 3, |i, j, c| {
        let mut v = 0.15 + 0.2 * j as f64 / s;
        for b in &blobs {
            let d2 = (i as f64 - b[0]).powi(2) + (j as f64 - b[1]).powi(2);
            v += 0.5 * b[3 + c] * (-d2 / (2.0 * b[2] * b[2])).exp();
        }
        (v + noise * grain[(i * size + j) * 3 + c]).clamp(0.0, 1.0)
    })
}

/// Single-channel image of a feature plane, for comparing against reconstructions.
pub fn plane(height: usize, width: usize, values: Vec<f64>) -> ImageGrid {
    ImageGrid::new(height, width, 1, values, "plane").unwrap()
}
