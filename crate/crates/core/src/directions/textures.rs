//! Procedural high-detail textures used as default texture donors.

use crate::error::Result;
use crate::imageops::{Image, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_TEXTURE_NAMES: [&str; 4] = ["multiscale-checker", "value-noise", "line-grating", "dot-field"];

/// Renders the four default textures at `shape`.
pub fn default_textures(shape: Shape) -> Result<Vec<Image>> {
    Ok(vec![
        multiscale_checker(shape)?,
        value_noise(shape, 0x5eed_0001)?,
        line_grating(shape)?,
        dot_field(shape, 0x5eed_0002)?,
    ])
}

fn channel_tint(c: usize, channels: usize) -> f64 {
    if channels == 1 {
        1.0
    } else {
        [1.0, 0.85, 0.7][c]
    }
}

pub fn multiscale_checker(shape: Shape) -> Result<Image> {
    Image::from_fn(shape.height, shape.width, shape.channels, |y, x, c| {
        let mut v = 0.0;
        for (k, cell) in [2usize, 3, 5, 8].iter().enumerate() {
            let bit = ((y / cell) + (x / cell)) % 2;
            v += bit as f64 * 0.5f64.powi(k as i32 + 1);
        }
        (v * channel_tint(c, shape.channels)).clamp(0.0, 1.0)
    })
}

/// Sum of bilinearly interpolated random lattices at octaves 2, 4, 8 px.
pub fn value_noise(shape: Shape, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves: Vec<(usize, Vec<f64>, usize)> = [2usize, 4, 8]
        .iter()
        .map(|&cell| {
            let gw = shape.width / cell + 2;
            let gh = shape.height / cell + 2;
            let lattice = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
            (cell, lattice, gw)
        })
        .collect();
    let weights = [0.5, 0.3, 0.2];
    Image::from_fn(shape.height, shape.width, shape.channels, |y, x, c| {
        let mut v = 0.0;
        for ((cell, lattice, gw), wgt) in octaves.iter().zip(weights) {
            let fy = y as f64 / *cell as f64;
            let fx = x as f64 / *cell as f64;
            let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (fy - iy as f64, fx - ix as f64);
            let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            v += wgt * (top * (1.0 - ty) + bottom * ty);
        }
        (v * channel_tint(c, shape.channels)).clamp(0.0, 1.0)
    })
}

pub fn line_grating(shape: Shape) -> Result<Image> {
    Image::from_fn(shape.height, shape.width, shape.channels, |y, x, c| {
        let a = (x as f64 * 2.1 + y as f64 * 0.6).sin();
        let b = (x as f64 * 0.4 - y as f64 * 1.7).sin();
        ((0.5 + 0.25 * a + 0.25 * b) * channel_tint(c, shape.channels)).clamp(0.0, 1.0)
    })
}

pub fn dot_field(shape: Shape, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = vec![0.15; shape.pixels()];
    let dots = shape.pixels() / 6;
    for _ in 0..dots {
        let y = rng.random_range(0..shape.height);
        let x = rng.random_range(0..shape.width);
        let v: f64 = rng.random_range(0.6..1.0);
        canvas[y * shape.width + x] = v;
        if x + 1 < shape.width {
            canvas[y * shape.width + x + 1] = v * 0.8;
        }
    }
    Image::from_fn(shape.height, shape.width, shape.channels, |y, x, c| {
        (canvas[y * shape.width + x] * channel_tint(c, shape.channels)).clamp(0.0, 1.0)
    })
}
