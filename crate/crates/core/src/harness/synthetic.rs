//! A small deterministic corpus (gradients, textures, blurred and noised
//! variants) labelled by a quality model, for desk-scale campaigns.

use crate::error::Result;
use crate::imageops::{decode_png, encode_png, gaussian_blur, Image};
use crate::oracle::QualityModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;

pub const SYNTH_SIDE: usize = 64;
pub const SYNTH_COUNT: usize = 24;

fn gradient(angle: f64, lo: f64, hi: f64, tint: [f64; 3]) -> Image {
    let n = SYNTH_SIDE as f64;
    let (s, c) = angle.sin_cos();
    Image::from_fn(SYNTH_SIDE, SYNTH_SIDE, 3, |y, x, ch| {
        let t = ((x as f64 * c + y as f64 * s) / n).rem_euclid(1.0);
        ((lo + (hi - lo) * t) * tint[ch]).clamp(0.0, 1.0)
    })
    .expect("valid shape")
}

fn grating(period: f64, angle: f64, amp: f64, base: f64) -> Image {
    let (s, c) = angle.sin_cos();
    Image::from_fn(SYNTH_SIDE, SYNTH_SIDE, 3, |y, x, ch| {
        let phase = 2.0 * PI * (x as f64 * c + y as f64 * s) / period;
        (base + amp * phase.sin() + 0.02 * ch as f64).clamp(0.0, 1.0)
    })
    .expect("valid shape")
}

fn blobs(seed: u64, amp: f64) -> Image {
    blobs_at(seed, amp, 0.5)
}

fn blobs_at(seed: u64, amp: f64, base: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.random_range(0.0..SYNTH_SIDE as f64),
                rng.random_range(0.0..SYNTH_SIDE as f64),
                rng.random_range(3.0..10.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    Image::from_fn(SYNTH_SIDE, SYNTH_SIDE, 3, |y, x, ch| {
        let v: f64 = centres
            .iter()
            .map(|(cy, cx, r, s)| {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                s * (-d2 / (2.0 * r * r)).exp()
            })
            .sum();
        (base + amp * v - 0.04 * ch as f64).clamp(0.0, 1.0)
    })
    .expect("valid shape")
}

fn with_noise(img: &Image, amp: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img.data().iter().map(|v| (v + rng.random_range(-amp..amp)).clamp(0.0, 1.0)).collect();
    Image::new(img.height(), img.width(), img.channels(), data).expect("same shape")
}

fn blurred(img: &Image, sigma: f64) -> Image {
    gaussian_blur(img, sigma).expect("positive sigma")
}

/// The corpus images, named, before 8-bit quantization.
pub fn synthetic_images() -> Vec<(String, Image)> {
    let mut out: Vec<(String, Image)> = Vec::new();
    let mut push = |name: &str, img: Image| out.push((format!("{:02}_{name}.png", out.len()), img));
    // moderately sharp content just above the split
    push("blobs_a", blobs(1, 0.4));
    push("blobs_b", blobs(2, 0.25));
    push("blobs_c", blobs(3, 0.5));
    push("blobs_b_noise3", with_noise(&blobs(2, 0.25), 0.03, 13));
    push("blobs_c_blur1", blurred(&blobs(3, 0.5), 1.0));
    push("gradient_v_noise5", with_noise(&gradient(PI / 2.0, 0.2, 0.7, [0.8, 1.0, 0.9]), 0.05, 12));
    // low-contrast content across the luminance range, where the visibility
    // threshold and hence the attack's room vary widely
    push("gradient_h", gradient(0.0, 0.1, 0.9, [1.0, 0.9, 0.8]));
    for (i, base) in [0.05, 0.3, 0.5, 0.9].into_iter().enumerate() {
        push(&format!("gradient_flat_{i}"), gradient(0.3, base, base + 0.08, [1.0, 0.95, 0.9]));
    }
    for (i, base) in [0.05, 0.15, 0.5, 0.7].into_iter().enumerate() {
        push(&format!("gradient_ramp_{i}"), gradient(0.3, base, base + 0.3, [1.0, 0.95, 0.9]));
    }
    for (i, base) in [0.05, 0.3, 0.5, 0.9].into_iter().enumerate() {
        push(&format!("grating_blur3_{i}"), blurred(&grating(6.0, 0.5, 0.1, base), 3.0));
    }
    for (i, base) in [0.15, 0.5, 0.9].into_iter().enumerate() {
        push(&format!("grating_faint_{i}"), grating(24.0, 1.0, 0.05, base));
    }
    push("gradient_flat_noise1", with_noise(&gradient(0.3, 0.15, 0.23, [1.0, 0.95, 0.9]), 0.01, 11));
    push("blobs_b_blur2_dark", blurred(&blobs_at(2, 0.1, 0.12), 2.0));
    debug_assert_eq!(out.len(), SYNTH_COUNT);
    out
}

/// Writes the corpus PNGs and a `mos.csv` whose MOS column is `model`'s
/// score of each decoded PNG. Returns `(file name, mos)` pairs.
pub fn write_synthetic_corpus(dir: impl AsRef<Path>, model: &mut dyn QualityModel) -> Result<Vec<(String, f64)>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    let mut csv = csv::Writer::from_path(dir.join("mos.csv"))?;
    csv.write_record(["path", "mos"])?;
    for (name, img) in synthetic_images() {
        let png = encode_png(&img)?;
        std::fs::write(dir.join(&name), &png)?;
        let mos = model.predict(&decode_png(&png)?)?;
        csv.write_record([name.as_str(), &mos.to_string()])?;
        rows.push((name, mos));
    }
    csv.flush()?;
    Ok(rows)
}
