//! Shared fixtures for the benchmarks.

use jndattack::Image;

/// A deterministic textured RGB image: a ramp with two interfering gratings.
pub fn fixture(side: usize) -> Image {
    Image::from_fn(side, side, 3, |y, x, c| {
        let (y, x) = (y as f64, x as f64);
        let ramp = 0.2 + 0.5 * x / side as f64;
        let tex = 0.08 * (0.7 * x + 0.3 * y).sin() + 0.05 * (0.21 * y - 0.4 * x).cos();
        (ramp + tex + 0.02 * c as f64).clamp(0.0, 1.0)
    })
    .expect("side is at least the minimum")
}
