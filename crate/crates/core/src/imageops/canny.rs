use super::{blur_plane, sobel_plane, BinaryMask, GrayImage};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Canny thresholds apply to the Sobel magnitude scaled by 1/4, the same
/// normalization as [`super::sobel_gradient_magnitude`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.2,
            sigma: 1.0,
        }
    }
}

pub fn canny_edges(img: &GrayImage, low_thresh: f64, high_thresh: f64) -> Result<BinaryMask> {
    canny_edges_with(
        img,
        &CannyParams {
            low: low_thresh,
            high: high_thresh,
            ..CannyParams::default()
        },
    )
}

/// Gaussian smoothing, Sobel gradients, non-maximum suppression along the
/// quantized gradient direction, then double-threshold hysteresis over
/// 8-connected neighbours.
pub fn canny_edges_with(img: &GrayImage, params: &CannyParams) -> Result<BinaryMask> {
    let CannyParams { low, high, sigma } = *params;
    if !(low > 0.0 && low < high && high <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "canny thresholds need 0 < low < high <= 1, got low={low} high={high}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let smoothed = blur_plane(img.data(), h, w, sigma)?;
    let (gx, gy) = sobel_plane(&smoothed, h, w);
    let mag: Vec<f64> = gx
        .iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt() / 4.0)
        .collect();

    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    let mut thin = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // y grows downwards, so a 45 degree gradient points down-right.
            let (dy, dx) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let (yi, xi) = (y as isize, x as isize);
            if m >= at(yi + dy, xi + dx) && m >= at(yi - dy, xi - dx) {
                thin[i] = m;
            }
        }
    }

    let mut out = vec![0u8; h * w];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            out[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0 && thin[j] >= low {
                    out[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    BinaryMask::new(h, w, out)
}
