//! Pixel-wise just-noticeable-difference thresholds and the feasible box
//! `{x : |x - x0| <= m}` they induce.
//!
//! The threshold model is a spatial-domain one computed on luma:
//!
//! - luminance adaptation `LA(bg)` from the 5x5 local mean `bg` (8-bit scale):
//!   `(17 (1 - sqrt(bg / 127)) + 3) / 255` for `bg <= 127`, otherwise
//!   `(3 (bg - 127) / 128 + 3) / 255`;
//! - spatial masking `SM = alpha * G`, with `G` the Sobel magnitude of the
//!   `sigma = 1` blurred luma and `alpha = 16/255`, lowered to `6/255` on
//!   Canny edge pixels so structural edges are protected more than texture;
//! - combination `m = max(LA, SM (1 - 0.3 overlap))` with
//!   `overlap = min(LA, SM) / max(LA, SM)`, clamped to `[1/255, 32/255]`
//!   and broadcast to every channel.

use crate::error::{Error, Result};
use crate::imageops::{
    blur_plane, canny_edges_with, check_shape, local_mean, sobel_plane, BinaryMask, CannyParams, Image, Shape,
};
use serde::{Deserialize, Serialize};

pub const T_MIN: f64 = 1.0 / 255.0;
pub const T_MAX: f64 = 32.0 / 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JndParams {
    pub texture_gain: f64,
    pub edge_gain: f64,
    pub overlap_reduction: f64,
    pub background_window: usize,
    pub smoothing_sigma: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub canny: CannyParams,
}

impl Default for JndParams {
    fn default() -> Self {
        Self {
            texture_gain: 16.0 / 255.0,
            edge_gain: 6.0 / 255.0,
            overlap_reduction: 0.3,
            background_window: 5,
            smoothing_sigma: 1.0,
            t_min: T_MIN,
            t_max: T_MAX,
            canny: CannyParams::default(),
        }
    }
}

/// Luminance adaptation threshold (intensity units) for an 8-bit background
/// level `bg` in `[0, 255]`.
pub fn luminance_adaptation(bg: f64) -> f64 {
    if bg <= 127.0 {
        (17.0 * (1.0 - (bg / 127.0).sqrt()) + 3.0) / 255.0
    } else {
        (3.0 * (bg - 127.0) / 128.0 + 3.0) / 255.0
    }
}

/// Per-pixel visibility thresholds, one per image element.
#[derive(Clone, Debug, PartialEq)]
pub struct JndMap {
    shape: Shape,
    thresholds: Vec<f64>,
}

impl JndMap {
    pub fn new(shape: Shape, thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() != shape.len() {
            return Err(Error::InvalidParameter("threshold count does not match shape".into()));
        }
        if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("thresholds must be finite and non-negative".into()));
        }
        Ok(Self { shape, thresholds })
    }

    /// A map with the same threshold everywhere.
    pub fn uniform(shape: Shape, m: f64) -> Result<Self> {
        Self::new(shape, vec![m; shape.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// The luma-plane thresholds (channel 0) as an 8-bit friendly image,
    /// scaled by `255 * 8` for visual inspection.
    pub fn debug_image(&self) -> Image {
        let c = self.shape.channels;
        let data = self
            .thresholds
            .iter()
            .step_by(c)
            .map(|m| (m * 8.0).clamp(0.0, 1.0))
            .collect();
        Image::new(self.shape.height, self.shape.width, 1, data).expect("shape comes from a valid image")
    }
}

pub fn jnd_threshold(img: &Image) -> JndMap {
    jnd_threshold_with(img, &JndParams::default())
}

pub fn jnd_threshold_with(img: &Image, params: &JndParams) -> JndMap {
    let (h, w) = (img.height(), img.width());
    let gray = img.to_gray();
    let scaled: Vec<f64> = gray.data().iter().map(|v| v * 255.0).collect();
    let background = local_mean(&scaled, h, w, params.background_window);

    let smoothed = blur_plane(gray.data(), h, w, params.smoothing_sigma).expect("sigma validated by params");
    let (gx, gy) = sobel_plane(&smoothed, h, w);
    let edges = canny_edges_with(&gray, &params.canny).unwrap_or_else(|_| BinaryMask::zeros(h, w));

    let luma_thresholds: Vec<f64> = (0..h * w)
        .map(|i| {
            let la = luminance_adaptation(background[i].clamp(0.0, 255.0));
            let g = ((gx[i] * gx[i] + gy[i] * gy[i]).sqrt() / 4.0).min(1.0);
            let gain = if edges.data()[i] == 1 {
                params.edge_gain
            } else {
                params.texture_gain
            };
            let sm = gain * g;
            let (lo, hi) = (la.min(sm), la.max(sm));
            let overlap = if hi > 0.0 { lo / hi } else { 0.0 };
            la.max(sm * (1.0 - params.overlap_reduction * overlap))
                .clamp(params.t_min, params.t_max)
        })
        .collect();

    let c = img.channels();
    let thresholds = luma_thresholds
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m, c))
        .collect();
    JndMap {
        shape: img.shape(),
        thresholds,
    }
}

/// The closed box `[max(0, x0 - m), min(1, x0 + m)]`, elementwise.
#[derive(Clone, Debug, PartialEq)]
pub struct JndBox {
    shape: Shape,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl JndBox {
    /// Builds a box from explicit bounds; requires `0 <= lo <= hi <= 1`.
    pub fn from_bounds(shape: Shape, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != shape.len() || hi.len() != shape.len() {
            return Err(Error::InvalidParameter("bounds do not match shape".into()));
        }
        if lo.iter().zip(&hi).any(|(l, u)| !(0.0 <= *l && l <= u && *u <= 1.0)) {
            return Err(Error::InvalidParameter("bounds must satisfy 0 <= lo <= hi <= 1".into()));
        }
        Ok(Self { shape, lo, hi })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, img: &Image) -> bool {
        img.shape() == self.shape
            && img
                .data()
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Number of elements outside the box.
    pub fn violations(&self, values: &[f64]) -> usize {
        values
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .filter(|(v, (l, u))| !(**l <= **v && **v <= **u))
            .count()
    }

    /// Clamps `values` into the box in place.
    pub fn clamp_in_place(&self, values: &mut [f64]) {
        for (v, (l, u)) in values.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *u);
        }
    }
}

pub fn jnd_box(img: &Image, m: &JndMap) -> Result<JndBox> {
    check_shape(img.shape(), m.shape())?;
    let (lo, hi) = img
        .data()
        .iter()
        .zip(m.thresholds())
        .map(|(x, t)| ((x - t).max(0.0), (x + t).min(1.0)))
        .unzip();
    Ok(JndBox {
        shape: img.shape(),
        lo,
        hi,
    })
}

/// `lo <= img <= hi` at every element.
pub fn contains(bx: &JndBox, img: &Image) -> bool {
    bx.contains(img)
}
