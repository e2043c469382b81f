//! Attack directions: the texture-driven initial direction `u_hat` and the
//! stochastic low-frequency direction `v_hat`.

mod textures;

pub use textures::{default_textures, DEFAULT_TEXTURE_NAMES};

use crate::error::{Error, Result};
use crate::imageops::{
    canny_edges_with, check_shape, dct2, gaussian_blur, idct2, load_png, mbs_saliency_with, zigzag_order,
    BinaryMask, CannyParams, Image, Plane, Shape, MBS_PASSES,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Range of the donor intensity factor `tau ~ U(-TAU_RANGE, TAU_RANGE)`.
pub const TAU_RANGE: f64 = 0.1;
pub const DEFAULT_DONOR_SIGMA: f64 = 2.0;
pub const DEFAULT_LOW_FREQ_FRACTION: f64 = 1.0 / 16.0;
/// Donor residuals must have per-channel mean below this.
pub const DONOR_MEAN_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Raw,
    Unit,
}

/// A signed `H x W x C` field used as a perturbation direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    shape: Shape,
    data: Vec<f64>,
    kind: NormKind,
}

impl Direction {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidParameter(format!(
                "direction holds {} values, shape {shape} needs {}",
                data.len(),
                shape.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("direction has non-finite entries".into()));
        }
        Ok(Self {
            shape,
            data,
            kind: NormKind::Raw,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
            kind: NormKind::Raw,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, k: f64) -> Direction {
        Direction {
            shape: self.shape,
            data: self.data.iter().map(|v| v * k).collect(),
            kind: NormKind::Raw,
        }
    }

    /// Divides by the Euclidean norm; fails when the norm is below `eps`.
    pub fn normalized(&self, eps: f64) -> Option<Direction> {
        let n = self.norm();
        if !(n >= eps) {
            return None;
        }
        Some(Direction {
            shape: self.shape,
            data: self.data.iter().map(|v| v / n).collect(),
            kind: NormKind::Unit,
        })
    }

    /// Marks a direction as unit norm after checking it.
    pub fn into_unit(mut self) -> Result<Direction> {
        if (self.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("norm {} is not 1", self.norm())));
        }
        self.kind = NormKind::Unit;
        Ok(self)
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.shape.channels;
        let n = self.shape.pixels() as f64;
        (0..c)
            .map(|ch| self.data.iter().skip(ch).step_by(c).sum::<f64>() / n)
            .collect()
    }
}

/// High-pass residual `hq - blur(hq, sigma)`, re-centred to zero mean per
/// channel (replicate padding leaves a small border bias otherwise).
pub fn make_texture_donor(hq: &Image, sigma: f64) -> Result<Direction> {
    let blurred = gaussian_blur(hq, sigma)?;
    let mut residual: Vec<f64> = hq.data().iter().zip(blurred.data()).map(|(a, b)| a - b).collect();
    let c = hq.channels();
    let n = hq.shape().pixels() as f64;
    for ch in 0..c {
        let mean = residual.iter().skip(ch).step_by(c).sum::<f64>() / n;
        residual.iter_mut().skip(ch).step_by(c).for_each(|v| *v -= mean);
    }
    Direction::new(hq.shape(), residual)
}

/// The donors `d_tex` an attack draws from.
#[derive(Clone, Debug)]
pub struct TextureBank {
    donors: Vec<Direction>,
    sources: Vec<String>,
}

impl TextureBank {
    pub fn new(donors: Vec<Direction>, sources: Vec<String>) -> Result<Self> {
        let first = donors
            .first()
            .ok_or_else(|| Error::InvalidParameter("texture bank is empty".into()))?;
        if sources.len() != donors.len() {
            return Err(Error::InvalidParameter("one source descriptor per donor required".into()));
        }
        for d in &donors {
            check_shape(first.shape(), d.shape())?;
            if let Some(m) = d.channel_means().iter().find(|m| m.abs() >= DONOR_MEAN_TOLERANCE) {
                return Err(Error::InvalidParameter(format!("donor is not zero-mean (mean {m})")));
            }
        }
        Ok(Self { donors, sources })
    }

    pub fn from_images(images: &[Image], sources: Vec<String>, sigma: f64) -> Result<Self> {
        let donors = images
            .iter()
            .map(|img| make_texture_donor(img, sigma))
            .collect::<Result<Vec<_>>>()?;
        Self::new(donors, sources)
    }

    /// The four built-in procedural textures rendered at `shape`.
    pub fn procedural(shape: Shape) -> Result<Self> {
        let images = default_textures(shape)?;
        let sources = DEFAULT_TEXTURE_NAMES.iter().map(|s| format!("procedural:{s}")).collect();
        Self::from_images(&images, sources, DEFAULT_DONOR_SIGMA)
    }

    /// Loads every PNG in `dir` (sorted by name) and fits it to `shape` by
    /// centre-cropping or tiling.
    pub fn from_dir(dir: impl AsRef<Path>, shape: Shape, sigma: f64) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no PNG donors in {}",
                dir.as_ref().display()
            )));
        }
        let mut images = Vec::with_capacity(paths.len());
        for p in &paths {
            images.push(fit_to_shape(&load_png(p)?, shape)?);
        }
        let sources = paths.iter().map(|p| p.display().to_string()).collect();
        Self::from_images(&images, sources, sigma)
    }

    pub fn shape(&self) -> Shape {
        self.donors[0].shape()
    }

    pub fn len(&self) -> usize {
        self.donors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.donors.is_empty()
    }

    pub fn donor(&self, i: usize) -> &Direction {
        &self.donors[i]
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }
}

fn fit_to_shape(img: &Image, shape: Shape) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    let top = h.saturating_sub(shape.height) / 2;
    let left = w.saturating_sub(shape.width) / 2;
    Image::from_fn(shape.height, shape.width, shape.channels, |y, x, c| {
        let (sy, sx) = ((top + y) % h, (left + x) % w);
        match (img.channels(), shape.channels) {
            (1, _) => img.get(sy, sx, 0),
            (3, 3) => img.get(sy, sx, c),
            _ => 0.299 * img.get(sy, sx, 0) + 0.587 * img.get(sy, sx, 1) + 0.114 * img.get(sy, sx, 2),
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskParams {
    pub canny: CannyParams,
    /// Saliency values above this (after normalization) join the mask.
    pub saliency_threshold: f64,
    pub mbs_passes: usize,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            canny: CannyParams::default(),
            saliency_threshold: 0.1,
            mbs_passes: MBS_PASSES,
        }
    }
}

/// Edge mask of the luma plane united with the thresholded saliency map.
pub fn combined_mask(x0: &Image) -> BinaryMask {
    combined_mask_with(x0, &MaskParams::default()).expect("default canny thresholds are valid")
}

pub fn combined_mask_with(x0: &Image, params: &MaskParams) -> Result<BinaryMask> {
    let edges = canny_edges_with(&x0.to_gray(), &params.canny)?;
    let saliency = mbs_saliency_with(x0, params.mbs_passes);
    let salient = BinaryMask::new(
        x0.height(),
        x0.width(),
        saliency
            .data()
            .iter()
            .map(|&s| u8::from(s > params.saliency_threshold))
            .collect(),
    )?;
    edges.union(&salient)
}

/// One draw of the initial direction with the randomness that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct USample {
    pub direction: Direction,
    pub donor_index: usize,
    pub tau: f64,
}

/// `tau * d_tex (.) mask` with a uniformly chosen donor and
/// `tau ~ U(-0.1, 0.1)`; the mask is broadcast over channels.
pub fn sample_u_hat<R: Rng + ?Sized>(bank: &TextureBank, mask: &BinaryMask, rng: &mut R) -> Result<USample> {
    let shape = bank.shape();
    if mask.height() != shape.height || mask.width() != shape.width {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: Shape::new(mask.height(), mask.width(), shape.channels),
        });
    }
    if mask.is_empty() {
        return Err(Error::EmptyAttackRegion);
    }
    let donor_index = rng.random_range(0..bank.len());
    let tau = rng.random_range(-TAU_RANGE..TAU_RANGE);
    Ok(USample {
        direction: masked_scaled(bank.donor(donor_index), mask, tau),
        donor_index,
        tau,
    })
}

pub(crate) fn masked_scaled(donor: &Direction, mask: &BinaryMask, tau: f64) -> Direction {
    let c = donor.shape().channels;
    let data = donor
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| if mask.data()[i / c] == 1 { tau * v } else { 0.0 })
        .collect();
    Direction {
        shape: donor.shape(),
        data,
        kind: NormKind::Raw,
    }
}

/// Draws random sign flips over the low-frequency DCT subband of `x0`.
///
/// The DCT of each channel of `x0` is computed once; every draw multiplies
/// the lowest `fraction` of coefficients (zig-zag order) by independent
/// random signs, zeroes the rest, and inverts.
#[derive(Clone, Debug)]
pub struct LowFrequencySampler {
    shape: Shape,
    coefficients: Vec<Plane>,
    support: Vec<usize>,
}

impl LowFrequencySampler {
    pub fn new(x0: &Image, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("low-frequency fraction {fraction} not in (0, 1]")));
        }
        let (h, w) = (x0.height(), x0.width());
        let coefficients = x0
            .planes()
            .into_iter()
            .map(|data| dct2(&Plane { height: h, width: w, data }))
            .collect();
        let count = ((h * w) as f64 * fraction).round().max(1.0) as usize;
        let mut support = zigzag_order(h, w);
        support.truncate(count);
        Ok(Self {
            shape: x0.shape(),
            coefficients,
            support,
        })
    }

    /// Coefficient indices (`y * width + x`) that may be non-zero.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// The signed low-frequency field before orthogonalization.
    pub fn low_frequency_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        let (h, w, c) = (self.shape.height, self.shape.width, self.shape.channels);
        let mut data = vec![0.0; self.shape.len()];
        for (ch, coeffs) in self.coefficients.iter().enumerate() {
            let mut masked = Plane::zeros(h, w);
            for &k in &self.support {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                masked.data[k] = sign * coeffs.data[k];
            }
            let spatial = idct2(&masked);
            for (i, v) in spatial.data.iter().enumerate() {
                data[i * c + ch] = *v;
            }
        }
        Direction {
            shape: self.shape,
            data,
            kind: NormKind::Raw,
        }
    }

    /// A unit direction orthogonal to the unit direction `u`.
    pub fn sample<R: Rng + ?Sized>(&self, u: &Direction, rng: &mut R) -> Result<Direction> {
        check_shape(self.shape, u.shape())?;
        if (u.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("u must have unit norm".into()));
        }
        let mut v = self.low_frequency_draw(rng);
        // two Gram-Schmidt passes keep the residual inner product at rounding level
        for _ in 0..2 {
            let proj = v.dot(u);
            v.data.iter_mut().zip(&u.data).for_each(|(a, b)| *a -= proj * b);
        }
        v.normalized(1e-9).ok_or(Error::DegenerateDirection)
    }
}

/// One-shot form of [`LowFrequencySampler::sample`] with the default subband.
pub fn sample_v_hat<R: Rng + ?Sized>(x0: &Image, u: &Direction, rng: &mut R) -> Result<Direction> {
    LowFrequencySampler::new(x0, DEFAULT_LOW_FREQ_FRACTION)?.sample(u, rng)
}
