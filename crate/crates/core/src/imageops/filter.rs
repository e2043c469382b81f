use super::{GrayImage, Image};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps with radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn convolve_rows(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[clamp_index(x as isize + k as isize - r, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let sy = clamp_index(y as isize + k as isize - r, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur of a raw plane with replicate padding.
pub(crate) fn blur_plane(src: &[f64], h: usize, w: usize, sigma: f64) -> Result<Vec<f64>> {
    let taps = gaussian_kernel(sigma)?;
    Ok(convolve_cols(&convolve_rows(src, h, w, &taps), h, w, &taps))
}

/// Box mean over a `size x size` window (odd `size`), replicate padding.
pub(crate) fn local_mean(src: &[f64], h: usize, w: usize, size: usize) -> Vec<f64> {
    let taps = vec![1.0 / size as f64; size];
    convolve_cols(&convolve_rows(src, h, w, &taps), h, w, &taps)
}

/// Raw 3x3 Sobel responses `(gx, gy)` with replicate padding.
pub(crate) fn sobel_plane(src: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: isize, x: isize| src[clamp_index(y, h) * w + clamp_index(x, w)];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    (gx, gy)
}

/// `sqrt(gx^2 + gy^2) / 4`, clipped to `[0, 1]`.
pub fn sobel_gradient_magnitude(img: &GrayImage) -> GrayImage {
    let (gx, gy) = sobel_plane(img.data(), img.height(), img.width());
    let data = gx
        .iter()
        .zip(&gy)
        .map(|(a, b)| ((a * a + b * b).sqrt() / 4.0).min(1.0))
        .collect();
    GrayImage::new(img.height(), img.width(), data).expect("magnitude stays in range")
}

/// Types that can be Gaussian blurred plane by plane.
pub trait Blur: Sized {
    fn blurred(&self, sigma: f64) -> Result<Self>;
}

impl Blur for GrayImage {
    fn blurred(&self, sigma: f64) -> Result<Self> {
        let out = blur_plane(self.data(), self.height(), self.width(), sigma)?;
        GrayImage::new(
            self.height(),
            self.width(),
            out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }
}

impl Blur for Image {
    fn blurred(&self, sigma: f64) -> Result<Self> {
        let planes = self
            .planes()
            .iter()
            .map(|p| {
                blur_plane(p, self.height(), self.width(), sigma)
                    .map(|o| o.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Image::from_planes(self.height(), self.width(), &planes)
    }
}

/// Separable Gaussian blur with kernel radius `ceil(3 * sigma)` and
/// replicate-edge padding.
pub fn gaussian_blur<T: Blur>(img: &T, sigma: f64) -> Result<T> {
    img.blurred(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let img = GrayImage::new(12, 9, vec![0.37; 108]).unwrap();
        for sigma in [0.5, 1.0, 2.5] {
            let out = gaussian_blur(&img, sigma).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_response_matches_dense_gaussian() {
        let mut data = vec![0.0; 81];
        data[4 * 9 + 4] = 1.0;
        let img = GrayImage::new(9, 9, data).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        // dense 2-D oracle over the same 7x7 support
        let mut dense = vec![0.0; 81];
        let mut z = 0.0;
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                z += (-((dx * dx + dy * dy) as f64) / 2.0).exp();
            }
        }
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                let idx = ((4 + dy) * 9 + 4 + dx) as usize;
                dense[idx] = (-((dx * dx + dy * dy) as f64) / 2.0).exp() / z;
            }
        }
        for (a, b) in out.data().iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let img = GrayImage::from_fn(10, 10, |y, x| ((y * 31 + x * 17) % 11) as f64 / 10.0).unwrap();
        let out = gaussian_blur(&img, 1e-6).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_rejects_non_positive_sigma() {
        let img = GrayImage::new(8, 8, vec![0.5; 64]).unwrap();
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn blur_stays_within_input_range() {
        let img = GrayImage::from_fn(16, 16, |y, x| 0.2 + 0.5 * (((y * 7 + x * 3) % 5) as f64 / 4.0)).unwrap();
        let out = gaussian_blur(&img, 1.7).unwrap();
        assert!(out.data().iter().all(|&v| (0.2 - 1e-12..=0.7 + 1e-12).contains(&v)));
    }

    #[test]
    fn sobel_of_constant_is_zero() {
        let img = GrayImage::new(8, 8, vec![0.8; 64]).unwrap();
        assert!(sobel_gradient_magnitude(&img).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sobel_step_peaks_at_the_step() {
        // left half 0, right half 1: the columns either side of the step see
        // (1 + 2 + 1) * 1 = 4 horizontally, i.e. magnitude 4 / 4 = 1.
        let img = GrayImage::from_fn(16, 16, |_, x| if x < 8 { 0.0 } else { 1.0 }).unwrap();
        let mag = sobel_gradient_magnitude(&img);
        for y in 0..16 {
            for x in 0..16 {
                let expected = if x == 7 || x == 8 { 1.0 } else { 0.0 };
                assert_eq!(mag.get(y, x), expected);
            }
        }
    }

    #[test]
    fn sobel_commutes_with_transpose() {
        let img = GrayImage::from_fn(11, 9, |y, x| ((y * y + 3 * x) % 13) as f64 / 12.0).unwrap();
        let a = sobel_gradient_magnitude(&img.transposed());
        let b = sobel_gradient_magnitude(&img).transposed();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
