use super::{GrayImage, Image};

/// Forward+backward raster-scan iterations used by [`mbs_saliency`].
pub const MBS_PASSES: usize = 3;

/// Minimum barrier distance from the image border, approximated by
/// alternating raster scans. Each scan relaxes a pixel from its two
/// already-visited 4-neighbours, tracking the running path maximum and
/// minimum; the barrier cost of a path is `max - min`.
pub fn minimum_barrier_raster(plane: &[f64], h: usize, w: usize, passes: usize) -> Vec<f64> {
    let n = h * w;
    let mut dist = vec![f64::INFINITY; n];
    let mut upper = plane.to_vec();
    let mut lower = plane.to_vec();
    for y in 0..h {
        for x in 0..w {
            if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                dist[y * w + x] = 0.0;
            }
        }
    }

    let relax = |i: usize, j: usize, dist: &mut [f64], upper: &mut [f64], lower: &mut [f64]| {
        let hi = upper[j].max(plane[i]);
        let lo = lower[j].min(plane[i]);
        let cost = hi - lo;
        if cost < dist[i] {
            dist[i] = cost;
            upper[i] = hi;
            lower[i] = lo;
        }
    };

    for _ in 0..passes {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if y > 0 {
                    relax(i, i - w, &mut dist, &mut upper, &mut lower);
                }
                if x > 0 {
                    relax(i, i - 1, &mut dist, &mut upper, &mut lower);
                }
            }
        }
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                let i = y * w + x;
                if y + 1 < h {
                    relax(i, i + w, &mut dist, &mut upper, &mut lower);
                }
                if x + 1 < w {
                    relax(i, i + 1, &mut dist, &mut upper, &mut lower);
                }
            }
        }
    }
    dist
}

/// Border-seeded minimum barrier salience on the luma plane, min-max
/// normalized to `[0, 1]`.
pub fn mbs_saliency(img: &Image) -> GrayImage {
    mbs_saliency_with(img, MBS_PASSES)
}

pub fn mbs_saliency_with(img: &Image, passes: usize) -> GrayImage {
    let gray = img.to_gray();
    let (h, w) = (gray.height(), gray.width());
    let dist = minimum_barrier_raster(gray.data(), h, w, passes);
    GrayImage::new(h, w, min_max_normalize(&dist)).expect("normalized values are in range")
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}


#[cfg(test)]
mod tests {
    use super::oracle::exact_mbd;
    use super::*;
    use crate::metrics::srocc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_zero_saliency() {
        let img = Image::filled(12, 12, 3, 0.4).unwrap();
        assert!(mbs_saliency(&img).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bright_center_block_stands_out() {
        let img = Image::from_fn(10, 10, 1, |y, x, _| {
            if (3..7).contains(&y) && (3..7).contains(&x) {
                0.9
            } else {
                0.1
            }
        })
        .unwrap();
        let sal = mbs_saliency(&img);
        let exact = exact_mbd(img.data(), 10, 10);
        let border_max = (0..100)
            .filter(|i| i / 10 == 0 || i % 10 == 0 || i / 10 == 9 || i % 10 == 9)
            .map(|i| sal.data()[i])
            .fold(0.0, f64::max);
        for y in 3..7 {
            for x in 3..7 {
                assert!(sal.get(y, x) > border_max);
                assert!((exact[y * 10 + x] - 0.8).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn border_pixels_are_zero() {
        let img = Image::from_fn(9, 11, 1, |y, x, _| ((y * 5 + x * 3) % 7) as f64 / 6.0).unwrap();
        let sal = mbs_saliency(&img);
        for y in 0..9 {
            for x in 0..11 {
                if y == 0 || x == 0 || y == 8 || x == 10 {
                    assert_eq!(sal.get(y, x), 0.0);
                }
            }
        }
    }

    #[test]
    fn raster_scan_never_undercuts_exact_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let (h, w) = (rng.random_range(3..=10), rng.random_range(3..=10));
            let plane: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
            let approx = minimum_barrier_raster(&plane, h, w, MBS_PASSES);
            let exact = exact_mbd(&plane, h, w);
            for (a, e) in approx.iter().zip(&exact) {
                assert!(a + 1e-12 >= *e, "{a} < {e}");
            }
        }
    }

    #[test]
    fn raster_scan_tracks_exact_ranking_on_piecewise_grids() {
        // blocky grids are what the saliency stage actually sees
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (h, w) = (rng.random_range(8..=10), rng.random_range(8..=10));
            let levels: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let plane: Vec<f64> = (0..h * w)
                .map(|i| levels[((i / w) / 4) * 3 + (i % w) / 4])
                .collect();
            let approx = minimum_barrier_raster(&plane, h, w, MBS_PASSES);
            let exact = exact_mbd(&plane, h, w);
            if let Ok(rho) = srocc(&approx, &exact) {
                assert!(rho > 0.95, "rho = {rho}");
            }
        }
    }
}
