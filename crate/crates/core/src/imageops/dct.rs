use super::Plane;
use std::f64::consts::PI;

/// Orthonormal DCT-II basis, `basis[k * n + i]`.
fn basis(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    let s0 = (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let scale = if k == 0 { s0 } else { s };
        for i in 0..n {
            b[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    b
}

/// `out = rows^T-or-not * src * cols^T-or-not` for the separable transform.
fn separable(src: &Plane, inverse: bool) -> Plane {
    let (h, w) = (src.height, src.width);
    let bh = basis(h);
    let bw = basis(w);
    // along rows (width axis)
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for k in 0..w {
            let mut acc = 0.0;
            for (i, v) in row.iter().enumerate() {
                acc += v * if inverse { bw[i * w + k] } else { bw[k * w + i] };
            }
            tmp[y * w + k] = acc;
        }
    }
    // along columns (height axis)
    let mut out = vec![0.0; h * w];
    for k in 0..h {
        for i in 0..h {
            let c = if inverse { bh[i * h + k] } else { bh[k * h + i] };
            if c == 0.0 {
                continue;
            }
            let src_row = &tmp[i * w..(i + 1) * w];
            let dst = &mut out[k * w..(k + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += c * s;
            }
        }
    }
    Plane {
        height: h,
        width: w,
        data: out,
    }
}

/// Orthonormal type-II 2-D DCT.
pub fn dct2(img: &Plane) -> Plane {
    separable(img, false)
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2(coeffs: &Plane) -> Plane {
    separable(coeffs, true)
}

/// Coefficient indices (`y * width + x`) in zig-zag order: by anti-diagonal,
/// alternating traversal direction.
pub fn zigzag_order(height: usize, width: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, usize)> = (0..height)
        .flat_map(|y| (0..width).map(move |x| (y, x)))
        .collect();
    idx.sort_by_key(|&(y, x)| {
        let diag = y + x;
        let along = if diag % 2 == 0 { x } else { y };
        (diag, along)
    });
    idx.into_iter().map(|(y, x)| y * width + x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_dct(p: &Plane) -> Plane {
        let (h, w) = (p.height, p.width);
        let alpha = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = Plane::zeros(h, w);
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        acc += p.get(y, x)
                            * (PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                            * (PI * (2 * x + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                    }
                }
                out.data[u * w + v] = alpha(u, h) * alpha(v, w) * acc;
            }
        }
        out
    }

    #[test]
    fn constant_plane_has_only_dc() {
        let n = 12;
        let p = Plane {
            height: n,
            width: n,
            data: vec![0.3; n * n],
        };
        let c = dct2(&p);
        assert!((c.data[0] - 0.3 * n as f64).abs() < 1e-12);
        assert!(c.data[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (h, w) in [(16, 16), (8, 8), (13, 21), (64, 64)] {
            let p = Plane {
                height: h,
                width: w,
                data: (0..h * w).map(|_| rng.random::<f64>()).collect(),
            };
            let back = idct2(&dct2(&p));
            let err = p.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{h}x{w}: {err}");
        }
    }

    #[test]
    fn basis_image_maps_to_unit_coefficient() {
        let (h, w, ku, kv) = (8, 10, 2, 3);
        let mut coeffs = Plane::zeros(h, w);
        coeffs.data[ku * w + kv] = 1.0;
        let img = idct2(&coeffs);
        let direct = direct_dct(&img);
        for (i, v) in direct.data.iter().enumerate() {
            let expected = if i == ku * w + kv { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Plane {
            height: 9,
            width: 8,
            data: (0..72).map(|_| rng.random::<f64>()).collect(),
        };
        let fast = dct2(&p);
        let slow = direct_dct(&p);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zigzag_starts_at_dc_and_covers_all() {
        let order = zigzag_order(4, 4);
        assert_eq!(&order[..6], &[0, 1, 4, 8, 5, 2]);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
    }
}
