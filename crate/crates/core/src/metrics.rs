//! Correlation, error and similarity metrics for campaign reports.

use crate::error::{Error, Result};
use crate::imageops::{check_shape, gaussian_kernel, Image};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    Ok(())
}

/// Twice the average (1-based) rank of every element, so ties stay integral.
fn doubled_ranks(v: &[f64]) -> Vec<i64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end share rank (start + 1 + end) / 2
        let doubled = (start + 1 + end) as i64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of integer vectors from exact integer moments.
fn pearson_int(x: &[i64], y: &[i64], what: &'static str) -> Result<f64> {
    let n = x.len() as i128;
    let (sx, sy) = (x.iter().map(|&v| v as i128).sum::<i128>(), y.iter().map(|&v| v as i128).sum::<i128>());
    let sxy: i128 = x.iter().zip(y).map(|(&a, &b)| a as i128 * b as i128).sum();
    let sxx: i128 = x.iter().map(|&a| a as i128 * a as i128).sum();
    let syy: i128 = y.iter().map(|&b| b as i128 * b as i128).sum();
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx == 0 || vy == 0 {
        return Err(Error::UndefinedCorrelation(what));
    }
    Ok((cov as f64 / ((vx as f64) * (vy as f64)).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn srocc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_int(&doubled_ranks(a), &doubled_ranks(b), "constant input to srocc")
}

/// Pearson linear correlation.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input to plcc"));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall tau-b: `(nc - nd) / sqrt((n0 - n1)(n0 - n2))` with `n1`, `n2`
/// the pairs tied in `a` and in `b`.
pub fn krocc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut nc, mut nd, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].partial_cmp(&a[j]).expect("finite") as i64;
            let db = b[i].partial_cmp(&b[j]).expect("finite") as i64;
            ta += (da == 0) as i64;
            tb += (db == 0) as i64;
            match da * db {
                1 => nc += 1,
                -1 => nd += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let (dx, dy) = (n0 - ta, n0 - tb);
    if dx == 0 || dy == 0 {
        return Err(Error::UndefinedCorrelation("constant input to krocc"));
    }
    Ok((((nc - nd) as f64) / ((dx as f64) * (dy as f64)).sqrt()).clamp(-1.0, 1.0))
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter(format!("mae needs equal non-empty lengths, got {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// `10 log10(1 / MSE)`; identical images give `+inf`.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    check_shape(x.shape(), y.shape())?;
    let mse = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Mean SSIM of the luma planes over all fully contained 11x11 Gaussian
/// windows. Images smaller than one window use a single global window.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    check_shape(x.shape(), y.shape())?;
    let (gx, gy) = (x.to_gray(), y.to_gray());
    let (h, w) = (gx.height(), gx.width());
    let (px, py) = (gx.data(), gy.data());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        let n = px.len() as f64;
        let mx = px.iter().sum::<f64>() / n;
        let my = py.iter().sum::<f64>() / n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (a, b) in px.iter().zip(py) {
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
            cxy += (a - mx) * (b - my);
        }
        return Ok(ssim_from_moments(mx, my, vx / n, vy / n, cxy / n));
    }
    let k1 = gaussian_kernel(SSIM_SIGMA)?;
    // the kernel radius for sigma 1.5 is 5, i.e. exactly the 11-tap window
    debug_assert_eq!(k1.len(), SSIM_WINDOW);
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - SSIM_WINDOW {
        for left in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dy, ky) in k1.iter().enumerate() {
                let row = (top + dy) * w + left;
                for (dx, kx) in k1.iter().enumerate() {
                    let wgt = ky * kx;
                    let (a, b) = (px[row + dx], py[row + dx]);
                    mx += wgt * a;
                    my += wgt * b;
                    sxx += wgt * a * a;
                    syy += wgt * b * b;
                    sxy += wgt * a * b;
                }
            }
            total += ssim_from_moments(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my);
            count += 1;
        }
    }
    Ok(total / count as f64)
}
