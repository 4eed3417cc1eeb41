//! Full-reference similarity measures on `[0, 1]` images.

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn pairs<'a>(a: &'a Image, b: &'a Image) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    a.ensure_same_shape(b)?;
    if a.data().is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64, y as f64)))
}

/// Root mean squared difference over all pixels and channels.
pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    let n = a.data().len() as f64;
    let sum: f64 = pairs(a, b)?.map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / n).sqrt())
}

/// Mean absolute difference over all pixels and channels.
pub fn mae(a: &Image, b: &Image) -> Result<f64> {
    let n = a.data().len() as f64;
    let sum: f64 = pairs(a, b)?.map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / n)
}

/// Global zero-mean normalized cross-correlation.
pub fn ncc(a: &Image, b: &Image) -> Result<f64> {
    let n = a.data().len() as f64;
    let (sa, sb) = pairs(a, b)?.fold((0.0, 0.0), |(sa, sb), (x, y)| (sa + x, sb + y));
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs(a, b)? {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate(
            "NCC is undefined for a constant image".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

fn luma(img: &Image) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.data().iter().map(|&v| v as f64).collect()),
        3 => Ok(img
            .data()
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
            .collect()),
        c => Err(Error::Dimension(format!(
            "SSIM expects 1 or 3 channels, got {c}"
        ))),
    }
}

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter, valid region only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW)
                .map(|i| k[i] * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity of the BT.601 luminance of `a` and `b`, with an
/// 11×11 Gaussian window (σ = 1.5) over every fully contained position and
/// dynamic range 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let la = luma(a)?;
    let lb = luma(b)?;
    let k = ssim_kernel();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&la, w, h, &k);
    let mu_b = filter_valid(&lb, w, h, &k);
    let e_aa = filter_valid(&prod(&la, &la), w, h, &k);
    let e_bb = filter_valid(&prod(&lb, &lb), w, h, &k);
    let e_ab = filter_valid(&prod(&la, &lb), w, h, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_images_follow_closed_forms() {
        let zero = Image::filled(16, 16, 3, 0.0);
        let one = Image::filled(16, 16, 3, 1.0);
        assert_eq!(rmse(&zero, &one).unwrap(), 1.0);
        let c1 = SSIM_K1 * SSIM_K1;
        assert!((ssim(&zero, &one).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
        assert!(matches!(ncc(&zero, &one), Err(Error::Degenerate(_))));
        let q = Image::filled(4, 4, 3, 0.25);
        let t = Image::filled(4, 4, 3, 0.75);
        assert_eq!(mae(&q, &t).unwrap(), 0.5);
    }

    #[test]
    fn shape_and_size_errors() {
        let a = Image::filled(16, 16, 3, 0.0);
        let b = Image::filled(16, 15, 3, 0.0);
        assert!(rmse(&a, &b).is_err());
        let small = Image::filled(10, 10, 3, 0.5);
        assert!(matches!(ssim(&small, &small), Err(Error::Dimension(_))));
    }
}
