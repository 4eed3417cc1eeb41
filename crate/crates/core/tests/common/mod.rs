//! Reference implementations and generators shared by integration tests.
//!
//! The references are deliberately naive: direct loops over pixels and
//! windows, and an iterative matrix square root, so they share no code path
//! with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use night2day::image::{BinaryMap, Image};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    let data = (0..w * h * c).map(|_| rng.random::<f32>()).collect();
    Image::new(w, h, c, data).unwrap()
}

/// Random image on the 8-bit lattice.
pub fn random_image8(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    let data = (0..w * h * c)
        .map(|_| rng.random_range(0..=255u8) as f32 / 255.0)
        .collect();
    Image::new(w, h, c, data).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryMap {
    BinaryMap::from_fn(w, h, |_, _| rng.random_bool(p))
}

pub fn rmse_ref(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let d = a.get(x, y, c) as f64 - b.get(x, y, c) as f64;
                s += d * d;
            }
        }
    }
    (s / (a.width() * a.height() * a.channels()) as f64).sqrt()
}

pub fn mae_ref(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                s += (a.get(x, y, c) as f64 - b.get(x, y, c) as f64).abs();
            }
        }
    }
    s / (a.width() * a.height() * a.channels()) as f64
}

pub fn ncc_ref(a: &Image, b: &Image) -> f64 {
    let n = (a.width() * a.height() * a.channels()) as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                ma += a.get(x, y, c) as f64;
                mb += b.get(x, y, c) as f64;
            }
        }
    }
    ma /= n;
    mb /= n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let p = a.get(x, y, c) as f64 - ma;
                let q = b.get(x, y, c) as f64 - mb;
                num += p * q;
                da += p * p;
                db += q * q;
            }
        }
    }
    num / (da * db).sqrt()
}

fn luma_ref(img: &Image, x: usize, y: usize) -> f64 {
    0.299 * img.get(x, y, 0) as f64
        + 0.587 * img.get(x, y, 1) as f64
        + 0.114 * img.get(x, y, 2) as f64
}

/// Mean SSIM over every fully contained 11×11 window, each window's
/// statistics summed directly with 2-D Gaussian weights.
pub fn ssim_ref(a: &Image, b: &Image) -> f64 {
    let r = 5i64;
    let mut w2 = [[0.0f64; 11]; 11];
    let mut total_w = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * 1.5 * 1.5)).exp();
            w2[(dy + r) as usize][(dx + r) as usize] = v;
            total_w += v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for oy in 0..=a.height() - 11 {
        for ox in 0..=a.width() - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let w = w2[j][i] / total_w;
                    let p = luma_ref(a, ox + i, oy + j);
                    let q = luma_ref(b, ox + i, oy + j);
                    ma += w * p;
                    mb += w * q;
                    saa += w * p * p;
                    sbb += w * q * q;
                    sab += w * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn mean_cov(f: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (f.len(), f[0].len());
    let mut mean = vec![0.0; d];
    for row in f {
        for j in 0..d {
            mean[j] += row[j] / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for row in f {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    (mean, cov)
}

/// Denman–Beavers iteration for the principal square root.
pub fn sqrtm_db(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = m.clone();
    let mut z = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..100 {
        let yi = y.clone().try_inverse().expect("invertible iterate");
        let zi = z.clone().try_inverse().expect("invertible iterate");
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta < 1e-15 * y.norm() {
            break;
        }
    }
    y
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 sqrtm(Σa Σb))` evaluated directly.
pub fn fid_ref(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = mean_cov(a);
    let (mb, cb) = mean_cov(b);
    let dist: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let root = sqrtm_db(&(&ca * &cb));
    dist + ca.trace() + cb.trace() - 2.0 * root.trace()
}

/// Counts by scanning bin edges; values outside the range go to the end bins.
pub fn histogram_ref(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let mut idx = if v < lo { 0 } else { bins - 1 };
        for i in 0..bins {
            if v >= edges[i] && v < edges[i + 1] {
                idx = i;
                break;
            }
        }
        counts[idx] += 1;
    }
    counts
}
