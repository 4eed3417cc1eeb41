//! Canny edge detection on `[0, 1]` grayscale images.
//!
//! Gaussian smoothing is normalized against the smoothed support so image
//! borders do not darken, gradients are unnormalized Sobel responses, and
//! non-maximum suppression interpolates the magnitude between the two
//! neighbours straddling the gradient direction. Hysteresis keeps every
//! 8-connected run of suppressed maxima above `low` that touches a value above
//! `high`. Thresholds are on the Sobel magnitude of `[0, 1]` data.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::image::{BinaryMap, EdgeMap, Image};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            low: 0.1,
            high: 0.2,
        }
    }
}

pub fn canny_edges(gray: &Image, params: CannyParams) -> Result<EdgeMap> {
    let CannyParams { sigma, low, high } = params;
    if gray.channels() != 1 {
        return Err(Error::Dimension(format!(
            "canny expects a single-channel image, got {} channels",
            gray.channels()
        )));
    }
    if !(sigma.is_finite() && low.is_finite() && high.is_finite()) || !gray.is_finite() {
        return Err(Error::InvalidArgument("canny inputs must be finite".into()));
    }
    if !(sigma >= 0.0 && low > 0.0 && low < high) {
        return Err(Error::InvalidArgument(format!(
            "canny requires sigma >= 0 and 0 < low < high (sigma={sigma}, low={low}, high={high})"
        )));
    }
    let (w, h) = (gray.width(), gray.height());
    if w < 3 || h < 3 {
        return Ok(BinaryMap::zeros(w, h));
    }

    let pixels: Vec<f64> = gray.data().iter().map(|&v| v as f64).collect();
    let smoothed = normalized_gaussian(&pixels, w, h, sigma);
    let (gy, gx) = sobel(&smoothed, w, h);
    let magnitude: Vec<f64> = gy
        .iter()
        .zip(&gx)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect();
    let suppressed = non_maximum_suppression(&gy, &gx, &magnitude, w, h, low);
    Ok(hysteresis(&suppressed, w, h, high))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as usize;
    if sigma == 0.0 {
        return vec![1.0];
    }
    let scale = -0.5 / (sigma * sigma);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (scale * (x * x)).exp()
        })
        .collect();
    let sum = pairwise_sum(&k);
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Eight-lane blocked summation; keeps kernel normalization stable to the
/// last bit across platforms that use the same reduction order.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() < 8 {
        return v.iter().fold(0.0, |a, b| a + b);
    }
    let mut lanes = [0.0; 8];
    lanes.copy_from_slice(&v[..8]);
    let whole = v.len() - v.len() % 8;
    for chunk in v[8..whole].chunks_exact(8) {
        for (l, x) in lanes.iter_mut().zip(chunk) {
            *l += x;
        }
    }
    let mut acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for x in &v[whole..] {
        acc += x;
    }
    acc
}

/// Separable zero-padded convolution along columns then rows. Mirrored taps
/// are summed pairwise so that mirror-symmetric inputs give bit-identical
/// responses on both sides.
fn gaussian_zero_padded(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let line = |get: &dyn Fn(isize) -> f64, i: isize| {
        let mut acc = get(i) * kernel[r];
        for j in (1..=r as isize).rev() {
            acc += (get(i - j) + get(i + j)) * kernel[r - j as usize];
        }
        acc
    };
    let mut tmp = vec![0.0; w * h];
    for x in 0..w {
        let get = |yy: isize| {
            if yy >= 0 && (yy as usize) < h {
                src[yy as usize * w + x]
            } else {
                0.0
            }
        };
        for y in 0..h {
            tmp[y * w + x] = line(&get, y as isize);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let get = |xx: isize| {
            if xx >= 0 && (xx as usize) < w {
                tmp[y * w + xx as usize]
            } else {
                0.0
            }
        };
        for x in 0..w {
            out[y * w + x] = line(&get, x as isize);
        }
    }
    out
}

fn normalized_gaussian(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let smoothed = gaussian_zero_padded(src, w, h, &kernel);
    let support = gaussian_zero_padded(&vec![1.0; w * h], w, h, &kernel);
    smoothed
        .iter()
        .zip(&support)
        .map(|(s, b)| s / (b + f64::EPSILON))
        .collect()
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i - 1) as usize
    } else if i as usize >= n {
        2 * n - 1 - i as usize
    } else {
        i as usize
    }
}

/// Returns `(d/dy, d/dx)` Sobel responses with symmetric border reflection:
/// a central difference along the derivative axis followed by `[1, 2, 1]`
/// smoothing across it.
fn sobel(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| src[reflect(y, h) * w + reflect(x, w)];
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            dx[i] = at(x + 1, y) - at(x - 1, y);
            dy[i] = at(x, y + 1) - at(x, y - 1);
        }
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let col = |v: &[f64], yy: isize| v[reflect(yy, h) * w + x as usize];
            let row = |v: &[f64], xx: isize| v[y as usize * w + reflect(xx, w)];
            gx[i] = col(&dx, y) * 2.0 + (col(&dx, y - 1) + col(&dx, y + 1));
            gy[i] = row(&dy, x) * 2.0 + (row(&dy, x - 1) + row(&dy, x + 1));
        }
    }
    (gy, gx)
}

fn non_maximum_suppression(
    gy: &[f64],
    gx: &[f64],
    magnitude: &[f64],
    w: usize,
    h: usize,
    low: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mag = |r: usize, c: usize| magnitude[r * w + c];
    // Rows and columns on the border are never edges.
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            let m = magnitude[i];
            if m < low {
                continue;
            }
            let (di, dj) = (gy[i], gx[i]);
            let (ai, aj) = (di.abs(), dj.abs());
            let is_down = di <= 0.0;
            let is_up = di >= 0.0;
            let is_left = dj <= 0.0;
            let is_right = dj >= 0.0;
            let diagonal = (is_up && is_right) || (is_down && is_left);
            let antidiagonal = (is_down && is_right) || (is_up && is_left);

            let (weight, n1a, n1b, n2a, n2b);
            if diagonal {
                if ai >= aj {
                    weight = aj / ai;
                    n1a = mag(r + 1, c);
                    n1b = mag(r + 1, c + 1);
                    n2a = mag(r - 1, c);
                    n2b = mag(r - 1, c - 1);
                } else {
                    weight = ai / aj;
                    n1a = mag(r, c + 1);
                    n1b = mag(r + 1, c + 1);
                    n2a = mag(r, c - 1);
                    n2b = mag(r - 1, c - 1);
                }
            } else if antidiagonal {
                if ai <= aj {
                    weight = ai / aj;
                    n1a = mag(r, c + 1);
                    n1b = mag(r - 1, c + 1);
                    n2a = mag(r, c - 1);
                    n2b = mag(r + 1, c - 1);
                } else {
                    weight = aj / ai;
                    n1a = mag(r - 1, c);
                    n1b = mag(r - 1, c + 1);
                    n2a = mag(r + 1, c);
                    n2b = mag(r + 1, c - 1);
                }
            } else {
                continue;
            }
            let forward = n1b * weight + n1a * (1.0 - weight);
            if forward > m {
                continue;
            }
            let backward = n2b * weight + n2a * (1.0 - weight);
            if backward > m {
                continue;
            }
            out[i] = m;
        }
    }
    out
}

fn hysteresis(suppressed: &[f64], w: usize, h: usize, high: f64) -> EdgeMap {
    let mut edges = BinaryMap::zeros(w, h);
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if suppressed[i] >= high && !edges.get(i % w, i / w) {
            edges.set(i % w, i / w, true);
            queue.push_back(i);
            while let Some(j) = queue.pop_front() {
                let (x, y) = ((j % w) as isize, (j / w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        let k = ny * w + nx;
                        if suppressed[k] > 0.0 && !edges.get(nx, ny) {
                            edges.set(nx, ny, true);
                            queue.push_back(k);
                        }
                    }
                }
            }
        }
    }
    edges
}
