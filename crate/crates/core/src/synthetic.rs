//! Procedural scenes and stroke masks for smoke runs and tests.
//!
//! Night scenes are smooth colour fields with a few flat shapes. The day
//! counterpart is an analytic per-channel brightness/hue map of the night
//! image, so the ideal translation is known exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DaySide, Layout};
use crate::error::Result;
use crate::image::{BinaryMap, Image, Mask};

/// Per-channel gain of the night → day map.
pub const DAY_GAIN: [f32; 3] = [2.2, 2.0, 1.6];
/// Per-channel offset of the night → day map.
pub const DAY_OFFSET: [f32; 3] = [0.08, 0.10, 0.16];

/// Smooth field with shapes, values in `[0, 1]` per channel.
fn base_scene(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let s = size as f32;
    let mut waves = Vec::new();
    for _ in 0..3 {
        let mut per_channel = Vec::new();
        for _ in 0..3 {
            let fx: f32 = rng.random_range(0.5..3.0) * std::f32::consts::TAU / s;
            let fy: f32 = rng.random_range(0.5..3.0) * std::f32::consts::TAU / s;
            let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
            per_channel.push((fx, fy, phase));
        }
        waves.push(per_channel);
    }
    let mut img = Image::from_fn(size, size, 3, |x, y, c| {
        let mut v = 0.0;
        for w in &waves {
            let (fx, fy, p) = w[c];
            v += (fx * x as f32 + fy * y as f32 + p).sin();
        }
        0.5 + v / 6.0
    });
    let shapes = rng.random_range(2..5);
    for _ in 0..shapes {
        let color: [f32; 3] = [rng.random(), rng.random(), rng.random()];
        let cx = rng.random_range(0.0..s);
        let cy = rng.random_range(0.0..s);
        let r = rng.random_range(0.08 * s..0.25 * s);
        let disk = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let inside = if disk {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= 0.6 * r
                };
                if inside {
                    for (c, v) in color.iter().enumerate() {
                        img.set(x, y, c, *v);
                    }
                }
            }
        }
    }
    img.clamped()
}

/// Dark, blue-tinted scene in roughly `[0.02, 0.37]`.
pub fn night_scene(seed: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = base_scene(&mut rng, size);
    let tint = [0.85, 0.9, 1.0];
    let mut out = base;
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = 0.02 + 0.35 * *v * tint[i % 3];
    }
    out.quantize()
}

/// Analytic day counterpart of a night scene.
pub fn night_to_day(night: &Image) -> Image {
    let mut out = night.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % 3;
        *v = (DAY_GAIN[c] * *v + DAY_OFFSET[c]).clamp(0.0, 1.0);
    }
    out.quantize()
}

/// Source images for the inversion task: a dim, low-contrast background
/// with bright, saturated shapes. Under `1 - x` the shapes become dark
/// blobs on a bright field, a local pattern that no brightness shift of the
/// source reproduces.
pub fn inversion_source(seed: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = base_scene(&mut rng, size);
    let lo = [0.04, 0.06, 0.12];
    let span = [0.10, 0.08, 0.12];
    let mut out = base;
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % 3;
        *v = lo[c] + span[c] * *v;
    }
    let s = size as f32;
    let shapes = rng.random_range(5..10);
    for _ in 0..shapes {
        let color = [
            rng.random_range(0.7..1.0),
            rng.random_range(0.6..0.95),
            rng.random_range(0.5..0.9),
        ];
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let r = rng.random_range(0.05 * s..0.14 * s);
        let disk = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let inside = if disk {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= 0.7 * r
                };
                if inside {
                    for (c, v) in color.iter().enumerate() {
                        out.set(x, y, c, *v);
                    }
                }
            }
        }
    }
    out.quantize()
}

pub fn invert(img: &Image) -> Image {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    out
}

/// Hand-drawn-looking mask: a few random polyline strokes of the given
/// radius.
pub fn stroke_mask(seed: u64, size: usize, strokes: usize, radius: f32) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f32;
    let mut mask = BinaryMap::zeros(size, size);
    for _ in 0..strokes {
        let mut x = rng.random_range(0.0..s);
        let mut y = rng.random_range(0.0..s);
        let mut angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
        let segments = rng.random_range(2..6);
        for _ in 0..segments {
            angle += rng.random_range(-1.2..1.2);
            let len = rng.random_range(0.1 * s..0.3 * s);
            let steps = (len * 2.0) as usize;
            for _ in 0..steps {
                x = (x + 0.5 * angle.cos()).clamp(0.0, s - 1.0);
                y = (y + 0.5 * angle.sin()).clamp(0.0, s - 1.0);
                stamp(&mut mask, x, y, radius);
            }
        }
    }
    mask
}

/// Single thin straight line, the base mask for dilation sweeps.
pub fn line_mask(size: usize) -> Mask {
    let mut mask = BinaryMap::zeros(size, size);
    let (x0, y0) = (size as f32 * 0.2, size as f32 * 0.3);
    let (x1, y1) = (size as f32 * 0.8, size as f32 * 0.65);
    let steps = size * 4;
    for i in 0..=steps {
        let t = i as f32 / steps as f32;
        let x = (x0 + t * (x1 - x0)).round() as usize;
        let y = (y0 + t * (y1 - y0)).round() as usize;
        mask.set(x.min(size - 1), y.min(size - 1), true);
    }
    mask
}

fn stamp(mask: &mut Mask, cx: f32, cy: f32, r: f32) {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let ri = r.ceil() as isize;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if (dx * dx + dy * dy) as f32 > r * r {
                continue;
            }
            let (x, y) = (cx.round() as isize + dx, cy.round() as isize + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
}

/// Mask rendered as a corpus PNG would be: dark strokes on white.
pub fn mask_to_corpus_image(mask: &Mask) -> Image {
    let mut img = mask.to_image();
    img.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    img
}

/// Writes `pairs` night/day scenes and `masks` stroke masks under `root`:
/// `root/pairs/` in the requested layout and `root/masks/`.
pub fn write_dataset(
    root: &Path,
    pairs: usize,
    masks: usize,
    size: usize,
    seed: u64,
    layout: Layout,
) -> Result<()> {
    let pair_root = root.join("pairs");
    for i in 0..pairs {
        let id = format!("scene_{i:04}");
        let night = night_scene(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), size);
        let day = night_to_day(&night);
        match layout {
            Layout::Composite => {
                let composite = Image::from_fn(2 * size, size, 3, |x, y, c| {
                    if x < size {
                        day.get(x, y, c)
                    } else {
                        night.get(x - size, y, c)
                    }
                });
                composite.save_png(&pair_root.join(format!("{id}.png")))?;
            }
            Layout::Split => {
                night.save_png(&pair_root.join("night").join(format!("{id}.png")))?;
                day.save_png(&pair_root.join("day").join(format!("{id}.png")))?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for i in 0..masks {
        let strokes = rng.random_range(1..4);
        let radius = rng.random_range(1.0..(size as f32 / 24.0).max(1.5));
        let mask = stroke_mask(rng.random(), size, strokes, radius);
        mask_to_corpus_image(&mask)
            .save_png(&root.join("masks").join(format!("mask_{i:05}.png")))?;
    }
    Ok(())
}

/// Composite day side used by [`write_dataset`].
pub const SYNTHETIC_DAY_SIDE: DaySide = DaySide::Left;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a = night_scene(3, 32);
        assert_eq!(a, night_scene(3, 32));
        assert_ne!(a, night_scene(4, 32));
        assert!(a.data().iter().all(|&v| (0.0..0.4).contains(&v)));
        let d = night_to_day(&a);
        assert!(d.in_unit_range());
        let mean_n: f32 = a.data().iter().sum::<f32>() / a.data().len() as f32;
        let mean_d: f32 = d.data().iter().sum::<f32>() / d.data().len() as f32;
        assert!(mean_d > mean_n + 0.2);
    }

    #[test]
    fn stroke_masks_cover_part_of_the_image() {
        let m = stroke_mask(9, 64, 3, 2.0);
        assert!(
            m.coverage() > 0.01 && m.coverage() < 0.6,
            "{}",
            m.coverage()
        );
        assert_eq!(m, stroke_mask(9, 64, 3, 2.0));
        let l = line_mask(64);
        assert!(l.count() > 30 && l.coverage() < 0.05);
    }

    #[test]
    fn corpus_rendering_round_trips_through_binarize() {
        let m = stroke_mask(1, 32, 2, 1.5);
        let back = crate::dataset::binarize_mask(&mask_to_corpus_image(&m), true).unwrap();
        assert_eq!(back, m);
    }
}
