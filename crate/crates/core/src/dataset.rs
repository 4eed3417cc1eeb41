//! Paired night/day imagery, irregular masks, and deterministic splits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edges::{canny_edges, CannyParams};
use crate::error::{bail_dim, Error, Result};
use crate::image::{BinaryMap, EdgeMap, Image, Mask};

/// Default value written into missing pixels (white holes).
pub const DEFAULT_FILL: f32 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePair {
    pub id: String,
    pub night: Image,
    pub day: Image,
}

impl ScenePair {
    pub fn new(id: impl Into<String>, night: Image, day: Image) -> Result<Self> {
        night.ensure_same_shape(&day)?;
        if night.channels() != 3 {
            bail_dim!(
                "scene images must be RGB, got {} channels",
                night.channels()
            );
        }
        if !night.in_unit_range() || !day.in_unit_range() {
            return Err(Error::InvalidArgument(
                "scene pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            night,
            day,
        })
    }
}

/// An incomplete image with every auxiliary channel the inpainter consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedNightSample {
    pub pair_id: String,
    pub incomplete_night: Image,
    pub mask: Mask,
    /// Luminance of `incomplete_night`.
    pub gray: Image,
    /// Edges of `incomplete_night`, zero inside the mask.
    pub edge_partial: EdgeMap,
    /// Edges of the complete ground truth.
    pub edge_gt: EdgeMap,
}

impl MaskedNightSample {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DaySide {
    #[default]
    Left,
    Right,
}

/// Splits an `H×2W` composite into `(day, night)` halves.
pub fn split_paired_image(composite: &Image, day_side: DaySide) -> Result<(Image, Image)> {
    if !composite.width().is_multiple_of(2) {
        bail_dim!("composite width {} is odd", composite.width());
    }
    let half = composite.width() / 2;
    let left = composite.crop_columns(0, half)?;
    let right = composite.crop_columns(half, half)?;
    Ok(match day_side {
        DaySide::Left => (left, right),
        DaySide::Right => (right, left),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// 80/10/10 partition after a seeded shuffle of the sorted ids. Validation and
/// test each receive `round(n / 10)` ids.
pub fn build_splits(pair_ids: &[String], seed: u64) -> Result<Splits> {
    if pair_ids.is_empty() {
        return Err(Error::InvalidArgument("no pair ids to split".into()));
    }
    let mut seen = BTreeSet::new();
    for id in pair_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut ids: Vec<String> = seen.into_iter().map(str::to_owned).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let held_out = ((n as f64) * 0.1).round() as usize;
    let n_train = n - 2 * held_out;
    let mut splits = Splits {
        train: ids[..n_train].to_vec(),
        val: ids[n_train..n_train + held_out].to_vec(),
        test: ids[n_train + held_out..].to_vec(),
    };
    splits.train.sort();
    splits.val.sort();
    splits.test.sort();
    Ok(splits)
}

/// Thresholds a grayscale mask at 0.5. With `missing_is_dark`, values below
/// 0.5 are missing; otherwise values at or above 0.5 are missing.
pub fn binarize_mask(raw: &Image, missing_is_dark: bool) -> Result<Mask> {
    if raw.channels() != 1 {
        bail_dim!("mask image must be single-channel, got {}", raw.channels());
    }
    if !raw.in_unit_range() {
        return Err(Error::InvalidArgument(
            "mask values must lie in [0, 1]".into(),
        ));
    }
    let data = raw
        .data()
        .iter()
        .map(|&v| {
            let missing = if missing_is_dark { v < 0.5 } else { v >= 0.5 };
            missing as u8
        })
        .collect();
    BinaryMap::from_vec(raw.width(), raw.height(), data)
}

/// Masks a complete night image. Missing pixels take `fill` in every channel;
/// `edge_gt` comes from the complete image.
pub fn apply_mask(
    pair_id: &str,
    night: &Image,
    mask: &Mask,
    fill: f32,
    canny: CannyParams,
) -> Result<MaskedNightSample> {
    let reference_edges = canny_edges(&night.luminance(), canny)?;
    mask_with_reference_edges(pair_id, night, mask, fill, reference_edges, canny)
}

/// Like [`apply_mask`] but with the ground-truth edge map supplied by the
/// caller, for inputs whose ground truth is not the image being masked.
pub fn mask_with_reference_edges(
    pair_id: &str,
    image: &Image,
    mask: &Mask,
    fill: f32,
    edge_gt: EdgeMap,
    canny: CannyParams,
) -> Result<MaskedNightSample> {
    mask.ensure_matches(image)?;
    if edge_gt.width() != mask.width() || edge_gt.height() != mask.height() {
        bail_dim!("edge map does not match mask dimensions");
    }
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::InvalidArgument(format!(
            "fill {fill} outside [0, 1]"
        )));
    }
    let incomplete = fill_missing(image, mask, fill)?;
    let gray = incomplete.luminance();
    let mut edge_partial = canny_edges(&gray, canny)?;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                edge_partial.set(x, y, false);
            }
        }
    }
    Ok(MaskedNightSample {
        pair_id: pair_id.to_owned(),
        incomplete_night: incomplete,
        mask: mask.clone(),
        gray,
        edge_partial,
        edge_gt,
    })
}

/// Copy of `image` with every masked pixel set to `fill`.
pub fn fill_missing(image: &Image, mask: &Mask, fill: f32) -> Result<Image> {
    mask.ensure_matches(image)?;
    let mut out = image.clone();
    let c = image.channels();
    for (i, &m) in mask.data().iter().enumerate() {
        if m != 0 {
            out.data_mut()[i * c..(i + 1) * c].fill(fill);
        }
    }
    Ok(out)
}

/// Morphological dilation with a 3×3 square structuring element, repeated.
pub fn dilate_mask(mask: &Mask, iterations: i64) -> Result<Mask> {
    if iterations < 0 {
        return Err(Error::InvalidArgument(format!(
            "dilation iterations must be >= 0, got {iterations}"
        )));
    }
    let (w, h) = (mask.width(), mask.height());
    let mut cur = mask.clone();
    for _ in 0..iterations {
        let prev = cur.clone();
        for y in 0..h {
            for x in 0..w {
                if prev.get(x, y) {
                    continue;
                }
                let hit = (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|yy| {
                    (x.saturating_sub(1)..=(x + 1).min(w - 1)).any(|xx| prev.get(xx, yy))
                });
                if hit {
                    cur.set(x, y, true);
                }
            }
        }
        if cur == prev {
            break;
        }
    }
    Ok(cur)
}

/// Loads a mask PNG, resizes it (nearest neighbour) to `size×size`, and
/// binarizes it.
pub fn load_mask(path: &Path, size: usize, missing_is_dark: bool) -> Result<Mask> {
    let gray = image::open(path)?.to_luma8();
    let gray = if gray.width() as usize != size || gray.height() as usize != size {
        image::imageops::resize(&gray, size as u32, size as u32, FilterType::Nearest)
    } else {
        gray
    };
    binarize_mask(&Image::from_luma8(&gray), missing_is_dark)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `root/<id>.png` composites with day and night side by side.
    Composite,
    /// `root/night/<id>.png` and `root/day/<id>.png`.
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub layout: Layout,
    pub root: PathBuf,
}

impl ImageSource {
    /// Pair ids available under the source, sorted.
    pub fn list_ids(&self) -> Result<Vec<String>> {
        let ids = match self.layout {
            Layout::Composite => png_stems(&self.root)?,
            Layout::Split => {
                let nights = png_stems(&self.root.join("night"))?;
                let days: BTreeSet<String> =
                    png_stems(&self.root.join("day"))?.into_iter().collect();
                nights.into_iter().filter(|id| days.contains(id)).collect()
            }
        };
        Ok(ids)
    }

    /// Files holding pair `id`.
    pub fn pair_files(&self, id: &str) -> Vec<PathBuf> {
        let file = format!("{id}.png");
        match self.layout {
            Layout::Composite => vec![self.root.join(file)],
            Layout::Split => vec![
                self.root.join("night").join(&file),
                self.root.join("day").join(file),
            ],
        }
    }

    pub fn load_pair(&self, id: &str, size: usize, day_side: DaySide) -> Result<ScenePair> {
        let (day, night) = match self.layout {
            Layout::Composite => {
                let path = self.root.join(format!("{id}.png"));
                ensure_exists(&path)?;
                let composite = Image::load_rgb(&path, None)?;
                let (day, night) = split_paired_image(&composite, day_side)?;
                (
                    day.resize_bilinear(size, size),
                    night.resize_bilinear(size, size),
                )
            }
            Layout::Split => {
                let night = self.root.join("night").join(format!("{id}.png"));
                let day = self.root.join("day").join(format!("{id}.png"));
                ensure_exists(&night)?;
                ensure_exists(&day)?;
                (
                    Image::load_rgb(&day, Some(size))?,
                    Image::load_rgb(&night, Some(size))?,
                )
            }
        };
        ScenePair::new(id, night, day)
    }
}

pub fn ensure_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

/// Sorted file stems of `*.png` files directly under `dir`.
pub fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_owned());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub image_size: usize,
    pub day_side: DaySide,
    pub fill: f32,
    pub missing_is_dark: bool,
    pub source: ImageSource,
    pub splits: Splits,
    /// pair id → mask file path.
    pub mask_assignment: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub source: ImageSource,
    pub mask_dir: PathBuf,
    pub seed: u64,
    pub image_size: usize,
    #[serde(default)]
    pub day_side: DaySide,
    #[serde(default = "default_fill")]
    pub fill: f32,
    #[serde(default = "default_true")]
    pub missing_is_dark: bool,
}

fn default_fill() -> f32 {
    DEFAULT_FILL
}

fn default_true() -> bool {
    true
}

impl DatasetManifest {
    /// Lists pairs and masks on disk, splits the pairs, and assigns masks.
    pub fn prepare(opts: &PrepareOptions) -> Result<Self> {
        let ids = opts.source.list_ids()?;
        let splits = build_splits(&ids, opts.seed)?;
        let masks = png_stems(&opts.mask_dir)?;
        if masks.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no mask PNGs in {}",
                opts.mask_dir.display()
            )));
        }
        let mask_paths: Vec<PathBuf> = masks
            .iter()
            .map(|m| opts.mask_dir.join(format!("{m}.png")))
            .collect();
        let mask_assignment = assign_masks(&splits, &mask_paths, opts.seed);
        Ok(Self {
            seed: opts.seed,
            image_size: opts.image_size,
            day_side: opts.day_side,
            fill: opts.fill,
            missing_is_dark: opts.missing_is_dark,
            source: opts.source.clone(),
            splits,
            mask_assignment,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ensure_exists(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_pair(&self, id: &str) -> Result<ScenePair> {
        self.source.load_pair(id, self.image_size, self.day_side)
    }

    pub fn load_mask(&self, id: &str) -> Result<Mask> {
        let path = self
            .mask_assignment
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no mask assigned to `{id}`")))?;
        ensure_exists(path)?;
        load_mask(path, self.image_size, self.missing_is_dark)
    }
}

/// Masks are drawn uniformly without replacement within each split from a
/// seeded permutation of the corpus; a fresh permutation starts only once the
/// corpus is exhausted.
fn assign_masks(splits: &Splits, masks: &[PathBuf], seed: u64) -> BTreeMap<String, PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x6d61_736b));
    let mut out = BTreeMap::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        let mut pool: Vec<&PathBuf> = Vec::new();
        for id in splits.ids(split) {
            if pool.is_empty() {
                pool = masks.iter().collect();
                pool.shuffle(&mut rng);
                pool.reverse();
            }
            let m = pool.pop().expect("pool refilled above");
            out.insert(id.clone(), m.clone());
        }
    }
    out
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("scene_{i:05}")).collect()
    }

    #[test]
    fn split_constant_halves() {
        let composite = Image::from_fn(8, 4, 3, |x, _, _| if x < 4 { 0.0 } else { 1.0 });
        let (day, night) = split_paired_image(&composite, DaySide::Left).unwrap();
        assert_eq!(day, Image::filled(4, 4, 3, 0.0));
        assert_eq!(night, Image::filled(4, 4, 3, 1.0));
        let (day, night) = split_paired_image(&composite, DaySide::Right).unwrap();
        assert_eq!(day, Image::filled(4, 4, 3, 1.0));
        assert_eq!(night, Image::filled(4, 4, 3, 0.0));
    }

    #[test]
    fn split_matches_direct_slicing() {
        let composite = Image::from_fn(6, 4, 3, |x, y, c| (x * 100 + y * 10 + c) as f32 / 1000.0);
        let (day, night) = split_paired_image(&composite, DaySide::Left).unwrap();
        for y in 0..4 {
            for x in 0..3 {
                for c in 0..3 {
                    assert_eq!(day.get(x, y, c), composite.get(x, y, c));
                    assert_eq!(night.get(x, y, c), composite.get(x + 3, y, c));
                }
            }
        }
    }

    #[test]
    fn split_full_size_composite() {
        let composite = Image::filled(512, 256, 3, 0.5);
        let (day, night) = split_paired_image(&composite, DaySide::Left).unwrap();
        assert_eq!((day.width(), day.height()), (256, 256));
        assert_eq!((night.width(), night.height()), (256, 256));
    }

    #[test]
    fn split_rejects_odd_width() {
        let composite = Image::filled(5, 4, 3, 0.5);
        assert!(matches!(
            split_paired_image(&composite, DaySide::Left),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn splits_twenty_thousand_ids() {
        let s = build_splits(&ids(20_110), 0).unwrap();
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (16_088, 2_011, 2_011)
        );
    }

    #[test]
    fn splits_ten_ids() {
        let s = build_splits(&ids(10), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn splits_are_deterministic_and_seed_dependent() {
        let a = build_splits(&ids(100), 11).unwrap();
        let b = build_splits(&ids(100), 11).unwrap();
        let c = build_splits(&ids(100), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn splits_reject_duplicates_and_empty() {
        let mut v = ids(5);
        v.push("scene_00001".into());
        assert!(matches!(build_splits(&v, 0), Err(Error::DuplicateId(id)) if id == "scene_00001"));
        assert!(build_splits(&[], 0).is_err());
    }

    #[test]
    fn binarize_constant_masks() {
        let black = Image::filled(4, 4, 1, 0.0);
        let white = Image::filled(4, 4, 1, 1.0);
        assert_eq!(binarize_mask(&black, true).unwrap().coverage(), 1.0);
        assert_eq!(binarize_mask(&white, true).unwrap().coverage(), 0.0);
        assert_eq!(binarize_mask(&white, false).unwrap().coverage(), 1.0);
    }

    #[test]
    fn binarize_counts_dark_pixels() {
        let vals = [0.1, 0.9, 0.49, 0.5, 0.2, 0.7, 0.0, 0.6, 1.0];
        let raw = Image::new(3, 3, 1, vals.to_vec()).unwrap();
        let m = binarize_mask(&raw, true).unwrap();
        assert_eq!(m.count(), 4);
        assert!((m.coverage() - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn apply_mask_identity_and_full_fill() {
        let night = Image::from_fn(16, 16, 3, |x, y, c| {
            ((x * 7 + y * 3 + c) % 11) as f32 / 10.0
        });
        let s = apply_mask(
            "a",
            &night,
            &BinaryMap::zeros(16, 16),
            1.0,
            CannyParams::default(),
        )
        .unwrap();
        assert_eq!(s.incomplete_night, night);
        let s = apply_mask(
            "a",
            &night,
            &BinaryMap::ones(16, 16),
            1.0,
            CannyParams::default(),
        )
        .unwrap();
        assert_eq!(s.incomplete_night, Image::filled(16, 16, 3, 1.0));
        assert_eq!(s.edge_partial.count(), 0);
    }

    #[test]
    fn apply_mask_pixelwise() {
        let night = Image::from_fn(8, 8, 3, |x, y, c| {
            ((x * 13 + y * 5 + c * 3) % 17) as f32 / 16.0
        });
        let mask = BinaryMap::from_fn(8, 8, |x, y| (x * 3 + y * 7) % 5 == 0);
        let s = apply_mask("p", &night, &mask, 0.25, CannyParams::default()).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let want = if mask.get(x, y) {
                        0.25
                    } else {
                        night.get(x, y, c)
                    };
                    assert_eq!(s.incomplete_night.get(x, y, c).to_bits(), want.to_bits());
                }
                if mask.get(x, y) {
                    assert!(!s.edge_partial.get(x, y));
                }
            }
        }
        assert_eq!(s.gray, s.incomplete_night.luminance());
    }

    #[test]
    fn apply_mask_rejects_shape_mismatch_and_bad_fill() {
        let night = Image::filled(8, 8, 3, 0.5);
        assert!(apply_mask(
            "a",
            &night,
            &BinaryMap::zeros(8, 7),
            1.0,
            CannyParams::default()
        )
        .is_err());
        assert!(apply_mask(
            "a",
            &night,
            &BinaryMap::zeros(8, 8),
            1.5,
            CannyParams::default()
        )
        .is_err());
    }

    #[test]
    fn dilate_identity_single_pixel_and_saturation() {
        let mut m = BinaryMap::zeros(5, 5);
        m.set(2, 2, true);
        assert_eq!(dilate_mask(&m, 0).unwrap(), m);
        let d = dilate_mask(&m, 1).unwrap();
        assert_eq!(d.count(), 9);
        assert!((d.coverage() - 9.0 / 25.0).abs() < 1e-15);
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(d.get(x, y), (1..=3).contains(&x) && (1..=3).contains(&y));
            }
        }
        let full = BinaryMap::ones(5, 5);
        assert_eq!(dilate_mask(&full, 4).unwrap(), full);
        assert!(dilate_mask(&m, -1).is_err());
    }

    #[test]
    fn mask_assignment_uses_each_mask_once_before_reuse() {
        let splits = build_splits(&ids(30), 1).unwrap();
        let masks: Vec<PathBuf> = (0..30)
            .map(|i| PathBuf::from(format!("m{i}.png")))
            .collect();
        let a = assign_masks(&splits, &masks, 1);
        let train: BTreeSet<_> = splits.train.iter().map(|id| &a[id]).collect();
        assert_eq!(train.len(), splits.train.len());
        assert_eq!(a, assign_masks(&splits, &masks, 1));
    }

    fn binary_image(bits: &[bool], w: usize) -> Image {
        Image::new(
            w,
            bits.len() / w,
            1,
            bits.iter().map(|&b| b as u8 as f32).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn splits_partition_ids(n in 1usize..300, seed in any::<u64>()) {
            let all = ids(n);
            let s = build_splits(&all, seed).unwrap();
            let mut union: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            union.sort();
            prop_assert_eq!(union, all);
            prop_assert_eq!(s.val.len(), s.test.len());
            let expect = n as f64 * 0.1;
            prop_assert!((s.test.len() as f64 - expect).abs() <= 1.0);
        }

        #[test]
        fn binarize_is_idempotent_on_binary_input(bits in proptest::collection::vec(any::<bool>(), 36), dark in any::<bool>()) {
            let raw = binary_image(&bits, 6);
            let once = binarize_mask(&raw, dark).unwrap();
            let twice = binarize_mask(&once.to_image(), false).unwrap();
            prop_assert_eq!(&once, &twice);
            let direct = binarize_mask(&raw, false).unwrap();
            prop_assert_eq!(direct.to_image(), raw);
        }

        #[test]
        fn dilation_coverage_is_monotone(bits in proptest::collection::vec(proptest::bool::weighted(0.05), 144)) {
            let mask = BinaryMap::from_vec(12, 12, bits.iter().map(|&b| b as u8).collect()).unwrap();
            let mut prev = mask.coverage();
            for k in 1..6 {
                let cov = dilate_mask(&mask, k).unwrap().coverage();
                prop_assert!(cov >= prev);
                if prev > 0.0 && prev < 1.0 {
                    prop_assert!(cov > prev);
                }
                prev = cov;
            }
        }
    }
}
