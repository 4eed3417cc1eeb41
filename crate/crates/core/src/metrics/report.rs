//! Three-phase evaluation, histograms, model comparison and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::fid::fid_from_features;
use super::measures::{mae, ncc, rmse, ssim};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::pipeline::StageOutputs;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Rmse,
    Mae,
    Ssim,
    Ncc,
    Fid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Rmse,
        MetricName::Mae,
        MetricName::Ssim,
        MetricName::Ncc,
        MetricName::Fid,
    ];
    pub const PER_SAMPLE: [MetricName; 4] = [
        MetricName::Rmse,
        MetricName::Mae,
        MetricName::Ssim,
        MetricName::Ncc,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::Rmse => "rmse",
            MetricName::Mae => "mae",
            MetricName::Ssim => "ssim",
            MetricName::Ncc => "ncc",
            MetricName::Fid => "fid",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricName::Ssim | MetricName::Ncc => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    /// Histogram range of a per-sample metric.
    pub fn range(self) -> (f64, f64) {
        match self {
            MetricName::Ssim | MetricName::Ncc => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub ncc: f64,
}

impl SampleMetrics {
    pub fn compute(output: &Image, reference: &Image) -> Result<Self> {
        Ok(Self {
            rmse: rmse(output, reference)?,
            mae: mae(output, reference)?,
            ssim: ssim(output, reference)?,
            ncc: ncc(output, reference)?,
        })
    }

    pub fn get(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::Rmse => Some(self.rmse),
            MetricName::Mae => Some(self.mae),
            MetricName::Ssim => Some(self.ssim),
            MetricName::Ncc => Some(self.ncc),
            MetricName::Fid => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// 20 uniform bins over `[lo, hi]`; out-of-range values land in the end bins.
pub fn build_histogram(values: &[f64], range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid histogram range [{lo}, {hi}]"
        )));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("histogram of no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite histogram value {v}"
        )));
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let bin_edges = (0..=HISTOGRAM_BINS)
        .map(|i| {
            if i == HISTOGRAM_BINS {
                hi
            } else {
                lo + i as f64 * width
            }
        })
        .collect();
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let pos = ((v - lo) / (hi - lo) * HISTOGRAM_BINS as f64).floor();
        let bin = pos.clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize;
        counts[bin] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Intermediate,
    Post,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pre, Phase::Intermediate, Phase::Post];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn key(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Intermediate => "intermediate",
            Phase::Post => "post",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Stat {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub per_sample: BTreeMap<String, SampleMetrics>,
    /// Set-level FID; `None` when fewer than two samples are available.
    pub fid: Option<f64>,
    pub summary: BTreeMap<MetricName, Stat>,
    pub histograms: BTreeMap<MetricName, Histogram>,
}

impl PhaseReport {
    pub fn from_samples(
        phase: Phase,
        per_sample: BTreeMap<String, SampleMetrics>,
        fid: Option<f64>,
    ) -> Result<Self> {
        let mut summary = BTreeMap::new();
        let mut histograms = BTreeMap::new();
        for m in MetricName::PER_SAMPLE {
            let values: Vec<f64> = per_sample.values().filter_map(|s| s.get(m)).collect();
            histograms.insert(m, build_histogram(&values, m.range())?);
            summary.insert(m, mean_std(&values));
        }
        Ok(Self {
            phase,
            per_sample,
            fid,
            summary,
            histograms,
        })
    }

    pub fn value(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::Fid => self.fid,
            m => self.summary.get(&m).map(|s| s.mean),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,rmse,mae,ssim,ncc\n");
        for (id, s) in &self.per_sample {
            let _ = writeln!(out, "{id},{},{},{},{}", s.rmse, s.mae, s.ssim, s.ncc);
        }
        out
    }
}

/// Scores input, intermediate and final images against the day ground
/// truth, one report per phase.
pub fn evaluate_phases(
    outputs: &[StageOutputs],
    day_gt: &BTreeMap<String, Image>,
    embedder: &dyn Embedder,
) -> Result<[PhaseReport; 3]> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("no outputs to evaluate".into()));
    }
    let mut seen = BTreeSet::new();
    for o in outputs {
        if !seen.insert(o.pair_id.as_str()) {
            return Err(Error::DuplicateId(o.pair_id.clone()));
        }
    }
    let missing: Vec<String> = outputs
        .iter()
        .filter(|o| !day_gt.contains_key(&o.pair_id))
        .map(|o| o.pair_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    let refs: Vec<&Image> = outputs.iter().map(|o| &day_gt[&o.pair_id]).collect();
    let ref_feats = if outputs.len() >= 2 {
        Some(embedder.embed_all(&refs)?)
    } else {
        log::warn!("FID needs at least two samples; reporting it as null");
        None
    };
    let mut reports = Vec::with_capacity(3);
    for phase in Phase::ALL {
        let images: Vec<&Image> = outputs
            .iter()
            .map(|o| match phase {
                Phase::Pre => &o.input_image,
                Phase::Intermediate => &o.intermediate_image,
                Phase::Post => &o.final_image,
            })
            .collect();
        let mut per_sample = BTreeMap::new();
        for ((o, img), gt) in outputs.iter().zip(&images).zip(&refs) {
            per_sample.insert(o.pair_id.clone(), SampleMetrics::compute(img, gt)?);
        }
        let fid = match &ref_feats {
            Some(rf) => Some(fid_from_features(&embedder.embed_all(&images)?, rf)?),
            None => None,
        };
        reports.push(PhaseReport::from_samples(phase, per_sample, fid)?);
    }
    let [a, b, c]: [PhaseReport; 3] = reports
        .try_into()
        .map_err(|_| Error::Numerical("phase count".into()))?;
    Ok([a, b, c])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
    /// The metric is missing from at least one report.
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub metric: MetricName,
    pub direction: Direction,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub winner: Winner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub phase: Phase,
    pub verdicts: Vec<Verdict>,
}

/// Per-metric winner between two reports over the same ids: means for
/// per-sample metrics, the set value for FID.
pub fn compare_models(
    a: &PhaseReport,
    b: &PhaseReport,
    label_a: &str,
    label_b: &str,
) -> Result<Comparison> {
    if a.phase != b.phase {
        return Err(Error::InvalidArgument(format!(
            "cannot compare a {} report with a {} report",
            a.phase.key(),
            b.phase.key()
        )));
    }
    let ids_a: BTreeSet<&String> = a.per_sample.keys().collect();
    let ids_b: BTreeSet<&String> = b.per_sample.keys().collect();
    if ids_a != ids_b {
        let diff: Vec<String> = ids_a
            .symmetric_difference(&ids_b)
            .map(|s| s.to_string())
            .collect();
        return Err(Error::InvalidArgument(format!(
            "reports cover different ids: {}",
            diff.join(", ")
        )));
    }
    let verdicts = MetricName::ALL
        .iter()
        .map(|&m| {
            let (va, vb) = (a.value(m), b.value(m));
            let winner = match (va, vb) {
                (Some(x), Some(y)) if x == y => Winner::Tie,
                (Some(x), Some(y)) => {
                    let a_better = match m.direction() {
                        Direction::LowerBetter => x < y,
                        Direction::HigherBetter => x > y,
                    };
                    if a_better {
                        Winner::A
                    } else {
                        Winner::B
                    }
                }
                (None, None) => Winner::Tie,
                _ => Winner::Undetermined,
            };
            Verdict {
                metric: m,
                direction: m.direction(),
                a: va,
                b: vb,
                winner,
            }
        })
        .collect();
    Ok(Comparison {
        label_a: label_a.into(),
        label_b: label_b.into(),
        phase: a.phase,
        verdicts,
    })
}

/// `summary.json` body: per phase, mean/std of each per-sample metric and
/// the set-level FID.
pub fn summary_json(reports: &[PhaseReport]) -> Result<String> {
    let mut phases = serde_json::Map::new();
    for r in reports {
        let mut m = serde_json::Map::new();
        for (name, stat) in &r.summary {
            m.insert(name.key().into(), serde_json::to_value(stat)?);
        }
        m.insert("fid".into(), serde_json::to_value(r.fid)?);
        m.insert("samples".into(), r.per_sample.len().into());
        phases.insert(r.phase.key().into(), m.into());
    }
    let root = serde_json::json!({ "phases": phases });
    Ok(serde_json::to_string_pretty(&root)? + "\n")
}

const PLOT_W: u32 = 420;
const PLOT_H: u32 = 260;
const MARGIN: i32 = 30;
const SERIES_COLORS: [[u8; 3]; 4] = [[214, 39, 40], [44, 160, 44], [31, 119, 180], [255, 127, 14]];

/// Line chart of several histograms over the same bins (one colour per
/// series, legend swatches top-right in series order).
pub fn plot_histograms(series: &[&Histogram]) -> Result<RgbImage> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to plot".into()))?;
    if series.iter().any(|h| h.bin_edges != first.bin_edges) {
        return Err(Error::InvalidArgument(
            "histograms use different bins".into(),
        ));
    }
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let (x0, y0) = (MARGIN as f32, (PLOT_H as i32 - MARGIN) as f32);
    let (x1, y1) = ((PLOT_W as i32 - MARGIN / 2) as f32, (MARGIN / 2) as f32);
    let black = Rgb([0, 0, 0]);
    draw_line_segment_mut(&mut img, (x0, y0), (x1, y0), black);
    draw_line_segment_mut(&mut img, (x0, y0), (x0, y1), black);
    let bins = first.counts.len();
    let max = series
        .iter()
        .flat_map(|h| h.counts.iter())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f32;
    for i in 0..=bins {
        let x = x0 + (x1 - x0) * i as f32 / bins as f32;
        draw_line_segment_mut(&mut img, (x, y0), (x, y0 + 4.0), black);
    }
    for (k, h) in series.iter().enumerate() {
        let color = Rgb(SERIES_COLORS[k % SERIES_COLORS.len()]);
        let point = |i: usize| {
            let x = x0 + (x1 - x0) * (i as f32 + 0.5) / bins as f32;
            let y = y0 - (y0 - y1) * h.counts[i] as f32 / max;
            (x, y)
        };
        for i in 1..bins {
            draw_line_segment_mut(&mut img, point(i - 1), point(i), color);
        }
        for i in 0..bins {
            let (x, y) = point(i);
            draw_filled_rect_mut(
                &mut img,
                Rect::at(x as i32 - 1, y as i32 - 1).of_size(3, 3),
                color,
            );
        }
        let sx = PLOT_W as i32 - MARGIN / 2 - 12 * (series.len() - k) as i32;
        draw_filled_rect_mut(&mut img, Rect::at(sx, 4).of_size(9, 9), color);
    }
    Ok(img)
}

fn save_plot(img: &RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageFormat::Png,
    )?;
    write_atomic(path, &bytes)
}

/// Writes `phase{1,2,3}_per_sample.csv`, `summary.json`,
/// `histograms.json` and one Pre/Intermediate/Post overlay plot per metric
/// (`histogram_<metric>.png`).
pub fn write_phase_reports(dir: &Path, reports: &[PhaseReport; 3]) -> Result<()> {
    for r in reports {
        write_atomic(
            &dir.join(format!("phase{}_per_sample.csv", r.phase.number())),
            r.to_csv().as_bytes(),
        )?;
    }
    write_atomic(&dir.join("summary.json"), summary_json(reports)?.as_bytes())?;
    let hist: BTreeMap<&str, BTreeMap<&str, &Histogram>> = reports
        .iter()
        .map(|r| {
            (
                r.phase.key(),
                r.histograms.iter().map(|(m, h)| (m.key(), h)).collect(),
            )
        })
        .collect();
    write_atomic(
        &dir.join("histograms.json"),
        (serde_json::to_string_pretty(&hist)? + "\n").as_bytes(),
    )?;
    for m in MetricName::PER_SAMPLE {
        let series: Vec<&Histogram> = reports.iter().map(|r| &r.histograms[&m]).collect();
        save_plot(
            &plot_histograms(&series)?,
            &dir.join(format!("histogram_{}.png", m.key())),
        )?;
    }
    Ok(())
}

/// Writes `comparison.json` and one A/B overlay plot per metric
/// (`compare_<metric>.png`).
pub fn write_comparison(
    dir: &Path,
    comparison: &Comparison,
    a: &PhaseReport,
    b: &PhaseReport,
) -> Result<()> {
    write_atomic(
        &dir.join("comparison.json"),
        (serde_json::to_string_pretty(comparison)? + "\n").as_bytes(),
    )?;
    for m in MetricName::PER_SAMPLE {
        let plot = plot_histograms(&[&a.histograms[&m], &b.histograms[&m]])?;
        save_plot(&plot, &dir.join(format!("compare_{}.png", m.key())))?;
    }
    Ok(())
}

/// Reads back a `phase{n}_per_sample.csv` file.
pub fn read_per_sample_csv(path: &Path) -> Result<BTreeMap<String, SampleMetrics>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("{}:{}: malformed row", path.display(), i + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        out.insert(
            f[0].to_string(),
            SampleMetrics {
                rmse: num(f[1])?,
                mae: num(f[2])?,
                ssim: num(f[3])?,
                ncc: num(f[4])?,
            },
        );
    }
    Ok(out)
}
