//! Mask-thickness sensitivity: one sample, its mask dilated `k` times for
//! `k = 0..=max_iterations`, scored after full pipeline inference.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{apply_mask, dilate_mask, write_atomic, ScenePair};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::metrics::SampleMetrics;
use crate::pipeline::{StageOutputs, TrainedPipeline};

pub const DEFAULT_MAX_ITERATIONS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub coverage: f64,
    /// Final output against the day ground truth.
    pub metrics: SampleMetrics,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub pair_id: String,
    pub rows: Vec<SweepRow>,
    pub outputs: Vec<StageOutputs>,
    /// First `k` at which the mask covered the whole image, when the sweep
    /// stopped early because of it.
    pub saturated_at: Option<usize>,
    night: Image,
    day: Image,
}

pub fn dilation_sweep(
    pipeline: &TrainedPipeline,
    pair: &ScenePair,
    base_mask: &Mask,
    max_iterations: usize,
) -> Result<SweepReport> {
    if max_iterations < 1 {
        return Err(Error::InvalidArgument(
            "max_iterations must be at least 1".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    let mut saturated_at = None;
    let mut mask = base_mask.clone();
    for k in 0..=max_iterations {
        if k > 0 {
            mask = dilate_mask(&mask, 1)?;
        }
        let sample = apply_mask(&pair.id, &pair.night, &mask, pipeline.fill, pipeline.canny)?;
        let out = pipeline.infer(&sample)?;
        rows.push(SweepRow {
            k,
            coverage: mask.coverage(),
            metrics: SampleMetrics::compute(&out.final_image, &pair.day)?,
        });
        outputs.push(out);
        if mask.coverage() >= 1.0 && k < max_iterations {
            log::warn!("mask saturated at k={k}; stopping the sweep");
            saturated_at = Some(k);
            break;
        }
    }
    Ok(SweepReport {
        pair_id: pair.id.clone(),
        rows,
        outputs,
        saturated_at,
        night: pair.night.clone(),
        day: pair.day.clone(),
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,coverage,rmse,mae,ssim,ncc\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.k, r.coverage, m.rmse, m.mae, m.ssim, m.ncc
            );
        }
        s
    }

    /// One row per `k`: input, intermediate, night ground truth, output,
    /// day ground truth.
    pub fn grid(&self) -> Image {
        let size = self.night.width();
        let (w, h) = (5 * size, self.outputs.len() * size);
        let mut grid = Image::filled(w, h, 3, 1.0);
        for (row, out) in self.outputs.iter().enumerate() {
            let tiles = [
                &out.input_image,
                &out.intermediate_image,
                &self.night,
                &out.final_image,
                &self.day,
            ];
            for (col, tile) in tiles.iter().enumerate() {
                for y in 0..size {
                    for x in 0..size {
                        for c in 0..3 {
                            grid.set(col * size + x, row * size + y, c, tile.get(x, y, c));
                        }
                    }
                }
            }
        }
        grid
    }

    /// Writes `ablation.csv` and `ablation_grid.png` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("ablation.csv"), self.to_csv().as_bytes())?;
        self.grid().save_png(&dir.join("ablation_grid.png"))
    }
}
