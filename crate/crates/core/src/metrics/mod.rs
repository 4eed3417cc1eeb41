//! Similarity measures and the three-phase evaluation protocol.

pub mod embed;
pub mod fid;
pub mod measures;
pub mod report;

pub use embed::{Embedder, ProjectionEmbedder, ResNetEmbedder};
pub use fid::fid_from_features;
pub use measures::{mae, ncc, rmse, ssim};
pub use report::{
    build_histogram, compare_models, evaluate_phases, Comparison, Histogram, MetricName, Phase,
    PhaseReport, SampleMetrics, Winner,
};

use crate::error::Result;
use crate::image::Image;

/// FID between two image sets under `embedder`.
pub fn fid(set_a: &[&Image], set_b: &[&Image], embedder: &dyn Embedder) -> Result<f64> {
    fid_from_features(&embedder.embed_all(set_a)?, &embedder.embed_all(set_b)?)
}
