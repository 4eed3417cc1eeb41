pub mod ablation;
pub mod dataset;
pub mod edges;
pub mod error;
pub mod image;
pub mod inpainter;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod translator;

pub use candle_core::Device;
pub use error::{Error, Result};
