//! Trainable building blocks on top of candle: parameter storage with seeded
//! initialization, layers, losses, checkpoints and loss logs.

pub mod checkpoint;
pub mod layers;
pub mod losses;
pub mod losslog;
pub mod params;

use candle_core::{DType, Device};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

pub use layers::{Conv2d, Generator, GeneratorShape, Linear, PatchDiscriminator};
pub use losslog::LossLog;
pub use params::ParamStore;

use crate::error::{Error, Result};

/// Adam hyperparameters shared by both stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

impl AdamConfig {
    pub fn build(&self, vars: Vec<candle_core::Var>) -> Result<AdamW> {
        Ok(AdamW::new(
            vars,
            ParamsAdamW {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: 1e-8,
                weight_decay: 0.0,
            },
        )?)
    }
}

/// Compute device, selected with `NIGHT2DAY_DEVICE` (`cpu` or `cuda[:N]`).
pub fn device_from_env() -> Result<Device> {
    match std::env::var("NIGHT2DAY_DEVICE").ok().as_deref() {
        None | Some("") | Some("cpu") => Ok(Device::Cpu),
        Some(spec) if spec.starts_with("cuda") => {
            let ordinal = spec
                .strip_prefix("cuda")
                .and_then(|s| s.strip_prefix(':'))
                .map(|s| s.parse::<usize>())
                .transpose()
                .map_err(|e| Error::InvalidArgument(format!("bad device `{spec}`: {e}")))?
                .unwrap_or(0);
            Ok(Device::new_cuda(ordinal)?)
        }
        Some(other) => Err(Error::InvalidArgument(format!("unknown device `{other}`"))),
    }
}

pub const TRAIN_DTYPE: DType = DType::F32;
