//! Convolutional building blocks shared by both stages.

use candle_core::{Tensor, D};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::Result;

const INIT_STD: f32 = 0.02;
const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = store.normal(
            format!("{name}.weight"),
            (c_out, c_in, kernel, kernel),
            INIT_STD,
            rng,
        )?;
        let bias = store.constant(format!("{name}.bias"), c_out, 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Same as [`Conv2d::new`] but with all weights zero.
    #[allow(clippy::too_many_arguments)]
    pub fn zeros(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight =
            store.constant(format!("{name}.weight"), (c_out, c_in, kernel, kernel), 0.0)?;
        let bias = store.constant(format!("{name}.bias"), c_out, 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let b = self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let weight = store.normal(format!("{name}.weight"), (d_out, d_in), INIT_STD, rng)?;
        let bias = store.constant(format!("{name}.bias"), d_out, 0.0)?;
        Ok(Self { weight, bias })
    }

    /// `x`: `N×d_in`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Per-sample, per-channel normalization without affine parameters.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let flat = x.reshape((n, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    Ok(normed.reshape((n, c, h, w))?)
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, 0.2)?)
}

#[derive(Clone, Debug)]
struct ResBlock {
    a: Conv2d,
    b: Conv2d,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.a.forward(x)?)?.relu()?;
        let h = instance_norm(&self.b.forward(&h)?)?;
        Ok((x + h)?)
    }
}

/// Encoder / residual / decoder generator hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorShape {
    pub base_channels: usize,
    pub downsamples: usize,
    pub res_blocks: usize,
}

impl Default for GeneratorShape {
    fn default() -> Self {
        Self {
            base_channels: 32,
            downsamples: 2,
            res_blocks: 4,
        }
    }
}

/// Encoder–residual–decoder generator. Layer indices for feature taps: 0 is
/// the stem, `1..=downsamples` the strided convolutions, then one index per
/// residual block.
#[derive(Clone, Debug)]
pub struct Generator {
    stem: Conv2d,
    down: Vec<Conv2d>,
    blocks: Vec<ResBlock>,
    up: Vec<Conv2d>,
    head: Conv2d,
    shape: GeneratorShape,
}

impl Generator {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        shape: GeneratorShape,
        zero_head: bool,
    ) -> Result<Self> {
        let base = shape.base_channels;
        let stem = Conv2d::new(store, rng, &format!("{name}.stem"), c_in, base, 7, 1, 3)?;
        let mut down = Vec::new();
        let mut ch = base;
        for i in 0..shape.downsamples {
            down.push(Conv2d::new(
                store,
                rng,
                &format!("{name}.down{i}"),
                ch,
                ch * 2,
                4,
                2,
                1,
            )?);
            ch *= 2;
        }
        let mut blocks = Vec::new();
        for i in 0..shape.res_blocks {
            blocks.push(ResBlock {
                a: Conv2d::new(store, rng, &format!("{name}.res{i}.a"), ch, ch, 3, 1, 1)?,
                b: Conv2d::new(store, rng, &format!("{name}.res{i}.b"), ch, ch, 3, 1, 1)?,
            });
        }
        let mut up = Vec::new();
        for i in 0..shape.downsamples {
            up.push(Conv2d::new(
                store,
                rng,
                &format!("{name}.up{i}"),
                ch,
                ch / 2,
                3,
                1,
                1,
            )?);
            ch /= 2;
        }
        let head = if zero_head {
            Conv2d::zeros(store, &format!("{name}.head"), ch, c_out, 7, 1, 3)?
        } else {
            Conv2d::new(store, rng, &format!("{name}.head"), ch, c_out, 7, 1, 3)?
        };
        Ok(Self {
            stem,
            down,
            blocks,
            up,
            head,
            shape,
        })
    }

    pub fn shape(&self) -> GeneratorShape {
        self.shape
    }

    /// Channel count of each tap-able layer.
    pub fn tap_channels(&self) -> Vec<usize> {
        let base = self.shape.base_channels;
        let mut out = vec![base];
        let mut ch = base;
        for _ in 0..self.shape.downsamples {
            ch *= 2;
            out.push(ch);
        }
        out.extend(std::iter::repeat_n(ch, self.shape.res_blocks));
        out
    }

    /// Runs the encoder and residual trunk, collecting the activations at
    /// `taps`. Stops after the deepest tap when `full` is false.
    fn trunk(&self, x: &Tensor, taps: &[usize], full: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let deepest = taps.iter().copied().max();
        let mut feats = Vec::with_capacity(taps.len());
        let mut layer = 0;
        let mut h = instance_norm(&self.stem.forward(x)?)?.relu()?;
        let collect = |layer: usize, h: &Tensor, feats: &mut Vec<Tensor>| {
            if taps.contains(&layer) {
                feats.push(h.clone());
            }
            !full && Some(layer) == deepest
        };
        if collect(layer, &h, &mut feats) {
            return Ok((h, feats));
        }
        for conv in &self.down {
            layer += 1;
            h = instance_norm(&conv.forward(&h)?)?.relu()?;
            if collect(layer, &h, &mut feats) {
                return Ok((h, feats));
            }
        }
        for block in &self.blocks {
            layer += 1;
            h = block.forward(&h)?;
            if collect(layer, &h, &mut feats) {
                return Ok((h, feats));
            }
        }
        Ok((h, feats))
    }

    /// Pre-activation output plus tapped features.
    pub fn forward_with_taps(&self, x: &Tensor, taps: &[usize]) -> Result<(Tensor, Vec<Tensor>)> {
        let (mut h, feats) = self.trunk(x, taps, true)?;
        for conv in &self.up {
            let (_, _, hh, ww) = h.dims4()?;
            h = h.upsample_nearest2d(hh * 2, ww * 2)?;
            h = instance_norm(&conv.forward(&h)?)?.relu()?;
        }
        Ok((self.head.forward(&h)?, feats))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_taps(x, &[])?.0)
    }

    /// Encoder features only, for contrastive patch sampling.
    pub fn encode(&self, x: &Tensor, taps: &[usize]) -> Result<Vec<Tensor>> {
        Ok(self.trunk(x, taps, false)?.1)
    }
}

/// Patch-level discriminator: strided convolutions with leaky ReLU, ending in
/// a one-channel map of per-patch logits.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    convs: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        base: usize,
    ) -> Result<Self> {
        let convs = vec![
            Conv2d::new(store, rng, &format!("{name}.c0"), c_in, base, 4, 2, 1)?,
            Conv2d::new(store, rng, &format!("{name}.c1"), base, base * 2, 4, 2, 1)?,
            Conv2d::new(
                store,
                rng,
                &format!("{name}.c2"),
                base * 2,
                base * 4,
                3,
                1,
                1,
            )?,
            Conv2d::new(store, rng, &format!("{name}.c3"), base * 4, 1, 3, 1, 1)?,
        ];
        Ok(Self { convs })
    }

    /// Logits and the intermediate activations used for feature matching.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut feats = Vec::with_capacity(self.convs.len() - 1);
        let mut h = x.clone();
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < last {
                h = leaky_relu(&h)?;
                feats.push(h.clone());
            }
        }
        Ok((h, feats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::rng;
    use candle_core::{DType, Device};

    #[test]
    fn generator_preserves_spatial_size_and_reports_taps() {
        let mut store = ParamStore::new(Device::Cpu, DType::F32);
        let shape = GeneratorShape {
            base_channels: 4,
            downsamples: 2,
            res_blocks: 2,
        };
        let g = Generator::new(&mut store, &mut rng(0), "g", 3, 2, shape, false).unwrap();
        let x = Tensor::zeros((2, 3, 16, 16), DType::F32, &Device::Cpu).unwrap();
        let (y, feats) = g.forward_with_taps(&x, &[0, 2]).unwrap();
        assert_eq!(y.dims(), &[2, 2, 16, 16]);
        assert_eq!(feats[0].dims(), &[2, 4, 16, 16]);
        assert_eq!(feats[1].dims(), &[2, 16, 4, 4]);
        assert_eq!(g.tap_channels(), vec![4, 8, 16, 16, 16]);
        let enc = g.encode(&x, &[0, 1]).unwrap();
        assert_eq!(enc[1].dims(), &[2, 8, 8, 8]);
    }

    #[test]
    fn instance_norm_standardizes_each_channel() {
        let x = Tensor::arange(0f32, 32.0, &Device::Cpu)
            .unwrap()
            .reshape((1, 2, 4, 4))
            .unwrap();
        let y = instance_norm(&x).unwrap();
        let m = y
            .mean_keepdim(D::Minus1)
            .unwrap()
            .mean_keepdim(D::Minus2)
            .unwrap();
        for v in m.flatten_all().unwrap().to_vec1::<f32>().unwrap() {
            assert!(v.abs() < 1e-5);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let build = || {
            let mut store = ParamStore::new(Device::Cpu, DType::F32);
            PatchDiscriminator::new(&mut store, &mut rng(5), "d", 3, 4).unwrap();
            store
        };
        assert!(build().same_values(&build()).unwrap());
    }
}
