//! Image embedders for FID.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;

pub trait Embedder: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, image: &Image) -> Result<Vec<f64>>;

    fn embed_all(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        images.iter().map(|i| self.embed(i)).collect()
    }
}

/// Offline embedder: area-downsampled luminance on a `grid × grid` lattice,
/// multiplied by a fixed Gaussian projection matrix.
pub struct ProjectionEmbedder {
    seed: u64,
    grid: usize,
    dim: usize,
    projection: Vec<f64>,
}

pub const DEFAULT_EMBED_SEED: u64 = 0xf1d;

impl ProjectionEmbedder {
    pub fn new(seed: u64, grid: usize, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = grid * grid;
        let scale = 1.0 / (inputs as f64).sqrt();
        let projection = (0..dim * inputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self {
            seed,
            grid,
            dim,
            projection,
        }
    }

    /// Block-averaged luminance, `grid²` values in row-major order.
    pub fn downsample(&self, image: &Image) -> Result<Vec<f64>> {
        let (w, h, g) = (image.width(), image.height(), self.grid);
        if w < g || h < g {
            return Err(Error::Dimension(format!(
                "embedder needs at least {g}x{g} pixels, got {w}x{h}"
            )));
        }
        let luma = image.luminance();
        let mut out = Vec::with_capacity(g * g);
        for j in 0..g {
            let (y0, y1) = (j * h / g, (j + 1) * h / g);
            for i in 0..g {
                let (x0, x1) = (i * w / g, (i + 1) * w / g);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += luma.get(x, y, 0) as f64;
                    }
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        Ok(out)
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }
}

impl Default for ProjectionEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_SEED, 16, 16)
    }
}

impl Embedder for ProjectionEmbedder {
    fn name(&self) -> String {
        format!(
            "projection(seed={}, grid={}, dim={})",
            self.seed, self.grid, self.dim
        )
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        let v = self.downsample(image)?;
        Ok(self
            .projection
            .chunks_exact(v.len())
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

const BN_EPS: f64 = 1e-5;
const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

struct ConvBn {
    weight: Tensor,
    scale: Tensor,
    shift: Tensor,
    stride: usize,
    padding: usize,
}

impl ConvBn {
    fn load(w: &HashMap<String, Tensor>, conv: &str, bn: &str, stride: usize) -> Result<Self> {
        let get = |name: String| {
            w.get(&name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("embedder weights lack `{name}`")))
        };
        let weight = get(format!("{conv}.weight"))?.to_dtype(DType::F32)?;
        let k = weight.dim(2)?;
        let gamma = get(format!("{bn}.weight"))?.to_dtype(DType::F32)?;
        let beta = get(format!("{bn}.bias"))?.to_dtype(DType::F32)?;
        let mean = get(format!("{bn}.running_mean"))?.to_dtype(DType::F32)?;
        let var = get(format!("{bn}.running_var"))?.to_dtype(DType::F32)?;
        let scale = gamma.div(&(var + BN_EPS)?.sqrt()?)?;
        let shift = (beta - mean.mul(&scale)?)?;
        let c = scale.dim(0)?;
        Ok(Self {
            weight,
            scale: scale.reshape((1, c, 1, 1))?,
            shift: shift.reshape((1, c, 1, 1))?,
            stride,
            padding: k / 2,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_mul(&self.scale)?.broadcast_add(&self.shift)?)
    }
}

struct Bottleneck {
    a: ConvBn,
    b: ConvBn,
    c: ConvBn,
    down: Option<ConvBn>,
}

impl Bottleneck {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.a.forward(x)?.relu()?;
        let h = self.b.forward(&h)?.relu()?;
        let h = self.c.forward(&h)?;
        let skip = match &self.down {
            Some(d) => d.forward(x)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }
}

/// Bottleneck ResNet feature extractor (global-average-pooled final stage)
/// reading torchvision-named weights from a safetensors file. Depth and
/// widths are taken from the weights, so a ResNet-50 file yields 2048-d
/// features.
pub struct ResNetEmbedder {
    stem: ConvBn,
    stages: Vec<Vec<Bottleneck>>,
    input_size: usize,
    dim: usize,
    device: Device,
}

impl ResNetEmbedder {
    pub fn load(path: &Path, input_size: usize, device: &Device) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let w = candle_core::safetensors::load(path, device)?;
        let stem = ConvBn::load(&w, "conv1", "bn1", 2)?;
        let mut stages = Vec::new();
        let mut dim = 0;
        for layer in 1..=4 {
            let mut blocks = Vec::new();
            let mut i = 0;
            while w.contains_key(&format!("layer{layer}.{i}.conv1.weight")) {
                let p = format!("layer{layer}.{i}");
                let stride = if layer > 1 && i == 0 { 2 } else { 1 };
                let down = if w.contains_key(&format!("{p}.downsample.0.weight")) {
                    Some(ConvBn::load(
                        &w,
                        &format!("{p}.downsample.0"),
                        &format!("{p}.downsample.1"),
                        stride,
                    )?)
                } else {
                    None
                };
                let c = ConvBn::load(&w, &format!("{p}.conv3"), &format!("{p}.bn3"), 1)?;
                dim = c.weight.dim(0)?;
                blocks.push(Bottleneck {
                    a: ConvBn::load(&w, &format!("{p}.conv1"), &format!("{p}.bn1"), 1)?,
                    b: ConvBn::load(&w, &format!("{p}.conv2"), &format!("{p}.bn2"), stride)?,
                    c,
                    down,
                });
                i += 1;
            }
            if blocks.is_empty() {
                return Err(Error::Checkpoint(format!(
                    "embedder weights have no layer{layer} blocks"
                )));
            }
            stages.push(blocks);
        }
        Ok(Self {
            stem,
            stages,
            input_size,
            dim,
            device: device.clone(),
        })
    }
}

impl Embedder for ResNetEmbedder {
    fn name(&self) -> String {
        format!("resnet(dim={}, input={})", self.dim, self.input_size)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        if image.channels() != 3 {
            return Err(Error::Dimension("embedder expects RGB images".into()));
        }
        let resized = if image.width() == self.input_size && image.height() == self.input_size {
            image.clone()
        } else {
            image.resize_bilinear(self.input_size, self.input_size)
        };
        let mut norm = resized;
        for (i, v) in norm.data_mut().iter_mut().enumerate() {
            let c = i % 3;
            *v = (*v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
        }
        let x = norm.to_tensor(&self.device, DType::F32)?;
        // Post-ReLU activations are non-negative, so zero padding is
        // equivalent to the usual −∞ padding of the stem max-pool.
        let h = self
            .stem
            .forward(&x)?
            .relu()?
            .pad_with_zeros(2, 1, 1)?
            .pad_with_zeros(3, 1, 1)?;
        let mut h = h.max_pool2d_with_stride(3, 2)?;
        for stage in &self.stages {
            for block in stage {
                h = block.forward(&h)?;
            }
        }
        let pooled = h.mean(D::Minus1)?.mean(D::Minus1)?.flatten_all()?;
        Ok(pooled.to_dtype(DType::F64)?.to_vec1::<f64>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn projection_embedder_is_deterministic() {
        let e = ProjectionEmbedder::default();
        let img = synthetic::night_scene(1, 40);
        let a = e.embed(&img).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, ProjectionEmbedder::default().embed(&img).unwrap());
        assert_ne!(a, ProjectionEmbedder::new(2, 16, 16).embed(&img).unwrap());
        assert!(e.embed(&synthetic::night_scene(1, 8)).is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let e = ProjectionEmbedder::new(0, 2, 1);
        let img = Image::from_fn(4, 4, 1, |x, y, _| if x < 2 && y < 2 { 1.0 } else { 0.0 });
        assert_eq!(e.downsample(&img).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    fn write_tiny_resnet(path: &Path) {
        let dev = Device::Cpu;
        let mut w: Vec<(String, Tensor)> = Vec::new();
        let mut seed = 0u64;
        let mut rand = |shape: &[usize]| {
            seed += 1;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let n: usize = shape.iter().product();
            let v: Vec<f32> = (0..n)
                .map(|_| StandardNormal.sample(&mut r))
                .map(|z: f32| z * 0.2)
                .collect();
            Tensor::from_vec(v, shape, &dev).unwrap()
        };
        let bn = |w: &mut Vec<(String, Tensor)>, name: &str, c: usize| {
            w.push((
                format!("{name}.weight"),
                Tensor::ones(c, DType::F32, &dev).unwrap(),
            ));
            w.push((
                format!("{name}.bias"),
                Tensor::zeros(c, DType::F32, &dev).unwrap(),
            ));
            w.push((
                format!("{name}.running_mean"),
                Tensor::zeros(c, DType::F32, &dev).unwrap(),
            ));
            w.push((
                format!("{name}.running_var"),
                Tensor::ones(c, DType::F32, &dev).unwrap(),
            ));
        };
        let base = 4;
        w.push(("conv1.weight".into(), rand(&[base, 3, 7, 7])));
        bn(&mut w, "bn1", base);
        let mut c_in = base;
        for layer in 1..=4 {
            let width = base << (layer - 1);
            let p = format!("layer{layer}.0");
            w.push((format!("{p}.conv1.weight"), rand(&[width, c_in, 1, 1])));
            bn(&mut w, &format!("{p}.bn1"), width);
            w.push((format!("{p}.conv2.weight"), rand(&[width, width, 3, 3])));
            bn(&mut w, &format!("{p}.bn2"), width);
            w.push((format!("{p}.conv3.weight"), rand(&[width * 4, width, 1, 1])));
            bn(&mut w, &format!("{p}.bn3"), width * 4);
            w.push((
                format!("{p}.downsample.0.weight"),
                rand(&[width * 4, c_in, 1, 1]),
            ));
            bn(&mut w, &format!("{p}.downsample.1"), width * 4);
            c_in = width * 4;
        }
        candle_core::safetensors::save(&w.into_iter().collect::<HashMap<_, _>>(), path).unwrap();
    }

    #[test]
    fn resnet_embedder_reads_torchvision_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.safetensors");
        write_tiny_resnet(&path);
        let e = ResNetEmbedder::load(&path, 32, &Device::Cpu).unwrap();
        assert_eq!(e.dim(), 128);
        let img = synthetic::night_scene(3, 48);
        let a = e.embed(&img).unwrap();
        assert_eq!(a.len(), 128);
        assert!(a.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(a, e.embed(&img).unwrap());
        assert!(matches!(
            ResNetEmbedder::load(&dir.path().join("absent.safetensors"), 32, &Device::Cpu),
            Err(Error::MissingArtifact(_))
        ));
    }
}
