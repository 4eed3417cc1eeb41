//! Unpaired image-to-image translation with an adversarial loss and a patch
//! contrastive loss on encoder features.
//!
//! The generator works in logit space: the output is
//! `sigmoid(logit(x) + g·skip(logit(x)) + s·head(trunk(x)))` where both
//! `skip` (a pointwise 1×1 convolution) and `head` start at zero. An
//! untrained translator is therefore the identity, and outputs stay in
//! `[0, 1]` for any parameters. The adversarial objective is least squares.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::Optimizer;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail_dim, Error, Result};
use crate::image::Image;
use crate::inpainter::BatchSampler;
use crate::nn::losses::{lsgan_discriminator, lsgan_generator, patch_contrastive_loss_eps, scalar};
use crate::nn::params::rng;
use crate::nn::{
    checkpoint, AdamConfig, Conv2d, Generator, GeneratorShape, Linear, LossLog, ParamStore,
    PatchDiscriminator,
};

/// Fixed multiplier on the skip path. Adam moves each weight by roughly the
/// learning rate per step, so without it a global remap of intensities
/// (e.g. a sign flip, skip weight −2) would take ~10⁴ steps.
/// Inputs are clamped to `[EPS, 1 − EPS]` before taking logits.
const LOGIT_EPS: f64 = 1e-3;
const SKIP_GAIN: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorHyperparams {
    pub image_size: usize,
    pub generator: GeneratorShape,
    pub disc_channels: usize,
    /// Generator layers whose activations feed the contrastive loss.
    pub nce_layers: Vec<usize>,
    pub num_patches: usize,
    pub nce_dim: usize,
    pub temperature: f64,
    pub nce_weight: f64,
    /// The contrastive term is switched off for this many initial steps.
    pub nce_delay_steps: usize,
    pub adv_weight: f64,
    /// Scale applied to the convolutional residual; the pointwise skip path
    /// is unscaled.
    pub residual_scale: f64,
}

impl Default for TranslatorHyperparams {
    fn default() -> Self {
        Self {
            image_size: 64,
            generator: GeneratorShape::default(),
            disc_channels: 32,
            nce_layers: vec![1, 2],
            num_patches: 64,
            nce_dim: 64,
            temperature: 0.07,
            nce_weight: 1.0,
            nce_delay_steps: 0,
            adv_weight: 1.0,
            residual_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorTrainConfig {
    pub hyperparams: TranslatorHyperparams,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for TranslatorTrainConfig {
    fn default() -> Self {
        Self {
            hyperparams: TranslatorHyperparams::default(),
            adam: AdamConfig::default(),
            batch_size: 1,
            steps: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslatorHeader {
    pub kind: String,
    pub seed: u64,
    pub step_count: u64,
    pub hyperparams: TranslatorHyperparams,
}

struct ProjectionHead {
    a: Linear,
    b: Linear,
}

impl ProjectionHead {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.b.forward(&self.a.forward(x)?.relu()?)
    }
}

pub struct TranslatorCheckpoint {
    params: ParamStore,
    generator: Generator,
    skip: Conv2d,
    discriminator: PatchDiscriminator,
    heads: Vec<ProjectionHead>,
    pub header: TranslatorHeader,
}

impl TranslatorCheckpoint {
    pub fn init(
        seed: u64,
        hyperparams: TranslatorHyperparams,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        let h = &hyperparams;
        let factor = 1usize << h.generator.downsamples;
        if h.image_size == 0 || !h.image_size.is_multiple_of(factor) {
            bail_dim!("image size {} is not a multiple of {factor}", h.image_size);
        }
        if h.num_patches < 2 {
            return Err(Error::InvalidArgument(
                "num_patches must be at least 2".into(),
            ));
        }
        let mut params = ParamStore::new(device.clone(), dtype);
        let mut r = rng(seed);
        let generator = Generator::new(&mut params, &mut r, "gen", 3, 3, h.generator, true)?;
        let skip = Conv2d::zeros(&mut params, "gen.skip", 3, 3, 1, 1, 0)?;
        let discriminator =
            PatchDiscriminator::new(&mut params, &mut r, "disc", 3, h.disc_channels)?;
        let channels = generator.tap_channels();
        let mut heads = Vec::new();
        for (i, &layer) in h.nce_layers.iter().enumerate() {
            let c = *channels.get(layer).ok_or_else(|| {
                Error::InvalidArgument(format!("nce layer {layer} does not exist"))
            })?;
            heads.push(ProjectionHead {
                a: Linear::new(&mut params, &mut r, &format!("proj{i}.a"), c, h.nce_dim)?,
                b: Linear::new(
                    &mut params,
                    &mut r,
                    &format!("proj{i}.b"),
                    h.nce_dim,
                    h.nce_dim,
                )?,
            });
        }
        Ok(Self {
            params,
            generator,
            skip,
            discriminator,
            heads,
            header: TranslatorHeader {
                kind: "translator".into(),
                seed,
                step_count: 0,
                hyperparams,
            },
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn image_size(&self) -> usize {
        self.header.hyperparams.image_size
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(&self.header, &self.params.tensors())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.header, &self.params.tensors())
    }

    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let (header, tensors): (TranslatorHeader, _) = checkpoint::load(path)?;
        Self::from_parts(header, tensors, device)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        let (header, tensors): (TranslatorHeader, _) = checkpoint::decode(bytes)?;
        Self::from_parts(header, tensors, device)
    }

    fn from_parts(
        header: TranslatorHeader,
        tensors: std::collections::HashMap<String, Tensor>,
        device: &Device,
    ) -> Result<Self> {
        if header.kind != "translator" {
            return Err(Error::Checkpoint(format!(
                "expected a translator checkpoint, found `{}`",
                header.kind
            )));
        }
        let mut ckpt = Self::init(header.seed, header.hyperparams.clone(), device, DType::F32)?;
        ckpt.params.load(&tensors)?;
        ckpt.header = header;
        Ok(ckpt)
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let size = self.image_size();
        if image.width() != size || image.height() != size || image.channels() != 3 {
            bail_dim!(
                "image is {}x{}x{}, translator expects {size}x{size}x3",
                image.width(),
                image.height(),
                image.channels()
            );
        }
        Ok(())
    }

    /// `x`: `B×3×H×W` in `[0, 1]`.
    fn generate(&self, x: &Tensor, taps: &[usize]) -> Result<(Tensor, Vec<Tensor>)> {
        let clamped = x.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS)?;
        let logit = (clamped.log()? - (1.0 - &clamped)?.log()?)?;
        let (residual, feats) = self.generator.forward_with_taps(x, taps)?;
        let residual = (residual * self.header.hyperparams.residual_scale)?;
        let z = ((&logit + (self.skip.forward(&logit)? * SKIP_GAIN)?)? + residual)?;
        Ok((candle_nn::ops::sigmoid(&z)?, feats))
    }

    pub fn translate(&self, image: &Image) -> Result<Image> {
        self.check_image(image)?;
        let x = image.to_tensor(self.params.device(), self.params.dtype())?;
        Image::from_tensor(&self.generate(&x, &[])?.0)
    }

    /// Contrastive loss between source and output features, averaged over
    /// layers and batch items. Source features are constants.
    fn nce_loss(
        &self,
        src_feats: &[Tensor],
        out_feats: &[Tensor],
        r: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let h = &self.header.hyperparams;
        let mut total: Option<Tensor> = None;
        let mut terms = 0usize;
        for ((src, out), head) in src_feats.iter().zip(out_feats).zip(&self.heads) {
            let (b, c, hh, ww) = src.dims4()?;
            let n = h.num_patches.min(hh * ww);
            for i in 0..b {
                let ids: Vec<u32> = sample(r, hh * ww, n)
                    .into_iter()
                    .map(|v| v as u32)
                    .collect();
                let ids = Tensor::from_vec(ids, n, src.device())?;
                let pick = |t: &Tensor| -> Result<Tensor> {
                    let flat = t.get(i)?.reshape((c, hh * ww))?;
                    Ok(flat.index_select(&ids, 1)?.t()?.contiguous()?)
                };
                let ks = head.forward(&pick(&src.detach())?)?;
                let qs = head.forward(&pick(out)?)?;
                let loss = patch_contrastive_loss_eps(&ks, &qs, h.temperature)?;
                total = Some(match total {
                    None => loss,
                    Some(t) => (t + loss)?,
                });
                terms += 1;
            }
        }
        let total = total
            .ok_or_else(|| Error::InvalidArgument("no contrastive layers configured".into()))?;
        Ok((total / terms as f64)?)
    }
}

fn stack(images: &[&Image], device: &Device, dtype: DType) -> Result<Tensor> {
    let ts = images
        .iter()
        .map(|i| i.to_tensor(device, dtype))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&ts, 0)?)
}

const SOURCE_SALT: u64 = 0x5005;
const TARGET_SALT: u64 = 0x7a7e;
const PATCH_SALT: u64 = 0x9a7c;

/// Trains from `prior` (or a fresh initialization) for `config.steps`
/// steps. Source and target images are drawn independently each step.
pub fn train_translator(
    prior: Option<TranslatorCheckpoint>,
    source: &[Image],
    target: &[Image],
    config: &TranslatorTrainConfig,
    seed: u64,
    device: &Device,
) -> Result<(TranslatorCheckpoint, LossLog)> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "translator needs non-empty domains (source {}, target {})",
            source.len(),
            target.len()
        )));
    }
    let mut ckpt = match prior {
        Some(p) => p,
        None => TranslatorCheckpoint::init(seed, config.hyperparams.clone(), device, DType::F32)?,
    };
    for img in source.iter().chain(target) {
        ckpt.check_image(img)?;
    }
    let h = ckpt.header.hyperparams.clone();
    let taps = h.nce_layers.clone();
    let p = &ckpt.params;
    let mut g_vars = p.vars_with_prefix("gen.");
    g_vars.extend(p.vars_with_prefix("proj"));
    let mut g_opt = config.adam.build(g_vars)?;
    let mut d_opt = config.adam.build(p.vars_with_prefix("disc."))?;

    let batch = config.batch_size.max(1);
    let mut src_sampler = BatchSampler::new(source.len(), seed ^ SOURCE_SALT);
    let mut tgt_sampler = BatchSampler::new(target.len(), seed ^ TARGET_SALT);
    let mut patch_rng = rng(seed ^ PATCH_SALT);
    let mut log = LossLog::new();
    let (dev, dt) = (p.device().clone(), p.dtype());

    for step in 0..config.steps {
        let src: Vec<&Image> = src_sampler
            .next_batch(batch)
            .iter()
            .map(|&i| &source[i])
            .collect();
        let tgt: Vec<&Image> = tgt_sampler
            .next_batch(batch)
            .iter()
            .map(|&i| &target[i])
            .collect();
        let x = stack(&src, &dev, dt)?;
        let y = stack(&tgt, &dev, dt)?;

        let (fake, _) = ckpt.generate(&x, &[])?;
        let (real_logits, _) = ckpt.discriminator.forward(&y)?;
        let (fake_logits, _) = ckpt.discriminator.forward(&fake.detach())?;
        let d_loss = lsgan_discriminator(&real_logits, &fake_logits)?;
        log.record(step, "d", scalar(&d_loss)?)?;
        d_opt.backward_step(&d_loss)?;

        let (fake_logits, _) = ckpt.discriminator.forward(&fake)?;
        let adv = (lsgan_generator(&fake_logits)? * h.adv_weight)?;
        log.record(step, "g_adv", scalar(&adv)?)?;
        let global_step = ckpt.header.step_count as usize + step;
        let g_loss = if global_step >= h.nce_delay_steps && h.nce_weight > 0.0 {
            let src_feats = ckpt.generator.encode(&x, &taps)?;
            let out_feats = ckpt.generator.encode(&fake, &taps)?;
            let nce = (ckpt.nce_loss(&src_feats, &out_feats, &mut patch_rng)? * h.nce_weight)?;
            log.record(step, "g_nce", scalar(&nce)?)?;
            (adv + nce)?
        } else {
            adv
        };
        g_opt.backward_step(&g_loss)?;
    }
    ckpt.header.step_count += config.steps as u64;
    Ok((ckpt, log))
}

/// Loads every PNG in `dir` (sorted by file name) at `size`.
pub fn load_image_dir(dir: &Path, size: usize) -> Result<Vec<Image>> {
    crate::dataset::png_stems(dir)?
        .iter()
        .map(|stem| Image::load_rgb(&dir.join(format!("{stem}.png")), Some(size)))
        .collect()
}

/// [`train_translator`] over two image directories.
pub fn train_translator_dirs(
    source_dir: &Path,
    target_dir: &Path,
    config: &TranslatorTrainConfig,
    seed: u64,
    device: &Device,
) -> Result<(TranslatorCheckpoint, LossLog)> {
    let size = config.hyperparams.image_size;
    let source = load_image_dir(source_dir, size)?;
    let target = load_image_dir(target_dir, size)?;
    train_translator(None, &source, &target, config, seed, device)
}

/// Mean absolute difference between translated inputs and expected outputs.
pub fn translation_l1(
    ckpt: &TranslatorCheckpoint,
    inputs: &[Image],
    expected: &[Image],
) -> Result<f64> {
    if inputs.len() != expected.len() {
        return Err(Error::InvalidArgument(
            "input and expected sets differ in size".into(),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, e) in inputs.iter().zip(expected) {
        let out = ckpt.translate(x)?;
        out.ensure_same_shape(e)?;
        total += out
            .data()
            .iter()
            .zip(e.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>();
        count += out.data().len();
    }
    Ok(total / count.max(1) as f64)
}
