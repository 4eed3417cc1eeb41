//! Edge-guided inpainting stage.
//!
//! An edge model hallucinates the edge map inside the missing region from the
//! incomplete grayscale image, its partial edges, and the mask. A completion
//! model then fills the colour image conditioned on the completed edges.
//! Training runs in three stages (`edge`, `inpaint`, `joint`); inference
//! always uses both models.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::Optimizer;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MaskedNightSample;
use crate::error::{bail_dim, Error, Result};
use crate::image::{BinaryMap, EdgeMap, Image};
use crate::nn::losses::{feature_matching, hinge_discriminator, hinge_generator, l1, scalar};
use crate::nn::params::rng;
use crate::nn::{
    checkpoint, AdamConfig, Generator, GeneratorShape, LossLog, ParamStore, PatchDiscriminator,
};

/// Threshold applied to the edge generator's output at inference.
pub const EDGE_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingStage {
    Edge,
    Inpaint,
    Joint,
}

impl TrainingStage {
    pub fn name(self) -> &'static str {
        match self {
            TrainingStage::Edge => "edge",
            TrainingStage::Inpaint => "inpaint",
            TrainingStage::Joint => "joint",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeHyperparams {
    pub generator: GeneratorShape,
    pub disc_channels: usize,
    pub adv_weight: f64,
    pub feat_match_weight: f64,
}

impl Default for EdgeHyperparams {
    fn default() -> Self {
        Self {
            generator: GeneratorShape::default(),
            disc_channels: 32,
            adv_weight: 0.1,
            feat_match_weight: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintHyperparams {
    pub generator: GeneratorShape,
    pub disc_channels: usize,
    pub adv_weight: f64,
    pub l1_weight: f64,
}

impl Default for InpaintHyperparams {
    fn default() -> Self {
        Self {
            generator: GeneratorShape::default(),
            disc_channels: 32,
            adv_weight: 0.1,
            l1_weight: 100.0,
        }
    }
}

/// Architecture and loss weights; everything needed to rebuild the models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpainterHyperparams {
    pub image_size: usize,
    pub edge: EdgeHyperparams,
    pub inpaint: InpaintHyperparams,
}

impl Default for InpainterHyperparams {
    fn default() -> Self {
        Self {
            image_size: 64,
            edge: EdgeHyperparams::default(),
            inpaint: InpaintHyperparams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSteps {
    pub edge: usize,
    pub inpaint: usize,
    pub joint: usize,
}

impl StageSteps {
    pub fn get(&self, stage: TrainingStage) -> usize {
        match stage {
            TrainingStage::Edge => self.edge,
            TrainingStage::Inpaint => self.inpaint,
            TrainingStage::Joint => self.joint,
        }
    }

    pub fn total(&self) -> usize {
        self.edge + self.inpaint + self.joint
    }
}

impl Default for StageSteps {
    fn default() -> Self {
        Self {
            edge: 2000,
            inpaint: 2000,
            joint: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpainterTrainConfig {
    pub hyperparams: InpainterHyperparams,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: StageSteps,
}

impl Default for InpainterTrainConfig {
    fn default() -> Self {
        Self {
            hyperparams: InpainterHyperparams::default(),
            adam: AdamConfig::default(),
            batch_size: 4,
            steps: StageSteps::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpainterHeader {
    pub kind: String,
    pub stage: TrainingStage,
    pub seed: u64,
    pub step_count: u64,
    pub hyperparams: InpainterHyperparams,
}

/// Incomplete sample plus the complete image it should be restored to.
#[derive(Clone, Debug)]
pub struct InpaintExample {
    pub sample: MaskedNightSample,
    pub target: Image,
}

/// Edge hallucination model: `(gray, partial edges, mask) → edge map`.
pub struct EdgeModel {
    pub generator: Generator,
    pub discriminator: PatchDiscriminator,
}

/// Completion model: `(incomplete RGB, full edges) → RGB`.
pub struct InpaintModel {
    pub generator: Generator,
    pub discriminator: PatchDiscriminator,
}

/// Both inpainting models with their parameters and training provenance.
pub struct InpainterCheckpoint {
    params: ParamStore,
    pub edge: EdgeModel,
    pub inpaint: InpaintModel,
    pub header: InpainterHeader,
}

struct Batch {
    edge_input: Tensor,
    gray_gt: Tensor,
    edge_gt: Tensor,
    edge_partial: Tensor,
    mask: Tensor,
    incomplete: Tensor,
    target: Tensor,
}

impl InpainterCheckpoint {
    /// Freshly initialized models; parameters depend only on `seed` and
    /// `hyperparams`.
    pub fn init(
        seed: u64,
        hyperparams: InpainterHyperparams,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        let factor = 1usize
            << hyperparams
                .edge
                .generator
                .downsamples
                .max(hyperparams.inpaint.generator.downsamples);
        if hyperparams.image_size == 0 || !hyperparams.image_size.is_multiple_of(factor) {
            bail_dim!(
                "image size {} is not a multiple of {factor}",
                hyperparams.image_size
            );
        }
        let mut params = ParamStore::new(device.clone(), dtype);
        let mut r = rng(seed);
        let h = hyperparams;
        let edge = EdgeModel {
            generator: Generator::new(
                &mut params,
                &mut r,
                "edge.gen",
                3,
                1,
                h.edge.generator,
                false,
            )?,
            discriminator: PatchDiscriminator::new(
                &mut params,
                &mut r,
                "edge.disc",
                2,
                h.edge.disc_channels,
            )?,
        };
        let inpaint = InpaintModel {
            generator: Generator::new(
                &mut params,
                &mut r,
                "inpaint.gen",
                4,
                3,
                h.inpaint.generator,
                false,
            )?,
            discriminator: PatchDiscriminator::new(
                &mut params,
                &mut r,
                "inpaint.disc",
                3,
                h.inpaint.disc_channels,
            )?,
        };
        Ok(Self {
            params,
            edge,
            inpaint,
            header: InpainterHeader {
                kind: "inpainter".into(),
                stage: TrainingStage::Edge,
                seed,
                step_count: 0,
                hyperparams,
            },
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn stage(&self) -> TrainingStage {
        self.header.stage
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
        let (header, tensors): (InpainterHeader, _) = checkpoint::load(path)?;
        Self::from_parts(header, tensors, device)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        let (header, tensors): (InpainterHeader, _) = checkpoint::decode(bytes)?;
        Self::from_parts(header, tensors, device)
    }

    fn from_parts(
        header: InpainterHeader,
        tensors: std::collections::HashMap<String, Tensor>,
        device: &Device,
    ) -> Result<Self> {
        if header.kind != "inpainter" {
            return Err(Error::Checkpoint(format!(
                "expected an inpainter checkpoint, found `{}`",
                header.kind
            )));
        }
        let mut ckpt = Self::init(header.seed, header.hyperparams, device, DType::F32)?;
        ckpt.params.load(&tensors)?;
        ckpt.header = header;
        Ok(ckpt)
    }

    fn check_sample(&self, sample: &MaskedNightSample) -> Result<()> {
        let size = self.image_size();
        if sample.width() != size || sample.height() != size {
            bail_dim!(
                "sample is {}x{}, model expects {size}x{size}",
                sample.width(),
                sample.height()
            );
        }
        sample.mask.ensure_matches(&sample.incomplete_night)?;
        sample.mask.ensure_matches(&sample.gray)?;
        if sample.incomplete_night.channels() != 3 {
            bail_dim!("incomplete image must be RGB");
        }
        Ok(())
    }

    fn batch(&self, examples: &[&InpaintExample]) -> Result<Batch> {
        let dev = self.params.device();
        let dt = self.params.dtype();
        let cat = |f: &dyn Fn(&InpaintExample) -> Result<Tensor>| -> Result<Tensor> {
            let ts = examples.iter().map(|e| f(e)).collect::<Result<Vec<_>>>()?;
            Ok(Tensor::cat(&ts, 0)?)
        };
        let mask = cat(&|e| e.sample.mask.to_tensor(dev, dt))?;
        let gray = cat(&|e| e.sample.gray.to_tensor(dev, dt))?;
        let edge_partial = cat(&|e| e.sample.edge_partial.to_tensor(dev, dt))?;
        Ok(Batch {
            edge_input: Tensor::cat(&[&gray, &edge_partial, &mask], 1)?,
            gray_gt: cat(&|e| e.target.luminance().to_tensor(dev, dt))?,
            edge_gt: cat(&|e| e.sample.edge_gt.to_tensor(dev, dt))?,
            edge_partial,
            mask,
            incomplete: cat(&|e| e.sample.incomplete_night.to_tensor(dev, dt))?,
            target: cat(&|e| e.target.to_tensor(dev, dt))?,
        })
    }

    fn edge_probabilities(&self, edge_input: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::sigmoid(
            &self.edge.generator.forward(edge_input)?,
        )?)
    }

    fn completion(&self, incomplete: &Tensor, edges: &Tensor) -> Result<Tensor> {
        let x = Tensor::cat(&[incomplete, edges], 1)?;
        let raw = self.inpaint.generator.forward(&x)?;
        Ok(((raw.tanh()? + 1.0)? * 0.5)?)
    }

    /// Partial edges outside the mask, soft generator edges inside.
    fn soft_full_edges(&self, b: &Batch) -> Result<Tensor> {
        let probs = self.edge_probabilities(&b.edge_input)?;
        let keep = (1.0 - &b.mask)?;
        Ok(((&b.edge_partial * keep)? + (probs * &b.mask)?)?)
    }

    /// L1 reconstruction term of the completion model on ground-truth edges,
    /// before weighting.
    pub fn completion_l1(&self, examples: &[&InpaintExample]) -> Result<Tensor> {
        let b = self.batch(examples)?;
        let out = self.completion(&b.incomplete, &b.edge_gt)?;
        l1(&out, &b.target)
    }

    /// Full edge map: partial edges are kept outside the mask, thresholded
    /// generator output fills the inside.
    pub fn hallucinate_edges(&self, sample: &MaskedNightSample) -> Result<EdgeMap> {
        self.check_sample(sample)?;
        let dev = self.params.device();
        let dt = self.params.dtype();
        let input = Tensor::cat(
            &[
                sample.gray.to_tensor(dev, dt)?,
                sample.edge_partial.to_tensor(dev, dt)?,
                sample.mask.to_tensor(dev, dt)?,
            ],
            1,
        )?;
        let probs = Image::from_tensor(&self.edge_probabilities(&input)?)?;
        let (w, h) = (sample.width(), sample.height());
        Ok(BinaryMap::from_fn(w, h, |x, y| {
            if sample.mask.get(x, y) {
                probs.get(x, y, 0) >= EDGE_THRESHOLD
            } else {
                sample.edge_partial.get(x, y)
            }
        }))
    }

    /// Completed image; known pixels are copied from the input unchanged.
    pub fn complete_image(&self, sample: &MaskedNightSample, full_edge: &EdgeMap) -> Result<Image> {
        self.check_sample(sample)?;
        if full_edge.width() != sample.width() || full_edge.height() != sample.height() {
            bail_dim!("edge map does not match sample dimensions");
        }
        let dev = self.params.device();
        let dt = self.params.dtype();
        let out = self.completion(
            &sample.incomplete_night.to_tensor(dev, dt)?,
            &full_edge.to_tensor(dev, dt)?,
        )?;
        let generated = Image::from_tensor(&out)?;
        Ok(paste_back(
            &sample.incomplete_night,
            &generated,
            &sample.mask,
        ))
    }

    /// Edge hallucination followed by completion.
    pub fn inpaint(&self, sample: &MaskedNightSample) -> Result<Image> {
        let edges = self.hallucinate_edges(sample)?;
        self.complete_image(sample, &edges)
    }
}

/// `mask ⊙ generated + (1 − mask) ⊙ known`, with generated values clamped to
/// `[0, 1]`. Known pixels are copied bit-for-bit.
pub fn paste_back(known: &Image, generated: &Image, mask: &BinaryMap) -> Image {
    let c = known.channels();
    let mut out = known.clone();
    for (i, &m) in mask.data().iter().enumerate() {
        if m != 0 {
            for k in 0..c {
                out.data_mut()[i * c + k] = generated.data()[i * c + k].clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Seeded, epoch-shuffled batch order.
pub(crate) struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub(crate) fn new(len: usize, seed: u64) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
            rng: rng(seed),
        }
    }

    pub(crate) fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

const STAGE_SEED_SALT: [u64; 3] = [0xed9e, 0x1a9a, 0x701e];

/// Runs one training stage and returns the updated checkpoint with its loss
/// log. `prior` must have completed the preceding stage; the edge stage
/// starts from a fresh initialization when `prior` is `None`.
pub fn train_stage(
    prior: Option<InpainterCheckpoint>,
    examples: &[InpaintExample],
    config: &InpainterTrainConfig,
    stage: TrainingStage,
    seed: u64,
    device: &Device,
) -> Result<(InpainterCheckpoint, LossLog)> {
    let ckpt = match (stage, prior) {
        (TrainingStage::Edge, None) => {
            InpainterCheckpoint::init(seed, config.hyperparams, device, DType::F32)?
        }
        (TrainingStage::Edge, Some(p)) => p,
        (TrainingStage::Inpaint, Some(p)) if p.stage() >= TrainingStage::Edge => p,
        (TrainingStage::Joint, Some(p)) if p.stage() >= TrainingStage::Inpaint => p,
        (s, p) => {
            return Err(Error::Prerequisite(format!(
                "stage `{}` requires a completed `{}` checkpoint (have {})",
                s.name(),
                if s == TrainingStage::Joint {
                    "inpaint"
                } else {
                    "edge"
                },
                p.map(|c| c.stage().name().to_owned())
                    .unwrap_or_else(|| "none".into())
            )))
        }
    };
    let steps = config.steps.get(stage);
    if steps > 0 && examples.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    for e in examples {
        ckpt.check_sample(&e.sample)?;
        e.target.ensure_same_shape(&e.sample.incomplete_night)?;
    }
    let mut log = LossLog::new();
    let salt = STAGE_SEED_SALT[stage as usize];
    let mut sampler = BatchSampler::new(examples.len(), seed ^ salt);
    let batch_size = config.batch_size.max(1);
    let hp = ckpt.header.hyperparams;

    let p = &ckpt.params;
    let mut edge_d_opt = config.adam.build(p.vars_with_prefix("edge.disc."))?;
    let mut inpaint_d_opt = config.adam.build(p.vars_with_prefix("inpaint.disc."))?;
    let mut g_opt = match stage {
        TrainingStage::Edge => config.adam.build(p.vars_with_prefix("edge.gen."))?,
        TrainingStage::Inpaint => config.adam.build(p.vars_with_prefix("inpaint.gen."))?,
        TrainingStage::Joint => {
            let mut vars = p.vars_with_prefix("edge.gen.");
            vars.extend(p.vars_with_prefix("inpaint.gen."));
            config.adam.build(vars)?
        }
    };

    for step in 0..steps {
        let idx = sampler.next_batch(batch_size);
        let chosen: Vec<&InpaintExample> = idx.iter().map(|&i| &examples[i]).collect();
        let b = ckpt.batch(&chosen)?;
        match stage {
            TrainingStage::Edge => {
                let fake = ckpt.edge_probabilities(&b.edge_input)?;
                let real_in = Tensor::cat(&[&b.edge_gt, &b.gray_gt], 1)?;
                let fake_in = Tensor::cat(&[&fake, &b.gray_gt], 1)?;

                let (real_logits, _) = ckpt.edge.discriminator.forward(&real_in)?;
                let (fake_logits, _) = ckpt.edge.discriminator.forward(&fake_in.detach())?;
                let d_loss = hinge_discriminator(&real_logits, &fake_logits)?;
                log.record(step, "d_edge", scalar(&d_loss)?)?;
                edge_d_opt.backward_step(&d_loss)?;

                let (_, real_feats) = ckpt.edge.discriminator.forward(&real_in)?;
                let (fake_logits, fake_feats) = ckpt.edge.discriminator.forward(&fake_in)?;
                let adv = (hinge_generator(&fake_logits)? * hp.edge.adv_weight)?;
                let fm = (feature_matching(&fake_feats, &real_feats)? * hp.edge.feat_match_weight)?;
                log.record(step, "g_edge_adv", scalar(&adv)?)?;
                log.record(step, "g_edge_fm", scalar(&fm)?)?;
                g_opt.backward_step(&(adv + fm)?)?;
            }
            TrainingStage::Inpaint | TrainingStage::Joint => {
                let edges = if stage == TrainingStage::Joint {
                    let soft = ckpt.soft_full_edges(&b)?;
                    let real_in = Tensor::cat(&[&b.edge_gt, &b.gray_gt], 1)?;
                    let fake_in = Tensor::cat(&[&soft.detach(), &b.gray_gt], 1)?;
                    let (rl, _) = ckpt.edge.discriminator.forward(&real_in)?;
                    let (fl, _) = ckpt.edge.discriminator.forward(&fake_in)?;
                    let d_edge = hinge_discriminator(&rl, &fl)?;
                    log.record(step, "d_edge", scalar(&d_edge)?)?;
                    edge_d_opt.backward_step(&d_edge)?;
                    soft
                } else {
                    b.edge_gt.clone()
                };
                let out = ckpt.completion(&b.incomplete, &edges)?;

                let (real_logits, _) = ckpt.inpaint.discriminator.forward(&b.target)?;
                let (fake_logits, _) = ckpt.inpaint.discriminator.forward(&out.detach())?;
                let d_loss = hinge_discriminator(&real_logits, &fake_logits)?;
                log.record(step, "d_inpaint", scalar(&d_loss)?)?;
                inpaint_d_opt.backward_step(&d_loss)?;

                let (fake_logits, _) = ckpt.inpaint.discriminator.forward(&out)?;
                let adv = (hinge_generator(&fake_logits)? * hp.inpaint.adv_weight)?;
                let rec = (l1(&out, &b.target)? * hp.inpaint.l1_weight)?;
                log.record(step, "g_inpaint_adv", scalar(&adv)?)?;
                log.record(step, "g_inpaint_l1", scalar(&rec)?)?;
                g_opt.backward_step(&(adv + rec)?)?;
            }
        }
    }

    let mut ckpt = ckpt;
    ckpt.header.stage = ckpt.header.stage.max(stage);
    ckpt.header.step_count += steps as u64;
    Ok((ckpt, log))
}

/// Runs `stages` in order, starting from `prior` when given.
pub fn train_stages(
    prior: Option<InpainterCheckpoint>,
    examples: &[InpaintExample],
    config: &InpainterTrainConfig,
    stages: &[TrainingStage],
    seed: u64,
    device: &Device,
) -> Result<(InpainterCheckpoint, Vec<(TrainingStage, LossLog)>)> {
    let mut current = prior;
    let mut logs = Vec::new();
    for &stage in stages {
        let (ckpt, log) = train_stage(current.take(), examples, config, stage, seed, device)?;
        log::info!(
            "inpainter stage `{}` done ({} steps)",
            stage.name(),
            config.steps.get(stage)
        );
        logs.push((stage, log));
        current = Some(ckpt);
    }
    let ckpt = current.ok_or_else(|| Error::InvalidArgument("no stages requested".into()))?;
    Ok((ckpt, logs))
}

/// Mean absolute error of full inference (edges + completion) against the
/// targets, over all pixels.
pub fn reconstruction_l1(ckpt: &InpainterCheckpoint, examples: &[InpaintExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for e in examples {
        let out = ckpt.inpaint(&e.sample)?;
        for (a, b) in out.data().iter().zip(e.target.data()) {
            total += (a - b).abs() as f64;
        }
        count += out.data().len();
    }
    Ok(total / count.max(1) as f64)
}
