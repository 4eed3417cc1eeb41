//! Two-stage composition in either order.
//!
//! `M1` inpaints the masked night image and translates the completed image
//! to day. `M2` translates the incomplete night image first, re-opens the
//! masked region in the day-domain result, and inpaints it against the day
//! ground truth.
//!
//! A run directory holds:
//!
//! ```text
//! run/config.json            effective pipeline config
//! run/manifest.json          dataset manifest the run was trained on
//! run/stage{1,2}/            checkpoint.safetensors + stage.json
//! run/losses/*.csv           per-step losses of every training stage
//! run/outputs/{input,intermediate,final,mask}/<pair_id>.png
//! run/reports/               evaluation reports
//! ```
//!
//! Each stage directory records a content hash of everything the stage
//! depends on; training skips a stage whose recorded hash matches.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::Device;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    apply_mask, ensure_exists, mask_with_reference_edges, write_atomic, DatasetManifest,
    MaskedNightSample, Split, DEFAULT_FILL,
};
use crate::edges::{canny_edges, CannyParams};
use crate::error::{bail_dim, Error, Result};
use crate::image::{Image, Mask};
use crate::inpainter::{
    train_stages, InpaintExample, InpainterCheckpoint, InpainterTrainConfig, TrainingStage,
};
use crate::metrics::{evaluate_phases, report::write_phase_reports, Embedder, PhaseReport};
use crate::nn::LossLog;
use crate::translator::{train_translator, TranslatorCheckpoint, TranslatorTrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Inpaint, then translate.
    #[default]
    M1,
    /// Translate, then inpaint.
    M2,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::M1 => "m1",
            Order::M2 => "m2",
        }
    }

    /// Checkpoint kinds of stage 1 and stage 2.
    pub fn stage_kinds(self) -> [&'static str; 2] {
        match self {
            Order::M1 => [InpainterCheckpoint::KIND, TranslatorCheckpoint::KIND],
            Order::M2 => [TranslatorCheckpoint::KIND, InpainterCheckpoint::KIND],
        }
    }
}

impl std::str::FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Order::M1),
            "m2" => Ok(Order::M2),
            _ => Err(Error::InvalidArgument(format!(
                "unknown order `{s}` (expected m1 or m2)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Split and mask assignment.
    pub data: u64,
    pub stage1: u64,
    pub stage2: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 2023,
            stage1: 1,
            stage2: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub order: Order,
    pub image_size: usize,
    pub seeds: Seeds,
    pub fill: f32,
    pub canny: CannyParams,
    pub inpainter: InpainterTrainConfig,
    pub translator: TranslatorTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            order: Order::M1,
            image_size: 64,
            seeds: Seeds::default(),
            fill: DEFAULT_FILL,
            canny: CannyParams::default(),
            inpainter: InpainterTrainConfig::default(),
            translator: TranslatorTrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Sets the image size of the pipeline and of both stage models.
    pub fn set_image_size(&mut self, size: usize) {
        self.image_size = size;
        self.inpainter.hyperparams.image_size = size;
        self.translator.hyperparams.image_size = size;
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.inpainter.hyperparams.image_size,
            self.translator.hyperparams.image_size,
        ];
        if sizes.iter().any(|&s| s != self.image_size) {
            return Err(Error::InvalidArgument(format!(
                "stage image sizes {sizes:?} differ from image_size {}",
                self.image_size
            )));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::InvalidArgument(format!(
                "fill {} outside [0, 1]",
                self.fill
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One sample's images through both stages. All images are 8-bit quantized,
/// exactly as persisted.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutputs {
    pub pair_id: String,
    pub input_image: Image,
    /// Inpainted night image (M1) or translated incomplete image (M2).
    pub intermediate_image: Image,
    pub final_image: Image,
    pub mask: Mask,
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

pub const OUTPUT_KINDS: [&str; 4] = ["input", "intermediate", "final", "mask"];

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn stage_dir(&self, slot: usize) -> PathBuf {
        self.root.join(format!("stage{slot}"))
    }

    pub fn checkpoint(&self, slot: usize) -> PathBuf {
        self.stage_dir(slot).join("checkpoint.safetensors")
    }

    pub fn stage_record(&self, slot: usize) -> PathBuf {
        self.stage_dir(slot).join("stage.json")
    }

    pub fn losses(&self) -> PathBuf {
        self.root.join("losses")
    }

    pub fn output(&self, kind: &str, pair_id: &str) -> PathBuf {
        self.root
            .join("outputs")
            .join(kind)
            .join(format!("{pair_id}.png"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Completion marker of a trained stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub order: Order,
    pub slot: usize,
    pub kind: String,
    /// Hex SHA-256 of the stage's inputs.
    pub key: String,
    pub checkpoint_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checkpoint types a stage can hold.
pub trait StageModel: Sized {
    const KIND: &'static str;
    fn to_bytes(&self) -> Result<Vec<u8>>;
    fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self>;
}

impl StageModel for InpainterCheckpoint {
    const KIND: &'static str = "inpainter";
    fn to_bytes(&self) -> Result<Vec<u8>> {
        InpainterCheckpoint::to_bytes(self)
    }
    fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        InpainterCheckpoint::from_bytes(bytes, device)
    }
}

impl StageModel for TranslatorCheckpoint {
    const KIND: &'static str = "translator";
    fn to_bytes(&self) -> Result<Vec<u8>> {
        TranslatorCheckpoint::to_bytes(self)
    }
    fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        TranslatorCheckpoint::from_bytes(bytes, device)
    }
}

fn read_record(path: &Path) -> Result<Option<StageRecord>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Loads the stage checkpoint when its record matches `key` and the file is
/// intact; otherwise trains it, writes the checkpoint and loss logs, and
/// then the record.
fn load_or_train<M: StageModel>(
    run: &RunDir,
    order: Order,
    slot: usize,
    key: &str,
    device: &Device,
    train: impl FnOnce() -> Result<(M, Vec<(String, LossLog)>)>,
) -> Result<M> {
    let ckpt_path = run.checkpoint(slot);
    if let Some(rec) = read_record(&run.stage_record(slot))? {
        if rec.key == key && rec.kind == M::KIND && ckpt_path.exists() {
            let bytes = std::fs::read(&ckpt_path).map_err(|e| Error::io(&ckpt_path, e))?;
            if sha256_hex(&bytes) == rec.checkpoint_sha256 {
                log::info!("stage {slot} ({}) up to date, skipping", M::KIND);
                return M::from_bytes(&bytes, device);
            }
        }
    }
    let _ = std::fs::remove_file(run.stage_record(slot));
    let (model, logs) = train()?;
    let bytes = model.to_bytes()?;
    write_atomic(&ckpt_path, &bytes)?;
    for (name, log) in &logs {
        log.save(&run.losses().join(format!("{name}.csv")))?;
    }
    let rec = StageRecord {
        order,
        slot,
        kind: M::KIND.into(),
        key: key.into(),
        checkpoint_sha256: sha256_hex(&bytes),
    };
    write_atomic(
        &run.stage_record(slot),
        (serde_json::to_string_pretty(&rec)? + "\n").as_bytes(),
    )?;
    Ok(model)
}

/// Manifest settings plus hashes of the training pair and mask files, so a
/// dataset moved to another directory keeps its key.
fn data_fingerprint(manifest: &DatasetManifest) -> Result<serde_json::Value> {
    let file_hash = |path: &Path| -> Result<String> {
        ensure_exists(path)?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    };
    let mut train = BTreeMap::new();
    for id in manifest.splits.ids(Split::Train) {
        let mut hashes = Vec::new();
        for path in manifest.source.pair_files(id) {
            hashes.push(file_hash(&path)?);
        }
        let mask = manifest
            .mask_assignment
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no mask assigned to `{id}`")))?;
        hashes.push(file_hash(mask)?);
        train.insert(id.clone(), hashes);
    }
    Ok(serde_json::json!({
        "seed": manifest.seed,
        "image_size": manifest.image_size,
        "day_side": manifest.day_side,
        "fill": manifest.fill,
        "missing_is_dark": manifest.missing_is_dark,
        "layout": manifest.source.layout,
        "splits": manifest.splits,
        "train": train,
    }))
}

/// Content keys of the two stages. Stage 1 depends on the data, the masking
/// parameters, its own config and seed; stage 2 additionally on stage 1.
pub fn stage_keys(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<[String; 2]> {
    let (cfg1, cfg2) = match config.order {
        Order::M1 => (
            serde_json::to_value(config.inpainter)?,
            serde_json::to_value(&config.translator)?,
        ),
        Order::M2 => (
            serde_json::to_value(&config.translator)?,
            serde_json::to_value(config.inpainter)?,
        ),
    };
    let k1 = serde_json::json!({
        "order": config.order,
        "image_size": config.image_size,
        "fill": config.fill,
        "canny": config.canny,
        "seed": config.seeds.stage1,
        "config": cfg1,
        "data": data_fingerprint(manifest)?,
    });
    let k1 = sha256_hex(serde_json::to_string(&k1)?.as_bytes());
    let k2 = serde_json::json!({ "stage1": k1, "seed": config.seeds.stage2, "config": cfg2 });
    let k2 = sha256_hex(serde_json::to_string(&k2)?.as_bytes());
    Ok([k1, k2])
}

/// Both trained stages of one run.
pub struct TrainedPipeline {
    pub order: Order,
    pub fill: f32,
    pub canny: CannyParams,
    pub inpainter: InpainterCheckpoint,
    pub translator: TranslatorCheckpoint,
}

struct TrainingItem {
    sample: MaskedNightSample,
    night: Image,
    day: Image,
}

fn load_split(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    split: Split,
) -> Result<Vec<TrainingItem>> {
    manifest
        .splits
        .ids(split)
        .iter()
        .map(|id| {
            let pair = manifest.load_pair(id)?;
            let mask = manifest.load_mask(id)?;
            let sample = apply_mask(id, &pair.night, &mask, config.fill, config.canny)?;
            Ok(TrainingItem {
                sample,
                night: pair.night,
                day: pair.day,
            })
        })
        .collect()
}

const INPAINTER_STAGES: [TrainingStage; 3] = [
    TrainingStage::Edge,
    TrainingStage::Inpaint,
    TrainingStage::Joint,
];

fn train_inpainter_logged(
    examples: &[InpaintExample],
    config: &InpainterTrainConfig,
    seed: u64,
    device: &Device,
) -> Result<(InpainterCheckpoint, Vec<(String, LossLog)>)> {
    let (ckpt, logs) = train_stages(None, examples, config, &INPAINTER_STAGES, seed, device)?;
    let logs = logs
        .into_iter()
        .map(|(s, l)| (format!("inpainter_{}", s.name()), l))
        .collect();
    Ok((ckpt, logs))
}

fn prepare_run(run: &RunDir, manifest: &DatasetManifest, config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    if manifest.image_size != config.image_size {
        return Err(Error::InvalidArgument(format!(
            "manifest image size {} differs from config image size {}",
            manifest.image_size, config.image_size
        )));
    }
    if manifest.splits.ids(Split::Train).is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    if run.config().exists() {
        let previous = PipelineConfig::load(&run.config())?;
        if previous.order != config.order {
            return Err(Error::InvalidArgument(format!(
                "run directory {} holds an {} run; refusing to train {} into it",
                run.root.display(),
                previous.order.name(),
                config.order.name()
            )));
        }
    }
    write_atomic(&run.config(), config.to_json()?.as_bytes())?;
    manifest.save(&run.manifest())
}

/// Inpainter on masked nights, then translator from the inpainted training
/// images to the day ground truth.
pub fn train_m1(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    run: &RunDir,
    device: &Device,
) -> Result<(InpainterCheckpoint, TranslatorCheckpoint)> {
    if config.order != Order::M1 {
        return Err(Error::InvalidArgument(
            "train_m1 called with order m2".into(),
        ));
    }
    prepare_run(run, manifest, config)?;
    let [k1, k2] = stage_keys(manifest, config)?;
    let items = load_split(manifest, config, Split::Train)?;
    let inpainter = load_or_train(run, Order::M1, 1, &k1, device, || {
        let examples: Vec<InpaintExample> = items
            .iter()
            .map(|it| InpaintExample {
                sample: it.sample.clone(),
                target: it.night.clone(),
            })
            .collect();
        train_inpainter_logged(&examples, &config.inpainter, config.seeds.stage1, device)
    })?;
    let translator = load_or_train(run, Order::M1, 2, &k2, device, || {
        let completed = items
            .iter()
            .map(|it| Ok(inpainter.inpaint(&it.sample)?.quantize()))
            .collect::<Result<Vec<_>>>()?;
        let days: Vec<Image> = items.iter().map(|it| it.day.clone()).collect();
        let (t, log) = train_translator(
            None,
            &completed,
            &days,
            &config.translator,
            config.seeds.stage2,
            device,
        )?;
        Ok((t, vec![("translator".to_string(), log)]))
    })?;
    Ok((inpainter, translator))
}

/// Day-domain inpainting input: the translated image with the masked region
/// re-filled, ground-truth edges taken from the day image.
fn day_domain_sample(
    pair_id: &str,
    translated: &Image,
    mask: &Mask,
    day: &Image,
    fill: f32,
    canny: CannyParams,
) -> Result<MaskedNightSample> {
    let edge_gt = canny_edges(&day.luminance(), canny)?;
    mask_with_reference_edges(pair_id, translated, mask, fill, edge_gt, canny)
}

/// Translator from incomplete nights to day ground truth, then an inpainter
/// over the translated images with holes against the day ground truth.
pub fn train_m2(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    run: &RunDir,
    device: &Device,
) -> Result<(TranslatorCheckpoint, InpainterCheckpoint)> {
    if config.order != Order::M2 {
        return Err(Error::InvalidArgument(
            "train_m2 called with order m1".into(),
        ));
    }
    prepare_run(run, manifest, config)?;
    let [k1, k2] = stage_keys(manifest, config)?;
    let items = load_split(manifest, config, Split::Train)?;
    let translator = load_or_train(run, Order::M2, 1, &k1, device, || {
        let incomplete: Vec<Image> = items
            .iter()
            .map(|it| it.sample.incomplete_night.clone())
            .collect();
        let days: Vec<Image> = items.iter().map(|it| it.day.clone()).collect();
        let (t, log) = train_translator(
            None,
            &incomplete,
            &days,
            &config.translator,
            config.seeds.stage1,
            device,
        )?;
        Ok((t, vec![("translator".to_string(), log)]))
    })?;
    let inpainter = load_or_train(run, Order::M2, 2, &k2, device, || {
        let examples = items
            .iter()
            .map(|it| {
                let translated = translator
                    .translate(&it.sample.incomplete_night)?
                    .quantize();
                let sample = day_domain_sample(
                    &it.sample.pair_id,
                    &translated,
                    &it.sample.mask,
                    &it.day,
                    config.fill,
                    config.canny,
                )?;
                Ok(InpaintExample {
                    sample,
                    target: it.day.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        train_inpainter_logged(&examples, &config.inpainter, config.seeds.stage2, device)
    })?;
    Ok((translator, inpainter))
}

/// Trains whichever order `config` names.
pub fn train(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    run: &RunDir,
    device: &Device,
) -> Result<TrainedPipeline> {
    let (inpainter, translator) = match config.order {
        Order::M1 => train_m1(manifest, config, run, device)?,
        Order::M2 => {
            let (t, i) = train_m2(manifest, config, run, device)?;
            (i, t)
        }
    };
    Ok(TrainedPipeline {
        order: config.order,
        fill: config.fill,
        canny: config.canny,
        inpainter,
        translator,
    })
}

impl TrainedPipeline {
    /// Loads both stages of a trained run, checking that each stage holds
    /// the model kind its order requires.
    pub fn load(run: &RunDir, device: &Device) -> Result<Self> {
        let config = PipelineConfig::load(&run.config())?;
        let kinds = config.order.stage_kinds();
        for (slot, kind) in [1, 2].into_iter().zip(kinds) {
            let rec = read_record(&run.stage_record(slot))?
                .ok_or_else(|| Error::MissingArtifact(run.stage_record(slot)))?;
            if rec.kind != kind || rec.order != config.order {
                return Err(Error::Checkpoint(format!(
                    "stage {slot} holds a {} checkpoint for {}, but {} needs a {kind}",
                    rec.kind,
                    rec.order.name(),
                    config.order.name()
                )));
            }
        }
        let (inp_slot, tr_slot) = match config.order {
            Order::M1 => (1, 2),
            Order::M2 => (2, 1),
        };
        Ok(Self {
            order: config.order,
            fill: config.fill,
            canny: config.canny,
            inpainter: InpainterCheckpoint::load(&run.checkpoint(inp_slot), device)?,
            translator: TranslatorCheckpoint::load(&run.checkpoint(tr_slot), device)?,
        })
    }

    pub fn image_size(&self) -> usize {
        self.inpainter.image_size()
    }

    /// Runs both stages on one sample.
    pub fn infer(&self, sample: &MaskedNightSample) -> Result<StageOutputs> {
        if self.inpainter.image_size() != self.translator.image_size() {
            bail_dim!(
                "inpainter ({}) and translator ({}) were trained at different sizes",
                self.inpainter.image_size(),
                self.translator.image_size()
            );
        }
        let (intermediate, fin) = match self.order {
            Order::M1 => {
                let completed = self.inpainter.inpaint(sample)?.quantize();
                let day = self.translator.translate(&completed)?.quantize();
                (completed, day)
            }
            Order::M2 => {
                let translated = self
                    .translator
                    .translate(&sample.incomplete_night)?
                    .quantize();
                let holed = apply_mask(
                    &sample.pair_id,
                    &translated,
                    &sample.mask,
                    self.fill,
                    self.canny,
                )?;
                let completed = self.inpainter.inpaint(&holed)?.quantize();
                (translated, completed)
            }
        };
        Ok(StageOutputs {
            pair_id: sample.pair_id.clone(),
            input_image: sample.incomplete_night.quantize(),
            intermediate_image: intermediate,
            final_image: fin,
            mask: sample.mask.clone(),
        })
    }
}

/// Masked sample for `id` as the pipeline sees it at inference.
pub fn masked_sample(
    manifest: &DatasetManifest,
    id: &str,
    fill: f32,
    canny: CannyParams,
) -> Result<MaskedNightSample> {
    let pair = manifest.load_pair(id)?;
    let mask = manifest.load_mask(id)?;
    apply_mask(id, &pair.night, &mask, fill, canny)
}

pub fn save_outputs(run: &RunDir, out: &StageOutputs) -> Result<()> {
    out.input_image
        .save_png(&run.output("input", &out.pair_id))?;
    out.intermediate_image
        .save_png(&run.output("intermediate", &out.pair_id))?;
    out.final_image
        .save_png(&run.output("final", &out.pair_id))?;
    out.mask.save_png(&run.output("mask", &out.pair_id))
}

/// Runs inference on every id of `split` and persists the outputs.
pub fn infer_split(
    pipeline: &TrainedPipeline,
    manifest: &DatasetManifest,
    split: Split,
    run: &RunDir,
) -> Result<Vec<StageOutputs>> {
    let ids = manifest.splits.ids(split);
    if ids.is_empty() {
        return Err(Error::InvalidArgument("split is empty".into()));
    }
    let mut outputs = Vec::with_capacity(ids.len());
    for id in ids {
        let sample = masked_sample(manifest, id, pipeline.fill, pipeline.canny)?;
        let out = pipeline.infer(&sample)?;
        save_outputs(run, &out)?;
        outputs.push(out);
    }
    Ok(outputs)
}

/// Reads persisted outputs of `ids` back from the run directory.
pub fn load_outputs(run: &RunDir, ids: &[String]) -> Result<Vec<StageOutputs>> {
    ids.iter()
        .map(|id| {
            let load = |kind: &str| -> Result<Image> {
                let p = run.output(kind, id);
                if !p.exists() {
                    return Err(Error::MissingArtifact(p));
                }
                Image::load_rgb(&p, None)
            };
            let mask_path = run.output("mask", id);
            if !mask_path.exists() {
                return Err(Error::MissingArtifact(mask_path));
            }
            let mask = Mask::threshold(&Image::from_luma8(&image::open(&mask_path)?.to_luma8()))?;
            Ok(StageOutputs {
                pair_id: id.clone(),
                input_image: load("input")?,
                intermediate_image: load("intermediate")?,
                final_image: load("final")?,
                mask,
            })
        })
        .collect()
}

/// Scores the persisted test-split outputs of a run against the day ground
/// truth and writes the reports under `run/reports`.
pub fn evaluate_run(run: &RunDir, embedder: &dyn Embedder) -> Result<[PhaseReport; 3]> {
    let manifest = DatasetManifest::load(&run.manifest())?;
    let ids = manifest.splits.ids(Split::Test).to_vec();
    let outputs = load_outputs(run, &ids)?;
    let mut day_gt = BTreeMap::new();
    for id in &ids {
        day_gt.insert(id.clone(), manifest.load_pair(id)?.day);
    }
    let reports = evaluate_phases(&outputs, &day_gt, embedder)?;
    write_phase_reports(&run.reports(), &reports)?;
    Ok(reports)
}
