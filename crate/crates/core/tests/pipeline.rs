//! Small end-to-end runs of both orderings with tiny models.

use std::os::unix::fs::MetadataExt;
use std::path::Path;

use night2day::ablation::dilation_sweep;
use night2day::dataset::{DatasetManifest, DaySide, ImageSource, Layout, PrepareOptions, Split};
use night2day::image::{BinaryMap, Image};
use night2day::metrics::{rmse, ssim, ProjectionEmbedder};
use night2day::nn::GeneratorShape;
use night2day::pipeline::{
    evaluate_run, infer_split, load_outputs, masked_sample, stage_keys, train, Order,
    PipelineConfig, RunDir, StageOutputs, TrainedPipeline,
};
use night2day::synthetic::write_dataset;
use night2day::{Device, Error};

const SIZE: usize = 32;

fn dataset(root: &Path, pairs: usize) -> DatasetManifest {
    write_dataset(&root.join("data"), pairs, 6, SIZE, 9, Layout::Composite).unwrap();
    DatasetManifest::prepare(&PrepareOptions {
        source: ImageSource {
            layout: Layout::Composite,
            root: root.join("data/pairs"),
        },
        mask_dir: root.join("data/masks"),
        seed: 4,
        image_size: SIZE,
        day_side: DaySide::Left,
        fill: 1.0,
        missing_is_dark: true,
    })
    .unwrap()
}

fn tiny_config(order: Order) -> PipelineConfig {
    let g = GeneratorShape {
        base_channels: 4,
        downsamples: 1,
        res_blocks: 1,
    };
    let mut cfg = PipelineConfig {
        order,
        ..Default::default()
    };
    cfg.set_image_size(SIZE);
    for h in [
        &mut cfg.inpainter.hyperparams.edge.generator,
        &mut cfg.inpainter.hyperparams.inpaint.generator,
    ] {
        *h = g;
    }
    cfg.inpainter.hyperparams.edge.disc_channels = 4;
    cfg.inpainter.hyperparams.inpaint.disc_channels = 4;
    cfg.inpainter.batch_size = 2;
    cfg.inpainter.steps.edge = 4;
    cfg.inpainter.steps.inpaint = 4;
    cfg.inpainter.steps.joint = 2;
    let t = &mut cfg.translator;
    t.hyperparams.generator = g;
    t.hyperparams.disc_channels = 4;
    t.hyperparams.num_patches = 16;
    t.hyperparams.nce_dim = 8;
    t.steps = 6;
    cfg
}

fn known_equal(a: &Image, b: &Image, mask: &BinaryMap) -> bool {
    (0..mask.height()).all(|y| {
        (0..mask.width()).all(|x| {
            mask.get(x, y) || (0..3).all(|c| a.get(x, y, c).to_bits() == b.get(x, y, c).to_bits())
        })
    })
}

fn ino(p: &Path) -> u64 {
    std::fs::metadata(p).unwrap().ino()
}

#[test]
fn m1_run_layout_resume_and_seed_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10);
    let cfg = tiny_config(Order::M1);
    let run = RunDir::new(dir.path().join("m1"));
    let p = train(&manifest, &cfg, &run, &Device::Cpu).unwrap();
    for slot in [1, 2] {
        assert!(run.checkpoint(slot).exists());
        assert!(run.stage_record(slot).exists());
    }
    for name in [
        "inpainter_edge",
        "inpainter_inpaint",
        "inpainter_joint",
        "translator",
    ] {
        assert!(run.losses().join(format!("{name}.csv")).exists(), "{name}");
    }
    assert_eq!(PipelineConfig::load(&run.config()).unwrap(), cfg);

    let outputs = infer_split(&p, &manifest, Split::Test, &run).unwrap();
    let test_ids = manifest.splits.ids(Split::Test);
    assert_eq!(
        outputs
            .iter()
            .map(|o| o.pair_id.clone())
            .collect::<Vec<_>>(),
        test_ids
    );
    for o in &outputs {
        assert!(known_equal(&o.intermediate_image, &o.input_image, &o.mask));
    }
    assert_eq!(load_outputs(&run, test_ids).unwrap(), outputs);

    // Unchanged config: both stages are reused without rewriting.
    let (i1, i2) = (ino(&run.checkpoint(1)), ino(&run.checkpoint(2)));
    train(&manifest, &cfg, &run, &Device::Cpu).unwrap();
    assert_eq!((ino(&run.checkpoint(1)), ino(&run.checkpoint(2))), (i1, i2));

    // A new stage-2 seed retrains stage 2 only.
    let stage1 = std::fs::read(run.checkpoint(1)).unwrap();
    let stage2 = std::fs::read(run.checkpoint(2)).unwrap();
    let mut reseeded = cfg.clone();
    reseeded.seeds.stage2 += 1;
    train(&manifest, &reseeded, &run, &Device::Cpu).unwrap();
    assert_eq!(ino(&run.checkpoint(1)), i1);
    assert_eq!(std::fs::read(run.checkpoint(1)).unwrap(), stage1);
    assert_ne!(std::fs::read(run.checkpoint(2)).unwrap(), stage2);

    // The same stage-1 bytes come out of a fresh directory.
    let fresh = RunDir::new(dir.path().join("fresh"));
    train(&manifest, &reseeded, &fresh, &Device::Cpu).unwrap();
    assert_eq!(std::fs::read(fresh.checkpoint(1)).unwrap(), stage1);
}

#[test]
fn m2_run_and_known_region_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10);
    let cfg = tiny_config(Order::M2);
    let run = RunDir::new(dir.path().join("m2"));
    let p = train(&manifest, &cfg, &run, &Device::Cpu).unwrap();
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.stage_record(1)).unwrap()).unwrap();
    assert_eq!(rec["kind"], "translator");
    assert_eq!(rec["order"], "m2");
    let outputs = infer_split(&p, &manifest, Split::Train, &run).unwrap();
    assert_eq!(outputs.len(), manifest.splits.ids(Split::Train).len());
    for o in &outputs {
        assert!(known_equal(&o.final_image, &o.intermediate_image, &o.mask));
    }

    // An m1 config pointed at m2 checkpoints is rejected.
    let mut wrong = cfg.clone();
    wrong.order = Order::M1;
    std::fs::write(run.config(), wrong.to_json().unwrap()).unwrap();
    assert!(matches!(
        TrainedPipeline::load(&run, &Device::Cpu),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn degenerate_mask_and_evaluation_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 20);
    let cfg = tiny_config(Order::M1);
    let run = RunDir::new(dir.path().join("run"));
    let p = train(&manifest, &cfg, &run, &Device::Cpu).unwrap();

    let id = &manifest.splits.ids(Split::Test)[0];
    let pair = manifest.load_pair(id).unwrap();
    let mut sample = masked_sample(&manifest, id, cfg.fill, cfg.canny).unwrap();
    sample.mask = BinaryMap::zeros(SIZE, SIZE);
    sample.incomplete_night = pair.night.clone();
    let out: StageOutputs = p.infer(&sample).unwrap();
    assert_eq!(out.intermediate_image, pair.night);
    assert_eq!(
        out.final_image,
        p.translator.translate(&pair.night).unwrap().quantize()
    );

    infer_split(&p, &manifest, Split::Test, &run).unwrap();
    let reports = evaluate_run(&run, &ProjectionEmbedder::default()).unwrap();
    for r in &reports {
        for (id, s) in &r.per_sample {
            let kind = ["input", "intermediate", "final"][r.phase as usize];
            let img = Image::load_rgb(&run.output(kind, id), None).unwrap();
            let day = manifest.load_pair(id).unwrap().day;
            assert_eq!(s.rmse, rmse(&img, &day).unwrap());
            assert_eq!(s.ssim, ssim(&img, &day).unwrap());
        }
    }
    for n in 1..=3 {
        assert!(run
            .reports()
            .join(format!("phase{n}_per_sample.csv"))
            .exists());
    }

    let sweep = dilation_sweep(&p, &pair, &manifest.load_mask(id).unwrap(), 4).unwrap();
    let plain = p
        .infer(&masked_sample(&manifest, id, cfg.fill, cfg.canny).unwrap())
        .unwrap();
    assert_eq!(sweep.outputs[0], plain);
    assert!(sweep
        .rows
        .windows(2)
        .all(|w| w[1].coverage >= w[0].coverage));
    assert_eq!(
        sweep.rows[0].metrics.rmse,
        rmse(&plain.final_image, &pair.day).unwrap()
    );
    let grid = sweep.grid();
    assert_eq!(
        (grid.width(), grid.height()),
        (5 * SIZE, sweep.rows.len() * SIZE)
    );
}

#[test]
fn stage_keys_follow_data_content_not_location() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = dataset(a.path(), 10);
    let mb = dataset(b.path(), 10);
    assert_ne!(ma.source.root, mb.source.root);
    let cfg = tiny_config(Order::M1);
    assert_eq!(
        stage_keys(&ma, &cfg).unwrap(),
        stage_keys(&mb, &cfg).unwrap()
    );

    let id = &ma.splits.ids(Split::Train)[0];
    let mut night = ma.load_pair(id).unwrap().night;
    night.set(0, 0, 0, 1.0 - night.get(0, 0, 0));
    let day = ma.load_pair(id).unwrap().day;
    let composite = Image::from_fn(2 * SIZE, SIZE, 3, |x, y, c| {
        if x < SIZE {
            day.get(x, y, c)
        } else {
            night.get(x - SIZE, y, c)
        }
    });
    composite.save_png(&ma.source.pair_files(id)[0]).unwrap();
    let [k1, _] = stage_keys(&ma, &cfg).unwrap();
    assert_ne!(k1, stage_keys(&mb, &cfg).unwrap()[0]);
}
