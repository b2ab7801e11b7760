//! Run configuration and the command implementations behind the CLI.
//!
//! Every command writes only under the configured output directory.

pub mod config;
pub mod train;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{Augmentation, RunConfig, Scheduler};
pub use train::{load_datasets, train, Datasets, TrainOutcome};

use crate::data::image_io::{load_gray, save_gray};
use crate::data::{generate_synthetic, DatasetManifest, Gray, SyntheticVeinSpec};
use crate::engine::{Checkpoint, Mode, Precision, ENGINE_VERSION};
use crate::eval::cam::activation_map;
use crate::eval::metrics::argmax;
use crate::eval::{
    embed, evaluate, occlusion_sweep, score_pairs, sweep_roc, EpochRecord, OcclusionReport, PairPolicy, RocCurve,
    ScoreSet,
};
use crate::laknet::{LaKNet, LaKNetConfig};
use crate::mix::preview::write_mask_preview;
use crate::mix::{build_star_mask, MixParams, MixPath};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const BEST_CHECKPOINT_FILE: &str = "best.bin";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Model-config file stored next to a checkpoint.
pub fn model_sidecar(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("model")
}

fn write_checkpoint(ck: &Checkpoint, model: &LaKNetConfig, path: &Path) -> Result<()> {
    ck.write(path)?;
    write(&model_sidecar(path), &model.to_text())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Resolved configuration in the config-file format.
    pub config: String,
    pub precision: Precision,
    pub engine_version: String,
    pub history: Vec<EpochRecord>,
    pub final_top1: Option<f64>,
    pub final_top1_short_history: bool,
    pub best_epoch: Option<usize>,
    pub best_top1: Option<f64>,
    pub eer: Option<f64>,
    pub star_batches: usize,
    pub vanilla_batches: usize,
    pub checkpoint: String,
    pub best_checkpoint: Option<String>,
    pub wall_clock_secs: f64,
}

fn cmd_train_typed<T: Scalar>(cfg: &RunConfig, log: &mut dyn FnMut(&EpochRecord)) -> Result<RunRecord> {
    let start = Instant::now();
    let data = load_datasets(cfg)?;
    ensure_dir(&cfg.out)?;
    write(&cfg.out.join("config.ini"), &cfg.to_text())?;
    let out = train::<T>(cfg, &data, |r| log(r))?;
    write(&cfg.out.join("history.csv"), &out.history.to_csv())?;
    let ck_path = cfg.out.join(CHECKPOINT_FILE);
    write_checkpoint(&out.model.to_checkpoint(cfg.seed), &cfg.model, &ck_path)?;
    let best_path = match &out.best {
        Some((_, _, ck)) => {
            let p = cfg.out.join(BEST_CHECKPOINT_FILE);
            write_checkpoint(ck, &cfg.model, &p)?;
            Some(p.display().to_string())
        }
        None => None,
    };
    let fin = (!out.history.is_empty()).then(|| out.history.final_top1()).transpose()?;
    let record = RunRecord {
        config: cfg.to_text(),
        precision: cfg.precision,
        engine_version: ENGINE_VERSION.to_string(),
        history: out.history.epochs.clone(),
        final_top1: fin.map(|f| f.value),
        final_top1_short_history: fin.is_some_and(|f| f.short_history),
        best_epoch: out.best.as_ref().map(|b| b.0),
        best_top1: out.best.as_ref().map(|b| b.1),
        eer: None,
        star_batches: out.mix_stats.star_batches,
        vanilla_batches: out.mix_stats.vanilla_batches,
        checkpoint: ck_path.display().to_string(),
        best_checkpoint: best_path,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&record).expect("serializable record");
    write(&cfg.out.join("run.json"), &(json + "\n"))?;
    Ok(record)
}

/// Trains per `cfg` and writes `config.ini`, `history.csv`, checkpoints
/// and `run.json` into `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, log: &mut dyn FnMut(&EpochRecord)) -> Result<RunRecord> {
    match cfg.precision {
        Precision::Test => cmd_train_typed::<f64>(cfg, log),
        Precision::Train => cmd_train_typed::<f32>(cfg, log),
    }
}

fn resolve_checkpoint(cfg: &RunConfig, checkpoint: Option<&Path>) -> PathBuf {
    checkpoint.map_or_else(|| cfg.out.join(CHECKPOINT_FILE), Path::to_path_buf)
}

/// Builds the configured model and loads `checkpoint` into it. A sidecar
/// model config, when present, must agree with the run config.
pub fn load_model<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<LaKNet<T>> {
    let sidecar = model_sidecar(checkpoint);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let saved = LaKNetConfig::parse_with(cfg.model.clone(), &text)?;
        let diffs: Vec<String> = saved
            .entries()
            .into_iter()
            .zip(cfg.model.entries())
            .filter(|(a, b)| a.1 != b.1)
            .map(|((k, a), (_, b))| format!("{k} (checkpoint {a}, config {b})"))
            .collect();
        if !diffs.is_empty() {
            return Err(Error::Checkpoint(format!(
                "checkpoint model config differs from run config: {}",
                diffs.join("; ")
            )));
        }
    }
    let mut model = LaKNet::<T>::new(cfg.model.clone(), cfg.seed)?;
    model.load_checkpoint(&Checkpoint::read(checkpoint)?)?;
    model.set_mode(Mode::Eval);
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    pub images: usize,
    pub checkpoint: String,
}

fn cmd_eval_typed<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    let data = load_datasets(cfg)?;
    let mut model = load_model::<T>(cfg, checkpoint)?;
    let top1 = evaluate(&mut model, &data.test.images, &data.test.labels, cfg.train.eval_batch)?;
    let report = EvalReport {
        top1,
        images: data.test.len(),
        checkpoint: checkpoint.display().to_string(),
    };
    ensure_dir(&cfg.out)?;
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    write(&cfg.out.join("eval.json"), &(json + "\n"))?;
    Ok(report)
}

/// Test-split top-1 of a checkpoint, written to `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let ck = resolve_checkpoint(cfg, checkpoint);
    match cfg.precision {
        Precision::Test => cmd_eval_typed::<f64>(cfg, &ck),
        Precision::Train => cmd_eval_typed::<f32>(cfg, &ck),
    }
}

fn cmd_roc_typed<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<(RocCurve, ScoreSet)> {
    let data = load_datasets(cfg)?;
    let mut model = load_model::<T>(cfg, checkpoint)?;
    let emb = embed(&mut model, &data.test.images, cfg.train.eval_batch)?;
    let policy = PairPolicy {
        impostor_ratio: cfg.eval.impostor_ratio,
        max_genuine: cfg.eval.max_genuine,
        seed: cfg.seed,
    };
    let scores = score_pairs(&emb, &data.test.labels, &policy)?;
    let roc = sweep_roc(&scores, cfg.eval.thresholds)?;
    ensure_dir(&cfg.out)?;
    write(&cfg.out.join("roc.csv"), &roc.to_csv())?;
    write(&cfg.out.join("eer.json"), &roc.eer_summary(&scores))?;
    Ok((roc, scores))
}

/// Cosine-embedding verification on the test split: `roc.csv` and `eer.json`.
pub fn cmd_roc(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(RocCurve, ScoreSet)> {
    let ck = resolve_checkpoint(cfg, checkpoint);
    match cfg.precision {
        Precision::Test => cmd_roc_typed::<f64>(cfg, &ck),
        Precision::Train => cmd_roc_typed::<f32>(cfg, &ck),
    }
}

fn cmd_occlusion_typed<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<OcclusionReport> {
    let data = load_datasets(cfg)?;
    let mut model = load_model::<T>(cfg, checkpoint)?;
    let report = occlusion_sweep(
        &mut model,
        &data.test.images,
        &data.test.labels,
        &cfg.eval.occlusion_ratios,
        cfg.eval.patch,
        cfg.seed,
        cfg.train.eval_batch,
    )?;
    ensure_dir(&cfg.out)?;
    write(&cfg.out.join("occlusion.csv"), &report.to_csv())?;
    Ok(report)
}

/// Top-1 under random zero patches for each configured ratio: `occlusion.csv`.
pub fn cmd_occlusion(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<OcclusionReport> {
    let ck = resolve_checkpoint(cfg, checkpoint);
    match cfg.precision {
        Precision::Test => cmd_occlusion_typed::<f64>(cfg, &ck),
        Precision::Train => cmd_occlusion_typed::<f32>(cfg, &ck),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamRequest<'a> {
    pub checkpoint: Option<&'a Path>,
    /// Input image; the first test image when absent.
    pub image: Option<&'a Path>,
    /// Target class; the predicted class when absent.
    pub class: Option<usize>,
    pub stage: Option<usize>,
}

fn cmd_cam_typed<T: Scalar>(cfg: &RunConfig, req: &CamRequest, checkpoint: &Path) -> Result<(Gray, usize, PathBuf)> {
    let image = match req.image {
        Some(p) => load_gray(p, cfg.image_side())?,
        None => load_datasets(cfg)?.test.images.swap_remove(0),
    };
    let mut model = load_model::<T>(cfg, checkpoint)?;
    let class = match req.class {
        Some(c) => c,
        None => {
            let (logits, _) = model.predict(image.to_tensor::<T>().reshape([1, 1, image.side, image.side])?)?;
            argmax(logits.data())
        }
    };
    let map = activation_map(&mut model, &image, class, req.stage)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("cam.png");
    save_gray(&path, map.side, map.side, &map.to_u8())?;
    Ok((map, class, path))
}

/// Gradient-weighted activation map of one image, written to `cam.png`.
pub fn cmd_cam(cfg: &RunConfig, req: &CamRequest) -> Result<(Gray, usize, PathBuf)> {
    let ck = resolve_checkpoint(cfg, req.checkpoint);
    match cfg.precision {
        Precision::Test => cmd_cam_typed::<f64>(cfg, req, &ck),
        Precision::Train => cmd_cam_typed::<f32>(cfg, req, &ck),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewInfo {
    pub lambda: f64,
    pub lambda_hat: f64,
    pub path: MixPath,
    pub mask_file: PathBuf,
    pub blend_file: Option<PathBuf>,
}

/// Writes `starmask_l<lambda>.png` (+ `.txt`) for every ratio and, given two
/// images, the blend each ratio would produce on its routed path.
pub fn cmd_mix_preview(
    lambdas: &[f64],
    side: usize,
    params: &MixParams,
    out: &Path,
    pair: Option<(&Path, &Path)>,
) -> Result<Vec<PreviewInfo>> {
    params.validate()?;
    let images = pair.map(|(a, b)| Ok::<_, Error>((load_gray(a, side)?, load_gray(b, side)?))).transpose()?;
    ensure_dir(out)?;
    let mut infos = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mask = build_star_mask(lambda, side, side)?;
        let path = params.select_path(lambda);
        let mask_file = out.join(format!("starmask_l{lambda:.3}.png"));
        write_mask_preview(&mask, params, &mask_file)?;
        let blend_file = match &images {
            Some((a, b)) => {
                let px: Vec<f64> = a
                    .pixels
                    .iter()
                    .zip(&b.pixels)
                    .zip(&mask.g)
                    .map(|((&x, &y), &g)| {
                        let w = if path == MixPath::Star { g } else { lambda };
                        w * x + (1.0 - w) * y
                    })
                    .collect();
                let f = out.join(format!("blend_l{lambda:.3}.png"));
                save_gray(&f, side, side, &Gray::new(side, px)?.to_u8())?;
                Some(f)
            }
            None => None,
        };
        infos.push(PreviewInfo {
            lambda,
            lambda_hat: mask.lambda_hat,
            path,
            mask_file,
            blend_file,
        });
    }
    Ok(infos)
}

/// Writes the synthetic dataset tree and its `manifest.txt` under `out`.
pub fn cmd_gen_synthetic(spec: &SyntheticVeinSpec, out: &Path) -> Result<DatasetManifest> {
    generate_synthetic(spec, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.out = out.to_path_buf();
        cfg.precision = Precision::Test;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 8;
        cfg.synthetic.num_classes = 3;
        cfg.synthetic.images_per_class = 6;
        cfg.model.num_classes = 3;
        cfg
    }

    #[test]
    fn train_then_evaluate_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let rec = cmd_train(&cfg, &mut |_| {}).unwrap();
        assert_eq!(rec.history.len(), 2);
        assert!(rec.final_top1_short_history);
        for f in ["history.csv", "run.json", "config.ini", "checkpoint.bin", "checkpoint.model", "best.bin"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(RunConfig::load(&dir.path().join("config.ini")).unwrap(), cfg);
        let a = cmd_eval(&cfg, None).unwrap();
        let first = std::fs::read(dir.path().join("eval.json")).unwrap();
        let b = cmd_eval(&cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(first, std::fs::read(dir.path().join("eval.json")).unwrap());
        // evaluation reads the same weights the trainer finished with
        let last = rec.history.last().unwrap().top1;
        assert!((a.top1 - last).abs() < 100.0 / 9.0 + 1e-9);

        let mut other = cfg.clone();
        other.model.num_classes = 4;
        other.synthetic.num_classes = 4;
        let err = cmd_eval(&other, Some(&dir.path().join(CHECKPOINT_FILE))).unwrap_err();
        assert!(err.to_string().contains("num_classes (checkpoint 3, config 4)"), "{err}");
    }

    #[test]
    fn mix_preview_reports_paths() {
        let dir = tempfile::tempdir().unwrap();
        let infos = cmd_mix_preview(&[0.2, 0.3, 0.5], 32, &MixParams::default(), dir.path(), None).unwrap();
        let paths: Vec<MixPath> = infos.iter().map(|i| i.path).collect();
        assert_eq!(paths, vec![MixPath::Vanilla, MixPath::Star, MixPath::Star]);
        assert!(infos.iter().all(|i| i.mask_file.exists()));
        assert!(cmd_mix_preview(&[1.0], 32, &MixParams::default(), dir.path(), None).is_err());
    }
}
