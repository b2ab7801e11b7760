use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use starlk::data::SyntheticVeinSpec;
use starlk::engine::Precision;
use starlk::mix::MixParams;
use starlk::run::{self, CamRequest, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "starlk", version, about = "Train and evaluate large-kernel vein classifiers")]
struct Cli {
    /// Run config file (sectioned key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; every command writes only below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_precision)]
    precision: Option<Precision>,
    /// Override a config entry, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write history.csv, checkpoints and run.json.
    Train,
    /// Test-split top-1 of a checkpoint.
    Eval(CheckpointArg),
    /// Verification ROC and EER from cosine embedding scores.
    Roc(CheckpointArg),
    /// Accuracy under random square occlusions.
    Occlusion(OcclusionArgs),
    /// Activation heatmap for one image.
    Cam(CamArgs),
    /// Write StarMask images for a set of mixing ratios.
    MixPreview(PreviewArgs),
    /// Generate a synthetic vein dataset tree.
    GenSynthetic(SynthArgs),
}

#[derive(Debug, Args)]
struct CheckpointArg {
    /// Checkpoint file; defaults to <out>/checkpoint.bin.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OcclusionArgs {
    #[command(flatten)]
    ck: CheckpointArg,
    /// Comma-separated occluded-area fractions.
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    patch: Option<usize>,
}

#[derive(Debug, Args)]
struct CamArgs {
    #[command(flatten)]
    ck: CheckpointArg,
    /// Input image; defaults to the first test image.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Target class; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    /// Stage whose activations are used (0-based).
    #[arg(long)]
    stage: Option<usize>,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    /// Comma-separated mixing ratios in (0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    threshold_lo: Option<f64>,
    #[arg(long)]
    threshold_hi: Option<f64>,
    /// Two images to blend with each mask.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    images: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    images_per_class: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    veins_min: Option<usize>,
    #[arg(long)]
    veins_max: Option<usize>,
    #[arg(long)]
    thickness_min: Option<f64>,
    #[arg(long)]
    thickness_max: Option<f64>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long = "synth-seed")]
    synth_seed: Option<u64>,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: starlk::Error| e.to_string())
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (path, value) = o.split_once('=').with_context(|| format!("--set {o:?}: expected SECTION.KEY=VALUE"))?;
        let (section, key) = path
            .split_once('.')
            .with_context(|| format!("--set {o:?}: expected SECTION.KEY=VALUE"))?;
        cfg.set(section.trim(), key.trim(), value.trim())
            .map_err(|e| anyhow::anyhow!("--set {o:?}: {e}"))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_spec(cfg: &RunConfig, a: &SynthArgs) -> SyntheticVeinSpec {
    let mut s = cfg.synthetic.clone();
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { s.$f = v; })* };
    }
    take!(num_classes, images_per_class, side, veins_min, veins_max, thickness_min, thickness_max, contrast, noise);
    if let Some(v) = a.synth_seed {
        s.seed = v;
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let ck = |a: &CheckpointArg| a.checkpoint.clone();
    match &cli.command {
        Command::Train => {
            let rec = run::cmd_train(&cfg, &mut |r| {
                println!("epoch {:>4}  loss {:.4}  top1 {:6.2}  lr {:.5}", r.epoch, r.loss, r.top1, r.lr)
            })?;
            if let Some(f) = rec.final_top1 {
                let note = if rec.final_top1_short_history { " (short history)" } else { "" };
                println!("final top1 {f:.2}{note}");
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Eval(a) => {
            let r = run::cmd_eval(&cfg, ck(a).as_deref())?;
            println!("top1 {:.2} on {} images", r.top1, r.images);
        }
        Command::Roc(a) => {
            let (roc, scores) = run::cmd_roc(&cfg, ck(a).as_deref())?;
            for w in &scores.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "eer {:.4} at threshold {:.4} ({} genuine, {} impostor)",
                roc.eer,
                roc.eer_threshold,
                scores.genuine.len(),
                scores.impostor.len()
            );
        }
        Command::Occlusion(a) => {
            let mut cfg = cfg.clone();
            if let Some(r) = &a.ratios {
                cfg.eval.occlusion_ratios = r.clone();
            }
            if let Some(p) = a.patch {
                cfg.eval.patch = p;
            }
            let rep = run::cmd_occlusion(&cfg, ck(&a.ck).as_deref())?;
            for (r, acc) in rep.ratios.iter().zip(&rep.accuracy) {
                println!("ratio {r:.3}  top1 {acc:6.2}");
            }
        }
        Command::Cam(a) => {
            let req = CamRequest {
                checkpoint: a.ck.checkpoint.as_deref(),
                image: a.image.as_deref(),
                class: a.class,
                stage: a.stage,
            };
            let (_, class, path) = run::cmd_cam(&cfg, &req)?;
            println!("class {class} -> {}", path.display());
        }
        Command::MixPreview(a) => {
            let mut params: MixParams = cfg.mix;
            params.alpha = a.alpha.unwrap_or(params.alpha);
            params.threshold_lo = a.threshold_lo.unwrap_or(params.threshold_lo);
            params.threshold_hi = a.threshold_hi.unwrap_or(params.threshold_hi);
            let pair = match a.images.as_deref() {
                Some([x, y]) => Some((x.as_path(), y.as_path())),
                Some(_) => bail!("--images takes exactly two paths"),
                None => None,
            };
            for i in run::cmd_mix_preview(&a.lambda, a.size, &params, &cfg.out, pair)? {
                println!(
                    "lambda={:.4} lambda_hat={:.6} path={} -> {}",
                    i.lambda,
                    i.lambda_hat,
                    i.path.as_str(),
                    i.mask_file.display()
                );
            }
        }
        Command::GenSynthetic(a) => {
            let spec = synth_spec(&cfg, a);
            let m = run::cmd_gen_synthetic(&spec, &cfg.out)?;
            println!("{} images in {}", m.entries.len(), Path::new(&cfg.out).display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
