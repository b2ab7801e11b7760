//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comment
//! [train]
//! epochs = 30
//! augmentation = starmix
//! ```
//!
//! Every key has a default; unknown sections and keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{AugmentPolicy, SyntheticVeinSpec};
use crate::engine::{OptimizerKind, Precision};
use crate::eval::occlusion::{DEFAULT_PATCH, DEFAULT_RATIOS};
use crate::laknet::LaKNetConfig;
use crate::mix::MixParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    None,
    Mixup,
    StarMix,
}

impl Augmentation {
    pub fn as_str(self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::Mixup => "mixup",
            Augmentation::StarMix => "starmix",
        }
    }
}

impl FromStr for Augmentation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Augmentation::None),
            "mixup" => Ok(Augmentation::Mixup),
            "starmix" => Ok(Augmentation::StarMix),
            _ => Err(format!("expected none|mixup|starmix, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimName,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimName::Sgd,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn kind(&self) -> OptimizerKind {
        match self.kind {
            OptimName::Sgd => OptimizerKind::SgdMomentum {
                momentum: self.momentum,
            },
            OptimName::Adam => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub scheduler: Scheduler,
    pub augmentation: Augmentation,
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            scheduler: Scheduler::Cosine,
            augmentation: Augmentation::None,
            eval_batch: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Dataset tree; `None` uses the synthetic generator in memory.
    pub root: Option<PathBuf>,
    /// Resize side for images loaded from `root`.
    pub side: usize,
    pub augment: AugmentPolicy,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            side: 32,
            augment: AugmentPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub impostor_ratio: usize,
    pub max_genuine: Option<usize>,
    pub thresholds: usize,
    pub occlusion_ratios: Vec<f64>,
    pub patch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            impostor_ratio: 10,
            max_genuine: None,
            thresholds: 1001,
            occlusion_ratios: DEFAULT_RATIOS.to_vec(),
            patch: DEFAULT_PATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub precision: Precision,
    pub data: DataConfig,
    pub synthetic: SyntheticVeinSpec,
    pub model: LaKNetConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub mix: MixParams,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            precision: Precision::Train,
            data: DataConfig::default(),
            synthetic: SyntheticVeinSpec::default(),
            model: LaKNetConfig::toy(10),
            optim: OptimConfig::default(),
            train: TrainConfig::default(),
            mix: MixParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("bad value {v:?}: {e}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true|false, got {v:?}")),
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        match (section, key) {
            ("run", "seed") => self.seed = parse_num(v)?,
            ("run", "out") => self.out = PathBuf::from(v),
            ("run", "precision") => self.precision = v.parse().map_err(|e: Error| e.to_string())?,
            ("data", "root") => self.data.root = (!v.is_empty()).then(|| PathBuf::from(v)),
            ("data", "side") => self.data.side = parse_num(v)?,
            ("data", "flip") => self.data.augment.flip = parse_bool(v)?,
            ("data", "flip_prob") => self.data.augment.flip_prob = parse_num(v)?,
            ("data", "crop") => self.data.augment.crop = parse_bool(v)?,
            ("data", "pad") => self.data.augment.pad = parse_num(v)?,
            ("synthetic", "num_classes") => self.synthetic.num_classes = parse_num(v)?,
            ("synthetic", "images_per_class") => self.synthetic.images_per_class = parse_num(v)?,
            ("synthetic", "side") => self.synthetic.side = parse_num(v)?,
            ("synthetic", "veins_min") => self.synthetic.veins_min = parse_num(v)?,
            ("synthetic", "veins_max") => self.synthetic.veins_max = parse_num(v)?,
            ("synthetic", "thickness_min") => self.synthetic.thickness_min = parse_num(v)?,
            ("synthetic", "thickness_max") => self.synthetic.thickness_max = parse_num(v)?,
            ("synthetic", "contrast") => self.synthetic.contrast = parse_num(v)?,
            ("synthetic", "noise") => self.synthetic.noise = parse_num(v)?,
            ("synthetic", "seed") => self.synthetic.seed = parse_num(v)?,
            ("model", k) => self.model.set(k, v)?,
            ("optim", "kind") => {
                self.optim.kind = match v {
                    "sgd" => OptimName::Sgd,
                    "adam" => OptimName::Adam,
                    _ => return Err(format!("expected sgd|adam, got {v:?}")),
                }
            }
            ("optim", "lr") => self.optim.lr = parse_num(v)?,
            ("optim", "momentum") => self.optim.momentum = parse_num(v)?,
            ("optim", "weight_decay") => self.optim.weight_decay = parse_num(v)?,
            ("optim", "beta1") => self.optim.beta1 = parse_num(v)?,
            ("optim", "beta2") => self.optim.beta2 = parse_num(v)?,
            ("optim", "eps") => self.optim.eps = parse_num(v)?,
            ("train", "epochs") => self.train.epochs = parse_num(v)?,
            ("train", "batch_size") => self.train.batch_size = parse_num(v)?,
            ("train", "scheduler") => {
                self.train.scheduler = match v {
                    "cosine" => Scheduler::Cosine,
                    "constant" => Scheduler::Constant,
                    _ => return Err(format!("expected cosine|constant, got {v:?}")),
                }
            }
            ("train", "augmentation") => self.train.augmentation = v.parse()?,
            ("train", "eval_batch") => self.train.eval_batch = parse_num(v)?,
            ("mix", "alpha") => self.mix.alpha = parse_num(v)?,
            ("mix", "threshold_lo") => self.mix.threshold_lo = parse_num(v)?,
            ("mix", "threshold_hi") => self.mix.threshold_hi = parse_num(v)?,
            ("eval", "impostor_ratio") => self.eval.impostor_ratio = parse_num(v)?,
            ("eval", "max_genuine") => {
                self.eval.max_genuine = if v.is_empty() || v == "none" { None } else { Some(parse_num(v)?) }
            }
            ("eval", "thresholds") => self.eval.thresholds = parse_num(v)?,
            ("eval", "occlusion_ratios") => {
                self.eval.occlusion_ratios = v.split(',').map(|s| parse_num(s.trim())).collect::<std::result::Result<_, _>>()?
            }
            ("eval", "patch") => self.eval.patch = parse_num(v)?,
            _ => return Err(format!("unknown key {key:?} in section [{section}]")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| Error::Config { line: i + 1, msg };
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !["run", "data", "synthetic", "model", "optim", "train", "mix", "eval"].contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            if section.is_empty() {
                return Err(err("key outside of any section".into()));
            }
            cfg.set(&section, k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("run config", msg));
        self.model.validate()?;
        self.mix.validate()?;
        if self.data.root.is_none() {
            self.synthetic.validate()?;
        }
        if self.train.batch_size < 2 {
            return bad(format!("train.batch_size must be >= 2, got {}", self.train.batch_size));
        }
        if self.train.eval_batch == 0 {
            return bad("train.eval_batch must be positive".into());
        }
        if !(self.optim.lr > 0.0) || !(self.optim.weight_decay >= 0.0) {
            return bad("optim.lr must be > 0 and optim.weight_decay >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.data.augment.flip_prob) {
            return bad(format!("data.flip_prob must lie in [0, 1], got {}", self.data.augment.flip_prob));
        }
        if self.eval.thresholds < 2 {
            return bad("eval.thresholds must be >= 2".into());
        }
        if let Some(r) = self.eval.occlusion_ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("occlusion ratio {r} outside [0, 1]"));
        }
        let side = self.image_side();
        if side != self.model.input_side {
            return bad(format!(
                "model.input_side = {} but the dataset side is {side}",
                self.model.input_side
            ));
        }
        Ok(())
    }

    /// Side of the images fed to the model.
    pub fn image_side(&self) -> usize {
        if self.data.root.is_some() {
            self.data.side
        } else {
            self.synthetic.side
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = |name: &str, entries: Vec<(&str, String)>| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        section(
            "run",
            vec![
                ("seed", self.seed.to_string()),
                ("out", self.out.display().to_string()),
                ("precision", self.precision.as_str().into()),
            ],
        );
        let a = &self.data.augment;
        section(
            "data",
            vec![
                ("root", self.data.root.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
                ("side", self.data.side.to_string()),
                ("flip", a.flip.to_string()),
                ("flip_prob", a.flip_prob.to_string()),
                ("crop", a.crop.to_string()),
                ("pad", a.pad.to_string()),
            ],
        );
        let y = &self.synthetic;
        section(
            "synthetic",
            vec![
                ("num_classes", y.num_classes.to_string()),
                ("images_per_class", y.images_per_class.to_string()),
                ("side", y.side.to_string()),
                ("veins_min", y.veins_min.to_string()),
                ("veins_max", y.veins_max.to_string()),
                ("thickness_min", y.thickness_min.to_string()),
                ("thickness_max", y.thickness_max.to_string()),
                ("contrast", y.contrast.to_string()),
                ("noise", y.noise.to_string()),
                ("seed", y.seed.to_string()),
            ],
        );
        section("model", self.model.entries().into_iter().collect());
        let o = &self.optim;
        section(
            "optim",
            vec![
                ("kind", if o.kind == OptimName::Sgd { "sgd" } else { "adam" }.into()),
                ("lr", o.lr.to_string()),
                ("momentum", o.momentum.to_string()),
                ("weight_decay", o.weight_decay.to_string()),
                ("beta1", o.beta1.to_string()),
                ("beta2", o.beta2.to_string()),
                ("eps", o.eps.to_string()),
            ],
        );
        let t = &self.train;
        section(
            "train",
            vec![
                ("epochs", t.epochs.to_string()),
                ("batch_size", t.batch_size.to_string()),
                ("scheduler", if t.scheduler == Scheduler::Cosine { "cosine" } else { "constant" }.into()),
                ("augmentation", t.augmentation.as_str().into()),
                ("eval_batch", t.eval_batch.to_string()),
            ],
        );
        section(
            "mix",
            vec![
                ("alpha", self.mix.alpha.to_string()),
                ("threshold_lo", self.mix.threshold_lo.to_string()),
                ("threshold_hi", self.mix.threshold_hi.to_string()),
            ],
        );
        let e = &self.eval;
        section(
            "eval",
            vec![
                ("impostor_ratio", e.impostor_ratio.to_string()),
                ("max_genuine", e.max_genuine.map(|v| v.to_string()).unwrap_or_else(|| "none".into())),
                ("thresholds", e.thresholds.to_string()),
                ("occlusion_ratios", join(&e.occlusion_ratios)),
                ("patch", e.patch.to_string()),
            ],
        );
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    }
}
