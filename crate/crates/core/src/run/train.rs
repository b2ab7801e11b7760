//! The training loop: batch -> mix -> forward -> soft cross-entropy ->
//! backward -> optimizer step, with a per-epoch schedule and evaluation.

use super::config::{Augmentation, RunConfig, Scheduler};
use crate::data::{epoch_batches, DatasetManifest, ImageSet, Split, SplitRule};
use crate::engine::{cosine_lr, Checkpoint, Graph, Mode, OptimizerState};
use crate::eval::{evaluate, EpochHistory, EpochRecord};
use crate::laknet::LaKNet;
use crate::mix::{one_hot, MixPath, Mixer};
use crate::{rng, Error, Result, Scalar};

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: ImageSet,
    pub test: ImageSet,
}

/// Loads (or synthesizes) both splits and checks them against the model.
pub fn load_datasets(cfg: &RunConfig) -> Result<Datasets> {
    let (train, test) = match &cfg.data.root {
        Some(root) => {
            let m = crate::data::scan_dataset(root, SplitRule { seed: cfg.seed }, cfg.data.side)?;
            m.check_split()?;
            (ImageSet::load(&m, Split::Train)?, ImageSet::load(&m, Split::Test)?)
        }
        None => (cfg.synthetic.image_set(Split::Train)?, cfg.synthetic.image_set(Split::Test)?),
    };
    if train.num_classes != cfg.model.num_classes {
        return Err(Error::Dataset(format!(
            "model.num_classes = {} but the dataset has {} classes",
            cfg.model.num_classes, train.num_classes
        )));
    }
    if train.len() < 2 || test.is_empty() {
        return Err(Error::Dataset(format!(
            "need at least 2 training and 1 test image, got {} and {}",
            train.len(),
            test.len()
        )));
    }
    Ok(Datasets { train, test })
}

/// Manifest of a dataset tree, for commands that only need the test split.
pub fn scan(cfg: &RunConfig) -> Result<Option<DatasetManifest>> {
    cfg.data
        .root
        .as_ref()
        .map(|root| crate::data::scan_dataset(root, SplitRule { seed: cfg.seed }, cfg.data.side))
        .transpose()
}

/// Epoch batches with a trailing single-image batch folded into its
/// predecessor (batch statistics and pairing need two samples).
pub fn training_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut batches = epoch_batches(n, batch_size, seed, epoch);
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

pub fn learning_rate(cfg: &RunConfig, epoch: usize) -> Result<f64> {
    match cfg.train.scheduler {
        Scheduler::Cosine => cosine_lr(epoch, cfg.train.epochs, cfg.optim.lr),
        Scheduler::Constant => Ok(cfg.optim.lr),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixStats {
    pub star_batches: usize,
    pub vanilla_batches: usize,
}

#[derive(Debug)]
pub struct TrainOutcome<T> {
    pub model: LaKNet<T>,
    pub history: EpochHistory,
    pub best: Option<(usize, f64, Checkpoint)>,
    pub mix_stats: MixStats,
}

/// Trains a fresh model per `cfg`. `on_epoch` sees every finished epoch.
pub fn train<T: Scalar>(
    cfg: &RunConfig,
    data: &Datasets,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut model = LaKNet::<T>::new(cfg.model.clone(), cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.optim.kind(), cfg.optim.lr, cfg.optim.weight_decay, &model.params);
    let mut mixer = match cfg.train.augmentation {
        Augmentation::None => None,
        Augmentation::Mixup => Some(Mixer::mixup_only(cfg.mix)?),
        Augmentation::StarMix => Some(Mixer::new(cfg.mix)?),
    };
    let classes = cfg.model.num_classes;
    let mut history = EpochHistory::default();
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    let mut mix_stats = MixStats::default();
    for epoch in 0..cfg.train.epochs {
        let lr = learning_rate(cfg, epoch)?;
        model.set_mode(Mode::Train);
        let mut aug_rng = rng::substream(cfg.seed, rng::TAG_AUGMENT, epoch as u64);
        let mut mix_rng = rng::substream(cfg.seed, rng::TAG_MIX, epoch as u64);
        let mut loss_sum = 0.0;
        for (step, idx) in training_batches(data.train.len(), cfg.train.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let (x, labels) = data.train.batch::<T, _>(idx, Some((&cfg.data.augment, &mut aug_rng)))?;
            let y = one_hot::<T>(&labels, classes)?;
            let (x, y) = match mixer.as_mut() {
                None => (x, y),
                Some(m) => {
                    let mb = m.mix(&x, &y, &mut mix_rng)?;
                    match mb.path {
                        MixPath::Star => mix_stats.star_batches += 1,
                        MixPath::Vanilla => mix_stats.vanilla_batches += 1,
                    }
                    (mb.images, mb.soft_labels)
                }
            };
            let mut g = Graph::new();
            let xv = g.input(x);
            let trace = model.forward(&mut g, xv)?;
            let loss = g
                .soft_cross_entropy(trace.logits, &y)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} step {step}: {e}")))?;
            let lv = g.value(loss).item()?.f64();
            loss_sum += lv * idx.len() as f64;
            model.params.zero_grad();
            g.backward(loss, &mut model.params)?;
            opt.step(&mut model.params, lr)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} step {step}: {e}")))?;
        }
        let top1 = evaluate(&mut model, &data.test.images, &data.test.labels, cfg.train.eval_batch)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / data.train.len() as f64,
            top1,
            lr,
        };
        if best.as_ref().is_none_or(|b| top1 > b.1) {
            best = Some((epoch + 1, top1, model.to_checkpoint(cfg.seed)));
        }
        on_epoch(&rec);
        history.push(rec);
    }
    model.set_mode(Mode::Eval);
    Ok(TrainOutcome {
        model,
        history,
        best,
        mix_stats,
    })
}
