//! Classification accuracy, verification scoring, occlusion robustness and
//! activation maps.

pub mod cam;
pub mod metrics;
pub mod occlusion;
pub mod roc;

use crate::data::loader::sequential_batches;
use crate::data::Gray;
use crate::engine::Mode;
use crate::laknet::LaKNet;
use crate::{Error, Result, Scalar, Tensor};

pub use cam::activation_map;
pub use metrics::{final_top1, top1, EpochHistory, EpochRecord, FinalTop1};
pub use occlusion::{occlusion_sweep, patch_count, OcclusionReport};
pub use roc::{cosine, score_pairs, sweep_roc, PairPolicy, RocCurve, ScoreSet};

fn stack<T: Scalar>(images: &[Gray], idx: &[usize]) -> Result<Tensor<T>> {
    let side = images[idx[0]].side;
    let mut data = Vec::with_capacity(idx.len() * side * side);
    for &i in idx {
        data.extend(images[i].pixels.iter().map(|&v| T::of(v)));
    }
    Tensor::new([idx.len(), 1, side, side], data)
}

/// Runs `f(logits, features, indices)` over fixed sequential batches in
/// eval mode, restoring the previous mode afterwards.
fn for_each_batch<T: Scalar>(
    model: &mut LaKNet<T>,
    images: &[Gray],
    batch: usize,
    mut f: impl FnMut(&Tensor<T>, &Tensor<T>, &[usize]) -> Result<()>,
) -> Result<()> {
    if images.is_empty() {
        return Err(Error::invalid("evaluate", "empty image set"));
    }
    let prev = model.mode;
    model.set_mode(Mode::Eval);
    let mut run = || -> Result<()> {
        for idx in sequential_batches(images.len(), batch) {
            let (logits, features) = model.predict(stack(images, &idx)?)?;
            f(&logits, &features, &idx)?;
        }
        Ok(())
    };
    let out = run();
    model.set_mode(prev);
    out
}

/// Top-1 accuracy in percent over `images`.
pub fn evaluate<T: Scalar>(model: &mut LaKNet<T>, images: &[Gray], labels: &[usize], batch: usize) -> Result<f64> {
    if images.len() != labels.len() {
        return Err(Error::shape("evaluate", "labels", images.len(), labels.len()));
    }
    let mut correct = 0;
    for_each_batch(model, images, batch, |logits, _, idx| {
        let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        correct += metrics::correct_count(logits, &ys)?;
        Ok(())
    })?;
    Ok(100.0 * correct as f64 / images.len() as f64)
}

/// Pooled pre-classifier features of every image.
pub fn embed<T: Scalar>(model: &mut LaKNet<T>, images: &[Gray], batch: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for_each_batch(model, images, batch, |_, features, _| {
        let (_, f) = features.dims2("embed")?;
        out.extend(features.data().chunks(f).map(|row| row.iter().map(|v| v.f64()).collect()));
        Ok(())
    })?;
    Ok(out)
}
