//! Gradient-weighted class activation maps.

use crate::data::image_io::resize_bilinear;
use crate::data::Gray;
use crate::engine::{Graph, Mode};
use crate::laknet::LaKNet;
use crate::{Error, Result, Scalar};

/// `ReLU(sum_c w_c A_c)` with `w_c` the spatial mean of the gradient of
/// channel `c`. `acts` and `grads` are `[C, H, W]`.
pub fn grad_cam(acts: &[f64], grads: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut map = vec![0.0; hw];
    for ch in 0..c {
        let g = &grads[ch * hw..(ch + 1) * hw];
        let weight = g.iter().sum::<f64>() / hw as f64;
        for (m, a) in map.iter_mut().zip(&acts[ch * hw..(ch + 1) * hw]) {
            *m += weight * a;
        }
    }
    map.iter_mut().for_each(|m| *m = m.max(0.0));
    map
}

/// Min-max normalization to `[0, 1]`. An all-zero map stays zero; a
/// constant positive map becomes all ones.
pub fn normalize_map(map: &mut [f64]) {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= 0.0 {
        map.fill(0.0);
    } else if hi == lo {
        map.fill(1.0);
    } else {
        map.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
}

/// Deepest stage whose output is at least 2 x 2.
pub fn default_cam_stage(sides: &[usize]) -> Option<usize> {
    sides.iter().rposition(|&s| s >= 2)
}

/// Heatmap of `class` evidence at the output of `stage` (default: the
/// deepest stage at least 2 x 2), upsampled to the input side.
pub fn activation_map<T: Scalar>(
    model: &mut LaKNet<T>,
    image: &Gray,
    class: usize,
    stage: Option<usize>,
) -> Result<Gray> {
    let classes = model.config.num_classes;
    if class >= classes {
        return Err(Error::invalid("activation_map", format!("class {class} out of range 0..{classes}")));
    }
    let sides = model.config.stage_sides();
    let stage = match stage {
        Some(s) if s >= sides.len() => {
            return Err(Error::invalid("activation_map", format!("stage {s} out of range 0..{}", sides.len())))
        }
        Some(s) => s,
        None => default_cam_stage(&sides)
            .ok_or_else(|| Error::invalid("activation_map", "no stage output is at least 2x2"))?,
    };
    if sides[stage] < 2 {
        return Err(Error::invalid(
            "activation_map",
            format!("stage {stage} output is {0}x{0}, need at least 2x2", sides[stage]),
        ));
    }
    let prev = model.mode;
    model.set_mode(Mode::Eval);
    let mut g = Graph::new();
    let x = g.input(image.to_tensor::<T>().reshape([1, 1, image.side, image.side])?);
    let trace = model.forward(&mut g, x);
    model.set_mode(prev);
    let trace = trace?;
    let mut seed = vec![T::zero(); classes];
    seed[class] = T::one();
    g.backward_seeded(trace.logits, seed)?;
    let target = trace.stages[stage];
    let (_, c, h, w) = g.value(target).dims4("activation_map")?;
    let acts = g.value(target).to_f64_vec();
    let grads: Vec<f64> = match g.grad(target) {
        Some(gr) => gr.iter().map(|v| v.f64()).collect(),
        None => vec![0.0; acts.len()],
    };
    let coarse = grad_cam(&acts, &grads, c, h, w);
    let mut map = resize_bilinear(&coarse, w, h, image.side, image.side);
    normalize_map(&mut map);
    Gray::new(image.side, map)
}
