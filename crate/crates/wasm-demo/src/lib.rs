//! Browser bindings for three interactive views: the StarMask for a chosen
//! mixing ratio, a two-image blend on the routed mixing path, and the
//! verification ROC of two Gaussian score populations.

use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use starlk::data::SyntheticVeinSpec;
use starlk::eval::{sweep_roc, ScoreSet};
use starlk::mix::preview::mask_pixels;
use starlk::mix::{build_star_mask, MixParams, MixPath};
use starlk::rng;
use wasm_bindgen::prelude::*;

const MAX_SIDE: usize = 512;
const MAX_SCORES: usize = 200_000;

fn check_side(side: usize) -> Result<(), String> {
    if side == 0 || side > MAX_SIDE {
        return Err(format!("side must be in 1..={MAX_SIDE}, got {side}"));
    }
    Ok(())
}

fn gray_to_rgba(gray: &[u8]) -> Vec<u8> {
    gray.iter().flat_map(|&v| [v, v, v, 255]).collect()
}

/// RGBA pixels of `G / lambda` scaled to 0..255.
pub fn mask_rgba(lambda: f64, side: usize) -> Result<Vec<u8>, String> {
    check_side(side)?;
    let m = build_star_mask(lambda, side, side).map_err(|e| e.to_string())?;
    Ok(gray_to_rgba(&mask_pixels(&m)))
}

/// `{lambda, lambda_hat, min, max, path}` for the mask at `lambda`.
pub fn mask_stats(lambda: f64, side: usize, lo: f64, hi: f64) -> Result<String, String> {
    check_side(side)?;
    let params = MixParams {
        alpha: 1.0,
        threshold_lo: lo,
        threshold_hi: hi,
    };
    params.validate().map_err(|e| e.to_string())?;
    let m = build_star_mask(lambda, side, side).map_err(|e| e.to_string())?;
    let (min, max) = m.g.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(json!({
        "lambda": lambda,
        "lambda_hat": m.lambda_hat,
        "min": min,
        "max": max,
        "path": params.select_path(lambda).as_str(),
    })
    .to_string())
}

/// Blends two synthetic vein images of different identities with the
/// StarMask on the star path or plain `lambda` otherwise.
pub fn blend_rgba(lambda: f64, side: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<u8>, String> {
    check_side(side)?;
    let spec = SyntheticVeinSpec {
        num_classes: 2,
        images_per_class: 1,
        side,
        seed,
        ..SyntheticVeinSpec::default()
    };
    spec.validate().map_err(|e| e.to_string())?;
    let (a, b) = (spec.render(0, 0), spec.render(1, 0));
    let params = MixParams {
        alpha: 1.0,
        threshold_lo: lo,
        threshold_hi: hi,
    };
    params.validate().map_err(|e| e.to_string())?;
    let weights = match params.select_path(lambda) {
        MixPath::Star => build_star_mask(lambda, side, side).map_err(|e| e.to_string())?.g,
        MixPath::Vanilla if (0.0..=1.0).contains(&lambda) => vec![lambda; side * side],
        MixPath::Vanilla => return Err(format!("lambda must lie in [0, 1], got {lambda}")),
    };
    let px: Vec<u8> = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .zip(&weights)
        .map(|((&x, &y), &w)| ((w * x + (1.0 - w) * y).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(gray_to_rgba(&px))
}

/// ROC of genuine scores `N(separation, 1)` against impostor scores
/// `N(0, 1)`: `{thresholds, far, frr, eer, eer_threshold}`.
pub fn gaussian_roc(separation: f64, n: usize, thresholds: usize, seed: u64) -> Result<String, String> {
    if n == 0 || n > MAX_SCORES {
        return Err(format!("n must be in 1..={MAX_SCORES}, got {n}"));
    }
    if !separation.is_finite() {
        return Err("separation must be finite".into());
    }
    let mut r = rng::stream(seed, rng::TAG_PAIRS);
    let mut draw = |mu: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                mu + z
            })
            .collect()
    };
    let impostor = draw(0.0);
    let genuine = draw(separation);
    let roc = sweep_roc(&ScoreSet::new(genuine, impostor, "gaussian"), thresholds).map_err(|e| e.to_string())?;
    Ok(json!({
        "thresholds": roc.thresholds,
        "far": roc.far,
        "frr": roc.frr,
        "eer": roc.eer,
        "eer_threshold": roc.eer_threshold,
    })
    .to_string())
}

#[wasm_bindgen(js_name = maskRgba)]
pub fn mask_rgba_js(lambda: f64, side: usize) -> Result<Vec<u8>, JsError> {
    mask_rgba(lambda, side).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = maskStats)]
pub fn mask_stats_js(lambda: f64, side: usize, lo: f64, hi: f64) -> Result<String, JsError> {
    mask_stats(lambda, side, lo, hi).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = blendRgba)]
pub fn blend_rgba_js(lambda: f64, side: usize, lo: f64, hi: f64, seed: u32) -> Result<Vec<u8>, JsError> {
    blend_rgba(lambda, side, lo, hi, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gaussianRoc)]
pub fn gaussian_roc_js(separation: f64, n: usize, thresholds: usize, seed: u32) -> Result<String, JsError> {
    gaussian_roc(separation, n, thresholds, u64::from(seed)).map_err(|e| JsError::new(&e))
}
