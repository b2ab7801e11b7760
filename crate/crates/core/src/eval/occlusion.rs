//! Robustness to random square occluders.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::data::Gray;
use crate::laknet::LaKNet;
use crate::{rng, Error, Result, Scalar};

pub const DEFAULT_PATCH: usize = 16;
pub const DEFAULT_RATIOS: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];
const PLACEMENT_TRIES: usize = 10;

/// `round(ratio * side^2 / patch^2)`, halves rounded up.
pub fn patch_count(side: usize, patch: usize, ratio: f64) -> usize {
    (ratio * (side * side) as f64 / (patch * patch) as f64).round() as usize
}

fn overlaps(a: (usize, usize), b: (usize, usize), patch: usize) -> bool {
    a.0 < b.0 + patch && b.0 < a.0 + patch && a.1 < b.1 + patch && b.1 < a.1 + patch
}

/// Top-left corners of `count` patches. Each patch gets up to ten tries to
/// avoid the ones already placed; after that the last candidate is kept.
pub fn place_patches<R: Rng + ?Sized>(side: usize, patch: usize, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let span = side - patch + 1;
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut cand = (0, 0);
        for _ in 0..PLACEMENT_TRIES {
            cand = (rng.random_range(0..span), rng.random_range(0..span));
            if !placed.iter().any(|&p| overlaps(p, cand, patch)) {
                break;
            }
        }
        placed.push(cand);
    }
    placed
}

/// Zeroes every patch of `image`.
pub fn occlude(image: &Gray, corners: &[(usize, usize)], patch: usize) -> Gray {
    let mut out = image.clone();
    for &(y0, x0) in corners {
        for y in y0..(y0 + patch).min(image.side) {
            out.pixels[y * image.side + x0..y * image.side + (x0 + patch).min(image.side)].fill(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionReport {
    pub ratios: Vec<f64>,
    /// Top-1 in percent, one per ratio.
    pub accuracy: Vec<f64>,
    pub patch_side: usize,
    pub patches_per_image: Vec<usize>,
    pub seed: u64,
}

impl OcclusionReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ratio,accuracy\n");
        for (r, a) in self.ratios.iter().zip(&self.accuracy) {
            let _ = writeln!(s, "{r:.4},{a:.4}");
        }
        s
    }
}

/// Occluded copies of `images` for one ratio; placement for image `i` at
/// ratio index `k` comes from its own substream.
pub fn occluded_set(images: &[Gray], ratio: f64, ratio_index: usize, patch: usize, seed: u64) -> Vec<Gray> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let n = patch_count(img.side, patch, ratio);
            if n == 0 {
                return img.clone();
            }
            let key = ((ratio_index as u64) << 32) | i as u64;
            let mut r = rng::substream(seed, rng::TAG_OCCLUDE, key);
            occlude(img, &place_patches(img.side, patch, n, &mut r), patch)
        })
        .collect()
}

pub fn occlusion_sweep<T: Scalar>(
    model: &mut LaKNet<T>,
    images: &[Gray],
    labels: &[usize],
    ratios: &[f64],
    patch: usize,
    seed: u64,
    batch: usize,
) -> Result<OcclusionReport> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid("occlusion_sweep", format!("ratio {r} outside [0, 1]")));
    }
    let side = images.first().map_or(0, |g| g.side);
    if patch == 0 || patch > side {
        return Err(Error::invalid("occlusion_sweep", format!("patch side {patch} must be in 1..={side}")));
    }
    let mut accuracy = Vec::with_capacity(ratios.len());
    for (k, &r) in ratios.iter().enumerate() {
        accuracy.push(evaluate(model, &occluded_set(images, r, k, patch, seed), labels, batch)?);
    }
    Ok(OcclusionReport {
        ratios: ratios.to_vec(),
        accuracy,
        patch_side: patch,
        patches_per_image: ratios.iter().map(|&r| patch_count(side, patch, r)).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn patch_count_rounds_to_nearest() {
        assert_eq!(patch_count(224, 16, 0.10), 20);
        assert_eq!(patch_count(224, 16, 0.0), 0);
        assert_eq!(patch_count(32, 16, 0.10), 0);
        assert_eq!(patch_count(32, 16, 0.125), 1);
    }

    #[test]
    fn placement_prefers_disjoint_patches() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let p = place_patches(224, 16, 20, &mut r);
        assert_eq!(p.len(), 20);
        let clashes = (0..20)
            .flat_map(|i| (i + 1..20).map(move |j| (i, j)))
            .filter(|&(i, j)| overlaps(p[i], p[j], 16))
            .count();
        assert_eq!(clashes, 0);
        assert!(p.iter().all(|&(y, x)| y <= 208 && x <= 208));
        // a full image cannot avoid overlap
        let p = place_patches(16, 16, 3, &mut r);
        assert_eq!(p, vec![(0, 0); 3]);
    }

    #[test]
    fn occlude_zeroes_exactly_the_patch() {
        let img = Gray::new(8, vec![1.0; 64]).unwrap();
        let out = occlude(&img, &[(2, 3)], 4);
        let zeros = out.pixels.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 16);
        assert_eq!(out.pixels[2 * 8 + 3], 0.0);
        assert_eq!(out.pixels[5 * 8 + 6], 0.0);
        assert_eq!(out.pixels[6 * 8 + 6], 1.0);
    }

    #[test]
    fn zero_ratio_is_identity() {
        let imgs = vec![Gray::new(32, vec![0.5; 1024]).unwrap(); 3];
        assert_eq!(occluded_set(&imgs, 0.0, 0, 16, 1), imgs);
        let a = occluded_set(&imgs, 0.5, 1, 8, 1);
        assert_eq!(a, occluded_set(&imgs, 0.5, 1, 8, 1));
        assert_ne!(a, imgs);
    }
}
