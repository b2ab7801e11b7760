//! Deterministic synthetic vein images.
//!
//! Each class owns a template of smooth random polylines ("veins"). Every
//! image of the class re-renders that template with a sub-pixel point
//! jitter, a global shift of at most 2 px, a contrast factor and additive
//! Gaussian noise. Veins are dark on a bright background, as in
//! near-infrared captures.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image_io::{save_gray, Gray};
use super::loader::ImageSet;
use super::manifest::{scan_dataset, DatasetManifest, Split, SplitRule};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVeinSpec {
    pub num_classes: usize,
    pub images_per_class: usize,
    pub side: usize,
    pub veins_min: usize,
    pub veins_max: usize,
    /// Vein width range in pixels.
    pub thickness_min: f64,
    pub thickness_max: f64,
    pub contrast: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticVeinSpec {
    fn default() -> Self {
        SyntheticVeinSpec {
            num_classes: 10,
            images_per_class: 50,
            side: 32,
            veins_min: 3,
            veins_max: 5,
            thickness_min: 1.5,
            thickness_max: 3.0,
            contrast: 0.55,
            noise: 0.04,
            seed: 7,
        }
    }
}

const MAX_SHIFT: f64 = 2.0;
const POINT_JITTER: f64 = 0.5;
const SEGMENTS: usize = 7;

#[derive(Debug, Clone)]
struct Vein {
    points: Vec<(f64, f64)>,
    thickness: f64,
}

impl SyntheticVeinSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid("synthetic spec", m.to_string()));
        if self.num_classes == 0 || self.images_per_class == 0 {
            return bad("need at least one class and one image per class");
        }
        if self.side < 8 {
            return bad("side must be >= 8");
        }
        if self.veins_min == 0 || self.veins_min > self.veins_max {
            return bad("need 1 <= veins_min <= veins_max");
        }
        if !(self.thickness_min > 0.0 && self.thickness_min <= self.thickness_max) {
            return bad("need 0 < thickness_min <= thickness_max");
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) || !(self.noise >= 0.0) {
            return bad("contrast must be in (0, 1] and noise >= 0");
        }
        Ok(())
    }

    fn template(&self, class: usize) -> Vec<Vein> {
        let mut r = rng::substream(self.seed, rng::TAG_SYNTH, class as u64);
        let s = self.side as f64;
        let n = r.random_range(self.veins_min..=self.veins_max);
        let turn = Normal::new(0.0, 0.35).expect("valid normal");
        (0..n)
            .map(|_| {
                let mut p = (r.random_range(0.1..0.9) * s, r.random_range(0.1..0.9) * s);
                let mut angle = r.random_range(0.0..std::f64::consts::TAU);
                let step = s * r.random_range(0.08..0.16);
                let mut points = vec![p];
                for _ in 0..SEGMENTS {
                    angle += turn.sample(&mut r);
                    p = (p.0 + step * angle.cos(), p.1 + step * angle.sin());
                    points.push(p);
                }
                Vein {
                    points,
                    thickness: r.random_range(self.thickness_min..=self.thickness_max),
                }
            })
            .collect()
    }

    /// Renders image `index` of `class`.
    pub fn render(&self, class: usize, index: usize) -> Gray {
        let veins = self.template(class);
        let key = (class as u64) << 32 | index as u64;
        let mut r = rng::substream(self.seed ^ 0xA5A5_5A5A, rng::TAG_SYNTH, key);
        let (tx, ty) = (r.random_range(-MAX_SHIFT..=MAX_SHIFT), r.random_range(-MAX_SHIFT..=MAX_SHIFT));
        let jittered: Vec<Vein> = veins
            .iter()
            .map(|v| Vein {
                points: v
                    .points
                    .iter()
                    .map(|&(x, y)| {
                        (
                            x + tx + r.random_range(-POINT_JITTER..=POINT_JITTER),
                            y + ty + r.random_range(-POINT_JITTER..=POINT_JITTER),
                        )
                    })
                    .collect(),
                thickness: v.thickness,
            })
            .collect();
        let contrast = self.contrast * r.random_range(0.85..=1.15);
        let background = 0.75 + r.random_range(-0.05..=0.05);
        let noise = Normal::new(0.0, self.noise.max(1e-12)).expect("valid normal");
        let side = self.side;
        let mut pixels = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let vein = jittered.iter().map(|v| vein_response(v, p)).fold(0.0, f64::max);
                let n = if self.noise > 0.0 { noise.sample(&mut r) } else { 0.0 };
                pixels.push((background - contrast * vein + n).clamp(0.0, 1.0));
            }
        }
        Gray { side, pixels }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Soft (blurred) stroke profile of one vein at point `p`.
fn vein_response(v: &Vein, p: (f64, f64)) -> f64 {
    let d = v
        .points
        .windows(2)
        .map(|w| segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min);
    let half = v.thickness / 2.0;
    (-d * d / (2.0 * half * half)).exp()
}

impl SyntheticVeinSpec {
    /// The split as it would load from a generated tree: pixels go through
    /// the same 8-bit quantization as the written PNG files.
    pub fn image_set(&self, split: Split) -> Result<ImageSet> {
        self.validate()?;
        let want = if split == Split::Train { 1 } else { 2 };
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for c in 0..self.num_classes {
            for i in (0..self.images_per_class).filter(|&i| session_of(i, self.images_per_class) == want) {
                let q = self.render(c, i).to_u8();
                images.push(Gray::new(self.side, q.iter().map(|&v| (v as f32 / 255.0) as f64).collect())?);
                labels.push(c);
            }
        }
        Ok(ImageSet {
            side: self.side,
            images,
            labels,
            num_classes: self.num_classes,
        })
    }
}

pub fn session_of(index: usize, images_per_class: usize) -> usize {
    if index < images_per_class.div_ceil(2) {
        1
    } else {
        2
    }
}

/// Relative path of one generated image.
pub fn image_path(class: usize, index: usize, images_per_class: usize) -> String {
    format!(
        "class_{class:03}/session{}/img_{index:03}.png",
        session_of(index, images_per_class)
    )
}

/// Writes the dataset tree under `out_root` (`class_XXX/sessionN/img_XXX.png`,
/// first half of each class in session 1) plus `manifest.txt`.
pub fn generate_synthetic(spec: &SyntheticVeinSpec, out_root: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    for c in 0..spec.num_classes {
        for i in 0..spec.images_per_class {
            let path = out_root.join(image_path(c, i, spec.images_per_class));
            let dir = path.parent().expect("has parent");
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            save_gray(&path, spec.side, spec.side, &spec.render(c, i).to_u8())?;
        }
    }
    let manifest = scan_dataset(out_root, SplitRule { seed: spec.seed }, spec.side)?;
    manifest.write_cache(&out_root.join("manifest.txt"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn intra_class_correlation_exceeds_inter_class() {
        let spec = SyntheticVeinSpec {
            images_per_class: 6,
            ..SyntheticVeinSpec::default()
        };
        let imgs: Vec<Vec<Gray>> = (0..spec.num_classes)
            .map(|c| (0..spec.images_per_class).map(|i| spec.render(c, i)).collect())
            .collect();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for c1 in 0..spec.num_classes {
            for c2 in c1..spec.num_classes {
                for i in 0..spec.images_per_class {
                    for j in 0..spec.images_per_class {
                        if c1 == c2 && j <= i {
                            continue;
                        }
                        let r = correlation(&imgs[c1][i].pixels, &imgs[c2][j].pixels);
                        if c1 == c2 {
                            intra += r;
                            ni += 1;
                        } else {
                            inter += r;
                            nx += 1;
                        }
                    }
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter + 0.1, "intra {intra} inter {inter}");
    }

    #[test]
    fn generation_is_byte_identical() {
        let spec = SyntheticVeinSpec {
            num_classes: 3,
            images_per_class: 4,
            ..SyntheticVeinSpec::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = generate_synthetic(&spec, a.path()).unwrap();
        generate_synthetic(&spec, b.path()).unwrap();
        for e in &ma.entries {
            assert_eq!(std::fs::read(a.path().join(&e.path)).unwrap(), std::fs::read(b.path().join(&e.path)).unwrap());
        }
        assert_eq!(ma.split(Split::Train).count(), 6);
        assert_eq!(ma.split(Split::Test).count(), 6);
    }

    #[test]
    fn in_memory_set_matches_loaded_tree() {
        let spec = SyntheticVeinSpec {
            num_classes: 2,
            images_per_class: 5,
            ..SyntheticVeinSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic(&spec, dir.path()).unwrap();
        for split in [Split::Train, Split::Test] {
            let loaded = ImageSet::load(&m, split).unwrap();
            let mem = spec.image_set(split).unwrap();
            assert_eq!(loaded.labels, mem.labels);
            assert_eq!(loaded.images, mem.images);
        }
        assert_eq!(spec.image_set(Split::Train).unwrap().len(), 6);
    }

    #[test]
    fn single_image_dataset() {
        let spec = SyntheticVeinSpec {
            num_classes: 1,
            images_per_class: 1,
            ..SyntheticVeinSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic(&spec, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.classes.len(), 1);
        assert!(dir.path().join("manifest.txt").exists());
    }
}
