//! Random horizontal flip and pad-then-crop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image_io::Gray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub flip: bool,
    pub flip_prob: f64,
    pub crop: bool,
    /// Zero padding on each side before the random crop.
    pub pad: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            flip: false,
            flip_prob: 0.5,
            crop: true,
            pad: 3,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            flip: false,
            crop: false,
            ..Self::default()
        }
    }
}

/// One concrete augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentDraw {
    pub flip: bool,
    /// Crop origin in padded coordinates; `(pad, pad)` is the identity.
    pub dy: usize,
    pub dx: usize,
}

impl AugmentPolicy {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentDraw {
        let flip = self.flip && rng.random::<f64>() < self.flip_prob;
        let (dy, dx) = if self.crop {
            (rng.random_range(0..=2 * self.pad), rng.random_range(0..=2 * self.pad))
        } else {
            (self.pad, self.pad)
        };
        AugmentDraw { flip, dy, dx }
    }
}

pub fn apply(image: &Gray, draw: AugmentDraw, pad: usize) -> Gray {
    let s = image.side;
    let mut out = vec![0.0; s * s];
    for y in 0..s {
        let sy = (y + draw.dy) as isize - pad as isize;
        if sy < 0 || sy >= s as isize {
            continue;
        }
        for x in 0..s {
            let sx = (x + draw.dx) as isize - pad as isize;
            if sx < 0 || sx >= s as isize {
                continue;
            }
            let col = if draw.flip { s - 1 - sx as usize } else { sx as usize };
            out[y * s + x] = image.pixels[sy as usize * s + col];
        }
    }
    Gray { side: s, pixels: out }
}

pub fn augment<R: Rng + ?Sized>(image: &Gray, policy: &AugmentPolicy, rng: &mut R) -> Gray {
    apply(image, policy.draw(rng), policy.pad)
}
