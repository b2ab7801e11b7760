//! In-memory image sets and seeded batch iteration.

use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{augment, AugmentPolicy};
use super::image_io::{load_gray, Gray};
use super::manifest::{DatasetManifest, Split};
use crate::{rng, Error, Result, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct ImageSet {
    pub side: usize,
    pub images: Vec<Gray>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ImageSet {
    pub fn load(manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for e in manifest.split(split) {
            images.push(load_gray(&manifest.root.join(&e.path), manifest.side)?);
            labels.push(e.class);
        }
        Ok(ImageSet {
            side: manifest.side,
            images,
            labels,
            num_classes: manifest.num_classes(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stacks the selected images into `[B,1,S,S]`, optionally augmenting
    /// each one in order.
    pub fn batch<T: Scalar, R: Rng + ?Sized>(
        &self,
        indices: &[usize],
        augmentation: Option<(&AugmentPolicy, &mut R)>,
    ) -> Result<(Tensor<T>, Vec<usize>)> {
        let s = self.side;
        let mut data = Vec::with_capacity(indices.len() * s * s);
        let mut labels = Vec::with_capacity(indices.len());
        let mut aug = augmentation;
        for &i in indices {
            let img = self
                .images
                .get(i)
                .ok_or_else(|| Error::invalid("batch", format!("index {i} out of range")))?;
            match aug.as_mut() {
                Some((policy, r)) => data.extend(augment(img, policy, *r).pixels.iter().map(|&v| T::of(v))),
                None => data.extend(img.pixels.iter().map(|&v| T::of(v))),
            }
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new([indices.len(), 1, s, s], data)?, labels))
    }
}

/// Index batches for one epoch: a permutation drawn from `(seed, epoch)`
/// cut into chunks of `batch_size`; the last chunk may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, rng::TAG_SHUFFLE, epoch as u64));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Sequential chunks without shuffling.
pub fn sequential_batches(n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    proptest::proptest! {
        #[test]
        fn every_entry_once_per_epoch(n in 1usize..200, bs in 1usize..40, seed: u64, epoch in 0usize..5) {
            let batches = epoch_batches(n, bs, seed, epoch);
            let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
            proptest::prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == bs));
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            proptest::prop_assert_eq!(batches.clone(), epoch_batches(n, bs, seed, epoch));
        }
    }

    #[test]
    fn epochs_reshuffle() {
        assert_ne!(epoch_batches(50, 50, 1, 0), epoch_batches(50, 50, 1, 1));
    }
}
