//! Vanilla Mixup and StarMix.
//!
//! A batch draws one ratio `lambda ~ Beta(alpha, alpha)` and one random
//! pairing. Inside the closed threshold band the batch is blended with a
//! StarMask `G` (`x = G x_i + (1 - G) x_j`) and labels are mixed with the
//! mask mean; outside it the plain convex combination is used.

mod mask;
pub mod preview;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

pub use mask::{
    build_star_mask, effective_lambda, gaussian_field, star_components, Coords, GaussianSpec, MaskCache, StarMask,
    LAMBDA_QUANTUM,
};

use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    /// Beta concentration.
    pub alpha: f64,
    pub threshold_lo: f64,
    pub threshold_hi: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            alpha: 1.0,
            threshold_lo: 0.3,
            threshold_hi: 0.7,
        }
    }
}

impl MixParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("mix params", format!("alpha must be > 0, got {}", self.alpha)));
        }
        // a band outside [0, 1] is legal and disables the star path
        let ok = |t: f64| t.is_finite();
        if !(ok(self.threshold_lo) && ok(self.threshold_hi) && self.threshold_lo <= self.threshold_hi) {
            return Err(Error::invalid(
                "mix params",
                format!(
                    "need finite threshold_lo <= threshold_hi, got [{}, {}]",
                    self.threshold_lo, self.threshold_hi
                ),
            ));
        }
        Ok(())
    }

    /// The closed band `[threshold_lo, threshold_hi]` selects the star path.
    pub fn select_path(&self, lambda: f64) -> MixPath {
        if self.threshold_lo <= lambda && lambda <= self.threshold_hi {
            MixPath::Star
        } else {
            MixPath::Vanilla
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixPath {
    Star,
    Vanilla,
}

impl MixPath {
    pub fn as_str(self) -> &'static str {
        match self {
            MixPath::Star => "star",
            MixPath::Vanilla => "vanilla",
        }
    }
}

pub fn sample_lambda<R: Rng + ?Sized>(params: &MixParams, rng: &mut R) -> Result<f64> {
    params.validate()?;
    let beta = Beta::new(params.alpha, params.alpha)
        .map_err(|e| Error::invalid("sample_lambda", e.to_string()))?;
    Ok(beta.sample(rng))
}

fn spatial(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match t.shape() {
        [.., h, w] if t.rank() >= 2 => Ok((*h, *w)),
        s => Err(Error::shape(op, "image rank", ">= 2", s.len())),
    }
}

fn check_pair<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, what, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

fn blend<T: Scalar>(a: &[T], b: &[T], w: T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| w * x + (T::one() - w) * y).collect()
}

/// `(lambda x_i + (1 - lambda) x_j, lambda y_i + (1 - lambda) y_j)`.
pub fn mixup_pair<T: Scalar>(
    xi: &Tensor<T>,
    yi: &Tensor<T>,
    xj: &Tensor<T>,
    yj: &Tensor<T>,
    lambda: f64,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_pair("mixup_pair", xi, xj, "image shape")?;
    check_pair("mixup_pair", yi, yj, "label shape")?;
    let l = T::of(lambda);
    Ok((
        Tensor::new(xi.shape().to_vec(), blend(xi.data(), xj.data(), l))?,
        Tensor::new(yi.shape().to_vec(), blend(yi.data(), yj.data(), l))?,
    ))
}

/// Mask blend of one pair; the mask is broadcast over every leading
/// (channel) dimension and labels are mixed with the mask mean.
pub fn starmix_pair<T: Scalar>(
    xi: &Tensor<T>,
    yi: &Tensor<T>,
    xj: &Tensor<T>,
    yj: &Tensor<T>,
    mask: &StarMask,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_pair("starmix_pair", xi, xj, "image shape")?;
    check_pair("starmix_pair", yi, yj, "label shape")?;
    let (h, w) = spatial("starmix_pair", xi)?;
    if h != mask.side || w != mask.side {
        return Err(Error::shape(
            "starmix_pair",
            "image side vs mask side",
            mask.side,
            format!("{h}x{w}"),
        ));
    }
    let x = blend_masked(xi.data(), xj.data(), &mask.g);
    let lh = T::of(mask.lambda_hat);
    Ok((
        Tensor::new(xi.shape().to_vec(), x)?,
        Tensor::new(yi.shape().to_vec(), blend(yi.data(), yj.data(), lh))?,
    ))
}

fn blend_masked<T: Scalar>(a: &[T], b: &[T], g: &[f64]) -> Vec<T> {
    let plane = g.len();
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&x, &y))| {
            let w = T::of(g[i % plane]);
            w * x + (T::one() - w) * y
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch<T> {
    pub images: Tensor<T>,
    pub soft_labels: Tensor<T>,
    pub path: MixPath,
    pub lambda_raw: f64,
    /// Mask mean on the star path, `lambda_raw` on the vanilla path.
    pub lambda_effective: f64,
    /// Sample `i` is paired with sample `permutation[i]`.
    pub permutation: Vec<usize>,
    pub mask: Option<Arc<StarMask>>,
}

/// Draws `lambda` and a pairing, then mixes the batch. `images` is
/// `[B,C,H,W]`, `labels` is `[B,K]`.
pub fn mix_batch<T: Scalar, R: Rng + ?Sized>(
    images: &Tensor<T>,
    labels: &Tensor<T>,
    params: &MixParams,
    rng: &mut R,
) -> Result<MixedBatch<T>> {
    Mixer::new(*params)?.mix(images, labels, rng)
}

/// Batch mixer holding the mask memo.
#[derive(Debug)]
pub struct Mixer {
    pub params: MixParams,
    star_enabled: bool,
    cache: MaskCache,
}

impl Mixer {
    pub fn new(params: MixParams) -> Result<Self> {
        params.validate()?;
        Ok(Mixer {
            params,
            star_enabled: true,
            cache: MaskCache::new(),
        })
    }

    /// A mixer that always takes the vanilla path.
    pub fn mixup_only(params: MixParams) -> Result<Self> {
        Ok(Mixer {
            star_enabled: false,
            ..Self::new(params)?
        })
    }

    pub fn mix<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        images: &Tensor<T>,
        labels: &Tensor<T>,
        rng: &mut R,
    ) -> Result<MixedBatch<T>> {
        let (b, ..) = images.dims4("mix_batch")?;
        if b < 2 {
            return Err(Error::invalid("mix_batch", format!("batch size must be >= 2, got {b}")));
        }
        let lambda = sample_lambda(&self.params, rng)?;
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(rng);
        self.mix_with(images, labels, lambda, perm)
    }

    /// Mixes with a given ratio and pairing.
    pub fn mix_with<T: Scalar>(
        &mut self,
        images: &Tensor<T>,
        labels: &Tensor<T>,
        lambda: f64,
        permutation: Vec<usize>,
    ) -> Result<MixedBatch<T>> {
        let (b, c, h, w) = images.dims4("mix_batch")?;
        let (lb, k) = labels.dims2("mix_batch")?;
        if lb != b {
            return Err(Error::shape("mix_batch", "label batch", b, lb));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("mix_batch", format!("lambda must lie in [0, 1], got {lambda}")));
        }
        let mut seen = vec![false; b];
        if permutation.len() != b || !permutation.iter().all(|&j| j < b && !std::mem::replace(&mut seen[j], true)) {
            return Err(Error::invalid("mix_batch", "pairing is not a permutation of the batch"));
        }
        let path = if self.star_enabled {
            self.params.select_path(lambda)
        } else {
            MixPath::Vanilla
        };
        let mask = match path {
            // lambda = 0 or 1 can only reach here with a degenerate band
            MixPath::Star if lambda > 0.0 && lambda < 1.0 => {
                if h != w {
                    return Err(Error::shape("mix_batch", "width (star path needs square images)", h, w));
                }
                Some(self.cache.get(lambda, h)?)
            }
            _ => None,
        };
        let path = if mask.is_some() { MixPath::Star } else { MixPath::Vanilla };
        let img = images.data();
        let lab = labels.data();
        let plane = c * h * w;
        let mut out_x = Vec::with_capacity(img.len());
        let mut out_y = Vec::with_capacity(lab.len());
        let lambda_effective = mask.as_ref().map_or(lambda, |m| m.lambda_hat);
        for (i, &j) in permutation.iter().enumerate() {
            let (xi, xj) = (&img[i * plane..(i + 1) * plane], &img[j * plane..(j + 1) * plane]);
            match &mask {
                Some(m) => out_x.extend(blend_masked(xi, xj, &m.g)),
                None => out_x.extend(blend(xi, xj, T::of(lambda))),
            }
            out_y.extend(blend(&lab[i * k..(i + 1) * k], &lab[j * k..(j + 1) * k], T::of(lambda_effective)));
        }
        Ok(MixedBatch {
            images: Tensor::new(images.shape().to_vec(), out_x)?,
            soft_labels: Tensor::new([b, k], out_y)?,
            path,
            lambda_raw: lambda,
            lambda_effective,
            permutation,
            mask,
        })
    }
}

/// `[B, classes]` one-hot rows.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros([labels.len(), classes]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::invalid("one_hot", format!("label {y} out of range for {classes} classes")));
        }
        t.data_mut()[i * classes + y] = T::one();
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn batch(b: usize, side: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
        let mut r = rng::stream(seed, 0);
        let x = Tensor::from_fn([b, 1, side, side], |_| r.random::<f64>());
        let y = one_hot(&(0..b).map(|i| i % 3).collect::<Vec<_>>(), 3).unwrap();
        (x, y)
    }

    #[test]
    fn mixup_endpoints_are_bit_exact() {
        let (x, y) = batch(2, 8, 1);
        let xi = Tensor::new([1, 8, 8], x.data()[..64].to_vec()).unwrap();
        let xj = Tensor::new([1, 8, 8], x.data()[64..].to_vec()).unwrap();
        let yi = Tensor::new([3], y.data()[..3].to_vec()).unwrap();
        let yj = Tensor::new([3], y.data()[3..].to_vec()).unwrap();
        assert_eq!(mixup_pair(&xi, &yi, &xj, &yj, 1.0).unwrap(), (xi.clone(), yi.clone()));
        assert_eq!(mixup_pair(&xi, &yi, &xj, &yj, 0.0).unwrap(), (xj.clone(), yj.clone()));
        let zeros = Tensor::zeros([1, 8, 8]);
        let twos = Tensor::full([1, 8, 8], 2.0);
        let (half, _) = mixup_pair(&zeros, &yi, &twos, &yj, 0.5).unwrap();
        assert!(half.data().iter().all(|&v| v == 1.0));
        assert!(mixup_pair(&xi, &yi, &Tensor::zeros([1, 8, 7]), &yj, 0.5).is_err());
    }

    #[test]
    fn starmix_of_equal_images_is_identity() {
        let (x, y) = batch(1, 16, 2);
        let xi = x.clone().reshape([1, 16, 16]).unwrap();
        let yi = y.clone().reshape([3]).unwrap();
        let m = build_star_mask(0.5, 16, 16).unwrap();
        let (xm, ym) = starmix_pair(&xi, &yi, &xi, &yi, &m).unwrap();
        for (a, b) in xm.data().iter().zip(xi.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ym, yi);
        let wrong = build_star_mask(0.5, 8, 8).unwrap();
        assert!(starmix_pair(&xi, &yi, &xi, &yi, &wrong).is_err());
    }

    #[test]
    fn forced_ratios_route_by_band() {
        let (x, y) = batch(4, 16, 3);
        let mut mixer = Mixer::new(MixParams::default()).unwrap();
        let low = mixer.mix_with(&x, &y, 0.2, vec![1, 0, 3, 2]).unwrap();
        assert_eq!(low.path, MixPath::Vanilla);
        assert_eq!(low.lambda_effective, 0.2);
        let mid = mixer.mix_with(&x, &y, 0.5, vec![1, 0, 3, 2]).unwrap();
        assert_eq!(mid.path, MixPath::Star);
        assert!(mid.lambda_effective > 0.25 && mid.lambda_effective <= 0.5 * 0.731_058_578_630_005);
        for lam in [0.3, 0.7] {
            assert_eq!(mixer.mix_with(&x, &y, lam, vec![0, 1, 2, 3]).unwrap().path, MixPath::Star);
        }
    }

    #[test]
    fn degenerate_band_is_plain_mixup() {
        let (x, y) = batch(4, 8, 4);
        let params = MixParams {
            threshold_lo: 0.0,
            threshold_hi: 0.0,
            ..MixParams::default()
        };
        let mut r = rng::stream(9, 0);
        for _ in 0..50 {
            let mb = mix_batch(&x, &y, &params, &mut r).unwrap();
            if mb.lambda_raw > 0.0 {
                assert_eq!(mb.path, MixPath::Vanilla);
                assert_eq!(mb.lambda_effective, mb.lambda_raw);
            }
        }
    }

    #[test]
    fn soft_labels_stay_normalized() {
        let (x, y) = batch(6, 12, 5);
        let mut r = rng::stream(5, 1);
        let mut mixer = Mixer::new(MixParams::default()).unwrap();
        for _ in 0..40 {
            let mb = mixer.mix(&x, &y, &mut r).unwrap();
            for row in mb.soft_labels.data().chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let mut p = mb.permutation.clone();
            p.sort_unstable();
            assert_eq!(p, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn star_path_rejects_non_square_and_tiny_batches() {
        let x = Tensor::<f64>::zeros([2, 1, 8, 6]);
        let y = one_hot(&[0, 1], 2).unwrap();
        let mut mixer = Mixer::new(MixParams::default()).unwrap();
        assert!(mixer.mix_with(&x, &y, 0.5, vec![1, 0]).is_err());
        assert!(mixer.mix_with(&x, &y, 0.9, vec![1, 0]).is_ok());
        let one = Tensor::<f64>::zeros([1, 1, 8, 8]);
        assert!(mixer.mix(&one, &one_hot(&[0], 2).unwrap(), &mut rng::stream(0, 0)).is_err());
        assert!(mixer.mix_with(&x, &y, 0.9, vec![0, 0]).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            MixParams { alpha: 0.0, ..MixParams::default() },
            MixParams { threshold_lo: 0.8, threshold_hi: 0.7, ..MixParams::default() },
            MixParams { threshold_hi: f64::NAN, ..MixParams::default() },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn out_of_range_band_matches_mixup_only() {
        let (x, y) = batch(5, 8, 6);
        let params = MixParams {
            threshold_lo: 1.1,
            threshold_hi: 1.2,
            ..MixParams::default()
        };
        let mut star = Mixer::new(params).unwrap();
        let mut plain = Mixer::mixup_only(MixParams::default()).unwrap();
        let (mut ra, mut rb) = (rng::stream(2, 4), rng::stream(2, 4));
        for _ in 0..30 {
            let a = star.mix(&x, &y, &mut ra).unwrap();
            let b = plain.mix(&x, &y, &mut rb).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.path, MixPath::Vanilla);
        }
    }
}
