//! Gaussian fields and the StarMask built from them.

use std::collections::HashMap;
use std::sync::Arc;

use crate::{Error, Result};

/// How grid indices map to the coordinate fed to the Gaussian profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coords {
    /// Raw integer index `t` in `0..grid`.
    #[default]
    Grid,
    /// Pixel-centre distance folded onto the upper half of the grid:
    /// `grid/2 + |t + 0.5 - grid/2|`. Both halves of every row and column
    /// see the same coordinate, so the field is mirror-symmetric.
    Folded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    /// Kernel size; the profile peaks at `k / 2`.
    pub k: f64,
    pub sigma: f64,
    /// Side length of the square evaluation grid.
    pub grid: usize,
    pub coords: Coords,
}

impl GaussianSpec {
    pub fn new(k: f64, sigma: f64, grid: usize) -> Self {
        GaussianSpec {
            k,
            sigma,
            grid,
            coords: Coords::Grid,
        }
    }

    fn coordinate(&self, t: usize) -> f64 {
        match self.coords {
            Coords::Grid => t as f64,
            Coords::Folded => {
                let half = self.grid as f64 / 2.0;
                half + (t as f64 + 0.5 - half).abs()
            }
        }
    }

    /// 1-D profile `exp(-(x - k/2)^2 / (2 sigma^2))` over the grid.
    pub fn profile(&self) -> Vec<f64> {
        let two_var = 2.0 * self.sigma * self.sigma;
        (0..self.grid)
            .map(|t| {
                let d = self.coordinate(t) - self.k / 2.0;
                (-d * d / two_var).exp()
            })
            .collect()
    }
}

/// Separable 2-D Gaussian field `g(r) * g(c)`, row-major `grid x grid`.
pub fn gaussian_field(spec: &GaussianSpec) -> Result<Vec<f64>> {
    if !(spec.sigma > 0.0) {
        return Err(Error::invalid("gaussian_field", format!("sigma must be > 0, got {}", spec.sigma)));
    }
    if spec.grid == 0 {
        return Err(Error::invalid("gaussian_field", "empty grid"));
    }
    let g = spec.profile();
    Ok(g.iter().flat_map(|&r| g.iter().map(move |&c| r * c)).collect())
}

/// Mean pixel value of a mask.
pub fn effective_lambda(mask: &[f64]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::invalid("effective_lambda", "empty mask"));
    }
    if mask.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mask".into()));
    }
    Ok(mask.iter().sum::<f64>() / mask.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarMask {
    pub side: usize,
    /// Final mask, `lambda * sigmoid(field)`.
    pub g: Vec<f64>,
    /// Averaged Gaussian field.
    pub field: Vec<f64>,
    pub lambda: f64,
    /// Mean of `g`; the label mixing ratio on the star path.
    pub lambda_hat: f64,
}

impl StarMask {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.g[r * self.side + c]
    }
}

/// The three Gaussian components averaged into the StarMask field.
pub fn star_components(lambda: f64, side: usize) -> [GaussianSpec; 3] {
    let h = side as f64;
    let folded = |k: f64, sigma: f64| GaussianSpec {
        k,
        sigma,
        grid: side,
        coords: Coords::Folded,
    };
    [
        folded(h, lambda * h),
        folded(h, (1.0 - lambda) * h),
        folded(2.0 * h, lambda * h),
    ]
}

pub fn build_star_mask(lambda: f64, w: usize, h: usize) -> Result<StarMask> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("build_star_mask", format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if w != h {
        return Err(Error::shape("build_star_mask", "width (square images only)", h, w));
    }
    if h == 0 {
        return Err(Error::invalid("build_star_mask", "empty grid"));
    }
    let comps = star_components(lambda, h);
    let mut field = vec![0.0; h * h];
    for spec in &comps {
        for (m, v) in field.iter_mut().zip(gaussian_field(spec)?) {
            *m += v;
        }
    }
    let n = comps.len() as f64;
    field.iter_mut().for_each(|m| *m /= n);
    let g: Vec<f64> = field.iter().map(|&m| lambda / (1.0 + (-m).exp())).collect();
    let lambda_hat = effective_lambda(&g)?;
    Ok(StarMask {
        side: h,
        g,
        field,
        lambda,
        lambda_hat,
    })
}

/// Memo of StarMasks keyed on `(round(lambda * 1e4), side)`.
#[derive(Debug, Default)]
pub struct MaskCache {
    masks: HashMap<(u32, usize), Arc<StarMask>>,
}

pub const LAMBDA_QUANTUM: f64 = 1e-4;

impl MaskCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Mask for `lambda` quantized to [`LAMBDA_QUANTUM`]; the returned mask
    /// carries the quantized ratio.
    pub fn get(&mut self, lambda: f64, side: usize) -> Result<Arc<StarMask>> {
        let steps = (1.0 / LAMBDA_QUANTUM) as u32;
        let key = ((lambda / LAMBDA_QUANTUM).round() as u32).clamp(1, steps - 1);
        if let Some(m) = self.masks.get(&(key, side)) {
            return Ok(Arc::clone(m));
        }
        let mask = Arc::new(build_star_mask(key as f64 / steps as f64, side, side)?);
        self.masks.insert((key, side), Arc::clone(&mask));
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIGMOID_ONE: f64 = 0.731_058_578_630_004_9;

    #[test]
    fn field_peaks_at_grid_center() {
        for sigma in [5.0, 50.0, 224.0] {
            let f = gaussian_field(&GaussianSpec::new(224.0, sigma, 224)).unwrap();
            assert_eq!(f[112 * 224 + 112], 1.0);
            assert!(f.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn double_kernel_peaks_at_far_corner() {
        let f = gaussian_field(&GaussianSpec::new(448.0, 0.5 * 224.0, 224)).unwrap();
        let max = f.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(f[223 * 224 + 223], max);
        // direct evaluation of the oracle along the diagonal
        for t in 0..224 {
            let d = t as f64 - 224.0;
            let want = (-d * d / (2.0 * 112.0 * 112.0)).exp().powi(2);
            assert!((f[t * 224 + t] - want).abs() < 1e-15);
            if t > 0 {
                assert!(f[t * 224 + t] > f[(t - 1) * 224 + t - 1]);
            }
        }
    }

    #[test]
    fn wide_sigma_tends_to_one() {
        let f = gaussian_field(&GaussianSpec::new(224.0, 1e9, 224)).unwrap();
        assert!(f.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(gaussian_field(&GaussianSpec::new(224.0, 0.0, 224)).is_err());
    }

    #[test]
    fn half_lambda_mask_bounds() {
        let m = build_star_mask(0.5, 224, 224).unwrap();
        assert!(m.g.iter().all(|&v| v > 0.25 && v <= 0.5 * SIGMOID_ONE));
        assert!(m.field.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(m.lambda_hat > 0.25 && m.lambda_hat <= 0.5 * SIGMOID_ONE);
        assert_eq!(m.lambda_hat, effective_lambda(&m.g).unwrap());
    }

    #[test]
    fn mask_is_mirror_and_transpose_symmetric() {
        for lambda in [0.3, 0.5, 0.7] {
            let m = build_star_mask(lambda, 224, 224).unwrap();
            let h = 224;
            for r in 0..h {
                for c in 0..h {
                    let v = m.at(r, c);
                    assert!((v - m.at(c, r)).abs() < 1e-12);
                    assert!((v - m.at(h - 1 - r, c)).abs() < 1e-12);
                    assert!((v - m.at(r, h - 1 - c)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(build_star_mask(0.0, 8, 8).is_err());
        assert!(build_star_mask(1.0, 8, 8).is_err());
        assert!(build_star_mask(0.5, 8, 6).is_err());
        assert!(effective_lambda(&[]).is_err());
    }

    #[test]
    fn effective_lambda_basic_cases() {
        assert!((effective_lambda(&[0.4; 16]).unwrap() - 0.4).abs() < 1e-15);
        let checker: Vec<f64> = (0..64).map(|i| ((i / 8 + i % 8) % 2) as f64).collect();
        assert_eq!(effective_lambda(&checker).unwrap(), 0.5);
    }

    #[test]
    fn cache_quantizes_and_reuses() {
        let mut cache = MaskCache::new();
        let a = cache.get(0.500_04, 32).unwrap();
        let b = cache.get(0.499_96, 32).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.lambda, 0.5);
        assert_eq!(*a, build_star_mask(0.5, 32, 32).unwrap());
        cache.get(0.5, 64).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
