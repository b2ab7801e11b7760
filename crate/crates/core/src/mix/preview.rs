//! Mask preview export: an 8-bit grayscale image of `G / lambda` plus a
//! sidecar text file with the mixing record.

use std::fmt::Write as _;
use std::path::Path;

use super::{MixParams, StarMask};
use crate::data::image_io::save_gray;
use crate::{Error, Result};

/// `G / lambda` scaled to `[0, 255]`.
pub fn mask_pixels(mask: &StarMask) -> Vec<u8> {
    mask.g
        .iter()
        .map(|&v| (v / mask.lambda * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn sidecar_text(mask: &StarMask, params: &MixParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "lambda={}", mask.lambda);
    let _ = writeln!(s, "lambda_hat={}", mask.lambda_hat);
    let _ = writeln!(s, "threshold_lo={}", params.threshold_lo);
    let _ = writeln!(s, "threshold_hi={}", params.threshold_hi);
    let _ = writeln!(s, "path={}", params.select_path(mask.lambda).as_str());
    let _ = writeln!(s, "side={}", mask.side);
    s
}

/// Writes `image_path` (format from its extension, `.pgm` or `.png`) and a
/// sibling `.txt` sidecar.
pub fn write_mask_preview(mask: &StarMask, params: &MixParams, image_path: &Path) -> Result<()> {
    save_gray(image_path, mask.side, mask.side, &mask_pixels(mask))?;
    let side = image_path.with_extension("txt");
    std::fs::write(&side, sidecar_text(mask, params)).map_err(|e| Error::io(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mix::build_star_mask;

    #[test]
    fn pixels_scale_by_lambda() {
        let m = build_star_mask(0.4, 32, 32).unwrap();
        let px = mask_pixels(&m);
        let mean = px.iter().map(|&p| p as f64).sum::<f64>() / px.len() as f64 / 255.0;
        assert!((mean - m.lambda_hat / 0.4).abs() < 2.0 / 255.0);
        assert!(px.iter().all(|&p| p > 127 && p <= 187));
    }

    #[test]
    fn sidecar_records_path() {
        let m = build_star_mask(0.2, 8, 8).unwrap();
        let txt = sidecar_text(&m, &MixParams::default());
        assert!(txt.contains("path=vanilla"));
        assert!(txt.contains("lambda=0.2\n"));
    }
}
