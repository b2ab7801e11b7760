use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::{Error, Result, Scalar, Tensor};

/// A square single-channel image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray {
    pub side: usize,
    pub pixels: Vec<f64>,
}

impl Gray {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != side * side {
            return Err(Error::shape("gray image", "pixel count", side * side, pixels.len()));
        }
        Ok(Gray { side, pixels })
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn([1, self.side, self.side], |i| T::of(self.pixels[i]))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let axis = |d: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, fx) = axis(x, sw, dw);
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn luminance(img: &DynamicImage) -> (usize, usize, Vec<f64>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = if img.color().has_color() {
        img.to_rgb32f()
            .pixels()
            .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
            .collect()
    } else {
        img.to_luma32f().pixels().map(|p| p[0] as f64).collect()
    };
    (w, h, px)
}

/// Decodes an 8-bit grayscale or RGB image, collapses colour to luminance
/// and resizes to `side x side`.
pub fn load_gray(path: &Path, side: usize) -> Result<Gray> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h, px) = luminance(&img);
    if w == 0 || h == 0 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            msg: "empty image".into(),
        });
    }
    let pixels = if w == side && h == side {
        px
    } else {
        resize_bilinear(&px, w, h, side, side)
    };
    Gray::new(side, pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// `[1, side, side]` tensor in `[0, 1]`.
pub fn load_image<T: Scalar>(path: &Path, side: usize) -> Result<Tensor<T>> {
    Ok(load_gray(path, side)?.to_tensor())
}

/// Writes 8-bit grayscale as binary PGM (`.pgm`) or PNG (anything else).
pub fn save_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape("save_gray", "pixel count", width * height, pixels.len()));
    }
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
        buf.extend_from_slice(pixels);
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    } else {
        image::save_buffer_with_format(
            path,
            pixels,
            width as u32,
            height as u32,
            image::ExtendedColorType::L8,
            ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_white_load_to_extremes() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v, want) in [("b.png", 0u8, 0.0), ("w.pgm", 255u8, 1.0)] {
            let p = dir.path().join(name);
            save_gray(&p, 5, 7, &[v; 35]).unwrap();
            let t: Tensor<f64> = load_image(&p, 4).unwrap();
            assert_eq!(t.shape(), &[1, 4, 4]);
            assert!(t.data().iter().all(|&x| (x - want).abs() < 1e-7));
        }
    }

    #[test]
    fn rgb_collapses_by_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::save_buffer(&p, &[255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255], 2, 2, image::ExtendedColorType::Rgb8)
            .unwrap();
        let g = load_gray(&p, 2).unwrap();
        let want = [0.2126, 0.7152, 0.0722, 1.0];
        for (a, b) in g.pixels.iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn checkerboard_upsample_matches_direct_formula() {
        let n = 6;
        let src: Vec<f64> = (0..n * n).map(|i| ((i / n + i % n) % 2) as f64).collect();
        let out = resize_bilinear(&src, n, n, 2 * n, 2 * n);
        // direct evaluation: source coordinate (d + 0.5) / 2 - 0.5
        let sample = |y: f64, x: f64| -> f64 {
            let cy = y.clamp(0.0, (n - 1) as f64);
            let cx = x.clamp(0.0, (n - 1) as f64);
            let (y0, x0) = (cy.floor(), cx.floor());
            let (y1, x1) = ((y0 + 1.0).min((n - 1) as f64), (x0 + 1.0).min((n - 1) as f64));
            let v = |yy: f64, xx: f64| src[yy as usize * n + xx as usize];
            let (wy, wx) = (cy - y0, cx - x0);
            v(y0, x0) * (1.0 - wy) * (1.0 - wx)
                + v(y0, x1) * (1.0 - wy) * wx
                + v(y1, x0) * wy * (1.0 - wx)
                + v(y1, x1) * wy * wx
        };
        for y in 0..2 * n {
            for x in 0..2 * n {
                let want = sample((y as f64 + 0.5) / 2.0 - 0.5, (x as f64 + 0.5) / 2.0 - 0.5);
                assert!((out[y * 2 * n + x] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn corrupt_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image").unwrap();
        let err = load_gray(&p, 4).unwrap_err();
        assert!(err.to_string().contains("bad.png"));
    }
}
