//! Direct 2-D convolution (cross-correlation) kernels with stride, dilation,
//! groups and zero padding.
//!
//! Loops run channel-pair / kernel-tap outermost and output columns innermost,
//! so a stride-1 convolution reduces to contiguous axpy updates. Summation
//! order is fixed, which keeps results bit-reproducible.

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that yields `ceil(in / stride)` outputs; odd totals put
    /// the extra row/column at the bottom/right.
    Same,
    Explicit {
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    },
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Padding::Explicit {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: Padding::Same,
        }
    }
}

impl Conv2dSpec {
    pub fn same(stride: usize, dilation: usize, groups: usize) -> Self {
        Conv2dSpec {
            stride,
            dilation,
            groups,
            padding: Padding::Same,
        }
    }
}

/// Fully resolved geometry of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

fn same_pad(size: usize, k: usize, stride: usize, dilation: usize) -> (usize, usize, usize) {
    let out = size.div_ceil(stride);
    let span = dilation * (k - 1) + 1;
    let total = ((out - 1) * stride + span).saturating_sub(size);
    (total / 2, total - total / 2, out)
}

fn explicit_out(
    size: usize,
    lo: usize,
    hi: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    dim: &str,
) -> Result<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = size + lo + hi;
    if span > padded {
        return Err(Error::shape(
            "conv2d",
            format!("{dim} (kernel span vs padded input)"),
            format!("<= {padded}"),
            span,
        ));
    }
    Ok((padded - span) / stride + 1)
}

impl ConvGeom {
    pub fn resolve(input: &[usize], weight: &[usize], spec: Conv2dSpec) -> Result<Self> {
        let [batch, cin, h, w] = input[..] else {
            return Err(Error::shape("conv2d", "input rank", 4, input.len()));
        };
        let [cout, cin_g, kh, kw] = weight[..] else {
            return Err(Error::shape("conv2d", "weight rank", 4, weight.len()));
        };
        if spec.stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be >= 1"));
        }
        if spec.dilation == 0 {
            return Err(Error::invalid("conv2d", "dilation must be >= 1"));
        }
        if spec.groups == 0 || cin % spec.groups != 0 {
            return Err(Error::shape(
                "conv2d",
                "input channels (divisibility by groups)",
                format!("multiple of {}", spec.groups),
                cin,
            ));
        }
        if cout % spec.groups != 0 {
            return Err(Error::shape(
                "conv2d",
                "output channels (divisibility by groups)",
                format!("multiple of {}", spec.groups),
                cout,
            ));
        }
        if cin_g != cin / spec.groups {
            return Err(Error::shape(
                "conv2d",
                "weight in-channels per group",
                cin / spec.groups,
                cin_g,
            ));
        }
        if kh == 0 || kw == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("conv2d", "zero-sized kernel or input"));
        }
        let (pad_top, pad_left, oh, ow) = match spec.padding {
            Padding::Same => {
                let (t, _, oh) = same_pad(h, kh, spec.stride, spec.dilation);
                let (l, _, ow) = same_pad(w, kw, spec.stride, spec.dilation);
                (t, l, oh, ow)
            }
            Padding::Explicit {
                top,
                bottom,
                left,
                right,
            } => {
                let oh = explicit_out(h, top, bottom, kh, spec.stride, spec.dilation, "height")?;
                let ow = explicit_out(w, left, right, kw, spec.stride, spec.dilation, "width")?;
                (top, left, oh, ow)
            }
        };
        Ok(ConvGeom {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride: spec.stride,
            dilation: spec.dilation,
            groups: spec.groups,
            pad_top,
            pad_left,
            oh,
            ow,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.cout, self.oh, self.ow]
    }

    pub fn weight_len(&self) -> usize {
        self.cout * (self.cin / self.groups) * self.kh * self.kw
    }

    /// Output index range `[lo, hi)` whose tap at kernel offset `k` lands
    /// inside the input along one axis.
    #[inline]
    fn valid_range(&self, k: usize, pad: usize, size: usize, out: usize) -> (usize, usize) {
        // in = o*stride + k*dilation - pad, need 0 <= in < size
        let offset = (k * self.dilation) as isize - pad as isize;
        let s = self.stride as isize;
        let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
        let hi_excl = size as isize - offset; // o*s < hi_excl
        let hi = if hi_excl <= 0 { 0 } else { (hi_excl + s - 1) / s };
        let lo = lo.max(0) as usize;
        let hi = (hi.max(0) as usize).min(out);
        (lo, hi.max(lo))
    }

    /// Visits every (batch, out-channel, in-channel, tap) with the valid
    /// output ranges precomputed.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(Tap)) {
        let cin_g = self.cin / self.groups;
        let cout_g = self.cout / self.groups;
        let rows: Vec<(usize, usize)> = (0..self.kh)
            .map(|ky| self.valid_range(ky, self.pad_top, self.h, self.oh))
            .collect();
        let cols: Vec<(usize, usize)> = (0..self.kw)
            .map(|kx| self.valid_range(kx, self.pad_left, self.w, self.ow))
            .collect();
        for b in 0..self.batch {
            for co in 0..self.cout {
                let g = co / cout_g;
                for cil in 0..cin_g {
                    let ci = g * cin_g + cil;
                    for ky in 0..self.kh {
                        let (oy0, oy1) = rows[ky];
                        if oy0 >= oy1 {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let (ox0, ox1) = cols[kx];
                            if ox0 >= ox1 {
                                continue;
                            }
                            f(Tap {
                                b,
                                co,
                                ci,
                                widx: ((co * cin_g + cil) * self.kh + ky) * self.kw + kx,
                                ky,
                                kx,
                                oy: (oy0, oy1),
                                ox: (ox0, ox1),
                            });
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> usize {
        oy * self.stride + ky * self.dilation - self.pad_top
    }

    #[inline]
    fn in_col(&self, ox: usize, kx: usize) -> usize {
        ox * self.stride + kx * self.dilation - self.pad_left
    }
}

struct Tap {
    b: usize,
    co: usize,
    ci: usize,
    widx: usize,
    ky: usize,
    kx: usize,
    oy: (usize, usize),
    ox: (usize, usize),
}

pub fn forward<T: Scalar>(geom: &ConvGeom, input: &[T], weight: &[T]) -> Vec<T> {
    let g = *geom;
    let mut out = vec![T::zero(); g.batch * g.cout * g.oh * g.ow];
    g.for_each_tap(|t| {
        let wv = weight[t.widx];
        let in_base = (t.b * g.cin + t.ci) * g.h * g.w;
        let out_base = (t.b * g.cout + t.co) * g.oh * g.ow;
        for oy in t.oy.0..t.oy.1 {
            let iy = g.in_row(oy, t.ky);
            let orow = &mut out[out_base + oy * g.ow..out_base + (oy + 1) * g.ow];
            let irow = &input[in_base + iy * g.w..in_base + (iy + 1) * g.w];
            if g.stride == 1 {
                let ix0 = g.in_col(t.ox.0, t.kx);
                let n = t.ox.1 - t.ox.0;
                for (o, &i) in orow[t.ox.0..t.ox.1].iter_mut().zip(&irow[ix0..ix0 + n]) {
                    *o += wv * i;
                }
            } else {
                for ox in t.ox.0..t.ox.1 {
                    orow[ox] += wv * irow[g.in_col(ox, t.kx)];
                }
            }
        }
    });
    out
}

/// Gradient with respect to the input.
pub fn backward_input<T: Scalar>(geom: &ConvGeom, grad_out: &[T], weight: &[T]) -> Vec<T> {
    let g = *geom;
    let mut gin = vec![T::zero(); g.batch * g.cin * g.h * g.w];
    g.for_each_tap(|t| {
        let wv = weight[t.widx];
        let in_base = (t.b * g.cin + t.ci) * g.h * g.w;
        let out_base = (t.b * g.cout + t.co) * g.oh * g.ow;
        for oy in t.oy.0..t.oy.1 {
            let iy = g.in_row(oy, t.ky);
            let orow = &grad_out[out_base + oy * g.ow..out_base + (oy + 1) * g.ow];
            let irow = &mut gin[in_base + iy * g.w..in_base + (iy + 1) * g.w];
            if g.stride == 1 {
                let ix0 = g.in_col(t.ox.0, t.kx);
                let n = t.ox.1 - t.ox.0;
                for (i, &o) in irow[ix0..ix0 + n].iter_mut().zip(&orow[t.ox.0..t.ox.1]) {
                    *i += wv * o;
                }
            } else {
                for ox in t.ox.0..t.ox.1 {
                    irow[g.in_col(ox, t.kx)] += wv * orow[ox];
                }
            }
        }
    });
    gin
}

/// Gradient with respect to the weight.
pub fn backward_weight<T: Scalar>(geom: &ConvGeom, grad_out: &[T], input: &[T]) -> Vec<T> {
    let g = *geom;
    let mut gw = vec![T::zero(); g.weight_len()];
    g.for_each_tap(|t| {
        let in_base = (t.b * g.cin + t.ci) * g.h * g.w;
        let out_base = (t.b * g.cout + t.co) * g.oh * g.ow;
        let mut acc = T::zero();
        for oy in t.oy.0..t.oy.1 {
            let iy = g.in_row(oy, t.ky);
            let orow = &grad_out[out_base + oy * g.ow..out_base + (oy + 1) * g.ow];
            let irow = &input[in_base + iy * g.w..in_base + (iy + 1) * g.w];
            if g.stride == 1 {
                let ix0 = g.in_col(t.ox.0, t.kx);
                let n = t.ox.1 - t.ox.0;
                for (&o, &i) in orow[t.ox.0..t.ox.1].iter().zip(&irow[ix0..ix0 + n]) {
                    acc += o * i;
                }
            } else {
                for ox in t.ox.0..t.ox.1 {
                    acc += orow[ox] * irow[g.in_col(ox, t.kx)];
                }
            }
        }
        gw[t.widx] += acc;
    });
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent nested-loop oracle over the padded coordinate system.
    fn oracle(
        input: &[f64],
        (b, cin, h, w): (usize, usize, usize, usize),
        weight: &[f64],
        (cout, kh, kw): (usize, usize, usize),
        stride: usize,
        dil: usize,
        groups: usize,
        (pt, pl, oh, ow): (usize, usize, usize, usize),
    ) -> Vec<f64> {
        let cin_g = cin / groups;
        let cout_g = cout / groups;
        let mut out = vec![0.0; b * cout * oh * ow];
        for n in 0..b {
            for co in 0..cout {
                let grp = co / cout_g;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = 0.0;
                        for cil in 0..cin_g {
                            let ci = grp * cin_g + cil;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky * dil) as isize - pt as isize;
                                    let ix = (ox * stride + kx * dil) as isize - pl as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let iv = input[((n * cin + ci) * h + iy as usize) * w + ix as usize];
                                    let wv = weight[((co * cin_g + cil) * kh + ky) * kw + kx];
                                    s += iv * wv;
                                }
                            }
                        }
                        out[((n * cout + co) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn ones_center_is_nine() {
        let g = ConvGeom::resolve(&[1, 1, 3, 3], &[1, 1, 3, 3], Conv2dSpec::default()).unwrap();
        let out = forward(&g, &[1.0f64; 9], &[1.0; 9]);
        assert_eq!(g.output_shape(), [1, 1, 3, 3]);
        assert_eq!(out[4], 9.0);
        assert_eq!(out[0], 4.0);
    }

    #[test]
    fn depthwise_impulse_is_identity() {
        let input = lcg(3, 2 * 3 * 6 * 6);
        let mut weight = vec![0.0f64; 3 * 5 * 5];
        for c in 0..3 {
            weight[c * 25 + 12] = 1.0;
        }
        let g = ConvGeom::resolve(&[2, 3, 6, 6], &[3, 1, 5, 5], Conv2dSpec::same(1, 1, 3)).unwrap();
        assert_eq!(forward(&g, &input, &weight), input);
    }

    #[test]
    fn dilated_ramp_matches_oracle() {
        let input: Vec<f64> = (0..25).map(|v| v as f64).collect();
        let weight = lcg(11, 9);
        let g = ConvGeom::resolve(&[1, 1, 5, 5], &[1, 1, 3, 3], Conv2dSpec::same(1, 2, 1)).unwrap();
        assert_eq!((g.pad_top, g.pad_left, g.oh, g.ow), (2, 2, 5, 5));
        let got = forward(&g, &input, &weight);
        let want = oracle(&input, (1, 1, 5, 5), &weight, (1, 3, 3), 1, 2, 1, (2, 2, 5, 5));
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strided_grouped_and_oversized_kernels_match_oracle() {
        let cases = [
            // (input dims, cout, k, stride, dil, groups)
            ((2, 4, 9, 9), 4, 3, 2, 1, 4),
            ((1, 4, 7, 7), 6, 3, 1, 3, 2),
            ((2, 3, 5, 5), 3, 13, 1, 1, 3),
            ((1, 2, 8, 6), 4, 1, 2, 1, 1),
            ((1, 2, 7, 7), 2, 5, 2, 2, 1),
        ];
        for (i, &((b, cin, h, w), cout, k, s, d, grp)) in cases.iter().enumerate() {
            let input = lcg(i as u64, b * cin * h * w);
            let weight = lcg(100 + i as u64, cout * (cin / grp) * k * k);
            let g = ConvGeom::resolve(&[b, cin, h, w], &[cout, cin / grp, k, k], Conv2dSpec::same(s, d, grp))
                .unwrap();
            let got = forward(&g, &input, &weight);
            let want = oracle(
                &input,
                (b, cin, h, w),
                &weight,
                (cout, k, k),
                s,
                d,
                grp,
                (g.pad_top, g.pad_left, g.oh, g.ow),
            );
            assert_eq!(got.len(), want.len());
            for (a, e) in got.iter().zip(&want) {
                assert!((a - e).abs() < 1e-10, "case {i}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn explicit_padding_output_size() {
        let spec = Conv2dSpec {
            stride: 2,
            dilation: 1,
            groups: 1,
            padding: Padding::uniform(1),
        };
        let g = ConvGeom::resolve(&[1, 1, 224, 224], &[8, 1, 3, 3], spec).unwrap();
        assert_eq!((g.oh, g.ow), (112, 112));
    }

    #[test]
    fn oversized_kernel_needs_same_padding() {
        let spec = Conv2dSpec {
            padding: Padding::uniform(0),
            ..Conv2dSpec::default()
        };
        let err = ConvGeom::resolve(&[1, 1, 7, 7], &[1, 1, 13, 13], spec).unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
        assert!(ConvGeom::resolve(&[1, 1, 7, 7], &[1, 1, 13, 13], Conv2dSpec::default()).is_ok());
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let err = ConvGeom::resolve(&[1, 3, 5, 5], &[2, 2, 3, 3], Conv2dSpec::default()).unwrap_err();
        assert!(err.to_string().contains("in-channels"), "{err}");
        let err = ConvGeom::resolve(&[1, 3, 5, 5], &[3, 1, 3, 3], Conv2dSpec::same(1, 1, 2)).unwrap_err();
        assert!(err.to_string().contains("groups"), "{err}");
    }
}
