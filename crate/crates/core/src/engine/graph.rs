//! Recording graph for reverse-mode differentiation.
//!
//! Every op appends a node holding its output value plus whatever it needs
//! for the backward pass. Nodes are stored in creation order, which is a
//! topological order, so backward is a single reverse sweep.

use super::conv::{self, Conv2dSpec, ConvGeom};
use super::param::{NormState, ParamId, ParamStore};
use crate::{Error, Result, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, geom: ConvGeom },
    BatchNorm { input: Var, scale: Var, shift: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Relu(Var),
    Silu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    ChannelBias { input: Var, bias: Var },
    Linear { input: Var, weight: Var, bias: Var },
    GlobalAvgPool(Var),
    SoftCrossEntropy { logits: Var, probs: Vec<T>, labels: Vec<T> },
    SumAll(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backpropagated: bool,
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{op} output")))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward root with respect to `v`, if reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// A constant input leaf.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Copies a parameter into the graph as a leaf linked back to the store.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let mut value = store.get(id).tensor.clone();
        value.clear_grad();
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, spec: Conv2dSpec) -> Result<Var> {
        let geom = ConvGeom::resolve(self.value(input).shape(), self.value(weight).shape(), spec)?;
        let out = conv::forward(&geom, self.value(input).data(), self.value(weight).data());
        check_finite("conv2d", &out)?;
        let t = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(t, Op::Conv2d { input, weight, geom }))
    }

    /// Per-channel batch normalization. Train mode normalizes with the batch
    /// statistics and folds them into `stats`; eval mode uses `stats`.
    pub fn batchnorm2d(
        &mut self,
        input: Var,
        scale: Var,
        shift: Var,
        stats: &mut NormState<T>,
        mode: Mode,
    ) -> Result<Var> {
        let (b, c, h, w) = self.value(input).dims4("batchnorm2d")?;
        for (what, v) in [("scale", scale), ("shift", shift)] {
            if self.value(v).numel() != c {
                return Err(Error::shape("batchnorm2d", format!("{what} channels"), c, self.value(v).numel()));
            }
        }
        if stats.mean.len() != c {
            return Err(Error::shape("batchnorm2d", "running-stat channels", c, stats.mean.len()));
        }
        let n = b * h * w;
        if mode == Mode::Train && n < 2 {
            return Err(Error::invalid(
                "batchnorm2d",
                "train mode needs more than one value per channel (batch 1 with spatial size 1)",
            ));
        }
        let x = self.value(input).data();
        let hw = h * w;
        let eps = T::of(BN_EPS);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        if mode == Mode::Train {
            let nf = T::of(n as f64);
            for ch in 0..c {
                let mut s = T::zero();
                for bi in 0..b {
                    s += x[(bi * c + ch) * hw..(bi * c + ch + 1) * hw].iter().copied().sum::<T>();
                }
                let m = s / nf;
                let mut v = T::zero();
                for bi in 0..b {
                    for &xv in &x[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                        v += (xv - m) * (xv - m);
                    }
                }
                mean[ch] = m;
                var[ch] = v / nf;
            }
            let mom = T::of(BN_MOMENTUM);
            let unbias = nf / T::of((n - 1) as f64);
            for ch in 0..c {
                stats.mean[ch] = (T::one() - mom) * stats.mean[ch] + mom * mean[ch];
                stats.var[ch] = (T::one() - mom) * stats.var[ch] + mom * var[ch] * unbias;
            }
        } else {
            mean.copy_from_slice(&stats.mean);
            var.copy_from_slice(&stats.var);
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let sc = self.value(scale).data();
        let sh = self.value(shift).data();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (x[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = sc[ch] * xh + sh[ch];
                }
            }
        }
        check_finite("batchnorm2d", &out)?;
        let shape = self.value(input).shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x))
    }

    /// `z * sigmoid(z)`.
    pub fn silu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|z| z * sigmoid(z));
        self.push(t, Op::Silu(x))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, "operand shape", format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a per-channel bias to a `[B,C,H,W]` map.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(input).dims4("channel_bias")?;
        if self.value(bias).numel() != c {
            return Err(Error::shape("channel_bias", "bias channels", c, self.value(bias).numel()));
        }
        let bv = self.value(bias).data();
        let mut out = self.value(input).data().to_vec();
        for bi in 0..b {
            for ch in 0..c {
                for v in &mut out[(bi * c + ch) * h * w..(bi * c + ch + 1) * h * w] {
                    *v += bv[ch];
                }
            }
        }
        let t = Tensor::new(self.value(input).shape().to_vec(), out)?;
        Ok(self.push(t, Op::ChannelBias { input, bias }))
    }

    /// `x W^T + b` with `W` shaped `[out, in]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (b, f) = self.value(input).dims2("linear")?;
        let (c, fw) = self.value(weight).dims2("linear")?;
        if f != fw {
            return Err(Error::shape("linear", "feature dimension", fw, f));
        }
        if self.value(bias).numel() != c {
            return Err(Error::shape("linear", "bias length", c, self.value(bias).numel()));
        }
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let bs = self.value(bias).data();
        let mut out = vec![T::zero(); b * c];
        for i in 0..b {
            let row = &x[i * f..(i + 1) * f];
            for j in 0..c {
                let mut acc = bs[j];
                for (&xv, &wv) in row.iter().zip(&wt[j * f..(j + 1) * f]) {
                    acc += xv * wv;
                }
                out[i * c + j] = acc;
            }
        }
        check_finite("linear", &out)?;
        Ok(self.push(Tensor::new([b, c], out)?, Op::Linear { input, weight, bias }))
    }

    /// Spatial mean: `[B,C,H,W] -> [B,C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(input).dims4("global_avg_pool")?;
        let hw = h * w;
        let inv = T::of(1.0 / hw as f64);
        let x = self.value(input).data();
        let out = (0..b * c).map(|i| x[i * hw..(i + 1) * hw].iter().copied().sum::<T>() * inv).collect();
        Ok(self.push(Tensor::new([b, c], out)?, Op::GlobalAvgPool(input)))
    }

    /// Batch mean of `-sum_c y_c log softmax(z)_c`. Label rows must sum to 1.
    pub fn soft_cross_entropy(&mut self, logits: Var, labels: &Tensor<T>) -> Result<Var> {
        let (b, c) = self.value(logits).dims2("soft_cross_entropy")?;
        if labels.shape() != [b, c] {
            return Err(Error::shape(
                "soft_cross_entropy",
                "label shape",
                format!("{:?}", [b, c]),
                format!("{:?}", labels.shape()),
            ));
        }
        let y = labels.data();
        for i in 0..b {
            let s: f64 = y[i * c..(i + 1) * c].iter().map(|v| v.f64()).sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(
                    "soft_cross_entropy",
                    format!("label row {i} sums to {s}, expected 1"),
                ));
            }
        }
        let z = self.value(logits).data();
        let mut probs = vec![T::zero(); b * c];
        let mut loss = T::zero();
        for i in 0..b {
            let row = &z[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let se: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + se.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
                loss -= y[i * c + j] * (row[j] - lse);
            }
        }
        loss /= T::of(b as f64);
        if !loss.is_finite() {
            return Err(Error::NonFinite("soft_cross_entropy loss".into()));
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftCrossEntropy {
                logits,
                probs,
                labels: y.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// Backpropagates from a scalar `loss` and accumulates the gradient of
    /// every parameter of `store` into its tensor. Parameters that are not
    /// reachable from `loss` receive an exact zero gradient.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Graph(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_seeded(loss, vec![T::one()])?;
        for p in store.iter_mut() {
            if p.tensor.grad().is_none() {
                let n = p.tensor.numel();
                p.tensor.set_grad(vec![T::zero(); n])?;
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(id), Some(g)) = (node.param, self.grads[i].as_ref()) {
                store.get_mut(id).tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Backpropagates an explicit output cotangent from any node; gradients
    /// are read back with [`Graph::grad`].
    pub fn backward_seeded(&mut self, root: Var, seed: Vec<T>) -> Result<()> {
        if self.backpropagated {
            return Err(Error::Graph("backward already ran on this graph; build a new graph".into()));
        }
        if seed.len() != self.value(root).numel() {
            return Err(Error::shape("backward", "seed length", self.value(root).numel(), seed.len()));
        }
        self.backpropagated = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            self.backward_node(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_node(&self, i: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>) {
            match &mut grads[v.0] {
                Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
                slot => *slot = Some(delta),
            }
        }
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, geom } => {
                let gi = conv::backward_input(geom, gout, self.value(*weight).data());
                let gw = conv::backward_weight(geom, gout, self.value(*input).data());
                acc(grads, *input, gi);
                acc(grads, *weight, gw);
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c, h, w) = self.value(*input).dims4("batchnorm2d").expect("checked");
                let hw = h * w;
                let sc = self.value(*scale).data();
                let mut dscale = vec![T::zero(); c];
                let mut dshift = vec![T::zero(); c];
                for bi in 0..b {
                    for ch in 0..c {
                        let base = (bi * c + ch) * hw;
                        for k in base..base + hw {
                            dscale[ch] += gout[k] * xhat[k];
                            dshift[ch] += gout[k];
                        }
                    }
                }
                let mut dx = vec![T::zero(); gout.len()];
                let nf = T::of((b * hw) as f64);
                for bi in 0..b {
                    for ch in 0..c {
                        let base = (bi * c + ch) * hw;
                        let k0 = sc[ch] * inv_std[ch];
                        for k in base..base + hw {
                            dx[k] = if *batch_stats {
                                k0 / nf * (nf * gout[k] - dshift[ch] - xhat[k] * dscale[ch])
                            } else {
                                k0 * gout[k]
                            };
                        }
                    }
                }
                acc(grads, *input, dx);
                acc(grads, *scale, dscale);
                acc(grads, *shift, dshift);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let d = xv.iter().zip(gout).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
                acc(grads, *x, d);
            }
            Op::Silu(x) => {
                let xv = self.value(*x).data();
                let d = xv
                    .iter()
                    .zip(gout)
                    .map(|(&z, &g)| {
                        let s = sigmoid(z);
                        g * s * (T::one() + z * (T::one() - s))
                    })
                    .collect();
                acc(grads, *x, d);
            }
            Op::Add(a, b) => {
                acc(grads, *a, gout.to_vec());
                acc(grads, *b, gout.to_vec());
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = gout.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let db = gout.iter().zip(av).map(|(&g, &x)| g * x).collect();
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::ChannelBias { input, bias } => {
                let (b, c, h, w) = self.value(*input).dims4("channel_bias").expect("checked");
                let hw = h * w;
                let mut db = vec![T::zero(); c];
                for bi in 0..b {
                    for ch in 0..c {
                        db[ch] += gout[(bi * c + ch) * hw..(bi * c + ch + 1) * hw].iter().copied().sum::<T>();
                    }
                }
                acc(grads, *input, gout.to_vec());
                acc(grads, *bias, db);
            }
            Op::Linear { input, weight, bias } => {
                let (b, f) = self.value(*input).dims2("linear").expect("checked");
                let c = self.value(*bias).numel();
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                let mut dx = vec![T::zero(); b * f];
                let mut dw = vec![T::zero(); c * f];
                let mut db = vec![T::zero(); c];
                for i in 0..b {
                    for j in 0..c {
                        let g = gout[i * c + j];
                        db[j] += g;
                        for k in 0..f {
                            dx[i * f + k] += g * wt[j * f + k];
                            dw[j * f + k] += g * x[i * f + k];
                        }
                    }
                }
                acc(grads, *input, dx);
                acc(grads, *weight, dw);
                acc(grads, *bias, db);
            }
            Op::GlobalAvgPool(x) => {
                let (b, c, h, w) = self.value(*x).dims4("global_avg_pool").expect("checked");
                let hw = h * w;
                let inv = T::of(1.0 / hw as f64);
                let mut d = vec![T::zero(); b * c * hw];
                for i in 0..b * c {
                    d[i * hw..(i + 1) * hw].iter_mut().for_each(|v| *v = gout[i] * inv);
                }
                acc(grads, *x, d);
            }
            Op::SoftCrossEntropy { logits, probs, labels } => {
                let (b, _) = self.value(*logits).dims2("soft_cross_entropy").expect("checked");
                let k = gout[0] / T::of(b as f64);
                let d = probs.iter().zip(labels).map(|(&p, &y)| (p - y) * k).collect();
                acc(grads, *logits, d);
            }
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                acc(grads, *x, vec![gout[0]; n]);
            }
        }
    }
}
