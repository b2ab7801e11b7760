//! LaKNet: a large-kernel gated convolutional classifier.
//!
//! ```text
//! stem -> [embedding -> LaKBlock x depth] -> neck -> ... -> stage 4 -> GAP -> linear
//! ```
//!
//! A LaKBlock computes `Z + BN(K * g)` where `K` is the sum of a large
//! depthwise kernel, a small depthwise kernel and dilated depthwise 3x3
//! kernels, and `g = ReLU(conv1x1(Z) + b)` is the gate.

mod config;

use rand::Rng;

use crate::engine::{
    kaiming, trunc_normal, Checkpoint, Conv2dSpec, Graph, Mode, NormState, ParamId, ParamStore, Var,
};
use crate::{rng, Error, Result, Scalar, Tensor};

pub use config::{LaKNetConfig, NUM_STAGES};

/// Initial scale of the norm closing each LaKBlock's residual branch.
pub const BLOCK_NORM_INIT: f64 = 0.1;

/// Batch-norm affine parameters plus the index of its running statistics.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub state: usize,
}

/// Registers parameters and running statistics while a network is built.
pub struct Builder<'a, T, R: ?Sized> {
    pub params: &'a mut ParamStore<T>,
    pub norms: &'a mut Vec<NormState<T>>,
    pub rng: &'a mut R,
}

impl<T: Scalar, R: Rng + ?Sized> Builder<'_, T, R> {
    pub fn conv(&mut self, name: &str, out: usize, in_per_group: usize, k: usize) -> Result<ParamId> {
        let w = kaiming([out, in_per_group, k, k], in_per_group * k * k, self.rng);
        self.params.add(format!("{name}.weight"), w, false)
    }

    pub fn bias(&mut self, name: &str, channels: usize) -> Result<ParamId> {
        self.params.add(format!("{name}.bias"), Tensor::zeros([channels]), true)
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Result<Norm> {
        self.norm_scaled(name, channels, 1.0)
    }

    pub fn norm_scaled(&mut self, name: &str, channels: usize, scale: f64) -> Result<Norm> {
        let scale = self.params.add(format!("{name}.scale"), Tensor::full([channels], T::of(scale)), true)?;
        let shift = self.params.add(format!("{name}.shift"), Tensor::zeros([channels]), true)?;
        self.norms.push(NormState::new(name, channels));
        Ok(Norm {
            scale,
            shift,
            state: self.norms.len() - 1,
        })
    }
}

/// Graph plus the parameter and running-stat storage of one forward pass.
pub struct Ctx<'a, T> {
    pub graph: &'a mut Graph<T>,
    pub params: &'a ParamStore<T>,
    pub norms: &'a mut [NormState<T>],
    pub mode: Mode,
}

impl<T: Scalar> Ctx<'_, T> {
    pub fn param(&mut self, id: ParamId) -> Var {
        self.graph.param(self.params, id)
    }

    pub fn conv(&mut self, x: Var, weight: ParamId, spec: Conv2dSpec) -> Result<Var> {
        let w = self.param(weight);
        self.graph.conv2d(x, w, spec)
    }

    pub fn norm(&mut self, x: Var, n: Norm) -> Result<Var> {
        let (s, b) = (self.param(n.scale), self.param(n.shift));
        self.graph.batchnorm2d(x, s, b, &mut self.norms[n.state], self.mode)
    }
}

fn depthwise(channels: usize, stride: usize, dilation: usize) -> Conv2dSpec {
    Conv2dSpec::same(stride, dilation, channels)
}

/// conv3x3/2 -> BN -> ReLU -> conv1x1 -> BN -> ReLU -> depthwise 3x3/2 -> BN -> ReLU.
#[derive(Debug, Clone)]
pub struct Stem {
    pub channels: usize,
    conv1: ParamId,
    norm1: Norm,
    conv2: ParamId,
    norm2: Norm,
    dw: ParamId,
    norm3: Norm,
}

impl Stem {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<T, R>, in_channels: usize, channels: usize) -> Result<Self> {
        Ok(Stem {
            channels,
            conv1: b.conv("stem.conv1", channels, in_channels, 3)?,
            norm1: b.norm("stem.norm1", channels)?,
            conv2: b.conv("stem.conv2", channels, channels, 1)?,
            norm2: b.norm("stem.norm2", channels)?,
            dw: b.conv("stem.dw", channels, 1, 3)?,
            norm3: b.norm("stem.norm3", channels)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let (_, _, h, w) = ctx.graph.value(x).dims4("stem")?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::invalid("stem", format!("input side {h}x{w} must be divisible by 4")));
        }
        let y = ctx.conv(x, self.conv1, Conv2dSpec::same(2, 1, 1))?;
        let y = ctx.norm(y, self.norm1)?;
        let y = ctx.graph.relu(y);
        let y = ctx.conv(y, self.conv2, Conv2dSpec::default())?;
        let y = ctx.norm(y, self.norm2)?;
        let y = ctx.graph.relu(y);
        let y = ctx.conv(y, self.dw, depthwise(self.channels, 2, 1))?;
        let y = ctx.norm(y, self.norm3)?;
        Ok(ctx.graph.relu(y))
    }
}

/// ReLU -> conv1x1 -> BN -> ReLU.
#[derive(Debug, Clone)]
pub struct Embedding {
    conv: ParamId,
    norm: Norm,
}

impl Embedding {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<T, R>,
        prefix: &str,
        in_channels: usize,
        channels: usize,
    ) -> Result<Self> {
        Ok(Embedding {
            conv: b.conv(&format!("{prefix}.conv"), channels, in_channels, 1)?,
            norm: b.norm(&format!("{prefix}.norm"), channels)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let y = ctx.graph.relu(x);
        let y = ctx.conv(y, self.conv, Conv2dSpec::default())?;
        let y = ctx.norm(y, self.norm)?;
        Ok(ctx.graph.relu(y))
    }

    pub fn conv_weight(&self) -> ParamId {
        self.conv
    }
}

/// Large-kernel gated block, `Z + BN(K * ReLU(conv1x1(Z) + b))`.
#[derive(Debug, Clone)]
pub struct LaKBlock {
    pub channels: usize,
    pub kernel: usize,
    pub small_kernel: usize,
    pub dilations: Vec<usize>,
    pub lak: ParamId,
    pub sak_small: ParamId,
    pub sak_dilated: Vec<ParamId>,
    pub gate_weight: ParamId,
    pub gate_bias: ParamId,
    pub norm: Norm,
}

impl LaKBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<T, R>,
        prefix: &str,
        channels: usize,
        kernel: usize,
        small_kernel: usize,
        dilations: &[usize],
    ) -> Result<Self> {
        Ok(LaKBlock {
            channels,
            kernel,
            small_kernel,
            dilations: dilations.to_vec(),
            lak: b.conv(&format!("{prefix}.lak"), channels, 1, kernel)?,
            sak_small: b.conv(&format!("{prefix}.sak_small"), channels, 1, small_kernel)?,
            sak_dilated: dilations
                .iter()
                .map(|d| b.conv(&format!("{prefix}.sak_d{d}"), channels, 1, 3))
                .collect::<Result<_>>()?,
            gate_weight: b.conv(&format!("{prefix}.gate"), channels, channels, 1)?,
            gate_bias: b.bias(&format!("{prefix}.gate"), channels)?,
            norm: b.norm_scaled(&format!("{prefix}.norm"), channels, BLOCK_NORM_INIT)?,
        })
    }

    /// Every convolution weight of the block with its dilation.
    pub fn conv_weights(&self) -> Vec<(ParamId, usize)> {
        let mut v = vec![(self.lak, 1), (self.sak_small, 1)];
        v.extend(self.sak_dilated.iter().copied().zip(self.dilations.iter().copied()));
        v
    }

    /// `K`: sum of the large, small and dilated depthwise branches.
    pub fn conv_branch<T: Scalar>(&self, ctx: &mut Ctx<T>, z: Var) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (w, d) in self.conv_weights() {
            let y = ctx.conv(z, w, depthwise(self.channels, 1, d))?;
            acc = Some(match acc {
                None => y,
                Some(a) => ctx.graph.add(a, y)?,
            });
        }
        Ok(acc.expect("at least two branches"))
    }

    /// `g = ReLU(conv1x1(Z) + b)`.
    pub fn gate_branch<T: Scalar>(&self, ctx: &mut Ctx<T>, z: Var) -> Result<Var> {
        let y = ctx.conv(z, self.gate_weight, Conv2dSpec::default())?;
        let bias = ctx.param(self.gate_bias);
        let y = ctx.graph.channel_bias(y, bias)?;
        Ok(ctx.graph.relu(y))
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, z: Var) -> Result<Var> {
        let c = ctx.graph.value(z).dims4("lakblock")?.1;
        if c != self.channels {
            return Err(Error::shape("lakblock", "channels", self.channels, c));
        }
        let k = self.conv_branch(ctx, z)?;
        let g = self.gate_branch(ctx, z)?;
        let merged = ctx.graph.mul(k, g)?;
        let normed = ctx.norm(merged, self.norm)?;
        ctx.graph.add(z, normed)
    }
}

/// Depthwise 3x3/2 -> conv1x1 to the next width -> BN.
#[derive(Debug, Clone)]
pub struct Neck {
    pub channels: usize,
    dw: ParamId,
    pw: ParamId,
    norm: Norm,
}

impl Neck {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<T, R>,
        prefix: &str,
        channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        Ok(Neck {
            channels,
            dw: b.conv(&format!("{prefix}.dw"), channels, 1, 3)?,
            pw: b.conv(&format!("{prefix}.pw"), out_channels, channels, 1)?,
            norm: b.norm(&format!("{prefix}.norm"), out_channels)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let (_, _, h, w) = ctx.graph.value(x).dims4("neck")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid("neck", format!("input side {h}x{w} must be even")));
        }
        let y = ctx.conv(x, self.dw, depthwise(self.channels, 2, 1))?;
        let y = ctx.conv(y, self.pw, Conv2dSpec::default())?;
        ctx.norm(y, self.norm)
    }

    pub fn pointwise_weight(&self) -> ParamId {
        self.pw
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub embedding: Embedding,
    pub blocks: Vec<LaKBlock>,
}

/// Variables of interest from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub stem: Var,
    /// Output of each stage, before the following neck.
    pub stages: Vec<Var>,
    /// Pooled pre-classifier features `[B, C]`.
    pub features: Var,
    pub logits: Var,
}

#[derive(Debug, Clone)]
pub struct LaKNet<T> {
    pub config: LaKNetConfig,
    pub params: ParamStore<T>,
    pub norms: Vec<NormState<T>>,
    pub mode: Mode,
    pub stem: Stem,
    pub stages: Vec<Stage>,
    pub necks: Vec<Neck>,
    head_weight: ParamId,
    head_bias: ParamId,
}

pub const HEAD_INIT_STD: f64 = 0.02;

impl<T: Scalar> LaKNet<T> {
    /// Builds and initializes a model from the init stream of `seed`.
    pub fn new(config: LaKNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut norms = Vec::new();
        let mut r = rng::stream(seed, rng::TAG_INIT);
        let mut b = Builder {
            params: &mut params,
            norms: &mut norms,
            rng: &mut r,
        };
        let stem = Stem::new(&mut b, config.in_channels, config.stem_channels)?;
        let mut stages = Vec::new();
        let mut necks = Vec::new();
        let mut width = config.stem_channels;
        for i in 0..NUM_STAGES {
            let c = config.stage_channels[i];
            if i > 0 {
                necks.push(Neck::new(&mut b, &format!("necks.{}", i - 1), width, c)?);
                width = c;
            }
            let embedding = Embedding::new(&mut b, &format!("stages.{i}.embed"), width, c)?;
            width = c;
            let blocks = (0..config.stage_depths[i])
                .map(|j| {
                    LaKBlock::new(
                        &mut b,
                        &format!("stages.{i}.blocks.{j}"),
                        c,
                        config.large_kernels[i],
                        config.small_kernel,
                        &config.dilations,
                    )
                })
                .collect::<Result<_>>()?;
            stages.push(Stage { embedding, blocks });
        }
        let head_weight = b.params.add(
            "head.weight",
            trunc_normal([config.num_classes, width], HEAD_INIT_STD, b.rng),
            false,
        )?;
        let head_bias = b.bias("head", config.num_classes)?;
        Ok(LaKNet {
            config,
            params,
            norms,
            mode: Mode::Train,
            stem,
            stages,
            necks,
            head_weight,
            head_bias,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn head_weight(&self) -> ParamId {
        self.head_weight
    }

    /// Builds the forward graph for `x` (`[B, in_channels, S, S]`).
    pub fn forward(&mut self, graph: &mut Graph<T>, x: Var) -> Result<Trace> {
        let shape = graph.value(x).shape().to_vec();
        let (_, c, h, w) = graph.value(x).dims4("laknet")?;
        if c != self.config.in_channels {
            return Err(Error::shape("laknet", "input channels", self.config.in_channels, c));
        }
        if h != self.config.input_side || w != self.config.input_side {
            return Err(Error::invalid(
                "laknet",
                format!("input {shape:?} does not match configured side {}", self.config.input_side),
            ));
        }
        let mut ctx = Ctx {
            graph,
            params: &self.params,
            norms: &mut self.norms,
            mode: self.mode,
        };
        let stem = self.stem.forward(&mut ctx, x)?;
        let mut y = stem;
        let mut stage_out = Vec::with_capacity(NUM_STAGES);
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                y = self.necks[i - 1].forward(&mut ctx, y)?;
            }
            y = stage.embedding.forward(&mut ctx, y)?;
            for block in &stage.blocks {
                y = block.forward(&mut ctx, y)?;
            }
            stage_out.push(y);
        }
        let features = ctx.graph.global_avg_pool(y)?;
        let (wv, bv) = (ctx.param(self.head_weight), ctx.param(self.head_bias));
        let logits = ctx.graph.linear(features, wv, bv)?;
        Ok(Trace {
            stem,
            stages: stage_out,
            features,
            logits,
        })
    }

    /// Logits and pooled features for a batch, without keeping the graph.
    pub fn predict(&mut self, images: Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new();
        let x = g.input(images);
        let t = self.forward(&mut g, x)?;
        Ok((g.value(t.logits).clone(), g.value(t.features).clone()))
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(seed);
        for p in self.params.iter() {
            ck.push(&p.name, p.tensor.shape(), p.tensor.data().iter().map(|v| v.f64() as f32));
        }
        for n in &self.norms {
            let c = n.mean.len();
            ck.push(format!("{}.running_mean", n.name), &[c], n.mean.iter().map(|v| v.f64() as f32));
            ck.push(format!("{}.running_var", n.name), &[c], n.var.iter().map(|v| v.f64() as f32));
        }
        ck
    }

    /// Loads parameters and running statistics; names and shapes must match exactly.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let expected = self.params.len() + 2 * self.norms.len();
        if ck.entries.len() != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} entries, model expects {expected}",
                ck.entries.len()
            )));
        }
        let fetch = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let e = ck
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))?;
            if e.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "entry {name} has shape {:?}, expected {shape:?}",
                    e.shape
                )));
            }
            Ok(e.data.iter().map(|&v| T::of(v as f64)).collect())
        };
        let mut loaded = Vec::with_capacity(self.params.len());
        for p in self.params.iter() {
            loaded.push(fetch(&p.name, p.tensor.shape())?);
        }
        let mut stats = Vec::with_capacity(self.norms.len());
        for n in &self.norms {
            let c = n.mean.len();
            stats.push((
                fetch(&format!("{}.running_mean", n.name), &[c])?,
                fetch(&format!("{}.running_var", n.name), &[c])?,
            ));
        }
        for (p, data) in self.params.iter_mut().zip(loaded) {
            p.tensor.data_mut().copy_from_slice(&data);
        }
        for (n, (m, v)) in self.norms.iter_mut().zip(stats) {
            n.mean = m;
            n.var = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::conv;
    use crate::rng::Rng as ChaRng;
    use rand::SeedableRng;

    fn block_fixture(c: usize, k: usize) -> (ParamStore<f64>, Vec<NormState<f64>>, LaKBlock) {
        let mut params = ParamStore::new();
        let mut norms = Vec::new();
        let mut r = ChaRng::seed_from_u64(3);
        let mut b = Builder {
            params: &mut params,
            norms: &mut norms,
            rng: &mut r,
        };
        let block = LaKBlock::new(&mut b, "blk", c, k, 5, &[2, 4]).unwrap();
        (params, norms, block)
    }

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut r = ChaRng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn full_config_parameter_count_matches_layer_formula() {
        let cfg = LaKNetConfig::full(600);
        let (s, ci) = (cfg.stem_channels, cfg.in_channels);
        let mut want = 9 * ci * s + 2 * s + s * s + 2 * s + 9 * s + 2 * s;
        let mut prev = s;
        for i in 0..4 {
            let c = cfg.stage_channels[i];
            if i > 0 {
                want += 9 * prev + prev * c + 2 * c;
                prev = c;
            }
            want += prev * c + 2 * c;
            prev = c;
            let k = cfg.large_kernels[i];
            want += cfg.stage_depths[i] * (c * k * k + c * 25 + 2 * c * 9 + c * c + c + 2 * c);
        }
        want += 1024 * 600 + 600;
        let m = LaKNet::<f32>::new(cfg, 0).unwrap();
        assert_eq!(m.num_parameters(), want);
        assert_eq!(m.num_parameters(), 17_982_936);
        assert_eq!(m.stages.len(), 4);
        assert_eq!(m.necks.len(), 3);
    }

    #[test]
    fn toy_forward_shapes_and_initial_loss() {
        let mut m = LaKNet::<f64>::new(LaKNetConfig::toy(10), 1).unwrap();
        let mut g = Graph::new();
        let x = g.input(random_input([2, 1, 32, 32], 5));
        let t = m.forward(&mut g, x).unwrap();
        assert_eq!(g.value(t.stem).shape(), &[2, 16, 8, 8]);
        let sides: Vec<usize> = t.stages.iter().map(|&v| g.value(v).shape()[2]).collect();
        assert_eq!(sides, vec![8, 4, 2, 1]);
        assert_eq!(g.value(t.logits).shape(), &[2, 10]);
        let labels = Tensor::from_fn([2, 10], |i| if i % 10 == i / 10 { 1.0 } else { 0.0 });
        let loss = g.soft_cross_entropy(t.logits, &labels).unwrap();
        let l = g.value(loss).item().unwrap();
        let ln10 = 10f64.ln();
        assert!((l - ln10).abs() < 0.1 * ln10, "{l}");
    }

    #[test]
    fn wrong_input_side_rejected() {
        let mut m = LaKNet::<f64>::new(LaKNetConfig::toy(3), 1).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros([1, 1, 28, 28]));
        assert!(m.forward(&mut g, x).is_err());
    }

    #[test]
    fn stem_rejects_sides_not_divisible_by_four() {
        let mut params = ParamStore::<f64>::new();
        let mut norms = Vec::new();
        let mut r = ChaRng::seed_from_u64(0);
        let mut b = Builder {
            params: &mut params,
            norms: &mut norms,
            rng: &mut r,
        };
        let stem = Stem::new(&mut b, 1, 4).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros([1, 1, 10, 10]));
        let mut ctx = Ctx {
            graph: &mut g,
            params: &params,
            norms: &mut norms,
            mode: Mode::Eval,
        };
        assert!(stem.forward(&mut ctx, x).is_err());
    }

    #[test]
    fn zero_conv_weights_make_block_identity() {
        let (mut params, mut norms, block) = block_fixture(4, 7);
        for (w, _) in block.conv_weights() {
            params.get_mut(w).tensor.data_mut().fill(0.0);
        }
        let z = random_input([2, 4, 9, 9], 11);
        for mode in [Mode::Train, Mode::Eval] {
            let mut g = Graph::new();
            let zv = g.input(z.clone());
            let mut ctx = Ctx {
                graph: &mut g,
                params: &params,
                norms: &mut norms,
                mode,
            };
            let y = block.forward(&mut ctx, zv).unwrap();
            assert_eq!(g.value(y).data(), z.data());
        }
    }

    #[test]
    fn conv_branch_is_sum_of_depthwise_convs() {
        let (params, mut norms, block) = block_fixture(3, 7);
        let z = random_input([2, 3, 9, 9], 2);
        let mut g = Graph::new();
        let zv = g.input(z.clone());
        let mut ctx = Ctx {
            graph: &mut g,
            params: &params,
            norms: &mut norms,
            mode: Mode::Eval,
        };
        let k = block.conv_branch(&mut ctx, zv).unwrap();
        let mut want = vec![0.0; z.numel()];
        for (w, d) in block.conv_weights() {
            let wt = &params.get(w).tensor;
            let geom = conv::ConvGeom::resolve(z.shape(), wt.shape(), Conv2dSpec::same(1, d, 3)).unwrap();
            for (a, b) in want.iter_mut().zip(conv::forward(&geom, z.data(), wt.data())) {
                *a += b;
            }
        }
        for (a, b) in g.value(k).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_restores_outputs() {
        let mut a = LaKNet::<f64>::new(LaKNetConfig::toy(4), 9).unwrap();
        // a training forward moves the running statistics away from their init
        let x = random_input([4, 1, 32, 32], 3);
        a.predict(x.clone()).unwrap();
        a.set_mode(Mode::Eval);
        let bytes = a.to_checkpoint(9).to_bytes();
        let mut b = LaKNet::<f64>::new(LaKNetConfig::toy(4), 10).unwrap();
        b.set_mode(Mode::Eval);
        b.load_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        // a holds f64 weights, b the f32-rounded copy
        let (la, _) = a.predict(x.clone()).unwrap();
        let (lb, _) = b.predict(x).unwrap();
        for (p, q) in la.data().iter().zip(lb.data()) {
            assert!((p - q).abs() < 1e-4, "{p} vs {q}");
        }
        let other = LaKNet::<f64>::new(LaKNetConfig::toy(5), 0).unwrap();
        assert!(b.load_checkpoint(&other.to_checkpoint(0)).is_err());
    }

    #[test]
    fn eval_forward_is_bit_identical() {
        let mut m = LaKNet::<f64>::new(LaKNetConfig::toy(10), 4).unwrap();
        m.set_mode(Mode::Eval);
        let x = random_input([2, 1, 32, 32], 8);
        let (a, _) = m.predict(x.clone()).unwrap();
        let (b, _) = m.predict(x).unwrap();
        assert_eq!(a, b);
    }
}
