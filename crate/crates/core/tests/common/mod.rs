//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use starlk::engine::{check_gradients, Conv2dSpec, Graph, Mode, NormState, ParamStore, Padding, Var};
use starlk::laknet::{Builder, Ctx, LaKBlock};
use starlk::{Result, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn normal(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| StandardNormal.sample(rng))
}

/// Random values kept at least `gap` away from zero, for kinked ops.
pub fn off_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v.signum() * (v.abs() + gap)
    })
}

fn softmax_rows(b: usize, c: usize, rng: &mut impl Rng) -> Tensor<f64> {
    let mut data = Vec::with_capacity(b * c);
    for _ in 0..b {
        let row: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / s));
    }
    Tensor::new([b, c], data).unwrap()
}

type OpFn = Box<dyn Fn(&mut Graph<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>>;

struct Case {
    inputs: Vec<Tensor<f64>>,
    store: ParamStore<f64>,
    f: OpFn,
}

fn conv_case(rng: &mut impl Rng, x: [usize; 4], w: [usize; 4], spec: Conv2dSpec) -> Case {
    Case {
        inputs: vec![normal(&x, rng), normal(&w, rng)],
        store: ParamStore::new(),
        f: Box::new(move |g, _, v| g.conv2d(v[0], v[1], spec)),
    }
}

fn norm_case(rng: &mut impl Rng, mode: Mode) -> Case {
    let c = 3;
    let mut stats = NormState::new("bn", c);
    stats.mean = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    stats.var = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
    Case {
        inputs: vec![normal(&[2, c, 5, 4], rng), normal(&[c], rng), normal(&[c], rng)],
        store: ParamStore::new(),
        f: Box::new(move |g, _, v| {
            let mut st = stats.clone();
            g.batchnorm2d(v[0], v[1], v[2], &mut st, mode)
        }),
    }
}

fn lakblock_case(rng: &mut impl Rng) -> Case {
    let mut store = ParamStore::new();
    let mut norms = Vec::new();
    let block = {
        let mut b = Builder {
            params: &mut store,
            norms: &mut norms,
            rng: &mut *rng,
        };
        LaKBlock::new(&mut b, "block", 4, 7, 5, &[2, 4]).unwrap()
    };
    // move the norm and bias off their neutral initial values
    for id in store.ids().collect::<Vec<_>>() {
        let p = store.get_mut(id);
        if p.weight_decay_exempt {
            for v in p.tensor.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
    }
    Case {
        inputs: vec![normal(&[2, 4, 9, 9], rng)],
        store,
        f: Box::new(move |g, s, v| {
            let mut ns = norms.clone();
            let mut ctx = Ctx {
                graph: g,
                params: s,
                norms: &mut ns,
                mode: Mode::Train,
            };
            block.forward(&mut ctx, v[0])
        }),
    }
}

fn cases(rng: &mut impl Rng) -> Vec<(&'static str, Case)> {
    let explicit = Conv2dSpec {
        stride: 1,
        dilation: 1,
        groups: 1,
        padding: Padding::Explicit {
            top: 1,
            bottom: 0,
            left: 2,
            right: 1,
        },
    };
    let soft = softmax_rows(2, 5, rng);
    vec![
        ("conv2d dense same", conv_case(rng, [2, 3, 7, 6], [4, 3, 3, 3], Conv2dSpec::default())),
        ("conv2d stride 2", conv_case(rng, [2, 2, 9, 8], [3, 2, 3, 3], Conv2dSpec::same(2, 1, 1))),
        ("conv2d dilated", conv_case(rng, [1, 2, 9, 9], [2, 2, 3, 3], Conv2dSpec::same(1, 2, 1))),
        ("conv2d depthwise", conv_case(rng, [2, 4, 9, 9], [4, 1, 5, 5], Conv2dSpec::same(1, 1, 4))),
        ("conv2d grouped", conv_case(rng, [1, 4, 6, 6], [4, 2, 3, 3], Conv2dSpec::same(1, 1, 2))),
        ("conv2d explicit pad", conv_case(rng, [1, 2, 5, 6], [2, 2, 2, 3], explicit)),
        ("batchnorm2d train", norm_case(rng, Mode::Train)),
        ("batchnorm2d eval", norm_case(rng, Mode::Eval)),
        (
            "relu",
            Case {
                inputs: vec![off_zero(&[2, 3, 4, 4], 1e-3, rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| Ok(g.relu(v[0]))),
            },
        ),
        (
            "silu",
            Case {
                inputs: vec![normal(&[2, 3, 4, 4], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| Ok(g.silu(v[0]))),
            },
        ),
        (
            "add",
            Case {
                inputs: vec![normal(&[2, 3, 4], rng), normal(&[2, 3, 4], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.add(v[0], v[1])),
            },
        ),
        (
            "mul",
            Case {
                inputs: vec![normal(&[2, 3, 4], rng), normal(&[2, 3, 4], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.mul(v[0], v[1])),
            },
        ),
        (
            "mul same operand",
            Case {
                inputs: vec![normal(&[2, 5], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.mul(v[0], v[0])),
            },
        ),
        (
            "channel_bias",
            Case {
                inputs: vec![normal(&[2, 3, 4, 5], rng), normal(&[3], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.channel_bias(v[0], v[1])),
            },
        ),
        (
            "linear",
            Case {
                inputs: vec![normal(&[2, 6], rng), normal(&[4, 6], rng), normal(&[4], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.linear(v[0], v[1], v[2])),
            },
        ),
        (
            "global_avg_pool",
            Case {
                inputs: vec![normal(&[2, 4, 9, 9], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| g.global_avg_pool(v[0])),
            },
        ),
        (
            "soft_cross_entropy",
            Case {
                inputs: vec![normal(&[2, 5], rng)],
                store: ParamStore::new(),
                f: Box::new(move |g, _, v| g.soft_cross_entropy(v[0], &soft)),
            },
        ),
        (
            "sum_all",
            Case {
                inputs: vec![normal(&[2, 3, 4, 4], rng)],
                store: ParamStore::new(),
                f: Box::new(|g, _, v| Ok(g.sum_all(v[0]))),
            },
        ),
        ("lakblock", lakblock_case(rng)),
    ]
}

/// Worst finite-difference relative error of every op over `seeds` seeds.
pub fn gradient_suite(seeds: u64) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for seed in 0..seeds {
        let mut rng = starlk::rng::stream(seed, 0x6772_6164);
        for (k, (name, mut case)) in cases(&mut rng).into_iter().enumerate() {
            let mut g = Graph::new();
            let vars: Vec<Var> = case.inputs.iter().map(|t| g.input(t.clone())).collect();
            let y = (case.f)(&mut g, &case.store, &vars).unwrap();
            let n = g.value(y).numel();
            let projection: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r = check_gradients(&mut case.store, &case.inputs, &projection, FD_STEP, &case.f)
                .unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
            if seed == 0 {
                worst.push((name, r.rel_error));
            } else {
                worst[k].1 = worst[k].1.max(r.rel_error);
            }
        }
    }
    worst
}
