use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Norm scales/shifts and biases are excluded from weight decay.
    pub weight_decay_exempt: bool,
}

/// Ordered, uniquely named parameter list of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, exempt: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("param", format!("duplicate parameter name {name:?}")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            tensor,
            weight_decay_exempt: exempt,
        });
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.id(name).map(|id| &mut self.params[id.0])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total number of scalar weights.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }
}

/// Running mean/variance buffers of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> NormState<T> {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        NormState {
            name: name.into(),
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Truncated normal (cut at two standard deviations) with the given std.
pub fn trunc_normal<T: Scalar, R: Rng + ?Sized>(
    shape: impl Into<Vec<usize>>,
    std: f64,
    rng: &mut R,
) -> Tensor<T> {
    Tensor::from_fn(shape, |_| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break T::of(z * std);
        }
    })
}

/// He-style fan-in scaled initialization for ReLU networks.
pub fn kaiming<T: Scalar, R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    // 0.8796 is the std of a unit normal truncated at +-2.
    let std = (2.0 / fan_in as f64).sqrt() / 0.879_625_7;
    trunc_normal(shape, std, rng)
}
