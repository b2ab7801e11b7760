//! Central finite-difference check of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::param::ParamStore;
use crate::{Error, Result, Tensor};

/// Worst agreement between analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `|a - n| / max(|a|, |n|)` in the Euclidean norm, worst tensor.
    pub rel_error: f64,
    /// Name of the worst tensor: `input{k}` or a parameter name.
    pub worst: String,
    pub evaluations: usize,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn projected<F>(f: &F, store: &ParamStore<f64>, xs: &[Tensor<f64>], projection: &[f64]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, store, &vars)?;
    Ok(g.value(y).data().iter().zip(projection).map(|(a, b)| a * b).sum())
}

/// Compares `backward` against central differences with step `h` for the
/// scalar `sum(projection * f(params, inputs))`, over every input and every
/// parameter in `store`. `projection` must match the output length.
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    inputs: &[Tensor<f64>],
    projection: &[f64],
    h: f64,
    f: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, store, &vars)?;
    let shape = g.value(y).shape().to_vec();
    if g.value(y).numel() != projection.len() {
        return Err(Error::shape("check_gradients", "projection length", g.value(y).numel(), projection.len()));
    }
    let r = g.input(Tensor::new(shape, projection.to_vec())?);
    let p = g.mul(y, r)?;
    let loss = g.sum_all(p);
    store.zero_grad();
    g.backward(loss, store)?;

    let mut report = GradCheck {
        rel_error: 0.0,
        worst: String::new(),
        evaluations: 0,
    };
    let mut record = |name: String, analytic: &[f64], numeric: &[f64]| {
        let diff = norm(analytic.iter().zip(numeric).map(|(a, n)| a - n));
        let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
        let rel = if scale == 0.0 { diff } else { diff / scale };
        if rel >= report.rel_error {
            report.rel_error = rel;
            report.worst = name;
        }
    };
    let mut evaluations = 0;

    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map_or_else(|| vec![0.0; inputs[k].numel()], <[f64]>::to_vec);
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[i];
            xs[k].data_mut()[i] = x0 + h;
            let up = projected(&f, store, &xs, projection)?;
            xs[k].data_mut()[i] = x0 - h;
            let down = projected(&f, store, &xs, projection)?;
            xs[k].data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * h);
            evaluations += 2;
        }
        record(format!("input{k}"), &analytic, &numeric);
    }

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = store.get(id).tensor.grad().expect("backward fills every gradient").to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = store.get(id).tensor.data()[i];
            store.get_mut(id).tensor.data_mut()[i] = x0 + h;
            let up = projected(&f, store, inputs, projection)?;
            store.get_mut(id).tensor.data_mut()[i] = x0 - h;
            let down = projected(&f, store, inputs, projection)?;
            store.get_mut(id).tensor.data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * h);
            evaluations += 2;
        }
        record(store.get(id).name.clone(), &analytic, &numeric);
    }
    report.evaluations = evaluations;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_passes_for_inputs_and_params() {
        let a = Tensor::from_f64([3], &[0.5, -1.5, 2.0]).unwrap();
        let b = Tensor::from_f64([3], &[1.0, 0.25, -0.75]).unwrap();
        let mut store = ParamStore::new();
        let id = store.add("w", b, false).unwrap();
        let r = check_gradients(&mut store, &[a], &[1.0, -2.0, 0.5], 1e-5, |g, s, v| {
            let w = g.param(s, id);
            let y = g.mul(v[0], w)?;
            Ok(g.relu(y))
        })
        .unwrap();
        assert!(r.rel_error < 1e-9, "{r:?}");
        assert_eq!(r.evaluations, 12);
    }

    #[test]
    fn wrong_projection_length_is_rejected() {
        let a = Tensor::from_f64([2], &[1.0, 2.0]).unwrap();
        let err = check_gradients(&mut ParamStore::new(), &[a], &[1.0], 1e-5, |g, _, v| Ok(g.relu(v[0])));
        assert!(err.is_err());
    }
}
