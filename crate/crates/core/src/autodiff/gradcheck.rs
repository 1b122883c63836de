use super::graph::{Graph, NodeId, ParamSet};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_abs_error: f64,
    /// `max|a - n| / max(max|a|, max|n|)` over the tensor.
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params.iter().fold(0.0, |a, p| a.max(p.relative_error))
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

/// Compares reverse-mode gradients with central differences of step `h`.
pub fn gradient_check(
    graph: &Graph,
    params: &ParamSet,
    inputs: &[&Tensor],
    loss: NodeId,
    h: f64,
    tolerance: f64,
) -> Result<GradientReport> {
    let (_, analytic, _) = graph.value_and_grad(params, inputs, loss)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for id in params.ids() {
        let n = params.get(id).len();
        let mut numeric = vec![0.0; n];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = graph.forward(&probe, inputs)?.value(loss).item();
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = graph.forward(&probe, inputs)?.value(loss).item();
            probe.get_mut(id).data_mut()[k] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let a = analytic.get(id).data();
        let max_abs_error = a.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = a
            .iter()
            .chain(&numeric)
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1e-12);
        let relative_error = max_abs_error / scale;
        out.push(ParamCheck {
            name: params.name(id).to_string(),
            max_abs_error,
            relative_error,
            passed: relative_error < tolerance,
        });
    }
    Ok(GradientReport {
        params: out,
        tolerance,
    })
}
