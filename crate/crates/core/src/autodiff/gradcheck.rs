//! Central finite-difference gradient checking in `f64`.

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Denominator floor of the relative error, so that analytically zero
/// gradients are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(input index, element index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Compares the reverse-mode gradient of the scalar built by `build` with
/// `(f(x + h) - f(x - h)) / 2h` for every element of every input. At most
/// `max_per_input` evenly strided elements are probed per input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F, step: f64, max_per_input: usize) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| g.take_grad(v)).collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut report = GradCheck { max_relative_error: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let stride = input.len().div_ceil(max_per_input.max(1)).max(1);
        for j in (0..input.len()).step_by(stride) {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + step;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - step;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[i].data()[j];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err >= report.max_relative_error {
                report = GradCheck { max_relative_error: err, worst: (i, j), analytic: a, numeric, checked: report.checked };
            }
        }
    }
    Ok(report)
}
