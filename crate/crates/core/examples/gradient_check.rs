//! Checks reverse-mode gradients of a small interpolator against central
//! finite differences, parameter tensor by parameter tensor.
//!
//!     cargo run --example gradient_check

use lfcycle::autodiff::gradcheck::check_gradients;
use lfcycle::autodiff::Graph;
use lfcycle::lightfield::Image;
use lfcycle::net::{ArchConfig, InterpolatorModel};

fn main() -> lfcycle::Result<()> {
    let model = InterpolatorModel::<f64>::new(ArchConfig::new(vec![4, 8], 3)?, 0)?;
    let frame = |phase: f32| {
        Image::from_fn(8, 8, |y, x, c| 0.5 + 0.4 * ((x as f32 + phase) * 0.7 + y as f32 * 0.3 + c as f32).sin())
    };
    let (a, b) = (frame(0.0)?.to_tensor::<f64>(), frame(1.0)?.to_tensor::<f64>());

    let report = check_gradients(
        model.params(),
        |g: &mut Graph<f64>, params| {
            let bound = model.bind_vars(g, params.to_vec())?;
            let (av, bv) = (g.leaf(a.clone()), g.leaf(b.clone()));
            let out = bound.forward(g, av, bv)?;
            Ok(g.mean(out))
        },
        1e-6,
        16,
    )?;
    let (tensor, element) = report.worst;
    println!(
        "{} probes over {} parameter tensors; worst relative error {:.2e} in {}[{element}] (analytic {:.6e}, numeric {:.6e})",
        report.checked,
        model.params().len(),
        report.max_relative_error,
        model.param_names()[tensor],
        report.analytic,
        report.numeric
    );
    Ok(())
}
