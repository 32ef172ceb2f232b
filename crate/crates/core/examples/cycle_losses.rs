//! Evaluates the self-supervised objective on triplets of a sparse light
//! field, once with the exact oracle and once with an untrained network.
//!
//!     cargo run --example cycle_losses

use lfcycle::autodiff::Graph;
use lfcycle::lightfield::{extract_triplets, subsample, AngularAxis};
use lfcycle::losses::{self_supervised_objective, FeatureExtractor, LossWeights, TripletBatch};
use lfcycle::net::{ArchConfig, InterpolatorModel, Midpoint};
use lfcycle::synth::{gen_planar_lf, SceneSpec, TranslationOracle};

fn main() -> lfcycle::Result<()> {
    let (dense, _) = gen_planar_lf(&SceneSpec::planar(2.0, 9, 48, 5))?;
    let sparse = subsample(&dense, 2)?;
    let triplets = extract_triplets(&sparse, AngularAxis::Horizontal).triplets;
    let batch: Vec<_> = triplets.iter().take(4).collect();
    let extractor = FeatureExtractor::seeded(0);
    let weights = LossWeights::default();

    let oracle = TranslationOracle::new(2, AngularAxis::Horizontal);
    let model = InterpolatorModel::<f64>::new(ArchConfig::new(vec![8, 16, 32], 9)?, 0)?;

    let mut g = Graph::new();
    let tb = TripletBatch::new(&mut g, &batch)?;
    // The oracle depends on the span, so its pairs are evaluated one by one.
    report("oracle", &mut g, &tb, &oracle, &extractor, &weights, false)?;

    let mut g = Graph::new();
    let tb = TripletBatch::new(&mut g, &batch)?;
    let bound = model.bind(&mut g, false);
    report("untrained", &mut g, &tb, &bound, &extractor, &weights, true)?;
    Ok(())
}

fn report<M: Midpoint<f64>>(
    name: &str,
    g: &mut Graph<f64>,
    tb: &TripletBatch,
    m: &M,
    extractor: &FeatureExtractor,
    weights: &LossWeights,
    span_invariant: bool,
) -> lfcycle::Result<()> {
    let terms = self_supervised_objective(g, tb, m, extractor, weights, span_invariant)?;
    let v = |x| g.value(x).item();
    println!(
        "{name:>9}: cycle {:.5}  reconstruction {:.5}  perceptual {:.6}  total {:.5}",
        v(terms.cycle)?,
        v(terms.reconstruction)?,
        v(terms.perceptual)?,
        v(terms.total)?
    );
    Ok(())
}
