//! Generates a planar and a two-layer synthetic light field, writes them as
//! view directories and saves horizontal and vertical EPIs of each.
//!
//!     cargo run --example synthetic_light_field -- [OUT_DIR]

use std::path::PathBuf;

use lfcycle::io::{save_lf, save_png};
use lfcycle::lightfield::{extract_epi, AngularAxis};
use lfcycle::synth::{gen_planar_lf, gen_two_layer_lf, Foreground, SceneSpec, Texture};

fn main() -> lfcycle::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lfcycle-synth"));

    let spec = SceneSpec { texture: Texture::Noise { blur_sigma: 1.5 }, ..SceneSpec::planar(1.5, 9, 96, 42) };
    let (planar, truth) = gen_planar_lf(&spec)?;
    save_lf(&planar, &out.join("planar"), Some(spec.seed), None)?;
    println!("planar: {}x{} views, reference view {:?}", planar.rows(), planar.cols(), truth.reference);

    let fg = Foreground::centered_square(&spec, -1.0);
    let (layered, _) = gen_two_layer_lf(&spec, &fg)?;
    save_lf(&layered, &out.join("two_layer"), Some(spec.seed), None)?;

    // Scene points trace lines whose slope is the disparity; the occluding
    // square slopes the other way.
    for (name, lf) in [("planar", &planar), ("two_layer", &layered)] {
        for (axis, tag) in [(AngularAxis::Horizontal, "h"), (AngularAxis::Vertical, "v")] {
            let epi = extract_epi(lf, axis, 48, 4)?;
            save_png(&epi, &out.join(format!("{name}_epi_{tag}.png")))?;
        }
    }
    println!("wrote light fields and EPIs to {}", out.display());
    Ok(())
}
