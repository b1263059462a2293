//! One 4f layer: preprocessing, a learned phase mask and the detector
//! readout, plus the polarization superposition rule behind `W ∘ X + B`.

use std::f64::consts::{FRAC_PI_2, TAU};

use conn::optics::{classify, infer, preprocess, propagate_4f, superpose_intensity, Model};
use conn::RealGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> conn::Result<()> {
    let side = 64;
    let mut model = Model::identity(side, 1, 0.01)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in model.layers_mut()[0].phase.as_mut_slice() {
        *t = rng.random_range(0.0..TAU);
    }

    // A bright square in the middle of the input plane.
    let x = RealGrid::from_fn(side, |r, c| if (24..40).contains(&r) && (24..40).contains(&c) { 1.0 } else { 0.0 })?;
    let pre = preprocess(&x, &model.layers()[0])?;
    let out = propagate_4f(&pre, &model.layers()[0])?;
    println!("input energy   {:.6}", pre.energy());
    println!("output energy  {:.6}", out.energy());

    let readout = infer(&model, &x)?;
    for (k, v) in readout.iter().enumerate() {
        println!("region {k}: {v:.4}");
    }
    println!("predicted class {}", classify(&readout));

    println!(
        "orthogonal beams 0.3 + 0.5 -> {}",
        superpose_intensity(0.3, 0.5, FRAC_PI_2, 1.0)?
    );
    println!(
        "parallel in-phase beams 0.3 + 0.5 -> {:.4}",
        superpose_intensity(0.3, 0.5, 0.0, 1.0)?
    );
    Ok(())
}
