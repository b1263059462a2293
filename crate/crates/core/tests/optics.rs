mod common;

use common::{circular_convolve_3x3, dft_centered, random_field, random_grid, region_sums, rng};
use conn::optics::{
    classify, forward, infer, preprocess, propagate_4f, propagate_4f_with_complex_mask, region_readout,
    shifted_relu, superpose_intensity, DetectorLayout, LayerParams, Model,
};
use conn::{fft2, intensity, Complex64, Field, RealGrid};
use proptest::prelude::*;

const BLUR: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// Spectral mask whose 4f pass equals circular convolution with `kernel`.
/// The kernel's center tap sits at the grid center; the unitary transforms
/// contribute a factor `N`.
fn convolution_mask(side: usize, kernel: &[[f64; 3]; 3]) -> Field {
    let mut k = Field::zeros(side).unwrap();
    let h = side / 2;
    for (i, row) in kernel.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            k[(h + i - 1, h + j - 1)] = Complex64::new(v / 16.0, 0.0);
        }
    }
    fft2(&k).scale(Complex64::new(side as f64, 0.0))
}

#[test]
fn blur_mask_is_circular_convolution() {
    let kernel = BLUR.map(|r| r.map(|v| v / 16.0));
    let mask = convolution_mask(8, &BLUR);
    for seed in 0..5 {
        let x = random_field(8, &mut rng(seed));
        let out = propagate_4f_with_complex_mask(&x, &mask).unwrap();
        let oracle = circular_convolve_3x3(&x, &kernel);
        assert!(out.max_abs_diff(&oracle).unwrap() < 1e-12);
    }
}

#[test]
fn phase_only_layer_matches_dft_oracle() {
    let mut r = rng(11);
    let layer = LayerParams::new(
        random_grid(8, 0.5, 1.5, &mut r),
        random_grid(8, -0.2, 0.2, &mut r),
        random_grid(8, 0.0, std::f64::consts::TAU, &mut r),
    )
    .unwrap();
    let pre = random_field(8, &mut r);
    let spectrum = dft_centered(&pre, false);
    let masked = Field::from_fn(8, |a, b| spectrum[(a, b)] * Complex64::cis(layer.phase[(a, b)])).unwrap();
    let oracle = dft_centered(&masked, true);
    assert!(propagate_4f(&pre, &layer).unwrap().max_abs_diff(&oracle).unwrap() < 1e-12);
}

#[test]
fn forward_matches_oracle_composition() {
    let mut r = rng(12);
    let side = 16;
    let layers: Vec<LayerParams> = (0..2)
        .map(|_| {
            LayerParams::new(
                random_grid(side, 0.5, 1.5, &mut r),
                random_grid(side, -0.2, 0.2, &mut r),
                random_grid(side, 0.0, std::f64::consts::TAU, &mut r),
            )
            .unwrap()
        })
        .collect();
    let model = Model::new(layers.clone(), 0.01, DetectorLayout::default_for(side).unwrap()).unwrap();
    let x = random_grid(side, 0.0, 1.0, &mut r);

    let mut field = Field::from_real(&x);
    for (l, layer) in layers.iter().enumerate() {
        let pre = Field::from_fn(side, |a, b| field[(a, b)] * layer.weight[(a, b)] + layer.bias[(a, b)]).unwrap();
        let spec = dft_centered(&pre, false);
        let masked = Field::from_fn(side, |a, b| spec[(a, b)] * Complex64::cis(layer.phase[(a, b)])).unwrap();
        field = dft_centered(&masked, true);
        if l == 0 {
            field = field.map(|v| {
                let m = v.norm();
                if m <= 0.01 {
                    Complex64::new(0.0, 0.0)
                } else {
                    v * ((m - 0.01) / m)
                }
            });
        }
    }
    let i: Vec<f64> = field.iter().map(|v| v.norm_sqr()).collect();
    let oracle = region_sums(&i, side, model.detector());
    let (readout, tape) = forward(&model, &x).unwrap();
    for k in 0..10 {
        assert!((readout[k] - oracle[k]).abs() <= 1e-10 * oracle[k].max(1e-12), "region {k}");
    }
    assert_eq!(readout, infer(&model, &x).unwrap());
    assert_eq!(tape.readout, readout);
}

#[test]
fn tape_replays_bit_for_bit() {
    let model = Model::initialize(32, 3, 0.01, 9).unwrap();
    let x = random_grid(32, 0.0, 1.0, &mut rng(4));
    let (_, tape) = forward(&model, &x).unwrap();
    for (rec, layer) in tape.layers.iter().zip(model.layers()) {
        let pre = conn::optics::preprocess_field(&rec.input, layer).unwrap();
        assert_eq!(pre, rec.pre);
        assert_eq!(propagate_4f(&pre, layer).unwrap(), rec.output);
    }
    for pair in tape.layers.windows(2) {
        assert_eq!(shifted_relu(&pair[0].output, 0.01), pair[1].input);
    }
    assert_eq!(forward(&model, &x).unwrap().1, tape);
}

#[test]
fn identity_model_readout_is_input_energy_per_region() {
    let side = 64;
    let x = random_grid(side, 0.0, 1.0, &mut rng(5));
    let model = Model::identity(side, 1, 0.01).unwrap();
    let squared: Vec<f64> = x.iter().map(|v| v * v).collect();
    let oracle = region_sums(&squared, side, model.detector());
    let readout = infer(&model, &x).unwrap();
    for k in 0..10 {
        assert!((readout[k] - oracle[k]).abs() < 1e-10 * oracle[k]);
    }
}

#[test]
fn default_layout_regions_are_disjoint_and_inside() {
    for side in [16, 32, 64, 128] {
        let layout = DetectorLayout::default_for(side).unwrap();
        let ones = RealGrid::ones(side).unwrap();
        let readout = region_readout(&ones, &layout).unwrap();
        let s = side / 8;
        assert!(readout.iter().all(|&v| v == (s * s) as f64));
        let mut cover = vec![0u8; side * side];
        for r in layout.regions() {
            for row in r.row..r.row + r.height {
                for col in r.col..r.col + r.width {
                    cover[row * side + col] += 1;
                }
            }
        }
        assert!(cover.iter().all(|&c| c <= 1));
    }
}

fn small_field() -> impl Strategy<Value = Field> {
    (2u32..6).prop_flat_map(|p| {
        let side = 1usize << p;
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), side * side).prop_map(move |v| {
            Field::from_vec(side, side, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn phase_only_propagation_conserves_energy(pre in small_field(), seed in any::<u64>()) {
        let side = pre.side();
        let mut layer = LayerParams::identity(side).unwrap();
        layer.phase = random_grid(side, 0.0, std::f64::consts::TAU, &mut rng(seed));
        let out = propagate_4f(&pre, &layer).unwrap();
        prop_assert!((out.energy() - pre.energy()).abs() <= 1e-12 * pre.energy().max(1e-300));
    }

    #[test]
    fn global_phase_leaves_intensity_unchanged(pre in small_field(), c in -10.0f64..10.0, seed in any::<u64>()) {
        let side = pre.side();
        let mut layer = LayerParams::identity(side).unwrap();
        layer.phase = random_grid(side, 0.0, std::f64::consts::TAU, &mut rng(seed));
        let a = intensity(&propagate_4f(&pre, &layer).unwrap());
        let b = intensity(&propagate_4f(&pre.scale(Complex64::cis(c)), &layer).unwrap());
        let scale = a.max();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() <= 1e-10 * scale.max(1e-300));
        }
    }

    #[test]
    fn relu_shrinks_modulus_and_keeps_phase(f in small_field(), shift in 0.0f64..3.0) {
        let out = shifted_relu(&f, shift);
        for (v, w) in f.iter().zip(out.iter()) {
            prop_assert!(w.norm() <= v.norm());
            if v.norm() <= shift {
                prop_assert_eq!(*w, Complex64::new(0.0, 0.0));
            } else {
                prop_assert!((w.norm() - (v.norm() - shift)).abs() <= 1e-12 * v.norm());
                let rot = w * v.conj();
                prop_assert!(rot.re >= 0.0 && rot.im.abs() <= 1e-12 * rot.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn readout_is_non_negative_and_shift_invariant_classify(seed in any::<u64>(), c in -5.0f64..5.0) {
        let model = Model::initialize(32, 1, 0.01, seed).unwrap();
        let x = random_grid(32, 0.0, 1.0, &mut rng(seed ^ 1));
        let readout = infer(&model, &x).unwrap();
        prop_assert!(readout.iter().all(|&v| v >= 0.0));
        let shifted = readout.map(|v| v + c);
        prop_assert_eq!(classify(&readout), classify(&shifted));
    }

    #[test]
    fn superposition_bounds(i1 in 0.0f64..10.0, i2 in 0.0f64..10.0, alpha in 0.0f64..6.3, cos in -1.0f64..1.0) {
        let i = superpose_intensity(i1, i2, alpha, cos).unwrap();
        let (a, b) = (i1.sqrt(), i2.sqrt());
        prop_assert!(i >= (a - b).powi(2) - 1e-9 && i <= (a + b).powi(2) + 1e-9);
        let orthogonal = superpose_intensity(i1, i2, std::f64::consts::FRAC_PI_2, cos).unwrap();
        prop_assert_eq!(orthogonal, i1 + i2);
    }

    #[test]
    fn preprocess_is_affine(seed in any::<u64>()) {
        let mut r = rng(seed);
        let layer = LayerParams::new(random_grid(8, -2.0, 2.0, &mut r), random_grid(8, -1.0, 1.0, &mut r), RealGrid::zeros(8).unwrap()).unwrap();
        let x = random_grid(8, 0.0, 1.0, &mut r);
        let pre = preprocess(&x, &layer).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let expect = layer.weight[(a, b)] * x[(a, b)] + layer.bias[(a, b)];
                prop_assert_eq!(pre[(a, b)], Complex64::new(expect, 0.0));
            }
        }
    }
}
