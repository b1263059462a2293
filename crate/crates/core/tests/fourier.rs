mod common;

use common::{dft_centered, random_field, rel_diff, rng};
use conn::{fft2, ifft2, Complex64, Field};
use proptest::prelude::*;

#[test]
fn matches_direct_dft_on_small_grids() {
    let mut r = rng(1);
    for side in [1, 2, 4, 8, 16] {
        let x = random_field(side, &mut r);
        let forward = fft2(&x).max_abs_diff(&dft_centered(&x, false)).unwrap();
        let inverse = ifft2(&x).max_abs_diff(&dft_centered(&x, true)).unwrap();
        assert!(forward < 1e-10, "side {side}: forward {forward}");
        assert!(inverse < 1e-10, "side {side}: inverse {inverse}");
    }
}

#[test]
fn parseval_on_random_16() {
    let x = random_field(16, &mut rng(2));
    let spec = fft2(&x);
    assert!((spec.energy() - x.energy()).abs() <= 1e-12 * x.energy());
    // the oracle agrees on the norm as well
    let oracle = dft_centered(&x, false);
    assert!((oracle.energy() - x.energy()).abs() <= 1e-12 * x.energy());
}

#[test]
fn round_trip_64() {
    let x = random_field(64, &mut rng(3));
    assert!(rel_diff(&ifft2(&fft2(&x)), &x) < 1e-12);
    assert!(rel_diff(&fft2(&ifft2(&x)), &x) < 1e-12);
}

#[test]
fn impulse_at_center_inverts_to_one_eighth() {
    let mut f = Field::zeros(8).unwrap();
    f[(4, 4)] = Complex64::new(1.0, 0.0);
    let oracle = dft_centered(&f, true);
    assert!(oracle.iter().all(|v| (v - Complex64::new(0.125, 0.0)).norm() < 1e-15));
    assert!(ifft2(&f).max_abs_diff(&oracle).unwrap() < 1e-15);
}

fn field_strategy() -> impl Strategy<Value = Field> {
    (0u32..6).prop_flat_map(|p| {
        let side = 1usize << p;
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), side * side).prop_map(move |v| {
            Field::from_vec(side, side, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn parseval(x in field_strategy()) {
        let e = x.energy();
        prop_assert!((fft2(&x).energy() - e).abs() <= 1e-10 * e.max(1e-300));
    }

    #[test]
    fn round_trips(x in field_strategy()) {
        let scale = x.energy().sqrt();
        prop_assert!(ifft2(&fft2(&x)).max_abs_diff(&x).unwrap() <= 1e-12 * scale.max(1e-300));
        prop_assert!(fft2(&ifft2(&x)).max_abs_diff(&x).unwrap() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn linearity(x in field_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let y = x.map(|v| Complex64::new(v.im * 0.5, -v.re) + c);
        let (alpha, beta) = (Complex64::new(a, b), Complex64::new(c, -a));
        let lhs = fft2(&Field::linear_combination(alpha, &x, beta, &y).unwrap());
        let rhs = Field::linear_combination(alpha, &fft2(&x), beta, &fft2(&y)).unwrap();
        let scale = lhs.energy().sqrt().max(rhs.energy().sqrt());
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * scale.max(1e-300));
    }
}
