mod common;

use common::*;
use isamfr::data::DispersionModel;
use isamfr::isam::{isam_reconstruct, k_adjoint, k_forward, khat_adjoint, khat_forward, plan_nufft, stolt_beta};
use isamfr::synthesis::simulate_measurement;
use isamfr::Error;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_matches_explicit_sums(
        n_x in 3usize..12,
        log_z in 3u32..6,
        pitch in 0.8f64..4.0,
        focal_frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let n_z = 1usize << log_z;
        let focal = ((n_z - 1) as f64 * focal_frac) as usize;
        let g = grid(n_x, n_z, pitch, focal);
        let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
        let x = random_image(&g, &mut rng(seed));
        let got = k_forward(&x, &plan).unwrap();
        prop_assert!(rel_l2(got.data(), &k_oracle(x.data(), &g)) < 1e-5);
    }

    #[test]
    fn adjoint_pairs(seed in any::<u64>(), a2 in -300.0f64..300.0, a3 in -300.0f64..300.0) {
        let g = grid(16, 32, 2.0, 20);
        let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
        let d = DispersionModel::new(&g, K_0, &[a2, a3]).unwrap();
        let mut r = rng(seed);
        let x = random_image(&g, &mut r);
        let y = random_spectra(&g, &mut r);
        let kx = khat_forward(&x, &plan, &d).unwrap();
        let khy = khat_adjoint(&y, &plan, &d).unwrap();
        let gap = (inner(kx.data(), y.data()) - inner(x.data(), khy.data())).norm();
        prop_assert!(gap < 1e-10 * norm(kx.data()) * norm(y.data()));
    }

    #[test]
    fn forward_is_linear(seed in any::<u64>(), ar in -2.0f64..2.0, ai in -2.0f64..2.0) {
        let g = grid(8, 32, 2.0, 24);
        let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
        let mut r = rng(seed);
        let x = random_image(&g, &mut r);
        let y = random_image(&g, &mut r);
        let a = Complex64::new(ar, ai);
        let combo = isamfr::data::SusceptibilityImage::new(g.clone(), x.data().mapv(|v| v * a) + y.data()).unwrap();
        let lhs = k_forward(&combo, &plan).unwrap();
        let rhs = k_forward(&x, &plan).unwrap().data().mapv(|v| v * a) + k_forward(&y, &plan).unwrap().data();
        prop_assert!(rel_l2(lhs.data(), &rhs) < 1e-12);
    }

    #[test]
    fn norm_stays_under_estimate(seed in any::<u64>()) {
        let g = grid(16, 64, 2.0, 48);
        let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
        let x = random_image(&g, &mut rng(seed));
        let kx = k_forward(&x, &plan).unwrap();
        prop_assert!(norm(kx.data()) <= 1.01 * plan.op_norm() * norm(x.data()));
    }
}

#[test]
fn normal_operator_growth_is_bounded() {
    let g = grid(16, 64, 2.0, 48);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let mut x = random_image(&g, &mut rng(3));
    let start = x.norm();
    for n in 1..=10 {
        x = k_adjoint(&k_forward(&x, &plan).unwrap(), &plan).unwrap();
        assert!(x.norm() <= plan.growth_bound(n) * start);
    }
}

#[test]
fn point_response_peaks_at_the_scatterer() {
    let g = grid(32, 64, 2.0, 40);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    for (px, pz) in [(16, 40), (5, 50), (28, 10)] {
        let mut data = Array2::zeros(g.shape());
        data[[px, pz]] = Complex64::new(1.0, 0.0);
        let eta = isamfr::data::SusceptibilityImage::new(g.clone(), data).unwrap();
        let back = k_adjoint(&k_forward(&eta, &plan).unwrap(), &plan).unwrap();
        let (mut best, mut at) = (0.0, (0, 0));
        for ((x, z), v) in back.data().indexed_iter() {
            if v.norm() > best {
                best = v.norm();
                at = (x, z);
            }
        }
        assert_eq!(at, (px, pz));
    }
}

#[test]
fn positive_delay_scatterer_reconstructs_in_place() {
    let g = grid(32, 128, 2.0, 100);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::none(&g);
    let mut data = Array2::zeros(g.shape());
    data[[12, 100]] = Complex64::new(1.0, 0.0);
    let eta = isamfr::data::SusceptibilityImage::new(g.clone(), data).unwrap();
    let s = simulate_measurement(&eta, &plan, &d, 0.0, 0).unwrap();
    let img = isam_reconstruct(&s, &plan, &d).unwrap();
    // the real part leaves half the amplitude at the scatterer
    assert!((img.data()[[12, 100]].norm() - 0.5).abs() < 1e-2);
}

#[test]
fn evanescent_and_bad_plans_are_rejected() {
    assert!(matches!(plan_nufft(grid(64, 32, 0.1, 16), 6, 2.0), Err(Error::Evanescent { .. })));
    assert!(plan_nufft(grid(8, 32, 2.0, 16), 6, 1.0).is_err());
    assert!(plan_nufft(grid(8, 32, 2.0, 16), 0, 2.0).is_err());
    assert!(stolt_beta(2.0 * K_MIN + 0.1, K_MIN).is_err());
    assert!((stolt_beta(0.0, K_0).unwrap() + 2.0 * K_0).abs() < 1e-12);
}

#[test]
fn mismatched_grid_is_rejected() {
    let plan = plan_nufft(grid(8, 32, 2.0, 16), 6, 2.0).unwrap();
    let other = grid(8, 32, 2.0, 20);
    let x = random_image(&other, &mut rng(0));
    assert!(k_forward(&x, &plan).is_err());
}
