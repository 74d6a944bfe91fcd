mod common;

use common::*;
use isamfr::data::{DispersionModel, RealSpectra, SusceptibilityImage, WeightVector};
use isamfr::isam::plan_nufft;
use isamfr::mbir::{depth_weights, mbir_solve, objective, relative_residual, soft_threshold, MbirConfig};
use isamfr::synthesis::simulate_measurement;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

proptest! {
    #[test]
    fn shrinkage_keeps_phase_and_removes_t(re in -5.0f64..5.0, im in -5.0f64..5.0, t in 0.0f64..3.0) {
        let u = c(re, im);
        let x = soft_threshold(u, t).unwrap();
        prop_assert!((x.norm() - (u.norm() - t).max(0.0)).abs() < 1e-12);
        if x.norm() > 0.0 {
            prop_assert!((x / x.norm() - u / u.norm()).norm() < 1e-12);
        }
    }

    #[test]
    fn shrinkage_is_nonexpansive(a in (-3.0f64..3.0, -3.0f64..3.0), b in (-3.0f64..3.0, -3.0f64..3.0), t in 0.0f64..2.0) {
        let (u, v) = (c(a.0, a.1), c(b.0, b.1));
        let d = (soft_threshold(u, t).unwrap() - soft_threshold(v, t).unwrap()).norm();
        prop_assert!(d <= (u - v).norm() + 1e-12);
    }

    #[test]
    fn ramp_weights_are_within_bounds(lo in 0.0f64..1.0, span in 0.0f64..2.0) {
        let g = grid(2, 64, 2.0, 32);
        let w = depth_weights(&g, lo, lo + span).unwrap();
        prop_assert_eq!(w.len(), 64);
        prop_assert!((w.as_slice()[32] - lo).abs() < 1e-12);
        prop_assert!((w.as_slice()[0] - (lo + span)).abs() < 1e-12);
        prop_assert!(w.as_slice().iter().all(|v| *v >= lo - 1e-12 && *v <= lo + span + 1e-12));
    }
}

#[test]
fn negative_threshold_is_an_error() {
    assert!(soft_threshold(c(1.0, 0.0), -0.1).is_err());
    assert!(soft_threshold(c(1.0, 0.0), f64::NAN).is_err());
    assert_eq!(soft_threshold(c(0.3, 0.4), 0.0).unwrap(), c(0.3, 0.4));
}

#[test]
fn relative_residual_of_fixed_point_is_zero() {
    let a = Array2::from_elem((2, 3), c(1.0, 2.0));
    let g = Array2::from_elem((2, 3), c(0.5, 0.0));
    assert_eq!(relative_residual(&a, &a, &g, 1e-12).unwrap(), 0.0);
    assert!(relative_residual(&a, &Array2::zeros((3, 2)), &g, 1e-12).is_err());
}

#[test]
fn zero_measurement_gives_zero_image() {
    let g = grid(8, 32, 2.0, 24);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::new(&g, K_0, &[150.0]).unwrap();
    let (img, trace) = mbir_solve(&RealSpectra::zeros(g.clone()), &plan, &d, &MbirConfig::plain(32)).unwrap();
    assert!(img.data().iter().all(|v| *v == c(0.0, 0.0)));
    assert!(trace.iterations() >= 1);
}

#[test]
fn objective_at_zero_is_half_data_energy() {
    let g = grid(4, 32, 2.0, 24);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::none(&g);
    let s = random_real(&g, &mut rng(8));
    let f = objective(&SusceptibilityImage::zeros(g.clone()), &s, &plan, &d, 0.5, &WeightVector::uniform(32)).unwrap();
    let half: f64 = 0.5 * s.data().iter().map(|v| v * v).sum::<f64>();
    assert!((f - half).abs() < 1e-12 * half);
}

#[test]
fn sparse_scene_is_recovered() {
    let g = grid(16, 64, 2.0, 48);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::new(&g, K_0, &[150.0]).unwrap();
    let mut data = Array2::zeros(g.shape());
    data[[4, 50]] = c(1.0, 0.0);
    data[[11, 12]] = c(0.0, -0.6);
    let eta = SusceptibilityImage::new(g.clone(), data).unwrap();
    let s = simulate_measurement(&eta, &plan, &d, 0.0, 0).unwrap();
    let cfg = MbirConfig {
        lambda: 0.02,
        tol: 1e-5,
        max_iters: 2000,
        ..MbirConfig::plain(64)
    };
    let (img, trace) = mbir_solve(&s, &plan, &d, &cfg).unwrap();
    // amplitudes come back at half scale
    assert!((img.data()[[4, 50]] - c(0.5, 0.0)).norm() < 0.05, "{}", img.data()[[4, 50]]);
    assert!((img.data()[[11, 12]] - c(0.0, -0.3)).norm() < 0.05, "{}", img.data()[[11, 12]]);
    assert!(img.data()[[4, 14]].norm() < 0.05);
    let rm = trace.running_min();
    assert!(rm.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn invalid_configs_are_rejected() {
    let g = grid(4, 32, 2.0, 24);
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::none(&g);
    let s = RealSpectra::zeros(g.clone());
    for cfg in [
        MbirConfig { lambda: -1.0, ..MbirConfig::plain(32) },
        MbirConfig { tol: 0.0, ..MbirConfig::plain(32) },
        MbirConfig { max_iters: 0, ..MbirConfig::plain(32) },
        MbirConfig::plain(16),
    ] {
        assert!(mbir_solve(&s, &plan, &d, &cfg).is_err());
    }
    assert!(depth_weights(&g, 1.0, 0.5).is_err());
}
