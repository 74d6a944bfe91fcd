mod common;

use common::*;
use isamfr::data::SusceptibilityImage;
use isamfr::metrics::{evaluate, fwhm, log_scale_16bit, psnr, rmse, ssim, PSNR_CAP_DB};
use isamfr::Error;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

fn u16_image(seed: u64, shape: (usize, usize)) -> Array2<u16> {
    use rand::Rng;
    let mut r = rng(seed);
    Array2::from_shape_simple_fn(shape, || r.random::<u16>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ssim_is_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>(), n in 11usize..24) {
        let a = u16_image(s1, (n, n + 3));
        let b = u16_image(s2, (n, n + 3));
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn psnr_is_symmetric_and_capped(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = u16_image(s1, (12, 12));
        let b = u16_image(s2, (12, 12));
        let v = psnr(&a, &b).unwrap();
        prop_assert_eq!(v, psnr(&b, &a).unwrap());
        prop_assert!(v <= PSNR_CAP_DB);
    }

    #[test]
    fn rmse_is_a_distance(s1 in any::<u64>(), s2 in any::<u64>()) {
        let g = grid(4, 16, 2.0, 8);
        let a = random_image(&g, &mut rng(s1));
        let b = random_image(&g, &mut rng(s2));
        let c = SusceptibilityImage::zeros(g.clone());
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        prop_assert!((rmse(&a, &b).unwrap() - rmse(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(rmse(&a, &b).unwrap() <= rmse(&a, &c).unwrap() + rmse(&c, &b).unwrap() + 1e-15);
    }

    #[test]
    fn gaussian_width(sigma in 1.0f64..8.0, centre in 30.0f64..34.0) {
        let p: Vec<f64> = (0..64).map(|i| (-(i as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let want = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
        // sampled peak and linear crossings each cost a fraction of a sample
        prop_assert!((fwhm(&p).unwrap() - want).abs() < 0.25);
    }
}

#[test]
fn fwhm_of_degenerate_profiles() {
    assert_eq!(fwhm(&[0.0, 0.0, 0.0]), None);
    assert_eq!(fwhm(&[1.0, 1.0, 1.0]), None);
    assert_eq!(fwhm(&[0.0, 1.0, 0.0]), Some(1.0));
    assert_eq!(fwhm(&[0.0, 1.0, 1.0, 0.0]), Some(2.0));
}

#[test]
fn log_scale_maps_the_window() {
    let g = grid(2, 4, 2.0, 2);
    let data = Array2::from_shape_vec(
        (2, 4),
        [1.0, 0.1, 1e-3, 0.0].repeat(2).into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    )
    .unwrap();
    let img = SusceptibilityImage::new(g.clone(), data).unwrap();
    let s = log_scale_16bit(&img, -60.0, 0.0).unwrap();
    assert_eq!(s.row(0).to_vec(), vec![65535, 43690, 0, 0]);
    assert!(matches!(
        log_scale_16bit(&SusceptibilityImage::zeros(g.clone()), -60.0, 0.0),
        Err(Error::ZeroImage)
    ));
    assert!(log_scale_16bit(&img, 0.0, -60.0).is_err());
}

#[test]
fn evaluation_of_truth_is_perfect() {
    let g = grid(16, 32, 2.0, 16);
    let t = random_image(&g, &mut rng(5));
    let r = evaluate("x", &t, &t, -60.0, 0.0).unwrap();
    assert_eq!((r.rmse, r.psnr, r.ssim), (0.0, PSNR_CAP_DB, 1.0));
    let noisy = SusceptibilityImage::new(g.clone(), t.data() + &random_image(&g, &mut rng(6)).data().mapv(|v| v * 0.1)).unwrap();
    let r2 = evaluate("y", &noisy, &t, -60.0, 0.0).unwrap();
    assert!(r2.rmse > 0.0 && r2.psnr < PSNR_CAP_DB && r2.ssim < 1.0);
}

#[test]
fn mismatched_shapes_are_rejected() {
    assert!(psnr(&u16_image(0, (4, 4)), &u16_image(1, (4, 5))).is_err());
    assert!(ssim(&u16_image(0, (12, 12)), &u16_image(1, (12, 13))).is_err());
    let a = random_image(&grid(2, 8, 2.0, 4), &mut rng(0));
    let b = random_image(&grid(2, 16, 2.0, 4), &mut rng(0));
    assert!(rmse(&a, &b).is_err());
}
