//! Unitary FFT helpers on `n_x × n_z` arrays.
//!
//! Every transform here is scaled by `1/sqrt(n)` in both directions. Depth
//! arrays are stored with zero delay at index `n / 2`; spectra are stored in
//! natural wavenumber order.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plan pair of one length.
#[derive(Clone)]
pub struct UnitaryFft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryFft").field("len", &self.len).finish()
    }
}

impl UnitaryFft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        UnitaryFft {
            len,
            scale: 1.0 / (len as f64).sqrt(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `X[i] = n^{-1/2} Σ x[n] e^{-2πj i n / N}`
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Unnormalised forward transform.
    pub(crate) fn forward_raw(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalised inverse transform.
    pub(crate) fn inverse_raw(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Spectrum → depth profile with zero delay at `len / 2`.
    pub fn spectrum_to_depth(&self, buf: &mut [Complex64]) {
        self.inverse(buf);
        buf.rotate_right(self.len / 2);
    }

    /// Depth profile (zero delay at `len / 2`) → spectrum.
    pub fn depth_to_spectrum(&self, buf: &mut [Complex64]) {
        buf.rotate_left(self.len / 2);
        self.forward(buf);
    }
}

/// Applies `f` to every row (A-scan or q-line) in parallel.
pub(crate) fn for_each_row(a: &mut Array2<Complex64>, f: impl Fn(usize, &mut [Complex64]) + Sync) {
    a.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            let slice = row
                .as_slice_mut()
                .expect("rows of a standard-layout array are contiguous");
            f(r, slice)
        });
}

/// Axial transform of every A-scan from spectrum to depth.
pub fn axial_to_depth(spectra: &Array2<Complex64>, fft: &UnitaryFft) -> Array2<Complex64> {
    let mut out = spectra.as_standard_layout().into_owned();
    for_each_row(&mut out, |_, row| fft.spectrum_to_depth(row));
    out
}

/// Axial transform of every A-scan from depth to spectrum.
pub fn axial_to_spectrum(image: &Array2<Complex64>, fft: &UnitaryFft) -> Array2<Complex64> {
    let mut out = image.as_standard_layout().into_owned();
    for_each_row(&mut out, |_, row| fft.depth_to_spectrum(row));
    out
}

fn lateral(a: &Array2<Complex64>, apply: impl Fn(&mut [Complex64]) + Sync) -> Array2<Complex64> {
    let mut t = a.t().as_standard_layout().into_owned();
    for_each_row(&mut t, |_, col| apply(col));
    t.reversed_axes().as_standard_layout().into_owned()
}

/// Unitary forward FFT along the lateral axis (axis 0).
pub fn lateral_forward(a: &Array2<Complex64>, fft: &UnitaryFft) -> Array2<Complex64> {
    lateral(a, |c| fft.forward(c))
}

/// Unitary inverse FFT along the lateral axis (axis 0).
pub fn lateral_inverse(a: &Array2<Complex64>, fft: &UnitaryFft) -> Array2<Complex64> {
    lateral(a, |c| fft.inverse(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn energy(v: &[Complex64]) -> f64 {
        v.iter().map(|c| c.norm_sqr()).sum()
    }

    #[test]
    fn unitary_round_trip_and_parseval() {
        let f = UnitaryFft::new(16);
        let x: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut y = x.clone();
        f.forward(&mut y);
        assert!((energy(&x) - energy(&y)).abs() < 1e-12);
        f.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn delta_at_delay_d_has_linear_phase() {
        let n = 8;
        let f = UnitaryFft::new(n);
        let d = 2isize;
        let mut depth = vec![Complex64::new(0.0, 0.0); n];
        depth[(n as isize / 2 + d) as usize] = Complex64::new(1.0, 0.0);
        f.depth_to_spectrum(&mut depth);
        for (i, v) in depth.iter().enumerate() {
            let expect = Complex64::from_polar(
                1.0 / (n as f64).sqrt(),
                -2.0 * std::f64::consts::PI * i as f64 * d as f64 / n as f64,
            );
            assert!((v - expect).norm() < 1e-14);
        }
        f.spectrum_to_depth(&mut depth);
        assert!((depth[6] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }
}
