//! One-dimensional Kaiser–Bessel gridding on an oversampled periodic grid.
//!
//! A line of `n` depth samples `h[d]`, `d ∈ [-n/2, n/2)`, has the periodic
//! spectrum `H(u) = n^{-1/2} Σ_d h[d] e^{-2πj u d / n}`. The type-2 transform
//! evaluates `H` at fractional indices `u`; the type-1 transform is its exact
//! adjoint.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::UnitaryFft;

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    // power series; converges for every finite x, terms used here stay below 1e300
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Kaiser–Bessel window with `width` taps on a grid oversampled by `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaiserBessel {
    pub width: usize,
    pub sigma: f64,
    pub beta: f64,
}

impl KaiserBessel {
    pub fn new(width: usize, sigma: f64) -> Self {
        let w = width as f64;
        let arg = (w / sigma).powi(2) * (sigma - 0.5).powi(2) - 0.8;
        KaiserBessel {
            width,
            sigma,
            beta: PI * arg.max(0.0).sqrt(),
        }
    }

    /// Kernel value at offset `t` grid cells from its centre.
    pub fn value(&self, t: f64) -> f64 {
        let half = 0.5 * self.width as f64;
        let r = t / half;
        if r.abs() > 1.0 {
            return 0.0;
        }
        bessel_i0(self.beta * (1.0 - r * r).sqrt())
    }

    /// Continuous Fourier transform `∫ψ(t) e^{2πjνt} dt` at `ν` cycles per cell.
    pub fn transform(&self, nu: f64) -> f64 {
        let w = self.width as f64;
        let a = self.beta * self.beta - (PI * w * nu).powi(2);
        if a > 1e-12 {
            let s = a.sqrt();
            w * s.sinh() / s
        } else if a < -1e-12 {
            let s = (-a).sqrt();
            w * s.sin() / s
        } else {
            w
        }
    }
}

/// Interpolation table for one line: every target has `width` consecutive
/// taps starting at `start` (mod `m`).
#[derive(Debug, Clone)]
pub(crate) struct LineTable {
    pub start: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Shared pieces for gridding lines of a fixed length.
#[derive(Debug, Clone)]
pub(crate) struct Gridder {
    pub n: usize,
    pub m: usize,
    pub kernel: KaiserBessel,
    /// `1 / ψ̂(d / m)` for `d = -n/2 .. n/2 - 1`.
    deconv: Vec<f64>,
    fft: UnitaryFft,
    scale: f64,
}

impl Gridder {
    pub fn new(n: usize, width: usize, sigma: f64) -> Self {
        let m = ((sigma * n as f64).ceil() as usize).max(n + width);
        let m = m + (m % 2);
        let sigma_eff = m as f64 / n as f64;
        let kernel = KaiserBessel::new(width, sigma_eff);
        let half = (n / 2) as isize;
        let deconv = (0..n as isize)
            .map(|j| 1.0 / kernel.transform((j - half) as f64 / m as f64))
            .collect();
        Gridder {
            n,
            m,
            kernel,
            deconv,
            fft: UnitaryFft::new(m),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    /// Taps and weights for fractional indices `u`.
    pub fn table(&self, u: &[f64]) -> LineTable {
        let w = self.kernel.width;
        let ratio = self.m as f64 / self.n as f64;
        let mut start = Vec::with_capacity(u.len());
        let mut weights = Vec::with_capacity(u.len() * w);
        for &ui in u {
            let l = ui * ratio;
            let first = (l - 0.5 * w as f64).floor() as isize + 1;
            start.push(first.rem_euclid(self.m as isize) as usize);
            for t in 0..w {
                weights.push(self.kernel.value(l - (first + t as isize) as f64));
            }
        }
        LineTable { start, weights }
    }

    fn depth_slot(&self, j: usize) -> usize {
        // depth index j holds delay j - n/2, stored at (delay mod m)
        let d = j as isize - (self.n / 2) as isize;
        d.rem_euclid(self.m as isize) as usize
    }

    /// Type-2: depth line → values at the table's targets.
    pub fn forward(&self, h: &[Complex64], table: &LineTable, work: &mut [Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(work.len(), self.m);
        work.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (j, v) in h.iter().enumerate() {
            work[self.depth_slot(j)] = v * self.deconv[j];
        }
        self.fft.forward_raw(work);
        let w = self.kernel.width;
        for (i, o) in out.iter_mut().enumerate() {
            let s = table.start[i];
            let taps = &table.weights[i * w..(i + 1) * w];
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, wt) in taps.iter().enumerate() {
                let mut l = s + t;
                if l >= self.m {
                    l -= self.m;
                }
                acc += work[l] * wt;
            }
            *o = acc * self.scale;
        }
    }

    /// Type-1 (adjoint of [`Gridder::forward`]): target values → depth line.
    pub fn adjoint(&self, y: &[Complex64], table: &LineTable, work: &mut [Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(work.len(), self.m);
        work.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let w = self.kernel.width;
        for (i, v) in y.iter().enumerate() {
            let s = table.start[i];
            let taps = &table.weights[i * w..(i + 1) * w];
            let v = v * self.scale;
            for (t, wt) in taps.iter().enumerate() {
                let mut l = s + t;
                if l >= self.m {
                    l -= self.m;
                }
                work[l] += v * wt;
            }
        }
        self.fft.inverse_raw(work);
        for (j, o) in out.iter_mut().enumerate() {
            *o = work[self.depth_slot(j)] * self.deconv[j];
        }
    }
}
