//! Fourier machinery on uniform periodic grids.
//!
//! All transforms are unnormalised forward / `1/n`-normalised inverse DFTs
//! along one axis at a time. Multi-axis data is row-major with the last axis
//! contiguous.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::SpatialGrid;

/// Arrays at least this long are transformed line-by-line in parallel.
const PAR_THRESHOLD: usize = 1 << 14;

/// FFT plans and dual-grid wavenumbers for one [`SpatialGrid`].
#[derive(Clone)]
pub struct Spectral {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("shape", &self.shape).finish()
    }
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let shape = grid.shape();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let wavenumbers = grid.axes().iter().map(|a| a.wavenumbers()).collect();
        Self {
            shape,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Angular wavenumbers of `axis` in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.forward[axis]);
    }

    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.inverse[axis]);
        let scale = 1.0 / self.shape[axis] as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward_all(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.forward_axis(data, axis);
        }
    }

    pub fn inverse_all(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.inverse_axis(data, axis);
        }
    }

    /// Fourier derivative of `order` along `axis`.
    ///
    /// The Nyquist mode is dropped for odd orders, so real inputs stay real.
    pub fn derivative(&self, data: &[Complex64], axis: usize, order: u32) -> Vec<Complex64> {
        let n = self.shape[axis];
        let k = &self.wavenumbers[axis];
        let factor: Vec<Complex64> = (0..n)
            .map(|i| {
                if order % 2 == 1 && n % 2 == 0 && i == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k[i]).powu(order)
                }
            })
            .collect();
        let mut out = data.to_vec();
        self.forward_axis(&mut out, axis);
        self.multiply_along(&mut out, axis, &factor);
        self.inverse_axis(&mut out, axis);
        out
    }

    /// Multiplies every line along `axis` elementwise by `factor`.
    pub fn multiply_along(&self, data: &mut [Complex64], axis: usize, factor: &[Complex64]) {
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        data.iter_mut()
            .enumerate()
            .for_each(|(idx, z)| *z *= factor[(idx / inner) % n]);
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        if inner == 1 {
            run_lines(data, n, fft);
            return;
        }
        // 2-D, axis 0: transpose so the lines become contiguous.
        let rows = self.shape[0];
        let cols = inner;
        let mut buf = transpose(data, rows, cols);
        run_lines(&mut buf, rows, fft);
        let back = transpose(&buf, cols, rows);
        data.copy_from_slice(&back);
    }
}

fn run_lines(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    if data.len() >= PAR_THRESHOLD && data.len() > n {
        data.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); scratch_len],
            |scratch, line| fft.process_with_scratch(line, scratch),
        );
    } else {
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        for line in data.chunks_mut(n) {
            fft.process_with_scratch(line, &mut scratch);
        }
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Angular wavenumbers `2πj/(n·dx)` in FFT order (non-negative first).
pub fn fft_wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            let j = j as isize;
            let m = if j < (n as isize + 1) / 2 { j } else { j - n as isize };
            m as f64 * dk
        })
        .collect()
}

/// Index permutation taking FFT order to ascending-wavenumber order.
pub fn fftshift_indices(n: usize) -> Vec<usize> {
    let half = n / 2;
    (0..n).map(|i| (i + n - half) % n).collect()
}
