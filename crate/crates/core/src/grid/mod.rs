//! Uniform grids, wavefunctions on them, and standard expectation values.
//!
//! Coordinates run over `x_i = x_min + i·dx` with `dx = (x_max − x_min)/n`;
//! the domain is periodic, so `x_max` itself is identified with `x_min`.
//! Two-axis data is stored row-major with axis 1 contiguous, i.e.
//! `Ψ(x1_i, x2_j)` lives at `i * n2 + j`.

pub mod snapshot;
pub mod spectral;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::HBAR;
pub use spectral::Spectral;

/// Smallest supported number of points per axis.
pub const MIN_POINTS: usize = 8;

/// One periodic axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Axis {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "axis needs a power-of-two point count >= {MIN_POINTS}, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidParameter(format!(
                "axis bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            n_points,
            x_min,
            x_max,
        })
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    /// Spacing of the dual (angular wavenumber) grid.
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n_points as f64 * self.dx())
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.coord(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        spectral::fft_wavenumbers(self.n_points, self.dx())
    }
}

/// A 1-D or 2-D uniform grid (physical space or two-particle configuration space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
}

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "grids have one or two axes, got {}",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn line(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        Self::new(vec![Axis::new(n_points, x_min, x_max)?])
    }

    /// Square configuration grid with the same axis twice.
    pub fn square(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        let axis = Axis::new(n_points, x_min, x_max)?;
        Self::new(vec![axis.clone(), axis])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, axis: usize) -> &Axis {
        &self.axes[axis]
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n_points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `Π dx` for Riemann sums.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::dx).product()
    }

    /// Coordinate of flat point `index` along `axis`.
    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        let inner: usize = self.axes[axis + 1..].iter().map(|a| a.n_points).product();
        let i = (index / inner) % self.axes[axis].n_points;
        self.axes[axis].coord(i)
    }

    /// Coordinates of every flat point along `axis`.
    pub fn coord_field(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|idx| self.coord(axis, idx)).collect()
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.ndim() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "axis {axis} out of range for {}-axis grid",
                self.ndim()
            )))
        }
    }

    pub fn ensure_same(&self, other: &SpatialGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Flat indices of points on the domain edge (first or last index on any axis).
    pub fn boundary_indices(&self) -> Vec<usize> {
        let shape = self.shape();
        (0..self.len())
            .filter(|&idx| {
                let mut rem = idx;
                for d in (0..shape.len()).rev() {
                    let i = rem % shape[d];
                    rem /= shape[d];
                    if i == 0 || i == shape[d] - 1 {
                        return true;
                    }
                }
                false
            })
            .collect()
    }
}

/// Complex amplitudes `ψ(x)` (or `Ψ(x1, x2)`) on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionGrid {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
    /// Object time `t` in atomic units.
    pub time: f64,
}

impl WavefunctionGrid {
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter(
                "wavefunction contains non-finite amplitudes".into(),
            ));
        }
        Ok(Self {
            grid,
            amplitudes,
            time,
        })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let ndim = grid.ndim();
        let mut x = vec![0.0; ndim];
        let amps = (0..grid.len())
            .map(|idx| {
                for (d, xd) in x.iter_mut().enumerate() {
                    *xd = grid.coord(d, idx);
                }
                f(&x)
            })
            .collect();
        Self::new(grid, amps, 0.0)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Replaces the amplitudes while keeping grid and time.
    pub fn with_amplitudes(&self, amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::new(self.grid.clone(), amplitudes, self.time)
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `Σ |ψ|² ΔV`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate("cannot normalize a null state".into()));
        }
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        Ok(self)
    }

    /// Largest density on the domain edge relative to the peak density.
    pub fn boundary_ratio(&self) -> f64 {
        let rho = self.density();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let edge = self
            .grid
            .boundary_indices()
            .into_iter()
            .map(|i| rho[i])
            .fold(0.0, f64::max);
        edge / peak
    }

    /// Momentum-space norm `Σ |φ(p)|² Δp`, which equals [`Self::norm_sqr`] by Parseval.
    pub fn momentum_norm_sqr(&self) -> f64 {
        let spectral = Spectral::new(&self.grid);
        let mut data = self.amplitudes.clone();
        spectral.forward_all(&mut data);
        // |φ|² Δp = |FFT|² (ΔV)² / (2πħ)^d · Π Δp = |FFT|² ΔV / N
        data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
            / self.grid.len() as f64
    }
}

/// Normalised Gaussian packet `ψ(x) ∝ exp(−(x−x0)²/(4σ²) + i p0 x/ħ)` on a 1-D grid.
pub fn make_gaussian_packet(
    grid: &SpatialGrid,
    x0: f64,
    p0: f64,
    sigma: f64,
) -> Result<WavefunctionGrid> {
    if grid.ndim() != 1 {
        return Err(Error::InvalidParameter(
            "Gaussian packets are built on 1-D grids".into(),
        ));
    }
    let axis = grid.axis(0);
    if !(sigma >= 4.0 * axis.dx()) {
        return Err(Error::Resolution(format!(
            "sigma = {sigma} is below 4·dx = {}",
            4.0 * axis.dx()
        )));
    }
    if x0 - 5.0 * sigma < axis.x_min || x0 + 5.0 * sigma > axis.x_max {
        return Err(Error::DomainViolation(format!(
            "packet at {x0} with sigma {sigma} is clipped by [{}, {}]",
            axis.x_min, axis.x_max
        )));
    }
    let pref = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    WavefunctionGrid::from_fn(grid.clone(), |x| {
        let d = x[0] - x0;
        let envelope = pref * (-d * d / (4.0 * sigma * sigma)).exp();
        Complex64::from_polar(envelope, p0 * x[0] / HBAR)
    })?
    .normalized()
}

/// `⟨φ|ψ⟩ = Σ φ*(x) ψ(x) ΔV`.
pub fn inner_product(phi: &WavefunctionGrid, psi: &WavefunctionGrid) -> Result<Complex64> {
    phi.grid.ensure_same(&psi.grid)?;
    let s: Complex64 = phi
        .amplitudes
        .iter()
        .zip(&psi.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * phi.grid.cell_volume())
}

/// Operators whose expectation values and weak values are supported.
#[derive(Debug, Clone, Copy)]
pub enum Observable<'a> {
    Position(usize),
    Momentum(usize),
    Kinetic { axis: usize, mass: f64 },
    Potential(&'a [f64]),
    Hamiltonian { potential: &'a [f64], masses: &'a [f64] },
}

/// `Ĝ ψ` on the grid (spectral for differential operators).
pub fn apply_observable(psi: &WavefunctionGrid, obs: Observable<'_>) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let amps = psi.amplitudes();
    match obs {
        Observable::Position(axis) => {
            grid.check_axis(axis)?;
            Ok(amps
                .iter()
                .enumerate()
                .map(|(i, z)| z * grid.coord(axis, i))
                .collect())
        }
        Observable::Momentum(axis) => {
            grid.check_axis(axis)?;
            let d = Spectral::new(grid).derivative(amps, axis, 1);
            Ok(d.into_iter().map(|z| Complex64::new(0.0, -HBAR) * z).collect())
        }
        Observable::Kinetic { axis, mass } => {
            grid.check_axis(axis)?;
            let d2 = Spectral::new(grid).derivative(amps, axis, 2);
            let c = -HBAR * HBAR / (2.0 * mass);
            Ok(d2.into_iter().map(|z| z * c).collect())
        }
        Observable::Potential(v) => {
            if v.len() != amps.len() {
                return Err(Error::GridMismatch("potential length".into()));
            }
            Ok(amps.iter().zip(v).map(|(z, v)| z * v).collect())
        }
        Observable::Hamiltonian { potential, masses } => {
            if masses.len() != grid.ndim() {
                return Err(Error::InvalidParameter(
                    "one mass per axis is required".into(),
                ));
            }
            let mut out = apply_observable(psi, Observable::Potential(potential))?;
            for (axis, &mass) in masses.iter().enumerate() {
                let k = apply_observable(psi, Observable::Kinetic { axis, mass })?;
                out.iter_mut().zip(k).for_each(|(a, b)| *a += b);
            }
            Ok(out)
        }
    }
}

/// Imaginary residue above which an expectation is rejected as non-Hermitian.
pub const HERMITICITY_TOLERANCE: f64 = 1e-8;

/// `⟨ψ|Ĝ|ψ⟩` for a Hermitian observable.
pub fn expectation(psi: &WavefunctionGrid, obs: Observable<'_>) -> Result<f64> {
    let g = apply_observable(psi, obs)?;
    let value: Complex64 = psi
        .amplitudes()
        .iter()
        .zip(&g)
        .map(|(a, b)| a.conj() * b)
        .sum::<Complex64>()
        * psi.grid().cell_volume();
    checked_real(value)
}

/// Real part of a Hermitian form, rejecting a significant imaginary residue.
pub(crate) fn checked_real(value: Complex64) -> Result<f64> {
    if value.im.abs() > HERMITICITY_TOLERANCE * value.re.abs().max(1.0) {
        return Err(Error::HermiticityViolation { residue: value.im });
    }
    Ok(value.re)
}

/// Spectral derivative of the given order (1 or 2) along `axis`.
pub fn spectral_derivative(
    psi: &WavefunctionGrid,
    axis: usize,
    order: u32,
) -> Result<Vec<Complex64>> {
    psi.grid().check_axis(axis)?;
    if !(order == 1 || order == 2) {
        return Err(Error::InvalidParameter(format!(
            "derivative order must be 1 or 2, got {order}"
        )));
    }
    Ok(Spectral::new(psi.grid()).derivative(psi.amplitudes(), axis, order))
}

/// A 1-D state in the momentum representation, momenta ascending.
#[derive(Debug, Clone)]
pub struct MomentumAmplitudes {
    pub momenta: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub dp: f64,
}

impl MomentumAmplitudes {
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// `φ(p) = (2πħ)^{-1/2} ∫ e^{−ipx/ħ} ψ(x) dx`, evaluated on the dual grid.
pub fn to_momentum(grid: &SpatialGrid, amplitudes: &[Complex64]) -> Result<MomentumAmplitudes> {
    if grid.ndim() != 1 {
        return Err(Error::InvalidParameter(
            "momentum representation is implemented for 1-D grids".into(),
        ));
    }
    let axis = grid.axis(0);
    let n = axis.n_points;
    let spectral = Spectral::new(grid);
    let mut data = amplitudes.to_vec();
    spectral.forward_axis(&mut data, 0);
    let k = spectral.wavenumbers(0);
    let pref = axis.dx() / (2.0 * std::f64::consts::PI * HBAR).sqrt();
    let order = spectral::fftshift_indices(n);
    let momenta: Vec<f64> = order.iter().map(|&j| HBAR * k[j]).collect();
    let amps = order
        .iter()
        .map(|&j| data[j] * Complex64::from_polar(pref, -k[j] * axis.x_min))
        .collect();
    Ok(MomentumAmplitudes {
        momenta,
        amplitudes: amps,
        dp: HBAR * axis.dk(),
    })
}

/// Inverse of [`to_momentum`]: position amplitudes from ascending-momentum amplitudes.
pub fn from_momentum(grid: &SpatialGrid, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
    if grid.ndim() != 1 || amplitudes.len() != grid.len() {
        return Err(Error::GridMismatch(
            "momentum amplitudes do not match the 1-D grid".into(),
        ));
    }
    let axis = grid.axis(0);
    let n = axis.n_points;
    let spectral = Spectral::new(grid);
    let k = spectral.wavenumbers(0);
    let pref = (2.0 * std::f64::consts::PI * HBAR).sqrt() / axis.dx();
    let order = spectral::fftshift_indices(n);
    let mut data = vec![Complex64::new(0.0, 0.0); n];
    for (pos, &j) in order.iter().enumerate() {
        data[j] = amplitudes[pos] * Complex64::from_polar(pref, k[j] * axis.x_min);
    }
    spectral.inverse_axis(&mut data, 0);
    Ok(data)
}
