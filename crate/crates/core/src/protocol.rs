//! Monte Carlo weak-momentum measurement followed by position post-selection.
//!
//! The object (1-D) is coupled to a Gaussian pointer through `γ T P̂_s ⊗ P̂_a`,
//! the pointer is read out in position (real part of the weak value) or in
//! momentum (imaginary part), the collapsed object evolves for `τ`, and its
//! position is measured. Sampling uses the exact joint law; nothing is
//! expanded in `γT`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{from_momentum, make_gaussian_packet, to_momentum, SpatialGrid, Spectral, WavefunctionGrid};
use crate::propagator::{EvolutionConfig, TauPropagator};
use crate::seeding::{derive_seed, rng_for};
use crate::units::HBAR;
use crate::weakfield::{formal_weak_value, OperatorTag, DENSITY_FLOOR};

/// Defined-bin threshold used by [`conditional_average`].
pub const DEFAULT_MIN_COUNT: usize = 20;

/// Readout outcomes less likely than this fraction of the most likely one are
/// never drawn and their collapsed states are not propagated.
pub const READOUT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Pointer position; estimates `Re` of the momentum weak value.
    Position,
    /// Pointer momentum; estimates `Im` of the momentum weak value.
    Momentum,
}

/// Calibrated Gaussian pointer `f(y) = (2πσ²)^{-1/4} e^{−y²/4σ²}`.
#[derive(Debug, Clone)]
pub struct AncillaModel {
    pub sigma: f64,
    pub gamma: f64,
    pub duration: f64,
    pub grid_y: SpatialGrid,
    pub f: Vec<Complex64>,
    /// `∫ |f̃(p)|² p² dp`.
    pub momentum_variance: f64,
}

impl AncillaModel {
    pub fn coupling(&self) -> f64 {
        self.gamma * self.duration
    }

    fn amplitude(&self, y: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * std::f64::consts::PI * s2).powf(-0.25) * (-y * y / (4.0 * s2)).exp()
    }
}

pub fn make_ancilla(sigma: f64, gamma: f64, duration: f64, grid_y: &SpatialGrid) -> Result<AncillaModel> {
    if grid_y.ndim() != 1 {
        return Err(Error::InvalidParameter("the pointer lives on a 1-D grid".into()));
    }
    if !(gamma > 0.0 && duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma and T must be positive, got {gamma} and {duration}"
        )));
    }
    let axis = grid_y.axis(0);
    if !(sigma >= 4.0 * axis.dx()) {
        return Err(Error::Resolution(format!(
            "pointer width {sigma} is below 4·dy = {}",
            4.0 * axis.dx()
        )));
    }
    if axis.x_min > -5.0 * sigma || axis.x_max < 5.0 * sigma {
        return Err(Error::DomainViolation(
            "pointer grid must contain ±5σ around y = 0".into(),
        ));
    }
    let mut model = AncillaModel {
        sigma,
        gamma,
        duration,
        grid_y: grid_y.clone(),
        f: Vec::new(),
        momentum_variance: 0.0,
    };
    model.f = axis
        .coords()
        .iter()
        .map(|&y| Complex64::new(model.amplitude(y), 0.0))
        .collect();

    let dy = axis.dx();
    let ys = axis.coords();
    let mean: f64 = model.f.iter().zip(&ys).map(|(f, y)| y * f.norm_sqr()).sum::<f64>() * dy;
    if mean.abs() > 1e-10 {
        return Err(Error::Calibration(format!("pointer mean {mean:e} is not zero")));
    }
    let spectral = Spectral::new(grid_y);
    let df = spectral.derivative(&model.f, 0, 1);
    let slope: f64 = model
        .f
        .iter()
        .zip(&df)
        .zip(&ys)
        .map(|((f, d), y)| y * (f.conj() * d).re)
        .sum::<f64>()
        * dy;
    if (slope + 0.5).abs() > 1e-8 {
        return Err(Error::Calibration(format!("∫ y f f′ dy = {slope}, expected −1/2")));
    }
    let d2 = spectral.derivative(&model.f, 0, 2);
    model.momentum_variance = -HBAR * HBAR
        * model.f.iter().zip(&d2).map(|(f, d)| (f.conj() * d).re).sum::<f64>()
        * dy;
    Ok(model)
}

/// `ψ̃(p) f(y − γT p)` on the object-momentum × pointer grid (rows are momenta).
#[derive(Debug, Clone)]
pub struct JointAmplitude {
    pub momenta: Vec<f64>,
    pub y: Vec<f64>,
    pub dp: f64,
    pub dy: f64,
    pub values: Vec<Complex64>,
}

impl JointAmplitude {
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dp * self.dy
    }

    /// `|Ψ(p, y)|²` summed over `p` (times `dp`).
    pub fn pointer_density(&self) -> Vec<f64> {
        let ny = self.y.len();
        let mut out = vec![0.0; ny];
        for row in self.values.chunks(ny) {
            for (o, z) in out.iter_mut().zip(row) {
                *o += z.norm_sqr() * self.dp;
            }
        }
        out
    }
}

/// Largest `|γT p|` over the object's momentum support, checked against the
/// pointer grid with a 5σ margin.
fn check_support(momenta: &[f64], density: &[f64], ancilla: &AncillaModel) -> Result<f64> {
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let g = ancilla.coupling();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (p, r) in momenta.iter().zip(density) {
        if *r >= DENSITY_FLOOR * peak {
            lo = lo.min(g * p);
            hi = hi.max(g * p);
        }
    }
    let axis = ancilla.grid_y.axis(0);
    let margin = 5.0 * ancilla.sigma;
    if lo - margin < axis.x_min || hi + margin > axis.x_max {
        return Err(Error::SupportOverflow(format!(
            "shifted pointer spans [{:.3}, {:.3}] ± 5σ, grid is [{}, {}]",
            lo, hi, axis.x_min, axis.x_max
        )));
    }
    Ok(hi.abs().max(lo.abs()))
}

pub fn entangle(psi: &WavefunctionGrid, ancilla: &AncillaModel) -> Result<JointAmplitude> {
    let phi = to_momentum(psi.grid(), psi.amplitudes())?;
    check_support(&phi.momenta, &phi.density(), ancilla)?;
    let g = ancilla.coupling();
    let y = ancilla.grid_y.axis(0).coords();
    let mut values = Vec::with_capacity(phi.momenta.len() * y.len());
    for (p, a) in phi.momenta.iter().zip(&phi.amplitudes) {
        values.extend(y.iter().map(|yy| a * ancilla.amplitude(yy - g * p)));
    }
    Ok(JointAmplitude {
        momenta: phi.momenta,
        y,
        dp: phi.dp,
        dy: ancilla.grid_y.axis(0).dx(),
        values,
    })
}

/// Exact conditional law of the post-selected position given each readout.
///
/// Readout values live on the pointer grid (position readout) or its Fourier
/// dual (momentum readout). `x_probs[i][j]` is the probability of finding the
/// object at grid point `j` given readout `i`.
#[derive(Debug, Clone)]
pub struct ReadoutKernel {
    pub readout: Readout,
    pub x_grid: SpatialGrid,
    pub coupling: f64,
    /// Readout-to-momentum scale: `p_w = value / scale`.
    pub scale: f64,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub x_probs: Vec<Vec<f64>>,
    /// Mean `|⟨ψ|ψ̃⟩|²` between the prepared and the collapsed object state.
    pub fidelity: f64,
    /// `γT · max|p|` over the object's momentum support.
    pub support_shift: f64,
    weight_cdf: Vec<f64>,
    x_cdfs: Vec<Vec<f64>>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn sample_index(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

impl ReadoutKernel {
    pub fn new(
        psi: &WavefunctionGrid,
        ancilla: &AncillaModel,
        tau: f64,
        cfg: &EvolutionConfig,
        readout: Readout,
    ) -> Result<Self> {
        let grid = psi.grid().clone();
        grid.ensure_same(cfg.potential.grid())?;
        let psi = psi.clone().normalized()?;
        let phi = to_momentum(&grid, psi.amplitudes())?;
        let support_shift = check_support(&phi.momenta, &phi.density(), ancilla)?;
        let g = ancilla.coupling();

        // Collapsed object state in momentum space for readout index i.
        let (values, scale, weights): (Vec<f64>, f64, Vec<f64>) = match readout {
            Readout::Position => {
                let ys = ancilla.grid_y.axis(0).coords();
                let dy = ancilla.grid_y.axis(0).dx();
                let w = ys
                    .iter()
                    .map(|y| {
                        phi.amplitudes
                            .iter()
                            .zip(&phi.momenta)
                            .map(|(a, p)| a.norm_sqr() * ancilla.amplitude(y - g * p).powi(2))
                            .sum::<f64>()
                            * phi.dp
                            * dy
                    })
                    .collect();
                (ys, g, w)
            }
            Readout::Momentum => {
                if (ancilla.momentum_variance - HBAR / 2.0).abs() > 1e-8 {
                    return Err(Error::Calibration(format!(
                        "momentum readout needs Δ² = ħ/2, pointer has {}",
                        ancilla.momentum_variance
                    )));
                }
                let f_tilde = to_momentum(&ancilla.grid_y, &ancilla.f)?;
                let w = f_tilde.density().iter().map(|r| r * f_tilde.dp).collect();
                let scale = 2.0 * g * ancilla.momentum_variance / HBAR;
                (f_tilde.momenta, scale, w)
            }
        };
        let peak = weights.iter().cloned().fold(0.0, f64::max);
        let weights: Vec<f64> = weights
            .iter()
            .map(|&w| if w >= READOUT_FLOOR * peak { w } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let u = TauPropagator::new(cfg, tau)?;
        let nx = grid.len();
        let rows: Vec<(Vec<f64>, f64)> = values
            .par_iter()
            .zip(&weights)
            .map(|(&v, &w)| -> Result<(Vec<f64>, f64)> {
                if w == 0.0 {
                    return Ok((vec![1.0 / nx as f64; nx], 0.0));
                }
                let collapsed: Vec<Complex64> = phi
                    .amplitudes
                    .iter()
                    .zip(&phi.momenta)
                    .map(|(a, p)| match readout {
                        Readout::Position => a * ancilla.amplitude(v - g * p),
                        Readout::Momentum => a * Complex64::from_polar(1.0, -g * p * v / HBAR),
                    })
                    .collect();
                let norm: f64 = collapsed.iter().map(|z| z.norm_sqr()).sum::<f64>() * phi.dp;
                let overlap: Complex64 = phi
                    .amplitudes
                    .iter()
                    .zip(&collapsed)
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
                    * phi.dp;
                let fidelity = if norm > 0.0 { overlap.norm_sqr() / norm } else { 0.0 };
                let mut x_amps = from_momentum(&grid, &collapsed)?;
                u.propagate_amplitudes(&mut x_amps, psi.time)?;
                let dens: Vec<f64> = x_amps.iter().map(|z| z.norm_sqr()).collect();
                let sum: f64 = dens.iter().sum();
                let probs = if sum > 0.0 {
                    dens.iter().map(|r| r / sum).collect()
                } else {
                    vec![1.0 / dens.len() as f64; dens.len()]
                };
                Ok((probs, fidelity))
            })
            .collect::<Result<_>>()?;
        let fidelity = rows.iter().zip(&weights).map(|((_, f), w)| f * w).sum();
        let x_probs: Vec<Vec<f64>> = rows.into_iter().map(|(p, _)| p).collect();
        let x_cdfs = x_probs.iter().map(|p| cumulative(p)).collect();
        Ok(Self {
            readout,
            x_grid: grid,
            coupling: g,
            scale,
            weight_cdf: cumulative(&weights),
            values,
            weights,
            x_probs,
            fidelity,
            support_shift,
            x_cdfs,
        })
    }

    /// Marginal probability of each object grid point.
    pub fn x_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.x_grid.len()];
        for (w, p) in self.weights.iter().zip(&self.x_probs) {
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        out
    }

    /// `(readout index, x index)` for one repetition.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let i = sample_index(&self.weight_cdf, rng.gen::<f64>());
        let j = sample_index(&self.x_cdfs[i], rng.gen::<f64>());
        (i, j)
    }

    /// Exact `E[p_w | x ∈ bin]` and the bin probability, from quadrature.
    pub fn exact_conditional(&self, layout: &BinLayout) -> Vec<(f64, f64)> {
        let mut num = vec![0.0; layout.n_bins];
        let mut den = vec![0.0; layout.n_bins];
        let bin_of: Vec<usize> = (0..self.x_grid.len()).map(|j| layout.bin_of_index(j)).collect();
        for ((w, v), p) in self.weights.iter().zip(&self.values).zip(&self.x_probs) {
            let est = v / self.scale;
            for (j, q) in p.iter().enumerate() {
                num[bin_of[j]] += w * q * est;
                den[bin_of[j]] += w * q;
            }
        }
        num.iter()
            .zip(&den)
            .map(|(n, d)| (if *d > 0.0 { n / d } else { 0.0 }, *d))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub seed: u64,
    pub p_w: f64,
    pub x: f64,
    pub x_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRecord {
    pub repetitions: Vec<Repetition>,
    pub readout: Readout,
    pub tau: f64,
    pub coupling: f64,
    pub master_seed: u64,
    pub x_grid: SpatialGrid,
    /// `γT · max|p|` relative to the pointer width; small means weak.
    pub support_ratio: f64,
}

impl ProtocolRecord {
    pub fn len(&self) -> usize {
        self.repetitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repetitions.is_empty()
    }

    /// Columns `k, seed, p_w, x`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,seed,p_w,x")?;
        for (k, r) in self.repetitions.iter().enumerate() {
            writeln!(w, "{k},{},{:.16e},{:.16e}", r.seed, r.p_w, r.x)?;
        }
        Ok(())
    }
}

pub fn run_protocol(
    psi: &WavefunctionGrid,
    ancilla: &AncillaModel,
    tau: f64,
    cfg: &EvolutionConfig,
    m: usize,
    master_seed: u64,
    readout: Readout,
) -> Result<ProtocolRecord> {
    let kernel = ReadoutKernel::new(psi, ancilla, tau, cfg, readout)?;
    Ok(sample_kernel(&kernel, tau, m, master_seed, ancilla.sigma))
}

/// Draws `m` repetitions from a prepared kernel.
pub fn sample_kernel(
    kernel: &ReadoutKernel,
    tau: f64,
    m: usize,
    master_seed: u64,
    pointer_width: f64,
) -> ProtocolRecord {
    let repetitions = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(master_seed, k);
            let mut rng = rng_for(seed);
            let (i, j) = kernel.sample(&mut rng);
            Repetition {
                seed,
                p_w: kernel.values[i] / kernel.scale,
                x: kernel.x_grid.coord(0, j),
                x_index: j,
            }
        })
        .collect();
    ProtocolRecord {
        repetitions,
        readout: kernel.readout,
        tau,
        coupling: kernel.coupling,
        master_seed,
        x_grid: kernel.x_grid.clone(),
        support_ratio: kernel.support_shift / pointer_width,
    }
}

/// Histogram bins aligned to the object grid: edges at `x_min − dx/2 + k·w`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    pub left: f64,
    pub width: f64,
    pub n_bins: usize,
    dx: f64,
}

impl BinLayout {
    pub fn new(x_grid: &SpatialGrid, width: f64) -> Result<Self> {
        let axis = x_grid.axis(0);
        let dx = axis.dx();
        if !(width >= dx * (1.0 - 1e-12)) || !width.is_finite() {
            return Err(Error::DegenerateBinning(format!(
                "bin width {width} is below the grid spacing {dx}"
            )));
        }
        let n_bins = ((axis.length() / width) - 1e-9).ceil() as usize;
        Ok(Self {
            left: axis.x_min - 0.5 * dx,
            width,
            n_bins: n_bins.max(1),
            dx,
        })
    }

    pub fn bin_of_index(&self, j: usize) -> usize {
        let offset = (j as f64 + 0.5) * self.dx;
        ((offset / self.width + 1e-9).floor() as usize).min(self.n_bins - 1)
    }

    pub fn center(&self, b: usize) -> f64 {
        self.left + (b as f64 + 0.5) * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEstimate {
    pub layout: BinLayout,
    pub centers: Vec<f64>,
    pub estimates: Vec<Option<f64>>,
    pub std_errors: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub min_count: usize,
}

impl ConditionalEstimate {
    /// Columns `bin_center, estimate, stderr, count`; undefined bins are empty.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "bin_center,estimate,stderr,count")?;
        for b in 0..self.centers.len() {
            let fmt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{:.12e},{},{},{}",
                self.centers[b],
                fmt(self.estimates[b]),
                fmt(self.std_errors[b]),
                self.counts[b]
            )?;
        }
        Ok(())
    }
}

pub fn conditional_average(record: &ProtocolRecord, bin_width: f64) -> Result<ConditionalEstimate> {
    conditional_average_with(record, bin_width, DEFAULT_MIN_COUNT)
}

pub fn conditional_average_with(
    record: &ProtocolRecord,
    bin_width: f64,
    min_count: usize,
) -> Result<ConditionalEstimate> {
    if record.is_empty() {
        return Err(Error::InsufficientStatistics("protocol record is empty".into()));
    }
    let layout = BinLayout::new(&record.x_grid, bin_width)?;
    let nb = layout.n_bins;
    let mut counts = vec![0usize; nb];
    let mut sums = vec![0.0; nb];
    for r in &record.repetitions {
        let b = layout.bin_of_index(r.x_index);
        counts[b] += 1;
        sums[b] += r.p_w;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut sq = vec![0.0; nb];
    for r in &record.repetitions {
        let b = layout.bin_of_index(r.x_index);
        sq[b] += (r.p_w - means[b]).powi(2);
    }
    let defined = |b: usize| counts[b] >= min_count.max(2);
    let estimates = (0..nb).map(|b| defined(b).then_some(means[b])).collect();
    let std_errors = (0..nb)
        .map(|b| {
            defined(b).then(|| {
                let n = counts[b] as f64;
                (sq[b] / (n - 1.0)).sqrt() / n.sqrt()
            })
        })
        .collect();
    Ok(ConditionalEstimate {
        centers: (0..nb).map(|b| layout.center(b)).collect(),
        layout,
        estimates,
        std_errors,
        counts,
        min_count,
    })
}

/// Bin averages of the formal momentum weak value, weighted by `|Û(τ)ψ|²`:
/// real part for position readout, imaginary part for momentum readout.
pub fn weak_value_bins(
    psi: &WavefunctionGrid,
    tau: f64,
    cfg: &EvolutionConfig,
    readout: Readout,
    layout: &BinLayout,
) -> Result<Vec<Option<f64>>> {
    let field = formal_weak_value(psi, OperatorTag::Momentum(0), tau, cfg)?;
    let evolved = TauPropagator::new(cfg, tau)?.propagate(psi)?;
    let rho = evolved.density();
    let mut num = vec![0.0; layout.n_bins];
    let mut den = vec![0.0; layout.n_bins];
    for (j, v) in field.unmasked() {
        let b = layout.bin_of_index(j);
        let part = match readout {
            Readout::Position => v.re,
            Readout::Momentum => v.im,
        };
        num[b] += rho[j] * part;
        den[b] += rho[j];
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(n, d)| (*d > 0.0).then(|| n / d))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub coupling: f64,
    /// Largest `|E[p_w | bin] − weak value|` over bins expected to hold ≥ 100 counts.
    pub max_bias: f64,
    /// Mean fidelity of the collapsed object with the prepared one.
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasStudy {
    pub rows: Vec<BiasRow>,
    /// Least-squares slope of `ln max_bias` against `ln γT`.
    pub slope: f64,
}

/// Exact (quadrature) bias of the conditional estimator at each coupling.
/// `template` supplies the pointer width and grid; `γ` is rescaled per row.
#[allow(clippy::too_many_arguments)]
pub fn bias_study(
    psi: &WavefunctionGrid,
    template: &AncillaModel,
    couplings: &[f64],
    tau: f64,
    cfg: &EvolutionConfig,
    m: usize,
    readout: Readout,
    bin_width: f64,
) -> Result<BiasStudy> {
    if couplings.len() < 2 {
        return Err(Error::InvalidParameter("bias study needs at least two couplings".into()));
    }
    let (lo, hi) = couplings
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter("couplings must span at least one decade".into()));
    }
    let layout = BinLayout::new(psi.grid(), bin_width)?;
    let oracle = weak_value_bins(psi, tau, cfg, readout, &layout)?;
    let min_mass = 100.0 / m.max(1) as f64;
    let mut rows = Vec::with_capacity(couplings.len());
    for &g in couplings {
        let ancilla = make_ancilla(template.sigma, g / template.duration, template.duration, &template.grid_y)?;
        let kernel = ReadoutKernel::new(psi, &ancilla, tau, cfg, readout)?;
        let exact = kernel.exact_conditional(&layout);
        let max_bias = exact
            .iter()
            .zip(&oracle)
            .filter(|((_, mass), o)| *mass >= min_mass && o.is_some())
            .map(|((e, _), o)| (e - o.unwrap()).abs())
            .fold(0.0, f64::max);
        rows.push(BiasRow {
            coupling: g,
            max_bias,
            fidelity: kernel.fidelity,
        });
    }
    let slope = log_log_slope(
        &rows.iter().map(|r| r.coupling).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.max_bias).collect::<Vec<_>>(),
    );
    Ok(BiasStudy { rows, slope })
}

/// Least-squares slope of `ln y` on `ln x` (NaN if any `y ≤ 0`).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if y.iter().any(|v| !(*v > 0.0)) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Kolmogorov–Smirnov distance between sampled grid indices and a discrete law.
pub fn ks_statistic(indices: impl IntoIterator<Item = usize>, probs: &[f64]) -> f64 {
    let mut counts = vec![0usize; probs.len()];
    let mut n = 0usize;
    for i in indices {
        counts[i] += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let total: f64 = probs.iter().sum();
    let (mut emp, mut exact, mut d) = (0.0, 0.0, 0.0f64);
    for (c, p) in counts.iter().zip(probs) {
        emp += *c as f64 / n as f64;
        exact += p / total;
        d = d.max((emp - exact).abs());
    }
    d
}

/// Object grid used by the default protocol runs: 256 points on `[−12.8, 12.8)`.
pub fn default_object_grid() -> Result<SpatialGrid> {
    SpatialGrid::line(256, -12.8, 12.8)
}

/// Pointer grid: 512 points on `[−12.8, 12.8)`.
pub fn default_pointer_grid() -> Result<SpatialGrid> {
    SpatialGrid::line(512, -12.8, 12.8)
}

/// `G(−1.5, +1, 0.7) + 0.7·G(+1.5, −1, 0.7)`, normalized, on [`default_object_grid`].
pub fn default_superposition() -> Result<WavefunctionGrid> {
    let g = default_object_grid()?;
    let a = make_gaussian_packet(&g, -1.5, 1.0, 0.7)?;
    let b = make_gaussian_packet(&g, 1.5, -1.0, 0.7)?;
    let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + 0.7 * y).collect();
    a.with_amplitudes(amps)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialField;
    use approx::assert_abs_diff_eq;

    fn object_grid() -> SpatialGrid {
        SpatialGrid::line(256, -12.8, 12.8).unwrap()
    }

    fn pointer_grid() -> SpatialGrid {
        SpatialGrid::line(512, -12.8, 12.8).unwrap()
    }

    fn superposition() -> WavefunctionGrid {
        default_superposition().unwrap()
    }

    fn free(g: &SpatialGrid) -> EvolutionConfig {
        EvolutionConfig::new(PotentialField::zero(g), 0.005, 1)
    }

    #[test]
    fn ancilla_calibration() {
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        let ys = a.grid_y.axis(0).coords();
        let dy = a.grid_y.axis(0).dx();
        let mean: f64 = a.f.iter().zip(&ys).map(|(f, y)| y * f.norm_sqr()).sum::<f64>() * dy;
        assert!(mean.abs() < 1e-12);
        let norm: f64 = a.f.iter().map(|f| f.norm_sqr()).sum::<f64>() * dy;
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        // Quadrature of the closed-form product y f f′.
        let closed: f64 = ys
            .iter()
            .map(|&y| {
                let f = a.amplitude(y);
                y * f * (-y / 2.0) * f
            })
            .sum::<f64>()
            * dy;
        assert_abs_diff_eq!(closed, -0.5, epsilon = 1e-8);

        let minimal = make_ancilla(std::f64::consts::FRAC_1_SQRT_2, 0.05, 1.0, &pointer_grid()).unwrap();
        assert_abs_diff_eq!(minimal.momentum_variance, 0.5, epsilon = 1e-8);
        assert!(make_ancilla(0.01, 0.05, 1.0, &pointer_grid()).is_err());
        assert!(make_ancilla(1.0, 0.0, 1.0, &pointer_grid()).is_err());
    }

    #[test]
    fn zero_coupling_is_separable() {
        let psi = superposition();
        let mut a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        a.gamma = 0.0;
        let joint = entangle(&psi, &a).unwrap();
        assert_abs_diff_eq!(joint.norm_sqr(), 1.0, epsilon = 1e-9);
        let phi = to_momentum(psi.grid(), psi.amplitudes()).unwrap();
        let ny = joint.y.len();
        for (r, a_p) in phi.amplitudes.iter().enumerate() {
            for c in 0..ny {
                let expected = a_p * a.f[c];
                assert!((joint.values[r * ny + c] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn pointer_ridges_follow_momenta() {
        // Two momentum components at ±k; the pointer density peaks at ±γT·ħk.
        let g = object_grid();
        let k = 2.0 * std::f64::consts::PI * 20.0 / g.axis(0).length();
        let psi = WavefunctionGrid::from_fn(g.clone(), |x| {
            Complex64::from_polar(1.0, k * x[0]) + Complex64::from_polar(1.0, -k * x[0])
        })
        .unwrap()
        .normalized()
        .unwrap();
        let a = make_ancilla(0.3, 0.5, 1.0, &pointer_grid()).unwrap();
        let joint = entangle(&psi, &a).unwrap();
        assert_abs_diff_eq!(joint.norm_sqr(), 1.0, epsilon = 1e-9);
        let dens = joint.pointer_density();
        let half = dens.len() / 2;
        let argmax = |s: &[f64]| {
            s.iter()
                .enumerate()
                .fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        };
        let left = joint.y[argmax(&dens[..half])];
        let right = joint.y[half + argmax(&dens[half..])];
        let dy = joint.dy;
        assert!((left + 0.5 * k).abs() <= dy && (right - 0.5 * k).abs() <= dy);
    }

    #[test]
    fn support_overflow_is_detected() {
        let psi = superposition();
        let a = make_ancilla(1.0, 2.0, 1.0, &pointer_grid()).unwrap();
        assert!(matches!(entangle(&psi, &a), Err(Error::SupportOverflow(_))));
    }

    #[test]
    fn empty_record_and_binning_errors() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        let rec = run_protocol(&psi, &a, 0.2, &cfg, 0, 1, Readout::Position).unwrap();
        assert!(rec.is_empty());
        assert!(conditional_average(&rec, 0.2).is_err());
        let rec = run_protocol(&psi, &a, 0.2, &cfg, 10, 1, Readout::Position).unwrap();
        assert!(matches!(conditional_average(&rec, 0.05), Err(Error::DegenerateBinning(_))));
    }

    #[test]
    fn constant_readouts_give_constant_bins() {
        let g = object_grid();
        let mut reps = Vec::new();
        for k in 0..500 {
            reps.push(Repetition {
                seed: k,
                p_w: 1.25,
                x: g.coord(0, 100 + (k as usize % 7)),
                x_index: 100 + (k as usize % 7),
            });
        }
        let rec = ProtocolRecord {
            repetitions: reps,
            readout: Readout::Position,
            tau: 0.0,
            coupling: 0.1,
            master_seed: 0,
            x_grid: g,
            support_ratio: 0.0,
        };
        let est = conditional_average(&rec, 0.2).unwrap();
        let defined: Vec<usize> = (0..est.counts.len()).filter(|&b| est.estimates[b].is_some()).collect();
        assert!(!defined.is_empty());
        for b in defined {
            assert_eq!(est.estimates[b], Some(1.25));
            assert_eq!(est.std_errors[b], Some(0.0));
        }
    }

    #[test]
    fn records_are_reproducible() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        let r1 = run_protocol(&psi, &a, 0.3, &cfg, 2000, 42, Readout::Position).unwrap();
        let r2 = run_protocol(&psi, &a, 0.3, &cfg, 2000, 42, Readout::Position).unwrap();
        assert_eq!(r1, r2);
        let r3 = run_protocol(&psi, &a, 0.3, &cfg, 2000, 43, Readout::Position).unwrap();
        assert_ne!(r1, r3);
    }

    #[test]
    fn eigenstate_readout_is_unbiased() {
        let g = object_grid();
        let k = 2.0 * std::f64::consts::PI * 10.0 / g.axis(0).length();
        let psi = WavefunctionGrid::from_fn(g.clone(), |x| Complex64::from_polar(1.0, k * x[0]))
            .unwrap()
            .normalized()
            .unwrap();
        let cfg = free(&g).without_leak_monitor();
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        let rec = run_protocol(&psi, &a, 0.4, &cfg, 10_000, 5, Readout::Position).unwrap();
        let est = conditional_average(&rec, 12.8 / 2.0).unwrap();
        for b in 0..est.counts.len() {
            if let (Some(e), Some(se)) = (est.estimates[b], est.std_errors[b]) {
                assert!((e - k).abs() < 4.0 * se, "bin {b}: {e} vs {k} ± {se}");
            }
        }
        let kernel = ReadoutKernel::new(&psi, &a, 0.4, &cfg, Readout::Position).unwrap();
        let layout = BinLayout::new(&g, 0.2).unwrap();
        for (e, _) in kernel.exact_conditional(&layout) {
            assert!((e - k).abs() < 1e-10);
        }
    }

    #[test]
    fn weak_coupling_marginal_matches_born_density() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.01, 1.0, &pointer_grid()).unwrap();
        let tau = 0.5;
        let rec = run_protocol(&psi, &a, tau, &cfg, 20_000, 9, Readout::Position).unwrap();
        let exact = TauPropagator::new(&cfg, tau).unwrap().propagate(&psi).unwrap().density();
        let d = ks_statistic(rec.repetitions.iter().map(|r| r.x_index), &exact);
        // 1% critical value of the one-sample KS distance.
        assert!(d < 1.63 / (20_000f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn pointer_readout_marginal_converges() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.2, 1.0, &pointer_grid()).unwrap();
        let kernel = ReadoutKernel::new(&psi, &a, 0.0, &cfg, Readout::Position).unwrap();
        let joint = entangle(&psi, &a).unwrap();
        let marginal = joint.pointer_density();
        let draws = |m: u64| {
            (0..m).map(|k| kernel.sample(&mut rng_for(derive_seed(3, k))).0).collect::<Vec<_>>()
        };
        let d_small = ks_statistic(draws(1_000), &marginal);
        let d_large = ks_statistic(draws(50_000), &marginal);
        assert!(d_large < d_small);
        assert!(d_large < 1.63 / (50_000f64).sqrt());
    }

    #[test]
    fn bias_is_quadratic_in_coupling_for_an_even_pointer() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        let couplings = [0.05, 0.1, 0.2, 0.5];
        let study =
            bias_study(&psi, &a, &couplings, 0.5, &cfg, 100_000, Readout::Position, 0.2).unwrap();
        assert!((study.slope - 2.0).abs() < 0.2, "slope {}", study.slope);
        let first = study.rows.first().unwrap().fidelity;
        let last = study.rows.last().unwrap().fidelity;
        assert!(first > 0.99 && last < first - 0.01, "{first} {last}");
    }

    #[test]
    fn momentum_readout_needs_minimal_pointer() {
        let psi = superposition();
        let cfg = free(psi.grid());
        let a = make_ancilla(1.0, 0.05, 1.0, &pointer_grid()).unwrap();
        assert!(matches!(
            ReadoutKernel::new(&psi, &a, 0.3, &cfg, Readout::Momentum),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn ks_distance_of_exact_counts_is_small() {
        let probs = [0.25, 0.5, 0.25];
        let idx = [0, 1, 1, 2];
        assert!(ks_statistic(idx, &probs) < 1e-12);
        assert_abs_diff_eq!(log_log_slope(&[1.0, 10.0], &[2.0, 200.0]), 2.0, epsilon = 1e-12);
    }
}
