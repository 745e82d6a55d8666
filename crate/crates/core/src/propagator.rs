//! Unitary evolution by Strang splitting,
//! `e^{−iV dt/2ħ} · e^{−iT dt/ħ} · e^{−iV dt/2ħ}`, with the kinetic factor
//! applied exactly in Fourier space.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Spectral, WavefunctionGrid};
use crate::model::PotentialField;
use crate::units::{ELECTRON_MASS, HBAR};

/// Default boundary-density abort threshold, relative to the peak density.
pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub potential: PotentialField,
    /// One mass per grid axis.
    pub masses: Vec<f64>,
    pub observer_stride: usize,
    /// `None` disables the boundary monitor (for states that are periodic by
    /// construction, such as plane waves).
    pub leak_threshold: Option<f64>,
}

impl EvolutionConfig {
    /// Electron masses on every axis, observation every step, monitor armed.
    pub fn new(potential: PotentialField, dt: f64, n_steps: usize) -> Self {
        let ndim = potential.grid().ndim();
        Self {
            dt,
            n_steps,
            potential,
            masses: vec![ELECTRON_MASS; ndim],
            observer_stride: 1,
            leak_threshold: Some(DEFAULT_LEAK_THRESHOLD),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.observer_stride = stride;
        self
    }

    pub fn without_leak_monitor(mut self) -> Self {
        self.leak_threshold = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.observer_stride == 0 {
            return Err(Error::InvalidParameter("observer stride must be >= 1".into()));
        }
        if self.masses.len() != self.potential.grid().ndim() || self.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidParameter("one positive mass per axis is required".into()));
        }
        Ok(())
    }
}

/// Precomputed phase factors for one step length.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    spectral: Spectral,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    boundary: Vec<usize>,
    dt: f64,
}

impl SplitOperator {
    pub fn new(cfg: &EvolutionConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.potential.grid();
        let spectral = Spectral::new(grid);
        let half_potential = cfg
            .potential
            .values()
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * HBAR)))
            .collect();
        let shape = grid.shape();
        let kinetic = (0..grid.len())
            .map(|idx| {
                let mut rem = idx;
                let mut energy = 0.0;
                for d in (0..shape.len()).rev() {
                    let i = rem % shape[d];
                    rem /= shape[d];
                    let k = spectral.wavenumbers(d)[i];
                    energy += HBAR * HBAR * k * k / (2.0 * cfg.masses[d]);
                }
                Complex64::from_polar(1.0, -energy * dt / HBAR)
            })
            .collect();
        Ok(Self {
            spectral,
            half_potential,
            kinetic,
            boundary: grid.boundary_indices(),
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One Strang step in place.
    pub fn apply(&self, amps: &mut [Complex64]) {
        amps.iter_mut()
            .zip(&self.half_potential)
            .for_each(|(z, v)| *z *= v);
        self.spectral.forward_all(amps);
        amps.iter_mut().zip(&self.kinetic).for_each(|(z, k)| *z *= k);
        self.spectral.inverse_all(amps);
        amps.iter_mut()
            .zip(&self.half_potential)
            .for_each(|(z, v)| *z *= v);
    }

    /// Largest edge density relative to the peak.
    pub fn boundary_ratio(&self, amps: &[Complex64]) -> f64 {
        let peak = amps.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let edge = self
            .boundary
            .iter()
            .map(|&i| amps[i].norm_sqr())
            .fold(0.0, f64::max);
        edge / peak
    }
}

fn check_leak(op: &SplitOperator, amps: &[Complex64], threshold: Option<f64>, time: f64) -> Result<()> {
    if let Some(threshold) = threshold {
        let ratio = op.boundary_ratio(amps);
        if ratio > threshold {
            return Err(Error::BoundaryLeak {
                time,
                ratio,
                threshold,
            });
        }
    }
    Ok(())
}

/// One Strang step of length `cfg.dt`. The boundary monitor is not consulted.
pub fn step(psi: &WavefunctionGrid, cfg: &EvolutionConfig) -> Result<WavefunctionGrid> {
    psi.grid().ensure_same(cfg.potential.grid())?;
    let op = SplitOperator::new(cfg, cfg.dt)?;
    let mut amps = psi.amplitudes().to_vec();
    op.apply(&mut amps);
    WavefunctionGrid::new(psi.grid().clone(), amps, psi.time + cfg.dt)
}

/// A named diagnostic sampled during [`evolve`].
pub trait Observer {
    fn names(&self) -> Vec<String>;
    fn observe(&mut self, psi: &WavefunctionGrid) -> Result<Vec<f64>>;
}

/// Wraps a closure as a single-column [`Observer`].
pub struct FnObserver<F> {
    name: String,
    f: F,
}

pub fn observer<F>(name: &str, f: F) -> FnObserver<F>
where
    F: FnMut(&WavefunctionGrid) -> Result<f64>,
{
    FnObserver {
        name: name.to_string(),
        f,
    }
}

impl<F> Observer for FnObserver<F>
where
    F: FnMut(&WavefunctionGrid) -> Result<f64>,
{
    fn names(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn observe(&mut self, psi: &WavefunctionGrid) -> Result<Vec<f64>> {
        Ok(vec![(self.f)(psi)?])
    }
}

/// Diagnostic time series, one row per observed step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticSeries {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticSeries {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "t")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            write!(w, "{t:.10e}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Applies `cfg.n_steps` steps, sampling every observer at step 0 and every
/// `cfg.observer_stride` steps thereafter.
pub fn evolve(
    psi: &WavefunctionGrid,
    cfg: &EvolutionConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<(WavefunctionGrid, DiagnosticSeries)> {
    psi.grid().ensure_same(cfg.potential.grid())?;
    let op = SplitOperator::new(cfg, cfg.dt)?;
    let mut series = DiagnosticSeries {
        columns: observers.iter().flat_map(|o| o.names()).collect(),
        ..Default::default()
    };
    let state = psi.clone();
    check_leak(&op, state.amplitudes(), cfg.leak_threshold, state.time)?;

    let mut record = |state: &WavefunctionGrid, series: &mut DiagnosticSeries| -> Result<()> {
        let mut row = Vec::with_capacity(series.columns.len());
        for o in observers.iter_mut() {
            row.extend(o.observe(state)?);
        }
        series.times.push(state.time);
        series.rows.push(row);
        Ok(())
    };
    record(&state, &mut series)?;

    let t0 = psi.time;
    let mut amps = state.into_amplitudes();
    for n in 1..=cfg.n_steps {
        op.apply(&mut amps);
        let time = t0 + n as f64 * cfg.dt;
        check_leak(&op, &amps, cfg.leak_threshold, time)?;
        if n % cfg.observer_stride == 0 {
            let snapshot = WavefunctionGrid::new(psi.grid().clone(), amps, time)?;
            record(&snapshot, &mut series)?;
            amps = snapshot.into_amplitudes();
        }
    }
    let final_state = WavefunctionGrid::new(psi.grid().clone(), amps, t0 + cfg.n_steps as f64 * cfg.dt)?;
    Ok((final_state, series))
}

/// `Û(τ)ψ` using `⌈τ/dt⌉` steps, the last one shortened to land exactly on `τ`.
pub fn propagate_tau(
    psi: &WavefunctionGrid,
    tau: f64,
    cfg: &EvolutionConfig,
) -> Result<WavefunctionGrid> {
    TauPropagator::new(cfg, tau)?.propagate(psi)
}

/// Reusable `Û(τ)` for many states on the same grid.
#[derive(Debug, Clone)]
pub struct TauPropagator {
    full: Option<SplitOperator>,
    last: Option<SplitOperator>,
    full_steps: usize,
    tau: f64,
    leak_threshold: Option<f64>,
    grid: crate::grid::SpatialGrid,
}

impl TauPropagator {
    pub fn new(cfg: &EvolutionConfig, tau: f64) -> Result<Self> {
        cfg.validate()?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
        }
        let grid = cfg.potential.grid().clone();
        if tau == 0.0 {
            return Ok(Self {
                full: None,
                last: None,
                full_steps: 0,
                tau,
                leak_threshold: cfg.leak_threshold,
                grid,
            });
        }
        let n = ((tau / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
        let last_dt = tau - (n - 1) as f64 * cfg.dt;
        let full = if n > 1 { Some(SplitOperator::new(cfg, cfg.dt)?) } else { None };
        Ok(Self {
            full,
            last: Some(SplitOperator::new(cfg, last_dt)?),
            full_steps: n - 1,
            tau,
            leak_threshold: cfg.leak_threshold,
            grid,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn propagate_amplitudes(&self, amps: &mut [Complex64], t0: f64) -> Result<()> {
        let mut time = t0;
        if let Some(op) = &self.full {
            for _ in 0..self.full_steps {
                op.apply(amps);
                time += op.dt();
                check_leak(op, amps, self.leak_threshold, time)?;
            }
        }
        if let Some(op) = &self.last {
            op.apply(amps);
            check_leak(op, amps, self.leak_threshold, t0 + self.tau)?;
        }
        Ok(())
    }

    pub fn propagate(&self, psi: &WavefunctionGrid) -> Result<WavefunctionGrid> {
        psi.grid().ensure_same(&self.grid)?;
        if self.tau == 0.0 {
            return Ok(psi.clone());
        }
        let mut amps = psi.amplitudes().to_vec();
        self.propagate_amplitudes(&mut amps, psi.time)?;
        WavefunctionGrid::new(psi.grid().clone(), amps, psi.time + self.tau)
    }
}
