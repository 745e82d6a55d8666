//! Potentials for the disordered-trap study and two-particle initial states.
//!
//! Every [`PotentialField`] carries a [`PotentialDescriptor`] from which it can
//! be rebuilt bit-for-bit with [`regenerate`].

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, WavefunctionGrid};
use crate::seeding::rng_for;
use crate::units::ELECTRON_MASS;

/// Seeded Gaussian-speckle disorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    pub seed: u64,
    pub speckle_count: usize,
    /// Speckle heights are drawn uniformly from `[−amplitude, amplitude]`.
    pub amplitude: f64,
    /// Gaussian width of each speckle.
    pub correlation_length: f64,
    /// Place speckles in mirror pairs about the domain centre, so the
    /// pattern is parity symmetric.
    #[serde(default)]
    pub mirror: bool,
}

/// How a potential was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialDescriptor {
    Zero,
    Harmonic { omega: f64, center: f64 },
    Speckle(DisorderSpec),
    SoftCoulomb { lambda: f64, alpha: f64 },
    Sum { parts: Vec<PotentialDescriptor> },
}

/// Real potential energy sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    grid: SpatialGrid,
    values: Vec<f64>,
    descriptor: PotentialDescriptor,
}

impl PotentialField {
    pub fn zero(grid: &SpatialGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            descriptor: PotentialDescriptor::Zero,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn descriptor(&self) -> &PotentialDescriptor {
        &self.descriptor
    }

    /// Pointwise sum of `parts`, added left to right.
    pub fn sum(grid: &SpatialGrid, parts: &[&PotentialField]) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        for p in parts {
            grid.ensure_same(&p.grid)?;
            values.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b);
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            descriptor: PotentialDescriptor::Sum {
                parts: parts.iter().map(|p| p.descriptor.clone()).collect(),
            },
        })
    }
}

/// Rebuilds a field from its descriptor.
pub fn regenerate(descriptor: &PotentialDescriptor, grid: &SpatialGrid) -> Result<PotentialField> {
    match descriptor {
        PotentialDescriptor::Zero => Ok(PotentialField::zero(grid)),
        PotentialDescriptor::Harmonic { omega, center } => harmonic(grid, *omega, *center),
        PotentialDescriptor::Speckle(spec) => speckle_disorder(grid, spec),
        PotentialDescriptor::SoftCoulomb { lambda, alpha } => soft_coulomb(grid, *lambda, *alpha),
        PotentialDescriptor::Sum { parts } => {
            let fields = parts
                .iter()
                .map(|d| regenerate(d, grid))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&PotentialField> = fields.iter().collect();
            PotentialField::sum(grid, &refs)
        }
    }
}

/// `V = ½ m ω² Σ_axes (x − center)²`.
pub fn harmonic(grid: &SpatialGrid, omega: f64, center: f64) -> Result<PotentialField> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "trap frequency must be positive, got {omega}"
        )));
    }
    let k = 0.5 * ELECTRON_MASS * omega * omega;
    let values = (0..grid.len())
        .map(|idx| {
            (0..grid.ndim())
                .map(|d| {
                    let u = grid.coord(d, idx) - center;
                    k * u * u
                })
                .sum()
        })
        .collect();
    Ok(PotentialField {
        grid: grid.clone(),
        values,
        descriptor: PotentialDescriptor::Harmonic { omega, center },
    })
}

/// One-body speckle pattern; on a two-axis grid it is applied to both particles,
/// `d(x1) + d(x2)`.
pub fn speckle_disorder(grid: &SpatialGrid, spec: &DisorderSpec) -> Result<PotentialField> {
    let axis = grid.axis(0);
    if grid.axes().iter().any(|a| a != axis) {
        return Err(Error::GridMismatch(
            "speckle disorder needs identical axes".into(),
        ));
    }
    if !(spec.amplitude >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "disorder amplitude must be non-negative, got {}",
            spec.amplitude
        )));
    }
    if !(spec.correlation_length >= 2.0 * axis.dx()) {
        return Err(Error::Resolution(format!(
            "correlation length {} is below 2·dx = {}",
            spec.correlation_length,
            2.0 * axis.dx()
        )));
    }
    let width = spec.correlation_length;
    let lo = axis.x_min + 3.0 * width;
    let hi = axis.x_max - 3.0 * width;
    if !(hi > lo) {
        return Err(Error::DomainViolation(
            "correlation length too large for the domain".into(),
        ));
    }
    let mid = 0.5 * (axis.x_min + axis.x_max);

    let mut rng = rng_for(spec.seed);
    let mut bumps: Vec<(f64, f64)> = Vec::with_capacity(spec.speckle_count);
    if spec.mirror {
        for _ in 0..spec.speckle_count / 2 {
            let c = rng.gen_range(lo..hi);
            let a = rng.gen_range(-1.0..=1.0) * spec.amplitude;
            bumps.push((c, a));
            bumps.push((2.0 * mid - c, a));
        }
        if spec.speckle_count % 2 == 1 {
            bumps.push((mid, rng.gen_range(-1.0..=1.0) * spec.amplitude));
        }
    } else {
        for _ in 0..spec.speckle_count {
            let c = rng.gen_range(lo..hi);
            let a = rng.gen_range(-1.0..=1.0) * spec.amplitude;
            bumps.push((c, a));
        }
    }

    let profile: Vec<f64> = axis
        .coords()
        .into_iter()
        .map(|x| {
            bumps
                .iter()
                .map(|&(c, a)| {
                    let u = (x - c) / width;
                    a * (-0.5 * u * u).exp()
                })
                .sum()
        })
        .collect();

    let n = axis.n_points;
    let values = match grid.ndim() {
        1 => profile,
        _ => (0..grid.len())
            .map(|idx| profile[idx / n] + profile[idx % n])
            .collect(),
    };
    Ok(PotentialField {
        grid: grid.clone(),
        values,
        descriptor: PotentialDescriptor::Speckle(spec.clone()),
    })
}

/// Soft-core Coulomb repulsion `λ / √((x1 − x2)² + α²)` on a two-axis grid.
pub fn soft_coulomb(grid: &SpatialGrid, lambda: f64, alpha: f64) -> Result<PotentialField> {
    if grid.ndim() != 2 {
        return Err(Error::InvalidParameter(
            "soft Coulomb interaction needs a two-axis grid".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "softening must be positive, got {alpha}"
        )));
    }
    let values = (0..grid.len())
        .map(|idx| {
            let r = grid.coord(0, idx) - grid.coord(1, idx);
            lambda / (r * r + alpha * alpha).sqrt()
        })
        .collect();
    Ok(PotentialField {
        grid: grid.clone(),
        values,
        descriptor: PotentialDescriptor::SoftCoulomb { lambda, alpha },
    })
}

/// Exchange sign of a two-particle spatial wavefunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum ExchangeSign {
    Symmetric,
    Antisymmetric,
}

impl ExchangeSign {
    pub fn value(self) -> f64 {
        match self {
            ExchangeSign::Symmetric => 1.0,
            ExchangeSign::Antisymmetric => -1.0,
        }
    }
}

impl TryFrom<i8> for ExchangeSign {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(ExchangeSign::Symmetric),
            -1 => Ok(ExchangeSign::Antisymmetric),
            other => Err(format!("exchange sign must be +1 or -1, got {other}")),
        }
    }
}

impl From<ExchangeSign> for i8 {
    fn from(s: ExchangeSign) -> i8 {
        match s {
            ExchangeSign::Symmetric => 1,
            ExchangeSign::Antisymmetric => -1,
        }
    }
}

/// `Ψ(x1, x2) ∝ ψa(x1) ψb(x2) ± ψb(x1) ψa(x2)`, normalised, on the square grid
/// built from the 1-D grid of the inputs.
pub fn symmetrized_product(
    psi_a: &WavefunctionGrid,
    psi_b: &WavefunctionGrid,
    sign: ExchangeSign,
) -> Result<WavefunctionGrid> {
    psi_a.grid().ensure_same(psi_b.grid())?;
    if psi_a.grid().ndim() != 1 {
        return Err(Error::InvalidParameter(
            "symmetrized product takes 1-D states".into(),
        ));
    }
    let axis = psi_a.grid().axis(0).clone();
    let grid = SpatialGrid::new(vec![axis.clone(), axis])?;
    let n = psi_a.grid().len();
    let (a, b) = (psi_a.amplitudes(), psi_b.amplitudes());
    let s = sign.value();
    let amps: Vec<Complex64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            a[i] * b[j] + s * (b[i] * a[j])
        })
        .collect();
    let psi = WavefunctionGrid::new(grid, amps, psi_a.time)?;
    let scale = psi_a.norm_sqr() * psi_b.norm_sqr();
    if !(psi.norm_sqr() > 1e-20 * scale) {
        return Err(Error::Degenerate(
            "antisymmetrized product of identical orbitals vanishes".into(),
        ));
    }
    psi.normalized()
}

/// `max |Ψ(x1, x2) − sign·Ψ(x2, x1)|` over the square grid.
pub fn exchange_residue(psi: &WavefunctionGrid, sign: ExchangeSign) -> f64 {
    let n = psi.grid().axis(0).n_points;
    let amps = psi.amplitudes();
    let s = sign.value();
    (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            (amps[idx] - s * amps[j * n + i]).norm()
        })
        .fold(0.0, f64::max)
}
