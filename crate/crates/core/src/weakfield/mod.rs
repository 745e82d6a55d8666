//! Formal weak values and local expectation fields.
//!
//! Every field is an amplitude ratio `⟨b|Û(τ)Ĝ|ψ⟩ / ⟨b|Û(τ)|ψ⟩`. Points where
//! the post-selection density falls below [`DENSITY_FLOOR`] of its maximum are
//! masked and carry the value zero.

mod tomography;

pub use tomography::{reconstruct_wavefunction, Reconstruction};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_observable, to_momentum, Axis, Observable, Spectral, SpatialGrid, WavefunctionGrid,
};
use crate::propagator::{EvolutionConfig, TauPropagator};
use crate::units::HBAR;

/// Relative density below which a post-selection point is masked.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Largest masked density fraction tolerated by [`density_average`].
pub const MASK_WEIGHT_LIMIT: f64 = 1e-6;

/// Tolerance used when cross-checking the two quantum-potential formulas.
pub const Q_AGREEMENT: f64 = 1e-6;

/// Relative density above which the curvature form of the quantum potential is
/// cross-checked. Below it `R″/R` is dominated by round-off in `R`.
pub const Q_CHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "axis")]
pub enum OperatorTag {
    Momentum(usize),
    Kinetic(usize),
    Position(usize),
    Potential,
    Hamiltonian,
}

impl OperatorTag {
    pub fn label(&self) -> String {
        match self {
            Self::Momentum(j) => format!("momentum_{j}"),
            Self::Kinetic(j) => format!("kinetic_{j}"),
            Self::Position(j) => format!("position_{j}"),
            Self::Potential => "potential".into(),
            Self::Hamiltonian => "hamiltonian".into(),
        }
    }

    /// Parses labels of the form produced by [`OperatorTag::label`].
    pub fn parse(s: &str) -> Result<Self> {
        let axis = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::UnsupportedOperator(s.to_string()))
        };
        match s {
            "potential" => Ok(Self::Potential),
            "hamiltonian" => Ok(Self::Hamiltonian),
            "momentum" => Ok(Self::Momentum(0)),
            "kinetic" => Ok(Self::Kinetic(0)),
            "position" => Ok(Self::Position(0)),
            _ => {
                if let Some(r) = s.strip_prefix("momentum_") {
                    Ok(Self::Momentum(axis(r)?))
                } else if let Some(r) = s.strip_prefix("kinetic_") {
                    Ok(Self::Kinetic(axis(r)?))
                } else if let Some(r) = s.strip_prefix("position_") {
                    Ok(Self::Position(axis(r)?))
                } else {
                    Err(Error::UnsupportedOperator(s.to_string()))
                }
            }
        }
    }

    pub fn observable<'a>(&self, cfg: &'a EvolutionConfig) -> Result<Observable<'a>> {
        let ndim = cfg.potential.grid().ndim();
        let check = |j: usize| {
            if j < ndim {
                Ok(j)
            } else {
                Err(Error::UnsupportedOperator(format!(
                    "{} on a {ndim}-axis grid",
                    self.label()
                )))
            }
        };
        Ok(match *self {
            Self::Momentum(j) => Observable::Momentum(check(j)?),
            Self::Kinetic(j) => Observable::Kinetic {
                axis: check(j)?,
                mass: cfg.masses[j],
            },
            Self::Position(j) => Observable::Position(check(j)?),
            Self::Potential => Observable::Potential(cfg.potential.values()),
            Self::Hamiltonian => Observable::Hamiltonian {
                potential: cfg.potential.values(),
                masses: &cfg.masses,
            },
        })
    }
}

/// Post-selection basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Position,
    Momentum,
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Self::Position),
            "momentum" => Ok(Self::Momentum),
            other => Err(Error::UnsupportedBasis(other.to_string())),
        }
    }
}

/// A weak-value field over the post-selection coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueField {
    /// Post-selection coordinates; ascending momenta for [`Basis::Momentum`].
    pub grid: SpatialGrid,
    pub values: Vec<Complex64>,
    pub tau: f64,
    pub operator: OperatorTag,
    pub basis: Basis,
    /// `true` where the value is defined.
    pub mask: Vec<bool>,
}

impl WeakValueField {
    pub fn unmasked(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, m))| **m)
            .map(|(i, (v, _))| (i, *v))
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn imag(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    /// Columns `x…, re, im, mask`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let ndim = self.grid.ndim();
        let names = ["x1", "x2"];
        if ndim == 1 {
            write!(w, "x")?;
        } else {
            write!(w, "{}", names[..ndim].join(","))?;
        }
        writeln!(w, ",re,im,mask")?;
        for (i, z) in self.values.iter().enumerate() {
            for d in 0..ndim {
                write!(w, "{:.12e},", self.grid.coord(d, i))?;
            }
            writeln!(w, "{:.16e},{:.16e},{}", z.re, z.im, u8::from(self.mask[i]))?;
        }
        Ok(())
    }
}

/// `true` where `density ≥ DENSITY_FLOOR · max(density)`.
pub fn validity_mask(density: &[f64]) -> Vec<bool> {
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let floor = DENSITY_FLOOR * peak;
    density.iter().map(|&r| peak > 0.0 && r >= floor).collect()
}

fn ratio_field(
    grid: SpatialGrid,
    numerator: &[Complex64],
    denominator: &[Complex64],
    tau: f64,
    operator: OperatorTag,
    basis: Basis,
) -> Result<WeakValueField> {
    let density: Vec<f64> = denominator.iter().map(|z| z.norm_sqr()).collect();
    let mask = validity_mask(&density);
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    let values = numerator
        .iter()
        .zip(denominator)
        .zip(&mask)
        .map(|((n, d), &m)| if m { n / d } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(WeakValueField {
        grid,
        values,
        tau,
        operator,
        basis,
        mask,
    })
}

fn numerator_and_denominator(
    psi: &WavefunctionGrid,
    op: OperatorTag,
    tau: f64,
    cfg: &EvolutionConfig,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    psi.grid().ensure_same(cfg.potential.grid())?;
    let g_psi = apply_observable(psi, op.observable(cfg)?)?;
    let mut num = g_psi;
    let mut den = psi.amplitudes().to_vec();
    if tau != 0.0 {
        let u = TauPropagator::new(cfg, tau)?;
        u.propagate_amplitudes(&mut num, psi.time)?;
        u.propagate_amplitudes(&mut den, psi.time)?;
    }
    Ok((num, den))
}

/// `G_f(x, t, τ) = ⟨x|Û(τ)Ĝ|ψ⟩ / ⟨x|Û(τ)|ψ⟩`.
pub fn formal_weak_value(
    psi: &WavefunctionGrid,
    op: OperatorTag,
    tau: f64,
    cfg: &EvolutionConfig,
) -> Result<WeakValueField> {
    let (num, den) = numerator_and_denominator(psi, op, tau, cfg)?;
    ratio_field(psi.grid().clone(), &num, &den, tau, op, Basis::Position)
}

/// Like [`formal_weak_value`] but post-selected in the position or momentum basis.
pub fn generalized_weak_value(
    psi: &WavefunctionGrid,
    op: OperatorTag,
    basis: Basis,
    tau: f64,
    cfg: &EvolutionConfig,
) -> Result<WeakValueField> {
    match basis {
        Basis::Position => formal_weak_value(psi, op, tau, cfg),
        Basis::Momentum => {
            let (num, den) = numerator_and_denominator(psi, op, tau, cfg)?;
            let grid = psi.grid();
            let num_p = to_momentum(grid, &num)?;
            let den_p = to_momentum(grid, &den)?;
            let n = grid.axis(0).n_points;
            let p_min = den_p.momenta[0];
            let p_grid = SpatialGrid::new(vec![Axis::new(n, p_min, p_min + n as f64 * den_p.dp)?])?;
            ratio_field(p_grid, &num_p.amplitudes, &den_p.amplitudes, tau, op, Basis::Momentum)
        }
    }
}

/// `−iħ ∂_j ψ / ψ`: real part `p_B`, imaginary part `p_O`.
pub fn local_momentum(psi: &WavefunctionGrid, axis: usize) -> Result<WeakValueField> {
    psi.grid().check_axis(axis)?;
    let d1 = Spectral::new(psi.grid()).derivative(psi.amplitudes(), axis, 1);
    let num: Vec<Complex64> = d1.iter().map(|z| Complex64::new(0.0, -HBAR) * z).collect();
    ratio_field(
        psi.grid().clone(),
        &num,
        psi.amplitudes(),
        0.0,
        OperatorTag::Momentum(axis),
        Basis::Position,
    )
}

/// `(−ħ²/2m) ∂_j² ψ / ψ`.
pub fn kinetic_weak_value(psi: &WavefunctionGrid, axis: usize, mass: f64) -> Result<WeakValueField> {
    psi.grid().check_axis(axis)?;
    let d2 = Spectral::new(psi.grid()).derivative(psi.amplitudes(), axis, 2);
    let c = -HBAR * HBAR / (2.0 * mass);
    let num: Vec<Complex64> = d2.iter().map(|z| z * c).collect();
    ratio_field(
        psi.grid().clone(),
        &num,
        psi.amplitudes(),
        0.0,
        OperatorTag::Kinetic(axis),
        Basis::Position,
    )
}

/// Local fields along one axis. Masked points hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmianFields {
    pub axis: usize,
    pub mass: f64,
    pub p_b: Vec<f64>,
    pub p_o: Vec<f64>,
    /// Quantum potential `(ħ ∂p_O − p_O²)/2m`, evaluated as amplitude ratios.
    pub q: Vec<f64>,
    /// Quantum potential `−ħ² R″/(2mR)` from the spectral curvature of `R = |ψ|`.
    pub q_curvature: Vec<f64>,
    pub k_b: Vec<f64>,
    pub k_o: Vec<f64>,
    pub mask: Vec<bool>,
    /// Largest `|q − q_curvature| / max(1, |q|)` where `ρ ≥ Q_CHECK_FLOOR · max ρ`.
    pub q_disagreement: f64,
}

pub fn bohmian_fields(psi: &WavefunctionGrid, axis: usize, mass: f64) -> Result<BohmianFields> {
    psi.grid().check_axis(axis)?;
    let spectral = Spectral::new(psi.grid());
    let amps = psi.amplitudes();
    let d1 = spectral.derivative(amps, axis, 1);
    let d2 = spectral.derivative(amps, axis, 2);
    let r: Vec<Complex64> = amps.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect();
    let r2 = spectral.derivative(&r, axis, 2);
    let density = psi.density();
    let mask = validity_mask(&density);
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    let check_floor = Q_CHECK_FLOOR * density.iter().cloned().fold(0.0, f64::max);

    let n = amps.len();
    let mut out = BohmianFields {
        axis,
        mass,
        p_b: vec![0.0; n],
        p_o: vec![0.0; n],
        q: vec![0.0; n],
        q_curvature: vec![0.0; n],
        k_b: vec![0.0; n],
        k_o: vec![0.0; n],
        mask: mask.clone(),
        q_disagreement: 0.0,
    };
    let two_m = 2.0 * mass;
    for i in (0..n).filter(|&i| mask[i]) {
        let w = d1[i] / amps[i];
        let p = Complex64::new(0.0, -HBAR) * w;
        let dp = Complex64::new(0.0, -HBAR) * (d2[i] / amps[i] - w * w);
        out.p_b[i] = p.re;
        out.p_o[i] = p.im;
        out.k_b[i] = p.re * p.re / two_m;
        out.k_o[i] = p.im * p.im / two_m;
        out.q[i] = (HBAR * dp.im - p.im * p.im) / two_m;
        out.q_curvature[i] = -HBAR * HBAR * r2[i].re / (two_m * r[i].re);
        if density[i] >= check_floor {
            let rel = (out.q[i] - out.q_curvature[i]).abs() / out.q[i].abs().max(1.0);
            out.q_disagreement = out.q_disagreement.max(rel);
        }
    }
    if out.q_disagreement > Q_AGREEMENT {
        log::warn!(
            "quantum potential formulas disagree by {:.3e} (relative) on axis {axis}",
            out.q_disagreement
        );
    }
    Ok(out)
}

/// `∫ ρ G dx` with `ρ = |ψ|²` in the field's basis.
///
/// For `τ > 0` pass the post-selection state `Û(τ)ψ` as `psi`.
pub fn density_average(field: &WeakValueField, psi: &WavefunctionGrid) -> Result<Complex64> {
    let (density, weight) = match field.basis {
        Basis::Position => {
            psi.grid().ensure_same(&field.grid)?;
            (psi.density(), psi.grid().cell_volume())
        }
        Basis::Momentum => {
            let m = to_momentum(psi.grid(), psi.amplitudes())?;
            if m.momenta.len() != field.values.len() {
                return Err(Error::GridMismatch("momentum grid size".into()));
            }
            (m.density(), m.dp)
        }
    };
    let total: f64 = density.iter().sum();
    let masked: f64 = density
        .iter()
        .zip(&field.mask)
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r)
        .sum();
    let fraction = if total > 0.0 { masked / total } else { 1.0 };
    if fraction > MASK_WEIGHT_LIMIT {
        return Err(Error::MaskWeight {
            weight: fraction,
            limit: MASK_WEIGHT_LIMIT,
        });
    }
    let sum: Complex64 = field
        .unmasked()
        .map(|(i, g)| g * density[i])
        .sum();
    Ok(sum * weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{expectation, make_gaussian_packet};
    use crate::model::{harmonic, PotentialField};
    use approx::assert_abs_diff_eq;

    fn line() -> SpatialGrid {
        SpatialGrid::line(256, -16.0, 16.0).unwrap()
    }

    fn plane_wave(g: &SpatialGrid, mode: i32) -> WavefunctionGrid {
        let k = 2.0 * std::f64::consts::PI * mode as f64 / g.axis(0).length();
        WavefunctionGrid::from_fn(g.clone(), |x| Complex64::from_polar(1.0, k * x[0]))
            .unwrap()
            .normalized()
            .unwrap()
    }

    fn superposition(g: &SpatialGrid) -> WavefunctionGrid {
        let a = make_gaussian_packet(g, -1.5, 1.0, 0.7).unwrap();
        let b = make_gaussian_packet(g, 1.5, -1.0, 0.7).unwrap();
        let amps = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| x + 0.7 * y)
            .collect();
        a.with_amplitudes(amps).unwrap().normalized().unwrap()
    }

    #[test]
    fn plane_wave_momentum_is_constant_for_any_delay() {
        let g = line();
        let psi = plane_wave(&g, 5);
        let k = 2.0 * std::f64::consts::PI * 5.0 / 32.0;
        let cfg = EvolutionConfig::new(PotentialField::zero(&g), 0.01, 1).without_leak_monitor();
        for tau in [0.0, 0.3, 1.7] {
            let f = formal_weak_value(&psi, OperatorTag::Momentum(0), tau, &cfg).unwrap();
            for (_, v) in f.unmasked() {
                assert!((v - Complex64::new(HBAR * k, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn position_field_at_zero_delay_is_the_coordinate() {
        let g = line();
        let psi = superposition(&g);
        let cfg = EvolutionConfig::new(PotentialField::zero(&g), 0.01, 1);
        let f = formal_weak_value(&psi, OperatorTag::Position(0), 0.0, &cfg).unwrap();
        for (i, v) in f.unmasked() {
            assert!((v.re - g.coord(0, i)).abs() < 1e-13 * g.coord(0, i).abs().max(1.0));
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_field_matches_pointwise_ratio() {
        let g = line();
        let psi = superposition(&g);
        let cfg = EvolutionConfig::new(PotentialField::zero(&g), 0.01, 1);
        let f = formal_weak_value(&psi, OperatorTag::Momentum(0), 0.0, &cfg).unwrap();
        // Oracle: closed-form derivative of the Gaussian superposition.
        let dx = |x: f64, x0: f64, p0: f64, s: f64| {
            let z = Complex64::new(-(x - x0) / (2.0 * s * s), p0);
            let amp = Complex64::from_polar((-(x - x0).powi(2) / (4.0 * s * s)).exp(), p0 * x);
            (amp, amp * z)
        };
        for (i, v) in f.unmasked() {
            let x = g.coord(0, i);
            let (a, da) = dx(x, -1.5, 1.0, 0.7);
            let (b, db) = dx(x, 1.5, -1.0, 0.7);
            let expected = Complex64::new(0.0, -1.0) * (da + 0.7 * db) / (a + 0.7 * b);
            if psi.density()[i] > 1e-8 {
                assert!((v - expected).norm() < 1e-10, "x = {x}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn local_momentum_of_gaussians() {
        let g = line();
        let real = make_gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let f = local_momentum(&real, 0).unwrap();
        let rho = real.density();
        for (i, v) in f.unmasked() {
            if rho[i] > 1e-10 {
                assert!(v.re.abs() < 1e-10);
                assert!((v.im - g.coord(0, i) / 2.0).abs() < 1e-9);
            }
        }
        let moving = make_gaussian_packet(&g, 0.0, 2.0, 1.0).unwrap();
        let f = local_momentum(&moving, 0).unwrap();
        for (i, v) in f.unmasked() {
            if moving.density()[i] > 1e-10 {
                assert!((v.re - 2.0).abs() < 1e-9);
            }
        }
        let pw = local_momentum(&plane_wave(&g, 3), 0).unwrap();
        for (_, v) in pw.unmasked() {
            assert!((v.re - 2.0 * std::f64::consts::PI * 3.0 / 32.0).abs() < 1e-12);
            assert!(v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_quantum_potential() {
        let g = line();
        let psi = make_gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let b = bohmian_fields(&psi, 0, 1.0).unwrap();
        let rho = psi.density();
        for i in 0..g.len() {
            if rho[i] > 1e-10 {
                let x = g.coord(0, i);
                assert!((b.q[i] - (0.25 - x * x / 8.0)).abs() < 1e-8, "x = {x}");
                assert!((b.q_curvature[i] - (0.25 - x * x / 8.0)).abs() < 1e-8);
            }
        }
        let dv = g.cell_volume();
        let avg = |f: &[f64]| f.iter().zip(&rho).map(|(a, r)| a * r).sum::<f64>() * dv;
        assert_abs_diff_eq!(avg(&b.q), 0.125, epsilon = 1e-10);
        assert_abs_diff_eq!(avg(&b.k_o), 0.125, epsilon = 1e-10);
        assert!(b.q_disagreement < Q_AGREEMENT, "{:e}", b.q_disagreement);
    }

    #[test]
    fn plane_wave_fields() {
        let g = line();
        let psi = plane_wave(&g, 4);
        let k = 2.0 * std::f64::consts::PI * 4.0 / 32.0;
        let b = bohmian_fields(&psi, 0, 1.0).unwrap();
        for i in 0..g.len() {
            assert!(b.q[i].abs() < 1e-10);
            assert!(b.k_o[i].abs() < 1e-20);
            assert!((b.k_b[i] - k * k / 2.0).abs() < 1e-12);
        }
        let kin = kinetic_weak_value(&psi, 0, 1.0).unwrap();
        for (_, v) in kin.unmasked() {
            assert!((v.re - k * k / 2.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn kinetic_field_real_part_decomposes() {
        let g = line();
        for psi in [superposition(&g), make_gaussian_packet(&g, 0.5, -1.0, 1.2).unwrap()] {
            let kin = kinetic_weak_value(&psi, 0, 1.0).unwrap();
            let b = bohmian_fields(&psi, 0, 1.0).unwrap();
            assert!(b.q_disagreement < Q_AGREEMENT, "{:e}", b.q_disagreement);
            for (i, v) in kin.unmasked() {
                let rhs = b.k_b[i] + b.q[i];
                assert!((v.re - rhs).abs() < 1e-8 * rhs.abs().max(1.0));
            }
        }
        let real = make_gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let kin = kinetic_weak_value(&real, 0, 1.0).unwrap();
        let b = bohmian_fields(&real, 0, 1.0).unwrap();
        for (i, v) in kin.unmasked() {
            assert!(v.im.abs() < 1e-8 * v.re.abs().max(1.0));
            assert!((v.re - b.q[i]).abs() < 1e-9 * b.q[i].abs().max(1.0));
        }
    }

    #[test]
    fn density_averages_recover_expectations() {
        let g = line();
        let v = harmonic(&g, 0.5, 0.0).unwrap();
        let cfg = EvolutionConfig::new(v, 0.01, 1);
        let moving = make_gaussian_packet(&g, 0.0, 2.0, 1.0).unwrap();
        let p = formal_weak_value(&moving, OperatorTag::Momentum(0), 0.0, &cfg).unwrap();
        let avg = density_average(&p, &moving).unwrap();
        assert!((avg - Complex64::new(2.0, 0.0)).norm() < 1e-8);

        let real = make_gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let k = formal_weak_value(&real, OperatorTag::Kinetic(0), 0.0, &cfg).unwrap();
        let avg = density_average(&k, &real).unwrap();
        assert!((avg - Complex64::new(0.125, 0.0)).norm() < 1e-8);

        let psi = superposition(&g);
        for tag in [
            OperatorTag::Position(0),
            OperatorTag::Momentum(0),
            OperatorTag::Kinetic(0),
            OperatorTag::Potential,
            OperatorTag::Hamiltonian,
        ] {
            let f = formal_weak_value(&psi, tag, 0.0, &cfg).unwrap();
            let avg = density_average(&f, &psi).unwrap();
            let direct = expectation(&psi, tag.observable(&cfg).unwrap()).unwrap();
            assert!((avg.re - direct).abs() < 1e-8 * direct.abs().max(1.0), "{tag:?}");
            assert!(avg.im.abs() < 1e-8, "{tag:?}");
        }
    }

    #[test]
    fn momentum_post_selection() {
        let g = line();
        let cfg = EvolutionConfig::new(PotentialField::zero(&g), 0.01, 1);
        let psi = make_gaussian_packet(&g, 1.2, 0.5, 1.0).unwrap();
        let f = generalized_weak_value(&psi, OperatorTag::Momentum(0), Basis::Momentum, 0.0, &cfg)
            .unwrap();
        for (i, v) in f.unmasked() {
            let b = f.grid.coord(0, i);
            assert!((v - Complex64::new(b, 0.0)).norm() < 1e-9 * b.abs().max(1.0));
        }
        let x = generalized_weak_value(&psi, OperatorTag::Position(0), Basis::Momentum, 0.0, &cfg)
            .unwrap();
        let avg = density_average(&x, &psi).unwrap();
        assert!((avg.re - 1.2).abs() < 1e-8 && avg.im.abs() < 1e-8);

        let a = generalized_weak_value(&psi, OperatorTag::Momentum(0), Basis::Position, 0.4, &cfg)
            .unwrap();
        let b = formal_weak_value(&psi, OperatorTag::Momentum(0), 0.4, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!("energy".parse::<Basis>(), Err(Error::UnsupportedBasis(_))));
    }

    #[test]
    fn small_delay_is_continuous() {
        let g = line();
        let cfg = EvolutionConfig::new(harmonic(&g, 1.0, 0.0).unwrap(), 1e-5, 1);
        let psi = superposition(&g);
        let f0 = formal_weak_value(&psi, OperatorTag::Momentum(0), 0.0, &cfg).unwrap();
        let f1 = formal_weak_value(&psi, OperatorTag::Momentum(0), 1e-4, &cfg).unwrap();
        let f2 = formal_weak_value(&psi, OperatorTag::Momentum(0), 2e-4, &cfg).unwrap();
        let rho = psi.density();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        for i in (0..g.len()).filter(|&i| rho[i] > 1e-4 * peak) {
            let d1 = (f1.values[i] - f0.values[i]).norm();
            let d2 = (f2.values[i] - f0.values[i]).norm();
            assert!(d1 < 1e-2, "jump {d1}");
            assert!((d2 / d1 - 2.0).abs() < 0.05, "slope ratio {}", d2 / d1);
        }
    }

    #[test]
    fn operator_labels_round_trip_and_validate() {
        for tag in [
            OperatorTag::Momentum(1),
            OperatorTag::Kinetic(0),
            OperatorTag::Position(1),
            OperatorTag::Potential,
            OperatorTag::Hamiltonian,
        ] {
            assert_eq!(OperatorTag::parse(&tag.label()).unwrap(), tag);
        }
        assert!(OperatorTag::parse("spin").is_err());
        let g = line();
        let cfg = EvolutionConfig::new(PotentialField::zero(&g), 0.01, 1);
        let psi = superposition(&g);
        assert!(matches!(
            formal_weak_value(&psi, OperatorTag::Momentum(1), 0.0, &cfg),
            Err(Error::UnsupportedOperator(_))
        ));
    }

    #[test]
    fn null_state_is_all_masked() {
        let g = line();
        let zero = WavefunctionGrid::new(g.clone(), vec![Complex64::new(0.0, 0.0); g.len()], 0.0)
            .unwrap();
        assert!(matches!(local_momentum(&zero, 0), Err(Error::AllMasked)));
    }
}
