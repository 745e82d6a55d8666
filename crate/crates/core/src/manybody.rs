//! Two-body momentum weak values: per-particle fields on configuration space,
//! their one-coordinate marginals, and the particle-agnostic average.
//!
//! Particles are indexed from 0 and coincide with the axes of the
//! configuration grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{expectation, Observable, SpatialGrid, Spectral, WavefunctionGrid};
use crate::model::{exchange_residue, ExchangeSign};
use crate::units::HBAR;
use crate::weakfield::{local_momentum, validity_mask, WeakValueField};

/// Exchange residue above which the particle-agnostic field warns.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

fn two_body_grid(psi: &WavefunctionGrid) -> Result<&SpatialGrid> {
    let grid = psi.grid();
    if grid.ndim() != 2 || grid.axis(0) != grid.axis(1) {
        return Err(Error::InvalidParameter(
            "two-body fields need a square configuration grid".into(),
        ));
    }
    Ok(grid)
}

/// `−iħ ∂_j Ψ / Ψ` over configuration space.
pub fn distinguishable_weak_value(psi: &WavefunctionGrid, j: usize) -> Result<WeakValueField> {
    two_body_grid(psi)?;
    local_momentum(psi, j)
}

/// One-coordinate marginals and the particle-agnostic field.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedWeakField {
    pub grid: SpatialGrid,
    /// `p_jk[j][k] = P_{f,j,k}(x)`: particle `j`'s momentum field with every
    /// coordinate except `x_k` integrated out.
    pub p_jk: [[Vec<Complex64>; 2]; 2],
    /// `(1/4) Σ_j Σ_k P_{f,j,k}`.
    pub p_tilde: Vec<Complex64>,
    /// One-particle densities `ℙ(x_k)`.
    pub marginals: [Vec<f64>; 2],
    /// `(ℙ(x_1) + ℙ(x_2))/2`, which integrates to one.
    pub density: Vec<f64>,
    pub mask: Vec<bool>,
    /// Smaller of the symmetric and antisymmetric swap residues of `Ψ`.
    pub symmetry_residue: f64,
}

impl ReducedWeakField {
    /// Columns `x, re, im, density`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x,re,im,density")?;
        for (i, z) in self.p_tilde.iter().enumerate() {
            writeln!(
                w,
                "{:.12e},{:.16e},{:.16e},{:.16e}",
                self.grid.coord(0, i),
                z.re,
                z.im,
                self.density[i]
            )?;
        }
        Ok(())
    }
}

/// `∫ Ψ* (−iħ ∂_j Ψ) dx_other`, leaving `x_k`; the product form avoids
/// dividing by `Ψ` at nodes.
fn marginal_numerators(psi: &WavefunctionGrid) -> Result<[[Vec<Complex64>; 2]; 2]> {
    let grid = two_body_grid(psi)?;
    let n = grid.axis(0).n_points;
    let dx = grid.axis(0).dx();
    let spectral = Spectral::new(grid);
    let amps = psi.amplitudes();
    let mut out: [[Vec<Complex64>; 2]; 2] = Default::default();
    for (j, row) in out.iter_mut().enumerate() {
        let d = spectral.derivative(amps, j, 1);
        let local: Vec<Complex64> = amps
            .iter()
            .zip(&d)
            .map(|(a, b)| a.conj() * Complex64::new(0.0, -HBAR) * b)
            .collect();
        let mut keep1 = vec![Complex64::new(0.0, 0.0); n];
        let mut keep2 = vec![Complex64::new(0.0, 0.0); n];
        for i1 in 0..n {
            for i2 in 0..n {
                let v = local[i1 * n + i2];
                keep1[i1] += v;
                keep2[i2] += v;
            }
        }
        keep1.iter_mut().chain(keep2.iter_mut()).for_each(|z| *z *= dx);
        row[0] = keep1;
        row[1] = keep2;
    }
    Ok(out)
}

fn one_particle_marginals(psi: &WavefunctionGrid) -> Result<[Vec<f64>; 2]> {
    let grid = two_body_grid(psi)?;
    let n = grid.axis(0).n_points;
    let dx = grid.axis(0).dx();
    let rho = psi.density();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for i1 in 0..n {
        for i2 in 0..n {
            m1[i1] += rho[i1 * n + i2] * dx;
            m2[i2] += rho[i1 * n + i2] * dx;
        }
    }
    Ok([m1, m2])
}

/// `P_{f,j,k}(x)` alone.
pub fn marginalized_weak_value(
    psi: &WavefunctionGrid,
    j: usize,
    k: usize,
) -> Result<(SpatialGrid, Vec<Complex64>, Vec<bool>)> {
    if j > 1 || k > 1 {
        return Err(Error::InvalidParameter(format!("particle indices {j}, {k} out of range")));
    }
    let r = indistinguishable_weak_value(psi)?;
    let mask = validity_mask(&r.marginals[k]);
    Ok((r.grid, r.p_jk[j][k].clone(), mask))
}

pub fn indistinguishable_weak_value(psi: &WavefunctionGrid) -> Result<ReducedWeakField> {
    let grid = two_body_grid(psi)?;
    let line = SpatialGrid::new(vec![grid.axis(0).clone()])?;
    let numerators = marginal_numerators(psi)?;
    let marginals = one_particle_marginals(psi)?;
    let masks = [validity_mask(&marginals[0]), validity_mask(&marginals[1])];
    if !masks[0].iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    let n = line.len();
    let mut p_jk: [[Vec<Complex64>; 2]; 2] = Default::default();
    for j in 0..2 {
        for k in 0..2 {
            p_jk[j][k] = (0..n)
                .map(|i| {
                    if masks[k][i] {
                        numerators[j][k][i] / marginals[k][i]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
        }
    }
    let mask: Vec<bool> = (0..n).map(|i| masks[0][i] && masks[1][i]).collect();
    let p_tilde = (0..n)
        .map(|i| (p_jk[0][0][i] + p_jk[0][1][i] + p_jk[1][0][i] + p_jk[1][1][i]) / 4.0)
        .collect();
    let density = (0..n).map(|i| 0.5 * (marginals[0][i] + marginals[1][i])).collect();
    let symmetry_residue = exchange_residue(psi, ExchangeSign::Symmetric)
        .min(exchange_residue(psi, ExchangeSign::Antisymmetric));
    if symmetry_residue > SYMMETRY_TOLERANCE {
        log::warn!(
            "state is not exchange (anti)symmetric (residue {symmetry_residue:.3e}); \
             the particle-agnostic field assumes indistinguishable particles"
        );
    }
    Ok(ReducedWeakField {
        grid: line,
        p_jk,
        p_tilde,
        marginals,
        density,
        mask,
        symmetry_residue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryReport {
    /// `(1/N) Σ_j ⟨P̂_j⟩`.
    pub mean_momentum: f64,
    /// `∫ P̃_f ℙ dx`.
    pub recovered: Complex64,
    pub abs_error: f64,
    pub rel_error: f64,
}

pub fn expectation_recovery_check(psi: &WavefunctionGrid) -> Result<RecoveryReport> {
    let reduced = indistinguishable_weak_value(psi)?;
    let mean_momentum = 0.5
        * (expectation(psi, Observable::Momentum(0))? + expectation(psi, Observable::Momentum(1))?);
    let dx = reduced.grid.axis(0).dx();
    let recovered: Complex64 = reduced
        .p_tilde
        .iter()
        .zip(&reduced.density)
        .zip(&reduced.mask)
        .filter(|(_, &m)| m)
        .map(|((p, r), _)| p * r)
        .sum::<Complex64>()
        * dx;
    let abs_error = (recovered - Complex64::new(mean_momentum, 0.0)).norm();
    Ok(RecoveryReport {
        mean_momentum,
        recovered,
        abs_error,
        rel_error: abs_error / mean_momentum.abs().max(1.0),
    })
}
