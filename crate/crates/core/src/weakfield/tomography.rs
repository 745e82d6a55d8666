//! Wavefunction reconstruction from a density and a Bohmian momentum field.

use num_complex::Complex64;

use super::validity_mask;
use crate::error::{Error, Result};
use crate::grid::{inner_product, SpatialGrid, WavefunctionGrid};
use crate::units::HBAR;

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub psi: WavefunctionGrid,
    /// Disjoint runs of unmasked density.
    pub components: usize,
    pub warnings: Vec<String>,
}

impl Reconstruction {
    /// `|⟨ψ_rec|ψ_true⟩|` for normalized states.
    pub fn fidelity(&self, truth: &WavefunctionGrid) -> Result<f64> {
        Ok(inner_product(&self.psi, truth)?.norm())
    }
}

/// `ψ = √ρ · e^{iS/ħ}` with `S` the trapezoidal integral of `p_B`, anchored at
/// zero on the left-most unmasked point. Across masked gaps the last defined
/// `p_B` is held.
pub fn reconstruct_wavefunction(
    p_b: &[f64],
    density: &[f64],
    grid: &SpatialGrid,
) -> Result<Reconstruction> {
    if grid.ndim() != 1 {
        return Err(Error::InvalidParameter("tomography is implemented for 1-D grids".into()));
    }
    if p_b.len() != grid.len() || density.len() != grid.len() {
        return Err(Error::GridMismatch("field lengths differ from the grid".into()));
    }
    if density.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidParameter("density must be non-negative".into()));
    }
    let mask = validity_mask(density);
    let Some(anchor) = mask.iter().position(|&m| m) else {
        return Err(Error::AllMasked);
    };

    let mut components = 0;
    let mut inside = false;
    for &m in &mask {
        if m && !inside {
            components += 1;
        }
        inside = m;
    }
    let mut warnings = Vec::new();
    if components > 1 {
        let msg = format!(
            "density has {components} disjoint components; their relative phases are not identifiable"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let dx = grid.axis(0).dx();
    let mut phase = vec![0.0; grid.len()];
    let mut held = p_b[anchor];
    let mut s = 0.0;
    for i in anchor + 1..grid.len() {
        let prev = if mask[i - 1] { p_b[i - 1] } else { held };
        let cur = if mask[i] { p_b[i] } else { held };
        s += 0.5 * dx * (prev + cur);
        phase[i] = s;
        if mask[i] {
            held = p_b[i];
        }
    }
    let amps = density
        .iter()
        .zip(&phase)
        .map(|(r, s)| Complex64::from_polar(r.sqrt(), s / HBAR))
        .collect();
    let psi = WavefunctionGrid::new(grid.clone(), amps, 0.0)?.normalized()?;
    Ok(Reconstruction {
        psi,
        components,
        warnings,
    })
}
