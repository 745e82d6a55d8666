//! Property checks for every module, run by `wvsim validate` and by the
//! integration tests. Each check is small enough to finish in well under a
//! second on a laptop.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{
    expectation, inner_product, make_gaussian_packet, spectral_derivative, Observable, SpatialGrid,
    WavefunctionGrid,
};
use crate::manybody::{distinguishable_weak_value, expectation_recovery_check, indistinguishable_weak_value};
use crate::model::{
    exchange_residue, harmonic, regenerate, soft_coulomb, speckle_disorder, symmetrized_product, DisorderSpec,
    ExchangeSign, PotentialField,
};
use crate::propagator::{evolve, observer, EvolutionConfig};
use crate::protocol::{
    default_pointer_grid, default_superposition, ks_statistic, make_ancilla, run_protocol, Readout, ReadoutKernel,
};
use crate::seeding::{derive_seed, rng_for};
use crate::thermal::{detect_teq, run_scenario, ScenarioConfig, ScenarioId};
use crate::units::HBAR;
use crate::weakfield::{
    bohmian_fields, density_average, formal_weak_value, kinetic_weak_value, local_momentum, OperatorTag, Q_AGREEMENT,
};

/// A seeded smooth 1-D state: three Gaussian packets with random centres,
/// momenta, widths and complex weights, on `[−16, 16)` with 256 points.
pub fn random_smooth_state(seed: u64) -> Result<WavefunctionGrid> {
    let grid = SpatialGrid::line(256, -16.0, 16.0)?;
    random_smooth_state_on(&grid, seed)
}

/// [`random_smooth_state`] on a caller-supplied grid. Packet centres stay
/// within the central 20% of the domain.
pub fn random_smooth_state_on(grid: &SpatialGrid, seed: u64) -> Result<WavefunctionGrid> {
    let mut rng = rng_for(seed);
    let axis = grid.axis(0);
    let half = 0.1 * axis.length();
    let mid = axis.x_min + 0.5 * axis.length();
    let min_sigma = (4.0 * axis.dx()).max(0.025 * axis.length());
    let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
    for _ in 0..3 {
        let sigma = rng.gen_range(min_sigma..1.5 * min_sigma);
        let x0 = mid + rng.gen_range(-half..half);
        let p0 = rng.gen_range(-2.0..2.0);
        let w = Complex64::from_polar(rng.gen_range(0.3..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let g = make_gaussian_packet(grid, x0, p0, sigma)?;
        for (a, b) in amps.iter_mut().zip(g.amplitudes()) {
            *a += w * b;
        }
    }
    WavefunctionGrid::new(grid.clone(), amps, 0.0)?.normalized()
}

/// Symmetrized product of two seeded smooth states on `[−10, 10)²`, 128 points per axis.
pub fn random_symmetric_pair(seed: u64) -> Result<WavefunctionGrid> {
    let line = SpatialGrid::line(128, -10.0, 10.0)?;
    let a = random_smooth_state_on(&line, derive_seed(seed, 0))?;
    let b = random_smooth_state_on(&line, derive_seed(seed, 1))?;
    symmetrized_product(&a, &b, ExchangeSign::Symmetric)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SuiteReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.passed()
    }

    pub fn all_passed(&self) -> bool {
        self.failed() == 0
    }
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, Check)] = &[
    ("grid", "parseval", grid_parseval),
    ("grid", "derivative_linearity", grid_derivative_linearity),
    ("grid", "momentum_expectation", grid_momentum_expectation),
    ("model", "regeneration", model_regeneration),
    ("model", "exchange_symmetry", model_exchange_symmetry),
    ("model", "potential_sum", model_potential_sum),
    ("propagator", "norm_and_energy", propagator_norm_and_energy),
    ("propagator", "ehrenfest", propagator_ehrenfest),
    ("propagator", "exchange_preserved", propagator_exchange_preserved),
    ("weakfield", "identity_suite", weakfield_identity_suite),
    ("weakfield", "q_routes_agree", weakfield_q_routes),
    ("weakfield", "eigenstate_constancy", weakfield_eigenstates),
    ("weakfield", "tau_continuity", weakfield_tau_continuity),
    ("protocol", "determinism", protocol_determinism),
    ("protocol", "marginal_convergence", protocol_marginal_convergence),
    ("manybody", "recovery", manybody_recovery),
    ("manybody", "separable_reduction", manybody_separable),
    ("thermal", "detector", thermal_detector),
    ("thermal", "short_run_invariants", thermal_short_run),
];

fn run_entry(&(module, name, f): &(&'static str, &'static str, Check)) -> CheckOutcome {
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckOutcome {
        module,
        name,
        passed,
        detail,
    }
}

/// Runs every check; an error inside a check counts as a failure.
pub fn run_all() -> SuiteReport {
    SuiteReport {
        outcomes: CHECKS.iter().map(run_entry).collect(),
    }
}

/// Runs the single check `module::name`, if it exists.
pub fn run_check(module: &str, name: &str) -> Option<CheckOutcome> {
    CHECKS
        .iter()
        .find(|(m, n, _)| *m == module && *n == name)
        .map(run_entry)
}

fn verdict(ok: bool, detail: String) -> Result<(bool, String)> {
    Ok((ok, detail))
}

fn grid_parseval() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for s in 0..5 {
        let psi = random_smooth_state(s)?;
        worst = worst.max((psi.norm_sqr() - psi.momentum_norm_sqr()).abs());
    }
    verdict(worst < 1e-10, format!("max |‖ψ‖² − ‖φ‖²| = {worst:e}"))
}

fn grid_derivative_linearity() -> Result<(bool, String)> {
    let psi = random_smooth_state(11)?;
    let phi = random_smooth_state(12)?;
    let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
    let mix: Vec<Complex64> = psi.amplitudes().iter().zip(phi.amplitudes()).map(|(x, y)| a * x + b * y).collect();
    let d_mix = spectral_derivative(&psi.with_amplitudes(mix)?, 0, 1)?;
    let d_psi = spectral_derivative(&psi, 0, 1)?;
    let d_phi = spectral_derivative(&phi, 0, 1)?;
    let worst = d_mix
        .iter()
        .zip(d_psi.iter().zip(&d_phi))
        .map(|(m, (p, q))| (m - (a * p + b * q)).norm())
        .fold(0.0, f64::max);
    verdict(worst < 1e-12, format!("max residue {worst:e}"))
}

fn grid_momentum_expectation() -> Result<(bool, String)> {
    let psi = random_smooth_state(13)?;
    let d = spectral_derivative(&psi, 0, 1)?;
    let dpsi = psi.with_amplitudes(d)?;
    let direct = (Complex64::new(0.0, -HBAR) * inner_product(&psi, &dpsi)?).re;
    let p = expectation(&psi, Observable::Momentum(0))?;
    let err = (p - direct).abs();
    verdict(err < 1e-10, format!("|⟨P⟩ − (−iħ)⟨ψ|ψ′⟩| = {err:e}"))
}

fn model_regeneration() -> Result<(bool, String)> {
    let grid = SpatialGrid::square(64, -8.0, 8.0)?;
    let spec = DisorderSpec {
        seed: 3,
        speckle_count: 20,
        amplitude: 0.5,
        correlation_length: 0.8,
        mirror: false,
    };
    let parts = [harmonic(&grid, 1.0, 0.0)?, speckle_disorder(&grid, &spec)?, soft_coulomb(&grid, 1.0, 1.0)?];
    let refs: Vec<&PotentialField> = parts.iter().collect();
    let total = PotentialField::sum(&grid, &refs)?;
    let again = regenerate(total.descriptor(), &grid)?;
    let same = again.values().iter().zip(total.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    verdict(same, format!("bit-identical: {same}"))
}

fn model_exchange_symmetry() -> Result<(bool, String)> {
    let psi = random_symmetric_pair(5)?;
    let line = SpatialGrid::line(128, -10.0, 10.0)?;
    let a = random_smooth_state_on(&line, 1)?;
    let b = random_smooth_state_on(&line, 2)?;
    let anti = symmetrized_product(&a, &b, ExchangeSign::Antisymmetric)?;
    let r = exchange_residue(&psi, ExchangeSign::Symmetric).max(exchange_residue(&anti, ExchangeSign::Antisymmetric));
    verdict(r < 1e-12, format!("max residue {r:e}"))
}

fn model_potential_sum() -> Result<(bool, String)> {
    let grid = SpatialGrid::square(64, -8.0, 8.0)?;
    let spec = DisorderSpec {
        seed: 9,
        speckle_count: 10,
        amplitude: 0.5,
        correlation_length: 0.8,
        mirror: true,
    };
    let (h, d, v) = (harmonic(&grid, 1.0, 0.0)?, speckle_disorder(&grid, &spec)?, soft_coulomb(&grid, 1.0, 1.0)?);
    let total = PotentialField::sum(&grid, &[&h, &d, &v])?;
    let exact = (0..grid.len()).all(|i| total.values()[i] == h.values()[i] + d.values()[i] + v.values()[i]);
    verdict(exact, format!("exact: {exact}"))
}

fn propagator_norm_and_energy() -> Result<(bool, String)> {
    let grid = SpatialGrid::line(256, -16.0, 16.0)?;
    let psi = make_gaussian_packet(&grid, 1.5, 0.5, 0.9)?;
    let cfg = EvolutionConfig::new(harmonic(&grid, 1.0, 0.0)?, 0.001, 10_000).with_stride(10_000);
    let hamiltonian = |p: &WavefunctionGrid| {
        expectation(
            p,
            Observable::Hamiltonian {
                potential: cfg.potential.values(),
                masses: &cfg.masses,
            },
        )
    };
    let h0 = hamiltonian(&psi)?;
    let (out, _) = evolve(&psi, &cfg, &mut [])?;
    let norm = (out.norm_sqr().sqrt() - 1.0).abs();
    let drift = (hamiltonian(&out)? - h0).abs() / h0.abs();
    verdict(norm < 1e-9 && drift < 1e-6, format!("norm drift {norm:e}, energy drift {drift:e}"))
}

fn propagator_ehrenfest() -> Result<(bool, String)> {
    let grid = SpatialGrid::line(256, -16.0, 16.0)?;
    let psi = make_gaussian_packet(&grid, 1.0, 0.7, 1.0)?;
    let dt = 1e-3;
    let cfg = EvolutionConfig::new(harmonic(&grid, 1.0, 0.0)?, dt, 2);
    let mut x = observer("x", |p: &WavefunctionGrid| expectation(p, Observable::Position(0)));
    let mut p = observer("p", |p: &WavefunctionGrid| expectation(p, Observable::Momentum(0)));
    let (_, s) = evolve(&psi, &cfg, &mut [&mut x, &mut p])?;
    let xs = s.column("x").unwrap_or_default();
    let ps = s.column("p").unwrap_or_default();
    let err = ((xs[2] - xs[0]) / (2.0 * dt) - ps[1]).abs();
    verdict(err < 1e-4, format!("|d⟨x⟩/dt − ⟨p⟩/m| = {err:e}"))
}

fn propagator_exchange_preserved() -> Result<(bool, String)> {
    let grid = SpatialGrid::square(128, -10.0, 10.0)?;
    let psi = random_symmetric_pair(21)?;
    let spec = DisorderSpec {
        seed: 4,
        speckle_count: 20,
        amplitude: 0.5,
        correlation_length: 1.0,
        mirror: false,
    };
    let v = PotentialField::sum(
        &grid,
        &[&harmonic(&grid, 1.0, 0.0)?, &speckle_disorder(&grid, &spec)?, &soft_coulomb(&grid, 1.0, 1.0)?],
    )?;
    let cfg = EvolutionConfig::new(v, 0.005, 200).without_leak_monitor();
    let (out, _) = evolve(&psi, &cfg, &mut [])?;
    let r = exchange_residue(&out, ExchangeSign::Symmetric);
    verdict(r < 1e-10, format!("residue after 200 steps {r:e}"))
}

fn weakfield_identity_suite() -> Result<(bool, String)> {
    let mut worst_avg: f64 = 0.0;
    let mut worst_im: f64 = 0.0;
    let mut worst_split: f64 = 0.0;
    let mut worst_ko: f64 = 0.0;
    for s in 0..20 {
        let psi = random_smooth_state(derive_seed(2024, s))?;
        let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.01, 1);
        for (tag, obs) in [
            (OperatorTag::Momentum(0), Observable::Momentum(0)),
            (OperatorTag::Kinetic(0), Observable::Kinetic { axis: 0, mass: 1.0 }),
            (OperatorTag::Position(0), Observable::Position(0)),
        ] {
            let field = formal_weak_value(&psi, tag, 0.0, &cfg)?;
            let avg = density_average(&field, &psi)?;
            let g = expectation(&psi, obs)?;
            worst_avg = worst_avg.max((avg.re - g).abs() / g.abs().max(1.0));
            worst_im = worst_im.max(avg.im.abs());
        }
        let kin = kinetic_weak_value(&psi, 0, 1.0)?;
        let b = bohmian_fields(&psi, 0, 1.0)?;
        for (i, z) in kin.unmasked() {
            worst_split = worst_split.max((z.re - b.k_b[i] - b.q[i]).abs() / z.re.abs().max(1.0));
        }
        let rho = psi.density();
        let dx = psi.grid().cell_volume();
        let avg = |f: &[f64]| f.iter().zip(&rho).zip(&b.mask).filter(|(_, m)| **m).map(|((v, r), _)| v * r).sum::<f64>() * dx;
        worst_ko = worst_ko.max((avg(&b.k_o) - avg(&b.q)).abs());
    }
    let ok = worst_avg < 1e-8 && worst_im < 1e-8 && worst_split < 1e-8 && worst_ko < 2e-7;
    verdict(
        ok,
        format!("averages {worst_avg:e}, imaginary {worst_im:e}, K_B+Q {worst_split:e}, K_O−Q {worst_ko:e}"),
    )
}

fn weakfield_q_routes() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    // Nodeless states: |ψ| is smooth only away from zeros of ψ.
    let grid = SpatialGrid::line(256, -16.0, 16.0)?;
    for s in 0..5 {
        let mut rng = rng_for(derive_seed(77, s));
        let p0 = rng.gen_range(-2.0..2.0);
        let sigma = rng.gen_range(0.8..1.2);
        let a = make_gaussian_packet(&grid, rng.gen_range(-3.0..0.0), p0, sigma)?;
        let b = make_gaussian_packet(&grid, rng.gen_range(0.0..3.0), p0, sigma)?;
        let w = rng.gen_range(0.3..1.0);
        let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + w * y).collect();
        let psi = WavefunctionGrid::new(grid.clone(), amps, 0.0)?.normalized()?;
        worst = worst.max(bohmian_fields(&psi, 0, 1.0)?.q_disagreement);
    }
    verdict(worst < Q_AGREEMENT, format!("max relative disagreement {worst:e}"))
}

fn weakfield_eigenstates() -> Result<(bool, String)> {
    let grid = SpatialGrid::line(256, -16.0, 16.0)?;
    let cfg = EvolutionConfig::new(PotentialField::zero(&grid), 0.01, 1).without_leak_monitor();
    let dk = grid.axis(0).dk();
    let mut worst: f64 = 0.0;
    for m in [-7, 3, 20] {
        let k = m as f64 * dk;
        let psi = WavefunctionGrid::from_fn(grid.clone(), |x| Complex64::from_polar(1.0, k * x[0]))?.normalized()?;
        for tau in [0.0, 0.3, 1.0] {
            let f = formal_weak_value(&psi, OperatorTag::Momentum(0), tau, &cfg)?;
            let vals: Vec<Complex64> = f.unmasked().map(|(_, z)| z).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<Complex64>() / n;
            let sd = (vals.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n).sqrt();
            worst = worst.max(sd).max((mean - Complex64::new(HBAR * k, 0.0)).norm());
        }
    }
    verdict(worst < 1e-8, format!("max deviation {worst:e}"))
}

fn weakfield_tau_continuity() -> Result<(bool, String)> {
    let psi = default_superposition()?;
    let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 1e-5, 1);
    let f0 = formal_weak_value(&psi, OperatorTag::Momentum(0), 0.0, &cfg)?;
    let f1 = formal_weak_value(&psi, OperatorTag::Momentum(0), 1e-4, &cfg)?;
    let f2 = formal_weak_value(&psi, OperatorTag::Momentum(0), 2e-4, &cfg)?;
    let diff = |a: &crate::weakfield::WeakValueField| {
        let rho = psi.density();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        (0..rho.len())
            .filter(|&i| rho[i] > 1e-4 * peak)
            .map(|i| (a.values[i] - f0.values[i]).norm())
            .fold(0.0, f64::max)
    };
    let (d1, d2) = (diff(&f1), diff(&f2));
    let ratio = d2 / d1;
    let ok = d1 > 0.0 && (1.5..2.5).contains(&ratio);
    verdict(ok, format!("Δ(1e−4) = {d1:e}, Δ(2e−4)/Δ(1e−4) = {ratio:.3}"))
}

fn protocol_determinism() -> Result<(bool, String)> {
    let psi = default_superposition()?;
    let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.005, 1);
    let anc = make_ancilla(1.0, 0.05, 1.0, &default_pointer_grid()?)?;
    let a = run_protocol(&psi, &anc, 0.5, &cfg, 2000, 99, Readout::Position)?;
    let b = run_protocol(&psi, &anc, 0.5, &cfg, 2000, 99, Readout::Position)?;
    let same = a == b;
    verdict(same, format!("identical records: {same}"))
}

fn protocol_marginal_convergence() -> Result<(bool, String)> {
    let psi = default_superposition()?;
    let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.005, 1);
    let anc = make_ancilla(1.0, 0.05, 1.0, &default_pointer_grid()?)?;
    let kernel = ReadoutKernel::new(&psi, &anc, 0.5, &cfg, Readout::Position)?;
    let marginal = kernel.x_marginal();
    let ks = |m: usize| {
        let rec = crate::protocol::sample_kernel(&kernel, 0.5, m, 5, anc.sigma);
        ks_statistic(rec.repetitions.iter().map(|r| r.x_index), &marginal)
    };
    let (small, large) = (ks(500), ks(32_000));
    verdict(large < small && large < 0.02, format!("KS(500) = {small:.4}, KS(32000) = {large:.4}"))
}

fn manybody_recovery() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for s in 0..10 {
        let psi = random_symmetric_pair(derive_seed(31, s))?;
        worst = worst.max(expectation_recovery_check(&psi)?.abs_error);
    }
    verdict(worst < 1e-8, format!("max |∫P̃ℙ − ⟨P⟩| = {worst:e}"))
}

fn manybody_separable() -> Result<(bool, String)> {
    let line = SpatialGrid::line(128, -10.0, 10.0)?;
    let a = random_smooth_state_on(&line, 3)?;
    let b = random_smooth_state_on(&line, 4)?;
    let n = line.len();
    let grid = SpatialGrid::square(128, -10.0, 10.0)?;
    let amps = (0..n * n).map(|i| a.amplitudes()[i / n] * b.amplitudes()[i % n]).collect();
    let psi = WavefunctionGrid::new(grid, amps, 0.0)?;
    let field = distinguishable_weak_value(&psi, 0)?;
    let one = local_momentum(&a, 0)?;
    let rho = psi.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let worst = (0..n * n)
        .filter(|&i| rho[i] >= 1e-8 * peak)
        .map(|i| (field.values[i] - one.values[i / n]).norm())
        .fold(0.0, f64::max);
    let reduced = indistinguishable_weak_value(&random_symmetric_pair(8)?)?;
    let ok = worst < 1e-10 && reduced.symmetry_residue < 1e-8;
    verdict(ok, format!("max deviation {worst:e}, symmetry residue {:e}", reduced.symmetry_residue))
}

fn thermal_detector() -> Result<(bool, String)> {
    let mut d = crate::thermal::EnergyDecomposition::default();
    let dt = 0.01;
    for i in 0..=1000 {
        let t = i as f64 * dt;
        let g = (-t as f64).exp();
        d.times.push(t);
        for dir in d.directions.iter_mut() {
            dir.kinetic.push(2.0);
            dir.bohm.push(1.0 + g);
            dir.quantum.push(1.0 - g);
            dir.osmotic.push(1.0 - g);
            dir.position.push(0.0);
            dir.p_bohm.push(0.0);
            dir.p_osmotic.push(0.0);
        }
        d.trap.push(1.0);
        d.disorder.push(0.0);
        d.interaction.push(0.0);
        d.total.push(5.0);
        d.exchange_residue.push(0.0);
    }
    let r = detect_teq(&d, 0.1, 1.0)?;
    let t = r.t_eq.unwrap_or(f64::NAN);
    verdict((t - 10f64.ln()).abs() <= dt, format!("t_eq = {t:.4} (ln 10 = {:.4})", 10f64.ln()))
}

fn thermal_short_run() -> Result<(bool, String)> {
    let mut cfg = ScenarioConfig::template(ScenarioId::A);
    cfg.grid_points = 128;
    cfg.x_min = -8.0;
    cfg.x_max = 8.0;
    cfg.disorder.correlation_length = 0.8;
    cfg.horizon = 1.0;
    cfg.dt = 0.002;
    cfg.stride = 50;
    // run_scenario aborts on any invariant failure.
    let d = run_scenario(&cfg)?;
    let sym = (0..d.times.len())
        .map(|i| {
            let (a, b) = (&d.directions[0], &d.directions[1]);
            [
                a.kinetic[i] - b.kinetic[i],
                a.bohm[i] - b.bohm[i],
                a.quantum[i] - b.quantum[i],
                a.osmotic[i] - b.osmotic[i],
            ]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max);
    let ok = sym < 1e-7 && d.energy_drift() < 1e-6;
    verdict(ok, format!("direction asymmetry {sym:e}, energy drift {:e}", d.energy_drift()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_states_are_resolved_and_normalized() {
        for s in 0..20 {
            let psi = random_smooth_state(s).unwrap();
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
            assert!(psi.boundary_ratio() < 1e-10);
        }
    }

    #[test]
    fn suite_passes() {
        let report = run_all();
        for o in &report.outcomes {
            assert!(o.passed, "{}::{} failed: {}", o.module, o.name, o.detail);
        }
        assert_eq!(report.outcomes.len(), CHECKS.len());
    }
}
