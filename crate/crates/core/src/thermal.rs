//! Two electrons in a disordered harmonic trap: energy decompositions and the
//! equipartition test for the thermalization time.
//!
//! The Hamiltonian is
//! `H = Σ_j [p_j²/2m + ½mω²x_j² + d(x_j)] + λ/√((x1 − x2)² + α²)`
//! with `d` a seeded speckle pattern. During evolution the observer records,
//! per direction `j`, the kinetic energy `⟨K_j⟩` and its two splittings
//! `⟨K_B,j⟩ + ⟨Q_j⟩` and `⟨K_B,j⟩ + ⟨K_O,j⟩`, together with `⟨x_j⟩`,
//! `⟨p_B,j⟩`, `⟨p_O,j⟩` and the potential energies.
//!
//! The system is called thermalized once the relative gap
//! `g(t) = |⟨K_B⟩ − ⟨Q⟩| / ⟨K⟩` (summed over directions) stays below `θ` for
//! a full window `W`; [`detect_teq`] returns the earliest such time. This is
//! one operational reading of `⟨K⟩ ≃ 2⟨K_B⟩ ≃ 2⟨Q⟩`, with `θ` and `W` as free
//! parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_gaussian_packet, Spectral, SpatialGrid, WavefunctionGrid};
use crate::model::{
    exchange_residue, harmonic, soft_coulomb, speckle_disorder, symmetrized_product, DisorderSpec,
    ExchangeSign, PotentialField,
};
use crate::propagator::{evolve, EvolutionConfig, Observer};
use crate::units::{ELECTRON_MASS, HBAR};
use crate::weakfield::{DENSITY_FLOOR, MASK_WEIGHT_LIMIT};

pub const DEFAULT_THETA: f64 = 0.1;
/// Equipartition window as a fraction of the run horizon.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.2;
pub const DEFAULT_THETA_BLIND: f64 = 0.05;
/// Samples before this time are ignored by [`blindness_report`].
pub const DEFAULT_TRANSIENT: f64 = 1.0;

/// Tolerance on `K_B + Q = K` and `K_B + K_O = K`, relative to `max(1, K)`.
pub const SPLIT_TOLERANCE: f64 = 1e-7;
pub const ENERGY_DRIFT_LIMIT: f64 = 1e-6;
pub const EXCHANGE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Packets near the trap centre with equal momenta.
    A,
    /// Packets at opposite sides, at rest.
    B,
    /// Packets at opposite sides with large momenta.
    C,
    /// Template A without disorder or interaction.
    Control,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::A, ScenarioId::B, ScenarioId::C, ScenarioId::Control];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
            ScenarioId::C => "C",
            ScenarioId::Control => "control",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(ScenarioId::A),
            "b" => Ok(ScenarioId::B),
            "c" => Ok(ScenarioId::C),
            "control" => Ok(ScenarioId::Control),
            _ => Err(Error::InvalidParameter(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    pub x0: [f64; 2],
    pub p0: [f64; 2],
    pub sigma: f64,
    pub omega: f64,
    pub disorder: DisorderSpec,
    pub lambda: f64,
    pub alpha: f64,
    pub exchange: ExchangeSign,
    pub grid_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Steps between recorded samples.
    pub stride: usize,
}

impl ScenarioConfig {
    /// Default parameters for each scenario on a 256² grid over `[−10, 10)²`.
    ///
    /// Disorder: 40 speckles of height up to `½ħω` and width `L/20`. Scenario B
    /// uses a mirror-symmetric pattern so that parity is an exact symmetry.
    /// Scenario C puts the two packets in phase-space quadrature, which keeps
    /// the harmonic kinetic and potential energies stationary.
    pub fn template(scenario: ScenarioId) -> Self {
        let (x0, p0) = match scenario {
            ScenarioId::A | ScenarioId::Control => ([0.5, -0.5], [1.0, 1.0]),
            ScenarioId::B => ([2.5, -2.5], [0.0, 0.0]),
            ScenarioId::C => ([2.5, -2.5], [2.5, 2.5]),
        };
        let (x_min, x_max) = (-10.0, 10.0);
        let omega = 1.0;
        let disorder = DisorderSpec {
            seed: 7,
            speckle_count: 40,
            amplitude: if scenario == ScenarioId::Control { 0.0 } else { 0.5 * HBAR * omega },
            correlation_length: (x_max - x_min) / 20.0,
            mirror: scenario == ScenarioId::B,
        };
        Self {
            scenario,
            x0,
            p0,
            sigma: 0.7,
            omega,
            disorder,
            lambda: if scenario == ScenarioId::Control { 0.0 } else { 1.0 },
            alpha: 1.0,
            exchange: ExchangeSign::Symmetric,
            grid_points: 256,
            x_min,
            x_max,
            dt: 0.002,
            horizon: 50.0,
            stride: 50,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0) || self.stride == 0 {
            return Err(Error::InvalidParameter("dt and stride must be positive".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("σ must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Initial state, potential pieces and their sum.
    pub fn build(&self) -> Result<ScenarioSetup> {
        self.validate()?;
        let line = SpatialGrid::line(self.grid_points, self.x_min, self.x_max)?;
        let a = make_gaussian_packet(&line, self.x0[0], self.p0[0], self.sigma)?;
        let b = make_gaussian_packet(&line, self.x0[1], self.p0[1], self.sigma)?;
        let psi = symmetrized_product(&a, &b, self.exchange)?;
        let grid = psi.grid().clone();
        let trap = harmonic(&grid, self.omega, 0.0)?;
        let disorder = speckle_disorder(&grid, &self.disorder)?;
        let interaction = if self.lambda == 0.0 {
            PotentialField::zero(&grid)
        } else {
            soft_coulomb(&grid, self.lambda, self.alpha)?
        };
        let total = PotentialField::sum(&grid, &[&trap, &disorder, &interaction])?;
        Ok(ScenarioSetup {
            psi,
            trap,
            disorder,
            interaction,
            total,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub psi: WavefunctionGrid,
    pub trap: PotentialField,
    pub disorder: PotentialField,
    pub interaction: PotentialField,
    pub total: PotentialField,
}

/// Time series for one direction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectionSeries {
    pub kinetic: Vec<f64>,
    pub bohm: Vec<f64>,
    pub quantum: Vec<f64>,
    pub osmotic: Vec<f64>,
    pub position: Vec<f64>,
    pub p_bohm: Vec<f64>,
    pub p_osmotic: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyDecomposition {
    pub times: Vec<f64>,
    pub directions: [DirectionSeries; 2],
    pub trap: Vec<f64>,
    pub disorder: Vec<f64>,
    pub interaction: Vec<f64>,
    pub total: Vec<f64>,
    pub exchange_residue: Vec<f64>,
    /// `√⟨x1²⟩` at the first sample.
    pub position_scale: f64,
    /// `√⟨p1²⟩` at the first sample.
    pub momentum_scale: f64,
}

impl EnergyDecomposition {
    fn summed(&self, f: impl Fn(&DirectionSeries) -> &Vec<f64>) -> Vec<f64> {
        f(&self.directions[0])
            .iter()
            .zip(f(&self.directions[1]))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn kinetic(&self) -> Vec<f64> {
        self.summed(|d| &d.kinetic)
    }

    pub fn bohm(&self) -> Vec<f64> {
        self.summed(|d| &d.bohm)
    }

    pub fn quantum(&self) -> Vec<f64> {
        self.summed(|d| &d.quantum)
    }

    pub fn osmotic(&self) -> Vec<f64> {
        self.summed(|d| &d.osmotic)
    }

    /// `|⟨K_B⟩ − ⟨Q⟩| / ⟨K⟩`.
    pub fn gap(&self) -> Vec<f64> {
        relative_gap(&self.bohm(), &self.quantum(), &self.kinetic())
    }

    /// `|⟨K_B⟩ − ⟨K_O⟩| / ⟨K⟩`.
    pub fn osmotic_gap(&self) -> Vec<f64> {
        relative_gap(&self.bohm(), &self.osmotic(), &self.kinetic())
    }

    /// Largest relative change of `⟨H⟩` from the first sample.
    pub fn energy_drift(&self) -> f64 {
        let Some(&h0) = self.total.first() else {
            return 0.0;
        };
        self.total
            .iter()
            .map(|h| (h - h0).abs() / h0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Columns: `t`, totals `K, V_H, V_D, V_I, H, K_B, Q, K_O`, then per
    /// direction `K_j, K_B_j, Q_j, K_O_j, x_j, p_B_j, p_O_j`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "t,K,V_H,V_D,V_I,H,K_B,Q,K_O")?;
        for j in 1..=2 {
            write!(w, ",K_{j},K_B_{j},Q_{j},K_O_{j},x_{j},p_B_{j},p_O_{j}")?;
        }
        writeln!(w)?;
        let (k, kb, q, ko) = (self.kinetic(), self.bohm(), self.quantum(), self.osmotic());
        for i in 0..self.times.len() {
            write!(
                w,
                "{:.6},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                k[i],
                self.trap[i],
                self.disorder[i],
                self.interaction[i],
                self.total[i],
                kb[i],
                q[i],
                ko[i]
            )?;
            for d in &self.directions {
                write!(
                    w,
                    ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    d.kinetic[i], d.bohm[i], d.quantum[i], d.osmotic[i], d.position[i], d.p_bohm[i], d.p_osmotic[i]
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn relative_gap(a: &[f64], b: &[f64], k: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(k)
        .map(|((a, b), k)| (a - b).abs() / k.abs().max(f64::MIN_POSITIVE))
        .collect()
}

/// Per-direction moments at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirectionMoments {
    pub kinetic: f64,
    pub bohm: f64,
    pub quantum: f64,
    pub osmotic: f64,
    pub position: f64,
    pub position_sqr: f64,
    pub p_bohm: f64,
    pub p_osmotic: f64,
    /// Density weight of nodes below the mask floor.
    pub masked_weight: f64,
}

/// Density-weighted integrals of the local kinetic fields along one axis.
///
/// With `a = Ψ*∂Ψ` and `b = Ψ*∂²Ψ` the integrands are
/// `ρK = −ħ² Re b / 2m`, `ρK_B = ħ² (Im a)² / 2mρ`, `ρK_O = ħ² (Re a)² / 2mρ`
/// and `ρQ = ρK − ρK_B`, evaluated where `ρ ≥ 10⁻¹² max ρ`.
pub fn direction_moments(psi: &WavefunctionGrid, spectral: &Spectral, axis: usize, mass: f64) -> DirectionMoments {
    let grid = psi.grid();
    let amps = psi.amplitudes();
    let d1 = spectral.derivative(amps, axis, 1);
    let d2 = spectral.derivative(amps, axis, 2);
    let density = psi.density();
    let floor = DENSITY_FLOOR * density.iter().cloned().fold(0.0, f64::max);
    let coords = grid.coord_field(axis);
    let c = HBAR * HBAR / (2.0 * mass);

    let mut m = DirectionMoments::default();
    let mut total = 0.0;
    for i in 0..amps.len() {
        let rho = density[i];
        let a = amps[i].conj() * d1[i];
        let b = amps[i].conj() * d2[i];
        let k = -c * b.re;
        total += rho;
        m.kinetic += k;
        m.position += rho * coords[i];
        m.position_sqr += rho * coords[i] * coords[i];
        m.p_bohm += HBAR * a.im;
        m.p_osmotic -= HBAR * a.re;
        if rho < floor {
            m.masked_weight += rho;
            continue;
        }
        let kb = c * a.im * a.im / rho;
        m.bohm += kb;
        m.osmotic += c * a.re * a.re / rho;
        m.quantum += k - kb;
    }
    let dv = grid.cell_volume();
    for v in [
        &mut m.kinetic,
        &mut m.bohm,
        &mut m.quantum,
        &mut m.osmotic,
        &mut m.position,
        &mut m.position_sqr,
        &mut m.p_bohm,
        &mut m.p_osmotic,
    ] {
        *v *= dv;
    }
    m.masked_weight /= total.max(f64::MIN_POSITIVE);
    m
}

const COLUMNS_PER_DIRECTION: usize = 8;

/// Observer recording the decomposition and enforcing its invariants.
struct DecompositionObserver {
    spectral: Spectral,
    masses: [f64; 2],
    trap: Vec<f64>,
    disorder: Vec<f64>,
    interaction: Vec<f64>,
    exchange: ExchangeSign,
    initial_energy: Option<f64>,
}

impl DecompositionObserver {
    fn potential(&self, rho: &[f64], v: &[f64], dv: f64) -> f64 {
        rho.iter().zip(v).map(|(r, v)| r * v).sum::<f64>() * dv
    }
}

impl Observer for DecompositionObserver {
    fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for j in 1..=2 {
            for q in ["K", "K_B", "Q", "K_O", "x", "x2", "p_B", "p_O"] {
                names.push(format!("{q}_{j}"));
            }
        }
        names.extend(["V_H", "V_D", "V_I", "H", "exchange_residue"].map(String::from));
        names
    }

    fn observe(&mut self, psi: &WavefunctionGrid) -> Result<Vec<f64>> {
        let (m1, m2) = rayon::join(
            || direction_moments(psi, &self.spectral, 0, self.masses[0]),
            || direction_moments(psi, &self.spectral, 1, self.masses[1]),
        );
        let rho = psi.density();
        let dv = psi.grid().cell_volume();
        let v_h = self.potential(&rho, &self.trap, dv);
        let v_d = self.potential(&rho, &self.disorder, dv);
        let v_i = self.potential(&rho, &self.interaction, dv);
        let h = m1.kinetic + m2.kinetic + v_h + v_d + v_i;
        let residue = exchange_residue(psi, self.exchange);
        let t = psi.time;

        for (j, m) in [m1, m2].iter().enumerate() {
            if m.masked_weight > MASK_WEIGHT_LIMIT {
                return Err(Error::MaskWeight {
                    weight: m.masked_weight,
                    limit: MASK_WEIGHT_LIMIT,
                });
            }
            let tol = SPLIT_TOLERANCE * m.kinetic.abs().max(1.0);
            let via_q = m.bohm + m.quantum - m.kinetic;
            let via_o = m.bohm + m.osmotic - m.kinetic;
            if via_q.abs() > tol || via_o.abs() > tol {
                return Err(Error::InvariantViolation(format!(
                    "t = {t}, direction {}: K = {:.16e}, K_B = {:.16e}, Q = {:.16e}, K_O = {:.16e}; \
                     K_B + Q − K = {via_q:e}, K_B + K_O − K = {via_o:e}",
                    j + 1,
                    m.kinetic,
                    m.bohm,
                    m.quantum,
                    m.osmotic
                )));
            }
        }
        let h0 = *self.initial_energy.get_or_insert(h);
        let drift = (h - h0).abs() / h0.abs().max(f64::MIN_POSITIVE);
        if drift > ENERGY_DRIFT_LIMIT {
            return Err(Error::InvariantViolation(format!(
                "t = {t}: ⟨H⟩ = {h:.12e} drifted by {drift:e} from {h0:.12e}"
            )));
        }
        if residue > EXCHANGE_TOLERANCE {
            return Err(Error::InvariantViolation(format!(
                "t = {t}: exchange residue {residue:e}"
            )));
        }

        let mut row = Vec::with_capacity(2 * COLUMNS_PER_DIRECTION + 5);
        for m in [m1, m2] {
            row.extend([
                m.kinetic,
                m.bohm,
                m.quantum,
                m.osmotic,
                m.position,
                m.position_sqr,
                m.p_bohm,
                m.p_osmotic,
            ]);
        }
        row.extend([v_h, v_d, v_i, h, residue]);
        Ok(row)
    }
}

/// Evolves the scenario over its horizon and records the decomposition.
///
/// Aborts on a boundary leak, on a masked weight above the limit, and when a
/// splitting identity, `⟨H⟩` conservation or exchange symmetry fails.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<EnergyDecomposition> {
    let setup = cfg.build()?;
    let evo = EvolutionConfig::new(setup.total.clone(), cfg.dt, cfg.n_steps()).with_stride(cfg.stride);
    evo.validate()?;
    let mut obs = DecompositionObserver {
        spectral: Spectral::new(setup.psi.grid()),
        masses: [evo.masses[0], evo.masses[1]],
        trap: setup.trap.values().to_vec(),
        disorder: setup.disorder.values().to_vec(),
        interaction: setup.interaction.values().to_vec(),
        exchange: cfg.exchange,
        initial_energy: None,
    };
    let (_, series) = evolve(&setup.psi, &evo, &mut [&mut obs])?;

    let mut out = EnergyDecomposition {
        times: series.times.clone(),
        ..Default::default()
    };
    for row in &series.rows {
        for (j, d) in out.directions.iter_mut().enumerate() {
            let r = &row[j * COLUMNS_PER_DIRECTION..(j + 1) * COLUMNS_PER_DIRECTION];
            d.kinetic.push(r[0]);
            d.bohm.push(r[1]);
            d.quantum.push(r[2]);
            d.osmotic.push(r[3]);
            d.position.push(r[4]);
            d.p_bohm.push(r[6]);
            d.p_osmotic.push(r[7]);
        }
        let tail = &row[2 * COLUMNS_PER_DIRECTION..];
        out.trap.push(tail[0]);
        out.disorder.push(tail[1]);
        out.interaction.push(tail[2]);
        out.total.push(tail[3]);
        out.exchange_residue.push(tail[4]);
    }
    let first = &series.rows[0];
    out.position_scale = first[5].sqrt();
    out.momentum_scale = (2.0 * ELECTRON_MASS * first[0]).sqrt();
    Ok(out)
}

/// Classification of one observable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Blind,
    Informative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyFlag {
    /// Normalized peak-to-peak variation after the transient.
    pub variation: f64,
    pub flag: Sensitivity,
}

impl FamilyFlag {
    fn new(variation: f64, theta_blind: f64) -> Self {
        let flag = if variation < theta_blind {
            Sensitivity::Blind
        } else {
            Sensitivity::Informative
        };
        Self { variation, flag }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindnessFlags {
    /// `⟨x_j⟩` over `√⟨x1²⟩₀` and `⟨p_B,j⟩` over `√⟨p1²⟩₀`.
    pub position_momentum: FamilyFlag,
    /// `⟨K⟩`, `⟨V_H⟩`, `⟨V_I⟩` over `|⟨H⟩|`.
    pub energies: FamilyFlag,
    /// `⟨K_B⟩/⟨K⟩` and `⟨Q⟩/⟨K⟩`.
    pub weak_values: FamilyFlag,
}

fn peak_to_peak(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Flags each family as blind when its normalized variation over
/// `t ≥ transient` stays below `theta_blind`.
pub fn blindness_report_with(decomp: &EnergyDecomposition, theta_blind: f64, transient: f64) -> BlindnessFlags {
    let keep: Vec<usize> = (0..decomp.times.len()).filter(|&i| decomp.times[i] >= transient).collect();
    let range = |v: &[f64]| peak_to_peak(keep.iter().map(|&i| v[i]));

    let xs = decomp.position_scale.max(f64::MIN_POSITIVE);
    let ps = decomp.momentum_scale.max(f64::MIN_POSITIVE);
    let pos_mom = decomp
        .directions
        .iter()
        .map(|d| (range(&d.position) / xs).max(range(&d.p_bohm) / ps))
        .fold(0.0, f64::max);

    let h = decomp.total.first().map_or(1.0, |h| h.abs().max(f64::MIN_POSITIVE));
    let k = decomp.kinetic();
    let energies = [range(&k), range(&decomp.trap), range(&decomp.interaction)]
        .into_iter()
        .fold(0.0, f64::max)
        / h;

    let ratio = |a: &[f64]| a.iter().zip(&k).map(|(a, k)| a / k).collect::<Vec<_>>();
    let weak = range(&ratio(&decomp.bohm())).max(range(&ratio(&decomp.quantum())));

    BlindnessFlags {
        position_momentum: FamilyFlag::new(pos_mom, theta_blind),
        energies: FamilyFlag::new(energies, theta_blind),
        weak_values: FamilyFlag::new(weak, theta_blind),
    }
}

pub fn blindness_report(decomp: &EnergyDecomposition, theta_blind: f64) -> BlindnessFlags {
    blindness_report_with(decomp, theta_blind, DEFAULT_TRANSIENT)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalizationReport {
    pub t_eq: Option<f64>,
    /// Same criterion with `⟨K_O⟩` in place of `⟨Q⟩`.
    pub t_eq_osmotic: Option<f64>,
    pub theta: f64,
    pub window: f64,
    pub times: Vec<f64>,
    pub gap: Vec<f64>,
    /// Time averages of `⟨K_B⟩/⟨K⟩` and `⟨Q⟩/⟨K⟩` over `[t_eq, end]`.
    pub equipartition: Option<(f64, f64)>,
    pub blindness: Option<BlindnessFlags>,
}

impl ThermalizationReport {
    /// Plain `key: value` summary.
    pub fn summary(&self) -> String {
        let opt = |t: Option<f64>| t.map_or("none".to_string(), |t| format!("{t:.4}"));
        let mut s = format!(
            "theta: {}\nwindow: {}\nt_eq: {}\nt_eq_osmotic: {}\n",
            self.theta,
            self.window,
            opt(self.t_eq),
            opt(self.t_eq_osmotic)
        );
        if let Some((kb, q)) = self.equipartition {
            s += &format!("mean K_B/K after t_eq: {kb:.4}\nmean Q/K after t_eq: {q:.4}\n");
        }
        if let Some(b) = &self.blindness {
            for (name, f) in [
                ("position_momentum", b.position_momentum),
                ("energies", b.energies),
                ("weak_values", b.weak_values),
            ] {
                s += &format!("{name}: {:?} (variation {:.4e})\n", f.flag, f.variation);
            }
        }
        s
    }

    pub fn write_gap_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,g")?;
        for (t, g) in self.times.iter().zip(&self.gap) {
            writeln!(w, "{t:.6},{g:.16e}")?;
        }
        Ok(())
    }
}

/// Earliest sample `t` with `gap(t′) < θ` for every sample `t′ ∈ [t, t + W]`.
/// Candidates whose window runs past the last sample are not accepted.
pub fn first_settled_time(times: &[f64], gap: &[f64], theta: f64, window: f64) -> Result<Option<f64>> {
    if times.len() != gap.len() {
        return Err(Error::InvalidParameter("time and gap series differ in length".into()));
    }
    if !(window > 0.0) || !(theta > 0.0) {
        return Err(Error::InvalidParameter("θ and W must be positive".into()));
    }
    let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
        return Err(Error::InsufficientHorizon("empty series".into()));
    };
    let eps = 1e-9 * window;
    if t_end - t0 + eps < 2.0 * window {
        return Err(Error::InsufficientHorizon(format!(
            "series spans {} but the window {window} needs at least {}",
            t_end - t0,
            2.0 * window
        )));
    }
    // Index of the next sample at or above the threshold, scanning backwards.
    let mut next_bad = times.len();
    let mut found = None;
    for i in (0..times.len()).rev() {
        if !(gap[i] < theta) {
            next_bad = i;
            continue;
        }
        if times[i] + window > t_end + eps {
            continue;
        }
        if next_bad == times.len() || times[next_bad] > times[i] + window + eps {
            found = Some(times[i]);
        }
    }
    Ok(found)
}

/// Applies the equipartition criterion and attaches the blindness flags.
pub fn detect_teq(decomp: &EnergyDecomposition, theta: f64, window: f64) -> Result<ThermalizationReport> {
    let gap = decomp.gap();
    let t_eq = first_settled_time(&decomp.times, &gap, theta, window)?;
    let t_eq_osmotic = first_settled_time(&decomp.times, &decomp.osmotic_gap(), theta, window)?;
    let equipartition = t_eq.map(|t| {
        let k = decomp.kinetic();
        let (kb, q) = (decomp.bohm(), decomp.quantum());
        let idx: Vec<usize> = (0..decomp.times.len()).filter(|&i| decomp.times[i] >= t).collect();
        let n = idx.len() as f64;
        (
            idx.iter().map(|&i| kb[i] / k[i]).sum::<f64>() / n,
            idx.iter().map(|&i| q[i] / k[i]).sum::<f64>() / n,
        )
    });
    Ok(ThermalizationReport {
        t_eq,
        t_eq_osmotic,
        theta,
        window,
        times: decomp.times.clone(),
        gap,
        equipartition,
        blindness: Some(blindness_report(decomp, DEFAULT_THETA_BLIND)),
    })
}

/// [`detect_teq`] with `θ = 0.1` and `W` a fifth of the recorded span.
pub fn detect_teq_default(decomp: &EnergyDecomposition) -> Result<ThermalizationReport> {
    let span = match (decomp.times.first(), decomp.times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    detect_teq(decomp, DEFAULT_THETA, DEFAULT_WINDOW_FRACTION * span)
}
