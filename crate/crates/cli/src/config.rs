//! Run configuration: a TOML document with one optional section per
//! subcommand. Missing keys take the documented defaults; unknown keys are
//! rejected.

use std::fmt;

use serde::{Deserialize, Serialize};
use wvsim::model::ExchangeSign;
use wvsim::protocol::Readout;
use wvsim::thermal::{ScenarioConfig, ScenarioId, DEFAULT_THETA, DEFAULT_THETA_BLIND, DEFAULT_WINDOW_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Evolve,
    Weakfield,
    Protocol,
    Manybody,
    Thermalize,
    Tomography,
    Validate,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subcommand::Evolve => "evolve",
            Subcommand::Weakfield => "weakfield",
            Subcommand::Protocol => "protocol",
            Subcommand::Manybody => "manybody",
            Subcommand::Thermalize => "thermalize",
            Subcommand::Tomography => "tomography",
            Subcommand::Validate => "validate",
        };
        f.write_str(s)
    }
}

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand on the command line when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weakfield: Option<WeakfieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manybody: Option<ManybodySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermalize: Option<ThermalizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    /// Complex weight `[re, im]`.
    #[serde(default = "unit_weight")]
    pub weight: [f64; 2],
}

fn unit_weight() -> [f64; 2] {
    [1.0, 0.0]
}

/// A 1-D superposition of Gaussian packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSpec {
    pub grid_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub packets: Vec<PacketSpec>,
}

impl Default for StateSpec {
    /// The two-packet superposition used throughout the protocol examples.
    fn default() -> Self {
        Self {
            grid_points: 256,
            x_min: -12.8,
            x_max: 12.8,
            packets: vec![
                PacketSpec {
                    x0: -1.5,
                    p0: 1.0,
                    sigma: 0.7,
                    weight: [1.0, 0.0],
                },
                PacketSpec {
                    x0: 1.5,
                    p0: -1.0,
                    sigma: 0.7,
                    weight: [0.7, 0.0],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub state: StateSpec,
    pub potential: PotentialKind,
    pub omega: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            state: StateSpec {
                grid_points: 512,
                x_min: -20.0,
                x_max: 20.0,
                packets: vec![PacketSpec {
                    x0: -2.0,
                    p0: 1.0,
                    sigma: 1.0,
                    weight: [1.0, 0.0],
                }],
            },
            potential: PotentialKind::Harmonic,
            omega: 1.0,
            dt: 0.001,
            steps: 10_000,
            stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakfieldSection {
    pub state: StateSpec,
    /// Operator label: `momentum`, `kinetic`, `position`, `potential`, `hamiltonian`.
    pub operator: String,
    /// `position` or `momentum`.
    pub basis: String,
    pub tau: f64,
    pub dt: f64,
}

impl Default for WeakfieldSection {
    fn default() -> Self {
        Self {
            state: StateSpec::default(),
            operator: "momentum".into(),
            basis: "position".into(),
            tau: 0.5,
            dt: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub state: StateSpec,
    pub pointer_points: usize,
    pub pointer_min: f64,
    pub pointer_max: f64,
    pub pointer_sigma: f64,
    pub gamma: f64,
    pub duration: f64,
    pub tau: f64,
    pub dt: f64,
    pub repetitions: usize,
    pub readout: Readout,
    pub bin_width: f64,
    pub min_count: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            state: StateSpec::default(),
            pointer_points: 512,
            pointer_min: -12.8,
            pointer_max: 12.8,
            pointer_sigma: 1.0,
            gamma: 0.05,
            duration: 1.0,
            tau: 0.5,
            dt: 0.005,
            repetitions: 10_000,
            readout: Readout::Position,
            bin_width: 0.2,
            min_count: wvsim::protocol::DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManybodySection {
    pub grid_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub packet_a: PacketSpec,
    pub packet_b: PacketSpec,
    pub exchange: ExchangeSign,
}

impl Default for ManybodySection {
    fn default() -> Self {
        Self {
            grid_points: 128,
            x_min: -10.0,
            x_max: 10.0,
            packet_a: PacketSpec {
                x0: -2.0,
                p0: 1.0,
                sigma: 0.8,
                weight: [1.0, 0.0],
            },
            packet_b: PacketSpec {
                x0: 2.0,
                p0: -0.5,
                sigma: 0.8,
                weight: [1.0, 0.0],
            },
            exchange: ExchangeSign::Symmetric,
        }
    }
}

/// Overrides applied on top of the scenario templates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub x0: Option<[f64; 2]>,
    pub p0: Option<[f64; 2]>,
    pub sigma: Option<f64>,
    pub omega: Option<f64>,
    pub disorder_seed: Option<u64>,
    pub speckle_count: Option<usize>,
    pub disorder_amplitude: Option<f64>,
    pub correlation_length: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub grid_points: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalizeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<ScenarioId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<ScenarioOverrides>,
    /// Fully specified runs; when present the fields above must be absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<Vec<ScenarioConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Equipartition window; defaults to a fifth of each run's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_blind: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    pub state: StateSpec,
    /// Complex snapshot to reconstruct instead of `state`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            state: StateSpec::default(),
            snapshot: None,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parses a TOML document. Syntax errors and unknown keys are reported with
/// the offending key and position.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
}

pub fn emit_config(cfg: &RunConfig) -> Result<String, ConfigError> {
    toml::to_string(cfg).map_err(|e| ConfigError(e.to_string()))
}

impl RunConfig {
    /// Fills every default for `sub`, applies command-line overrides and
    /// checks the result. All violations are reported together.
    pub fn resolve(mut self, sub: Subcommand, seed: Option<u64>, out: Option<String>) -> Result<Self, ConfigError> {
        let mut problems = Vec::new();
        if let Some(s) = self.subcommand {
            if s != sub {
                problems.push(format!("config is for `{s}` but `{sub}` was requested"));
            }
        }
        self.subcommand = Some(sub);
        if seed.is_some() {
            self.master_seed = seed;
        }
        if out.is_some() {
            self.output = out;
        }
        match sub {
            Subcommand::Evolve => {
                let s = self.evolve.get_or_insert_with(Default::default);
                check_state(&s.state, "evolve.state", &mut problems);
                positive(s.dt, "evolve.dt", &mut problems);
                if s.stride == 0 {
                    problems.push("evolve.stride must be >= 1".into());
                }
            }
            Subcommand::Weakfield => {
                let s = self.weakfield.get_or_insert_with(Default::default);
                check_state(&s.state, "weakfield.state", &mut problems);
                positive(s.dt, "weakfield.dt", &mut problems);
                if let Err(e) = wvsim::weakfield::OperatorTag::parse(&s.operator) {
                    problems.push(format!("weakfield.operator: {e}"));
                }
                if let Err(e) = s.basis.parse::<wvsim::weakfield::Basis>() {
                    problems.push(format!("weakfield.basis: {e}"));
                }
            }
            Subcommand::Protocol => {
                self.master_seed.get_or_insert(DEFAULT_SEED);
                let s = self.protocol.get_or_insert_with(Default::default);
                check_state(&s.state, "protocol.state", &mut problems);
                positive(s.dt, "protocol.dt", &mut problems);
                positive(s.bin_width, "protocol.bin_width", &mut problems);
                if s.repetitions == 0 {
                    problems.push("protocol.repetitions must be >= 1".into());
                }
            }
            Subcommand::Manybody => {
                let s = self.manybody.get_or_insert_with(Default::default);
                if !s.grid_points.is_power_of_two() {
                    problems.push("manybody.grid_points must be a power of two".into());
                }
            }
            Subcommand::Thermalize => {
                let seed = self.master_seed;
                let s = self.thermalize.get_or_insert_with(Default::default);
                resolve_thermal(s, seed, &mut problems);
            }
            Subcommand::Tomography => {
                let s = self.tomography.get_or_insert_with(Default::default);
                if s.snapshot.is_none() {
                    check_state(&s.state, "tomography.state", &mut problems);
                }
            }
            Subcommand::Validate => {}
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError(problems.join("; ")))
        }
    }
}

fn positive(v: f64, key: &str, problems: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("{key} must be positive, got {v}"));
    }
}

fn check_state(s: &StateSpec, key: &str, problems: &mut Vec<String>) {
    if !s.grid_points.is_power_of_two() || s.grid_points < 2 {
        problems.push(format!("{key}.grid_points must be a power of two"));
    }
    if !(s.x_max > s.x_min) {
        problems.push(format!("{key}: x_max must exceed x_min"));
    }
    if s.packets.is_empty() {
        problems.push(format!("{key}.packets must not be empty"));
    }
}

fn resolve_thermal(s: &mut ThermalizeSection, seed: Option<u64>, problems: &mut Vec<String>) {
    if s.runs.is_some() {
        if s.scenario.is_some() || s.scenarios.is_some() || s.overrides.is_some() {
            problems.push("thermalize.runs excludes scenario, scenarios and overrides".into());
        }
    } else {
        let ids = match (s.scenario.take(), s.scenarios.take()) {
            (Some(_), Some(_)) => {
                problems.push("give thermalize.scenario or thermalize.scenarios, not both".into());
                return;
            }
            (Some(id), None) => vec![id],
            (None, Some(ids)) => ids,
            (None, None) => ScenarioId::ALL.to_vec(),
        };
        let ov = s.overrides.take().unwrap_or_default();
        let runs = ids
            .into_iter()
            .map(|id| {
                let mut c = ScenarioConfig::template(id);
                if let Some(seed) = seed {
                    c.disorder.seed = seed;
                }
                apply_overrides(&mut c, &ov);
                c
            })
            .collect();
        s.runs = Some(runs);
    }
    s.theta.get_or_insert(DEFAULT_THETA);
    s.theta_blind.get_or_insert(DEFAULT_THETA_BLIND);
    for (i, r) in s.runs.iter().flatten().enumerate() {
        if let Err(e) = r.validate() {
            problems.push(format!("thermalize.runs[{i}]: {e}"));
        }
        if let Some(w) = s.window {
            if 2.0 * w > r.horizon {
                problems.push(format!("thermalize.window {w} needs a horizon of at least {}", 2.0 * w));
            }
        }
    }
    if let Some(w) = s.window {
        positive(w, "thermalize.window", problems);
    }
}

/// Default window for a run: a fifth of its horizon.
pub fn default_window(run: &ScenarioConfig) -> f64 {
    DEFAULT_WINDOW_FRACTION * run.horizon
}

fn apply_overrides(c: &mut ScenarioConfig, o: &ScenarioOverrides) {
    macro_rules! set {
        ($($field:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = o.$field { $target = v; })*
        };
    }
    set! {
        x0 => c.x0,
        p0 => c.p0,
        sigma => c.sigma,
        omega => c.omega,
        disorder_seed => c.disorder.seed,
        speckle_count => c.disorder.speckle_count,
        disorder_amplitude => c.disorder.amplitude,
        correlation_length => c.disorder.correlation_length,
        lambda => c.lambda,
        alpha => c.alpha,
        grid_points => c.grid_points,
        x_min => c.x_min,
        x_max => c.x_max,
        dt => c.dt,
        horizon => c.horizon,
        stride => c.stride,
    }
}
