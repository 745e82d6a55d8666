//! Subcommand execution. Every run writes its artifacts into one output
//! directory and returns a short human-readable summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;
use wvsim::grid::{expectation, make_gaussian_packet, snapshot, Observable};
use wvsim::model::{harmonic, symmetrized_product, PotentialField};
use wvsim::propagator::{evolve, observer, EvolutionConfig, Observer};
use wvsim::protocol::{conditional_average_with, make_ancilla, run_protocol, weak_value_bins};
use wvsim::thermal::{blindness_report, detect_teq, run_scenario};
use wvsim::weakfield::{bohmian_fields, generalized_weak_value, local_momentum, reconstruct_wavefunction, OperatorTag};
use wvsim::{checks, manybody, Error, Result, SpatialGrid, WavefunctionGrid};

use crate::config::{default_window, PotentialKind, RunConfig, StateSpec, Subcommand};

pub struct Outcome {
    pub summary: String,
    pub files: Vec<String>,
    /// False when `validate` found a failing check.
    pub passed: bool,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn build_state(spec: &StateSpec) -> Result<WavefunctionGrid> {
    let grid = SpatialGrid::line(spec.grid_points, spec.x_min, spec.x_max)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
    for p in &spec.packets {
        let packet = make_gaussian_packet(&grid, p.x0, p.p0, p.sigma)?;
        let w = Complex64::new(p.weight[0], p.weight[1]);
        for (a, z) in amps.iter_mut().zip(packet.amplitudes()) {
            *a += w * z;
        }
    }
    WavefunctionGrid::new(grid, amps, 0.0)?.normalized()
}

pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(dir)?;
    let mut out = Out {
        dir,
        files: Vec::new(),
    };
    let sub = cfg.subcommand.expect("resolved config names its subcommand");
    let seed = cfg.master_seed;
    let (summary, passed) = match sub {
        Subcommand::Evolve => (evolve_cmd(cfg, &mut out)?, true),
        Subcommand::Weakfield => (weakfield_cmd(cfg, &mut out)?, true),
        Subcommand::Protocol => (protocol_cmd(cfg, &mut out)?, true),
        Subcommand::Manybody => (manybody_cmd(cfg, &mut out)?, true),
        Subcommand::Thermalize => (thermalize_cmd(cfg, &mut out)?, true),
        Subcommand::Tomography => (tomography_cmd(cfg, &mut out)?, true),
        Subcommand::Validate => validate_cmd(&mut out)?,
    };

    let text = crate::config::emit_config(cfg).map_err(|e| Error::InvalidParameter(e.0))?;
    std::fs::write(out.path("config.toml"), text)?;
    out.files.push("config.toml".into());
    let mut files = out.files.clone();
    files.sort();
    out.json(
        "manifest.json",
        &json!({
            "program": "wvsim",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": sub.to_string(),
            "master_seed": seed,
            "files": files,
        }),
    )?;
    Ok(Outcome {
        summary,
        files: out.files,
        passed,
    })
}

fn evolve_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.evolve.as_ref().expect("resolved");
    let psi = build_state(&s.state)?;
    let potential = match s.potential {
        PotentialKind::Free => PotentialField::zero(psi.grid()),
        PotentialKind::Harmonic => harmonic(psi.grid(), s.omega, 0.0)?,
    };
    let ev = EvolutionConfig::new(potential, s.dt, s.steps).with_stride(s.stride);
    let v = ev.potential.values().to_vec();
    let masses = ev.masses.clone();
    let mut norm = observer("norm", |p: &WavefunctionGrid| Ok(p.norm_sqr()));
    let mut energy = observer("energy", |p: &WavefunctionGrid| {
        expectation(
            p,
            Observable::Hamiltonian {
                potential: &v,
                masses: &masses,
            },
        )
    });
    let mut x = observer("x", |p: &WavefunctionGrid| expectation(p, Observable::Position(0)));
    let mut pm = observer("p", |p: &WavefunctionGrid| expectation(p, Observable::Momentum(0)));
    let mut obs: [&mut dyn Observer; 4] = [&mut norm, &mut energy, &mut x, &mut pm];
    let (last, series) = evolve(&psi, &ev, &mut obs)?;

    let mut w = out.create("diagnostics.csv")?;
    series.write_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("final.wvsnap")?;
    snapshot::write_complex(&mut w, last.grid(), last.time, last.amplitudes())?;
    w.flush()?;

    let e = series.column("energy").unwrap_or_default();
    let n = series.column("norm").unwrap_or_default();
    let drift = |c: &[f64]| c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max);
    Ok(format!(
        "evolved to t = {:.4}\nmax |Δnorm|: {:.3e}\nmax |ΔE|/|E0|: {:.3e}",
        last.time,
        drift(&n),
        drift(&e) / e[0].abs().max(f64::MIN_POSITIVE)
    ))
}

fn weakfield_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.weakfield.as_ref().expect("resolved");
    let psi = build_state(&s.state)?;
    let ev = EvolutionConfig::new(PotentialField::zero(psi.grid()), s.dt, 0);
    let op = OperatorTag::parse(&s.operator)?;
    let basis = s.basis.parse()?;
    let field = generalized_weak_value(&psi, op, basis, s.tau, &ev)?;
    let mut w = out.create("weak_value.csv")?;
    field.write_csv(&mut w)?;
    w.flush()?;

    let b = bohmian_fields(&psi, 0, ev.masses[0])?;
    let rho = psi.density();
    let mut w = out.create("bohmian.csv")?;
    writeln!(w, "x,density,p_b,p_o,q,k_b,k_o,valid")?;
    for i in 0..rho.len() {
        writeln!(
            w,
            "{:.12e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            psi.grid().coord(0, i),
            rho[i],
            b.p_b[i],
            b.p_o[i],
            b.q[i],
            b.k_b[i],
            b.k_o[i],
            u8::from(b.mask[i])
        )?;
    }
    w.flush()?;
    let valid = field.unmasked().count();
    Ok(format!(
        "operator: {}\nbasis: {}\ntau: {}\nvalid points: {valid} of {}",
        op.label(),
        s.basis,
        s.tau,
        psi.grid().len()
    ))
}

fn protocol_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.protocol.as_ref().expect("resolved");
    let seed = cfg.master_seed.expect("resolved");
    let psi = build_state(&s.state)?;
    let pointer = SpatialGrid::line(s.pointer_points, s.pointer_min, s.pointer_max)?;
    let ancilla = make_ancilla(s.pointer_sigma, s.gamma, s.duration, &pointer)?;
    let ev = EvolutionConfig::new(PotentialField::zero(psi.grid()), s.dt, 0);
    let record = run_protocol(&psi, &ancilla, s.tau, &ev, s.repetitions, seed, s.readout)?;
    let est = conditional_average_with(&record, s.bin_width, s.min_count)?;
    let defined = est.estimates.iter().filter(|e| e.is_some()).count();
    if defined == 0 {
        return Err(Error::InsufficientStatistics(format!(
            "no bin reached {} counts out of {} repetitions",
            s.min_count, s.repetitions
        )));
    }
    let formal = weak_value_bins(&psi, s.tau, &ev, s.readout, &est.layout)?;

    let mut w = out.create("record.csv")?;
    record.write_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("estimate.csv")?;
    est.write_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("comparison.csv")?;
    writeln!(w, "bin_center,estimate,stderr,weak_value,z")?;
    let mut within = 0;
    for b in 0..est.centers.len() {
        if let (Some(e), Some(se), Some(f)) = (est.estimates[b], est.std_errors[b], formal[b]) {
            let z = (e - f) / se;
            if z.abs() <= 2.0 {
                within += 1;
            }
            writeln!(w, "{:.12e},{e:.16e},{se:.16e},{f:.16e},{z:.6}", est.centers[b])?;
        }
    }
    w.flush()?;
    Ok(format!(
        "repetitions: {}\ncoupling gamma*T: {}\nsupport ratio: {:.3e}\ndefined bins: {defined}\nbins within 2 SE of the weak value: {within}",
        record.len(),
        record.coupling,
        record.support_ratio
    ))
}

fn manybody_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.manybody.as_ref().expect("resolved");
    let grid = SpatialGrid::line(s.grid_points, s.x_min, s.x_max)?;
    let a = make_gaussian_packet(&grid, s.packet_a.x0, s.packet_a.p0, s.packet_a.sigma)?;
    let b = make_gaussian_packet(&grid, s.packet_b.x0, s.packet_b.p0, s.packet_b.sigma)?;
    let psi = symmetrized_product(&a, &b, s.exchange)?;
    let reduced = manybody::indistinguishable_weak_value(&psi)?;
    let mut w = out.create("reduced.csv")?;
    reduced.write_csv(&mut w)?;
    w.flush()?;
    let r = manybody::expectation_recovery_check(&psi)?;
    out.json(
        "recovery.json",
        &json!({
            "mean_momentum": r.mean_momentum,
            "recovered_re": r.recovered.re,
            "recovered_im": r.recovered.im,
            "abs_error": r.abs_error,
            "rel_error": r.rel_error,
            "symmetry_residue": reduced.symmetry_residue,
        }),
    )?;
    Ok(format!(
        "mean momentum: {:.12}\nrecovered: {:.12} + {:.3e}i\nabs error: {:.3e}",
        r.mean_momentum, r.recovered.re, r.recovered.im, r.abs_error
    ))
}

fn thermalize_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.thermalize.as_ref().expect("resolved");
    let runs = s.runs.as_ref().expect("resolved");
    let theta = s.theta.expect("resolved");
    let theta_blind = s.theta_blind.expect("resolved");
    let results: Vec<_> = runs
        .par_iter()
        .map(|run| {
            log::info!("running scenario {}", run.scenario);
            let decomp = run_scenario(run)?;
            let window = s.window.unwrap_or_else(|| default_window(run));
            let mut report = detect_teq(&decomp, theta, window)?;
            report.blindness = Some(blindness_report(&decomp, theta_blind));
            Ok((run, decomp, report))
        })
        .collect::<Result<_>>()?;

    let mut summary = String::new();
    for (i, (run, decomp, report)) in results.iter().enumerate() {
        let tag = if runs.iter().filter(|r| r.scenario == run.scenario).count() > 1 {
            format!("{}_{i}", run.scenario.label())
        } else {
            run.scenario.label().to_string()
        };
        let mut w = out.create(&format!("thermal_{tag}.csv"))?;
        decomp.write_csv(&mut w)?;
        w.flush()?;
        let mut w = out.create(&format!("gap_{tag}.csv"))?;
        report.write_gap_csv(&mut w)?;
        w.flush()?;
        let text = format!(
            "scenario: {}\nenergy drift: {:.3e}\n{}",
            run.scenario,
            decomp.energy_drift(),
            report.summary()
        );
        std::fs::write(out.path(&format!("report_{tag}.txt")), &text)?;
        out.files.push(format!("report_{tag}.txt"));
        summary += &text;
        summary.push('\n');
    }
    Ok(summary.trim_end().to_string())
}

fn tomography_cmd(cfg: &RunConfig, out: &mut Out) -> Result<String> {
    let s = cfg.tomography.as_ref().expect("resolved");
    let truth = match &s.snapshot {
        Some(path) => {
            let snap = snapshot::read(&mut std::io::BufReader::new(File::open(path)?))?;
            match snap.payload {
                snapshot::Payload::Complex(a) => WavefunctionGrid::new(snap.grid, a, snap.time)?.normalized()?,
                snapshot::Payload::Real(_) => {
                    return Err(Error::Format("tomography needs a complex snapshot".into()))
                }
            }
        }
        None => build_state(&s.state)?,
    };
    let p_b = local_momentum(&truth, 0)?.real();
    let rho = truth.density();
    let rec = reconstruct_wavefunction(&p_b, &rho, truth.grid())?;
    let fidelity = rec.fidelity(&truth)?;
    let mut w = out.create("reconstruction.csv")?;
    writeln!(w, "x,re,im,density")?;
    for (i, z) in rec.psi.amplitudes().iter().enumerate() {
        writeln!(w, "{:.12e},{:.16e},{:.16e},{:.16e}", truth.grid().coord(0, i), z.re, z.im, rho[i])?;
    }
    w.flush()?;
    out.json(
        "tomography.json",
        &json!({
            "fidelity": fidelity,
            "components": rec.components,
            "warnings": rec.warnings,
        }),
    )?;
    Ok(format!("fidelity: {fidelity:.12}\ncomponents: {}", rec.components))
}

fn validate_cmd(out: &mut Out) -> Result<(String, bool)> {
    let report = checks::run_all();
    let value = serde_json::to_value(&report).map_err(std::io::Error::from)?;
    out.json("validate.json", &value)?;
    let mut s = String::new();
    for o in &report.outcomes {
        s += &format!(
            "{} {}::{} {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.module,
            o.name,
            o.detail
        );
    }
    s += &format!("{} passed, {} failed", report.passed(), report.failed());
    Ok((s, report.all_passed()))
}
