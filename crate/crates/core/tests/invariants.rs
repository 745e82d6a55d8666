use num_complex::Complex64;
use proptest::prelude::*;
use wvsim::grid::{expectation, inner_product, make_gaussian_packet, to_momentum};
use wvsim::model::{exchange_residue, harmonic, symmetrized_product, ExchangeSign, PotentialField};
use wvsim::propagator::{step, EvolutionConfig};
use wvsim::protocol::{default_pointer_grid, default_superposition, make_ancilla, run_protocol, Readout};
use wvsim::thermal::first_settled_time;
use wvsim::weakfield::{
    bohmian_fields, density_average, formal_weak_value, kinetic_weak_value, local_momentum, reconstruct_wavefunction,
    OperatorTag,
};
use wvsim::{SpatialGrid, WavefunctionGrid};

fn line() -> SpatialGrid {
    SpatialGrid::line(256, -16.0, 16.0).unwrap()
}

/// Two packets with independent centres, momenta and a complex relative weight.
fn pair(x1: f64, x2: f64, p1: f64, p2: f64, sigma: f64, w: (f64, f64)) -> WavefunctionGrid {
    let g = line();
    let a = make_gaussian_packet(&g, x1, p1, sigma).unwrap();
    let b = make_gaussian_packet(&g, x2, p2, sigma).unwrap();
    let w = Complex64::from_polar(w.0, w.1);
    let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + w * y).collect();
    WavefunctionGrid::new(g, amps, 0.0).unwrap().normalized().unwrap()
}

prop_compose! {
    fn smooth_pair()(
        x1 in -4.0..0.0f64,
        x2 in 0.0..4.0f64,
        p1 in -2.0..2.0f64,
        p2 in -2.0..2.0f64,
        sigma in 0.8..1.4f64,
        r in 0.2..1.0f64,
        phase in 0.0..std::f64::consts::TAU,
    ) -> WavefunctionGrid {
        pair(x1, x2, p1, p2, sigma, (r, phase))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_holds(psi in smooth_pair()) {
        let m = to_momentum(psi.grid(), psi.amplitudes()).unwrap();
        let pnorm: f64 = m.density().iter().sum::<f64>() * m.dp;
        prop_assert!((pnorm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_expectations_integrate_to_expectations(psi in smooth_pair()) {
        let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.01, 1);
        for op in [OperatorTag::Momentum(0), OperatorTag::Kinetic(0), OperatorTag::Position(0)] {
            let avg = density_average(&formal_weak_value(&psi, op, 0.0, &cfg).unwrap(), &psi).unwrap();
            let exact = expectation(&psi, op.observable(&cfg).unwrap()).unwrap();
            prop_assert!((avg.re - exact).abs() < 1e-8, "{:?}: {} vs {}", op, avg.re, exact);
            prop_assert!(avg.im.abs() < 1e-8);
        }
    }

    #[test]
    fn kinetic_field_splits_pointwise(psi in smooth_pair()) {
        let f = bohmian_fields(&psi, 0, 1.0).unwrap();
        let k = kinetic_weak_value(&psi, 0, 1.0).unwrap();
        for i in 0..f.mask.len() {
            if f.mask[i] {
                prop_assert!((k.values[i].re - f.k_b[i] - f.q[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn weak_values_ignore_global_phase(psi in smooth_pair(), theta in 0.0..std::f64::consts::TAU, tau in 0.0..0.5f64) {
        let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.01, 1);
        let rot = psi.with_amplitudes(psi.amplitudes().iter().map(|z| z * Complex64::from_polar(1.0, theta)).collect()).unwrap();
        let a = formal_weak_value(&psi, OperatorTag::Momentum(0), tau, &cfg).unwrap();
        let b = formal_weak_value(&rot, OperatorTag::Momentum(0), tau, &cfg).unwrap();
        prop_assert_eq!(&a.mask, &b.mask);
        let peak = psi.density().iter().cloned().fold(0.0, f64::max);
        let rho = psi.density();
        for i in 0..a.values.len() {
            if a.mask[i] && rho[i] > 1e-6 * peak {
                prop_assert!((a.values[i] - b.values[i]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn single_packets_reconstruct(x0 in -3.0..3.0f64, p0 in -2.0..2.0f64, sigma in 0.6..1.6f64) {
        let psi = make_gaussian_packet(&line(), x0, p0, sigma).unwrap();
        let p_b = local_momentum(&psi, 0).unwrap().real();
        let rec = reconstruct_wavefunction(&p_b, &psi.density(), psi.grid()).unwrap();
        prop_assert!(rec.fidelity(&psi).unwrap() > 0.999_999);
    }

    #[test]
    fn strang_steps_are_unitary(psi in smooth_pair(), dt in 0.001..0.05f64) {
        let cfg = EvolutionConfig::new(harmonic(psi.grid(), 0.5, 0.0).unwrap(), dt, 1);
        let out = step(&psi, &cfg).unwrap();
        prop_assert!((inner_product(&out, &out).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrized_products_have_exchange_symmetry(x1 in -3.0..0.0f64, x2 in 0.5..3.0f64, p in -1.0..1.0f64) {
        let g = SpatialGrid::line(64, -8.0, 8.0).unwrap();
        let a = make_gaussian_packet(&g, x1, p, 1.0).unwrap();
        let b = make_gaussian_packet(&g, x2, -p, 1.0).unwrap();
        for sign in [ExchangeSign::Symmetric, ExchangeSign::Antisymmetric] {
            let psi = symmetrized_product(&a, &b, sign).unwrap();
            prop_assert!(exchange_residue(&psi, sign) < 1e-12);
            prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn settled_time_means_a_quiet_window(
        gap in proptest::collection::vec(0.0..0.2f64, 40..120),
        theta in 0.05..0.15f64,
        window in 0.5..2.0f64,
    ) {
        let times: Vec<f64> = (0..gap.len()).map(|i| i as f64 * 0.1).collect();
        let span = times.last().unwrap() - times[0];
        let found = first_settled_time(&times, &gap, theta, window);
        if span < 2.0 * window {
            prop_assert!(found.is_err());
            return Ok(());
        }
        let found = found.unwrap();
        let quiet = |t: f64| {
            t + window <= span + 1e-9
                && times.iter().zip(&gap).all(|(s, g)| *s < t - 1e-9 || *s > t + window + 1e-9 || *g < theta)
        };
        match found {
            Some(t) => {
                prop_assert!(quiet(t));
                prop_assert!(times.iter().filter(|&&s| s < t - 1e-9).all(|&s| !quiet(s)));
            }
            None => prop_assert!(times.iter().all(|&s| !quiet(s))),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn protocol_records_extend_by_prefix(seed in any::<u64>()) {
        let psi = default_superposition().unwrap();
        let cfg = EvolutionConfig::new(PotentialField::zero(psi.grid()), 0.005, 1);
        let a = make_ancilla(1.0, 0.05, 1.0, &default_pointer_grid().unwrap()).unwrap();
        let short = run_protocol(&psi, &a, 0.5, &cfg, 300, seed, Readout::Position).unwrap();
        let long = run_protocol(&psi, &a, 0.5, &cfg, 600, seed, Readout::Position).unwrap();
        prop_assert_eq!(&short.repetitions[..], &long.repetitions[..300]);
    }
}
