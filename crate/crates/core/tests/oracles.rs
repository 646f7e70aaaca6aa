use triqubit::functions::{rectification, RectifierMode};
use triqubit::steady::{currents, gibbs_state, liouvillian_oracle, relaxation_oracle, RelaxationOptions};
use triqubit::validate::{oracle_agreement, random_devices, validate_device};
use triqubit::{evaluate, validate_params, BathSpec, Device, DeviceParams, Spectrum, Terminal};

fn device(wl: f64, g: f64, t: [f64; 3], spectrum: Spectrum) -> Device {
    let baths = Terminal::ALL.map(|x| BathSpec::new(x, t[x.index()], 1e-4, spectrum));
    validate_params(DeviceParams::resonant(wl, 1.0, g), baths).unwrap()
}

#[test]
fn relaxation_reaches_the_rate_steady_state() {
    for d in [
        device(0.9, 0.01, [0.2, 0.1, 0.02], Spectrum::Flat),
        device(0.6, 0.32, [0.45, 0.2, 0.4], Spectrum::Ohmic),
    ] {
        let start = gibbs_state(&d.params, d.bath(Terminal::L).temperature).unwrap();
        let r = relaxation_oracle(&d, &start, RelaxationOptions::default()).unwrap();
        let e = evaluate(&d).unwrap();
        for k in 0..8 {
            assert!((r.populations[k] - e.state.populations[k]).abs() <= 1e-6);
        }
        let scale = e.currents.max_abs();
        for i in 0..3 {
            assert!((r.currents[i] - e.currents.q[i]).abs() <= 1e-8 * scale, "{:?} vs {:?}", r.currents, e.currents.q);
        }
        assert!(r.trace_drift <= 1e-10);
    }
}

#[test]
fn liouvillian_matches_on_random_draws() {
    for d in random_devices(11, 20) {
        let (dp, dq, coh) = oracle_agreement(&d).unwrap();
        assert!(dp <= 1e-8 && dq <= 1e-8 && coh <= 1e-10, "{d:?}: {dp} {dq} {coh}");
    }
}

#[test]
fn two_terminal_rectification_matches_liouvillian() {
    let base = device(0.9, 0.08, [0.25, 0.25, 0.25], Spectrum::Flat);
    let r = rectification(&base, 0.3, 0.25, RectifierMode::TwoTerminal).unwrap();
    let mut two = base;
    two.bath_mut(Terminal::L).gamma = 0.0;
    let q = |tr: f64, tm: f64| {
        let d = two.with_temperature(Terminal::R, tr).unwrap().with_temperature(Terminal::M, tm).unwrap();
        liouvillian_oracle(&d).unwrap().currents.q
    };
    let fore = q(0.4, 0.1);
    let back = q(0.1, 0.4);
    assert!((fore[2] - r.q_fore).abs() <= 1e-8 * r.q_fore.abs());
    assert!((-back[2] - r.q_back).abs() <= 1e-8 * r.q_fore.abs());
    // only two baths exchange heat
    assert!((fore[1] + fore[2]).abs() <= 1e-12 * fore[2].abs());
    let c = currents(&two.with_temperature(Terminal::R, 0.4).unwrap().with_temperature(Terminal::M, 0.1).unwrap()).unwrap();
    assert_eq!(c.q[0], 0.0);
}

#[test]
fn full_suite_passes_for_fig2() {
    let d = device(0.9, 0.01, [0.2, 0.1, 0.02], Spectrum::Flat);
    let r = validate_device(&d, 0, 3);
    for c in &r.checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    assert!(r.all_passed());
}
