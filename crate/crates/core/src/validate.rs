//! Cross-checks between the closed-form fast path and the independent
//! numeric oracles, plus seeded random draws of valid devices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eigen::{
    analytic_eigensystem, build_channels, build_hamiltonian, max_column_deviation_up_to_sign,
    numeric_diagonalization, pauli_x, Mat8,
};
use crate::error::Result;
use crate::model::{secular_report, validate_params, BathSpec, Device, DeviceParams, Spectrum, Terminal};
use crate::steady::{evaluate, gibbs_state, liouvillian_oracle, relaxation_oracle, RelaxationOptions};

pub const EIGENVALUE_TOL: f64 = 1e-10;
pub const EIGENVECTOR_TOL: f64 = 1e-8;
pub const COMMUTATOR_TOL: f64 = 1e-12;
pub const ORACLE_POPULATION_TOL: f64 = 1e-8;
pub const ORACLE_CURRENT_TOL: f64 = 1e-8;
pub const RELAXATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Warnings are reported but never fail the suite.
    pub warning: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.warning)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            warning: false,
            detail,
        });
    }

    fn push_result(&mut self, name: &str, r: Result<(bool, String)>) {
        match r {
            Ok((passed, detail)) => self.push(name, passed, detail),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

/// A valid device with parameters drawn from ranges where the secular
/// approximation holds: ω_R = 1, ω_L ∈ [0.52, 0.95], g ∈ [0.005, 0.3],
/// T ∈ [0.02, 1], γ ∈ [1e-5, 1e-3] on a log scale, Flat or Ohmic.
pub fn random_device<R: Rng>(rng: &mut R) -> Device {
    let omega_l = rng.gen_range(0.52..0.95);
    let g = rng.gen_range(0.005..0.3);
    let baths = Terminal::ALL.map(|t| {
        let temperature = rng.gen_range(0.02..1.0);
        let gamma = 10f64.powf(rng.gen_range(-5.0..-3.0));
        let spectrum = if rng.gen_bool(0.5) {
            Spectrum::Flat
        } else {
            Spectrum::Ohmic
        };
        BathSpec::new(t, temperature, gamma, spectrum)
    });
    validate_params(DeviceParams::resonant(omega_l, 1.0, g), baths).expect("sampled inside the valid region")
}

/// `n` devices from a ChaCha stream seeded with `seed`.
pub fn random_devices(seed: u64, n: usize) -> Vec<Device> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_device(&mut rng)).collect()
}

/// Largest eigenvalue and eigenvector deviations between closed form and
/// numeric diagonalization.
pub fn eigensystem_deviation(params: &DeviceParams) -> Result<(f64, f64)> {
    let a = analytic_eigensystem(params);
    let n = numeric_diagonalization(&build_hamiltonian(params))?;
    let values = (0..8)
        .map(|k| (a.levels[k] - n.values[k]).abs())
        .fold(0.0, f64::max);
    Ok((values, max_column_deviation_up_to_sign(&a.vectors, &n.vectors)))
}

/// max over channels of ‖[H_S, V] + ωV‖_max, and of the σ_x reconstruction
/// error Σ_l (V + V†) − σ_x, both in the product basis.
pub fn channel_residuals(params: &DeviceParams) -> Result<(f64, f64)> {
    let h = build_hamiltonian(params);
    let u = analytic_eigensystem(params).vectors;
    let channels = build_channels(params)?;
    let mut commutator = 0.0_f64;
    let mut sums = [Mat8::zeros(); 3];
    for c in &channels {
        let v = u * c.operator() * u.transpose();
        commutator = commutator.max((h * v - v * h + v * c.frequency).amax());
        sums[c.bath.index()] += v + v.transpose();
    }
    let reconstruction = Terminal::ALL
        .iter()
        .map(|&t| (sums[t.index()] - pauli_x(t)).amax())
        .fold(0.0, f64::max);
    Ok((commutator, reconstruction))
}

/// Largest population difference and relative current difference between
/// the rate path and the full generator, plus the oracle's coherence.
pub fn oracle_agreement(device: &Device) -> Result<(f64, f64, f64)> {
    let fast = evaluate(device)?;
    let slow = liouvillian_oracle(device)?;
    let dp = (0..8)
        .map(|k| (fast.state.populations[k] - slow.state.populations[k]).abs())
        .fold(0.0, f64::max);
    let scale = fast.currents.max_abs();
    let dq = (0..3)
        .map(|i| (fast.currents.q[i] - slow.currents.q[i]).abs())
        .fold(0.0, f64::max);
    let rel = if scale == 0.0 { dq } else { dq / scale };
    Ok((dp, rel, slow.max_coherence))
}

fn laws(device: &Device) -> Result<(bool, String)> {
    let c = evaluate(device)?.currents;
    let sum = c.sum();
    let ok = sum.abs() <= 1e-12 * c.max_abs().max(c.noise_floor) && c.entropy_production >= -1e-12;
    Ok((
        ok,
        format!("sum Q = {sum:.3e}, entropy production = {:.3e}", c.entropy_production),
    ))
}

fn device_checks(report: &mut ValidationReport, prefix: &str, device: &Device) {
    let p = &device.params;
    report.push_result(
        &format!("{prefix}eigensystem"),
        eigensystem_deviation(p).map(|(dv, dw)| {
            (
                dv <= EIGENVALUE_TOL * p.omega_r && dw <= EIGENVECTOR_TOL,
                format!("values {dv:.2e}, vectors {dw:.2e}"),
            )
        }),
    );
    report.push_result(
        &format!("{prefix}channels"),
        channel_residuals(p).map(|(c, r)| {
            (
                c <= COMMUTATOR_TOL * p.omega_r && r <= 1e-10,
                format!("commutator {c:.2e}, sigma_x reconstruction {r:.2e}"),
            )
        }),
    );
    report.push_result(
        &format!("{prefix}liouvillian"),
        oracle_agreement(device).map(|(dp, dq, coh)| {
            (
                dp <= ORACLE_POPULATION_TOL && dq <= ORACLE_CURRENT_TOL && coh <= 1e-10,
                format!("populations {dp:.2e}, currents {dq:.2e} rel, coherence {coh:.2e}"),
            )
        }),
    );
    report.push_result(&format!("{prefix}laws"), laws(device));
}

/// The full suite: every check on `device`, relaxation from Gibbs(T_L), and
/// `draws` random devices from `seed`.
pub fn validate_device(device: &Device, seed: u64, draws: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let secular = secular_report(device);
    report.checks.push(Check {
        name: "secular".into(),
        passed: secular.valid,
        warning: !secular.valid,
        detail: format!(
            "max gamma / min gap = {:.3e} (threshold {})",
            secular.ratio,
            crate::model::SECULAR_THRESHOLD
        ),
    });
    device_checks(&mut report, "", device);

    let relax = || -> Result<(bool, String)> {
        let start = gibbs_state(&device.params, device.bath(Terminal::L).temperature)?;
        let r = relaxation_oracle(device, &start, RelaxationOptions::default())?;
        let fast = evaluate(device)?;
        let dp = (0..8)
            .map(|k| (r.populations[k] - fast.state.populations[k]).abs())
            .fold(0.0, f64::max);
        Ok((
            dp <= RELAXATION_TOL && r.trace_drift <= 1e-10,
            format!(
                "t = {:.3e}, {} steps, populations {dp:.2e}, trace drift {:.2e}",
                r.time, r.steps, r.trace_drift
            ),
        ))
    };
    report.push_result("relaxation", relax());

    for (i, d) in random_devices(seed, draws).iter().enumerate() {
        device_checks(&mut report, &format!("random[{i}] "), d);
    }
    report
}
