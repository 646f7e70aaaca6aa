//! Device parameters, bath descriptions and the thermal functions shared by
//! every solver.
//!
//! Units: ħ = k_B = 1 and everything is measured in units of ω_R, so
//! frequencies, temperatures and rates are plain `f64` and currents come out
//! in units of ω_R².

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eigen::bohr_frequencies;
use crate::error::{Error, Result};

/// Relative tolerance on ω_L + ω_M = ω_R for explicitly supplied triples.
pub const RESONANCE_TOL: f64 = 1e-12;
/// Two qubit frequencies closer than this (times ω_R) are degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// `SecularReport::valid` requires ratio below this.
pub const SECULAR_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terminal {
    L,
    M,
    R,
}

impl Terminal {
    pub const ALL: [Terminal; 3] = [Terminal::L, Terminal::M, Terminal::R];

    pub fn index(self) -> usize {
        match self {
            Terminal::L => 0,
            Terminal::M => 1,
            Terminal::R => 2,
        }
    }

    pub fn label(self) -> char {
        match self {
            Terminal::L => 'L',
            Terminal::M => 'M',
            Terminal::R => 'R',
        }
    }

    pub fn from_label(s: &str) -> Option<Terminal> {
        match s {
            "L" | "l" => Some(Terminal::L),
            "M" | "m" => Some(Terminal::M),
            "R" | "r" => Some(Terminal::R),
            _ => None,
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spectrum {
    /// γ(ω) = γ.
    #[default]
    Flat,
    /// γ(ω) = γ·ω.
    Ohmic,
}

impl Spectrum {
    pub fn name(self) -> &'static str {
        match self {
            Spectrum::Flat => "Flat",
            Spectrum::Ohmic => "Ohmic",
        }
    }

    pub fn from_name(s: &str) -> Option<Spectrum> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Some(Spectrum::Flat),
            "ohmic" => Some(Spectrum::Ohmic),
            _ => None,
        }
    }
}

/// Qubit transition frequencies and the trilinear coupling strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_l: f64,
    pub omega_m: f64,
    pub omega_r: f64,
    pub g: f64,
}

impl DeviceParams {
    /// Builds parameters from (ω_L, ω_R), deriving ω_M = ω_R − ω_L so the
    /// resonance condition holds by construction.
    pub fn resonant(omega_l: f64, omega_r: f64, g: f64) -> Self {
        DeviceParams {
            omega_l,
            omega_m: omega_r - omega_l,
            omega_r,
            g,
        }
    }

    /// Checks every invariant on the parameter set.
    pub fn validate(&self) -> Result<()> {
        let DeviceParams {
            omega_l,
            omega_m,
            omega_r,
            g,
        } = *self;
        for (name, v) in [
            ("omega_L", omega_l),
            ("omega_M", omega_m),
            ("omega_R", omega_r),
            ("g", g),
        ] {
            if !v.is_finite() {
                return Err(Error::OrderingViolation(format!("{name} is not finite")));
            }
        }
        if omega_r <= 0.0 {
            return Err(Error::OrderingViolation("omega_R must be positive".into()));
        }
        let tol = DEGENERACY_TOL * omega_r;
        for (first, a, second, b) in [
            ("omega_L", omega_l, "omega_M", omega_m),
            ("omega_L", omega_l, "omega_R", omega_r),
            ("omega_M", omega_m, "omega_R", omega_r),
        ] {
            if (a - b).abs() <= tol {
                return Err(Error::DegenerateQubits {
                    first,
                    second,
                    value: a,
                });
            }
        }
        let sum = omega_l + omega_m;
        if (sum - omega_r).abs() > RESONANCE_TOL * omega_r {
            return Err(Error::ResonanceViolation { sum, omega_r });
        }
        if !(omega_m > 0.0) {
            return Err(Error::OrderingViolation("omega_M must be positive".into()));
        }
        if !(omega_l > omega_m) {
            return Err(Error::OrderingViolation(
                "omega_L must exceed omega_M".into(),
            ));
        }
        if !(omega_r > omega_l) {
            return Err(Error::OrderingViolation(
                "omega_R must exceed omega_L".into(),
            ));
        }
        if !(g > 0.0) {
            return Err(Error::OrderingViolation("g must be positive".into()));
        }
        Ok(())
    }

    pub fn frequency(&self, terminal: Terminal) -> f64 {
        match terminal {
            Terminal::L => self.omega_l,
            Terminal::M => self.omega_m,
            Terminal::R => self.omega_r,
        }
    }

    /// Multiplies every energy scale by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        DeviceParams {
            omega_l: self.omega_l * s,
            omega_m: self.omega_m * s,
            omega_r: self.omega_r * s,
            g: self.g * s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub terminal: Terminal,
    pub temperature: f64,
    /// Base damping rate. Zero detaches the bath.
    pub gamma: f64,
    pub spectrum: Spectrum,
}

impl BathSpec {
    pub fn new(terminal: Terminal, temperature: f64, gamma: f64, spectrum: Spectrum) -> Self {
        BathSpec {
            terminal,
            temperature,
            gamma,
            spectrum,
        }
    }

    pub fn is_attached(&self) -> bool {
        self.gamma > 0.0
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Error::InvalidBath {
            terminal: self.terminal.label(),
            reason: reason.to_string(),
        };
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(fail("temperature must be finite and non-negative"));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(fail("gamma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A validated device: parameters plus one bath per terminal, in L, M, R order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub params: DeviceParams,
    pub baths: [BathSpec; 3],
}

impl Device {
    pub fn bath(&self, terminal: Terminal) -> &BathSpec {
        &self.baths[terminal.index()]
    }

    pub fn bath_mut(&mut self, terminal: Terminal) -> &mut BathSpec {
        &mut self.baths[terminal.index()]
    }

    /// Copy of the device with one bath temperature replaced. The result is
    /// not re-validated beyond the temperature itself.
    pub fn with_temperature(&self, terminal: Terminal, temperature: f64) -> Result<Device> {
        let mut d = *self;
        d.bath_mut(terminal).temperature = temperature;
        d.bath(terminal).validate()?;
        Ok(d)
    }

    /// Copy with every energy scale and temperature scaled by `s`, and every
    /// damping rate too. An Ohmic base rate is dimensionless (γ(ω) = γω) and
    /// stays put, so currents always scale by s².
    pub fn scaled(&self, s: f64) -> Device {
        let mut d = *self;
        d.params = self.params.scaled(s);
        for b in &mut d.baths {
            b.temperature *= s;
            if b.spectrum == Spectrum::Flat {
                b.gamma *= s;
            }
        }
        d
    }
}

/// Validates parameters and baths together and returns the configuration
/// the solvers accept.
pub fn validate_params(params: DeviceParams, baths: [BathSpec; 3]) -> Result<Device> {
    params.validate()?;
    for (bath, expected) in baths.iter().zip(Terminal::ALL) {
        if bath.terminal != expected {
            return Err(Error::InvalidBath {
                terminal: bath.terminal.label(),
                reason: format!("bath listed in slot {expected}"),
            });
        }
        bath.validate()?;
    }
    Ok(Device { params, baths })
}

/// Bose-Einstein occupation 1/(e^{ω/T} − 1).
pub fn thermal_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::NonPositiveFrequency(omega));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    // exp_m1 overflows to inf for large ω/T, which correctly yields 0.
    Ok(1.0 / (omega / temperature).exp_m1())
}

/// Frequency-dependent damping rate γ_µ(ω).
pub fn damping_rate(bath: &BathSpec, omega: f64) -> f64 {
    match bath.spectrum {
        Spectrum::Flat => bath.gamma,
        Spectrum::Ohmic => bath.gamma * omega,
    }
}

/// J(+ω) = γ(ω)n(ω) for absorption, J(−ω) = γ(ω)(n(ω)+1) for emission.
pub fn spectral_density(bath: &BathSpec, omega_signed: f64) -> Result<f64> {
    if omega_signed == 0.0 || !omega_signed.is_finite() {
        return Err(Error::NonPositiveFrequency(omega_signed));
    }
    let omega = omega_signed.abs();
    let rate = damping_rate(bath, omega);
    let n = thermal_occupation(omega, bath.temperature)?;
    Ok(if omega_signed > 0.0 {
        rate * n
    } else {
        rate * (n + 1.0)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecularReport {
    /// Smallest |ω_µl − ω_µl'| between channels of the same attached bath.
    pub min_gap: f64,
    /// Largest γ_µ(ω_µl) over attached channels.
    pub max_gamma: f64,
    pub ratio: f64,
    pub valid: bool,
}

/// Compares damping rates against Bohr-frequency separations within each bath.
pub fn secular_report(device: &Device) -> SecularReport {
    let freqs = bohr_frequencies(&device.params);
    let mut min_gap = f64::INFINITY;
    let mut max_gamma = 0.0_f64;
    for terminal in Terminal::ALL {
        let bath = device.bath(terminal);
        if !bath.is_attached() {
            continue;
        }
        let f = &freqs[terminal.index()];
        for (i, &a) in f.iter().enumerate() {
            max_gamma = max_gamma.max(damping_rate(bath, a));
            for &b in &f[i + 1..] {
                min_gap = min_gap.min((a - b).abs());
            }
        }
    }
    let ratio = if max_gamma == 0.0 {
        0.0
    } else if min_gap == 0.0 {
        f64::INFINITY
    } else {
        max_gamma / min_gap
    };
    SecularReport {
        min_gap,
        max_gamma,
        ratio,
        valid: ratio < SECULAR_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat(t: Terminal, temp: f64, gamma: f64) -> BathSpec {
        BathSpec::new(t, temp, gamma, Spectrum::Flat)
    }

    fn baths(tl: f64, tm: f64, tr: f64) -> [BathSpec; 3] {
        [
            flat(Terminal::L, tl, 1e-4),
            flat(Terminal::M, tm, 1e-4),
            flat(Terminal::R, tr, 1e-4),
        ]
    }

    #[test]
    fn fig2_params_are_valid() {
        let p = DeviceParams {
            omega_l: 0.9,
            omega_m: 0.1,
            omega_r: 1.0,
            g: 0.01,
        };
        assert!(validate_params(p, baths(0.2, 0.1, 0.02)).is_ok());
    }

    #[test]
    fn equal_frequencies_are_degenerate() {
        let p = DeviceParams {
            omega_l: 0.5,
            omega_m: 0.5,
            omega_r: 1.0,
            g: 0.1,
        };
        assert!(matches!(
            validate_params(p, baths(0.1, 0.1, 0.1)),
            Err(Error::DegenerateQubits { .. })
        ));
    }

    #[test]
    fn off_resonance_is_rejected() {
        let p = DeviceParams {
            omega_l: 0.6,
            omega_m: 0.3,
            omega_r: 1.0,
            g: 0.1,
        };
        assert!(matches!(
            validate_params(p, baths(0.1, 0.1, 0.1)),
            Err(Error::ResonanceViolation { .. })
        ));
    }

    #[test]
    fn ordering_and_sign_violations() {
        let swapped = DeviceParams::resonant(0.3, 1.0, 0.1);
        assert!(matches!(
            swapped.validate(),
            Err(Error::OrderingViolation(_))
        ));
        let no_coupling = DeviceParams::resonant(0.7, 1.0, 0.0);
        assert!(matches!(
            no_coupling.validate(),
            Err(Error::OrderingViolation(_))
        ));
    }

    #[test]
    fn resonant_constructor_satisfies_tolerance() {
        for &wl in &[0.51, 0.6, 0.7777, 0.9, 0.999] {
            assert!(DeviceParams::resonant(wl, 1.0, 0.01).validate().is_ok());
        }
    }

    #[test]
    fn bath_slots_and_ranges_checked() {
        let p = DeviceParams::resonant(0.9, 1.0, 0.01);
        let mut b = baths(0.1, 0.1, 0.1);
        b.swap(0, 2);
        assert!(matches!(validate_params(p, b), Err(Error::InvalidBath { .. })));
        let mut b = baths(0.1, 0.1, 0.1);
        b[1].temperature = -0.1;
        assert!(matches!(validate_params(p, b), Err(Error::InvalidBath { .. })));
        let mut b = baths(0.1, 0.1, 0.1);
        b[2].gamma = f64::NAN;
        assert!(matches!(validate_params(p, b), Err(Error::InvalidBath { .. })));
    }

    #[test]
    fn occupation_examples() {
        for &x in &[1e-3, 0.37, 1.0, 42.0] {
            assert_relative_eq!(
                thermal_occupation(x, x / std::f64::consts::LN_2).unwrap(),
                1.0,
                max_relative = 1e-14
            );
        }
        assert_eq!(thermal_occupation(1.0, 0.0).unwrap(), 0.0);
        // 1/(e − 1) to 20 digits: 0.58197670686932642439
        assert_relative_eq!(
            thermal_occupation(1.0, 1.0).unwrap(),
            0.581_976_706_869_326_4,
            max_relative = 1e-15
        );
        assert!(matches!(
            thermal_occupation(0.0, 1.0),
            Err(Error::NonPositiveFrequency(_))
        ));
        assert!(thermal_occupation(-1.0, 1.0).is_err());
    }

    #[test]
    fn occupation_small_ratio_has_no_cancellation() {
        // n ≈ T/ω − 1/2 for ω/T → 0.
        for &r in &[1e-6, 1e-9, 1e-12] {
            let n = thermal_occupation(r, 1.0).unwrap();
            assert_relative_eq!(n, 1.0 / r - 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn occupation_huge_ratio_underflows_to_zero() {
        assert_eq!(thermal_occupation(1.0, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn damping_rate_examples() {
        let f = flat(Terminal::L, 0.1, 1e-4);
        assert_eq!(damping_rate(&f, 0.37), 1e-4);
        let o = BathSpec::new(Terminal::L, 0.1, 1e-4, Spectrum::Ohmic);
        assert_relative_eq!(damping_rate(&o, 0.5), 5e-5, max_relative = 1e-15);
        assert_eq!(damping_rate(&flat(Terminal::M, 0.1, 0.0), 0.5), 0.0);
    }

    #[test]
    fn spectral_density_examples() {
        let cold = flat(Terminal::R, 0.0, 1e-4);
        assert_eq!(spectral_density(&cold, 0.5).unwrap(), 0.0);
        assert_eq!(spectral_density(&cold, -0.5).unwrap(), 1e-4);
        let warm = flat(Terminal::R, 0.2, 1e-4);
        let n = 1.0 / (0.5f64.exp() - 1.0);
        assert_relative_eq!(
            spectral_density(&warm, 0.1).unwrap(),
            1e-4 * n,
            max_relative = 1e-14
        );
        assert!(spectral_density(&warm, 0.0).is_err());
    }

    #[test]
    fn secular_report_flags_strong_damping() {
        let p = DeviceParams::resonant(0.9, 1.0, 0.01);
        let d = validate_params(p, baths(0.2, 0.1, 0.02)).unwrap();
        let r = secular_report(&d);
        assert!(r.valid, "{r:?}");
        assert_eq!(r.max_gamma, 1e-4);

        let mut strong = baths(0.2, 0.1, 0.02);
        for b in &mut strong {
            b.gamma = 0.1;
        }
        let r = secular_report(&validate_params(p, strong).unwrap());
        assert!(!r.valid);
        assert!(r.ratio >= SECULAR_THRESHOLD);
    }

    #[test]
    fn secular_report_ignores_detached_baths() {
        let p = DeviceParams::resonant(0.9, 1.0, 0.01);
        let mut b = baths(0.2, 0.1, 0.02);
        for bath in &mut b {
            bath.gamma = 0.0;
        }
        let r = secular_report(&validate_params(p, b).unwrap());
        assert_eq!(r.ratio, 0.0);
        assert!(r.valid);
    }
}
