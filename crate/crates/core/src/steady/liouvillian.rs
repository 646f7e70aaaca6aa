//! Full master-equation generator as a real 64×64 superoperator.
//!
//! Hermitian ρ = X + iY is stored as the 36 entries X_ij (i ≤ j) followed by
//! the 28 entries Y_ij (i < j). Everything here works in the numerically
//! computed eigenbasis, and the jump operators are rebuilt from σ_x by
//! grouping matrix elements by Bohr frequency, so no part of the closed-form
//! channel table is reused.

use nalgebra::DMatrix;

use crate::dd::Dd;
use crate::eigen::{build_hamiltonian, numeric_diagonalization, pauli_x, Mat8, Vec8};
use crate::error::{Error, Result};
use crate::model::{damping_rate, thermal_occupation, Device, Terminal};

use super::{entropy_production, HeatCurrents, SteadyState};

/// Two Bohr frequencies closer than this are treated as one channel.
const FREQUENCY_MERGE_TOL: f64 = 1e-9;
/// σ_x matrix elements below this are numerical noise.
const ELEMENT_TOL: f64 = 1e-13;
/// Largest steady-state coherence accepted in the eigenbasis.
pub const MAX_COHERENCE: f64 = 1e-10;

/// One jump operator in the numeric eigenbasis with its two rates.
#[derive(Clone, Debug)]
pub(crate) struct NumericChannel {
    pub bath: Terminal,
    pub op: Mat8,
    /// γ(ω)(n + 1)
    pub emission: f64,
    /// γ(ω)n
    pub absorption: f64,
}

/// Numeric levels (ascending) and jump operators for all attached baths.
pub(crate) fn numeric_channels(device: &Device) -> Result<(Vec8, Vec<NumericChannel>)> {
    let h = build_hamiltonian(&device.params);
    let eig = numeric_diagonalization(&h)?;
    let w = &eig.vectors;
    let mut channels = Vec::new();
    for terminal in Terminal::ALL {
        let bath = device.bath(terminal);
        if !bath.is_attached() {
            continue;
        }
        let s = w.transpose() * pauli_x(terminal) * w;
        let mut groups: Vec<(f64, Mat8)> = Vec::new();
        for u in 0..8 {
            for d in 0..8 {
                let omega = eig.values[u] - eig.values[d];
                if omega <= FREQUENCY_MERGE_TOL || s[(d, u)].abs() <= ELEMENT_TOL {
                    continue;
                }
                match groups
                    .iter_mut()
                    .find(|(f, _)| (f - omega).abs() <= FREQUENCY_MERGE_TOL)
                {
                    Some((_, op)) => op[(d, u)] = s[(d, u)],
                    None => {
                        let mut op = Mat8::zeros();
                        op[(d, u)] = s[(d, u)];
                        groups.push((omega, op));
                    }
                }
            }
        }
        for (omega, op) in groups {
            let gamma = damping_rate(bath, omega);
            let n = thermal_occupation(omega, bath.temperature)?;
            channels.push(NumericChannel {
                bath: terminal,
                op,
                emission: gamma * (n + 1.0),
                absorption: gamma * n,
            });
        }
    }
    Ok((eig.values, channels))
}

/// Dissipator of a single bath, J(−ω)D[V] + J(ω)D[V†], acting on a real matrix.
pub(crate) fn dissipator(channels: &[NumericChannel], bath: Option<Terminal>, rho: &Mat8) -> Mat8 {
    let mut out = Mat8::zeros();
    for c in channels {
        if bath.is_some_and(|b| b != c.bath) {
            continue;
        }
        let v = &c.op;
        let vt = v.transpose();
        let down = vt * v;
        let up = v * vt;
        out += (v * rho * vt - (down * rho + rho * down) * 0.5) * c.emission;
        out += (vt * rho * v - (up * rho + rho * up) * 0.5) * c.absorption;
    }
    out
}

fn coordinates() -> Vec<(usize, usize, bool)> {
    let mut idx = Vec::with_capacity(64);
    for i in 0..8 {
        for j in i..8 {
            idx.push((i, j, false));
        }
    }
    for i in 0..8 {
        for j in i + 1..8 {
            idx.push((i, j, true));
        }
    }
    idx
}

fn commutator_with_diagonal(levels: &Vec8, m: &Mat8) -> Mat8 {
    Mat8::from_fn(|i, j| (levels[i] - levels[j]) * m[(i, j)])
}

/// The master-equation generator on the 64 real coordinates.
fn superoperator(levels: &Vec8, channels: &[NumericChannel]) -> DMatrix<f64> {
    let idx = coordinates();
    let mut l = DMatrix::zeros(64, 64);
    for (col, &(i, j, imaginary)) in idx.iter().enumerate() {
        let mut x = Mat8::zeros();
        let mut y = Mat8::zeros();
        if imaginary {
            y[(i, j)] = 1.0;
            y[(j, i)] = -1.0;
        } else {
            x[(i, j)] = 1.0;
            x[(j, i)] = 1.0;
        }
        // −i[H, X + iY] = [H, Y] − i[H, X]
        let xdot = commutator_with_diagonal(levels, &y) + dissipator(channels, None, &x);
        let ydot = -commutator_with_diagonal(levels, &x) + dissipator(channels, None, &y);
        for (row, &(a, b, im)) in idx.iter().enumerate() {
            l[(row, col)] = if im { ydot[(a, b)] } else { xdot[(a, b)] };
        }
    }
    l
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub state: SteadyState,
    pub currents: HeatCurrents,
    /// Largest |ρ_ij|, i ≠ j, in the eigenbasis.
    pub max_coherence: f64,
    /// Number of numerically zero singular values of the generator.
    pub nullity: usize,
}

/// Steady state from the null space of the full generator, with currents
/// Q_µ = Tr(H_S 𝓛_µ[ρ]).
pub fn liouvillian_oracle(device: &Device) -> Result<OracleSolution> {
    let (levels, channels) = numeric_channels(device)?;
    let l = superoperator(&levels, &channels);

    let scale = l.amax();
    if scale == 0.0 {
        return Err(Error::SingularSteadyState { closed_classes: 64 });
    }
    let sv = l.singular_values();
    let rate_floor = channels
        .iter()
        .map(|c| c.emission.max(c.absorption))
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let cutoff = 1e-9 * rate_floor.min(scale);
    let nullity = sv.iter().filter(|&&s| s <= cutoff).count();
    if nullity != 1 {
        return Err(Error::SingularSteadyState {
            closed_classes: nullity,
        });
    }

    let idx = coordinates();
    let mut a = l.clone() / scale;
    for (col, &(i, j, im)) in idx.iter().enumerate() {
        a[(0, col)] = if !im && i == j { 1.0 } else { 0.0 };
    }
    let mut rhs = nalgebra::DVector::zeros(64);
    rhs[0] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalInstability("generator LU solve failed".into()))?;

    let mut x = Mat8::zeros();
    let mut y = Mat8::zeros();
    for (k, &(i, j, im)) in idx.iter().enumerate() {
        if im {
            y[(i, j)] = sol[k];
            y[(j, i)] = -sol[k];
        } else {
            x[(i, j)] = sol[k];
            x[(j, i)] = sol[k];
        }
    }
    let mut max_coherence = 0.0_f64;
    for i in 0..8 {
        for j in 0..8 {
            if i != j {
                max_coherence = max_coherence.max(x[(i, j)].hypot(y[(i, j)]));
            }
        }
    }
    if max_coherence > MAX_COHERENCE {
        return Err(Error::NumericalInstability(format!(
            "steady-state coherence {max_coherence:e} in the eigenbasis"
        )));
    }

    let populations: [f64; 8] = std::array::from_fn(|k| x[(k, k)]);
    let residual = (&l * &sol).amax();
    let q = Terminal::ALL.map(|t| {
        let d = dissipator(&channels, Some(t), &x);
        (0..8).map(|k| levels[k] * d[(k, k)]).sum::<f64>()
    });
    let currents = HeatCurrents {
        q,
        entropy_production: entropy_production(&q, &device.baths),
        noise_floor: 0.0,
    };
    let condition = 0.0;
    Ok(OracleSolution {
        state: SteadyState {
            populations,
            residual,
            clipped: false,
            condition,
            precise: populations.map(Dd::new),
        },
        currents,
        max_coherence,
        nullity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, BathSpec, DeviceParams, Spectrum};
    use crate::steady::{evaluate, gibbs_populations};

    fn device(wl: f64, g: f64, t: [f64; 3]) -> Device {
        let baths = Terminal::ALL.map(|x| BathSpec::new(x, t[x.index()], 1e-4, Spectrum::Flat));
        validate_params(DeviceParams::resonant(wl, 1.0, g), baths).unwrap()
    }

    #[test]
    fn coordinates_cover_hermitian_matrices() {
        let idx = coordinates();
        assert_eq!(idx.len(), 64);
        assert_eq!(idx.iter().filter(|c| c.2).count(), 28);
    }

    #[test]
    fn sigma_x_splits_into_four_frequencies_per_bath() {
        let (_, ch) = numeric_channels(&device(0.9, 0.01, [0.2, 0.1, 0.02])).unwrap();
        for t in Terminal::ALL {
            assert_eq!(ch.iter().filter(|c| c.bath == t).count(), 4);
        }
    }

    #[test]
    fn equal_temperatures_give_gibbs_and_no_current() {
        let d = device(0.7, 0.1, [0.3, 0.3, 0.3]);
        let o = liouvillian_oracle(&d).unwrap();
        let (levels, _) = numeric_channels(&d).unwrap();
        let lv: [f64; 8] = std::array::from_fn(|k| levels[k]);
        let g = gibbs_populations(&lv, 0.3);
        for k in 0..8 {
            assert!((o.state.populations[k] - g[k]).abs() < 1e-12);
        }
        assert!(o.currents.max_abs() < 1e-15);
    }

    #[test]
    fn fig4a_populations_agree_with_rate_path() {
        let d = device(0.9, 0.08, [0.5, 0.3, 0.12]);
        let o = liouvillian_oracle(&d).unwrap();
        let e = evaluate(&d).unwrap();
        for k in 0..8 {
            assert!((o.state.populations[k] - e.state.populations[k]).abs() <= 1e-8);
        }
        assert!(o.max_coherence <= MAX_COHERENCE);
        assert_eq!(o.nullity, 1);
    }

    #[test]
    fn detached_everything_is_singular() {
        let mut d = device(0.9, 0.01, [0.2, 0.1, 0.02]);
        for b in &mut d.baths {
            b.gamma = 0.0;
        }
        assert!(matches!(
            liouvillian_oracle(&d),
            Err(Error::SingularSteadyState { .. })
        ));
    }
}
