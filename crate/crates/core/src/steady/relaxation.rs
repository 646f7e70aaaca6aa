//! Time integration of the master equation toward its steady state.
//!
//! The secular dissipator commutes with the free evolution, so in the
//! interaction picture ρ̇ = 𝓓[ρ] and the coherent part drops out. That keeps
//! the problem real and non-stiff.

use crate::eigen::{build_hamiltonian, numeric_diagonalization, Mat8};
use crate::error::{Error, Result};
use crate::model::{Device, DeviceParams, Terminal};

use super::gibbs_populations;
use super::liouvillian::{dissipator, numeric_channels};

#[derive(Clone, Copy, Debug)]
pub struct RelaxationOptions {
    /// Initial horizon; doubled as needed up to 1e3/γ_min.
    pub t_max: f64,
    /// Stop once ‖ρ̇‖_max falls below this times the largest transition rate.
    pub residual_tol: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            t_max: 1e5,
            residual_tol: 1e-12,
            rtol: 1e-10,
            atol: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationResult {
    pub time: f64,
    /// Eigenbasis populations at the endpoint.
    pub populations: [f64; 8],
    pub currents: [f64; 3],
    /// ‖ρ̇‖_max at the endpoint.
    pub residual: f64,
    pub steps: usize,
    /// Largest |Tr ρ(t) − Tr ρ(0)| seen along the trajectory.
    pub trace_drift: f64,
}

/// Gibbs state of H_S at temperature T in the product basis.
pub fn gibbs_state(params: &DeviceParams, temperature: f64) -> Result<Mat8> {
    let eig = numeric_diagonalization(&build_hamiltonian(params))?;
    let levels: [f64; 8] = std::array::from_fn(|k| eig.values[k]);
    let p = gibbs_populations(&levels, temperature);
    let d = Mat8::from_diagonal(&nalgebra::SVector::from(p));
    Ok(eig.vectors * d * eig.vectors.transpose())
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates from `initial` (a density matrix in the product basis) until
/// the state stops moving.
pub fn relaxation_oracle(
    device: &Device,
    initial: &Mat8,
    options: RelaxationOptions,
) -> Result<RelaxationResult> {
    let (levels, channels) = numeric_channels(device)?;
    let eig = numeric_diagonalization(&build_hamiltonian(&device.params))?;
    let w = &eig.vectors;
    let mut rho = w.transpose() * initial * w;
    let rhs = |r: &Mat8| dissipator(&channels, None, r);

    let gamma_min = device
        .baths
        .iter()
        .filter(|b| b.is_attached())
        .map(|b| b.gamma)
        .fold(f64::INFINITY, f64::min);
    if !gamma_min.is_finite() {
        return Err(Error::SingularSteadyState { closed_classes: 8 });
    }
    let cap = 1e3 / gamma_min;
    let mut horizon = options.t_max.min(cap);
    let max_rate = channels
        .iter()
        .map(|c| c.emission.max(c.absorption))
        .fold(0.0, f64::max);

    let trace0 = rho.trace();
    let mut trace_drift = 0.0_f64;
    let mut t = 0.0;
    let mut h = 0.01 / max_rate.max(1e-300);
    let mut steps = 0;
    let mut k0 = rhs(&rho);
    let mut residual = k0.amax();
    let stop = options.residual_tol * max_rate;
    while residual >= stop {
        if t >= horizon {
            if horizon >= cap {
                return Err(Error::NoConvergence { time: t, residual });
            }
            horizon = (horizon * 2.0).min(cap);
        }
        let h_step = h.min(horizon - t);
        let mut k = [Mat8::zeros(); 7];
        k[0] = k0;
        for s in 1..7 {
            let mut y = rho;
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    y += kj * (h_step * A[s][j]);
                }
            }
            k[s] = rhs(&y);
        }
        let mut y5 = rho;
        let mut err = Mat8::zeros();
        for s in 0..7 {
            y5 += k[s] * (h_step * B5[s]);
            err += k[s] * (h_step * (B5[s] - B4[s]));
        }
        let mut norm = 0.0_f64;
        for (e, (a, b)) in err.iter().zip(rho.iter().zip(y5.iter())) {
            let sc = options.atol + options.rtol * a.abs().max(b.abs());
            norm = norm.max(e.abs() / sc);
        }
        if norm <= 1.0 {
            t += h_step;
            rho = y5;
            // first-same-as-last: stage 7 is ρ̇ at the new point
            k0 = k[6];
            residual = k0.amax();
            steps += 1;
            trace_drift = trace_drift.max((rho.trace() - trace0).abs());
        }
        let factor = if norm == 0.0 {
            5.0
        } else {
            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = h_step * factor;
    }

    let currents = Terminal::ALL.map(|b| {
        let d = dissipator(&channels, Some(b), &rho);
        (0..8).map(|k| levels[k] * d[(k, k)]).sum::<f64>()
    });
    Ok(RelaxationResult {
        time: t,
        populations: std::array::from_fn(|k| rho[(k, k)]),
        currents,
        residual,
        steps,
        trace_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, BathSpec, Spectrum};
    use crate::steady::evaluate;

    fn fig2() -> Device {
        let t = [0.2, 0.1, 0.02];
        let baths = Terminal::ALL.map(|x| BathSpec::new(x, t[x.index()], 1e-4, Spectrum::Flat));
        validate_params(DeviceParams::resonant(0.9, 1.0, 0.01), baths).unwrap()
    }

    #[test]
    fn gibbs_state_is_a_density_matrix() {
        let r = gibbs_state(&fig2().params, 0.2).unwrap();
        assert!((r.trace() - 1.0).abs() < 1e-14);
        assert!((r - r.transpose()).amax() < 1e-15);
    }

    #[test]
    fn starting_at_the_fixed_point_stops_immediately() {
        let d = fig2();
        let e = evaluate(&d).unwrap();
        let eig = numeric_diagonalization(&build_hamiltonian(&d.params)).unwrap();
        let p = Mat8::from_diagonal(&nalgebra::SVector::from(e.state.populations));
        let start = eig.vectors * p * eig.vectors.transpose();
        let r = relaxation_oracle(&d, &start, RelaxationOptions::default()).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.time, 0.0);
    }

    #[test]
    fn relaxes_from_hot_gibbs_state() {
        let d = fig2();
        let start = gibbs_state(&d.params, 0.2).unwrap();
        let r = relaxation_oracle(&d, &start, RelaxationOptions::default()).unwrap();
        let e = evaluate(&d).unwrap();
        for k in 0..8 {
            assert!((r.populations[k] - e.state.populations[k]).abs() <= 1e-6);
        }
        assert!(r.trace_drift <= 1e-10);
        assert!(r.residual < 1e-12);
    }
}
