//! Device functions built on repeated steady-state evaluations: amplifier,
//! valve, rectifier, stabilizer and switch.
//!
//! Every function takes a validated [`Device`] whose bath temperatures give
//! the fixed operating point; the scanned temperature is overwritten per
//! evaluation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Device, Terminal};
use crate::steady::{currents, HeatCurrents};
use crate::sweep::linear_grid;

/// Default finite-difference step in T_M (times ω_R).
pub const DEFAULT_STEP: f64 = 1e-4;
/// |ΔQ_M| below this (times ω_R²) leaves α undefined.
pub const DENOMINATOR_FLOOR: f64 = 1e-18;
/// Relative disagreement between the h and h/2 estimates that flags a point.
pub const RICHARDSON_TOL: f64 = 0.01;
pub const VALVE_GRID: usize = 400;
/// Valve brackets are bisected down to this width (times ω_R).
pub const VALVE_BRACKET: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AmplificationResult {
    /// Richardson-extrapolated α_L and α_R.
    pub alpha_l: f64,
    pub alpha_r: f64,
    /// dQ_M/dT_M.
    pub dq_m_dt: f64,
    pub step: f64,
    /// Plain central-difference estimates with steps h and h/2.
    pub coarse: [f64; 2],
    pub fine: [f64; 2],
    /// The two step sizes disagree by more than [`RICHARDSON_TOL`].
    pub flagged: bool,
}

fn at_temperature(device: &Device, terminal: Terminal, t: f64) -> Result<HeatCurrents> {
    currents(&device.with_temperature(terminal, t)?)
}

fn central_difference(device: &Device, t: f64, h: f64) -> Result<[f64; 3]> {
    let up = at_temperature(device, Terminal::M, t + h)?;
    let down = at_temperature(device, Terminal::M, t - h)?;
    Ok(std::array::from_fn(|i| up.q[i] - down.q[i]))
}

/// α_µ = ∂Q_µ/∂Q_M for µ ∈ {L, R}, as the ratio of central differences in
/// T_M, with one Richardson refinement.
pub fn amplification(device: &Device, step: f64) -> Result<AmplificationResult> {
    let t = device.bath(Terminal::M).temperature;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidSpec(format!("step must be positive, got {step}")));
    }
    if t <= step {
        return Err(Error::InvalidSpec(format!(
            "T_M = {t} must exceed the step {step}"
        )));
    }
    let coarse = central_difference(device, t, step)?;
    let fine = central_difference(device, t, 0.5 * step)?;
    for d in [coarse[1], fine[1]] {
        if !(d.abs() >= DENOMINATOR_FLOOR) {
            return Err(Error::DegenerateDenominator { delta_q_m: d });
        }
    }
    let ratio = |d: &[f64; 3]| [d[0] / d[1], d[2] / d[1]];
    let a_h = ratio(&coarse);
    let a_h2 = ratio(&fine);
    let extrapolate = |a: f64, b: f64| (4.0 * b - a) / 3.0;
    let alpha_l = extrapolate(a_h[0], a_h2[0]);
    let alpha_r = extrapolate(a_h[1], a_h2[1]);
    let flagged = (0..2).any(|i| {
        let scale = a_h[i].abs().max(a_h2[i].abs());
        (a_h[i] - a_h2[i]).abs() > RICHARDSON_TOL * scale
    });
    let dq_m_dt = extrapolate(coarse[1] / (2.0 * step), fine[1] / step);
    Ok(AmplificationResult {
        alpha_l,
        alpha_r,
        dq_m_dt,
        step,
        coarse: a_h,
        fine: a_h2,
        flagged,
    })
}

/// Zero of one terminal's current as a function of T_M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub terminal: Terminal,
    pub temperature: f64,
    pub bracket: f64,
    /// (T_M, Q) just below and just above the crossing.
    pub below: (f64, f64),
    pub above: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ValveReport {
    pub crossings: Vec<Crossing>,
    pub grid_points: usize,
    /// Grid points whose evaluation failed and were skipped for bracketing.
    pub failed_points: usize,
}

impl ValveReport {
    pub fn for_terminal(&self, terminal: Terminal) -> impl Iterator<Item = &Crossing> {
        self.crossings.iter().filter(move |c| c.terminal == terminal)
    }
}

fn check_range(range: (f64, f64), points: usize, max: f64) -> Result<()> {
    let (a, b) = range;
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && a < b && b <= max) {
        return Err(Error::InvalidSpec(format!(
            "temperature range {a}:{b} must satisfy 0 <= start < stop <= {max}"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidSpec("a scan needs at least 2 points".into()));
    }
    Ok(())
}

fn scan(device: &Device, terminal: Terminal, grid: &[f64]) -> Vec<Result<HeatCurrents>> {
    grid.par_iter()
        .map(|&t| at_temperature(device, terminal, t))
        .collect()
}

/// Scans T_M over `range` and bisects every sign change of each current.
pub fn valve_crossings(device: &Device, range: (f64, f64), points: usize) -> Result<ValveReport> {
    let omega_r = device.params.omega_r;
    check_range(range, points, 2.0 * omega_r)?;
    if range.0 <= 0.0 {
        return Err(Error::InvalidSpec("valve scan must start above T_M = 0".into()));
    }
    let grid = linear_grid(range.0, range.1, points);
    let evals = scan(device, Terminal::M, &grid);
    let failed_points = evals.iter().filter(|e| e.is_err()).count();

    let mut crossings = Vec::new();
    for terminal in Terminal::ALL {
        // points whose current is distinguishable from zero; sign changes
        // are bracketed between consecutive ones
        let significant: Vec<(f64, f64)> = grid
            .iter()
            .zip(&evals)
            .filter_map(|(&t, e)| {
                let c = e.as_ref().ok()?;
                let q = c.get(terminal);
                (q.abs() > c.noise_floor).then_some((t, q))
            })
            .collect();
        for w in significant.windows(2) {
            if w[0].1.signum() != w[1].1.signum() {
                crossings.push(bisect(device, terminal, w[0], w[1])?);
            }
        }
    }
    crossings.sort_by(|x, y| x.temperature.total_cmp(&y.temperature));
    Ok(ValveReport {
        crossings,
        grid_points: grid.len(),
        failed_points,
    })
}

fn bisect(device: &Device, terminal: Terminal, lo: (f64, f64), hi: (f64, f64)) -> Result<Crossing> {
    let tol = VALVE_BRACKET * device.params.omega_r;
    let (mut lo, mut hi) = (lo, hi);
    while hi.0 - lo.0 > tol {
        let mid = 0.5 * (lo.0 + hi.0);
        let c = at_temperature(device, Terminal::M, mid)?;
        let q = c.get(terminal);
        if q.abs() <= c.noise_floor {
            lo = (mid, q);
            hi = (mid, q);
            break;
        }
        if q.signum() == lo.1.signum() {
            lo = (mid, q);
        } else {
            hi = (mid, q);
        }
    }
    Ok(Crossing {
        terminal,
        temperature: 0.5 * (lo.0 + hi.0),
        bracket: hi.0 - lo.0,
        below: lo,
        above: hi,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RectifierMode {
    /// Bath L detached (γ_L = 0).
    TwoTerminal,
    ThreeTerminal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RectificationResult {
    pub r: f64,
    /// Q_R with T_R above T_M.
    pub q_fore: f64,
    /// −Q_R with the temperatures swapped.
    pub q_back: f64,
    /// T_R − T_M in the forward configuration.
    pub delta_t: f64,
    pub t_a: f64,
    /// Q_R kept its sign under the swap, so q_fore and q_back have opposite
    /// signs.
    pub same_direction: bool,
}

/// R = ||Q_fore| − |Q_back|| / (|Q_fore| + |Q_back|) for a bias of |ΔT|
/// between R and M around the mean T_A.
pub fn rectification(
    device: &Device,
    delta_t: f64,
    t_a: f64,
    mode: RectifierMode,
) -> Result<RectificationResult> {
    let d = delta_t.abs();
    if !(d.is_finite() && t_a.is_finite()) || t_a - 0.5 * d < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "T_A - |dT|/2 must be non-negative (T_A = {t_a}, dT = {delta_t})"
        )));
    }
    let mut base = *device;
    if mode == RectifierMode::TwoTerminal {
        base.bath_mut(Terminal::L).gamma = 0.0;
    }
    let hot = t_a + 0.5 * d;
    let cold = t_a - 0.5 * d;
    let eval = |tr: f64, tm: f64| -> Result<HeatCurrents> {
        let dev = base
            .with_temperature(Terminal::R, tr)?
            .with_temperature(Terminal::M, tm)?;
        currents(&dev)
    };
    let fore = eval(hot, cold)?;
    let back = eval(cold, hot)?;
    let q_fore = fore.get(Terminal::R);
    let q_back = -back.get(Terminal::R);
    let floor = fore.noise_floor.max(back.noise_floor);
    if q_fore.abs() <= floor && q_back.abs() <= floor {
        return Err(Error::BothCurrentsZero);
    }
    let (f, b) = (q_fore.abs(), q_back.abs());
    Ok(RectificationResult {
        r: (f - b).abs() / (f + b),
        q_fore,
        q_back,
        delta_t: d,
        t_a,
        same_direction: q_fore * q_back < 0.0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizerReport {
    pub terminal: Terminal,
    pub temperatures: Vec<f64>,
    pub currents: Vec<[f64; 3]>,
    /// (max − min)/max|Q| for each current; 0 for an identically zero one.
    pub flatness: [f64; 3],
    /// Largest |dQ/dT| over the grid.
    pub peak_slope: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Sensitivity of all three currents to one bath temperature.
pub fn stabilizer_sensitivity(
    device: &Device,
    terminal: Terminal,
    range: (f64, f64),
    points: usize,
) -> Result<StabilizerReport> {
    check_range(range, points, f64::MAX)?;
    let grid = linear_grid(range.0, range.1, points);
    let currents: Vec<[f64; 3]> = scan(device, terminal, &grid)
        .into_iter()
        .map(|r| r.map(|c| c.q))
        .collect::<Result<_>>()?;
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut peak_slope = [0.0_f64; 3];
    for (k, q) in currents.iter().enumerate() {
        for i in 0..3 {
            min[i] = min[i].min(q[i]);
            max[i] = max[i].max(q[i]);
            let (a, b) = match k {
                0 => (0, 1),
                _ if k == grid.len() - 1 => (k - 1, k),
                _ => (k - 1, k + 1),
            };
            let slope = (currents[b][i] - currents[a][i]) / (grid[b] - grid[a]);
            peak_slope[i] = peak_slope[i].max(slope.abs());
        }
    }
    let flatness = std::array::from_fn(|i| {
        let scale = min[i].abs().max(max[i].abs());
        if scale == 0.0 {
            0.0
        } else {
            (max[i] - min[i]) / scale
        }
    });
    Ok(StabilizerReport {
        terminal,
        temperatures: grid,
        currents,
        flatness,
        peak_slope,
        min,
        max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchReport {
    pub epsilon: f64,
    /// Largest grid T_M up to which |Q_L| and |Q_R| never exceed epsilon;
    /// 0 when the first grid point already does.
    pub threshold: f64,
    pub range: (f64, f64),
    pub points: usize,
}

pub fn switch_threshold(
    device: &Device,
    epsilon: f64,
    range: (f64, f64),
    points: usize,
) -> Result<SwitchReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    check_range(range, points, f64::MAX)?;
    let grid = linear_grid(range.0, range.1, points);
    let evals = scan(device, Terminal::M, &grid);
    let mut threshold = 0.0;
    for (t, e) in grid.iter().zip(evals) {
        let c = e?;
        if c.get(Terminal::L).abs() > epsilon || c.get(Terminal::R).abs() > epsilon {
            break;
        }
        threshold = *t;
    }
    Ok(SwitchReport {
        epsilon,
        threshold,
        range,
        points,
    })
}
