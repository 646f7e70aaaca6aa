//! Population rate equations in the eigenbasis of H_S, their steady state,
//! and the heat currents drawn from each bath.
//!
//! The secular master equation leaves populations and coherences decoupled,
//! so the steady state is fully described by the eight eigenlevel
//! populations. Two independent oracles live alongside the fast path:
//! [`liouvillian_oracle`] solves the full master equation and
//! [`relaxation_oracle`] integrates it in time.

mod liouvillian;
mod relaxation;

pub use liouvillian::{liouvillian_oracle, OracleSolution};
pub use relaxation::{gibbs_state, relaxation_oracle, RelaxationOptions, RelaxationResult};

use serde::Serialize;

use crate::dd::Dd;
use crate::eigen::{analytic_eigensystem, build_channels, EigenSystem, Mat8, TransitionChannel, Vec8};
use crate::error::{Error, Result};
use crate::model::{damping_rate, thermal_occupation, BathSpec, Device, Terminal};

/// Populations more negative than this are an error rather than round-off.
pub const NEGATIVE_POPULATION_TOL: f64 = -1e-10;
pub const FIRST_LAW_TOL: f64 = 1e-12;
/// Currents below this fraction of the largest single-pair energy flux are
/// treated as zero: that is f64 round-off on the flux itself.
pub const NOISE_FLOOR: f64 = 1e-16;
pub const SECOND_LAW_TOL: f64 = 1e-12;

/// Rates for one channel: B moves population up each pair, A moves it down.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelRates {
    pub bath: Terminal,
    pub index: usize,
    pub frequency: f64,
    /// B_µl = γ_µ(ω) n(ω) sin²α.
    pub absorption: f64,
    /// A_µl = γ_µ(ω) (n(ω) + 1) sin²α = e^{ω/T} B_µl.
    pub emission: f64,
    /// (upper, lower) level pairs.
    pub pairs: [(usize, usize); 2],
}

#[derive(Clone, Debug)]
pub struct RateMatrices {
    /// M_L, M_M, M_R acting on the population vector.
    pub per_bath: [Mat8; 3],
    pub channels: Vec<ChannelRates>,
}

impl RateMatrices {
    pub fn bath(&self, terminal: Terminal) -> &Mat8 {
        &self.per_bath[terminal.index()]
    }

    pub fn total(&self) -> Mat8 {
        self.per_bath[0] + self.per_bath[1] + self.per_bath[2]
    }

    pub fn max_rate(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.emission.max(c.absorption))
            .fold(0.0, f64::max)
    }

    /// K = Σ_µ M_µ with each diagonal formed as the negated column sum, held
    /// in double-double.
    fn exact_generator(&self) -> [[Dd; 8]; 8] {
        let mut k = [[Dd::ZERO; 8]; 8];
        for c in &self.channels {
            for &(u, d) in &c.pairs {
                k[u][d] += Dd::new(c.absorption);
                k[d][u] += Dd::new(c.emission);
            }
        }
        for j in 0..8 {
            let mut s = Dd::ZERO;
            for (i, row) in k.iter().enumerate() {
                if i != j {
                    s += row[j];
                }
            }
            k[j][j] = -s;
        }
        k
    }
}

/// Assembles M_µ from the channels: each level pair (u, d) contributes the
/// 2×2 generator moving d→u at rate B and u→d at rate A.
pub fn build_rate_matrices(
    channels: &[TransitionChannel],
    baths: &[BathSpec; 3],
) -> Result<RateMatrices> {
    let mut per_bath = [Mat8::zeros(); 3];
    let mut rates = Vec::with_capacity(channels.len());
    for ch in channels {
        let bath = &baths[ch.bath.index()];
        let s2 = ch.amplitude * ch.amplitude;
        let gamma = damping_rate(bath, ch.frequency);
        let n = thermal_occupation(ch.frequency, bath.temperature)?;
        // n + 1 rather than e^{ω/T}·n: finite at T = 0 and for huge ω/T.
        let absorption = gamma * n * s2;
        let emission = gamma * (n + 1.0) * s2;
        let m = &mut per_bath[ch.bath.index()];
        for p in &ch.pairs {
            m[(p.upper, p.lower)] += absorption;
            m[(p.lower, p.upper)] += emission;
        }
        rates.push(ChannelRates {
            bath: ch.bath,
            index: ch.index,
            frequency: ch.frequency,
            absorption,
            emission,
            pairs: ch.pairs.map(|p| (p.upper, p.lower)),
        });
    }
    for m in &mut per_bath {
        for j in 0..8 {
            let off: f64 = (0..8).filter(|&i| i != j).map(|i| m[(i, j)]).sum();
            m[(j, j)] = -off;
        }
    }
    Ok(RateMatrices {
        per_bath,
        channels: rates,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    /// Eigenlevel populations p_1 … p_8.
    pub populations: [f64; 8],
    /// ‖K p‖_max.
    pub residual: f64,
    /// Some slightly negative population was clipped to zero.
    pub clipped: bool,
    /// 1-norm condition number of the row-replacement system (infinite when
    /// that system is singular).
    pub condition: f64,
    #[serde(skip)]
    pub(crate) precise: [Dd; 8],
}

impl SteadyState {
    pub fn as_vector(&self) -> Vec8 {
        Vec8::from_column_slice(&self.populations)
    }
}

/// Closed communicating classes of the transition graph. Their number is the
/// dimension of the null space of K.
fn closed_classes(k: &Mat8) -> Vec<Vec<usize>> {
    let mut reach = [[false; 8]; 8];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, r) in row.iter_mut().enumerate() {
            if i != j && k[(j, i)] > 0.0 {
                *r = true;
            }
        }
    }
    for m in 0..8 {
        for i in 0..8 {
            if reach[i][m] {
                for j in 0..8 {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..8 {
        let closed = (0..8).all(|j| !reach[i][j] || reach[j][i]);
        if closed && !classes.iter().any(|c| c.contains(&i)) {
            classes.push((0..8).filter(|&j| reach[i][j] && reach[j][i]).collect());
        }
    }
    classes
}

/// The normalized row-replacement system: K scaled by its largest entry,
/// with the first row replaced by ones. Returns its solution and the 1-norm
/// condition number.
pub fn row_replacement_solve(k: &Mat8) -> Result<([f64; 8], f64)> {
    let scale = k.amax();
    if scale == 0.0 {
        return Err(Error::SingularSteadyState { closed_classes: 8 });
    }
    let mut a = k / scale;
    a.row_mut(0).fill(1.0);
    let lu = a.lu();
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::NumericalInstability("normalized rate matrix is singular".into()))?;
    let norm1 = |m: &Mat8| {
        m.column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let condition = norm1(&a) * norm1(&inverse);
    let mut rhs = Vec8::zeros();
    rhs[0] = 1.0;
    let p = inverse * rhs;
    Ok((std::array::from_fn(|i| p[i]), condition))
}

/// Grassmann–Taksar–Heyman state reduction on one closed class. Every
/// operation is an addition of non-negative numbers, a product or a
/// quotient, so each population keeps full relative accuracy however small
/// it is.
fn state_reduction(k: &[[Dd; 8]; 8], members: &[usize]) -> Result<[Dd; 8]> {
    let m = members.len();
    // r[a][b]: rate from members[a] to members[b]
    let mut r = vec![vec![Dd::ZERO; m]; m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                r[a][b] = k[members[b]][members[a]];
            }
        }
    }
    let mut out_rate = vec![Dd::ZERO; m];
    for n in (1..m).rev() {
        let mut s = Dd::ZERO;
        for j in 0..n {
            s += r[n][j];
        }
        if !(s.hi > 0.0 && s.hi.is_finite()) {
            return Err(Error::NumericalInstability(format!(
                "state reduction pivot {} at level {}",
                s.hi, members[n]
            )));
        }
        out_rate[n] = s;
        for i in 0..n {
            if r[i][n].hi == 0.0 {
                continue;
            }
            let f = r[i][n] / s;
            for j in 0..n {
                if j != i {
                    let add = f * r[n][j];
                    r[i][j] += add;
                }
            }
        }
    }
    let mut pi = vec![Dd::ZERO; m];
    pi[0] = Dd::new(1.0);
    for n in 1..m {
        let mut acc = Dd::ZERO;
        for i in 0..n {
            acc += pi[i] * r[i][n];
        }
        pi[n] = acc / out_rate[n];
    }
    let mut total = Dd::ZERO;
    for x in &pi {
        total += *x;
    }
    let mut p = [Dd::ZERO; 8];
    for (a, &level) in members.iter().enumerate() {
        p[level] = pi[a] / total;
    }
    Ok(p)
}

/// Solves K p = 0 with Σp = 1.
///
/// The null space must be one-dimensional, which is checked on the
/// transition graph. Populations come from state reduction in double-double
/// arithmetic; the f64 row-replacement solve is kept as a diagnostic and
/// supplies the condition estimate.
pub fn solve_steady(rates: &RateMatrices) -> Result<SteadyState> {
    let k = rates.total();
    let classes = closed_classes(&k);
    if classes.len() != 1 {
        return Err(Error::SingularSteadyState {
            closed_classes: classes.len(),
        });
    }
    let condition = row_replacement_solve(&k).map_or(f64::INFINITY, |(_, c)| c);
    let mut p = state_reduction(&rates.exact_generator(), &classes[0])?;

    let mut populations = p.map(Dd::to_f64);
    let min = populations.iter().copied().fold(f64::INFINITY, f64::min);
    if !populations.iter().all(|x| x.is_finite()) || min < NEGATIVE_POPULATION_TOL {
        return Err(Error::NumericalInstability(format!(
            "steady-state population {min:e} is negative or not finite"
        )));
    }
    let clipped = min < 0.0;
    if clipped {
        for x in &mut populations {
            *x = x.max(0.0);
        }
        let s: f64 = populations.iter().sum();
        for x in &mut populations {
            *x /= s;
        }
        p = populations.map(Dd::new);
    }
    let residual = (k * Vec8::from_column_slice(&populations)).amax();
    Ok(SteadyState {
        populations,
        residual,
        clipped,
        condition,
        precise: p,
    })
}

/// Heat currents; positive means the system absorbs heat from that bath.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeatCurrents {
    pub q: [f64; 3],
    /// −Σ_µ Q_µ/T_µ over attached baths.
    pub entropy_production: f64,
    /// Scale below which a current is indistinguishable from round-off.
    pub noise_floor: f64,
}

impl HeatCurrents {
    pub fn get(&self, terminal: Terminal) -> f64 {
        self.q[terminal.index()]
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Q_µ = ⟨λ|M_µ|p⟩, evaluated pair by pair as Σ (λ_u − λ_d)(B p_d − A p_u)
/// in double-double so that Σ_µ Q_µ telescopes to the steady-state residual.
pub fn heat_currents(
    rates: &RateMatrices,
    state: &SteadyState,
    eig: &EigenSystem,
    baths: &[BathSpec; 3],
) -> Result<HeatCurrents> {
    let p = &state.precise;
    let mut q = [Dd::ZERO; 3];
    let mut gross = 0.0_f64;
    for c in &rates.channels {
        for &(u, d) in &c.pairs {
            let omega = Dd::new(eig.levels[u]) - Dd::new(eig.levels[d]);
            let up = p[d].mul_f64(c.absorption);
            let down = p[u].mul_f64(c.emission);
            gross = gross.max(omega.hi.abs() * up.hi.abs().max(down.hi.abs()));
            q[c.bath.index()] += omega * (up - down);
        }
    }
    let q = q.map(Dd::to_f64);
    let noise_floor = NOISE_FLOOR * gross;
    let currents = HeatCurrents {
        q,
        entropy_production: entropy_production(&q, baths),
        noise_floor,
    };

    let sum = currents.sum();
    let scale = currents.max_abs().max(noise_floor).max(1e-300);
    if sum.abs() > FIRST_LAW_TOL * scale {
        return Err(Error::FirstLawViolation { sum, scale });
    }
    if currents.entropy_production < -SECOND_LAW_TOL {
        return Err(Error::SecondLawViolation {
            entropy_production: currents.entropy_production,
        });
    }
    Ok(currents)
}

pub(crate) fn entropy_production(q: &[f64; 3], baths: &[BathSpec; 3]) -> f64 {
    let mut sigma = 0.0;
    for (qi, bath) in q.iter().zip(baths) {
        if !bath.is_attached() {
            continue;
        }
        if bath.temperature == 0.0 {
            if *qi < 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        sigma -= qi / bath.temperature;
    }
    sigma
}

/// Gibbs populations e^{−λ_k/T}/Z over the given levels.
pub fn gibbs_populations(levels: &[f64; 8], temperature: f64) -> [f64; 8] {
    if temperature == 0.0 {
        let mut p = [0.0; 8];
        let ground = (0..8)
            .min_by(|&a, &b| levels[a].total_cmp(&levels[b]))
            .unwrap_or(0);
        p[ground] = 1.0;
        return p;
    }
    let e0 = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let w = levels.map(|l| (-(l - e0) / temperature).exp());
    let z: f64 = w.iter().sum();
    w.map(|x| x / z)
}

/// Everything computed for one operating point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub eigen: EigenSystem,
    pub channels: Vec<TransitionChannel>,
    pub rates: RateMatrices,
    pub state: SteadyState,
    pub currents: HeatCurrents,
}

/// Full fast-path evaluation of a device.
pub fn evaluate(device: &Device) -> Result<Evaluation> {
    let eigen = analytic_eigensystem(&device.params);
    let channels = build_channels(&device.params)?;
    let rates = build_rate_matrices(&channels, &device.baths)?;
    let state = solve_steady(&rates)?;
    let currents = heat_currents(&rates, &state, &eigen, &device.baths)?;
    Ok(Evaluation {
        eigen,
        channels,
        rates,
        state,
        currents,
    })
}

/// Heat currents only.
pub fn currents(device: &Device) -> Result<HeatCurrents> {
    evaluate(device).map(|e| e.currents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, DeviceParams, Spectrum};
    use approx::assert_relative_eq;

    fn device(wl: f64, g: f64, t: [f64; 3], gamma: [f64; 3]) -> Device {
        let baths = [Terminal::L, Terminal::M, Terminal::R]
            .map(|x| BathSpec::new(x, t[x.index()], gamma[x.index()], Spectrum::Flat));
        validate_params(DeviceParams::resonant(wl, 1.0, g), baths).unwrap()
    }

    fn fig2(tm: f64) -> Device {
        device(0.9, 0.01, [0.2, tm, 0.02], [1e-4; 3])
    }

    #[test]
    fn detached_baths_give_zero_matrices() {
        let d = device(0.9, 0.01, [0.2, 0.1, 0.02], [0.0; 3]);
        let ch = build_channels(&d.params).unwrap();
        let r = build_rate_matrices(&ch, &d.baths).unwrap();
        for m in &r.per_bath {
            assert_eq!(*m, Mat8::zeros());
        }
        assert!(matches!(
            solve_steady(&r),
            Err(Error::SingularSteadyState { closed_classes: 8 })
        ));
    }

    #[test]
    fn high_temperature_rates_equalize() {
        let d = device(0.9, 0.01, [1e9, 1e9, 1e9], [1e-4; 3]);
        let ch = build_channels(&d.params).unwrap();
        let r = build_rate_matrices(&ch, &d.baths).unwrap();
        for c in r.channels.iter().filter(|c| c.absorption > 0.0) {
            assert_relative_eq!(c.emission / c.absorption, 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn rate_matrix_structure() {
        let d = fig2(0.1);
        let ch = build_channels(&d.params).unwrap();
        let r = build_rate_matrices(&ch, &d.baths).unwrap();
        for m in &r.per_bath {
            for j in 0..8 {
                let col: f64 = m.column(j).iter().sum();
                assert!(col.abs() <= 1e-18, "column {j} sums to {col}");
                for i in 0..8 {
                    if i == j {
                        assert!(m[(i, j)] <= 0.0);
                    } else {
                        assert!(m[(i, j)] >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn emission_and_absorption_obey_detailed_balance() {
        let d = fig2(0.1);
        let ch = build_channels(&d.params).unwrap();
        let r = build_rate_matrices(&ch, &d.baths).unwrap();
        for c in &r.channels {
            let t = d.baths[c.bath.index()].temperature;
            if c.absorption > 1e-300 {
                assert_relative_eq!(
                    c.emission / c.absorption,
                    (c.frequency / t).exp(),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn zero_temperature_bath_only_emits() {
        let d = device(0.9, 0.01, [0.0, 0.0, 0.0], [1e-4; 3]);
        let e = evaluate(&d).unwrap();
        assert!(e.rates.channels.iter().all(|c| c.absorption == 0.0));
        assert_relative_eq!(e.state.populations[0], 1.0, epsilon = 1e-15);
        assert!(e.currents.max_abs() == 0.0);
    }

    #[test]
    fn equal_temperatures_reach_gibbs() {
        for &t in &[0.05, 0.3, 1.5] {
            let d = device(0.7, 0.1, [t, t, t], [1e-4, 2e-4, 5e-5]);
            let e = evaluate(&d).unwrap();
            let gibbs = gibbs_populations(&e.eigen.levels, t);
            for k in 0..8 {
                assert!((e.state.populations[k] - gibbs[k]).abs() <= 1e-12);
            }
            assert!(e.currents.max_abs() <= 1e-14, "{:?}", e.currents);
        }
    }

    #[test]
    fn detached_left_bath_is_two_terminal() {
        let d = device(0.9, 0.08, [0.3, 0.2, 0.35], [0.0, 1e-4, 1e-4]);
        let c = currents(&d).unwrap();
        assert_eq!(c.q[0], 0.0);
        assert_relative_eq!(c.q[1], -c.q[2], max_relative = 1e-12);
    }

    #[test]
    fn fig2_currents_conserve_energy() {
        let c = currents(&fig2(0.1)).unwrap();
        assert!(c.sum().abs() <= 1e-12 * c.max_abs());
        assert!(c.entropy_production >= 0.0);
        // L is the hot terminal, R the cold one
        assert!(c.q[0] > 0.0 && c.q[2] < 0.0);
    }

    #[test]
    fn solution_is_normalized_with_small_residual() {
        let e = evaluate(&fig2(0.3)).unwrap();
        let s: f64 = e.state.populations.iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        assert!(e.state.residual <= 1e-10 * e.rates.max_rate());
        assert!(e.state.populations.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn closed_class_count() {
        let mut k = Mat8::zeros();
        assert_eq!(closed_classes(&k).len(), 8);
        // chain 7 → 6 → … → 0: single absorbing ground state
        for i in 1..8 {
            k[(i - 1, i)] = 1.0;
        }
        assert_eq!(closed_classes(&k), vec![vec![0]]);
        k[(3, 2)] = 1.0;
        assert_eq!(closed_classes(&k), vec![vec![0]]);
        k[(2, 3)] = 0.0;
        // without 3 → 2, level 3 is absorbing alongside 0
        assert_eq!(closed_classes(&k), vec![vec![0], vec![3]]);
    }

    #[test]
    fn gibbs_at_zero_temperature_is_ground_state() {
        let levels = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0];
        assert_eq!(gibbs_populations(&levels, 0.0)[0], 1.0);
        let p = gibbs_populations(&levels, 1.0);
        assert_relative_eq!(p[1] / p[0], (-1.0f64).exp(), max_relative = 1e-14);
    }
}
