//! Closed-form eigen-decomposition of the three-qubit Hamiltonian and its
//! eigenoperator decomposition into dissipation channels.
//!
//! Product basis: |b_L b_M b_R⟩ in binary-descending order |111⟩, |110⟩, …,
//! |000⟩, with |1⟩ the excited state. Level indices are zero-based
//! throughout the crate (level 0 is the ground state λ_1).

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, Matrix2, SMatrix, SVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DeviceParams, Terminal};

pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Vec8 = SVector<f64, 8>;

/// Tolerance (times ω_R) on a channel's level spacing versus its frequency.
pub const CHANNEL_TOL: f64 = 1e-12;

fn kron3(a: &Matrix2<f64>, b: &Matrix2<f64>, c: &Matrix2<f64>) -> Mat8 {
    let ab = a.kronecker(b);
    let abc = ab.kronecker(c);
    Mat8::from_iterator(abc.iter().copied())
}

fn embed(op: Matrix2<f64>, terminal: Terminal) -> Mat8 {
    let id = Matrix2::identity();
    match terminal {
        Terminal::L => kron3(&op, &id, &id),
        Terminal::M => kron3(&id, &op, &id),
        Terminal::R => kron3(&id, &id, &op),
    }
}

/// σ_x acting on one qubit of the product basis.
pub fn pauli_x(terminal: Terminal) -> Mat8 {
    embed(Matrix2::new(0.0, 1.0, 1.0, 0.0), terminal)
}

/// σ_z acting on one qubit; +1 on the excited state.
pub fn pauli_z(terminal: Terminal) -> Mat8 {
    embed(Matrix2::new(1.0, 0.0, 0.0, -1.0), terminal)
}

/// Index of the product state |b_L b_M b_R⟩.
pub fn product_index(bits: &str) -> usize {
    debug_assert_eq!(bits.len(), 3);
    7 - usize::from_str_radix(bits, 2).expect("binary label")
}

/// H_S = Σ_µ (ω_µ/2) σ_z^µ + g σ_x^L σ_x^M σ_x^R.
pub fn build_hamiltonian(params: &DeviceParams) -> Mat8 {
    let sx = Matrix2::new(0.0, 1.0, 1.0, 0.0);
    let mut h = kron3(&sx, &sx, &sx) * params.g;
    for t in Terminal::ALL {
        h += pauli_z(t) * (0.5 * params.frequency(t));
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenSystem {
    /// [ω_R, ω_L, ω_M, 0].
    pub big_lambda: [f64; 4],
    /// Eigenvalues λ_1 < … < λ_8.
    pub levels: [f64; 8],
    /// Mixing angles θ_1 … θ_4.
    pub theta: [f64; 4],
    /// Column k is |λ_{k+1}⟩ in the product basis.
    #[serde(skip)]
    pub vectors: Mat8,
}

impl EigenSystem {
    pub fn levels_vec(&self) -> Vec8 {
        Vec8::from_column_slice(&self.levels)
    }
}

/// √(Λ_i² + g²) for the four Λ values.
fn block_energies(params: &DeviceParams) -> [f64; 4] {
    let lam = [params.omega_r, params.omega_l, params.omega_m, 0.0];
    lam.map(|l| l.hypot(params.g))
}

pub fn analytic_eigensystem(params: &DeviceParams) -> EigenSystem {
    let g = params.g;
    let big_lambda = [params.omega_r, params.omega_l, params.omega_m, 0.0];
    let energy = block_energies(params);
    let mut levels = [0.0; 8];
    for j in 0..4 {
        levels[j] = -energy[j];
        levels[7 - j] = energy[j];
    }
    let mut theta = [0.0; 4];
    let mut sin = [0.0; 4];
    let mut cos = [0.0; 4];
    for i in 0..4 {
        let s = g / (energy[i] + big_lambda[i]).hypot(g);
        sin[i] = s;
        cos[i] = (1.0 - s * s).sqrt();
        theta[i] = s.asin();
    }

    let mut u = Mat8::zeros();
    let mut put = |k: usize, terms: [(f64, &str); 2]| {
        for (coef, bits) in terms {
            u[(product_index(bits), k)] = coef;
        }
    };
    put(0, [(-sin[0], "111"), (cos[0], "000")]);
    put(1, [(-sin[1], "101"), (cos[1], "010")]);
    put(2, [(-cos[2], "100"), (sin[2], "011")]);
    put(3, [(-cos[3], "110"), (sin[3], "001")]);
    put(4, [(sin[3], "110"), (cos[3], "001")]);
    put(5, [(sin[2], "100"), (cos[2], "011")]);
    put(6, [(cos[1], "101"), (sin[1], "010")]);
    put(7, [(cos[0], "111"), (sin[0], "000")]);

    EigenSystem {
        big_lambda,
        levels,
        theta,
        vectors: u,
    }
}

/// Dissipation angles α_µk, indexed `[bath][k-1]`.
///
/// The L and M rows differ from the commonly printed closed form: the L
/// bracket is θ_{[k]+2} − θ_{[k]} and the M bracket pairs θ_{2[k]−1} with
/// θ_{2[k]}. With these, Σ_l sin α_µl (V + V†) reproduces σ_x^µ exactly.
pub fn alpha_angles(theta: &[f64; 4]) -> [[f64; 4]; 3] {
    let th = |i: usize| theta[i - 1];
    let mut out = [[0.0; 4]; 3];
    for k in 1..=4usize {
        let b = k.div_ceil(2);
        let parity = if k % 2 == 0 { 1.0 } else { -1.0 };
        out[0][k - 1] = FRAC_PI_4 - parity * (FRAC_PI_4 - (th(b + 2) - th(b)));
        out[1][k - 1] = FRAC_PI_4 - parity * (FRAC_PI_4 - (th(2 * b - 1) - th(2 * b)));
        out[2][k - 1] = FRAC_PI_4 + parity * (FRAC_PI_4 - (th(b) + th(5 - b)));
    }
    out
}

/// Bohr frequencies ω_µl, indexed `[bath][l-1]`.
pub fn bohr_frequencies(params: &DeviceParams) -> [[f64; 4]; 3] {
    let e = block_energies(params);
    let pair = |i: usize, j: usize| [e[i] - e[j], e[i] + e[j]];
    let [l1, l2] = pair(0, 2);
    let [l3, l4] = pair(1, 3);
    let [m1, m2] = pair(0, 1);
    let [m3, m4] = pair(2, 3);
    let [r1, r2] = pair(0, 3);
    let [r3, r4] = pair(1, 2);
    [[l1, l2, l3, l4], [m1, m2, m3, m4], [r1, r2, r3, r4]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelPair {
    pub upper: usize,
    pub lower: usize,
    pub sign: f64,
}

/// One eigenoperator V_µl = amplitude · Σ sign |λ_lower⟩⟨λ_upper|.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionChannel {
    pub bath: Terminal,
    /// 1..=4
    pub index: usize,
    pub amplitude: f64,
    pub frequency: f64,
    pub pairs: [LevelPair; 2],
}

impl TransitionChannel {
    pub fn name(&self) -> String {
        format!("V_{}{}", self.bath, self.index)
    }

    /// Matrix of V_µl in the eigenbasis.
    pub fn operator(&self) -> Mat8 {
        let mut v = Mat8::zeros();
        for p in &self.pairs {
            v[(p.lower, p.upper)] += self.amplitude * p.sign;
        }
        v
    }
}

// (upper, lower, sign) with one-based level numbers, per bath and channel.
const CHANNEL_TABLE: [[[(usize, usize, f64); 2]; 4]; 3] = [
    [
        [(3, 1, -1.0), (8, 6, 1.0)],
        [(6, 1, 1.0), (8, 3, 1.0)],
        [(4, 2, -1.0), (7, 5, 1.0)],
        [(5, 2, 1.0), (7, 4, 1.0)],
    ],
    [
        [(2, 1, 1.0), (8, 7, 1.0)],
        [(8, 2, 1.0), (7, 1, -1.0)],
        [(4, 3, 1.0), (6, 5, 1.0)],
        [(5, 3, 1.0), (6, 4, -1.0)],
    ],
    [
        [(8, 5, 1.0), (4, 1, 1.0)],
        [(5, 1, 1.0), (8, 4, -1.0)],
        [(7, 6, 1.0), (3, 2, 1.0)],
        [(6, 2, 1.0), (7, 3, -1.0)],
    ],
];

/// The twelve channels, ordered L1..L4, M1..M4, R1..R4.
pub fn build_channels(params: &DeviceParams) -> Result<Vec<TransitionChannel>> {
    let eig = analytic_eigensystem(params);
    let alpha = alpha_angles(&eig.theta);
    let freqs = bohr_frequencies(params);
    let tol = CHANNEL_TOL * params.omega_r;
    let mut channels = Vec::with_capacity(12);
    for bath in Terminal::ALL {
        let b = bath.index();
        for l in 0..4 {
            let pairs = CHANNEL_TABLE[b][l].map(|(u, d, sign)| LevelPair {
                upper: u - 1,
                lower: d - 1,
                sign,
            });
            let ch = TransitionChannel {
                bath,
                index: l + 1,
                amplitude: alpha[b][l].sin(),
                frequency: freqs[b][l],
                pairs,
            };
            for p in &ch.pairs {
                let spacing = eig.levels[p.upper] - eig.levels[p.lower];
                if (spacing - ch.frequency).abs() > tol {
                    return Err(Error::ChannelInconsistency {
                        channel: ch.name(),
                        spacing,
                        frequency: ch.frequency,
                    });
                }
            }
            channels.push(ch);
        }
    }
    Ok(channels)
}

#[derive(Clone, Debug)]
pub struct NumericEigen {
    /// Ascending.
    pub values: Vec8,
    /// Orthonormal columns matching `values`.
    pub vectors: Mat8,
}

/// Numeric diagonalization of a real symmetric 8×8 matrix, used to check the
/// closed forms.
pub fn numeric_diagonalization(h: &Mat8) -> Result<NumericEigen> {
    let dynamic = DMatrix::from_iterator(8, 8, h.iter().copied());
    let eig = SymmetricEigen::try_new(dynamic, f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec8::zeros();
    let mut vectors = Mat8::zeros();
    for (k, &src) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[src];
        for r in 0..8 {
            vectors[(r, k)] = eig.eigenvectors[(r, src)];
        }
    }
    Ok(NumericEigen { values, vectors })
}

/// Largest entry of |a − b| after matching the sign of each column of `b`
/// to `a`.
pub fn max_column_deviation_up_to_sign(a: &Mat8, b: &Mat8) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..8 {
        let ca = a.column(k);
        let cb = b.column(k);
        let s = if ca.dot(&cb) < 0.0 { -1.0 } else { 1.0 };
        worst = worst.max((ca - cb * s).amax());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2() -> DeviceParams {
        DeviceParams::resonant(0.9, 1.0, 0.01)
    }

    #[test]
    fn hamiltonian_examples() {
        let p = fig2();
        let h = build_hamiltonian(&p);
        let top = product_index("111");
        let bottom = product_index("000");
        assert_relative_eq!(h[(top, top)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            h[(top, top)],
            0.5 * (p.omega_l + p.omega_m + p.omega_r),
            epsilon = 1e-15
        );
        assert_eq!(h[(bottom, top)], p.g);
        assert_eq!(h[(top, bottom)], p.g);
        assert!(h.trace().abs() < 1e-15);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn product_index_is_binary_descending() {
        assert_eq!(product_index("111"), 0);
        assert_eq!(product_index("110"), 1);
        assert_eq!(product_index("000"), 7);
        // σ_z^L is +1 on the first half of the basis
        let z = pauli_z(Terminal::L);
        assert_eq!(z[(0, 0)], 1.0);
        assert_eq!(z[(7, 7)], -1.0);
    }

    #[test]
    fn middle_levels_are_plus_minus_g() {
        for &wl in &[0.55, 0.7, 0.9] {
            let e = analytic_eigensystem(&DeviceParams::resonant(wl, 1.0, 0.01));
            assert_eq!(e.levels[3], -0.01);
            assert_eq!(e.levels[4], 0.01);
        }
    }

    #[test]
    fn top_level_matches_closed_form() {
        let e = analytic_eigensystem(&fig2());
        // √(1 + 1e-4) = 1.000049998750062496094…
        assert_relative_eq!(e.levels[7], 1.000_049_998_750_062_5, max_relative = 1e-15);
        let num = numeric_diagonalization(&build_hamiltonian(&fig2())).unwrap();
        assert_relative_eq!(num.values[7], e.levels[7], epsilon = 1e-12);
    }

    #[test]
    fn weak_coupling_limit_of_angles() {
        let e = analytic_eigensystem(&DeviceParams::resonant(0.8, 1.0, 1e-9));
        for i in 0..3 {
            assert!(e.theta[i].abs() < 1e-8, "theta_{} = {}", i + 1, e.theta[i]);
        }
        assert_relative_eq!(e.theta[3], FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn analytic_vectors_diagonalize_h() {
        let p = fig2();
        let e = analytic_eigensystem(&p);
        let u = &e.vectors;
        let orth = (u.transpose() * u - Mat8::identity()).amax();
        assert!(orth < 1e-12, "{orth}");
        let d = u.transpose() * build_hamiltonian(&p) * u;
        let resid = (d - Mat8::from_diagonal(&e.levels_vec())).amax();
        assert!(resid < 1e-10, "{resid}");
    }

    #[test]
    fn alpha_parity_branches() {
        let theta = [0.1, 0.2, 0.3, 0.4];
        let a = alpha_angles(&theta);
        // odd k keeps the π/2 offset, even k is the bare bracket
        assert_relative_eq!(a[0][0], std::f64::consts::FRAC_PI_2 - (0.3 - 0.1), epsilon = 1e-15);
        assert_relative_eq!(a[0][1], 0.3 - 0.1, epsilon = 1e-15);
        assert_relative_eq!(a[0][3], 0.4 - 0.2, epsilon = 1e-15);
        assert_relative_eq!(a[1][2], std::f64::consts::FRAC_PI_2 - (0.3 - 0.4), epsilon = 1e-15);
        assert_relative_eq!(a[2][0], 0.1 + 0.4, epsilon = 1e-15);
        assert_relative_eq!(a[2][1], std::f64::consts::FRAC_PI_2 - (0.1 + 0.4), epsilon = 1e-15);
    }

    #[test]
    fn bohr_frequency_examples() {
        let p = fig2();
        let w = bohr_frequencies(&p);
        let root = (p.omega_m * p.omega_m + p.g * p.g).sqrt();
        assert_relative_eq!(w[1][2], root - p.g, epsilon = 1e-15);
        assert_relative_eq!(w[1][3], root + p.g, epsilon = 1e-15);
        assert_relative_eq!(w[2][1], (1.0f64 + 1e-4).sqrt() + 0.01, epsilon = 1e-15);
        let e = analytic_eigensystem(&p);
        let e1 = e.levels[7];
        for b in 0..3 {
            assert_relative_eq!(w[b][0] + w[b][1], 2.0 * e1, epsilon = 1e-14);
        }
        assert_relative_eq!(w[2][0], e.levels[7] - e.levels[4], epsilon = 1e-14);
        assert!(w.iter().flatten().all(|&x| x > 0.0));
        // numeric check of R2 = λ_8 − λ_4
        let num = numeric_diagonalization(&build_hamiltonian(&p)).unwrap();
        assert_relative_eq!(w[2][1], num.values[7] - num.values[3], epsilon = 1e-12);
    }

    #[test]
    fn channel_l1_frequency_by_symmetry() {
        let p = fig2();
        let e = analytic_eigensystem(&p);
        let ch = build_channels(&p).unwrap();
        assert_relative_eq!(ch[0].frequency, e.levels[7] - e.levels[5], epsilon = 1e-15);
        assert_relative_eq!(ch[0].frequency, e.levels[2] - e.levels[0], epsilon = 1e-15);
    }

    #[test]
    fn channels_are_eigenoperators() {
        let p = fig2();
        let e = analytic_eigensystem(&p);
        let h = Mat8::from_diagonal(&e.levels_vec());
        for ch in build_channels(&p).unwrap() {
            let v = ch.operator();
            let r = (h * v - v * h + v * ch.frequency).amax();
            assert!(r <= 1e-12, "{} residual {r}", ch.name());
        }
    }

    #[test]
    fn channels_partition_level_pairs() {
        let ch = build_channels(&fig2()).unwrap();
        assert_eq!(ch.len(), 12);
        let mut all = std::collections::BTreeSet::new();
        for bath in Terminal::ALL {
            let mut seen = std::collections::BTreeSet::new();
            for c in ch.iter().filter(|c| c.bath == bath) {
                for p in &c.pairs {
                    assert!(seen.insert((p.upper, p.lower)));
                    all.insert((p.upper, p.lower));
                }
            }
            assert_eq!(seen.len(), 8);
        }
        assert_eq!(all.len(), 24);
    }

    #[test]
    fn channels_reconstruct_coupling_operators() {
        for p in [fig2(), DeviceParams::resonant(0.6, 1.0, 0.32), DeviceParams::resonant(0.75, 1.0, 0.2)] {
            let e = analytic_eigensystem(&p);
            let ch = build_channels(&p).unwrap();
            for bath in Terminal::ALL {
                let target = e.vectors.transpose() * pauli_x(bath) * e.vectors;
                let mut sum = Mat8::zeros();
                for c in ch.iter().filter(|c| c.bath == bath) {
                    let v = c.operator();
                    sum += v + v.transpose();
                }
                let err = (sum - target).amax();
                assert!(err < 1e-10, "bath {bath}: {err}");
            }
        }
    }

    #[test]
    fn numeric_oracle_examples() {
        let id = numeric_diagonalization(&Mat8::identity()).unwrap();
        assert!(id.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let mut m = Mat8::zeros();
        m[(2, 2)] = 1.0;
        m[(5, 5)] = -1.0;
        m[(2, 5)] = 0.3;
        m[(5, 2)] = 0.3;
        let r = numeric_diagonalization(&m).unwrap();
        let e = 1.0f64.hypot(0.3);
        assert_relative_eq!(r.values[0], -e, epsilon = 1e-14);
        assert_relative_eq!(r.values[7], e, epsilon = 1e-14);
        let orth = (r.vectors.transpose() * r.vectors - Mat8::identity()).amax();
        assert!(orth < 1e-13);
    }

    #[test]
    fn numeric_matches_analytic_fig2() {
        let p = fig2();
        let a = analytic_eigensystem(&p);
        let n = numeric_diagonalization(&build_hamiltonian(&p)).unwrap();
        for k in 0..8 {
            assert_relative_eq!(a.levels[k], n.values[k], epsilon = 1e-10);
        }
        assert!(max_column_deviation_up_to_sign(&a.vectors, &n.vectors) < 1e-8);
    }
}
