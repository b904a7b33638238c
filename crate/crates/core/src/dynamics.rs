//! Free evolution of the damped, thermally driven oscillator between pulses.
//!
//! The quadratures obey `Ẋ = ω P`, `Ṗ = −ω X − γ P + √(2γ) ξ` with
//! `⟨ξ(t)ξ(t')⟩ = (n̄ + ½) δ(t − t')`. Over a time `t = θ/ω` the homogeneous
//! part is `exp(A t)` with `A = [[0, ω], [−ω, −γ]]` and the injected noise has
//! covariance `∫₀ᵗ e^{As} D e^{Aᵀs} ds`, `D = diag(0, 2γ(n̄ + ½))`.
//!
//! The closed form below is written in terms of the entire functions
//! `φ₁(w) = (eʷ − 1)/w` and `φ₃(w) = (eʷ − 1 − w − w²/2)/w³`, which keeps the
//! small-θ position noise (∝ θ³) free of cancellation. An adaptive
//! Gauss–Kronrod quadrature of the same integral is kept as a self-check.

use std::collections::BinaryHeap;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{NoiseKind, QuadratureForm, Quadratures, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    omega_m: f64,
    gamma: f64,
    nbar: f64,
}

impl OscillatorParams {
    /// `omega_m` and `gamma` in rad/s, `nbar` the bath occupation.
    pub fn new(omega_m: f64, gamma: f64, nbar: f64) -> Result<Self> {
        if !(omega_m.is_finite() && omega_m > 0.0) {
            return Err(Error::domain(format!("omega_m must be positive, got {omega_m}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::domain(format!("gamma must be ≥ 0, got {gamma}")));
        }
        if !(nbar.is_finite() && nbar >= 0.0) {
            return Err(Error::domain(format!("nbar must be ≥ 0, got {nbar}")));
        }
        if gamma >= 2.0 * omega_m {
            return Err(Error::UnsupportedRegime(format!(
                "gamma = {gamma} is not below 2·omega_m = {}; only underdamped oscillators are supported",
                2.0 * omega_m
            )));
        }
        Ok(Self { omega_m, gamma, nbar })
    }

    /// Lossless oscillator; free evolution is a pure rotation.
    pub fn undamped(omega_m: f64) -> Result<Self> {
        Self::new(omega_m, 0.0, 0.0)
    }

    pub fn omega_m(&self) -> f64 {
        self.omega_m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    pub fn q_factor(&self) -> f64 {
        self.omega_m / self.gamma
    }

    /// `n̄γ·2π/ω`, the bath phonons entering per mechanical period.
    pub fn phonons_per_cycle(&self) -> f64 {
        self.nbar * self.gamma * std::f64::consts::TAU / self.omega_m
    }

    pub fn with_nbar(&self, nbar: f64) -> Result<Self> {
        Self::new(self.omega_m, self.gamma, nbar)
    }

    fn damped_frequency(&self) -> f64 {
        (self.omega_m * self.omega_m - 0.25 * self.gamma * self.gamma).sqrt()
    }

    fn diffusion(&self) -> f64 {
        2.0 * self.gamma * (self.nbar + 0.5)
    }
}

/// Homogeneous map and aggregated noise of one free-evolution segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalSegmentStats {
    pub mean_map: Matrix2<f64>,
    pub added_noise: Matrix2<f64>,
}

impl ThermalSegmentStats {
    pub fn identity() -> Self {
        Self {
            mean_map: Matrix2::identity(),
            added_noise: Matrix2::zeros(),
        }
    }

    /// This segment followed by `later`.
    pub fn then(&self, later: &ThermalSegmentStats) -> ThermalSegmentStats {
        let m = later.mean_map;
        ThermalSegmentStats {
            mean_map: m * self.mean_map,
            added_noise: m * self.added_noise * m.transpose() + later.added_noise,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::domain(format!(
            "rotation angle must be finite and ≥ 0, got {theta}"
        )));
    }
    Ok(())
}

/// `exp(A t)` for the underdamped drift.
fn mean_map_at(p: &OscillatorParams, t: f64) -> Matrix2<f64> {
    let w1 = p.damped_frequency();
    let (s, c) = (w1 * t).sin_cos();
    let decay = (-0.5 * p.gamma * t).exp();
    let k = s / w1;
    let hg = 0.5 * p.gamma;
    decay * Matrix2::new(c + k * hg, k * p.omega_m, -k * p.omega_m, c - k * hg)
}

/// Exact mean map and added noise over the rotation angle `theta` (radians of
/// free mechanical evolution, `t = θ/ω`).
pub fn segment_stats(p: &OscillatorParams, theta: f64) -> Result<ThermalSegmentStats> {
    check_theta(theta)?;
    let t = theta / p.omega_m;
    if t == 0.0 {
        return Ok(ThermalSegmentStats::identity());
    }
    let mean_map = mean_map_at(p, t);
    if p.gamma == 0.0 {
        return Ok(ThermalSegmentStats {
            mean_map,
            added_noise: Matrix2::zeros(),
        });
    }

    let w1 = p.damped_frequency();
    let a = Complex64::new(-p.gamma * t, 0.0);
    let w = Complex64::new(-p.gamma * t, 2.0 * w1 * t);

    // ∫ e^{-γs} ds, ∫ e^{-γs} sin², ∫ e^{-γs} sin·cos, ∫ e^{-γs} cos² over [0, t]
    let i0 = t * phi1(a).re;
    let j_ss = 0.5 * t * (a * a * phi3(a) - w * w * phi3(w)).re;
    let j_sc = 0.5 * t * phi1(w).im;
    let j_cc = i0 - j_ss;

    let k = p.diffusion();
    let r = p.omega_m / w1;
    let g = p.gamma / (2.0 * w1);
    let xx = k * r * r * j_ss;
    let xp = k * r * (j_sc - g * j_ss);
    let pp = k * (j_cc - 2.0 * g * j_sc + g * g * j_ss);

    Ok(ThermalSegmentStats {
        mean_map,
        added_noise: Matrix2::new(xx, xp, xp, pp),
    })
}

/// Same as [`segment_stats`] but with the noise integral evaluated by adaptive
/// Gauss–Kronrod quadrature to relative tolerance `rel_tol`.
pub fn segment_stats_quadrature(p: &OscillatorParams, theta: f64, rel_tol: f64) -> Result<ThermalSegmentStats> {
    check_theta(theta)?;
    let t = theta / p.omega_m;
    if t == 0.0 {
        return Ok(ThermalSegmentStats::identity());
    }
    let k = p.diffusion();
    let integrand = |s: f64| {
        let m = mean_map_at(p, s);
        let (vx, vp) = (m[(0, 1)], m[(1, 1)]);
        [k * vx * vx, k * vx * vp, k * vp * vp]
    };
    let [xx, xp, pp] = adaptive_gauss_kronrod(integrand, 0.0, t, rel_tol)?;
    Ok(ThermalSegmentStats {
        mean_map: mean_map_at(p, t),
        added_noise: Matrix2::new(xx, xp, xp, pp),
    })
}

/// Applies `M_θ` to the live mechanical quadratures, appending one
/// correlated thermal-noise mode for the segment.
pub fn apply_free_evolution(state: &SystemState, p: &OscillatorParams, theta: f64) -> Result<SystemState> {
    let stats = segment_stats(p, theta)?;
    if theta == 0.0 {
        return Ok(state.clone());
    }
    let live = state.live();
    let m = stats.mean_map;
    let mut x_m = live.x_m.combine(m[(0, 0)], &live.p_m, m[(0, 1)]);
    let mut p_m = live.x_m.combine(m[(1, 0)], &live.p_m, m[(1, 1)]);
    let mut next = state.clone();
    if p.gamma > 0.0 {
        let mode = next.push_mode(NoiseKind::ThermalSegment, stats.added_noise)?;
        x_m.add_scaled(&QuadratureForm::unit(mode, 0), 1.0);
        p_m.add_scaled(&QuadratureForm::unit(mode, 1), 1.0);
    }
    next.set_live(Quadratures {
        x_m,
        p_m,
        x_l: live.x_l.clone(),
        p_l: live.p_l.clone(),
    });
    Ok(next)
}

const SERIES_RADIUS: f64 = 2.0;

/// Σ_{k≥0} wᵏ/(k+n)!, accurate for |w| ≤ SERIES_RADIUS.
fn phi_series(w: Complex64, n: u32) -> Complex64 {
    let mut term = Complex64::new(1.0 / (1..=n).map(f64::from).product::<f64>(), 0.0);
    let mut sum = term;
    for k in 1..60 {
        term = term * w / f64::from(k + n);
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

fn phi1(w: Complex64) -> Complex64 {
    if w.norm() <= SERIES_RADIUS {
        phi_series(w, 1)
    } else {
        (w.exp() - 1.0) / w
    }
}

fn phi3(w: Complex64) -> Complex64 {
    if w.norm() <= SERIES_RADIUS {
        phi_series(w, 3)
    } else {
        (w.exp() - 1.0 - w - 0.5 * w * w) / (w * w * w)
    }
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

type Vec3 = [f64; 3];

fn gk15(f: &impl Fn(f64) -> Vec3, a: f64, b: f64) -> (Vec3, Vec3) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = [0.0; 3];
    let mut gauss = [0.0; 3];
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let points: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &xi in points {
            let v = f(centre + half * xi);
            for c in 0..3 {
                kron[c] += wk * v[c];
                if i % 2 == 1 {
                    gauss[c] += WG[i / 2] * v[c];
                }
            }
        }
    }
    let mut err = [0.0; 3];
    for c in 0..3 {
        kron[c] *= half;
        gauss[c] *= half;
        err[c] = (kron[c] - gauss[c]).abs();
    }
    (kron, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec3,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive G7K15 for the integrand `(xx, xp, pp)`. Each diagonal
/// component is held to `rel_tol` relative to itself and the cross term
/// relative to the geometric mean of the diagonals.
fn adaptive_gauss_kronrod(f: impl Fn(f64) -> Vec3, a: f64, b: f64, rel_tol: f64) -> Result<Vec3> {
    const MAX_PANELS: usize = 20_000;
    let (value, err) = gk15(&f, a, b);
    let floor = f64::MIN_POSITIVE;
    let wx = 1.0 / value[0].abs().max(floor);
    let wp = 1.0 / value[2].abs().max(floor);
    let weights = [wx, (wx * wp).sqrt(), wp];
    let weigh = |e: Vec3| (0..3).map(|c| e[c] * weights[c]).fold(0.0, f64::max);
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value,
        err: weigh(err),
    });
    loop {
        let mut total = [0.0; 3];
        let mut total_err = 0.0;
        for p in heap.iter() {
            for (t, v) in total.iter_mut().zip(p.value) {
                *t += v;
            }
            total_err += p.err;
        }
        if total_err <= rel_tol {
            return Ok(total);
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::Unstable(format!(
                "quadrature did not reach relative tolerance {rel_tol:e} (weighted error {total_err:e})"
            )));
        }
        let worst = heap.pop().expect("heap is nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err) = gk15(&f, lo, hi);
            heap.push(Panel {
                a: lo,
                b: hi,
                value,
                err: weigh(err),
            });
        }
    }
}
