//! Runtime self-checks: structural invariants of the covariance engine and
//! the Monte Carlo cross-check suite.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::table::{Cell, Table};
use crate::dynamics::{segment_stats, OscillatorParams};
use crate::error::Result;
use crate::gaussian::{det2, SystemState};
use crate::optimize::{optimal_homodyne_angle, Conditioning, Target};
use crate::oracle::{simulate_ensemble, SdeScheme, TrajectoryConfig};
use crate::protocol::{backaction_evading_lambda2, effective_interaction, run_protocol, Protocol, ProtocolStep};
use crate::units::thermal_occupation;

struct Check {
    name: &'static str,
    worst: f64,
    tolerance: f64,
    passed: bool,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn caption_oscillator() -> Result<OscillatorParams> {
    OscillatorParams::new(TAU * 1e3, TAU, thermal_occupation(TAU * 1e3, 100.0))
}

fn composition(rng: &mut ChaCha8Rng, n: usize) -> Result<Check> {
    let rot = OscillatorParams::undamped(1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let l1 = rng.random_range(-5.0..5.0);
        let l2 = rng.random_range(-5.0..5.0);
        let th = rng.random_range(0.0..PI);
        let out = run_protocol(
            &SystemState::ground(),
            &Protocol::double_pulse(l1, l2, th, 1.0).steps,
            &rot,
        )?;
        let m = out.linear_map();
        let e = effective_interaction(l1, l2, th, 1.0)?;
        let phi = e.phi.unwrap_or(0.0);
        for (got, want) in [
            (m[(3, 0)], -e.g * phi.cos()),
            (m[(3, 1)], -e.g * phi.sin()),
            (m[(3, 2)], e.kerr),
            (m[(0, 2)], -l1 * th.sin()),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    Ok(Check {
        name: "composition_identities",
        worst,
        tolerance: 1e-10,
        passed: worst <= 1e-10,
    })
}

fn backaction(rng: &mut ChaCha8Rng, n: usize) -> Result<Check> {
    let rot = OscillatorParams::undamped(1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let l1 = rng.random_range(-5.0..5.0);
        let th = rng.random_range(0.0..PI);
        let eta = rng.random_range(0.05..=1.0);
        let l2 = backaction_evading_lambda2(l1, th, eta)?;
        let s = SystemState::ground();
        let out = run_protocol(&s, &Protocol::double_pulse(l1, l2, th, eta).steps, &rot)?;
        worst = worst.max(out.live().p_m.coeff(s.initial_light_mode(), 0).abs());
    }
    Ok(Check {
        name: "backaction_evasion",
        worst,
        tolerance: 1e-12,
        passed: worst < 1e-12,
    })
}

fn symplectic(rng: &mut ChaCha8Rng, n: usize) -> Result<Check> {
    let rot = OscillatorParams::undamped(1.0)?;
    let j = Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    );
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let steps: Vec<ProtocolStep> = (0..rng.random_range(1..8))
            .map(|_| {
                if rng.random_bool(0.5) {
                    ProtocolStep::Pulse {
                        lambda: rng.random_range(-3.0..3.0),
                    }
                } else {
                    ProtocolStep::FreeEvolution {
                        theta_rad: rng.random_range(0.0..TAU),
                    }
                }
            })
            .collect();
        let m = run_protocol(&SystemState::ground(), &steps, &rot)?.linear_map();
        worst = worst.max((m * j * m.transpose() - j).abs().max());
    }
    Ok(Check {
        name: "symplectic_form",
        worst,
        tolerance: 1e-12,
        passed: worst <= 1e-12,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn noise_scaling() -> Result<[Check; 2]> {
    let osc = caption_oscillator()?;
    let thetas: Vec<f64> = (0..=20).map(|i| 10f64.powf(-3.0 + 2.0 * i as f64 / 20.0)).collect();
    let stats = thetas
        .iter()
        .map(|&t| segment_stats(&osc, t))
        .collect::<Result<Vec<_>>>()?;
    let xx: Vec<f64> = stats.iter().map(|s| s.added_noise[(0, 0)]).collect();
    let pp: Vec<f64> = stats.iter().map(|s| s.added_noise[(1, 1)]).collect();
    let sx = log_log_slope(&thetas, &xx);
    let sp = log_log_slope(&thetas, &pp);
    Ok([
        Check {
            name: "position_noise_slope",
            worst: sx,
            tolerance: 0.1,
            passed: (sx - 3.0).abs() <= 0.1,
        },
        Check {
            name: "momentum_noise_slope",
            worst: sp,
            tolerance: 0.1,
            passed: (sp - 1.0).abs() <= 0.1,
        },
    ])
}

fn uncertainty(rng: &mut ChaCha8Rng, n: usize) -> Result<[Check; 2]> {
    let mut min_det = f64::INFINITY;
    let mut worst_cs: f64 = 0.0;
    for _ in 0..n {
        let nbar = log_uniform(rng, 1e-3, 1e6);
        let osc = OscillatorParams::new(1.0, log_uniform(rng, 1e-4, 0.5), nbar)?;
        let p = Protocol::double_pulse(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(1e-4..PI),
            rng.random_range(0.1..=1.0),
        );
        let out = run_protocol(&SystemState::thermal(nbar)?, &p.steps, &osc)?;
        let meter = out.homodyne(rng.random_range(0.0..PI));
        let sigma = out.conditioned_mechanical_covariance(&[&meter])?;
        min_det = min_det.min(det2(&sigma) / 0.25);
        let target = out.live().mechanical_at(rng.random_range(0.0..PI));
        let v = out.variance(&target)?;
        let c = out.conditional_variance(&target, &meter)?;
        // fraction by which the conditional variance leaves [0, V]
        worst_cs = worst_cs.max((-c).max(c - v).max(0.0) / v);
    }
    Ok([
        Check {
            name: "conditioned_det_over_quarter",
            worst: min_det,
            tolerance: 1e-9,
            passed: min_det >= 1.0 - 1e-9,
        },
        Check {
            name: "conditional_variance_bounds",
            worst: worst_cs,
            tolerance: 1e-12,
            passed: worst_cs <= 1e-12,
        },
    ])
}

/// Runs the structural invariant checks with `seed` for the randomized
/// cases. One row per check.
pub fn invariant_suite(seed: u64) -> Result<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        composition(&mut rng, 1000)?,
        backaction(&mut rng, 1000)?,
        symplectic(&mut rng, 1000)?,
    ];
    checks.extend(noise_scaling()?);
    checks.extend(uncertainty(&mut rng, 1000)?);
    let mut t = Table::new("validate", &["check", "worst", "tolerance", "status"]).meta("seed", seed as usize);
    for c in checks {
        t.push(vec![c.name.into(), c.worst.into(), c.tolerance.into(), c.passed.into()]);
    }
    Ok(t)
}

/// One randomized Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub omega_m_hz: f64,
    pub temperature_k: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta_rad: f64,
    pub eta: f64,
    pub target: Target,
}

impl OracleCase {
    pub fn oscillator(&self) -> Result<OscillatorParams> {
        let w = TAU * self.omega_m_hz;
        OscillatorParams::new(w, TAU, thermal_occupation(w, self.temperature_k))
    }

    pub fn protocol(&self) -> Protocol {
        Protocol::double_pulse(self.lambda1, self.lambda2, self.theta_rad, self.eta)
    }
}

/// `count` cases spread over the figure parameter space: ω_M/2π of 1 kHz or
/// 100 kHz, γ/2π = 1 Hz, T in [1, 100] K, λ_total in [0.1, 100], θ in
/// [10⁻³, π/2], η in [0.7, 1] and both conditioning kinds.
pub fn oracle_cases(seed: u64, count: usize) -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let lambda = log_uniform(&mut rng, 0.1, 100.0);
            let alpha: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            let eta = if rng.random_bool(0.5) {
                1.0
            } else {
                rng.random_range(0.7..1.0)
            };
            let angle = rng.random_range(0.0..PI);
            OracleCase {
                omega_m_hz: if i % 2 == 0 { 1e3 } else { 1e5 },
                temperature_k: log_uniform(&mut rng, 1.0, 100.0),
                lambda1: lambda * alpha.cos(),
                lambda2: lambda * alpha.sin(),
                theta_rad: log_uniform(&mut rng, 1e-3, FRAC_PI_2),
                eta,
                target: if i % 4 < 2 {
                    Target::a_priori(angle)
                } else {
                    Target::a_posteriori(angle)
                },
            }
        })
        .collect()
}

/// Result of one oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub homodyne_angle: f64,
    pub core: f64,
    pub monte_carlo: f64,
    pub std_err: f64,
    pub z: f64,
}

/// Compares the closed-form conditional variance of `case.target` on the
/// optimal homodyne quadrature with a regression estimate from `n_paths`
/// trajectories.
pub fn compare_case(case: &OracleCase, n_paths: usize, seed: u64, scheme: SdeScheme) -> Result<OracleComparison> {
    let osc = case.oscillator()?;
    let initial = SystemState::thermal(osc.nbar())?;
    let protocol = case.protocol();
    let state = run_protocol(&initial, &protocol.steps, &osc)?;
    let opt = optimal_homodyne_angle(&state, &case.target.form(&state))?;
    let cfg = TrajectoryConfig {
        n_paths,
        seed,
        scheme,
        ..TrajectoryConfig::for_oscillator(&osc, n_paths, seed)
    };
    let v0 = osc.nbar() + 0.5;
    let ens = simulate_ensemble(
        &Matrix2::new(v0, 0.0, 0.0, v0),
        &Vector2::zeros(),
        &protocol.steps,
        &osc,
        &cfg,
    )?;
    let group = match case.target.conditioning {
        Conditioning::APriori => "initial",
        Conditioning::APosteriori => "live",
    };
    let (x, p) = (format!("{group}.x_m"), format!("{group}.p_m"));
    let (s, c) = case.target.angle.sin_cos();
    let (hs, hc) = opt.angle.sin_cos();
    let est = ens.conditional_variance(&[(&x, c), (&p, s)], &[&[("live.x_l", hc), ("live.p_l", hs)]])?;
    Ok(OracleComparison {
        homodyne_angle: opt.angle,
        core: opt.conditional_variance,
        monte_carlo: est.value,
        std_err: est.std_err,
        z: est.z_score(opt.conditional_variance),
    })
}

/// Runs every case (in parallel, case `i` seeded with `seed + i`) and
/// tabulates closed-form and Monte Carlo values with their z-scores.
pub fn oracle_suite(cases: &[OracleCase], n_paths: usize, seed: u64, scheme: SdeScheme) -> Result<Table> {
    let results = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| compare_case(c, n_paths, seed.wrapping_add(i as u64), scheme))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "oracle",
        &[
            "case",
            "omega_m_hz",
            "temperature_k",
            "lambda1",
            "lambda2",
            "theta_rad",
            "eta",
            "conditioning",
            "target_angle_rad",
            "homodyne_angle_rad",
            "core_variance",
            "mc_variance",
            "mc_std_err",
            "z",
            "status",
        ],
    )
    .meta("n_paths", n_paths)
    .meta("seed", seed as usize);
    for (i, (c, r)) in cases.iter().zip(&results).enumerate() {
        t.push(vec![
            i.into(),
            c.omega_m_hz.into(),
            c.temperature_k.into(),
            c.lambda1.into(),
            c.lambda2.into(),
            c.theta_rad.into(),
            c.eta.into(),
            Cell::from(match c.target.conditioning {
                Conditioning::APriori => "a_priori",
                Conditioning::APosteriori => "a_posteriori",
            }),
            c.target.angle.into(),
            r.homodyne_angle.into(),
            r.core.into(),
            r.monte_carlo.into(),
            r.std_err.into(),
            r.z.into(),
            (r.z.abs() < 3.0).into(),
        ]);
    }
    Ok(t)
}
