//! Monte Carlo trajectory oracle.
//!
//! Every map in this model is linear with Gaussian inputs, so the symmetrized
//! second moments of the quantum state are exactly those of a classical
//! Gaussian process with the same drift and diffusion. Sampling that process
//! path by path therefore gives an estimate of every reported covariance that
//! shares no code with the closed-form covariance engine: pulses are applied
//! as linear kicks driven by sampled optical inputs of variance ½, loss mixes
//! in fresh variance-½ variates, and free evolution integrates the Langevin
//! equations
//!
//! ```text
//! dX = ω P dt
//! dP = (−ω X − γ P) dt + √(2γ(n̄+½)) dW
//! ```
//!
//! with Euler–Maruyama or Heun steps.
//!
//! Path `i` draws from ChaCha8 stream `i` under the configured seed. Paths
//! run in parallel, their values are stored in path order and all moments are
//! reduced sequentially with compensated sums, so results are identical for
//! any thread count.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::OscillatorParams;
use crate::error::{Error, Result};
use crate::gaussian::{validate_moments, INITIAL_SNAPSHOT};
use crate::protocol::ProtocolStep;

const CHUNK: usize = 1024;
const BLOW_UP_FACTOR: f64 = 1e6;
const QUADRATURES: [&str; 4] = ["x_m", "p_m", "x_l", "p_l"];

/// Name of the live (end-of-protocol) quadratures in [`EnsembleMoments`].
pub const LIVE: &str = "live";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeScheme {
    EulerMaruyama,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub n_paths: usize,
    /// Integration step in seconds; each free-evolution segment is split
    /// into `max(⌈t/dt⌉, min_segment_steps)` equal steps.
    pub dt: f64,
    pub seed: u64,
    pub scheme: SdeScheme,
    pub min_segment_steps: usize,
}

impl TrajectoryConfig {
    /// `n_paths` paths with the largest admissible step for `osc` and at
    /// least 64 steps per segment, which resolves the `θ³` position noise of
    /// short segments.
    pub fn for_oscillator(osc: &OscillatorParams, n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            dt: 0.01 / osc.omega_m(),
            seed,
            scheme: SdeScheme::Heun,
            min_segment_steps: 64,
        }
    }

    pub fn validate(&self, osc: &OscillatorParams) -> Result<()> {
        if self.n_paths < 16 {
            return Err(Error::domain(format!("need at least 16 paths, got {}", self.n_paths)));
        }
        let max_dt = 0.01 / osc.omega_m();
        if !(self.dt > 0.0 && self.dt <= max_dt * (1.0 + 1e-12)) {
            return Err(Error::domain(format!(
                "dt = {:e} s must lie in (0, 1/(100 ω_M)] = (0, {max_dt:e}]",
                self.dt
            )));
        }
        if self.min_segment_steps == 0 {
            return Err(Error::domain("min_segment_steps must be ≥ 1"));
        }
        Ok(())
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// `(value − reference) / std_err`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.std_err
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Empirical first and second moments of every recorded quadrature.
#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    names: Vec<String>,
    n_paths: usize,
    /// Row-major `n_paths × names.len()` path values.
    samples: Vec<f64>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

/// A linear combination of recorded quadratures by name.
pub type Combination<'a> = [(&'a str, f64)];

impl EnsembleMoments {
    /// Observable names, `"<snapshot>.<quadrature>"`, e.g. `initial.x_m`,
    /// `live.p_l`.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn from_samples(names: Vec<String>, samples: Vec<f64>) -> Self {
        let d = names.len();
        let n = samples.len() / d;
        let column = |j: usize| samples.iter().skip(j).step_by(d).copied();
        let mean = DVector::from_fn(d, |j, _| compensated_sum(column(j)) / n as f64);
        let mut covariance = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let c = compensated_sum(column(i).zip(column(j)).map(|(a, b)| (a - mean[i]) * (b - mean[j])))
                    / (n as f64 - 1.0);
                covariance[(i, j)] = c;
                covariance[(j, i)] = c;
            }
        }
        Self {
            names,
            n_paths: n,
            samples,
            mean,
            covariance,
        }
    }

    /// Values of one linear combination, path by path.
    pub fn path_values(&self, combo: &Combination<'_>) -> Result<Vec<f64>> {
        let w = self.weights(combo)?;
        let d = self.names.len();
        Ok(self
            .samples
            .chunks_exact(d)
            .map(|row| row.iter().zip(w.iter()).map(|(x, c)| x * c).sum())
            .collect())
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownObservable {
                name: name.to_string(),
                valid: self.names.join(", "),
            })
    }

    fn weights(&self, combo: &Combination<'_>) -> Result<DVector<f64>> {
        let mut w = DVector::zeros(self.names.len());
        for (name, c) in combo {
            w[self.index(name)?] += c;
        }
        Ok(w)
    }

    pub fn mean_of(&self, combo: &Combination<'_>) -> Result<Estimate> {
        let w = self.weights(combo)?;
        let var = (w.transpose() * &self.covariance * &w)[(0, 0)];
        Ok(Estimate {
            value: w.dot(&self.mean),
            std_err: (var / self.n_paths as f64).sqrt(),
        })
    }

    pub fn variance_of(&self, combo: &Combination<'_>) -> Result<Estimate> {
        let v = self.path_values(combo)?;
        let n = v.len() as f64;
        let m = compensated_sum(v.iter().copied()) / n;
        let value = compensated_sum(v.iter().map(|x| (x - m) * (x - m))) / (n - 1.0);
        Ok(Estimate {
            value,
            std_err: value * (2.0 / (self.n_paths as f64 - 1.0)).sqrt(),
        })
    }

    /// Residual variance of `target` after least-squares regression on the
    /// `meters` (with intercept), normalized by the residual degrees of
    /// freedom. Residuals are formed path by path so that a small residual
    /// under a large prior variance keeps its precision. The standard error
    /// assumes Gaussian residuals, which holds exactly for this model.
    pub fn conditional_variance(&self, target: &Combination<'_>, meters: &[&Combination<'_>]) -> Result<Estimate> {
        let n = self.n_paths;
        let k = meters.len();
        let centre = |v: Vec<f64>| {
            let m = compensated_sum(v.iter().copied()) / n as f64;
            v.into_iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let a = centre(self.path_values(target)?);
        let b = meters
            .iter()
            .map(|m| Ok(centre(self.path_values(m)?)))
            .collect::<Result<Vec<_>>>()?;
        let dot = |x: &[f64], y: &[f64]| compensated_sum(x.iter().zip(y).map(|(p, q)| p * q));
        let gram = DMatrix::from_fn(k, k, |i, j| dot(&b[i], &b[j]));
        let chol = gram.clone().cholesky().ok_or(Error::DegenerateMeasurement {
            variance: gram.diagonal().min() / n as f64,
            threshold: crate::gaussian::DEGENERATE_METER_THRESHOLD,
        })?;
        let residual = |beta: &DVector<f64>| -> Vec<f64> {
            (0..n)
                .map(|i| a[i] - (0..k).map(|j| beta[j] * b[j][i]).sum::<f64>())
                .collect()
        };
        let mut beta = chol.solve(&DVector::from_fn(k, |j, _| dot(&b[j], &a)));
        let r = residual(&beta);
        // one step of iterative refinement
        beta += chol.solve(&DVector::from_fn(k, |j, _| dot(&b[j], &r)));
        let r = residual(&beta);
        let dof = n as f64 - 1.0 - k as f64;
        let value = dot(&r, &r) / dof;
        Ok(Estimate {
            value,
            std_err: value * (2.0 / dof).sqrt(),
        })
    }

    /// Tab-separated `name, mean, variance, std_err` rows, one per
    /// observable. `std_err` is that of the variance.
    pub fn dump_table(&self) -> String {
        let mut out = String::from("name\tmean\tvariance\tstd_err\n");
        let n = self.n_paths as f64;
        for (i, name) in self.names.iter().enumerate() {
            let v = self.covariance[(i, i)];
            out.push_str(&format!(
                "{name}\t{:.16e}\t{:.16e}\t{:.16e}\n",
                self.mean[i],
                v,
                v * (2.0 / (n - 1.0)).sqrt()
            ));
        }
        out
    }
}

fn observable_names(steps: &[ProtocolStep]) -> Vec<String> {
    let mut groups = vec![INITIAL_SNAPSHOT.to_string()];
    for step in steps {
        if let ProtocolStep::Snapshot { name } = step {
            groups.push(name.clone());
        }
    }
    groups.push(LIVE.to_string());
    groups
        .iter()
        .flat_map(|g| QUADRATURES.iter().map(move |q| format!("{g}.{q}")))
        .collect()
}

/// Lower-triangular factor of a PSD 2×2 matrix (zero rows where degenerate).
fn cholesky2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = m[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { m[(1, 0)] / l11 } else { 0.0 };
    let l22 = (m[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

struct PathRunner<'a> {
    steps: &'a [ProtocolStep],
    osc: &'a OscillatorParams,
    cfg: &'a TrajectoryConfig,
    mech_factor: Matrix2<f64>,
    mech_mean: Vector2<f64>,
    energy_limit: f64,
}

impl PathRunner<'_> {
    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn run(&self, path: u64, out: &mut Vec<f64>) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(path);
        let vac = std::f64::consts::FRAC_1_SQRT_2;
        let z = Vector2::new(Self::normal(&mut rng), Self::normal(&mut rng));
        let mech = self.mech_mean + self.mech_factor * z;
        let mut q = [
            mech[0],
            mech[1],
            vac * Self::normal(&mut rng),
            vac * Self::normal(&mut rng),
        ];
        out.clear();
        out.extend_from_slice(&q);
        for step in self.steps {
            match step {
                ProtocolStep::Pulse { lambda } => {
                    let (x_m, x_l) = (q[0], q[2]);
                    q[3] -= lambda * x_m;
                    q[1] -= lambda * x_l;
                }
                ProtocolStep::Loss { eta } => {
                    let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
                    q[2] = t * q[2] + r * vac * Self::normal(&mut rng);
                    q[3] = t * q[3] + r * vac * Self::normal(&mut rng);
                }
                ProtocolStep::Displace { dx, dp } => {
                    q[0] += dx;
                    q[1] += dp;
                }
                ProtocolStep::Snapshot { .. } => out.extend_from_slice(&q),
                ProtocolStep::FreeEvolution { theta_rad } => {
                    let (x, p) = self.integrate(q[0], q[1], *theta_rad, &mut rng);
                    let energy = x * x + p * p;
                    if energy.is_nan() || energy > self.energy_limit {
                        return Err(Error::Unstable(format!(
                            "path {path} energy {:e} exceeds {:e}; reduce dt",
                            energy, self.energy_limit
                        )));
                    }
                    q[0] = x;
                    q[1] = p;
                }
            }
        }
        out.extend_from_slice(&q);
        Ok(())
    }

    fn integrate(&self, mut x: f64, mut p: f64, theta: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let osc = self.osc;
        let (w, g) = (osc.omega_m(), osc.gamma());
        let t = theta / w;
        if t == 0.0 {
            return (x, p);
        }
        let n = ((t / self.cfg.dt).ceil() as usize).max(self.cfg.min_segment_steps);
        let h = t / n as f64;
        let sigma = (2.0 * g * (osc.nbar() + 0.5) * h).sqrt();
        let drift = |x: f64, p: f64| (w * p, -w * x - g * p);
        for _ in 0..n {
            let dw = if sigma > 0.0 { sigma * Self::normal(rng) } else { 0.0 };
            let (fx, fp) = drift(x, p);
            match self.cfg.scheme {
                SdeScheme::EulerMaruyama => {
                    x += fx * h;
                    p += fp * h + dw;
                }
                SdeScheme::Heun => {
                    let (xt, pt) = (x + fx * h, p + fp * h + dw);
                    let (gx, gp) = drift(xt, pt);
                    x += 0.5 * (fx + gx) * h;
                    p += 0.5 * (fp + gp) * h + dw;
                }
            }
        }
        (x, p)
    }
}

/// Samples `cfg.n_paths` trajectories of `steps` starting from a Gaussian
/// mechanical state with the given moments and vacuum light.
pub fn simulate_ensemble(
    mech_moments: &Matrix2<f64>,
    mech_mean: &Vector2<f64>,
    steps: &[ProtocolStep],
    osc: &OscillatorParams,
    cfg: &TrajectoryConfig,
) -> Result<EnsembleMoments> {
    cfg.validate(osc)?;
    validate_moments(mech_moments)?;
    crate::protocol::Protocol::new(steps.to_vec()).validate()?;
    let names = observable_names(steps);
    let d = names.len();
    let initial_energy = mech_moments.trace() + mech_mean.norm_squared();
    let runner = PathRunner {
        steps,
        osc,
        cfg,
        mech_factor: cholesky2(mech_moments),
        mech_mean: *mech_mean,
        energy_limit: BLOW_UP_FACTOR * (2.0 * (osc.nbar() + 0.5)).max(initial_energy),
    };
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let paths = c * CHUNK..((c + 1) * CHUNK).min(cfg.n_paths);
            let mut rows = Vec::with_capacity(paths.len() * d);
            let mut buf = Vec::with_capacity(d);
            for path in paths {
                runner.run(path as u64, &mut buf)?;
                rows.extend_from_slice(&buf);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleMoments::from_samples(names, chunks.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::segment_stats;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn thermal(nbar: f64) -> Matrix2<f64> {
        Matrix2::identity() * (nbar + 0.5)
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v.into_iter()), 2.0);
    }

    #[test]
    fn regression_keeps_small_residuals() {
        // target = 4e4·meter + 1e-2·noise; residual variance ≈ 1e-4
        let osc = OscillatorParams::undamped(1.0).unwrap();
        let cfg = TrajectoryConfig::for_oscillator(&osc, 20_000, 2);
        let big: f64 = 1.6e9;
        let steps = [ProtocolStep::Pulse {
            lambda: 1e-2 / big.sqrt(),
        }];
        let m = simulate_ensemble(&Matrix2::new(big, 0.0, 0.0, 0.5), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        // P_M,out = P_M − λ X_L is independent of X_M; condition X_M on P_L,out
        let v = m
            .conditional_variance(&[("initial.x_m", 1.0)], &[&[("live.p_l", 1.0)]])
            .unwrap();
        let lambda: f64 = 1e-2 / big.sqrt();
        let exact = big - (lambda * big).powi(2) / (0.5 + lambda * lambda * big);
        assert!(v.z_score(exact).abs() < 3.0, "{v:?} vs {exact}");
    }

    #[test]
    fn conserved_variance_without_damping() {
        let osc = OscillatorParams::undamped(1.0).unwrap();
        let cfg = TrajectoryConfig::for_oscillator(&osc, 20_000, 7);
        let steps = [ProtocolStep::FreeEvolution { theta_rad: TAU }];
        let m = simulate_ensemble(&Matrix2::new(2.0, 0.0, 0.0, 0.5), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        let v0 = m.variance_of(&[("initial.x_m", 1.0)]).unwrap();
        let v1 = m.variance_of(&[("live.x_m", 1.0)]).unwrap();
        assert!(v1.z_score(2.0).abs() < 3.0, "{v1:?}");
        // a full turn maps each path back onto itself up to the step error
        assert!((v1.value - v0.value).abs() < 1e-3 * v0.value);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let osc = OscillatorParams::new(1.0, 0.2, 4.0).unwrap();
        let cfg = TrajectoryConfig::for_oscillator(&osc, 20_000, 11);
        let steps = [ProtocolStep::FreeEvolution { theta_rad: 30.0 }];
        let m = simulate_ensemble(&Matrix2::zeros(), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        for q in ["live.x_m", "live.p_m"] {
            let v = m.variance_of(&[(q, 1.0)]).unwrap();
            assert!(v.z_score(4.5).abs() < 3.0, "{q}: {v:?}");
        }
    }

    #[test]
    fn added_position_noise_matches_closed_form() {
        // caption oscillator, θ = 0.01, Euler–Maruyama from a sharp start
        let osc = OscillatorParams::new(TAU * 1e3, TAU, crate::units::thermal_occupation(TAU * 1e3, 100.0)).unwrap();
        let theta = 0.01;
        let t = theta / osc.omega_m();
        let cfg = TrajectoryConfig {
            n_paths: 100_000,
            dt: t / 1e3,
            seed: 3,
            scheme: SdeScheme::EulerMaruyama,
            min_segment_steps: 1,
        };
        let steps = [ProtocolStep::FreeEvolution { theta_rad: theta }];
        let m = simulate_ensemble(&Matrix2::zeros(), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        let exact = segment_stats(&osc, theta).unwrap().added_noise;
        let xx = m.variance_of(&[("live.x_m", 1.0)]).unwrap();
        let pp = m.variance_of(&[("live.p_m", 1.0)]).unwrap();
        assert!(xx.z_score(exact[(0, 0)]).abs() < 3.0, "{xx:?} vs {}", exact[(0, 0)]);
        assert!(pp.z_score(exact[(1, 1)]).abs() < 3.0, "{pp:?} vs {}", exact[(1, 1)]);
    }

    #[test]
    #[ignore = "10⁶ paths × 10⁴ steps; run with --ignored"]
    fn added_position_noise_full_size() {
        let osc = OscillatorParams::new(TAU * 1e3, TAU, crate::units::thermal_occupation(TAU * 1e3, 100.0)).unwrap();
        let theta = 0.01;
        let cfg = TrajectoryConfig {
            n_paths: 1_000_000,
            dt: theta / osc.omega_m() / 1e4,
            seed: 5,
            scheme: SdeScheme::EulerMaruyama,
            min_segment_steps: 1,
        };
        let steps = [ProtocolStep::FreeEvolution { theta_rad: theta }];
        let m = simulate_ensemble(&Matrix2::zeros(), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        let exact = segment_stats(&osc, theta).unwrap().added_noise;
        let xx = m.variance_of(&[("live.x_m", 1.0)]).unwrap();
        assert!(xx.z_score(exact[(0, 0)]).abs() < 3.0, "{xx:?} vs {}", exact[(0, 0)]);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let osc = OscillatorParams::new(1.0, 0.05, 2.0).unwrap();
        let cfg = TrajectoryConfig::for_oscillator(&osc, 3000, 99);
        let steps = crate::protocol::Protocol::double_pulse(1.0, 0.5, FRAC_PI_2, 0.9).steps;
        let a = simulate_ensemble(&thermal(2.0), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| simulate_ensemble(&thermal(2.0), &Vector2::zeros(), &steps, &osc, &cfg))
            .unwrap();
        assert_eq!(a.dump_table(), b.dump_table());
        assert_eq!(a.covariance(), b.covariance());
        assert_eq!(a.samples, b.samples);
        let c = simulate_ensemble(
            &thermal(2.0),
            &Vector2::zeros(),
            &steps,
            &osc,
            &TrajectoryConfig { seed: 100, ..cfg },
        )
        .unwrap();
        assert_ne!(a.covariance(), c.covariance());
    }

    #[test]
    fn halving_dt_is_within_one_standard_error() {
        let osc = OscillatorParams::new(1.0, 0.05, 3.0).unwrap();
        let steps = [ProtocolStep::FreeEvolution { theta_rad: 2.0 }];
        let coarse = TrajectoryConfig::for_oscillator(&osc, 20_000, 1);
        let fine = TrajectoryConfig {
            dt: coarse.dt / 2.0,
            ..coarse
        };
        let a = simulate_ensemble(&thermal(3.0), &Vector2::zeros(), &steps, &osc, &coarse).unwrap();
        let b = simulate_ensemble(&thermal(3.0), &Vector2::zeros(), &steps, &osc, &fine).unwrap();
        for q in ["live.x_m", "live.p_m"] {
            let va = a.variance_of(&[(q, 1.0)]).unwrap();
            let vb = b.variance_of(&[(q, 1.0)]).unwrap();
            assert!((va.value - vb.value).abs() < va.std_err, "{q}: {va:?} {vb:?}");
        }
    }

    #[test]
    fn default_config_resolves_short_segments() {
        // one step of 10⁻³ rad would give ¾ of the θ³ position noise
        let osc = OscillatorParams::new(1.0, 1e-3, 1e6).unwrap();
        let theta = 1e-3;
        let cfg = TrajectoryConfig::for_oscillator(&osc, 20_000, 4);
        let steps = [ProtocolStep::FreeEvolution { theta_rad: theta }];
        let m = simulate_ensemble(&Matrix2::zeros(), &Vector2::zeros(), &steps, &osc, &cfg).unwrap();
        let exact = segment_stats(&osc, theta).unwrap().added_noise[(0, 0)];
        let xx = m.variance_of(&[("live.x_m", 1.0)]).unwrap();
        assert!(xx.z_score(exact).abs() < 3.0, "{xx:?} vs {exact}");
    }

    #[test]
    fn rejects_bad_configs_and_blow_up() {
        let osc = OscillatorParams::new(1.0, 0.1, 1.0).unwrap();
        let mut cfg = TrajectoryConfig::for_oscillator(&osc, 100, 0);
        cfg.dt = 0.1;
        let steps = [ProtocolStep::FreeEvolution { theta_rad: 1.0 }];
        assert!(simulate_ensemble(&thermal(1.0), &Vector2::zeros(), &steps, &osc, &cfg).is_err());
        cfg.dt = 0.01;
        cfg.n_paths = 3;
        assert!(simulate_ensemble(&thermal(1.0), &Vector2::zeros(), &steps, &osc, &cfg).is_err());

        let m = simulate_ensemble(
            &thermal(1.0),
            &Vector2::zeros(),
            &steps,
            &osc,
            &TrajectoryConfig::for_oscillator(&osc, 100, 0),
        )
        .unwrap();
        assert!(matches!(
            m.variance_of(&[("live.q", 1.0)]),
            Err(Error::UnknownObservable { .. })
        ));
    }

    #[test]
    fn energy_blow_up_is_reported() {
        let osc = OscillatorParams::new(1.0, 0.1, 0.0).unwrap();
        let cfg = TrajectoryConfig::for_oscillator(&osc, 100, 0);
        let steps = [
            ProtocolStep::Displace { dx: 1e4, dp: 0.0 },
            ProtocolStep::FreeEvolution { theta_rad: 0.1 },
        ];
        let r = simulate_ensemble(&Matrix2::zeros(), &Vector2::zeros(), &steps, &osc, &cfg);
        assert!(matches!(r, Err(Error::Unstable(_))));
    }
}
