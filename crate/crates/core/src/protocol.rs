//! Elementary optomechanical maps and their composition.
//!
//! A pulse `exp(−iλ X_M X_L)` acts in the Heisenberg picture as
//! `P_L → P_L − λ X_M`, `P_M → P_M − λ X_L`. Loss is a beam splitter with
//! intensity transmission `η` mixing in a fresh vacuum mode. A protocol is an
//! ordered list of such steps applied left to right to a [`SystemState`].
//!
//! Composing `[Pulse(λ₁), FreeEvolution(θ), Pulse(λ₂)]` without damping gives
//! `P_L,out = P_L − 𝒢·X_M^φ + λ₁λ₂ sin θ·X_L` and a momentum back-action
//! coefficient `−(λ₂ + λ₁ cos θ)` on `X_L`. With loss `η` after each pulse the
//! back action on momentum becomes `−(√η λ₂ + λ₁ cos θ)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_free_evolution, OscillatorParams};
use crate::error::{Error, Result};
use crate::gaussian::{NoiseKind, QuadratureForm, Quadratures, SystemState};

/// Physical pulse parameters. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub g0: f64,
    pub kappa: f64,
    pub tau: f64,
    pub n_photons: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeWarning {
    /// `τ·κ` is not large: the cavity does not follow the pulse adiabatically.
    NotAdiabatic { tau_kappa: f64 },
    /// `τ·ω_M` is not small: the oscillator moves during the pulse.
    NotFrozen { tau_omega: f64 },
    /// `κ/ω_M` is not large: the sideband is resolved.
    ResolvedSideband { kappa_over_omega: f64 },
}

// Ratios counted as "≫" for the regime checks.
const MUCH_GREATER: f64 = 10.0;

impl std::fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeWarning::NotAdiabatic { tau_kappa } => {
                write!(
                    f,
                    "tau·kappa = {tau_kappa:.3e}; pulse is not long compared with the cavity lifetime"
                )
            }
            RegimeWarning::NotFrozen { tau_omega } => {
                write!(
                    f,
                    "tau·omega_m = {tau_omega:.3e}; oscillator is not frozen during the pulse"
                )
            }
            RegimeWarning::ResolvedSideband { kappa_over_omega } => {
                write!(
                    f,
                    "kappa/omega_m = {kappa_over_omega:.3e}; not in the unresolved-sideband limit"
                )
            }
        }
    }
}

impl PulseParams {
    /// Checks the adiabatic, frozen-oscillator and bad-cavity assumptions.
    pub fn regime_warnings(&self, omega_m: f64) -> Vec<RegimeWarning> {
        let mut out = Vec::new();
        let tau_kappa = self.tau * self.kappa;
        if tau_kappa < MUCH_GREATER {
            out.push(RegimeWarning::NotAdiabatic { tau_kappa });
        }
        let tau_omega = self.tau * omega_m;
        if tau_omega * MUCH_GREATER > 1.0 {
            out.push(RegimeWarning::NotFrozen { tau_omega });
        }
        let kappa_over_omega = self.kappa / omega_m;
        if kappa_over_omega < MUCH_GREATER {
            out.push(RegimeWarning::ResolvedSideband { kappa_over_omega });
        }
        out
    }

    /// Mean photon number giving interaction strength `lambda`.
    pub fn photons_for_lambda(g0: f64, kappa: f64, tau: f64, lambda: f64) -> f64 {
        kappa * lambda * lambda / (16.0 * std::f64::consts::TAU.sqrt() * tau * g0 * g0)
    }
}

/// `λ = 4 (2π)^{1/4} √(τ N̄ g₀² / κ)`.
pub fn lambda_from_physical(p: &PulseParams) -> Result<f64> {
    for (name, v) in [("g0", p.g0), ("kappa", p.kappa), ("tau", p.tau)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p.n_photons.is_finite() && p.n_photons >= 0.0) {
        return Err(Error::domain(format!(
            "mean photon number must be ≥ 0, got {}",
            p.n_photons
        )));
    }
    Ok(4.0 * std::f64::consts::TAU.powf(0.25) * (p.tau * p.n_photons * p.g0 * p.g0 / p.kappa).sqrt())
}

/// One elementary map. Field names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolStep {
    Pulse { lambda: f64 },
    FreeEvolution { theta_rad: f64 },
    Loss { eta: f64 },
    Displace { dx: f64, dp: f64 },
    Snapshot { name: String },
}

/// An ordered list of steps, serialized as a TOML array of `[[step]]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(rename = "step", default)]
    pub steps: Vec<ProtocolStep>,
}

impl Protocol {
    pub fn new(steps: Vec<ProtocolStep>) -> Self {
        Self { steps }
    }

    /// `B_η U₂ B_η M_θ U₁`.
    pub fn double_pulse(lambda1: f64, lambda2: f64, theta: f64, eta: f64) -> Self {
        let mut steps = vec![ProtocolStep::Pulse { lambda: lambda1 }];
        if eta != 1.0 {
            steps.push(ProtocolStep::Loss { eta });
        }
        steps.push(ProtocolStep::FreeEvolution { theta_rad: theta });
        steps.push(ProtocolStep::Pulse { lambda: lambda2 });
        if eta != 1.0 {
            steps.push(ProtocolStep::Loss { eta });
        }
        Self::new(steps)
    }

    /// Wait `theta`, then a single pulse (measures the a priori `X_M^θ`).
    pub fn wait_then_measure(lambda: f64, theta: f64, eta: f64) -> Self {
        let mut steps = vec![
            ProtocolStep::FreeEvolution { theta_rad: theta },
            ProtocolStep::Pulse { lambda },
        ];
        if eta != 1.0 {
            steps.push(ProtocolStep::Loss { eta });
        }
        Self::new(steps)
    }

    /// A single pulse, then wait `theta`.
    pub fn measure_then_wait(lambda: f64, theta: f64, eta: f64) -> Self {
        let mut steps = vec![ProtocolStep::Pulse { lambda }];
        if eta != 1.0 {
            steps.push(ProtocolStep::Loss { eta });
        }
        steps.push(ProtocolStep::FreeEvolution { theta_rad: theta });
        Self::new(steps)
    }

    pub fn validate(&self) -> Result<()> {
        for step in &self.steps {
            match step {
                ProtocolStep::Pulse { lambda } if !lambda.is_finite() => {
                    return Err(Error::domain(format!("pulse strength must be finite, got {lambda}")));
                }
                ProtocolStep::FreeEvolution { theta_rad } if !(theta_rad.is_finite() && *theta_rad >= 0.0) => {
                    return Err(Error::domain(format!("rotation angle must be ≥ 0, got {theta_rad}")));
                }
                ProtocolStep::Loss { eta } => check_eta(*eta)?,
                ProtocolStep::Displace { dx, dp } if !(dx.is_finite() && dp.is_finite()) => {
                    return Err(Error::domain("displacement must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Protocol = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("transmission eta must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// `exp(−iλ X_M X_L)`: `P_L ← P_L − λX_M`, `P_M ← P_M − λX_L`.
pub fn apply_pulse(state: &SystemState, lambda: f64) -> SystemState {
    if lambda == 0.0 {
        return state.clone();
    }
    let live = state.live();
    state.with_live(Quadratures {
        x_m: live.x_m.clone(),
        p_m: live.p_m.combine(1.0, &live.x_l, -lambda),
        x_l: live.x_l.clone(),
        p_l: live.p_l.combine(1.0, &live.x_m, -lambda),
    })
}

/// Beam splitter with intensity transmission `eta` onto a fresh vacuum.
pub fn apply_loss(state: &SystemState, eta: f64) -> Result<SystemState> {
    check_eta(eta)?;
    if eta == 1.0 {
        return Ok(state.clone());
    }
    let mut next = state.clone();
    let vac = next.push_mode(NoiseKind::LossVacuum, nalgebra::Matrix2::identity() * 0.5)?;
    let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
    let live = state.live();
    next.set_live(Quadratures {
        x_m: live.x_m.clone(),
        p_m: live.p_m.clone(),
        x_l: live.x_l.combine(t, &QuadratureForm::unit(vac, 0), r),
        p_l: live.p_l.combine(t, &QuadratureForm::unit(vac, 1), r),
    });
    Ok(next)
}

/// Deterministic displacement of the mechanical means.
pub fn apply_displacement(state: &SystemState, dx: f64, dp: f64) -> SystemState {
    let live = state.live();
    let x_m = live.x_m.clone();
    let p_m = live.p_m.clone();
    let (ox, op) = (x_m.offset(), p_m.offset());
    state.with_live(Quadratures {
        x_m: x_m.with_offset(ox + dx),
        p_m: p_m.with_offset(op + dp),
        x_l: live.x_l.clone(),
        p_l: live.p_l.clone(),
    })
}

pub fn apply_step(state: &SystemState, step: &ProtocolStep, osc: &OscillatorParams) -> Result<SystemState> {
    match step {
        ProtocolStep::Pulse { lambda } => {
            if !lambda.is_finite() {
                return Err(Error::domain(format!("pulse strength must be finite, got {lambda}")));
            }
            Ok(apply_pulse(state, *lambda))
        }
        ProtocolStep::FreeEvolution { theta_rad } => apply_free_evolution(state, osc, *theta_rad),
        ProtocolStep::Loss { eta } => apply_loss(state, *eta),
        ProtocolStep::Displace { dx, dp } => Ok(apply_displacement(state, *dx, *dp)),
        ProtocolStep::Snapshot { name } => Ok(state.record_snapshot(name)),
    }
}

/// Applies `steps` in order to `initial`.
pub fn run_protocol(initial: &SystemState, steps: &[ProtocolStep], osc: &OscillatorParams) -> Result<SystemState> {
    steps
        .iter()
        .try_fold(initial.clone(), |state, step| apply_step(&state, step, osc))
}

/// Effective single interaction `exp(−i𝒢 X_L X_M^φ)` of a double pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveInteraction {
    pub g: f64,
    /// `None` when `g = 0` and the measured quadrature is undefined.
    pub phi: Option<f64>,
    /// Coefficient of `X_L` in `P_L,out`.
    pub kerr: f64,
}

/// `𝒢 = (η²λ₁² + ηλ₂² + 2η^{3/2}λ₁λ₂ cos θ)^{1/2}`,
/// `φ = atan2(λ₂ sin θ, λ₂ cos θ + √η λ₁)`, Kerr `√η λ₁λ₂ sin θ`.
/// With `eta = 1` these reduce to the lossless expressions.
pub fn effective_interaction(lambda1: f64, lambda2: f64, theta: f64, eta: f64) -> Result<EffectiveInteraction> {
    check_eta(eta)?;
    let se = eta.sqrt();
    let (s, c) = theta.sin_cos();
    let along = lambda2 * c + se * lambda1;
    let across = lambda2 * s;
    let g = se * along.hypot(across);
    let phi = (g > 0.0).then(|| across.atan2(along));
    Ok(EffectiveInteraction {
        g,
        phi,
        kerr: se * lambda1 * lambda2 * s,
    })
}

/// Second pulse strength that cancels the `X_L` back action on `P_M,out`
/// for the protocol `B_η U₂ B_η M_θ U₁`: `λ₂ = −λ₁ cos θ / √η`.
pub fn backaction_evading_lambda2(lambda1: f64, theta: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if eta == 0.0 {
        return Err(Error::domain("back-action evasion needs eta > 0"));
    }
    Ok(-lambda1 * theta.cos() / eta.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    fn rot() -> OscillatorParams {
        OscillatorParams::undamped(1.0).unwrap()
    }

    #[test]
    fn lambda_from_physical_examples() {
        let mut p = PulseParams {
            g0: TAU,
            kappa: TAU * 1e9,
            tau: 1e-9,
            n_photons: 0.0,
        };
        assert_eq!(lambda_from_physical(&p).unwrap(), 0.0);
        p.n_photons = 1e12;
        let l1 = lambda_from_physical(&p).unwrap();
        p.n_photons = 4e12;
        assert_relative_eq!(lambda_from_physical(&p).unwrap(), 2.0 * l1, max_relative = 1e-15);

        // N̄ for λ = 1 by hand: κ/(16·√(2π)·τ·g₀²)
        let n = (TAU * 1e9) / (16.0 * 2.5066282746310002 * 1e-9 * TAU * TAU);
        assert_relative_eq!(
            PulseParams::photons_for_lambda(TAU, TAU * 1e9, 1e-9, 1.0),
            n,
            max_relative = 1e-14
        );
        p.n_photons = n;
        assert_relative_eq!(lambda_from_physical(&p).unwrap(), 1.0, max_relative = 1e-14);

        p.kappa = 0.0;
        assert!(lambda_from_physical(&p).is_err());
    }

    #[test]
    fn regime_warnings() {
        let ok = PulseParams {
            g0: TAU,
            kappa: TAU * 1e9,
            tau: 1e-8,
            n_photons: 1.0,
        };
        assert!(ok.regime_warnings(TAU * 1e3).is_empty());
        let short = PulseParams { tau: 1e-11, ..ok };
        assert!(matches!(
            short.regime_warnings(TAU * 1e3)[..],
            [RegimeWarning::NotAdiabatic { .. }]
        ));
        let slow = PulseParams { tau: 1e-3, ..ok };
        assert!(slow
            .regime_warnings(TAU * 1e3)
            .iter()
            .any(|w| matches!(w, RegimeWarning::NotFrozen { .. })));
    }

    #[test]
    fn pulse_examples() {
        let s = SystemState::thermal(1.0).unwrap();
        assert_eq!(apply_pulse(&s, 0.0), s);

        let out = apply_pulse(&s, 1.5);
        let light = s.initial_light_mode();
        let mech = s.initial_mech_mode();
        assert_eq!(out.live().p_m.coeff(light, 0), -1.5);
        assert_eq!(out.live().p_l.coeff(mech, 0), -1.5);
        assert_eq!(out.live().x_m, s.live().x_m);
        assert_eq!(out.live().x_l, s.live().x_l);

        let ab = apply_pulse(&apply_pulse(&s, 0.4), 0.9);
        let single = apply_pulse(&s, 1.3);
        assert!((ab.linear_map() - single.linear_map()).abs().max() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let s = SystemState::ground();
        assert_eq!(apply_loss(&s, 1.0).unwrap(), s);

        let dark = apply_loss(&s, 0.0).unwrap();
        assert_eq!(dark.registry().len(), 3);
        assert_eq!(dark.live().x_l.coeff(s.initial_light_mode(), 0), 0.0);
        assert_eq!(dark.variance(&dark.live().x_l).unwrap(), 0.5);

        let partial = apply_loss(&s, 0.81).unwrap();
        assert_relative_eq!(partial.variance(&partial.live().x_l).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(partial.variance(&partial.live().p_l).unwrap(), 0.5, epsilon = 1e-15);

        assert!(apply_loss(&s, 1.2).is_err());
        assert!(apply_loss(&s, -0.1).is_err());
    }

    #[test]
    fn empty_protocol_is_identity() {
        let s = SystemState::thermal(4.0).unwrap();
        assert_eq!(run_protocol(&s, &[], &rot()).unwrap(), s);
    }

    #[test]
    fn lossless_double_pulse_by_hand() {
        // Hand composition of U₁, R(θ), U₂ on (X_M, P_M, X_L, P_L):
        //   X_M' = X_M c + P_M s − λ₁ s X_L
        //   P_M' = P_M c − X_M s − (λ₂ + λ₁ c) X_L
        //   X_L' = X_L
        //   P_L' = P_L − (λ₁ + λ₂ c) X_M − λ₂ s P_M + λ₁λ₂ s X_L
        let (l1, l2, th) = (0.7, -1.3, 0.45_f64);
        let (s, c) = th.sin_cos();
        let state = SystemState::thermal(0.0).unwrap();
        let out = run_protocol(&state, &Protocol::double_pulse(l1, l2, th, 1.0).steps, &rot()).unwrap();
        let expected = nalgebra::Matrix4::new(
            c,
            s,
            -l1 * s,
            0.0, //
            -s,
            c,
            -(l2 + l1 * c),
            0.0, //
            0.0,
            0.0,
            1.0,
            0.0, //
            -(l1 + l2 * c),
            -l2 * s,
            l1 * l2 * s,
            1.0,
        );
        assert!((out.linear_map() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn lossy_double_pulse_structure() {
        let (l1, l2, th, eta) = (1.1, 0.6, 0.8_f64, 0.81_f64);
        let (s, c) = th.sin_cos();
        let se = eta.sqrt();
        let state = SystemState::thermal(0.0).unwrap();
        let out = run_protocol(&state, &Protocol::double_pulse(l1, l2, th, eta).steps, &rot()).unwrap();
        let m = out.linear_map();
        // P_M,out back action and X_L,out, P_L,out transmission factors
        assert_relative_eq!(m[(1, 2)], -(se * l2 + l1 * c), epsilon = 1e-15);
        assert_relative_eq!(m[(2, 2)], eta, epsilon = 1e-15);
        assert_relative_eq!(m[(3, 3)], eta, epsilon = 1e-15);
        assert_relative_eq!(m[(3, 2)], se * l1 * l2 * s, epsilon = 1e-15);
        let eff = effective_interaction(l1, l2, th, eta).unwrap();
        let phi = eff.phi.unwrap();
        assert_relative_eq!(m[(3, 0)], -eff.g * phi.cos(), epsilon = 1e-14);
        assert_relative_eq!(m[(3, 1)], -eff.g * phi.sin(), epsilon = 1e-14);

        // vacuum entering from each loss port
        let vac: Vec<_> = out
            .registry()
            .iter()
            .filter(|mode| mode.kind() == NoiseKind::LossVacuum)
            .map(|mode| mode.id())
            .collect();
        assert_eq!(vac.len(), 2);
        let x_l = &out.live().x_l;
        assert_relative_eq!(x_l.coeff(vac[0], 0), (eta - eta * eta).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(x_l.coeff(vac[1], 0), (1.0 - eta).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(
            out.live().p_m.coeff(vac[0], 0),
            -l2 * (1.0 - eta).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn effective_interaction_examples() {
        let e = effective_interaction(1.7, 0.0, 0.3, 1.0).unwrap();
        assert_relative_eq!(e.g, 1.7);
        assert_eq!(e.phi, Some(0.0));

        let e = effective_interaction(1.0, 1.0, FRAC_PI_2, 1.0).unwrap();
        assert_relative_eq!(e.g, 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(e.phi.unwrap(), FRAC_PI_4, max_relative = 1e-15);

        for l2 in [-2.0, 0.3, 1.0, 4.5] {
            let e = effective_interaction(1.0, l2, PI, 1.0).unwrap();
            assert_relative_eq!(e.g, (1.0 - l2).abs(), epsilon = 1e-15);
        }

        let e = effective_interaction(0.0, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(e.g, 0.0);
        assert_eq!(e.phi, None);

        assert!(effective_interaction(1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn backaction_evasion_examples() {
        assert!(backaction_evading_lambda2(2.0, FRAC_PI_2, 1.0).unwrap().abs() < 1e-15);
        for eta in [1.0, 0.81] {
            let l1 = 1.3;
            let l2 = backaction_evading_lambda2(l1, 0.2, eta).unwrap();
            let out = run_protocol(
                &SystemState::ground(),
                &Protocol::double_pulse(l1, l2, 0.2, eta).steps,
                &rot(),
            )
            .unwrap();
            let light = out.initial_light_mode();
            assert!(out.live().p_m.coeff(light, 0).abs() < 1e-12);
        }
        assert!(backaction_evading_lambda2(1.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn snapshots_and_displacement() {
        let steps = vec![
            ProtocolStep::Displace { dx: 1.0, dp: -2.0 },
            ProtocolStep::Snapshot { name: "kicked".into() },
            ProtocolStep::FreeEvolution { theta_rad: FRAC_PI_2 },
        ];
        let out = run_protocol(&SystemState::ground(), &steps, &rot()).unwrap();
        let snap = out.snapshot("kicked").unwrap();
        assert_eq!(snap.x_m.offset(), 1.0);
        assert_eq!(snap.p_m.offset(), -2.0);
        assert_relative_eq!(out.live().x_m.offset(), -2.0, epsilon = 1e-15);
        assert_relative_eq!(out.live().p_m.offset(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn protocol_toml_round_trip() {
        let mut p = Protocol::double_pulse(1.0, -0.25, 0.125, 0.9);
        p.steps.push(ProtocolStep::Snapshot { name: "end".into() });
        p.steps.push(ProtocolStep::Displace { dx: 0.5, dp: 0.0 });
        let text = p.to_toml().unwrap();
        assert!(text.contains("theta_rad"));
        assert_eq!(Protocol::from_toml(&text).unwrap(), p);

        let bad = "[[step]]\nkind = \"loss\"\neta = 2.0\n";
        assert!(Protocol::from_toml(bad).is_err());
        let unknown = "[[step]]\nkind = \"pulse\"\nlambda = 1.0\ntheta = 3.0\n";
        assert!(Protocol::from_toml(unknown).is_err());
    }
}
