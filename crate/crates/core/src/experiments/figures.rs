use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;

use super::config::{Scenario, ScenarioConfig};
use super::table::{Cell, Table};
use crate::error::{Error, Result};
use crate::gaussian::det2;
use crate::optimize::{
    evaluate_scheme, optimal_homodyne_angle, run_scheme, Allocation, Budget, OptimizationResult, Scheme, Target,
};
use crate::protocol::effective_interaction;
use crate::units::momentum_scale;

const OPTIMIZED_COLUMNS: [&str; 5] = [
    "theta_rad",
    "lambda1",
    "lambda2",
    "homodyne_angle_rad",
    "conditional_variance",
];

fn optimized_cells(r: &OptimizationResult) -> Vec<Cell> {
    vec![
        r.allocation.theta.into(),
        r.allocation.lambda1.into(),
        r.allocation.lambda2.into(),
        r.homodyne_angle.into(),
        r.best_value.into(),
    ]
}

fn columns(leading: &[&'static str]) -> Vec<&'static str> {
    leading.iter().copied().chain(OPTIMIZED_COLUMNS).collect()
}

fn scenario_metadata(table: Table, s: &Scenario) -> Table {
    let t = table
        .meta("omega_m_rad_per_s", s.osc.omega_m())
        .meta("gamma_rad_per_s", s.osc.gamma())
        .meta("nbar", s.osc.nbar())
        .meta("phonons_per_cycle", s.osc.phonons_per_cycle())
        .meta("eta", s.eta)
        .meta(
            "theta_policy",
            match s.search.fixed_theta {
                Some(t) => format!("fixed {t:.16e} rad"),
                None => format!(
                    "optimized over [{:.16e}, {:.16e}] rad",
                    s.search.theta_min, s.search.theta_max
                ),
            },
        );
    match s.temperature_k {
        Some(tk) => t.meta("temperature_k", tk),
        None => t,
    }
}

/// Conditional variance against total interaction strength (panel a) and
/// against the mechanical quadrature angle (one panel per entry of
/// `figure2.panel_lambdas`), for both schemes.
pub fn figure2(cfg: &ScenarioConfig) -> Result<Table> {
    let s = cfg.resolve()?;
    let mut items: Vec<(String, f64, f64)> = Vec::new();
    for &phi in &cfg.figure2.target_angles_rad {
        for lambda in cfg.figure2.lambda_axis.values() {
            items.push(("a".into(), phi, lambda));
        }
    }
    let n = cfg.figure2.angle_points;
    for (i, &lambda) in cfg.figure2.panel_lambdas.iter().enumerate() {
        let panel = char::from(b'b' + (i as u8).min(24)).to_string();
        for k in 0..n {
            items.push((panel.clone(), PI * k as f64 / n as f64, lambda));
        }
    }
    let work: Vec<(&(String, f64, f64), Scheme)> = items
        .iter()
        .flat_map(|it| [(it, Scheme::Single), (it, Scheme::Double)])
        .collect();
    let results = work
        .par_iter()
        .map(|((_, phi, lambda), scheme)| {
            let target = Target {
                angle: *phi,
                conditioning: s.target.conditioning,
            };
            evaluate_scheme(*scheme, Budget::new(*lambda)?, target, s.eta, &s.osc, &s.search)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = scenario_metadata(
        Table::new("figure2", &columns(&["panel", "scheme", "phi_rad", "lambda_total"])),
        &s,
    );
    for (((panel, phi, lambda), scheme), r) in work.iter().zip(&results) {
        let mut row: Vec<Cell> = vec![
            panel.clone().into(),
            scheme.name().into(),
            (*phi).into(),
            (*lambda).into(),
        ];
        row.extend(optimized_cells(r));
        table.push(row);
    }
    Ok(table)
}

/// A posteriori momentum conditional variance against total interaction
/// strength for each temperature in `figure3.temperatures_k`.
pub fn figure3(cfg: &ScenarioConfig) -> Result<Table> {
    let s = cfg.resolve()?;
    let mut work = Vec::new();
    for &t in &cfg.figure3.temperatures_k {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::config("figure3.temperatures_k", format!("must be ≥ 0, got {t}")));
        }
        let osc = s.osc.with_nbar(cfg.oscillator.occupation(t))?;
        for lambda in cfg.figure3.lambda_axis.values() {
            for scheme in [Scheme::Single, Scheme::Double] {
                work.push((t, osc, lambda, scheme));
            }
        }
    }
    let target = Target::a_posteriori(FRAC_PI_2);
    let results = work
        .par_iter()
        .map(|(_, osc, lambda, scheme)| evaluate_scheme(*scheme, Budget::new(*lambda)?, target, s.eta, osc, &s.search))
        .collect::<Result<Vec<_>>>()?;
    let mut table = scenario_metadata(
        Table::new(
            "figure3",
            &columns(&["scheme", "temperature_k", "nbar", "lambda_total"]),
        ),
        &s,
    );
    for ((t, osc, lambda, scheme), r) in work.iter().zip(&results) {
        let mut row: Vec<Cell> = vec![scheme.name().into(), (*t).into(), osc.nbar().into(), (*lambda).into()];
        row.extend(optimized_cells(r));
        table.push(row);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceReport {
    pub scheme: Scheme,
    pub lambda_total: f64,
    pub theta_rad: f64,
    pub wait_time_s: f64,
    pub conditional_variance: f64,
    /// √V in units of `√(ħmω_M)`.
    pub momentum_std: f64,
    pub momentum_std_si: f64,
    pub force_n: f64,
}

/// Minimum detectable impulse force for the single scheme (position
/// measurement, then a quarter period) and the double scheme (momentum
/// measurement over `θ/ω_M`).
pub fn force_sensitivity(cfg: &ScenarioConfig) -> Result<(ForceReport, ForceReport)> {
    let s = cfg.resolve()?;
    let mass = s.mass_kg.ok_or_else(|| {
        Error::config(
            "oscillator.mass_kg",
            format!(
                "the oscillator mass is required for SI force output and has no default; \
                 the value inferred from the quoted force sensitivity is {:e} kg",
                super::config::INFERRED_MASS_KG
            ),
        )
    })?;
    let target = Target::a_posteriori(FRAC_PI_2);
    let budget = Budget::new(s.lambda_total)?;
    let scale = momentum_scale(mass, s.osc.omega_m());
    let report = |scheme: Scheme| -> Result<ForceReport> {
        let r = evaluate_scheme(scheme, budget, target, s.eta, &s.osc, &s.search)?;
        let theta = r.allocation.theta;
        let wait = theta / s.osc.omega_m();
        let std = r.best_value.sqrt();
        Ok(ForceReport {
            scheme,
            lambda_total: s.lambda_total,
            theta_rad: theta,
            wait_time_s: wait,
            conditional_variance: r.best_value,
            momentum_std: std,
            momentum_std_si: std * scale,
            force_n: std * scale / wait,
        })
    };
    Ok((report(Scheme::Single)?, report(Scheme::Double)?))
}

pub fn force_table(cfg: &ScenarioConfig, reports: &[ForceReport]) -> Result<Table> {
    let s = cfg.resolve()?;
    let mut table = scenario_metadata(
        Table::new(
            "force",
            &[
                "scheme",
                "lambda_total",
                "theta_rad",
                "wait_time_s",
                "conditional_variance",
                "momentum_std",
                "momentum_std_kg_m_per_s",
                "force_n",
            ],
        ),
        &s,
    )
    .meta("mass_kg", s.mass_kg.unwrap_or(f64::NAN));
    for r in reports {
        table.push(vec![
            r.scheme.name().into(),
            r.lambda_total.into(),
            r.theta_rad.into(),
            r.wait_time_s.into(),
            r.conditional_variance.into(),
            r.momentum_std.into(),
            r.momentum_std_si.into(),
            r.force_n.into(),
        ]);
    }
    Ok(table)
}

/// Observables accepted by [`sweep`].
pub const OBSERVABLES: [&str; 8] = [
    "conditional_variance",
    "optimized_conditional_variance",
    "optimal_theta_rad",
    "homodyne_angle_rad",
    "effective_g",
    "effective_phi_rad",
    "kerr",
    "det_sigma",
];

/// Configuration keys a sweep axis may vary.
pub const SWEEP_VARIABLES: [&str; 11] = [
    "lambda_total",
    "n_photons",
    "theta_rad",
    "eta",
    "temperature_k",
    "nbar",
    "target_angle_rad",
    "split_angle_rad",
    "homodyne_angle_rad",
    "omega_m_hz",
    "gamma_hz",
];

fn set_variable(cfg: &mut ScenarioConfig, name: &str, v: f64) -> Result<()> {
    match name {
        "lambda_total" => {
            cfg.optics.lambda_total = Some(v);
            cfg.optics.n_photons = None;
        }
        "n_photons" => {
            cfg.optics.n_photons = Some(v);
            cfg.optics.lambda_total = None;
        }
        "theta_rad" => cfg.protocol.theta_rad = Some(v),
        "eta" => cfg.optics.eta = v,
        "temperature_k" => {
            cfg.oscillator.temperature_k = Some(v);
            cfg.oscillator.nbar = None;
        }
        "nbar" => {
            cfg.oscillator.nbar = Some(v);
            cfg.oscillator.temperature_k = None;
        }
        "target_angle_rad" => cfg.protocol.target_angle_rad = v,
        "split_angle_rad" => cfg.protocol.split_angle_rad = Some(v),
        "homodyne_angle_rad" => cfg.protocol.homodyne_angle_rad = Some(v),
        "omega_m_hz" => cfg.oscillator.omega_m_hz = v,
        "gamma_hz" => cfg.oscillator.gamma_hz = v,
        other => {
            return Err(Error::config(
                "sweep.axis.variable",
                format!(
                    "unknown variable `{other}`; valid variables: {}",
                    SWEEP_VARIABLES.join(", ")
                ),
            ))
        }
    }
    Ok(())
}

/// The protocol a fixed-protocol observable refers to: the configured θ and
/// budget split (equal split by default).
fn fixed_allocation(s: &Scenario) -> Result<Allocation> {
    let theta = s.search.fixed_theta.ok_or_else(|| {
        Error::config(
            "protocol.theta_rad",
            "fixed-protocol observables need an explicit theta_rad",
        )
    })?;
    Ok(match s.scheme {
        Scheme::Double => {
            let (l1, l2) = Budget::new(s.lambda_total)?.split(s.split_angle.unwrap_or(FRAC_PI_4));
            Allocation {
                lambda1: l1,
                lambda2: l2,
                theta,
            }
        }
        Scheme::Single => Allocation {
            lambda1: 0.0,
            lambda2: s.lambda_total,
            theta,
        },
    })
}

/// Evaluates one named observable for a resolved scenario.
pub fn observe(name: &str, s: &Scenario) -> Result<f64> {
    let optimized = || {
        evaluate_scheme(
            s.scheme,
            Budget::new(s.lambda_total)?,
            s.target,
            s.eta,
            &s.osc,
            &s.search,
        )
    };
    let fixed_state = || -> Result<(crate::gaussian::SystemState, f64)> {
        let state = run_scheme(s.scheme, &fixed_allocation(s)?, s.eta, &s.osc)?;
        let angle = match s.homodyne_angle {
            Some(a) => a,
            None => optimal_homodyne_angle(&state, &s.target.form(&state))?.angle,
        };
        Ok((state, angle))
    };
    let effective = || -> Result<crate::protocol::EffectiveInteraction> {
        let a = fixed_allocation(s)?;
        effective_interaction(a.lambda1, a.lambda2, a.theta, s.eta)
    };
    match name {
        "conditional_variance" => {
            let (state, angle) = fixed_state()?;
            state.conditional_variance(&s.target.form(&state), &state.homodyne(angle))
        }
        "optimized_conditional_variance" => Ok(optimized()?.best_value),
        "optimal_theta_rad" => Ok(optimized()?.allocation.theta),
        "homodyne_angle_rad" => Ok(fixed_state()?.1),
        "effective_g" => Ok(effective()?.g),
        "effective_phi_rad" => Ok(effective()?.phi.unwrap_or(f64::NAN)),
        "kerr" => Ok(effective()?.kerr),
        "det_sigma" => {
            let (state, angle) = fixed_state()?;
            Ok(det2(
                &state.conditioned_mechanical_covariance(&[&state.homodyne(angle)])?,
            ))
        }
        other => Err(Error::UnknownObservable {
            name: other.to_string(),
            valid: OBSERVABLES.join(", "),
        }),
    }
}

/// Evaluates `sweep.observable` over a 1-D or 2-D grid. Rows follow the
/// axis order, the first axis varying slowest.
pub fn sweep(cfg: &ScenarioConfig) -> Result<Table> {
    cfg.validate()?;
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "a [sweep] section is required"))?;
    if !OBSERVABLES.contains(&sw.observable.as_str()) {
        return Err(Error::UnknownObservable {
            name: sw.observable.clone(),
            valid: OBSERVABLES.join(", "),
        });
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &sw.axes {
        set_variable(&mut cfg.clone(), &axis.variable, axis.start)?;
        grid = grid
            .iter()
            .flat_map(|prefix| {
                axis.values().into_iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    let values = grid
        .par_iter()
        .map(|point| {
            let mut c = cfg.clone();
            for (axis, v) in sw.axes.iter().zip(point) {
                set_variable(&mut c, &axis.variable, *v)?;
            }
            observe(&sw.observable, &c.resolve()?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols: Vec<&str> = sw.axes.iter().map(|a| a.variable.as_str()).collect();
    cols.push(&sw.observable);
    let mut table = scenario_metadata(Table::new("sweep", &cols), &cfg.resolve()?);
    for (point, v) in grid.iter().zip(values) {
        let mut row: Vec<Cell> = point.iter().map(|&x| x.into()).collect();
        row.push(v.into());
        table.push(row);
    }
    Ok(table)
}
