//! Scenario configuration. Frequencies are given as `ω/2π` in Hz and
//! converted to rad/s on resolution; every key carries its unit.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::table::OutputFormat;
use crate::dynamics::OscillatorParams;
use crate::error::{Error, Result};
use crate::optimize::{AllocationSearch, Conditioning, Scheme, Target};
use crate::protocol::{lambda_from_physical, PulseParams, RegimeWarning};
use crate::units::{thermal_occupation, thermal_occupation_high_t};

/// Oscillator mass back-solved from an 8 pN impulse-force sensitivity at
/// 100 K, ω_M/2π = 100 kHz, conditional momentum variance 100 and a wait of
/// 2π/50 rad. Never applied unless requested.
pub const INFERRED_MASS_KG: f64 = 3.86e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupationModel {
    #[default]
    Exact,
    HighTemperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorConfig {
    pub omega_m_hz: f64,
    pub gamma_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    #[serde(default)]
    pub occupation_model: OccupationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    pub g0_hz: f64,
    pub kappa_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_photons: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_total: Option<f64>,
    #[serde(default = "one")]
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Single,
    Double,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Single => Scheme::Single,
            SchemeName::Double => Scheme::Double,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningName {
    APriori,
    APosteriori,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub scheme: SchemeName,
    /// Fixed inter-pulse rotation; the optimizer chooses it when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_rad: Option<f64>,
    #[serde(default = "theta_min")]
    pub theta_min_rad: f64,
    #[serde(default = "theta_max")]
    pub theta_max_rad: f64,
    pub target_angle_rad: f64,
    pub conditioning: ConditioningName,
    /// Budget split `λ₁ = λ cos α, λ₂ = λ sin α` for fixed-protocol reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_angle_rad: Option<f64>,
    /// Fixed homodyne angle; optimized when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homodyne_angle_rad: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub variable: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl AxisConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.points == 0 {
            return Err(Error::config(field, "sweep range must contain at least one point"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::config(field, "sweep bounds must be finite"));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(Error::config(field, "log spacing needs positive bounds"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * f,
                    Spacing::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * f).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub observable: String,
    #[serde(rename = "axis")]
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Config {
    #[serde(default = "fig2_angles")]
    pub target_angles_rad: Vec<f64>,
    #[serde(default = "fig2_lambda_axis")]
    pub lambda_axis: AxisConfig,
    #[serde(default = "fig2_panel_lambdas")]
    pub panel_lambdas: Vec<f64>,
    #[serde(default = "fig2_angle_points")]
    pub angle_points: usize,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            target_angles_rad: fig2_angles(),
            lambda_axis: fig2_lambda_axis(),
            panel_lambdas: fig2_panel_lambdas(),
            angle_points: fig2_angle_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Config {
    #[serde(default = "fig3_temperatures")]
    pub temperatures_k: Vec<f64>,
    #[serde(default = "fig3_lambda_axis")]
    pub lambda_axis: AxisConfig,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Self {
            temperatures_k: fig3_temperatures(),
            lambda_axis: fig3_lambda_axis(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeSchemeName {
    EulerMaruyama,
    #[default]
    Heun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "oracle_cases")]
    pub cases: usize,
    #[serde(default = "oracle_paths")]
    pub n_paths: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub scheme: SdeSchemeName,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            cases: oracle_cases(),
            n_paths: oracle_paths(),
            seed: 1,
            scheme: SdeSchemeName::Heun,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub oscillator: OscillatorConfig,
    pub optics: OpticsConfig,
    pub protocol: ProtocolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub figure2: Figure2Config,
    #[serde(default)]
    pub figure3: Figure3Config,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn theta_min() -> f64 {
    AllocationSearch::default().theta_min
}
fn theta_max() -> f64 {
    AllocationSearch::default().theta_max
}
fn fig2_angles() -> Vec<f64> {
    vec![FRAC_PI_2, PI / 4.0, PI / 8.0]
}
fn fig2_lambda_axis() -> AxisConfig {
    AxisConfig {
        variable: "lambda_total".into(),
        start: 0.1,
        stop: 1000.0,
        points: 21,
        spacing: Spacing::Log,
    }
}
fn fig2_panel_lambdas() -> Vec<f64> {
    vec![60.0, 6.0, 0.6]
}
fn fig2_angle_points() -> usize {
    32
}
fn fig3_temperatures() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn fig3_lambda_axis() -> AxisConfig {
    AxisConfig {
        variable: "lambda_total".into(),
        start: 0.1,
        stop: 100.0,
        points: 16,
        spacing: Spacing::Log,
    }
}
fn oracle_cases() -> usize {
    100
}
fn oracle_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// ω_M/2π = 1 kHz, γ/2π = 1 Hz, T = 100 K.
    Fig2Caption,
    /// ω_M/2π = 100 kHz, γ/2π = 1 Hz, T = 1 K.
    Fig2Text,
    /// ω_M/2π = 100 kHz, γ/2π = 1 Hz, T ∈ {1, 10, 100} K, θ = 2π/50,
    /// a posteriori momentum.
    Fig3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig2Caption, Preset::Fig2Text, Preset::Fig3];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig2Caption => "fig2-caption",
            Preset::Fig2Text => "fig2-text",
            Preset::Fig3 => "fig3",
        }
    }

    pub fn config(&self) -> ScenarioConfig {
        let (omega_m_hz, temperature_k) = match self {
            Preset::Fig2Caption => (1e3, 100.0),
            Preset::Fig2Text => (1e5, 1.0),
            Preset::Fig3 => (1e5, 100.0),
        };
        let protocol = match self {
            Preset::Fig3 => ProtocolConfig {
                scheme: SchemeName::Double,
                theta_rad: Some(TAU / 50.0),
                theta_min_rad: theta_min(),
                theta_max_rad: theta_max(),
                target_angle_rad: FRAC_PI_2,
                conditioning: ConditioningName::APosteriori,
                split_angle_rad: None,
                homodyne_angle_rad: None,
            },
            _ => ProtocolConfig {
                scheme: SchemeName::Double,
                theta_rad: None,
                theta_min_rad: theta_min(),
                theta_max_rad: theta_max(),
                target_angle_rad: FRAC_PI_2,
                conditioning: ConditioningName::APriori,
                split_angle_rad: None,
                homodyne_angle_rad: None,
            },
        };
        ScenarioConfig {
            oscillator: OscillatorConfig {
                omega_m_hz,
                gamma_hz: 1.0,
                temperature_k: Some(temperature_k),
                nbar: None,
                mass_kg: None,
                occupation_model: OccupationModel::Exact,
            },
            optics: OpticsConfig {
                g0_hz: 1.0,
                kappa_hz: 1e9,
                tau_s: None,
                n_photons: None,
                lambda_total: Some(if *self == Preset::Fig3 { 1.0 } else { 60.0 }),
                eta: 1.0,
            },
            protocol,
            sweep: None,
            figure2: Figure2Config::default(),
            figure3: Figure3Config::default(),
            oracle: OracleConfig::default(),
            outputs: OutputsConfig::default(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::config(
                "preset",
                format!("unknown preset `{s}` (expected fig2-caption, fig2-text or fig3)"),
            )
        })
    }
}

/// A validated scenario in internal units (rad/s, dimensionless quadratures).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub osc: OscillatorParams,
    pub temperature_k: Option<f64>,
    pub mass_kg: Option<f64>,
    pub lambda_total: f64,
    pub eta: f64,
    pub scheme: Scheme,
    pub target: Target,
    pub search: AllocationSearch,
    pub split_angle: Option<f64>,
    pub homodyne_angle: Option<f64>,
    pub warnings: Vec<RegimeWarning>,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be a positive number, got {v}")))
    }
}

impl OscillatorConfig {
    pub fn occupation(&self, temperature_k: f64) -> f64 {
        let omega = TAU * self.omega_m_hz;
        match self.occupation_model {
            OccupationModel::Exact => thermal_occupation(omega, temperature_k),
            OccupationModel::HighTemperature => thermal_occupation_high_t(omega, temperature_k),
        }
    }

    fn resolve_nbar(&self) -> Result<f64> {
        match (self.temperature_k, self.nbar) {
            (Some(t), None) => {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::config(
                        "oscillator.temperature_k",
                        format!("must be ≥ 0, got {t}"),
                    ));
                }
                Ok(self.occupation(t))
            }
            (None, Some(n)) => {
                if !(n.is_finite() && n >= 0.0) {
                    return Err(Error::config("oscillator.nbar", format!("must be ≥ 0, got {n}")));
                }
                Ok(n)
            }
            _ => Err(Error::config(
                "oscillator",
                "give exactly one of temperature_k and nbar",
            )),
        }
    }

    pub fn params(&self) -> Result<OscillatorParams> {
        let omega = TAU * positive("oscillator.omega_m_hz", self.omega_m_hz)?;
        if !(self.gamma_hz.is_finite() && self.gamma_hz >= 0.0) {
            return Err(Error::config(
                "oscillator.gamma_hz",
                format!("must be ≥ 0, got {}", self.gamma_hz),
            ));
        }
        OscillatorParams::new(omega, TAU * self.gamma_hz, self.resolve_nbar()?)
            .map_err(|e| Error::config("oscillator", e.to_string()))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn lambda_total(&self) -> Result<(f64, Vec<RegimeWarning>)> {
        let o = &self.optics;
        let omega = TAU * self.oscillator.omega_m_hz;
        let pulse = |tau: f64, n: f64| PulseParams {
            g0: TAU * o.g0_hz,
            kappa: TAU * o.kappa_hz,
            tau,
            n_photons: n,
        };
        match (o.n_photons, o.lambda_total) {
            (Some(n), None) => {
                let tau = o
                    .tau_s
                    .ok_or_else(|| Error::config("optics.tau_s", "required when n_photons is given"))?;
                let p = pulse(tau, n);
                let lambda = lambda_from_physical(&p).map_err(|e| Error::config("optics", e.to_string()))?;
                Ok((lambda, p.regime_warnings(omega)))
            }
            (None, Some(l)) => {
                let l = positive("optics.lambda_total", l)?;
                let warnings = match o.tau_s {
                    Some(tau) => pulse(tau, 0.0).regime_warnings(omega),
                    None => Vec::new(),
                };
                Ok((l, warnings))
            }
            _ => Err(Error::config(
                "optics",
                "give exactly one of n_photons and lambda_total",
            )),
        }
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let osc = self.oscillator.params()?;
        if let Some(m) = self.oscillator.mass_kg {
            positive("oscillator.mass_kg", m)?;
        }
        positive("optics.g0_hz", self.optics.g0_hz)?;
        positive("optics.kappa_hz", self.optics.kappa_hz)?;
        let (lambda_total, warnings) = self.lambda_total()?;
        let eta = self.optics.eta;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::config("optics.eta", format!("must lie in [0, 1], got {eta}")));
        }
        let p = &self.protocol;
        if let Some(t) = p.theta_rad {
            positive("protocol.theta_rad", t)?;
        }
        positive("protocol.theta_min_rad", p.theta_min_rad)?;
        positive("protocol.theta_max_rad", p.theta_max_rad)?;
        if p.theta_max_rad < p.theta_min_rad {
            return Err(Error::config(
                "protocol.theta_max_rad",
                "must not be below theta_min_rad",
            ));
        }
        if !p.target_angle_rad.is_finite() {
            return Err(Error::config("protocol.target_angle_rad", "must be finite"));
        }
        let target = Target {
            angle: p.target_angle_rad,
            conditioning: match p.conditioning {
                ConditioningName::APriori => Conditioning::APriori,
                ConditioningName::APosteriori => Conditioning::APosteriori,
            },
        };
        if let Some(sweep) = &self.sweep {
            if sweep.axes.is_empty() || sweep.axes.len() > 2 {
                return Err(Error::config("sweep.axis", "a sweep needs one or two axes"));
            }
            for (i, a) in sweep.axes.iter().enumerate() {
                a.validate(&format!("sweep.axis[{i}]"))?;
            }
        }
        self.figure2.lambda_axis.validate("figure2.lambda_axis")?;
        self.figure3.lambda_axis.validate("figure3.lambda_axis")?;
        if self.figure2.angle_points == 0 {
            return Err(Error::config("figure2.angle_points", "must be ≥ 1"));
        }
        if self.figure3.temperatures_k.is_empty() {
            return Err(Error::config("figure3.temperatures_k", "must not be empty"));
        }
        if self.oracle.n_paths < 16 {
            return Err(Error::config("oracle.n_paths", "must be ≥ 16"));
        }
        let search = AllocationSearch {
            theta_min: p.theta_min_rad,
            theta_max: p.theta_max_rad,
            fixed_theta: p.theta_rad,
            ..AllocationSearch::default()
        };
        Ok(Scenario {
            osc,
            temperature_k: self.oscillator.temperature_k,
            mass_kg: self.oscillator.mass_kg,
            lambda_total,
            eta,
            scheme: p.scheme.into(),
            target,
            search,
            split_angle: p.split_angle_rad,
            homodyne_angle: p.homodyne_angle_rad,
            warnings,
        })
    }
}
