use std::process::{Command, Output};

use optopulse::experiments::config::{AxisConfig, Spacing, SweepConfig};
use optopulse::experiments::Preset;

fn optopulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optopulse"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sweep_config(observable: &str, variable: &str) -> tempfile::NamedTempFile {
    let mut cfg = Preset::Fig3.config();
    cfg.sweep = Some(SweepConfig {
        observable: observable.into(),
        axes: vec![AxisConfig {
            variable: variable.into(),
            start: 1.0,
            stop: 2.0,
            points: 2,
            spacing: Spacing::Linear,
        }],
    });
    let file = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
    std::fs::write(file.path(), cfg.to_toml().unwrap()).unwrap();
    file
}

#[test]
fn force_without_mass_names_the_field_and_the_inferred_value() {
    let o = optopulse(&["force"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("oscillator.mass_kg"), "{err}");
    assert!(err.contains("3.86e-10"), "{err}");
}

#[test]
fn force_with_inferred_mass_reports_both_schemes() {
    let o = optopulse(&["force", "--inferred-mass"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("scheme,lambda_total,theta_rad,wait_time_s"));
    let schemes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(schemes, ["single", "double"]);
}

#[test]
fn structured_text_is_json() {
    let o = optopulse(&["figure3", "--format", "structured-text"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.trim_start().starts_with('{'));
    assert!(out.contains("\"title\": \"figure3\""), "{out}");
}

#[test]
fn sweep_runs_from_config() {
    let cfg = sweep_config("effective_g", "lambda_total");
    let o = optopulse(&["sweep", "--config", cfg.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn unknown_observable_lists_valid_names() {
    let cfg = sweep_config("not_an_observable", "lambda_total");
    let o = optopulse(&["sweep", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("not_an_observable") && err.contains("conditional_variance"),
        "{err}"
    );
}

#[test]
fn unknown_sweep_variable_is_rejected() {
    let cfg = sweep_config("effective_g", "wavelength");
    let o = optopulse(&["sweep", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wavelength"));
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    let o = optopulse(&["sweep", "--preset", "fig3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sweep"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let file = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
    let text = Preset::Fig3
        .config()
        .to_toml()
        .unwrap()
        .replace("[optics]", "[optics]\nfinesse = 3.0");
    std::fs::write(file.path(), text).unwrap();
    let o = optopulse(&["figure3", "--config", file.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("finesse"), "{}", stderr(&o));
}

#[test]
fn validate_passes_every_check() {
    let o = optopulse(&["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 8);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",pass")), "{out}");
}

#[test]
fn bad_arguments_are_rejected_by_the_parser() {
    assert!(!optopulse(&["figure3", "--format", "xml"]).status.success());
    assert!(!optopulse(&["figure4"]).status.success());
}
