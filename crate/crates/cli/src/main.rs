use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use optopulse::experiments::config::SdeSchemeName;
use optopulse::experiments::{
    self, force_table, invariant_suite, oracle_cases, oracle_suite, write_tables, OutputFormat, Preset, ScenarioConfig,
    Table, INFERRED_MASS_KG,
};
use optopulse::oracle::SdeScheme;

#[derive(Parser)]
#[command(name = "optopulse", version, about = "Pulsed optomechanical measurement model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    /// Seed for randomized suites and Monte Carlo runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    StructuredText,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig2Caption,
    Fig2Text,
    Fig3,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional variance against λ_total and against quadrature angle.
    Figure2,
    /// A posteriori momentum variance against λ_total at several temperatures
    /// (default preset: fig3).
    Figure3,
    /// Impulse-force sensitivity of the single and double schemes (default
    /// preset: fig3).
    Force {
        /// Use the mass inferred from the quoted force sensitivity.
        #[arg(long)]
        inferred_mass: bool,
    },
    /// Evaluate an observable over the [sweep] grid of the config file.
    Sweep,
    /// Run the structural invariant suite.
    Validate,
    /// Compare closed-form conditional variances with Monte Carlo estimates.
    Oracle {
        /// Number of randomized cases (default: oracle.cases).
        #[arg(long)]
        cases: Option<usize>,
        /// Trajectories per case (default: oracle.n_paths).
        #[arg(long)]
        paths: Option<usize>,
    },
}

fn load(common: &Common, default: Preset) -> optopulse::Result<ScenarioConfig> {
    if let Some(path) = &common.config {
        return ScenarioConfig::load(path);
    }
    let preset = match common.preset {
        Some(PresetArg::Fig2Caption) => Preset::Fig2Caption,
        Some(PresetArg::Fig2Text) => Preset::Fig2Text,
        Some(PresetArg::Fig3) => Preset::Fig3,
        None => default,
    };
    Ok(preset.config())
}

fn run(cli: Cli) -> optopulse::Result<bool> {
    let common = &cli.common;
    let default_preset = match cli.command {
        Command::Figure3 | Command::Force { .. } => Preset::Fig3,
        _ => Preset::Fig2Caption,
    };
    let mut cfg = load(common, default_preset)?;
    if let Some(seed) = common.seed {
        cfg.oracle.seed = seed;
    }
    let scenario = cfg.resolve()?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    let format = match common.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::StructuredText) => OutputFormat::StructuredText,
        None => cfg.outputs.format,
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.outputs.path.as_ref().map(PathBuf::from));

    let mut ok = true;
    let tables: Vec<Table> = match cli.command {
        Command::Figure2 => vec![experiments::figure2(&cfg)?],
        Command::Figure3 => vec![experiments::figure3(&cfg)?],
        Command::Force { inferred_mass } => {
            if inferred_mass {
                cfg.oscillator.mass_kg = Some(INFERRED_MASS_KG);
            }
            let (single, double) = experiments::force_sensitivity(&cfg)?;
            vec![force_table(&cfg, &[single, double])?]
        }
        Command::Sweep => vec![experiments::sweep(&cfg)?],
        Command::Validate => {
            let t = invariant_suite(cfg.oracle.seed)?;
            ok = t.rows.iter().all(|r| r[3].as_str() == Some("pass"));
            vec![t]
        }
        Command::Oracle { cases, paths } => {
            let n_cases = cases.unwrap_or(cfg.oracle.cases);
            let n_paths = paths.unwrap_or(cfg.oracle.n_paths);
            let scheme = match cfg.oracle.scheme {
                SdeSchemeName::EulerMaruyama => SdeScheme::EulerMaruyama,
                SdeSchemeName::Heun => SdeScheme::Heun,
            };
            let list = oracle_cases(cfg.oracle.seed, n_cases);
            let t = oracle_suite(&list, n_paths, cfg.oracle.seed, scheme)?;
            let passed = t
                .rows
                .iter()
                .filter(|r| r.last().and_then(|c| c.as_str()) == Some("pass"))
                .count();
            eprintln!("{passed}/{n_cases} cases within 3 standard errors");
            ok = passed as f64 >= 0.99 * n_cases as f64;
            vec![t]
        }
    };
    write_tables(&tables, format, out.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
