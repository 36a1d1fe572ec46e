//! `simpleics` — run deterministic IT/OT/IIoT simulations and export
//! labelled dataset bundles.
//!
//! Exit codes are stable API: 0 success, 1 scenario validation failure,
//! 2 I/O failure, 3 runtime abort (telemetry schema violation or bundle
//! integrity failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use simpleics_core::scenario::{ScenarioDoc, ScenarioError};
use simpleics_core::telemetry::report::{render_text, report_bundle};
use simpleics_core::world::{RunOptions, World};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "simpleics", version, about = "Deterministic industrial enterprise simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a scenario document loads and validates cleanly.
    Validate {
        /// Scenario JSON path (defaults to the bundled scenario).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Execute a run and export the dataset bundle.
    Run(RunArgs),
    /// Print the evaluation report for an exported bundle.
    Report {
        /// Bundle directory produced by `run`.
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON path (defaults to the bundled scenario).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Master seed; falls back to the document, then $SIMPLEICS_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Virtual duration, e.g. 500ms, 90s, 15m, 1h (default: document value).
    #[arg(long)]
    duration: Option<String>,
    /// Output directory for the bundle.
    #[arg(long, default_value = "simpleics-out")]
    out: PathBuf,
    /// Disable the adversary campaign for a benign-only run.
    #[arg(long)]
    no_campaign: bool,
    #[arg(long, value_enum, default_value_t = ProfileArg::Normal)]
    profile: ProfileArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Lowest-precedence seed source.
    #[arg(long, env = "SIMPLEICS_SEED", hide = true)]
    simpleics_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Normal,
    /// NPC frequencies and poll rates scaled by ten.
    Stress,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => cmd_validate(scenario.as_deref()),
        Command::Run(args) => cmd_run(args),
        Command::Report { bundle, format } => cmd_report(&bundle, format),
    }
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioDoc, ExitCode> {
    let result = match path {
        Some(path) => ScenarioDoc::load(path),
        None => Ok(ScenarioDoc::default_scenario()),
    };
    result.map_err(|err| match err {
        ScenarioError::Io(e) => {
            eprintln!("error: cannot read scenario: {e}");
            ExitCode::from(EXIT_IO)
        }
        e @ (ScenarioError::Parse(_) | ScenarioError::Validation(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    })
}

fn cmd_validate(path: Option<&Path>) -> ExitCode {
    match load_scenario(path) {
        Ok(doc) => {
            println!(
                "{}: ok ({} hosts, {} segments, {} firewalls, {} plcs)",
                doc.name,
                doc.hosts.len(),
                doc.topology.segments.len(),
                doc.topology.firewalls.len(),
                doc.plcs.len()
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

/// Parses `500ms` / `90s` / `15m` / `1h` into virtual microseconds.
fn parse_duration(text: &str) -> Option<u64> {
    let text = text.trim();
    let (number, unit) = text.split_at(text.find(|c: char| !c.is_ascii_digit())?);
    let value: u64 = number.parse().ok()?;
    let per_unit = match unit.trim() {
        "ms" => 1_000,
        "s" => 1_000_000,
        "m" => 60 * 1_000_000,
        "h" => 3_600 * 1_000_000,
        _ => return None,
    };
    Some(value * per_unit)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let doc = match load_scenario(args.scenario.as_deref()) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let duration_us = match &args.duration {
        Some(text) => match parse_duration(text) {
            Some(us) if us > 0 => us,
            _ => {
                eprintln!("error: cannot parse duration '{text}' (use ms/s/m/h)");
                return ExitCode::from(EXIT_VALIDATION);
            }
        },
        None => doc.run.duration_s * 1_000_000,
    };

    let options = RunOptions {
        seed: args.seed.or(doc.run.seed).or(args.simpleics_seed),
        campaign_enabled: if args.no_campaign { Some(false) } else { None },
        stress: matches!(args.profile, ProfileArg::Stress),
    };
    let mut world = match World::materialize(doc, &options) {
        Ok(world) => world,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };

    let run_result = world.run_until(duration_us);
    let aborted = run_result.is_err();
    if let Err(e) = &run_result {
        eprintln!("runtime abort: {e}");
    }

    match world.export(&args.out) {
        Ok(manifest) => {
            if aborted {
                // mark the bundle as partial so consumers do not trust it
                let marker = args.out.join("PARTIAL");
                let _ = std::fs::write(&marker, "run aborted before the configured horizon\n");
            }
            match args.format {
                Format::Json => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
                    );
                }
                Format::Text => {
                    println!(
                        "run complete: {} (seed {}, profile {})",
                        manifest.scenario_name, manifest.seed, manifest.profile
                    );
                    println!(
                        "  virtual span: {:.0}s, {} events dispatched",
                        (manifest.clock_span_us.1 - manifest.clock_span_us.0) as f64 / 1e6,
                        manifest.events_dispatched
                    );
                    for (category, count) in &manifest.counts {
                        println!("  {category:?}: {count} records");
                    }
                    println!(
                        "  packets: {} sent / {} delivered / {} dropped",
                        manifest.packets_sent, manifest.packets_delivered, manifest.packets_dropped
                    );
                    if manifest.campaign.enabled {
                        println!(
                            "  campaign: {} phases, {} techniques{}",
                            manifest.campaign.phases_completed,
                            manifest.campaign.executed_techniques.len(),
                            if manifest.campaign.aborted { " (aborted)" } else { "" }
                        );
                    }
                    println!("  bundle: {}", args.out.display());
                }
            }
            if aborted {
                ExitCode::from(EXIT_RUNTIME)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: export failed: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn cmd_report(bundle: &Path, format: Format) -> ExitCode {
    if !bundle.join("manifest.json").exists() {
        eprintln!("error: no manifest.json under {}", bundle.display());
        return ExitCode::from(EXIT_IO);
    }
    match report_bundle(bundle) {
        Ok(report) => {
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                ),
                Format::Text => print!("{}", render_text(&report)),
            }
            if report.integrity_issues.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: bundle failed integrity checks");
                ExitCode::from(EXIT_RUNTIME)
            }
        }
        Err(e) => {
            eprintln!("error: cannot read bundle: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_units() {
        assert_eq!(parse_duration("500ms"), Some(500_000));
        assert_eq!(parse_duration("90s"), Some(90_000_000));
        assert_eq!(parse_duration("15m"), Some(900_000_000));
        assert_eq!(parse_duration("1h"), Some(3_600_000_000));
        assert_eq!(parse_duration("oops"), None);
        assert_eq!(parse_duration("10"), None);
    }
}
