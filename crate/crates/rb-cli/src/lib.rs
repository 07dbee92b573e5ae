//! `rbk`: runs one pipeline per invocation from a JSON configuration and
//! writes CSV/JSON artifacts plus a manifest with their hashes.
//!
//! Exit codes: 0 success, 1 configuration error, 2 pipeline error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;

use clap::{Parser, ValueEnum};
use config::{Command, Diagnostic, RunConfig};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "rbk", version, about = "Kinetic Rayleigh-Benard pipelines")]
pub struct Cli {
    /// A pipeline (critical, neutral-curve, rolls, evolve, expand, milne,
    /// gap, slab, picard), `validate`, or `defaults` to print the default
    /// configuration. Without it the config's `command` runs.
    pub action: Option<String>,
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key.path=value`, applied in order after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

enum Action {
    Run(Option<Command>),
    Validate,
    Defaults,
}

fn parse_action(s: Option<&str>) -> Result<Action, Diagnostic> {
    match s {
        None => Ok(Action::Run(None)),
        Some("validate") => Ok(Action::Validate),
        Some("defaults") => Ok(Action::Defaults),
        Some(name) => Command::from_str(name, false)
            .map(|c| Action::Run(Some(c)))
            .map_err(|_| Diagnostic { field: "command".into(), message: format!("unknown command `{name}`") }),
    }
}

/// Load the file (or defaults), then apply overrides, command, seed and
/// output directory, in that order.
pub fn load_config(cli: &Cli, command: Option<Command>) -> Result<RunConfig, Diagnostic> {
    let mut v = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Diagnostic { field: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            serde_json::from_str::<Value>(&text).map_err(|e| Diagnostic { field: "--config".into(), message: format!("{}: {e}", path.display()) })?
        }
        None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
    };
    for o in &cli.overrides {
        config::apply_override(&mut v, o)?;
    }
    let obj = v.as_object_mut().ok_or_else(|| Diagnostic { field: "".into(), message: "configuration must be a JSON object".into() })?;
    if let Some(c) = command {
        obj.insert("command".into(), serde_json::to_value(c).unwrap());
    }
    if let Some(s) = cli.seed {
        obj.insert("seed".into(), s.into());
    }
    if let Some(o) = &cli.out {
        obj.insert("out_dir".into(), json!(o));
    }
    config::from_value(v)
}

fn report(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("config error: {d}");
    }
}

/// Execute a validated configuration and write the manifest.
pub fn execute(cfg: &RunConfig) -> i32 {
    let resolved = match cfg.physics.resolve() {
        Ok(r) => r,
        Err(d) => {
            report(&[d]);
            return EXIT_CONFIG;
        }
    };
    let mut art = match io::Artifacts::new(&cfg.out_dir) {
        Ok(a) => a,
        Err(e) => {
            report(&[Diagnostic { field: "out_dir".into(), message: format!("{}: {e}", cfg.out_dir.display()) }]);
            return EXIT_CONFIG;
        }
    };
    let start = Instant::now();
    let summary = match commands::dispatch(cfg, &resolved, &mut art) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PIPELINE;
        }
    };
    let manifest = json!({
        "schema_version": config::SCHEMA_VERSION,
        "tool": "rbk",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "seed": cfg.seed,
        "config": cfg,
        "resolved": resolved,
        "tolerances": cfg.tolerances,
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
        "outputs": art.entries,
        "summary": summary,
    });
    let path = art.dir().join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = std::fs::write(&path, text) {
        eprintln!("error: writing {}: {e}", path.display());
        return EXIT_PIPELINE;
    }
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    EXIT_OK
}

pub fn run(cli: &Cli) -> i32 {
    let action = match parse_action(cli.action.as_deref()) {
        Ok(a) => a,
        Err(d) => {
            report(&[d]);
            return EXIT_CONFIG;
        }
    };
    let command = if let Action::Run(c) = action { c } else { None };
    let cfg = match load_config(cli, command) {
        Ok(c) => c,
        Err(d) => {
            report(&[d]);
            return EXIT_CONFIG;
        }
    };
    let diags = config::validate(&cfg);
    match action {
        Action::Defaults => {
            println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
            EXIT_OK
        }
        Action::Validate => {
            println!("{}", serde_json::to_string_pretty(&diags).unwrap());
            if diags.is_empty() { EXIT_OK } else { EXIT_CONFIG }
        }
        Action::Run(_) if !diags.is_empty() => {
            report(&diags);
            EXIT_CONFIG
        }
        Action::Run(_) => execute(&cfg),
    }
}
