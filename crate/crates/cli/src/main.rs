use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use kappalab_cli::config::{resolve, Experiment, RawConfig};
use kappalab_cli::{experiments, report};

const EXIT_ERROR: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_FLAGGED: u8 = 3;

/// Runs one kappalab experiment and writes CSV tables plus a JSON summary.
#[derive(Parser, Debug)]
#[command(name = "kappalab", version)]
struct Args {
    experiment: Experiment,

    /// Dotted-key config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set noise.depolarizing_2q=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "KAPPALAB_JOBS", default_value_t = 0)]
    jobs: usize,

    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Report diagnostics and exit without computing.
    #[arg(long)]
    validate_only: bool,
}

fn fail(dir: &std::path::Path, record: serde_json::Value, code: u8) -> ExitCode {
    if let Err(e) = report::write_json(&dir.join("error.json"), &record) {
        eprintln!("could not write error record: {e}");
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut raw = match &args.config {
        Some(path) => match RawConfig::load(path) {
            Ok(raw) => raw,
            Err(e) => {
                let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("results"));
                let msg = format!("cannot read {}: {e}", path.display());
                eprintln!("{msg}");
                return fail(&dir, report::error_record("io", &msg, &[], None), EXIT_ERROR);
            }
        },
        None => RawConfig::default(),
    };
    for s in &args.set {
        raw.set(s);
    }
    if let Some(out) = &args.out {
        raw.set(&format!("output.dir={}", toml::Value::String(out.display().to_string())));
    }

    let (cfg, diags) = resolve(args.experiment, &raw);
    let resolved = cfg.resolved();
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{d}");
        }
        if args.validate_only {
            return ExitCode::from(EXIT_INVALID);
        }
        let record = report::error_record("validation", "config failed validation", &diags, Some(&resolved));
        return fail(&cfg.output_dir, record, EXIT_INVALID);
    }
    if args.validate_only {
        println!("config is valid");
        return ExitCode::SUCCESS;
    }

    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build_global() {
        eprintln!("could not size the worker pool: {e}");
    }

    let start = Instant::now();
    let outcome = match experiments::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            let record = report::error_record("runtime", &format!("{e:#}"), &[], Some(&resolved));
            return fail(&cfg.output_dir, record, EXIT_ERROR);
        }
    };
    let files = match report::write_tables(&cfg.output_dir, &resolved, &outcome.tables) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("could not write tables: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let summary = report::summary(&resolved, &outcome, &files, start.elapsed().as_secs_f64());
    let summary_path = cfg.output_dir.join(format!("{}.json", cfg.experiment.name()));
    if let Err(e) = report::write_json(&summary_path, &summary) {
        eprintln!("could not write summary: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    println!("{}", serde_json::to_string_pretty(&summary["results"]).unwrap_or_default());
    for f in &outcome.flags {
        eprintln!("flagged: {f}");
    }
    if outcome.flags.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FLAGGED)
    }
}
