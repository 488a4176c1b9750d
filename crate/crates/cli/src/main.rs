use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use flatctl::config::{parse_config_for, Mode};
use flatctl::demos::{demo_config, DEMOS};
use flatctl::pipeline::{run, schema_failure, EXIT_SCHEMA};

const DEFAULT_OUT: &str = "flatctl-out";

/// Flatness-based null-control synthesis for 1-D parabolic equations.
#[derive(Parser, Debug)]
#[command(name = "flatctl", version)]
struct Args {
    /// validate | eigs | genfun | synthesize | simulate | verify | internal | demo
    mode: String,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Demo name (demo mode).
    #[arg(long)]
    name: Option<String>,
    /// Output directory; overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_SCHEMA as u8 } else { 0 });
        }
    };
    ExitCode::from(execute(args) as u8)
}

fn execute(args: Args) -> i32 {
    let mut out = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let Some(mode) = Mode::parse(&args.mode) else {
        let names: Vec<&str> = Mode::ALL.iter().map(|(n, _)| *n).collect();
        eprintln!("flatctl: unknown mode {:?} (expected one of {})", args.mode, names.join(", "));
        return EXIT_SCHEMA;
    };

    let text = match (mode, &args.config, &args.name) {
        (_, Some(path), _) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                let o = schema_failure(&out, mode.name(), format!("{}: {e}", path.display()), None);
                eprintln!("flatctl: {}", o.report.error.unwrap_or_default());
                return o.code;
            }
        },
        (Mode::Demo, None, Some(name)) => match demo_config(name) {
            Some(t) => t.to_string(),
            None => {
                let names: Vec<&str> = DEMOS.iter().map(|(n, _)| *n).collect();
                let msg = format!("unknown demo {name:?} (expected one of {})", names.join(", "));
                eprintln!("flatctl: {msg}");
                return schema_failure(&out, mode.name(), msg, Some(name.clone())).code;
            }
        },
        _ => {
            let msg = if mode == Mode::Demo {
                "demo mode needs --name or --config"
            } else {
                "this mode needs --config"
            };
            eprintln!("flatctl: {msg}");
            return schema_failure(&out, mode.name(), msg.into(), None).code;
        }
    };

    // a demo's own configuration names the mode it runs
    let forced = (mode != Mode::Demo || args.config.is_some()).then_some(mode);
    let cfg = match parse_config_for(&text, forced) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("flatctl: invalid configuration\n{e}");
            return schema_failure(&out, mode.name(), e.to_string(), args.name.clone()).code;
        }
    };
    if args.out.is_none() {
        if let Some(o) = &cfg.out {
            out = o.clone();
        }
    }
    let mut cfg = cfg;
    if mode == Mode::Demo && cfg.demo.is_none() {
        cfg.demo = args.name.clone();
    }
    let outcome = run(&cfg, &out);
    if let Some(name) = args.name.filter(|_| mode == Mode::Demo && cfg.mode != Mode::Demo) {
        let mut report = outcome.report.clone();
        report.demo = Some(name);
        let _ = report.write(&out);
    }
    let r = &outcome.report;
    match &r.error {
        None => println!("{}: {} ({})", r.mode, r.status, out.display()),
        Some(e) => eprintln!("flatctl: {} failed at {}: {e}", r.mode, r.stage.as_deref().unwrap_or("?")),
    }
    outcome.code
}
