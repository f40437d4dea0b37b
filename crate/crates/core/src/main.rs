use airfed::harness::config::ExperimentConfig;
use airfed::harness::output::{resolve_out_root, RunDir};
use airfed::protocol::{replay_trace, Engine};
use airfed::selftest;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "airfed", about = "Personalized over-the-air federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        /// Output root (default: $AIRFED_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker thread count from the config.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the built-in gradient/invariant self-test battery.
    Check,
    /// Run one experiment per value of a swept parameter.
    Sweep {
        config: PathBuf,
        /// Swept parameter, e.g. --param gamma=0.1,0.5 or --param seed=1,2,3.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a recorded round and verify the stored post-state.
    Replay { trace: PathBuf },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> airfed::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, threads } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let dir = RunDir::create(&resolve_out_root(out.as_deref()), &cfg)?;
            println!("run dir: {}", dir.path.display());
            let engine = Engine::new(cfg)?;
            let output = engine.run(Some(&dir))?;
            println!(
                "done: {} rounds, final global acc {:.4}, personalized {:.4} ± {:.4}",
                output.summary.rounds,
                output.summary.final_global_acc,
                output.summary.final_personal_acc_mean,
                output.summary.final_personal_acc_std,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let results = selftest::run_all();
            let mut all_ok = true;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                all_ok &= r.passed;
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { config, param, out } => {
            let base = ExperimentConfig::from_file(&config)?;
            let (key, values) = parse_sweep(&param)?;
            let root = resolve_out_root(out.as_deref());
            let mut lines = vec![format!(
                "{key},run_id,final_global_acc,final_personal_acc_mean,final_personal_acc_std"
            )];
            for value in &values {
                let cfg = apply_sweep(&base, &key, value)?;
                let dir = RunDir::create(&root, &cfg)?;
                println!("{key}={value}: {}", dir.path.display());
                let engine = Engine::new(cfg)?;
                let output = engine.run(Some(&dir))?;
                lines.push(format!(
                    "{value},{},{},{},{}",
                    output.summary.run_id,
                    output.summary.final_global_acc,
                    output.summary.final_personal_acc_mean,
                    output.summary.final_personal_acc_std,
                ));
            }
            let summary_path = root.join("sweep_summary.csv");
            std::fs::write(&summary_path, lines.join("\n") + "\n")?;
            println!("sweep summary: {}", summary_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { trace } => {
            let report = replay_trace(&trace)?;
            println!(
                "round {}: {} (stored {:016x}, replayed {:016x})",
                report.round,
                if report.matched { "bit-identical" } else { "MISMATCH" },
                report.expected_digest,
                report.replayed_digest,
            );
            Ok(if report.matched { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn parse_sweep(param: &str) -> airfed::Result<(String, Vec<String>)> {
    let (key, values) = param.split_once('=').ok_or_else(|| {
        airfed::Error::Config("sweep parameter must look like name=v1,v2".into())
    })?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    if values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(airfed::Error::Config("sweep needs at least one non-empty value".into()));
    }
    Ok((key.trim().to_string(), values))
}

fn apply_sweep(base: &ExperimentConfig, key: &str, value: &str) -> airfed::Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match key {
        "gamma" | "dirichlet_gamma" => {
            cfg.data.dirichlet_gamma = value
                .parse()
                .map_err(|_| airfed::Error::Config(format!("bad gamma value {value}")))?;
        }
        "seed" => {
            cfg.seed = value
                .parse()
                .map_err(|_| airfed::Error::Config(format!("bad seed value {value}")))?;
        }
        "snr_db" => {
            cfg.snr_db = value
                .parse()
                .map_err(|_| airfed::Error::Config(format!("bad snr value {value}")))?;
        }
        "mode" => {
            cfg.mode = serde_json::from_value(serde_json::Value::String(value.to_string()))
                .map_err(|_| airfed::Error::Config(format!("bad mode {value}")))?;
        }
        "lambda" => {
            cfg.personal.lambda = value
                .parse()
                .map_err(|_| airfed::Error::Config(format!("bad lambda value {value}")))?;
        }
        other => {
            return Err(airfed::Error::Config(format!(
                "unsupported sweep parameter {other}; use gamma, seed, snr_db, mode, or lambda"
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
