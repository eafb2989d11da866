//! Command-line interface. [`run`] returns the process exit code: 0 on
//! success, 1 for configuration or usage errors, 2 for runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use openloop::bridge::{BridgeClient, Endpoint, Request};
use openloop::metrics::{EvalReport, ReportOptions};

use crate::config::ExperimentConfig;
use crate::evaluate::{self, SweepConfig};
use crate::optimize::optimize;
use crate::results;
use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "openloop", version, about = "Optimize and evaluate open-loop oscillator controllers")]
pub struct Cli {
    /// Master seed; replaces the config's seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; replaces the config's output_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parallel candidate evaluations.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune oscillator parameters with CMA-ES.
    Optimize {
        config: Option<PathBuf>,
        /// Print every configuration field with its default and exit.
        #[arg(long)]
        print_config: bool,
        /// Environment used by --print-config.
        #[arg(long, default_value = "purcell_swimmer")]
        env: String,
    },
    /// Re-run the best parameters of a run record.
    Evaluate {
        record: PathBuf,
        /// Comma-separated episode seeds; defaults to the seed the best
        /// fitness was measured with.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Evaluate a run record under perturbations.
    Robustness { record: PathBuf, sweep: PathBuf },
    /// Aggregate statistics over every CSV file in a directory.
    Metrics { csv_dir: PathBuf },
    /// Handshake with a bridge server: `tcp://host:port` or a command line.
    BridgeCheck {
        #[arg(required = true, num_args = 1.., trailing_var_arg = true, allow_hyphen_values = true)]
        endpoint: Vec<String>,
    },
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(failure) => {
            let _ = writeln!(err, "{failure}");
            failure.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(Failure::runtime)
}

fn file_stem(env: &str) -> String {
    env.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    if cli.jobs == 0 {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::Optimize {
            config,
            print_config,
            env,
        } => {
            if *print_config {
                return emit(out, &ExperimentConfig::documented_defaults(env)?.to_toml());
            }
            let path = config
                .as_ref()
                .ok_or_else(|| Failure::Config("optimize needs a config file".into()))?;
            let mut config = ExperimentConfig::load(path)?;
            if let Some(seed) = cli.seed {
                config.seeds = vec![seed];
            }
            if let Some(dir) = &cli.out {
                config.output_dir = dir.clone();
            }
            run_optimize(&config, cli.jobs, out)
        }
        Command::Evaluate { record, seeds } => {
            let record = evaluate::load_record(record)?;
            let params = evaluate::best_params(&record)?;
            let seeds = if seeds.is_empty() {
                vec![record.best.as_ref().map_or(0, |b| b.episode_seed)]
            } else {
                seeds.clone()
            };
            let episodes = evaluate::evaluate(&record.config, params, &seeds)?;
            if let Some(dir) = &cli.out {
                results::write_text(&dir.join("evaluation.json"), &results::to_json(&episodes))?;
            }
            let summary: Vec<serde_json::Value> = episodes
                .iter()
                .map(|e| serde_json::json!({"seed": e.seed, "return": e.total_return, "steps": e.steps}))
                .collect();
            emit(out, &results::to_json(&summary))
        }
        Command::Robustness { record, sweep } => {
            let record = evaluate::load_record(record)?;
            let params = evaluate::best_params(&record)?;
            let sweep = SweepConfig::load(sweep)?;
            let report = evaluate::robustness(&record.config, params, &sweep)?;
            if let Some(dir) = &cli.out {
                let rows = results::robustness_rows(&record.config.env, record.config.variant.name(), &report);
                results::write_csv(&dir.join("robustness.csv"), &rows)?;
                results::write_text(&dir.join("robustness.json"), &results::to_json(&report))?;
            }
            emit(out, &results::to_json(&report))
        }
        Command::Metrics { csv_dir } => {
            let options = ReportOptions {
                seed: cli.seed.unwrap_or(0),
                ..ReportOptions::default()
            };
            let report = results::summarize_dir(csv_dir, &options)?;
            let json = results::to_json(&report);
            if let Some(dir) = &cli.out {
                write_metric_files(dir, &report, &json)?;
            }
            emit(out, &json)
        }
        Command::BridgeCheck { endpoint } => bridge_check(endpoint, cli.seed.unwrap_or(0), out),
    }
}

fn run_optimize(config: &ExperimentConfig, jobs: usize, out: &mut dyn Write) -> Result<(), Failure> {
    let stem = format!("{}_{}", file_stem(&config.env), config.variant.name());
    let mut rows = Vec::new();
    let mut failure = None;
    for &seed in &config.seeds {
        let record = optimize(config, seed, jobs)?;
        let path = config.output_dir.join("records").join(format!("{stem}_seed{seed}.json"));
        results::write_text(&path, &results::to_json(&record))?;
        rows.extend(results::record_rows(&record));
        let best = record.best.as_ref().map(|b| b.fitness);
        emit(
            out,
            &format!(
                "{} {} seed {seed}: best {} after {} generations, {} env steps{}\n",
                config.env,
                config.variant,
                best.map_or("none".to_string(), |b| b.to_string()),
                record.generations.len(),
                record.env_steps,
                if record.complete { "" } else { " (incomplete)" }
            ),
        )?;
        if let Some(e) = &record.error {
            failure = Some(Failure::Runtime(format!("seed {seed}: {e}")));
            break;
        }
    }
    results::write_csv(&config.output_dir.join(format!("{stem}.csv")), &rows)?;
    failure.map_or(Ok(()), Err)
}

fn write_metric_files(dir: &Path, report: &EvalReport, json: &str) -> Result<(), Failure> {
    results::write_text(&dir.join("summary.json"), json)?;
    let methods: Vec<&String> = report.profiles.keys().collect();
    let mut profile = String::from("tau");
    for m in &methods {
        profile.push(',');
        profile.push_str(m);
    }
    profile.push('\n');
    for (i, tau) in report.taus.iter().enumerate() {
        profile.push_str(&tau.to_string());
        for m in &methods {
            profile.push_str(&format!(",{}", report.profiles[*m][i]));
        }
        profile.push('\n');
    }
    results::write_text(&dir.join("profiles.csv"), &profile)?;
    let mut agg = String::from("method,runs,iqm,iqm_lo,iqm_hi,median,median_lo,median_hi\n");
    for (m, s) in &report.methods {
        agg.push_str(&format!(
            "{m},{},{},{},{},{},{},{}\n",
            s.runs, s.iqm, s.iqm_ci.0, s.iqm_ci.1, s.median, s.median_ci.0, s.median_ci.1
        ));
    }
    results::write_text(&dir.join("aggregates.csv"), &agg)
}

fn parse_endpoint(parts: &[String]) -> Result<Endpoint, Failure> {
    if parts.len() == 1 {
        return Endpoint::parse(&parts[0]).map_err(|e| Failure::Config(e.to_string()));
    }
    Ok(Endpoint::Command(parts.to_vec()))
}

fn bridge_check(parts: &[String], seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let endpoint = parse_endpoint(parts)?;
    let mut client = BridgeClient::connect(&endpoint, Duration::from_secs(10)).map_err(Failure::runtime)?;
    let spec = client.spec().map_err(Failure::runtime)?;
    let reset = client
        .request(&Request::Reset { seed: Some(seed) })
        .map_err(Failure::runtime)?;
    let obs = reset
        .obs
        .filter(|_| reset.ok)
        .ok_or_else(|| Failure::Runtime(format!("reset failed: {}", reset.error.unwrap_or_default())))?;
    if obs.len() != spec.obs_dim {
        return Err(Failure::Runtime(format!(
            "reset returned {} observations, spec says {}",
            obs.len(),
            spec.obs_dim
        )));
    }
    let step = client
        .request(&Request::Step {
            action: vec![0.0; spec.act_dim],
        })
        .map_err(Failure::runtime)?;
    if !step.ok {
        return Err(Failure::Runtime(format!("step failed: {}", step.error.unwrap_or_default())));
    }
    client.close().map_err(Failure::runtime)?;
    emit(
        out,
        &results::to_json(&serde_json::json!({
            "ok": true,
            "obs_dim": spec.obs_dim,
            "act_dim": spec.act_dim,
            "control_period": spec.control_period,
        })),
    )
}
