use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use mdplab::bounds::SLACK_TOL;
use mdplab::harness::{self, SeedSpec, SweepConfig, SweepRecord};
use mdplab::mdp::{garnet, GarnetParams};
use mdplab::{Error, Mdp, Policy};

#[derive(Parser)]
#[command(name = "mdplab", version, about = "Policy evaluation, ergodicity coefficients and improvement bounds for finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Report,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a policy: discounted (with --gamma) and average reward.
    Eval {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_parser = parse_gamma)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare classical, refined and average-reward improvement bounds.
    Bounds {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        pi_tilde: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_gamma, required = true)]
        gamma_list: Vec<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, default_value_t = SLACK_TOL)]
        tolerance: f64,
        #[arg(long)]
        ell_cap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Garnet batch described by a JSON config; writes records and summary.json into --out.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seeds: `START..END` or a comma-separated list.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedSpec>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        ell_cap: Option<usize>,
        /// Record wall-clock time in the summary (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Certified mixture-policy improvement; writes trace.json, eta.csv and step_sizes.csv into --out.
    Improve {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_parser = parse_gamma)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        /// Discount factors for the step-size series.
        #[arg(long, value_delimiter = ',', value_parser = parse_gamma, default_value = "0.5,0.9,0.99,0.999")]
        gamma_list: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a Garnet MDP.
    Garnet {
        #[arg(long)]
        n_states: usize,
        #[arg(long)]
        n_actions: usize,
        #[arg(long)]
        branching: usize,
        #[arg(long, default_value_t = 0.0)]
        sparsity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the batch instance for a seed as mdp.json, pi.json and pi_tilde.json.
    Instance {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_gamma(s: &str) -> Result<f64, String> {
    let g: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&g) {
        Ok(g)
    } else {
        Err(format!("discount factor {g} is outside [0, 1)"))
    }
}

fn parse_seeds(s: &str) -> Result<SeedSpec, String> {
    if let Some((a, b)) = s.split_once("..") {
        let start: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let end: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if end < start {
            return Err(format!("empty seed range {s}"));
        }
        return Ok(SeedSpec::Range { start, count: end - start });
    }
    if s.trim().is_empty() {
        return Ok(SeedSpec::List(Vec::new()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()
        .map(SeedSpec::List)
}

enum Failure {
    Contract(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Inconsistent { .. } => Failure::Contract(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn load<T>(path: &Path, f: impl FnOnce(PathBuf) -> mdplab::Result<T>) -> Result<T, Failure> {
    f(path.to_path_buf()).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn render_records(records: &[SweepRecord], format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            harness::write_csv(records, &mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
        Format::Report => harness::to_json_pretty(&records),
    })
}

fn report_violations(records: &[SweepRecord], tolerance: f64) -> Result<(), Failure> {
    let bad: Vec<String> = records
        .iter()
        .filter_map(|r| {
            let v = r.violations(tolerance);
            (!v.is_empty()).then(|| {
                let gamma = r.gamma.map_or("average".to_string(), |g| g.to_string());
                format!("seed {:?}, gamma {gamma}: {}", r.seed, v.join(", "))
            })
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Contract(bad.join("\n")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Eval { mdp, policy, gamma, out } => {
            let mdp = load(&mdp, Mdp::load)?;
            let policy = load(&policy, Policy::load)?;
            let report = harness::cmd_eval(&mdp, &policy, gamma)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(out.as_deref(), &harness::to_json_pretty(&report))?;
            if !report.within_contract() {
                return Err(Failure::Contract("evaluation residual above 1e-9".into()));
            }
        }
        Command::Bounds {
            mdp,
            pi,
            pi_tilde,
            gamma_list,
            format,
            tolerance,
            ell_cap,
            out,
        } => {
            let mdp = load(&mdp, Mdp::load)?;
            let pi = load(&pi, Policy::load)?;
            let pi_tilde = load(&pi_tilde, Policy::load)?;
            let records = harness::cmd_bounds(&mdp, &pi, &pi_tilde, &gamma_list, ell_cap)?;
            emit(out.as_deref(), &render_records(&records, format)?)?;
            report_violations(&records, tolerance)?;
        }
        Command::Sweep {
            config,
            out,
            seeds,
            format,
            tolerance,
            ell_cap,
            timing,
        } => {
            let mut cfg = load(&config, SweepConfig::load)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(t) = tolerance {
                cfg.tolerance = t;
            }
            if ell_cap.is_some() {
                cfg.ell_cap = ell_cap;
            }
            let started = Instant::now();
            let mut result = harness::run_sweep(&cfg)?;
            if timing {
                result.summary.elapsed_ms = Some(started.elapsed().as_millis());
            }
            fs::create_dir_all(&out)?;
            let name = match format {
                Format::Csv => "records.csv",
                Format::Report => "records.json",
            };
            fs::write(out.join(name), render_records(&result.records, format)?)?;
            fs::write(out.join("summary.json"), harness::to_json_pretty(&result.summary))?;
            eprintln!(
                "{} instances, {} records, {} violations",
                result.summary.instances, result.summary.records, result.summary.violations
            );
            report_violations(&result.records, cfg.tolerance)?;
        }
        Command::Improve {
            mdp,
            policy,
            gamma,
            iterations,
            gamma_list,
            out,
        } => {
            let mdp = load(&mdp, Mdp::load)?;
            let policy = load(&policy, Policy::load)?;
            let result = harness::cmd_improve(&mdp, &policy, gamma, iterations, &gamma_list)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("trace.json"), harness::to_json_pretty(&result))?;
            fs::write(out.join("eta.csv"), harness::eta_series_csv(&result.trace))?;
            fs::write(out.join("step_sizes.csv"), harness::step_size_csv(&result.step_sizes))?;
            if !result.trace.monotone(SLACK_TOL) {
                return Err(Failure::Contract("η_γ decreased along the trajectory".into()));
            }
        }
        Command::Garnet {
            n_states,
            n_actions,
            branching,
            sparsity,
            seed,
            out,
        } => {
            let mdp = garnet(&GarnetParams {
                n_states,
                n_actions,
                branching,
                reward_sparsity: sparsity,
                seed,
            })?;
            emit(out.as_deref(), &(mdp.to_json() + "\n"))?;
        }
        Command::Instance { seed, out } => {
            let inst = harness::batch_instance(seed, &Default::default())?;
            fs::create_dir_all(&out)?;
            inst.mdp.save(out.join("mdp.json"))?;
            inst.pi.save(out.join("pi.json"))?;
            inst.pi_tilde.save(out.join("pi_tilde.json"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Contract(msg)) => {
            eprintln!("contract violated:\n{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
