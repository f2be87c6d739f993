use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use helios_client::{Client, InstrumentKind};
use helios_core::Channel;
use serde::Serialize;

use crate::commands::{chat, doe, inverse, serve, sweep};
use crate::config::{resolve, CliConfig, FileConfig, Overrides, CONFIG_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "helios", version, about = "Simulated photometer: service, experiments and LLM helpers")]
pub struct Cli {
    /// TOML config file (also HELIOS_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Service URL for client commands (also HELIOS_BASE_URL).
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    /// Seed for the simulator noise and for randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Per-measurement latency of the served instrument, in seconds.
    #[arg(long, global = true)]
    pub latency: Option<f64>,
    /// Calibration file for the served instrument.
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,
    /// Scripted LLM provider file, used instead of a live provider.
    #[arg(long, global = true)]
    pub provider_script: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Three comma-separated counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target(pub [f64; 3]);

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", v.trim())))
            .collect::<Result<_, _>>()?;
        <[f64; 3]>::try_from(values)
            .map(Target)
            .map_err(|v| format!("expected 3 comma-separated counts, got {}", v.len()))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the simulated instrument over HTTP.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        /// NDJSON experiment log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory of static files served at /.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Step one input from 0 to 1 and fit a line to one output.
    Sweep {
        #[arg(long, default_value = "G")]
        input: String,
        #[arg(short, long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = "GreenMachine1")]
        instrument: InstrumentKind,
        #[arg(long, default_value = "515nm")]
        channel: Channel,
        /// CSV file receiving x, y and fitted y.
        #[arg(long, default_value = "sweep-plot.csv")]
        plot_data: PathBuf,
    },
    /// Run the 3x3 Latin square on CLRGB and print the ANOVA table.
    Doe {
        /// Output channel analysed (630nm, 515nm or 445nm).
        #[arg(long, default_value = "630nm")]
        response: Channel,
        #[arg(long, default_value_t = helios_core::doe::DEFAULT_F_CRITICAL)]
        f_critical: f64,
    },
    /// Fit a GP to random CLRGB measurements and solve for target outputs.
    Inverse {
        /// Target counts at 630nm, 515nm and 445nm.
        #[arg(long, default_value = "10000,10000,10000")]
        target: Target,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Verification measurements at the solution.
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Ask the LLM which instrument suits a task.
    Ask {
        need: String,
        #[arg(long)]
        audit_log: Option<PathBuf>,
    },
    /// Extract R, G and B levels from free text.
    Extract {
        text: String,
        #[arg(long)]
        audit_log: Option<PathBuf>,
    },
    /// Let the LLM answer a question by calling the instruments.
    Toolchat {
        question: String,
        #[arg(long, default_value_t = helios_llm::DEFAULT_MAX_ROUNDS)]
        max_rounds: usize,
        #[arg(long)]
        audit_log: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            base_url: self.base_url.clone(),
            seed: self.seed,
            latency_s: self.latency,
            calibration: self.calibration.clone(),
            provider_script: self.provider_script.clone(),
            ..Default::default()
        };
        match &self.command {
            Command::Serve { listen, log, .. } => {
                o.listen = listen.clone();
                o.log_path = log.clone();
            }
            Command::Ask { audit_log, .. } | Command::Extract { audit_log, .. } | Command::Toolchat { audit_log, .. } => {
                o.audit_log = audit_log.clone();
            }
            _ => {}
        }
        o
    }

    /// Reads the config file named by the flag or `HELIOS_CONFIG` and merges
    /// all layers.
    pub fn resolve_config(&self, env: impl Fn(&str) -> Option<String>) -> Result<CliConfig, CliError> {
        let path = self
            .config
            .clone()
            .or_else(|| env(CONFIG_ENV).filter(|v| !v.trim().is_empty()).map(PathBuf::from));
        let file = match path {
            Some(p) => FileConfig::load(&p)?,
            None => FileConfig::default(),
        };
        resolve(file, Overrides::from_env(&env)?, self.overrides())
    }
}

fn emit<R: Serialize + Display>(out: &mut dyn Write, json: bool, report: &R) -> Result<(), CliError> {
    if json {
        let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out, "{text}")?;
    } else {
        write!(out, "{report}")?;
    }
    Ok(())
}

fn client(config: &CliConfig) -> Result<Client, CliError> {
    Ok(Client::new(config.client.clone())?)
}

/// Runs a session-based command and appends its audit trail whatever the
/// outcome.
fn with_session<R>(
    config: &CliConfig,
    audit_log: &std::path::Path,
    f: impl FnOnce(&mut helios_llm::Session) -> Result<R, CliError>,
) -> Result<R, CliError> {
    let mut session = chat::open_session(config)?;
    let result = f(&mut session);
    let audit = chat::append_audit(&session, audit_log);
    let value = result?;
    audit?;
    Ok(value)
}

/// Executes a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.resolve_config(env)?;
    let json = cli.json;
    match &cli.command {
        Command::Serve { static_dir, .. } => {
            let mut server = config.server.clone();
            if static_dir.is_some() {
                server.static_dir = static_dir.clone();
            }
            serve::run(&server, json, out)
        }
        Command::Sweep {
            input,
            n,
            instrument,
            channel,
            plot_data,
        } => {
            let params = sweep::SweepParams {
                instrument: *instrument,
                input: input.clone(),
                channel: *channel,
                n: *n,
            };
            sweep::validate(&params)?;
            let mut report = sweep::run(&client(&config)?, &params)?;
            sweep::write_plot_data(&mut report, plot_data)?;
            emit(out, json, &report)?;
            if report.fit_skipped() {
                return Err(CliError::Runtime(format!(
                    "{} of {} sweep points failed; no fit",
                    report.failed,
                    report.points.len()
                )));
            }
            Ok(())
        }
        Command::Doe { response, f_critical } => {
            let report = doe::run(&client(&config)?, *response, *f_critical)?;
            emit(out, json, &report)
        }
        Command::Inverse {
            target,
            samples,
            repeats,
        } => {
            let params = inverse::InverseParams {
                target: target.0,
                samples: *samples,
                repeats: *repeats,
                seed: config.seed_or_default(),
            };
            let report = inverse::run(&client(&config)?, &params)?;
            emit(out, json, &report)
        }
        Command::Ask { need, .. } => {
            let report = with_session(&config, &config.audit_log, |s| chat::ask(s, need))?;
            emit(out, json, &report)
        }
        Command::Extract { text, .. } => {
            let report = with_session(&config, &config.audit_log, |s| chat::extract(s, text))?;
            emit(out, json, &report)
        }
        Command::Toolchat {
            question, max_rounds, ..
        } => {
            let client = client(&config)?;
            let report = with_session(&config, &config.audit_log, |s| {
                chat::toolchat(s, &client, question, *max_rounds)
            })?;
            emit(out, json, &report)
        }
    }
}
