use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sots::gateway::{replay_event_log, serve, ServerConfig};
use sots::metrics::{metrics_report, MetricsOptions};
use sots::session::{parse_log, write_log, Condition, LogRecord, SessionConfig};
use sots::sim::{run_simulation, SimulationPlan, StrategyMix};

#[derive(Parser)]
#[command(name = "sots", version, about = "Self-organizing team sessions: host, simulate, replay, analyse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host live sessions over websockets.
    Serve {
        /// TOML server configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Directory of browser client assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Run one headless session with scripted agents.
    Simulate {
        /// TOML simulation plan; flags below override it.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// sot, placebo or no_agency.
        #[arg(long, value_parser = parse_condition)]
        condition: Option<Condition>,
        /// Number of agents, split evenly over strategies unless --strategies is given.
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Strategy counts, e.g. `play_to_win=6,random=2`.
        #[arg(long, value_parser = parse_mix)]
        strategies: Option<StrategyMix>,
        /// Where to write the event log.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Virtual milliseconds per wall-clock millisecond.
        #[arg(long)]
        speedup: Option<f64>,
    },
    /// Rebuild a session from its event log and report the final state.
    Replay {
        log: PathBuf,
        /// Require the log to match this session configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include the full reconstructed state.
        #[arg(long)]
        state: bool,
    },
    /// Compute analysis tables over one or more event logs.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Also write CSV tables into this directory.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        /// Seed for cluster detection.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split same-author segments separated by more than this many ms.
        #[arg(long)]
        gap_ms: Option<u64>,
        /// Prune and propagate over directed ballot weights.
        #[arg(long)]
        directed: bool,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown condition `{s}` (sot, placebo, no_agency)"))
}

fn parse_mix(s: &str) -> Result<StrategyMix, String> {
    let mut mix = StrategyMix::default();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, n) = part
            .split_once('=')
            .ok_or_else(|| format!("expected name=count, got `{part}`"))?;
        let n: usize = n.trim().parse().map_err(|e| format!("{part}: {e}"))?;
        let slot = match name.trim().replace('-', "_").as_str() {
            "play_to_win" => &mut mix.play_to_win,
            "profile_affinity" => &mut mix.profile_affinity,
            "loyal" => &mut mix.loyal,
            "random" => &mut mix.random,
            other => return Err(format!("unknown strategy `{other}`")),
        };
        *slot += n;
    }
    Ok(mix)
}

fn even_mix(n: usize) -> StrategyMix {
    let q = n / 4;
    let r = n % 4;
    StrategyMix {
        play_to_win: q + usize::from(r > 0),
        profile_affinity: q + usize::from(r > 1),
        loyal: q + usize::from(r > 2),
        random: q,
    }
}

fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_log(&text).map_err(|(line, e)| anyhow::anyhow!("{}:{line}: {e}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(out));
    match written {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve {
            config,
            bind,
            log_dir,
            static_dir,
        } => {
            let mut cfg = ServerConfig::load(config.as_deref())?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(d) = log_dir {
                cfg.log_dir = d;
            }
            if static_dir.is_some() {
                cfg.static_dir = static_dir;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(cfg))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            plan,
            condition,
            batch_size,
            rounds,
            seed,
            strategies,
            out,
            speedup,
        } => {
            let mut p = match &plan {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    SimulationPlan::from_toml(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => SimulationPlan {
                    config: SessionConfig::default(),
                    strategies: even_mix(8),
                    ..SimulationPlan::default()
                },
            };
            if let Some(c) = condition {
                p.config.condition = c;
            }
            if let Some(r) = rounds {
                p.config.rounds = r;
            }
            if let Some(s) = seed {
                p.master_seed = s;
                p.text_seed = s;
            }
            match (strategies, batch_size) {
                (Some(mix), Some(n)) if mix.total() != n => {
                    bail!("--strategies lists {} agents but --batch-size is {n}", mix.total())
                }
                (Some(mix), _) => p.strategies = mix,
                (None, Some(n)) => p.strategies = even_mix(n),
                (None, None) => {}
            }
            if speedup.is_some() {
                p.speedup = speedup;
            }
            let outcome = run_simulation(&p)?;
            if let Some(path) = &out {
                std::fs::write(path, write_log(&outcome.records))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&serde_json::json!({
                "session": outcome.report.session,
                "condition": p.config.condition,
                "agents": outcome.strategies.iter().map(|(u, s)| (u.to_string(), s.as_str())).collect::<std::collections::BTreeMap<_, _>>(),
                "records": outcome.records.len(),
                "virtual_ms": outcome.virtual_ms,
                "rejections": outcome.rejections,
                "leaderboard": outcome.report.leaderboard,
                "final_story": outcome.report.final_story,
                "log": out,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log, config, state } => {
            let records = read_log(&log)?;
            let expected = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    Some(toml::from_str::<SessionConfig>(&text)?)
                }
                None => None,
            };
            let mut report = replay_event_log(&records, expected.as_ref());
            if !state {
                report.state = None;
            }
            print_json(&report)?;
            Ok(if report.divergence.is_some() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Metrics {
            logs,
            csv_dir,
            seed,
            gap_ms,
            directed,
        } => {
            let logs: Vec<Vec<LogRecord>> =
                logs.iter().map(|p| read_log(p)).collect::<Result<_>>()?;
            let report = metrics_report(
                &logs,
                MetricsOptions {
                    seed,
                    gap_threshold_ms: gap_ms,
                    directed_clusters: directed,
                },
            )?;
            if let Some(dir) = &csv_dir {
                for path in report.write_csv_tables(dir)? {
                    tracing::info!(path = %path.display(), "wrote table");
                }
            }
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixes_parse() {
        let m = parse_mix("play_to_win=6, random=2").unwrap();
        assert_eq!((m.play_to_win, m.random, m.total()), (6, 2, 8));
        assert!(parse_mix("greedy=1").is_err());
        assert_eq!(even_mix(10).total(), 10);
    }

    #[test]
    fn conditions_parse() {
        assert_eq!(parse_condition("no-agency").unwrap(), Condition::NoAgency);
        assert!(parse_condition("other").is_err());
    }
}
