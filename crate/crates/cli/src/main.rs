//! `mmct`: runs, comparisons and sweeps against an experiment server.
//!
//! With `--server` (or `MMCT_SERVER`) the commands talk to that server;
//! otherwise an embedded server is started on a free local port for the
//! duration of the command.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mmct_client::Client;
use mmct_core::api::{CompareRequest, RunRequest, SweepRequest};
use mmct_core::config::{parse_config, ExperimentConfig};
use mmct_core::experiment::BatchResult;
use mmct_core::metrics::{export_csv, render_summary, summarize, RunReport};
use mmct_core::SchedulerKind;

#[derive(Parser)]
#[command(name = "mmct", version, about = "Edge-cloud task offloading experiments")]
struct Cli {
    /// Server to use instead of an embedded one.
    #[arg(long, global = true, env = "MMCT_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of one scheduler.
    Run {
        #[command(flatten)]
        common: Common,
        /// One of mmct, mcts_plain, greedy, random, genetic.
        #[arg(long, default_value = "mmct")]
        scheduler: SchedulerKind,
        /// Run seed; workload, mobility and scheduler streams derive from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Users to simulate; defaults to the config's count.
        #[arg(long)]
        users: Option<u32>,
    },
    /// Every scheduler against every seed.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        schedulers: Option<Vec<SchedulerKind>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Users to simulate; defaults to the config's count.
        #[arg(long)]
        users: Option<u32>,
        /// Parallel runs; defaults to the server's core count.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// A comparison repeated for each user count.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        schedulers: Option<Vec<SchedulerKind>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Checks a config file and prints the resolved settings.
    Validate { config: PathBuf },
    /// Runs the experiment server in the foreground.
    Serve {
        #[arg(long, env = "MMCT_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory for CSV results.
    #[arg(long, env = "MMCT_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Command-line overrides of config values.
#[derive(Args, Default)]
struct Overrides {
    /// Frames released per user.
    #[arg(long)]
    frames: Option<u32>,
    /// Intervals to simulate.
    #[arg(long)]
    horizon: Option<u32>,
    /// Tree search exploration parameter.
    #[arg(long = "mmct-c")]
    c: Option<f64>,
    /// Tree search roll-out steps.
    #[arg(long)]
    rollout: Option<u32>,
    /// Tree search iteration budget.
    #[arg(long)]
    iterations: Option<u32>,
    /// Children added per tree expansion.
    #[arg(long)]
    expansion_width: Option<u32>,
    /// Roll-out reward discount.
    #[arg(long)]
    lambda: Option<f64>,
    /// Commit one random decision before the first tree.
    #[arg(long)]
    commit_random_root: Option<bool>,
    /// Genetic baseline population size.
    #[arg(long)]
    population: Option<u32>,
    /// Genetic baseline generations per interval.
    #[arg(long)]
    generations: Option<u32>,
    /// Genetic baseline tournament size.
    #[arg(long)]
    tournament: Option<u32>,
    /// Genetic baseline crossover probability.
    #[arg(long)]
    crossover_rate: Option<f64>,
    /// Genetic baseline per-gene mutation probability.
    #[arg(long)]
    mutation_rate: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Copy>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        set(&mut cfg.workload.frames, self.frames);
        if self.horizon.is_some() {
            cfg.experiment.horizon = self.horizon;
        }
        set(&mut cfg.mmct.c, self.c);
        set(&mut cfg.mmct.rollout, self.rollout);
        set(&mut cfg.mmct.iterations, self.iterations);
        set(&mut cfg.mmct.expansion_width, self.expansion_width);
        set(&mut cfg.mmct.lambda, self.lambda);
        set(&mut cfg.mmct.commit_random_root, self.commit_random_root);
        set(&mut cfg.genetic.population, self.population);
        set(&mut cfg.genetic.generations, self.generations);
        set(&mut cfg.genetic.tournament, self.tournament);
        set(&mut cfg.genetic.crossover_rate, self.crossover_rate);
        set(&mut cfg.genetic.mutation_rate, self.mutation_rate);
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

impl Common {
    /// Loads the config, applies overrides and validates the result locally
    /// so every problem is reported before any work is sent.
    fn load(&self, users: Option<u32>) -> Result<(ExperimentConfig, PathBuf)> {
        let text = match &self.config {
            Some(p) => read(p)?,
            None => String::new(),
        };
        let mut cfg = parse_config(&text).map_err(|e| anyhow::anyhow!("invalid config:\n  {}", e.messages().join("\n  ")))?;
        self.overrides.apply(&mut cfg);
        if let Some(u) = users {
            cfg.workload.users = u;
        }
        let problems = cfg.violations();
        if !problems.is_empty() {
            bail!("invalid settings:\n  {}", problems.join("\n  "));
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.experiment.output.clone());
        Ok((cfg, out))
    }
}

fn names(kinds: Option<Vec<SchedulerKind>>) -> Option<Vec<String>> {
    kinds.map(|ks| ks.iter().map(|k| k.name().to_string()).collect())
}

fn write_results(reports: &[RunReport], out: &Path, file: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(file);
    export_csv(reports, &path)?;
    Ok(path)
}

fn report_batch(batch: &BatchResult, out: &Path, file: &str) -> Result<ExitCode> {
    let path = write_results(&batch.reports, out, file)?;
    print!("{}", render_summary(&summarize(&batch.reports)));
    println!("wrote {} ({} rows)", path.display(), batch.reports.len());
    for f in &batch.failures {
        eprintln!("error: {} seed {} users {}: {}", f.scheduler, f.seed, f.users, f.error);
    }
    Ok(if batch.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

async fn connect(server: Option<String>) -> Result<Client> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let (addr, _task) = mmct_server::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .context("cannot start embedded server")?;
    Ok(Client::new(format!("http://{addr}")))
}

async fn execute(cli: Cli) -> Result<ExitCode> {
    if let Command::Serve { bind } = cli.command {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("cannot bind {bind}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        mmct_server::serve(listener).await?;
        return Ok(ExitCode::SUCCESS);
    }
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Run {
            common,
            scheduler,
            seed,
            users,
        } => {
            let (cfg, out) = common.load(users)?;
            let req = RunRequest {
                config: cfg.to_toml(),
                scheduler: scheduler.name().into(),
                seed,
            };
            let report = client.run(&req).await?;
            let reports = [report];
            let path = write_results(&reports, &out, &format!("run_{scheduler}_seed{seed}.csv"))?;
            print!("{}", render_summary(&summarize(&reports)));
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            common,
            schedulers,
            seeds,
            users,
            jobs,
        } => {
            let (cfg, out) = common.load(users)?;
            if schedulers.is_none() {
                println!("note: the DRL and Closure baselines are not implemented");
            }
            let req = CompareRequest {
                config: cfg.to_toml(),
                schedulers: names(schedulers),
                seeds,
                jobs,
            };
            let batch = client.compare(&req).await?;
            report_batch(&batch, &out, "compare.csv")
        }
        Command::Sweep {
            common,
            users,
            schedulers,
            seeds,
            jobs,
        } => {
            let (cfg, out) = common.load(None)?;
            let req = SweepRequest {
                config: cfg.to_toml(),
                users,
                schedulers: names(schedulers),
                seeds,
                jobs,
            };
            let batch = client.sweep(&req).await?;
            report_batch(&batch, &out, "sweep.csv")
        }
        Command::Validate { config } => {
            let text = read(&config)?;
            let resp = client.validate(&text).await?;
            if resp.valid {
                println!("{}: ok", config.display());
                if let Some(cfg) = resp.config {
                    print!("{}", cfg.to_toml());
                }
                Ok(ExitCode::SUCCESS)
            } else {
                for e in &resp.errors {
                    eprintln!("{}: {e}", config.display());
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
