use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use loadgait::config::{Init, RunConfig};
use loadgait::eval::{self, EvalReport, Protocol, SUMMARY_HEADER};
use loadgait::loads::LoadKind;
use loadgait::policy::NetShape;
use loadgait::reward::RewardMode;
use loadgait::Policy;

mod compare;

#[derive(Parser)]
#[command(name = "loadgait", version, about = "Train and evaluate load-carrying biped walking policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train {
        /// JSON run configuration.
        config: PathBuf,
        /// Load model to train on, or `all` for a general policy.
        #[arg(long)]
        load: Option<String>,
        /// `scratch` or a checkpoint to bootstrap from.
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run evaluation protocols and write reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration supplying model, load and protocol settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "unloaded")]
        load: String,
        /// pass-rate, push, max-speed or all.
        #[arg(long, default_value = "pass-rate")]
        protocol: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Record a joint phase portrait during a randomized walk.
    Portrait {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "unloaded")]
        load: String,
        #[arg(long)]
        joint: String,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Samples needed by each learning curve to reach a reward threshold.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        curves: Vec<PathBuf>,
        #[arg(long)]
        threshold: f64,
        /// Also write the table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status 1 for usage and configuration problems, 2 for failed runs.
enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

type CliResult<T> = Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn run_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Run(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Train { config, load, init, seed, out } => cmd_train(&config, load.as_deref(), init.as_deref(), seed, &out),
        Command::Eval { checkpoint, config, load, protocol, trials, seed, out } => cmd_eval(&checkpoint, config.as_deref(), &load, &protocol, trials, seed, &out),
        Command::Portrait { checkpoint, config, load, joint, seconds, seed, out } => cmd_portrait(&checkpoint, config.as_deref(), &load, &joint, seconds, seed, &out),
        Command::Compare { curves, threshold, out } => cmd_compare(&curves, threshold, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Honors `LOADGAIT_THREADS` as a cap on the worker pool.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("LOADGAIT_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| anyhow!("LOADGAIT_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn parse_kind(s: &str) -> CliResult<LoadKind> {
    LoadKind::parse(s).ok_or_else(|| usage(anyhow!("unknown load `{s}` (valid: {})", LoadKind::ALL.map(|k| k.name()).join(", "))))
}

/// One kind, or every kind for `all`.
fn parse_kinds(s: &str) -> CliResult<Vec<LoadKind>> {
    if s == "all" {
        Ok(LoadKind::ALL.to_vec())
    } else {
        Ok(vec![parse_kind(s)?])
    }
}

fn read_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())).map_err(usage),
        None => Ok(RunConfig::default()),
    }
}

fn create_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(run_err)
}

fn write_config(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    cfg.save(&out.join("config.json")).map_err(run_err)
}

/// Loads a checkpoint, checking it against the configured network when a
/// config was given and against the observation/action sizes otherwise.
fn load_policy(path: &Path, cfg: &RunConfig, explicit_config: bool) -> CliResult<Policy> {
    let expected = if explicit_config {
        cfg.network.shape()
    } else {
        let (p, _) = Policy::load(path).with_context(|| format!("loading checkpoint {}", path.display())).map_err(usage)?;
        NetShape { width: p.shape().width, layers: p.shape().layers, ..cfg.network.shape() }
    };
    Policy::load_compatible(path, &expected).with_context(|| format!("loading checkpoint {}", path.display())).map_err(usage)
}

fn cmd_train(config: &Path, load: Option<&str>, init: Option<&str>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let mut cfg = read_config(Some(config))?;
    if let Some(l) = load {
        cfg.train.models = parse_kinds(l)?;
        cfg.train.reward_mode = if l == "all" { RewardMode::General } else { RewardMode::Specialized };
    }
    if let Some(i) = init {
        cfg.train.init = Init::parse(i);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    // An unusable bootstrap checkpoint is a configuration problem, not a failed run.
    loadgait::trainer::initial_policy(&cfg).map_err(usage)?;
    create_out(out)?;
    write_config(&cfg, out)?;
    let models = cfg.train.models.iter().map(|k| k.name()).collect::<Vec<_>>().join(",");
    eprintln!("training on {models} for {} iterations x {} steps", cfg.train.iterations, cfg.train.steps_per_iteration);
    let outcome = loadgait::trainer::train(&cfg, Some(out), |p| {
        eprintln!("iter {:4}  steps {:9}  reward {:8.2}  ep_len {:6.1}", p.iteration, p.timesteps, p.mean_reward, p.mean_ep_len);
    });
    let outcome = outcome.map_err(run_err)?;
    if let Some(p) = outcome.final_checkpoint {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, config: Option<&Path>, load: &str, protocol: &str, trials: Option<usize>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let mut cfg = read_config(config)?;
    let kinds = parse_kinds(load)?;
    let protocol = Protocol::parse(protocol).ok_or_else(|| usage(anyhow!("unknown protocol `{protocol}` (valid: pass-rate, push, max-speed, all)")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.eval.trials = t;
    }
    cfg.validate().map_err(usage)?;
    let policy = load_policy(checkpoint, &cfg, config.is_some())?;
    let label = checkpoint.file_stem().map_or_else(|| "policy".to_string(), |s| s.to_string_lossy().into_owned());
    create_out(out)?;
    write_config(&cfg, out)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for kind in kinds {
        eprintln!("evaluating {label} on {kind}");
        let report = eval::evaluate(&policy, &label, &cfg, kind, protocol, cfg.eval.trials, cfg.seed).map_err(run_err)?;
        let path = out.join(format!("eval_{}.json", kind.name()));
        let text = serde_json::to_string_pretty(&report).map_err(run_err)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display())).map_err(run_err)?;
        reports.push(report);
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for r in &reports {
        summary.push_str(&r.summary_row());
        summary.push('\n');
    }
    let path = out.join("summary.csv");
    std::fs::write(&path, &summary).with_context(|| format!("writing {}", path.display())).map_err(run_err)?;
    print!("{summary}");
    Ok(())
}

fn cmd_portrait(checkpoint: &Path, config: Option<&Path>, load: &str, joint: &str, seconds: f64, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let mut cfg = read_config(config)?;
    let kind = parse_kind(load)?;
    loadgait::sim::joint_index(joint).map_err(usage)?;
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(usage(anyhow!("--seconds must be positive")));
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let policy = load_policy(checkpoint, &cfg, config.is_some())?;
    create_out(out)?;
    write_config(&cfg, out)?;
    let walk = eval::record_walk(&policy, &cfg, kind, seconds, cfg.seed).map_err(run_err)?;
    if let Some(f) = walk.failure {
        eprintln!("warning: walk ended early ({f:?}) after {} steps", walk.trajectory.len());
    }
    let portrait = eval::phase_portrait(&walk.trajectory, joint).map_err(run_err)?;
    let path = out.join(format!("portrait_{}_{joint}.csv", kind.name()));
    portrait.write_csv(&path).map_err(run_err)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_compare(curves: &[PathBuf], threshold: f64, out: Option<&Path>) -> CliResult<()> {
    if curves.len() < 2 {
        return Err(usage(anyhow!("compare needs at least two --curves files")));
    }
    let mut rows = Vec::new();
    for path in curves {
        let curve = compare::read_curve(path).map_err(usage)?;
        rows.push((path.display().to_string(), compare::samples_to_threshold(&curve, threshold)));
    }
    let table = compare::render(&rows, threshold);
    print!("{table}");
    if let Some(o) = out {
        std::fs::write(o, &table).with_context(|| format!("writing {}", o.display())).map_err(run_err)?;
    }
    Ok(())
}
