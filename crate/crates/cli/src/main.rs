//! Experiment orchestrator CLI.
//!
//! `run` executes one closed-loop session (in-process or over localhost
//! sockets), `profile` trains the traffic clustering model, `sweep` runs
//! the budget-vs-strategy comparison grid, `report` re-emits stored
//! results, and `consumer` deploys the consumer as a standalone service.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use y1jamlab_core::config::{self, ConfigError};
use y1jamlab_core::eval::{
    self, live::ConsumerServiceOptions, EvalError, Evaluator, ExperimentConfig, LiveOptions, Mode,
    ScenarioChoice, SweepStrategyKind,
};
use y1jamlab_core::jammer::{targets_to_allow_set, Budget, Strategy};
use y1jamlab_core::profiler::{self, ClusterModel, SemanticLabel};
use y1jamlab_core::ran_sim::LinkModelParams;
use y1jamlab_core::y1::tls::{TlsMode, TlsPaths};

#[derive(Parser)]
#[command(
    name = "y1jamlab",
    version,
    about = "Closed-loop RAN analytics exposure and jamming lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,

    /// Log chatter (info) instead of warnings only.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Commands {
    /// Run one experiment session and write its report.
    Run(RunArgs),
    /// Train the traffic profiling model from a jam-free trace.
    Profile(ProfileArgs),
    /// Run the budget-vs-strategy comparison grid.
    Sweep(SweepArgs),
    /// Re-emit a stored report or sweep in another format.
    Report(ReportArgs),
    /// Deploy the consumer as a standalone service.
    Consumer(ConsumerArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    #[value(name = "part_a", alias = "part-a")]
    PartA,
    #[value(name = "part_b", alias = "part-b")]
    PartB,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    #[value(name = "always_on", alias = "always-on")]
    AlwaysOn,
    Random,
    Threshold,
    Clustering,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Virtual,
    Live,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Scenario seed (part_a traffic layout); also the default noise and
    /// strategy seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Threshold strategy: bitrate threshold in bps.
    #[arg(long)]
    theta: Option<f64>,
    /// Random strategy: per-tick jam probability.
    #[arg(long)]
    duty: Option<f64>,
    /// Random strategy: hold each draw for this many ticks.
    #[arg(long)]
    burst_len: Option<u64>,
    /// Clustering strategy: trained model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Clustering strategy: traffic classes to attack (comma list of
    /// high,medium,low,idle).
    #[arg(long)]
    targets: Option<String>,
    /// Jamming budget as percent of session ticks, or "unlimited".
    #[arg(long)]
    budget: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Notification period in seconds.
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    strategy_seed: Option<u64>,
    /// Live mode: minimum wall milliseconds per tick.
    #[arg(long)]
    tick_ms: Option<u64>,
    /// Live mode: pipeline settle timeout per tick.
    #[arg(long)]
    settle_timeout_ms: Option<u64>,
    #[arg(long, default_value = "./results")]
    out: PathBuf,
    /// key = value config file (link constants, scenario, strategy).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeat the session N times with bumped seeds, one row per run.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
    #[arg(long)]
    tls_cert: Option<PathBuf>,
    #[arg(long)]
    tls_key: Option<PathBuf>,
    #[arg(long)]
    tls_ca: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, default_value_t = 0.30)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    min_pts: usize,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Fit from a stored training CSV (header cqi,mcs,bitrate_bps,bler_pct)
    /// instead of simulating a trace.
    #[arg(long)]
    from_csv: Option<PathBuf>,
    /// Also print a grid sweep over these eps values.
    #[arg(long)]
    sweep_eps: Option<String>,
    /// Write the training trace CSV next to the model.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Budgets in percent of session ticks.
    #[arg(long, default_value = "10,15,20,25")]
    budgets: String,
    /// Strategies: random plus semantic targets (high, medium, low).
    #[arg(long, default_value = "random,low,medium,high")]
    strategies: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "./results")]
    out: PathBuf,
    #[arg(long, default_value_t = 77)]
    seed: u64,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding report.json or sweep.json.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
}

#[derive(Args)]
struct ConsumerArgs {
    #[arg(long)]
    producer_url: String,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    /// Jammer endpoint as host:port for the NDJSON stream.
    #[arg(long)]
    relay_endpoint: String,
    /// Metric names to forward (comma list); everything by default.
    #[arg(long)]
    metrics_filter: Option<String>,
    #[arg(long, default_value_t = 0)]
    listen_port: u16,
    /// Externally reachable /notify URL if not the loopback default.
    #[arg(long)]
    notify_url: Option<String>,
    #[arg(long)]
    tls_cert: Option<PathBuf>,
    #[arg(long)]
    tls_key: Option<PathBuf>,
    #[arg(long)]
    tls_ca: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let filter = if cli.verbose { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(filter)),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Commands::Run(args) => cmd_run(args),
        Commands::Profile(args) => cmd_profile(args),
        Commands::Sweep(args) => cmd_sweep(args),
        Commands::Report(args) => cmd_report(args),
        Commands::Consumer(args) => cmd_consumer(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Values read from a `key = value` config file; command-line flags
/// override anything set here.
#[derive(Default)]
struct ConfigBag {
    link: LinkModelParams,
    scenario: Option<ScenarioArg>,
    part_a_seed: Option<u64>,
    part_a_min_segment_s: Option<u64>,
    part_a_max_segment_s: Option<u64>,
    noise_seed: Option<u64>,
    rng_seed: Option<u64>,
    strategy: Option<StrategyArg>,
    theta_bps: Option<f64>,
    duty_p: Option<f64>,
    burst_len: Option<u64>,
    model_path: Option<PathBuf>,
    targets: Option<String>,
    budget: Option<String>,
    period_s: Option<f64>,
    mode: Option<ModeArg>,
    tick_ms: Option<u64>,
    settle_timeout_ms: Option<u64>,
}

fn bad_key(key: &str, message: String) -> EvalError {
    EvalError::ConfigFile(ConfigError::BadValue {
        key: key.to_string(),
        message,
    })
}

fn load_config(path: Option<&Path>) -> Result<ConfigBag, EvalError> {
    let mut bag = ConfigBag {
        link: LinkModelParams::default(),
        ..ConfigBag::default()
    };
    let Some(path) = path else { return Ok(bag) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut kv = config::parse_kv(&text)?;
    config::apply_link_params(&mut kv, &mut bag.link)?;

    for (key, value) in kv {
        match key.as_str() {
            "scenario" => {
                bag.scenario = Some(match value.as_str() {
                    "part_a" => ScenarioArg::PartA,
                    "part_b" => ScenarioArg::PartB,
                    other => return Err(bad_key(&key, format!("unknown scenario {other:?}"))),
                })
            }
            "part_a_seed" => bag.part_a_seed = Some(config::parse_u64(&key, &value)?),
            "part_a_min_segment_s" => {
                bag.part_a_min_segment_s = Some(config::parse_u64(&key, &value)?)
            }
            "part_a_max_segment_s" => {
                bag.part_a_max_segment_s = Some(config::parse_u64(&key, &value)?)
            }
            "noise_seed" => bag.noise_seed = Some(config::parse_u64(&key, &value)?),
            "rng_seed" => bag.rng_seed = Some(config::parse_u64(&key, &value)?),
            "strategy" => {
                bag.strategy = Some(match value.as_str() {
                    "always_on" => StrategyArg::AlwaysOn,
                    "random" => StrategyArg::Random,
                    "threshold" => StrategyArg::Threshold,
                    "clustering" => StrategyArg::Clustering,
                    other => return Err(bad_key(&key, format!("unknown strategy {other:?}"))),
                })
            }
            "theta_bps" => bag.theta_bps = Some(config::parse_f64(&key, &value)?),
            "duty_p" => bag.duty_p = Some(config::parse_f64(&key, &value)?),
            "burst_len" => bag.burst_len = Some(config::parse_u64(&key, &value)?),
            "model_path" => bag.model_path = Some(PathBuf::from(value)),
            "targets" => bag.targets = Some(value),
            "budget" => bag.budget = Some(value),
            "period_s" => bag.period_s = Some(config::parse_f64(&key, &value)?),
            "mode" => {
                bag.mode = Some(match value.as_str() {
                    "virtual" => ModeArg::Virtual,
                    "live" => ModeArg::Live,
                    other => return Err(bad_key(&key, format!("unknown mode {other:?}"))),
                })
            }
            "tick_ms" => bag.tick_ms = Some(config::parse_u64(&key, &value)?),
            "settle_timeout_ms" => bag.settle_timeout_ms = Some(config::parse_u64(&key, &value)?),
            other => {
                return Err(EvalError::ConfigFile(ConfigError::UnknownKey(
                    other.to_string(),
                )))
            }
        }
    }
    Ok(bag)
}

fn parse_budget(text: &str) -> Result<Budget, EvalError> {
    let text = text.trim().trim_end_matches('%');
    if text.eq_ignore_ascii_case("unlimited") {
        return Ok(Budget::Unlimited);
    }
    let pct: f64 = text.parse().map_err(|_| {
        EvalError::Config(format!(
            "budget must be a percentage or 'unlimited', got {text:?}"
        ))
    })?;
    if !(0.0..=100.0).contains(&pct) || pct == 0.0 {
        return Err(EvalError::Config(format!(
            "budget percent out of range: {pct}"
        )));
    }
    Ok(Budget::Fraction(pct / 100.0))
}

fn parse_targets(text: &str) -> Result<Vec<SemanticLabel>, EvalError> {
    text.split(',')
        .map(|s| s.trim().parse::<SemanticLabel>().map_err(EvalError::Config))
        .collect()
}

fn load_model(path: &Path) -> Result<ClusterModel, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Config(format!("cannot read model {}: {e}", path.display())))?;
    ClusterModel::from_json(&text)
        .map_err(|e| EvalError::Config(format!("invalid model {}: {e}", path.display())))
}

fn tls_from_flags(
    cert: Option<PathBuf>,
    key: Option<PathBuf>,
    ca: Option<PathBuf>,
) -> Result<TlsMode, EvalError> {
    match (cert, key, ca) {
        (Some(cert), Some(key), Some(ca)) => Ok(TlsMode::Mutual(TlsPaths { cert, key, ca })),
        (None, None, None) => TlsMode::from_env().map_err(|e| EvalError::Config(e.to_string())),
        _ => Err(EvalError::Config(
            "set all of --tls-cert/--tls-key/--tls-ca or none".into(),
        )),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), EvalError> {
    let bag = load_config(args.config.as_deref())?;

    let scenario_kind = args.scenario.or(bag.scenario).unwrap_or(ScenarioArg::PartA);
    let seed = args.seed.or(bag.part_a_seed).unwrap_or(42);
    let scenario = match scenario_kind {
        ScenarioArg::PartA => ScenarioChoice::PartA { seed },
        ScenarioArg::PartB => ScenarioChoice::PartB,
    };

    let strategy_kind = args
        .strategy
        .or(bag.strategy)
        .unwrap_or(StrategyArg::Threshold);
    let strategy = match strategy_kind {
        StrategyArg::AlwaysOn => Strategy::AlwaysOn,
        StrategyArg::Random => Strategy::Random {
            duty_p: args.duty.or(bag.duty_p).unwrap_or(0.5),
            burst_len: args.burst_len.or(bag.burst_len),
        },
        StrategyArg::Threshold => Strategy::Threshold {
            theta_bps: args.theta.or(bag.theta_bps).unwrap_or(1000.0),
        },
        StrategyArg::Clustering => {
            let path = args
                .model
                .clone()
                .or(bag.model_path.clone())
                .ok_or(EvalError::ModelMissing)?;
            let model = load_model(&path)?;
            let targets = match args.targets.as_deref().or(bag.targets.as_deref()) {
                Some(t) => parse_targets(t)?,
                None => vec![SemanticLabel::High],
            };
            let allow_set = targets_to_allow_set(&model, &targets);
            Strategy::Clustering { model, allow_set }
        }
    };

    let budget = match args.budget.as_deref().or(bag.budget.as_deref()) {
        Some(text) => parse_budget(text)?,
        None => Budget::Unlimited,
    };

    let mode = match args.mode.or(bag.mode).unwrap_or(ModeArg::Virtual) {
        ModeArg::Virtual => Mode::Virtual,
        ModeArg::Live => Mode::Live(LiveOptions {
            tick_ms: args.tick_ms.or(bag.tick_ms).unwrap_or(100),
            settle_timeout_ms: args
                .settle_timeout_ms
                .or(bag.settle_timeout_ms)
                .unwrap_or(2000),
            tls: tls_from_flags(args.tls_cert, args.tls_key, args.tls_ca)?,
            ..LiveOptions::default()
        }),
    };

    let base = ExperimentConfig {
        scenario,
        strategy,
        strategy_seed: args.strategy_seed.or(bag.rng_seed).unwrap_or(seed),
        budget,
        link: bag.link,
        noise_seed: args.noise_seed.or(bag.noise_seed).unwrap_or(seed),
        mode,
        notification_period_s: args.period.or(bag.period_s).unwrap_or(1.0),
        part_a_min_segment_s: bag.part_a_min_segment_s.unwrap_or(5),
        part_a_max_segment_s: bag.part_a_max_segment_s.unwrap_or(20),
        output_dir: None,
    };

    let mut evaluator = Evaluator::new();
    let mut reports = Vec::new();
    for i in 0..args.repeat.max(1) as u64 {
        let mut cfg = base.clone();
        cfg.noise_seed += i;
        cfg.strategy_seed += i;
        cfg.output_dir = Some(if args.repeat > 1 {
            args.out.join(format!("run_{i:02}"))
        } else {
            args.out.clone()
        });
        let artifacts = evaluator.run_experiment(&cfg)?;
        reports.push(artifacts.report);
    }

    let rows: Vec<&eval::MetricsReport> = reports.iter().collect();
    print!("{}", eval::comparison_markdown(&rows));
    eprintln!("results written to {}", args.out.display());
    Ok(())
}

fn cmd_profile(args: ProfileArgs) -> Result<(), EvalError> {
    let bag = load_config(args.config.as_deref())?;
    let noise_seed = args.noise_seed.or(bag.noise_seed).unwrap_or(77);

    let trace = match &args.from_csv {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| EvalError::Config(format!("cannot read {}: {e}", path.display())))?;
            profiler::read_feature_csv(file)
                .map_err(|e| EvalError::Config(format!("invalid training csv: {e}")))?
        }
        None => {
            let scenario = match args.scenario.or(bag.scenario).unwrap_or(ScenarioArg::PartB) {
                ScenarioArg::PartA => {
                    let seed = args.seed.or(bag.part_a_seed).unwrap_or(42);
                    y1jamlab_core::ran_sim::scenario_part_a(seed)
                }
                ScenarioArg::PartB => y1jamlab_core::ran_sim::scenario_part_b(),
            };
            let sim =
                y1jamlab_core::ran_sim::LinkSimulator::new(bag.link.clone(), scenario, noise_seed);
            eval::collect_training_trace(&sim)
        }
    };

    if let Some(list) = &args.sweep_eps {
        let eps_list: Vec<f64> = list
            .split(',')
            .map(|s| config::parse_f64("sweep_eps", s.trim()).map_err(EvalError::ConfigFile))
            .collect::<Result<_, _>>()?;
        println!("eps,n_clusters,noise_count");
        for row in eval::sweep_eps(&trace, &eps_list, args.min_pts) {
            println!("{},{},{}", row.eps, row.n_clusters, row.noise_count);
        }
    }

    let fit = profiler::fit_model(&trace, args.eps, args.min_pts).map_err(EvalError::Profiler)?;
    std::fs::write(
        &args.out,
        fit.model
            .to_json()
            .map_err(|e| EvalError::Runtime(e.to_string()))?,
    )?;
    if let Some(trace_out) = &args.trace_out {
        let file = std::fs::File::create(trace_out)?;
        profiler::write_feature_csv(file, &trace).map_err(|e| EvalError::Runtime(e.to_string()))?;
    }

    let labels: BTreeMap<usize, String> = fit
        .model
        .labels_semantic
        .iter()
        .map(|(&j, l)| (j, l.to_string()))
        .collect();
    println!(
        "trained on {} samples: {} clusters, {} noise, labels {:?}",
        trace.len(),
        fit.n_clusters,
        fit.noise_count,
        labels
    );
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), EvalError> {
    let bag = load_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;

    let budgets: Vec<f64> = if args.budgets.trim().is_empty() {
        Vec::new()
    } else {
        args.budgets
            .split(',')
            .map(|s| config::parse_f64("budgets", s.trim()).map_err(EvalError::ConfigFile))
            .collect::<Result<_, _>>()?
    };
    let kinds: Vec<SweepStrategyKind> = args
        .strategies
        .split(',')
        .map(|s| SweepStrategyKind::parse(s.trim()).map_err(EvalError::Config))
        .collect::<Result<_, _>>()?;

    let mut base = ExperimentConfig::new(ScenarioChoice::PartB, Strategy::AlwaysOn);
    base.link = bag.link;
    base.noise_seed = args.noise_seed.or(bag.noise_seed).unwrap_or(args.seed);
    base.strategy_seed = args.seed;

    let mut evaluator = Evaluator::new();
    let (sweep, _runs) = eval::budget_sweep(&mut evaluator, &base, &model, &budgets, &kinds)?;
    eval::write_sweep_artifacts(&args.out, &sweep)?;
    print!("{}", eval::sweep_markdown(&sweep));
    eprintln!("sweep written to {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), EvalError> {
    let sweep_path = args.input.join("sweep.json");
    if sweep_path.exists() {
        let text = std::fs::read_to_string(&sweep_path)?;
        let sweep: eval::SweepReport = serde_json::from_str(&text)
            .map_err(|e| EvalError::Config(format!("invalid sweep.json: {e}")))?;
        match args.format {
            FormatArg::Md => print!("{}", eval::sweep_markdown(&sweep)),
            FormatArg::Csv => print!("{}", eval::sweep_csv(&sweep)),
            FormatArg::Json => println!(
                "{}",
                serde_json::to_string_pretty(&sweep)
                    .map_err(|e| EvalError::Runtime(e.to_string()))?
            ),
        }
        return Ok(());
    }

    let report_path = args.input.join("report.json");
    let text = std::fs::read_to_string(&report_path).map_err(|e| {
        EvalError::Config(format!(
            "no sweep.json or report.json in {}: {e}",
            args.input.display()
        ))
    })?;
    let report: eval::MetricsReport = serde_json::from_str(&text)
        .map_err(|e| EvalError::Config(format!("invalid report.json: {e}")))?;
    match args.format {
        FormatArg::Md => print!("{}", eval::comparison_markdown(&[&report])),
        FormatArg::Csv => {
            println!("strategy,session_bler_pct,session_snr_db,mean_bitrate_bps,bitrate_drop_pct,active_time_pct");
            println!(
                "{},{},{},{},{},{}",
                report.strategy,
                report.session_bler_pct,
                report.session_snr_db,
                report.mean_bitrate_bps,
                report.bitrate_drop_pct,
                report.active_time_pct
            );
        }
        FormatArg::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| EvalError::Runtime(e.to_string()))?
        ),
    }
    Ok(())
}

fn cmd_consumer(args: ConsumerArgs) -> Result<(), EvalError> {
    use std::net::ToSocketAddrs;
    let relay_endpoint = args
        .relay_endpoint
        .to_socket_addrs()
        .map_err(|e| EvalError::Config(format!("bad relay endpoint {}: {e}", args.relay_endpoint)))?
        .next()
        .ok_or_else(|| {
            EvalError::Config(format!(
                "relay endpoint {} resolves to nothing",
                args.relay_endpoint
            ))
        })?;
    let metrics_filter = args
        .metrics_filter
        .as_deref()
        .map(|list| list.split(',').map(|s| s.trim().to_string()).collect());
    let tls = tls_from_flags(args.tls_cert, args.tls_key, args.tls_ca)?;

    let opts = ConsumerServiceOptions {
        listen_port: args.listen_port,
        producer_url: args.producer_url,
        period_s: args.period,
        relay_endpoint,
        metrics_filter,
        tls,
        notify_url: args.notify_url,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(eval::live::run_consumer_service(opts))
}
