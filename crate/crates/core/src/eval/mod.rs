//! Experiment orchestration and reporting.
//!
//! Wires the simulator, store, producer, consumer, and jammer into one
//! closed loop (in-process or over localhost sockets), aggregates session
//! metrics, and emits the comparison tables and CDF data.

pub mod live;
pub mod virtual_loop;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::jammer::{self, Budget, BudgetState, JamDecision, JammerCore, Strategy};
use crate::profiler::{self, ClusterModel, FeatureVector, ModelFit, ProfilerError, SemanticLabel};
use crate::ran_sim::{
    scenario_part_a_with, scenario_part_b, LinkModelParams, LinkSimulator, TrafficScenario,
};
use crate::sdl_store::StoreError;
use crate::y1::producer::{ProducerConfig, ProducerError};
use crate::y1::tls::TlsMode;

pub use virtual_loop::{ClosedLoopResult, TickRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error("no active traffic in the session")]
    NoActiveTraffic,
    #[error("baseline bitrate is zero")]
    ZeroBaseline,
    #[error("clustering strategy requires a trained model")]
    ModelMissing,
    #[error("profiling failed: {0}; try an eps sweep (profile --sweep-eps)")]
    Profiler(ProfilerError),
    #[error(transparent)]
    Store(StoreError),
    #[error("subscription setup failed: {0}")]
    Producer(ProducerError),
    #[error("could not bind {addr}: {source}")]
    PortBind {
        addr: String,
        source: std::io::Error,
    },
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// CLI exit code: 2 for configuration problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Config(_) | EvalError::ConfigFile(_) | EvalError::ModelMissing => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioChoice {
    PartA { seed: u64 },
    PartB,
}

impl ScenarioChoice {
    pub fn name(&self) -> String {
        match self {
            ScenarioChoice::PartA { seed } => format!("part_a(seed={seed})"),
            ScenarioChoice::PartB => "part_b".to_string(),
        }
    }
}

/// Wall-clock pacing and transport settings for a socket deployment.
#[derive(Debug, Clone)]
pub struct LiveOptions {
    /// Minimum wall time per tick; 0 runs as fast as the pipeline settles.
    pub tick_ms: u64,
    /// How long the driver waits for the analytics pipeline to deliver a
    /// tick before proceeding with whatever the jammer has.
    pub settle_timeout_ms: u64,
    pub tls: TlsMode,
    pub producer_port: u16,
    pub consumer_port: u16,
    pub relay_port: u16,
    pub control_port: u16,
}

impl Default for LiveOptions {
    fn default() -> Self {
        Self {
            tick_ms: 100,
            settle_timeout_ms: 2000,
            tls: TlsMode::Disabled,
            producer_port: 0,
            consumer_port: 0,
            relay_port: 0,
            control_port: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Mode {
    Virtual,
    Live(LiveOptions),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: ScenarioChoice,
    pub strategy: Strategy,
    pub strategy_seed: u64,
    pub budget: Budget,
    pub link: LinkModelParams,
    pub noise_seed: u64,
    pub mode: Mode,
    pub notification_period_s: f64,
    pub part_a_min_segment_s: u64,
    pub part_a_max_segment_s: u64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioChoice, strategy: Strategy) -> Self {
        Self {
            scenario,
            strategy,
            strategy_seed: 0,
            budget: Budget::Unlimited,
            link: LinkModelParams::default(),
            noise_seed: 0,
            mode: Mode::Virtual,
            notification_period_s: 1.0,
            part_a_min_segment_s: 5,
            part_a_max_segment_s: 20,
            output_dir: None,
        }
    }

    pub fn build_scenario(&self) -> TrafficScenario {
        match self.scenario {
            ScenarioChoice::PartA { seed } => {
                scenario_part_a_with(seed, self.part_a_min_segment_s, self.part_a_max_segment_s)
            }
            ScenarioChoice::PartB => scenario_part_b(),
        }
    }

    fn strategy_name(&self) -> String {
        match &self.strategy {
            Strategy::AlwaysOn => "always_on".into(),
            Strategy::Random { duty_p, .. } => {
                if *duty_p == 0.0 {
                    "no_jammer".into()
                } else {
                    format!("random(p={duty_p})")
                }
            }
            Strategy::Threshold { theta_bps } => format!("threshold(theta={theta_bps})"),
            Strategy::Clustering { .. } => "clustering".into(),
        }
    }
}

/// Session aggregates. The `mean_*` values average active ticks only
/// (ticks with offered traffic); the `session_*` values average the whole
/// session, which is how the whole-run BLER/SNR comparisons are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub strategy: String,
    pub noise_seed: u64,
    pub strategy_seed: u64,
    pub total_ticks: u64,
    pub active_traffic_ticks: u64,
    pub jam_ticks: u64,
    pub active_time_pct: f64,
    pub mean_bitrate_bps: f64,
    pub mean_bler_pct: f64,
    pub mean_snr_db: f64,
    pub session_bler_pct: f64,
    pub session_snr_db: f64,
    pub baseline_mean_bitrate_bps: f64,
    pub bitrate_drop_pct: f64,
    pub total_bytes: u64,
    pub notification_count: u64,
    pub cdf_bitrate: Vec<(f64, f64)>,
    pub cdf_bler: Vec<(f64, f64)>,
    pub cdf_snr: Vec<(f64, f64)>,
}

/// Relative throughput degradation against the no-jamming baseline, in
/// percent. Negative values are reported as-is; they flag calibration bugs.
pub fn bitrate_drop(baseline_bps: f64, observed_bps: f64) -> Result<f64, EvalError> {
    if baseline_bps <= 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (baseline_bps - observed_bps) / baseline_bps)
}

/// Empirical CDF: sorted distinct values with the cumulative fraction at
/// each.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = fraction,
            _ => out.push((*v, fraction)),
        }
    }
    out
}

/// Active-tick means, whole-session means, and CDF tables for one run.
pub struct Aggregates {
    pub active_traffic_ticks: u64,
    pub mean_bitrate_bps: f64,
    pub mean_bler_pct: f64,
    pub mean_snr_db: f64,
    pub session_bler_pct: f64,
    pub session_snr_db: f64,
    pub total_bytes: u64,
    pub cdf_bitrate: Vec<(f64, f64)>,
    pub cdf_bler: Vec<(f64, f64)>,
    pub cdf_snr: Vec<(f64, f64)>,
}

pub fn summarize(per_tick: &[TickRecord]) -> Result<Aggregates, EvalError> {
    let active: Vec<&TickRecord> = per_tick.iter().filter(|r| r.offered_rate_bps > 0).collect();
    if active.is_empty() {
        return Err(EvalError::NoActiveTraffic);
    }
    let mean = |f: &dyn Fn(&TickRecord) -> f64, set: &[&TickRecord]| -> f64 {
        set.iter().map(|r| f(r)).sum::<f64>() / set.len() as f64
    };
    let all: Vec<&TickRecord> = per_tick.iter().collect();
    let bitrates: Vec<f64> = active.iter().map(|r| r.sample.dl_bitrate_bps).collect();
    let blers: Vec<f64> = active.iter().map(|r| r.sample.dl_bler_pct).collect();
    let snrs: Vec<f64> = active.iter().map(|r| r.snr_db).collect();
    Ok(Aggregates {
        active_traffic_ticks: active.len() as u64,
        mean_bitrate_bps: mean(&|r| r.sample.dl_bitrate_bps, &active),
        mean_bler_pct: mean(&|r| r.sample.dl_bler_pct, &active),
        mean_snr_db: mean(&|r| r.snr_db, &active),
        session_bler_pct: mean(&|r| r.sample.dl_bler_pct, &all),
        session_snr_db: mean(&|r| r.snr_db, &all),
        total_bytes: per_tick.iter().map(|r| r.sample.dl_bytes).sum(),
        cdf_bitrate: cdf(&bitrates),
        cdf_bler: cdf(&blers),
        cdf_snr: cdf(&snrs),
    })
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub per_tick: Vec<TickRecord>,
    pub decisions: Vec<JamDecision>,
}

/// Runs experiments and caches no-jammer baselines per
/// (scenario, link, noise seed) so sweep runs share one baseline.
#[derive(Default)]
pub struct Evaluator {
    baseline_cache: HashMap<String, f64>,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    fn baseline_key(sim: &LinkSimulator) -> String {
        // Content-keyed: any change to the scenario, the link constants, or
        // the noise seed is a different baseline.
        format!(
            "{}|{}|{}",
            serde_json::to_string(&sim.scenario).unwrap(),
            serde_json::to_string(&sim.params).unwrap(),
            sim.noise_seed,
        )
    }

    fn baseline_mean(&mut self, sim: &LinkSimulator, period_s: f64) -> Result<f64, EvalError> {
        let key = Self::baseline_key(sim);
        if let Some(&mean) = self.baseline_cache.get(&key) {
            return Ok(mean);
        }
        let jammer = JammerCore::new(
            Strategy::Random {
                duty_p: 0.0,
                burst_len: None,
            },
            0,
            BudgetState::new(Budget::Unlimited, sim.total_ticks()),
        );
        let result = virtual_loop::run_virtual(sim, jammer, ProducerConfig::default(), period_s)?;
        let mean = summarize(&result.per_tick)?.mean_bitrate_bps;
        self.baseline_cache.insert(key, mean);
        Ok(mean)
    }

    pub fn run_experiment(&mut self, cfg: &ExperimentConfig) -> Result<RunArtifacts, EvalError> {
        cfg.link.validate().map_err(EvalError::Config)?;
        if cfg.notification_period_s <= 0.0 {
            return Err(EvalError::Config(
                "notification period must be positive".into(),
            ));
        }
        if let Budget::Fraction(f) = cfg.budget {
            if !(f > 0.0 && f <= 1.0) {
                return Err(EvalError::Config("budget fraction must be in (0,1]".into()));
            }
        }
        if let Strategy::Clustering { model, .. } = &cfg.strategy {
            if model.centroids.is_empty() {
                return Err(EvalError::ModelMissing);
            }
        }

        let scenario = cfg.build_scenario();
        let sim = LinkSimulator::new(cfg.link.clone(), scenario, cfg.noise_seed);
        let baseline = self.baseline_mean(&sim, cfg.notification_period_s)?;

        let jammer = JammerCore::new(
            cfg.strategy.clone(),
            cfg.strategy_seed,
            BudgetState::new(cfg.budget, sim.total_ticks()),
        );
        let result = match &cfg.mode {
            Mode::Virtual => virtual_loop::run_virtual(
                &sim,
                jammer,
                ProducerConfig::default(),
                cfg.notification_period_s,
            )?,
            Mode::Live(options) => live::run_live(
                &sim,
                jammer,
                ProducerConfig::default(),
                cfg.notification_period_s,
                options,
            )?,
        };

        let aggregates = summarize(&result.per_tick)?;
        let jam_ticks = result.decisions.iter().filter(|d| d.is_jam()).count() as u64;
        let report = MetricsReport {
            scenario: cfg.scenario.name(),
            strategy: cfg.strategy_name(),
            noise_seed: cfg.noise_seed,
            strategy_seed: cfg.strategy_seed,
            total_ticks: sim.total_ticks(),
            active_traffic_ticks: aggregates.active_traffic_ticks,
            jam_ticks,
            active_time_pct: 100.0 * jam_ticks as f64 / sim.total_ticks() as f64,
            mean_bitrate_bps: aggregates.mean_bitrate_bps,
            mean_bler_pct: aggregates.mean_bler_pct,
            mean_snr_db: aggregates.mean_snr_db,
            session_bler_pct: aggregates.session_bler_pct,
            session_snr_db: aggregates.session_snr_db,
            baseline_mean_bitrate_bps: baseline,
            bitrate_drop_pct: bitrate_drop(baseline, aggregates.mean_bitrate_bps)?,
            total_bytes: aggregates.total_bytes,
            notification_count: result.notification_count,
            cdf_bitrate: aggregates.cdf_bitrate,
            cdf_bler: aggregates.cdf_bler,
            cdf_snr: aggregates.cdf_snr,
        };
        let artifacts = RunArtifacts {
            report,
            per_tick: result.per_tick,
            decisions: result.decisions,
        };
        if let Some(dir) = &cfg.output_dir {
            write_run_artifacts(dir, &artifacts)?;
        }
        Ok(artifacts)
    }
}

/// One-off convenience wrapper around [`Evaluator::run_experiment`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, EvalError> {
    Evaluator::new().run_experiment(cfg)
}

/// Collects a jam-free feature trace for offline profiling.
pub fn collect_training_trace(sim: &LinkSimulator) -> Vec<FeatureVector> {
    (0..sim.total_ticks())
        .map(|t| FeatureVector::from(&sim.step_tick(t, false).sample))
        .collect()
}

pub const MIN_PROFILE_SAMPLES: usize = 200;

/// Offline profiling phase: runs the scenario jam-free, fits the
/// standardizer and clustering, and names the clusters.
pub fn profile_phase(
    scenario: TrafficScenario,
    link: LinkModelParams,
    noise_seed: u64,
    eps: f64,
    min_pts: usize,
) -> Result<(ModelFit, Vec<FeatureVector>), EvalError> {
    let sim = LinkSimulator::new(link, scenario, noise_seed);
    let trace = collect_training_trace(&sim);
    if trace.len() < MIN_PROFILE_SAMPLES {
        return Err(EvalError::Config(format!(
            "profiling needs at least {MIN_PROFILE_SAMPLES} samples, scenario yields {}",
            trace.len()
        )));
    }
    let fit = profiler::fit_model(&trace, eps, min_pts).map_err(EvalError::Profiler)?;
    Ok((fit, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSweepRow {
    pub eps: f64,
    pub n_clusters: usize,
    pub noise_count: usize,
}

/// Grid sweep over eps for parameter tuning.
pub fn sweep_eps(trace: &[FeatureVector], eps_list: &[f64], min_pts: usize) -> Vec<EpsSweepRow> {
    let Ok(standardizer) = profiler::fit_standardizer(trace) else {
        return Vec::new();
    };
    let points = standardizer.transform_all(trace);
    eps_list
        .iter()
        .map(|&eps| {
            let labels = profiler::dbscan(&points, eps, min_pts);
            let n_clusters = (labels.iter().copied().max().unwrap_or(-1) + 1) as usize;
            let noise_count = labels.iter().filter(|&&l| l == profiler::NOISE).count();
            EpsSweepRow {
                eps,
                n_clusters,
                noise_count,
            }
        })
        .collect()
}

/// Which jammer a sweep row evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStrategyKind {
    /// Duty-cycle random jammer with duty matched to the budget.
    Random,
    /// Clustering jammer attacking one semantic class.
    Target(SemanticLabel),
}

impl SweepStrategyKind {
    pub fn name(&self) -> String {
        match self {
            SweepStrategyKind::Random => "random".into(),
            SweepStrategyKind::Target(label) => label.to_string().to_lowercase(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(SweepStrategyKind::Random),
            other => other
                .parse::<SemanticLabel>()
                .map(SweepStrategyKind::Target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub budget_pct: f64,
    pub mean_bitrate_bps: f64,
    pub drop_pct: f64,
    pub session_bler_pct: f64,
    pub jam_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub budgets_pct: Vec<f64>,
    pub baseline_mean_bitrate_bps: f64,
    pub baseline_session_bler_pct: f64,
    pub rows: Vec<SweepRow>,
}

/// One sweep run kept around for post-hoc checks (budget safety, latency).
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub strategy: String,
    pub budget_pct: f64,
    pub artifacts: RunArtifacts,
}

/// Runs every (budget, strategy) pair on the multi-rate scenario with
/// identical seeds within a budget and assembles the comparison table.
pub fn budget_sweep(
    evaluator: &mut Evaluator,
    base: &ExperimentConfig,
    model: &ClusterModel,
    budgets_pct: &[f64],
    kinds: &[SweepStrategyKind],
) -> Result<(SweepReport, Vec<SweepRun>), EvalError> {
    let mut rows: Vec<SweepRow> = kinds
        .iter()
        .map(|k| SweepRow {
            strategy: k.name(),
            cells: Vec::new(),
        })
        .collect();
    let mut runs = Vec::new();

    // Baseline once, from the shared cache.
    let baseline_cfg = ExperimentConfig {
        strategy: Strategy::Random {
            duty_p: 0.0,
            burst_len: None,
        },
        budget: Budget::Unlimited,
        output_dir: None,
        ..base.clone()
    };
    let baseline = evaluator.run_experiment(&baseline_cfg)?;

    for &budget_pct in budgets_pct {
        let fraction = budget_pct / 100.0;
        for (row, kind) in rows.iter_mut().zip(kinds) {
            let strategy = match kind {
                SweepStrategyKind::Random => Strategy::Random {
                    duty_p: fraction,
                    burst_len: None,
                },
                SweepStrategyKind::Target(label) => Strategy::Clustering {
                    model: model.clone(),
                    allow_set: jammer::targets_to_allow_set(model, &[*label]),
                },
            };
            let cfg = ExperimentConfig {
                strategy,
                budget: Budget::Fraction(fraction),
                output_dir: None,
                ..base.clone()
            };
            let artifacts = evaluator.run_experiment(&cfg)?;
            row.cells.push(SweepCell {
                budget_pct,
                mean_bitrate_bps: artifacts.report.mean_bitrate_bps,
                drop_pct: artifacts.report.bitrate_drop_pct,
                session_bler_pct: artifacts.report.session_bler_pct,
                jam_ticks: artifacts.report.jam_ticks,
            });
            runs.push(SweepRun {
                strategy: kind.name(),
                budget_pct,
                artifacts,
            });
        }
    }

    Ok((
        SweepReport {
            scenario: base.scenario.name(),
            budgets_pct: budgets_pct.to_vec(),
            baseline_mean_bitrate_bps: baseline.report.mean_bitrate_bps,
            baseline_session_bler_pct: baseline.report.session_bler_pct,
            rows,
        },
        runs,
    ))
}

pub fn write_run_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let report_json = serde_json::to_string_pretty(&artifacts.report)
        .map_err(|e| EvalError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("report.json"), report_json)?;

    let mut wtr = csv::Writer::from_path(dir.join("perticks.csv"))
        .map_err(|e| EvalError::Runtime(e.to_string()))?;
    wtr.write_record([
        "tick",
        "offered_rate_bps",
        "jam_active",
        "snr_db",
        "dl_cqi",
        "dl_mcs",
        "dl_bitrate_bps",
        "dl_bler_pct",
        "dl_latency_s",
        "dl_bytes",
        "pci",
        "carrier_id",
        "num_rach",
    ])
    .map_err(|e| EvalError::Runtime(e.to_string()))?;
    for r in &artifacts.per_tick {
        wtr.write_record([
            r.tick.to_string(),
            r.offered_rate_bps.to_string(),
            r.jam_active.to_string(),
            r.snr_db.to_string(),
            r.sample.dl_cqi.to_string(),
            r.sample.dl_mcs.to_string(),
            r.sample.dl_bitrate_bps.to_string(),
            r.sample.dl_bler_pct.to_string(),
            r.sample.dl_latency_s.to_string(),
            r.sample.dl_bytes.to_string(),
            r.sample.pci.to_string(),
            r.sample.carrier_id.to_string(),
            r.sample.num_rach.to_string(),
        ])
        .map_err(|e| EvalError::Runtime(e.to_string()))?;
    }
    wtr.flush()?;

    let mut scenario_csv = String::from("tick,offered_rate_bps\n");
    for r in &artifacts.per_tick {
        scenario_csv.push_str(&format!("{},{}\n", r.tick, r.offered_rate_bps));
    }
    std::fs::write(dir.join("scenario.csv"), scenario_csv)?;

    for (name, table) in [
        ("cdf_bitrate.csv", &artifacts.report.cdf_bitrate),
        ("cdf_bler.csv", &artifacts.report.cdf_bler),
        ("cdf_snr.csv", &artifacts.report.cdf_snr),
    ] {
        let mut file = std::fs::File::create(dir.join(name))?;
        writeln!(file, "value,cum_fraction")?;
        for (value, fraction) in table {
            writeln!(file, "{value},{fraction}")?;
        }
    }

    let file = std::fs::File::create(dir.join("decisions.csv"))?;
    jammer::write_decision_csv(file, &artifacts.decisions)
        .map_err(|e| EvalError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn write_sweep_artifacts(dir: &Path, sweep: &SweepReport) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let json =
        serde_json::to_string_pretty(sweep).map_err(|e| EvalError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("sweep.json"), json)?;
    std::fs::write(dir.join("sweep.md"), sweep_markdown(sweep))?;
    std::fs::write(dir.join("sweep.csv"), sweep_csv(sweep))?;
    Ok(())
}

/// Single-run rows in the fixed-traffic comparison layout.
pub fn comparison_markdown(reports: &[&MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(
        "| Strategy | BLER (%) | SNR (dB) | Bitrate (bps) | Bitrate Drop (%) | Active Time (%) |\n",
    );
    out.push_str("|---|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {:.2} | {:.2} | {:.1} | {:.1} | {:.1} |\n",
            r.strategy,
            r.session_bler_pct,
            r.session_snr_db,
            r.mean_bitrate_bps,
            r.bitrate_drop_pct,
            r.active_time_pct,
        ));
    }
    out
}

/// Budget-sweep table, one column group per budget.
pub fn sweep_markdown(sweep: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str("| Strategy |");
    for b in &sweep.budgets_pct {
        out.push_str(&format!(" {b}% Bitrate | {b}% Drop (%) | {b}% BLER |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &sweep.budgets_pct {
        out.push_str("---|---|---|");
    }
    out.push('\n');

    out.push_str("| no_jammer |");
    for _ in &sweep.budgets_pct {
        out.push_str(&format!(
            " {:.1} | - | {:.2} |",
            sweep.baseline_mean_bitrate_bps, sweep.baseline_session_bler_pct
        ));
    }
    out.push('\n');

    for row in &sweep.rows {
        out.push_str(&format!("| {} |", row.strategy));
        for cell in &row.cells {
            out.push_str(&format!(
                " {:.1} | {:.1} | {:.2} |",
                cell.mean_bitrate_bps, cell.drop_pct, cell.session_bler_pct
            ));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(sweep: &SweepReport) -> String {
    let mut out =
        String::from("strategy,budget_pct,mean_bitrate_bps,drop_pct,session_bler_pct,jam_ticks\n");
    for row in &sweep.rows {
        for cell in &row.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.strategy,
                cell.budget_pct,
                cell.mean_bitrate_bps,
                cell.drop_pct,
                cell.session_bler_pct,
                cell.jam_ticks
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitrate_drop_examples() {
        let d = bitrate_drop(3_949_274.9, 2_154_627.8).unwrap();
        assert!((d - 45.4).abs() < 0.05, "drop {d}");
        assert_eq!(bitrate_drop(5.0, 5.0).unwrap(), 0.0);
        let d = bitrate_drop(2_386_517.0, 1_954_988.0).unwrap();
        assert!((d - 18.1).abs() < 0.05, "drop {d}");
        assert!(matches!(
            bitrate_drop(0.0, 1.0),
            Err(EvalError::ZeroBaseline)
        ));
        // Negative drops are surfaced, not clamped.
        assert!(bitrate_drop(100.0, 150.0).unwrap() < 0.0);
    }

    #[test]
    fn cdf_definition() {
        let table = cdf(&[1.0, 1.0, 2.0]);
        assert_eq!(table, vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
        assert!(cdf(&[]).is_empty());
    }

    #[test]
    fn cdf_is_nondecreasing_and_ends_at_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let table = cdf(&values);
            assert!(table
                .windows(2)
                .all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
            assert_eq!(table.last().unwrap().1, 1.0);
        }
    }

    fn record(tick: u64, offered: u64, bitrate: f64) -> TickRecord {
        TickRecord {
            tick,
            offered_rate_bps: offered,
            jam_active: false,
            snr_db: 19.6,
            sample: crate::ran_sim::AnalyticsSample {
                tick,
                dl_cqi: 13.0,
                dl_mcs: 27.0,
                dl_bitrate_bps: bitrate,
                dl_bler_pct: if offered > 0 { 0.7 } else { 0.0 },
                dl_latency_s: 0.012,
                dl_bytes: (bitrate / 8.0).round() as u64,
                pci: 1,
                carrier_id: 0,
                num_rach: 0,
            },
        }
    }

    #[test]
    fn summarize_excludes_idle_from_means() {
        let records = vec![record(0, 2_000_000, 2e6), record(1, 0, 0.0)];
        let agg = summarize(&records).unwrap();
        assert_eq!(agg.mean_bitrate_bps, 2e6);
        assert_eq!(agg.active_traffic_ticks, 1);
        // Session means still include the idle tick.
        assert!((agg.session_bler_pct - 0.35).abs() < 1e-12);
    }

    #[test]
    fn summarize_rejects_all_idle() {
        let records = vec![record(0, 0, 0.0)];
        assert!(matches!(
            summarize(&records),
            Err(EvalError::NoActiveTraffic)
        ));
    }

    #[test]
    fn baseline_run_has_zero_drop() {
        let cfg = ExperimentConfig::new(
            ScenarioChoice::PartA { seed: 42 },
            Strategy::Random {
                duty_p: 0.0,
                burst_len: None,
            },
        );
        let artifacts = run_experiment(&cfg).unwrap();
        assert_eq!(artifacts.report.bitrate_drop_pct, 0.0);
        assert_eq!(artifacts.report.jam_ticks, 0);
        assert_eq!(artifacts.report.active_time_pct, 0.0);
        assert!((artifacts.report.mean_bitrate_bps - 3_949_275.0).abs() < 10_000.0);
    }

    #[test]
    fn baseline_runs_are_idempotent() {
        let cfg = ExperimentConfig::new(
            ScenarioChoice::PartA { seed: 9 },
            Strategy::Random {
                duty_p: 0.0,
                burst_len: None,
            },
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn drop_is_consistent_with_stored_baseline() {
        let cfg = ExperimentConfig::new(ScenarioChoice::PartA { seed: 42 }, Strategy::AlwaysOn);
        let r = run_experiment(&cfg).unwrap().report;
        let recomputed = 100.0 * (r.baseline_mean_bitrate_bps - r.mean_bitrate_bps)
            / r.baseline_mean_bitrate_bps;
        assert!((recomputed - r.bitrate_drop_pct).abs() / r.bitrate_drop_pct.abs() < 1e-9);
    }

    #[test]
    fn empty_budget_sweep_is_empty() {
        let (model_fit, _) =
            profile_phase(scenario_part_b(), LinkModelParams::default(), 77, 0.30, 10).unwrap();
        let base = ExperimentConfig::new(ScenarioChoice::PartB, Strategy::AlwaysOn);
        let mut evaluator = Evaluator::new();
        let (sweep, runs) = budget_sweep(
            &mut evaluator,
            &base,
            &model_fit.model,
            &[],
            &[
                SweepStrategyKind::Random,
                SweepStrategyKind::Target(SemanticLabel::High),
            ],
        )
        .unwrap();
        assert!(runs.is_empty());
        assert!(sweep.rows.iter().all(|r| r.cells.is_empty()));
    }

    #[test]
    fn eps_sweep_tabulates() {
        let sim = LinkSimulator::new(LinkModelParams::default(), scenario_part_b(), 77);
        let trace = collect_training_trace(&sim);
        let rows = sweep_eps(&trace, &[0.2, 0.3, 0.5], 10);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].eps, 0.3);
        for row in &rows {
            assert!(row.n_clusters >= 1, "eps {} found no clusters", row.eps);
        }
    }

    #[test]
    fn all_idle_profile_yields_single_idle_cluster() {
        let scenario = TrafficScenario {
            segments: vec![crate::ran_sim::Segment {
                duration_s: 220,
                offered_rate_bps: 0,
            }],
            seed: 0,
            total_s: 220,
        };
        let (fit, _) = profile_phase(scenario, LinkModelParams::default(), 1, 0.30, 10).unwrap();
        assert_eq!(fit.n_clusters, 1);
        assert_eq!(fit.model.labels_semantic[&0], SemanticLabel::Idle);
    }
}
