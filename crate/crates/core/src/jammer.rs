//! Jamming controller.
//!
//! Consumes the relayed analytics stream and produces one JAM / NO-JAM
//! verdict per simulation tick, applying one of four strategies behind an
//! optional activity budget. Decisions act on the most recent relay line,
//! which under a 1 s notification period means the analytics of tick t-1
//! drive the decision at tick t.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::profiler::{classify, ClusterModel, FeatureVector, SemanticLabel};
use crate::y1::relay::RelayFrame;

/// Ticks a held analytics snapshot stays usable before the controller falls
/// back to NO-JAM.
pub const STALE_AFTER_TICKS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "JAM")]
    Jam,
    #[serde(rename = "NO_JAM")]
    NoJam,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Jam => "JAM",
            Verdict::NoJam => "NO_JAM",
        })
    }
}

/// Decision strategy. Exactly the parameters of the active kind exist.
#[derive(Debug, Clone)]
pub enum Strategy {
    AlwaysOn,
    Random {
        duty_p: f64,
        burst_len: Option<u64>,
    },
    Threshold {
        theta_bps: f64,
    },
    Clustering {
        model: ClusterModel,
        allow_set: BTreeSet<usize>,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::AlwaysOn => "always_on",
            Strategy::Random { .. } => "random",
            Strategy::Threshold { .. } => "threshold",
            Strategy::Clustering { .. } => "clustering",
        }
    }
}

pub const DEFAULT_THETA_BPS: f64 = 1000.0;

/// Builds the allow set (clusters the jammer leaves alone) from the
/// semantic classes it should attack: everything not targeted is allowed.
pub fn targets_to_allow_set(model: &ClusterModel, targets: &[SemanticLabel]) -> BTreeSet<usize> {
    let targeted: BTreeSet<usize> = model.clusters_with_labels(targets).into_iter().collect();
    model
        .all_cluster_indices()
        .into_iter()
        .filter(|j| !targeted.contains(j))
        .collect()
}

/// Activity budget: hard cap on JAM ticks per session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Unlimited,
    /// Fraction of total session ticks in (0, 1].
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub budget: Budget,
    pub total_ticks: u64,
    pub active_ticks: u64,
}

impl BudgetState {
    pub fn new(budget: Budget, total_ticks: u64) -> Self {
        if let Budget::Fraction(f) = budget {
            assert!(f > 0.0 && f <= 1.0, "budget fraction must be in (0,1]");
        }
        Self {
            budget,
            total_ticks,
            active_ticks: 0,
        }
    }

    pub fn cap(&self) -> Option<u64> {
        match self.budget {
            Budget::Unlimited => None,
            Budget::Fraction(f) => Some((f * self.total_ticks as f64).ceil() as u64),
        }
    }
}

/// Gates a strategy verdict through the budget, charging one tick per
/// allowed JAM.
pub fn budget_gate(verdict: Verdict, state: &mut BudgetState) -> (Verdict, bool) {
    if verdict == Verdict::NoJam {
        return (Verdict::NoJam, false);
    }
    match state.cap() {
        Some(cap) if state.active_ticks + 1 > cap => (Verdict::NoJam, true),
        _ => {
            state.active_ticks += 1;
            (Verdict::Jam, false)
        }
    }
}

/// Feature snapshot recovered from one relay line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayAnalytics {
    pub tick: u64,
    pub cqi: Option<f64>,
    pub mcs: Option<f64>,
    pub bitrate_bps: Option<f64>,
    pub bler_pct: Option<f64>,
}

impl RelayAnalytics {
    pub fn from_frame(frame: &RelayFrame) -> Option<Self> {
        let tick = frame.tick()?;
        let get = |k: &str| frame.rai_content.get(k).and_then(|v| v.as_f64());
        Some(Self {
            tick,
            cqi: get("dl_cqi"),
            mcs: get("dl_mcs"),
            bitrate_bps: get("dl_bitrate_bps"),
            bler_pct: get("dl_bler_pct"),
        })
    }

    pub fn feature_vector(&self) -> Option<FeatureVector> {
        Some(FeatureVector {
            cqi: self.cqi?,
            mcs: self.mcs?,
            bitrate_bps: self.bitrate_bps?,
            bler_pct: self.bler_pct?,
        })
    }
}

pub fn decide_always_on() -> Verdict {
    Verdict::Jam
}

/// Independent seeded Bernoulli draw per tick; with `burst_len` the draw at
/// each burst boundary holds for the whole burst.
pub fn decide_random(tick: u64, duty_p: f64, burst_len: Option<u64>, rng_seed: u64) -> Verdict {
    debug_assert!((0.0..=1.0).contains(&duty_p));
    let draw_tick = match burst_len {
        Some(len) if len > 1 => tick / len * len,
        _ => tick,
    };
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&rng_seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&draw_tick.to_le_bytes());
    bytes[16..24].copy_from_slice(&0x6a61_6d72u64.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    if rng.gen::<f64>() < duty_p {
        Verdict::Jam
    } else {
        Verdict::NoJam
    }
}

/// JAM whenever the observed bitrate is at or above the threshold.
pub fn decide_threshold(latest: Option<&RelayAnalytics>, theta_bps: f64) -> (Verdict, String) {
    match latest.and_then(|a| a.bitrate_bps) {
        None => (Verdict::NoJam, "no-data".to_string()),
        Some(bitrate) if bitrate >= theta_bps => {
            (Verdict::Jam, format!("threshold({bitrate}>={theta_bps})"))
        }
        Some(bitrate) => (Verdict::NoJam, format!("threshold({bitrate}<{theta_bps})")),
    }
}

/// Classifies the sample against the trained model and jams unless the
/// nearest cluster is in the allow set.
pub fn decide_clustering(
    latest: Option<&RelayAnalytics>,
    model: &ClusterModel,
    allow_set: &BTreeSet<usize>,
) -> (Verdict, String) {
    let Some(x) = latest.and_then(|a| a.feature_vector()) else {
        return (Verdict::NoJam, "no-data".to_string());
    };
    let j = classify(x, model);
    if allow_set.contains(&j) {
        (Verdict::NoJam, format!("clustering(j*={j} allowed)"))
    } else {
        (Verdict::Jam, format!("clustering(j*={j} targeted)"))
    }
}

/// One logged decision, including the analytics snapshot it consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamDecision {
    pub tick: u64,
    pub verdict: Verdict,
    pub reason: String,
    pub analytics: Option<RelayAnalytics>,
}

impl JamDecision {
    pub fn is_jam(&self) -> bool {
        self.verdict == Verdict::Jam
    }
}

/// Strategy plus budget plus the latest-analytics slot; drives one decision
/// per tick and keeps the full decision log.
#[derive(Debug, Clone)]
pub struct JammerCore {
    pub strategy: Strategy,
    pub rng_seed: u64,
    pub budget: BudgetState,
    latest: Option<RelayAnalytics>,
    log: Vec<JamDecision>,
}

impl JammerCore {
    pub fn new(strategy: Strategy, rng_seed: u64, budget: BudgetState) -> Self {
        Self {
            strategy,
            rng_seed,
            budget,
            latest: None,
            log: Vec::new(),
        }
    }

    /// Feeds one relay line into the latest-analytics slot
    /// (last-writer-wins). Unparseable lines are dropped.
    pub fn ingest_line(&mut self, line: &str) -> bool {
        match RelayFrame::parse_line(line)
            .ok()
            .as_ref()
            .and_then(RelayAnalytics::from_frame)
        {
            Some(a) => {
                self.latest = Some(a);
                true
            }
            None => false,
        }
    }

    pub fn latest_tick(&self) -> Option<u64> {
        self.latest.map(|a| a.tick)
    }

    /// One decision for `tick`. Analytics-driven strategies fall back to
    /// NO-JAM with "no-data" before the first relay line and with
    /// "stale-data" once the held snapshot is older than
    /// [`STALE_AFTER_TICKS`].
    pub fn decide(&mut self, tick: u64) -> JamDecision {
        let fresh = self
            .latest
            .filter(|a| tick.saturating_sub(a.tick) <= STALE_AFTER_TICKS);
        let (verdict, reason) = match &self.strategy {
            Strategy::AlwaysOn => (decide_always_on(), "always-on".to_string()),
            Strategy::Random { duty_p, burst_len } => {
                let v = decide_random(tick, *duty_p, *burst_len, self.rng_seed);
                (v, format!("random(p={duty_p})"))
            }
            Strategy::Threshold { theta_bps } => match (fresh, self.latest) {
                (None, Some(_)) => (Verdict::NoJam, "stale-data".to_string()),
                (latest, _) => decide_threshold(latest.as_ref(), *theta_bps),
            },
            Strategy::Clustering { model, allow_set } => match (fresh, self.latest) {
                (None, Some(_)) => (Verdict::NoJam, "stale-data".to_string()),
                (latest, _) => decide_clustering(latest.as_ref(), model, allow_set),
            },
        };
        let (final_verdict, suppressed) = budget_gate(verdict, &mut self.budget);
        let decision = JamDecision {
            tick,
            verdict: final_verdict,
            reason: if suppressed {
                "budget-exhausted".to_string()
            } else {
                reason
            },
            analytics: self.latest,
        };
        self.log.push(decision.clone());
        decision
    }

    pub fn log(&self) -> &[JamDecision] {
        &self.log
    }

    pub fn into_log(self) -> Vec<JamDecision> {
        self.log
    }

    pub fn jam_ticks(&self) -> u64 {
        self.budget.active_ticks
    }
}

/// Writes the decision log as
/// `tick,verdict,reason,analytics_tick,cqi,mcs,bitrate_bps,bler_pct`.
pub fn write_decision_csv<W: Write>(w: W, log: &[JamDecision]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "tick",
        "verdict",
        "reason",
        "analytics_tick",
        "cqi",
        "mcs",
        "bitrate_bps",
        "bler_pct",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in log {
        let a = d.analytics;
        wtr.write_record([
            d.tick.to_string(),
            d.verdict.to_string(),
            d.reason.clone(),
            a.map(|x| x.tick.to_string()).unwrap_or_default(),
            opt(a.and_then(|x| x.cqi)),
            opt(a.and_then(|x| x.mcs)),
            opt(a.and_then(|x| x.bitrate_bps)),
            opt(a.and_then(|x| x.bler_pct)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
