//! Discrete-time simulated RAN downlink.
//!
//! One tick is one second of virtual time. Each tick the link either carries
//! the scenario's offered traffic cleanly or, when the jammer is active,
//! through a degraded two-state channel. The emitted [`AnalyticsSample`]
//! carries the nine cell-level metrics the analytics producer exposes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// One contiguous stretch of constant offered load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: u64,
    pub offered_rate_bps: u64,
}

/// Ordered traffic segments plus the seed that generated them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficScenario {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub total_s: u64,
}

impl TrafficScenario {
    /// Offered rate for a tick, 0 when the tick is past the end.
    pub fn rate_at(&self, tick: u64) -> u64 {
        let mut t = tick;
        for seg in &self.segments {
            if t < seg.duration_s {
                return seg.offered_rate_bps;
            }
            t -= seg.duration_s;
        }
        0
    }

    /// Per-tick offered rates, length `total_s`.
    pub fn per_tick_rates(&self) -> Vec<u64> {
        let mut rates = Vec::with_capacity(self.total_s as usize);
        for seg in &self.segments {
            for _ in 0..seg.duration_s {
                rates.push(seg.offered_rate_bps);
            }
        }
        rates
    }

    pub fn active_ticks(&self) -> u64 {
        self.segments
            .iter()
            .filter(|s| s.offered_rate_bps > 0)
            .map(|s| s.duration_s)
            .sum()
    }

    /// Writes `tick,offered_rate_bps` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["tick", "offered_rate_bps"])?;
        for (tick, rate) in self.per_tick_rates().iter().enumerate() {
            wtr.write_record([tick.to_string(), rate.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub const PART_A_TOTAL_S: u64 = 270;
pub const PART_A_ACTIVE_TICKS: u64 = 204; // round(0.754 * 270)
pub const PART_A_RATE_BPS: u64 = 4_000_000;
pub const PART_B_TOTAL_S: u64 = 220;

/// Single-class scenario: 270 s at 4 Mbps with randomly alternating
/// active/idle segments, exactly 204 active ticks per seed.
pub fn scenario_part_a(seed: u64) -> TrafficScenario {
    scenario_part_a_with(seed, 5, 20)
}

/// `scenario_part_a` with configurable segment-length bounds.
pub fn scenario_part_a_with(seed: u64, min_segment_s: u64, max_segment_s: u64) -> TrafficScenario {
    assert!(min_segment_s >= 1 && min_segment_s <= max_segment_s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining_active = PART_A_ACTIVE_TICKS;
    let mut remaining_idle = PART_A_TOTAL_S - PART_A_ACTIVE_TICKS;
    let mut segments = Vec::new();
    let mut active_turn = true;
    while remaining_active + remaining_idle > 0 {
        let remaining = if active_turn {
            &mut remaining_active
        } else {
            &mut remaining_idle
        };
        if *remaining > 0 {
            let len = rng.gen_range(min_segment_s..=max_segment_s).min(*remaining);
            segments.push(Segment {
                duration_s: len,
                offered_rate_bps: if active_turn { PART_A_RATE_BPS } else { 0 },
            });
            *remaining -= len;
        }
        active_turn = !active_turn;
    }
    TrafficScenario {
        segments,
        seed,
        total_s: PART_A_TOTAL_S,
    }
}

/// Multi-rate scenario: 220 s split over 4 Mbps / 2 Mbps / 500 kbps / idle
/// classes (35.5 / 24.5 / 24.5 / 15.5 percent of ticks), interleaved
/// round-robin in 10-tick blocks. Fully deterministic.
pub fn scenario_part_b() -> TrafficScenario {
    const CLASSES: [(u64, f64); 4] = [
        (4_000_000, 0.355),
        (2_000_000, 0.245),
        (500_000, 0.245),
        (0, 0.155),
    ];
    let mut counts: Vec<u64> = CLASSES
        .iter()
        .map(|(_, share)| (share * PART_B_TOTAL_S as f64).round() as u64)
        .collect();
    // Rounding residue goes to the 4 Mbps class.
    let assigned: u64 = counts.iter().sum();
    counts[0] = (counts[0] as i64 + (PART_B_TOTAL_S as i64 - assigned as i64)) as u64;

    let mut segments = Vec::new();
    const BLOCK: u64 = 10;
    while counts.iter().any(|&c| c > 0) {
        for (i, &(rate, _)) in CLASSES.iter().enumerate() {
            if counts[i] == 0 {
                continue;
            }
            let len = counts[i].min(BLOCK);
            segments.push(Segment {
                duration_s: len,
                offered_rate_bps: rate,
            });
            counts[i] -= len;
        }
    }
    TrafficScenario {
        segments,
        seed: 0,
        total_s: PART_B_TOTAL_S,
    }
}

/// Two-state (clear/jammed) link degradation model. All constants are
/// configurable; the defaults reproduce the baseline and always-on operating
/// points the lab calibrates against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModelParams {
    /// Mean downlink SNR with no interference.
    pub snr_clear_db: f64,
    /// SNR loss while the jammer transmits.
    pub snr_jam_delta_db: f64,
    /// Block error rate on jammed ticks.
    pub bler_jam_pct: f64,
    /// Block error rate on clear ticks.
    pub bler_clear_pct: f64,
    /// Fraction of the offered rate that still gets through under jamming.
    pub throughput_retain_jam: f64,
    /// Clear-channel goodput factor (protocol overhead).
    pub dl_overhead: f64,
    pub latency_clear_s: f64,
    pub latency_jam_s: f64,
    /// Gaussian SNR jitter, dB.
    pub snr_jitter_db: f64,
    /// Gaussian BLER jitter on jammed ticks, percentage points.
    pub bler_jam_jitter_pp: f64,
    /// Gaussian BLER jitter on clear active ticks, percentage points.
    pub bler_clear_jitter_pp: f64,
    /// Probability that a clear active tick sees a short error burst.
    pub bler_spike_prob: f64,
    pub bler_spike_min_pp: f64,
    pub bler_spike_max_pp: f64,
    /// SNR thresholds (dB) above which CQI 1..=15 are reported.
    pub cqi_table: Vec<f64>,
    /// SNR thresholds (dB) above which MCS 1..=28 are selected.
    pub mcs_table: Vec<f64>,
    pub pci: u32,
    pub carrier_id: u32,
}

impl Default for LinkModelParams {
    fn default() -> Self {
        Self {
            snr_clear_db: 19.6,
            snr_jam_delta_db: 10.9,
            bler_jam_pct: 85.0,
            bler_clear_pct: 0.7,
            throughput_retain_jam: 0.53,
            dl_overhead: 0.987_318_7,
            latency_clear_s: 0.012,
            latency_jam_s: 0.055,
            snr_jitter_db: 0.5,
            bler_jam_jitter_pp: 2.0,
            bler_clear_jitter_pp: 0.05,
            bler_spike_prob: 0.05,
            bler_spike_min_pp: 5.0,
            bler_spike_max_pp: 15.0,
            cqi_table: DEFAULT_CQI_TABLE.to_vec(),
            mcs_table: DEFAULT_MCS_TABLE.to_vec(),
            pci: 1,
            carrier_id: 0,
        }
    }
}

impl LinkModelParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.snr_jam_delta_db < 0.0 {
            return Err("snr_jam_delta_db must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.throughput_retain_jam) {
            return Err("throughput_retain_jam must be in [0,1]".into());
        }
        if !(0.0..=100.0).contains(&self.bler_jam_pct) {
            return Err("bler_jam_pct must be in [0,100]".into());
        }
        for t in [&self.cqi_table, &self.mcs_table] {
            if t.windows(2).any(|w| w[0] > w[1]) {
                return Err("snr tables must be monotone nondecreasing".into());
            }
        }
        if self.cqi_table.len() != 15 {
            return Err("cqi_table needs 15 thresholds".into());
        }
        if self.mcs_table.len() != 28 {
            return Err("mcs_table needs 28 thresholds".into());
        }
        Ok(())
    }
}

/// Reporting thresholds for CQI 1..=15; below the first entry is CQI 0.
pub const DEFAULT_CQI_TABLE: [f64; 15] = [
    -6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7,
];

/// Selection thresholds for MCS 1..=28; below the first entry is MCS 0.
pub const DEFAULT_MCS_TABLE: [f64; 28] = [
    -7.2, -6.4, -5.6, -4.8, -4.0, -3.2, -2.4, -1.6, -0.8, 0.0, 0.8, 1.6, 2.5, 3.4, 4.3, 5.2, 6.1,
    7.0, 8.0, 9.3, 10.6, 11.9, 13.2, 14.5, 15.8, 17.1, 18.3, 21.2,
];

/// Piecewise-constant lookup: the number of thresholds at or below `snr_db`.
pub fn index_from_snr(snr_db: f64, table: &[f64]) -> u32 {
    table.iter().take_while(|&&t| t <= snr_db).count() as u32
}

pub fn cqi_from_snr(snr_db: f64, table: &[f64]) -> u32 {
    index_from_snr(snr_db, table).min(15)
}

pub fn mcs_from_snr(snr_db: f64, table: &[f64]) -> u32 {
    index_from_snr(snr_db, table).min(28)
}

/// One tick of the nine exposed cell-level metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsSample {
    pub tick: u64,
    pub dl_cqi: f64,
    pub dl_mcs: f64,
    pub dl_bitrate_bps: f64,
    pub dl_bler_pct: f64,
    pub dl_latency_s: f64,
    pub dl_bytes: u64,
    pub pci: u32,
    pub carrier_id: u32,
    pub num_rach: u32,
}

/// Sample plus simulator-side ground truth that is not exposed over the
/// analytics interface.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub sample: AnalyticsSample,
    pub snr_db: f64,
    pub offered_rate_bps: u64,
    pub jam_active: bool,
}

fn tick_rng(seed: u64, tick: u64, salt: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&tick.to_le_bytes());
    bytes[16..24].copy_from_slice(&salt.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Advances the link by one tick. Noise is derived from `(noise_seed, tick)`
/// only, so replaying any tick is independent of history.
pub fn step(
    params: &LinkModelParams,
    offered_rate_bps: u64,
    jam_active: bool,
    tick: u64,
    noise_seed: u64,
) -> TickOutput {
    let mut rng = tick_rng(noise_seed, tick, 0x6c69_6e6b);
    // Fixed draw order per tick regardless of branch taken.
    let snr_noise: f64 = {
        let n: f64 = rng.sample(StandardNormal);
        n * params.snr_jitter_db
    };
    let jam_bler_noise: f64 = {
        let n: f64 = rng.sample(StandardNormal);
        n * params.bler_jam_jitter_pp
    };
    let clear_bler_noise: f64 = {
        let n: f64 = rng.sample(StandardNormal);
        n * params.bler_clear_jitter_pp
    };
    let spike_draw: f64 = rng.gen();
    let spike_mag: f64 = rng.gen_range(params.bler_spike_min_pp..=params.bler_spike_max_pp);

    let snr_db = if jam_active {
        params.snr_clear_db - params.snr_jam_delta_db + snr_noise
    } else {
        params.snr_clear_db + snr_noise
    };
    let cqi = cqi_from_snr(snr_db, &params.cqi_table);
    let mcs = mcs_from_snr(snr_db, &params.mcs_table);

    let (bitrate_bps, bler_pct, latency_s) = if offered_rate_bps == 0 {
        // Nothing scheduled: no blocks, no errors, regardless of jamming.
        (0.0, 0.0, 0.0)
    } else if jam_active {
        let bler = (params.bler_jam_pct + jam_bler_noise).clamp(0.0, 100.0);
        (
            params.throughput_retain_jam * offered_rate_bps as f64,
            bler,
            params.latency_jam_s,
        )
    } else {
        let mut bler = (params.bler_clear_pct + clear_bler_noise).max(0.0);
        if spike_draw < params.bler_spike_prob {
            bler += spike_mag;
        }
        (
            params.dl_overhead * offered_rate_bps as f64,
            bler.min(100.0),
            params.latency_clear_s,
        )
    };

    let sample = AnalyticsSample {
        tick,
        dl_cqi: cqi as f64,
        dl_mcs: mcs as f64,
        dl_bitrate_bps: bitrate_bps,
        dl_bler_pct: bler_pct,
        dl_latency_s: latency_s,
        dl_bytes: (bitrate_bps / 8.0).round() as u64,
        pci: params.pci,
        carrier_id: params.carrier_id,
        num_rach: 0,
    };
    TickOutput {
        sample,
        snr_db,
        offered_rate_bps,
        jam_active,
    }
}

/// Stepper bound to one scenario; fills in RACH counts from idle-to-active
/// transitions.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    pub params: LinkModelParams,
    pub scenario: TrafficScenario,
    pub noise_seed: u64,
}

impl LinkSimulator {
    pub fn new(params: LinkModelParams, scenario: TrafficScenario, noise_seed: u64) -> Self {
        Self {
            params,
            scenario,
            noise_seed,
        }
    }

    pub fn total_ticks(&self) -> u64 {
        self.scenario.total_s
    }

    pub fn step_tick(&self, tick: u64, jam_active: bool) -> TickOutput {
        let offered = self.scenario.rate_at(tick);
        let mut out = step(&self.params, offered, jam_active, tick, self.noise_seed);
        let was_idle = tick == 0 || self.scenario.rate_at(tick - 1) == 0;
        out.sample.num_rach = u32::from(offered > 0 && was_idle);
        out
    }
}
