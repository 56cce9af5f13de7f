//! In-process closed loop on a shared logical clock.
//!
//! Per tick: the jammer decides from the newest relayed analytics, the link
//! steps under that verdict, the sample lands in the store, the producer
//! dispatches due notifications straight into the consumer, and the
//! consumer's relay lines feed the jammer's latest-analytics slot. With a
//! 1 s period that pipeline gives every decision at tick t the analytics of
//! tick t-1.

use serde::{Deserialize, Serialize};

use crate::jammer::{JamDecision, JammerCore};
use crate::ran_sim::{AnalyticsSample, LinkSimulator};
use crate::sdl_store::{CellKey, SdlStore};
use crate::y1::consumer::ConsumerCore;
use crate::y1::producer::{ProducerConfig, ProducerCore};
use crate::y1::wire::SubscriptionRequest;

use super::EvalError;

/// Ground truth recorded by the harness for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub offered_rate_bps: u64,
    pub jam_active: bool,
    pub snr_db: f64,
    #[serde(flatten)]
    pub sample: AnalyticsSample,
}

/// Output of one closed-loop session, identical in shape for the
/// in-process and socket transports.
#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    pub per_tick: Vec<TickRecord>,
    pub decisions: Vec<JamDecision>,
    pub notification_count: u64,
    pub subscription_id: String,
}

pub(super) const VIRTUAL_NOTIFY_TARGET: &str = "http://consumer.virtual.local/notify";

/// Runs the whole session in-process.
pub fn run_virtual(
    sim: &LinkSimulator,
    mut jammer: JammerCore,
    producer_config: ProducerConfig,
    period_s: f64,
) -> Result<ClosedLoopResult, EvalError> {
    let cell = CellKey {
        pci: sim.params.pci,
        carrier_id: sim.params.carrier_id,
    };
    let store = SdlStore::default();
    let mut producer = ProducerCore::new(producer_config);
    let mut consumer = ConsumerCore::default();

    producer.set_clock(-1);
    let sub = producer
        .handle_subscribe(SubscriptionRequest::periodic(
            period_s,
            VIRTUAL_NOTIFY_TARGET,
        ))
        .map_err(EvalError::Producer)?;
    consumer.set_subscription(sub.id.clone());

    let mut per_tick = Vec::with_capacity(sim.total_ticks() as usize);
    for tick in 0..sim.total_ticks() {
        let decision = jammer.decide(tick);
        let out = sim.step_tick(tick, decision.is_jam());
        store
            .put_sample(cell, out.sample.clone())
            .map_err(EvalError::Store)?;
        per_tick.push(TickRecord {
            tick,
            offered_rate_bps: out.offered_rate_bps,
            jam_active: out.jam_active,
            snr_db: out.snr_db,
            sample: out.sample,
        });
        for notification in producer.advance_clock(tick as i64, &store) {
            consumer.handle_notify(notification.payload);
            producer.report_delivery(&notification.subscription_id, true);
        }
        for line in consumer.drain_relay() {
            jammer.ingest_line(&line);
        }
    }

    Ok(ClosedLoopResult {
        per_tick,
        decisions: jammer.into_log(),
        notification_count: consumer.state.received_count,
        subscription_id: sub.id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jammer::{Budget, BudgetState, Strategy, Verdict};
    use crate::ran_sim::{scenario_part_a, LinkModelParams};

    fn run(strategy: Strategy, seed: u64) -> ClosedLoopResult {
        let sim = LinkSimulator::new(LinkModelParams::default(), scenario_part_a(seed), seed);
        let total = sim.total_ticks();
        let jammer = JammerCore::new(strategy, seed, BudgetState::new(Budget::Unlimited, total));
        run_virtual(&sim, jammer, ProducerConfig::default(), 1.0).unwrap()
    }

    #[test]
    fn one_of_everything_per_tick() {
        let result = run(Strategy::Threshold { theta_bps: 1000.0 }, 42);
        assert_eq!(result.per_tick.len(), 270);
        assert_eq!(result.decisions.len(), 270);
        assert_eq!(result.notification_count, 270);
    }

    #[test]
    fn decisions_consume_previous_tick_analytics() {
        let result = run(Strategy::Threshold { theta_bps: 1000.0 }, 42);
        assert!(result.decisions[0].analytics.is_none());
        assert_eq!(result.decisions[0].reason, "no-data");
        for d in &result.decisions[1..] {
            assert_eq!(
                d.analytics.unwrap().tick,
                d.tick - 1,
                "decision tick {}",
                d.tick
            );
        }
    }

    #[test]
    fn threshold_follows_traffic_with_one_tick_lag() {
        let result = run(Strategy::Threshold { theta_bps: 1000.0 }, 42);
        let rates: Vec<u64> = result.per_tick.iter().map(|r| r.offered_rate_bps).collect();
        for d in &result.decisions[1..] {
            let prev_active = rates[d.tick as usize - 1] > 0;
            assert_eq!(d.verdict == Verdict::Jam, prev_active, "tick {}", d.tick);
        }
    }

    #[test]
    fn replays_are_identical() {
        let a = run(Strategy::Threshold { theta_bps: 1000.0 }, 7);
        let b = run(Strategy::Threshold { theta_bps: 1000.0 }, 7);
        assert_eq!(a.per_tick, b.per_tick);
        assert_eq!(a.decisions, b.decisions);
    }

    #[test]
    fn jammed_ticks_degrade_only_active_traffic() {
        let result = run(Strategy::AlwaysOn, 3);
        for r in &result.per_tick {
            assert!(r.jam_active);
            if r.offered_rate_bps == 0 {
                assert_eq!(r.sample.dl_bitrate_bps, 0.0);
            } else {
                let retain = r.sample.dl_bitrate_bps / r.offered_rate_bps as f64;
                assert!((retain - 0.53).abs() < 1e-9);
            }
        }
    }
}
