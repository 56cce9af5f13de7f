//! Analytics exposure producer.
//!
//! Owns the subscription table and the periodic dispatcher. The core is a
//! plain synchronous state machine driven by a logical clock; the HTTP
//! layer wraps it for socket deployments so both transports share one
//! behavior.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post, put};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ran_sim::AnalyticsSample;
use crate::sdl_store::{CellKey, SdlStore};

use super::wire::{
    all_metric_names, rai_content_from_sample, timestamp_for_tick, NotificationPayload,
    Subscription, SubscriptionRequest, SubscriptionState, Trigger, RAI_TYPE_RAN_PERFORMANCE,
};

pub const SUBSCRIBE_PATH: &str = "/Y1_RAI_Subscriptions/v1/subscriptions/subscribe";
pub const UNSUBSCRIBE_PATH: &str = "/Y1_RAI_Subscriptions/v1/subscriptions/unsubscribe";
pub const SUBSCRIPTION_PATH_PREFIX: &str = "/Y1_RAI_Subscriptions/v1/subscriptions";

pub const DEFAULT_MAX_CONSECUTIVE_FAILURES: u32 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProducerError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unsupported raiType {0:?}")]
    UnsupportedRaiType(String),
    #[error("event triggers are accepted in the schema but not served")]
    UnsupportedTrigger,
    #[error("subscription {0} not found")]
    NotFound(String),
    #[error("only notificationCriteria.periodSeconds may be updated")]
    UnsupportedUpdate,
}

impl ProducerError {
    pub fn status(&self) -> StatusCode {
        match self {
            ProducerError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProducerConfig {
    pub cell: CellKey,
    /// Metric names copied into every notification (the exposure filter).
    pub metrics_filter: Vec<String>,
    /// Consecutive delivery failures before a subscription is auto-cancelled.
    pub max_consecutive_failures: u32,
}

impl Default for ProducerConfig {
    fn default() -> Self {
        Self {
            cell: CellKey {
                pci: 1,
                carrier_id: 0,
            },
            metrics_filter: all_metric_names(),
            max_consecutive_failures: DEFAULT_MAX_CONSECUTIVE_FAILURES,
        }
    }
}

#[derive(Debug, Clone)]
struct SubscriptionEntry {
    sub: Subscription,
    period_s: f64,
    next_fire_s: f64,
    consecutive_failures: u32,
}

/// A notification ready to be posted to a consumer endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OutboundNotification {
    pub subscription_id: String,
    pub target: String,
    pub payload: NotificationPayload,
}

/// Subscription table plus dispatcher bookkeeping, driven by an integer
/// logical clock (1 tick = 1 s).
#[derive(Debug)]
pub struct ProducerCore {
    pub config: ProducerConfig,
    subs: IndexMap<String, SubscriptionEntry>,
    clock_tick: i64,
}

impl ProducerCore {
    pub fn new(config: ProducerConfig) -> Self {
        Self {
            config,
            subs: IndexMap::new(),
            clock_tick: -1,
        }
    }

    pub fn clock_tick(&self) -> i64 {
        self.clock_tick
    }

    pub fn set_clock(&mut self, tick: i64) {
        self.clock_tick = tick;
    }

    pub fn active_count(&self) -> usize {
        self.subs.len()
    }

    /// Registers a new subscription; periodic delivery starts one period
    /// after the current clock value.
    pub fn handle_subscribe(
        &mut self,
        req: SubscriptionRequest,
    ) -> Result<Subscription, ProducerError> {
        if req.rai_type.is_empty() {
            return Err(ProducerError::BadRequest(
                "raiType must be non-empty".into(),
            ));
        }
        if req.rai_type != RAI_TYPE_RAN_PERFORMANCE {
            return Err(ProducerError::UnsupportedRaiType(req.rai_type));
        }
        if req.rai_type_version.is_empty() {
            return Err(ProducerError::BadRequest(
                "raiTypeVersion must be non-empty".into(),
            ));
        }
        if req.notification_criteria.trigger == Trigger::Event {
            return Err(ProducerError::UnsupportedTrigger);
        }
        let period = req
            .notification_criteria
            .period_seconds
            .ok_or_else(|| ProducerError::BadRequest("periodSeconds is required".into()))?;
        if !period.is_finite() || period <= 0.0 {
            return Err(ProducerError::BadRequest(
                "periodSeconds must be positive".into(),
            ));
        }
        let target = url::Url::parse(&req.notification_target_address).map_err(|e| {
            ProducerError::BadRequest(format!("invalid notificationTargetAddress: {e}"))
        })?;
        if !matches!(target.scheme(), "http" | "https") {
            return Err(ProducerError::BadRequest(
                "notificationTargetAddress must be http(s)".into(),
            ));
        }

        let id = format!("{:032x}", rand::random::<u128>());
        let sub = Subscription {
            id: id.clone(),
            state: SubscriptionState::Active,
            request: req,
            created_tick: self.clock_tick,
            last_notified_tick: None,
        };
        self.subs.insert(
            id,
            SubscriptionEntry {
                sub: sub.clone(),
                period_s: period,
                next_fire_s: self.clock_tick as f64 + period,
                consecutive_failures: 0,
            },
        );
        Ok(sub)
    }

    /// Cancels and removes the subscription.
    pub fn handle_unsubscribe(&mut self, id: &str) -> Result<(), ProducerError> {
        self.subs
            .shift_remove(id)
            .map(|_| ())
            .ok_or_else(|| ProducerError::NotFound(id.to_string()))
    }

    /// Partial update: only `notificationCriteria.periodSeconds` is mutable.
    /// The body is inspected key by key so any other field is rejected.
    pub fn handle_update(&mut self, id: &str, body: &Value) -> Result<Subscription, ProducerError> {
        if !self.subs.contains_key(id) {
            return Err(ProducerError::NotFound(id.to_string()));
        }
        let obj = body
            .as_object()
            .ok_or_else(|| ProducerError::BadRequest("update body must be an object".into()))?;
        if obj.keys().any(|k| k != "notificationCriteria") {
            return Err(ProducerError::UnsupportedUpdate);
        }
        let criteria = obj
            .get("notificationCriteria")
            .and_then(|v| v.as_object())
            .ok_or(ProducerError::UnsupportedUpdate)?;
        if criteria.keys().any(|k| k != "periodSeconds") {
            return Err(ProducerError::UnsupportedUpdate);
        }
        let period = criteria
            .get("periodSeconds")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| ProducerError::BadRequest("periodSeconds must be a number".into()))?;
        if !period.is_finite() || period <= 0.0 {
            return Err(ProducerError::BadRequest(
                "periodSeconds must be positive".into(),
            ));
        }

        let entry = self
            .subs
            .get_mut(id)
            .ok_or_else(|| ProducerError::NotFound(id.to_string()))?;
        entry.period_s = period;
        entry.sub.request.notification_criteria.period_seconds = Some(period);
        // New cadence anchors at the most recent delivery.
        let anchor = entry
            .sub
            .last_notified_tick
            .unwrap_or(entry.sub.created_tick) as f64;
        let mut next = anchor + period;
        while next <= self.clock_tick as f64 {
            next += period;
        }
        entry.next_fire_s = next;
        Ok(entry.sub.clone())
    }

    pub fn get(&self, id: &str) -> Option<&Subscription> {
        self.subs.get(id).map(|e| &e.sub)
    }

    /// Builds one notification for a subscription from the given sample.
    pub fn build_notification(
        sub: &Subscription,
        sample: &AnalyticsSample,
        filter: &[String],
        now_tick: i64,
    ) -> NotificationPayload {
        let period = sub
            .request
            .notification_criteria
            .period_seconds
            .unwrap_or(1.0);
        NotificationPayload {
            subscription_id: sub.id.clone(),
            rai_content: rai_content_from_sample(sample, filter),
            timestamp: timestamp_for_tick(now_tick),
            validity_period: period.ceil() as u64,
        }
    }

    /// Advances the dispatcher clock to `tick` and returns every due
    /// notification. With an empty store the dispatch is skipped (not a
    /// failure) and the schedule still advances.
    pub fn advance_clock(&mut self, tick: i64, store: &SdlStore) -> Vec<OutboundNotification> {
        self.clock_tick = tick;
        let latest = store.latest(self.config.cell);
        let mut out = Vec::new();
        for entry in self.subs.values_mut() {
            while entry.next_fire_s <= tick as f64 + 1e-9 {
                entry.next_fire_s += entry.period_s;
                let Some(sample) = latest.as_ref() else {
                    tracing::debug!(id = %entry.sub.id, "no analytics stored yet, dispatch skipped");
                    continue;
                };
                entry.sub.last_notified_tick = Some(tick);
                out.push(OutboundNotification {
                    subscription_id: entry.sub.id.clone(),
                    target: entry.sub.request.notification_target_address.clone(),
                    payload: Self::build_notification(
                        &entry.sub,
                        sample,
                        &self.config.metrics_filter,
                        tick,
                    ),
                });
            }
        }
        out
    }

    pub fn is_active(&self, id: &str) -> bool {
        self.subs.contains_key(id)
    }

    /// Records a delivery outcome; subscriptions are auto-cancelled after
    /// the configured number of consecutive failures.
    pub fn report_delivery(&mut self, id: &str, success: bool) {
        let Some(entry) = self.subs.get_mut(id) else {
            return;
        };
        if success {
            entry.consecutive_failures = 0;
            return;
        }
        entry.consecutive_failures += 1;
        tracing::warn!(
            id,
            failures = entry.consecutive_failures,
            "notification delivery failed; payload dropped"
        );
        if entry.consecutive_failures >= self.config.max_consecutive_failures {
            tracing::warn!(id, "auto-cancelling subscription after repeated failures");
            self.subs.shift_remove(id);
        }
    }
}

pub type SharedProducer = Arc<Mutex<ProducerCore>>;

fn error_response(err: ProducerError) -> Response {
    let status = err.status();
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

#[derive(Deserialize)]
struct UnsubscribeQuery {
    id: String,
}

async fn subscribe_handler(
    State(state): State<SharedProducer>,
    body: axum::body::Bytes,
) -> Response {
    let req: SubscriptionRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(e) => {
            return error_response(ProducerError::BadRequest(format!("invalid body: {e}")));
        }
    };
    let mut core = state.lock().unwrap();
    match core.handle_subscribe(req) {
        Ok(sub) => (StatusCode::CREATED, Json(sub)).into_response(),
        Err(e) => error_response(e),
    }
}

async fn unsubscribe_handler(
    State(state): State<SharedProducer>,
    Query(q): Query<UnsubscribeQuery>,
) -> Response {
    let mut core = state.lock().unwrap();
    match core.handle_unsubscribe(&q.id) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error_response(e),
    }
}

async fn update_handler(
    State(state): State<SharedProducer>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return error_response(ProducerError::BadRequest(format!("invalid body: {e}")));
        }
    };
    let mut core = state.lock().unwrap();
    match core.handle_update(&id, &value) {
        Ok(sub) => (StatusCode::OK, Json(sub)).into_response(),
        Err(e) => error_response(e),
    }
}

pub fn producer_router(state: SharedProducer) -> Router {
    Router::new()
        .route(SUBSCRIBE_PATH, post(subscribe_handler))
        .route(UNSUBSCRIBE_PATH, delete(unsubscribe_handler))
        .route(
            &format!("{SUBSCRIPTION_PATH_PREFIX}/:id"),
            put(update_handler),
        )
        .with_state(state)
}

/// Delivers one due batch over HTTP. Each target is re-checked against the
/// table right before the send so nothing goes out for a subscription
/// cancelled in between.
pub async fn dispatch_over_http(
    state: &SharedProducer,
    client: &reqwest::Client,
    batch: Vec<OutboundNotification>,
) {
    for n in batch {
        if !state.lock().unwrap().is_active(&n.subscription_id) {
            continue;
        }
        let sent = client
            .post(&n.target)
            .json(&n.payload)
            .send()
            .await
            .map(|r| r.status().is_success())
            .unwrap_or(false);
        state
            .lock()
            .unwrap()
            .report_delivery(&n.subscription_id, sent);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_sim::{scenario_part_a, LinkModelParams, LinkSimulator};

    fn core() -> ProducerCore {
        ProducerCore::new(ProducerConfig::default())
    }

    fn request(period: f64) -> SubscriptionRequest {
        SubscriptionRequest::periodic(period, "https://consumer:8443/notify")
    }

    fn seeded_store(ticks: u64) -> SdlStore {
        let store = SdlStore::default();
        let sim = LinkSimulator::new(LinkModelParams::default(), scenario_part_a(1), 1);
        let cell = CellKey {
            pci: sim.params.pci,
            carrier_id: sim.params.carrier_id,
        };
        for t in 0..ticks {
            store
                .put_sample(cell, sim.step_tick(t, false).sample)
                .unwrap();
        }
        store
    }

    #[test]
    fn subscribe_validations() {
        let mut c = core();
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        assert_eq!(sub.state, SubscriptionState::Active);
        assert_eq!(sub.id.len(), 32);

        let mut bogus = request(1.0);
        bogus.rai_type = "bogus".into();
        assert!(matches!(
            c.handle_subscribe(bogus),
            Err(ProducerError::UnsupportedRaiType(_))
        ));

        let mut event = request(1.0);
        event.notification_criteria.trigger = Trigger::Event;
        assert_eq!(
            c.handle_subscribe(event),
            Err(ProducerError::UnsupportedTrigger)
        );

        let mut zero = request(0.0);
        zero.notification_criteria.period_seconds = Some(0.0);
        assert!(matches!(
            c.handle_subscribe(zero),
            Err(ProducerError::BadRequest(_))
        ));

        let mut bad_url = request(1.0);
        bad_url.notification_target_address = "not a url".into();
        assert!(matches!(
            c.handle_subscribe(bad_url),
            Err(ProducerError::BadRequest(_))
        ));
    }

    #[test]
    fn identical_requests_get_distinct_ids() {
        let mut c = core();
        let a = c.handle_subscribe(request(1.0)).unwrap();
        let b = c.handle_subscribe(request(1.0)).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(c.active_count(), 2);
        let store = seeded_store(1);
        let out = c.advance_clock(0, &store);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn unsubscribe_semantics() {
        let mut c = core();
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        assert!(c.handle_unsubscribe(&sub.id).is_ok());
        assert_eq!(
            c.handle_unsubscribe(&sub.id),
            Err(ProducerError::NotFound(sub.id.clone()))
        );
        assert_eq!(
            c.handle_unsubscribe("missing"),
            Err(ProducerError::NotFound("missing".into()))
        );
        let store = seeded_store(1);
        assert!(c.advance_clock(5, &store).is_empty());
    }

    #[test]
    fn update_only_touches_period() {
        let mut c = core();
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        let updated = c
            .handle_update(
                &sub.id,
                &json!({"notificationCriteria": {"periodSeconds": 5.0}}),
            )
            .unwrap();
        assert_eq!(
            updated.request.notification_criteria.period_seconds,
            Some(5.0)
        );

        assert_eq!(
            c.handle_update(
                &sub.id,
                &json!({"notificationTargetAddress": "https://x/notify"})
            ),
            Err(ProducerError::UnsupportedUpdate)
        );
        assert_eq!(
            c.handle_update(
                &sub.id,
                &json!({"notificationCriteria": {"trigger": "EVENT", "periodSeconds": 5.0}})
            ),
            Err(ProducerError::UnsupportedUpdate)
        );
        assert!(matches!(
            c.handle_update(
                "missing",
                &json!({"notificationCriteria": {"periodSeconds": 5.0}})
            ),
            Err(ProducerError::NotFound(_))
        ));
    }

    #[test]
    fn update_changes_cadence_from_next_dispatch() {
        let mut c = core();
        let store = seeded_store(300);
        c.set_clock(-1);
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        let mut fired = Vec::new();
        for t in 0..10 {
            for _ in c.advance_clock(t, &store) {
                fired.push(t);
            }
        }
        c.handle_update(
            &sub.id,
            &json!({"notificationCriteria": {"periodSeconds": 5.0}}),
        )
        .unwrap();
        for t in 10..30 {
            for _ in c.advance_clock(t, &store) {
                fired.push(t);
            }
        }
        assert_eq!(&fired[..10], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(&fired[10..], &[14, 19, 24, 29]);
    }

    #[test]
    fn dispatch_counts_per_period() {
        let store = seeded_store(300);
        for (period, expect) in [(1.0, 60), (2.0, 30), (5.0, 12)] {
            let mut c = core();
            c.set_clock(0);
            c.handle_subscribe(request(period)).unwrap();
            let mut count = 0;
            for t in 1..=60 {
                count += c.advance_clock(t, &store).len();
            }
            assert_eq!(count, expect, "period {period}");
        }
    }

    #[test]
    fn empty_store_skips_dispatch() {
        let mut c = core();
        let store = SdlStore::default();
        c.set_clock(-1);
        c.handle_subscribe(request(1.0)).unwrap();
        for t in 0..5 {
            assert!(c.advance_clock(t, &store).is_empty());
        }
    }

    #[test]
    fn payload_contents_and_validity() {
        let mut c = core();
        let store = seeded_store(3);
        c.set_clock(-1);
        c.handle_subscribe(request(2.5)).unwrap();
        let out = c.advance_clock(2, &store);
        assert_eq!(out.len(), 1);
        let payload = &out[0].payload;
        assert_eq!(payload.rai_content.len(), 9);
        assert_eq!(payload.validity_period, 3); // ceil(2.5)
        assert_eq!(payload.timestamp, timestamp_for_tick(2));
        let latest = store
            .latest(CellKey {
                pci: 1,
                carrier_id: 0,
            })
            .unwrap();
        assert_eq!(payload.rai_content["dl_bitrate_bps"], latest.dl_bitrate_bps);
    }

    #[test]
    fn filtered_payloads_project_metrics() {
        let mut c = ProducerCore::new(ProducerConfig {
            metrics_filter: vec!["dl_bitrate_bps".into()],
            ..ProducerConfig::default()
        });
        let store = seeded_store(1);
        c.set_clock(-1);
        c.handle_subscribe(request(1.0)).unwrap();
        let out = c.advance_clock(0, &store);
        assert_eq!(out[0].payload.rai_content.len(), 1);
        assert!(out[0].payload.rai_content.contains_key("dl_bitrate_bps"));
    }

    #[test]
    fn auto_cancel_after_consecutive_failures() {
        let mut c = core();
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        for _ in 0..4 {
            c.report_delivery(&sub.id, false);
            assert!(c.is_active(&sub.id));
        }
        c.report_delivery(&sub.id, false);
        assert!(!c.is_active(&sub.id));

        // A success in between resets the counter.
        let sub = c.handle_subscribe(request(1.0)).unwrap();
        for _ in 0..4 {
            c.report_delivery(&sub.id, false);
        }
        c.report_delivery(&sub.id, true);
        for _ in 0..4 {
            c.report_delivery(&sub.id, false);
        }
        assert!(c.is_active(&sub.id));
    }
}
