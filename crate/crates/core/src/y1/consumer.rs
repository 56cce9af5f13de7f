//! Analytics consumer.
//!
//! Subscribes to the producer, receives notifications on `/notify`, keeps
//! the latest payload, and forwards every accepted notification to the
//! jammer as one NDJSON line. In the threat model this is the compromised
//! component: it stays protocol-compliant toward the producer while
//! streaming everything it learns out the back.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;
use thiserror::Error;

use super::relay::{RelayFrame, RelayQueue, RELAY_QUEUE_CAPACITY};
use super::wire::{NotificationPayload, SubscriptionRequest};

#[derive(Debug, Error)]
pub enum ConsumerError {
    #[error("could not reach producer: {0}")]
    ConnectionFailed(String),
    #[error("producer rejected subscription: status {status}, body {body}")]
    Rejected { status: u16, body: String },
}

/// What `/notify` did with a payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotifyOutcome {
    Accepted,
    /// Tolerated and dropped: the id belongs to an older subscription.
    MismatchedSubscription,
}

#[derive(Debug, Clone, Default)]
pub struct ConsumerState {
    pub subscription_id: Option<String>,
    pub latest_rai: Option<NotificationPayload>,
    pub received_count: u64,
}

/// Notification sink plus relay staging queue.
#[derive(Debug)]
pub struct ConsumerCore {
    pub state: ConsumerState,
    /// Metric names forwarded to the jammer; `None` relays rai_content
    /// untouched.
    pub relay_filter: Option<Vec<String>>,
    relay: RelayQueue,
}

impl Default for ConsumerCore {
    fn default() -> Self {
        Self::new(None)
    }
}

impl ConsumerCore {
    pub fn new(relay_filter: Option<Vec<String>>) -> Self {
        Self {
            state: ConsumerState::default(),
            relay_filter,
            relay: RelayQueue::new(RELAY_QUEUE_CAPACITY),
        }
    }

    pub fn set_subscription(&mut self, id: String) {
        self.state.subscription_id = Some(id);
    }

    /// Applies one parsed notification. Payloads for a different
    /// subscription id are logged and dropped without erroring so a
    /// late-arriving notification after a resubscribe stays benign.
    pub fn handle_notify(&mut self, payload: NotificationPayload) -> NotifyOutcome {
        match &self.state.subscription_id {
            Some(id) if *id != payload.subscription_id => {
                tracing::warn!(
                    got = %payload.subscription_id,
                    want = %id,
                    "notification for stale subscription dropped"
                );
                return NotifyOutcome::MismatchedSubscription;
            }
            _ => {}
        }
        let mut frame = RelayFrame::from_payload(&payload);
        if let Some(filter) = &self.relay_filter {
            frame
                .rai_content
                .retain(|k, _| filter.iter().any(|f| f == k));
        }
        self.relay.push(frame.encode_line());
        self.state.latest_rai = Some(payload);
        self.state.received_count += 1;
        NotifyOutcome::Accepted
    }

    /// Lines pending for the jammer, in arrival order.
    pub fn drain_relay(&mut self) -> Vec<String> {
        self.relay.drain_all()
    }

    /// Next pending line, preserving arrival order.
    pub fn pop_relay(&mut self) -> Option<String> {
        self.relay.pop()
    }

    /// Reconnect path: only the newest pending line survives.
    pub fn drain_relay_newest_only(&mut self) -> Option<String> {
        self.relay.drop_stale_keep_newest()
    }

    pub fn pending_relay(&self) -> usize {
        self.relay.len()
    }
}

pub type SharedConsumer = Arc<Mutex<ConsumerCore>>;

async fn notify_handler(State(state): State<SharedConsumer>, body: axum::body::Bytes) -> Response {
    let payload: NotificationPayload = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": format!("malformed payload: {e}") })),
            )
                .into_response();
        }
    };
    let mut core = state.lock().unwrap();
    core.handle_notify(payload);
    StatusCode::OK.into_response()
}

pub fn consumer_router(state: SharedConsumer) -> Router {
    Router::new()
        .route("/notify", post(notify_handler))
        .with_state(state)
}

/// Subscribes over HTTP and records the returned id.
pub async fn subscribe(
    core: &SharedConsumer,
    client: &reqwest::Client,
    producer_url: &str,
    req: &SubscriptionRequest,
) -> Result<String, ConsumerError> {
    let url = format!(
        "{}{}",
        producer_url.trim_end_matches('/'),
        super::producer::SUBSCRIBE_PATH
    );
    let resp = client
        .post(&url)
        .json(req)
        .send()
        .await
        .map_err(|e| ConsumerError::ConnectionFailed(e.to_string()))?;
    let status = resp.status();
    let body = resp.text().await.unwrap_or_default();
    if status != reqwest::StatusCode::CREATED {
        return Err(ConsumerError::Rejected {
            status: status.as_u16(),
            body,
        });
    }
    let sub: serde_json::Value =
        serde_json::from_str(&body).map_err(|e| ConsumerError::Rejected {
            status: status.as_u16(),
            body: e.to_string(),
        })?;
    let id = sub
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ConsumerError::Rejected {
            status: status.as_u16(),
            body,
        })?
        .to_string();
    core.lock().unwrap().set_subscription(id.clone());
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::y1::wire::timestamp_for_tick;
    use serde_json::Map;

    fn payload(id: &str, tick: i64, bitrate: f64) -> NotificationPayload {
        let mut content = Map::new();
        content.insert("dl_bitrate_bps".into(), serde_json::Value::from(bitrate));
        NotificationPayload {
            subscription_id: id.into(),
            rai_content: content,
            timestamp: timestamp_for_tick(tick),
            validity_period: 1,
        }
    }

    #[test]
    fn accepts_and_counts_notifications() {
        let mut c = ConsumerCore::default();
        c.set_subscription("sub1".into());
        assert_eq!(
            c.handle_notify(payload("sub1", 0, 4e6)),
            NotifyOutcome::Accepted
        );
        assert_eq!(
            c.handle_notify(payload("sub1", 1, 2e6)),
            NotifyOutcome::Accepted
        );
        assert_eq!(c.state.received_count, 2);
        assert_eq!(
            c.state.latest_rai.as_ref().unwrap().timestamp,
            timestamp_for_tick(1)
        );
    }

    #[test]
    fn stale_subscription_dropped_without_state_change() {
        let mut c = ConsumerCore::default();
        c.set_subscription("new".into());
        c.handle_notify(payload("new", 0, 4e6));
        assert_eq!(
            c.handle_notify(payload("old", 1, 2e6)),
            NotifyOutcome::MismatchedSubscription
        );
        assert_eq!(c.state.received_count, 1);
        assert_eq!(c.pending_relay(), 1);
    }

    #[test]
    fn relay_lines_preserve_order_and_values() {
        let mut c = ConsumerCore::default();
        c.set_subscription("s".into());
        for t in 0..10 {
            c.handle_notify(payload("s", t, 1000.0 * t as f64));
        }
        let lines = c.drain_relay();
        assert_eq!(lines.len(), 10);
        let mut prev_tick = None;
        for (i, line) in lines.iter().enumerate() {
            let frame = RelayFrame::parse_line(line).unwrap();
            assert_eq!(frame.rai_content["dl_bitrate_bps"], 1000.0 * i as f64);
            let tick = frame.tick().unwrap();
            if let Some(p) = prev_tick {
                assert!(tick >= p);
            }
            prev_tick = Some(tick);
        }
        assert!(c.drain_relay().is_empty());
    }

    #[test]
    fn newest_only_after_outage() {
        let mut c = ConsumerCore::default();
        c.set_subscription("s".into());
        for t in 0..5 {
            c.handle_notify(payload("s", t, t as f64));
        }
        let line = c.drain_relay_newest_only().unwrap();
        let frame = RelayFrame::parse_line(&line).unwrap();
        assert_eq!(frame.tick(), Some(4));
        assert_eq!(c.pending_relay(), 0);
    }

    #[test]
    fn relay_filter_projects_keys_only() {
        let mut c = ConsumerCore::new(Some(vec![
            "dl_bitrate_bps".to_string(),
            "dl_bler_pct".to_string(),
        ]));
        c.set_subscription("s".into());
        let mut content = Map::new();
        content.insert("dl_bitrate_bps".into(), serde_json::Value::from(4e6));
        content.insert("dl_bler_pct".into(), serde_json::Value::from(0.7));
        content.insert("dl_latency_s".into(), serde_json::Value::from(0.012));
        let p = NotificationPayload {
            subscription_id: "s".into(),
            rai_content: content,
            timestamp: timestamp_for_tick(0),
            validity_period: 1,
        };
        c.handle_notify(p);
        let line = c.drain_relay().pop().unwrap();
        let frame = RelayFrame::parse_line(&line).unwrap();
        assert_eq!(frame.rai_content.len(), 2);
        assert_eq!(frame.rai_content["dl_bitrate_bps"], 4e6);
        assert!(!frame.rai_content.contains_key("dl_latency_s"));
    }

    #[test]
    fn empty_content_relayed() {
        let mut c = ConsumerCore::default();
        c.set_subscription("s".into());
        let p = NotificationPayload {
            subscription_id: "s".into(),
            rai_content: Map::new(),
            timestamp: timestamp_for_tick(0),
            validity_period: 1,
        };
        c.handle_notify(p);
        assert_eq!(c.pending_relay(), 1);
    }
}
