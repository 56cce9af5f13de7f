//! JSON wire types for the analytics exposure interface.
//!
//! Request fields are camelCase, payload fields snake_case; both spellings
//! are part of the protocol contract and round-trip exactly.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ran_sim::AnalyticsSample;

/// The one analytics category this producer serves.
pub const RAI_TYPE_RAN_PERFORMANCE: &str = "ran_performance_analytics";

/// The nine exposed cell-level metric names, in canonical order.
pub const METRIC_NAMES: [&str; 9] = [
    "dl_cqi",
    "dl_mcs",
    "dl_bitrate_bps",
    "dl_bler_pct",
    "dl_latency_s",
    "dl_bytes",
    "pci",
    "carrier_id",
    "num_rach",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    #[serde(rename = "PERIODIC")]
    Periodic,
    #[serde(rename = "EVENT")]
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationCriteria {
    pub trigger: Trigger,
    #[serde(rename = "periodSeconds", skip_serializing_if = "Option::is_none")]
    pub period_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionRequest {
    #[serde(rename = "raiType")]
    pub rai_type: String,
    #[serde(rename = "raiTypeVersion")]
    pub rai_type_version: String,
    #[serde(rename = "notificationCriteria")]
    pub notification_criteria: NotificationCriteria,
    #[serde(rename = "notificationTargetAddress")]
    pub notification_target_address: String,
}

impl SubscriptionRequest {
    pub fn periodic(period_seconds: f64, target: impl Into<String>) -> Self {
        Self {
            rai_type: RAI_TYPE_RAN_PERFORMANCE.to_string(),
            rai_type_version: "v1".to_string(),
            notification_criteria: NotificationCriteria {
                trigger: Trigger::Periodic,
                period_seconds: Some(period_seconds),
            },
            notification_target_address: target.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubscriptionState {
    #[serde(rename = "ACTIVE")]
    Active,
    #[serde(rename = "CANCELLED")]
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub id: String,
    pub state: SubscriptionState,
    pub request: SubscriptionRequest,
    pub created_tick: i64,
    pub last_notified_tick: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationPayload {
    pub subscription_id: String,
    pub rai_content: Map<String, Value>,
    pub timestamp: String,
    pub validity_period: u64,
}

/// Projects a sample onto the requested metric names. Values are copied
/// verbatim; unknown names are ignored.
pub fn rai_content_from_sample(sample: &AnalyticsSample, filter: &[String]) -> Map<String, Value> {
    let mut content = Map::new();
    for name in filter {
        let value = match name.as_str() {
            "dl_cqi" => Value::from(sample.dl_cqi),
            "dl_mcs" => Value::from(sample.dl_mcs),
            "dl_bitrate_bps" => Value::from(sample.dl_bitrate_bps),
            "dl_bler_pct" => Value::from(sample.dl_bler_pct),
            "dl_latency_s" => Value::from(sample.dl_latency_s),
            "dl_bytes" => Value::from(sample.dl_bytes),
            "pci" => Value::from(sample.pci),
            "carrier_id" => Value::from(sample.carrier_id),
            "num_rach" => Value::from(sample.num_rach),
            _ => continue,
        };
        content.insert(name.clone(), value);
    }
    content
}

pub fn all_metric_names() -> Vec<String> {
    METRIC_NAMES.iter().map(|s| s.to_string()).collect()
}

fn virtual_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

/// Virtual-clock timestamp: a fixed epoch plus one second per tick, so the
/// wire format is identical no matter which transport carried it.
pub fn timestamp_for_tick(tick: i64) -> String {
    (virtual_epoch() + chrono::Duration::seconds(tick)).to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn tick_from_timestamp(ts: &str) -> Option<i64> {
    let t = DateTime::parse_from_rfc3339(ts).ok()?;
    Some((t.with_timezone(&Utc) - virtual_epoch()).num_seconds())
}
