//! Plain-text configuration: one `key = value` per line, `#` comments.
//!
//! The same file can carry link-model constants, scenario selection, and
//! jammer strategy settings; unknown keys are rejected so typos surface
//! immediately.

use indexmap::IndexMap;
use thiserror::Error;

use crate::ran_sim::LinkModelParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key}: {message}")]
    BadValue { key: String, message: String },
}

/// Parses `key = value` lines, preserving order. Later duplicates win.
pub fn parse_kv(text: &str) -> Result<IndexMap<String, String>, ConfigError> {
    let mut map = IndexMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("not a number: {value:?}"),
    })
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("not an integer: {value:?}"),
    })
}

pub fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| parse_f64(key, v.trim())).collect()
}

/// Link-model keys recognized by [`apply_link_params`].
pub const LINK_KEYS: &[&str] = &[
    "snr_clear_db",
    "snr_jam_delta_db",
    "bler_jam_pct",
    "bler_clear_pct",
    "throughput_retain_jam",
    "dl_overhead",
    "latency_clear_s",
    "latency_jam_s",
    "snr_jitter_db",
    "bler_jam_jitter_pp",
    "bler_clear_jitter_pp",
    "bler_spike_prob",
    "bler_spike_min_pp",
    "bler_spike_max_pp",
    "cqi_table",
    "mcs_table",
    "pci",
    "carrier_id",
];

/// Overrides link-model fields from parsed keys, consuming the ones it
/// recognizes. Anything left in `kv` afterwards belongs to other sections.
pub fn apply_link_params(
    kv: &mut IndexMap<String, String>,
    params: &mut LinkModelParams,
) -> Result<(), ConfigError> {
    let taken: Vec<String> = kv
        .keys()
        .filter(|k| LINK_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    for key in taken {
        let value = kv.shift_remove(&key).unwrap();
        match key.as_str() {
            "snr_clear_db" => params.snr_clear_db = parse_f64(&key, &value)?,
            "snr_jam_delta_db" => params.snr_jam_delta_db = parse_f64(&key, &value)?,
            "bler_jam_pct" => params.bler_jam_pct = parse_f64(&key, &value)?,
            "bler_clear_pct" => params.bler_clear_pct = parse_f64(&key, &value)?,
            "throughput_retain_jam" => params.throughput_retain_jam = parse_f64(&key, &value)?,
            "dl_overhead" => params.dl_overhead = parse_f64(&key, &value)?,
            "latency_clear_s" => params.latency_clear_s = parse_f64(&key, &value)?,
            "latency_jam_s" => params.latency_jam_s = parse_f64(&key, &value)?,
            "snr_jitter_db" => params.snr_jitter_db = parse_f64(&key, &value)?,
            "bler_jam_jitter_pp" => params.bler_jam_jitter_pp = parse_f64(&key, &value)?,
            "bler_clear_jitter_pp" => params.bler_clear_jitter_pp = parse_f64(&key, &value)?,
            "bler_spike_prob" => params.bler_spike_prob = parse_f64(&key, &value)?,
            "bler_spike_min_pp" => params.bler_spike_min_pp = parse_f64(&key, &value)?,
            "bler_spike_max_pp" => params.bler_spike_max_pp = parse_f64(&key, &value)?,
            "cqi_table" => params.cqi_table = parse_f64_list(&key, &value)?,
            "mcs_table" => params.mcs_table = parse_f64_list(&key, &value)?,
            "pci" => params.pci = parse_u64(&key, &value)? as u32,
            "carrier_id" => params.carrier_id = parse_u64(&key, &value)? as u32,
            _ => unreachable!(),
        }
    }
    params.validate().map_err(|message| ConfigError::BadValue {
        key: "link".into(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let kv = parse_kv("# header\n\nsnr_clear_db = 19.6\n  bler_jam_pct=85\n").unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(kv["snr_clear_db"], "19.6");
        assert_eq!(kv["bler_jam_pct"], "85");
    }

    #[test]
    fn rejects_garbage_lines() {
        let err = parse_kv("snr_clear_db 19.6").unwrap_err();
        assert!(matches!(err, ConfigError::Malformed { line: 1, .. }));
    }

    #[test]
    fn link_overrides_apply() {
        let mut kv =
            parse_kv("snr_clear_db = 20.0\nthroughput_retain_jam = 0.5\nextra = 1").unwrap();
        let mut params = LinkModelParams::default();
        apply_link_params(&mut kv, &mut params).unwrap();
        assert_eq!(params.snr_clear_db, 20.0);
        assert_eq!(params.throughput_retain_jam, 0.5);
        // Unrecognized keys stay for other sections to claim.
        assert_eq!(kv.len(), 1);
        assert!(kv.contains_key("extra"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut kv = parse_kv("throughput_retain_jam = 1.5").unwrap();
        let mut params = LinkModelParams::default();
        assert!(apply_link_params(&mut kv, &mut params).is_err());

        let mut kv = parse_kv("snr_clear_db = abc").unwrap();
        let mut params = LinkModelParams::default();
        assert!(matches!(
            apply_link_params(&mut kv, &mut params),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
