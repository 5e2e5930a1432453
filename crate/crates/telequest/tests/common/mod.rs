//! Helpers shared by the daemon-level test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use serde_json::Value;
use telequest::{ClockMode, Daemon, PlayOptions, PlayReport, ServeOptions};
use telequest_core::script::{expand, parse_script, Script, TimedMessage};
use telequest_core::{RoutingMode, SessionConfig};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn canonical_script_path() -> PathBuf {
    manifest_dir().join("scripts/canonical.json")
}

pub fn golden_path() -> PathBuf {
    manifest_dir().join("tests/golden/canonical_side_by_side.ndjson")
}

pub fn canonical_script() -> Script {
    let text = std::fs::read_to_string(canonical_script_path()).expect("canonical script");
    parse_script(&text).expect("canonical script parses")
}

pub fn canonical_messages() -> Vec<TimedMessage> {
    expand(&canonical_script()).expect("canonical script expands")
}

/// A daemon on ephemeral loopback ports.
pub fn daemon(mut config: SessionConfig, clock: ClockMode) -> Daemon {
    config.tcp_port = 0;
    config.ws_port = 0;
    let mut opts = ServeOptions::new(config);
    opts.clock = clock;
    opts.bind_host = "127.0.0.1".into();
    telequest::spawn(opts).expect("daemon starts")
}

pub fn config(mode: RoutingMode) -> SessionConfig {
    SessionConfig { mode, ..SessionConfig::default() }
}

pub fn play_against(daemon: &Daemon, messages: &[TimedMessage], speed: f64) -> PlayReport {
    let opts = PlayOptions {
        endpoint: daemon.tcp_addr().to_string(),
        speed,
        drain_timeout: Duration::from_secs(10),
    };
    let report = telequest::play(messages, &opts).expect("playback");
    assert!(report.drained, "daemon did not close the stream");
    report
}

/// Plays `messages` through a fresh virtual-clock daemon and returns every published line.
pub fn replay_over_tcp(mode: RoutingMode, messages: &[TimedMessage]) -> Vec<String> {
    let d = daemon(config(mode), ClockMode::Virtual);
    play_against(&d, messages, 50.0).received
}

/// The line with its `stamp` field removed, keys in a canonical order.
pub fn without_stamp(line: &str) -> String {
    let mut v: Value = serde_json::from_str(line).expect("published line is JSON");
    v.as_object_mut().expect("object").remove("stamp");
    v.to_string()
}

/// The line with `left` and `right` exchanged in its `arm_id`.
pub fn exchange_arms(line: &str) -> String {
    let mut v: Value = serde_json::from_str(line).expect("published line is JSON");
    if let Some(arm) = v.pointer_mut("/body/arm_id") {
        *arm = Value::String(if arm == "left" { "right" } else { "left" }.into());
    }
    let msg = telequest_core::decode(&v.to_string()).expect("still a valid message");
    telequest_core::encode(&msg)
}

pub fn parse_lines(lines: &[String]) -> Vec<telequest_core::WireMessage> {
    lines.iter().map(|l| telequest_core::decode(l).expect("valid published line")).collect()
}
