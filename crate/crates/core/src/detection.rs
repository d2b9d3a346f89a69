//! Passive countermeasures: sniffer anomaly rules and a heartbeat outage
//! monitor.
//!
//! Rules only ever point at frames. The forged frames carry the gateway's
//! own address, so nothing here can name the transmitter that actually sent
//! them.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use crate::codec::{CaptureRecord, Command, Frame, NodeId};
use crate::node::{is_heartbeat, ms, Micros};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    SelfAddressed,
    FnirToGateway,
    NonceStorm,
    UnknownSource,
    HeartbeatLost,
}

impl Rule {
    pub const fn name(self) -> &'static str {
        match self {
            Self::SelfAddressed => "SelfAddressed",
            Self::FnirToGateway => "FnirToGateway",
            Self::NonceStorm => "NonceStorm",
            Self::UnknownSource => "UnknownSource",
            Self::HeartbeatLost => "HeartbeatLost",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalyEvent {
    pub at: Micros,
    pub rule: Rule,
    pub frame: Option<Frame>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanParams {
    pub gateway: NodeId,
    /// A storm is more than this many nonce requests inside one window.
    pub nonce_rate: usize,
    pub window_ms: u64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            gateway: NodeId::GATEWAY,
            nonce_rate: 10,
            window_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("heartbeat interval must be positive")]
    ZeroInterval,
    #[error("miss threshold must be at least 1")]
    ZeroThreshold,
}

fn frame_event(at: Micros, rule: Rule, frame: &Frame, detail: String) -> AnomalyEvent {
    AnomalyEvent {
        at,
        rule,
        frame: Some(frame.clone()),
        detail,
    }
}

fn describe(frame: &Frame) -> String {
    format!("{}->{} {}", frame.src, frame.dst, frame.command.kind())
}

/// Applies the frame-level rules to a capture. `known_nodes = None`
/// disables the unknown-source rule.
pub fn scan_frames(
    capture: &[CaptureRecord],
    known_nodes: Option<&BTreeSet<NodeId>>,
    params: &ScanParams,
) -> Vec<AnomalyEvent> {
    let window = ms(params.window_ms);
    let mut events = Vec::new();
    let mut recent_requests: VecDeque<Micros> = VecDeque::new();
    let mut in_storm = false;

    for CaptureRecord { t_us, frame } in capture {
        let at = *t_us;
        if frame.is_self_addressed() {
            events.push(frame_event(at, Rule::SelfAddressed, frame, describe(frame)));
        }
        if matches!(frame.command, Command::FindNodesInRange { .. }) && frame.dst == params.gateway {
            events.push(frame_event(at, Rule::FnirToGateway, frame, describe(frame)));
        }
        if let Some(known) = known_nodes {
            if !known.contains(&frame.src) {
                let detail = format!("src={} not in network; {}", frame.src, describe(frame));
                events.push(frame_event(at, Rule::UnknownSource, frame, detail));
            }
        }
        if frame.command.is_nonce_request() {
            recent_requests.push_back(at);
            while recent_requests.front().is_some_and(|&t| t + window <= at) {
                recent_requests.pop_front();
            }
            let count = recent_requests.len();
            if count > params.nonce_rate && !in_storm {
                in_storm = true;
                let detail = format!("{count} nonce requests within {} ms", params.window_ms);
                events.push(frame_event(at, Rule::NonceStorm, frame, detail));
            } else if count <= params.nonce_rate {
                in_storm = false;
            }
        }
    }
    events
}

/// Reports each outage where `gateway` sent no heartbeat for more than
/// `miss_threshold × interval_ms`. The event is stamped at the moment the
/// threshold ran out. Monitoring starts with the first heartbeat seen and
/// ends with the last capture record.
pub fn heartbeat_monitor(
    capture: &[CaptureRecord],
    gateway: NodeId,
    interval_ms: u64,
    miss_threshold: u32,
) -> Result<Vec<AnomalyEvent>, DetectError> {
    if interval_ms == 0 {
        return Err(DetectError::ZeroInterval);
    }
    if miss_threshold == 0 {
        return Err(DetectError::ZeroThreshold);
    }
    let limit = ms(interval_ms) * miss_threshold as u64;
    let Some(horizon) = capture.last().map(|r| r.t_us) else {
        return Ok(Vec::new());
    };
    let beats: Vec<Micros> = capture
        .iter()
        .filter(|r| r.frame.src == gateway && is_heartbeat(&r.frame))
        .map(|r| r.t_us)
        .collect();

    let mut events = Vec::new();
    let gaps = beats
        .windows(2)
        .map(|pair| (pair[0], pair[1]))
        .chain(beats.last().map(|&last| (last, horizon)));
    for (last_seen, next_seen) in gaps {
        if next_seen > last_seen + limit {
            events.push(AnomalyEvent {
                at: last_seen + limit,
                rule: Rule::HeartbeatLost,
                frame: None,
                detail: format!(
                    "no heartbeat from {gateway} since t={last_seen}us ({miss_threshold} x {interval_ms} ms)"
                ),
            });
        }
    }
    Ok(events)
}

/// Orders events by timestamp, keeping rule order stable within one
/// timestamp.
pub fn sort_events(events: &mut [AnomalyEvent]) {
    events.sort_by_key(|e| e.at);
}

/// One line per event: `<t_us> <RULE> <detail>`.
pub fn format_report(events: &[AnomalyEvent]) -> String {
    let mut out = String::new();
    for event in events {
        writeln!(out, "{} {} {}", event.at, event.rule, event.detail).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{build_power_of_nope_frame, build_routed_noncense_frame, NonceVariant};
    use crate::codec::HomeId;
    use crate::node::heartbeat_frame;

    const HOME: HomeId = HomeId(0x1234_5678);

    fn rec(t_us: Micros, frame: Frame) -> CaptureRecord {
        CaptureRecord { t_us, frame }
    }

    fn known() -> BTreeSet<NodeId> {
        [1, 2, 3].map(NodeId).into_iter().collect()
    }

    fn beats(times_s: &[u64]) -> Vec<CaptureRecord> {
        times_s
            .iter()
            .map(|&s| rec(s * 1_000_000, heartbeat_frame(HOME, NodeId(1))))
            .collect()
    }

    #[test]
    fn self_addressed_and_fnir() {
        let capture = vec![
            rec(0, build_routed_noncense_frame(HOME, NonceVariant::S0, 0)),
            rec(5, build_power_of_nope_frame(HOME)),
        ];
        let events = scan_frames(&capture, Some(&known()), &ScanParams::default());
        let rules: Vec<_> = events.iter().map(|e| (e.at, e.rule)).collect();
        assert_eq!(
            rules,
            [(0, Rule::SelfAddressed), (5, Rule::SelfAddressed), (5, Rule::FnirToGateway)]
        );
        assert!(events.iter().all(|e| e.frame.as_ref().unwrap().is_self_addressed()));
    }

    #[test]
    fn unknown_source_variant() {
        let mut forged = build_routed_noncense_frame(HOME, NonceVariant::S0, 0);
        forged.src = NodeId(200);
        let capture = vec![rec(0, forged)];
        let events = scan_frames(&capture, Some(&known()), &ScanParams::default());
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].rule, Rule::UnknownSource);
        assert!(scan_frames(&capture, None, &ScanParams::default()).is_empty());
    }

    #[test]
    fn nonce_storm_fires_once_per_burst() {
        let get = Frame::singlecast(HOME, NodeId(2), NodeId(1), Command::NonceGet);
        // 11 requests 100 ms apart, then quiet, then another burst.
        let mut capture: Vec<_> = (0..11).map(|i| rec(i * 100_000, get.clone())).collect();
        capture.extend((0..11).map(|i| rec(60_000_000 + i * 100_000, get.clone())));
        let events = scan_frames(&capture, Some(&known()), &ScanParams::default());
        let storms: Vec<_> = events.iter().filter(|e| e.rule == Rule::NonceStorm).map(|e| e.at).collect();
        assert_eq!(storms, [1_000_000, 61_000_000]);

        let slow: Vec<_> = (0..30).map(|i| rec(i * 600_000, get.clone())).collect();
        assert!(scan_frames(&slow, Some(&known()), &ScanParams::default()).is_empty());
    }

    #[test]
    fn heartbeat_outage_detected_at_threshold() {
        // Beats every 10 s, then a gap from 10 s to 130 s.
        let capture = beats(&[0, 10, 130, 140]);
        let events = heartbeat_monitor(&capture, NodeId(1), 10_000, 3).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].at, 40_000_000);
        assert_eq!(events[0].rule, Rule::HeartbeatLost);
    }

    #[test]
    fn heartbeat_below_threshold_is_quiet() {
        // Two missed beats (20 s, 30 s) with a threshold of three.
        let capture = beats(&[0, 10, 40, 50]);
        assert!(heartbeat_monitor(&capture, NodeId(1), 10_000, 3).unwrap().is_empty());
        let steady = beats(&[0, 10, 20, 30, 40]);
        assert!(heartbeat_monitor(&steady, NodeId(1), 10_000, 3).unwrap().is_empty());
    }

    #[test]
    fn trailing_outage_uses_capture_end() {
        let mut capture = beats(&[0, 10]);
        capture.push(rec(100_000_000, build_power_of_nope_frame(HOME)));
        let events = heartbeat_monitor(&capture, NodeId(1), 10_000, 3).unwrap();
        assert_eq!(events.iter().map(|e| e.at).collect::<Vec<_>>(), [40_000_000]);
    }

    #[test]
    fn monitor_rejects_bad_parameters() {
        assert_eq!(heartbeat_monitor(&[], NodeId(1), 0, 3), Err(DetectError::ZeroInterval));
        assert_eq!(heartbeat_monitor(&[], NodeId(1), 10, 0), Err(DetectError::ZeroThreshold));
    }

    #[test]
    fn report_format() {
        let mut events = vec![
            AnomalyEvent { at: 9, rule: Rule::HeartbeatLost, frame: None, detail: "b".into() },
            AnomalyEvent { at: 3, rule: Rule::SelfAddressed, frame: None, detail: "a".into() },
        ];
        sort_events(&mut events);
        assert_eq!(format_report(&events), "3 SelfAddressed a\n9 HeartbeatLost b\n");
    }
}
