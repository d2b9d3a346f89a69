use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::codec::CommandKind;
use crate::detection::{AnomalyEvent, Rule};
use crate::node::{BusyReason, DropReason, Micros};

/// Half-open interval `[start, end)` during which the gateway was blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusyInterval {
    pub start: Micros,
    pub end: Micros,
    pub reason: BusyReason,
}

impl BusyInterval {
    pub fn len(&self) -> Micros {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    fn overlap(&self, start: Micros, end: Micros) -> Micros {
        self.end.min(end).saturating_sub(self.start.max(start))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub duration_us: Micros,
    pub seed: u64,
    /// Disjoint, ascending, clipped to the run.
    pub busy_intervals: Vec<BusyInterval>,
    pub app_submitted: u64,
    pub app_processed: u64,
    pub app_blocked: u64,
    pub device_events: u64,
    pub frames_on_air: BTreeMap<CommandKind, u64>,
    pub frames_dropped: BTreeMap<DropReason, u64>,
    pub home_id_mismatches: u64,
    pub attack_frames_sent: u64,
    pub first_attack_us: Option<Micros>,
    pub detection_events: Vec<AnomalyEvent>,
}

impl RunMetrics {
    /// Records that the gateway is blocked from `start` until `end`.
    /// Extensions of the running interval are merged into it.
    pub(crate) fn record_busy(&mut self, start: Micros, end: Micros, reason: BusyReason) {
        let end = end.min(self.duration_us);
        if end <= start {
            return;
        }
        if let Some(last) = self.busy_intervals.last_mut() {
            if last.reason == reason && start <= last.end {
                last.end = last.end.max(end);
                return;
            }
            debug_assert!(start >= last.end, "busy intervals overlap");
        }
        self.busy_intervals.push(BusyInterval { start, end, reason });
    }

    pub fn gateway_busy_us(&self) -> Micros {
        self.busy_intervals.iter().map(BusyInterval::len).sum()
    }

    pub fn gateway_busy_ms(&self) -> f64 {
        self.gateway_busy_us() as f64 / 1_000.0
    }

    pub fn busy_us_by_reason(&self) -> BTreeMap<BusyReason, Micros> {
        let mut out = BTreeMap::new();
        for interval in &self.busy_intervals {
            *out.entry(interval.reason).or_default() += interval.len();
        }
        out
    }

    pub fn first_block_us(&self) -> Option<Micros> {
        self.busy_intervals.first().map(|i| i.start)
    }

    pub fn last_block_us(&self) -> Option<Micros> {
        self.busy_intervals.last().map(|i| i.end)
    }

    pub fn busy_within(&self, start: Micros, end: Micros) -> Micros {
        self.busy_intervals.iter().map(|i| i.overlap(start, end)).sum()
    }

    /// Fraction of `[start, end)` the gateway spent idle.
    pub fn idle_fraction(&self, start: Micros, end: Micros) -> f64 {
        if end <= start {
            return 1.0;
        }
        let span = end - start;
        (span - self.busy_within(start, end)) as f64 / span as f64
    }

    /// Idle fraction from the first attack frame to the end of the run.
    pub fn attack_window_idle_fraction(&self) -> Option<f64> {
        self.first_attack_us.map(|start| self.idle_fraction(start, self.duration_us))
    }

    pub fn detections(&self, rule: Rule) -> usize {
        self.detection_events.iter().filter(|e| e.rule == rule).count()
    }

    /// Flat `key = value` report, one entry per line, stable key order.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: &dyn std::fmt::Display| {
            writeln!(out, "{key} = {value}").expect("writing to a String");
        };
        let optional = |v: Option<Micros>| v.map_or_else(|| "none".to_string(), |v| v.to_string());

        put("duration_ms", &format_ms(self.duration_us));
        put("seed", &self.seed);
        put("gateway_busy_us", &self.gateway_busy_us());
        put("gateway_busy_ms", &format_ms(self.gateway_busy_us()));
        let by_reason = self.busy_us_by_reason();
        for reason in [BusyReason::FnirSweep, BusyReason::RoutingNonce] {
            let us = by_reason.get(&reason).copied().unwrap_or(0);
            put(&format!("gateway_busy_ms.{}", reason.key()), &format_ms(us));
        }
        put("busy_intervals", &self.busy_intervals.len());
        put("first_block_us", &optional(self.first_block_us()));
        put("last_block_us", &optional(self.last_block_us()));
        put("app_submitted", &self.app_submitted);
        put("app_processed", &self.app_processed);
        put("app_blocked", &self.app_blocked);
        put("device_events", &self.device_events);
        put("attack_frames_sent", &self.attack_frames_sent);
        put("first_attack_us", &optional(self.first_attack_us));
        put(
            "attack_window_idle_fraction",
            &self
                .attack_window_idle_fraction()
                .map_or_else(|| "none".to_string(), |f| format!("{f:.6}")),
        );
        put("home_id_mismatches", &self.home_id_mismatches);
        put("frames_on_air", &self.frames_on_air.values().sum::<u64>());
        for (kind, count) in &self.frames_on_air {
            put(&format!("frames_on_air.{kind}"), count);
        }
        put("frames_dropped", &self.frames_dropped.values().sum::<u64>());
        for (reason, count) in &self.frames_dropped {
            put(&format!("frames_dropped.{}", reason.key()), count);
        }
        put("detection_events", &self.detection_events.len());
        let mut by_rule: BTreeMap<Rule, usize> = BTreeMap::new();
        for event in &self.detection_events {
            *by_rule.entry(event.rule).or_default() += 1;
        }
        for (rule, count) in by_rule {
            put(&format!("detection.{rule}"), &count);
        }
        out
    }
}

/// Milliseconds, without a fractional part when the value is whole.
fn format_ms(us: Micros) -> String {
    if us % 1_000 == 0 {
        (us / 1_000).to_string()
    } else {
        format!("{}.{:03}", us / 1_000, us % 1_000)
    }
}

/// Reads a report back into `key -> value` pairs.
pub fn parse_report(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|line| line.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics() -> RunMetrics {
        RunMetrics {
            duration_us: 10_000,
            ..RunMetrics::default()
        }
    }

    #[test]
    fn busy_extension_merges() {
        let mut m = metrics();
        m.record_busy(0, 100, BusyReason::RoutingNonce);
        m.record_busy(50, 300, BusyReason::RoutingNonce);
        m.record_busy(300, 400, BusyReason::FnirSweep);
        m.record_busy(9_000, 20_000, BusyReason::FnirSweep);
        assert_eq!(m.busy_intervals.len(), 3);
        assert_eq!(m.gateway_busy_us(), 300 + 100 + 1_000);
        let by_reason = m.busy_us_by_reason();
        assert_eq!(by_reason.values().sum::<u64>(), m.gateway_busy_us());
        assert_eq!(m.last_block_us(), Some(10_000));
    }

    #[test]
    fn idle_fraction_window() {
        let mut m = metrics();
        m.record_busy(1_000, 6_000, BusyReason::FnirSweep);
        assert_eq!(m.idle_fraction(0, 10_000), 0.5);
        assert_eq!(m.idle_fraction(2_000, 4_000), 0.0);
        m.first_attack_us = Some(1_000);
        assert_eq!(m.attack_window_idle_fraction(), Some(4_000.0 / 9_000.0));
    }

    #[test]
    fn ms_formatting() {
        assert_eq!(format_ms(111_360_000), "111360");
        assert_eq!(format_ms(1_500), "1.500");
    }

    #[test]
    fn report_round_trips_keys() {
        let mut m = metrics();
        m.record_busy(0, 2_000, BusyReason::FnirSweep);
        let parsed = parse_report(&m.report());
        assert_eq!(parsed["gateway_busy_ms"], "2");
        assert_eq!(parsed["gateway_busy_ms.fnir_sweep"], "2");
        assert_eq!(parsed["gateway_busy_ms.routing_nonce"], "0");
        assert_eq!(parsed["first_attack_us"], "none");
    }
}
