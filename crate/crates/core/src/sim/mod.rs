//! Deterministic discrete-event simulation of one network and an optional
//! attacker.
//!
//! Events run in `(time, insertion order)` order. Every transmission is
//! delivered to each in-range listener after a fixed propagation delay;
//! airtime and collisions are not modeled. All randomness comes from the
//! scenario seed, so a scenario always yields the same capture and metrics.

mod metrics;
mod topology;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

pub use metrics::{parse_report, BusyInterval, RunMetrics};
pub use topology::{Listener, Topology, Transmitter};

use crate::attacks::Attacker;
use crate::codec::{write_capture, CaptureRecord, CodecError, CommandTable, Frame, NodeId};
use crate::detection::{heartbeat_monitor, scan_frames, sort_events, ScanParams};
use crate::node::{
    ms, Action, DeviceState, EventTag, GatewayState, Micros, NodeError, Nonce, NodeProfile, NonceSource,
};
use crate::scenario::{Diagnostic, Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Transmit { from: Transmitter, frame: Frame },
    Deliver { frame: Frame, to: Listener },
    /// Gateway timer: routing attempts, busy expiry, app inbox.
    NodeTimer(NodeId),
    AttackerTick,
    HeartbeatDue(NodeId),
    /// Index into the scenario's app schedule.
    AppSubmit(usize),
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub at: Micros,
    pub kind: EventKind,
}

/// One Deliver event per listener in range of `from`, `prop_delay_us`
/// after `now`.
pub fn deliver(topology: &Topology, frame: &Frame, from: Transmitter, now: Micros, prop_delay_us: u64) -> Vec<Event> {
    topology
        .listeners(from)
        .into_iter()
        .map(|to| Event {
            at: now + prop_delay_us,
            kind: EventKind::Deliver {
                frame: frame.clone(),
                to,
            },
        })
        .collect()
}

/// A frame as it went on air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRecord {
    pub t_us: Micros,
    pub from: Transmitter,
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Every transmission in time order.
    pub records: Vec<SimRecord>,
    /// Every nonce handed out during the run, in issue order.
    pub nonces: Vec<Nonce>,
}

impl RunOutput {
    pub fn capture(&self) -> Vec<CaptureRecord> {
        self.records
            .iter()
            .map(|r| CaptureRecord {
                t_us: r.t_us,
                frame: r.frame.clone(),
            })
            .collect()
    }

    pub fn capture_text(&self, table: &CommandTable) -> Result<String, CodecError> {
        write_capture(&self.capture(), table)
    }
}

struct Queued {
    at: Micros,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, at: Micros, kind: EventKind) {
        self.heap.push(Reverse(Queued {
            at,
            seq: self.next_seq,
            kind,
        }));
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(q)| Event { at: q.at, kind: q.kind })
    }
}

struct Engine<'a> {
    scenario: &'a Scenario,
    gateway: GatewayState,
    gateway_profile: NodeProfile,
    devices: BTreeMap<NodeId, (DeviceState, NodeProfile)>,
    attacker: Option<Attacker>,
    nonces: NonceSource,
    queue: EventQueue,
    gateway_wakeups: BTreeSet<Micros>,
    records: Vec<SimRecord>,
    metrics: RunMetrics,
}

/// Runs `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let topology = &scenario.topology;
    let gateway_profile = topology
        .gateway()
        .cloned()
        .ok_or_else(|| ScenarioError::Invalid(vec![Diagnostic::new("topology.gateway", "missing")]))?;
    let gw_id = gateway_profile.node_id;
    let candidates = topology
        .neighbors(gw_id)
        .into_iter()
        .filter(|id| topology.nodes[id].routing_capable)
        .collect();
    let gateway = GatewayState::new(gw_id, scenario.home_id, topology.node_ids(), candidates);
    let devices = topology
        .nodes
        .values()
        .filter(|p| p.node_id != gw_id)
        .map(|p| (p.node_id, (DeviceState::new(p.node_id, scenario.home_id), p.clone())))
        .collect();

    let mut engine = Engine {
        scenario,
        gateway,
        gateway_profile,
        devices,
        attacker: scenario.attack.clone().map(Attacker::new),
        nonces: NonceSource::new(scenario.seed),
        queue: EventQueue::default(),
        gateway_wakeups: BTreeSet::new(),
        records: Vec::new(),
        metrics: RunMetrics {
            duration_us: ms(scenario.duration_ms),
            seed: scenario.seed,
            ..RunMetrics::default()
        },
    };
    engine.execute();
    Ok(engine.finish())
}

impl Engine<'_> {
    fn execute(&mut self) {
        let end = ms(self.scenario.duration_ms);
        // Queued first, so it wins every tie at `end`.
        self.queue.push(end, EventKind::End);
        for profile in self.scenario.topology.nodes.values() {
            if let Some(interval) = profile.heartbeat_interval_ms {
                self.queue.push(ms(interval), EventKind::HeartbeatDue(profile.node_id));
            }
        }
        for (idx, app) in self.scenario.app_schedule.iter().enumerate() {
            self.queue.push(ms(app.at_ms), EventKind::AppSubmit(idx));
        }

        while let Some(event) = self.queue.pop() {
            if event.kind == EventKind::End || event.at > end {
                break;
            }
            self.handle(event.at, event.kind);
        }
    }

    fn handle(&mut self, now: Micros, kind: EventKind) {
        let gw_id = self.gateway.id;
        match kind {
            EventKind::Transmit { from, frame } => self.transmit(now, from, frame),
            EventKind::Deliver { frame, to: Listener::Tap } => {
                let Some(attacker) = self.attacker.as_mut() else {
                    return;
                };
                let Ok(bytes) = frame.encode() else {
                    return;
                };
                if let Some(at) = attacker.observe(&bytes, now) {
                    self.queue.push(at, EventKind::AttackerTick);
                }
            }
            EventKind::Deliver {
                frame,
                to: Listener::Node(id),
            } => {
                let timing = &self.scenario.timing;
                let result = if id == gw_id {
                    self.gateway
                        .handle_frame(&self.gateway_profile, &frame, now, timing, &mut self.nonces)
                } else {
                    let (device, profile) = self.devices.get_mut(&id).expect("listener is a node");
                    device.handle_frame(profile, &frame, now, timing, &mut self.nonces)
                };
                match result {
                    Ok(actions) => self.apply(id, now, actions),
                    Err(NodeError::HomeIdMismatch { .. }) => self.metrics.home_id_mismatches += 1,
                }
                if id == gw_id {
                    self.schedule_gateway_wakeup(now);
                }
            }
            EventKind::NodeTimer(_) => {
                self.gateway_wakeups.remove(&now);
                let actions = self.gateway.tick(now, &self.scenario.timing);
                self.apply(gw_id, now, actions);
                self.schedule_gateway_wakeup(now);
            }
            EventKind::AttackerTick => {
                let Some(shot) = self.attacker.as_mut().and_then(|a| a.fire(now)) else {
                    return;
                };
                self.queue.push(
                    now,
                    EventKind::Transmit {
                        from: Transmitter::Attacker,
                        frame: shot.frame,
                    },
                );
                if let Some(next) = shot.next_at {
                    self.queue.push(next, EventKind::AttackerTick);
                }
            }
            EventKind::HeartbeatDue(id) => {
                let actions = if id == gw_id {
                    self.gateway.heartbeat(now)
                } else {
                    self.devices[&id].0.heartbeat(now)
                };
                self.apply(id, now, actions);
                let interval = self.scenario.topology.nodes[&id]
                    .heartbeat_interval_ms
                    .expect("scheduled only with an interval");
                self.queue.push(now + ms(interval), EventKind::HeartbeatDue(id));
            }
            EventKind::AppSubmit(idx) => {
                self.metrics.app_submitted += 1;
                let request = self.scenario.app_schedule[idx].request.clone();
                let actions = self.gateway.enqueue_app_command(request, now, &self.scenario.timing);
                self.apply(gw_id, now, actions);
                self.schedule_gateway_wakeup(now);
            }
            EventKind::End => {}
        }
    }

    fn transmit(&mut self, now: Micros, from: Transmitter, frame: Frame) {
        *self.metrics.frames_on_air.entry(frame.command.kind()).or_default() += 1;
        if from == Transmitter::Attacker {
            self.metrics.attack_frames_sent += 1;
            self.metrics.first_attack_us.get_or_insert(now);
        }
        for event in deliver(&self.scenario.topology, &frame, from, now, self.scenario.prop_delay_us) {
            self.queue.push(event.at, event.kind);
        }
        self.records.push(SimRecord { t_us: now, from, frame });
    }

    fn apply(&mut self, node: NodeId, now: Micros, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Transmit { frame, at } => self.queue.push(
                    at.max(now),
                    EventKind::Transmit {
                        from: Transmitter::Node(node),
                        frame,
                    },
                ),
                Action::SetBusy { until, reason } => self.metrics.record_busy(now, until, reason),
                Action::EmitEvent { tag, .. } => match tag {
                    EventTag::AppProcessed => self.metrics.app_processed += 1,
                    EventTag::AppBlocked => self.metrics.app_blocked += 1,
                    EventTag::DeviceEvent => self.metrics.device_events += 1,
                },
                Action::DropFrame { reason } => *self.metrics.frames_dropped.entry(reason).or_default() += 1,
            }
        }
    }

    fn schedule_gateway_wakeup(&mut self, now: Micros) {
        if let Some(deadline) = self.gateway.next_deadline() {
            let at = deadline.max(now);
            if self.gateway_wakeups.insert(at) {
                self.queue.push(at, EventKind::NodeTimer(self.gateway.id));
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        let output_records = std::mem::take(&mut self.records);
        let capture: Vec<CaptureRecord> = output_records
            .iter()
            .map(|r| CaptureRecord {
                t_us: r.t_us,
                frame: r.frame.clone(),
            })
            .collect();
        let params = ScanParams {
            gateway: self.gateway.id,
            ..ScanParams::default()
        };
        let known = self.scenario.topology.node_ids();
        let mut events = scan_frames(&capture, Some(&known), &params);
        if let Some(interval) = self.gateway_profile.heartbeat_interval_ms {
            if let Ok(lost) =
                heartbeat_monitor(&capture, self.gateway.id, interval, self.scenario.heartbeat_miss_threshold)
            {
                events.extend(lost);
            }
        }
        sort_events(&mut events);
        self.metrics.detection_events = events;
        RunOutput {
            metrics: self.metrics,
            records: output_records,
            nonces: self.nonces.issued().to_vec(),
        }
    }
}
