//! Per-node protocol state machines.
//!
//! Every transition takes the current time and returns a list of
//! [`Action`]s for the simulator to carry out; nothing here touches a
//! clock, a radio or a random source directly (nonces come from an
//! injected [`NonceSource`]).

mod device;
mod gateway;
mod nonce;

use std::fmt;

pub use device::DeviceState;
pub use gateway::{AppRequest, GatewayState, QueuedApp, RouteJob};
pub use nonce::{s0_iv, Nonce, NonceSource};

use crate::codec::{Command, Frame, HomeId, NodeId};

/// Simulated time in microseconds.
pub type Micros = u64;

pub const fn ms(value: u64) -> Micros {
    value * 1_000
}

pub const HEARTBEAT_CLASS: u8 = 0x20;
pub const HEARTBEAT_CMD: u8 = 0x03;

/// The periodic liveness beacon a node broadcasts.
pub fn heartbeat_frame(home_id: HomeId, src: NodeId) -> Frame {
    Frame::broadcast(
        home_id,
        src,
        Command::AppCommand {
            class: HEARTBEAT_CLASS,
            cmd: HEARTBEAT_CMD,
            params: vec![0xFF],
        },
    )
}

pub fn is_heartbeat(frame: &Frame) -> bool {
    matches!(
        frame.command,
        Command::AppCommand { class: HEARTBEAT_CLASS, cmd: HEARTBEAT_CMD, .. }
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Gateway,
    Device,
}

/// Protocol generation of a node's firmware.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Era {
    /// S0-only stack, reports Command Complete after Find Nodes In Range.
    LegacyS0,
    /// S2-capable stack, silent after Find Nodes In Range.
    ModernS2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeProfile {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub routing_capable: bool,
    pub in_inclusion: bool,
    pub era: Era,
    /// Rejects Find Nodes In Range and nonce requests from itself or from
    /// unknown addresses.
    pub patched: bool,
    /// Also routes Nonce Reports towards sources it does not know.
    pub routes_to_unknown: bool,
    pub heartbeat_interval_ms: Option<u64>,
}

impl NodeProfile {
    pub fn gateway(node_id: NodeId) -> Self {
        Self {
            node_id,
            kind: NodeKind::Gateway,
            routing_capable: true,
            in_inclusion: false,
            era: Era::ModernS2,
            patched: false,
            routes_to_unknown: true,
            heartbeat_interval_ms: None,
        }
    }

    pub fn device(node_id: NodeId) -> Self {
        Self {
            kind: NodeKind::Device,
            ..Self::gateway(node_id)
        }
    }
}

/// Calibration knobs of the timing model, all in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingParams {
    /// Time a Find Nodes In Range sweep spends on each NOP Power probe.
    pub nop_wait_ms: u64,
    /// Passes over the node mask per sweep.
    pub fnir_passes: u32,
    /// Wall time a gateway loses per futile Nonce Report routing job.
    pub route_retry_budget_ms: u64,
    /// Routed attempts per job, after the initial direct attempt.
    pub route_attempts: u32,
    pub turnaround_ms: u64,
    pub hop_ms: u64,
    pub app_timeout_ms: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            nop_wait_ms: 120,
            fnir_passes: 4,
            route_retry_budget_ms: 4_700,
            route_attempts: 3,
            turnaround_ms: 10,
            hop_ms: 15,
            app_timeout_ms: 5_000,
        }
    }
}

impl TimingParams {
    /// Duration of one Find Nodes In Range sweep over `node_count` nodes.
    pub fn fnir_sweep_ms(&self, node_count: usize) -> u64 {
        self.fnir_passes as u64 * node_count as u64 * self.nop_wait_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum BusyReason {
    #[default]
    None,
    FnirSweep,
    RoutingNonce,
}

impl BusyReason {
    pub const fn key(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::FnirSweep => "fnir_sweep",
            Self::RoutingNonce => "routing_nonce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    Multicast,
    GatewayBusy,
    SelfOrUnknownDestination,
    NotInInclusion,
    DuplicateS2Sequence,
}

impl DropReason {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Multicast => "multicast",
            Self::GatewayBusy => "gateway busy",
            Self::SelfOrUnknownDestination => "self-or-unknown destination",
            Self::NotInInclusion => "not in inclusion",
            Self::DuplicateS2Sequence => "duplicate S2 sequence",
        }
    }

    /// Identifier form used as a metrics key.
    pub const fn key(self) -> &'static str {
        match self {
            Self::Multicast => "multicast",
            Self::GatewayBusy => "gateway_busy",
            Self::SelfOrUnknownDestination => "self_or_unknown_destination",
            Self::NotInInclusion => "not_in_inclusion",
            Self::DuplicateS2Sequence => "duplicate_s2_sequence",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventTag {
    AppProcessed,
    AppBlocked,
    DeviceEvent,
}

impl EventTag {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::AppProcessed => "app_processed",
            Self::AppBlocked => "app_blocked",
            Self::DeviceEvent => "device_event",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Transmit { frame: Frame, at: Micros },
    SetBusy { until: Micros, reason: BusyReason },
    EmitEvent { tag: EventTag, detail: String },
    DropFrame { reason: DropReason },
}

impl Action {
    pub(crate) fn transmit(frame: Frame, at: Micros) -> Self {
        Self::Transmit { frame, at }
    }

    pub(crate) fn drop(reason: DropReason) -> Self {
        Self::DropFrame { reason }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum NodeError {
    #[error("frame for network {found} ignored by node on {expected}")]
    HomeIdMismatch { expected: HomeId, found: HomeId },
}

pub(crate) fn check_home(expected: HomeId, frame: &Frame) -> Result<(), NodeError> {
    if frame.home_id == expected {
        Ok(())
    } else {
        Err(NodeError::HomeIdMismatch {
            expected,
            found: frame.home_id,
        })
    }
}

/// NOP Power probes for a Find Nodes In Range sweep: `passes` rounds over
/// `targets`, one slot every `nop_wait_ms`, starting at `now`. The slot for
/// `src` itself is spent without transmitting. Returns the probes and the
/// time the sweep ends.
pub(crate) fn fnir_probes(
    home_id: HomeId,
    src: NodeId,
    targets: &[NodeId],
    passes: u32,
    now: Micros,
    nop_wait_ms: u64,
) -> (Vec<Action>, Micros) {
    let step = ms(nop_wait_ms);
    let mut actions = Vec::with_capacity(targets.len() * passes as usize);
    let mut at = now;
    for _ in 0..passes {
        for &dst in targets {
            if dst == src {
                at += step;
                continue;
            }
            let frame = Frame::singlecast(home_id, src, dst, Command::NopPower);
            actions.push(Action::transmit(frame, at));
            at += step;
        }
    }
    (actions, at)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_is_under_two_minutes() {
        let timing = TimingParams::default();
        assert_eq!(timing.fnir_sweep_ms(232), 111_360);
        assert!(timing.fnir_sweep_ms(232) < 120_000);
    }

    #[test]
    fn heartbeat_shape() {
        let frame = heartbeat_frame(HomeId(5), NodeId::GATEWAY);
        assert!(frame.dst.is_broadcast());
        assert!(!frame.ctrl.ack_requested);
        assert!(is_heartbeat(&frame));
        assert!(!is_heartbeat(&Frame::broadcast(HomeId(5), NodeId(1), Command::NopPower)));
    }

    #[test]
    fn probes_are_stepped() {
        let targets = [NodeId(2), NodeId(3)];
        let (actions, end) = fnir_probes(HomeId(1), NodeId(1), &targets, 2, 1_000, 120);
        assert_eq!(actions.len(), 4);
        assert_eq!(end, 1_000 + 4 * 120_000);
        let times: Vec<_> = actions
            .iter()
            .map(|a| match a {
                Action::Transmit { at, .. } => *at,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(times, [1_000, 121_000, 241_000, 361_000]);
    }

    #[test]
    fn own_slot_is_silent() {
        let targets = [NodeId(1), NodeId(2)];
        let (actions, end) = fnir_probes(HomeId(1), NodeId(1), &targets, 1, 0, 120);
        assert_eq!(actions.len(), 1);
        assert_eq!(end, 240_000);
    }
}
