use std::fmt;

use super::CodecError;

/// 32-bit network identifier shared by every node of one Z-Wave network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HomeId(pub u32);

impl HomeId {
    pub const fn to_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    pub const fn from_bytes(bytes: [u8; 4]) -> Self {
        Self(u32::from_be_bytes(bytes))
    }

    /// Parses 1 to 8 hex digits, with or without a `0x` prefix.
    pub fn parse_hex(text: &str) -> Option<Self> {
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .unwrap_or(text);
        if digits.is_empty() || digits.len() > 8 {
            return None;
        }
        u32::from_str_radix(digits, 16).ok().map(Self)
    }
}

impl fmt::Display for HomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08X}", self.0)
    }
}

/// 8-bit node address inside one network.
///
/// `1..=232` are addressable nodes, `255` is broadcast and `0` is
/// reserved. Controllers conventionally sit at node 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u8);

impl NodeId {
    pub const UNINITIALIZED: NodeId = NodeId(0);
    pub const GATEWAY: NodeId = NodeId(1);
    pub const MAX_ADDRESSABLE: NodeId = NodeId(232);
    pub const BROADCAST: NodeId = NodeId(255);

    pub const fn is_addressable(self) -> bool {
        self.0 >= 1 && self.0 <= 232
    }

    pub const fn is_broadcast(self) -> bool {
        self.0 == Self::BROADCAST.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderType {
    Singlecast = 1,
    Multicast = 2,
    Ack = 3,
}

impl HeaderType {
    pub fn from_nibble(value: u8) -> Result<Self, CodecError> {
        match value {
            1 => Ok(Self::Singlecast),
            2 => Ok(Self::Multicast),
            3 => Ok(Self::Ack),
            other => Err(CodecError::UnknownHeaderType(other)),
        }
    }
}

const ACK_REQUESTED_BIT: u8 = 1 << 6;
const ROUTED_BIT: u8 = 1 << 7;

/// The two frame-control bytes following the source address.
///
/// Byte 1 holds the header type in its low nibble, the ack-request flag in
/// bit 6 and the routed flag in bit 7. Byte 2 carries the 4-bit sequence
/// number in its high nibble. All other bits are written as zero and
/// ignored on decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameControl {
    pub header_type: HeaderType,
    pub ack_requested: bool,
    pub routed: bool,
    pub seq: u8,
}

impl FrameControl {
    pub const fn singlecast(seq: u8) -> Self {
        Self {
            header_type: HeaderType::Singlecast,
            ack_requested: true,
            routed: false,
            seq,
        }
    }

    pub const fn ack(seq: u8) -> Self {
        Self {
            header_type: HeaderType::Ack,
            ack_requested: false,
            routed: false,
            seq,
        }
    }

    pub fn to_bytes(self) -> [u8; 2] {
        let mut ctrl1 = self.header_type as u8;
        if self.ack_requested {
            ctrl1 |= ACK_REQUESTED_BIT;
        }
        if self.routed {
            ctrl1 |= ROUTED_BIT;
        }
        [ctrl1, (self.seq & 0x0F) << 4]
    }

    pub fn from_bytes(ctrl1: u8, ctrl2: u8) -> Result<Self, CodecError> {
        Ok(Self {
            header_type: HeaderType::from_nibble(ctrl1 & 0x0F)?,
            ack_requested: ctrl1 & ACK_REQUESTED_BIT != 0,
            routed: ctrl1 & ROUTED_BIT != 0,
            seq: ctrl2 >> 4,
        })
    }
}

pub const MAX_REPEATERS: usize = 4;

/// Source route carried by frames with the routed flag set.
///
/// Encoded right after the destination as one byte (repeater count in the
/// high nibble, hop index in the low nibble) followed by the repeater ids.
/// `hop` counts the repeaters already traversed, so the repeater at index
/// `hop` forwards next and `hop == repeaters.len()` means the frame is on
/// its last leg towards the destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RouteHeader {
    pub hop: u8,
    pub repeaters: Vec<NodeId>,
}

impl RouteHeader {
    pub fn via(repeater: NodeId) -> Self {
        Self {
            hop: 0,
            repeaters: vec![repeater],
        }
    }

    /// The repeater expected to forward this frame, if any leg remains.
    pub fn next_repeater(&self) -> Option<NodeId> {
        self.repeaters.get(self.hop as usize).copied()
    }

    pub fn is_final_leg(&self) -> bool {
        self.hop as usize >= self.repeaters.len()
    }

    pub fn advanced(&self) -> Self {
        Self {
            hop: self.hop + 1,
            repeaters: self.repeaters.clone(),
        }
    }

    pub(crate) fn encoded_len(&self) -> usize {
        1 + self.repeaters.len()
    }

    pub(crate) fn validate(&self) -> Result<(), CodecError> {
        let count = self.repeaters.len();
        if count == 0 || count > MAX_REPEATERS || self.hop as usize > count {
            return Err(CodecError::BadRouteHeader);
        }
        Ok(())
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.push(((self.repeaters.len() as u8) << 4) | (self.hop & 0x0F));
        out.extend(self.repeaters.iter().map(|n| n.0));
    }

    /// Parses a route header from the front of `bytes`, returning it with
    /// the number of bytes consumed.
    pub(crate) fn read(bytes: &[u8]) -> Result<(Self, usize), CodecError> {
        let (&head, rest) = bytes.split_first().ok_or(CodecError::BadRouteHeader)?;
        let count = (head >> 4) as usize;
        let hop = head & 0x0F;
        if rest.len() < count {
            return Err(CodecError::BadRouteHeader);
        }
        let route = Self {
            hop,
            repeaters: rest[..count].iter().map(|&b| NodeId(b)).collect(),
        };
        route.validate()?;
        Ok((route, 1 + count))
    }
}
