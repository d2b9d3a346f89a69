//! Bit-exact encoding and decoding of Z-Wave (G.9959 R1/R2) frames.
//!
//! Frame layout, all multi-byte fields big-endian:
//!
//! ```text
//! HomeID(4) | src(1) | ctrl1(1) | ctrl2(1) | length(1) | dst(1) | [route] | command | checksum(1)
//! ```
//!
//! `length` counts every byte including the checksum, which is an XOR fold
//! seeded with `0xFF`. Frames are capped at 64 bytes.

mod capture;
mod command;
mod frame;
mod types;

pub use capture::{
    decode_capture, read_capture, write_capture, CaptureError, CaptureLine, CaptureRecord,
};
pub use command::{
    mask_to_nodes, Command, CommandKind, CommandTable, ConstantsError, MAX_MASK_LEN, S0_NONCE_LEN,
    S2_NONCE_LEN,
};
pub use frame::{decode_frame, encode_frame, Frame, HEADER_LEN, MAX_FRAME_LEN, MIN_FRAME_LEN};
pub use types::{FrameControl, HeaderType, HomeId, NodeId, RouteHeader, MAX_REPEATERS};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame too short: {len} bytes, need at least 10")]
    TooShort { len: usize },
    #[error("length field says {declared} bytes but frame has {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("bad checksum: expected {expected:02X}, found {found:02X}")]
    BadChecksum { expected: u8, found: u8 },
    #[error("unknown header type {0}")]
    UnknownHeaderType(u8),
    #[error("non-ack frame carries no command")]
    EmptyPayloadOnNonAck,
    #[error("command payload is a single byte")]
    TruncatedCommand,
    #[error("frame of {len} bytes exceeds the 64-byte limit")]
    OversizeFrame { len: usize },
    #[error("node mask is empty")]
    EmptyMask,
    #[error("malformed route header")]
    BadRouteHeader,
    #[error("inconsistent frame: {0}")]
    InconsistentFrame(&'static str),
}

/// XOR fold of `bytes`, seeded with `0xFF`.
pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0xFF, |acc, b| acc ^ b)
}
