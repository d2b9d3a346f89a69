use std::fmt;

use super::{CodecError, NodeId};

pub const S0_NONCE_LEN: usize = 8;
pub const S2_NONCE_LEN: usize = 16;
pub const MAX_MASK_LEN: usize = 32;

/// Command-class and command identifiers used when (de)serializing the
/// modeled commands.
///
/// The defaults match the public Security, Security 2 and protocol command
/// classes. They can be overridden from a `key = value` file when real
/// captures turn out to use different identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandTable {
    pub s0_class: u8,
    pub s0_nonce_get: u8,
    pub s0_nonce_report: u8,
    pub s2_class: u8,
    pub s2_nonce_get: u8,
    pub s2_nonce_report: u8,
    pub protocol_class: u8,
    pub find_nodes_in_range: u8,
    pub command_complete: u8,
    pub nop_power: u8,
}

impl Default for CommandTable {
    fn default() -> Self {
        Self {
            s0_class: 0x98,
            s0_nonce_get: 0x40,
            s0_nonce_report: 0x80,
            s2_class: 0x9F,
            s2_nonce_get: 0x01,
            s2_nonce_report: 0x02,
            protocol_class: 0x01,
            find_nodes_in_range: 0x04,
            command_complete: 0x07,
            nop_power: 0x08,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConstantsError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown constant `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{value}` is not a byte (use 0x.. or decimal)")]
    BadValue { line: usize, value: String },
}

fn parse_byte(text: &str) -> Option<u8> {
    let text = text.trim();
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u8::from_str_radix(hex, 16).ok(),
        None => text.parse().ok(),
    }
}

impl CommandTable {
    /// Parses a constants file. Keys not present keep their default value;
    /// unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConstantsError> {
        let mut table = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConstantsError::Syntax { line })?;
            let key = key.trim();
            let byte = parse_byte(value).ok_or_else(|| ConstantsError::BadValue {
                line,
                value: value.trim().to_string(),
            })?;
            let slot = match key {
                "s0_class" => &mut table.s0_class,
                "s0_nonce_get" => &mut table.s0_nonce_get,
                "s0_nonce_report" => &mut table.s0_nonce_report,
                "s2_class" => &mut table.s2_class,
                "s2_nonce_get" => &mut table.s2_nonce_get,
                "s2_nonce_report" => &mut table.s2_nonce_report,
                "protocol_class" => &mut table.protocol_class,
                "find_nodes_in_range" => &mut table.find_nodes_in_range,
                "command_complete" => &mut table.command_complete,
                "nop_power" => &mut table.nop_power,
                _ => {
                    return Err(ConstantsError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            };
            *slot = byte;
        }
        Ok(table)
    }
}

/// Application payload of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    NonceGet,
    NonceReport { nonce: [u8; S0_NONCE_LEN] },
    S2NonceGet { seq: u8 },
    S2NonceReport { seq: u8, nonce: [u8; S2_NONCE_LEN] },
    /// Node bitmask, bit `i` (byte `i / 8`, LSB first) selects node `i + 1`.
    FindNodesInRange { mask: Vec<u8> },
    CommandComplete,
    NopPower,
    /// Empty payload of an acknowledgement frame.
    Ack,
    /// Anything not in the modeled set, kept byte for byte.
    AppCommand { class: u8, cmd: u8, params: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommandKind {
    NonceGet,
    NonceReport,
    S2NonceGet,
    S2NonceReport,
    FindNodesInRange,
    CommandComplete,
    NopPower,
    Ack,
    AppCommand,
}

impl CommandKind {
    pub const fn name(self) -> &'static str {
        match self {
            Self::NonceGet => "NonceGet",
            Self::NonceReport => "NonceReport",
            Self::S2NonceGet => "S2NonceGet",
            Self::S2NonceReport => "S2NonceReport",
            Self::FindNodesInRange => "FindNodesInRange",
            Self::CommandComplete => "CommandComplete",
            Self::NopPower => "NopPower",
            Self::Ack => "Ack",
            Self::AppCommand => "AppCommand",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Self::NonceGet => CommandKind::NonceGet,
            Self::NonceReport { .. } => CommandKind::NonceReport,
            Self::S2NonceGet { .. } => CommandKind::S2NonceGet,
            Self::S2NonceReport { .. } => CommandKind::S2NonceReport,
            Self::FindNodesInRange { .. } => CommandKind::FindNodesInRange,
            Self::CommandComplete => CommandKind::CommandComplete,
            Self::NopPower => CommandKind::NopPower,
            Self::Ack => CommandKind::Ack,
            Self::AppCommand { .. } => CommandKind::AppCommand,
        }
    }

    pub fn is_nonce_request(&self) -> bool {
        matches!(self, Self::NonceGet | Self::S2NonceGet { .. })
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Self::NonceGet | Self::CommandComplete | Self::NopPower => 2,
            Self::NonceReport { .. } => 2 + S0_NONCE_LEN,
            Self::S2NonceGet { .. } => 3,
            Self::S2NonceReport { .. } => 3 + S2_NONCE_LEN,
            Self::FindNodesInRange { mask } => 2 + mask.len(),
            Self::Ack => 0,
            Self::AppCommand { params, .. } => 2 + params.len(),
        }
    }

    /// Serializes with the default identifiers.
    pub fn serialize(&self) -> Vec<u8> {
        self.serialize_with(&CommandTable::default())
    }

    pub fn serialize_with(&self, table: &CommandTable) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write(table, &mut out);
        out
    }

    pub(crate) fn write(&self, t: &CommandTable, out: &mut Vec<u8>) {
        match self {
            Self::NonceGet => out.extend([t.s0_class, t.s0_nonce_get]),
            Self::NonceReport { nonce } => {
                out.extend([t.s0_class, t.s0_nonce_report]);
                out.extend_from_slice(nonce);
            }
            Self::S2NonceGet { seq } => out.extend([t.s2_class, t.s2_nonce_get, *seq]),
            Self::S2NonceReport { seq, nonce } => {
                out.extend([t.s2_class, t.s2_nonce_report, *seq]);
                out.extend_from_slice(nonce);
            }
            Self::FindNodesInRange { mask } => {
                out.extend([t.protocol_class, t.find_nodes_in_range]);
                out.extend_from_slice(mask);
            }
            Self::CommandComplete => out.extend([t.protocol_class, t.command_complete]),
            Self::NopPower => out.extend([t.protocol_class, t.nop_power]),
            Self::Ack => {}
            Self::AppCommand { class, cmd, params } => {
                out.extend([*class, *cmd]);
                out.extend_from_slice(params);
            }
        }
    }

    /// Parses with the default identifiers.
    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::parse_with(bytes, &CommandTable::default())
    }

    /// Parses a command payload.
    ///
    /// Payloads that do not match a modeled command exactly (unknown
    /// identifiers, wrong lengths) come back as [`Command::AppCommand`] so
    /// no byte is lost. Find Nodes In Range is the exception: bytes past
    /// the 32-byte mask are accepted and dropped.
    pub fn parse_with(bytes: &[u8], t: &CommandTable) -> Result<Self, CodecError> {
        let (class, cmd, rest) = match bytes {
            [] => return Err(CodecError::EmptyPayloadOnNonAck),
            [_] => return Err(CodecError::TruncatedCommand),
            [class, cmd, rest @ ..] => (*class, *cmd, rest),
        };
        let parsed = if class == t.s0_class && cmd == t.s0_nonce_get && rest.is_empty() {
            Some(Self::NonceGet)
        } else if class == t.s0_class && cmd == t.s0_nonce_report {
            rest.try_into().ok().map(|nonce| Self::NonceReport { nonce })
        } else if class == t.s2_class && cmd == t.s2_nonce_get && rest.len() == 1 {
            Some(Self::S2NonceGet { seq: rest[0] })
        } else if class == t.s2_class && cmd == t.s2_nonce_report && rest.len() == 1 + S2_NONCE_LEN {
            rest[1..].try_into().ok().map(|nonce| Self::S2NonceReport {
                seq: rest[0],
                nonce,
            })
        } else if class == t.protocol_class && cmd == t.find_nodes_in_range && !rest.is_empty() {
            let mask = rest[..rest.len().min(MAX_MASK_LEN)].to_vec();
            Some(Self::FindNodesInRange { mask })
        } else if class == t.protocol_class && cmd == t.command_complete && rest.is_empty() {
            Some(Self::CommandComplete)
        } else if class == t.protocol_class && cmd == t.nop_power && rest.is_empty() {
            Some(Self::NopPower)
        } else {
            None
        };
        Ok(parsed.unwrap_or_else(|| Self::AppCommand {
            class,
            cmd,
            params: rest.to_vec(),
        }))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonceReport { nonce } => write!(f, "NonceReport nonce={}", hex::encode_upper(nonce)),
            Self::S2NonceGet { seq } => write!(f, "S2NonceGet seq={seq}"),
            Self::S2NonceReport { seq, nonce } => {
                write!(f, "S2NonceReport seq={seq} nonce={}", hex::encode_upper(nonce))
            }
            Self::FindNodesInRange { mask } => write!(f, "FindNodesInRange mask={}", fmt_mask(mask)),
            Self::AppCommand { class, cmd, params } => {
                write!(f, "AppCommand class={class:02X} cmd={cmd:02X}")?;
                if !params.is_empty() {
                    write!(f, " params={}", hex::encode_upper(params))?;
                }
                Ok(())
            }
            other => f.write_str(other.kind().name()),
        }
    }
}

/// Renders runs of a repeated byte compactly, e.g. `FF×32`.
fn fmt_mask(mask: &[u8]) -> String {
    match mask.first() {
        Some(&first) if mask.len() > 1 && mask.iter().all(|&b| b == first) => {
            format!("{first:02X}×{}", mask.len())
        }
        _ => hex::encode_upper(mask),
    }
}

/// Node ids selected by a Find Nodes In Range mask, ascending, limited to
/// the addressable range `1..=232`.
pub fn mask_to_nodes(mask: &[u8]) -> Result<Vec<NodeId>, CodecError> {
    if mask.is_empty() {
        return Err(CodecError::EmptyMask);
    }
    let nodes = mask
        .iter()
        .take(MAX_MASK_LEN)
        .enumerate()
        .flat_map(|(byte_idx, &byte)| {
            (0..8u32)
                .filter(move |bit| byte & (1 << bit) != 0)
                .map(move |bit| byte_idx * 8 + bit as usize + 1)
        })
        .take_while(|&id| id <= NodeId::MAX_ADDRESSABLE.0 as usize)
        .map(|id| NodeId(id as u8))
        .collect();
    Ok(nodes)
}
