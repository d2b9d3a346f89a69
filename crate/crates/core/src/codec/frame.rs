use super::{checksum, Command, CommandTable, CodecError, FrameControl, HeaderType, HomeId, NodeId, RouteHeader};

/// Bytes before the optional route header and the command payload:
/// HomeID(4) src(1) ctrl(2) length(1) dst(1).
pub const HEADER_LEN: usize = 9;
pub const MIN_FRAME_LEN: usize = HEADER_LEN + 1;
pub const MAX_FRAME_LEN: usize = 64;

const LENGTH_OFFSET: usize = 7;

/// One over-the-air MPDU.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub home_id: HomeId,
    pub src: NodeId,
    pub ctrl: FrameControl,
    pub dst: NodeId,
    /// Present exactly when `ctrl.routed` is set.
    pub route: Option<RouteHeader>,
    pub command: Command,
}

impl Frame {
    /// Singlecast frame with an acknowledgement requested.
    pub fn singlecast(home_id: HomeId, src: NodeId, dst: NodeId, command: Command) -> Self {
        Self {
            home_id,
            src,
            ctrl: FrameControl::singlecast(0),
            dst,
            route: None,
            command,
        }
    }

    /// Broadcast frame (singlecast header, destination 255, no ack).
    pub fn broadcast(home_id: HomeId, src: NodeId, command: Command) -> Self {
        Self {
            ctrl: FrameControl {
                ack_requested: false,
                ..FrameControl::singlecast(0)
            },
            ..Self::singlecast(home_id, src, NodeId::BROADCAST, command)
        }
    }

    pub fn ack(home_id: HomeId, src: NodeId, dst: NodeId, seq: u8) -> Self {
        Self {
            home_id,
            src,
            ctrl: FrameControl::ack(seq),
            dst,
            route: None,
            command: Command::Ack,
        }
    }

    /// Attaches a source route and sets the routed flag.
    pub fn routed_via(mut self, route: RouteHeader) -> Self {
        self.ctrl.routed = true;
        self.route = Some(route);
        self
    }

    pub fn is_multicast(&self) -> bool {
        self.ctrl.header_type == HeaderType::Multicast
    }

    pub fn is_self_addressed(&self) -> bool {
        self.src == self.dst
    }

    /// Whether `node` is the final recipient of this frame on its current leg.
    pub fn is_final_for(&self, node: NodeId) -> bool {
        let on_last_leg = self.route.as_ref().map_or(true, RouteHeader::is_final_leg);
        on_last_leg && (self.dst == node || self.dst.is_broadcast())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.route.as_ref().map_or(0, RouteHeader::encoded_len) + self.command.encoded_len() + 1
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.ctrl.seq > 0x0F {
            return Err(CodecError::InconsistentFrame("sequence number exceeds 4 bits"));
        }
        match (&self.route, self.ctrl.routed) {
            (Some(route), true) => route.validate()?,
            (None, false) => {}
            _ => return Err(CodecError::InconsistentFrame("routed flag and route header disagree")),
        }
        if self.command == Command::Ack && self.ctrl.header_type != HeaderType::Ack {
            return Err(CodecError::EmptyPayloadOnNonAck);
        }
        if let Command::FindNodesInRange { mask } = &self.command {
            if mask.is_empty() {
                return Err(CodecError::EmptyMask);
            }
        }
        let len = self.encoded_len();
        if len > MAX_FRAME_LEN {
            return Err(CodecError::OversizeFrame { len });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        self.encode_with(&CommandTable::default())
    }

    pub fn encode_with(&self, table: &CommandTable) -> Result<Vec<u8>, CodecError> {
        self.validate()?;
        let len = self.encoded_len();
        let mut out = Vec::with_capacity(len);
        out.extend(self.home_id.to_bytes());
        out.push(self.src.0);
        out.extend(self.ctrl.to_bytes());
        out.push(len as u8);
        out.push(self.dst.0);
        if let Some(route) = &self.route {
            route.write(&mut out);
        }
        self.command.write(table, &mut out);
        out.push(checksum(&out));
        debug_assert_eq!(out.len(), len);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::decode_with(bytes, &CommandTable::default())
    }

    /// Decodes one MPDU.
    ///
    /// The checksum is verified before the length field, so any single-bit
    /// corruption surfaces as [`CodecError::BadChecksum`].
    pub fn decode_with(bytes: &[u8], table: &CommandTable) -> Result<Self, CodecError> {
        if bytes.len() < MIN_FRAME_LEN {
            return Err(CodecError::TooShort { len: bytes.len() });
        }
        let (body, &[found]) = bytes.split_at(bytes.len() - 1) else {
            unreachable!("length checked above");
        };
        let expected = checksum(body);
        if expected != found {
            return Err(CodecError::BadChecksum { expected, found });
        }
        let declared = bytes[LENGTH_OFFSET] as usize;
        if declared != bytes.len() {
            return Err(CodecError::LengthMismatch {
                declared,
                actual: bytes.len(),
            });
        }
        if bytes.len() > MAX_FRAME_LEN {
            return Err(CodecError::OversizeFrame { len: bytes.len() });
        }
        let home_id = HomeId::from_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        let src = NodeId(bytes[4]);
        let ctrl = FrameControl::from_bytes(bytes[5], bytes[6])?;
        let dst = NodeId(bytes[8]);
        let mut payload = &body[HEADER_LEN..];
        let route = if ctrl.routed {
            let (route, used) = RouteHeader::read(payload)?;
            payload = &payload[used..];
            Some(route)
        } else {
            None
        };
        let command = match (ctrl.header_type, payload.is_empty()) {
            (HeaderType::Ack, true) => Command::Ack,
            _ => Command::parse_with(payload, table)?,
        };
        Ok(Self {
            home_id,
            src,
            ctrl,
            dst,
            route,
            command,
        })
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, CodecError> {
    frame.encode()
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, CodecError> {
    Frame::decode(bytes)
}
