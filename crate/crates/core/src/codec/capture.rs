//! Text capture files: one frame per line, `<t_us> <hex MPDU>`, with `#`
//! starting a comment line.

use std::fmt::Write as _;

use super::{CodecError, CommandTable, Frame};

/// A raw capture line, not yet decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureLine {
    pub line_no: usize,
    pub t_us: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub t_us: u64,
    pub frame: Frame,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CaptureError {
    #[error("line {line_no}: expected `<t_us> <hex>`")]
    Syntax { line_no: usize },
    #[error("line {line_no}: bad timestamp `{text}`")]
    BadTimestamp { line_no: usize, text: String },
    #[error("line {line_no}: bad hex: {source}")]
    BadHex {
        line_no: usize,
        source: hex::FromHexError,
    },
    #[error("line {line_no}: {source}")]
    Frame { line_no: usize, source: CodecError },
}

impl CaptureError {
    pub fn line_no(&self) -> usize {
        match self {
            Self::Syntax { line_no }
            | Self::BadTimestamp { line_no, .. }
            | Self::BadHex { line_no, .. }
            | Self::Frame { line_no, .. } => *line_no,
        }
    }
}

pub fn read_capture(text: &str) -> Vec<Result<CaptureLine, CaptureError>> {
    text.lines()
        .enumerate()
        .filter_map(|(idx, raw)| {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                None
            } else {
                Some(parse_line(idx + 1, line))
            }
        })
        .collect()
}

fn parse_line(line_no: usize, line: &str) -> Result<CaptureLine, CaptureError> {
    let mut fields = line.split_whitespace();
    let (Some(t), Some(hex_text), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(CaptureError::Syntax { line_no });
    };
    let t_us = t.parse().map_err(|_| CaptureError::BadTimestamp {
        line_no,
        text: t.to_string(),
    })?;
    let bytes = hex::decode(hex_text).map_err(|source| CaptureError::BadHex { line_no, source })?;
    Ok(CaptureLine {
        line_no,
        t_us,
        bytes,
    })
}

/// Reads and decodes every frame line; failures are reported per line.
pub fn decode_capture(text: &str, table: &CommandTable) -> Vec<Result<CaptureRecord, CaptureError>> {
    read_capture(text)
        .into_iter()
        .map(|line| {
            let line = line?;
            let frame = Frame::decode_with(&line.bytes, table).map_err(|source| CaptureError::Frame {
                line_no: line.line_no,
                source,
            })?;
            Ok(CaptureRecord {
                t_us: line.t_us,
                frame,
            })
        })
        .collect()
}

pub fn write_capture<'a, I>(records: I, table: &CommandTable) -> Result<String, CodecError>
where
    I: IntoIterator<Item = &'a CaptureRecord>,
{
    let mut out = String::from("# t_us mpdu\n");
    for record in records {
        let bytes = record.frame.encode_with(table)?;
        writeln!(out, "{} {}", record.t_us, hex::encode_upper(bytes)).expect("writing to a String");
    }
    Ok(out)
}
