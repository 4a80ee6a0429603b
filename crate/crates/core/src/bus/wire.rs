//! Length-prefixed JSON frames: a 4-byte big-endian length, then that many
//! bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BusError, MAX_PAYLOAD_BYTES};
use crate::clock::Millis;

/// Payload limit plus room for the frame fields.
pub const MAX_FRAME_BYTES: usize = MAX_PAYLOAD_BYTES + 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Publish,
    Subscribe,
    Deliver,
    Ack,
}

/// One protocol message.
///
/// * `publish`: `topic`, `payload` → `ack` with `seq` and `published_at`.
/// * `subscribe`: `topic` holds comma-separated patterns, `seq` the first
///   sequence to replay → `ack`, then a stream of `deliver` frames.
/// * Failures come back as `ack` with `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub op: Op,
    #[serde(default)]
    pub topic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Frame {
    pub fn new(op: Op, topic: impl Into<String>) -> Self {
        Self {
            op,
            topic: topic.into(),
            seq: None,
            payload: None,
            published_at: None,
            error: None,
        }
    }

    pub fn error(topic: impl Into<String>, err: impl ToString) -> Self {
        Self {
            error: Some(err.to_string()),
            ..Self::new(Op::Ack, topic)
        }
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), BusError> {
    let body = serde_json::to_vec(frame)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(BusError::Protocol(format!("frame of {} bytes", body.len())));
    }
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(&body);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream before a new frame.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, BusError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(BusError::Protocol(format!("frame length {len} exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(serde_json::from_slice(&body)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn frame_round_trip_and_layout() {
        let mut f = Frame::new(Op::Publish, "a/b");
        f.payload = Some(json!({"x": 1}));
        let mut buf = Vec::new();
        write_frame(&mut buf, &f).unwrap();
        let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
        assert_eq!(len, buf.len() - 4);
        let text = std::str::from_utf8(&buf[4..]).unwrap();
        assert!(text.starts_with("{\"op\":\"publish\""));
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), Some(f));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn oversized_length_rejected() {
        let buf = (u32::MAX).to_be_bytes();
        assert!(matches!(read_frame(&mut &buf[..]), Err(BusError::Protocol(_))));
    }
}
