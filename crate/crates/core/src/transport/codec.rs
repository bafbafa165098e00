//! Frame layout: u32 big-endian payload length, u8 message type, payload.
//! Inside the payload integers and floats are little-endian and blobs
//! carry a u64 length prefix.

use super::TransportError;

/// Largest payload accepted from the wire.
pub const MAX_FRAME_LEN: usize = 256 * 1024 * 1024;

const HEADER_LEN: usize = 5;

const TYPE_HELLO: u8 = 1;
const TYPE_GLOBAL_PARAMS: u8 = 2;
const TYPE_CLIENT_UPDATE: u8 = 3;
const TYPE_EVAL_REQUEST: u8 = 4;
const TYPE_SHUTDOWN: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        client_id: u32,
    },
    /// Global parameters as an FFTP blob.
    GlobalParams {
        round: u32,
        blob: Vec<u8>,
    },
    /// Trainable tensors of a fine-tuned model as an FFTP blob.
    ClientUpdateMsg {
        round: u32,
        num_samples: u64,
        blob: Vec<u8>,
        local_loss: f32,
        local_time_ms: u64,
    },
    EvalRequest {
        round: u32,
    },
    Shutdown,
}

impl Message {
    fn type_byte(&self) -> u8 {
        match self {
            Message::Hello { .. } => TYPE_HELLO,
            Message::GlobalParams { .. } => TYPE_GLOBAL_PARAMS,
            Message::ClientUpdateMsg { .. } => TYPE_CLIENT_UPDATE,
            Message::EvalRequest { .. } => TYPE_EVAL_REQUEST,
            Message::Shutdown => TYPE_SHUTDOWN,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::GlobalParams { .. } => "GlobalParams",
            Message::ClientUpdateMsg { .. } => "ClientUpdateMsg",
            Message::EvalRequest { .. } => "EvalRequest",
            Message::Shutdown => "Shutdown",
        }
    }
}

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(blob);
}

pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut payload = Vec::new();
    match m {
        Message::Hello { client_id } => payload.extend_from_slice(&client_id.to_le_bytes()),
        Message::GlobalParams { round, blob } => {
            payload.extend_from_slice(&round.to_le_bytes());
            put_blob(&mut payload, blob);
        }
        Message::ClientUpdateMsg {
            round,
            num_samples,
            blob,
            local_loss,
            local_time_ms,
        } => {
            payload.extend_from_slice(&round.to_le_bytes());
            payload.extend_from_slice(&num_samples.to_le_bytes());
            put_blob(&mut payload, blob);
            payload.extend_from_slice(&local_loss.to_le_bytes());
            payload.extend_from_slice(&local_time_ms.to_le_bytes());
        }
        Message::EvalRequest { round } => payload.extend_from_slice(&round.to_le_bytes()),
        Message::Shutdown => {}
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(m.type_byte());
    frame.extend_from_slice(&payload);
    frame
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    /// The buffer ends inside a frame; retry with more bytes.
    NeedMoreData,
    Protocol(String),
}

impl From<DecodeError> for TransportError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::NeedMoreData => TransportError::Closed("stream ended inside a frame".into()),
            DecodeError::Protocol(m) => TransportError::Protocol(m),
        }
    }
}

struct Payload<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> Payload<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            DecodeError::Protocol(format!("{} payload too short at byte {}", self.kind, self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn blob(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u64()?;
        let len = usize::try_from(len)
            .map_err(|_| DecodeError::Protocol(format!("{} blob length {len} overflows", self.kind)))?;
        Ok(self.take(len)?.to_vec())
    }

    fn finish(self) -> Result<(), DecodeError> {
        if self.pos != self.bytes.len() {
            return Err(DecodeError::Protocol(format!(
                "{} payload has {} trailing bytes",
                self.kind,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Decodes the first frame of `bytes`. Returns the message and the number
/// of bytes it occupied; anything after that belongs to later frames.
pub fn decode_message(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::NeedMoreData);
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(DecodeError::Protocol(format!(
            "frame length {len} exceeds the {MAX_FRAME_LEN}-byte limit"
        )));
    }
    let Some(&ty) = bytes.get(4) else {
        return Err(DecodeError::NeedMoreData);
    };
    let kind = match ty {
        TYPE_HELLO => "Hello",
        TYPE_GLOBAL_PARAMS => "GlobalParams",
        TYPE_CLIENT_UPDATE => "ClientUpdateMsg",
        TYPE_EVAL_REQUEST => "EvalRequest",
        TYPE_SHUTDOWN => "Shutdown",
        other => return Err(DecodeError::Protocol(format!("unknown message type {other}"))),
    };
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(DecodeError::NeedMoreData);
    }
    let mut p = Payload {
        bytes: &bytes[HEADER_LEN..total],
        pos: 0,
        kind,
    };
    let msg = match ty {
        TYPE_HELLO => Message::Hello { client_id: p.u32()? },
        TYPE_GLOBAL_PARAMS => Message::GlobalParams {
            round: p.u32()?,
            blob: p.blob()?,
        },
        TYPE_CLIENT_UPDATE => Message::ClientUpdateMsg {
            round: p.u32()?,
            num_samples: p.u64()?,
            blob: p.blob()?,
            local_loss: p.f32()?,
            local_time_ms: p.u64()?,
        },
        TYPE_EVAL_REQUEST => Message::EvalRequest { round: p.u32()? },
        _ => Message::Shutdown,
    };
    p.finish()?;
    Ok((msg, total))
}

/// Reassembles frames from arbitrarily fragmented input.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, or `None` until more bytes arrive.
    pub fn next_message(&mut self) -> Result<Option<Message>, TransportError> {
        match decode_message(&self.buf) {
            Ok((m, used)) => {
                self.buf.drain(..used);
                Ok(Some(m))
            }
            Err(DecodeError::NeedMoreData) => Ok(None),
            Err(DecodeError::Protocol(e)) => Err(TransportError::Protocol(e)),
        }
    }

    /// Bytes received but not yet consumed by a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
