//! Framed server/client messages over an in-process loopback or TCP.
//!
//! Both carriers move encoded frames as bytes and reassemble them with
//! [`FrameReader`], so they share one ordered, message-preserving contract.

mod codec;
mod loopback;
mod tcp;

pub use codec::{decode_message, encode_message, DecodeError, FrameReader, Message, MAX_FRAME_LEN};
pub use loopback::{LoopbackChannel, LoopbackListener, LoopbackNetwork};
pub use tcp::{connect_tcp, connect_tcp_retry, TcpChannel, TcpServer};

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("connection closed: {0}")]
    Closed(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("cannot connect to {0}")]
    Unreachable(String),
}

/// Ordered, reliable, message-boundary-preserving duplex link.
pub trait Channel: Send {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    /// Blocks until the next message arrives or the peer goes away.
    fn recv(&mut self) -> Result<Message, TransportError>;
}

impl Channel for Box<dyn Channel> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        (**self).recv()
    }
}

/// Server side of a carrier.
pub trait Listener {
    /// Waits up to `timeout` for the next client connection.
    fn accept(&mut self, timeout: Duration) -> Result<Box<dyn Channel>, TransportError>;
}
