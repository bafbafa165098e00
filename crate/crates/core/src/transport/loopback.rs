use std::collections::HashMap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{encode_message, Channel, FrameReader, Listener, Message, TransportError};

/// Registry of named in-process endpoints.
#[derive(Debug, Clone, Default)]
pub struct LoopbackNetwork {
    endpoints: Arc<Mutex<HashMap<String, Sender<LoopbackChannel>>>>,
}

impl LoopbackNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `name`; the endpoint disappears when the listener drops.
    pub fn listen(&self, name: &str) -> Result<LoopbackListener, TransportError> {
        let mut map = self.endpoints.lock().expect("endpoint registry poisoned");
        if map.contains_key(name) {
            return Err(TransportError::Protocol(format!("endpoint {name} already in use")));
        }
        let (tx, rx) = mpsc::channel();
        map.insert(name.to_string(), tx);
        Ok(LoopbackListener {
            name: name.to_string(),
            incoming: rx,
            network: self.clone(),
        })
    }

    pub fn connect(&self, name: &str) -> Result<LoopbackChannel, TransportError> {
        let map = self.endpoints.lock().expect("endpoint registry poisoned");
        let listener = map
            .get(name)
            .ok_or_else(|| TransportError::Unreachable(format!("loopback endpoint {name}")))?;
        let (client, server) = LoopbackChannel::pair();
        listener
            .send(server)
            .map_err(|_| TransportError::Unreachable(format!("loopback endpoint {name}")))?;
        Ok(client)
    }
}

#[derive(Debug)]
pub struct LoopbackListener {
    name: String,
    incoming: Receiver<LoopbackChannel>,
    network: LoopbackNetwork,
}

impl Listener for LoopbackListener {
    fn accept(&mut self, timeout: Duration) -> Result<Box<dyn Channel>, TransportError> {
        match self.incoming.recv_timeout(timeout) {
            Ok(ch) => Ok(Box::new(ch)),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout(format!(
                "no client connected to {} within {timeout:?}",
                self.name
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(TransportError::Closed(format!("endpoint {} unregistered", self.name)))
            }
        }
    }
}

impl Drop for LoopbackListener {
    fn drop(&mut self) {
        if let Ok(mut map) = self.network.endpoints.lock() {
            map.remove(&self.name);
        }
    }
}

/// One end of an in-process byte pipe carrying encoded frames.
#[derive(Debug)]
pub struct LoopbackChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    reader: FrameReader,
}

impl LoopbackChannel {
    /// Two connected ends.
    pub fn pair() -> (LoopbackChannel, LoopbackChannel) {
        let (a_tx, b_rx) = mpsc::channel();
        let (b_tx, a_rx) = mpsc::channel();
        (
            LoopbackChannel {
                tx: a_tx,
                rx: a_rx,
                reader: FrameReader::new(),
            },
            LoopbackChannel {
                tx: b_tx,
                rx: b_rx,
                reader: FrameReader::new(),
            },
        )
    }
}

impl Channel for LoopbackChannel {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.tx
            .send(encode_message(msg))
            .map_err(|_| TransportError::Closed("loopback peer dropped".into()))
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        loop {
            if let Some(m) = self.reader.next_message()? {
                return Ok(m);
            }
            let chunk = self
                .rx
                .recv()
                .map_err(|_| TransportError::Closed("loopback peer dropped".into()))?;
            self.reader.push(&chunk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connect_accept_exchange() {
        let net = LoopbackNetwork::new();
        let mut l = net.listen("srv").unwrap();
        let mut c = net.connect("srv").unwrap();
        let mut s = l.accept(Duration::from_millis(100)).unwrap();
        c.send(&Message::Hello { client_id: 3 }).unwrap();
        assert_eq!(s.recv().unwrap(), Message::Hello { client_id: 3 });
        s.send(&Message::Shutdown).unwrap();
        assert_eq!(c.recv().unwrap(), Message::Shutdown);
    }

    #[test]
    fn connect_after_listener_gone_fails() {
        let net = LoopbackNetwork::new();
        drop(net.listen("srv").unwrap());
        assert!(matches!(net.connect("srv"), Err(TransportError::Unreachable(_))));
        assert!(net.connect("other").is_err());
    }

    #[test]
    fn accept_times_out() {
        let net = LoopbackNetwork::new();
        let mut l = net.listen("srv").unwrap();
        assert!(matches!(
            l.accept(Duration::from_millis(10)),
            Err(TransportError::Timeout(_))
        ));
    }

    #[test]
    fn duplicate_endpoint_rejected() {
        let net = LoopbackNetwork::new();
        let _l = net.listen("srv").unwrap();
        assert!(net.listen("srv").is_err());
    }

    #[test]
    fn peer_drop_surfaces_as_closed() {
        let (mut a, b) = LoopbackChannel::pair();
        drop(b);
        assert!(matches!(a.recv(), Err(TransportError::Closed(_))));
        assert!(a.send(&Message::Shutdown).is_err());
    }
}
