use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::{encode_message, Channel, FrameReader, Listener, Message, TransportError};

const POLL_INTERVAL: Duration = Duration::from_millis(10);

#[derive(Debug)]
pub struct TcpChannel {
    stream: TcpStream,
    reader: FrameReader,
    buf: Vec<u8>,
}

impl TcpChannel {
    fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        Ok(TcpChannel {
            stream,
            reader: FrameReader::new(),
            buf: vec![0; 64 * 1024],
        })
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.stream.write_all(&encode_message(msg))?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        loop {
            if let Some(m) = self.reader.next_message()? {
                return Ok(m);
            }
            let n = match self.stream.read(&mut self.buf) {
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if n == 0 {
                return Err(TransportError::Closed(if self.reader.pending() == 0 {
                    "peer closed the connection".into()
                } else {
                    "peer closed the connection inside a frame".into()
                }));
            }
            self.reader.push(&self.buf[..n]);
        }
    }
}

/// Listening TCP socket.
#[derive(Debug)]
pub struct TcpServer {
    listener: TcpListener,
}

impl TcpServer {
    pub fn bind(addr: &str) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(TcpServer { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.listener.local_addr()?)
    }
}

impl Listener for TcpServer {
    fn accept(&mut self, timeout: Duration) -> Result<Box<dyn Channel>, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            match self.listener.accept() {
                Ok((stream, _)) => return Ok(Box::new(TcpChannel::new(stream)?)),
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Timeout(format!(
                            "no client connected within {timeout:?}"
                        )));
                    }
                    std::thread::sleep(POLL_INTERVAL);
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

pub fn connect_tcp(addr: &str) -> Result<TcpChannel, TransportError> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|_| TransportError::Unreachable(addr.to_string()))?
        .collect();
    let stream = TcpStream::connect(&addrs[..])
        .map_err(|e| TransportError::Unreachable(format!("{addr} ({e})")))?;
    TcpChannel::new(stream)
}

/// Keeps trying until the server accepts or `timeout` passes.
pub fn connect_tcp_retry(addr: &str, timeout: Duration) -> Result<TcpChannel, TransportError> {
    let deadline = Instant::now() + timeout;
    loop {
        match connect_tcp(addr) {
            Ok(c) => return Ok(c),
            Err(e) if Instant::now() >= deadline => return Err(e),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tcp_exchange_and_close() {
        let mut server = TcpServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap().to_string();
        let client = std::thread::spawn(move || {
            let mut c = connect_tcp(&addr).unwrap();
            c.send(&Message::Hello { client_id: 2 }).unwrap();
            let blob: Vec<u8> = (0..200_000u32).map(|v| v as u8).collect();
            c.send(&Message::GlobalParams { round: 1, blob }).unwrap();
            c.recv().unwrap()
        });
        let mut s = server.accept(Duration::from_secs(5)).unwrap();
        assert_eq!(s.recv().unwrap(), Message::Hello { client_id: 2 });
        match s.recv().unwrap() {
            Message::GlobalParams { round, blob } => {
                assert_eq!(round, 1);
                assert_eq!(blob.len(), 200_000);
                assert_eq!(blob[199_999], (199_999u32 as u8));
            }
            other => panic!("unexpected {other:?}"),
        }
        s.send(&Message::Shutdown).unwrap();
        assert_eq!(client.join().unwrap(), Message::Shutdown);
        assert!(matches!(s.recv(), Err(TransportError::Closed(_))));
    }

    #[test]
    fn accept_times_out() {
        let mut server = TcpServer::bind("127.0.0.1:0").unwrap();
        let t = Instant::now();
        assert!(matches!(
            server.accept(Duration::from_millis(50)),
            Err(TransportError::Timeout(_))
        ));
        assert!(t.elapsed() >= Duration::from_millis(50));
    }

    #[test]
    fn connect_after_server_gone_fails() {
        let server = TcpServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap().to_string();
        drop(server);
        assert!(matches!(connect_tcp(&addr), Err(TransportError::Unreachable(_))));
    }
}
