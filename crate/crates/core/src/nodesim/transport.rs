//! Length-prefixed frames (`len:u32le | payload`) over either an in-process
//! channel (`local:<name>`) or a loopback TCP socket (`tcp:127.0.0.1:<port>`).
//! Non-loopback addresses and host names are refused.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::net::{IpAddr, SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

pub const MAX_FRAME: usize = 16 << 20;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("malformed endpoint {0:?} (expected local:<name> or tcp:127.0.0.1:<port>)")]
    BadEndpoint(String),
    #[error("refusing non-loopback address {0}")]
    NonLoopback(String),
    #[error("connection refused by {0}")]
    Refused(String),
    #[error("endpoint {0} is already bound")]
    AddressInUse(String),
    #[error("timed out waiting for the remote side")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl TransportError {
    /// Stable short name, free of endpoint details.
    pub fn kind(&self) -> &'static str {
        match self {
            TransportError::BadEndpoint(_) => "bad-endpoint",
            TransportError::NonLoopback(_) => "non-loopback",
            TransportError::Refused(_) => "refused",
            TransportError::AddressInUse(_) => "address-in-use",
            TransportError::Timeout => "timeout",
            TransportError::Closed => "closed",
            TransportError::FrameTooLarge(_) => "frame-too-large",
            TransportError::Protocol(_) => "protocol",
            TransportError::Io(_) => "io",
        }
    }
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
            io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => {
                TransportError::Closed
            }
            _ => TransportError::Io(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Local(String),
    Tcp(SocketAddr),
}

impl FromStr for Endpoint {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(name) = s.strip_prefix("local:") {
            if name.is_empty() {
                return Err(TransportError::BadEndpoint(s.into()));
            }
            return Ok(Endpoint::Local(name.into()));
        }
        let Some(rest) = s.strip_prefix("tcp:") else {
            return Err(TransportError::BadEndpoint(s.into()));
        };
        let addr: SocketAddr = rest.parse().map_err(|_| match rest.rsplit_once(':') {
            Some((host, _)) if host.parse::<IpAddr>().is_err() => TransportError::NonLoopback(host.into()),
            _ => TransportError::BadEndpoint(s.into()),
        })?;
        if !addr.ip().is_loopback() {
            return Err(TransportError::NonLoopback(addr.ip().to_string()));
        }
        Ok(Endpoint::Tcp(addr))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Local(n) => write!(f, "local:{n}"),
            Endpoint::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

/// A bidirectional frame stream.
pub trait Conn: Send {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Vec<u8>, TransportError>;
}

struct LocalConn {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

impl Conn for LocalConn {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if frame.len() > MAX_FRAME {
            return Err(TransportError::FrameTooLarge(frame.len()));
        }
        self.tx.send(frame.to_vec()).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(f) => Ok(f),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

fn local_pair(timeout: Duration) -> (LocalConn, LocalConn) {
    let (a_tx, a_rx) = mpsc::channel();
    let (b_tx, b_rx) = mpsc::channel();
    (LocalConn { tx: a_tx, rx: b_rx, timeout }, LocalConn { tx: b_tx, rx: a_rx, timeout })
}

struct TcpConn(TcpStream);

impl Conn for TcpConn {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if frame.len() > MAX_FRAME {
            return Err(TransportError::FrameTooLarge(frame.len()));
        }
        self.0.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.0.write_all(frame)?;
        self.0.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut len = [0u8; 4];
        self.0.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len) as usize;
        if len > MAX_FRAME {
            return Err(TransportError::FrameTooLarge(len));
        }
        let mut buf = vec![0u8; len];
        self.0.read_exact(&mut buf)?;
        Ok(buf)
    }
}

type Registry = Mutex<HashMap<String, Sender<LocalConn>>>;

fn registry() -> &'static Registry {
    static R: OnceLock<Registry> = OnceLock::new();
    R.get_or_init(Default::default)
}

/// Accepting side of an endpoint.
pub struct Listener(Bound);

enum Bound {
    Local { name: String, incoming: Receiver<LocalConn> },
    Tcp(TcpListener),
}

impl Listener {
    pub fn bind(endpoint: &Endpoint) -> Result<Listener, TransportError> {
        match endpoint {
            Endpoint::Local(name) => {
                let mut reg = registry().lock().unwrap();
                if reg.contains_key(name) {
                    return Err(TransportError::AddressInUse(endpoint.to_string()));
                }
                let (tx, rx) = mpsc::channel();
                reg.insert(name.clone(), tx);
                Ok(Listener(Bound::Local { name: name.clone(), incoming: rx }))
            }
            Endpoint::Tcp(addr) => {
                if !addr.ip().is_loopback() {
                    return Err(TransportError::NonLoopback(addr.ip().to_string()));
                }
                let l = TcpListener::bind(addr).map_err(|e| match e.kind() {
                    io::ErrorKind::AddrInUse => TransportError::AddressInUse(endpoint.to_string()),
                    _ => e.into(),
                })?;
                l.set_nonblocking(true)?;
                Ok(Listener(Bound::Tcp(l)))
            }
        }
    }

    /// The bound endpoint, with any ephemeral port resolved.
    pub fn endpoint(&self) -> Endpoint {
        match &self.0 {
            Bound::Local { name, .. } => Endpoint::Local(name.clone()),
            Bound::Tcp(l) => Endpoint::Tcp(l.local_addr().expect("bound listener has an address")),
        }
    }

    /// Waits up to `wait` for a connection.
    pub fn accept_timeout(&self, wait: Duration) -> Result<Option<Box<dyn Conn>>, TransportError> {
        match &self.0 {
            Bound::Local { incoming, .. } => match incoming.recv_timeout(wait) {
                Ok(c) => Ok(Some(Box::new(c))),
                Err(RecvTimeoutError::Timeout) => Ok(None),
                Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
            },
            Bound::Tcp(l) => match l.accept() {
                Ok((s, _)) => {
                    s.set_nonblocking(false)?;
                    s.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
                    s.set_write_timeout(Some(DEFAULT_TIMEOUT))?;
                    s.set_nodelay(true)?;
                    Ok(Some(Box::new(TcpConn(s))))
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    std::thread::sleep(wait.min(Duration::from_millis(5)));
                    Ok(None)
                }
                Err(e) => Err(e.into()),
            },
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        if let Bound::Local { name, .. } = &self.0 {
            registry().lock().unwrap().remove(name);
        }
    }
}

/// Connects to an endpoint; a missing listener surfaces as `Refused`.
pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Box<dyn Conn>, TransportError> {
    match endpoint {
        Endpoint::Local(name) => {
            let reg = registry().lock().unwrap();
            let acceptor = reg.get(name).ok_or_else(|| TransportError::Refused(endpoint.to_string()))?;
            let (client, server) = local_pair(timeout);
            acceptor.send(server).map_err(|_| TransportError::Refused(endpoint.to_string()))?;
            Ok(Box::new(client))
        }
        Endpoint::Tcp(addr) => {
            if !addr.ip().is_loopback() {
                return Err(TransportError::NonLoopback(addr.ip().to_string()));
            }
            let s = TcpStream::connect_timeout(addr, timeout).map_err(|e| match e.kind() {
                io::ErrorKind::ConnectionRefused => TransportError::Refused(endpoint.to_string()),
                _ => e.into(),
            })?;
            s.set_read_timeout(Some(timeout))?;
            s.set_write_timeout(Some(timeout))?;
            s.set_nodelay(true)?;
            Ok(Box::new(TcpConn(s)))
        }
    }
}
