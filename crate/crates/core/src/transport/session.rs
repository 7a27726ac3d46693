//! Framed sessions over a reliable byte stream, plus the HELLO/CONFIG
//! handshake and per-stream ordering checks.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{
    decode_body, encode_message, parse_header, Hello, Message, Role, SessionConfig, WireError,
    HEADER_LEN, PROTOCOL_VERSION,
};

/// ERROR-frame codes raised by the session layer (wire codes are 1..=7).
pub mod error_code {
    pub const VERSION_MISMATCH: u16 = 100;
    pub const ROLE_MISMATCH: u16 = 101;
    pub const CODEC_MISMATCH: u16 = 102;
    pub const CONFIG_MISMATCH: u16 = 103;
    pub const ORDERING: u16 = 104;
    pub const UNEXPECTED: u16 = 105;
    pub const PROCESSING: u16 = 106;
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("handshake with {peer}: {reason}")]
    Handshake { peer: String, reason: String },
    #[error("{peer} reported error {code}: {text}")]
    Remote { peer: String, code: u16, text: String },
    #[error("connection to {peer} lost; last segment seen: {}", last_t.map_or("none".to_string(), |t| t.to_string()))]
    ConnectionLost { peer: String, last_t: Option<u64> },
    #[error("protocol violation from {peer}: {reason}")]
    Protocol { peer: String, reason: String },
    #[error("could not reach {addr} within {seconds:.1} s: {last_error}")]
    ConnectTimeout {
        addr: String,
        seconds: f64,
        last_error: String,
    },
}

impl SessionError {
    /// Code sent in the ERROR frame that reports this condition.
    pub fn wire_code(&self) -> u16 {
        match self {
            Self::Wire(w) => w.code(),
            Self::Protocol { .. } => error_code::ORDERING,
            _ => error_code::UNEXPECTED,
        }
    }
}

/// One framed, bidirectional connection.
pub struct Link {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    peer: String,
    last_t: Option<u64>,
    bytes_sent: u64,
    bytes_received: u64,
}

impl Link {
    pub fn new(reader: Box<dyn Read + Send>, writer: Box<dyn Write + Send>, peer: impl Into<String>) -> Self {
        Self {
            reader,
            writer,
            peer: peer.into(),
            last_t: None,
            bytes_sent: 0,
            bytes_received: 0,
        }
    }

    pub fn tcp(stream: TcpStream, peer: impl Into<String>) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(Box::new(io::BufReader::new(reader)), Box::new(stream), peer))
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }

    pub fn set_peer(&mut self, peer: impl Into<String>) {
        self.peer = peer.into();
    }

    /// Highest segment index received so far.
    pub fn last_t(&self) -> Option<u64> {
        self.last_t
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn send(&mut self, m: &Message) -> Result<Vec<u8>, SessionError> {
        let frame = encode_message(m)?;
        self.send_frame(&frame)?;
        Ok(frame)
    }

    pub fn send_frame(&mut self, frame: &[u8]) -> Result<(), SessionError> {
        let lost = |e: io::Error, link: &Self| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => {
                SessionError::ConnectionLost {
                    peer: link.peer.clone(),
                    last_t: link.last_t,
                }
            }
            _ => SessionError::Io(e),
        };
        self.writer.write_all(frame).map_err(|e| lost(e, self))?;
        self.writer.flush().map_err(|e| lost(e, self))?;
        self.bytes_sent += frame.len() as u64;
        Ok(())
    }

    /// Reads one frame, returning the message and its raw bytes.
    pub fn recv_frame(&mut self) -> Result<(Message, Vec<u8>), SessionError> {
        let mut frame = vec![0u8; HEADER_LEN];
        self.read_exact(&mut frame)?;
        let header = parse_header(&frame)?;
        frame.resize(HEADER_LEN + header.payload_len, 0);
        self.read_exact(&mut frame[HEADER_LEN..])?;
        let m = decode_body(header, &frame[HEADER_LEN..])?;
        if let Some(t) = m.segment_index() {
            self.last_t = Some(self.last_t.map_or(t, |l| l.max(t)));
        }
        self.bytes_received += frame.len() as u64;
        Ok((m, frame))
    }

    pub fn recv(&mut self) -> Result<Message, SessionError> {
        Ok(self.recv_frame()?.0)
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), SessionError> {
        self.reader.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => {
                SessionError::ConnectionLost {
                    peer: self.peer.clone(),
                    last_t: self.last_t,
                }
            }
            _ => SessionError::Io(e),
        })
    }

    /// Best-effort ERROR frame; the session is failing anyway.
    pub fn send_error(&mut self, code: u16, text: &str) {
        let _ = self.send(&Message::Error {
            code,
            text: text.to_owned(),
        });
    }
}

struct PipeReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

struct PipeWriter {
    tx: Sender<Vec<u8>>,
}

impl Write for PipeWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.tx
            .send(data.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = mpsc::channel();
    (
        PipeWriter { tx },
        PipeReader {
            rx,
            buf: Vec::new(),
            pos: 0,
        },
    )
}

/// Two connected in-memory links carrying the same byte stream a socket would.
pub fn loopback_pair(a_name: &str, b_name: &str) -> (Link, Link) {
    let (a_tx, b_rx) = pipe();
    let (b_tx, a_rx) = pipe();
    (
        Link::new(Box::new(a_rx), Box::new(a_tx), b_name),
        Link::new(Box::new(b_rx), Box::new(b_tx), a_name),
    )
}

/// Connects to `addr`, retrying every `interval` until `timeout` elapses.
pub fn connect_with_retry(addr: &str, timeout: Duration, interval: Duration) -> Result<TcpStream, SessionError> {
    let start = Instant::now();
    let mut last_error = String::from("no address resolved");
    loop {
        match addr.to_socket_addrs() {
            Ok(addrs) => {
                for a in addrs {
                    let remaining = timeout.saturating_sub(start.elapsed()).max(Duration::from_millis(10));
                    match TcpStream::connect_timeout(&a, remaining) {
                        Ok(s) => return Ok(s),
                        Err(e) => last_error = e.to_string(),
                    }
                }
            }
            Err(e) => last_error = e.to_string(),
        }
        if start.elapsed() >= timeout {
            return Err(SessionError::ConnectTimeout {
                addr: addr.to_owned(),
                seconds: timeout.as_secs_f64(),
                last_error,
            });
        }
        std::thread::sleep(interval);
    }
}

fn check_hello(link: &mut Link, local: &Hello, got: &Hello, expected: Role) -> Result<(), SessionError> {
    let fail = |link: &mut Link, code: u16, reason: String| {
        link.send_error(code, &reason);
        Err(SessionError::Handshake {
            peer: link.peer.clone(),
            reason,
        })
    };
    if got.version != PROTOCOL_VERSION {
        return fail(
            link,
            error_code::VERSION_MISMATCH,
            format!("protocol version {} (expected {PROTOCOL_VERSION})", got.version),
        );
    }
    if got.role != expected {
        return fail(
            link,
            error_code::ROLE_MISMATCH,
            format!("peer is {} (expected {expected})", got.role),
        );
    }
    link.set_peer(got.role.name());
    if got.codec_digest != local.codec_digest {
        return fail(
            link,
            error_code::CODEC_MISMATCH,
            format!(
                "codec digest {:016x} from {} differs from local {:016x} at {}",
                got.codec_digest, got.role, local.codec_digest, local.role
            ),
        );
    }
    Ok(())
}

fn expect_hello(link: &mut Link) -> Result<Hello, SessionError> {
    match link.recv()? {
        Message::Hello(h) => Ok(h),
        Message::Error { code, text } => Err(SessionError::Remote {
            peer: link.peer.clone(),
            code,
            text,
        }),
        other => {
            let reason = format!("expected HELLO, got {}", other.name());
            link.send_error(error_code::UNEXPECTED, &reason);
            Err(SessionError::Handshake {
                peer: link.peer.clone(),
                reason,
            })
        }
    }
}

/// Connecting side: send HELLO, check the reply, then check the listener's CONFIG.
pub fn handshake_connect(
    link: &mut Link,
    local: Hello,
    expected_peer: Role,
    config: &SessionConfig,
) -> Result<Hello, SessionError> {
    link.send(&Message::Hello(local))?;
    let peer = expect_hello(link)?;
    check_hello(link, &local, &peer, expected_peer)?;
    match link.recv()? {
        Message::Config(c) if c == *config => Ok(peer),
        Message::Config(c) => {
            let reason = format!("configuration differs: peer {c:?}, local {config:?}");
            link.send_error(error_code::CONFIG_MISMATCH, &reason);
            Err(SessionError::Handshake {
                peer: link.peer.clone(),
                reason,
            })
        }
        Message::Error { code, text } => Err(SessionError::Remote {
            peer: link.peer.clone(),
            code,
            text,
        }),
        other => Err(SessionError::Handshake {
            peer: link.peer.clone(),
            reason: format!("expected CONFIG, got {}", other.name()),
        }),
    }
}

/// Listening side: check the connector's HELLO, reply, then send CONFIG.
pub fn handshake_accept(
    link: &mut Link,
    local: Hello,
    expected_peer: Role,
    config: &SessionConfig,
) -> Result<Hello, SessionError> {
    let peer = expect_hello(link)?;
    check_hello(link, &local, &peer, expected_peer)?;
    link.send(&Message::Hello(local))?;
    link.send(&Message::Config(*config))?;
    Ok(peer)
}

/// Enforces per-stream ordering: SEGMENT_META indices are gapless from 0 and
/// each data message belongs to the most recent non-silent meta.
#[derive(Debug, Default, Clone)]
pub struct OrderGuard {
    meta: Option<(u64, bool)>,
    data_seen: bool,
}

impl OrderGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, m: &Message) -> Result<(), String> {
        match m {
            Message::SegmentMeta(meta) => {
                let expected = self.meta.map_or(0, |(t, _)| t + 1);
                if meta.t != expected {
                    return Err(format!("SEGMENT_META t={} but expected t={expected}", meta.t));
                }
                if let Some((prev, silent)) = self.meta {
                    if !silent && !self.data_seen {
                        return Err(format!("segment {prev} advanced past without its data"));
                    }
                }
                self.meta = Some((meta.t, meta.silent));
                self.data_seen = false;
                Ok(())
            }
            Message::UploadFeatures(_) | Message::LinkSymbols(_) | Message::DownloadFeatures(_) => {
                let t = m.segment_index().expect("per-segment message");
                match self.meta {
                    Some((mt, false)) if mt == t && !self.data_seen => {
                        self.data_seen = true;
                        Ok(())
                    }
                    Some((mt, true)) if mt == t => Err(format!("{} for silent segment {t}", m.name())),
                    _ => Err(format!(
                        "{} t={t} out of order (current segment {})",
                        m.name(),
                        self.meta.map_or("none".to_string(), |(mt, _)| mt.to_string())
                    )),
                }
            }
            Message::Eos => {
                if let Some((t, false)) = self.meta {
                    if !self.data_seen {
                        return Err(format!("EOS before data of segment {t}"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
