//! Full-mesh TCP transport with a HELLO handshake.
//!
//! Party `i` listens on `peers[i]`, dials every lower-indexed party and
//! accepts every higher-indexed party plus the source. The source (endpoint
//! `n`) only dials. Each link carries one HELLO each way before any other
//! frame; the two sides must agree on version, `k`, `n` and digest.

use std::io::{self, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Sender};

use crate::codec::{ByteReader, ByteWriter, CodecError};

use super::transport::Transport;
use super::wire::{FrameReadError, Phase, WireFrame};
use super::ProtocolError;

pub const PROTOCOL_VERSION: u16 = 1;

/// Handshake payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub version: u16,
    pub k: u16,
    pub n: u16,
    pub digest: [u8; 32],
}

impl Hello {
    pub fn new(k: usize, n: usize, digest: [u8; 32]) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            k: k as u16,
            n: n as u16,
            digest,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u16(self.version)
            .u16(self.k)
            .u16(self.n)
            .bytes(&self.digest);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(bytes);
        let h = Self {
            version: r.u16()?,
            k: r.u16()?,
            n: r.u16()?,
            digest: r.take(32)?.try_into().expect("32 bytes"),
        };
        r.finish()?;
        Ok(h)
    }

    fn check(&self, peer: usize, theirs: &Hello) -> Result<(), ProtocolError> {
        if theirs.version != self.version {
            return Err(ProtocolError::Handshake(format!(
                "endpoint {peer} speaks version {}, local version {}",
                theirs.version, self.version
            )));
        }
        if (theirs.k, theirs.n) != (self.k, self.n) {
            return Err(ProtocolError::Handshake(format!(
                "endpoint {peer} runs ({}, {}), local ({}, {})",
                theirs.k, theirs.n, self.k, self.n
            )));
        }
        if theirs.digest != self.digest {
            return Err(ProtocolError::Handshake(format!(
                "endpoint {peer} has a different model or schedule digest"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpOptions {
    /// Bound on every blocking read once connected.
    pub io_timeout: Duration,
    /// How long to keep dialing and accepting while the mesh forms.
    pub connect_timeout: Duration,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            io_timeout: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(30),
        }
    }
}

pub struct TcpEndpoint {
    local: usize,
    writers: Vec<Option<Sender<Vec<u8>>>>,
    readers: Vec<Option<BufReader<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

fn io_error(peer: usize, e: io::Error) -> ProtocolError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => ProtocolError::Timeout { peer },
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => ProtocolError::Disconnected { peer },
        _ => ProtocolError::Io(e),
    }
}

fn read_frame(stream: &mut impl io::Read, peer: usize) -> Result<WireFrame, ProtocolError> {
    WireFrame::read_from(stream).map_err(|e| match e {
        FrameReadError::Io(e) => io_error(peer, e),
        FrameReadError::Codec(c) => ProtocolError::Codec(c),
    })
}

fn read_hello(
    stream: &mut TcpStream,
    from: Option<usize>,
) -> Result<(usize, Hello), ProtocolError> {
    let frame = read_frame(stream, from.unwrap_or(usize::MAX))?;
    if frame.phase != Phase::Hello {
        return Err(ProtocolError::Handshake(format!(
            "expected HELLO, got {}",
            frame.phase
        )));
    }
    let sender = frame.sender as usize;
    if from.is_some_and(|f| f != sender) {
        return Err(ProtocolError::Handshake(format!(
            "dialed endpoint {}, answered by {sender}",
            from.unwrap_or_default()
        )));
    }
    let hello = Hello::from_bytes(&frame.payload)
        .map_err(|e| ProtocolError::Handshake(format!("malformed HELLO: {e}")))?;
    Ok((sender, hello))
}

fn dial(addr: SocketAddr, deadline: Instant) -> Result<TcpStream, ProtocolError> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                log::debug!("dial {addr}: {e}, retrying");
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(ProtocolError::Io(e)),
        }
    }
}

/// Binds `peers[local]` (for parties) and forms the mesh.
pub fn tcp_connect(
    local: usize,
    peers: &[SocketAddr],
    hello: Hello,
    opts: TcpOptions,
) -> Result<TcpEndpoint, ProtocolError> {
    let listener = match peers.get(local) {
        Some(addr) => Some(TcpListener::bind(addr)?),
        None => None,
    };
    tcp_connect_with_listener(local, peers, listener, hello, opts)
}

/// As [`tcp_connect`] with an already bound listener, so tests can use port 0.
pub fn tcp_connect_with_listener(
    local: usize,
    peers: &[SocketAddr],
    listener: Option<TcpListener>,
    hello: Hello,
    opts: TcpOptions,
) -> Result<TcpEndpoint, ProtocolError> {
    let n = peers.len();
    if local > n || n != hello.n as usize {
        return Err(ProtocolError::Config(format!(
            "endpoint {local} with {n} peer addresses for n = {}",
            hello.n
        )));
    }
    let deadline = Instant::now() + opts.connect_timeout;
    let mut streams: Vec<Option<TcpStream>> = (0..=n).map(|_| None).collect();

    // Dial lower-indexed parties; the source dials everyone.
    for (j, addr) in peers.iter().enumerate().take(local.min(n)) {
        let mut s = dial(*addr, deadline)?;
        s.set_nodelay(true)?;
        s.set_read_timeout(Some(opts.connect_timeout))?;
        WireFrame::new(local, Phase::Hello, hello.to_bytes()).write_to(&mut s)?;
        let (_, theirs) = read_hello(&mut s, Some(j))?;
        hello.check(j, &theirs)?;
        streams[j] = Some(s);
    }

    // Accept higher-indexed parties and the source.
    if local < n {
        let listener = listener
            .ok_or_else(|| ProtocolError::Config(format!("party {local} needs a listener")))?;
        listener.set_nonblocking(true)?;
        let mut pending = n - local;
        while pending > 0 {
            match listener.accept() {
                Ok((mut s, addr)) => {
                    s.set_nonblocking(false)?;
                    s.set_nodelay(true)?;
                    s.set_read_timeout(Some(opts.connect_timeout))?;
                    let (peer, theirs) = read_hello(&mut s, None)?;
                    WireFrame::new(local, Phase::Hello, hello.to_bytes()).write_to(&mut s)?;
                    if peer <= local || peer > n || streams[peer].is_some() {
                        return Err(ProtocolError::Handshake(format!(
                            "unexpected HELLO from endpoint {peer} at {addr}"
                        )));
                    }
                    hello.check(peer, &theirs)?;
                    streams[peer] = Some(s);
                    pending -= 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(ProtocolError::Timeout { peer: n });
                    }
                    thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    let mut writers = Vec::with_capacity(n + 1);
    let mut readers = Vec::with_capacity(n + 1);
    let mut threads = Vec::new();
    for (peer, s) in streams.into_iter().enumerate() {
        let Some(s) = s else {
            writers.push(None);
            readers.push(None);
            continue;
        };
        s.set_read_timeout(Some(opts.io_timeout))?;
        let mut out = s.try_clone()?;
        let (tx, rx) = unbounded::<Vec<u8>>();
        threads.push(thread::spawn(move || {
            for bytes in rx {
                if let Err(e) = out.write_all(&bytes) {
                    log::warn!("write to endpoint {peer}: {e}");
                    return;
                }
            }
            let _ = out.flush();
        }));
        writers.push(Some(tx));
        readers.push(Some(BufReader::new(s)));
    }
    Ok(TcpEndpoint {
        local,
        writers,
        readers,
        threads,
    })
}

impl Transport for TcpEndpoint {
    fn local(&self) -> usize {
        self.local
    }

    fn endpoints(&self) -> usize {
        self.writers.len()
    }

    fn send(&mut self, to: usize, frame: WireFrame) -> Result<(), ProtocolError> {
        let tx = self
            .writers
            .get(to)
            .and_then(Option::as_ref)
            .ok_or(ProtocolError::NoRoute {
                from: self.local,
                to,
            })?;
        tx.send(frame.to_bytes())
            .map_err(|_| ProtocolError::Disconnected { peer: to })
    }

    fn recv(&mut self, from: usize) -> Result<WireFrame, ProtocolError> {
        let local = self.local;
        let r = self
            .readers
            .get_mut(from)
            .and_then(Option::as_mut)
            .ok_or(ProtocolError::NoRoute { from, to: local })?;
        read_frame(r, from)
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        // Closing the queues lets each writer drain and exit.
        self.writers.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
