//! Ordered message channel between the two computing servers.
//!
//! Wire format of a frame:
//!
//! ```text
//! payload_len: u32 LE | kind: u8 | payload: payload_len bytes of u64 LE words
//! ```
//!
//! A round is one matched [`Channel::exchange`]: each side sends one frame and
//! receives the peer's frame of the same length.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{RingElement, RingParams};
use crate::sharing::PartyId;

pub const FRAME_HEADER_LEN: usize = 5;
/// "VMPC" in the low bytes of a u64.
pub const HANDSHAKE_MAGIC: u64 = 0x4350_4d56;
pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Open = 1,
    Sync = 2,
    Result = 3,
    Control = 4,
}

impl MessageKind {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => MessageKind::Open,
            2 => MessageKind::Sync,
            3 => MessageKind::Result,
            4 => MessageKind::Control,
            other => return Err(Error::Protocol(format!("unknown frame kind {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MessageKind,
    pub words: Vec<u64>,
}

impl Frame {
    pub fn new(kind: MessageKind, words: Vec<u64>) -> Self {
        Frame { kind, words }
    }

    pub fn from_elements(kind: MessageKind, values: &[RingElement]) -> Self {
        Frame::new(kind, values.iter().map(|v| v.value()).collect())
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + 8 * self.words.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&((8 * self.words.len()) as u32).to_le_bytes());
        out.push(self.kind as u8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::Protocol(format!("short frame ({} bytes)", bytes.len())));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let kind = MessageKind::from_byte(bytes[4])?;
        let payload = &bytes[FRAME_HEADER_LEN..];
        if payload.len() != len || !len.is_multiple_of(8) {
            return Err(Error::Protocol(format!(
                "frame length field {len} does not match payload of {} bytes",
                payload.len()
            )));
        }
        let words = payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Frame { kind, words })
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> io::Result<Vec<u8>> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        r.read_exact(&mut header)?;
        let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let mut bytes = Vec::with_capacity(FRAME_HEADER_LEN + len);
        bytes.extend_from_slice(&header);
        bytes.resize(FRAME_HEADER_LEN + len, 0);
        r.read_exact(&mut bytes[FRAME_HEADER_LEN..])?;
        Ok(bytes)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub rounds: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub opens: u64,
}

impl ChannelStats {
    pub fn since(&self, earlier: &ChannelStats) -> ChannelStats {
        ChannelStats {
            rounds: self.rounds - earlier.rounds,
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            bytes_received: self.bytes_received - earlier.bytes_received,
            opens: self.opens - earlier.opens,
        }
    }
}

/// Moves encoded frames to and from the peer.
pub trait Transport: Send {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

/// In-process transport over a pair of queues.
pub struct LoopbackTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Transport for LoopbackTransport {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx.send(bytes.to_vec()).map_err(|_| Error::ConnectionLost("loopback peer dropped".into()))
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| Error::ConnectionLost("loopback peer dropped".into()))
    }
}

pub fn loopback_pair() -> (LoopbackTransport, LoopbackTransport) {
    let (tx1, rx2) = channel();
    let (tx2, rx1) = channel();
    (LoopbackTransport { tx: tx1, rx: rx1 }, LoopbackTransport { tx: tx2, rx: rx2 })
}

/// Transport over any byte stream. Plain TCP is used as-is; an encrypted or
/// authenticated stream wrapper would be passed to [`StreamTransport::new`]
/// in place of the raw socket.
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write + Send> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        StreamTransport { stream }
    }
}

fn lost(e: io::Error) -> Error {
    Error::ConnectionLost(e.to_string())
}

impl<S: Read + Write + Send> Transport for StreamTransport<S> {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream.write_all(bytes).map_err(lost)?;
        self.stream.flush().map_err(lost)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        Frame::read_from(&mut self.stream).map_err(lost)
    }
}

pub type TcpTransport = StreamTransport<TcpStream>;

/// Accepts a single peer connection on `addr`.
pub fn tcp_listen<A: ToSocketAddrs>(addr: A) -> Result<TcpTransport> {
    let listener = TcpListener::bind(addr)?;
    let (stream, peer) = listener.accept()?;
    log::info!("accepted peer {peer}");
    stream.set_nodelay(true)?;
    Ok(StreamTransport::new(stream))
}

/// Connects to the listening peer, retrying until `timeout` elapses.
pub fn tcp_connect<A: ToSocketAddrs + Copy>(addr: A, timeout: Duration) -> Result<TcpTransport> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => {
                stream.set_nodelay(true)?;
                return Ok(StreamTransport::new(stream));
            }
            Err(e) if Instant::now() < deadline => {
                log::debug!("connect failed ({e}), retrying");
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(lost(e)),
        }
    }
}

/// Public session parameters both sides must agree on before computing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub session_id: u64,
    pub config_digest: u64,
}

pub struct Channel {
    party: PartyId,
    params: RingParams,
    transport: Box<dyn Transport>,
    stats: ChannelStats,
    transcript: Option<Vec<Frame>>,
}

impl Channel {
    pub fn new(party: PartyId, params: RingParams, transport: Box<dyn Transport>) -> Self {
        Channel { party, params, transport, stats: ChannelStats::default(), transcript: None }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    /// Starts recording every outgoing frame.
    pub fn record_transcript(&mut self) {
        self.transcript = Some(Vec::new());
    }

    pub fn take_transcript(&mut self) -> Vec<Frame> {
        self.transcript.take().unwrap_or_default()
    }

    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        self.transport.send_frame(&bytes)?;
        self.stats.bytes_sent += bytes.len() as u64;
        if let Some(t) = self.transcript.as_mut() {
            t.push(frame.clone());
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self.transport.recv_frame()?;
        self.stats.bytes_received += bytes.len() as u64;
        Frame::decode(&bytes)
    }

    fn exchange_frame(&mut self, frame: &Frame) -> Result<Frame> {
        // Fixed send/receive order keeps stream transports from deadlocking
        // when both outgoing frames exceed the socket buffers.
        let incoming = match self.party {
            PartyId::One => {
                self.send(frame)?;
                self.recv()?
            }
            PartyId::Two => {
                let incoming = self.recv()?;
                self.send(frame)?;
                incoming
            }
        };
        self.stats.rounds += 1;
        if incoming.kind != frame.kind {
            return Err(Error::Protocol(format!("expected {:?} frame from peer, got {:?}", frame.kind, incoming.kind)));
        }
        if incoming.words.len() != frame.words.len() {
            return Err(Error::Protocol(format!(
                "peer sent {} elements, expected {}",
                incoming.words.len(),
                frame.words.len()
            )));
        }
        Ok(incoming)
    }

    /// Sends `values` and returns the peer's equally long vector.
    pub fn exchange(&mut self, kind: MessageKind, values: &[RingElement]) -> Result<Vec<RingElement>> {
        let incoming = self.exchange_frame(&Frame::from_elements(kind, values))?;
        let mask = self.params.mask();
        incoming
            .words
            .into_iter()
            .map(|w| {
                if w & !mask != 0 {
                    Err(Error::Protocol(format!("peer element {w:#x} outside the ring")))
                } else {
                    Ok(self.params.reduce(w))
                }
            })
            .collect()
    }

    /// Reveals a batch of shared values to both parties in one round.
    pub fn open(&mut self, shares: &[RingElement]) -> Result<Vec<RingElement>> {
        let theirs = self.exchange(MessageKind::Open, shares)?;
        self.stats.opens += 1;
        Ok(shares.iter().zip(theirs).map(|(&a, b)| self.params.add(a, b)).collect())
    }

    /// Agrees on protocol version, ring, session and public configuration.
    pub fn handshake(&mut self, hello: Hello) -> Result<()> {
        let mine = [
            HANDSHAKE_MAGIC,
            PROTOCOL_VERSION,
            self.params.ring_bits() as u64,
            self.params.frac_bits() as u64,
            hello.session_id,
            hello.config_digest,
            self.party.index(),
        ];
        let theirs = self.exchange_frame(&Frame::new(MessageKind::Control, mine.to_vec()))?;
        let names = ["magic", "version", "q", "f", "session id", "config digest"];
        for (i, name) in names.iter().enumerate() {
            if theirs.words[i] != mine[i] {
                return Err(Error::Handshake(format!(
                    "{name} mismatch: local {:#x}, peer {:#x}",
                    mine[i], theirs.words[i]
                )));
            }
        }
        if theirs.words[6] != self.party.peer().index() {
            return Err(Error::Handshake(format!("both ends claim party {}", self.party.index())));
        }
        Ok(())
    }

    /// Sends a frame without waiting for a reply (used for result release).
    pub fn send_result(&mut self, values: &[RingElement]) -> Result<()> {
        self.send(&Frame::from_elements(MessageKind::Result, values))
    }

    pub fn recv_result(&mut self) -> Result<Vec<RingElement>> {
        let frame = self.recv()?;
        if frame.kind != MessageKind::Result {
            return Err(Error::Protocol(format!("expected result frame, got {:?}", frame.kind)));
        }
        Ok(frame.words.into_iter().map(|w| self.params.reduce(w)).collect())
    }
}

pub fn loopback_channels(params: RingParams) -> (Channel, Channel) {
    let (a, b) = loopback_pair();
    (Channel::new(PartyId::One, params, Box::new(a)), Channel::new(PartyId::Two, params, Box::new(b)))
}
