use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::protocol::{Message, PROTOCOL_VERSION};
use crate::classifiers::{Classifier, ClassifierError, Modality, ModelInput, ProbabilityVector};

/// Tolerance on the sum of remotely produced probabilities.
pub const REMOTE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("could not connect: {0}")]
    ConnectFailed(String),
    #[error("server speaks protocol version {server}, client speaks {client}")]
    VersionMismatch { server: u32, client: u32 },
    #[error("server classes {got:?} do not match local classes {expected:?}")]
    VocabMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbs(String),
    #[error("server does not support generation")]
    Unsupported,
    #[error("server error: {0}")]
    Remote(String),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Program and arguments; the protocol runs over its stdin/stdout.
    ChildStdio(Vec<String>),
    /// `host:port`.
    Tcp(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeEndpoint {
    pub transport: Transport,
    pub timeout: Duration,
    pub protocol_version: u32,
}

impl BridgeEndpoint {
    pub fn new(transport: Transport, timeout: Duration) -> Result<Self, BridgeError> {
        if timeout.is_zero() {
            return Err(BridgeError::InvalidEndpoint("timeout must be positive".into()));
        }
        if let Transport::ChildStdio(cmd) = &transport {
            if cmd.is_empty() {
                return Err(BridgeError::InvalidEndpoint("empty command".into()));
            }
        }
        Ok(BridgeEndpoint { transport, timeout, protocol_version: PROTOCOL_VERSION })
    }

    pub fn tcp(addr: impl Into<String>, timeout: Duration) -> Result<Self, BridgeError> {
        BridgeEndpoint::new(Transport::Tcp(addr.into()), timeout)
    }

    pub fn child<S: Into<String>>(cmd: impl IntoIterator<Item = S>, timeout: Duration) -> Result<Self, BridgeError> {
        BridgeEndpoint::new(Transport::ChildStdio(cmd.into_iter().map(Into::into).collect()), timeout)
    }
}

/// What the server reported in its HELLO_ACK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub modality: Modality,
    pub classes: Vec<String>,
    pub supports_generation: bool,
    pub protocol_version: u32,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    tcp: Option<TcpStream>,
}

impl Connection {
    fn open(endpoint: &BridgeEndpoint) -> Result<Connection, BridgeError> {
        let (tx, rx) = mpsc::channel();
        let spawn_reader = |reader: Box<dyn BufRead + Send>| {
            thread::spawn(move || {
                for line in reader.lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
        };
        match &endpoint.transport {
            Transport::ChildStdio(cmd) => {
                let mut child = Command::new(&cmd[0])
                    .args(&cmd[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| BridgeError::ConnectFailed(format!("{}: {e}", cmd[0])))?;
                let stdin = child.stdin.take().expect("piped");
                let stdout = child.stdout.take().expect("piped");
                spawn_reader(Box::new(BufReader::new(stdout)));
                Ok(Connection { writer: Box::new(stdin), lines: rx, child: Some(child), tcp: None })
            }
            Transport::Tcp(addr) => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(|e| BridgeError::ConnectFailed(format!("{addr}: {e}")))?
                    .next()
                    .ok_or_else(|| BridgeError::ConnectFailed(format!("{addr}: no address")))?;
                let stream = TcpStream::connect_timeout(&sock, endpoint.timeout)
                    .map_err(|e| BridgeError::ConnectFailed(format!("{addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read = stream.try_clone().map_err(|e| BridgeError::ConnectFailed(e.to_string()))?;
                let write = stream.try_clone().map_err(|e| BridgeError::ConnectFailed(e.to_string()))?;
                spawn_reader(Box::new(BufReader::new(read)));
                Ok(Connection { writer: Box::new(write), lines: rx, child: None, tcp: Some(stream) })
            }
        }
    }

    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String, BridgeError> {
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| BridgeError::ProtocolError(format!("write failed: {e}")))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(l)) => Ok(l),
            Ok(Err(e)) => Err(BridgeError::ProtocolError(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(BridgeError::ProtocolError("connection closed".into())),
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(s) = &self.tcp {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(c) = &mut self.child {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

struct State {
    conn: Option<Connection>,
    next_id: u64,
}

/// A handshaken connection to a bridge server. Requests are strictly
/// sequential; after a timeout or protocol error the connection is dropped
/// and the next request reconnects.
pub struct BridgeClient {
    endpoint: BridgeEndpoint,
    expected_vocab: Option<Vec<String>>,
    caps: Capabilities,
    state: Mutex<State>,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient").field("endpoint", &self.endpoint).field("caps", &self.caps).finish()
    }
}

fn handshake_on(
    conn: &mut Connection,
    endpoint: &BridgeEndpoint,
    id: u64,
    expected_vocab: Option<&[String]>,
) -> Result<Capabilities, BridgeError> {
    let hello = Message::Hello { id, protocol_version: endpoint.protocol_version };
    let reply = parse_reply(&conn.exchange(&hello.to_line(), endpoint.timeout)?, id)?;
    match reply {
        Message::HelloAck { modality, classes, supports_generation, protocol_version, .. } => {
            if protocol_version != endpoint.protocol_version {
                return Err(BridgeError::VersionMismatch { server: protocol_version, client: endpoint.protocol_version });
            }
            let modality = modality.parse().map_err(BridgeError::ProtocolError)?;
            if let Some(expected) = expected_vocab {
                if expected != classes.as_slice() {
                    return Err(BridgeError::VocabMismatch { expected: expected.to_vec(), got: classes });
                }
            }
            if classes.is_empty() {
                return Err(BridgeError::ProtocolError("server reported no classes".into()));
            }
            Ok(Capabilities { modality, classes, supports_generation, protocol_version })
        }
        other => Err(unexpected(&other, "HELLO_ACK")),
    }
}

fn parse_reply(line: &str, id: u64) -> Result<Message, BridgeError> {
    let msg = Message::from_line(line).map_err(|e| BridgeError::ProtocolError(format!("malformed line: {e}")))?;
    if msg.id() != id {
        return Err(BridgeError::ProtocolError(format!("response id {} does not echo request id {id}", msg.id())));
    }
    if let Message::Error { message, .. } = msg {
        return Err(BridgeError::Remote(message));
    }
    Ok(msg)
}

fn unexpected(msg: &Message, wanted: &str) -> BridgeError {
    BridgeError::ProtocolError(format!("expected {wanted}, got {}", msg.kind()))
}

/// Connects, exchanges HELLO/HELLO_ACK and returns the server capabilities.
/// With `expected_vocab`, the server's classes must match it exactly.
pub fn handshake(endpoint: &BridgeEndpoint, expected_vocab: Option<&[String]>) -> Result<Capabilities, BridgeError> {
    BridgeClient::connect(endpoint, expected_vocab).map(|c| c.caps)
}

impl BridgeClient {
    pub fn connect(endpoint: &BridgeEndpoint, expected_vocab: Option<&[String]>) -> Result<Self, BridgeError> {
        let mut conn = Connection::open(endpoint)?;
        let caps = handshake_on(&mut conn, endpoint, 1, expected_vocab)?;
        Ok(BridgeClient {
            endpoint: endpoint.clone(),
            expected_vocab: expected_vocab.map(<[String]>::to_vec),
            caps,
            state: Mutex::new(State { conn: Some(conn), next_id: 2 }),
        })
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    pub fn endpoint(&self) -> &BridgeEndpoint {
        &self.endpoint
    }

    /// Sends one request built from a fresh id and returns the reply line.
    fn round_trip(&self, build: impl FnOnce(u64) -> String) -> Result<(u64, String), BridgeError> {
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        if st.conn.is_none() {
            let id = st.next_id;
            st.next_id += 1;
            let mut conn = Connection::open(&self.endpoint)?;
            let caps = handshake_on(&mut conn, &self.endpoint, id, self.expected_vocab.as_deref())?;
            if caps != self.caps {
                return Err(BridgeError::ProtocolError("server capabilities changed across reconnect".into()));
            }
            st.conn = Some(conn);
        }
        let id = st.next_id;
        st.next_id += 1;
        let line = build(id);
        let res = st.conn.as_mut().expect("connected").exchange(&line, self.endpoint.timeout);
        if res.is_err() {
            st.conn = None;
        }
        res.map(|l| (id, l))
    }

    fn request(&self, build: impl FnOnce(u64) -> Message) -> Result<Message, BridgeError> {
        let (id, line) = self.round_trip(|id| build(id).to_line())?;
        let res = parse_reply(&line, id);
        if matches!(res, Err(BridgeError::ProtocolError(_))) {
            self.reset();
        }
        res
    }

    /// Sends an arbitrary line and returns the decoded reply without id
    /// checks. Used by the conformance suite.
    pub fn raw_request(&self, build: impl FnOnce(u64) -> String) -> Result<(u64, Message), BridgeError> {
        let (id, line) = self.round_trip(build)?;
        Message::from_line(&line)
            .map(|m| (id, m))
            .map_err(|e| {
                self.reset();
                BridgeError::ProtocolError(format!("malformed line: {e}"))
            })
    }

    /// Drops the connection; the next request reconnects.
    pub fn reset(&self) {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).conn = None;
    }

    /// PREDICT with validated PREDICT_ACK probabilities.
    pub fn remote_predict(&self, payload: &str) -> Result<ProbabilityVector, BridgeError> {
        let reply = self.request(|id| Message::Predict { id, payload: payload.to_string() })?;
        match reply {
            Message::PredictAck { probs, .. } => {
                if probs.len() != self.caps.classes.len() {
                    return Err(BridgeError::InvalidProbs(format!(
                        "{} probabilities for {} classes",
                        probs.len(),
                        self.caps.classes.len()
                    )));
                }
                ProbabilityVector::with_tolerance(probs, REMOTE_SUM_TOLERANCE)
                    .map_err(|e| BridgeError::InvalidProbs(e.to_string()))
            }
            other => {
                self.reset();
                Err(unexpected(&other, "PREDICT_ACK"))
            }
        }
    }

    /// GENERATE; candidates are returned unvalidated.
    pub fn remote_generate(&self, prompt: &str, n: usize) -> Result<Vec<String>, BridgeError> {
        if !self.caps.supports_generation {
            return Err(BridgeError::Unsupported);
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let reply = self.request(|id| Message::Generate { id, prompt: prompt.to_string(), n })?;
        match reply {
            Message::GenerateAck { candidates, .. } if candidates.len() == n => Ok(candidates),
            Message::GenerateAck { candidates, .. } => {
                Err(BridgeError::ProtocolError(format!("asked for {n} candidates, got {}", candidates.len())))
            }
            other => {
                self.reset();
                Err(unexpected(&other, "GENERATE_ACK"))
            }
        }
    }
}

impl Classifier for BridgeClient {
    fn modality(&self) -> Modality {
        self.caps.modality
    }

    fn classes(&self) -> &[String] {
        &self.caps.classes
    }

    fn predict_proba(&self, input: &ModelInput) -> Result<ProbabilityVector, ClassifierError> {
        if input.modality() != self.caps.modality {
            return Err(ClassifierError::ModalityMismatch { expected: self.caps.modality, got: input.modality() });
        }
        self.remote_predict(input.payload()).map_err(|e| ClassifierError::Remote(e.to_string()))
    }
}
