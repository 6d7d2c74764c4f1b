use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{Message, PROTOCOL_VERSION};
use crate::classifiers::{Classifier, Modality, ModelInput};
use crate::rng::{fnv1a64, SplitMix64};
use crate::seq_io::is_nucleotide_string;

/// How the fixture answers PREDICT.
#[derive(Clone)]
pub enum PredictBehavior {
    Uniform,
    Fixed(Vec<f64>),
    /// Uniform probabilities multiplied by a factor.
    Scaled(f64),
    /// A line that is not a protocol message.
    Malformed,
    /// Never replies.
    Silent,
    /// Replies with the request id plus one.
    WrongId,
    /// The first PREDICT this server sees is never answered; later ones get
    /// uniform probabilities.
    StallOnce(Arc<AtomicBool>),
    /// Delegates to an in-process model.
    Model(Arc<dyn Classifier>),
}

impl std::fmt::Debug for PredictBehavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictBehavior::Uniform => write!(f, "Uniform"),
            PredictBehavior::Fixed(p) => write!(f, "Fixed({p:?})"),
            PredictBehavior::Scaled(s) => write!(f, "Scaled({s})"),
            PredictBehavior::Malformed => write!(f, "Malformed"),
            PredictBehavior::Silent => write!(f, "Silent"),
            PredictBehavior::WrongId => write!(f, "WrongId"),
            PredictBehavior::StallOnce(_) => write!(f, "StallOnce"),
            PredictBehavior::Model(_) => write!(f, "Model"),
        }
    }
}

/// How the fixture answers GENERATE.
#[derive(Debug, Clone)]
pub enum GenerateBehavior {
    Unsupported,
    /// Cycles through fixed strings.
    Fixed(Vec<String>),
    /// Point-mutated copies of the nucleotide lines found in the prompt.
    MutateExemplars { rate: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub modality: Modality,
    pub classes: Vec<String>,
    pub predict: PredictBehavior,
    pub generate: GenerateBehavior,
    pub protocol_version: u32,
    /// Skip HELLO_ACK entirely.
    pub silent_handshake: bool,
}

impl FixtureConfig {
    pub fn uniform(modality: Modality, classes: Vec<String>) -> Self {
        FixtureConfig {
            modality,
            classes,
            predict: PredictBehavior::Uniform,
            generate: GenerateBehavior::Unsupported,
            protocol_version: PROTOCOL_VERSION,
            silent_handshake: false,
        }
    }

    /// Serves a local model under its own modality and classes.
    pub fn wrapping(model: Arc<dyn Classifier>) -> Self {
        let mut cfg = FixtureConfig::uniform(model.modality(), model.classes().to_vec());
        cfg.predict = PredictBehavior::Model(model);
        cfg
    }
}

fn mutate_exemplars(prompt: &str, n: usize, rate: f64, seed: u64) -> Vec<String> {
    let exemplars: Vec<&str> = prompt.lines().map(str::trim).filter(|l| !l.is_empty() && is_nucleotide_string(l)).collect();
    let mut rng = SplitMix64::from_keys(&[seed, fnv1a64(prompt.as_bytes())]);
    (0..n)
        .map(|i| {
            if exemplars.is_empty() {
                return (0..60).map(|_| b"ACGT"[rng.below(4) as usize] as char).collect();
            }
            exemplars[i % exemplars.len()]
                .bytes()
                .map(|b| if rng.next_f64() < rate { b"ACGT"[rng.below(4) as usize] } else { b } as char)
                .collect()
        })
        .collect()
}

/// Reply to one request line, or `None` to stay silent.
fn respond(line: &str, cfg: &FixtureConfig) -> Option<String> {
    let msg = match Message::from_line(line) {
        Ok(m) => m,
        Err(e) => return Some(Message::Error { id: 0, message: format!("unparseable request: {e}") }.to_line()),
    };
    let n_classes = cfg.classes.len();
    let reply = match msg {
        Message::Hello { id, .. } => {
            if cfg.silent_handshake {
                return None;
            }
            Message::HelloAck {
                id,
                modality: cfg.modality.as_str().to_string(),
                classes: cfg.classes.clone(),
                supports_generation: !matches!(cfg.generate, GenerateBehavior::Unsupported),
                protocol_version: cfg.protocol_version,
            }
        }
        Message::Predict { id, payload } => {
            let uniform = vec![1.0 / n_classes as f64; n_classes];
            match &cfg.predict {
                PredictBehavior::Uniform => Message::PredictAck { id, probs: uniform },
                PredictBehavior::Fixed(p) => Message::PredictAck { id, probs: p.clone() },
                PredictBehavior::Scaled(s) => Message::PredictAck { id, probs: uniform.iter().map(|p| p * s).collect() },
                PredictBehavior::Malformed => return Some("this is not a message\n".to_string()),
                PredictBehavior::Silent => return None,
                PredictBehavior::WrongId => Message::PredictAck { id: id + 1, probs: uniform },
                PredictBehavior::StallOnce(fired) => {
                    if !fired.swap(true, Ordering::SeqCst) {
                        return None;
                    }
                    Message::PredictAck { id, probs: uniform }
                }
                PredictBehavior::Model(m) => {
                    let input = match m.modality() {
                        Modality::Sequence => ModelInput::Sequence(payload),
                        Modality::Text => ModelInput::Text(payload),
                    };
                    match m.predict_proba(&input) {
                        Ok(p) => Message::PredictAck { id, probs: p.into_vec() },
                        Err(e) => Message::Error { id, message: e.to_string() },
                    }
                }
            }
        }
        Message::Generate { id, prompt, n } => match &cfg.generate {
            GenerateBehavior::Unsupported => Message::Error { id, message: "generation not supported".into() },
            GenerateBehavior::Fixed(c) if c.is_empty() => Message::GenerateAck { id, candidates: vec![] },
            GenerateBehavior::Fixed(c) => Message::GenerateAck { id, candidates: c.iter().cycle().take(n).cloned().collect() },
            GenerateBehavior::MutateExemplars { rate, seed } => {
                Message::GenerateAck { id, candidates: mutate_exemplars(&prompt, n, *rate, *seed) }
            }
        },
        other => Message::Error { id: other.id(), message: format!("unexpected request kind {}", other.kind()) },
    };
    Some(reply.to_line())
}

/// Answers requests line by line until the input ends.
pub fn serve_connection<R: BufRead, W: Write>(reader: R, mut writer: W, cfg: &FixtureConfig) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = respond(&line, cfg) {
            writer.write_all(reply.as_bytes())?;
            writer.flush()?;
        }
    }
    Ok(())
}

pub fn serve_stdio(cfg: &FixtureConfig) -> io::Result<()> {
    let stdin = io::stdin();
    serve_connection(stdin.lock(), io::stdout().lock(), cfg)
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, cfg: FixtureConfig) -> io::Result<()> {
    let cfg = Arc::new(cfg);
    for stream in listener.incoming() {
        let stream = stream?;
        let cfg = Arc::clone(&cfg);
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve_connection(reader, stream, &cfg);
        });
    }
    Ok(())
}

/// Starts a TCP fixture on an ephemeral loopback port.
pub fn spawn_tcp_fixture(cfg: FixtureConfig) -> io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let handle = thread::spawn(move || {
        let _ = serve_tcp(listener, cfg);
    });
    Ok((addr, handle))
}

/// A short timeout suitable for tests against local fixtures.
pub const FIXTURE_TIMEOUT: Duration = Duration::from_millis(500);

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn scripted_session() {
        let mut cfg = FixtureConfig::uniform(Modality::Text, classes());
        cfg.generate = GenerateBehavior::Fixed(vec!["x".into(), "y".into()]);
        let input = [
            Message::Hello { id: 1, protocol_version: 1 }.to_line(),
            Message::Predict { id: 2, payload: "t".into() }.to_line(),
            Message::Generate { id: 3, prompt: "p".into(), n: 3 }.to_line(),
            "garbage\n".to_string(),
        ]
        .concat();
        let mut out = Vec::new();
        serve_connection(input.as_bytes(), &mut out, &cfg).unwrap();
        let replies: Vec<Message> = String::from_utf8(out).unwrap().lines().map(|l| Message::from_line(l).unwrap()).collect();
        assert_eq!(replies.len(), 4);
        assert!(matches!(&replies[0], Message::HelloAck { id: 1, supports_generation: true, .. }));
        assert_eq!(replies[1], Message::PredictAck { id: 2, probs: vec![0.5, 0.5] });
        assert_eq!(replies[2], Message::GenerateAck { id: 3, candidates: vec!["x".into(), "y".into(), "x".into()] });
        assert!(matches!(replies[3], Message::Error { .. }));
    }

    #[test]
    fn mutated_exemplars_are_deterministic() {
        let p = "Generate:\nACGTACGTAC\nGGGGCCCCAA";
        let a = mutate_exemplars(p, 3, 0.2, 9);
        assert_eq!(a, mutate_exemplars(p, 3, 0.2, 9));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|s| s.len() == 10));
    }
}
