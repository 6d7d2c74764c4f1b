//! Protocol conformance checks runnable against any bridge server.

use std::fmt;

use super::client::{BridgeClient, BridgeEndpoint, BridgeError};
use super::protocol::{Message, PROTOCOL_VERSION};

#[derive(Debug, Clone, Default)]
pub struct ConformanceOptions {
    /// Classes the server must report, in order.
    pub expected_classes: Option<Vec<String>>,
    /// Payloads to send with PREDICT; a default set is used when empty.
    pub sample_payloads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome.is_ok())
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            match &c.outcome {
                Ok(()) => writeln!(f, "PASS {}", c.name)?,
                Err(e) => writeln!(f, "FAIL {}: {e}", c.name)?,
            }
        }
        Ok(())
    }
}

fn default_payloads(modality: crate::classifiers::Modality) -> Vec<String> {
    match modality {
        crate::classifiers::Modality::Sequence => {
            vec!["ACGTACGTACGTAAAGGGTTTCCC".into(), "A".into(), "NNNNACGT".into()]
        }
        crate::classifiers::Modality::Text => vec![
            "*[Gene Family]: beta-lactamase*, #[Resistance Mechanism]: antibiotic inactivation#".into(),
            "Gene Family: unknown".into(),
        ],
    }
}

/// Runs the full client-side suite. A handshake failure ends the run early.
pub fn run_conformance(endpoint: &BridgeEndpoint, opts: &ConformanceOptions) -> ConformanceReport {
    let mut checks = Vec::new();
    let mut record = |name: &'static str, outcome: Result<(), String>| checks.push(CheckResult { name, outcome });

    let client = match BridgeClient::connect(endpoint, opts.expected_classes.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            record("handshake", Err(e.to_string()));
            return ConformanceReport { checks };
        }
    };
    let caps = client.capabilities().clone();
    record(
        "handshake",
        if caps.protocol_version == PROTOCOL_VERSION { Ok(()) } else { Err("protocol version".into()) },
    );
    record("class vocabulary", if caps.classes.is_empty() { Err("no classes".into()) } else { Ok(()) });

    let payloads = if opts.sample_payloads.is_empty() { default_payloads(caps.modality) } else { opts.sample_payloads.clone() };
    let mut first = None;
    let predict = payloads.iter().try_for_each(|p| {
        let probs = client.remote_predict(p).map_err(|e| format!("payload {p:?}: {e}"))?;
        first.get_or_insert(probs);
        Ok::<(), String>(())
    });
    record("predict probabilities", predict);

    record(
        "predict determinism",
        match (client.remote_predict(&payloads[0]), first) {
            (Ok(again), Some(before)) if again == before => Ok(()),
            (Ok(_), Some(_)) => Err("same payload gave different probabilities".into()),
            (Err(e), _) => Err(e.to_string()),
            (Ok(_), None) => Err("no earlier prediction to compare".into()),
        },
    );

    let ids = (0..3).try_for_each(|_| match client.raw_request(|id| Message::Predict { id, payload: payloads[0].clone() }.to_line()) {
        Ok((id, reply)) if reply.id() == id => Ok(()),
        Ok((id, reply)) => Err(format!("request {id} answered with id {}", reply.id())),
        Err(e) => Err(e.to_string()),
    });
    record("id echo", ids);

    let unknown = client.raw_request(|id| format!("{{\"kind\":\"FROBNICATE\",\"id\":{id}}}\n"));
    record(
        "error reply",
        match unknown {
            Ok((_, Message::Error { .. })) => Ok(()),
            Ok((_, other)) => Err(format!("unknown request answered with {}", other.kind())),
            Err(e) => Err(e.to_string()),
        },
    );
    let garbage = client.raw_request(|_| "this is not json\n".to_string());
    record(
        "malformed line",
        match garbage {
            Ok((_, Message::Error { .. })) => Ok(()),
            Ok((_, other)) => Err(format!("malformed request answered with {}", other.kind())),
            Err(e) => Err(e.to_string()),
        },
    );
    record(
        "usable after error",
        client.remote_predict(&payloads[0]).map(|_| ()).map_err(|e| e.to_string()),
    );

    if caps.supports_generation {
        record(
            "generate",
            match client.remote_generate("{exemplars}\nACGTACGTACGT", 2) {
                Ok(c) if c.len() == 2 => Ok(()),
                Ok(c) => Err(format!("asked for 2, got {}", c.len())),
                Err(e) => Err(e.to_string()),
            },
        );
        record(
            "generate zero",
            match client.remote_generate("x", 0) {
                Ok(c) if c.is_empty() => Ok(()),
                Ok(_) => Err("n=0 returned candidates".into()),
                Err(e) => Err(e.to_string()),
            },
        );
    } else {
        record(
            "generate unsupported",
            match client.remote_generate("x", 1) {
                Err(BridgeError::Unsupported) => Ok(()),
                other => Err(format!("expected Unsupported, got {other:?}")),
            },
        );
    }
    ConformanceReport { checks }
}
