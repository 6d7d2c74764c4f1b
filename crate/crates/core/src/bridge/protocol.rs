use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// One protocol message; serialized as a single JSON object per line with a
/// `kind` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Message {
    #[serde(rename = "HELLO")]
    Hello { id: u64, protocol_version: u32 },
    #[serde(rename = "HELLO_ACK")]
    HelloAck {
        id: u64,
        modality: String,
        classes: Vec<String>,
        supports_generation: bool,
        protocol_version: u32,
    },
    #[serde(rename = "PREDICT")]
    Predict { id: u64, payload: String },
    #[serde(rename = "PREDICT_ACK")]
    PredictAck { id: u64, probs: Vec<f64> },
    #[serde(rename = "GENERATE")]
    Generate { id: u64, prompt: String, n: usize },
    #[serde(rename = "GENERATE_ACK")]
    GenerateAck { id: u64, candidates: Vec<String> },
    #[serde(rename = "ERROR")]
    Error {
        #[serde(default)]
        id: u64,
        message: String,
    },
}

impl Message {
    pub fn id(&self) -> u64 {
        match self {
            Message::Hello { id, .. }
            | Message::HelloAck { id, .. }
            | Message::Predict { id, .. }
            | Message::PredictAck { id, .. }
            | Message::Generate { id, .. }
            | Message::GenerateAck { id, .. }
            | Message::Error { id, .. } => *id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::HelloAck { .. } => "HELLO_ACK",
            Message::Predict { .. } => "PREDICT",
            Message::PredictAck { .. } => "PREDICT_ACK",
            Message::Generate { .. } => "GENERATE",
            Message::GenerateAck { .. } => "GENERATE_ACK",
            Message::Error { .. } => "ERROR",
        }
    }

    /// The message as one `\n`-terminated line.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("messages always serialize");
        s.push('\n');
        s
    }

    pub fn from_line(line: &str) -> Result<Message, serde_json::Error> {
        serde_json::from_str(line.trim_end_matches(['\n', '\r']))
    }
}
