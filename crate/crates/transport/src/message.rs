//! Protocol messages. Every message travels as
//! `{"version":1,"kind":"<kind>","payload":{...}}`.

use std::path::PathBuf;

use fedmerdel_core::federation::{Sci, SummaryOptions, WireSummary};
use fedmerdel_core::{Layout, MerDelConfig, Priors};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Result, TransportError};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    FitRequest,
    BatchSummary,
    EntropyRequest,
    EntropyReply,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    FitRequest(FitRequest),
    BatchSummary(WireSummary),
    EntropyRequest(EntropyRequest),
    EntropyReply(EntropyReply),
    Error(ErrorReply),
}

/// Where a node finds its rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataRef {
    /// The dataset the node was started with.
    NodeLocal,
    /// A CSV path on the node's filesystem.
    Path { path: PathBuf },
    /// CSV text carried in the request (coordinator-to-node only).
    InlineCsv { csv: String },
}

/// Prior hyperparameters; ε defaults to 1/L_j once the node knows L_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub alpha0: f64,
    pub a: f64,
    pub epsilon: Option<Vec<f64>>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            alpha0: 0.01,
            a: 2.0,
            epsilon: None,
        }
    }
}

impl PriorSpec {
    pub fn priors(&self, layout: &Layout) -> Result<Priors> {
        let eps = match &self.epsilon {
            Some(e) => e.clone(),
            None => layout.cardinalities().iter().map(|&l| 1.0 / l as f64).collect(),
        };
        let priors = Priors::new(self.alpha0, eps, self.a)?;
        priors.validate_for(layout)?;
        Ok(priors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub batch_id: String,
    #[serde(default)]
    pub config: MerDelConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    pub data_ref: DataRef,
    /// Category counts per variable; inferred from the data when absent.
    #[serde(default)]
    pub cardinalities: Option<Vec<usize>>,
    #[serde(default)]
    pub variable_selection: bool,
    #[serde(default)]
    pub summary: SummaryOptions,
    /// Keep responsibilities and answer entropy requests after the summary.
    #[serde(default)]
    pub retain_for_entropy: bool,
}

/// Groups of summary cluster indices whose merge is being scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyRequest {
    pub group_a: Vec<usize>,
    pub group_b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReply {
    pub value: Sci,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub message: String,
}

#[derive(Deserialize)]
struct RawEnvelope<'a> {
    version: u32,
    kind: MessageKind,
    #[serde(borrow)]
    payload: &'a RawValue,
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            Self::FitRequest(_) => MessageKind::FitRequest,
            Self::BatchSummary(_) => MessageKind::BatchSummary,
            Self::EntropyRequest(_) => MessageKind::EntropyRequest,
            Self::EntropyReply(_) => MessageKind::EntropyReply,
            Self::Error(_) => MessageKind::Error,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload = match self {
            Self::FitRequest(m) => serde_json::to_string(m)?,
            Self::BatchSummary(m) => serde_json::to_string(m)?,
            Self::EntropyRequest(m) => serde_json::to_string(m)?,
            Self::EntropyReply(m) => serde_json::to_string(m)?,
            Self::Error(m) => serde_json::to_string(m)?,
        };
        let kind = serde_json::to_string(&self.kind())?;
        Ok(format!("{{\"version\":{PROTOCOL_VERSION},\"kind\":{kind},\"payload\":{payload}}}").into_bytes())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| TransportError::Frame(format!("payload is not UTF-8: {e}")))?;
        let env: RawEnvelope = serde_json::from_str(text)?;
        if env.version != PROTOCOL_VERSION {
            return Err(TransportError::Protocol(format!(
                "unsupported protocol version {} (expected {PROTOCOL_VERSION})",
                env.version
            )));
        }
        let p = env.payload.get();
        Ok(match env.kind {
            MessageKind::FitRequest => Self::FitRequest(serde_json::from_str(p)?),
            MessageKind::BatchSummary => Self::BatchSummary(serde_json::from_str(p)?),
            MessageKind::EntropyRequest => Self::EntropyRequest(serde_json::from_str(p)?),
            MessageKind::EntropyReply => Self::EntropyReply(serde_json::from_str(p)?),
            MessageKind::Error => Self::Error(serde_json::from_str(p)?),
        })
    }
}
