//! Node side: fit the local batch and send its summary, nothing else.

use std::io::Cursor;
use std::net::TcpStream;
use std::path::{Path, PathBuf};

use fedmerdel_core::federation::{summarize_batch, NodeRetained};
use fedmerdel_core::merdel::fit_merdel;
use fedmerdel_core::varsel::fit_merdel_vs;
use fedmerdel_core::{BatchSummary, CategoricalDataset};
use log::{info, warn};

use crate::error::{Result, TransportError};
use crate::frame::{read_frame, write_frame};
use crate::message::{DataRef, EntropyReply, ErrorReply, FitRequest, WireMessage};
use fedmerdel_core::federation::Sci;

pub const REQUEST_FILE: &str = "request.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, Default)]
pub struct NodeOptions {
    /// Dataset used for `DataRef::NodeLocal`.
    pub data: Option<PathBuf>,
    /// Replaces the requested seed.
    pub seed_override: Option<u64>,
    /// Local argmax labels (summary index space) are written here, node-side.
    pub labels_out: Option<PathBuf>,
}

/// What a node knows after serving: its summary and retained state.
#[derive(Debug, Clone)]
pub struct NodeOutcome {
    pub summary: BatchSummary,
    pub retained: NodeRetained<f64>,
    pub entropy_requests: usize,
}

fn load_data(req: &FitRequest, opts: &NodeOptions) -> Result<CategoricalDataset> {
    let cards = req.cardinalities.clone();
    Ok(match &req.data_ref {
        DataRef::NodeLocal => {
            let path = opts
                .data
                .as_ref()
                .ok_or_else(|| TransportError::Protocol("request asks for node-local data but the node has none".into()))?;
            CategoricalDataset::read_csv_path(path, cards)?
        }
        DataRef::Path { path } => CategoricalDataset::read_csv_path(path, cards)?,
        DataRef::InlineCsv { csv } => CategoricalDataset::read_csv(Cursor::new(csv.as_bytes()), cards)?,
    })
}

/// Runs the requested fit and builds the summary.
pub fn handle_fit(req: &FitRequest, opts: &NodeOptions) -> Result<(BatchSummary, NodeRetained<f64>)> {
    let data = load_data(req, opts)?;
    let priors = req.prior.priors(data.layout())?;
    let mut config = req.config.clone();
    if let Some(seed) = opts.seed_override {
        config.seed = seed;
    }
    info!("batch {}: fitting {} rows, {} variables", req.batch_id, data.n_rows(), data.n_vars());
    let (fit, selected) = if req.variable_selection {
        let (fit, sel) = fit_merdel_vs(&data, &config, &priors)?;
        (fit, Some(sel.selected()))
    } else {
        (fit_merdel(&data, &config, &priors)?, None)
    };
    if !fit.converged {
        warn!("batch {}: fit stopped after {} cycles without converging", req.batch_id, fit.iterations);
    }
    let (summary, retained) = summarize_batch(&fit, &priors, data.layout(), &req.batch_id, selected, &req.summary)?;
    if let Some(path) = &opts.labels_out {
        write_labels(path, &retained.local_labels)?;
    }
    Ok((summary, retained))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::from("label\n");
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn send(stream: &mut TcpStream, msg: &WireMessage) -> Result<()> {
    write_frame(stream, &msg.encode()?)
}

/// Serves one coordinator connection: a fit request, one summary, then (only
/// if the request opted in) entropy requests until the coordinator hangs up.
pub fn serve_connection(mut stream: TcpStream, opts: &NodeOptions) -> Result<NodeOutcome> {
    let bytes = read_frame(&mut stream)?
        .ok_or_else(|| TransportError::Protocol("connection closed before a fit request".into()))?;
    let req = match WireMessage::decode(&bytes) {
        Ok(WireMessage::FitRequest(r)) => r,
        Ok(other) => {
            let msg = format!("expected fit_request, got {:?}", other.kind());
            send(&mut stream, &WireMessage::Error(ErrorReply { message: msg.clone() }))?;
            return Err(TransportError::Protocol(msg));
        }
        Err(e) => {
            send(&mut stream, &WireMessage::Error(ErrorReply { message: format!("malformed request: {e}") }))?;
            return Err(e);
        }
    };
    let (summary, retained) = match handle_fit(&req, opts) {
        Ok(x) => x,
        Err(e) => {
            send(&mut stream, &WireMessage::Error(ErrorReply { message: e.to_string() }))?;
            return Err(e);
        }
    };
    send(&mut stream, &WireMessage::BatchSummary(summary.to_wire()))?;
    let mut entropy_requests = 0;
    if req.retain_for_entropy {
        while let Some(bytes) = read_frame(&mut stream)? {
            let reply = match WireMessage::decode(&bytes) {
                Ok(WireMessage::EntropyRequest(q)) => match retained.merge_correction(&q.group_a, &q.group_b) {
                    Ok(v) => WireMessage::EntropyReply(EntropyReply { value: Sci(v) }),
                    Err(e) => WireMessage::Error(ErrorReply { message: e.to_string() }),
                },
                Ok(other) => WireMessage::Error(ErrorReply {
                    message: format!("expected entropy_request, got {:?}", other.kind()),
                }),
                Err(e) => WireMessage::Error(ErrorReply { message: format!("malformed request: {e}") }),
            };
            entropy_requests += 1;
            send(&mut stream, &reply)?;
        }
    }
    Ok(NodeOutcome {
        summary,
        retained,
        entropy_requests,
    })
}

/// Accepts a single coordinator connection on `listener` and serves it.
pub fn serve_node_tcp(listener: std::net::TcpListener, opts: &NodeOptions) -> Result<NodeOutcome> {
    let (stream, peer) = listener.accept()?;
    info!("coordinator connected from {peer}");
    serve_connection(stream, opts)
}

/// File transport: reads `request.json` from `dir` and writes `summary.json`
/// (or `error.json`) next to it.
pub fn serve_node_dir(dir: &Path, opts: &NodeOptions) -> Result<NodeOutcome> {
    let bytes = std::fs::read(dir.join(REQUEST_FILE))?;
    let outcome = match WireMessage::decode(&bytes) {
        Ok(WireMessage::FitRequest(req)) => handle_fit(&req, opts).map(|(summary, retained)| NodeOutcome {
            summary,
            retained,
            entropy_requests: 0,
        }),
        Ok(other) => Err(TransportError::Protocol(format!("expected fit_request, got {:?}", other.kind()))),
        Err(e) => Err(e),
    };
    match &outcome {
        Ok(o) => write_atomic(&dir.join(SUMMARY_FILE), &WireMessage::BatchSummary(o.summary.to_wire()).encode()?)?,
        Err(e) => write_atomic(
            &dir.join(ERROR_FILE),
            &WireMessage::Error(ErrorReply { message: e.to_string() }).encode()?,
        )?,
    }
    outcome
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
