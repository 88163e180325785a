//! Coordinator side: collect one summary per node, combine, search.

use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use fedmerdel_core::federation::{
    combine_summaries, greedy_search, random_search, EntropyOracle, GlobalReport, SearchConfig, SearchStrategy,
};
use fedmerdel_core::metrics::expected_profile;
use fedmerdel_core::{BatchSummary, GlobalModel};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TransportError};
use crate::frame::{read_frame, write_frame};
use crate::message::{EntropyRequest, FitRequest, MessageKind, WireMessage};
use crate::node::{write_atomic, ERROR_FILE, SUMMARY_FILE};

/// A node to contact and what to ask it.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub addr: String,
    pub request: FitRequest,
}

#[derive(Debug, Clone)]
pub enum Source {
    Tcp(Vec<NodeSpec>),
    /// Directory of `*.json` summary files or node run directories holding `summary.json`.
    Dir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub search: SearchConfig,
    pub timeout: Duration,
    pub min_nodes: usize,
    /// Directory mode: wait until this many summaries exist (or the timeout).
    pub expect: Option<usize>,
    /// Keep a copy of every inbound frame.
    pub capture_inbound: bool,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            timeout: Duration::from_secs(3600),
            min_nodes: 1,
            expect: None,
            capture_inbound: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropout {
    pub node: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboundFrame {
    pub node: String,
    pub kind: MessageKind,
    pub bytes: Vec<u8>,
}

pub struct Collection {
    pub nodes: Vec<String>,
    pub summaries: Vec<BatchSummary>,
    /// Open connection per collected node when it retains state for entropy requests.
    pub connections: Vec<Option<TcpStream>>,
    pub dropouts: Vec<Dropout>,
    pub inbound: Vec<InboundFrame>,
}

#[derive(Debug, Clone)]
pub struct CoordinatorOutput {
    pub global: GlobalModel,
    pub report: GlobalReport,
    pub nodes: Vec<String>,
    pub dropouts: Vec<Dropout>,
    pub entropy_requests: usize,
    pub inbound: Vec<InboundFrame>,
}

struct NodeResult {
    summary: BatchSummary,
    stream: Option<TcpStream>,
    inbound: Vec<InboundFrame>,
}

fn fetch(spec: &NodeSpec, deadline: Instant, capture: bool) -> Result<NodeResult> {
    let remaining = || {
        deadline
            .checked_duration_since(Instant::now())
            .filter(|d| !d.is_zero())
            .ok_or_else(|| TransportError::Io(std::io::Error::new(std::io::ErrorKind::TimedOut, "deadline passed")))
    };
    let addr = spec
        .addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| TransportError::Protocol(format!("cannot resolve {}", spec.addr)))?;
    let mut stream = TcpStream::connect_timeout(&addr, remaining()?)?;
    stream.set_read_timeout(Some(remaining()?))?;
    write_frame(&mut stream, &WireMessage::FitRequest(spec.request.clone()).encode()?)?;
    let bytes = read_frame(&mut stream)?
        .ok_or_else(|| TransportError::Protocol("node closed the connection without replying".into()))?;
    let msg = WireMessage::decode(&bytes)?;
    let mut inbound = Vec::new();
    if capture {
        inbound.push(InboundFrame {
            node: spec.addr.clone(),
            kind: msg.kind(),
            bytes,
        });
    }
    let summary = match msg {
        WireMessage::BatchSummary(w) => BatchSummary::from_wire(w)?,
        WireMessage::Error(e) => {
            return Err(TransportError::Remote {
                node: spec.addr.clone(),
                message: e.message,
            })
        }
        other => return Err(TransportError::Protocol(format!("expected batch_summary, got {:?}", other.kind()))),
    };
    stream.set_read_timeout(None)?;
    let stream = spec.request.retain_for_entropy.then_some(stream);
    Ok(NodeResult { summary, stream, inbound })
}

/// Contacts every node concurrently and keeps whatever arrives before the timeout.
pub fn collect_tcp(nodes: &[NodeSpec], config: &CoordinatorConfig) -> Result<Collection> {
    let deadline = Instant::now() + config.timeout;
    let (tx, rx) = mpsc::channel();
    for (i, spec) in nodes.iter().enumerate() {
        let tx = tx.clone();
        let spec = spec.clone();
        let capture = config.capture_inbound;
        std::thread::spawn(move || {
            let _ = tx.send((i, fetch(&spec, deadline, capture)));
        });
    }
    drop(tx);
    let mut results: Vec<Option<Result<NodeResult>>> = (0..nodes.len()).map(|_| None).collect();
    let mut pending = nodes.len();
    while pending > 0 {
        let Some(wait) = deadline.checked_duration_since(Instant::now()) else { break };
        match rx.recv_timeout(wait) {
            Ok((i, r)) => {
                results[i] = Some(r);
                pending -= 1;
            }
            Err(_) => break,
        }
    }
    let mut out = Collection {
        nodes: Vec::new(),
        summaries: Vec::new(),
        connections: Vec::new(),
        dropouts: Vec::new(),
        inbound: Vec::new(),
    };
    for (spec, r) in nodes.iter().zip(results) {
        match r {
            Some(Ok(n)) => {
                out.nodes.push(spec.addr.clone());
                out.summaries.push(n.summary);
                out.connections.push(n.stream);
                out.inbound.extend(n.inbound);
            }
            Some(Err(e)) => {
                warn!("node {} dropped: {e}", spec.addr);
                out.dropouts.push(Dropout {
                    node: spec.addr.clone(),
                    reason: e.to_string(),
                });
            }
            None => {
                warn!("node {} timed out", spec.addr);
                out.dropouts.push(Dropout {
                    node: spec.addr.clone(),
                    reason: "timed out".into(),
                });
            }
        }
    }
    check_quorum(&out, config)?;
    Ok(out)
}

fn check_quorum(c: &Collection, config: &CoordinatorConfig) -> Result<()> {
    if c.summaries.len() < config.min_nodes.max(1) {
        return Err(TransportError::PartialCollection {
            got: c.summaries.len(),
            need: config.min_nodes.max(1),
        });
    }
    Ok(())
}

enum Found {
    Summary(PathBuf),
    Failed(PathBuf),
}

fn scan_dir(dir: &Path) -> Result<Vec<Found>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut found = Vec::new();
    for path in entries {
        if path.is_dir() {
            if path.join(SUMMARY_FILE).is_file() {
                found.push(Found::Summary(path.join(SUMMARY_FILE)));
            } else if path.join(ERROR_FILE).is_file() {
                found.push(Found::Failed(path.join(ERROR_FILE)));
            }
        } else if path.extension().is_some_and(|e| e == "json") {
            found.push(Found::Summary(path));
        }
    }
    Ok(found)
}

/// Reads summaries from a directory, polling until `expect` are present or the timeout.
pub fn collect_dir(dir: &Path, config: &CoordinatorConfig) -> Result<Collection> {
    let deadline = Instant::now() + config.timeout;
    let mut found = scan_dir(dir)?;
    if let Some(n) = config.expect {
        while found.len() < n && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(100).min(deadline.saturating_duration_since(Instant::now())));
            found = scan_dir(dir)?;
        }
    }
    let mut out = Collection {
        nodes: Vec::new(),
        summaries: Vec::new(),
        connections: Vec::new(),
        dropouts: Vec::new(),
        inbound: Vec::new(),
    };
    for f in found {
        match f {
            Found::Summary(path) => {
                let bytes = std::fs::read(&path)?;
                let msg = WireMessage::decode(&bytes)?;
                let name = path.display().to_string();
                if config.capture_inbound {
                    out.inbound.push(InboundFrame {
                        node: name.clone(),
                        kind: msg.kind(),
                        bytes,
                    });
                }
                let WireMessage::BatchSummary(w) = msg else {
                    return Err(TransportError::Protocol(format!("{name} does not hold a batch summary")));
                };
                out.nodes.push(name);
                out.summaries.push(BatchSummary::from_wire(w)?);
                out.connections.push(None);
            }
            Found::Failed(path) => {
                let reason = match WireMessage::decode(&std::fs::read(&path)?) {
                    Ok(WireMessage::Error(e)) => e.message,
                    _ => "unreadable error file".into(),
                };
                out.dropouts.push(Dropout {
                    node: path.parent().unwrap_or(&path).display().to_string(),
                    reason,
                });
            }
        }
    }
    if let Some(n) = config.expect {
        let missing = n.saturating_sub(out.summaries.len() + out.dropouts.len());
        for i in 0..missing {
            out.dropouts.push(Dropout {
                node: format!("missing-{i}"),
                reason: "timed out".into(),
            });
        }
    }
    check_quorum(&out, config)?;
    Ok(out)
}

/// Asks nodes over their still-open connections.
pub struct RemoteOracle<'a> {
    pub connections: &'a mut [Option<TcpStream>],
    pub nodes: &'a [String],
    pub requests: usize,
    pub inbound: Option<&'a mut Vec<InboundFrame>>,
}

impl EntropyOracle<f64> for RemoteOracle<'_> {
    fn merge_correction(&mut self, batch: usize, group_a: &[usize], group_b: &[usize]) -> fedmerdel_core::Result<f64> {
        let node = self.nodes.get(batch).cloned().unwrap_or_default();
        let stream = self
            .connections
            .get_mut(batch)
            .and_then(Option::as_mut)
            .ok_or_else(|| fedmerdel_core::Error::Contract(format!("node {node} did not retain state")))?;
        let req = WireMessage::EntropyRequest(EntropyRequest {
            group_a: group_a.to_vec(),
            group_b: group_b.to_vec(),
        });
        let io = |e: TransportError| fedmerdel_core::Error::Contract(format!("entropy request to {node}: {e}"));
        write_frame(stream, &req.encode().map_err(io)?).map_err(io)?;
        let bytes = read_frame(stream)
            .map_err(io)?
            .ok_or_else(|| fedmerdel_core::Error::Contract(format!("node {node} hung up")))?;
        self.requests += 1;
        let msg = WireMessage::decode(&bytes).map_err(io)?;
        if let Some(cap) = self.inbound.as_deref_mut() {
            cap.push(InboundFrame {
                node: node.clone(),
                kind: msg.kind(),
                bytes,
            });
        }
        match msg {
            WireMessage::EntropyReply(r) => Ok(r.value.0),
            WireMessage::Error(e) => Err(fedmerdel_core::Error::Contract(format!("node {node}: {}", e.message))),
            other => Err(fedmerdel_core::Error::Contract(format!("unexpected {:?} from {node}", other.kind()))),
        }
    }
}

/// Combines collected summaries and runs the configured search.
pub fn merge_collection(mut c: Collection, search: &SearchConfig, capture: bool) -> Result<CoordinatorOutput> {
    let global = combine_summaries(&c.summaries)?;
    info!(
        "combined {} summaries into {} clusters",
        c.summaries.len(),
        global.n_clusters()
    );
    let mut inbound = std::mem::take(&mut c.inbound);
    let mut entropy_requests = 0;
    let merged = match search.strategy {
        SearchStrategy::Greedy => greedy_search(&global, search)?,
        SearchStrategy::Random => {
            if c.connections.iter().any(Option::is_some) {
                let mut oracle = RemoteOracle {
                    connections: &mut c.connections,
                    nodes: &c.nodes,
                    requests: 0,
                    inbound: capture.then_some(&mut inbound),
                };
                let g = random_search(&global, search, Some(&mut oracle))?;
                entropy_requests = oracle.requests;
                g
            } else {
                random_search(&global, search, None)?
            }
        }
    };
    // Closing the connections releases nodes waiting for entropy requests.
    drop(c.connections);
    let report = merged.report()?;
    Ok(CoordinatorOutput {
        global: merged,
        report,
        nodes: c.nodes,
        dropouts: c.dropouts,
        entropy_requests,
        inbound,
    })
}

pub fn run_coordinator(source: &Source, config: &CoordinatorConfig) -> Result<CoordinatorOutput> {
    let collection = match source {
        Source::Tcp(nodes) => collect_tcp(nodes, config)?,
        Source::Dir(dir) => collect_dir(dir, config)?,
    };
    merge_collection(collection, &config.search, config.capture_inbound)
}

#[derive(Serialize)]
struct RunRecord<'a> {
    nodes: &'a [String],
    dropouts: &'a [Dropout],
    search: &'a SearchConfig,
    entropy_requests: usize,
}

impl CoordinatorOutput {
    /// Writes `global.json`, `run.json`, `membership.csv` and `profile.csv`.
    pub fn write(&self, dir: &Path, search: &SearchConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("global.json"), serde_json::to_string_pretty(&self.report)?.as_bytes())?;
        let run = RunRecord {
            nodes: &self.nodes,
            dropouts: &self.dropouts,
            search,
            entropy_requests: self.entropy_requests,
        };
        write_atomic(&dir.join("run.json"), serde_json::to_string_pretty(&run)?.as_bytes())?;
        let mut csv = String::from("batch_id,local_cluster,global_cluster\n");
        for (b, map) in self.report.membership.iter().enumerate() {
            for (l, g) in map.iter().enumerate() {
                csv.push_str(&format!("{},{l},{g}\n", self.report.batch_ids[b]));
            }
        }
        write_atomic(&dir.join("membership.csv"), csv.as_bytes())?;
        let profile = expected_profile(&self.report, None)?;
        write_atomic(&dir.join("profile.csv"), profile.to_csv().as_bytes())?;
        Ok(())
    }
}
