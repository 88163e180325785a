use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::thread::JoinHandle;
use std::time::Duration;

use fedmerdel_core::datagen::{generate, partition, Batch, GenSpec, PartitionMode};
use fedmerdel_core::federation::{combine_summaries, greedy_search, map_labels, SearchConfig, SearchStrategy};
use fedmerdel_core::metrics::ari;
use fedmerdel_core::{CategoricalDataset, MerDelConfig};
use fedmerdel_transport::audit::audit_inbound;
use fedmerdel_transport::coordinator::InboundFrame;
use fedmerdel_transport::frame::{read_frame, write_frame};
use fedmerdel_transport::message::{EntropyRequest, MessageKind};
use fedmerdel_transport::node::{serve_connection, REQUEST_FILE};
use fedmerdel_transport::{
    handle_fit, run_coordinator, serve_node_dir, serve_node_tcp, CoordinatorConfig, DataRef, FitRequest, NodeOptions,
    NodeOutcome, NodeSpec, PriorSpec, Source, TransportError, WireMessage,
};

fn batches(b: usize, seed: u64) -> (Vec<Batch>, tempfile::TempDir) {
    let g = generate(&GenSpec::binary(450, 12, 3, seed)).unwrap();
    let parts = partition(&g.data, &g.labels, PartitionMode::Random, b, seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, p) in parts.iter().enumerate() {
        p.data.write_csv_path(dir.path().join(format!("b{i}.csv"))).unwrap();
    }
    (parts, dir)
}

fn request(i: usize, data_ref: DataRef, retain: bool) -> FitRequest {
    FitRequest {
        batch_id: format!("b{i}"),
        config: MerDelConfig {
            k_init: 6,
            seed: 11,
            ..Default::default()
        },
        prior: PriorSpec::default(),
        data_ref,
        cardinalities: Some(vec![2; 12]),
        variable_selection: false,
        summary: Default::default(),
        retain_for_entropy: retain,
    }
}

fn spawn_node(csv: PathBuf) -> (String, JoinHandle<fedmerdel_transport::Result<NodeOutcome>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let opts = NodeOptions {
        data: Some(csv),
        ..Default::default()
    };
    (addr, std::thread::spawn(move || serve_node_tcp(listener, &opts)))
}

fn tcp_run(
    parts: usize,
    dir: &Path,
    retain: bool,
    config: &CoordinatorConfig,
) -> (fedmerdel_transport::CoordinatorOutput, Vec<NodeOutcome>) {
    let mut specs = Vec::new();
    let mut handles = Vec::new();
    for i in 0..parts {
        let (addr, h) = spawn_node(dir.join(format!("b{i}.csv")));
        specs.push(NodeSpec {
            addr,
            request: request(i, DataRef::NodeLocal, retain),
        });
        handles.push(h);
    }
    let out = run_coordinator(&Source::Tcp(specs), config).unwrap();
    let outcomes = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
    (out, outcomes)
}

#[test]
fn tcp_matches_in_process_path() {
    let (parts, dir) = batches(2, 3);
    let config = CoordinatorConfig {
        capture_inbound: true,
        ..Default::default()
    };
    let (out, outcomes) = tcp_run(2, dir.path(), false, &config);

    let mut summaries = Vec::new();
    let mut locals = Vec::new();
    for i in 0..2 {
        let req = request(i, DataRef::Path { path: dir.path().join(format!("b{i}.csv")) }, false);
        let (s, r) = handle_fit(&req, &NodeOptions::default()).unwrap();
        summaries.push(s);
        locals.push(r.local_labels);
    }
    let g = greedy_search(&combine_summaries(&summaries).unwrap(), &SearchConfig::default()).unwrap();
    assert_eq!(g, out.global);

    let truth: Vec<usize> = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
    let remote_locals: Vec<Vec<usize>> = outcomes.iter().map(|o| o.retained.local_labels.clone()).collect();
    let a_tcp = ari(&map_labels(&out.global, &remote_locals).unwrap(), &truth).unwrap();
    let a_local = ari(&map_labels(&g, &locals).unwrap(), &truth).unwrap();
    assert_eq!(a_tcp.to_bits(), a_local.to_bits());

    // one summary per node and nothing else
    let datasets: Vec<&CategoricalDataset> = parts.iter().map(|p| &p.data).collect();
    let audit = audit_inbound(&out.inbound, &datasets);
    assert!(audit.clean(), "{audit:?}");
    assert_eq!(audit.summaries_per_node.len(), 2);
    assert!(audit.summaries_per_node.values().all(|&c| c == 1));
}

#[test]
fn file_mode_equals_tcp_mode() {
    let (_, dir) = batches(3, 5);
    let (tcp, _) = tcp_run(3, dir.path(), false, &CoordinatorConfig::default());

    let runs = tempfile::tempdir().unwrap();
    for i in 0..3 {
        let node_dir = runs.path().join(format!("node{i}"));
        std::fs::create_dir(&node_dir).unwrap();
        let req = request(i, DataRef::NodeLocal, false);
        std::fs::write(node_dir.join(REQUEST_FILE), WireMessage::FitRequest(req).encode().unwrap()).unwrap();
        let opts = NodeOptions {
            data: Some(dir.path().join(format!("b{i}.csv"))),
            ..Default::default()
        };
        serve_node_dir(&node_dir, &opts).unwrap();
    }
    let file = run_coordinator(&Source::Dir(runs.path().to_path_buf()), &CoordinatorConfig::default()).unwrap();
    assert_eq!(file.global, tcp.global);
    assert_eq!(file.report, tcp.report);

    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    file.write(out_a.path(), &SearchConfig::default()).unwrap();
    tcp.write(out_b.path(), &SearchConfig::default()).unwrap();
    for name in ["global.json", "membership.csv", "profile.csv"] {
        assert_eq!(
            std::fs::read(out_a.path().join(name)).unwrap(),
            std::fs::read(out_b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn straggler_is_dropped_when_quorum_met() {
    let (_, dir) = batches(2, 7);
    let mut specs = Vec::new();
    let mut handles = Vec::new();
    for i in 0..2 {
        let (addr, h) = spawn_node(dir.path().join(format!("b{i}.csv")));
        specs.push(NodeSpec {
            addr,
            request: request(i, DataRef::NodeLocal, false),
        });
        handles.push(h);
    }
    // accepts the connection (backlog) but never answers
    let silent = TcpListener::bind("127.0.0.1:0").unwrap();
    specs.push(NodeSpec {
        addr: silent.local_addr().unwrap().to_string(),
        request: request(2, DataRef::NodeLocal, false),
    });
    let config = CoordinatorConfig {
        timeout: Duration::from_secs(3),
        min_nodes: 2,
        ..Default::default()
    };
    let out = run_coordinator(&Source::Tcp(specs.clone()), &config).unwrap();
    assert_eq!(out.nodes.len(), 2);
    assert_eq!(out.dropouts.len(), 1);
    assert_eq!(out.dropouts[0].node, specs[2].addr);
    for h in handles {
        h.join().unwrap().unwrap();
    }

    let config = CoordinatorConfig {
        timeout: Duration::from_millis(300),
        min_nodes: 1,
        ..Default::default()
    };
    let err = run_coordinator(&Source::Tcp(vec![specs[2].clone()]), &config).unwrap_err();
    assert!(matches!(err, TransportError::PartialCollection { got: 0, need: 1 }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn entropy_reply_matches_local_computation() {
    let (_, dir) = batches(1, 9);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = NodeOptions {
        data: Some(dir.path().join("b0.csv")),
        ..Default::default()
    };
    let node = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        serve_connection(s, &opts)
    });
    let mut s = TcpStream::connect(addr).unwrap();
    let mut req = request(0, DataRef::NodeLocal, true);
    req.config.k_init = 8;
    req.config.laps = fedmerdel_core::Laps::Never;
    req.summary.allow_unconverged = true;
    write_frame(&mut s, &WireMessage::FitRequest(req).encode().unwrap()).unwrap();
    let first = WireMessage::decode(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    let WireMessage::BatchSummary(w) = first else { panic!("{first:?}") };
    let k = w.k_clusters;
    assert!(k >= 2);
    let (a, b) = (0, k - 1);
    let q = WireMessage::EntropyRequest(EntropyRequest {
        group_a: vec![a],
        group_b: vec![b],
    });
    write_frame(&mut s, &q.encode().unwrap()).unwrap();
    let reply = WireMessage::decode(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    let bad = WireMessage::EntropyRequest(EntropyRequest {
        group_a: vec![99],
        group_b: vec![0],
    });
    write_frame(&mut s, &bad.encode().unwrap()).unwrap();
    let err = WireMessage::decode(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    assert!(matches!(err, WireMessage::Error(_)));
    drop(s);
    let outcome = node.join().unwrap().unwrap();
    assert_eq!(outcome.entropy_requests, 2);

    let xlx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let r = &outcome.retained.resp;
    let expected: f64 = (0..r.n_rows())
        .map(|n| {
            let (ra, rb) = (r.get(n, a), r.get(n, b));
            xlx(ra + rb) - xlx(ra) - xlx(rb)
        })
        .sum();
    let WireMessage::EntropyReply(v) = reply else { panic!("{reply:?}") };
    assert!((v.value.0 - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    assert!(v.value.0 >= 0.0);
}

#[test]
fn random_search_with_remote_entropy() {
    let (parts, dir) = batches(2, 13);
    let config = CoordinatorConfig {
        search: SearchConfig {
            strategy: SearchStrategy::Random,
            cross_batch_only: false,
            ..Default::default()
        },
        capture_inbound: true,
        ..Default::default()
    };
    let (out, _) = tcp_run(2, dir.path(), true, &config);
    let kinds: Vec<MessageKind> = out.inbound.iter().map(|f| f.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == MessageKind::BatchSummary).count(), 2);
    assert_eq!(kinds.len() - 2, out.entropy_requests);
    let datasets: Vec<&CategoricalDataset> = parts.iter().map(|p| &p.data).collect();
    assert!(audit_inbound(&out.inbound, &datasets).clean());
}

#[test]
fn malformed_request_gets_an_error_reply() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let node = std::thread::spawn(move || serve_node_tcp(listener, &NodeOptions::default()));
    let mut s = TcpStream::connect(addr).unwrap();
    write_frame(&mut s, b"{\"version\":1,\"kind\":\"fit_request\",\"payload\":{").unwrap();
    let reply = WireMessage::decode(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    assert!(matches!(reply, WireMessage::Error(_)));
    assert!(node.join().unwrap().is_err());

    // node-local data requested from a node without any
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let node = std::thread::spawn(move || serve_node_tcp(listener, &NodeOptions::default()));
    let spec = NodeSpec {
        addr,
        request: request(0, DataRef::NodeLocal, false),
    };
    let err = run_coordinator(&Source::Tcp(vec![spec]), &CoordinatorConfig::default()).unwrap_err();
    assert!(matches!(err, TransportError::PartialCollection { .. }));
    assert!(node.join().unwrap().is_err());
}

#[test]
fn incompatible_priors_abort() {
    let (_, dir) = batches(2, 17);
    let mut specs = Vec::new();
    let mut handles = Vec::new();
    for i in 0..2 {
        let (addr, h) = spawn_node(dir.path().join(format!("b{i}.csv")));
        let mut req = request(i, DataRef::NodeLocal, false);
        req.prior.alpha0 = if i == 0 { 0.01 } else { 0.02 };
        specs.push(NodeSpec { addr, request: req });
        handles.push(h);
    }
    let err = run_coordinator(&Source::Tcp(specs), &CoordinatorConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        TransportError::Core(fedmerdel_core::Error::IncompatiblePriors { .. })
    ));
    assert_eq!(err.exit_code(), 2);
    for h in handles {
        h.join().unwrap().unwrap();
    }
}

#[test]
fn audit_catches_leaks() {
    let rows: Vec<Vec<usize>> = (0..20).map(|n| (0..10).map(|j| (n >> (j % 5)) & 1).collect()).collect();
    let d = CategoricalDataset::from_rows(&rows, vec![2; 10]).unwrap();
    let leak_row = InboundFrame {
        node: "x".into(),
        kind: MessageKind::BatchSummary,
        bytes: format!("{{\"row\":{:?}}}", rows[3]).into_bytes(),
    };
    let resp: Vec<f64> = (0..20).map(|n| n as f64 / 20.0).collect();
    let leak_resp = InboundFrame {
        node: "y".into(),
        kind: MessageKind::BatchSummary,
        bytes: serde_json::to_vec(&serde_json::json!({ "r": resp })).unwrap(),
    };
    let report = audit_inbound(&[leak_row, leak_resp], &[&d]);
    assert_eq!(report.violations.len(), 3, "{report:?}");
}
