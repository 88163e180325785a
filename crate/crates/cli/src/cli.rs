//! Command-line definitions and dispatch.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedmerdel_core::datagen::{generate, partition, ClusterWeights, GenSpec, Manifest, PartitionMode, GENERATOR};
use fedmerdel_core::federation::{SearchConfig, SearchStrategy, SummaryOptions};
use fedmerdel_core::metrics::{ari, profile, selection_f1};
use fedmerdel_core::{CategoricalDataset, Criterion, Laps, MerDelConfig};
use fedmerdel_transport::coordinator::{CoordinatorConfig, NodeSpec, Source};
use fedmerdel_transport::node::write_atomic;
use fedmerdel_transport::{
    run_coordinator, serve_node_dir, serve_node_tcp, DataRef, FitRequest, NodeOptions, PriorSpec, TransportError,
    WireMessage,
};
use serde::Serialize;
use serde_json::json;

use crate::experiment::{run_experiment, ExperimentManifest};
use crate::io::{read_labels, read_mask, write_json, write_labels, write_mask};
use crate::pipeline::{fit_local, run_federated, FederatedSpec};

#[derive(Debug, Parser)]
#[command(name = "fedmerdel", version, about = "MerDel clustering of categorical data and one-shot federated merging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit MerDel on one dataset.
    Fit(FitArgs),
    /// Split a dataset into batches and run FedMerDel in-process.
    Federate(FederateArgs),
    /// Generate a synthetic categorical dataset.
    Simulate(SimulateArgs),
    /// ARI and selection F1 against known truth.
    Evaluate(EvaluateArgs),
    /// Per-cluster category prevalences.
    Profile(ProfileArgs),
    /// Run a replication manifest.
    Experiment(ExperimentArgs),
    /// Serve one fit request (TCP or run directory).
    Node(NodeArgs),
    /// Collect batch summaries and run the global merge.
    Coordinate(CoordinateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Initial number of clusters.
    #[arg(long, default_value_t = 20)]
    pub k_init: usize,
    /// EM cycles between move rounds, 0 for moves only, or "never".
    #[arg(long, default_value = "5")]
    pub laps: Laps,
    /// Merge candidate criterion (also used by the global search).
    #[arg(long, default_value = "correlation")]
    pub criterion: Criterion,
    /// Relative ELBO tolerance.
    #[arg(long, default_value_t = 5e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Fit the variable-selection model.
    #[arg(long)]
    pub varsel: bool,
    #[arg(long, default_value_t = 0.01)]
    pub alpha0: f64,
    /// RNG seed; FEDMERDEL_SEED is used when the flag is absent.
    #[arg(long, env = "FEDMERDEL_SEED")]
    pub seed: Option<u64>,
}

impl ModelArgs {
    pub fn config(&self) -> MerDelConfig {
        MerDelConfig {
            k_init: self.k_init,
            laps: self.laps,
            merge_criterion: self.criterion,
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed.unwrap_or(0),
            ..Default::default()
        }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec {
            alpha0: self.alpha0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, default_value = "greedy")]
    pub search: SearchStrategy,
    /// Random search: stop after this many consecutive rejections.
    #[arg(long, default_value_t = 10)]
    pub stop_after: usize,
    /// Random search may merge clusters of the same batch (needs entropy corrections from the nodes).
    #[arg(long)]
    pub allow_same_batch: bool,
}

impl SearchArgs {
    fn config(&self, criterion: Criterion, seed: u64) -> SearchConfig {
        SearchConfig {
            strategy: self.search,
            criterion,
            stop_after: self.stop_after,
            seed,
            cross_batch_only: !self.allow_same_batch,
            ..Default::default()
        }
    }
}

fn parse_cards(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("bad cardinality {x:?}")))
        .collect()
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with a header and one integer category per cell.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated L_j; inferred from the data when absent.
    #[arg(long, value_parser = parse_cards)]
    pub cardinalities: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Identifier written into summary.json.
    #[arg(long, default_value = "batch0")]
    pub batch_id: String,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct FederateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_cards)]
    pub cardinalities: Option<Vec<usize>>,
    /// True labels; needed by the non-random partition modes and for reporting ARI.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub batches: usize,
    /// random, exclusive:<k>, disjoint, disjoint_plus_shared:<m>, dirichlet_skew.
    #[arg(long, default_value = "random")]
    pub partition: PartitionMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for batch fits (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub k: usize,
    /// Trailing variables without cluster structure.
    #[arg(long, default_value_t = 0)]
    pub noise: usize,
    /// equal, range:<min>:<max>, sizes:<n1>,<n2>,..., probs:<p1>,<p2>,...
    #[arg(long, default_value = "equal", value_parser = parse_weights)]
    pub sizes: ClusterWeights,
    /// Categories per variable (2 = binary).
    #[arg(long, default_value_t = 2)]
    pub categories: usize,
    /// Beta shape parameters for binary variables.
    #[arg(long, default_value = "1,5", value_parser = parse_beta)]
    pub beta: (f64, f64),
    #[arg(long, env = "FEDMERDEL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also split into this many batches.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, default_value = "random")]
    pub partition: PartitionMode,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_weights(s: &str) -> Result<ClusterWeights, String> {
    let nums = |a: &str| -> Result<Vec<f64>, String> {
        a.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?}")))
            .collect()
    };
    match s.split_once(':') {
        None if s == "equal" => Ok(ClusterWeights::Equal),
        Some(("range", rest)) => {
            let (a, b) = rest.split_once(':').ok_or("range needs min:max")?;
            Ok(ClusterWeights::SizeRange {
                min: a.parse().map_err(|_| format!("bad min {a:?}"))?,
                max: b.parse().map_err(|_| format!("bad max {b:?}"))?,
            })
        }
        Some(("sizes", rest)) => Ok(ClusterWeights::Sizes {
            sizes: nums(rest)?.into_iter().map(|x| x as usize).collect(),
        }),
        Some(("probs", rest)) => Ok(ClusterWeights::Probabilities { p: nums(rest)? }),
        _ => Err(format!("unknown size spec {s:?}")),
    }
}

fn parse_beta(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad {a:?}"))?,
        b.trim().parse().map_err(|_| format!("bad {b:?}"))?,
    ))
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Predicted selection mask (0/1 per variable).
    #[arg(long)]
    pub selected: Option<PathBuf>,
    #[arg(long)]
    pub relevant: Option<PathBuf>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileFormat {
    Csv,
    Ascii,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_parser = parse_cards)]
    pub cardinalities: Option<Vec<usize>>,
    /// Keep only the m most prevalent variables.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, value_enum, default_value_t = ProfileFormat::Csv)]
    pub format: ProfileFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Replaces the manifest's model seed; FEDMERDEL_SEED is used when the flag is absent.
    #[arg(long, env = "FEDMERDEL_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct NodeArgs {
    /// Address to accept one coordinator connection on.
    #[arg(long, conflicts_with = "dir", required_unless_present = "dir")]
    pub listen: Option<String>,
    /// Run directory holding request.json; summary.json is written next to it.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// This node's dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Local labels (summary index space) are written here.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Replaces the requested seed; FEDMERDEL_SEED is used when the flag is absent.
    #[arg(long, env = "FEDMERDEL_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CoordinateArgs {
    /// Comma-separated node addresses.
    #[arg(long, value_delimiter = ',', conflicts_with = "summaries", required_unless_present = "summaries")]
    pub nodes: Vec<String>,
    /// Directory of summary files or node run directories.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds to wait for stragglers.
    #[arg(long, default_value_t = 3600)]
    pub timeout: u64,
    #[arg(long, default_value_t = 1)]
    pub min_nodes: usize,
    /// Directory mode: wait for this many summaries.
    #[arg(long)]
    pub expect: Option<usize>,
    #[arg(long, value_parser = parse_cards)]
    pub cardinalities: Option<Vec<usize>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.downcast_ref::<TransportError>().map_or(1, TransportError::exit_code);
        Self { code, error }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Federate(a) => federate(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Profile(a) => profile_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Node(a) => node(a),
        Command::Coordinate(a) => coordinate(a),
    }
    .map_err(Failure::from)
}

fn load(path: &Path, cards: Option<Vec<usize>>) -> anyhow::Result<CategoricalDataset> {
    CategoricalDataset::read_csv_path(path, cards).with_context(|| format!("reading {}", path.display()))
}

fn mkdir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct FitReport {
    n_rows: usize,
    n_vars: usize,
    config: MerDelConfig,
    live_clusters: usize,
    elbo: f64,
    converged: bool,
    iterations: usize,
    accepted_moves: usize,
    proposed_moves: usize,
    cluster_sizes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<Vec<bool>>,
    elbo_trace: Vec<f64>,
}

fn fit(a: FitArgs) -> anyhow::Result<()> {
    let data = load(&a.data, a.cardinalities.clone())?;
    let config = a.model.config();
    let priors = a.model.prior().priors(data.layout())?;
    let local = fit_local(&data, &config, &priors, a.model.varsel)?;
    let f = &local.fit;
    mkdir(&a.out)?;
    write_labels(&a.out.join("labels.csv"), &f.labels)?;
    let report = FitReport {
        n_rows: data.n_rows(),
        n_vars: data.n_vars(),
        config: config.clone(),
        live_clusters: f.live_clusters,
        elbo: f.elbo_final,
        converged: f.converged,
        iterations: f.iterations,
        accepted_moves: f.accepted_moves(),
        proposed_moves: f.move_log.len(),
        cluster_sizes: f.state.cluster_sizes(&priors),
        selected: local.selected.clone(),
        elbo_trace: f.state.elbo_trace.clone(),
    };
    write_json(&a.out.join("fit.json"), &report)?;
    if let Some(sel) = &local.selected {
        write_mask(&a.out.join("selected.csv"), "selected", sel)?;
    }
    let options = SummaryOptions {
        allow_unconverged: true,
        ..Default::default()
    };
    let (summary, _) = fedmerdel_core::federation::summarize_batch(
        f,
        &priors,
        data.layout(),
        &a.batch_id,
        local.selected.clone(),
        &options,
    )?;
    write_atomic(
        &a.out.join("summary.json"),
        &WireMessage::BatchSummary(summary.to_wire()).encode()?,
    )?;
    write_json(&a.out.join("timings.json"), &json!({ "fit_seconds": local.seconds }))?;
    log::info!(
        "{} live clusters, ELBO {:.6}, converged {}",
        f.live_clusters,
        f.elbo_final,
        f.converged
    );
    Ok(())
}

fn federate(a: FederateArgs) -> anyhow::Result<()> {
    let data = load(&a.data, a.cardinalities.clone())?;
    let truth = a.truth.as_deref().map(read_labels).transpose()?;
    if let Some(t) = &truth {
        if t.len() != data.n_rows() {
            bail!("{} truth labels for {} rows", t.len(), data.n_rows());
        }
    }
    if truth.is_none() && a.partition != PartitionMode::Random {
        bail!("partition mode {:?} needs --truth", a.partition);
    }
    let dummy = vec![0usize; data.n_rows()];
    let config = a.model.config();
    let priors = a.model.prior().priors(data.layout())?;
    let batches = partition(&data, truth.as_deref().unwrap_or(&dummy), a.partition, a.batches, config.seed)?;
    let search = a.search.config(a.model.criterion, config.seed);
    let summary = SummaryOptions {
        allow_unconverged: true,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let run = pool.install(|| {
        run_federated(
            &batches,
            data.n_rows(),
            &FederatedSpec {
                config: &config,
                priors: &priors,
                search: &search,
                summary: &summary,
                varsel: a.model.varsel,
            },
        )
    })?;
    mkdir(&a.out)?;
    write_labels(&a.out.join("labels.csv"), &run.labels)?;
    let report = run.global.report()?;
    write_json(&a.out.join("global.json"), &report)?;
    let mut membership = String::from("batch_id,local_cluster,global_cluster\n");
    for (b, map) in report.membership.iter().enumerate() {
        for (l, g) in map.iter().enumerate() {
            membership.push_str(&format!("{},{l},{g}\n", report.batch_ids[b]));
        }
    }
    std::fs::write(a.out.join("membership.csv"), membership)?;
    std::fs::write(
        a.out.join("profile.csv"),
        profile(&data, &run.labels, None)?.to_csv(),
    )?;
    let sdir = a.out.join("summaries");
    mkdir(&sdir)?;
    for s in &run.summaries {
        write_atomic(
            &sdir.join(format!("{}.json", s.batch_id)),
            &WireMessage::BatchSummary(s.to_wire()).encode()?,
        )?;
    }
    if let Some(sel) = &run.selected {
        write_mask(&a.out.join("selected.csv"), "selected", sel)?;
    }
    let mut eval = json!({
        "batches": a.batches,
        "partition": a.partition,
        "search": search,
        "global_clusters": report.n_clusters,
        "live_clusters": run.live_clusters(),
        "elbo": report.elbo,
        "merges": report.merge_history.len(),
    });
    if let Some(t) = &truth {
        eval["ari"] = json!(ari(&run.labels, t)?);
    }
    write_json(&a.out.join("run.json"), &eval)?;
    write_json(
        &a.out.join("timings.json"),
        &json!({ "fit_seconds": run.fit_seconds, "merge_seconds": run.merge_seconds }),
    )?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let spec = GenSpec {
        n: a.n,
        p: a.p,
        k_true: a.k,
        weights: a.sizes.clone(),
        cardinalities: (a.categories != 2).then(|| vec![a.categories; a.p]),
        n_noise_vars: a.noise,
        beta: a.beta,
        seed: a.seed,
    };
    let g = generate(&spec)?;
    mkdir(&a.out)?;
    g.data.write_csv_path(a.out.join("data.csv"))?;
    write_labels(&a.out.join("labels.csv"), &g.labels)?;
    write_mask(&a.out.join("relevant.csv"), "relevant", &g.relevant)?;
    write_json(
        &a.out.join("manifest.json"),
        &Manifest {
            generator: GENERATOR.into(),
            spec,
            data_path: "data.csv".into(),
            labels_path: "labels.csv".into(),
            relevant: g.relevant.clone(),
        },
    )?;
    if let Some(b) = a.batches {
        let dir = a.out.join("batches");
        mkdir(&dir)?;
        for (i, batch) in partition(&g.data, &g.labels, a.partition, b, a.seed)?.iter().enumerate() {
            batch.data.write_csv_path(dir.join(format!("batch{i}.csv")))?;
            write_labels(&dir.join(format!("batch{i}_labels.csv")), &batch.labels)?;
            write_labels(&dir.join(format!("batch{i}_rows.csv")), &batch.indices)?;
        }
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let mut out = serde_json::Map::new();
    match (&a.labels, &a.truth) {
        (Some(l), Some(t)) => {
            let (l, t) = (read_labels(l)?, read_labels(t)?);
            let distinct = |v: &[usize]| {
                let mut x = v.to_vec();
                x.sort_unstable();
                x.dedup();
                x.len()
            };
            out.insert("ari".into(), json!(ari(&l, &t)?));
            out.insert("clusters".into(), json!(distinct(&l)));
            out.insert("true_clusters".into(), json!(distinct(&t)));
        }
        (None, None) => {}
        _ => bail!("--labels and --truth go together"),
    }
    match (&a.selected, &a.relevant) {
        (Some(s), Some(r)) => {
            let (s, r) = (read_mask(s)?, read_mask(r)?);
            out.insert("selection_f1".into(), json!(selection_f1(&s, &r)?));
            out.insert("selected".into(), json!(s.iter().filter(|x| **x).count()));
            out.insert(
                "relevant_found".into(),
                json!(s.iter().zip(&r).filter(|(a, b)| **a && **b).count()),
            );
        }
        (None, None) => {}
        _ => bail!("--selected and --relevant go together"),
    }
    if out.is_empty() {
        bail!("nothing to evaluate: give --labels/--truth and/or --selected/--relevant");
    }
    let value = serde_json::Value::Object(out);
    match &a.out {
        Some(p) => write_json(p, &value),
        None => {
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
    }
}

fn profile_cmd(a: ProfileArgs) -> anyhow::Result<()> {
    let data = load(&a.data, a.cardinalities.clone())?;
    let labels = read_labels(&a.labels)?;
    let table = profile(&data, &labels, a.top)?;
    let text = match a.format {
        ProfileFormat::Csv => table.to_csv(),
        ProfileFormat::Ascii => table.to_ascii(),
    };
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let mut manifest = ExperimentManifest::load(&a.manifest)?;
    if let Some(seed) = a.seed {
        manifest.model.seed = seed;
    }
    let t = Instant::now();
    let (report, timings) = run_experiment(&manifest, a.jobs)?;
    mkdir(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_json(
        &a.out.join("timings.json"),
        &json!({ "total_seconds": t.elapsed().as_secs_f64(), "runs": timings.runs }),
    )?;
    for s in &report.summary {
        println!(
            "{:<10} runs {:>4}  ARI {}  clusters {}",
            format!("{:?}", s.method),
            s.runs,
            s.ari,
            s.clusters
        );
    }
    Ok(())
}

fn node(a: NodeArgs) -> anyhow::Result<()> {
    let opts = NodeOptions {
        data: a.data.clone(),
        seed_override: a.seed,
        labels_out: a.labels_out.clone(),
    };
    let outcome = match (&a.listen, &a.dir) {
        (Some(addr), _) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            log::info!("listening on {}", listener.local_addr()?);
            serve_node_tcp(listener, &opts)?
        }
        (None, Some(dir)) => serve_node_dir(dir, &opts)?,
        (None, None) => bail!("give --listen or --dir"),
    };
    log::info!(
        "sent summary of {} clusters for batch {}; answered {} entropy requests",
        outcome.summary.k_clusters,
        outcome.summary.batch_id,
        outcome.entropy_requests
    );
    Ok(())
}

fn coordinate(a: CoordinateArgs) -> anyhow::Result<()> {
    let config = a.model.config();
    let search = a.search.config(a.model.criterion, config.seed);
    let source = match &a.summaries {
        Some(dir) => Source::Dir(dir.clone()),
        None => Source::Tcp(
            a.nodes
                .iter()
                .enumerate()
                .map(|(i, addr)| NodeSpec {
                    addr: addr.clone(),
                    request: FitRequest {
                        batch_id: format!("batch{i}"),
                        config: config.clone(),
                        prior: a.model.prior(),
                        data_ref: DataRef::NodeLocal,
                        cardinalities: a.cardinalities.clone(),
                        variable_selection: a.model.varsel,
                        summary: SummaryOptions {
                            allow_unconverged: true,
                            ..Default::default()
                        },
                        retain_for_entropy: a.search.allow_same_batch && a.search.search == SearchStrategy::Random,
                    },
                })
                .collect(),
        ),
    };
    let cfg = CoordinatorConfig {
        search: search.clone(),
        timeout: Duration::from_secs(a.timeout),
        min_nodes: a.min_nodes,
        expect: a.expect,
        capture_inbound: false,
    };
    let out = run_coordinator(&source, &cfg)?;
    out.write(&a.out, &search)?;
    for d in &out.dropouts {
        log::warn!("dropped {}: {}", d.node, d.reason);
    }
    log::info!(
        "{} summaries, {} global clusters after {} merges",
        out.nodes.len(),
        out.report.n_clusters,
        out.report.merge_history.len()
    );
    Ok(())
}
