//! Manifest-driven replications of simulation regimes.
//!
//! Dataset d is generated with `generator.seed + d`; initialisation s of it
//! uses `model.seed + s` for the fit, the batch shuffle and the global search.
//! Reports carry no timings so identical manifests give identical bytes; wall
//! times go to a separate sidecar.

use std::path::Path;

use anyhow::{bail, Context};
use fedmerdel_core::datagen::{generate, partition, GenSpec, PartitionMode, GENERATOR};
use fedmerdel_core::federation::{SearchConfig, SummaryOptions};
use fedmerdel_core::metrics::{ari, selection_f1, Quartiles};
use fedmerdel_core::MerDelConfig;
use fedmerdel_transport::PriorSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{fit_local, run_federated, FederatedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedManifest {
    pub batches: usize,
    #[serde(default = "random_partition")]
    pub partition: PartitionMode,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub summary: SummaryOptions,
}

fn random_partition() -> PartitionMode {
    PartitionMode::Random
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub name: String,
    pub generator: GenSpec,
    pub datasets: usize,
    pub initialisations: usize,
    #[serde(default)]
    pub model: MerDelConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub variable_selection: bool,
    /// Also fit MerDel on each full dataset.
    #[serde(default = "yes")]
    pub full_data: bool,
    #[serde(default)]
    pub federated: Option<FederatedManifest>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.datasets == 0 || self.initialisations == 0 {
            bail!("manifest '{}' asks for no runs (datasets and initialisations must be positive)", self.name);
        }
        if !self.full_data && self.federated.is_none() {
            bail!("manifest '{}' runs neither full-data MerDel nor FedMerDel", self.name);
        }
        if let Some(f) = &self.federated {
            if f.batches == 0 {
                bail!("federated.batches must be positive");
            }
        }
        self.generator.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Merdel,
    Fedmerdel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: usize,
    pub initialisation: usize,
    pub method: Method,
    pub ari: f64,
    pub clusters: usize,
    pub elbo: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevant_found: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irrelevant_found: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub ari: Quartiles,
    pub clusters: Quartiles,
    pub elbo_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_f1_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevant_found_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irrelevant_found_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub generator: String,
    pub quantile_method: String,
    pub manifest: ExperimentManifest,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub dataset: usize,
    pub initialisation: usize,
    pub method: Method,
    /// Fit time; for FedMerDel the slowest batch (batches run in parallel in a deployment).
    pub fit_seconds: f64,
    /// Sum of batch fit times (FedMerDel only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_seconds_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub name: String,
    pub runs: Vec<TimingRecord>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-method quartiles recomputed from the run records.
pub fn summarise(runs: &[RunRecord]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = runs.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .filter_map(|m| {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.method == m).collect();
            let aris: Vec<f64> = rs.iter().map(|r| r.ari).collect();
            let ks: Vec<f64> = rs.iter().map(|r| r.clusters as f64).collect();
            Some(MethodSummary {
                method: m,
                runs: rs.len(),
                ari: Quartiles::of(&aris)?,
                clusters: Quartiles::of(&ks)?,
                elbo_mean: mean(rs.iter().map(|r| r.elbo))?,
                selection_f1_mean: mean(rs.iter().filter_map(|r| r.selection_f1)),
                relevant_found_mean: mean(rs.iter().filter_map(|r| r.relevant_found.map(|x| x as f64))),
                irrelevant_found_mean: mean(rs.iter().filter_map(|r| r.irrelevant_found.map(|x| x as f64))),
            })
        })
        .collect()
}

fn selection_scores(sel: &[bool], truth: &[bool]) -> anyhow::Result<(f64, usize, usize)> {
    let f1 = selection_f1(sel, truth)?;
    let rel = sel.iter().zip(truth).filter(|(s, t)| **s && **t).count();
    let irr = sel.iter().zip(truth).filter(|(s, t)| !**s && !**t).count();
    Ok((f1, rel, irr))
}

fn one_run(m: &ExperimentManifest, d: usize, s: usize) -> anyhow::Result<Vec<(RunRecord, TimingRecord)>> {
    let spec = GenSpec {
        seed: m.generator.seed + d as u64,
        ..m.generator.clone()
    };
    let g = generate(&spec)?;
    let priors = m.prior.priors(g.data.layout())?;
    let seed = m.model.seed + s as u64;
    let config = MerDelConfig { seed, ..m.model.clone() };
    let mut out = Vec::new();
    if m.full_data {
        let local = fit_local(&g.data, &config, &priors, m.variable_selection)?;
        let sel = local.selected.as_deref().map(|x| selection_scores(x, &g.relevant)).transpose()?;
        out.push((
            RunRecord {
                dataset: d,
                initialisation: s,
                method: Method::Merdel,
                ari: ari(&local.fit.labels, &g.labels)?,
                clusters: local.fit.live_clusters,
                elbo: local.fit.elbo_final,
                converged: local.fit.converged,
                selection_f1: sel.map(|x| x.0),
                relevant_found: sel.map(|x| x.1),
                irrelevant_found: sel.map(|x| x.2),
            },
            TimingRecord {
                dataset: d,
                initialisation: s,
                method: Method::Merdel,
                fit_seconds: local.seconds,
                fit_seconds_total: None,
                merge_seconds: None,
            },
        ));
    }
    if let Some(f) = &m.federated {
        let batches = partition(&g.data, &g.labels, f.partition, f.batches, seed)?;
        let search = SearchConfig { seed, ..f.search.clone() };
        let summary = SummaryOptions {
            allow_unconverged: true,
            ..f.summary.clone()
        };
        let run = run_federated(
            &batches,
            g.data.n_rows(),
            &FederatedSpec {
                config: &config,
                priors: &priors,
                search: &search,
                summary: &summary,
                varsel: m.variable_selection,
            },
        )?;
        let sel = run.selected.as_deref().map(|x| selection_scores(x, &g.relevant)).transpose()?;
        out.push((
            RunRecord {
                dataset: d,
                initialisation: s,
                method: Method::Fedmerdel,
                ari: ari(&run.labels, &g.labels)?,
                clusters: run.live_clusters(),
                elbo: fedmerdel_core::federation::global_elbo(&run.global)?,
                converged: true,
                selection_f1: sel.map(|x| x.0),
                relevant_found: sel.map(|x| x.1),
                irrelevant_found: sel.map(|x| x.2),
            },
            TimingRecord {
                dataset: d,
                initialisation: s,
                method: Method::Fedmerdel,
                fit_seconds: run.fit_seconds.iter().copied().fold(0.0, f64::max),
                fit_seconds_total: Some(run.fit_seconds.iter().sum()),
                merge_seconds: Some(run.merge_seconds),
            },
        ));
    }
    Ok(out)
}

/// Runs every (dataset, initialisation) pair on a pool of `jobs` threads
/// (0 = rayon default).
pub fn run_experiment(m: &ExperimentManifest, jobs: usize) -> anyhow::Result<(ExperimentReport, Timings)> {
    m.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let pairs: Vec<(usize, usize)> = (0..m.datasets)
        .flat_map(|d| (0..m.initialisations).map(move |s| (d, s)))
        .collect();
    let results: Vec<Vec<(RunRecord, TimingRecord)>> =
        pool.install(|| pairs.par_iter().map(|&(d, s)| one_run(m, d, s)).collect::<anyhow::Result<_>>())?;
    let (runs, timings): (Vec<RunRecord>, Vec<TimingRecord>) = results.into_iter().flatten().unzip();
    let report = ExperimentReport {
        name: m.name.clone(),
        generator: GENERATOR.to_string(),
        quantile_method: "type 7 (linear interpolation between order statistics)".into(),
        manifest: m.clone(),
        summary: summarise(&runs),
        runs,
    };
    Ok((
        report,
        Timings {
            name: m.name.clone(),
            runs: timings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentManifest {
        serde_json::from_str(
            r#"{"name":"tiny","generator":{"n":120,"p":8,"k_true":2,"seed":1},
                "datasets":2,"initialisations":2,"model":{"k_init":5},
                "federated":{"batches":2}}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_manifest_is_a_usage_error() {
        assert!(serde_json::from_str::<ExperimentManifest>("{}").is_err());
        let mut m = tiny();
        m.datasets = 0;
        assert!(m.validate().is_err());
        let mut m = tiny();
        m.full_data = false;
        m.federated = None;
        assert!(m.validate().is_err());
    }

    #[test]
    fn report_quantiles_recompute_from_runs() {
        let (report, timings) = run_experiment(&tiny(), 1).unwrap();
        assert_eq!(report.runs.len(), 8);
        assert_eq!(timings.runs.len(), 8);
        assert_eq!(summarise(&report.runs), report.summary);
        let fed: Vec<f64> = report.runs.iter().filter(|r| r.method == Method::Fedmerdel).map(|r| r.ari).collect();
        let q = report.summary.iter().find(|s| s.method == Method::Fedmerdel).unwrap();
        assert_eq!(q.ari, Quartiles::of(&fed).unwrap());
        let again = run_experiment(&tiny(), 2).unwrap().0;
        assert_eq!(serde_json::to_string(&report).unwrap(), serde_json::to_string(&again).unwrap());
    }
}
