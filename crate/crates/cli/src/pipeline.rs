//! In-process MerDel and FedMerDel runs shared by the CLI and the experiment runner.

use std::time::Instant;

use fedmerdel_core::datagen::Batch;
use fedmerdel_core::federation::{
    aggregate_variable_selection, combine_summaries, greedy_search, random_search, summarize_batch, NodeRetained,
    SearchConfig, SearchStrategy, SummaryOptions,
};
use fedmerdel_core::merdel::{fit_merdel, LIVE_THRESHOLD};
use fedmerdel_core::varsel::fit_merdel_vs;
use fedmerdel_core::{BatchSummary, CategoricalDataset, FittedModel, GlobalModel, MerDelConfig, Priors};
use rayon::prelude::*;

/// A full-data fit plus the selection mask when variable selection ran.
pub struct LocalFit {
    pub fit: FittedModel,
    pub selected: Option<Vec<bool>>,
    pub seconds: f64,
}

pub fn fit_local(data: &CategoricalDataset, config: &MerDelConfig, priors: &Priors, varsel: bool) -> anyhow::Result<LocalFit> {
    let t = Instant::now();
    let (fit, selected) = if varsel {
        let (fit, sel) = fit_merdel_vs(data, config, priors)?;
        (fit, Some(sel.selected()))
    } else {
        (fit_merdel(data, config, priors)?, None)
    };
    Ok(LocalFit {
        fit,
        selected,
        seconds: t.elapsed().as_secs_f64(),
    })
}

pub struct FederatedRun {
    pub global: GlobalModel,
    pub summaries: Vec<BatchSummary>,
    /// Global label of every input row, in the original row order.
    pub labels: Vec<usize>,
    pub selected: Option<Vec<bool>>,
    /// Wall time of each batch fit.
    pub fit_seconds: Vec<f64>,
    pub merge_seconds: f64,
}

impl FederatedRun {
    /// Global clusters with expected size above the live threshold.
    pub fn live_clusters(&self) -> usize {
        let alpha0 = self.global.priors.alpha0;
        self.global.params.alpha.iter().filter(|&&a| a - alpha0 > LIVE_THRESHOLD).count()
    }
}

pub struct FederatedSpec<'a> {
    pub config: &'a MerDelConfig,
    pub priors: &'a Priors,
    pub search: &'a SearchConfig,
    pub summary: &'a SummaryOptions,
    pub varsel: bool,
}

/// Fits every batch, summarises, combines and searches. Batch fits run on the
/// current rayon pool; results do not depend on scheduling.
pub fn run_federated(batches: &[Batch], n_rows: usize, spec: &FederatedSpec) -> anyhow::Result<FederatedRun> {
    let fits: Vec<(BatchSummary, NodeRetained<f64>, f64)> = batches
        .par_iter()
        .enumerate()
        .map(|(b, batch)| {
            let local = fit_local(&batch.data, spec.config, spec.priors, spec.varsel)?;
            let (s, r) = summarize_batch(
                &local.fit,
                spec.priors,
                batch.data.layout(),
                &format!("batch{b}"),
                local.selected,
                spec.summary,
            )?;
            Ok((s, r, local.seconds))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut summaries = Vec::with_capacity(fits.len());
    let mut retained = Vec::with_capacity(fits.len());
    let mut fit_seconds = Vec::with_capacity(fits.len());
    for (s, r, t) in fits {
        summaries.push(s);
        retained.push(r);
        fit_seconds.push(t);
    }
    let t = Instant::now();
    let combined = combine_summaries(&summaries)?;
    let global = match spec.search.strategy {
        SearchStrategy::Greedy => greedy_search(&combined, spec.search)?,
        SearchStrategy::Random if !spec.search.cross_batch_only => {
            random_search(&combined, spec.search, Some(&mut retained))?
        }
        SearchStrategy::Random => random_search(&combined, spec.search, None)?,
    };
    let merge_seconds = t.elapsed().as_secs_f64();
    let locals: Vec<Vec<usize>> = retained.iter().map(|r| r.local_labels.clone()).collect();
    let mapped = fedmerdel_core::federation::map_labels(&global, &locals)?;
    let mut labels = vec![0usize; n_rows];
    let mut it = mapped.into_iter();
    for batch in batches {
        for &i in &batch.indices {
            labels[i] = it.next().expect("one mapped label per row");
        }
    }
    let selected = if spec.varsel {
        Some(aggregate_variable_selection(&summaries)?)
    } else {
        None
    };
    Ok(FederatedRun {
        global,
        summaries,
        labels,
        selected,
        fit_seconds,
        merge_seconds,
    })
}
