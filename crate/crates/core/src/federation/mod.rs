//! One-shot federated merging of batch fits through their sufficient statistics.
//!
//! Each node fits MerDel on its batch and sends a [`BatchSummary`]. The
//! coordinator concatenates them into a [`GlobalModel`] (conceptually a
//! block-diagonal responsibility matrix that is never built) and merges
//! clusters across batches, scoring each merge with the global ELBO.

mod search;
mod wire;

use serde::{Deserialize, Serialize};

use crate::data::Layout;
use crate::elbo::{assignment_entropy, elbo_from_stats, suff_stats_unchecked};
use crate::error::{Error, Result};
use crate::merdel::FittedModel;
use crate::model::{Priors, Responsibilities, VariationalParams};
use crate::scalar::Scalar;

pub use search::{greedy_search, random_search, EntropyOracle, SearchConfig, SearchStrategy};
pub use wire::{prior_fingerprint, Sci, WirePrior, WireSummary, WIRE_VERSION};

/// Clusters with fewer expected members than this are flagged as identifying.
pub const PRIVACY_MIN_SIZE: f64 = 5.0;

/// The only artifact a node sends to the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary<F> {
    pub batch_id: String,
    pub n_obs: usize,
    pub k_clusters: usize,
    pub k_init: usize,
    pub cardinalities: Vec<usize>,
    pub alpha_star: Vec<F>,
    /// K_b rows of the flat layout.
    pub eps_star: Vec<F>,
    /// Σ_n Σ_k r_nk ln r_nk over the batch.
    pub entropy: F,
    pub priors: Priors<F>,
    pub fingerprint: String,
    pub selected_vars: Option<Vec<bool>>,
    /// Indices of clusters smaller than the privacy threshold.
    pub flagged: Vec<usize>,
    /// Small clusters kept node-side.
    pub withheld: usize,
    /// Expected size of the withheld clusters.
    pub withheld_mass: F,
}

impl<F: Scalar> BatchSummary<F> {
    pub fn layout(&self) -> Layout {
        Layout::new(self.cardinalities.clone())
    }

    pub fn params(&self) -> Result<VariationalParams<F>> {
        VariationalParams::new(self.alpha_star.clone(), self.eps_star.clone(), self.layout().width())
    }

    /// Σ_k T_k.
    pub fn total_mass(&self) -> F {
        self.alpha_star.iter().map(|&a| a - self.priors.alpha0).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryOptions {
    pub privacy_min_size: f64,
    /// Keep flagged clusters node-side instead of sending them.
    pub withhold_small: bool,
    /// Accept fits that hit the iteration cap.
    pub allow_unconverged: bool,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            privacy_min_size: PRIVACY_MIN_SIZE,
            withhold_small: false,
            allow_unconverged: false,
        }
    }
}

/// What a node keeps after summarising: labels in summary index space (withheld
/// clusters numbered from `k_clusters`) and responsibilities in summary column order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRetained<F> {
    pub local_labels: Vec<usize>,
    pub resp: Responsibilities<F>,
}

impl<F: Scalar> NodeRetained<F> {
    /// Σ_n [(ra + rb) ln(ra + rb) − ra ln ra − rb ln rb] where ra, rb sum the
    /// responsibilities of the two groups of summary clusters.
    pub fn merge_correction(&self, group_a: &[usize], group_b: &[usize]) -> Result<F> {
        let k = self.resp.n_clusters();
        if let Some(bad) = group_a.iter().chain(group_b).find(|&&c| c >= k) {
            return Err(Error::Contract(format!("unknown local cluster {bad}")));
        }
        let mut total = F::zero();
        for n in 0..self.resp.n_rows() {
            let row = self.resp.row(n);
            let ra: F = group_a.iter().map(|&c| row[c]).sum();
            let rb: F = group_b.iter().map(|&c| row[c]).sum();
            total += xlogx(ra + rb) - xlogx(ra) - xlogx(rb);
        }
        Ok(total)
    }
}

fn xlogx<F: Scalar>(x: F) -> F {
    if x > F::lit(crate::elbo::ENTROPY_FLOOR) {
        x * x.ln()
    } else {
        F::zero()
    }
}

/// Builds the summary of a batch fit.
pub fn summarize_batch<F: Scalar>(
    fitted: &FittedModel<F>,
    priors: &Priors<F>,
    layout: &Layout,
    batch_id: &str,
    selected_vars: Option<Vec<bool>>,
    options: &SummaryOptions,
) -> Result<(BatchSummary<F>, NodeRetained<F>)> {
    if !fitted.converged && !options.allow_unconverged {
        return Err(Error::Contract(format!("batch {batch_id}: fit did not converge")));
    }
    let state = &fitted.state;
    if state.params.width() != layout.width() {
        return Err(Error::Contract("fit does not match layout".into()));
    }
    let sizes = state.cluster_sizes(priors);
    let min = F::lit(options.privacy_min_size);
    let small: Vec<bool> = sizes.iter().map(|&t| t < min).collect();
    let (shared, withheld): (Vec<usize>, Vec<usize>) = if options.withhold_small {
        (0..sizes.len()).partition(|&k| !small[k])
    } else {
        ((0..sizes.len()).collect(), Vec::new())
    };
    if shared.is_empty() {
        return Err(Error::Contract(format!(
            "batch {batch_id}: every cluster is below the privacy threshold"
        )));
    }
    let order: Vec<usize> = shared.iter().chain(&withheld).copied().collect();
    let mut position = vec![0usize; sizes.len()];
    for (pos, &k) in order.iter().enumerate() {
        position[k] = pos;
    }
    let params = state.params.select(&shared);
    let flagged = if options.withhold_small {
        Vec::new()
    } else {
        (0..sizes.len()).filter(|&k| small[k]).collect()
    };
    let withheld_mass = withheld.iter().map(|&k| sizes[k]).sum();
    let summary = BatchSummary {
        batch_id: batch_id.to_string(),
        n_obs: state.resp.n_rows(),
        k_clusters: shared.len(),
        k_init: state.k_init,
        cardinalities: layout.cardinalities().to_vec(),
        alpha_star: params.alpha.clone(),
        eps_star: params.eps.clone(),
        entropy: assignment_entropy(&state.resp),
        priors: priors.clone(),
        fingerprint: prior_fingerprint(priors, layout.cardinalities()),
        selected_vars,
        flagged,
        withheld: withheld.len(),
        withheld_mass,
    };
    let retained = NodeRetained {
        local_labels: fitted.labels.iter().map(|&l| position[l]).collect(),
        resp: state.resp.select_columns(&order),
    };
    Ok((summary, retained))
}

/// (batch index, summary cluster index).
pub type LocalCluster = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    /// Stable ids: position of the cluster in the initial concatenation.
    pub survivor: usize,
    pub absorbed: usize,
    pub elbo_before: f64,
    pub elbo_after: f64,
}

/// Concatenated summaries and the merges applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel<F> {
    pub batch_ids: Vec<String>,
    pub batch_sizes: Vec<usize>,
    pub batch_k: Vec<usize>,
    pub withheld: Vec<usize>,
    pub layout: Layout,
    pub priors: Priors<F>,
    pub params: VariationalParams<F>,
    pub entropy_total: F,
    pub k_total: usize,
    /// Stable id of each current cluster.
    pub ids: Vec<usize>,
    /// Local clusters absorbed by each current cluster, sorted.
    pub members: Vec<Vec<LocalCluster>>,
    pub merge_history: Vec<MergeRecord>,
}

/// Concatenates summaries. All must share the prior fingerprint and cardinalities.
pub fn combine_summaries<F: Scalar>(summaries: &[BatchSummary<F>]) -> Result<GlobalModel<F>> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::Contract("no summaries to combine".into()))?;
    let layout = first.layout();
    let expected = prior_fingerprint(&first.priors, &first.cardinalities);
    for s in summaries {
        if s.cardinalities != first.cardinalities {
            return Err(Error::Schema(format!(
                "batch {} has cardinalities {:?}, expected {:?}",
                s.batch_id, s.cardinalities, first.cardinalities
            )));
        }
        let own = prior_fingerprint(&s.priors, &s.cardinalities);
        if own != s.fingerprint || s.fingerprint != expected {
            return Err(Error::IncompatiblePriors {
                expected: expected.clone(),
                found: s.fingerprint.clone(),
            });
        }
        if s.alpha_star.len() != s.k_clusters || s.eps_star.len() != s.k_clusters * layout.width() {
            return Err(Error::Schema(format!("batch {} has malformed parameters", s.batch_id)));
        }
        if s.k_init < s.k_clusters + s.withheld {
            return Err(Error::Schema(format!("batch {} reports k_init below its cluster count", s.batch_id)));
        }
    }
    let mut alpha = Vec::new();
    let mut eps = Vec::new();
    let mut members = Vec::new();
    for (b, s) in summaries.iter().enumerate() {
        alpha.extend_from_slice(&s.alpha_star);
        eps.extend_from_slice(&s.eps_star);
        members.extend((0..s.k_clusters).map(|k| vec![(b, k)]));
    }
    let params = VariationalParams::new(alpha, eps, layout.width())?;
    Ok(GlobalModel {
        batch_ids: summaries.iter().map(|s| s.batch_id.clone()).collect(),
        batch_sizes: summaries.iter().map(|s| s.n_obs).collect(),
        batch_k: summaries.iter().map(|s| s.k_clusters).collect(),
        withheld: summaries.iter().map(|s| s.withheld).collect(),
        layout,
        priors: first.priors.clone(),
        ids: (0..params.n_clusters()).collect(),
        params,
        entropy_total: summaries.iter().map(|s| s.entropy).sum(),
        k_total: summaries.iter().map(|s| s.k_init).sum(),
        members,
        merge_history: Vec::new(),
    })
}

impl<F: Scalar> GlobalModel<F> {
    pub fn n_clusters(&self) -> usize {
        self.params.n_clusters()
    }

    pub fn n_batches(&self) -> usize {
        self.batch_ids.len()
    }

    /// Σ_k (α*_k − α₀).
    pub fn total_mass(&self) -> F {
        self.params.alpha.iter().map(|&a| a - self.priors.alpha0).sum()
    }

    /// Batches represented in cluster `k`, sorted and deduplicated.
    pub fn batches_of(&self, k: usize) -> Vec<usize> {
        let mut b: Vec<usize> = self.members[k].iter().map(|m| m.0).collect();
        b.dedup();
        b
    }

    pub fn lowest_batch(&self, k: usize) -> usize {
        self.members[k][0].0
    }

    /// True when clusters `a` and `b` share no batch.
    pub fn disjoint(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.batches_of(a), self.batches_of(b));
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    /// Merges `k2` into `k1`, adding `entropy_delta` to the entropy total.
    pub fn merged(&self, k1: usize, k2: usize, entropy_delta: F) -> Result<Self> {
        let k = self.n_clusters();
        if k1 == k2 || k1 >= k || k2 >= k {
            return Err(Error::Contract(format!("invalid merge pair ({k1}, {k2}) of {k} clusters")));
        }
        let prior_row = self.priors.epsilon_row(&self.layout);
        let mut params = self.params.clone();
        params.alpha[k1] = self.params.alpha[k1] + self.params.alpha[k2] - self.priors.alpha0;
        {
            let absorbed = self.params.eps_row(k2).to_vec();
            let row = params.eps_row_mut(k1);
            for ((v, &x), &p) in row.iter_mut().zip(&absorbed).zip(&prior_row) {
                *v = *v + x - p;
            }
        }
        let mut out = self.clone();
        out.params = params.remove(k2);
        let mut joined = self.members[k1].clone();
        joined.extend_from_slice(&self.members[k2]);
        joined.sort_unstable();
        out.members[k1] = joined;
        out.members.remove(k2);
        out.ids.remove(k2);
        out.entropy_total = self.entropy_total + entropy_delta;
        Ok(out)
    }

    /// Current global cluster of every local cluster.
    pub fn membership_map(&self) -> Vec<Vec<usize>> {
        let mut map: Vec<Vec<usize>> = self.batch_k.iter().map(|&k| vec![usize::MAX; k]).collect();
        for (g, ms) in self.members.iter().enumerate() {
            for &(b, l) in ms {
                map[b][l] = g;
            }
        }
        map
    }
}

/// Plain-f64 view of a global model for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub batch_ids: Vec<String>,
    pub batch_sizes: Vec<usize>,
    pub batch_k: Vec<usize>,
    pub withheld: Vec<usize>,
    pub cardinalities: Vec<usize>,
    pub k_total: usize,
    pub n_clusters: usize,
    pub elbo: f64,
    pub entropy_total: f64,
    /// Expected size T_k of each global cluster.
    pub sizes: Vec<f64>,
    pub alpha_star: Vec<f64>,
    /// cluster, then variable, then category.
    pub eps_star: Vec<Vec<Vec<f64>>>,
    /// `membership[b][l]`: global cluster of local cluster l of batch b.
    pub membership: Vec<Vec<usize>>,
    pub merge_history: Vec<MergeRecord>,
}

impl<F: Scalar> GlobalModel<F> {
    pub fn report(&self) -> Result<GlobalReport> {
        let alpha0 = self.priors.alpha0.as_f64();
        let layout = &self.layout;
        Ok(GlobalReport {
            batch_ids: self.batch_ids.clone(),
            batch_sizes: self.batch_sizes.clone(),
            batch_k: self.batch_k.clone(),
            withheld: self.withheld.clone(),
            cardinalities: layout.cardinalities().to_vec(),
            k_total: self.k_total,
            n_clusters: self.n_clusters(),
            elbo: global_elbo(self)?.as_f64(),
            entropy_total: self.entropy_total.as_f64(),
            sizes: self.params.alpha.iter().map(|a| a.as_f64() - alpha0).collect(),
            alpha_star: self.params.alpha.iter().map(|a| a.as_f64()).collect(),
            eps_star: (0..self.n_clusters())
                .map(|k| {
                    let row = self.params.eps_row(k);
                    (0..layout.n_vars())
                        .map(|j| row[layout.range(j)].iter().map(|v| v.as_f64()).collect())
                        .collect()
                })
                .collect(),
            membership: self.membership_map(),
            merge_history: self.merge_history.clone(),
        })
    }
}

/// Cross-batch merge of `k2` into `k1`. The entropy total is unchanged because
/// the two clusters never share an observation.
pub fn global_merge_pair<F: Scalar>(global: &GlobalModel<F>, k1: usize, k2: usize) -> Result<GlobalModel<F>> {
    if k1 < global.n_clusters() && k2 < global.n_clusters() && !global.disjoint(k1, k2) {
        return Err(Error::Contract(
            "clusters share a batch; the merge needs an entropy correction".into(),
        ));
    }
    global.merged(k1, k2, F::zero())
}

/// ELBO of the global model from its sufficient statistics.
pub fn global_elbo<F: Scalar>(global: &GlobalModel<F>) -> Result<F> {
    let stats = suff_stats_unchecked(&global.params, &global.priors, &global.layout);
    elbo_from_stats(
        &stats,
        &global.params,
        &global.priors,
        &global.layout,
        global.entropy_total,
        global.k_total,
    )
}

/// Global label of every observation, batch by batch. Withheld clusters get
/// fresh labels after the shared ones.
pub fn map_labels<F: Scalar>(global: &GlobalModel<F>, local_labels: &[Vec<usize>]) -> Result<Vec<usize>> {
    if local_labels.len() != global.n_batches() {
        return Err(Error::Contract(format!(
            "{} label vectors for {} batches",
            local_labels.len(),
            global.n_batches()
        )));
    }
    let map = global.membership_map();
    let mut fresh = global.n_clusters();
    let mut out = Vec::with_capacity(local_labels.iter().map(Vec::len).sum());
    for (b, labels) in local_labels.iter().enumerate() {
        let k_b = global.batch_k[b];
        let first_fresh = fresh;
        fresh += global.withheld[b];
        for &l in labels {
            if l < k_b {
                let g = map[b][l];
                if g == usize::MAX {
                    return Err(Error::Contract(format!("batch {b} cluster {l} has no global cluster")));
                }
                out.push(g);
            } else if l < k_b + global.withheld[b] {
                out.push(first_fresh + l - k_b);
            } else {
                return Err(Error::Contract(format!("batch {b} has no local cluster {l}")));
            }
        }
    }
    Ok(out)
}

/// A variable is selected globally when at least B − 1 batches select it
/// (every batch when B = 1).
pub fn aggregate_variable_selection<F: Scalar>(summaries: &[BatchSummary<F>]) -> Result<Vec<bool>> {
    let b = summaries.len();
    if b == 0 {
        return Err(Error::Contract("no summaries".into()));
    }
    let sels: Vec<&Vec<bool>> = summaries
        .iter()
        .map(|s| {
            s.selected_vars
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("batch {} carries no selection", s.batch_id)))
        })
        .collect::<Result<_>>()?;
    let p = sels[0].len();
    if sels.iter().any(|s| s.len() != p) {
        return Err(Error::Schema("selection vectors differ in length".into()));
    }
    let need = (b - 1).max(1);
    Ok((0..p)
        .map(|j| sels.iter().filter(|s| s[j]).count() >= need)
        .collect())
}
