//! Greedy and random global merge searches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::merdel::{all_pairs, improves, Criterion, PairScorer};
use crate::scalar::Scalar;

use super::{global_elbo, GlobalModel, MergeRecord, NodeRetained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Greedy,
    Random,
}

impl std::str::FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(Self::Greedy),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown search '{other}' (expected greedy or random)")),
        }
    }
}

impl std::fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Greedy => "greedy",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub strategy: SearchStrategy,
    pub criterion: Criterion,
    pub candidate_pool: usize,
    pub correlation_floor: f64,
    /// Random search stops after this many consecutive rejections.
    pub stop_after: usize,
    pub seed: u64,
    /// Never propose two clusters that share a batch.
    pub cross_batch_only: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: SearchStrategy::Greedy,
            criterion: Criterion::Correlation,
            candidate_pool: 3,
            correlation_floor: 0.05,
            stop_after: 10,
            seed: 0,
            cross_batch_only: true,
        }
    }
}

/// Node-side answer to "what does the assignment entropy of batch `batch`
/// become if these two groups of its clusters are merged?".
pub trait EntropyOracle<F> {
    /// Σ_n [(ra + rb) ln(ra + rb) − ra ln ra − rb ln rb] over the batch.
    fn merge_correction(&mut self, batch: usize, group_a: &[usize], group_b: &[usize]) -> Result<F>;
}

impl<F: Scalar> EntropyOracle<F> for Vec<NodeRetained<F>> {
    fn merge_correction(&mut self, batch: usize, group_a: &[usize], group_b: &[usize]) -> Result<F> {
        self.get(batch)
            .ok_or_else(|| crate::error::Error::Contract(format!("no retained state for batch {batch}")))?
            .merge_correction(group_a, group_b)
    }
}

fn locals_in(global: &GlobalModel<impl Scalar>, k: usize, batch: usize) -> Vec<usize> {
    global.members[k]
        .iter()
        .filter(|m| m.0 == batch)
        .map(|m| m.1)
        .collect()
}

fn entropy_delta<F: Scalar>(
    global: &GlobalModel<F>,
    a: usize,
    b: usize,
    oracle: &mut Option<&mut dyn EntropyOracle<F>>,
) -> Result<Option<F>> {
    let shared: Vec<usize> = global
        .batches_of(a)
        .into_iter()
        .filter(|x| global.batches_of(b).contains(x))
        .collect();
    if shared.is_empty() {
        return Ok(Some(F::zero()));
    }
    let Some(oracle) = oracle.as_deref_mut() else {
        return Ok(None);
    };
    let mut delta = F::zero();
    for batch in shared {
        delta += oracle.merge_correction(batch, &locals_in(global, a, batch), &locals_in(global, b, batch))?;
    }
    Ok(Some(delta))
}

fn record<F: Scalar>(g: &GlobalModel<F>, a: usize, b: usize, before: F, after: F) -> MergeRecord {
    MergeRecord {
        survivor: g.ids[a],
        absorbed: g.ids[b],
        elbo_before: before.as_f64(),
        elbo_after: after.as_f64(),
    }
}

/// Batch-by-batch sweep. Each cluster first seen in batch b is offered the
/// best-scoring partner from every later batch in turn; merges are accepted on
/// strict ELBO improvement and never join two clusters of the same batch.
pub fn greedy_search<F: Scalar>(global: &GlobalModel<F>, config: &SearchConfig) -> Result<GlobalModel<F>> {
    let mut g = global.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = global_elbo(&g)?;
    let n_batches = g.n_batches();
    for b in 0..n_batches {
        let owners: Vec<usize> = (0..g.n_clusters())
            .filter(|&k| g.lowest_batch(k) == b)
            .map(|k| g.ids[k])
            .collect();
        for id in owners {
            for b2 in b + 1..n_batches {
                let Some(x) = g.position_of(id) else { break };
                let partners: Vec<(usize, usize)> = (0..g.n_clusters())
                    .filter(|&y| y != x && g.batches_of(y).contains(&b2) && g.disjoint(x, y))
                    .map(|y| (x, y))
                    .collect();
                if partners.is_empty() {
                    continue;
                }
                let scorer = PairScorer::new(&g.params, &g.layout, config.criterion, config.correlation_floor);
                let Some((x, y)) = scorer.pick(partners, 1, &mut rng) else {
                    continue;
                };
                let cand = g.merged(x, y, F::zero())?;
                let elbo = global_elbo(&cand)?;
                if improves(elbo, current) {
                    let rec = record(&g, x, y, current, elbo);
                    g = cand;
                    g.merge_history.push(rec);
                    current = elbo;
                }
            }
        }
    }
    Ok(g)
}

/// Repeatedly proposes one of the best `candidate_pool` pairs until
/// `stop_after` consecutive rejections or no pair qualifies. Pairs sharing a
/// batch are only proposed when an entropy oracle is available and
/// `cross_batch_only` is off.
pub fn random_search<F: Scalar>(
    global: &GlobalModel<F>,
    config: &SearchConfig,
    mut oracle: Option<&mut dyn EntropyOracle<F>>,
) -> Result<GlobalModel<F>> {
    let mut g = global.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = global_elbo(&g)?;
    let same_batch_ok = oracle.is_some() && !config.cross_batch_only;
    let mut rejections = 0;
    while rejections < config.stop_after && g.n_clusters() >= 2 {
        let pairs: Vec<(usize, usize)> = all_pairs(g.n_clusters())
            .filter(|&(a, b)| same_batch_ok || g.disjoint(a, b))
            .collect();
        let scorer = PairScorer::new(&g.params, &g.layout, config.criterion, config.correlation_floor);
        let Some((a, b)) = scorer.pick(pairs, config.candidate_pool, &mut rng) else {
            break;
        };
        let Some(delta) = entropy_delta(&g, a, b, &mut oracle)? else {
            rejections += 1;
            continue;
        };
        let cand = g.merged(a, b, delta)?;
        let elbo = global_elbo(&cand)?;
        if improves(elbo, current) {
            let rec = record(&g, a, b, current, elbo);
            g = cand;
            g.merge_history.push(rec);
            current = elbo;
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    Ok(g)
}
