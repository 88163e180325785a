//! Merge, delete and zombie pruning on a working fit.

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};
use crate::model::{Priors, Responsibilities, VariationalParams, VariationalState};
use crate::scalar::Scalar;

use super::objective::{BaseObjective, Objective};

/// Clusters with expected size below this are pruned as zombies.
pub const ZOMBIE_THRESHOLD: f64 = 1e-6;

/// Responsibilities, parameters from an M step on them, and their ELBO.
#[derive(Debug, Clone, PartialEq)]
pub struct Working<F> {
    pub resp: Responsibilities<F>,
    pub params: VariationalParams<F>,
    pub elbo: F,
}

/// Removes columns whose mass is below [`ZOMBIE_THRESHOLD`] and renormalises rows.
/// `params` is reduced to the same clusters. Returns the number of clusters removed.
pub fn prune_in_place<F: Scalar>(
    resp: &mut Responsibilities<F>,
    params: &mut VariationalParams<F>,
) -> usize {
    let sums = resp.column_sums();
    let threshold = F::lit(ZOMBIE_THRESHOLD);
    let keep: Vec<usize> = (0..sums.len()).filter(|&k| sums[k] >= threshold).collect();
    let removed = sums.len() - keep.len();
    if removed > 0 && !keep.is_empty() {
        *resp = resp.select_columns(&keep);
        resp.renormalize_rows();
        *params = params.select(&keep);
    }
    removed
}

/// Drops near-empty clusters from a state. `k_init` is unchanged, so the pruned
/// clusters keep counting towards the prior dimension.
pub fn prune_zombies<F: Scalar>(state: &VariationalState<F>) -> VariationalState<F> {
    let mut out = state.clone();
    prune_in_place(&mut out.resp, &mut out.params);
    out
}

/// Merge candidate: columns summed into `k1`, `k2` dropped, then M, E, prune, M.
pub fn propose_merge<F: Scalar, O: Objective<F>>(
    data: &CategoricalDataset,
    obj: &O,
    resp: &Responsibilities<F>,
    k1: usize,
    k2: usize,
    k_total: usize,
) -> Result<Working<F>> {
    let k = resp.n_clusters();
    if k1 == k2 || k1 >= k || k2 >= k {
        return Err(Error::Contract(format!("invalid merge pair ({k1}, {k2}) of {k} clusters")));
    }
    let merged = resp.merge_columns(k1, k2);
    let params = obj.m_step(data, &merged)?;
    let mut resp = obj.e_step(data, &params, k_total)?;
    let mut params = params;
    prune_in_place(&mut resp, &mut params);
    let params = obj.m_step(data, &resp)?;
    let elbo = obj.elbo(data, &resp, &params, k_total)?;
    Ok(Working { resp, params, elbo })
}

/// Delete candidate: drop cluster `k`, refit on the rows not assigned to it,
/// reassign every row, prune, M.
pub fn propose_delete<F: Scalar, O: Objective<F>>(
    data: &CategoricalDataset,
    obj: &O,
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    k: usize,
    k_total: usize,
) -> Result<Working<F>> {
    let n_clusters = params.n_clusters();
    if n_clusters < 2 {
        return Err(Error::Contract("deleting would leave zero clusters".into()));
    }
    if k >= n_clusters {
        return Err(Error::Contract(format!("cluster {k} out of range")));
    }
    let reduced = params.remove(k);
    let keep_rows: Vec<usize> = resp
        .labels()
        .into_iter()
        .enumerate()
        .filter_map(|(n, l)| (l != k).then_some(n))
        .collect();
    let refit = if keep_rows.len() == data.n_rows() {
        let r = obj.e_step(data, &reduced, k_total)?;
        obj.m_step(data, &r)?
    } else if keep_rows.is_empty() {
        reduced
    } else {
        let sub = data.subset(&keep_rows);
        let r = obj.e_step(&sub, &reduced, k_total)?;
        obj.m_step(&sub, &r)?
    };
    let mut resp = obj.e_step(data, &refit, k_total)?;
    let mut refit = refit;
    prune_in_place(&mut resp, &mut refit);
    let params = obj.m_step(data, &resp)?;
    let elbo = obj.elbo(data, &resp, &params, k_total)?;
    Ok(Working { resp, params, elbo })
}

/// Strict improvement; a NaN candidate never wins.
#[inline]
pub fn improves<F: Scalar>(candidate: F, current: F) -> bool {
    candidate > current
}

fn current_elbo<F: Scalar>(
    data: &CategoricalDataset,
    obj: &BaseObjective<F>,
    state: &VariationalState<F>,
    k_total: usize,
) -> Result<F> {
    let params = obj.m_step(data, &state.resp)?;
    obj.elbo(data, &state.resp, &params, k_total)
}

/// Merge move on a base-model state. Returns the input unchanged on rejection.
pub fn merge_move<F: Scalar>(
    data: &CategoricalDataset,
    state: &VariationalState<F>,
    k1: usize,
    k2: usize,
    priors: &Priors<F>,
    k_total: usize,
) -> Result<(VariationalState<F>, bool)> {
    let obj = BaseObjective { priors: priors.clone() };
    let before = current_elbo(data, &obj, state, k_total)?;
    let cand = propose_merge(data, &obj, &state.resp, k1, k2, k_total)?;
    Ok(settle(state, cand, before))
}

/// Delete move on a base-model state. Returns the input unchanged on rejection.
pub fn delete_move<F: Scalar>(
    data: &CategoricalDataset,
    state: &VariationalState<F>,
    k: usize,
    priors: &Priors<F>,
    k_total: usize,
) -> Result<(VariationalState<F>, bool)> {
    let obj = BaseObjective { priors: priors.clone() };
    let before = current_elbo(data, &obj, state, k_total)?;
    let cand = propose_delete(data, &obj, &state.resp, &state.params, k, k_total)?;
    Ok(settle(state, cand, before))
}

fn settle<F: Scalar>(
    state: &VariationalState<F>,
    cand: Working<F>,
    before: F,
) -> (VariationalState<F>, bool) {
    if improves(cand.elbo, before) {
        let mut elbo_trace = state.elbo_trace.clone();
        elbo_trace.push(cand.elbo);
        let next = VariationalState {
            resp: cand.resp,
            params: cand.params,
            elbo_trace,
            k_init: state.k_init,
        };
        (next, true)
    } else {
        (state.clone(), false)
    }
}
