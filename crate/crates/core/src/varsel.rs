//! Variable selection: each variable j is either informative (γ_j = 1, cluster
//! specific emissions) or follows a shared null distribution φ₀ (γ_j = 0).
//! q(γ_j) = Bernoulli(c_j) and q(δ_j) = Beta(b1_j, b2_j) with δ_j ~ Beta(a, a).

use serde::{Deserialize, Serialize};

use crate::data::CategoricalDataset;
use crate::elbo::{assignment_entropy, elbo_terms_from_stats, SufficientStats};
use crate::error::{Error, Result};
use crate::merdel::{fit_with, FittedModel, MerDelConfig, Objective};
use crate::model::{
    e_step_weighted, params_from_counts, weighted_counts, Priors, Responsibilities,
    VariationalParams,
};
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma};

/// Null-model probabilities are floored here before renormalising.
pub const PHI0_FLOOR: f64 = 1e-10;

/// A variable is selected when c_j exceeds this.
pub const SELECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState<F> {
    /// c_j = E[γ_j].
    pub c: Vec<F>,
    /// φ₀ over the flat layout; each variable's block sums to one.
    pub phi0: Vec<F>,
    /// ln η_1j from the last update (η itself overflows easily).
    pub log_eta1: Vec<F>,
    /// ln η_2j from the last update.
    pub log_eta2: Vec<F>,
    /// Beta parameters of q(δ_j).
    pub delta: Vec<(F, F)>,
}

impl<F: Scalar> SelectionState<F> {
    /// Every variable switched on; q(δ) matched to c = 1.
    pub fn initial(data: &CategoricalDataset, priors: &Priors<F>) -> Self {
        let p = data.n_vars();
        let c = vec![F::one(); p];
        let delta = delta_from_c(&c, priors.a);
        Self {
            c,
            phi0: null_params(data),
            log_eta1: vec![F::zero(); p],
            log_eta2: vec![F::zero(); p],
            delta,
        }
    }

    /// {j : c_j > 0.5}.
    pub fn selected(&self) -> Vec<bool> {
        let t = F::lit(SELECTION_THRESHOLD);
        self.c.iter().map(|&c| c > t).collect()
    }
}

fn delta_from_c<F: Scalar>(c: &[F], a: F) -> Vec<(F, F)> {
    c.iter().map(|&cj| (cj + a, F::one() - cj + a)).collect()
}

/// Maximum-likelihood category frequencies per variable, floored and renormalised.
pub fn null_params<F: Scalar>(data: &CategoricalDataset) -> Vec<F> {
    let layout = data.layout();
    let counts = data.category_counts();
    let n = F::from_usize_lossy(data.n_rows().max(1));
    let floor = F::lit(PHI0_FLOOR);
    let mut phi0 = vec![F::zero(); layout.width()];
    for j in 0..layout.n_vars() {
        let range = layout.range(j);
        let mut total = F::zero();
        for c in range.clone() {
            let v = (F::from_usize_lossy(counts[c]) / n).max(floor);
            phi0[c] = v;
            total += v;
        }
        for c in range {
            phi0[c] /= total;
        }
    }
    phi0
}

/// E step with c-weighted cluster log-likelihoods.
pub fn e_step_vs<F: Scalar>(
    data: &CategoricalDataset,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    c: &[F],
    k_total: usize,
) -> Result<Responsibilities<F>> {
    check_c(c, data.n_vars())?;
    e_step_weighted(data, params, priors, k_total, Some(c))
}

/// M step with category counts weighted by c_j.
pub fn m_step_vs<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    c: &[F],
    priors: &Priors<F>,
) -> Result<VariationalParams<F>> {
    check_c(c, data.n_vars())?;
    let counts = weighted_counts(data, resp)?;
    Ok(params_from_counts(data.layout(), resp, counts, priors, Some(c)))
}

fn check_c<F: Scalar>(c: &[F], p: usize) -> Result<()> {
    if c.len() != p {
        return Err(Error::Contract(format!("{} selection weights for {p} variables", c.len())));
    }
    if let Some(v) = c.iter().find(|v| !(**v >= F::zero() && **v <= F::one())) {
        return Err(Error::Domain(format!("selection weight {v} outside [0, 1]")));
    }
    Ok(())
}

/// Per-variable Σ_n Σ_k r_nk E[ln φ_{k j x_nj}] from unweighted counts.
fn cluster_loglik_per_var<F: Scalar>(
    data: &CategoricalDataset,
    counts: &[F],
    log_phi: &[F],
) -> Vec<F> {
    let layout = data.layout();
    let w = layout.width();
    let mut out = vec![F::zero(); layout.n_vars()];
    for (crow, lrow) in counts.chunks_exact(w).zip(log_phi.chunks_exact(w)) {
        for (j, o) in out.iter_mut().enumerate() {
            for c in layout.range(j) {
                *o += crow[c] * lrow[c];
            }
        }
    }
    out
}

/// Per-variable Σ_n ln φ₀_{j x_nj}.
fn null_loglik_per_var<F: Scalar>(data: &CategoricalDataset, phi0: &[F]) -> Vec<F> {
    let layout = data.layout();
    let counts = data.category_counts();
    (0..layout.n_vars())
        .map(|j| {
            layout
                .range(j)
                .map(|c| F::from_usize_lossy(counts[c]) * phi0[c].ln())
                .sum()
        })
        .collect()
}

fn beta_log_expectations<F: Scalar>(b: (F, F)) -> (F, F) {
    let psi_total = digamma(b.0 + b.1);
    (digamma(b.0) - psi_total, digamma(b.1) - psi_total)
}

/// Updates c from the current q(δ), then q(δ) from the new c.
pub fn gamma_delta_update<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    state: &SelectionState<F>,
    priors: &Priors<F>,
) -> Result<SelectionState<F>> {
    let layout = data.layout();
    let counts = weighted_counts(data, resp)?;
    let log_phi = crate::model::expected_log_phi(&params.eps, layout)?;
    let cluster_ll = cluster_loglik_per_var(data, &counts, &log_phi);
    let null_ll = null_loglik_per_var(data, &state.phi0);
    let p = layout.n_vars();
    let mut c = Vec::with_capacity(p);
    let mut log_eta1 = Vec::with_capacity(p);
    let mut log_eta2 = Vec::with_capacity(p);
    for j in 0..p {
        let (e_ln_d, e_ln_1md) = beta_log_expectations(state.delta[j]);
        let l1 = cluster_ll[j] + e_ln_d;
        let l2 = null_ll[j] + e_ln_1md;
        c.push(two_way_softmax(l1, l2));
        log_eta1.push(l1);
        log_eta2.push(l2);
    }
    let delta = delta_from_c(&c, priors.a);
    Ok(SelectionState {
        c,
        phi0: state.phi0.clone(),
        log_eta1,
        log_eta2,
        delta,
    })
}

/// exp(l1) / (exp(l1) + exp(l2)) with max subtraction.
pub fn two_way_softmax<F: Scalar>(l1: F, l2: F) -> F {
    let d = l1 - l2;
    if d >= F::zero() {
        F::one() / (F::one() + (-d).exp())
    } else {
        let e = d.exp();
        e / (F::one() + e)
    }
}

fn xlogx<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x * x.ln()
    } else {
        F::zero()
    }
}

/// ELBO of the selection model. `params` must come from an M step on `resp`
/// (with any selection weights); the c-weighted likelihood is rebuilt from
/// the raw counts so c may have moved since.
pub fn elbo_vs<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    state: &SelectionState<F>,
    k_total: usize,
) -> Result<F> {
    let layout = data.layout();
    check_c(&state.c, layout.n_vars())?;
    let mut counts = weighted_counts(data, resp)?;
    crate::model::apply_variable_weights(&mut counts, layout, &state.c);
    let stats = SufficientStats {
        sizes: resp.column_sums(),
        counts,
    };
    let base = elbo_terms_from_stats(&stats, params, priors, layout, assignment_entropy(resp), k_total)?
        .total();

    let null_ll = null_loglik_per_var(data, &state.phi0);
    let a = priors.a;
    let ln_b_aa = ln_gamma(a) * F::lit(2.0) - ln_gamma(a + a);
    let mut extra = F::zero();
    for j in 0..layout.n_vars() {
        let cj = state.c[j];
        let (b1, b2) = state.delta[j];
        let (e_ln_d, e_ln_1md) = beta_log_expectations((b1, b2));
        let ln_b_q = ln_gamma(b1) + ln_gamma(b2) - ln_gamma(b1 + b2);
        extra += (F::one() - cj) * null_ll[j];
        // E ln p(γ | δ) + E ln p(δ) − E ln q(γ) − E ln q(δ)
        extra += cj * e_ln_d + (F::one() - cj) * e_ln_1md;
        extra += (a - F::one()) * (e_ln_d + e_ln_1md) - ln_b_aa;
        extra -= xlogx(cj) + xlogx(F::one() - cj);
        extra -= (b1 - F::one()) * e_ln_d + (b2 - F::one()) * e_ln_1md - ln_b_q;
    }
    Ok(base + extra)
}

/// Selection-model updates for the MerDel loop.
#[derive(Debug, Clone)]
pub struct SelectionObjective<F> {
    pub priors: Priors<F>,
    pub state: SelectionState<F>,
}

impl<F: Scalar> Objective<F> for SelectionObjective<F> {
    fn priors(&self) -> &Priors<F> {
        &self.priors
    }

    fn e_step(
        &self,
        data: &CategoricalDataset,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<Responsibilities<F>> {
        e_step_vs(data, params, &self.priors, &self.state.c, k_total)
    }

    fn m_step(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
    ) -> Result<VariationalParams<F>> {
        m_step_vs(data, resp, &self.state.c, &self.priors)
    }

    fn elbo(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<F> {
        elbo_vs(data, resp, params, &self.priors, &self.state, k_total)
    }

    fn refresh(
        &mut self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
        params: &VariationalParams<F>,
    ) -> Result<()> {
        self.state = gamma_delta_update(data, resp, params, &self.state, &self.priors)?;
        Ok(())
    }
}

/// MerDel with variable selection. c starts at one for every variable.
pub fn fit_merdel_vs<F: Scalar>(
    data: &CategoricalDataset,
    config: &MerDelConfig,
    priors: &Priors<F>,
) -> Result<(FittedModel<F>, SelectionState<F>)> {
    priors.validate_for(data.layout())?;
    let mut obj = SelectionObjective {
        priors: priors.clone(),
        state: SelectionState::initial(data, priors),
    };
    let fit = fit_with(data, config, &mut obj)?;
    Ok((fit, obj.state))
}
