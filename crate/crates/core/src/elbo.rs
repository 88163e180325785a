//! Evidence lower bound, in two forms.
//!
//! `elbo_direct` sums the data-dependent terms over observations.
//! `elbo_from_stats` recovers the same terms from the sufficient statistics
//! T_k = α*_k − α₀ and S_kjl = ε*_kjl − ε_jl, which is what lets the
//! coordinator score global merges without touching any observation. The only
//! term that cannot be recovered that way is the assignment entropy
//! Σ_n Σ_k r_nk ln r_nk, which is supplied by the caller.

use crate::data::{CategoricalDataset, Layout};
use crate::error::{Error, Result};
use crate::model::{
    check_shapes, expected_log_phi, expected_log_pi_with_zombies, Priors, Responsibilities,
    VariationalParams,
};
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma, ln_multivariate_beta, ln_symmetric_beta};

/// Responsibilities below this are treated as exact zeros in `r ln r`.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Expected cluster sizes and expected per-category counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<F> {
    /// T_k, length K.
    pub sizes: Vec<F>,
    /// S_kjl, K rows of the flat layout.
    pub counts: Vec<F>,
}

/// The seven ELBO terms, kept apart for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms<F> {
    /// E[ln p(X | Z, Φ)]
    pub log_lik: F,
    /// E[ln p(Z | π)]
    pub log_p_z: F,
    /// E[ln p(π)]
    pub log_p_pi: F,
    /// E[ln p(Φ)]
    pub log_p_phi: F,
    /// E[ln q(Z)] = Σ r ln r
    pub log_q_z: F,
    /// E[ln q(π)]
    pub log_q_pi: F,
    /// E[ln q(Φ)]
    pub log_q_phi: F,
}

impl<F: Scalar> ElboTerms<F> {
    pub fn total(&self) -> F {
        self.log_lik + self.log_p_z + self.log_p_pi + self.log_p_phi
            - self.log_q_z
            - self.log_q_pi
            - self.log_q_phi
    }
}

/// T_k = α*_k − α₀ and S_kjl = ε*_kjl − ε_jl.
pub fn suff_stats<F: Scalar>(
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
) -> Result<SufficientStats<F>> {
    if params.width() != layout.width() {
        return Err(Error::Contract("parameter width does not match layout".into()));
    }
    let slack = F::lit(-1e-9);
    let sizes: Vec<F> = params.alpha.iter().map(|&a| a - priors.alpha0).collect();
    if let Some((k, t)) = sizes.iter().enumerate().find(|(_, t)| **t < slack) {
        return Err(Error::Inconsistent(format!("cluster {k} has alpha* below alpha0 ({t})")));
    }
    let prior_row = priors.epsilon_row(layout);
    let mut counts = Vec::with_capacity(params.eps.len());
    for row in params.eps.chunks_exact(layout.width()) {
        for (&e, &p) in row.iter().zip(&prior_row) {
            let s = e - p;
            if s < slack {
                return Err(Error::Inconsistent(format!("eps* entry below its prior ({s})")));
            }
            counts.push(s);
        }
    }
    Ok(SufficientStats { sizes, counts })
}

/// Σ_n Σ_k r_nk ln r_nk with 0 ln 0 = 0. Always ≤ 0.
pub fn assignment_entropy<F: Scalar>(resp: &Responsibilities<F>) -> F {
    let floor = F::lit(ENTROPY_FLOOR);
    resp.as_slice()
        .iter()
        .map(|&r| if r > floor { r * r.ln() } else { F::zero() })
        .sum()
}

/// Convergence when each of the last three ELBO increments is below `tol · |ELBO|`.
pub fn check_convergence<F: Scalar>(elbo_trace: &[F], tol: F) -> bool {
    if elbo_trace.len() < 4 {
        return false;
    }
    let tail = &elbo_trace[elbo_trace.len() - 4..];
    tail.windows(2).all(|w| {
        let scale = w[1].abs().max(F::min_positive_value());
        (w[1] - w[0]).abs() < tol * scale
    })
}

/// ELBO with the data terms summed over observations.
pub fn elbo_direct<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    k_total: usize,
) -> Result<F> {
    Ok(elbo_terms_direct(data, resp, params, priors, k_total)?.total())
}

pub fn elbo_terms_direct<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    k_total: usize,
) -> Result<ElboTerms<F>> {
    let layout = data.layout();
    check_shapes(layout, params, k_total)?;
    if resp.n_rows() != data.n_rows() || resp.n_clusters() != params.n_clusters() {
        return Err(Error::Contract(format!(
            "responsibilities are {}x{}, expected {}x{}",
            resp.n_rows(),
            resp.n_clusters(),
            data.n_rows(),
            params.n_clusters()
        )));
    }
    let k = params.n_clusters();
    let w = layout.width();
    let log_pi = expected_log_pi_with_zombies(&params.alpha, k_total - k, priors.alpha0)?;
    let log_phi = expected_log_phi(&params.eps, layout)?;

    let mut log_lik = F::zero();
    let mut log_p_z = F::zero();
    for n in 0..data.n_rows() {
        let codes = data.row_codes(n);
        for (kk, &r) in resp.row(n).iter().enumerate() {
            if r == F::zero() {
                continue;
            }
            let base = &log_phi[kk * w..(kk + 1) * w];
            let ll: F = codes.iter().map(|&c| base[c as usize]).sum();
            log_lik += r * ll;
            log_p_z += r * log_pi[kk];
        }
    }
    let mut terms = prior_terms(params, priors, layout, k_total, &log_pi, &log_phi);
    terms.log_lik = log_lik;
    terms.log_p_z = log_p_z;
    terms.log_q_z = assignment_entropy(resp);
    Ok(terms)
}

/// ELBO from sufficient statistics and an externally supplied assignment entropy.
pub fn elbo_from_stats<F: Scalar>(
    stats: &SufficientStats<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
    entropy_total: F,
    k_total: usize,
) -> Result<F> {
    Ok(elbo_terms_from_stats(stats, params, priors, layout, entropy_total, k_total)?.total())
}

pub fn elbo_terms_from_stats<F: Scalar>(
    stats: &SufficientStats<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
    entropy_total: F,
    k_total: usize,
) -> Result<ElboTerms<F>> {
    check_shapes(layout, params, k_total)?;
    let k = params.n_clusters();
    if stats.sizes.len() != k || stats.counts.len() != params.eps.len() {
        return Err(Error::Contract("sufficient statistics do not match parameters".into()));
    }
    let log_pi = expected_log_pi_with_zombies(&params.alpha, k_total - k, priors.alpha0)?;
    let log_phi = expected_log_phi(&params.eps, layout)?;
    let log_lik = stats
        .counts
        .iter()
        .zip(&log_phi)
        .map(|(&s, &e)| s * e)
        .sum();
    let log_p_z = stats.sizes.iter().zip(&log_pi).map(|(&t, &e)| t * e).sum();
    let mut terms = prior_terms(params, priors, layout, k_total, &log_pi, &log_phi);
    terms.log_lik = log_lik;
    terms.log_p_z = log_p_z;
    terms.log_q_z = entropy_total;
    Ok(terms)
}

/// Convenience: stats-based ELBO for a state whose parameters came from an M step on `resp`.
pub fn elbo_of_fit<F: Scalar>(
    resp: &Responsibilities<F>,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
    k_total: usize,
) -> Result<F> {
    let stats = suff_stats_unchecked(params, priors, layout);
    elbo_from_stats(&stats, params, priors, layout, assignment_entropy(resp), k_total)
}

pub(crate) fn suff_stats_unchecked<F: Scalar>(
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
) -> SufficientStats<F> {
    let prior_row = priors.epsilon_row(layout);
    let sizes = params.alpha.iter().map(|&a| a - priors.alpha0).collect();
    let counts = params
        .eps
        .chunks_exact(layout.width())
        .flat_map(|row| row.iter().zip(&prior_row).map(|(&e, &p)| e - p))
        .collect();
    SufficientStats { sizes, counts }
}

/// p(π), q(π), p(Φ), q(Φ) terms over live and zombie clusters. The data terms
/// are left at zero for the caller to fill.
fn prior_terms<F: Scalar>(
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    layout: &Layout,
    k_total: usize,
    log_pi: &[F],
    log_phi: &[F],
) -> ElboTerms<F> {
    let k = params.n_clusters();
    let zombies = F::from_usize_lossy(k_total - k);
    let alpha0 = priors.alpha0;
    let one = F::one();

    // Zombie clusters sit exactly at the prior: α* = α₀, ε* = ε.
    let alpha_total = params.alpha.iter().copied().sum::<F>() + zombies * alpha0;
    let zombie_log_pi = digamma(alpha0) - digamma(alpha_total);

    let sum_log_pi: F = log_pi.iter().copied().sum();
    let log_p_pi = -ln_symmetric_beta(alpha0, k_total)
        + (alpha0 - one) * (sum_log_pi + zombies * zombie_log_pi);

    let ln_b_alpha_star = params.alpha.iter().map(|&a| ln_gamma(a)).sum::<F>()
        + zombies * ln_gamma(alpha0)
        - ln_gamma(alpha_total);
    let log_q_pi = -ln_b_alpha_star
        + params
            .alpha
            .iter()
            .zip(log_pi)
            .map(|(&a, &e)| (a - one) * e)
            .sum::<F>()
        + zombies * (alpha0 - one) * zombie_log_pi;

    // Per-variable prior normaliser and the prior-only expectation, shared by zombies.
    let mut prior_ln_b = F::zero();
    let mut zombie_phi_term = F::zero();
    for (j, &e) in priors.epsilon.iter().enumerate() {
        let l = layout.cardinality(j);
        let ln_b = ln_symmetric_beta(e, l);
        prior_ln_b += ln_b;
        let e_log = digamma(e) - digamma(F::from_usize_lossy(l) * e);
        zombie_phi_term += -ln_b + F::from_usize_lossy(l) * (e - one) * e_log;
    }

    let w = layout.width();
    let prior_row = priors.epsilon_row(layout);
    let mut log_p_phi = F::zero();
    let mut log_q_phi = F::zero();
    for kk in 0..k {
        let eps = params.eps_row(kk);
        let lp = &log_phi[kk * w..(kk + 1) * w];
        let mut p_acc = -prior_ln_b;
        let mut q_acc = F::zero();
        for j in 0..layout.n_vars() {
            q_acc -= ln_multivariate_beta(&eps[layout.range(j)]);
        }
        for c in 0..w {
            p_acc += (prior_row[c] - one) * lp[c];
            q_acc += (eps[c] - one) * lp[c];
        }
        log_p_phi += p_acc;
        log_q_phi += q_acc;
    }
    log_p_phi += zombies * zombie_phi_term;
    log_q_phi += zombies * zombie_phi_term;

    ElboTerms {
        log_lik: F::zero(),
        log_p_z: F::zero(),
        log_p_pi,
        log_p_phi,
        log_q_z: F::zero(),
        log_q_pi,
        log_q_phi,
    }
}
