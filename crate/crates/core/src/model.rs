//! Mixture model types, priors, and the variational E and M updates.
//!
//! Clusters that have been removed from the working arrays ("zombies") still
//! count towards the dimension of the symmetric Dirichlet prior on the mixing
//! weights. Their variational parameters equal the prior exactly, so every
//! routine here takes `k_total` (live + zombie clusters) and folds the zombie
//! mass `(k_total − K) · α₀` into `Σ_k α*_k` wherever that sum appears.

use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, Layout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::digamma;

/// Hyperparameters of the symmetric Dirichlet priors and the selection Beta prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors<F> {
    /// Concentration of the Dirichlet prior on mixing weights.
    pub alpha0: F,
    /// Per-variable concentration of the Dirichlet prior on category probabilities.
    pub epsilon: Vec<F>,
    /// Beta(a, a) prior on variable-selection probabilities.
    pub a: F,
}

impl<F: Scalar> Priors<F> {
    pub fn new(alpha0: F, epsilon: Vec<F>, a: F) -> Result<Self> {
        let priors = Self { alpha0, epsilon, a };
        priors.check()?;
        Ok(priors)
    }

    /// α₀ = 0.01, ε_j = 1/L_j, a = 2.
    pub fn defaults(layout: &Layout) -> Self {
        Self::with_alpha0(layout, F::lit(0.01))
    }

    pub fn with_alpha0(layout: &Layout, alpha0: F) -> Self {
        let epsilon = layout
            .cardinalities()
            .iter()
            .map(|&l| F::one() / F::from_usize_lossy(l))
            .collect();
        Self {
            alpha0,
            epsilon,
            a: F::lit(2.0),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha0 > F::zero()) || !self.alpha0.is_finite() {
            return Err(Error::Domain(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if let Some((j, e)) = self
            .epsilon
            .iter()
            .enumerate()
            .find(|(_, e)| !(**e > F::zero()) || !e.is_finite())
        {
            return Err(Error::Domain(format!("epsilon[{j}] must be positive, got {e}")));
        }
        if !(self.a > F::zero()) || !self.a.is_finite() {
            return Err(Error::Domain(format!("a must be positive, got {}", self.a)));
        }
        Ok(())
    }

    /// Validates positivity and that there is one ε per variable of `layout`.
    pub fn validate_for(&self, layout: &Layout) -> Result<()> {
        self.check()?;
        if self.epsilon.len() != layout.n_vars() {
            return Err(Error::Contract(format!(
                "priors carry {} epsilon values for {} variables",
                self.epsilon.len(),
                layout.n_vars()
            )));
        }
        Ok(())
    }

    /// ε_jl spread over the flat layout (symmetric within each variable).
    pub fn epsilon_row(&self, layout: &Layout) -> Vec<F> {
        let mut row = Vec::with_capacity(layout.width());
        for (j, &e) in self.epsilon.iter().enumerate() {
            row.extend(std::iter::repeat(e).take(layout.cardinality(j)));
        }
        row
    }
}

/// Row-major `N × K` matrix of responsibilities r_nk.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities<F> {
    n_rows: usize,
    n_clusters: usize,
    values: Vec<F>,
}

impl<F: Scalar> Responsibilities<F> {
    pub fn zeros(n_rows: usize, n_clusters: usize) -> Self {
        Self {
            n_rows,
            n_clusters,
            values: vec![F::zero(); n_rows * n_clusters],
        }
    }

    pub fn from_vec(n_rows: usize, n_clusters: usize, values: Vec<F>) -> Result<Self> {
        if values.len() != n_rows * n_clusters {
            return Err(Error::Contract(format!(
                "{} values for a {n_rows}x{n_clusters} responsibility matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_clusters,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::Contract("ragged responsibility rows".into()));
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), k, values)
    }

    /// One-hot rows from hard labels.
    pub fn one_hot(labels: &[usize], n_clusters: usize) -> Result<Self> {
        let mut r = Self::zeros(labels.len(), n_clusters);
        for (n, &k) in labels.iter().enumerate() {
            if k >= n_clusters {
                return Err(Error::Contract(format!(
                    "label {k} at row {n} exceeds {n_clusters} clusters"
                )));
            }
            r.values[n * n_clusters + k] = F::one();
        }
        Ok(r)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> F {
        self.values[n * self.n_clusters + k]
    }

    #[inline]
    pub fn set(&mut self, n: usize, k: usize, v: F) {
        self.values[n * self.n_clusters + k] = v;
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[F] {
        &self.values[n * self.n_clusters..(n + 1) * self.n_clusters]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize) -> &mut [F] {
        let k = self.n_clusters;
        &mut self.values[n * k..(n + 1) * k]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    /// Σ_n r_nk for every k.
    pub fn column_sums(&self) -> Vec<F> {
        let mut sums = vec![F::zero(); self.n_clusters];
        for row in self.values.chunks_exact(self.n_clusters.max(1)) {
            for (s, &r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums
    }

    /// Argmax per row, lowest index on ties.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n_rows)
            .map(|n| {
                let row = self.row(n);
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Largest |Σ_k r_nk − 1| over rows.
    pub fn max_row_deviation(&self) -> F {
        (0..self.n_rows)
            .map(|n| (self.row(n).iter().copied().sum::<F>() - F::one()).abs())
            .fold(F::zero(), F::max)
    }

    /// Adds column `absorbed` into `survivor` and drops `absorbed`.
    pub fn merge_columns(&self, survivor: usize, absorbed: usize) -> Self {
        assert!(survivor != absorbed && survivor < self.n_clusters && absorbed < self.n_clusters);
        let k_new = self.n_clusters - 1;
        let mut values = Vec::with_capacity(self.n_rows * k_new);
        for n in 0..self.n_rows {
            let row = self.row(n);
            for (k, &r) in row.iter().enumerate() {
                if k == absorbed {
                    continue;
                }
                values.push(if k == survivor { r + row[absorbed] } else { r });
            }
        }
        Self {
            n_rows: self.n_rows,
            n_clusters: k_new,
            values,
        }
    }

    /// Keeps the listed columns (in order).
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * keep.len());
        for n in 0..self.n_rows {
            let row = self.row(n);
            values.extend(keep.iter().map(|&k| row[k]));
        }
        Self {
            n_rows: self.n_rows,
            n_clusters: keep.len(),
            values,
        }
    }

    /// Keeps the listed rows (in order).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_clusters);
        for &n in rows {
            values.extend_from_slice(self.row(n));
        }
        Self {
            n_rows: rows.len(),
            n_clusters: self.n_clusters,
            values,
        }
    }

    /// Rescales every row to sum to one. Rows summing to zero are left as is.
    pub fn renormalize_rows(&mut self) {
        let k = self.n_clusters;
        for row in self.values.chunks_exact_mut(k.max(1)) {
            let s: F = row.iter().copied().sum();
            if s > F::zero() {
                for r in row.iter_mut() {
                    *r /= s;
                }
            }
        }
    }
}

/// Variational posterior parameters: α* (length K) and ε* (K rows of the flat layout).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams<F> {
    pub alpha: Vec<F>,
    pub eps: Vec<F>,
    width: usize,
}

impl<F: Scalar> VariationalParams<F> {
    pub fn new(alpha: Vec<F>, eps: Vec<F>, width: usize) -> Result<Self> {
        if eps.len() != alpha.len() * width {
            return Err(Error::Contract(format!(
                "eps has {} entries; expected {} clusters x {width}",
                eps.len(),
                alpha.len()
            )));
        }
        Ok(Self { alpha, eps, width })
    }

    /// Parameters of `k` clusters that carry no data (prior-only posteriors).
    pub fn prior_only(priors: &Priors<F>, layout: &Layout, k: usize) -> Self {
        let row = priors.epsilon_row(layout);
        let mut eps = Vec::with_capacity(k * row.len());
        for _ in 0..k {
            eps.extend_from_slice(&row);
        }
        Self {
            alpha: vec![priors.alpha0; k],
            eps,
            width: layout.width(),
        }
    }

    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn eps_row(&self, k: usize) -> &[F] {
        &self.eps[k * self.width..(k + 1) * self.width]
    }

    #[inline]
    pub fn eps_row_mut(&mut self, k: usize) -> &mut [F] {
        &mut self.eps[k * self.width..(k + 1) * self.width]
    }

    /// ε*_kj as a category vector.
    pub fn eps_var(&self, layout: &Layout, k: usize, j: usize) -> &[F] {
        &self.eps_row(k)[layout.range(j)]
    }

    pub fn select(&self, keep: &[usize]) -> Self {
        let mut eps = Vec::with_capacity(keep.len() * self.width);
        for &k in keep {
            eps.extend_from_slice(self.eps_row(k));
        }
        Self {
            alpha: keep.iter().map(|&k| self.alpha[k]).collect(),
            eps,
            width: self.width,
        }
    }

    pub fn remove(&self, k: usize) -> Self {
        let keep: Vec<usize> = (0..self.n_clusters()).filter(|&c| c != k).collect();
        self.select(&keep)
    }

    /// Appends the clusters of `other` after those of `self`.
    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!(self.width, other.width);
        let mut out = self.clone();
        out.alpha.extend_from_slice(&other.alpha);
        out.eps.extend_from_slice(&other.eps);
        out
    }

    fn check_positive(&self) -> Result<()> {
        if let Some(v) = self.alpha.iter().chain(&self.eps).find(|v| !(**v > F::zero())) {
            return Err(Error::Domain(format!("variational parameter {v} is not positive")));
        }
        Ok(())
    }
}

/// Responsibilities plus posterior parameters and the ELBO history of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<F> {
    pub resp: Responsibilities<F>,
    pub params: VariationalParams<F>,
    pub elbo_trace: Vec<F>,
    /// Initialised cluster count; the Dirichlet prior dimension for the mixing weights.
    pub k_init: usize,
}

impl<F: Scalar> VariationalState<F> {
    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.params.n_clusters()
    }

    /// Clusters removed from the working arrays but still counted by the prior.
    pub fn n_zombies(&self) -> usize {
        self.k_init - self.n_clusters()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.resp.labels()
    }

    /// Expected cluster sizes T_k = α*_k − α₀.
    pub fn cluster_sizes(&self, priors: &Priors<F>) -> Vec<F> {
        self.params.alpha.iter().map(|&a| a - priors.alpha0).collect()
    }
}

/// ψ(α*_k) − ψ(Σ_j α*_j).
pub fn expected_log_pi<F: Scalar>(alpha_star: &[F]) -> Result<Vec<F>> {
    expected_log_pi_with_zombies(alpha_star, 0, F::one())
}

/// As [`expected_log_pi`], with `zombies` extra prior-only clusters of concentration
/// `alpha0` contributing to the normalising sum.
pub fn expected_log_pi_with_zombies<F: Scalar>(
    alpha_star: &[F],
    zombies: usize,
    alpha0: F,
) -> Result<Vec<F>> {
    if let Some(v) = alpha_star.iter().find(|v| !(**v > F::zero()) || !v.is_finite()) {
        return Err(Error::Domain(format!("alpha* entry {v} is not positive")));
    }
    let total = alpha_star.iter().copied().sum::<F>() + F::from_usize_lossy(zombies) * alpha0;
    let psi_total = digamma(total);
    Ok(alpha_star.iter().map(|&a| digamma(a) - psi_total).collect())
}

/// Entry (k, j, l) = ψ(ε*_kjl) − ψ(Σ_m ε*_kjm), over K rows of the flat layout.
pub fn expected_log_phi<F: Scalar>(eps_star: &[F], layout: &Layout) -> Result<Vec<F>> {
    let w = layout.width();
    if w == 0 || eps_star.len() % w != 0 {
        return Err(Error::Contract(format!(
            "eps* length {} is not a multiple of layout width {w}",
            eps_star.len()
        )));
    }
    if let Some(v) = eps_star.iter().find(|v| !(**v > F::zero()) || !v.is_finite()) {
        return Err(Error::Domain(format!("eps* entry {v} is not positive")));
    }
    let mut out = vec![F::zero(); eps_star.len()];
    for (row_in, row_out) in eps_star.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
        for j in 0..layout.n_vars() {
            let range = layout.range(j);
            let total: F = row_in[range.clone()].iter().copied().sum();
            let psi_total = digamma(total);
            for c in range {
                row_out[c] = digamma(row_in[c]) - psi_total;
            }
        }
    }
    Ok(out)
}

/// Variational E step: r_nk ∝ exp(E[ln π_k] + Σ_j E[ln φ_{k j x_nj}]).
pub fn e_step<F: Scalar>(
    data: &CategoricalDataset,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    k_total: usize,
) -> Result<Responsibilities<F>> {
    e_step_weighted(data, params, priors, k_total, None)
}

/// E step with optional per-variable weights on the cluster log-likelihood.
///
/// With weights `c_j` the variable-selection null-model term `(1 − c_j) ln φ₀` is
/// constant across clusters and cancels in the normalisation, so it is omitted.
pub(crate) fn e_step_weighted<F: Scalar>(
    data: &CategoricalDataset,
    params: &VariationalParams<F>,
    priors: &Priors<F>,
    k_total: usize,
    weights: Option<&[F]>,
) -> Result<Responsibilities<F>> {
    let layout = data.layout();
    let k = params.n_clusters();
    check_shapes(layout, params, k_total)?;
    params.check_positive()?;
    let log_pi = expected_log_pi_with_zombies(&params.alpha, k_total - k, priors.alpha0)?;
    let mut table = expected_log_phi(&params.eps, layout)?;
    if let Some(c) = weights {
        apply_variable_weights(&mut table, layout, c);
    }
    let w = layout.width();
    let mut resp = Responsibilities::zeros(data.n_rows(), k);
    for n in 0..data.n_rows() {
        let codes = data.row_codes(n);
        let row = resp.row_mut(n);
        for (kk, out) in row.iter_mut().enumerate() {
            let base = &table[kk * w..(kk + 1) * w];
            let mut acc = log_pi[kk];
            for &c in codes {
                acc += base[c as usize];
            }
            *out = acc;
        }
        normalize_log_row(row).map_err(|e| Error::Numerical(format!("row {n}: {e}")))?;
    }
    Ok(resp)
}

/// In-place log-sum-exp normalisation with max subtraction.
pub(crate) fn normalize_log_row<F: Scalar>(row: &mut [F]) -> std::result::Result<(), String> {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return Err(format!("log-density maximum is {max}"));
    }
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    // The maximal entry contributes exactly one, so sum >= 1.
    if !(sum >= F::one()) {
        return Err(format!("normaliser {sum} below one"));
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

pub(crate) fn apply_variable_weights<F: Scalar>(table: &mut [F], layout: &Layout, c: &[F]) {
    let w = layout.width();
    for row in table.chunks_exact_mut(w) {
        for (j, &cj) in c.iter().enumerate() {
            for v in &mut row[layout.range(j)] {
                *v *= cj;
            }
        }
    }
}

pub(crate) fn check_shapes<F: Scalar>(
    layout: &Layout,
    params: &VariationalParams<F>,
    k_total: usize,
) -> Result<()> {
    if params.width() != layout.width() {
        return Err(Error::Contract(format!(
            "parameter width {} does not match data layout width {}",
            params.width(),
            layout.width()
        )));
    }
    if params.n_clusters() == 0 {
        return Err(Error::Contract("model has no clusters".into()));
    }
    if k_total < params.n_clusters() {
        return Err(Error::Contract(format!(
            "prior dimension {k_total} is below the live cluster count {}",
            params.n_clusters()
        )));
    }
    Ok(())
}

/// Variational M step: α*_k = α₀ + Σ_n r_nk, ε*_kjl = ε_j + Σ_n I(x_nj = l) r_nk.
pub fn m_step<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
    priors: &Priors<F>,
) -> Result<VariationalParams<F>> {
    let counts = weighted_counts(data, resp)?;
    Ok(params_from_counts(data.layout(), resp, counts, priors, None))
}

/// Σ_n r_nk I(x_nj = l), as K rows of the flat layout.
pub(crate) fn weighted_counts<F: Scalar>(
    data: &CategoricalDataset,
    resp: &Responsibilities<F>,
) -> Result<Vec<F>> {
    if resp.n_rows() != data.n_rows() {
        return Err(Error::Contract(format!(
            "{} responsibility rows for {} observations",
            resp.n_rows(),
            data.n_rows()
        )));
    }
    let k = resp.n_clusters();
    let w = data.layout().width();
    let mut counts = vec![F::zero(); k * w];
    for n in 0..data.n_rows() {
        let codes = data.row_codes(n);
        for (kk, &r) in resp.row(n).iter().enumerate() {
            if r == F::zero() {
                continue;
            }
            let base = &mut counts[kk * w..(kk + 1) * w];
            for &c in codes {
                base[c as usize] += r;
            }
        }
    }
    Ok(counts)
}

pub(crate) fn params_from_counts<F: Scalar>(
    layout: &Layout,
    resp: &Responsibilities<F>,
    mut counts: Vec<F>,
    priors: &Priors<F>,
    weights: Option<&[F]>,
) -> VariationalParams<F> {
    let w = layout.width();
    let prior_row = priors.epsilon_row(layout);
    if let Some(c) = weights {
        apply_variable_weights(&mut counts, layout, c);
    }
    for row in counts.chunks_exact_mut(w) {
        for (v, &p) in row.iter_mut().zip(&prior_row) {
            *v = p + *v;
        }
    }
    let alpha = resp
        .column_sums()
        .into_iter()
        .map(|t| priors.alpha0 + t)
        .collect();
    VariationalParams {
        alpha,
        eps: counts,
        width: w,
    }
}
