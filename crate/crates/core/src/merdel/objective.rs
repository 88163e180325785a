//! The update rules a fit alternates between. The base mixture and the
//! variable-selection variant share the MerDel loop through this trait.

use crate::data::CategoricalDataset;
use crate::elbo::elbo_of_fit;
use crate::error::Result;
use crate::model::{e_step, m_step, Priors, Responsibilities, VariationalParams};
use crate::scalar::Scalar;

pub trait Objective<F: Scalar> {
    fn priors(&self) -> &Priors<F>;

    fn e_step(
        &self,
        data: &CategoricalDataset,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<Responsibilities<F>>;

    fn m_step(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
    ) -> Result<VariationalParams<F>>;

    /// ELBO of `(resp, params)` on `data`. `params` must come from an M step on `resp`.
    fn elbo(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<F>;

    /// Updates any global factors after an M step. A no-op for the base model.
    fn refresh(
        &mut self,
        _data: &CategoricalDataset,
        _resp: &Responsibilities<F>,
        _params: &VariationalParams<F>,
    ) -> Result<()> {
        Ok(())
    }
}

/// Plain mixture model.
#[derive(Debug, Clone)]
pub struct BaseObjective<F> {
    pub priors: Priors<F>,
}

impl<F: Scalar> Objective<F> for BaseObjective<F> {
    fn priors(&self) -> &Priors<F> {
        &self.priors
    }

    fn e_step(
        &self,
        data: &CategoricalDataset,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<Responsibilities<F>> {
        e_step(data, params, &self.priors, k_total)
    }

    fn m_step(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
    ) -> Result<VariationalParams<F>> {
        m_step(data, resp, &self.priors)
    }

    fn elbo(
        &self,
        data: &CategoricalDataset,
        resp: &Responsibilities<F>,
        params: &VariationalParams<F>,
        k_total: usize,
    ) -> Result<F> {
        elbo_of_fit(resp, params, &self.priors, data.layout(), k_total)
    }
}
