//! Versioned JSON encoding of batch summaries.
//!
//! Every float is written in scientific notation with 17 significant digits,
//! which round-trips any `f64` exactly.

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Priors;
use crate::scalar::Scalar;

use super::BatchSummary;

pub const WIRE_VERSION: u32 = 1;

/// An `f64` that serialises with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sci(pub f64);

impl Serialize for Sci {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite number {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sci {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Sci)
    }
}

fn sci<F: Scalar>(v: &[F]) -> Vec<Sci> {
    v.iter().map(|x| Sci(x.as_f64())).collect()
}

fn unsci<F: Scalar>(v: &[Sci]) -> Vec<F> {
    v.iter().map(|x| F::lit(x.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrior {
    pub alpha0: Sci,
    pub epsilon: Vec<Sci>,
    pub a: Sci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSummary {
    pub version: u32,
    pub batch_id: String,
    pub n_obs: usize,
    pub k_clusters: usize,
    pub k_init: usize,
    pub cardinalities: Vec<usize>,
    pub alpha_star: Vec<Sci>,
    /// cluster, then variable, then category.
    pub eps_star: Vec<Vec<Vec<Sci>>>,
    pub entropy: Sci,
    pub prior: WirePrior,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_vars: Option<Vec<bool>>,
    #[serde(default)]
    pub flagged: Vec<usize>,
    #[serde(default)]
    pub withheld: usize,
    #[serde(default = "zero_sci")]
    pub withheld_mass: Sci,
}

fn zero_sci() -> Sci {
    Sci(0.0)
}

/// Hex SHA-256 of a canonical encoding of (α₀, ε, a, P, L_j). Floats enter
/// through their IEEE-754 bit patterns.
pub fn prior_fingerprint<F: Scalar>(priors: &Priors<F>, cardinalities: &[usize]) -> String {
    let mut text = String::from("fedmerdel-prior-v1");
    text.push_str(&format!(";alpha0={:016x}", priors.alpha0.as_f64().to_bits()));
    text.push_str(&format!(";a={:016x}", priors.a.as_f64().to_bits()));
    text.push_str(&format!(";P={}", cardinalities.len()));
    text.push_str(";epsilon=");
    for e in &priors.epsilon {
        text.push_str(&format!("{:016x},", e.as_f64().to_bits()));
    }
    text.push_str(";L=");
    for l in cardinalities {
        text.push_str(&format!("{l},"));
    }
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<F: Scalar> BatchSummary<F> {
    pub fn to_wire(&self) -> WireSummary {
        let layout = crate::data::Layout::new(self.cardinalities.clone());
        let w = layout.width();
        let eps_star = self
            .eps_star
            .chunks_exact(w.max(1))
            .map(|row| (0..layout.n_vars()).map(|j| sci(&row[layout.range(j)])).collect())
            .collect();
        WireSummary {
            version: WIRE_VERSION,
            batch_id: self.batch_id.clone(),
            n_obs: self.n_obs,
            k_clusters: self.k_clusters,
            k_init: self.k_init,
            cardinalities: self.cardinalities.clone(),
            alpha_star: sci(&self.alpha_star),
            eps_star,
            entropy: Sci(self.entropy.as_f64()),
            prior: WirePrior {
                alpha0: Sci(self.priors.alpha0.as_f64()),
                epsilon: sci(&self.priors.epsilon),
                a: Sci(self.priors.a.as_f64()),
            },
            fingerprint: self.fingerprint.clone(),
            selected_vars: self.selected_vars.clone(),
            flagged: self.flagged.clone(),
            withheld: self.withheld,
            withheld_mass: Sci(self.withheld_mass.as_f64()),
        }
    }

    pub fn from_wire(w: WireSummary) -> Result<Self> {
        if w.version != WIRE_VERSION {
            return Err(Error::Version(w.version));
        }
        let layout = crate::data::Layout::new(w.cardinalities.clone());
        if w.cardinalities.iter().any(|&l| l < 2) {
            return Err(Error::Schema("cardinalities must all be at least 2".into()));
        }
        if w.alpha_star.len() != w.k_clusters || w.eps_star.len() != w.k_clusters {
            return Err(Error::Schema(format!(
                "k_clusters = {} but {} alpha and {} eps rows",
                w.k_clusters,
                w.alpha_star.len(),
                w.eps_star.len()
            )));
        }
        let mut eps = Vec::with_capacity(w.k_clusters * layout.width());
        for (k, row) in w.eps_star.iter().enumerate() {
            if row.len() != layout.n_vars() {
                return Err(Error::Schema(format!("eps row {k} has {} variables", row.len())));
            }
            for (j, cats) in row.iter().enumerate() {
                if cats.len() != layout.cardinality(j) {
                    return Err(Error::Schema(format!(
                        "eps[{k}][{j}] has {} categories, expected {}",
                        cats.len(),
                        layout.cardinality(j)
                    )));
                }
                eps.extend(unsci::<F>(cats));
            }
        }
        if let Some(sel) = &w.selected_vars {
            if sel.len() != layout.n_vars() {
                return Err(Error::Schema("selected_vars length differs from P".into()));
            }
        }
        if w.prior.epsilon.len() != layout.n_vars() {
            return Err(Error::Schema("prior epsilon length differs from P".into()));
        }
        let priors = Priors::new(F::lit(w.prior.alpha0.0), unsci(&w.prior.epsilon), F::lit(w.prior.a.0))?;
        let expected = prior_fingerprint(&priors, &w.cardinalities);
        if expected != w.fingerprint {
            return Err(Error::IncompatiblePriors {
                expected,
                found: w.fingerprint,
            });
        }
        Ok(Self {
            batch_id: w.batch_id,
            n_obs: w.n_obs,
            k_clusters: w.k_clusters,
            k_init: w.k_init,
            cardinalities: w.cardinalities,
            alpha_star: unsci(&w.alpha_star),
            eps_star: eps,
            entropy: F::lit(w.entropy.0),
            priors,
            fingerprint: w.fingerprint,
            selected_vars: w.selected_vars,
            flagged: w.flagged,
            withheld: w.withheld,
            withheld_mass: F::lit(w.withheld_mass.0),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_wire())?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_wire())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_wire(serde_json::from_str(text)?)
    }
}
