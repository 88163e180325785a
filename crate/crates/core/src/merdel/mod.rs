//! MerDel: variational EM with interleaved merge and delete moves.

mod candidates;
mod kmodes;
mod moves;
mod objective;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::CategoricalDataset;
use crate::elbo::check_convergence;
use crate::error::{Error, Result};
use crate::model::{Priors, VariationalState};
use crate::scalar::Scalar;

pub use candidates::{
    all_pairs, bhattacharyya_distance, delete_candidate, dirichlet_kl, effective_criterion,
    merge_candidates, pearson, symmetric_dirichlet_kl, Criterion, PairScorer, ScoredPair,
};
pub use kmodes::{kmodes_init, kmodes_labels};
pub use moves::{
    delete_move, improves, merge_move, propose_delete, propose_merge, prune_in_place,
    prune_zombies, Working, ZOMBIE_THRESHOLD,
};
pub use objective::{BaseObjective, Objective};

/// Clusters with expected size above this count as live.
pub const LIVE_THRESHOLD: f64 = 0.5;

/// Consecutive rejections that end a moves-only (`laps = 0`) run.
pub const MOVES_ONLY_PATIENCE: usize = 10;

/// EM cycles between move rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Laps {
    /// Plain variational inference.
    Never,
    /// `Every(0)` runs one EM cycle and then moves only.
    Every(usize),
}

impl std::str::FromStr for Laps {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("never") {
            return Ok(Self::Never);
        }
        s.parse::<usize>()
            .map(Self::Every)
            .map_err(|_| format!("laps must be a count or 'never', got '{s}'"))
    }
}

impl std::fmt::Display for Laps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Never => f.write_str("never"),
            Self::Every(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Laps {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Never => s.serialize_str("never"),
            Self::Every(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Laps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Self::Every(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MerDelConfig {
    pub k_init: usize,
    pub laps: Laps,
    pub merge_criterion: Criterion,
    /// Relative ELBO tolerance.
    pub tol: f64,
    /// Maximum number of EM cycles.
    pub max_iters: usize,
    pub seed: u64,
    pub candidate_pool: usize,
    pub correlation_floor: f64,
    pub delete_small_fraction: f64,
}

impl Default for MerDelConfig {
    fn default() -> Self {
        Self {
            k_init: 20,
            laps: Laps::Every(5),
            merge_criterion: Criterion::Correlation,
            tol: 5e-7,
            max_iters: 1000,
            seed: 0,
            candidate_pool: 3,
            correlation_floor: 0.05,
            delete_small_fraction: 0.05,
        }
    }
}

impl MerDelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_init == 0 {
            return Err(Error::Contract("k_init must be at least 1".into()));
        }
        if self.candidate_pool == 0 {
            return Err(Error::Contract("candidate_pool must be at least 1".into()));
        }
        if !(self.delete_small_fraction > 0.0 && self.delete_small_fraction < 1.0) {
            return Err(Error::Contract(format!(
                "delete_small_fraction must lie in (0, 1), got {}",
                self.delete_small_fraction
            )));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Contract(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Contract("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Merge,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub kind: MoveKind,
    /// Working-array indices at proposal time.
    pub clusters: Vec<usize>,
    pub accepted: bool,
    pub elbo_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<F> {
    pub state: VariationalState<F>,
    pub labels: Vec<usize>,
    pub live_clusters: usize,
    pub elbo_final: F,
    pub move_log: Vec<MoveRecord>,
    pub converged: bool,
    /// EM cycles run.
    pub iterations: usize,
}

impl<F: Scalar> FittedModel<F> {
    pub fn accepted_moves(&self) -> usize {
        self.move_log.iter().filter(|m| m.accepted).count()
    }
}

/// Number of clusters with α*_k − α₀ above [`LIVE_THRESHOLD`].
pub fn count_live<F: Scalar>(alpha: &[F], alpha0: F) -> usize {
    let t = F::lit(LIVE_THRESHOLD);
    alpha.iter().filter(|&&a| a - alpha0 > t).count()
}

/// Fits the base mixture with MerDel.
pub fn fit_merdel<F: Scalar>(
    data: &CategoricalDataset,
    config: &MerDelConfig,
    priors: &Priors<F>,
) -> Result<FittedModel<F>> {
    let mut obj = BaseObjective { priors: priors.clone() };
    fit_with(data, config, &mut obj)
}

/// The MerDel loop over any [`Objective`].
///
/// k-modes, M step, then EM cycles (E, prune, M, refresh) with a merge round and
/// a delete round every `laps` cycles. When the ELBO settles between move
/// rounds one extra move round is tried before stopping.
pub fn fit_with<F: Scalar, O: Objective<F>>(
    data: &CategoricalDataset,
    config: &MerDelConfig,
    obj: &mut O,
) -> Result<FittedModel<F>> {
    config.validate()?;
    obj.priors().validate_for(data.layout())?;
    let k_total = config.k_init;
    let tol = F::lit(config.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut resp = kmodes_init::<F, _>(data, config.k_init, &mut rng)?;
    let mut params = obj.m_step(data, &resp)?;
    prune_in_place(&mut resp, &mut params);
    let elbo = obj.elbo(data, &resp, &params, k_total)?;
    let mut run = Run {
        data,
        k_total,
        config,
        cur: Working { resp, params, elbo },
        trace: vec![elbo],
        log: Vec::new(),
        rng,
    };

    let mut iterations = 0;
    let mut converged = false;
    match config.laps {
        Laps::Never => {
            while iterations < config.max_iters {
                run.em_cycle(obj)?;
                iterations += 1;
                if check_convergence(&run.trace, tol) {
                    converged = true;
                    break;
                }
            }
        }
        Laps::Every(0) => {
            run.em_cycle(obj)?;
            iterations += 1;
            let mut rejections = 0;
            let mut rounds = 0;
            while rejections < MOVES_ONLY_PATIENCE && rounds < config.max_iters {
                rounds += 1;
                let mut proposed = false;
                for kind in [MoveKind::Merge, MoveKind::Delete] {
                    match run.move_round(obj, kind)? {
                        Some(true) => rejections = 0,
                        Some(false) => rejections += 1,
                        None => continue,
                    }
                    proposed = true;
                }
                if !proposed {
                    break;
                }
            }
            converged = rejections >= MOVES_ONLY_PATIENCE || run.cur.params.n_clusters() < 2;
        }
        Laps::Every(laps) => {
            let mut since_moves = 0;
            while iterations < config.max_iters {
                run.em_cycle(obj)?;
                iterations += 1;
                since_moves += 1;
                let settled = check_convergence(&run.trace, tol);
                if since_moves >= laps || settled {
                    since_moves = 0;
                    let merged = run.move_round(obj, MoveKind::Merge)? == Some(true);
                    let deleted = run.move_round(obj, MoveKind::Delete)? == Some(true);
                    if settled && !merged && !deleted {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }

    let Run { cur, trace, log, .. } = run;
    let labels = cur.resp.labels();
    let live_clusters = count_live(&cur.params.alpha, obj.priors().alpha0);
    let elbo_final = cur.elbo;
    Ok(FittedModel {
        state: VariationalState {
            resp: cur.resp,
            params: cur.params,
            elbo_trace: trace,
            k_init: k_total,
        },
        labels,
        live_clusters,
        elbo_final,
        move_log: log,
        converged,
        iterations,
    })
}

struct Run<'a, F> {
    data: &'a CategoricalDataset,
    k_total: usize,
    config: &'a MerDelConfig,
    cur: Working<F>,
    trace: Vec<F>,
    log: Vec<MoveRecord>,
    rng: ChaCha8Rng,
}

impl<F: Scalar> Run<'_, F> {
    fn em_cycle<O: Objective<F>>(&mut self, obj: &mut O) -> Result<()> {
        let mut resp = obj.e_step(self.data, &self.cur.params, self.k_total)?;
        let mut stale = self.cur.params.clone();
        prune_in_place(&mut resp, &mut stale);
        let params = obj.m_step(self.data, &resp)?;
        obj.refresh(self.data, &resp, &params)?;
        let elbo = obj.elbo(self.data, &resp, &params, self.k_total)?;
        self.cur = Working { resp, params, elbo };
        self.trace.push(elbo);
        Ok(())
    }

    /// One proposal of the given kind. `None` when there is no candidate.
    fn move_round<O: Objective<F>>(&mut self, obj: &O, kind: MoveKind) -> Result<Option<bool>> {
        let layout = self.data.layout();
        let (cand, clusters) = match kind {
            MoveKind::Merge => {
                let Some((a, b)) = merge_candidates(
                    &self.cur.params,
                    layout,
                    self.config.merge_criterion,
                    self.config.candidate_pool,
                    self.config.correlation_floor,
                    &mut self.rng,
                ) else {
                    return Ok(None);
                };
                let cand = propose_merge(self.data, obj, &self.cur.resp, a, b, self.k_total)?;
                (cand, vec![a, b])
            }
            MoveKind::Delete => {
                let alpha0 = obj.priors().alpha0;
                let sizes: Vec<f64> =
                    self.cur.params.alpha.iter().map(|&a| (a - alpha0).as_f64()).collect();
                let Some(k) = delete_candidate(
                    &sizes,
                    self.data.n_rows(),
                    self.config.delete_small_fraction,
                    &mut self.rng,
                ) else {
                    return Ok(None);
                };
                let cand =
                    propose_delete(self.data, obj, &self.cur.resp, &self.cur.params, k, self.k_total)?;
                (cand, vec![k])
            }
        };
        let accepted = improves(cand.elbo, self.cur.elbo);
        self.log.push(MoveRecord {
            kind,
            clusters,
            accepted,
            elbo_delta: (cand.elbo - self.cur.elbo).as_f64(),
        });
        if accepted {
            self.trace.push(cand.elbo);
            self.cur = cand;
        }
        Ok(Some(accepted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laps_parse_and_serde() {
        assert_eq!("never".parse::<Laps>().unwrap(), Laps::Never);
        assert_eq!("5".parse::<Laps>().unwrap(), Laps::Every(5));
        assert!("-1".parse::<Laps>().is_err());
        let s = serde_json::to_string(&MerDelConfig::default()).unwrap();
        assert!(s.contains("\"laps\":5"));
        let c: MerDelConfig = serde_json::from_str(r#"{"laps":"never","k_init":4}"#).unwrap();
        assert_eq!(c.laps, Laps::Never);
        assert_eq!(c.k_init, 4);
        assert_eq!(c.candidate_pool, 3);
    }

    #[test]
    fn config_validation() {
        let mut c = MerDelConfig::default();
        assert!(c.validate().is_ok());
        c.delete_small_fraction = 1.0;
        assert!(c.validate().is_err());
        c = MerDelConfig { candidate_pool: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn identical_rows_collapse_to_one_cluster() {
        let rows = vec![vec![1, 0, 1, 1]; 30];
        let data = CategoricalDataset::from_rows(&rows, vec![2; 4]).unwrap();
        let config = MerDelConfig { k_init: 5, ..Default::default() };
        let fit = fit_merdel(&data, &config, &Priors::<f64>::defaults(data.layout())).unwrap();
        assert_eq!(fit.live_clusters, 1);
        assert!(fit.labels.iter().all(|&l| l == fit.labels[0]));
    }
}
