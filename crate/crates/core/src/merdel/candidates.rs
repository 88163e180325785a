//! Merge and delete candidate heuristics.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Layout;
use crate::model::VariationalParams;
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma, ln_multivariate_beta};

/// How merge pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Pearson correlation of the first-category ε* entries (binary data only).
    Correlation,
    /// Symmetrised Dirichlet KL divergence summed over variables.
    Kl,
    /// Bhattacharyya distance between Dirichlet factors summed over variables.
    Bhattacharyya,
    /// Uniform over pairs.
    Random,
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "correlation" | "corr" => Ok(Self::Correlation),
            "kl" => Ok(Self::Kl),
            "bhattacharyya" => Ok(Self::Bhattacharyya),
            "random" => Ok(Self::Random),
            other => Err(format!(
                "unknown criterion '{other}' (expected correlation, kl, bhattacharyya or random)"
            )),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Correlation => "correlation",
            Self::Kl => "kl",
            Self::Bhattacharyya => "bhattacharyya",
            Self::Random => "random",
        })
    }
}

/// KL(Dir(a) ‖ Dir(b)).
pub fn dirichlet_kl<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let a0: F = a.iter().copied().sum();
    let b0: F = b.iter().copied().sum();
    let psi_a0 = digamma(a0);
    let mut kl = ln_gamma(a0) - ln_gamma(b0);
    for (&ai, &bi) in a.iter().zip(b) {
        kl += ln_gamma(bi) - ln_gamma(ai) + (ai - bi) * (digamma(ai) - psi_a0);
    }
    kl
}

/// (KL(a‖b) + KL(b‖a)) / 2.
pub fn symmetric_dirichlet_kl<F: Scalar>(a: &[F], b: &[F]) -> F {
    (dirichlet_kl(a, b) + dirichlet_kl(b, a)) * F::lit(0.5)
}

/// −ln ∫ √(Dir(x; a) Dir(x; b)) dx = ½ ln B(a) + ½ ln B(b) − ln B((a + b)/2).
pub fn bhattacharyya_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let half = F::lit(0.5);
    let mid: Vec<F> = a.iter().zip(b).map(|(&x, &y)| (x + y) * half).collect();
    half * ln_multivariate_beta(a) + half * ln_multivariate_beta(b) - ln_multivariate_beta(&mid)
}

/// Pearson correlation; NaN when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() != y.len() || x.is_empty() {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Criterion actually used on a layout: correlation needs every variable binary.
pub fn effective_criterion(criterion: Criterion, layout: &Layout) -> Criterion {
    if criterion == Criterion::Correlation && !layout.is_binary() {
        Criterion::Kl
    } else {
        criterion
    }
}

/// A scored cluster pair; larger scores are better merge candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// Scores cluster pairs of one parameter set under a criterion.
pub struct PairScorer<'a, F> {
    params: &'a VariationalParams<F>,
    layout: &'a Layout,
    criterion: Criterion,
    floor: f64,
    first_cat: Vec<Vec<f64>>,
}

impl<'a, F: Scalar> PairScorer<'a, F> {
    pub fn new(
        params: &'a VariationalParams<F>,
        layout: &'a Layout,
        criterion: Criterion,
        correlation_floor: f64,
    ) -> Self {
        let criterion = effective_criterion(criterion, layout);
        let first_cat = if criterion == Criterion::Correlation {
            (0..params.n_clusters())
                .map(|k| {
                    let row = params.eps_row(k);
                    (0..layout.n_vars())
                        .map(|j| row[layout.offset(j)].as_f64())
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            params,
            layout,
            criterion,
            floor: correlation_floor,
            first_cat,
        }
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    /// Score of pair (a, b), or `None` if the pair does not qualify.
    pub fn score(&self, a: usize, b: usize) -> Option<f64> {
        let s = match self.criterion {
            Criterion::Correlation => {
                let c = pearson(&self.first_cat[a], &self.first_cat[b]);
                return (c > self.floor).then_some(c);
            }
            Criterion::Random => 0.0,
            Criterion::Kl => -self.summed(a, b, symmetric_dirichlet_kl::<F>),
            Criterion::Bhattacharyya => -self.summed(a, b, bhattacharyya_distance::<F>),
        };
        s.is_finite().then_some(s)
    }

    fn summed(&self, a: usize, b: usize, div: fn(&[F], &[F]) -> F) -> f64 {
        (0..self.layout.n_vars())
            .map(|j| {
                div(
                    self.params.eps_var(self.layout, a, j),
                    self.params.eps_var(self.layout, b, j),
                )
                .as_f64()
            })
            .sum()
    }

    /// Qualifying pairs, best first; ties keep the input order.
    pub fn rank(&self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<ScoredPair> {
        let mut out: Vec<ScoredPair> = pairs
            .into_iter()
            .filter_map(|(a, b)| self.score(a, b).map(|score| ScoredPair { a, b, score }))
            .collect();
        out.sort_by(|x, y| y.score.total_cmp(&x.score));
        out
    }

    /// Uniform draw among the `pool` best pairs (among all pairs for the random criterion).
    pub fn pick<R: Rng + ?Sized>(
        &self,
        pairs: impl IntoIterator<Item = (usize, usize)>,
        pool: usize,
        rng: &mut R,
    ) -> Option<(usize, usize)> {
        let ranked = self.rank(pairs);
        let take = if self.criterion == Criterion::Random {
            ranked.len()
        } else {
            pool.max(1).min(ranked.len())
        };
        ranked[..take].choose(rng).map(|p| (p.a, p.b))
    }
}

/// All unordered pairs (a < b) of `k` clusters.
pub fn all_pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |a| (a + 1..k).map(move |b| (a, b)))
}

/// Samples a merge pair; `None` when no pair qualifies or fewer than two clusters exist.
pub fn merge_candidates<F: Scalar, R: Rng + ?Sized>(
    params: &VariationalParams<F>,
    layout: &Layout,
    criterion: Criterion,
    candidate_pool: usize,
    correlation_floor: f64,
    rng: &mut R,
) -> Option<(usize, usize)> {
    let k = params.n_clusters();
    if k < 2 {
        return None;
    }
    PairScorer::new(params, layout, criterion, correlation_floor).pick(all_pairs(k), candidate_pool, rng)
}

/// Uniform among clusters smaller than `fraction · n_obs`, else among the three smallest.
pub fn delete_candidate<R: Rng + ?Sized>(
    sizes: &[f64],
    n_obs: usize,
    fraction: f64,
    rng: &mut R,
) -> Option<usize> {
    if sizes.len() < 2 {
        return None;
    }
    let cutoff = fraction * n_obs as f64;
    let small: Vec<usize> = (0..sizes.len()).filter(|&k| sizes[k] < cutoff).collect();
    if !small.is_empty() {
        return small.choose(rng).copied();
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[a].total_cmp(&sizes[b]).then(a.cmp(&b)));
    order.truncate(3);
    order.choose(rng).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn divergences_vanish_on_identical_factors() {
        assert!(dirichlet_kl(&[1.0_f64, 1.0], &[1.0, 1.0]).abs() < 1e-15);
        let a = [2.5_f64, 0.7, 4.0];
        assert!(symmetric_dirichlet_kl(&a, &a).abs() < 1e-13);
        assert!(bhattacharyya_distance(&a, &a).abs() < 1e-13);
        let b = [1.0_f64, 3.0, 0.2];
        assert!(dirichlet_kl(&a, &b) > 0.0);
        assert!(bhattacharyya_distance(&a, &b) > 0.0);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[0.0, 1.0]).is_nan());
    }

    #[test]
    fn correlation_falls_back_to_kl_for_categorical() {
        assert_eq!(
            effective_criterion(Criterion::Correlation, &Layout::new(vec![2, 3])),
            Criterion::Kl
        );
        assert_eq!(
            effective_criterion(Criterion::Correlation, &Layout::uniform(4, 2)),
            Criterion::Correlation
        );
    }

    #[test]
    fn delete_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let k = delete_candidate(&[100.0, 4.0, 3.0, 93.0], 200, 0.05, &mut rng).unwrap();
            assert!(k == 1 || k == 2);
            assert_eq!(delete_candidate(&[100.0, 4.0, 96.0], 200, 0.05, &mut rng), Some(1));
            let k = delete_candidate(&[10.0; 5], 50, 0.05, &mut rng).unwrap();
            assert!(k < 3);
        }
        assert_eq!(delete_candidate(&[5.0], 5, 0.05, &mut rng), None);
    }

    #[test]
    fn criterion_parses() {
        assert_eq!("KL".parse::<Criterion>().unwrap(), Criterion::Kl);
        assert!("bogus".parse::<Criterion>().is_err());
        assert_eq!(Criterion::Bhattacharyya.to_string(), "bhattacharyya");
    }
}
