//! Synthetic categorical data and batch partitioning.
//!
//! Binary variables draw a per-cluster probability of category 1 from
//! Beta(1, 5); L-ary variables draw per-cluster category probabilities from a
//! flat Dirichlet. Noise variables come last and use one parameter for every
//! cluster. All randomness comes from ChaCha8 seeded by `GenSpec::seed`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};

/// Identifies the generator so manifests record how a dataset was drawn.
pub const GENERATOR: &str = "chacha8/fedmerdel-datagen-v1";

/// How many rows each true cluster gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterWeights {
    /// Sizes as equal as possible.
    Equal,
    /// Labels drawn independently with these probabilities.
    Probabilities { p: Vec<f64> },
    /// Exact sizes (must sum to n).
    Sizes { sizes: Vec<usize> },
    /// Sizes drawn uniformly in [min, max] and rescaled to sum to n.
    SizeRange { min: f64, max: f64 },
}

impl Default for ClusterWeights {
    fn default() -> Self {
        Self::Equal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    #[serde(default)]
    pub weights: ClusterWeights,
    /// Per-variable L_j; binary when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinalities: Option<Vec<usize>>,
    #[serde(default)]
    pub n_noise_vars: usize,
    #[serde(default = "default_beta")]
    pub beta: (f64, f64),
    pub seed: u64,
}

fn default_beta() -> (f64, f64) {
    (1.0, 5.0)
}

impl GenSpec {
    /// Binary data, equal clusters, no noise, Beta(1, 5).
    pub fn binary(n: usize, p: usize, k_true: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            k_true,
            weights: ClusterWeights::Equal,
            cardinalities: None,
            n_noise_vars: 0,
            beta: default_beta(),
            seed,
        }
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.cardinalities.clone().unwrap_or_else(|| vec![2; self.p])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.k_true == 0 {
            return Err(Error::Contract("n, p and k_true must be positive".into()));
        }
        if self.k_true > self.n {
            return Err(Error::Contract("more clusters than observations".into()));
        }
        if self.n_noise_vars > self.p {
            return Err(Error::Contract("n_noise_vars exceeds p".into()));
        }
        let card = self.cardinalities();
        if card.len() != self.p || card.iter().any(|&l| l < 2) {
            return Err(Error::Contract("cardinalities must have length p and entries >= 2".into()));
        }
        if !(self.beta.0 > 0.0 && self.beta.1 > 0.0) {
            return Err(Error::Contract("beta parameters must be positive".into()));
        }
        match &self.weights {
            ClusterWeights::Equal => {}
            ClusterWeights::Probabilities { p } => {
                if p.len() != self.k_true || p.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::Contract("one non-negative weight per cluster required".into()));
                }
                if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract("cluster weights must sum to 1".into()));
                }
            }
            ClusterWeights::Sizes { sizes } => {
                if sizes.len() != self.k_true || sizes.iter().sum::<usize>() != self.n {
                    return Err(Error::Contract("cluster sizes must have length k_true and sum to n".into()));
                }
            }
            ClusterWeights::SizeRange { min, max } => {
                if !(*min > 0.0 && min <= max) {
                    return Err(Error::Contract("size range needs 0 < min <= max".into()));
                }
            }
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: CategoricalDataset,
    pub labels: Vec<usize>,
    /// True for variables that carry cluster structure.
    pub relevant: Vec<bool>,
    /// Category probabilities: `params[k][j]` has length L_j.
    pub params: Vec<Vec<Vec<f64>>>,
}

/// Draw from Dirichlet(1, ..., 1) of dimension `l`: normalised Exp(1) variates.
fn flat_dirichlet<R: Rng>(rng: &mut R, l: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn draw_probs<R: Rng>(rng: &mut R, l: usize, beta: &Beta<f64>) -> Vec<f64> {
    if l == 2 {
        let p1 = beta.sample(rng);
        vec![1.0 - p1, p1]
    } else {
        flat_dirichlet(rng, l)
    }
}

/// Largest-remainder rounding of non-negative weights to integers summing to `n`.
fn apportion(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let short = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(short) {
        sizes[k] += 1;
    }
    sizes
}

/// Draws a dataset according to `spec`.
pub fn generate(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let card = spec.cardinalities();
    let beta = Beta::new(spec.beta.0, spec.beta.1).map_err(|e| Error::Contract(e.to_string()))?;
    let n_relevant = spec.p - spec.n_noise_vars;

    let mut params = vec![vec![Vec::new(); spec.p]; spec.k_true];
    for j in 0..spec.p {
        if j < n_relevant {
            for cluster in params.iter_mut() {
                cluster[j] = draw_probs(&mut rng, card[j], &beta);
            }
        } else {
            let shared = draw_probs(&mut rng, card[j], &beta);
            for cluster in params.iter_mut() {
                cluster[j] = shared.clone();
            }
        }
    }

    let mut labels = match &spec.weights {
        ClusterWeights::Probabilities { p } => {
            let cum: Vec<f64> = p
                .iter()
                .scan(0.0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect();
            (0..spec.n)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
                    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
                })
                .collect()
        }
        other => {
            let sizes = match other {
                ClusterWeights::Equal => apportion(&vec![1.0; spec.k_true], spec.n),
                ClusterWeights::Sizes { sizes } => sizes.clone(),
                ClusterWeights::SizeRange { min, max } => {
                    let draws: Vec<f64> = (0..spec.k_true).map(|_| rng.random_range(*min..=*max)).collect();
                    apportion(&draws, spec.n)
                }
                ClusterWeights::Probabilities { .. } => unreachable!(),
            };
            let mut labels: Vec<usize> = sizes
                .iter()
                .enumerate()
                .flat_map(|(k, &s)| std::iter::repeat(k).take(s))
                .collect();
            labels.shuffle(&mut rng);
            labels
        }
    };
    labels.truncate(spec.n);

    let mut values = Vec::with_capacity(spec.n * spec.p);
    for &k in &labels {
        for j in 0..spec.p {
            let probs = &params[k][j];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut x = probs.len() - 1;
            for (l, &pr) in probs.iter().enumerate() {
                acc += pr;
                if u < acc {
                    x = l;
                    break;
                }
            }
            values.push(x);
        }
    }
    let mut data = CategoricalDataset::from_flat(&values, spec.n, card)?;
    data.set_var_names((0..spec.p).map(|j| format!("V{}", j + 1)).collect())?;
    let relevant = (0..spec.p).map(|j| j < n_relevant).collect();
    Ok(Generated {
        data,
        labels,
        relevant,
        params,
    })
}

/// How rows are split into batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    /// Uniformly shuffled into near-equal batches.
    Random,
    /// One cluster confined to a single batch, the rest random.
    Exclusive { cluster: usize },
    /// Clusters dealt to batches round-robin, no cluster in two batches.
    Disjoint,
    /// The last `shared` clusters spread over all batches, the rest disjoint.
    DisjointPlusShared { shared: usize },
    /// Each cluster's rows spread over batches by a flat Dirichlet draw.
    DirichletSkew,
}

impl std::str::FromStr for PartitionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<usize, String> {
            a.ok_or_else(|| format!("partition mode '{head}' needs an argument, e.g. {head}:2"))?
                .parse()
                .map_err(|_| format!("bad argument in '{s}'"))
        };
        match head {
            "random" => Ok(Self::Random),
            "exclusive" => Ok(Self::Exclusive { cluster: num(arg)? }),
            "disjoint" => Ok(Self::Disjoint),
            "disjoint_plus_shared" => Ok(Self::DisjointPlusShared { shared: num(arg)? }),
            "dirichlet_skew" => Ok(Self::DirichletSkew),
            other => Err(format!("unknown partition mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Row indices into the input, ascending.
    pub indices: Vec<usize>,
    pub data: CategoricalDataset,
    pub labels: Vec<usize>,
}

fn split_even(rows: &[usize], b: usize) -> Vec<Vec<usize>> {
    let n = rows.len();
    (0..b)
        .map(|i| rows[i * n / b..(i + 1) * n / b].to_vec())
        .collect()
}

/// Splits `data` into `b` batches.
pub fn partition(
    data: &CategoricalDataset,
    labels: &[usize],
    mode: PartitionMode,
    b: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if b == 0 {
        return Err(Error::Contract("need at least one batch".into()));
    }
    if labels.len() != data.n_rows() {
        return Err(Error::Contract("one label per row required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.n_rows();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let by_cluster = |c: usize| -> Vec<usize> { (0..n).filter(|&i| labels[i] == c).collect() };

    let mut groups: Vec<Vec<usize>> = match mode {
        PartitionMode::Random => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            split_even(&rows, b)
        }
        PartitionMode::Exclusive { cluster } => {
            if cluster >= k {
                return Err(Error::Contract(format!("no cluster {cluster}")));
            }
            let home = rng.random_range(0..b);
            let mut rest: Vec<usize> = (0..n).filter(|&i| labels[i] != cluster).collect();
            rest.shuffle(&mut rng);
            let mut groups = split_even(&rest, b);
            groups[home].extend(by_cluster(cluster));
            groups
        }
        PartitionMode::Disjoint => {
            if k < b {
                return Err(Error::Contract(format!("{k} clusters cannot cover {b} disjoint batches")));
            }
            let mut groups = vec![Vec::new(); b];
            for c in 0..k {
                groups[c % b].extend(by_cluster(c));
            }
            groups
        }
        PartitionMode::DisjointPlusShared { shared } => {
            if shared > k || k - shared < b {
                return Err(Error::Contract(format!(
                    "{k} clusters with {shared} shared cannot cover {b} disjoint batches"
                )));
            }
            let mut groups = vec![Vec::new(); b];
            for c in 0..k - shared {
                groups[c % b].extend(by_cluster(c));
            }
            for c in k - shared..k {
                let mut rows = by_cluster(c);
                rows.shuffle(&mut rng);
                for (g, part) in split_even(&rows, b).into_iter().enumerate() {
                    groups[g].extend(part);
                }
            }
            groups
        }
        PartitionMode::DirichletSkew => {
            let mut groups = vec![Vec::new(); b];
            if b == 1 {
                groups[0] = (0..n).collect();
            } else {
                for c in 0..k {
                    let w = flat_dirichlet(&mut rng, b);
                    for i in by_cluster(c) {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut g = b - 1;
                        for (x, &wx) in w.iter().enumerate() {
                            acc += wx;
                            if u < acc {
                                g = x;
                                break;
                            }
                        }
                        groups[g].push(i);
                    }
                }
            }
            groups
        }
    };
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Contract(format!("batch {i} would be empty")));
    }
    Ok(groups
        .iter_mut()
        .map(|g| {
            g.sort_unstable();
            Batch {
                data: data.subset(g),
                labels: g.iter().map(|&i| labels[i]).collect(),
                indices: std::mem::take(g),
            }
        })
        .collect())
}

/// Sidecar describing a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub spec: GenSpec,
    pub data_path: String,
    pub labels_path: String,
    pub relevant: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec::binary(200, 10, 3, 42);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.labels, b.labels);
        for n in 0..200 {
            assert_eq!(a.data.row(n), b.data.row(n));
        }
        let c = generate(&GenSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn noise_variables_share_parameters() {
        let spec = GenSpec {
            n_noise_vars: 4,
            ..GenSpec::binary(50, 10, 3, 1)
        };
        let g = generate(&spec).unwrap();
        assert_eq!(g.relevant.iter().filter(|&&r| r).count(), 6);
        for j in 6..10 {
            assert_eq!(g.params[0][j], g.params[2][j]);
        }
        assert_ne!(g.params[0][0], g.params[1][0]);
    }

    #[test]
    fn sizes_follow_weights() {
        let spec = GenSpec {
            weights: ClusterWeights::Sizes { sizes: vec![5, 10, 15] },
            ..GenSpec::binary(30, 4, 3, 7)
        };
        let g = generate(&spec).unwrap();
        let counts: Vec<usize> = (0..3).map(|k| g.labels.iter().filter(|&&l| l == k).count()).collect();
        assert_eq!(counts, vec![5, 10, 15]);
        let spec = GenSpec {
            weights: ClusterWeights::SizeRange { min: 100.0, max: 300.0 },
            ..GenSpec::binary(1000, 4, 5, 7)
        };
        assert_eq!(generate(&spec).unwrap().labels.len(), 1000);
    }

    #[test]
    fn apportion_sums_exactly() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.2, 0.3, 0.5], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn partition_modes() {
        let g = generate(&GenSpec::binary(400, 5, 10, 3)).unwrap();
        let parts = partition(&g.data, &g.labels, PartitionMode::Random, 1, 0).unwrap();
        assert_eq!(parts[0].indices, (0..400).collect::<Vec<_>>());

        let parts = partition(&g.data, &g.labels, PartitionMode::Disjoint, 5, 0).unwrap();
        for p in &parts {
            let mut ks = p.labels.clone();
            ks.sort_unstable();
            ks.dedup();
            assert_eq!(ks.len(), 2);
        }

        let parts = partition(&g.data, &g.labels, PartitionMode::Exclusive { cluster: 7 }, 10, 0).unwrap();
        let homes: Vec<usize> = (0..10).filter(|&b| parts[b].labels.contains(&7)).collect();
        assert_eq!(homes.len(), 1);

        assert!(partition(&g.data, &g.labels, PartitionMode::Disjoint, 11, 0).is_err());
        assert_eq!(
            "disjoint_plus_shared:2".parse::<PartitionMode>().unwrap(),
            PartitionMode::DisjointPlusShared { shared: 2 }
        );
    }
}
