//! Partition agreement, selection quality, cluster profiles and summary quantiles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};
use crate::federation::GlobalReport;

fn choose2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting.
///
/// Degenerate cases where the expected and maximal index coincide (both
/// partitions trivial) return 1 when the partitions agree and 0 otherwise.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON * max.max(1.0) {
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// F1 score of the "relevant" class.
pub fn selection_f1(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract("selection masks differ in length".into()));
    }
    let tp = predicted.iter().zip(truth).filter(|(&p, &t)| p && t).count() as f64;
    let fp = predicted.iter().zip(truth).filter(|(&p, &t)| p && !t).count() as f64;
    let fneg = predicted.iter().zip(truth).filter(|(&p, &t)| !p && t).count() as f64;
    if tp == 0.0 {
        return Ok(if fp == 0.0 && fneg == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fneg))
}

/// Category prevalences among the members of each cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub var_names: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// Cluster labels, largest cluster first.
    pub clusters: Vec<usize>,
    pub sizes: Vec<usize>,
    /// `prevalence[c][j][l]`: share of cluster `clusters[c]` with category l on variable j.
    pub prevalence: Vec<Vec<Vec<f64>>>,
}

/// Builds the profile table; with `top_m` only the m variables with the highest
/// overall prevalence of their last category are kept.
pub fn profile(data: &CategoricalDataset, labels: &[usize], top_m: Option<usize>) -> Result<ProfileTable> {
    if labels.len() != data.n_rows() {
        return Err(Error::Contract("one label per row required".into()));
    }
    let layout = data.layout();
    let mut vars: Vec<usize> = (0..data.n_vars()).collect();
    if let Some(m) = top_m {
        let counts = data.category_counts();
        let last = |j: usize| counts[layout.range(j).end - 1];
        vars.sort_by(|&x, &y| last(y).cmp(&last(x)).then(x.cmp(&y)));
        vars.truncate(m);
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let w = layout.width();
    let mut counts = vec![0usize; ids.len() * w];
    let mut sizes = vec![0usize; ids.len()];
    for (n, l) in labels.iter().enumerate() {
        let c = index[l];
        sizes[c] += 1;
        for &code in data.row_codes(n) {
            counts[c * w + code as usize] += 1;
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&x, &y| sizes[y].cmp(&sizes[x]).then(ids[x].cmp(&ids[y])));
    let names = data.var_names();
    Ok(ProfileTable {
        var_names: vars.iter().map(|&j| names[j].clone()).collect(),
        cardinalities: vars.iter().map(|&j| layout.cardinality(j)).collect(),
        clusters: order.iter().map(|&c| ids[c]).collect(),
        sizes: order.iter().map(|&c| sizes[c]).collect(),
        prevalence: order
            .iter()
            .map(|&c| {
                vars.iter()
                    .map(|&j| {
                        layout
                            .range(j)
                            .map(|code| counts[c * w + code] as f64 / sizes[c] as f64)
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    })
}

impl ProfileTable {
    /// One row per cluster: label, size, then one column per (variable, category ≥ 1).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cluster,size");
        for (name, &l) in self.var_names.iter().zip(&self.cardinalities) {
            if l == 2 {
                out.push_str(&format!(",{name}"));
            } else {
                for c in 1..l {
                    out.push_str(&format!(",{name}={c}"));
                }
            }
        }
        out.push('\n');
        for (i, &c) in self.clusters.iter().enumerate() {
            out.push_str(&format!("{c},{}", self.sizes[i]));
            for v in &self.prevalence[i] {
                for p in &v[1..] {
                    out.push_str(&format!(",{p:.4}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Shade-character heatmap of the prevalence of the last category.
    pub fn to_ascii(&self) -> String {
        const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];
        let mut out = String::new();
        for (i, &c) in self.clusters.iter().enumerate() {
            out.push_str(&format!("{c:>4} {:>7} |", self.sizes[i]));
            for v in &self.prevalence[i] {
                let p = v[v.len() - 1];
                let idx = ((p * 4.0).round() as usize).min(4);
                out.push(SHADES[idx]);
            }
            out.push_str("|\n");
        }
        out
    }
}

/// Profile of a global model from its posterior mean category probabilities;
/// sizes are the rounded expected cluster sizes. Needs no observations.
pub fn expected_profile(report: &GlobalReport, var_names: Option<Vec<String>>) -> Result<ProfileTable> {
    let p = report.cardinalities.len();
    let names = match var_names {
        Some(n) if n.len() == p => n,
        Some(n) => return Err(Error::Contract(format!("{} names for {p} variables", n.len()))),
        None => (0..p).map(|j| format!("V{}", j + 1)).collect(),
    };
    let mut order: Vec<usize> = (0..report.n_clusters).collect();
    order.sort_by(|&x, &y| report.sizes[y].total_cmp(&report.sizes[x]).then(x.cmp(&y)));
    Ok(ProfileTable {
        var_names: names,
        cardinalities: report.cardinalities.clone(),
        clusters: order.clone(),
        sizes: order.iter().map(|&k| report.sizes[k].round().max(0.0) as usize).collect(),
        prevalence: order
            .iter()
            .map(|&k| {
                report.eps_star[k]
                    .iter()
                    .map(|cats| {
                        let total: f64 = cats.iter().sum();
                        cats.iter().map(|v| v / total).collect()
                    })
                    .collect()
            })
            .collect(),
    })
}

/// Type-7 (linear interpolation) sample quantile. `None` for empty input.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Median with lower and upper quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            median: quantile(values, 0.5)?,
            lower: quantile(values, 0.25)?,
            upper: quantile(values, 0.75)?,
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

impl std::fmt::Display for Quartiles {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} [{:.3}, {:.3}]", self.median, self.lower, self.upper)
    }
}
