//! Huang-style k-modes, used only to produce a rough hard initialisation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};
use crate::model::Responsibilities;
use crate::scalar::Scalar;

pub const MAX_SWEEPS: usize = 10;

/// One-hot responsibilities from k-modes. Empty clusters are allowed.
pub fn kmodes_init<F: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    k_init: usize,
    rng: &mut R,
) -> Result<Responsibilities<F>> {
    let labels = kmodes_labels(data, k_init, rng)?;
    Responsibilities::one_hot(&labels, k_init)
}

pub fn kmodes_labels<R: Rng + ?Sized>(
    data: &CategoricalDataset,
    k_init: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = data.n_rows();
    if k_init == 0 || k_init > n {
        return Err(Error::Contract(format!(
            "k_init = {k_init} must be in 1..={n} (number of observations)"
        )));
    }
    let p = data.n_vars();
    let w = data.layout().width();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut chosen = Vec::with_capacity(k_init);
    let mut seen: HashSet<&[u32]> = HashSet::new();
    for &row in &order {
        if chosen.len() == k_init {
            break;
        }
        if seen.insert(data.row_codes(row)) {
            chosen.push(row);
        }
    }
    // Fewer distinct rows than clusters: pad with duplicates, which stay empty.
    if chosen.len() < k_init {
        let taken: HashSet<usize> = chosen.iter().copied().collect();
        let extra: Vec<usize> = order.iter().copied().filter(|r| !taken.contains(r)).collect();
        chosen.extend(extra.into_iter().take(k_init - chosen.len()));
    }
    chosen.sort_unstable();

    let mut modes: Vec<u32> = Vec::with_capacity(k_init * p);
    for &row in &chosen {
        modes.extend_from_slice(data.row_codes(row));
    }

    let mut labels = vec![0usize; n];
    let mut dists = vec![0usize; n];
    assign(data, &modes, k_init, &mut labels, &mut dists);

    let mut counts = vec![0u32; k_init * w];
    for _ in 0..MAX_SWEEPS {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut sizes = vec![0usize; k_init];
        for row in 0..n {
            let k = labels[row];
            sizes[k] += 1;
            for &c in data.row_codes(row) {
                counts[k * w + c as usize] += 1;
            }
        }
        for k in 0..k_init {
            if sizes[k] == 0 {
                continue;
            }
            for j in 0..p {
                let range = data.layout().range(j);
                let block = &counts[k * w + range.start..k * w + range.end];
                let mut best = 0;
                for (l, &c) in block.iter().enumerate() {
                    if c > block[best] {
                        best = l;
                    }
                }
                modes[k * p + j] = (range.start + best) as u32;
            }
        }
        reseed_empty(data, &mut modes, &sizes, &dists, p);

        let before = labels.clone();
        assign(data, &modes, k_init, &mut labels, &mut dists);
        if labels == before {
            break;
        }
    }
    Ok(labels)
}

fn assign(
    data: &CategoricalDataset,
    modes: &[u32],
    k_init: usize,
    labels: &mut [usize],
    dists: &mut [usize],
) {
    let p = data.n_vars();
    for row in 0..data.n_rows() {
        let codes = data.row_codes(row);
        let mut best = 0;
        let mut best_d = usize::MAX;
        for k in 0..k_init {
            let mode = &modes[k * p..(k + 1) * p];
            let d = codes.iter().zip(mode).filter(|(a, b)| a != b).count();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        labels[row] = best;
        dists[row] = best_d;
    }
}

/// Moves each empty cluster's mode onto the point farthest from its own mode.
fn reseed_empty(
    data: &CategoricalDataset,
    modes: &mut [u32],
    sizes: &[usize],
    dists: &[usize],
    p: usize,
) {
    let empties: Vec<usize> = (0..sizes.len()).filter(|&k| sizes[k] == 0).collect();
    if empties.is_empty() {
        return;
    }
    let mut far: Vec<usize> = (0..data.n_rows()).filter(|&r| dists[r] > 0).collect();
    far.sort_by(|&a, &b| dists[b].cmp(&dists[a]).then(a.cmp(&b)));
    for (k, row) in empties.into_iter().zip(far) {
        modes[k * p..(k + 1) * p].copy_from_slice(data.row_codes(row));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_equals_n_gives_identity() {
        let rows: Vec<Vec<usize>> = (0..6).map(|i| vec![i & 1, (i >> 1) & 1, (i >> 2) & 1]).collect();
        let data = CategoricalDataset::from_rows(&rows, vec![2, 2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = kmodes_labels(&data, 6, &mut rng).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_cluster_and_bounds() {
        let rows = vec![vec![0, 1], vec![1, 0], vec![1, 1]];
        let data = CategoricalDataset::from_rows(&rows, vec![2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(kmodes_labels(&data, 1, &mut rng).unwrap(), vec![0, 0, 0]);
        assert!(matches!(
            kmodes_labels(&data, 4, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn identical_rows_leave_clusters_empty() {
        let rows = vec![vec![1, 0, 1]; 8];
        let data = CategoricalDataset::from_rows(&rows, vec![2, 2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r: Responsibilities<f64> = kmodes_init(&data, 5, &mut rng).unwrap();
        let sums = r.column_sums();
        assert_eq!(sums.iter().filter(|&&s| s > 0.0).count(), 1);
        assert_eq!(sums.iter().sum::<f64>(), 8.0);
    }
}
