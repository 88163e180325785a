//! Scalar reference implementation: nested vectors, plain loops, statrs special
//! functions. Shares no code with the crate beyond the input types.

#![allow(dead_code)]

use fedmerdel_core::model::{Responsibilities, VariationalParams};
use fedmerdel_core::{CategoricalDataset, Layout, Priors};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone)]
pub struct Toy {
    pub rows: Vec<Vec<usize>>,
    pub cards: Vec<usize>,
}

impl Toy {
    pub fn dataset(&self) -> CategoricalDataset {
        CategoricalDataset::from_rows(&self.rows, self.cards.clone()).unwrap()
    }

    pub fn random(n: usize, cards: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| cards.iter().map(|&l| rng.random_range(0..l)).collect())
            .collect();
        Self { rows, cards: cards.to_vec() }
    }
}

/// alpha[k], eps[k][j][l].
#[derive(Debug, Clone)]
pub struct Params {
    pub alpha: Vec<f64>,
    pub eps: Vec<Vec<Vec<f64>>>,
}

impl Params {
    pub fn from_crate(p: &VariationalParams<f64>, layout: &Layout) -> Self {
        Self {
            alpha: p.alpha.clone(),
            eps: (0..p.n_clusters()).map(|k| layout.to_ragged(p.eps_row(k))).collect(),
        }
    }

    pub fn to_crate(&self, layout: &Layout) -> VariationalParams<f64> {
        let eps = self.eps.iter().flat_map(|e| layout.from_ragged(e).unwrap()).collect();
        VariationalParams::new(self.alpha.clone(), eps, layout.width()).unwrap()
    }
}

pub fn random_params(cards: &[usize], k: usize, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Params {
        alpha: (0..k).map(|_| rng.random_range(0.01..30.0)).collect(),
        eps: (0..k)
            .map(|_| cards.iter().map(|&l| (0..l).map(|_| rng.random_range(0.05..20.0)).collect()).collect())
            .collect(),
    }
}

pub fn random_resp(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.001..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn resp_rows(r: &Responsibilities<f64>) -> Vec<Vec<f64>> {
    (0..r.n_rows()).map(|n| r.row(n).to_vec()).collect()
}

pub fn to_resp(rows: &[Vec<f64>]) -> Responsibilities<f64> {
    Responsibilities::from_rows(rows).unwrap()
}

/// E[ln π_k] for the live clusters, and the zombie value.
pub fn e_log_pi(alpha: &[f64], zombies: usize, alpha0: f64) -> (Vec<f64>, f64) {
    let mut total = zombies as f64 * alpha0;
    for a in alpha {
        total += a;
    }
    let psi = digamma(total);
    (alpha.iter().map(|&a| digamma(a) - psi).collect(), digamma(alpha0) - psi)
}

pub fn e_log_phi(eps: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    eps.iter()
        .map(|ek| {
            ek.iter()
                .map(|ekj| {
                    let mut s = 0.0;
                    for v in ekj {
                        s += v;
                    }
                    ekj.iter().map(|&v| digamma(v) - digamma(s)).collect()
                })
                .collect()
        })
        .collect()
}

pub fn e_step(toy: &Toy, p: &Params, alpha0: f64, k_total: usize) -> Vec<Vec<f64>> {
    let k = p.alpha.len();
    let (lpi, _) = e_log_pi(&p.alpha, k_total - k, alpha0);
    let lphi = e_log_phi(&p.eps);
    toy.rows
        .iter()
        .map(|x| {
            let mut logs = vec![0.0; k];
            for kk in 0..k {
                logs[kk] = lpi[kk];
                for (j, &v) in x.iter().enumerate() {
                    logs[kk] += lphi[kk][j][v];
                }
            }
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in &logs {
                z += (l - m).exp();
            }
            logs.iter().map(|l| (l - m).exp() / z).collect()
        })
        .collect()
}

/// M step with optional per-variable weights c_j on the category counts.
pub fn m_step(toy: &Toy, r: &[Vec<f64>], priors: &Priors, c: Option<&[f64]>) -> Params {
    let k = r[0].len();
    let mut alpha = vec![priors.alpha0; k];
    let mut eps: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| toy.cards.iter().map(|&l| vec![0.0; l]).collect())
        .collect();
    for (n, x) in toy.rows.iter().enumerate() {
        for kk in 0..k {
            alpha[kk] += r[n][kk];
            for (j, &v) in x.iter().enumerate() {
                eps[kk][j][v] += r[n][kk];
            }
        }
    }
    for ek in eps.iter_mut() {
        for (j, ekj) in ek.iter_mut().enumerate() {
            let w = c.map_or(1.0, |c| c[j]);
            for v in ekj.iter_mut() {
                *v = priors.epsilon[j] + w * *v;
            }
        }
    }
    Params { alpha, eps }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// The seven ELBO terms, each computed separately.
pub fn elbo(toy: &Toy, r: &[Vec<f64>], p: &Params, priors: &Priors, k_total: usize) -> f64 {
    let k = p.alpha.len();
    let z = k_total - k;
    let a0 = priors.alpha0;
    let (lpi, lpi_zombie) = e_log_pi(&p.alpha, z, a0);
    let lphi = e_log_phi(&p.eps);

    let mut log_lik = 0.0;
    let mut log_p_z = 0.0;
    let mut log_q_z = 0.0;
    for (n, x) in toy.rows.iter().enumerate() {
        for kk in 0..k {
            let mut ll = 0.0;
            for (j, &v) in x.iter().enumerate() {
                ll += lphi[kk][j][v];
            }
            log_lik += r[n][kk] * ll;
            log_p_z += r[n][kk] * lpi[kk];
            log_q_z += xlogx(r[n][kk]);
        }
    }

    let kt = k_total as f64;
    let sum_lpi: f64 = lpi.iter().sum::<f64>() + z as f64 * lpi_zombie;
    let log_p_pi = ln_gamma(kt * a0) - kt * ln_gamma(a0) + (a0 - 1.0) * sum_lpi;

    let alpha_total: f64 = p.alpha.iter().sum::<f64>() + z as f64 * a0;
    let mut log_q_pi = ln_gamma(alpha_total);
    for kk in 0..k {
        log_q_pi += -ln_gamma(p.alpha[kk]) + (p.alpha[kk] - 1.0) * lpi[kk];
    }
    log_q_pi += z as f64 * (-ln_gamma(a0) + (a0 - 1.0) * lpi_zombie);

    // Zombie clusters sit at the prior, so their p(Φ) and q(Φ) terms cancel.
    let mut log_p_phi = 0.0;
    let mut log_q_phi = 0.0;
    for kk in 0..k {
        for (j, &l) in toy.cards.iter().enumerate() {
            let e = priors.epsilon[j];
            let lf = l as f64;
            log_p_phi += ln_gamma(lf * e) - lf * ln_gamma(e);
            let mut s = 0.0;
            for v in &p.eps[kk][j] {
                s += v;
            }
            log_q_phi += ln_gamma(s);
            for (ll, &v) in p.eps[kk][j].iter().enumerate() {
                log_p_phi += (e - 1.0) * lphi[kk][j][ll];
                log_q_phi += -ln_gamma(v) + (v - 1.0) * lphi[kk][j][ll];
            }
        }
    }
    log_lik + log_p_z + log_p_pi + log_p_phi - log_q_z - log_q_pi - log_q_phi
}

/// KL(Dir(a) ‖ Dir(b)).
pub fn dirichlet_kl(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let mut kl = ln_gamma(sa) - ln_gamma(sb);
    for i in 0..a.len() {
        kl += ln_gamma(b[i]) - ln_gamma(a[i]) + (a[i] - b[i]) * (digamma(a[i]) - digamma(sa));
    }
    kl
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}
