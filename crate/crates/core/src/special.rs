//! Special functions: digamma, log-gamma and the multivariate log-Beta.
//!
//! Both series shift the argument upward with the recurrence until it is at
//! least [`SHIFT_THRESHOLD`], then apply the asymptotic expansion. Valid for
//! strictly positive arguments only.

use crate::scalar::Scalar;

const SHIFT_THRESHOLD: f64 = 10.0;

/// Digamma function ψ(x) for x > 0. Returns NaN for non-positive or NaN input.
pub fn digamma<F: Scalar>(x: F) -> F {
    if !(x > F::zero()) || !x.is_finite() {
        return if x == F::infinity() { x } else { F::nan() };
    }
    let threshold = F::lit(SHIFT_THRESHOLD);
    let mut x = x;
    let mut acc = F::zero();
    while x < threshold {
        acc -= x.recip();
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // Bernoulli-number tail through x^-14.
    let tail = inv2
        * (F::lit(1.0 / 12.0)
            - inv2
                * (F::lit(1.0 / 120.0)
                    - inv2
                        * (F::lit(1.0 / 252.0)
                            - inv2
                                * (F::lit(1.0 / 240.0)
                                    - inv2
                                        * (F::lit(1.0 / 132.0)
                                            - inv2
                                                * (F::lit(691.0 / 32760.0)
                                                    - inv2 * F::lit(1.0 / 12.0)))))));
    acc + x.ln() - F::lit(0.5) * inv - tail
}

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma<F: Scalar>(x: F) -> F {
    if !(x > F::zero()) || !x.is_finite() {
        return if x == F::infinity() { x } else { F::nan() };
    }
    let threshold = F::lit(SHIFT_THRESHOLD);
    let mut x = x;
    let mut prod = F::one();
    while x < threshold {
        prod *= x;
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        * (F::lit(1.0 / 12.0)
            - inv2
                * (F::lit(1.0 / 360.0)
                    - inv2
                        * (F::lit(1.0 / 1260.0)
                            - inv2
                                * (F::lit(1.0 / 1680.0)
                                    - inv2
                                        * (F::lit(1.0 / 1188.0)
                                            - inv2
                                                * (F::lit(691.0 / 360360.0)
                                                    - inv2 * F::lit(1.0 / 156.0)))))));
    let half_ln_two_pi = F::lit(0.918_938_533_204_672_8);
    (x - F::lit(0.5)) * x.ln() - x + half_ln_two_pi + series - prod.ln()
}

/// ln B(a) = Σ ln Γ(a_i) − ln Γ(Σ a_i), the log normaliser of a Dirichlet.
pub fn ln_multivariate_beta<F: Scalar>(a: &[F]) -> F {
    let mut total = F::zero();
    let mut acc = F::zero();
    for &v in a {
        total += v;
        acc += ln_gamma(v);
    }
    acc - ln_gamma(total)
}

/// ln B(v, …, v) with `dim` equal entries.
pub fn ln_symmetric_beta<F: Scalar>(v: F, dim: usize) -> F {
    let d = F::from_usize_lossy(dim);
    d * ln_gamma(v) - ln_gamma(d * v)
}
