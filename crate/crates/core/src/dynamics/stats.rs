//! Loss statistics: infidelity bounds from consecutive successful links.

use crate::dynamics::integrate::DynamicsError;
use crate::real::Real;

/// Upper bounds on the per-link loss probability after `n` consecutive
/// successes with no observed failure.
#[derive(Clone, Copy, Debug)]
pub struct LossBound<T> {
    /// Plain 1/N point estimate.
    pub point: T,
    /// One-sided exact binomial (Clopper-Pearson) upper bound at the
    /// requested confidence: 1 - (1 - c)^(1/N).
    pub exact_upper: T,
    pub confidence: T,
}

pub fn loss_upper_bound<T: Real>(
    n_successes: u64,
    confidence: T,
) -> Result<LossBound<T>, DynamicsError> {
    if n_successes == 0 {
        return Err(DynamicsError::NoCounts);
    }
    assert!(confidence > T::zero() && confidence < T::one());
    let n = T::of(n_successes as f64);
    let point = T::one() / n;
    // (1-c)^(1/N) via exp(ln(1-c)/N) keeps precision for huge N.
    let exact_upper = T::one() - ((T::one() - confidence).ln() / n).exp();
    Ok(LossBound { point, exact_upper, confidence })
}

/// Total path length of `links` transports of `link_um` each, in km.
pub fn cumulative_distance_km<T: Real>(links: u64, link_um: T) -> T {
    T::of(links as f64) * link_um * T::of(1e-9)
}
