//! Exact conjugate posterior in the sequence model under the sieve prior.
//!
//! For each dimension k the marginal likelihood factorizes coordinatewise,
//! and the factors past k cancel against the null model, so
//! `log pi(k | X) = log pi(k) + sum_{j<=k} Delta_j - logsumexp`, where
//! `Delta_j` is the per-coordinate marginal log-likelihood ratio of
//! `N(0, tau_j^2 + 1/n)` against `N(0, 1/n)`. Everything else (cumulative
//! weights u_j, shrinkage s_j, posterior means, closed-form expected loss,
//! exact sampling) follows from that single pass.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{BasisWeights, SequenceObservation, TruthVector};
use crate::prior::SievePriorConfig;
use crate::rng::stream_rng;

/// Dimension-tail tolerance of the effective-support rule.
const KEFF_TAIL_TOL: f64 = 1e-13;
/// A coordinate is evidence-dead once Delta_j drops below this...
const DEAD_DELTA: f64 = -30.0;
/// ...for this many consecutive coordinates.
const DEAD_STREAK: usize = 16;

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// log pi(k | X) for k = 1..=K_eff.
    pub log_w: Vec<f64>,
    /// Normalized weights exp(log_w).
    pub w: Vec<f64>,
    /// u_j = pi(k >= j | X); u_1 = 1, non-increasing.
    pub u: Vec<f64>,
    /// Shrinkage factors s_j = tau_j^2 / (tau_j^2 + 1/n).
    pub s: Vec<f64>,
    /// Posterior coordinate variance given k >= j: v_j = s_j / n.
    pub v: Vec<f64>,
    pub k_eff: usize,
    pub n_eff: f64,
}

/// One exact posterior draw; `theta` is zero past the drawn dimension `k`.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub k: usize,
    pub theta: Vec<f64>,
}

/// s_j = tau_j^2 / (tau_j^2 + 1/n) for j = 1..=j_max.
pub fn shrinkage_factors(n_eff: f64, prior: &SievePriorConfig, j_max: usize) -> Vec<f64> {
    (1..=j_max)
        .map(|j| {
            let t2 = prior.tau_sq(j);
            t2 / (t2 + 1.0 / n_eff)
        })
        .collect()
}

/// Per-coordinate marginal log-likelihood ratio, in the variance-ratio form
/// that avoids cancelling two large log-densities.
fn delta_j(x: f64, tau_sq: f64, n: f64) -> f64 {
    let nt = n * tau_sq;
    0.5 * (-(nt + 1.0).ln() + x * x * n * nt / (nt + 1.0))
}

/// The prior-determined effective support. Scans for the smallest
/// K >= 4 lambda past which both the dimension prior and the data have gone
/// numerically silent; falls back to k_max.
fn effective_support(prior: &SievePriorConfig, deltas: &[f64]) -> usize {
    let k_floor = (4.0 * prior.lambda).ceil().max(1.0) as usize;
    let mut streak = 0usize;
    for (idx, &d) in deltas.iter().enumerate() {
        let k = idx + 1;
        streak = if d < DEAD_DELTA { streak + 1 } else { 0 };
        if k >= k_floor
            && streak >= DEAD_STREAK
            && prior.prior_mass_dimension_tail(k) < KEFF_TAIL_TOL
        {
            return k;
        }
    }
    prior.k_max
}

pub fn compute_posterior(
    obs: &SequenceObservation,
    prior: &SievePriorConfig,
) -> Result<PosteriorSummary> {
    let n = obs.n_eff;
    if !(n > 0.0) {
        return Err(Error::invalid("effective sample size must be positive"));
    }
    let avail = obs.j_obs().min(prior.k_max);
    let deltas: Vec<f64> = (1..=avail)
        .map(|j| delta_j(obs.x[j - 1], prior.tau_sq(j), n))
        .collect();
    let k_eff = effective_support(prior, &deltas);
    if k_eff > obs.j_obs() {
        return Err(Error::Sizing { needed: k_eff, have: obs.j_obs() });
    }

    let mut log_w = Vec::with_capacity(k_eff);
    let mut cum = 0.0;
    for k in 1..=k_eff {
        cum += deltas[k - 1];
        log_w.push(prior.log_prior_k(k)? + cum);
    }
    let lse = log_sum_exp(&log_w);
    for lw in &mut log_w {
        *lw -= lse;
    }
    let w: Vec<f64> = log_w.iter().map(|lw| lw.exp()).collect();

    let mut u = vec![0.0; k_eff];
    let mut acc = 0.0;
    for j in (0..k_eff).rev() {
        acc += w[j];
        u[j] = acc;
    }
    u[0] = 1.0; // exact by the cumulative-sum identity

    let s = shrinkage_factors(n, prior, k_eff);
    let v = s.iter().map(|sj| sj / n).collect();
    Ok(PosteriorSummary { log_w, w, u, s, v, k_eff, n_eff: n })
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior mean: theta_hat_j = u_j s_j X_j.
pub fn posterior_mean(summary: &PosteriorSummary, obs: &SequenceObservation) -> Vec<f64> {
    (0..summary.k_eff)
        .map(|j| summary.u[j] * summary.s[j] * obs.x[j])
        .collect()
}

/// Closed-form `Pi[ ||theta - theta0||^2 | X ]`: given k, coordinate j <= k
/// is N(s_j X_j, v_j) and j > k is a point mass at 0; {k >= j} has posterior
/// probability u_j. The unobserved tail enters as a scalar.
pub fn expected_posterior_l2_loss(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    truth: &TruthVector,
) -> Result<f64> {
    if truth.j_store() < summary.k_eff {
        return Err(Error::invalid(format!(
            "truth covers {} coordinates but K_eff = {}",
            truth.j_store(),
            summary.k_eff
        )));
    }
    let mut loss = truth.tail_sq_from(summary.k_eff);
    for j in 0..summary.k_eff {
        let t0 = truth.coeffs()[j];
        let bias = summary.s[j] * obs.x[j] - t0;
        loss += summary.u[j] * (bias * bias + summary.v[j]) + (1.0 - summary.u[j]) * t0 * t0;
    }
    Ok(loss)
}

fn draw_dimension(cum_w: &[f64], rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    cum_w.partition_point(|&c| c < r) + 1
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &wi in w {
        acc += wi;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    cum
}

/// Exact draws from the conjugate mixture.
pub fn sample_posterior(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    count: usize,
    seed: u64,
) -> Vec<PosteriorSample> {
    let cum = cumulative(&summary.w);
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let k = draw_dimension(&cum, &mut rng);
            let theta = (0..summary.k_eff)
                .map(|j| {
                    if j < k {
                        summary.s[j] * obs.x[j]
                            + summary.v[j].sqrt() * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect();
            PosteriorSample { k, theta }
        })
        .collect()
}

/// Squared distance to the truth of one posterior draw of dimension `k`,
/// sampling only the live coordinates; everything past `k` is the
/// deterministic truth tail.
fn sample_sq_distance(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    truth: &TruthVector,
    k: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut d2 = truth.tail_sq_from(k);
    for j in 0..k {
        let draw = summary.s[j] * obs.x[j]
            + summary.v[j].sqrt() * rng.sample::<f64, _>(StandardNormal);
        let diff = draw - truth.coeffs()[j];
        d2 += diff * diff;
    }
    d2
}

/// Monte Carlo estimate of `Pi( ||theta - theta0||^2 >= radius_sq | X )`.
pub fn posterior_tail_mass(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    truth: &TruthVector,
    radius_sq: f64,
    count: usize,
    seed: u64,
) -> (f64, f64) {
    let cum = cumulative(&summary.w);
    let mut rng = stream_rng(seed, 0);
    let mut hits = 0usize;
    for _ in 0..count {
        let k = draw_dimension(&cum, &mut rng);
        if sample_sq_distance(summary, obs, truth, k, &mut rng) >= radius_sq {
            hits += 1;
        }
    }
    let p = hits as f64 / count as f64;
    (p, (p * (1.0 - p) / count as f64).sqrt())
}

/// Monte Carlo masses of the shells
/// `{ M (j+1) eps^2 > ||theta - theta0||^2 >= M j eps^2 }`, j = 1..=j_max,
/// with the log n / L(n) factor taken as 1 (L = log).
pub fn shell_masses(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    truth: &TruthVector,
    m_mult: f64,
    eps_sq: f64,
    j_max: usize,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let cum = cumulative(&summary.w);
    let mut rng = stream_rng(seed, 0);
    let mut hits = vec![0usize; j_max];
    for _ in 0..count {
        let k = draw_dimension(&cum, &mut rng);
        let d2 = sample_sq_distance(summary, obs, truth, k, &mut rng);
        let shell = (d2 / (m_mult * eps_sq)).floor();
        if shell >= 1.0 && shell <= j_max as f64 {
            let idx = (shell as usize).min(j_max) - 1;
            hits[idx] += 1;
        }
    }
    hits.into_iter().map(|h| h as f64 / count as f64).collect()
}

/// Plug-in pointwise value `f_hat(t) = sum_j a_j u_j s_j X_j`.
pub fn pointwise_estimate(
    summary: &PosteriorSummary,
    obs: &SequenceObservation,
    weights: &BasisWeights,
) -> Result<f64> {
    if weights.a.len() < summary.k_eff {
        return Err(Error::invalid(format!(
            "weights cover {} coordinates but K_eff = {}",
            weights.a.len(),
            summary.k_eff
        )));
    }
    Ok((0..summary.k_eff)
        .map(|j| weights.a[j] * summary.u[j] * summary.s[j] * obs.x[j])
        .sum())
}
