//! Monte Carlo risk experiments over (beta, n) grids, contraction
//! experiments, rate-exponent fitting, and the pointwise penalty curve.
//!
//! Replicates are independent work items on a rayon pool; per-replicate
//! seeds derive from (experiment seed, replicate index) and aggregation
//! runs in replicate order, so results are bit-identical for any thread
//! count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    make_polylog_truth, make_random_sobolev_truth, simulate_sequence, BasisKind, BasisWeights,
    SobolevSpec, TruthVector,
};
use crate::posterior::{
    compute_posterior, expected_posterior_l2_loss, pointwise_estimate, posterior_mean,
    posterior_tail_mass,
};
use crate::prior::SievePriorConfig;
use crate::rng::mix_seed;

/// Monte Carlo mean of a squared-loss quantity with its replicate
/// standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub se: f64,
    pub replicates: usize,
}

impl RiskEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        RiskEstimate { mean, se: (var / n as f64).sqrt(), replicates: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TruthKind {
    Polylog,
    Random { l0: f64, fill: f64 },
}

/// Grid of Monte Carlo experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub betas: Vec<f64>,
    pub ns: Vec<u64>,
    pub replicates: usize,
    pub prior: SievePriorConfig,
    pub truth_kind: TruthKind,
    /// Contraction radius multiplier M.
    pub m_mult: f64,
    /// Rate constant eps0 in eps_n = eps0 (log n / n)^{beta/(2 beta + 1)}.
    pub eps0: f64,
    /// Posterior draws per replicate in contraction experiments.
    pub tail_samples: usize,
    pub seed: u64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.ns.is_empty() {
            return Err(Error::invalid("beta and n grids must be non-empty"));
        }
        if self.betas.iter().any(|&b| !(b > 0.5)) {
            return Err(Error::invalid("every beta must exceed 1/2"));
        }
        if !self.ns.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("n grid must be strictly increasing"));
        }
        if self.replicates < 30 {
            return Err(Error::invalid("at least 30 replicates are required"));
        }
        if !(self.m_mult > 0.0 && self.eps0 > 0.0) {
            return Err(Error::invalid("M and eps0 must be positive"));
        }
        Ok(())
    }

    /// Stored-coefficient budget for the largest n on the grid.
    pub fn j_store(&self) -> usize {
        j_store_for(*self.ns.last().unwrap_or(&1))
    }

    pub fn make_truth(&self, beta: f64, beta_index: usize) -> Result<TruthVector> {
        let j_store = self.j_store();
        match self.truth_kind {
            TruthKind::Polylog => make_polylog_truth(beta, j_store),
            TruthKind::Random { l0, fill } => make_random_sobolev_truth(
                SobolevSpec::new(beta, l0)?,
                fill,
                j_store,
                mix_seed(self.seed, 0x7472_7574_6800 + beta_index as u64),
            ),
        }
    }
}

/// J_store policy: max(10^4, 8 ceil(sqrt(n_max))).
pub fn j_store_for(n_max: u64) -> usize {
    10_000usize.max(8 * (n_max as f64).sqrt().ceil() as usize)
}

/// eps_n(beta) = eps0 (log n / n)^{beta/(2 beta + 1)}.
pub fn epsilon_n(beta: f64, n: u64, eps0: f64) -> Result<f64> {
    if !(beta > 0.5) {
        return Err(Error::BadSmoothness(beta));
    }
    if n < 2 {
        return Err(Error::invalid("epsilon_n requires n >= 2"));
    }
    let nf = n as f64;
    Ok(eps0 * (nf.ln() / nf).powf(beta / (2.0 * beta + 1.0)))
}

/// Pointwise penalty exponent (2 beta - 1) / (2 beta (2 beta + 1)).
pub fn penalty_exponent(beta: f64) -> Result<f64> {
    if !(beta > 0.5) {
        return Err(Error::BadSmoothness(beta));
    }
    Ok((2.0 * beta - 1.0) / (2.0 * beta * (2.0 * beta + 1.0)))
}

/// Grid argmax of the penalty exponent refined by golden-section search.
pub fn penalty_argmax(grid_lo: f64, grid_hi: f64, step: f64) -> Result<f64> {
    if !(grid_lo > 0.5 && grid_hi > grid_lo && step > 0.0) {
        return Err(Error::invalid("need 1/2 < grid_lo < grid_hi and step > 0"));
    }
    let pen = |b: f64| penalty_exponent(b).unwrap();
    let mut best = grid_lo;
    let mut best_val = pen(grid_lo);
    let mut b = grid_lo;
    while b < grid_hi {
        let v = pen(b);
        if v > best_val {
            best_val = v;
            best = b;
        }
        b += step;
    }
    if pen(grid_hi) > best_val {
        best = grid_hi;
    }
    // golden-section refinement on the bracketing interval
    let mut lo = (best - step).max(grid_lo);
    let mut hi = (best + step).min(grid_hi);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-8 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if pen(m1) < pen(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Abscissa {
    LogN,
    LogNOverLogN,
}

impl Abscissa {
    pub fn transform(self, n: f64) -> f64 {
        match self {
            Abscissa::LogN => n.ln(),
            Abscissa::LogNOverLogN => (n / n.ln()).ln(),
        }
    }
}

/// OLS exponent fit of log(risk) against the chosen abscissa.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub target: f64,
    pub abscissa: Abscissa,
}

pub fn fit_rate(points: &[(f64, f64)], abscissa: Abscissa, target: f64) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::invalid("rate fits need at least 4 grid points"));
    }
    if points.iter().any(|&(_, r)| !(r > 0.0)) {
        return Err(Error::invalid("all risks must be positive for a log-log fit"));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| abscissa.transform(n)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, r)| r.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / m;
    let y_bar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let slope_se = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, intercept, slope_se, target, abscissa })
}

/// Global L2 risk of one (truth, prior, n) cell: the frequentist risk of the
/// posterior mean alongside the expected posterior loss, plus the mean
/// residual dimension weight u_{K_eff}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlobalRiskOutcome {
    pub freq: RiskEstimate,
    pub posterior: RiskEstimate,
    pub mean_u_keff: f64,
}

pub fn global_risk_experiment(
    truth: &TruthVector,
    prior: &SievePriorConfig,
    n: u64,
    replicates: usize,
    seed: u64,
) -> Result<GlobalRiskOutcome> {
    let j_obs = prior.k_max.min(truth.j_store());
    let rows: Vec<Result<(f64, f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let obs = simulate_sequence(truth, n, j_obs, mix_seed(seed, rep as u64))?;
            let summary = compute_posterior(&obs, prior)?;
            let mean = posterior_mean(&summary, &obs);
            let mut freq_loss = truth.tail_sq_from(summary.k_eff);
            for j in 0..summary.k_eff {
                let d = mean[j] - truth.coeffs()[j];
                freq_loss += d * d;
            }
            let post_loss = expected_posterior_l2_loss(&summary, &obs, truth)?;
            Ok((freq_loss, post_loss, summary.u[summary.k_eff - 1]))
        })
        .collect();
    let mut freq = Vec::with_capacity(replicates);
    let mut post = Vec::with_capacity(replicates);
    let mut u_last = 0.0;
    for row in rows {
        let (f, p, u) = row?;
        freq.push(f);
        post.push(p);
        u_last += u;
    }
    Ok(GlobalRiskOutcome {
        freq: RiskEstimate::from_samples(&freq),
        posterior: RiskEstimate::from_samples(&post),
        mean_u_keff: u_last / replicates as f64,
    })
}

/// Pointwise (plug-in functional) risk of one cell:
/// MC mean of (sum_j a_j theta_hat_j - f0)^2.
pub fn pointwise_risk_experiment(
    truth: &TruthVector,
    prior: &SievePriorConfig,
    n: u64,
    weights: &BasisWeights,
    replicates: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if weights.a.len() < prior.k_max {
        return Err(Error::invalid("weights must cover the prior support k_max"));
    }
    let f0 = pointwise_truth_value(truth, weights)?;
    let j_obs = prior.k_max.min(truth.j_store());
    let rows: Vec<Result<f64>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let obs = simulate_sequence(truth, n, j_obs, mix_seed(seed, rep as u64))?;
            let summary = compute_posterior(&obs, prior)?;
            let f_hat = pointwise_estimate(&summary, &obs, weights)?;
            let e = f_hat - f0;
            Ok(e * e)
        })
        .collect();
    let mut losses = Vec::with_capacity(replicates);
    for row in rows {
        losses.push(row?);
    }
    Ok(RiskEstimate::from_samples(&losses))
}

/// f0 under the given weights, tail included where it is known to converge.
pub fn pointwise_truth_value(truth: &TruthVector, weights: &BasisWeights) -> Result<f64> {
    match weights.kind {
        BasisKind::AllOnes => {
            let tail = truth.coeff_tail_sum().ok_or_else(|| {
                Error::invalid(
                    "all-ones weights need a truth with a certified convergent coefficient sum",
                )
            })?;
            Ok(truth.coeffs().iter().sum::<f64>() + tail)
        }
        BasisKind::FourierAt { .. } => Ok(weights
            .a
            .iter()
            .zip(truth.coeffs())
            .map(|(a, t)| a * t)
            .sum()),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionRow {
    pub beta: f64,
    pub n: u64,
    pub mean_mass: f64,
    pub se: f64,
    pub radius_sq: f64,
}

/// Replicate-averaged posterior mass outside the ball of squared radius
/// M eps_n(beta)^2 (with log n / L(n) = 1), per (beta, n) cell.
pub fn contraction_experiment(grid: &ExperimentGrid) -> Result<Vec<ContractionRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (bi, &beta) in grid.betas.iter().enumerate() {
        let truth = grid.make_truth(beta, bi)?;
        let j_obs = grid.prior.k_max.min(truth.j_store());
        for (ni, &n) in grid.ns.iter().enumerate() {
            let radius_sq = grid.m_mult * epsilon_n(beta, n, grid.eps0)?.powi(2);
            let cell_seed = mix_seed(grid.seed, (bi as u64) << 32 | ni as u64);
            let masses: Vec<Result<f64>> = (0..grid.replicates)
                .into_par_iter()
                .map(|rep| {
                    let obs = simulate_sequence(&truth, n, j_obs, mix_seed(cell_seed, rep as u64))?;
                    let summary = compute_posterior(&obs, &grid.prior)?;
                    let (mass, _) = posterior_tail_mass(
                        &summary,
                        &obs,
                        &truth,
                        radius_sq,
                        grid.tail_samples,
                        mix_seed(cell_seed, 0x1_0000_0000 + rep as u64),
                    );
                    Ok(mass)
                })
                .collect();
            let mut vals = Vec::with_capacity(grid.replicates);
            for m in masses {
                vals.push(m?);
            }
            let est = RiskEstimate::from_samples(&vals);
            rows.push(ContractionRow { beta, n, mean_mass: est.mean, se: est.se, radius_sq });
        }
    }
    Ok(rows)
}
