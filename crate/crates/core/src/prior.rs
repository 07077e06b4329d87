//! The hierarchical sieve prior: Poisson dimension conditioned to k >= 1,
//! scaled Gaussian coordinates with tau_j^2 = tau0 j^{-2q}, and the
//! prior-side tail audits.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Prior mass allowed past the computational support cap `k_max`.
pub const K_MAX_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SievePriorConfig {
    /// Poisson intensity of the dimension prior.
    pub lambda: f64,
    /// Scale level: tau_j^2 = tau0 j^{-2q}.
    pub tau0: f64,
    /// Scale decay, restricted to (1/2, 1] so the theta/tau condition holds
    /// for every beta > 1/2.
    pub q: f64,
    /// Computational support cap on the dimension.
    pub k_max: usize,
    /// Coordinate-sum cap of the truncated prior variant; recorded but not
    /// enforced (enforcement would destroy conjugacy).
    pub truncation_radius: Option<f64>,
}

impl SievePriorConfig {
    pub fn new(
        lambda: f64,
        tau0: f64,
        q: f64,
        k_max: usize,
        truncation_radius: Option<f64>,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(tau0 > 0.0) {
            return Err(Error::invalid(format!("tau0 must be positive, got {tau0}")));
        }
        if !(q > 0.5 && q <= 1.0) {
            return Err(Error::invalid(format!("q must lie in (1/2, 1], got {q}")));
        }
        if let Some(r) = truncation_radius {
            if !(r > 0.0) {
                return Err(Error::invalid("truncation radius must be positive"));
            }
        }
        if k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        Ok(SievePriorConfig { lambda, tau0, q, k_max, truncation_radius })
    }

    /// Like [`new`], additionally certifying that the conditioned-Poisson
    /// mass past `k_max` is below 1e-12, so the truncated support is
    /// indistinguishable from the full prior at double precision. Deliberate
    /// small-support configurations (k_max = 1 single-model runs) use
    /// [`new`] instead.
    ///
    /// [`new`]: Self::new
    pub fn with_certified_support(
        lambda: f64,
        tau0: f64,
        q: f64,
        k_max: usize,
        truncation_radius: Option<f64>,
    ) -> Result<Self> {
        let cfg = Self::new(lambda, tau0, q, k_max, truncation_radius)?;
        let tail = cfg.prior_mass_dimension_tail(k_max);
        if tail >= K_MAX_TAIL_TOL {
            return Err(Error::invalid(format!(
                "prior mass {tail:.3e} past k_max = {k_max} exceeds {K_MAX_TAIL_TOL:.0e}; raise k_max"
            )));
        }
        Ok(cfg)
    }

    /// Log pmf of the dimension prior: Poisson(lambda) conditioned to k >= 1.
    pub fn log_prior_k(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("the sieve prior lives on k >= 1"));
        }
        Ok(self.log_prior_k_unchecked(k))
    }

    fn log_prior_k_unchecked(&self, k: usize) -> f64 {
        let kf = k as f64;
        -self.lambda + kf * self.lambda.ln()
            - ln_gamma(kf + 1.0)
            - (-(-self.lambda).exp()).ln_1p()
    }

    pub fn tau_sq(&self, j: usize) -> f64 {
        debug_assert!(j >= 1);
        self.tau0 * (j as f64).powf(-2.0 * self.q)
    }

    /// tau_j^2 for j = 1..=j_max; strictly decreasing, bounded by tau0.
    pub fn scale_sequence(&self, j_max: usize) -> Vec<f64> {
        (1..=j_max).map(|j| self.tau_sq(j)).collect()
    }

    /// Exact conditioned-Poisson tail mass `pi(k > k_n)`, by upper-tail
    /// summation (dominant term first, stop once increments vanish).
    pub fn prior_mass_dimension_tail(&self, k_n: usize) -> f64 {
        let mut total = 0.0;
        let mut k = k_n + 1;
        loop {
            let term = self.log_prior_k_unchecked(k).exp();
            total += term;
            // past the mode the pmf decays at least geometrically
            if (k as f64) > self.lambda && term < total * 1e-18 {
                break;
            }
            if term == 0.0 {
                break;
            }
            k += 1;
        }
        total
    }

    /// Fits the tightest sandwich constants in
    /// `e^{-a k log k} <= pi(k) <= e^{-b k log k}` over 2 <= k <= k_check.
    pub fn audit_prior_tail(&self, k_check: usize) -> Result<PriorTailAudit> {
        if k_check < 3 {
            return Err(Error::invalid("k_check must be at least 3"));
        }
        let mut a_fit = f64::NEG_INFINITY;
        let mut b_fit = f64::INFINITY;
        for k in 2..=k_check {
            let ratio = -self.log_prior_k_unchecked(k) / (k as f64 * (k as f64).ln());
            a_fit = a_fit.max(ratio);
            b_fit = b_fit.min(ratio);
        }
        let ok = b_fit > 0.0 && a_fit.is_finite();
        Ok(PriorTailAudit { a_fit, b_fit, ok })
    }
}

/// Fitted constants of the prior tail sandwich.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PriorTailAudit {
    pub a_fit: f64,
    pub b_fit: f64,
    pub ok: bool,
}

/// Smallest k_max such that the conditioned-Poisson tail past it is below
/// the given tolerance.
pub fn auto_k_max(lambda: f64, tol: f64) -> usize {
    let probe = SievePriorConfig {
        lambda,
        tau0: 1.0,
        q: 1.0,
        k_max: 1,
        truncation_radius: None,
    };
    let mut k = lambda.ceil() as usize + 1;
    while probe.prior_mass_dimension_tail(k) >= tol {
        k += 1;
    }
    k
}
