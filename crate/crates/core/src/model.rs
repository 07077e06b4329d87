//! True parameters in Sobolev balls, the Gaussian sequence model, and
//! basis weight vectors for pointwise functionals.
//!
//! Truths are stored as a finite coefficient vector of length `J_store`;
//! the energy past `J_store` is carried as a scalar `tail_energy` with a
//! quadrature error bound, so squared distances stay exact up to a
//! documented remainder without storing huge vectors.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Sobolev ball `{theta : sum theta_j^2 j^{2 beta} < L0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevSpec {
    pub beta: f64,
    pub l0: f64,
}

impl SobolevSpec {
    pub fn new(beta: f64, l0: f64) -> Result<Self> {
        if !(beta > 0.5) {
            return Err(Error::BadSmoothness(beta));
        }
        if !(l0 > 0.0) {
            return Err(Error::invalid(format!("ball radius L0 must be positive, got {l0}")));
        }
        Ok(SobolevSpec { beta, l0 })
    }
}

/// A true coefficient sequence with tail-energy bookkeeping.
#[derive(Debug, Clone)]
pub struct TruthVector {
    coeffs: Vec<f64>,
    spec: SobolevSpec,
    tail_energy: f64,
    tail_energy_err: f64,
    sobolev_energy: f64,
    /// `sum_{j > J_store} theta_j`, when the series provably converges
    /// (needed by all-ones pointwise functionals).
    coeff_tail_sum: Option<f64>,
    /// `sq_suffix[j] = sum of coeffs[i]^2 over stored i > j`, length J_store + 1.
    sq_suffix: Vec<f64>,
}

impl TruthVector {
    fn new(
        coeffs: Vec<f64>,
        spec: SobolevSpec,
        tail_energy: f64,
        tail_energy_err: f64,
        sobolev_energy: f64,
        coeff_tail_sum: Option<f64>,
    ) -> Self {
        let mut sq_suffix = vec![0.0; coeffs.len() + 1];
        for j in (0..coeffs.len()).rev() {
            sq_suffix[j] = sq_suffix[j + 1] + coeffs[j] * coeffs[j];
        }
        TruthVector { coeffs, spec, tail_energy, tail_energy_err, sobolev_energy, coeff_tail_sum, sq_suffix }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn j_store(&self) -> usize {
        self.coeffs.len()
    }

    pub fn spec(&self) -> SobolevSpec {
        self.spec
    }

    pub fn tail_energy(&self) -> f64 {
        self.tail_energy
    }

    pub fn tail_energy_err(&self) -> f64 {
        self.tail_energy_err
    }

    pub fn sobolev_energy(&self) -> f64 {
        self.sobolev_energy
    }

    pub fn coeff_tail_sum(&self) -> Option<f64> {
        self.coeff_tail_sum
    }

    /// `sum_{j > j0} theta_j^2` including the unstored tail; `j0` may be
    /// anything (clamped to J_store, beyond which only `tail_energy` is left).
    pub fn tail_sq_from(&self, j0: usize) -> f64 {
        let j0 = j0.min(self.coeffs.len());
        self.sq_suffix[j0] + self.tail_energy
    }

    /// Tail energy past J together with the Sobolev bound `L0 J^{-2 beta}`.
    pub fn truncation_tail(&self, j: usize) -> Result<(f64, f64)> {
        if j == 0 || j > self.coeffs.len() {
            return Err(Error::TruncationRange { j, j_store: self.coeffs.len() });
        }
        let tail = self.tail_sq_from(j);
        let bound = self.spec.l0 * (j as f64).powf(-2.0 * self.spec.beta);
        Ok((tail, bound))
    }
}

/// `f(x) = x^{-p} log(x+1)^{-r}`.
fn poly_log_term(x: f64, p: f64, r: i32) -> f64 {
    x.powf(-p) / (x + 1.0).ln().powi(r)
}

fn poly_log_term_deriv(x: f64, p: f64, r: i32) -> f64 {
    let l = (x + 1.0).ln();
    -p * x.powf(-p - 1.0) / l.powi(r) - r as f64 * x.powf(-p) / ((x + 1.0) * l.powi(r + 1))
}

/// `int_a^inf x^{-p} log(x+1)^{-r} dx` for p > 1, via the substitution
/// x = a e^y and composite Simpson on the decaying integrand.
fn poly_log_integral(a: f64, p: f64, r: i32) -> (f64, f64) {
    let rate = p - 1.0;
    debug_assert!(rate > 0.0);
    let y_max = 60.0 / rate;
    let g = |y: f64| {
        let x = a * y.exp();
        (rate * -y).exp() / (x + 1.0).ln().powi(r)
    };
    let simpson = |n: usize| {
        let h = y_max / n as f64;
        let mut acc = g(0.0) + g(y_max);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0 * a.powf(1.0 - p)
    };
    let coarse = simpson(4096);
    let fine = simpson(8192);
    (fine, (fine - coarse).abs())
}

/// `sum_{i > start} i^{-p} log(i+1)^{-r}` with an error estimate:
/// explicit partial sum, then an Euler-Maclaurin remainder.
fn poly_log_series_tail(start: usize, p: f64, r: i32) -> (f64, f64) {
    const EXPLICIT_TERMS: usize = 2_000_000;
    let m = start + EXPLICIT_TERMS;
    let mut partial = 0.0;
    // summed smallest-first for accuracy
    for i in (start + 1..=m).rev() {
        partial += poly_log_term(i as f64, p, r);
    }
    let a = (m + 1) as f64;
    let (integral, quad_err) = poly_log_integral(a, p, r);
    let value = partial + integral + poly_log_term(a, p, r) / 2.0 - poly_log_term_deriv(a, p, r) / 12.0;
    let em_err = poly_log_term(a, p, r) * p * (p + 1.0) / (a * a) / 720.0;
    (value, quad_err + em_err)
}

/// The canonical suboptimality witness `theta_{0i} = i^{-beta-1/2} log(i+1)^{-1}`.
///
/// Its Sobolev energy series `sum j^{-1} log(j+1)^{-2}` does not depend on
/// beta; L0 is a certified upper bound of that series, so ball membership
/// and the tail bound `L0 J^{-2 beta}` hold for every J.
pub fn make_polylog_truth(beta: f64, j_store: usize) -> Result<TruthVector> {
    if !(beta > 0.5) {
        return Err(Error::BadSmoothness(beta));
    }
    if j_store == 0 {
        return Err(Error::invalid("J_store must be at least 1"));
    }
    let coeffs: Vec<f64> = (1..=j_store)
        .map(|i| (i as f64).powf(-beta - 0.5) / ((i + 1) as f64).ln())
        .collect();
    let sobolev_energy: f64 = (1..=j_store).rev().map(|j| poly_log_term(j as f64, 1.0, 2)).sum();

    // L0: stored Sobolev energy + explicit continuation + the closed-form
    // integral bound  sum_{i>M} 1/(i log^2(i+1)) <= 1/log(M).
    const L0_TERMS: usize = 2_000_000;
    let m = j_store + L0_TERMS;
    let sob_cont: f64 = (j_store + 1..=m).rev().map(|i| poly_log_term(i as f64, 1.0, 2)).sum();
    let l0 = sobolev_energy + sob_cont + 1.0 / (m as f64).ln();
    let spec = SobolevSpec::new(beta, l0)?;

    let (tail_energy, tail_energy_err) = poly_log_series_tail(j_store, 2.0 * beta + 1.0, 2);
    let (coeff_tail, _) = poly_log_series_tail(j_store, beta + 0.5, 1);
    Ok(TruthVector::new(coeffs, spec, tail_energy, tail_energy_err, sobolev_energy, Some(coeff_tail)))
}

/// Random-sign member of the Sobolev ball with `sobolev_energy = fill * L0`.
pub fn make_random_sobolev_truth(
    spec: SobolevSpec,
    fill: f64,
    j_store: usize,
    seed: u64,
) -> Result<TruthVector> {
    if !(fill > 0.0 && fill <= 1.0) {
        return Err(Error::invalid(format!("fill must lie in (0, 1], got {fill}")));
    }
    if j_store == 0 {
        return Err(Error::invalid("J_store must be at least 1"));
    }
    let mut rng = stream_rng(seed, 0);
    let beta = spec.beta;
    let mags: Vec<f64> = (1..=j_store)
        .map(|j| (j as f64).powf(-beta - 0.5) / ((j + 1) as f64).ln())
        .collect();
    let raw_sob: f64 = (1..=j_store)
        .rev()
        .map(|j| mags[j - 1] * mags[j - 1] * (j as f64).powf(2.0 * beta))
        .sum();
    let scale = (fill * spec.l0 / raw_sob).sqrt();
    let coeffs: Vec<f64> = mags
        .iter()
        .map(|&m| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * scale * m
        })
        .collect();
    let (raw_tail, raw_tail_err) = poly_log_series_tail(j_store, 2.0 * beta + 1.0, 2);
    Ok(TruthVector::new(
        coeffs,
        spec,
        scale * scale * raw_tail,
        scale * scale * raw_tail_err,
        fill * spec.l0,
        None,
    ))
}

/// One dataset from the sequence model `X_j = theta_{0j} + xi_j / sqrt(n)`.
///
/// `n_eff` is carried as a real so the regression bridge can express a
/// generalized noise variance; noise is exactly `N(0, 1/n_eff)` per coordinate.
#[derive(Debug, Clone)]
pub struct SequenceObservation {
    pub n_eff: f64,
    pub x: Vec<f64>,
    pub seed: u64,
}

impl SequenceObservation {
    pub fn j_obs(&self) -> usize {
        self.x.len()
    }
}

pub fn simulate_sequence(
    truth: &TruthVector,
    n: u64,
    j_obs: usize,
    seed: u64,
) -> Result<SequenceObservation> {
    if n == 0 {
        return Err(Error::invalid("sample size n must be positive"));
    }
    if j_obs == 0 || j_obs > truth.j_store() {
        return Err(Error::invalid(format!(
            "J_obs must lie in 1..=J_store = {}, got {j_obs}",
            truth.j_store()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let sd = 1.0 / (n as f64).sqrt();
    let x = truth.coeffs()[..j_obs]
        .iter()
        .map(|&t| t + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SequenceObservation { n_eff: n as f64, x, seed })
}

/// Observation built from caller-provided unit-variance noise; used by the
/// regression bridge to couple noise realizations across the two models.
pub fn sequence_from_noise(truth: &TruthVector, n_eff: f64, noise: &[f64]) -> Result<SequenceObservation> {
    if noise.len() > truth.j_store() {
        return Err(Error::invalid("noise vector longer than stored truth"));
    }
    let sd = 1.0 / n_eff.sqrt();
    let x = truth
        .coeffs()
        .iter()
        .zip(noise)
        .map(|(&t, &z)| t + sd * z)
        .collect();
    Ok(SequenceObservation { n_eff, x, seed: 0 })
}

/// Fourier basis element: psi_1 = 1, psi_{2m} = sqrt(2) cos(2 pi m t),
/// psi_{2m+1} = sqrt(2) sin(2 pi m t).
pub fn fourier_psi(j: usize, t: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return 1.0;
    }
    let m = (j / 2) as f64;
    let arg = 2.0 * std::f64::consts::PI * m * t;
    if j % 2 == 0 {
        std::f64::consts::SQRT_2 * arg.cos()
    } else {
        std::f64::consts::SQRT_2 * arg.sin()
    }
}

/// Fourier frequency of basis index `j` (0 for the constant).
pub fn fourier_frequency(j: usize) -> usize {
    j / 2
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    AllOnes,
    FourierAt { t: f64 },
}

/// Weight vector `a_j = psi_j(t)` for pointwise functionals.
#[derive(Debug, Clone)]
pub struct BasisWeights {
    pub a: Vec<f64>,
    pub kind: BasisKind,
}

impl BasisWeights {
    pub fn all_ones(j: usize) -> Self {
        BasisWeights { a: vec![1.0; j], kind: BasisKind::AllOnes }
    }

    pub fn fourier(t: f64, j: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("t must lie in [0, 1], got {t}")));
        }
        let a = (1..=j).map(|idx| fourier_psi(idx, t)).collect();
        Ok(BasisWeights { a, kind: BasisKind::FourierAt { t } })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polylog_first_coordinates() {
        let truth = make_polylog_truth(1.0, 100).unwrap();
        assert!((truth.coeffs()[0] - 1.0 / 2.0_f64.ln()).abs() < 1e-15);
        assert!((truth.coeffs()[1] - 2.0_f64.powf(-1.5) / 3.0_f64.ln()).abs() < 1e-15);
        #[allow(clippy::approx_constant)] // 1/ln 2 happens to equal log2(e)
        let first = 1.442695;
        assert!((truth.coeffs()[0] - first).abs() < 1e-6);
        assert!((truth.coeffs()[1] - 0.321818).abs() < 1e-6);
    }

    #[test]
    fn rejects_rough_smoothness() {
        assert!(make_polylog_truth(0.5, 10).is_err());
        assert!(make_polylog_truth(0.3, 10).is_err());
    }

    #[test]
    fn sobolev_membership_and_tail_bounds() {
        for beta in [0.75, 1.0, 2.0] {
            let truth = make_polylog_truth(beta, 2000).unwrap();
            assert!(truth.sobolev_energy() < truth.spec().l0);
            for j in [1usize, 5, 50, 500, 2000] {
                let (tail, bound) = truth.truncation_tail(j).unwrap();
                assert!(tail <= bound, "beta={beta} j={j}: tail {tail} > bound {bound}");
            }
        }
    }

    #[test]
    fn truncation_tail_edges() {
        let truth = make_polylog_truth(1.0, 500).unwrap();
        let (tail, _) = truth.truncation_tail(500).unwrap();
        assert_eq!(tail, truth.tail_energy());
        assert!(truth.truncation_tail(501).is_err());
        assert!(truth.truncation_tail(0).is_err());
    }

    #[test]
    fn random_truth_fill_is_exact_and_deterministic() {
        let spec = SobolevSpec::new(2.0, 1.0).unwrap();
        let a = make_random_sobolev_truth(spec, 1.0, 300, 7).unwrap();
        assert_eq!(a.sobolev_energy() / spec.l0, 1.0);
        let b = make_random_sobolev_truth(spec, 1.0, 300, 7).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        // independent recomputation of the rescale factor
        let half = make_random_sobolev_truth(spec, 0.5, 300, 7).unwrap();
        let sob: f64 = half
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, &c)| c * c * ((i + 1) as f64).powf(2.0 * spec.beta))
            .sum();
        assert!((sob - 0.5 * spec.l0).abs() < 1e-12);
        for j in [1usize, 10, 150, 300] {
            let (tail, bound) = half.truncation_tail(j).unwrap();
            assert!(tail <= bound);
        }
    }

    #[test]
    fn simulation_is_deterministic_with_correct_scale() {
        let truth = make_polylog_truth(1.0, 64).unwrap();
        let a = simulate_sequence(&truth, 100, 32, 3).unwrap();
        let b = simulate_sequence(&truth, 100, 32, 3).unwrap();
        assert_eq!(a.x, b.x);
        // n = 1e8: residuals have sd about 1e-4
        let big = simulate_sequence(&truth, 100_000_000, 64, 5).unwrap();
        for (xj, tj) in big.x.iter().zip(truth.coeffs()) {
            assert!((xj - tj).abs() < 1e-3);
        }
    }

    #[test]
    fn noise_moments_match_model() {
        // mean of sqrt(n) (X_1 - theta_1) over replicates ~ 0 within 4 SE,
        // variance within a 4 SE band of 1
        let truth = make_polylog_truth(1.0, 4).unwrap();
        let n = 100u64;
        let reps: u64 = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for r in 0..reps {
            let obs = simulate_sequence(&truth, n, 1, 1000 + r).unwrap();
            let z = (obs.x[0] - truth.coeffs()[0]) * (n as f64).sqrt();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let se_mean = (var / reps as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean} se {se_mean}");
        let se_var = (2.0 / reps as f64).sqrt(); // Var(z^2) = 2 for standard normal
        assert!((var - 1.0).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn basis_weight_values() {
        let ones = BasisWeights::all_ones(3);
        assert_eq!(ones.a, vec![1.0, 1.0, 1.0]);
        let f0 = BasisWeights::fourier(0.0, 3).unwrap();
        assert!((f0.a[0] - 1.0).abs() < 1e-15);
        assert!((f0.a[1] - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!(f0.a[2].abs() < 1e-15);
        let fq = BasisWeights::fourier(0.25, 2).unwrap();
        assert!((fq.a[0] - 1.0).abs() < 1e-15);
        assert!(fq.a[1].abs() < 1e-12); // sqrt(2) cos(pi/2)
        assert!(BasisWeights::fourier(1.5, 2).is_err());
    }

    #[test]
    fn polylog_tail_energy_matches_brute_force() {
        // oracle: explicit sum of i^{-3} log(i+1)^{-2} for i = 1001..=10^7
        // plus the integral remainder bound
        let truth = make_polylog_truth(1.0, 1000).unwrap();
        let mut oracle = 0.0;
        for i in (1001..=10_000_000u64).rev() {
            let x = i as f64;
            oracle += x.powi(-3) / (x + 1.0).ln().powi(2);
        }
        // remainder < int_1e7^inf x^{-3} dx / log^2(1e7)
        let rem = 0.5e-14 / 10_000_000f64.ln().powi(2);
        assert!(
            (truth.tail_energy() - oracle).abs() <= rem + 1e-9 * oracle,
            "tail {} vs oracle {oracle}",
            truth.tail_energy()
        );
        assert!(truth.tail_energy_err() < 1e-12 * truth.tail_energy().max(1e-300));
    }
}
