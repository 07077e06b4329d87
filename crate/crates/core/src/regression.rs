//! Fixed-design regression bridge: maps regression data on the regular
//! design t_i = i/n onto the sequence model through discrete Fourier
//! orthogonality, so the conjugate engine applies unchanged.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{fourier_frequency, fourier_psi, SequenceObservation, TruthVector};
use crate::rng::stream_rng;

/// Largest admissible Fourier frequency for design size n; orthogonality
/// of the discrete Gram matrix fails at and above the Nyquist frequency.
pub fn frequency_cap(n: usize) -> usize {
    (n - 1) / 2
}

fn check_cap(j: usize, n: usize) -> Result<()> {
    let m = fourier_frequency(j);
    let cap = frequency_cap(n);
    if m > cap {
        return Err(Error::FrequencyCap { j, m, cap, n });
    }
    Ok(())
}

/// Regression observations on the regular design t_i = i/n, i = 1..=n.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionData {
    pub n: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: f64,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, sigma: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("regression data must be non-empty"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::invalid("sigma must be non-negative"));
        }
        let n = y.len();
        let t = (1..=n).map(|i| i as f64 / n as f64).collect();
        Ok(RegressionData { n, t, y, sigma })
    }
}

/// Worst deviation of the empirical Gram matrix from the identity:
/// max over j, k <= J of |(1/n) sum_i psi_j(t_i) psi_k(t_i) - delta_jk|.
pub fn check_discrete_orthogonality(n: usize, j_max: usize) -> Result<f64> {
    if j_max == 0 || n < 2 {
        return Err(Error::invalid("need J >= 1 and n >= 2"));
    }
    check_cap(j_max, n)?;
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let basis: Vec<Vec<f64>> = (1..=j_max)
        .map(|j| t.iter().map(|&ti| fourier_psi(j, ti)).collect())
        .collect();
    let mut worst = 0.0f64;
    for j in 0..j_max {
        for k in j..j_max {
            let g = basis[j].iter().zip(&basis[k]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    Ok(worst)
}

/// Empirical squared norm (1/n) sum_i f(t_i)^2 of f = sum_j theta_j psi_j;
/// equals ||theta||^2 below the frequency cap.
pub fn empirical_norm_sq(theta: &[f64], n: usize) -> Result<f64> {
    if theta.is_empty() {
        return Ok(0.0);
    }
    check_cap(theta.len(), n)?;
    let mut acc = 0.0;
    for i in 1..=n {
        let ti = i as f64 / n as f64;
        let f: f64 = theta
            .iter()
            .enumerate()
            .map(|(idx, &th)| th * fourier_psi(idx + 1, ti))
            .sum();
        acc += f * f;
    }
    Ok(acc / n as f64)
}

/// y_i = sum_{j <= J_used} theta0_j psi_j(t_i) + sigma xi_i.
pub fn simulate_regression(
    truth: &TruthVector,
    n: usize,
    sigma: f64,
    j_used: usize,
    seed: u64,
) -> Result<RegressionData> {
    if j_used == 0 || j_used > truth.j_store() {
        return Err(Error::invalid("J_used must lie in 1..=J_store"));
    }
    check_cap(j_used, n)?;
    let mut rng = stream_rng(seed, 0);
    let y = (1..=n)
        .map(|i| {
            let ti = i as f64 / n as f64;
            let f: f64 = truth.coeffs()[..j_used]
                .iter()
                .enumerate()
                .map(|(idx, &th)| th * fourier_psi(idx + 1, ti))
                .sum();
            f + sigma * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    RegressionData::new(y, sigma)
}

/// Projects the responses onto the first J basis elements:
/// X_j = (1/n) sum_i y_i psi_j(t_i). The coefficient noise is exactly
/// N(0, sigma^2 / n), so the observation carries n_eff = n / sigma^2.
pub fn regression_to_sequence(data: &RegressionData, j_max: usize) -> Result<SequenceObservation> {
    if j_max == 0 {
        return Err(Error::invalid("need J >= 1"));
    }
    check_cap(j_max, data.n)?;
    if !(data.sigma > 0.0) {
        return Err(Error::invalid("sequence bridging requires sigma > 0"));
    }
    let x = (1..=j_max)
        .map(|j| {
            data.t
                .iter()
                .zip(&data.y)
                .map(|(&ti, &yi)| yi * fourier_psi(j, ti))
                .sum::<f64>()
                / data.n as f64
        })
        .collect();
    Ok(SequenceObservation {
        n_eff: data.n as f64 / (data.sigma * data.sigma),
        x,
        seed: 0,
    })
}

/// CSV export with columns i, t_i, y_i.
pub fn write_regression_csv<W: Write>(data: &RegressionData, mut w: W) -> std::io::Result<()> {
    writeln!(w, "i,t_i,y_i")?;
    for (i, (&t, &y)) in data.t.iter().zip(&data.y).enumerate() {
        writeln!(w, "{},{:.17e},{:.17e}", i + 1, t, y)?;
    }
    Ok(())
}

/// CSV import expecting the layout of [`write_regression_csv`]; `#`-prefixed
/// lines are metadata and skipped. sigma is supplied by the caller as it is
/// not part of the table.
pub fn read_regression_csv<R: BufRead>(r: R, sigma: f64) -> Result<RegressionData> {
    let mut y = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::invalid(format!("csv read error: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('i') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::invalid(format!("line {}: expected 3 columns", lineno + 1)));
        }
        let yi: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: bad y value", lineno + 1)))?;
        y.push(yi);
    }
    RegressionData::new(y, sigma)
}
