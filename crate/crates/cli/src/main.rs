//! Experiment runner: dispatches the laboratory's experiment suites from a
//! JSON config and emits deterministic CSV tables.

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::{AuditBlock, GridBlock, PenaltyBlock, PosteriorBlock, RunConfig};
use sievelab::audit::{audit_a1, audit_lemma2_norm_tail, audit_theta_tau, jn_kn, AuditConfig};
use sievelab::model::{BasisWeights, SequenceObservation, TruthVector};
use sievelab::posterior::{compute_posterior, posterior_mean};
use sievelab::regression::{read_regression_csv, regression_to_sequence};
use sievelab::risk::{
    epsilon_n, fit_rate, global_risk_experiment, j_store_for, penalty_argmax, penalty_exponent,
    pointwise_risk_experiment, Abscissa, TruthKind,
};
use sievelab::rng::mix_seed;
use sievelab::{make_polylog_truth, make_random_sobolev_truth, simulate_sequence, SobolevSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "sievelab", version, about = "Sieve-prior sequence-model laboratory")]
struct Cli {
    /// JSON configuration file (all blocks optional; defaults apply)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (affects wall time only, never results)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact posterior for one dataset: dimension weights and coordinates
    Posterior,
    /// Monte Carlo risk sweep over the (beta, n) grid
    RiskSweep,
    /// Fit log-log rate exponents from a risk-sweep CSV
    RateFit {
        /// risk-sweep output to fit
        #[arg(long)]
        input: PathBuf,
        /// risk column to fit
        #[arg(long, default_value = "freq_risk")]
        column: String,
        #[arg(long, value_enum, default_value = "log-n-over-log-n")]
        abscissa: AbscissaArg,
        /// fail (exit 4) if any |slope - target| exceeds this tolerance
        #[arg(long)]
        check: Option<f64>,
        /// which target exponent --check compares against
        #[arg(long, value_enum, default_value = "global")]
        target: TargetArg,
    },
    /// Pointwise penalty exponent over a beta grid, with its argmax
    PenaltyCurve,
    /// Condition audits: bookkeeping sequences, A1, theta/tau, prior tails
    Audit,
}

#[derive(Clone, Copy, ValueEnum)]
enum AbscissaArg {
    LogN,
    LogNOverLogN,
}

impl From<AbscissaArg> for Abscissa {
    fn from(a: AbscissaArg) -> Abscissa {
        match a {
            AbscissaArg::LogN => Abscissa::LogN,
            AbscissaArg::LogNOverLogN => Abscissa::LogNOverLogN,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    /// -2 beta / (2 beta + 1)
    Global,
    /// -(2 beta - 1) / (2 beta + 1)
    PointwiseLower,
    /// -(2 beta - 1) / (2 beta)
    PointwiseMinimax,
}

fn target_exponents(beta: f64) -> (f64, f64, f64) {
    (
        -2.0 * beta / (2.0 * beta + 1.0),
        -(2.0 * beta - 1.0) / (2.0 * beta + 1.0),
        -(2.0 * beta - 1.0) / (2.0 * beta),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = match RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let seed = cfg.resolved_seed(cli.seed);
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let result = match &cli.command {
        Command::Posterior => cmd_posterior(&cfg, seed, &cli.out),
        Command::RiskSweep => cmd_risk_sweep(&cfg, seed, &cli.out),
        Command::RateFit { input, column, abscissa, check, target } => {
            cmd_rate_fit(&cfg, seed, &cli.out, input, column, (*abscissa).into(), *check, *target)
        }
        Command::PenaltyCurve => cmd_penalty_curve(&cfg, seed, &cli.out),
        Command::Audit => cmd_audit(&cfg, seed, &cli.out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn open_output(
    dir: &Path,
    name: &str,
    command: &str,
    cfg: &RunConfig,
    seed: u64,
) -> Result<BufWriter<File>, String> {
    let path = dir.join(name);
    let file =
        File::create(&path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let (json, hash) = cfg.canonical(seed);
    (|| -> std::io::Result<()> {
        writeln!(w, "# sievelab {command}")?;
        writeln!(w, "# config_hash: {hash}")?;
        writeln!(w, "# seed: {seed}")?;
        writeln!(w, "# config: {json}")?;
        Ok(())
    })()
    .map_err(|e| format!("write error on {}: {e}", path.display()))?;
    Ok(w)
}

fn make_truth(kind: &TruthKind, beta: f64, j_store: usize, seed: u64) -> Result<TruthVector, String> {
    match *kind {
        TruthKind::Polylog => make_polylog_truth(beta, j_store).map_err(|e| e.to_string()),
        TruthKind::Random { l0, fill } => {
            let spec = SobolevSpec::new(beta, l0).map_err(|e| e.to_string())?;
            make_random_sobolev_truth(spec, fill, j_store, seed).map_err(|e| e.to_string())
        }
    }
}

fn cmd_posterior(cfg: &RunConfig, seed: u64, out: &Path) -> Result<ExitCode, String> {
    let block = cfg.posterior.clone().unwrap_or_default();
    let prior = cfg.prior_or_default();
    let j_obs = block.j_obs.unwrap_or(prior.k_max);
    if j_obs < prior.k_max {
        return Err(format!(
            "j_obs = {j_obs} must cover the prior support k_max = {}",
            prior.k_max
        ));
    }
    let obs: SequenceObservation = match &block.import {
        Some(imp) => {
            let file = File::open(&imp.path).map_err(|e| format!("cannot open {}: {e}", imp.path))?;
            let data = read_regression_csv(BufReader::new(file), imp.sigma)
                .map_err(|e| e.to_string())?;
            regression_to_sequence(&data, j_obs).map_err(|e| e.to_string())?
        }
        None => {
            let j_store = j_store_for(block.n).max(j_obs);
            let truth = make_truth(&block.truth, block.beta, j_store, mix_seed(seed, 1))?;
            simulate_sequence(&truth, block.n, j_obs, mix_seed(seed, 2)).map_err(|e| e.to_string())?
        }
    };
    let summary = compute_posterior(&obs, &prior).map_err(|e| e.to_string())?;
    let mean = posterior_mean(&summary, &obs);

    let mut kw = open_output(out, "posterior_k.csv", "posterior", cfg, seed)?;
    writeln!(kw, "k,log_weight,weight").map_err(|e| e.to_string())?;
    for k in 1..=summary.k_eff {
        writeln!(kw, "{k},{},{}", summary.log_w[k - 1], summary.w[k - 1])
            .map_err(|e| e.to_string())?;
    }

    let mut cw = open_output(out, "posterior_coords.csv", "posterior", cfg, seed)?;
    writeln!(cw, "j,u_j,s_j,v_j,x_j,theta_hat_j").map_err(|e| e.to_string())?;
    for j in 1..=summary.k_eff {
        writeln!(
            cw,
            "{j},{},{},{},{},{}",
            summary.u[j - 1],
            summary.s[j - 1],
            summary.v[j - 1],
            obs.x[j - 1],
            mean[j - 1]
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_risk_sweep(cfg: &RunConfig, seed: u64, out: &Path) -> Result<ExitCode, String> {
    let block = cfg.grid.clone().unwrap_or_default();
    let prior = cfg.prior_or_default();
    if block.ns.is_empty() || block.betas.is_empty() {
        return Err("grid betas and ns must be non-empty".into());
    }
    if !block.ns.windows(2).all(|w| w[0] < w[1]) {
        return Err("n grid must be strictly increasing".into());
    }
    let j_store = j_store_for(*block.ns.last().unwrap()).max(prior.k_max);
    let weights = BasisWeights::all_ones(prior.k_max);

    let mut w = open_output(out, "risk_sweep.csv", "risk-sweep", cfg, seed)?;
    writeln!(
        w,
        "beta,n,replicates,freq_risk,freq_se,post_risk,post_se,pointwise_risk,pointwise_se,mean_u_Keff"
    )
    .map_err(|e| e.to_string())?;
    for (bi, &beta) in block.betas.iter().enumerate() {
        let truth = make_truth(&block.truth, beta, j_store, mix_seed(seed, 0x10 + bi as u64))?;
        for (ni, &n) in block.ns.iter().enumerate() {
            let cell = mix_seed(seed, ((bi as u64) << 32) | ni as u64);
            let global = global_risk_experiment(&truth, &prior, n, block.replicates, cell)
                .map_err(|e| e.to_string())?;
            let (pw, pw_se) = if block.pointwise && truth.coeff_tail_sum().is_some() {
                let est = pointwise_risk_experiment(
                    &truth,
                    &prior,
                    n,
                    &weights,
                    block.replicates,
                    mix_seed(cell, 1),
                )
                .map_err(|e| e.to_string())?;
                (est.mean, est.se)
            } else {
                (f64::NAN, f64::NAN)
            };
            writeln!(
                w,
                "{beta},{n},{},{},{},{},{},{pw},{pw_se},{}",
                block.replicates,
                global.freq.mean,
                global.freq.se,
                global.posterior.mean,
                global.posterior.se,
                global.mean_u_keff
            )
            .map_err(|e| e.to_string())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_rate_fit(
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
    input: &Path,
    column: &str,
    abscissa: Abscissa,
    check: Option<f64>,
    target: TargetArg,
) -> Result<ExitCode, String> {
    let raw = std::fs::read_to_string(input)
        .map_err(|e| format!("cannot read {}: {e}", input.display()))?;
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or("input CSV has no header row")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize, String> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| format!("column '{name}' not found; available: {}", cols.join(", ")))
    };
    let beta_idx = find("beta")?;
    let n_idx = find("n")?;
    let col_idx = find(column)?;

    // group rows per beta, preserving first-seen order
    let mut betas: Vec<f64> = Vec::new();
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |idx: usize, what: &str| -> Result<f64, String> {
            fields
                .get(idx)
                .ok_or_else(|| format!("row {}: missing {what}", lineno + 2))?
                .parse::<f64>()
                .map_err(|_| format!("row {}: bad {what} value", lineno + 2))
        };
        let beta = parse(beta_idx, "beta")?;
        let n = parse(n_idx, "n")?;
        let risk = parse(col_idx, column)?;
        match betas.iter().position(|&b| b == beta) {
            Some(g) => groups[g].push((n, risk)),
            None => {
                betas.push(beta);
                groups.push(vec![(n, risk)]);
            }
        }
    }
    if betas.is_empty() {
        return Err("input CSV has no data rows".into());
    }

    let mut w = open_output(out, "rate_fit.csv", "rate-fit", cfg, seed)?;
    writeln!(
        w,
        "beta,slope,slope_se,target_global,target_pointwise_lower,target_pointwise_minimax"
    )
    .map_err(|e| e.to_string())?;
    let mut check_ok = true;
    for (beta, points) in betas.iter().zip(&groups) {
        let (tg, tpl, tpm) = target_exponents(*beta);
        let chosen = match target {
            TargetArg::Global => tg,
            TargetArg::PointwiseLower => tpl,
            TargetArg::PointwiseMinimax => tpm,
        };
        let fit = fit_rate(points, abscissa, chosen).map_err(|e| e.to_string())?;
        writeln!(w, "{beta},{},{},{tg},{tpl},{tpm}", fit.slope, fit.slope_se)
            .map_err(|e| e.to_string())?;
        if let Some(tol) = check {
            if (fit.slope - chosen).abs() > tol {
                eprintln!(
                    "rate check failed: beta = {beta}, slope = {:.5}, target = {chosen:.5}, tol = {tol}",
                    fit.slope
                );
                check_ok = false;
            }
        }
    }
    if !check_ok {
        return Ok(ExitCode::from(EXIT_CHECK));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_penalty_curve(cfg: &RunConfig, seed: u64, out: &Path) -> Result<ExitCode, String> {
    let block = cfg.penalty.clone().unwrap_or_default();
    if !(block.lo > 0.5 && block.hi > block.lo && block.points >= 2) {
        return Err("penalty grid needs 1/2 < lo < hi and at least 2 points".into());
    }
    // log-spaced grid with beta = 1 force-included
    let mut grid: Vec<f64> = (0..block.points)
        .map(|i| {
            let t = i as f64 / (block.points - 1) as f64;
            (block.lo.ln() + t * (block.hi.ln() - block.lo.ln())).exp()
        })
        .collect();
    if block.lo <= 1.0 && 1.0 <= block.hi {
        grid.push(1.0);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let step = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let argmax = penalty_argmax(block.lo, block.hi, step.min(0.01)).map_err(|e| e.to_string())?;

    let mut w = open_output(out, "penalty_curve.csv", "penalty-curve", cfg, seed)?;
    writeln!(w, "beta,penalty").map_err(|e| e.to_string())?;
    for beta in &grid {
        writeln!(w, "{beta},{}", penalty_exponent(*beta).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    }
    writeln!(w, "# summary: argmax").map_err(|e| e.to_string())?;
    writeln!(w, "{argmax},{}", penalty_exponent(argmax).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(cfg: &RunConfig, seed: u64, out: &Path) -> Result<ExitCode, String> {
    let block: AuditBlock = cfg.audit.clone().unwrap_or_default();
    let prior = cfg.prior_or_default();
    let audit = AuditConfig::new(block.j0, block.m0, block.m, block.c_report, block.l_kind)
        .map_err(|e| e.to_string())?;

    let mut w = open_output(out, "audit.csv", "audit", cfg, seed)?;
    writeln!(w, "check_name,inputs,computed,ok").map_err(|e| e.to_string())?;
    let mut all_ok = true;
    let emit = |w: &mut BufWriter<File>,
                    name: &str,
                    inputs: String,
                    computed: String,
                    ok: bool|
     -> Result<(), String> {
        writeln!(w, "{name},{inputs},{computed},{ok}").map_err(|e| e.to_string())
    };

    let j_store = j_store_for(block.n);
    for (bi, &beta) in block.betas.iter().enumerate() {
        let eps = if block.eps_zero {
            0.0
        } else {
            epsilon_n(beta, block.n, block.eps0).map_err(|e| e.to_string())?
        };
        let truth = make_polylog_truth(beta, j_store).map_err(|e| e.to_string())?;

        let (j_n, k_n) = jn_kn(block.n, eps, &audit).map_err(|e| e.to_string())?;
        let jn_ok = j_n >= 1 && j_n <= k_n;
        all_ok &= jn_ok;
        emit(
            &mut w,
            "jn_kn",
            format!("beta={beta};n={};eps_n={eps}", block.n),
            format!("j_n={j_n};k_n={k_n}"),
            jn_ok,
        )?;

        let a1 = audit_a1(&truth, block.n, eps, &audit).map_err(|e| e.to_string())?;
        all_ok &= a1.ok;
        emit(
            &mut w,
            "A1",
            format!("beta={beta};n={};eps_n={eps};m={}", block.n, audit.m),
            format!("K_val={};V_val={};j_n={}", a1.k_val, a1.v_val, a1.j_n),
            a1.ok,
        )?;

        if j_n >= 1 {
            let tt = audit_theta_tau(&truth, &prior, j_n, block.n, block.c_report)
                .map_err(|e| e.to_string())?;
            all_ok &= tt.ok;
            emit(
                &mut w,
                "theta_tau",
                format!("beta={beta};j_n={j_n};n={};C_report={}", block.n, block.c_report),
                format!("C_min={}", tt.c_min),
                tt.ok,
            )?;

            let nt = audit_lemma2_norm_tail(
                &prior,
                k_n.max(1),
                block.q_exp,
                block.n,
                block.draws,
                mix_seed(seed, 0x4e54 + bi as u64),
            )
            .map_err(|e| e.to_string())?;
            let se = (nt.estimate * (1.0 - nt.estimate) / block.draws as f64).sqrt();
            let nt_ok = nt.estimate <= nt.chernoff + 4.0 * se;
            all_ok &= nt_ok;
            emit(
                &mut w,
                "lemma2_norm_tail",
                format!("beta={beta};k_n={};Q={};n={};draws={}", k_n.max(1), block.q_exp, block.n, block.draws),
                format!("estimate={};chernoff={}", nt.estimate, nt.chernoff),
                nt_ok,
            )?;
        }
    }

    for &lambda in &block.lambdas {
        let p = sievelab::SievePriorConfig::new(lambda, prior.tau0, prior.q, prior.k_max, None)
            .map_err(|e| e.to_string())?;
        let tail = p.audit_prior_tail(block.k_check).map_err(|e| e.to_string())?;
        all_ok &= tail.ok;
        emit(
            &mut w,
            "prior_tail",
            format!("lambda={lambda};k_check={}", block.k_check),
            format!("a_fit={};b_fit={}", tail.a_fit, tail.b_fit),
            tail.ok,
        )?;
    }

    if !all_ok {
        eprintln!("audit: at least one check failed (see audit.csv)");
        return Ok(ExitCode::from(EXIT_AUDIT));
    }
    Ok(ExitCode::SUCCESS)
}

// keep the unused-import lint honest about blocks used only via defaults
#[allow(unused)]
fn _type_anchors(_: &GridBlock, _: &PosteriorBlock, _: &PenaltyBlock) {}
