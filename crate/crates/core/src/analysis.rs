//! Error theory for the energy-detection receiver: moments of the overall
//! noise, the geometric bias constant `lambda_M`, and the Gaussian and
//! log-normal outage approximations.
//!
//! Conditioned on the powers `p`, the overall noise `D` has mean `M sigma^2`
//! and variance
//! `2M sum_{k<l} p_k p_l + 2M sigma^2 sum_k p_k + M sigma^4`.
//! For the geometric mean, `ln Xi = D ln(a) / (alpha K M)` is treated as
//! Gaussian with mean `sigma^2 ln(a) / (alpha K)` and standard deviation
//! `sigma_{D|x} ln(a) / (alpha K M)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FadingMode, FunctionKind, NetworkConfig, NomographicFunction, ReadingDistribution};
use crate::sequences_channel::{noisy_energy, superimpose_signal};
use crate::stats::{self, pairwise_sum, Z95};
use crate::streams::{self, Family, Role};

/// Default number of reading vectors for the outer expectation over `x`.
pub const DEFAULT_ANALYTIC_SAMPLES: usize = 100_000;

#[inline]
fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `sum_{k<l} p_k p_l`, via `((sum p)^2 - sum p^2) / 2`.
pub fn pair_product_sum(powers: &[f64]) -> f64 {
    let s: f64 = powers.iter().sum();
    let s2: f64 = powers.iter().map(|p| p * p).sum();
    (0.5 * (s * s - s2)).max(0.0)
}

/// Conditional variance of the overall noise given the transmit powers.
pub fn cond_var_delta(powers: &[f64], seq_len: usize, noise_var: f64) -> f64 {
    let m = seq_len as f64;
    let total: f64 = powers.iter().sum();
    2.0 * m * pair_product_sum(powers) + 2.0 * m * noise_var * total + m * noise_var * noise_var
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalNoiseStats {
    pub mean: f64,
    pub var_cond: f64,
    pub var_marginal: Option<f64>,
}

pub fn noise_stats(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    powers: &[f64],
    dist: Option<&ReadingDistribution>,
) -> Result<ConditionalNoiseStats> {
    Ok(ConditionalNoiseStats {
        mean: cfg.seq_len as f64 * cfg.noise_var,
        var_cond: cond_var_delta(powers, cfg.seq_len, cfg.noise_var),
        var_marginal: dist.map(|d| var_delta(cfg, func, d)).transpose()?,
    })
}

/// Marginal variance of the overall noise for independent readings, using
/// the closed-form mean power of every node.
pub fn var_delta(cfg: &NetworkConfig, func: &NomographicFunction, dist: &ReadingDistribution) -> Result<f64> {
    let mu = dist.mean_powers(cfg, func)?;
    // Independence makes E{p_k p_l} = E{p_k} E{p_l} for k != l.
    Ok(cond_var_delta(&mu, cfg.seq_len, cfg.noise_var))
}

/// The same quantity estimated by averaging the conditional variance over
/// sampled reading vectors; returns the estimate and its standard error.
pub fn var_delta_sampled(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    dist: &ReadingDistribution,
    n_samples: usize,
) -> Result<(f64, f64)> {
    let values = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let powers = sample_powers(cfg, func, dist, s)?;
            Ok(cond_var_delta(&powers, cfg.seq_len, cfg.noise_var))
        })
        .collect::<Result<Vec<f64>>>()?;
    let se = if n_samples > 1 { stats::std_error(&values) } else { 0.0 };
    Ok((stats::mean(&values), se))
}

fn sample_powers(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    dist: &ReadingDistribution,
    sample: u64,
) -> Result<Vec<f64>> {
    let mut rng = streams::stream(cfg.seed, Family::Analysis, sample, Role::Analytic, 0);
    let x = dist.sample(&mut rng, cfg);
    x.iter().enumerate().map(|(k, &v)| func.power(k, v)).collect()
}

fn geometric_base(func: &NomographicFunction) -> Result<f64> {
    func.geometric_base()
        .ok_or_else(|| Error::input(format!("needs a geometric mean, got {:?}", func.kind())))
}

/// `sigma^2 ln(a) / (alpha K)`, the limit of `ln lambda_M` and the mean of
/// `ln Xi`.
pub fn log_noise_rate(cfg: &NetworkConfig, func: &NomographicFunction) -> Result<f64> {
    let a = geometric_base(func)?;
    Ok(cfg.noise_var * a.ln() / (func.alpha() * func.nodes() as f64))
}

/// `lambda_M = (alpha K M / (alpha K M - sigma^2 ln a))^M`, evaluated in log
/// space. Finite only while `sigma^2 ln a < alpha K M`.
pub fn lambda_m(cfg: &NetworkConfig, func: &NomographicFunction) -> Result<f64> {
    let a = geometric_base(func)?;
    let lhs = cfg.noise_var * a.ln();
    let rhs = func.alpha() * func.nodes() as f64 * cfg.seq_len as f64;
    if lhs >= rhs {
        return Err(Error::LambdaExistence { lhs, rhs });
    }
    let m = cfg.seq_len as f64;
    Ok((-m * (-lhs / rhs).ln_1p()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoApproxParams {
    pub mu_xi: f64,
    pub sigma_xi_cond: f64,
    pub lambda_m: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Log-normal parameters for readings `x`.
pub fn geo_params(cfg: &NetworkConfig, func: &NomographicFunction, x: &[f64]) -> Result<GeoApproxParams> {
    let powers: Vec<f64> = x.iter().enumerate().map(|(k, &v)| func.power(k, v)).collect::<Result<_>>()?;
    geo_params_from(cfg, func, &powers, func.evaluate(x)?)
}

fn geo_params_from(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    powers: &[f64],
    f_x: f64,
) -> Result<GeoApproxParams> {
    let a = geometric_base(func)?;
    let lambda = lambda_m(cfg, func)?;
    let scale = a.ln() / (func.alpha() * func.nodes() as f64 * cfg.seq_len as f64);
    let beta = f_x / func.error_range();
    Ok(GeoApproxParams {
        mu_xi: log_noise_rate(cfg, func)?,
        sigma_xi_cond: cond_var_delta(powers, cfg.seq_len, cfg.noise_var).sqrt() * scale,
        lambda_m: lambda,
        beta,
        gamma: lambda / beta,
    })
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {eps}")));
    }
    Ok(())
}

fn require_arithmetic(func: &NomographicFunction) -> Result<()> {
    match func.kind() {
        FunctionKind::ArithmeticMean => Ok(()),
        other => Err(Error::input(format!("needs an arithmetic mean, got {other:?}"))),
    }
}

/// `erfc(alpha' eps / sqrt(2 var))` with `alpha' = M K P_max`.
pub fn outage_arithmetic_cond(cfg: &NetworkConfig, var_cond: f64, eps: f64) -> f64 {
    if var_cond == 0.0 {
        return 0.0;
    }
    let alpha_prime = cfg.seq_len as f64 * cfg.nodes as f64 * cfg.p_max;
    erfc(alpha_prime * eps / (2.0 * var_cond).sqrt())
}

/// Log-normal outage for one reading vector:
/// `P(Xi <= rho-) + P(Xi >= rho+)` with `rho(+-) = gamma (beta +- eps)`.
pub fn outage_geometric_cond(p: &GeoApproxParams, eps: f64) -> f64 {
    let upper = (p.gamma * (p.beta + eps)).ln();
    let lower = if eps < p.beta {
        Some((p.gamma * (p.beta - eps)).ln())
    } else {
        None
    };
    if p.sigma_xi_cond == 0.0 {
        let mu = p.mu_xi;
        return match lower {
            Some(lo) if mu > lo && mu < upper => 0.0,
            None if mu < upper => 0.0,
            _ => 1.0,
        };
    }
    let s = std::f64::consts::SQRT_2 * p.sigma_xi_cond;
    let b = (upper - p.mu_xi) / s;
    let tail_hi = 0.5 * erfc(b);
    match lower {
        Some(lo) => tail_hi + 0.5 * erfc(-(lo - p.mu_xi) / s),
        None => tail_hi,
    }
}

/// An approximation averaged over reading vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticCurve {
    pub epsilon: Vec<f64>,
    pub value: Vec<f64>,
    /// 95% half-width of the Monte Carlo average over readings.
    pub half_width: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

enum CondParams {
    Arith(f64),
    Geo(GeoApproxParams),
}

fn cond_params(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    dist: &ReadingDistribution,
    n_samples: usize,
) -> Result<Vec<CondParams>> {
    let geometric = matches!(func.kind(), FunctionKind::GeometricMean { .. });
    if geometric {
        lambda_m(cfg, func)?;
    } else {
        require_arithmetic(func)?;
    }
    (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = streams::stream(cfg.seed, Family::Analysis, s, Role::Analytic, 0);
            let x = dist.sample(&mut rng, cfg);
            let powers: Vec<f64> =
                x.iter().enumerate().map(|(k, &v)| func.power(k, v)).collect::<Result<_>>()?;
            Ok(if geometric {
                CondParams::Geo(geo_params_from(cfg, func, &powers, func.evaluate(&x)?)?)
            } else {
                CondParams::Arith(cond_var_delta(&powers, cfg.seq_len, cfg.noise_var))
            })
        })
        .collect()
}

/// Outage approximation of the calibrated arithmetic or geometric estimator
/// over an `eps` grid, averaged over `n_samples` reading vectors.
pub fn outage_curve(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    dist: &ReadingDistribution,
    epsilon: &[f64],
    n_samples: usize,
) -> Result<AnalyticCurve> {
    if n_samples == 0 {
        return Err(Error::input("need at least one reading sample"));
    }
    epsilon.iter().try_for_each(|&e| check_epsilon(e))?;
    dist.validate(cfg)?;
    let params = cond_params(cfg, func, dist, n_samples)?;
    let mut value = Vec::with_capacity(epsilon.len());
    let mut half_width = Vec::with_capacity(epsilon.len());
    for &eps in epsilon {
        let per: Vec<f64> = params
            .iter()
            .map(|p| match p {
                CondParams::Arith(v) => outage_arithmetic_cond(cfg, *v, eps),
                CondParams::Geo(g) => outage_geometric_cond(g, eps),
            })
            .collect();
        value.push(pairwise_sum(&per) / n_samples as f64);
        half_width.push(if n_samples > 1 { Z95 * stats::std_error(&per) } else { 0.0 });
    }
    Ok(AnalyticCurve {
        epsilon: epsilon.to_vec(),
        value,
        half_width,
        n_samples,
        seed: cfg.seed,
    })
}

/// Single-point arithmetic outage approximation with its 95% interval.
pub fn outage_arithmetic(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    eps: f64,
    dist: &ReadingDistribution,
    n_samples: usize,
) -> Result<stats::Interval> {
    require_arithmetic(func)?;
    single_point(outage_curve(cfg, func, dist, &[eps], n_samples)?)
}

/// Single-point geometric outage approximation with its 95% interval.
pub fn outage_geometric(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    eps: f64,
    dist: &ReadingDistribution,
    n_samples: usize,
) -> Result<stats::Interval> {
    geometric_base(func)?;
    single_point(outage_curve(cfg, func, dist, &[eps], n_samples)?)
}

fn single_point(c: AnalyticCurve) -> Result<stats::Interval> {
    let (v, h) = (c.value[0], c.half_width[0]);
    Ok(stats::Interval {
        estimate: v,
        lo: (v - h).max(0.0),
        hi: (v + h).min(1.0),
    })
}

/// Chebyshev bound `Var{D} / (alpha' eps)^2` on the arithmetic outage,
/// clipped to 1. Loose for practical `M`; diagnostic only.
pub fn markov_bound(cfg: &NetworkConfig, var_delta: f64, eps: f64) -> f64 {
    let alpha_prime = cfg.seq_len as f64 * cfg.nodes as f64 * cfg.p_max;
    (var_delta / (alpha_prime * eps).powi(2)).min(1.0)
}

/// Kolmogorov-Smirnov distance between the standardized overall noise at
/// fixed readings and the standard normal law. Frames are drawn on the ideal
/// channel, where no node is ever excluded.
pub fn gaussian_approx_check(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    x: &[f64],
    n_frames: usize,
) -> Result<f64> {
    if n_frames < 2 {
        return Err(Error::input("need at least two frames"));
    }
    let cfg = cfg.clone().with_fading(FadingMode::Ideal);
    let powers: Vec<f64> = x.iter().enumerate().map(|(k, &v)| func.power(k, v)).collect::<Result<_>>()?;
    let sd = cond_var_delta(&powers, cfg.seq_len, cfg.noise_var).sqrt();
    if sd == 0.0 {
        return Err(Error::input("overall noise is deterministic at these readings"));
    }
    let m = cfg.seq_len as f64;
    let signal_energy = m * powers.iter().sum::<f64>();
    let mean = m * cfg.noise_var;
    let mut z = (0..n_frames as u64)
        .into_par_iter()
        .map_init(
            || (vec![Complex64::new(0.0, 0.0); cfg.seq_len], Vec::new()),
            |(signal, scratch), t| {
                superimpose_signal(&cfg, &powers, Family::Validation, t, signal)?;
                let e = noisy_energy(&cfg, signal, cfg.noise_var, Family::Validation, t, scratch);
                Ok((e - signal_energy - mean) / sd)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(stats::ks_distance(&mut z, stats::normal_cdf))
}
