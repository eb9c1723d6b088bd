//! A battery of self-checks: exact identities that must hold for every frame
//! and statistical checks of the noise moments, the bias constant, the
//! Gaussian approximation and the BPSK error rate.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis;
use crate::comac_txrx::{self, decompose_noise, received_energy};
use crate::error::{Error, Result};
use crate::model::{approx_rel_eq, FunctionKind, NetworkConfig, NomographicFunction, ReadingDistribution, EXACT_REL_TOL};
use crate::sequences_channel::generate_frame;
use crate::stats;
use crate::streams::{self, Family, Role};
use crate::tdma_baseline::{self, TdmaConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self::new(name, false, err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSettings {
    pub network: NetworkConfig,
    /// Log base and floor used by the geometric-mean checks.
    pub geo_base: f64,
    pub geo_floor: f64,
    pub tdma_q: u32,
    /// Frames for the moment checks.
    pub n_frames: usize,
    /// Frames for the Gaussian-approximation diagnostic.
    pub ks_frames: usize,
    /// Largest admissible KS distance.
    pub ks_threshold: f64,
    /// `(K, M)` of the KS diagnostic; the threshold is only meaningful for
    /// long sequences.
    pub ks_shape: (usize, usize),
    pub n_gamma_draws: usize,
    pub n_bits: usize,
    /// Readings vectors for the noiseless identity.
    pub n_identity: usize,
}

impl ValidationSettings {
    pub fn new(network: NetworkConfig) -> Self {
        let floor = network.readings.x_min.clamp(f64::MIN_POSITIVE, 0.5);
        Self {
            network,
            geo_base: 2.0,
            geo_floor: floor,
            tdma_q: 10,
            n_frames: 100_000,
            ks_frames: 20_000,
            ks_threshold: 0.02,
            ks_shape: (250, 250),
            n_gamma_draws: 1_000_000,
            n_bits: 1_000_000,
            n_identity: 1_000,
        }
    }

    fn geometric(&self, cfg: &NetworkConfig) -> Result<NomographicFunction> {
        NomographicFunction::new(
            FunctionKind::GeometricMean {
                base: self.geo_base,
                floor: self.geo_floor,
            },
            cfg,
        )
    }
}

fn random_readings(cfg: &NetworkConfig, trial: u64) -> Vec<f64> {
    let mut rng = streams::stream(cfg.seed, Family::Validation, trial, Role::Readings, 0);
    ReadingDistribution::UniformIid.sample(&mut rng, cfg)
}

/// Noise-free receiver output must equal `f(x)` for both calibrated means.
pub fn noiseless_exactness(cfg: &NetworkConfig, geo: &NomographicFunction, n: usize) -> Result<(bool, f64)> {
    let quiet = cfg.clone().with_noise_var(0.0);
    let arith = NomographicFunction::new(FunctionKind::ArithmeticMean, &quiet)?;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for t in 0..n as u64 {
        let x = random_readings(&quiet, t);
        for f in [&arith, geo] {
            let frame = generate_frame(&quiet, f, &x, Family::Validation, t)?;
            // Take away the cross-sequence interference; what remains is the
            // noiseless sum energy.
            let energy = received_energy(&frame) - decompose_noise(&frame).delta1;
            let got = comac_txrx::estimate(&quiet, f, energy)?;
            let want = f.evaluate(&x)?;
            worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
            ok &= approx_rel_eq(got, want, EXACT_REL_TOL);
        }
    }
    Ok((ok, worst))
}

/// Energy identity `||Y||^2 = M sum P + D1 + D2 + D3` on every frame.
pub fn energy_identity(cfg: &NetworkConfig, n: usize) -> Result<(bool, f64)> {
    let f = NomographicFunction::new(FunctionKind::ArithmeticMean, cfg)?;
    let mut worst: f64 = 0.0;
    for t in 0..n as u64 {
        let x = random_readings(cfg, t);
        let frame = generate_frame(cfg, &f, &x, Family::Validation, t)?;
        let lhs = received_energy(&frame);
        let rhs = cfg.seq_len as f64 * frame.retained_power() + decompose_noise(&frame).delta_total;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst <= EXACT_REL_TOL, worst))
}

/// Noise components of `n` frames with fresh uniform readings.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSamples {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub delta3: Vec<f64>,
    pub total: Vec<f64>,
}

pub fn sample_deltas(cfg: &NetworkConfig, n: usize) -> Result<DeltaSamples> {
    let f = NomographicFunction::new(FunctionKind::ArithmeticMean, cfg)?;
    let d = (0..n as u64)
        .into_par_iter()
        .map(|t| {
            let x = random_readings(cfg, t);
            Ok(decompose_noise(&generate_frame(cfg, &f, &x, Family::Validation, t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaSamples {
        delta1: d.iter().map(|v| v.delta1).collect(),
        delta2: d.iter().map(|v| v.delta2).collect(),
        delta3: d.iter().map(|v| v.delta3).collect(),
        total: d.iter().map(|v| v.delta_total).collect(),
    })
}

/// `|estimate - target| <= 3 se`.
pub fn within_3se(estimate: f64, target: f64, se: f64) -> bool {
    (estimate - target).abs() <= 3.0 * se
}

/// Statistical checks on the noise components.
pub fn moment_checks(cfg: &NetworkConfig, n: usize) -> Result<Vec<Check>> {
    let d = sample_deltas(cfg, n)?;
    let mut out = Vec::new();
    for (name, v) in [("mean of D1", &d.delta1), ("mean of D2", &d.delta2)] {
        let (m, se) = (stats::mean(v), stats::std_error(v));
        out.push(Check::new(name, within_3se(m, 0.0, se), format!("{m:.6} (se {se:.6}, target 0)")));
    }
    let target = cfg.seq_len as f64 * cfg.noise_var;
    let (m, se) = (stats::mean(&d.delta3), stats::std_error(&d.delta3));
    out.push(Check::new(
        "mean of D3",
        within_3se(m, target, se),
        format!("{m:.6} (se {se:.6}, target {target})"),
    ));
    for (name, a, b) in [
        ("cov(D1, D2)", &d.delta1, &d.delta2),
        ("cov(D2, D3)", &d.delta2, &d.delta3),
        ("cov(D1, D3)", &d.delta1, &d.delta3),
    ] {
        let (c, se) = stats::covariance_with_se(a, b);
        out.push(Check::new(name, within_3se(c, 0.0, se), format!("{c:.6} (se {se:.6}, target 0)")));
    }
    let f = NomographicFunction::new(FunctionKind::ArithmeticMean, cfg)?;
    let want = analysis::var_delta(cfg, &f, &ReadingDistribution::UniformIid)?;
    let (v, se) = (stats::variance(&d.total), stats::variance_std_error(&d.total));
    out.push(Check::new(
        "variance of D",
        within_3se(v, want, se),
        format!("{v:.6} (se {se:.6}, closed form {want:.6})"),
    ));
    Ok(out)
}

/// Monte Carlo mean of `a^(D3 / (alpha K M))` with `D3 ~ Gamma(M, sigma^2)`.
pub fn lambda_oracle(cfg: &NetworkConfig, func: &NomographicFunction, draws: usize) -> Result<(f64, f64)> {
    let a = func
        .geometric_base()
        .ok_or_else(|| Error::input("needs a geometric mean"))?;
    let lambda = analysis::lambda_m(cfg, func)?;
    if cfg.noise_var == 0.0 {
        return Ok((1.0, lambda));
    }
    let gamma = Gamma::new(cfg.seq_len as f64, cfg.noise_var)
        .map_err(|e| Error::input(format!("gamma law: {e}")))?;
    let rate = a.ln() / (func.alpha() * func.nodes() as f64 * cfg.seq_len as f64);
    const CHUNK: u64 = 10_000;
    let chunks = (draws as u64).div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams::stream(cfg.seed, Family::Validation, c, Role::Noise, 1);
            let len = CHUNK.min(draws as u64 - c * CHUNK);
            let v: Vec<f64> = (0..len).map(|_| (rate * gamma.sample(&mut rng)).exp()).collect();
            stats::pairwise_sum(&v)
        })
        .collect();
    Ok((stats::pairwise_sum(&partial) / draws as f64, lambda))
}

/// Empirical BER against `0.5 erfc(sqrt(P / sigma^2))`; returns
/// `(empirical, closed form, standard error)`.
pub fn ber_oracle(ratio: f64, n_bits: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let noise_var = 1.0;
    const CHUNK: u64 = 10_000;
    let chunks = (n_bits as u64).div_ceil(CHUNK);
    let errors: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams::stream(seed, Family::Validation, c, Role::Bits, ratio.to_bits());
            let len = CHUNK.min(n_bits as u64 - c * CHUNK) as usize;
            let bits: Vec<bool> = (0..len).map(|_| rng.random()).collect();
            let heard = tdma_baseline::transmit_bits(&mut rng, noise_var, ratio * noise_var, &bits)?;
            Ok(bits.iter().zip(&heard).filter(|(a, b)| a != b).count())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let p = tdma_baseline::bpsk_ber(ratio * noise_var, noise_var);
    let emp = errors as f64 / n_bits as f64;
    Ok((emp, p, (p * (1.0 - p) / n_bits as f64).sqrt()))
}

fn push_result(out: &mut Vec<Check>, name: &str, r: Result<Check>) {
    out.push(r.unwrap_or_else(|e| Check::failed(name, &e)));
}

/// Run every check. Failures are report entries, never errors.
pub fn run_validation_suite(settings: &ValidationSettings) -> ValidationReport {
    let cfg = &settings.network;
    let mut checks = Vec::new();
    let geo = settings.geometric(cfg);

    push_result(&mut checks, "noiseless exactness", (|| {
        let geo = geo.as_ref().map_err(|e| Error::input(e.to_string()))?;
        let (ok, worst) = noiseless_exactness(cfg, geo, settings.n_identity)?;
        Ok(Check::new("noiseless exactness", ok, format!("worst relative error {worst:.3e}")))
    })());

    push_result(&mut checks, "energy identity", (|| {
        let (ok, worst) = energy_identity(cfg, settings.n_identity.min(200))?;
        Ok(Check::new("energy identity", ok, format!("worst relative gap {worst:.3e}")))
    })());

    match moment_checks(cfg, settings.n_frames) {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check::failed("noise moments", &e)),
    }

    push_result(&mut checks, "bias constant", (|| {
        let geo = geo.as_ref().map_err(|e| Error::input(e.to_string()))?;
        let (mc, lambda) = lambda_oracle(cfg, geo, settings.n_gamma_draws)?;
        let rel = (mc / lambda - 1.0).abs();
        Ok(Check::new(
            "bias constant",
            rel < 0.01,
            format!("Monte Carlo {mc:.6} vs closed form {lambda:.6} (relative gap {rel:.2e})"),
        ))
    })());

    push_result(&mut checks, "gaussian approximation", (|| {
        let (k, m) = settings.ks_shape;
        let ks_cfg = cfg.clone().with_shape(k, m);
        let arith = NomographicFunction::new(FunctionKind::ArithmeticMean, &ks_cfg)?;
        let x = random_readings(&ks_cfg, u64::MAX);
        let ks = analysis::gaussian_approx_check(&ks_cfg, &arith, &x, settings.ks_frames)?;
        Ok(Check::new(
            "gaussian approximation",
            ks < settings.ks_threshold,
            format!(
                "KS distance {ks:.4} over {} frames at K = {k}, M = {m} (threshold {})",
                settings.ks_frames, settings.ks_threshold
            ),
        ))
    })());

    for ratio in [0.25, 1.0, 4.0] {
        let name = format!("bpsk error rate at P/sigma^2 = {ratio}");
        push_result(&mut checks, &name, (|| {
            let (emp, p, se) = ber_oracle(ratio, settings.n_bits, cfg.seed)?;
            Ok(Check::new(&name, within_3se(emp, p, se), format!("{emp:.6} vs {p:.6} (se {se:.2e})")))
        })());
    }

    push_result(&mut checks, "tdma fairness", (|| {
        let tdma = TdmaConfig::new(settings.tdma_q)?;
        let fair = cfg.clone().with_shape(cfg.nodes, tdma.fair_seq_len(cfg.nodes));
        let f = NomographicFunction::new(FunctionKind::ArithmeticMean, &fair)?;
        let mut worst: f64 = 0.0;
        for t in 0..100 {
            for &x in &random_readings(&fair, t) {
                let (a, b) = tdma.node_energy(f.power(0, x)?, fair.seq_len);
                worst = worst.max((a - b).abs() / a.max(f64::MIN_POSITIVE));
            }
        }
        let slots = tdma.q as usize * fair.nodes;
        Ok(Check::new(
            "tdma fairness",
            worst <= EXACT_REL_TOL && slots == fair.seq_len,
            format!("{slots} slots for M = {}, worst energy gap {worst:.2e}", fair.seq_len),
        ))
    })());

    ValidationReport {
        seed: cfg.seed,
        checks,
    }
}
