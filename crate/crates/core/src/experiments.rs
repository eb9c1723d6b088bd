//! Monte Carlo outage experiments.
//!
//! A trial draws fresh readings, runs one scheme end to end and records the
//! absolute normalized error. The outage at tolerance `eps` is the fraction
//! of trials with `|E| >= eps`, reported with a Wilson 95% interval. Trials
//! are independent and keyed by index, so results do not depend on the
//! number of worker threads.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, AnalyticCurve};
use crate::comac_txrx;
use crate::error::{Error, Result};
use crate::model::{FunctionKind, NetworkConfig, NomographicFunction, ReadingDistribution};
use crate::sequences_channel::{noisy_energy, superimpose_signal};
use crate::stats::{self, pairwise_sum};
use crate::streams::{self, Family, Role};
use crate::tdma_baseline::{self, TdmaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Energy detection with the calibrated estimator.
    Comac,
    /// Geometric mean divided by the Monte Carlo mean noise factor.
    ComacUnbiasedRef,
    Tdma,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Comac => "comac",
            Scheme::ComacUnbiasedRef => "comac_unbiased_ref",
            Scheme::Tdma => "tdma",
        }
    }
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// 40 log-spaced tolerances in `[1e-3, 0.3]`.
pub fn default_epsilon_grid() -> Vec<f64> {
    log_grid(1e-3, 0.3, 40)
}

pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub network: NetworkConfig,
    pub function: NomographicFunction,
    pub scheme: Scheme,
    pub epsilon_grid: Vec<f64>,
    pub n_trials: usize,
    /// Operating point; when set it overrides the network's noise variance.
    pub snr_db: Option<f64>,
    pub tdma: Option<TdmaConfig>,
    pub reading_distribution: ReadingDistribution,
    /// Reading samples for the analytic curve; zero skips it.
    pub analytic_samples: usize,
}

impl ExperimentSpec {
    pub fn new(network: NetworkConfig, function: NomographicFunction, scheme: Scheme) -> Self {
        Self {
            network,
            function,
            scheme,
            epsilon_grid: default_epsilon_grid(),
            n_trials: DEFAULT_TRIALS,
            snr_db: None,
            tdma: None,
            reading_distribution: ReadingDistribution::UniformIid,
            analytic_samples: analysis::DEFAULT_ANALYTIC_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.function.nodes() != self.network.nodes {
            return Err(Error::config(
                "network.K",
                "function was built for a different node count",
            ));
        }
        if self.epsilon_grid.is_empty() {
            return Err(Error::config("experiment.epsilon_grid", "grid is empty"));
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::config(
                "experiment.epsilon_grid",
                "tolerances must be positive and finite",
            ));
        }
        if self.epsilon_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "experiment.epsilon_grid",
                "grid must be strictly increasing",
            ));
        }
        if self.n_trials == 0 {
            return Err(Error::config("experiment.n_trials", "need at least one trial"));
        }
        self.reading_distribution.validate(&self.network)?;
        if let Some(t) = &self.tdma {
            t.validate()?;
        }
        if self.snr_db.is_some() && self.tdma.is_none() {
            return Err(Error::config(
                "tdma.Q",
                "an SNR operating point needs the TDMA quantizer resolution",
            ));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::config("experiment.snr_db_list", "SNR must be finite"));
            }
        }
        match self.scheme {
            Scheme::Tdma => {
                let t = self.tdma.as_ref().ok_or_else(|| {
                    Error::config("tdma.Q", "the tdma scheme needs a quantizer resolution")
                })?;
                t.check_fairness(&self.network)?;
            }
            Scheme::ComacUnbiasedRef => {
                if !matches!(self.function.kind(), FunctionKind::GeometricMean { .. }) {
                    return Err(Error::config(
                        "experiment.scheme",
                        "the reference estimator exists only for the geometric mean",
                    ));
                }
            }
            Scheme::Comac => {}
        }
        if matches!(self.function.kind(), FunctionKind::GeometricMean { .. }) && self.scheme != Scheme::Tdma {
            analysis::lambda_m(&self.effective_network()?, &self.function)?;
        }
        Ok(())
    }

    /// The network with the noise variance implied by `snr_db`, if any.
    pub fn effective_network(&self) -> Result<NetworkConfig> {
        match (self.snr_db, &self.tdma) {
            (Some(snr), Some(t)) => {
                let nv = tdma_baseline::noise_var_for_snr_db(
                    &self.network,
                    &self.function,
                    t,
                    &self.reading_distribution,
                    snr,
                )?;
                Ok(self.network.clone().with_noise_var(nv))
            }
            _ => Ok(self.network.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageCurve {
    pub scheme: Scheme,
    pub epsilon: Vec<f64>,
    pub outage: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    pub analytic: Option<Vec<f64>>,
    pub n_trials: usize,
    pub seed: u64,
    pub noise_var: f64,
    /// Frames in which at least one node was silenced by the peak constraint.
    pub frames_with_exclusions: usize,
    /// TDMA only.
    pub bit_errors: usize,
    /// TDMA only: reconstructions clamped into the function's domain.
    pub clamped: usize,
}

/// Per-trial outcome of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialErrors {
    /// `|E|` per trial, in trial order.
    pub abs_error: Vec<f64>,
    pub frames_with_exclusions: usize,
    pub bit_errors: usize,
    pub clamped: usize,
}

/// Run `f` on a pool with `threads` workers (0: rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn trial_readings(cfg: &NetworkConfig, dist: &ReadingDistribution, family: Family, trial: u64) -> Vec<f64> {
    let mut rng = streams::stream(cfg.seed, family, trial, Role::Readings, 0);
    dist.sample(&mut rng, cfg)
}

fn powers_of(func: &NomographicFunction, x: &[f64]) -> Result<Vec<f64>> {
    x.iter().enumerate().map(|(k, &v)| func.power(k, v)).collect()
}

/// What one analog trial produced for each noise level.
struct AnalogTrial {
    f_true: f64,
    excluded: usize,
    /// `(energy, overall noise)` per noise level.
    energies: Vec<(f64, f64)>,
}

/// Simulate analog trials once per trial and once per noise level on the
/// same sequences, fading and unit noise. Run with a single noise level this
/// is exactly the frame of [`crate::sequences_channel::simulate_frame_energy`].
fn analog_trials(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    dist: &ReadingDistribution,
    n_trials: usize,
    noise_vars: &[f64],
) -> Result<Vec<AnalogTrial>> {
    let m = cfg.seq_len as f64;
    (0..n_trials as u64)
        .into_par_iter()
        .map_init(
            || (vec![Complex64::new(0.0, 0.0); cfg.seq_len], Vec::with_capacity(cfg.seq_len)),
            |(signal, scratch), t| {
                let x = trial_readings(cfg, dist, Family::Comac, t);
                let powers = powers_of(func, &x)?;
                let summary = superimpose_signal(cfg, &powers, Family::Comac, t, signal)?;
                let energies = noise_vars
                    .iter()
                    .map(|&nv| {
                        let e = noisy_energy(cfg, signal, nv, Family::Comac, t, scratch);
                        (e, e - m * summary.retained_power)
                    })
                    .collect();
                Ok(AnalogTrial {
                    f_true: func.evaluate(&x)?,
                    excluded: summary.excluded,
                    energies,
                })
            },
        )
        .collect()
}

fn analog_errors(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    scheme: Scheme,
    trials: &[AnalogTrial],
    level: usize,
) -> Result<TrialErrors> {
    let range = func.error_range();
    let abs_error = match scheme {
        Scheme::Comac => trials
            .iter()
            .map(|t| {
                let f_hat = comac_txrx::estimate(cfg, func, t.energies[level].0)?;
                Ok(((f_hat - t.f_true) / range).abs())
            })
            .collect::<Result<Vec<_>>>()?,
        Scheme::ComacUnbiasedRef => {
            let factors: Vec<f64> = trials
                .iter()
                .map(|t| comac_txrx::geometric_noise_factor(cfg, func, t.energies[level].1))
                .collect();
            let denominator = pairwise_sum(&factors) / factors.len() as f64;
            trials
                .iter()
                .map(|t| {
                    let f_hat = comac_txrx::estimate_unbiased_geometric_reference(
                        cfg,
                        func,
                        t.energies[level].0,
                        denominator,
                    )?;
                    Ok(((f_hat - t.f_true) / range).abs())
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scheme::Tdma => unreachable!("tdma trials are not analog"),
    };
    Ok(TrialErrors {
        abs_error,
        frames_with_exclusions: trials.iter().filter(|t| t.excluded > 0).count(),
        bit_errors: 0,
        clamped: 0,
    })
}

fn tdma_errors(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    tdma: &TdmaConfig,
    dist: &ReadingDistribution,
    n_trials: usize,
) -> Result<TrialErrors> {
    let outcomes = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let x = trial_readings(cfg, dist, Family::Tdma, t);
            tdma_baseline::tdma_trial(cfg, func, tdma, &x, t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialErrors {
        abs_error: outcomes.iter().map(|o| o.estimate.error_normalized.abs()).collect(),
        frames_with_exclusions: 0,
        bit_errors: outcomes.iter().map(|o| o.bit_errors).sum(),
        clamped: outcomes.iter().map(|o| o.clamped).sum(),
    })
}

/// Absolute errors of every trial of `spec`, in trial order.
pub fn trial_errors(spec: &ExperimentSpec) -> Result<TrialErrors> {
    spec.validate()?;
    let cfg = spec.effective_network()?;
    let dist = &spec.reading_distribution;
    match spec.scheme {
        Scheme::Tdma => tdma_errors(&cfg, &spec.function, spec.tdma.as_ref().unwrap(), dist, spec.n_trials),
        scheme => {
            let trials = analog_trials(&cfg, &spec.function, dist, spec.n_trials, &[cfg.noise_var])?;
            analog_errors(&cfg, &spec.function, scheme, &trials, 0)
        }
    }
}

/// Outage estimates on `epsilon` from per-trial absolute errors. A NaN error
/// counts as an outage.
pub fn outage_from_errors(errors: &TrialErrors, epsilon: &[f64]) -> (Vec<f64>, Vec<stats::Interval>) {
    let mut sorted = errors.abs_error.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u64;
    let intervals: Vec<stats::Interval> = epsilon
        .iter()
        .map(|&eps| {
            let below = sorted.partition_point(|&e| e < eps) as u64;
            stats::wilson(n - below, n)
        })
        .collect();
    (intervals.iter().map(|i| i.estimate).collect(), intervals)
}

fn assemble(
    spec: &ExperimentSpec,
    cfg: &NetworkConfig,
    errors: &TrialErrors,
    analytic: Option<AnalyticCurve>,
) -> OutageCurve {
    let (outage, ci) = outage_from_errors(errors, &spec.epsilon_grid);
    OutageCurve {
        scheme: spec.scheme,
        epsilon: spec.epsilon_grid.clone(),
        outage,
        ci_lo: ci.iter().map(|i| i.lo).collect(),
        ci_hi: ci.iter().map(|i| i.hi).collect(),
        ci_half_width: ci.iter().map(|i| i.half_width()).collect(),
        analytic: analytic.map(|a| a.value),
        n_trials: spec.n_trials,
        seed: cfg.seed,
        noise_var: cfg.noise_var,
        frames_with_exclusions: errors.frames_with_exclusions,
        bit_errors: errors.bit_errors,
        clamped: errors.clamped,
    }
}

fn has_analytic(spec: &ExperimentSpec) -> bool {
    spec.scheme == Scheme::Comac
        && spec.analytic_samples > 0
        && matches!(
            spec.function.kind(),
            FunctionKind::ArithmeticMean | FunctionKind::GeometricMean { .. }
        )
}

/// Analytic outage curve of `spec` (arithmetic or geometric mean only).
pub fn analytic_curve(spec: &ExperimentSpec) -> Result<AnalyticCurve> {
    spec.validate()?;
    let cfg = spec.effective_network()?;
    analysis::outage_curve(
        &cfg,
        &spec.function,
        &spec.reading_distribution,
        &spec.epsilon_grid,
        spec.analytic_samples.max(1),
    )
}

/// Monte Carlo outage curve, with the analytic approximation attached for
/// the calibrated arithmetic and geometric estimators.
pub fn run_outage(spec: &ExperimentSpec, threads: usize) -> Result<OutageCurve> {
    spec.validate()?;
    with_threads(threads, || {
        let cfg = spec.effective_network()?;
        let errors = trial_errors(spec)?;
        let analytic = if has_analytic(spec) { Some(analytic_curve(spec)?) } else { None };
        Ok(assemble(spec, &cfg, &errors, analytic))
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub snr_db: f64,
    pub noise_var: f64,
    pub comac: OutageCurve,
    pub tdma: OutageCurve,
    /// Analog outage strictly below TDMA wherever TDMA exceeds the threshold.
    pub dominance: bool,
}

/// Outage level above which a TDMA point takes part in the dominance check.
pub const DOMINANCE_THRESHOLD: f64 = 0.01;

pub fn dominates(comac: &OutageCurve, tdma: &OutageCurve) -> bool {
    comac
        .outage
        .iter()
        .zip(&tdma.outage)
        .all(|(&c, &t)| t <= DOMINANCE_THRESHOLD || c < t)
}

/// Both schemes at every SNR point. The analog frames of all SNR points share
/// sequences and unit noise, so each point equals a standalone
/// [`run_outage`] at that SNR.
pub fn run_comparison(
    comac_spec: &ExperimentSpec,
    tdma_spec: &ExperimentSpec,
    snr_db_list: &[f64],
    threads: usize,
) -> Result<Vec<ComparisonPoint>> {
    if snr_db_list.is_empty() {
        return Err(Error::config("experiment.snr_db_list", "need at least one SNR point"));
    }
    if comac_spec.network.nodes != tdma_spec.network.nodes {
        return Err(Error::config("network.K", "schemes must share the node count"));
    }
    if comac_spec.function != tdma_spec.function {
        return Err(Error::config("function", "schemes must compute the same function"));
    }
    if comac_spec.reading_distribution != tdma_spec.reading_distribution {
        return Err(Error::config("readings", "schemes must share the reading distribution"));
    }
    if comac_spec.network.seq_len != tdma_spec.network.seq_len {
        return Err(Error::config("network.M", "schemes must share the sequence length"));
    }
    if tdma_spec.scheme != Scheme::Tdma || comac_spec.scheme == Scheme::Tdma {
        return Err(Error::config("experiment.scheme", "need one analog and one tdma spec"));
    }
    let tdma_cfg = tdma_spec
        .tdma
        .ok_or_else(|| Error::config("tdma.Q", "missing quantizer resolution"))?;
    tdma_cfg.check_fairness(&comac_spec.network)?;

    let at_snr = |spec: &ExperimentSpec, snr: f64| ExperimentSpec {
        snr_db: Some(snr),
        tdma: Some(tdma_cfg),
        ..spec.clone()
    };
    let comac_specs: Vec<ExperimentSpec> = snr_db_list.iter().map(|&s| at_snr(comac_spec, s)).collect();
    let tdma_specs: Vec<ExperimentSpec> = snr_db_list.iter().map(|&s| at_snr(tdma_spec, s)).collect();
    for s in comac_specs.iter().chain(&tdma_specs) {
        s.validate()?;
    }

    with_threads(threads, || {
        let cfgs = comac_specs
            .iter()
            .map(|s| s.effective_network())
            .collect::<Result<Vec<_>>>()?;
        let noise_vars: Vec<f64> = cfgs.iter().map(|c| c.noise_var).collect();
        let trials = analog_trials(
            &cfgs[0],
            &comac_spec.function,
            &comac_spec.reading_distribution,
            comac_spec.n_trials,
            &noise_vars,
        )?;
        let mut points = Vec::with_capacity(snr_db_list.len());
        for (level, (cspec, tspec)) in comac_specs.iter().zip(&tdma_specs).enumerate() {
            let cfg = &cfgs[level];
            let errors = analog_errors(cfg, &cspec.function, cspec.scheme, &trials, level)?;
            let analytic = if has_analytic(cspec) { Some(analytic_curve(cspec)?) } else { None };
            let comac = assemble(cspec, cfg, &errors, analytic);
            let tdma = run_outage_inner(tspec)?;
            points.push(ComparisonPoint {
                snr_db: cspec.snr_db.unwrap(),
                noise_var: cfg.noise_var,
                dominance: dominates(&comac, &tdma),
                comac,
                tdma,
            });
        }
        Ok(points)
    })?
}

fn run_outage_inner(spec: &ExperimentSpec) -> Result<OutageCurve> {
    let cfg = spec.effective_network()?;
    let errors = trial_errors(spec)?;
    Ok(assemble(spec, &cfg, &errors, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReadingRange, SensingRange};

    fn spec(k: usize, m: usize, noise_var: f64, geometric: bool) -> ExperimentSpec {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        let r = ReadingRange::new(5.0, 30.0, &s).unwrap();
        let cfg = NetworkConfig::new(k, m, 1.0, noise_var, s, r).unwrap().with_seed(11);
        let kind = if geometric {
            FunctionKind::GeometricMean { base: 2.0, floor: 1.0 }
        } else {
            FunctionKind::ArithmeticMean
        };
        let f = NomographicFunction::new(kind, &cfg).unwrap();
        let mut sp = ExperimentSpec::new(cfg, f, Scheme::Comac);
        sp.n_trials = 400;
        sp.analytic_samples = 500;
        sp
    }

    #[test]
    fn grid_defaults() {
        let g = default_epsilon_grid();
        assert_eq!(g.len(), 40);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[39] - 0.3).abs() < 1e-14);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(3, 4, 1.0, false);
        s.epsilon_grid.clear();
        assert!(matches!(s.validate(), Err(Error::Config { key, .. }) if key == "experiment.epsilon_grid"));
        let mut s = spec(3, 4, 1.0, false);
        s.epsilon_grid = vec![0.1, 0.05];
        assert!(s.validate().is_err());
        let mut s = spec(3, 4, 1.0, false);
        s.scheme = Scheme::ComacUnbiasedRef;
        assert!(s.validate().is_err());
        let mut s = spec(3, 4, 1.0, false);
        s.scheme = Scheme::Tdma;
        assert!(s.validate().is_err());
    }

    #[test]
    fn noiseless_single_node_never_fails() {
        // One node has no cross terms, so without noise the estimate is exact.
        for geometric in [false, true] {
            let mut s = spec(1, 20, 0.0, geometric);
            s.n_trials = 2000;
            let c = run_outage(&s, 1).unwrap();
            assert!(c.outage.iter().all(|&o| o == 0.0), "{:?}", c.outage);
        }
    }

    #[test]
    fn curves_do_not_depend_on_thread_count() {
        let mut s = spec(6, 30, 0.5, true);
        s.scheme = Scheme::ComacUnbiasedRef;
        let a = run_outage(&s, 1).unwrap();
        let b = run_outage(&s, 3).unwrap();
        assert_eq!(a, b);
        let s = spec(6, 30, 0.5, false);
        assert_eq!(run_outage(&s, 1).unwrap(), run_outage(&s, 4).unwrap());
    }

    #[test]
    fn comparison_points_match_standalone_runs() {
        let base = spec(4, 40, 1.0, false);
        let tdma = TdmaConfig::new(10).unwrap();
        let mut tspec = base.clone();
        tspec.scheme = Scheme::Tdma;
        tspec.tdma = Some(tdma);
        let points = run_comparison(&base, &tspec, &[0.0, 6.0], 2).unwrap();
        assert_eq!(points.len(), 2);
        for p in &points {
            let mut s = base.clone();
            s.snr_db = Some(p.snr_db);
            s.tdma = Some(tdma);
            assert_eq!(run_outage(&s, 1).unwrap(), p.comac);
            let mut t = tspec.clone();
            t.snr_db = Some(p.snr_db);
            assert_eq!(run_outage(&t, 1).unwrap(), p.tdma);
        }
    }

    #[test]
    fn tdma_outage_falls_with_snr() {
        let base = spec(4, 40, 1.0, false);
        let mut t = base.clone();
        t.scheme = Scheme::Tdma;
        t.tdma = Some(TdmaConfig::new(10).unwrap());
        t.n_trials = 3000;
        let mut prev: Option<Vec<f64>> = None;
        for snr in [0.0, 4.0, 8.0, 12.0] {
            t.snr_db = Some(snr);
            let c = run_outage(&t, 1).unwrap();
            if let Some(p) = prev {
                for (a, b) in p.iter().zip(&c.outage) {
                    assert!(*b <= *a + 0.03, "{b} > {a}");
                }
            }
            prev = Some(c.outage);
        }
    }

    #[test]
    fn wilson_covers_injected_outage() {
        // Noiseless scheme with Bernoulli(p) corruption: the interval must
        // cover p in at least 90% of repetitions.
        let p = 0.2;
        let mut covered = 0;
        for rep in 0..200u64 {
            let errs: Vec<f64> = (0..500u64)
                .map(|t| {
                    use rand::Rng;
                    let mut rng = streams::stream(rep, Family::Validation, t, Role::Pilot, 0);
                    if rng.random::<f64>() < p { 1.0 } else { 0.0 }
                })
                .collect();
            let te = TrialErrors {
                abs_error: errs,
                frames_with_exclusions: 0,
                bit_errors: 0,
                clamped: 0,
            };
            let (_, ci) = outage_from_errors(&te, &[0.5]);
            covered += ci[0].contains(p) as usize;
        }
        assert!(covered >= 180, "{covered}");
    }
}
