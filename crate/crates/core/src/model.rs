//! Domain types and the nomographic function framework.
//!
//! A desired function is written as `f(x) = psi(sum_k phi_k(x_k))`. Every
//! node maps its pre-processed reading onto a transmit power with the affine
//! map `g(phi) = alpha * (phi - phi_min)`, and the fusion center undoes the
//! map on the received energy with `h(z) = z / (M * alpha) + K * phi_min`
//! before applying `psi`. Only affine pairs `(g, h)` reconstruct `f`
//! exactly on a noiseless channel.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used by every exactness check in the crate.
pub const EXACT_REL_TOL: f64 = 1e-9;

/// Hardware range of representable sensor values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensingRange {
    pub s_min: f64,
    pub s_max: f64,
}

impl SensingRange {
    pub fn new(s_min: f64, s_max: f64) -> Result<Self> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(Error::config(
                "sensing",
                format!("need finite s_min < s_max, got [{s_min}, {s_max}]"),
            ));
        }
        Ok(Self { s_min, s_max })
    }

    pub fn width(&self) -> f64 {
        self.s_max - self.s_min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.s_min && x <= self.s_max
    }
}

/// Interval in which the readings actually fall; always inside the sensing range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadingRange {
    pub x_min: f64,
    pub x_max: f64,
}

impl ReadingRange {
    pub fn new(x_min: f64, x_max: f64, sensing: &SensingRange) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::config(
                "readings",
                format!("need finite lo < hi, got [{x_min}, {x_max}]"),
            ));
        }
        if !(sensing.contains(x_min) && sensing.contains(x_max)) {
            return Err(Error::config(
                "readings",
                format!(
                    "reading range [{x_min}, {x_max}] is not inside the sensing range [{}, {}]",
                    sensing.s_min, sensing.s_max
                ),
            ));
        }
        Ok(Self { x_min, x_max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// `H == 1` on every link.
    Ideal,
    /// Unit mean-square Rayleigh gains, inverted in amplitude at the transmitter.
    RayleighInverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Phases uniform on `[0, 2pi)`.
    Continuous,
    /// Phases uniform on `{2 pi j / L}`; `L` must be even so every symbol has
    /// its conjugate in the alphabet.
    Discrete(u32),
}

impl PhaseMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseMode::Continuous => Ok(()),
            PhaseMode::Discrete(l) if l >= 2 && l % 2 == 0 => Ok(()),
            PhaseMode::Discrete(l) => Err(Error::config(
                "network.phase_mode",
                format!("discrete phase alphabet size must be even and >= 2, got {l}"),
            )),
        }
    }
}

/// Physical parameters of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    /// Number of sensor nodes `K`.
    pub nodes: usize,
    /// Sequence length `M` (channel uses per function value).
    pub seq_len: usize,
    /// Peak transmit power per node, linear units.
    pub p_max: f64,
    /// Variance of the circularly-symmetric complex receiver noise.
    pub noise_var: f64,
    pub sensing: SensingRange,
    pub readings: ReadingRange,
    pub fading: FadingMode,
    pub phase_mode: PhaseMode,
    pub seed: u64,
}

impl NetworkConfig {
    /// Ideal channel, continuous phases, seed 0.
    pub fn new(
        nodes: usize,
        seq_len: usize,
        p_max: f64,
        noise_var: f64,
        sensing: SensingRange,
        readings: ReadingRange,
    ) -> Result<Self> {
        let cfg = Self {
            nodes,
            seq_len,
            p_max,
            noise_var,
            sensing,
            readings,
            fading: FadingMode::Ideal,
            phase_mode: PhaseMode::Continuous,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fading(mut self, fading: FadingMode) -> Self {
        self.fading = fading;
        self
    }

    pub fn with_phase_mode(mut self, phase_mode: PhaseMode) -> Self {
        self.phase_mode = phase_mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_shape(mut self, nodes: usize, seq_len: usize) -> Self {
        self.nodes = nodes;
        self.seq_len = seq_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::config("network.K", "need at least one node"));
        }
        if self.seq_len == 0 {
            return Err(Error::config("network.M", "sequence length must be >= 1"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::config(
                "network.P_max",
                format!("peak power must be positive, got {}", self.p_max),
            ));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::config(
                "network.sigma_N_sq",
                format!("noise variance must be >= 0, got {}", self.noise_var),
            ));
        }
        SensingRange::new(self.sensing.s_min, self.sensing.s_max)?;
        ReadingRange::new(self.readings.x_min, self.readings.x_max, &self.sensing)?;
        self.phase_mode.validate()
    }
}

/// Which function the network computes. Constants that depend on the network
/// (alpha, phi range, normalization range) live in [`NomographicFunction`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionKind {
    ArithmeticMean,
    /// `(prod x_k)^(1/K)` via `phi = log_a`. `floor` is the lower end `s'` of
    /// the extension domain `[s', s_max]`.
    GeometricMean { base: f64, floor: f64 },
    /// `sum_k weights[k] * x_k + offset`.
    WeightedSum { weights: Vec<f64>, offset: f64 },
    /// Every node sends the same constant; the receiver recovers `K`.
    NodeCount { constant: f64 },
    /// `(sum_k x_k^q)^(1/q)`, an upper approximation of the maximum.
    QNorm { exponent: f64 },
}

/// Affine power mapping and its energy-domain inverse.
pub trait EnergyMapping {
    /// `g`: pre-processed value to transmit power.
    fn to_power(&self, phi: f64) -> f64;
    /// `h`: received energy (noise-free: `M * sum_k g(phi_k)`) back to `sum_k phi_k`.
    fn energy_to_phi_sum(&self, energy: f64, nodes: usize, seq_len: usize) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMapping {
    pub alpha: f64,
    pub phi_min: f64,
}

impl EnergyMapping for AffineMapping {
    fn to_power(&self, phi: f64) -> f64 {
        self.alpha * (phi - self.phi_min)
    }

    fn energy_to_phi_sum(&self, energy: f64, nodes: usize, seq_len: usize) -> f64 {
        energy / (seq_len as f64 * self.alpha) + nodes as f64 * self.phi_min
    }
}

/// A desired function bound to a network: pre-processing, power mapping,
/// post-processing and the normalization range of the estimation error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NomographicFunction {
    kind: FunctionKind,
    nodes: usize,
    p_max: f64,
    mapping: AffineMapping,
    phi_max: f64,
    /// Lower end of the domain onto which `f` is continuously extended.
    domain_lo: f64,
    domain_hi: f64,
    f_min: f64,
    f_max: f64,
}

impl NomographicFunction {
    pub fn new(kind: FunctionKind, cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.nodes;
        let s = cfg.sensing;
        let (phi_min, phi_max, domain_lo, f_min, f_max) = match &kind {
            FunctionKind::ArithmeticMean => (s.s_min, s.s_max, s.s_min, s.s_min, s.s_max),
            FunctionKind::GeometricMean { base, floor } => {
                let (a, sp) = (*base, *floor);
                if !(a.is_finite() && a > 1.0) {
                    return Err(Error::config("function.a", format!("need a > 1, got {a}")));
                }
                if !(sp > 0.0 && sp >= s.s_min && sp <= cfg.readings.x_min && sp < s.s_max) {
                    return Err(Error::config(
                        "function.s_prime",
                        format!(
                            "need 0 < s' <= x_min < s_max with s' inside the sensing range, \
                             got s' = {sp}, x_min = {}, sensing = [{}, {}]",
                            cfg.readings.x_min, s.s_min, s.s_max
                        ),
                    ));
                }
                (sp.log(a), s.s_max.log(a), sp, sp, s.s_max)
            }
            FunctionKind::WeightedSum { weights, offset } => {
                if weights.len() != k {
                    return Err(Error::config(
                        "function.weights",
                        format!("expected {k} weights, got {}", weights.len()),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite()) || !offset.is_finite() {
                    return Err(Error::config("function.weights", "weights must be finite"));
                }
                let lo = |w: f64| (w * s.s_min).min(w * s.s_max);
                let hi = |w: f64| (w * s.s_min).max(w * s.s_max);
                let phi_min = weights.iter().map(|&w| lo(w)).fold(f64::INFINITY, f64::min);
                let phi_max = weights.iter().map(|&w| hi(w)).fold(f64::NEG_INFINITY, f64::max);
                let f_min = weights.iter().map(|&w| lo(w)).sum::<f64>() + offset;
                let f_max = weights.iter().map(|&w| hi(w)).sum::<f64>() + offset;
                (phi_min, phi_max, s.s_min, f_min, f_max)
            }
            FunctionKind::NodeCount { constant } => {
                if !(constant.is_finite() && *constant > 0.0) {
                    return Err(Error::config(
                        "function.c",
                        format!("node-count constant must be > 0, got {constant}"),
                    ));
                }
                // Power range is spanned by [0, c] so the constant maps to P_max.
                (0.0, *constant, s.s_min, 0.0, k as f64)
            }
            FunctionKind::QNorm { exponent } => {
                let q = *exponent;
                if !(q.is_finite() && q >= 1.0) {
                    return Err(Error::config("function.q", format!("need q >= 1, got {q}")));
                }
                if cfg.readings.x_min < 0.0 {
                    return Err(Error::config(
                        "readings.lo",
                        "q-norm needs non-negative readings",
                    ));
                }
                let lo = s.s_min.max(0.0);
                let scale = (k as f64).powf(1.0 / q);
                (lo.powf(q), s.s_max.powf(q), lo, scale * lo, scale * s.s_max)
            }
        };
        if !(phi_min < phi_max) || !(f_min < f_max) {
            return Err(Error::config(
                "function",
                format!("degenerate pre-processing range [{phi_min}, {phi_max}]"),
            ));
        }
        Ok(Self {
            kind,
            nodes: k,
            p_max: cfg.p_max,
            mapping: AffineMapping {
                alpha: cfg.p_max / (phi_max - phi_min),
                phi_min,
            },
            phi_max,
            domain_lo,
            domain_hi: s.s_max,
            f_min,
            f_max,
        })
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// `alpha_arit`, `alpha_geo`, ... depending on the kind.
    pub fn alpha(&self) -> f64 {
        self.mapping.alpha
    }

    pub fn phi_min(&self) -> f64 {
        self.mapping.phi_min
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn mapping(&self) -> &AffineMapping {
        &self.mapping
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `f_max - f_min`, the denominator of the normalized estimation error.
    pub fn error_range(&self) -> f64 {
        self.f_max - self.f_min
    }

    /// Log base for the geometric mean.
    pub fn geometric_base(&self) -> Option<f64> {
        match self.kind {
            FunctionKind::GeometricMean { base, .. } => Some(base),
            _ => None,
        }
    }

    /// `[lo, hi]` on which `f` is evaluated (`[s', s_max]` for the geometric
    /// mean, the non-negative part of the sensing range for the q-norm).
    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    /// Clamp a value into the extension domain. The flag reports whether
    /// clamping changed it.
    pub fn clamp_to_domain(&self, x: f64) -> (f64, bool) {
        let c = x.clamp(self.domain_lo, self.domain_hi);
        (c, c != x)
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.nodes {
            return Err(Error::input(format!(
                "node index {node} out of range for K = {}",
                self.nodes
            )));
        }
        Ok(())
    }

    /// `phi(x)` for node 0. All kinds except the weighted sum share one
    /// pre-processing function across nodes.
    pub fn preprocess(&self, x: f64) -> Result<f64> {
        self.preprocess_at(0, x)
    }

    pub fn preprocess_at(&self, node: usize, x: f64) -> Result<f64> {
        self.check_node(node)?;
        if !x.is_finite() {
            return Err(Error::input(format!("reading {x} is not finite")));
        }
        match &self.kind {
            FunctionKind::ArithmeticMean => Ok(x),
            FunctionKind::GeometricMean { base, .. } => {
                if x <= 0.0 {
                    return Err(Error::input(format!(
                        "geometric mean needs positive readings, got {x}"
                    )));
                }
                Ok(x.log(*base))
            }
            FunctionKind::WeightedSum { weights, .. } => Ok(weights[node] * x),
            FunctionKind::NodeCount { constant } => Ok(*constant),
            FunctionKind::QNorm { exponent } => {
                if x < 0.0 {
                    return Err(Error::input(format!(
                        "q-norm needs non-negative readings, got {x}"
                    )));
                }
                Ok(x.powf(*exponent))
            }
        }
    }

    /// `P = alpha * (phi - phi_min)`, always in `[0, P_max]`.
    pub fn map_to_power(&self, phi: f64) -> Result<f64> {
        if !(phi >= self.mapping.phi_min && phi <= self.phi_max) {
            return Err(Error::input(format!(
                "pre-processed value {phi} outside [{}, {}]",
                self.mapping.phi_min, self.phi_max
            )));
        }
        Ok(self.mapping.to_power(phi).min(self.p_max))
    }

    /// Transmit power of `node` for reading `x`.
    pub fn power(&self, node: usize, x: f64) -> Result<f64> {
        self.map_to_power(self.preprocess_at(node, x)?)
    }

    /// `h(z) = z / (M alpha) + K phi_min`.
    pub fn unmap_energy(&self, energy: f64, seq_len: usize) -> f64 {
        self.mapping.energy_to_phi_sum(energy, self.nodes, seq_len)
    }

    /// `psi`. For the q-norm a negative argument (possible under noise) is
    /// clamped to zero before taking the root.
    pub fn postprocess(&self, u: f64) -> f64 {
        let k = self.nodes as f64;
        match &self.kind {
            FunctionKind::ArithmeticMean => u / k,
            FunctionKind::GeometricMean { base, .. } => (u * base.ln() / k).exp(),
            FunctionKind::WeightedSum { offset, .. } => u + offset,
            FunctionKind::NodeCount { constant } => u / constant,
            FunctionKind::QNorm { exponent } => u.max(0.0).powf(1.0 / exponent),
        }
    }

    /// Direct evaluation of `f(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nodes {
            return Err(Error::input(format!(
                "expected {} readings, got {}",
                self.nodes,
                x.len()
            )));
        }
        let k = self.nodes as f64;
        match &self.kind {
            FunctionKind::ArithmeticMean => Ok(x.iter().sum::<f64>() / k),
            FunctionKind::GeometricMean { .. } => {
                if let Some(bad) = x.iter().find(|&&v| v <= 0.0) {
                    return Err(Error::input(format!(
                        "geometric mean needs positive readings, got {bad}"
                    )));
                }
                Ok((x.iter().map(|v| v.ln()).sum::<f64>() / k).exp())
            }
            FunctionKind::WeightedSum { weights, offset } => {
                Ok(weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + offset)
            }
            FunctionKind::NodeCount { .. } => Ok(k),
            FunctionKind::QNorm { exponent } => {
                if let Some(bad) = x.iter().find(|&&v| v < 0.0) {
                    return Err(Error::input(format!(
                        "q-norm needs non-negative readings, got {bad}"
                    )));
                }
                Ok(x.iter().map(|v| v.powf(*exponent)).sum::<f64>().powf(1.0 / exponent))
            }
        }
    }

    /// `psi(h(M * sum_k g(phi_k(x_k))))` through an arbitrary mapping pair.
    pub fn roundtrip_with<G: EnergyMapping + ?Sized>(
        &self,
        mapping: &G,
        x: &[f64],
        seq_len: usize,
    ) -> Result<f64> {
        if x.len() != self.nodes {
            return Err(Error::input(format!(
                "expected {} readings, got {}",
                self.nodes,
                x.len()
            )));
        }
        let mut energy = 0.0;
        for (k, &v) in x.iter().enumerate() {
            energy += mapping.to_power(self.preprocess_at(k, v)?);
        }
        energy *= seq_len as f64;
        Ok(self.postprocess(mapping.energy_to_phi_sum(energy, self.nodes, seq_len)))
    }

    /// The noiseless channel output after receiver processing.
    pub fn noiseless_roundtrip(&self, x: &[f64], seq_len: usize) -> Result<f64> {
        self.roundtrip_with(&self.mapping, x, seq_len)
    }

    /// True iff the noiseless roundtrip reproduces `f(x)` to [`EXACT_REL_TOL`]
    /// for every sample.
    pub fn affine_pair_check(&self, samples: &[Vec<f64>], seq_len: usize) -> Result<bool> {
        self.affine_pair_check_with(&self.mapping, samples, seq_len)
    }

    pub fn affine_pair_check_with<G: EnergyMapping + ?Sized>(
        &self,
        mapping: &G,
        samples: &[Vec<f64>],
        seq_len: usize,
    ) -> Result<bool> {
        for x in samples {
            let got = self.roundtrip_with(mapping, x, seq_len)?;
            let want = self.evaluate(x)?;
            if !approx_rel_eq(got, want, EXACT_REL_TOL) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `|a - b| <= tol * max(|a|, |b|)`, with exact equality accepted for zeros.
pub fn approx_rel_eq(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// How the readings of a trial are drawn.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingDistribution {
    /// Every node independently uniform on the configured reading range.
    UniformIid,
    /// Fixed readings, for conditional experiments.
    PointMass(Vec<f64>),
}

impl ReadingDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, cfg: &NetworkConfig) -> Vec<f64> {
        match self {
            ReadingDistribution::UniformIid => {
                let (lo, hi) = (cfg.readings.x_min, cfg.readings.x_max);
                (0..cfg.nodes).map(|_| rng.random_range(lo..=hi)).collect()
            }
            ReadingDistribution::PointMass(x) => x.clone(),
        }
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        if let ReadingDistribution::PointMass(x) = self {
            if x.len() != cfg.nodes {
                return Err(Error::config(
                    "readings",
                    format!("expected {} fixed readings, got {}", cfg.nodes, x.len()),
                ));
            }
            if let Some(v) = x.iter().find(|v| !cfg.sensing.contains(**v)) {
                return Err(Error::config(
                    "readings",
                    format!("fixed reading {v} outside the sensing range"),
                ));
            }
        }
        Ok(())
    }

    /// `E{P_k}` for every node, in closed form.
    pub fn mean_powers(&self, cfg: &NetworkConfig, func: &NomographicFunction) -> Result<Vec<f64>> {
        match self {
            ReadingDistribution::PointMass(x) => x
                .iter()
                .enumerate()
                .map(|(k, &v)| func.power(k, v))
                .collect(),
            ReadingDistribution::UniformIid => {
                let (lo, hi) = (cfg.readings.x_min, cfg.readings.x_max);
                let width = hi - lo;
                let mean_x = 0.5 * (lo + hi);
                let alpha = func.alpha();
                let phi_min = func.phi_min();
                let per_node = |mean_phi: f64| alpha * (mean_phi - phi_min);
                let k = func.nodes();
                Ok(match func.kind() {
                    FunctionKind::ArithmeticMean => vec![per_node(mean_x); k],
                    FunctionKind::GeometricMean { base, .. } => {
                        // E{ln X} for X uniform on [lo, hi].
                        let antiderivative = |t: f64| t * t.ln() - t;
                        let mean_ln = (antiderivative(hi) - antiderivative(lo)) / width;
                        vec![per_node(mean_ln / base.ln()); k]
                    }
                    FunctionKind::WeightedSum { weights, .. } => {
                        weights.iter().map(|w| per_node(w * mean_x)).collect()
                    }
                    FunctionKind::NodeCount { .. } => vec![func.p_max(); k],
                    FunctionKind::QNorm { exponent } => {
                        let q = *exponent;
                        let mean_xq = (hi.powf(q + 1.0) - lo.powf(q + 1.0)) / ((q + 1.0) * width);
                        vec![per_node(mean_xq); k]
                    }
                })
            }
        }
    }
}

/// Result of one function estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateResult {
    pub f_hat: f64,
    pub f_true: f64,
    /// `(f_hat - f_true) / (f_max - f_min)`.
    pub error_normalized: f64,
    pub excluded_nodes: usize,
}

impl EstimateResult {
    pub fn new(func: &NomographicFunction, f_hat: f64, f_true: f64, excluded_nodes: usize) -> Self {
        Self {
            f_hat,
            f_true,
            error_normalized: (f_hat - f_true) / func.error_range(),
            excluded_nodes,
        }
    }
}
