//! Uncoded TDMA baseline: uniform quantization, BPSK per bit in dedicated
//! slots, midpoint reconstruction and direct evaluation of the function.
//!
//! Fairness against the analog scheme fixes the slot budget at `M = Q K` and
//! the instantaneous power at `P_k M / Q`, so each node spends the same
//! energy `M P_k T` per function value under both schemes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EstimateResult, NetworkConfig, NomographicFunction, ReadingDistribution, SensingRange};
use crate::streams::{self, Family, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TdmaConfig {
    /// Bits per reading.
    pub q: u32,
    /// Slot duration; only enters energy bookkeeping.
    pub symbol_duration: f64,
    /// Framing overhead in slots per node; zero models the idealized scheme.
    pub overhead_r: f64,
}

impl TdmaConfig {
    pub fn new(q: u32) -> Result<Self> {
        let cfg = Self {
            q,
            symbol_duration: 1.0,
            overhead_r: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.q) {
            return Err(Error::config("tdma.Q", format!("need 1 <= Q <= 32, got {}", self.q)));
        }
        if !(self.symbol_duration.is_finite() && self.symbol_duration > 0.0) {
            return Err(Error::config("tdma.T", "slot duration must be positive"));
        }
        if !(self.overhead_r.is_finite() && self.overhead_r >= 0.0) {
            return Err(Error::config("tdma.R", "overhead must be >= 0"));
        }
        Ok(())
    }

    /// Sequence length that equalizes the time budget for `nodes` nodes.
    pub fn fair_seq_len(&self, nodes: usize) -> usize {
        self.q as usize * nodes
    }

    /// Instantaneous slot power for a node whose analog power would be `p`.
    pub fn slot_power(&self, p: f64, seq_len: usize) -> f64 {
        p * seq_len as f64 / self.q as f64
    }

    /// Energy per function value of one node: `(analog, tdma)`.
    pub fn node_energy(&self, p: f64, seq_len: usize) -> (f64, f64) {
        let t = self.symbol_duration;
        (seq_len as f64 * p * t, self.q as f64 * self.slot_power(p, seq_len) * t)
    }

    pub fn check_fairness(&self, cfg: &NetworkConfig) -> Result<()> {
        let want = self.fair_seq_len(cfg.nodes);
        if cfg.seq_len != want {
            return Err(Error::config(
                "network.M",
                format!("fair comparison needs M = Q K = {want}, got {}", cfg.seq_len),
            ));
        }
        Ok(())
    }
}

fn cell(sensing: &SensingRange, q: u32) -> f64 {
    sensing.width() / 2f64.powi(q as i32)
}

/// Uniform quantizer with `2^Q` cells over the sensing range.
pub fn quantize(sensing: &SensingRange, q: u32, x: f64) -> Result<u64> {
    if !sensing.contains(x) {
        return Err(Error::input(format!(
            "reading {x} outside the sensing range [{}, {}]",
            sensing.s_min, sensing.s_max
        )));
    }
    let top = (1u64 << q) - 1;
    let code = ((x - sensing.s_min) / cell(sensing, q)).floor() as u64;
    Ok(code.min(top))
}

/// Midpoint of cell `code`.
pub fn reconstruct(sensing: &SensingRange, q: u32, code: u64) -> Result<f64> {
    if code >= 1u64 << q {
        return Err(Error::input(format!("code {code} does not fit in {q} bits")));
    }
    Ok(sensing.s_min + (code as f64 + 0.5) * cell(sensing, q))
}

/// Natural binary, most significant bit first.
pub fn code_to_bits(code: u64, q: u32) -> Vec<bool> {
    (0..q).rev().map(|i| (code >> i) & 1 == 1).collect()
}

pub fn bits_to_code(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
}

/// BPSK over an interference-free slot: bit 1 as `+sqrt(P)`, bit 0 as
/// `-sqrt(P)`, complex Gaussian noise of variance `noise_var`, decision on the
/// sign of the real part (zero decodes as 0).
pub fn transmit_bits(rng: &mut ChaCha8Rng, noise_var: f64, slot_power: f64, bits: &[bool]) -> Result<Vec<bool>> {
    if !(slot_power >= 0.0 && slot_power.is_finite()) {
        return Err(Error::input(format!("slot power must be >= 0, got {slot_power}")));
    }
    let amp = slot_power.sqrt();
    let scale = (noise_var / 2.0).sqrt();
    Ok(bits
        .iter()
        .map(|&b| {
            let s = if b { amp } else { -amp };
            let re: f64 = rng.sample(StandardNormal);
            // The quadrature component is drawn to keep the noise circular but
            // does not enter the decision.
            let _im: f64 = rng.sample(StandardNormal);
            s + scale * re > 0.0
        })
        .collect())
}

/// Bit error probability of [`transmit_bits`].
pub fn bpsk_ber(slot_power: f64, noise_var: f64) -> f64 {
    if noise_var == 0.0 {
        return if slot_power > 0.0 { 0.0 } else { 0.5 };
    }
    0.5 * libm::erfc((slot_power / noise_var).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TdmaOutcome {
    pub estimate: EstimateResult,
    pub bit_errors: usize,
    /// Reconstructions pulled back into the function's domain.
    pub clamped: usize,
}

/// One function value over TDMA. Each node's bits use their own stream.
pub fn tdma_trial(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    tdma: &TdmaConfig,
    readings: &[f64],
    trial: u64,
) -> Result<TdmaOutcome> {
    if readings.len() != cfg.nodes {
        return Err(Error::input(format!(
            "expected {} readings, got {}",
            cfg.nodes,
            readings.len()
        )));
    }
    let mut recon = Vec::with_capacity(cfg.nodes);
    let mut bit_errors = 0;
    let mut clamped = 0;
    for (k, &x) in readings.iter().enumerate() {
        let code = quantize(&cfg.sensing, tdma.q, x)?;
        let bits = code_to_bits(code, tdma.q);
        let p = tdma.slot_power(func.power(k, x)?, cfg.seq_len);
        let mut rng = streams::stream(cfg.seed, Family::Tdma, trial, Role::Bits, k as u64);
        let heard = transmit_bits(&mut rng, cfg.noise_var, p, &bits)?;
        bit_errors += bits.iter().zip(&heard).filter(|(a, b)| a != b).count();
        let (v, moved) = func.clamp_to_domain(reconstruct(&cfg.sensing, tdma.q, bits_to_code(&heard))?);
        clamped += moved as usize;
        recon.push(v);
    }
    let f_hat = func.evaluate(&recon)?;
    Ok(TdmaOutcome {
        estimate: EstimateResult::new(func, f_hat, func.evaluate(readings)?, 0),
        bit_errors,
        clamped,
    })
}

/// Average received SNR per node, `2 M E{P_1} / (sigma^2 Q)`, linear.
pub fn snr_operating_point(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    tdma: &TdmaConfig,
    dist: &ReadingDistribution,
) -> Result<f64> {
    if cfg.noise_var == 0.0 {
        return Err(Error::input("SNR undefined for a noiseless receiver"));
    }
    let mean_p = dist.mean_powers(cfg, func)?[0];
    Ok(2.0 * cfg.seq_len as f64 * mean_p / (cfg.noise_var * tdma.q as f64))
}

/// Noise variance that puts the operating point at `snr_db`.
pub fn noise_var_for_snr_db(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    tdma: &TdmaConfig,
    dist: &ReadingDistribution,
    snr_db: f64,
) -> Result<f64> {
    let mean_p = dist.mean_powers(cfg, func)?[0];
    Ok(2.0 * cfg.seq_len as f64 * mean_p / (tdma.q as f64 * 10f64.powf(snr_db / 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FunctionKind, ReadingRange};
    use rand::SeedableRng;

    fn example3(noise_var: f64) -> (NetworkConfig, NomographicFunction, TdmaConfig) {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        let r = ReadingRange::new(5.0, 30.0, &s).unwrap();
        let cfg = NetworkConfig::new(25, 250, 1.0, noise_var, s, r).unwrap();
        let f = NomographicFunction::new(FunctionKind::ArithmeticMean, &cfg).unwrap();
        (cfg, f, TdmaConfig::new(10).unwrap())
    }

    #[test]
    fn quantizer_endpoints() {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        assert_eq!(quantize(&s, 10, -55.0).unwrap(), 0);
        assert_eq!(quantize(&s, 10, 130.0).unwrap(), 1023);
        assert!(quantize(&s, 10, 130.1).is_err());
        let u = SensingRange::new(0.0, 2.0).unwrap();
        assert_eq!(reconstruct(&u, 1, 0).unwrap(), 0.5);
        assert_eq!(reconstruct(&u, 1, 1).unwrap(), 1.5);
        assert!(reconstruct(&u, 1, 2).is_err());
    }

    #[test]
    fn quantizer_half_step_bound() {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        let step = 185.0 / 1024.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = rng.random_range(-55.0..=130.0);
            let y = reconstruct(&s, 10, quantize(&s, 10, x).unwrap()).unwrap();
            assert!((y - x).abs() <= step / 2.0 + 1e-12);
        }
    }

    #[test]
    fn bit_packing_roundtrip() {
        assert_eq!(code_to_bits(5, 4), vec![false, true, false, true]);
        for code in [0u64, 1, 511, 1023] {
            assert_eq!(bits_to_code(&code_to_bits(code, 10)), code);
        }
    }

    #[test]
    fn silent_channel_is_error_free_and_zero_power_guesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
        assert_eq!(transmit_bits(&mut rng, 0.0, 0.3, &bits).unwrap(), bits);
        let heard = transmit_bits(&mut rng, 1.0, 0.0, &bits).unwrap();
        let ber = bits.iter().zip(&heard).filter(|(a, b)| a != b).count() as f64 / 1e4;
        assert!((ber - 0.5).abs() < 0.015, "{ber}");
    }

    #[test]
    fn fairness_identities() {
        let (cfg, f, tdma) = example3(1.0);
        tdma.check_fairness(&cfg).unwrap();
        let p = f.power(0, 17.0).unwrap();
        let (a, b) = tdma.node_energy(p, cfg.seq_len);
        assert!((a - b).abs() <= 1e-12 * a);
        assert!(tdma.check_fairness(&cfg.clone().with_shape(25, 200)).is_err());
    }

    #[test]
    fn noiseless_trial_is_quantization_error_only() {
        let (cfg, f, tdma) = example3(0.0);
        let step = 185.0 / 1024.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for t in 0..200 {
            let x: Vec<f64> = (0..25).map(|_| rng.random_range(5.0..=30.0)).collect();
            let out = tdma_trial(&cfg, &f, &tdma, &x, t).unwrap();
            assert_eq!(out.bit_errors, 0);
            assert!(out.estimate.error_normalized.abs() <= (step / 2.0) / 185.0 + 1e-15);
        }
        let mid: Vec<f64> = (0..25).map(|k| reconstruct(&cfg.sensing, 10, 400 + k).unwrap()).collect();
        assert_eq!(tdma_trial(&cfg, &f, &tdma, &mid, 0).unwrap().estimate.error_normalized, 0.0);
    }

    #[test]
    fn operating_point_examples() {
        let (cfg, f, tdma) = example3(1.0);
        let d = ReadingDistribution::UniformIid;
        assert!((d.mean_powers(&cfg, &f).unwrap()[0] - 72.5 / 185.0).abs() < 1e-15);
        let snr = snr_operating_point(&cfg, &f, &tdma, &d).unwrap();
        let half = snr_operating_point(&cfg.clone().with_noise_var(2.0), &f, &tdma, &d).unwrap();
        assert!((snr / half - 2.0).abs() < 1e-12);
        let nv = noise_var_for_snr_db(&cfg, &f, &tdma, &d, 0.0).unwrap();
        assert!((nv - 2.0 * 250.0 * (72.5 / 185.0) / 10.0).abs() < 1e-12);
        let back = snr_operating_point(&cfg.clone().with_noise_var(nv), &f, &tdma, &d).unwrap();
        assert!((back - 1.0).abs() < 1e-12);
        assert!(snr_operating_point(&cfg.with_noise_var(0.0), &f, &tdma, &d).is_err());
    }

    #[test]
    fn geometric_reconstructions_are_clamped() {
        // The single low cell [0, 4) has its midpoint below s' = 3.
        let s = SensingRange::new(0.0, 8.0).unwrap();
        let r = ReadingRange::new(3.0, 6.0, &s).unwrap();
        let cfg = NetworkConfig::new(2, 2, 1.0, 0.0, s, r).unwrap();
        let f = NomographicFunction::new(FunctionKind::GeometricMean { base: 2.0, floor: 3.0 }, &cfg)
            .unwrap();
        let tdma = TdmaConfig::new(1).unwrap();
        let out = tdma_trial(&cfg, &f, &tdma, &[3.0, 3.0], 0).unwrap();
        assert_eq!(out.clamped, 2);
        assert!((out.estimate.f_hat - 3.0).abs() < 1e-12);
    }
}
