//! Random-phase transmit sequences, fading, receiver noise and the
//! superposition performed by the multiple-access channel.
//!
//! Node `k` sends `W_k[m] = sqrt(P_k) / |H_k[m]| * S_k[m]`, so the receiver
//! observes `Y[m] = sum_k sqrt(P_k) * (H_k[m] / |H_k[m]|) * S_k[m] + N[m]`.
//! Only the channel amplitude is inverted; the residual phase of `H` merges
//! with the uniform phase of `S`.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FadingMode, NetworkConfig, NomographicFunction, PhaseMode};
use crate::streams::{self, discrete_alphabet, phase_from_bits, unit_phasor, Family, Role};

/// One node's constant-envelope transmit sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSequence {
    pub phases: Vec<f64>,
    pub symbols: Vec<Complex64>,
}

/// Source of unit-modulus symbols, consuming the stream exactly as
/// [`draw_sequence`] does.
pub(crate) enum SymbolSource {
    Continuous,
    Discrete(Vec<Complex64>),
}

impl SymbolSource {
    pub(crate) fn new(mode: PhaseMode) -> Self {
        match mode {
            PhaseMode::Continuous => SymbolSource::Continuous,
            PhaseMode::Discrete(l) => SymbolSource::Discrete(discrete_alphabet(l)),
        }
    }

    #[inline]
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, Complex64) {
        match self {
            SymbolSource::Continuous => {
                let bits: u64 = rng.random();
                (phase_from_bits(bits), unit_phasor(bits))
            }
            SymbolSource::Discrete(table) => {
                let j = rng.random_range(0..table.len());
                (std::f64::consts::TAU * j as f64 / table.len() as f64, table[j])
            }
        }
    }

    #[inline]
    pub(crate) fn draw_symbol(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        match self {
            SymbolSource::Continuous => unit_phasor(rng.random()),
            SymbolSource::Discrete(table) => table[rng.random_range(0..table.len())],
        }
    }
}

pub fn draw_sequence(rng: &mut ChaCha8Rng, seq_len: usize, mode: PhaseMode) -> Result<PhaseSequence> {
    if seq_len == 0 {
        return Err(Error::input("sequence length must be >= 1"));
    }
    mode.validate()?;
    let src = SymbolSource::new(mode);
    let (phases, symbols) = (0..seq_len).map(|_| src.draw(rng)).unzip();
    Ok(PhaseSequence { phases, symbols })
}

/// Fading gains `H_k[m]` (`K x M`) and receiver noise `N[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Vec<Complex64>>,
    pub noise: Vec<Complex64>,
}

#[inline]
fn complex_gaussian(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

/// One node's gains over a frame. Ideal fading consumes no randomness.
pub fn draw_gains(rng: &mut ChaCha8Rng, seq_len: usize, fading: FadingMode) -> Vec<Complex64> {
    match fading {
        FadingMode::Ideal => vec![Complex64::new(1.0, 0.0); seq_len],
        FadingMode::RayleighInverted => (0..seq_len)
            .map(|_| complex_gaussian(rng, std::f64::consts::FRAC_1_SQRT_2))
            .collect(),
    }
}

/// Circularly-symmetric Gaussian noise with `E|N|^2 = noise_var`.
pub fn draw_noise(rng: &mut ChaCha8Rng, seq_len: usize, noise_var: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); seq_len];
    add_noise(rng, noise_var, &mut out);
    out
}

/// Adds the same noise [`draw_noise`] would produce onto `signal`.
pub(crate) fn add_noise(rng: &mut ChaCha8Rng, noise_var: f64, signal: &mut [Complex64]) {
    if noise_var == 0.0 {
        return;
    }
    let scale = (noise_var / 2.0).sqrt();
    for y in signal.iter_mut() {
        *y += complex_gaussian(rng, scale);
    }
}

/// Gains for all nodes followed by the noise, all from one stream.
pub fn draw_channel(rng: &mut ChaCha8Rng, cfg: &NetworkConfig) -> ChannelRealization {
    let gains = (0..cfg.nodes)
        .map(|_| draw_gains(rng, cfg.seq_len, cfg.fading))
        .collect();
    let noise = draw_noise(rng, cfg.seq_len, cfg.noise_var);
    ChannelRealization { gains, noise }
}

/// Whether node power `p` violates the peak constraint anywhere in the frame
/// once the gains are inverted.
pub fn violates_peak(p: f64, gains: &[Complex64], p_max: f64) -> bool {
    p > 0.0 && gains.iter().any(|h| p / h.norm_sqr() > p_max)
}

/// Everything that happened during one measurement instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRealization {
    pub readings: Vec<f64>,
    pub powers: Vec<f64>,
    pub sequences: Vec<PhaseSequence>,
    pub channel: ChannelRealization,
    pub received: Vec<Complex64>,
    /// Indices of nodes silenced by the peak power constraint, ascending.
    pub excluded: Vec<usize>,
}

impl FrameRealization {
    /// Per-symbol effective gain `H / |H|` of node `k`.
    pub fn effective_gain(&self, k: usize, m: usize) -> Complex64 {
        let h = self.channel.gains[k][m];
        h / h.norm()
    }

    pub fn is_retained(&self, k: usize) -> bool {
        self.excluded.binary_search(&k).is_err()
    }

    /// `sum` of the powers of the retained nodes.
    pub fn retained_power(&self) -> f64 {
        self.powers
            .iter()
            .enumerate()
            .filter(|(k, _)| self.is_retained(*k))
            .map(|(_, p)| p)
            .sum()
    }
}

fn check_shapes(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    readings: &[f64],
    sequences: &[PhaseSequence],
    channel: &ChannelRealization,
) -> Result<()> {
    let (k, m) = (cfg.nodes, cfg.seq_len);
    if func.nodes() != k || readings.len() != k || sequences.len() != k || channel.gains.len() != k {
        return Err(Error::input(format!(
            "frame needs {k} readings, sequences and gain rows"
        )));
    }
    if sequences.iter().any(|s| s.symbols.len() != m)
        || channel.gains.iter().any(|g| g.len() != m)
        || channel.noise.len() != m
    {
        return Err(Error::input(format!("frame vectors must have length M = {m}")));
    }
    Ok(())
}

/// Map readings to powers, apply the channel and superimpose at the receiver.
pub fn transmit_and_superimpose(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    readings: &[f64],
    sequences: Vec<PhaseSequence>,
    channel: ChannelRealization,
) -> Result<FrameRealization> {
    check_shapes(cfg, func, readings, &sequences, &channel)?;
    let powers = readings
        .iter()
        .enumerate()
        .map(|(k, &x)| func.power(k, x))
        .collect::<Result<Vec<_>>>()?;
    let mut received = vec![Complex64::new(0.0, 0.0); cfg.seq_len];
    let mut excluded = Vec::new();
    for k in 0..cfg.nodes {
        let gains = &channel.gains[k];
        if cfg.fading == FadingMode::RayleighInverted && violates_peak(powers[k], gains, cfg.p_max) {
            excluded.push(k);
            continue;
        }
        let amp = powers[k].sqrt();
        for (m, y) in received.iter_mut().enumerate() {
            let h = gains[m];
            // W = amp / |H| * S, and the channel multiplies by H.
            let w = sequences[k].symbols[m] * (amp / h.norm());
            *y += h * w;
        }
    }
    if excluded.len() == cfg.nodes {
        return Err(Error::AllNodesExcluded(cfg.nodes));
    }
    for (y, n) in received.iter_mut().zip(&channel.noise) {
        *y += n;
    }
    Ok(FrameRealization {
        readings: readings.to_vec(),
        powers,
        sequences,
        channel,
        received,
        excluded,
    })
}

/// Full frame for a given trial, each quantity from its own stream.
pub fn generate_frame(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    readings: &[f64],
    family: Family,
    trial: u64,
) -> Result<FrameRealization> {
    let seed = cfg.seed;
    let mut sequences = Vec::with_capacity(cfg.nodes);
    let mut gains = Vec::with_capacity(cfg.nodes);
    for k in 0..cfg.nodes as u64 {
        let mut rng = streams::stream(seed, family, trial, Role::Sequence, k);
        sequences.push(draw_sequence(&mut rng, cfg.seq_len, cfg.phase_mode)?);
        let mut rng = streams::stream(seed, family, trial, Role::Channel, k);
        gains.push(draw_gains(&mut rng, cfg.seq_len, cfg.fading));
    }
    let mut rng = streams::stream(seed, family, trial, Role::Noise, 0);
    let noise = draw_noise(&mut rng, cfg.seq_len, cfg.noise_var);
    transmit_and_superimpose(cfg, func, readings, sequences, ChannelRealization { gains, noise })
}

/// Which nodes made it into a lean frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalSummary {
    pub excluded: usize,
    /// Sum of the powers of the nodes that transmitted.
    pub retained_power: f64,
}

/// Noise-free part of the received vector for a trial, without storing the
/// frame. `out` must have length `M`. Bit-identical to the corresponding part
/// of [`generate_frame`].
pub fn superimpose_signal(
    cfg: &NetworkConfig,
    powers: &[f64],
    family: Family,
    trial: u64,
    out: &mut [Complex64],
) -> Result<SignalSummary> {
    debug_assert_eq!(out.len(), cfg.seq_len);
    let src = SymbolSource::new(cfg.phase_mode);
    out.fill(Complex64::new(0.0, 0.0));
    let mut excluded = 0;
    let mut retained_power = 0.0;
    for (k, &p) in powers.iter().enumerate() {
        let amp = p.sqrt();
        let mut seq_rng = streams::stream(cfg.seed, family, trial, Role::Sequence, k as u64);
        match cfg.fading {
            FadingMode::Ideal => {
                for y in out.iter_mut() {
                    *y += src.draw_symbol(&mut seq_rng) * amp;
                }
                retained_power += p;
            }
            FadingMode::RayleighInverted => {
                let mut ch_rng = streams::stream(cfg.seed, family, trial, Role::Channel, k as u64);
                let gains = draw_gains(&mut ch_rng, cfg.seq_len, cfg.fading);
                if violates_peak(p, &gains, cfg.p_max) {
                    excluded += 1;
                    continue;
                }
                for (y, h) in out.iter_mut().zip(&gains) {
                    let w = src.draw_symbol(&mut seq_rng) * (amp / h.norm());
                    *y += h * w;
                }
                retained_power += p;
            }
        }
    }
    if excluded == cfg.nodes {
        return Err(Error::AllNodesExcluded(cfg.nodes));
    }
    Ok(SignalSummary {
        excluded,
        retained_power,
    })
}

/// `||signal + N||^2` with the trial's noise stream at variance `noise_var`.
pub fn noisy_energy(
    cfg: &NetworkConfig,
    signal: &[Complex64],
    noise_var: f64,
    family: Family,
    trial: u64,
    scratch: &mut Vec<Complex64>,
) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(signal);
    let mut rng = streams::stream(cfg.seed, family, trial, Role::Noise, 0);
    add_noise(&mut rng, noise_var, scratch);
    scratch.iter().map(|y| y.norm_sqr()).sum()
}

/// Summary of one lean frame simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub energy: f64,
    pub excluded: usize,
    pub retained_power: f64,
}

/// Received energy of a trial without materializing the frame.
pub fn simulate_frame_energy(
    cfg: &NetworkConfig,
    powers: &[f64],
    family: Family,
    trial: u64,
) -> Result<EnergySample> {
    let mut signal = vec![Complex64::new(0.0, 0.0); cfg.seq_len];
    let summary = superimpose_signal(cfg, powers, family, trial, &mut signal)?;
    let mut scratch = Vec::with_capacity(cfg.seq_len);
    let energy = noisy_energy(cfg, &signal, cfg.noise_var, family, trial, &mut scratch);
    Ok(EnergySample {
        energy,
        excluded: summary.excluded,
        retained_power: summary.retained_power,
    })
}
