//! The fusion-center receiver: energy detection, the exact noise
//! decomposition of a simulated frame, and the calibrated estimators.
//!
//! The received energy splits as
//! `||Y||^2 = M * sum_k P_k + D1 + D2 + D3` with
//! `D1 = sum_{k != l} sqrt(P_k P_l) S_k^H S_l` (cross-sequence interference),
//! `D2 = 2 sum_k sqrt(P_k) Re{S_k^H N}` and `D3 = ||N||^2`.
//! Estimators see only the scalar energy; the decomposition needs the whole
//! frame and exists for validation.

use num_complex::Complex64;
use serde::Serialize;

use crate::analysis;
use crate::error::{Error, Result};
use crate::model::{EstimateResult, FunctionKind, NetworkConfig, NomographicFunction};
use crate::sequences_channel::FrameRealization;

pub fn received_energy(frame: &FrameRealization) -> f64 {
    frame.received.iter().map(|y| y.norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseDecomposition {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta_total: f64,
}

/// Term-by-term evaluation of the three noise components, over retained
/// nodes and with the effective symbols `(H / |H|) S`.
pub fn decompose_noise(frame: &FrameRealization) -> NoiseDecomposition {
    let m_len = frame.received.len();
    let retained: Vec<usize> = (0..frame.powers.len()).filter(|&k| frame.is_retained(k)).collect();
    let effective: Vec<Vec<Complex64>> = retained
        .iter()
        .map(|&k| {
            (0..m_len)
                .map(|m| frame.effective_gain(k, m) * frame.sequences[k].symbols[m])
                .collect()
        })
        .collect();
    let amp: Vec<f64> = retained.iter().map(|&k| frame.powers[k].sqrt()).collect();

    // S_k^H S_l + S_l^H S_k = 2 Re{S_k^H S_l}, so the ordered double sum is
    // twice the sum over k < l.
    let mut delta1 = 0.0;
    for i in 0..retained.len() {
        for j in i + 1..retained.len() {
            let inner: Complex64 = effective[i]
                .iter()
                .zip(&effective[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            delta1 += 2.0 * amp[i] * amp[j] * inner.re;
        }
    }
    let noise = &frame.channel.noise;
    let mut delta2 = 0.0;
    for (i, s) in effective.iter().enumerate() {
        let inner: Complex64 = s.iter().zip(noise).map(|(a, n)| a.conj() * n).sum();
        delta2 += 2.0 * amp[i] * inner.re;
    }
    let delta3: f64 = noise.iter().map(|n| n.norm_sqr()).sum();
    NoiseDecomposition {
        delta1,
        delta2,
        delta3,
        delta_total: delta1 + delta2 + delta3,
    }
}

fn require_kind(func: &NomographicFunction, geometric: bool) -> Result<()> {
    let ok = match func.kind() {
        FunctionKind::ArithmeticMean => !geometric,
        FunctionKind::GeometricMean { .. } => geometric,
        _ => false,
    };
    if !ok {
        let want = if geometric { "geometric" } else { "arithmetic" };
        return Err(Error::input(format!("{want}-mean estimator applied to {:?}", func.kind())));
    }
    Ok(())
}

/// `psi(h(energy)) - sigma_N^2 / (alpha K)`; the subtracted term is the mean
/// of the post-processed pure-noise energy.
pub fn estimate_arithmetic(cfg: &NetworkConfig, func: &NomographicFunction, energy: f64) -> Result<f64> {
    require_kind(func, false)?;
    let raw = func.postprocess(func.unmap_energy(energy, cfg.seq_len));
    Ok(raw - cfg.noise_var / (func.alpha() * func.nodes() as f64))
}

/// `psi(h(energy)) / lambda_M`.
pub fn estimate_geometric(cfg: &NetworkConfig, func: &NomographicFunction, energy: f64) -> Result<f64> {
    require_kind(func, true)?;
    let lambda = analysis::lambda_m(cfg, func)?;
    Ok(func.postprocess(func.unmap_energy(energy, cfg.seq_len)) / lambda)
}

/// `psi(h(energy)) / denominator`, where the denominator is a Monte Carlo
/// estimate of `E{psi(D / (alpha M))}` that only a simulator can know.
pub fn estimate_unbiased_geometric_reference(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    energy: f64,
    mc_denominator: f64,
) -> Result<f64> {
    require_kind(func, true)?;
    if !(mc_denominator > 0.0 && mc_denominator.is_finite()) {
        return Err(Error::input(format!(
            "reference denominator must be positive, got {mc_denominator}"
        )));
    }
    Ok(func.postprocess(func.unmap_energy(energy, cfg.seq_len)) / mc_denominator)
}

/// `psi(D / (alpha M))` for a noise realization, i.e. the factor by which the
/// uncorrected geometric estimate overshoots `f(x)`.
pub fn geometric_noise_factor(cfg: &NetworkConfig, func: &NomographicFunction, delta: f64) -> f64 {
    let a = func.geometric_base().unwrap_or(std::f64::consts::E);
    let k = func.nodes() as f64;
    (delta * a.ln() / (func.alpha() * k * cfg.seq_len as f64)).exp()
}

/// The calibrated estimate for arithmetic and geometric means, plain
/// `psi(h(energy))` for the other kinds.
pub fn estimate(cfg: &NetworkConfig, func: &NomographicFunction, energy: f64) -> Result<f64> {
    match func.kind() {
        FunctionKind::ArithmeticMean => estimate_arithmetic(cfg, func, energy),
        FunctionKind::GeometricMean { .. } => estimate_geometric(cfg, func, energy),
        _ => Ok(func.postprocess(func.unmap_energy(energy, cfg.seq_len))),
    }
}

/// `(f_hat - f(x)) / (f_max - f_min)`.
pub fn normalized_error(func: &NomographicFunction, f_hat: f64, x: &[f64]) -> Result<f64> {
    Ok((f_hat - func.evaluate(x)?) / func.error_range())
}

/// Receiver processing of a simulated frame.
pub fn estimate_frame(
    cfg: &NetworkConfig,
    func: &NomographicFunction,
    frame: &FrameRealization,
) -> Result<EstimateResult> {
    let f_hat = estimate(cfg, func, received_energy(frame))?;
    Ok(EstimateResult::new(
        func,
        f_hat,
        func.evaluate(&frame.readings)?,
        frame.excluded.len(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReadingRange, SensingRange};
    use crate::sequences_channel::{draw_noise, generate_frame};
    use crate::streams::{self, Family, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example1(k: usize, m: usize, noise_var: f64) -> (NetworkConfig, NomographicFunction) {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        let r = ReadingRange::new(1.0, 30.0, &s).unwrap();
        let cfg = NetworkConfig::new(k, m, 1.0, noise_var, s, r).unwrap();
        let f = NomographicFunction::new(FunctionKind::ArithmeticMean, &cfg).unwrap();
        (cfg, f)
    }

    fn example2(k: usize, m: usize, noise_var: f64, floor: f64) -> (NetworkConfig, NomographicFunction) {
        let s = SensingRange::new(-55.0, 130.0).unwrap();
        let r = ReadingRange::new(1.0, 30.0, &s).unwrap();
        let cfg = NetworkConfig::new(k, m, 1.0, noise_var, s, r).unwrap();
        let f = NomographicFunction::new(FunctionKind::GeometricMean { base: 2.0, floor }, &cfg)
            .unwrap();
        (cfg, f)
    }

    #[test]
    fn energy_examples() {
        let (cfg, f) = example1(1, 10, 0.0);
        let frame = generate_frame(&cfg, &f, &[130.0], Family::Comac, 0).unwrap();
        assert!((received_energy(&frame) - 10.0).abs() < 1e-12);
        let mut zero = frame.clone();
        zero.received.iter_mut().for_each(|y| *y = Complex64::new(0.0, 0.0));
        assert_eq!(received_energy(&zero), 0.0);
    }

    #[test]
    fn energy_identity_holds() {
        let (cfg, f) = example1(6, 40, 0.8);
        let cfg = cfg.with_seed(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(1.0..30.0)).collect();
            let frame = generate_frame(&cfg, &f, &x, Family::Comac, trial).unwrap();
            let d = decompose_noise(&frame);
            let lhs = received_energy(&frame);
            let rhs = 40.0 * frame.retained_power() + d.delta_total;
            assert!((lhs - rhs).abs() <= 1e-9 * lhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn decomposition_degenerate_cases() {
        let (cfg, f) = example1(1, 20, 1.0);
        let frame = generate_frame(&cfg, &f, &[10.0], Family::Comac, 0).unwrap();
        assert_eq!(decompose_noise(&frame).delta1, 0.0);
        let (cfg, f) = example1(4, 20, 0.0);
        let frame = generate_frame(&cfg, &f, &[1.0, 5.0, 9.0, 20.0], Family::Comac, 0).unwrap();
        let d = decompose_noise(&frame);
        assert_eq!((d.delta2, d.delta3), (0.0, 0.0));
        let cross = received_energy(&frame) - 20.0 * frame.powers.iter().sum::<f64>();
        assert!((cross - d.delta1).abs() < 1e-9 * received_energy(&frame));
    }

    #[test]
    fn arithmetic_noiseless_and_mean_energy() {
        let (cfg, f) = example1(3, 8, 0.0);
        let frame = generate_frame(&cfg, &f, &[10.0, 20.0, 30.0], Family::Comac, 0).unwrap();
        let d = decompose_noise(&frame);
        let clean = received_energy(&frame) - d.delta1;
        assert!((estimate_arithmetic(&cfg, &f, clean).unwrap() - 20.0).abs() < 1e-12);

        let (cfg, f) = example1(3, 8, 2.0);
        let p: f64 = [10.0, 20.0, 30.0].iter().map(|&x| f.power(0, x).unwrap()).sum();
        let e = 8.0 * p + 8.0 * 2.0;
        assert!((estimate_arithmetic(&cfg, &f, e).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_error_identity() {
        let (cfg, f) = example1(5, 30, 1.3);
        let x = [3.0, 7.0, 11.0, 17.0, 29.0];
        for trial in 0..20 {
            let frame = generate_frame(&cfg, &f, &x, Family::Comac, trial).unwrap();
            let d = decompose_noise(&frame);
            let err = estimate_arithmetic(&cfg, &f, received_energy(&frame)).unwrap()
                - f.evaluate(&x).unwrap();
            let want = (d.delta_total - 30.0 * 1.3) / (f.alpha() * 5.0 * 30.0);
            assert!((err - want).abs() < 1e-9, "{err} vs {want}");
        }
    }

    #[test]
    fn geometric_noiseless_and_identity() {
        let (cfg, f) = example2(2, 6, 0.0, 1.0);
        let frame = generate_frame(&cfg, &f, &[4.0, 16.0], Family::Comac, 0).unwrap();
        let clean = received_energy(&frame) - decompose_noise(&frame).delta1;
        assert!((estimate_geometric(&cfg, &f, clean).unwrap() - 8.0).abs() < 1e-12);

        let (cfg, f) = example2(4, 25, 0.9, 0.5);
        let x = [1.5, 4.0, 9.0, 27.0];
        let lambda = analysis::lambda_m(&cfg, &f).unwrap();
        for trial in 0..20 {
            let frame = generate_frame(&cfg, &f, &x, Family::Comac, trial).unwrap();
            let d = decompose_noise(&frame);
            let got = estimate_geometric(&cfg, &f, received_energy(&frame)).unwrap();
            let want = f.evaluate(&x).unwrap() * geometric_noise_factor(&cfg, &f, d.delta_total) / lambda;
            assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn pure_noise_factor_mean_matches_lambda() {
        // Only D3 present: powers zero means f is the floor, but the factor
        // itself does not depend on x.
        let (cfg, f) = example2(5, 5, 0.0, 0.5);
        let alpha = f.alpha();
        let noise_var = alpha * 5.0 / 2f64.ln(); // exponent rate 1 per unit D3/M
        let cfg = cfg.with_noise_var(noise_var);
        let lambda = analysis::lambda_m(&cfg, &f).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        for t in 0..n {
            let mut rng = streams::stream(5, Family::Validation, t, Role::Noise, 0);
            let d3: f64 = draw_noise(&mut rng, 5, noise_var).iter().map(|z| z.norm_sqr()).sum();
            sum += geometric_noise_factor(&cfg, &f, d3);
        }
        let mean = sum / n as f64;
        assert!((mean / lambda - 1.0).abs() < 0.01, "{mean} vs {lambda}");
    }

    #[test]
    fn reference_estimator_contract() {
        let (cfg, f) = example2(2, 6, 0.0, 1.0);
        let e = 3.7;
        let plain = estimate_geometric(&cfg, &f, e).unwrap();
        assert_eq!(estimate_unbiased_geometric_reference(&cfg, &f, e, 1.0).unwrap(), plain);
        assert_eq!(estimate_unbiased_geometric_reference(&cfg, &f, e, 2.0).unwrap(), plain / 2.0);
        assert!(estimate_unbiased_geometric_reference(&cfg, &f, e, 0.0).is_err());
        assert!(estimate_arithmetic(&cfg, &f, e).is_err());
    }

    #[test]
    fn normalized_error_examples() {
        let (_, f) = example1(2, 1, 0.0);
        let x = [10.0, 20.0];
        assert_eq!(normalized_error(&f, 15.0, &x).unwrap(), 0.0);
        assert!((normalized_error(&f, 15.0 + 18.5, &x).unwrap() - 0.1).abs() < 1e-15);
        let (_, g) = example2(2, 1, 0.0, 0.5);
        let x = [4.0, 16.0];
        assert!((normalized_error(&g, 8.0 + 12.95, &x).unwrap() - 0.1).abs() < 1e-12);
    }
}
