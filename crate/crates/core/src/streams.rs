//! Deterministic random streams and a fast unit phasor.
//!
//! Every random quantity in a simulation is drawn from its own ChaCha8
//! stream, keyed by `(root seed, family, trial, role, node)`. The key is
//! folded into a 64-bit seed with a splitmix64 chain:
//!
//! ```text
//! s = root ^ mix(family)
//! s = mix(s ^ trial)
//! s = mix(s ^ role)
//! s = mix(s ^ node)
//! ```
//!
//! so the result of a trial never depends on which worker ran it or in what
//! order. The two CoMAC estimators share family [`Family::Comac`] and hence
//! see identical frames.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which simulation a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Comac = 1,
    Tdma = 2,
    Analysis = 3,
    Validation = 4,
}

/// What a stream is used for within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Readings = 1,
    Sequence = 2,
    Channel = 3,
    Noise = 4,
    Bits = 5,
    Pilot = 6,
    Analytic = 7,
}

/// The splitmix64 finalizer.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(root: u64, family: Family, trial: u64, role: Role, node: u64) -> u64 {
    let mut s = root ^ splitmix64(family as u64);
    s = splitmix64(s ^ trial);
    s = splitmix64(s ^ role as u64);
    splitmix64(s ^ node)
}

pub fn stream(root: u64, family: Family, trial: u64, role: Role, node: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(root, family, trial, role, node))
}

/// Root seed for one point of a parameter sweep, so that sweep points do not
/// share streams unless a caller wants them to.
pub fn sub_seed(root: u64, tag: u64) -> u64 {
    splitmix64(root ^ splitmix64(tag.wrapping_add(0xA5A5_A5A5)))
}

const TABLE_BITS: u32 = 10;
const TABLE_LEN: usize = 1 << TABLE_BITS;
const FRAC_BITS: u32 = 53 - TABLE_BITS;

fn coarse_table() -> &'static [Complex64] {
    static TABLE: OnceLock<Vec<Complex64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..TABLE_LEN)
            .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / TABLE_LEN as f64))
            .collect()
    })
}

/// Phase in `[0, 2pi)` encoded by the top 53 bits of `bits`.
#[inline]
pub fn phase_from_bits(bits: u64) -> f64 {
    TAU * ((bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
}

/// `exp(i * phase_from_bits(bits))`, accurate to about 1e-15.
///
/// The top ten bits select a coarse table entry; the remaining angle is below
/// `2pi / 1024`, where short Taylor polynomials are exact to double precision.
#[inline]
pub fn unit_phasor(bits: u64) -> Complex64 {
    let table = coarse_table();
    let j = (bits >> (64 - TABLE_BITS)) as usize;
    let frac = ((bits >> 11) & ((1u64 << FRAC_BITS) - 1)) as f64 * (1.0 / (1u64 << FRAC_BITS) as f64);
    let d = frac * (TAU / TABLE_LEN as f64);
    let d2 = d * d;
    let c = 1.0 - d2 * (0.5 - d2 * (1.0 / 24.0 - d2 * (1.0 / 720.0)));
    let s = d * (1.0 - d2 * (1.0 / 6.0 - d2 * (1.0 / 120.0 - d2 / 5040.0)));
    table[j] * Complex64::new(c, s)
}

/// Symbols `exp(2 pi i j / L)` with exact conjugate symmetry.
pub fn discrete_alphabet(l: u32) -> Vec<Complex64> {
    let l = l as usize;
    let mut table = vec![Complex64::new(1.0, 0.0); l];
    for j in 1..=l / 2 {
        table[j] = Complex64::from_polar(1.0, TAU * j as f64 / l as f64);
        table[l - j] = table[j].conj();
    }
    if l.is_multiple_of(2) && l >= 2 {
        table[l / 2] = Complex64::new(-1.0, 0.0);
    }
    if l.is_multiple_of(4) {
        table[l / 4] = Complex64::new(0.0, 1.0);
        table[3 * l / 4] = Complex64::new(0.0, -1.0);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_per_key() {
        let base = stream_seed(7, Family::Comac, 3, Role::Sequence, 2);
        assert_ne!(base, stream_seed(7, Family::Comac, 3, Role::Sequence, 1));
        assert_ne!(base, stream_seed(7, Family::Comac, 2, Role::Sequence, 2));
        assert_ne!(base, stream_seed(7, Family::Tdma, 3, Role::Sequence, 2));
        assert_ne!(base, stream_seed(7, Family::Comac, 3, Role::Noise, 2));
        assert_ne!(base, stream_seed(8, Family::Comac, 3, Role::Sequence, 2));
        assert_eq!(base, stream_seed(7, Family::Comac, 3, Role::Sequence, 2));
    }

    #[test]
    fn phasor_matches_libm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..200_000 {
            let bits: u64 = rng.random();
            let want = Complex64::from_polar(1.0, phase_from_bits(bits));
            let got = unit_phasor(bits);
            worst = worst.max((got - want).norm()).max((got.norm() - 1.0).abs());
        }
        assert!(worst < 1e-14, "{worst:e}");
        assert_eq!(unit_phasor(0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn alphabet_is_conjugate_closed() {
        for l in [2u32, 4, 6, 8, 16] {
            let a = discrete_alphabet(l);
            for j in 1..l as usize {
                assert_eq!(a[j].conj(), a[l as usize - j]);
                assert!((a[j].norm() - 1.0).abs() < 1e-15);
            }
        }
        let q = discrete_alphabet(4);
        assert_eq!(q[1], Complex64::new(0.0, 1.0));
        assert_eq!(q[2], Complex64::new(-1.0, 0.0));
    }
}
