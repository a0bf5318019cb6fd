//! One-dimensional nested lattices `Λ_c = κℤ ⊃ Λ_s = κpℤ`, the modulation maps
//! between Z_p and the constellation `Λ_c ∩ V_s`, dithered channel inputs and
//! the receiver's scalar quantizer.
//!
//! All quantizers round half up (toward +∞), so every Voronoi cell is the
//! half-open interval `[λ - step/2, λ + step/2)`.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::zp_field::PrimeField;

/// Nearest point of `step·ℤ`, ties toward +∞.
#[inline]
pub fn quantize(x: f64, step: f64) -> f64 {
    step * (x / step + 0.5).floor()
}

/// `[x] mod step·ℤ`, landing in `[-step/2, step/2)`.
#[inline]
pub fn mod_lattice(x: f64, step: f64) -> f64 {
    debug_assert!(step > 0.0);
    let r = x - quantize(x, step);
    // guard against rounding pushing the result onto the open end
    if r >= step / 2.0 {
        r - step
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedLatticePair {
    field: PrimeField,
    kappa: f64,
}

impl NestedLatticePair {
    /// Scales the pair so uniform inputs over `V_s` have second moment `snr`,
    /// i.e. `κ = √(12·snr)/p`.
    pub fn from_snr(field: PrimeField, snr: f64) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
        }
        Ok(Self { field, kappa: (12.0 * snr).sqrt() / field.modulus() as f64 })
    }

    pub fn with_kappa(field: PrimeField, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { field, kappa })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn p(&self) -> u64 {
        self.field.modulus()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Generator `κp` of the shaping lattice.
    pub fn shaping_step(&self) -> f64 {
        self.kappa * self.p() as f64
    }

    /// Second moment of a uniform input over `V_s`.
    pub fn snr(&self) -> f64 {
        let s = self.shaping_step();
        s * s / 12.0
    }

    pub fn in_voronoi(&self, x: f64) -> bool {
        let half = self.shaping_step() / 2.0;
        (-half..half).contains(&x)
    }

    /// `m(u) = [κ g(u)] mod Λ_s`, computed on the integer representative.
    pub fn modulate(&self, u: u64) -> f64 {
        self.kappa * self.field.centered(u % self.p()) as f64
    }

    /// `m⁻¹(v) = g⁻¹([v/κ] mod pℤ)`.
    pub fn demodulate(&self, v: f64) -> Result<u64> {
        let t = v / self.kappa;
        let n = t.round();
        let p = self.p() as f64;
        if (t - n).abs() > 1e-9 || !(-p..p).contains(&(2.0 * n)) {
            return Err(Error::NotInConstellation(v));
        }
        Ok(self.field.natural_map(n as i64))
    }

    /// The `p` constellation points in increasing order.
    pub fn constellation(&self) -> Vec<f64> {
        let p = self.p() as i64;
        (-(p / 2)..p - p / 2).map(|n| self.kappa * n as f64).collect()
    }

    /// `x = [m(c) + d] mod Λ_s`.
    #[inline]
    pub fn channel_input(&self, c: u64, dither: f64) -> f64 {
        mod_lattice(self.modulate(c) + dither, self.shaping_step())
    }

    /// Index `n` of the fine-lattice point `κn = Q_{Λ_c}(x)`.
    #[inline]
    pub fn fine_index(&self, x: f64) -> i64 {
        (x / self.kappa + 0.5).floor() as i64
    }

    /// `u = m⁻¹([Q_{Λ_c}(αy − aᵀd)] mod Λ_s)`.
    ///
    /// `Q_{Λ_c}` yields `κn`; reducing mod `Λ_s` and demodulating is the same as
    /// reducing `n` mod `p`, which is done in integers.
    #[inline]
    pub fn receiver_quantize(&self, y: f64, alpha: f64, dither_combo: f64) -> u64 {
        self.field.natural_map(self.fine_index(alpha * y - dither_combo))
    }

    /// Discrete noise symbol `z̃ = m⁻¹([Q_{Λ_c}(ε)] mod Λ_s)` for a realized effective noise.
    #[inline]
    pub fn folded_noise(&self, eps: f64) -> u64 {
        self.field.natural_map(self.fine_index(eps))
    }
}

/// Counter-based dither generator: the value for `(stream, index)` is a pure
/// function of the seed, so transmitter and receiver reproduce it independently.
#[derive(Debug, Clone, Copy)]
pub struct DitherSource {
    seed: u64,
}

/// Maps 64 random bits to `[0, 1)` with 53-bit resolution.
#[inline]
pub(crate) fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl DitherSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn generator(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Dither `d_{stream,index}` uniform on `V_s` of `pair`.
    pub fn value(&self, pair: &NestedLatticePair, stream: u64, index: u64) -> f64 {
        let mut rng = self.generator(stream);
        // one u64 is two 32-bit words of keystream
        rng.set_word_pos(2 * index as u128);
        Self::to_voronoi(pair, rng.next_u64())
    }

    /// Sequential reader for one stream, starting at symbol 0.
    pub fn stream(&self, pair: NestedLatticePair, stream: u64) -> DitherStream {
        self.stream_from(pair, stream, 0)
    }

    /// Sequential reader for one stream, starting at symbol `start`.
    pub fn stream_from(&self, pair: NestedLatticePair, stream: u64, start: u64) -> DitherStream {
        let mut rng = self.generator(stream);
        rng.set_word_pos(2 * start as u128);
        DitherStream { rng, pair }
    }

    #[inline]
    fn to_voronoi(pair: &NestedLatticePair, bits: u64) -> f64 {
        let step = pair.shaping_step();
        let d = step * (unit_interval(bits) - 0.5);
        if d >= step / 2.0 {
            -step / 2.0
        } else {
            d
        }
    }
}

/// Iterator over one dither stream; item `i` equals `DitherSource::value(.., stream, i)`.
pub struct DitherStream {
    rng: ChaCha8Rng,
    pair: NestedLatticePair,
}

impl Iterator for DitherStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(DitherSource::to_voronoi(&self.pair, self.rng.next_u64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pair(p: u64, kappa: f64) -> NestedLatticePair {
        NestedLatticePair::with_kappa(PrimeField::new(p).unwrap(), kappa).unwrap()
    }

    #[test]
    fn mod_lattice_examples() {
        assert_abs_diff_eq!(mod_lattice(0.6, 1.0), -0.4, epsilon = 1e-12);
        assert_eq!(mod_lattice(2.5, 5.0), -2.5);
        assert_eq!(mod_lattice(-2.5, 5.0), -2.5);
        assert_abs_diff_eq!(mod_lattice(-7.3, 5.0), -2.3, epsilon = 1e-12);
    }

    #[test]
    fn modulate_examples() {
        assert_eq!(pair(5, 1.0).modulate(0), 0.0);
        assert_eq!(pair(5, 1.0).modulate(3), -2.0);
        // enumerate S for p = 7, κ = 0.5 and locate κ·6 mod 3.5
        let pr = pair(7, 0.5);
        let s = pr.constellation();
        assert_eq!(s, vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]);
        let target = mod_lattice(0.5 * 6.0, pr.shaping_step());
        assert_eq!(pr.modulate(6), target);
        assert_eq!(pr.modulate(6), -0.5);
    }

    #[test]
    fn demodulate_examples() {
        assert_eq!(pair(5, 1.0).demodulate(-2.0).unwrap(), 3);
        assert_eq!(pair(5, 1.0).demodulate(0.0).unwrap(), 0);
        let p251 = pair(251, 0.1);
        for u in 0..251 {
            assert_eq!(p251.demodulate(p251.modulate(u)).unwrap(), u);
        }
    }

    #[test]
    fn demodulate_rejects_off_constellation() {
        let pr = pair(5, 1.0);
        assert!(matches!(pr.demodulate(0.5), Err(Error::NotInConstellation(_))));
        // κn with n outside [-p/2, p/2)
        assert!(pr.demodulate(3.0).is_err());
        assert!(pr.demodulate(-3.0).is_err());
        assert!(pr.demodulate(-2.0 + 1e-12).is_ok());
    }

    #[test]
    fn channel_input_examples() {
        let pr = pair(5, 1.0);
        assert_eq!(pr.channel_input(0, 0.0), 0.0);
        assert_abs_diff_eq!(pr.channel_input(3, 1.7), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn from_snr_sets_second_moment() {
        let f = PrimeField::new(251).unwrap();
        let pr = NestedLatticePair::from_snr(f, 100.0).unwrap();
        assert_abs_diff_eq!(pr.snr(), 100.0, epsilon = 1e-9);
        assert!(NestedLatticePair::from_snr(f, 0.0).is_err());
    }

    #[test]
    fn dither_stream_matches_random_access() {
        let pr = pair(17, 0.3);
        let src = DitherSource::new(42);
        let seq: Vec<f64> = src.stream(pr, 3).take(50).collect();
        for (i, &d) in seq.iter().enumerate() {
            assert_eq!(d, src.value(&pr, 3, i as u64));
            assert!(pr.in_voronoi(d));
        }
        let other: Vec<f64> = src.stream(pr, 4).take(50).collect();
        assert_ne!(seq, other);
        let tail: Vec<f64> = src.stream_from(pr, 3, 20).take(30).collect();
        assert_eq!(tail, seq[20..]);
    }

    #[test]
    fn channel_input_second_moment_and_uniformity() {
        let pr = pair(5, 1.0);
        let src = DitherSource::new(7);
        let n = 1_000_000;
        let mut xs: Vec<f64> = src
            .stream(pr, 0)
            .take(n)
            .enumerate()
            .map(|(i, d)| pr.channel_input((i % 5) as u64, d))
            .collect();
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let expected = pr.snr();
        assert!((m2 / expected - 1.0).abs() < 0.01, "second moment {m2} vs {expected}");

        // Kolmogorov-Smirnov distance against Uniform(V_s)
        xs.sort_by(f64::total_cmp);
        let half = pr.shaping_step() / 2.0;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = (x + half) / (2.0 * half);
                (cdf - i as f64 / n as f64).abs().max((cdf - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
        assert!(xs.iter().all(|&x| pr.in_voronoi(x)));
    }

    #[test]
    fn noiseless_single_user_round_trip() {
        let pr = pair(5, 1.0);
        let x = pr.channel_input(2, 0.0);
        assert_eq!(pr.receiver_quantize(x, 1.0, 0.0), 2);
    }

    #[test]
    fn two_user_sum_is_field_addition() {
        let f = PrimeField::new(5).unwrap();
        let pr = pair(5, 1.0);
        let src = DitherSource::new(3);
        for c1 in 0..5 {
            for c2 in 0..5 {
                for i in 0..20u64 {
                    let d1 = src.value(&pr, 0, i);
                    let d2 = src.value(&pr, 1, i);
                    let y = pr.channel_input(c1, d1) + pr.channel_input(c2, d2);
                    assert_eq!(pr.receiver_quantize(y, 1.0, d1 + d2), f.add(c1, c2));
                }
            }
        }
    }

    // Exhaustive small cases: integer channel h = a, no noise, α = 1.
    #[test]
    fn integer_channel_decodes_linear_combination() {
        let src = DitherSource::new(11);
        for &p in &[2u64, 3, 5, 7] {
            let f = PrimeField::new(p).unwrap();
            let pr = pair(p, 0.7);
            for l in 1..=3usize {
                let coeffs: Vec<Vec<i64>> = match l {
                    1 => vec![vec![1], vec![-2], vec![3]],
                    2 => vec![vec![1, 1], vec![2, -1], vec![-3, 4]],
                    _ => vec![vec![1, 1, 1], vec![1, -2, 0], vec![2, 3, -1]],
                };
                for a in coeffs {
                    let total = (p as usize).pow(l as u32);
                    for idx in 0..total {
                        let c: Vec<u64> = (0..l).map(|k| (idx / (p as usize).pow(k as u32)) as u64 % p).collect();
                        let d: Vec<f64> = (0..l).map(|k| src.value(&pr, k as u64, idx as u64)).collect();
                        let y: f64 = (0..l).map(|k| a[k] as f64 * pr.channel_input(c[k], d[k])).sum();
                        let ad: f64 = (0..l).map(|k| a[k] as f64 * d[k]).sum();
                        let expected = (0..l).fold(0, |acc, k| f.add(acc, f.mul(f.natural_map(a[k]), c[k])));
                        assert_eq!(pr.receiver_quantize(y, 1.0, ad), expected);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mod_lattice_is_idempotent_and_in_range(x in -1e6f64..1e6, step in 1e-3f64..1e3) {
            let r = mod_lattice(x, step);
            prop_assert!(r >= -step / 2.0 && r < step / 2.0);
            prop_assert_eq!(mod_lattice(r, step), r);
        }

        #[test]
        fn modulation_is_a_bijection(pi in 0usize..5, kappa in 1e-3f64..10.0) {
            let p = [2u64, 3, 5, 17, 251][pi];
            let pr = pair(p, kappa);
            for u in 0..p {
                let v = pr.modulate(u);
                prop_assert!(pr.in_voronoi(v));
                prop_assert_eq!(pr.demodulate(v).unwrap(), u);
            }
        }
    }
}
