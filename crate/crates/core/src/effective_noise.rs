//! Effective noise of a compute-and-forward receiver.
//!
//! With MMSE scaling the residual `ε = αy − aᵀx` has variance
//! `aᵀ(SNR⁻¹I + hhᵀ)⁻¹a`. Rates are evaluated by treating `ε` as Gaussian with
//! that variance, folding it onto the fine lattice and then onto Z_p.

use crate::scalar_lattice::NestedLatticePair;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn as_f64(a: &[i64]) -> Vec<f64> {
    a.iter().map(|&v| v as f64).collect()
}

/// `σ² = aᵀ(SNR⁻¹I + hhᵀ)⁻¹a`, expanded with Sherman-Morrison as
/// `snr·‖a‖² − snr²(hᵀa)²/(1 + snr·‖h‖²)`.
pub fn effective_variance(h: &[f64], a: &[i64], snr: f64) -> f64 {
    assert_eq!(h.len(), a.len(), "h and a must have the same length");
    let a = as_f64(a);
    let ha = dot(h, &a);
    let hh = dot(h, h);
    let aa = dot(&a, &a);
    // written as a sum of two nonnegative terms to avoid cancellation:
    // snr·(‖a‖² − (hᵀa)²/‖h‖²) + (hᵀa)²·snr/(‖h‖²(1 + snr‖h‖²))
    if hh == 0.0 {
        return snr * aa;
    }
    let orth = (aa - ha * ha / hh).max(0.0);
    snr * orth + ha * ha * snr / (hh * (1.0 + snr * hh))
}

/// MMSE scaling `α* = snr·hᵀa / (1 + snr‖h‖²)`.
pub fn mmse_alpha(h: &[f64], a: &[i64], snr: f64) -> f64 {
    let a = as_f64(a);
    snr * dot(h, &a) / (1.0 + snr * dot(h, h))
}

/// Mean-squared error `E|αy − aᵀx|²` for an arbitrary `α`, inputs of power `snr`
/// and unit noise.
pub fn scaled_mse(h: &[f64], a: &[i64], snr: f64, alpha: f64) -> f64 {
    let a = as_f64(a);
    let diff: Vec<f64> = h.iter().zip(&a).map(|(hi, ai)| alpha * hi - ai).collect();
    snr * dot(&diff, &diff) + alpha * alpha
}

/// Effective noise of variance `variance` seen through a nested lattice pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveNoiseSpec {
    pub variance: f64,
    pub pair: NestedLatticePair,
}

impl EffectiveNoiseSpec {
    pub fn new(variance: f64, pair: NestedLatticePair) -> Self {
        assert!(variance.is_finite() && variance > 0.0, "variance must be finite and positive");
        Self { variance, pair }
    }
}

/// Probability mass of the folded noise `z̃` over Z_p, indexed by the natural
/// representative.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNoisePmf {
    probs: Vec<f64>,
}

impl DiscreteNoisePmf {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        Self { probs: counts.iter().map(|&c| c as f64 / total as f64).collect() }
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len());
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `P(lo ≤ N(0,1) < hi)` without cancellation in either tail.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        upper_tail(lo) - upper_tail(hi)
    } else if hi <= 0.0 {
        upper_tail(-hi) - upper_tail(-lo)
    } else {
        1.0 - upper_tail(hi) - upper_tail(-lo)
    }
}

/// Folded Gaussian pmf:
/// `P(u) = Σ_j P(κ(r(u) + jp) − κ/2 ≤ ε < κ(r(u) + jp) + κ/2)`.
pub fn discrete_noise_pmf(spec: &EffectiveNoiseSpec) -> DiscreteNoisePmf {
    let pair = spec.pair;
    let field = pair.field();
    let p = pair.p();
    let kappa = pair.kappa();
    let sigma = spec.variance.sqrt();
    let period = kappa * p as f64;
    let min_terms = (8.0 * sigma / period).ceil() as i64 + 2;

    let cell = |center: f64| normal_interval((center - kappa / 2.0) / sigma, (center + kappa / 2.0) / sigma);

    let mut probs = vec![0.0; p as usize];
    for (u, slot) in probs.iter_mut().enumerate() {
        let r = field.centered(u as u64) as f64;
        let mut acc = cell(kappa * r);
        let mut j = 1i64;
        loop {
            let up = cell(kappa * (r + (j * p as i64) as f64));
            let down = cell(kappa * (r - (j * p as i64) as f64));
            acc += up + down;
            if j >= min_terms && up + down < 1e-15 {
                break;
            }
            j += 1;
        }
        *slot = acc;
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= total);
    DiscreteNoisePmf { probs }
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn discrete_entropy(pmf: &DiscreteNoisePmf) -> f64 {
    -pmf.probs.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}
