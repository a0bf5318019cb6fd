//! Achievable symmetric rates in bits per real channel use.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::effective_noise::{discrete_entropy, discrete_noise_pmf, EffectiveNoiseSpec};
use crate::error::{Error, Result};
use crate::integer_search::{max_beam_norm_sq, IntegerCoeffMatrix};
use crate::scalar_lattice::NestedLatticePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Qcof,
    Cof,
    Rqcof,
    Rcof,
    IfbfRqcof,
    IfbfRcof,
    CifbfRqcof,
    CifbfRcof,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Qcof,
        Scheme::Cof,
        Scheme::Rqcof,
        Scheme::Rcof,
        Scheme::IfbfRqcof,
        Scheme::IfbfRcof,
        Scheme::CifbfRqcof,
        Scheme::CifbfRcof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Qcof => "qcof",
            Scheme::Cof => "cof",
            Scheme::Rqcof => "rqcof",
            Scheme::Rcof => "rcof",
            Scheme::IfbfRqcof => "ifbf-rqcof",
            Scheme::IfbfRcof => "ifbf-rcof",
            Scheme::CifbfRqcof => "cifbf-rqcof",
            Scheme::CifbfRcof => "cifbf-rcof",
        }
    }

    /// Scalar (one-dimensional) shaping rather than high-dimensional lattices.
    pub fn is_quantized(self) -> bool {
        matches!(self, Scheme::Qcof | Scheme::Rqcof | Scheme::IfbfRqcof | Scheme::CifbfRqcof)
    }

    pub fn uses_beamforming(self) -> bool {
        matches!(self, Scheme::IfbfRqcof | Scheme::IfbfRcof | Scheme::CifbfRqcof | Scheme::CifbfRcof)
    }

    pub fn variant(self) -> Variant {
        if self.is_quantized() {
            Variant::Rqcof
        } else {
            Variant::Rcof
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme `{s}`")))
    }
}

/// Shaping flavour of the beamforming schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Rqcof,
    Rcof,
}

/// Terms that went into a rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateComponents {
    /// Largest entropy of the discrete noise over users, bits.
    pub max_entropy: Option<f64>,
    /// Largest effective noise variance over users.
    pub max_variance: f64,
    /// Backhaul cap, `None` when it does not apply.
    pub r0: Option<f64>,
    /// Rate lost to backhaul quantization noise.
    pub quantization_penalty: Option<f64>,
    /// Formula value before clamping at zero and capping at R₀.
    pub unclamped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub symmetric_rate: f64,
    pub components: RateComponents,
}

fn entropy_for(sigma2: f64, pair: &NestedLatticePair) -> f64 {
    discrete_entropy(&discrete_noise_pmf(&EffectiveNoiseSpec::new(sigma2, *pair)))
}

/// `log₂ p − H(z̃)` for noise variance `sigma2`, clamped at 0.
pub fn rate_qcof(sigma2: f64, pair: &NestedLatticePair) -> f64 {
    ((pair.p() as f64).log2() - entropy_for(sigma2, pair)).max(0.0)
}

/// `½ log₂(snr/σ²)`, clamped at 0.
pub fn rate_cof(sigma2: f64, snr: f64) -> f64 {
    (0.5 * (snr / sigma2).log2()).max(0.0)
}

fn check_r0(r0: f64) -> Result<()> {
    if r0.is_nan() || r0 < 0.0 {
        return Err(Error::InvalidBackhaul(r0));
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn capped(formula: f64, r0: f64) -> f64 {
    formula.min(r0).max(0.0)
}

/// `min{R₀, log₂ p − maxₗ H(z̃ₗ)}`.
pub fn rate_rqcof(per_user_sigma2: &[f64], pair: &NestedLatticePair, r0: f64) -> Result<RateReport> {
    check_r0(r0)?;
    let h = per_user_sigma2.iter().map(|&s| entropy_for(s, pair)).fold(0.0, f64::max);
    let unclamped = (pair.p() as f64).log2() - h;
    Ok(RateReport {
        scheme: Scheme::Rqcof,
        symmetric_rate: capped(unclamped, r0),
        components: RateComponents {
            max_entropy: Some(h),
            max_variance: max_of(per_user_sigma2),
            r0: Some(r0),
            quantization_penalty: None,
            unclamped,
        },
    })
}

/// `min{R₀, minₗ ½ log₂(snr/σ²ₗ)}`.
pub fn rate_rcof(per_user_sigma2: &[f64], snr: f64, r0: f64) -> Result<RateReport> {
    check_r0(r0)?;
    let worst = max_of(per_user_sigma2);
    let unclamped = 0.5 * (snr / worst).log2();
    Ok(RateReport {
        scheme: Scheme::Rcof,
        symmetric_rate: capped(unclamped, r0),
        components: RateComponents {
            max_entropy: None,
            max_variance: worst,
            r0: Some(r0),
            quantization_penalty: None,
            unclamped,
        },
    })
}

/// `2^{2R₀} − 1`, accurate for small `R₀`.
fn backhaul_gain(r0: f64) -> f64 {
    (2.0 * r0 * std::f64::consts::LN_2).exp_m1()
}

/// Backhaul quantization noise `SNR / 2^{2R₀}`.
pub fn quantization_noise_variance(snr: f64, r0: f64) -> f64 {
    snr * (-2.0 * r0 * std::f64::consts::LN_2).exp()
}

/// Factor `1 + 1/(2^{2R₀} − 1)` by which the stream power is deflated so the
/// quantized signal still meets the power constraint.
pub fn power_deflation(r0: f64) -> f64 {
    1.0 + 1.0 / backhaul_gain(r0)
}

fn check_ifbf(h: &DMatrix<f64>, a: &IntegerCoeffMatrix, variant: Variant) -> Result<f64> {
    let n = a.a.rows();
    match variant {
        Variant::Rqcof if !a.full_rank => return Err(Error::RankDeficient { rank: a.q.rank(), needed: n }),
        Variant::Rcof if a.a.determinant() == 0 => return Err(Error::RankDeficient { rank: n - 1, needed: n }),
        _ => {}
    }
    max_beam_norm_sq(h, &a.a)
}

fn ifbf_scheme(variant: Variant, compressed: bool) -> Scheme {
    match (variant, compressed) {
        (Variant::Rqcof, false) => Scheme::IfbfRqcof,
        (Variant::Rcof, false) => Scheme::IfbfRcof,
        (Variant::Rqcof, true) => Scheme::CifbfRqcof,
        (Variant::Rcof, true) => Scheme::CifbfRcof,
    }
}

/// Integer-forcing beamforming with unlimited backhaul.
///
/// With `M = maxₗ‖H⁻¹aₗ‖²` the stream power is `SNR/M`, which is the same as
/// unit-power streams seeing effective noise of variance `M` at SNR.
pub fn rate_ifbf(h: &DMatrix<f64>, a: &IntegerCoeffMatrix, snr: f64, variant: Variant) -> Result<RateReport> {
    let m = check_ifbf(h, a, variant)?;
    let (unclamped, max_entropy) = match variant {
        Variant::Rcof => (0.5 * (snr / m).log2(), None),
        Variant::Rqcof => {
            let pair = NestedLatticePair::from_snr(a.q.field(), snr)?;
            let ent = entropy_for(m, &pair);
            ((pair.p() as f64).log2() - ent, Some(ent))
        }
    };
    Ok(RateReport {
        scheme: ifbf_scheme(variant, false),
        symmetric_rate: unclamped.max(0.0),
        components: RateComponents { max_entropy, max_variance: m, r0: None, quantization_penalty: None, unclamped },
    })
}

/// Per-user effective variance of compressed IFBF in SNR units:
/// `M(1 + (1 + ‖hₗ‖²SNR)/(2^{2R₀} − 1))`.
pub fn cifbf_variances(h: &DMatrix<f64>, m: f64, snr: f64, r0: f64) -> Vec<f64> {
    let g = backhaul_gain(r0);
    h.row_iter().map(|row| m * (1.0 + (1.0 + row.norm_squared() * snr) / g)).collect()
}

/// Compressed IFBF over a backhaul of `r0` bits per real symbol.
pub fn rate_cifbf(h: &DMatrix<f64>, a: &IntegerCoeffMatrix, snr: f64, r0: f64, variant: Variant) -> Result<RateReport> {
    if !(r0 > 0.0) {
        return Err(Error::InvalidBackhaul(r0));
    }
    let m = check_ifbf(h, a, variant)?;
    let sig = cifbf_variances(h, m, snr, r0);
    let worst = max_of(&sig);
    let penalty = 0.5 * (worst / m).log2();
    let (unclamped, max_entropy) = match variant {
        Variant::Rcof => (0.5 * (snr / m).log2() - penalty, None),
        Variant::Rqcof => {
            let pair = NestedLatticePair::from_snr(a.q.field(), snr)?;
            let ent = sig.iter().map(|&s| entropy_for(s, &pair)).fold(0.0, f64::max);
            ((pair.p() as f64).log2() - ent, Some(ent))
        }
    };
    Ok(RateReport {
        scheme: ifbf_scheme(variant, true),
        symmetric_rate: unclamped.max(0.0),
        components: RateComponents {
            max_entropy,
            max_variance: worst,
            r0: Some(r0),
            quantization_penalty: Some(penalty),
            unclamped,
        },
    })
}
