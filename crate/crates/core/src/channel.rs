//! Channel models: Soft-Handoff, i.i.d. Gaussian fading and the real
//! expansion of complex matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Generator for trial `trial` of a run seeded with `seed`. Each trial gets its
/// own ChaCha stream, so trials can run in any order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Interference level of the Soft-Handoff model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// `Uniform(lo, hi)`, drawn for every subdiagonal entry or once per realization.
    Uniform { lo: f64, hi: f64, per_entry: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftHandoffParams {
    pub l: usize,
    pub gamma: Gamma,
}

impl SoftHandoffParams {
    pub fn new(l: usize, gamma: Gamma) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter("soft-handoff needs at least one cell".into()));
        }
        let ok = |g: f64| (0.0..=1.0).contains(&g);
        let valid = match gamma {
            Gamma::Fixed(g) => ok(g),
            Gamma::Uniform { lo, hi, .. } => ok(lo) && ok(hi) && lo <= hi,
        };
        if !valid {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma:?}")));
        }
        Ok(Self { l, gamma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexMatrix {
    pub fn new(re: DMatrix<f64>, im: DMatrix<f64>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::DimensionMismatch { expected: re.len(), found: im.len() });
        }
        if re.iter().chain(im.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("complex matrix has non-finite entries".into()));
        }
        Ok(Self { re, im })
    }

    pub fn from_real(re: DMatrix<f64>) -> Self {
        let im = DMatrix::zeros(re.nrows(), re.ncols());
        Self { re, im }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }
}

/// Lower bidiagonal matrix with unit diagonal and `γ` below it.
pub fn soft_handoff_matrix<R: Rng + ?Sized>(params: &SoftHandoffParams, rng: &mut R) -> ComplexMatrix {
    let l = params.l;
    let mut re = DMatrix::identity(l, l);
    let shared = match params.gamma {
        Gamma::Uniform { lo, hi, per_entry: false } => Some(draw(lo, hi, rng)),
        _ => None,
    };
    for i in 1..l {
        re[(i, i - 1)] = match params.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Uniform { lo, hi, per_entry: true } => draw(lo, hi, rng),
            Gamma::Uniform { .. } => shared.unwrap_or_default(),
        };
    }
    ComplexMatrix::from_real(re)
}

fn draw<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// `K × L` matrix of i.i.d. standard normal entries, filled row by row.
pub fn rayleigh_matrix<R: Rng + ?Sized>(k: usize, l: usize, rng: &mut R) -> DMatrix<f64> {
    let data: Vec<f64> = (0..k * l).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(k, l, &data)
}

/// Real expansion `[[Re, −Im], [Im, Re]]`.
pub fn complex_to_real(h: &ComplexMatrix) -> DMatrix<f64> {
    let (k, l) = h.shape();
    let mut out = DMatrix::zeros(2 * k, 2 * l);
    out.view_mut((0, 0), (k, l)).copy_from(&h.re);
    out.view_mut((0, l), (k, l)).copy_from(&(-&h.im));
    out.view_mut((k, 0), (k, l)).copy_from(&h.im);
    out.view_mut((k, l), (k, l)).copy_from(&h.re);
    out
}
