//! Symbol-level downlink chains.
//!
//! The central processor precodes messages with `Q⁻¹` over Z_p, maps them to
//! dithered scalar lattice inputs and sends them through `y = Hv + z`. Each
//! user quantizes `αy − aᵀd` and reads its own message back, since row `l` of
//! `Q` applied to `Q⁻¹w` gives `wₗ`. The chain also recomputes the folded noise
//! from the realized effective noise and counts every symbol where the receiver
//! output disagrees with `(⊕ⱼ qₗⱼcⱼ) ⊕ z̃`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::trial_rng;
use crate::effective_noise::{mmse_alpha, DiscreteNoisePmf};
use crate::error::{Error, Result};
use crate::integer_search::{ifbf_coeffs, IntegerCoeffMatrix};
use crate::parallel::{map_indexed, Kahan};
use crate::rates::{power_deflation, quantization_noise_variance, Scheme};
use crate::scalar_lattice::{DitherSource, NestedLatticePair};
use crate::zp_field::{FieldMatrix, PrimeField};

/// Blocks simulated per independently seeded chunk.
const CHUNK_BLOCKS: usize = 1 << 14;

/// Receiver scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `α* = snr·hᵀa/(1 + snr‖h‖²)` for each user.
    Mmse,
    Fixed(f64),
}

/// Systematic linear code over Z_p, `c = m·G` with `G = [I | P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCode {
    generator: FieldMatrix,
}

impl LinearCode {
    /// Length-one code `c = m`.
    pub fn identity(field: PrimeField) -> Self {
        Self { generator: FieldMatrix::identity(field, 1) }
    }

    pub fn new(generator: FieldMatrix) -> Result<Self> {
        let k = generator.rows();
        if generator.cols() < k || k == 0 {
            return Err(Error::DimensionMismatch { expected: k, found: generator.cols() });
        }
        for r in 0..k {
            for c in 0..k {
                if generator.get(r, c) != u64::from(r == c) {
                    return Err(Error::InvalidParameter("generator is not systematic".into()));
                }
            }
        }
        Ok(Self { generator })
    }

    pub fn k(&self) -> usize {
        self.generator.rows()
    }

    pub fn n(&self) -> usize {
        self.generator.cols()
    }

    pub fn field(&self) -> PrimeField {
        self.generator.field()
    }

    pub fn encode(&self, msg: &[u64], out: &mut [u64]) {
        let f = self.field();
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = msg.iter().enumerate().fold(0, |acc, (r, &m)| f.add(acc, f.mul(m, self.generator.get(r, c))));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkConfig {
    pub l: usize,
    pub p: u64,
    pub snr: f64,
    pub r0: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Channel uses to simulate, rounded up to whole code blocks.
    pub n_symbols: usize,
    pub alpha: AlphaRule,
    pub code: Option<LinearCode>,
}

impl DownlinkConfig {
    pub fn new(l: usize, p: u64, snr: f64, scheme: Scheme, seed: u64, n_symbols: usize) -> Self {
        Self { l, p, snr, r0: f64::INFINITY, scheme, seed, n_symbols, alpha: AlphaRule::Mmse, code: None }
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn with_alpha(mut self, alpha: AlphaRule) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_code(mut self, code: LinearCode) -> Self {
        self.code = Some(code);
        self
    }

    fn validate(&self) -> Result<PrimeField> {
        if self.l == 0 || self.n_symbols == 0 {
            return Err(Error::InvalidParameter("L and n_symbols must be at least 1".into()));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::InvalidParameter(format!("snr must be positive, got {}", self.snr)));
        }
        let field = PrimeField::new(self.p)?;
        if let Some(code) = &self.code {
            if code.field() != field {
                return Err(Error::InvalidParameter("code is over a different field".into()));
            }
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    /// Message symbol error rate per user.
    pub ser: Vec<f64>,
    /// Empirical pmf of `u ⊖ (⊕ⱼ qₗⱼcⱼ)` per user.
    pub error_pmf: Vec<DiscreteNoisePmf>,
    /// Symbols where the receiver output differed from the field combination plus recomputed `z̃`.
    pub equivalence_violations: u64,
    /// Every message symbol of every user was recovered.
    pub messages_recovered: bool,
    /// Empirical `E|vₖ|²` per transmit antenna.
    pub antenna_power: Vec<f64>,
    /// Empirical `E[ε²]` per user.
    pub effective_noise_variance: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `‖HW − A‖∞` for beamformed chains, zero otherwise.
    pub integer_residual: f64,
    pub channel_uses: u64,
}

/// Everything the inner loop needs.
struct Setup<'a> {
    pair: NestedLatticePair,
    q: &'a FieldMatrix,
    q_inv: FieldMatrix,
    a: &'a IntegerCoeffMatrix,
    h: &'a DMatrix<f64>,
    /// Maps streams to antennas; `None` is the identity.
    precoder: Option<DMatrix<f64>>,
    alpha: Vec<f64>,
    quant_std: f64,
    code: LinearCode,
    seed: u64,
    blocks: usize,
}

#[derive(Default)]
struct Stats {
    symbol_errors: Vec<u64>,
    noise_counts: Vec<Vec<u64>>,
    violations: u64,
    power: Vec<Kahan>,
    eps_sq: Vec<Kahan>,
}

impl Setup<'_> {
    fn users(&self) -> usize {
        self.h.nrows()
    }

    fn streams(&self) -> usize {
        self.a.a.cols()
    }

    fn antennas(&self) -> usize {
        self.h.ncols()
    }

    fn run(&self) -> ChainResult {
        let chunks = self.blocks.div_ceil(CHUNK_BLOCKS);
        let parts = map_indexed(chunks, |c| self.chunk(c));

        let (users, antennas) = (self.users(), self.antennas());
        let p = self.pair.p() as usize;
        let mut total = Stats {
            symbol_errors: vec![0; users],
            noise_counts: vec![vec![0; p]; users],
            violations: 0,
            power: vec![Kahan::default(); antennas],
            eps_sq: vec![Kahan::default(); users],
        };
        for part in parts {
            total.violations += part.violations;
            for u in 0..users {
                total.symbol_errors[u] += part.symbol_errors[u];
                for (t, x) in total.noise_counts[u].iter_mut().zip(&part.noise_counts[u]) {
                    *t += x;
                }
                total.eps_sq[u].add(part.eps_sq[u].value());
            }
            for k in 0..antennas {
                total.power[k].add(part.power[k].value());
            }
        }
        let uses = (self.blocks * self.code.n()) as u64;
        let msgs = (self.blocks * self.code.k()) as f64;
        ChainResult {
            ser: total.symbol_errors.iter().map(|&e| e as f64 / msgs).collect(),
            error_pmf: total.noise_counts.iter().map(|c| DiscreteNoisePmf::from_counts(c)).collect(),
            equivalence_violations: total.violations,
            messages_recovered: total.symbol_errors.iter().all(|&e| e == 0),
            antenna_power: total.power.iter().map(|k| k.value() / uses as f64).collect(),
            effective_noise_variance: total.eps_sq.iter().map(|k| k.value() / uses as f64).collect(),
            alpha: self.alpha.clone(),
            integer_residual: 0.0,
            channel_uses: uses,
        }
    }

    fn chunk(&self, c: usize) -> Stats {
        let field = self.pair.field();
        let p = self.pair.p();
        let (users, streams, antennas) = (self.users(), self.streams(), self.antennas());
        let (k, n) = (self.code.k(), self.code.n());
        let first = c * CHUNK_BLOCKS;
        let count = CHUNK_BLOCKS.min(self.blocks - first);

        let mut rng = trial_rng(self.seed, c as u64);
        let dither_src = DitherSource::new(self.seed.rotate_left(17) ^ 0xd1b5_4a32_d192_ed03);
        let mut dithers: Vec<_> = (0..streams)
            .map(|j| dither_src.stream_from(self.pair, j as u64, (first * n) as u64))
            .collect();

        let mut stats = Stats {
            symbol_errors: vec![0; users],
            noise_counts: vec![vec![0; p as usize]; users],
            violations: 0,
            power: vec![Kahan::default(); antennas],
            eps_sq: vec![Kahan::default(); users],
        };

        let mut w = vec![vec![0u64; k]; users];
        let mut mu = vec![vec![0u64; k]; streams];
        let mut cw = vec![vec![0u64; n]; streams];
        let mut target = vec![vec![0u64; n]; users];
        let mut x = vec![0.0; streams];
        let mut d = vec![0.0; streams];
        let mut v = vec![0.0; antennas];

        for _ in 0..count {
            for wl in w.iter_mut() {
                for s in wl.iter_mut() {
                    *s = rng.random_range(0..p);
                }
            }
            // μ = Q⁻¹w position by position
            for pos in 0..k {
                for j in 0..streams {
                    mu[j][pos] = (0..users).fold(0, |acc, l| field.add(acc, field.mul(self.q_inv.get(j, l), w[l][pos])));
                }
            }
            for j in 0..streams {
                self.code.encode(&mu[j], &mut cw[j]);
            }
            for l in 0..users {
                self.code.encode(&w[l], &mut target[l]);
            }

            for t in 0..n {
                for j in 0..streams {
                    d[j] = dithers[j].next().unwrap_or_default();
                    x[j] = self.pair.channel_input(cw[j][t], d[j]);
                }
                match &self.precoder {
                    None => v.copy_from_slice(&x),
                    Some(wm) => {
                        for (kk, vk) in v.iter_mut().enumerate() {
                            *vk = (0..streams).map(|j| wm[(kk, j)] * x[j]).sum();
                        }
                    }
                }
                if self.quant_std > 0.0 {
                    for vk in v.iter_mut() {
                        *vk += self.quant_std * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                for (kk, vk) in v.iter().enumerate() {
                    stats.power[kk].add(vk * vk);
                }

                for l in 0..users {
                    let z: f64 = rng.sample(StandardNormal);
                    let y: f64 = (0..antennas).map(|kk| self.h[(l, kk)] * v[kk]).sum::<f64>() + z;
                    let a = self.a.row(l);
                    let alpha = self.alpha[l];
                    let combo: f64 = (0..streams).map(|j| a[j] as f64 * d[j]).sum();
                    let u = self.pair.receiver_quantize(y, alpha, combo);

                    let eps = alpha * y - (0..streams).map(|j| a[j] as f64 * x[j]).sum::<f64>();
                    let zt = self.pair.folded_noise(eps);
                    let lin = (0..streams).fold(0, |acc, j| field.add(acc, field.mul(self.q.get(l, j), cw[j][t])));
                    if u != field.add(lin, zt) {
                        stats.violations += 1;
                    }
                    stats.eps_sq[l].add(eps * eps);
                    stats.noise_counts[l][field.sub(u, lin) as usize] += 1;
                    // the combination the user decodes is its own codeword
                    debug_assert_eq!(lin, target[l][t]);
                    if t < k && u != w[l][t] {
                        stats.symbol_errors[l] += 1;
                    }
                }
            }
        }
        stats
    }
}

fn code_for(cfg: &DownlinkConfig, field: PrimeField) -> LinearCode {
    cfg.code.clone().unwrap_or_else(|| LinearCode::identity(field))
}

fn blocks_for(cfg: &DownlinkConfig, code: &LinearCode) -> usize {
    cfg.n_symbols.div_ceil(code.n())
}

/// RQCoF chain for channel `h` (users × antennas) and coefficients `a`.
pub fn run_rqcof_chain(cfg: &DownlinkConfig, h: &DMatrix<f64>, a: &IntegerCoeffMatrix) -> Result<ChainResult> {
    let field = cfg.validate()?;
    let l = cfg.l;
    if h.shape() != (l, l) || a.a.rows() != l || a.a.cols() != l {
        return Err(Error::DimensionMismatch { expected: l, found: h.nrows() });
    }
    if a.q.field() != field {
        return Err(Error::InvalidParameter("coefficients reduced over a different field".into()));
    }
    let q_inv = a.q.invert().map_err(|_| Error::RankDeficient { rank: a.q.rank(), needed: l })?;
    let pair = NestedLatticePair::from_snr(field, cfg.snr)?;
    let alpha = (0..l)
        .map(|u| match cfg.alpha {
            AlphaRule::Mmse => {
                let hr: Vec<f64> = h.row(u).iter().copied().collect();
                mmse_alpha(&hr, a.row(u), cfg.snr)
            }
            AlphaRule::Fixed(v) => v,
        })
        .collect();
    let code = code_for(cfg, field);
    let setup = Setup {
        pair,
        q: &a.q,
        q_inv,
        a,
        h,
        precoder: None,
        alpha,
        quant_std: 0.0,
        blocks: blocks_for(cfg, &code),
        code,
        seed: cfg.seed,
    };
    Ok(setup.run())
}

/// IFBF chain, or CIFBF when the scheme is compressed and `r0` is finite.
///
/// Coefficients come from [`ifbf_coeffs`]; the beamformer is `W = H⁻¹A` and
/// streams carry power `SNR/M` with `M = maxₗ‖H⁻¹aₗ‖²`, deflated by
/// `1 + 1/(2^{2R₀} − 1)` when backhaul quantization noise of variance
/// `SNR/2^{2R₀}` is added to every antenna signal. Users scale by `α = 1`.
pub fn run_ifbf_chain(cfg: &DownlinkConfig, h: &DMatrix<f64>) -> Result<ChainResult> {
    let field = cfg.validate()?;
    let l = cfg.l;
    if h.shape() != (l, l) {
        return Err(Error::DimensionMismatch { expected: l, found: h.nrows() });
    }
    let a = ifbf_coeffs(h, field, 0.75)?;
    let inv = h.clone().try_inverse().ok_or(Error::SingularChannel)?;
    let af = a.a.to_f64();
    let w = &inv * &af;
    let residual = (h * &w - &af).abs().max();
    let m = w.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);

    let compressed = matches!(cfg.scheme, Scheme::CifbfRqcof | Scheme::CifbfRcof) && cfg.r0.is_finite();
    let (stream_snr, quant_var) = if compressed {
        if !(cfg.r0 > 0.0) {
            return Err(Error::InvalidBackhaul(cfg.r0));
        }
        (cfg.snr / (m * power_deflation(cfg.r0)), quantization_noise_variance(cfg.snr, cfg.r0))
    } else {
        (cfg.snr / m, 0.0)
    };
    let q_inv = a.q.invert().map_err(|_| Error::RankDeficient { rank: a.q.rank(), needed: l })?;
    let code = code_for(cfg, field);
    let alpha = match cfg.alpha {
        AlphaRule::Fixed(v) => vec![v; l],
        AlphaRule::Mmse => vec![1.0; l],
    };
    let setup = Setup {
        pair: NestedLatticePair::from_snr(field, stream_snr)?,
        q: &a.q,
        q_inv,
        a: &a,
        h,
        precoder: Some(w),
        alpha,
        quant_std: quant_var.sqrt(),
        blocks: blocks_for(cfg, &code),
        code,
        seed: cfg.seed,
    };
    let mut out = setup.run();
    out.integer_residual = residual;
    Ok(out)
}
