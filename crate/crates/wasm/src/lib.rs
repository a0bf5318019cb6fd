//! Browser bindings for three small demos: backhaul-limited rate curves on the
//! Soft-Handoff channel, the folded noise pmf, and 2D lattice reduction.
//!
//! The `*_impl` functions are plain Rust so they can be tested natively.

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use rcof_core::channel::Gamma;
use rcof_core::effective_noise::{discrete_entropy, discrete_noise_pmf, EffectiveNoiseSpec};
use rcof_core::experiments::{run_sweep, ChannelSpec, CoefficientMode, ExperimentSpec, SelectionMode, SweepAxis};
use rcof_core::integer_search::{lll_reduce, shortest_vector_enumerate, LatticeBasis};
use rcof_core::rates::Scheme;
use rcof_core::scalar_lattice::NestedLatticePair;
use rcof_core::zp_field::PrimeField;

/// Schemes plotted by the rate demo, in output order.
pub const CURVE_SCHEMES: [Scheme; 4] = [Scheme::Rcof, Scheme::Rqcof, Scheme::IfbfRcof, Scheme::CifbfRcof];

fn js_err(e: rcof_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rates in bits per complex symbol for each scheme of [`CURVE_SCHEMES`] at
/// every R₀ in `r0_grid`, scheme-major.
pub fn rate_curves_impl(gamma: f64, snr_db: f64, cells: usize, p: u64, r0_grid: &[f64]) -> rcof_core::Result<Vec<f64>> {
    let spec = ExperimentSpec {
        name: "demo".into(),
        schemes: CURVE_SCHEMES.to_vec(),
        channel: ChannelSpec::SoftHandoff { l: cells, gamma: Gamma::Fixed(gamma), complex: true },
        axis: SweepAxis::R0,
        grid: r0_grid.to_vec(),
        fixed: snr_db,
        p,
        trials: 1,
        seed: 0,
        selection: SelectionMode::None,
        coefficients: CoefficientMode::Independent,
        candidate_budget: 100,
        output: None,
        overlays: Vec::new(),
    };
    let curves = run_sweep(&spec)?;
    Ok(CURVE_SCHEMES
        .iter()
        .flat_map(|s| curves.curve(s.name()).map(|c| c.points.iter().map(|pt| pt.mean_rate).collect::<Vec<_>>()).unwrap_or_default())
        .collect())
}

#[wasm_bindgen]
pub fn rate_curves(gamma: f64, snr_db: f64, cells: usize, p: u32, r0_grid: &[f64]) -> Result<Vec<f64>, JsError> {
    rate_curves_impl(gamma, snr_db, cells, p.into(), r0_grid).map_err(js_err)
}

#[wasm_bindgen]
pub fn curve_labels() -> Vec<String> {
    CURVE_SCHEMES.iter().map(|s| s.name().to_string()).collect()
}

/// Pmf of the folded noise over Z_p for noise std `ratio·κ`; the last entry is the entropy in bits.
pub fn noise_pmf_impl(p: u64, ratio: f64) -> rcof_core::Result<Vec<f64>> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(rcof_core::Error::InvalidParameter(format!("σ/κ must be positive, got {ratio}")));
    }
    let pair = NestedLatticePair::with_kappa(PrimeField::new(p)?, 1.0)?;
    let pmf = discrete_noise_pmf(&EffectiveNoiseSpec::new(ratio * ratio, pair));
    let mut out = pmf.probs().to_vec();
    out.push(discrete_entropy(&pmf));
    Ok(out)
}

#[wasm_bindgen]
pub fn noise_pmf(p: u32, ratio: f64) -> Result<Vec<f64>, JsError> {
    noise_pmf_impl(p.into(), ratio).map_err(js_err)
}

/// LLL on the columns `b1`, `b2` of a 2×2 basis. Returns the reduced columns,
/// the unimodular transform (row-major) and the shortest vector's coordinates:
/// `[r1x, r1y, r2x, r2y, u11, u12, u21, u22, z1, z2]`.
pub fn reduce_2d_impl(b1x: f64, b1y: f64, b2x: f64, b2y: f64, delta: f64) -> rcof_core::Result<Vec<f64>> {
    let g = DMatrix::from_row_slice(2, 2, &[b1x, b2x, b1y, b2y]);
    let basis = LatticeBasis::new(g)?;
    let out = lll_reduce(&basis, delta)?;
    let r = &out.reduced;
    let radius = r.column(0).norm() * (1.0 + 1e-9);
    let z = shortest_vector_enumerate(&basis, radius)?;
    let u = &out.unimodular;
    Ok(vec![
        r[(0, 0)],
        r[(1, 0)],
        r[(0, 1)],
        r[(1, 1)],
        u.get(0, 0) as f64,
        u.get(0, 1) as f64,
        u.get(1, 0) as f64,
        u.get(1, 1) as f64,
        z[0] as f64,
        z[1] as f64,
    ])
}

#[wasm_bindgen]
pub fn reduce_2d(b1x: f64, b1y: f64, b2x: f64, b2y: f64, delta: f64) -> Result<Vec<f64>, JsError> {
    reduce_2d_impl(b1x, b1y, b2x, b2y, delta).map_err(js_err)
}
