//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rcof_core::effective_noise::{discrete_noise_pmf, effective_variance, EffectiveNoiseSpec};
use rcof_core::experiments::{run_sweep, write_csv, CurveSet, ExperimentSpec};
use rcof_core::integer_search::{best_coeff_qcof, ifbf_coeffs, lll_reduce, max_beam_norm_sq, shortest_vector_enumerate, IntegerCoeffMatrix, IntegerMatrix, LatticeBasis, SearchOptions};
use rcof_core::rates::{rate_cifbf, rate_cof, rate_ifbf, rate_qcof, Scheme, Variant};
use rcof_core::scalar_lattice::NestedLatticePair;
use rcof_core::scheduling::{brute_force_select, greedy_select, SelectionInstance};
use rcof_core::schemes::{run_rqcof_chain, AlphaRule, DownlinkConfig};
use rcof_core::zp_field::{FieldMatrix, PrimeField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn field(p: u64) -> PrimeField {
    PrimeField::new(p).unwrap()
}

fn coeffs(rows: &[Vec<i64>], p: u64) -> IntegerCoeffMatrix {
    IntegerCoeffMatrix::new(IntegerMatrix::from_rows(rows).unwrap(), field(p)).unwrap()
}

fn chain_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let snr = 10.0;
    let rows: Vec<Vec<i64>> = (0..2).map(|r| best_coeff_qcof(&[h[(r, 0)], h[(r, 1)]], snr, field(5), SearchOptions::default()).unwrap()).collect();
    let a = coeffs(&rows, 5);
    if a.q.rank() < 2 {
        return outcome(false, format!("drawn coefficients {rows:?} are rank deficient"));
    }
    let cfg = DownlinkConfig::new(2, 5, snr, Scheme::Rqcof, 7, 100_000);
    let r = run_rqcof_chain(&cfg, &h, &a).unwrap();
    let t = start.elapsed();
    let ser_nonzero = r.ser.iter().any(|&s| s > 0.0);
    outcome(
        r.equivalence_violations == 0 && ser_nonzero && t < Duration::from_secs(10),
        format!("{} symbols, {} violations, SER {:?} (noise active), {:.2?}", r.channel_uses, r.equivalence_violations, r.ser, t),
    )
}

fn precoding_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let f = field(17);
    let mut matrices = 0;
    let mut failures = 0;
    while matrices < 100 {
        let rows: Vec<Vec<i64>> = (0..5).map(|_| (0..5).map(|_| rng.random_range(-8..=8)).collect()).collect();
        if FieldMatrix::from_integer_rows(f, &rows).unwrap().rank() < 5 {
            continue;
        }
        let a = coeffs(&rows, 17);
        let h = a.a.to_f64();
        let cfg = DownlinkConfig::new(5, 17, 1e16, Scheme::Rqcof, matrices, 5_000).with_alpha(AlphaRule::Fixed(1.0));
        let r = run_rqcof_chain(&cfg, &h, &a).unwrap();
        if !r.messages_recovered || r.ser.iter().any(|&s| s != 0.0) {
            failures += 1;
        }
        matrices += 1;
    }
    let t = start.elapsed();
    outcome(failures == 0 && t < Duration::from_secs(10), format!("{matrices} matrices, {failures} with errors, {t:.2?}"))
}

fn shaping_gap() -> Outcome {
    let snr = 100.0;
    let s2 = effective_variance(&[1.0], &[1], snr);
    let pair = NestedLatticePair::from_snr(field(251), snr).unwrap();
    let gap = rate_cof(s2, snr) - rate_qcof(s2, &pair);
    outcome((0.15..=0.35).contains(&gap), format!("rate_cof - rate_qcof = {gap:.4} bits"))
}

fn noise_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let primes = [2u64, 3, 5, 7, 11, 17, 31, 101, 251];
    let h = DMatrix::identity(1, 1);
    let a = |p| coeffs(&[vec![1]], p);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for i in 0..10 {
        let p = primes[rng.random_range(0..primes.len())];
        // unit noise with α = 1, so σ/κ = 1/κ
        let ratio: f64 = rng.random_range(0.05..1.5);
        let kappa = 1.0 / ratio;
        let snr = (kappa * p as f64).powi(2) / 12.0;
        let cfg = DownlinkConfig::new(1, p, snr, Scheme::Rqcof, 1000 + i, 10_000_000).with_alpha(AlphaRule::Fixed(1.0));
        let r = run_rqcof_chain(&cfg, &h, &a(p)).unwrap();
        let pair = NestedLatticePair::from_snr(field(p), snr).unwrap();
        let tv = discrete_noise_pmf(&EffectiveNoiseSpec::new(1.0, pair)).total_variation(&r.error_pmf[0]);
        worst = worst.max(tv);
        lines.push(format!("p={p} σ/κ={ratio:.3} TV={tv:.5}"));
    }
    let t = start.elapsed();
    outcome(worst < 0.005 && t < Duration::from_secs(60), format!("worst TV {worst:.5}, {t:.2?} [{}]", lines.join("; ")))
}

fn greedy_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut checked, mut exceptions) = (0, 0);
    while checked < 500 {
        let p = [2u64, 5, 17][rng.random_range(0..3)];
        let l = rng.random_range(1..=4);
        let k = rng.random_range(l..=10);
        let rows: Vec<Vec<i64>> = (0..k).map(|_| (0..l).map(|_| rng.random_range(-4..=4)).collect()).collect();
        let s2: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..5.0)).collect();
        let inst = SelectionInstance::new(field(p), l, &rows, &s2).unwrap();
        if !inst.is_feasible() {
            continue;
        }
        let g = greedy_select(&inst);
        let b = brute_force_select(&inst).unwrap();
        if !g.feasible || g.objective != b.objective || inst.rank_of(&g.chosen) != l {
            exceptions += 1;
        }
        checked += 1;
    }
    outcome(exceptions == 0, format!("{checked} feasible instances, {exceptions} exceptions"))
}

fn brute_ifbf(h: &DMatrix<f64>, bound: i64) -> f64 {
    let inv = h.clone().try_inverse().unwrap();
    let mut best = f64::INFINITY;
    let vecs: Vec<((i64, i64), f64)> = (-bound..=bound)
        .flat_map(|a| (-bound..=bound).map(move |b| (a, b)))
        .filter(|&v| v != (0, 0))
        .map(|(a, b)| ((a, b), (&inv * DVector::from_vec(vec![a as f64, b as f64])).norm_squared()))
        .collect();
    for (i, &((a1, b1), n1)) in vecs.iter().enumerate() {
        if n1 >= best {
            continue;
        }
        for &((a2, b2), n2) in &vecs[i + 1..] {
            if a1 * b2 != a2 * b1 {
                best = best.min(n1.max(n2));
            }
        }
    }
    best
}

fn lll_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_ratio: f64 = 0.0;
    let mut lll_fail = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=4);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let Ok(basis) = LatticeBasis::new(g.clone()) else { continue };
        let out = lll_reduce(&basis, 0.75).unwrap();
        let first = out.reduced.column(0).norm();
        let radius = g.column_iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min) * (1.0 + 1e-9);
        let z = shortest_vector_enumerate(&basis, radius).unwrap();
        let opt = basis.norm_sq(&z).sqrt();
        let bound = 2f64.powf((n as f64 - 1.0) / 2.0);
        worst_ratio = worst_ratio.max(first / opt / bound);
        if first > bound * opt * (1.0 + 1e-9) {
            lll_fail += 1;
        }
    }
    let mut ifbf_fail = 0;
    let mut worst_ifbf: f64 = 0.0;
    for _ in 0..100 {
        let h = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = ifbf_coeffs(&h, field(17), 0.75).unwrap();
        let got = max_beam_norm_sq(&h, &a.a).unwrap();
        let brute = brute_ifbf(&h, 20);
        worst_ifbf = worst_ifbf.max(got / brute);
        if got > 2.0 * brute * (1.0 + 1e-9) {
            ifbf_fail += 1;
        }
    }
    outcome(
        lll_fail == 0 && ifbf_fail == 0,
        format!("LLL: {lll_fail} bound violations (worst ratio to bound {worst_ratio:.3}); IFBF: {ifbf_fail} over 2x (worst {worst_ifbf:.3}x)"),
    )
}

fn sweep(text: &str) -> CurveSet {
    run_sweep(&ExperimentSpec::parse(text).unwrap()).unwrap()
}

const FIG1: &str = r#"
[experiment]
name = "soft-handoff-r0"
schemes = ["rcof"]
p = 251
trials = 2000
seed = 7

[channel]
model = "soft-handoff"
antennas = 2
gamma_min = 0.5
gamma_max = 1.0

[sweep]
axis = "r0"
snr_db = 20
values = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
"#;

fn backhaul_saturation() -> Outcome {
    let curves = sweep(FIG1);
    let c = curves.curve("rcof").unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for pt in c.points.iter().filter(|p| p.x <= 4.0) {
        let hit = (pt.mean_rate - pt.x).abs() <= 2.0 * pt.stderr + 1e-12;
        ok &= hit;
        lines.push(format!("R0={} mean {:.4} ± {:.4}{}", pt.x, pt.mean_rate, pt.stderr, if hit { "" } else { " (short)" }));
    }
    let tail: Vec<_> = c.points.iter().filter(|p| p.x >= 7.0).collect();
    let flat = tail.windows(2).all(|w| (w[1].mean_rate - w[0].mean_rate).abs() <= 2.0 * w[0].stderr.max(w[1].stderr));
    ok &= flat;
    lines.push(format!("R0>=7 {}", tail.iter().map(|p| format!("{:.4}", p.mean_rate)).collect::<Vec<_>>().join(", ")));
    outcome(ok, format!("{} ({})", lines.join("; "), if flat { "flat" } else { "not flat" }))
}

fn cifbf_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let snr = 100.0;
    let mut worst_gap: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..20 {
        let h = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = ifbf_coeffs(&h, field(251), 0.75).unwrap();
        for v in [Variant::Rcof, Variant::Rqcof] {
            let ifbf = rate_ifbf(&h, &a, snr, v).unwrap().symmetric_rate;
            let at30 = rate_cifbf(&h, &a, snr, 30.0, v).unwrap().symmetric_rate;
            worst_gap = worst_gap.max((ifbf - at30).abs());
            let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
            let reports: Vec<_> = grid.iter().map(|&r0| rate_cifbf(&h, &a, snr, r0, v).unwrap()).collect();
            // the RQCoF form is exactly flat at 0 while the wrapped noise is uniform to machine precision
            let strict = v == Variant::Rqcof || reports.windows(2).all(|w| w[1].components.unclamped > w[0].components.unclamped);
            monotone &= strict && reports.windows(2).all(|w| w[1].symmetric_rate >= w[0].symmetric_rate - 1e-12);
        }
    }
    outcome(worst_gap <= 1e-6 && monotone, format!("max |R_CIFBF(30) - R_IFBF| = {worst_gap:.2e}, monotone on 0.5..10: {monotone}"))
}

fn fig3(mode: &str) -> String {
    format!(
        r#"
[experiment]
name = "selection-{mode}"
schemes = ["rcof", "rqcof"]
p = 17
trials = 1000
seed = 9

[channel]
model = "rayleigh"
antennas = 5
users = 20

[sweep]
axis = "snr_db"
r0 = 3
values = [10, 20, 30]

[selection]
mode = "{mode}"
"#
    )
}

fn selection_property() -> Outcome {
    let greedy = sweep(&fig3("greedy"));
    let random = sweep(&fig3("random"));
    let (gr, gq, rr) = (greedy.curve("rcof").unwrap(), greedy.curve("rqcof").unwrap(), random.curve("rcof").unwrap());
    let mut ok = true;
    let mut lines = Vec::new();
    for ((c, q), r) in gr.points.iter().zip(&gq.points).zip(&rr.points) {
        let gap = c.mean_rate - q.mean_rate;
        let pass = q.rank_deficiency_fraction < 0.01 && r.rank_deficiency_fraction > q.rank_deficiency_fraction && (0.15..=0.40).contains(&gap);
        ok &= pass;
        lines.push(format!(
            "{} dB: deficiency greedy {:.3} random {:.3}, RCoF {:.3} RQCoF {:.3} gap {gap:.3}",
            c.x, q.rank_deficiency_fraction, r.rank_deficiency_fraction, c.mean_rate, q.mean_rate
        ));
    }
    outcome(ok, lines.join("; "))
}

fn determinism() -> Outcome {
    let mut texts = Vec::new();
    for cfg in [FIG1.replace("trials = 2000", "trials = 200"), fig3("random").replace("trials = 1000", "trials = 100")] {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut buf = Vec::new();
            write_csv(&sweep(&cfg), &mut buf).unwrap();
            runs.push(buf);
        }
        texts.push(runs[0] == runs[1]);
    }
    outcome(texts.iter().all(|&x| x), format!("byte-identical reruns: {texts:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("chain equivalence", chain_equivalence),
        ("precoding identity", precoding_identity),
        ("shaping gap", shaping_gap),
        ("noise-model fidelity", noise_fidelity),
        ("greedy optimality", greedy_optimality),
        ("LLL quality", lll_quality),
        ("backhaul-limited RCoF saturation", backhaul_saturation),
        ("CIFBF limit", cifbf_limit),
        ("greedy selection avoids rank deficiency", selection_property),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {:2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
