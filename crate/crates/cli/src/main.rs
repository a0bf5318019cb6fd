//! `rcof`: rate sweeps, single-point rate queries, user selection and LLL.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use rcof_core::effective_noise::effective_variance;
use rcof_core::experiments::{db_to_linear, emit_csv, load_overlay, parse_selection_instance, run_sweep, write_csv, ExperimentSpec};
use rcof_core::integer_search::{best_coeff_qcof, ifbf_coeffs, lll_reduce, IntegerCoeffMatrix, IntegerMatrix, LatticeBasis, SearchOptions};
use rcof_core::rates::{rate_cifbf, rate_ifbf, rate_rcof, rate_rqcof, RateReport, Scheme};
use rcof_core::scalar_lattice::NestedLatticePair;
use rcof_core::scheduling::{brute_force_select, greedy_select, SelectionResult};
use rcof_core::zp_field::PrimeField;
use rcof_core::Error;

#[derive(Parser)]
#[command(name = "rcof", version, about = "Compute-and-forward downlink rate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output CSV; `-` or omitted (with no `output` in the config) writes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated schemes, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        /// External `label,x,rate` curves appended to the output.
        #[arg(long)]
        overlay: Vec<PathBuf>,
    },
    /// Analytic symmetric rate for one channel.
    Rate {
        #[arg(long)]
        scheme: String,
        /// Rows separated by `;`, entries by `,`; one row per user.
        #[arg(long, allow_hyphen_values = true)]
        channel: String,
        #[arg(long)]
        snr_db: f64,
        #[arg(long, default_value_t = 251)]
        p: u64,
        #[arg(long, default_value_t = f64::INFINITY)]
        r0: f64,
        /// Integer coefficient rows; searched per user when omitted.
        #[arg(long, allow_hyphen_values = true)]
        coeffs: Option<String>,
    },
    /// Greedy (and optionally exhaustive) user selection on an instance file.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        brute_force: bool,
    },
    /// LLL-reduce the columns of a matrix.
    Reduce {
        /// Rows separated by `;`, entries by `,`.
        #[arg(long, allow_hyphen_values = true)]
        matrix: String,
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) | Error::NotPrime(_) | Error::InvalidBackhaul(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn run(cmd: Command) -> rcof_core::Result<()> {
    match cmd {
        Command::Sweep { config, seed, trials, out, scheme, overlay } => {
            let mut spec = ExperimentSpec::from_file(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            if !scheme.is_empty() {
                spec.schemes = scheme
                    .iter()
                    .map(|s| s.parse().map_err(|_| Error::config("--scheme", format!("unknown scheme `{s}`"))))
                    .collect::<rcof_core::Result<_>>()?;
            }
            spec.overlays.extend(overlay);
            if let Some(o) = out {
                spec.output = Some(o);
            }
            spec.validate()?;
            let mut curves = run_sweep(&spec)?;
            for path in &spec.overlays {
                curves.curves.extend(load_overlay(path)?);
            }
            match &spec.output {
                Some(p) if p.as_os_str() != "-" => emit_csv(&curves, p),
                _ => write_csv(&curves, io::stdout().lock()),
            }
        }
        Command::Rate { scheme, channel, snr_db, p, r0, coeffs } => {
            let scheme: Scheme = scheme.parse().map_err(|_| Error::config("--scheme", format!("unknown scheme `{scheme}`")))?;
            let rows = parse_rows::<f64>("--channel", &channel)?;
            let field = PrimeField::new(p).map_err(|e| Error::config("--p", e.to_string()))?;
            let snr = db_to_linear(snr_db);
            let report = rate_query(scheme, &rows, coeffs.as_deref(), snr, field, r0)?;
            print_report(&report);
            Ok(())
        }
        Command::Select { config, brute_force } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::config(config.display().to_string(), e.to_string()))?;
            let inst = parse_selection_instance(&text)?;
            print_selection("greedy", &greedy_select(&inst));
            if brute_force {
                print_selection("brute-force", &brute_force_select(&inst)?);
            }
            Ok(())
        }
        Command::Reduce { matrix, delta } => {
            let rows = parse_rows::<f64>("--matrix", &matrix)?;
            let m = to_matrix("--matrix", &rows)?;
            let out = lll_reduce(&LatticeBasis::new(m)?, delta)?;
            let mut w = io::stdout().lock();
            writeln!(w, "reduced basis (columns):")?;
            for r in out.reduced.row_iter() {
                writeln!(w, "  {}", r.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" "))?;
            }
            writeln!(w, "unimodular transform:")?;
            for r in 0..out.unimodular.rows() {
                writeln!(w, "  {}", out.unimodular.row(r).iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))?;
            }
            writeln!(w, "det = {}", out.unimodular.determinant())?;
            Ok(())
        }
    }
}

fn parse_rows<T: std::str::FromStr>(flag: &str, text: &str) -> rcof_core::Result<Vec<Vec<T>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<T>().map_err(|_| Error::config(flag, format!("cannot parse `{}`", x.trim()))))
                .collect()
        })
        .collect()
}

fn to_matrix(flag: &str, rows: &[Vec<f64>]) -> rcof_core::Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::config(flag, "rows must have equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn rate_query(scheme: Scheme, rows: &[Vec<f64>], coeffs: Option<&str>, snr: f64, field: PrimeField, r0: f64) -> rcof_core::Result<RateReport> {
    let h = to_matrix("--channel", rows)?;
    if scheme.uses_beamforming() {
        let a = match coeffs {
            Some(c) => IntegerCoeffMatrix::new(IntegerMatrix::from_rows(&parse_rows::<i64>("--coeffs", c)?)?, field)?,
            None => ifbf_coeffs(&h, field, 0.75)?,
        };
        return match scheme {
            Scheme::CifbfRqcof | Scheme::CifbfRcof if r0.is_finite() => rate_cifbf(&h, &a, snr, r0, scheme.variant()),
            _ => rate_ifbf(&h, &a, snr, scheme.variant()),
        };
    }
    let a: Vec<Vec<i64>> = match coeffs {
        Some(c) => parse_rows("--coeffs", c)?,
        None => rows.iter().map(|hr| best_coeff_qcof(hr, snr, field, SearchOptions::default())).collect::<rcof_core::Result<_>>()?,
    };
    if a.len() != rows.len() || a.iter().zip(rows).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::config("--coeffs", "coefficient rows must match the channel rows"));
    }
    let s2: Vec<f64> = rows.iter().zip(&a).map(|(hr, ar)| effective_variance(hr, ar, snr)).collect();
    let cap = if matches!(scheme, Scheme::Qcof | Scheme::Cof) { f64::INFINITY } else { r0 };
    let mut report = if scheme.is_quantized() {
        rate_rqcof(&s2, &NestedLatticePair::from_snr(field, snr)?, cap)?
    } else {
        rate_rcof(&s2, snr, cap)?
    };
    report.scheme = scheme;
    for (hr, ar) in rows.iter().zip(&a) {
        eprintln!("h = {hr:?}  a = {ar:?}  sigma2 = {:.6}", effective_variance(hr, ar, snr));
    }
    Ok(report)
}

fn print_report(r: &RateReport) {
    println!("scheme: {}", r.scheme);
    println!("symmetric_rate: {:.6}", r.symmetric_rate);
    let c = &r.components;
    println!("max_effective_variance: {:.6}", c.max_variance);
    if let Some(h) = c.max_entropy {
        println!("max_entropy: {h:.6}");
    }
    if let Some(r0) = c.r0 {
        println!("r0: {r0}");
    }
    if let Some(q) = c.quantization_penalty {
        println!("quantization_penalty: {q:.6}");
    }
    println!("unclamped: {:.6}", c.unclamped);
}

fn print_selection(name: &str, r: &SelectionResult) {
    let users: Vec<String> = r.chosen.iter().map(|u| (u + 1).to_string()).collect();
    println!("{name}: users [{}] objective {} feasible {}", users.join(", "), r.objective, r.feasible);
}
