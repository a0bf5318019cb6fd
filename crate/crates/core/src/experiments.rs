//! Monte Carlo rate sweeps.
//!
//! An [`ExperimentSpec`] is read from a small sectioned key-value file (see
//! `docs/config.md`), every trial draws a fresh channel from its own seeded
//! stream, and per-scheme symmetric rates are averaged per grid point. When the
//! selected users' system matrix is singular over Z_p the trial counts as rate
//! zero for every user and is tallied as rank deficient.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use toml::{Table, Value};

use crate::channel::{complex_to_real, rayleigh_matrix, soft_handoff_matrix, trial_rng, Gamma, SoftHandoffParams};
use crate::effective_noise::effective_variance;
use crate::error::{Error, Result};
use crate::integer_search::{best_coeff_qcof, coordinated_coeffs, ifbf_coeffs, SearchOptions};
use crate::parallel::{map_indexed, Kahan};
use crate::rates::{rate_cifbf, rate_ifbf, rate_rcof, rate_rqcof, Scheme};
use crate::scalar_lattice::NestedLatticePair;
use crate::scheduling::{greedy_select, SelectionInstance};
use crate::zp_field::{FieldMatrix, PrimeField};

/// Salt separating the random-selection stream from the channel stream.
const SELECTION_SALT: u64 = 0x5e1e_c7ed_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    SoftHandoff { l: usize, gamma: Gamma, complex: bool },
    Rayleigh { k: usize, l: usize },
}

impl ChannelSpec {
    /// Users and antennas of the real model.
    pub fn real_shape(&self) -> (usize, usize) {
        match *self {
            ChannelSpec::SoftHandoff { l, complex: true, .. } => (2 * l, 2 * l),
            ChannelSpec::SoftHandoff { l, .. } => (l, l),
            ChannelSpec::Rayleigh { k, l } => (k, l),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, ChannelSpec::SoftHandoff { complex: true, .. })
    }

    /// Real-valued channel matrix for one trial.
    pub fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Result<DMatrix<f64>> {
        Ok(match *self {
            ChannelSpec::SoftHandoff { l, gamma, complex } => {
                let hc = soft_handoff_matrix(&SoftHandoffParams::new(l, gamma)?, rng);
                if complex {
                    complex_to_real(&hc)
                } else {
                    hc.re
                }
            }
            ChannelSpec::Rayleigh { k, l } => rayleigh_matrix(k, l, rng),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Backhaul capacity in bits per (complex, for complex channels) symbol.
    R0,
    SnrDb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// The first `L` users.
    None,
    Random,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientMode {
    /// Each user picks its own best vector.
    Independent,
    /// Users repair joint rank with next-best candidates.
    Coordinated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub schemes: Vec<Scheme>,
    pub channel: ChannelSpec,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// The other coordinate: SNR in dB when sweeping R₀, R₀ when sweeping SNR.
    pub fixed: f64,
    pub p: u64,
    pub trials: usize,
    pub seed: u64,
    pub selection: SelectionMode,
    pub coefficients: CoefficientMode,
    pub candidate_budget: usize,
    pub output: Option<PathBuf>,
    pub overlays: Vec<PathBuf>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

/// A table being consumed key by key, so leftovers can be reported.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(v) => return Err(Error::config(name, format!("expected a section, found {}", type_name(v)))),
        };
        Ok(Self { path: name.to_string(), table, used: Vec::new() })
    }

    fn at(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn f64_opt(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| Error::config(self.at(key), format!("expected a number, found {}", type_name(v)))),
        }
    }

    fn u64_opt(&mut self, key: &'static str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::Integer(i)) => Err(Error::config(self.at(key), format!("must be nonnegative, got {i}"))),
            Some(v) => Err(Error::config(self.at(key), format!("expected an integer, found {}", type_name(v)))),
        }
    }

    fn str_opt(&mut self, key: &'static str) -> Result<Option<&'a str>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(self.at(key), format!("expected a string, found {}", type_name(v)))),
        }
    }

    fn bool_opt(&mut self, key: &'static str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Error::config(self.at(key), format!("expected a boolean, found {}", type_name(v)))),
        }
    }

    fn array_opt(&mut self, key: &'static str) -> Result<Option<&'a Vec<Value>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(Error::config(self.at(key), format!("expected an array, found {}", type_name(v)))),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::config(self.at(key), "missing required key"))
    }

    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.used.contains(&k.as_str())) {
                return Err(Error::config(format!("{}.{k}", self.path), "unknown key"));
            }
        }
        Ok(())
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn usize_of(path: &str, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::config(path, "value too large"))
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        const SECTIONS: [&str; 5] = ["experiment", "channel", "sweep", "selection", "overlay"];
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::config(k.as_str(), "unknown section"));
        }

        let mut ex = Section::new(&root, "experiment")?;
        let name = ex.str_opt("name")?.unwrap_or("experiment").to_string();
        let schemes_raw = ex.array_opt("schemes")?;
        let schemes_raw = ex.required("schemes", schemes_raw)?;
        let mut schemes = Vec::new();
        for (i, v) in schemes_raw.iter().enumerate() {
            let path = format!("experiment.schemes[{i}]");
            let Value::String(s) = v else {
                return Err(Error::config(path, format!("expected a string, found {}", type_name(v))));
            };
            let sch: Scheme = s.parse().map_err(|_| Error::config(&path, format!("unknown scheme `{s}`")))?;
            if schemes.contains(&sch) {
                return Err(Error::config(path, format!("scheme `{s}` listed twice")));
            }
            schemes.push(sch);
        }
        let p = ex.u64_opt("p")?;
        let p = ex.required("p", p)?;
        let trials = usize_of("experiment.trials", ex.u64_opt("trials")?.unwrap_or(1000))?;
        let seed = ex.u64_opt("seed")?.unwrap_or(0);
        let output = ex.str_opt("output")?.map(PathBuf::from);
        ex.finish()?;

        let mut ch = Section::new(&root, "channel")?;
        let model = ch.str_opt("model")?;
        let model = ch.required("model", model)?;
        let channel = match model {
            "soft-handoff" => {
                let l = ch.u64_opt("antennas")?;
                let l = usize_of("channel.antennas", ch.required("antennas", l)?)?;
                let complex = ch.bool_opt("complex")?.unwrap_or(true);
                let fixed = ch.f64_opt("gamma")?;
                let lo = ch.f64_opt("gamma_min")?;
                let hi = ch.f64_opt("gamma_max")?;
                let per_entry = ch.bool_opt("gamma_per_entry")?;
                let gamma = match (fixed, lo, hi) {
                    (Some(g), None, None) => {
                        if per_entry.is_some() {
                            return Err(Error::config("channel.gamma_per_entry", "only meaningful with gamma_min/gamma_max"));
                        }
                        Gamma::Fixed(g)
                    }
                    (None, Some(lo), Some(hi)) => Gamma::Uniform { lo, hi, per_entry: per_entry.unwrap_or(true) },
                    (Some(_), _, _) => return Err(Error::config("channel.gamma", "give either gamma or gamma_min/gamma_max, not both")),
                    _ => return Err(Error::config("channel.gamma", "missing: give gamma or both gamma_min and gamma_max")),
                };
                if let Some(k) = ch.u64_opt("users")? {
                    if k as usize != l {
                        return Err(Error::config("channel.users", "soft-handoff serves one user per antenna"));
                    }
                }
                SoftHandoffParams::new(l, gamma).map_err(|e| Error::config("channel.gamma", e.to_string()))?;
                ChannelSpec::SoftHandoff { l, gamma, complex }
            }
            "rayleigh" => {
                let l = ch.u64_opt("antennas")?;
                let l = usize_of("channel.antennas", ch.required("antennas", l)?)?;
                let k = usize_of("channel.users", ch.u64_opt("users")?.unwrap_or(l as u64))?;
                if ch.bool_opt("complex")?.unwrap_or(false) {
                    return Err(Error::config("channel.complex", "rayleigh channels are real-valued"));
                }
                ChannelSpec::Rayleigh { k, l }
            }
            other => return Err(Error::config("channel.model", format!("unknown model `{other}` (soft-handoff, rayleigh)"))),
        };
        ch.finish()?;

        let mut sw = Section::new(&root, "sweep")?;
        let axis = match sw.str_opt("axis")? {
            Some("r0") => SweepAxis::R0,
            Some("snr_db") => SweepAxis::SnrDb,
            Some(other) => return Err(Error::config("sweep.axis", format!("unknown axis `{other}` (r0, snr_db)"))),
            None => return Err(Error::config("sweep.axis", "missing required key")),
        };
        let values = sw.array_opt("values")?;
        let values = sw.required("values", values)?;
        let mut grid = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            let x = as_f64(v).ok_or_else(|| Error::config(format!("sweep.values[{i}]"), format!("expected a number, found {}", type_name(v))))?;
            grid.push(x);
        }
        let fixed = match axis {
            SweepAxis::R0 => {
                let v = sw.f64_opt("snr_db")?;
                sw.required("snr_db", v)?
            }
            SweepAxis::SnrDb => sw.f64_opt("r0")?.unwrap_or(f64::INFINITY),
        };
        let misplaced = match axis {
            SweepAxis::R0 => "r0",
            SweepAxis::SnrDb => "snr_db",
        };
        if sw.raw(misplaced).is_some() {
            return Err(Error::config(sw.at(misplaced), "this coordinate is the sweep axis"));
        }
        sw.finish()?;

        let mut se = Section::new(&root, "selection")?;
        let selection = match se.str_opt("mode")?.unwrap_or("none") {
            "none" => SelectionMode::None,
            "random" => SelectionMode::Random,
            "greedy" => SelectionMode::Greedy,
            other => return Err(Error::config("selection.mode", format!("unknown mode `{other}` (none, random, greedy)"))),
        };
        let coefficients = match se.str_opt("coefficients")?.unwrap_or("independent") {
            "independent" => CoefficientMode::Independent,
            "coordinated" => CoefficientMode::Coordinated,
            other => return Err(Error::config("selection.coefficients", format!("unknown mode `{other}` (independent, coordinated)"))),
        };
        let candidate_budget = usize_of("selection.candidate_budget", se.u64_opt("candidate_budget")?.unwrap_or(100))?;
        se.finish()?;

        let mut ov = Section::new(&root, "overlay")?;
        let mut overlays = Vec::new();
        if let Some(files) = ov.array_opt("files")? {
            for (i, v) in files.iter().enumerate() {
                match v {
                    Value::String(s) => overlays.push(PathBuf::from(s)),
                    other => return Err(Error::config(format!("overlay.files[{i}]"), format!("expected a string, found {}", type_name(other)))),
                }
            }
        }
        ov.finish()?;

        let spec = Self {
            name,
            schemes,
            channel,
            axis,
            grid,
            fixed,
            p,
            trials,
            seed,
            selection,
            coefficients,
            candidate_budget,
            output,
            overlays,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("experiment.schemes", "at least one scheme is required"));
        }
        PrimeField::new(self.p).map_err(|e| Error::config("experiment.p", e.to_string()))?;
        if self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("sweep.values", "grid must not be empty"));
        }
        if let Some(i) = self.grid.iter().position(|x| !x.is_finite()) {
            return Err(Error::config(format!("sweep.values[{i}]"), "must be finite"));
        }
        if let Some(i) = self.grid.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("sweep.values[{}]", i + 1), "grid must be strictly ascending"));
        }
        match self.axis {
            SweepAxis::R0 => {
                if !self.fixed.is_finite() {
                    return Err(Error::config("sweep.snr_db", "must be finite"));
                }
                if let Some(i) = self.grid.iter().position(|&x| x <= 0.0) {
                    return Err(Error::config(format!("sweep.values[{i}]"), "backhaul rates must be positive"));
                }
            }
            SweepAxis::SnrDb => {
                if !(self.fixed > 0.0) {
                    return Err(Error::config("sweep.r0", "must be positive (inf allowed)"));
                }
            }
        }
        let (k, l) = self.channel.real_shape();
        if l == 0 || k < l {
            return Err(Error::config("channel.users", format!("need at least as many users as antennas, got {k} < {l}")));
        }
        if self.selection != SelectionMode::None && matches!(self.channel, ChannelSpec::SoftHandoff { .. }) {
            return Err(Error::config("selection.mode", "soft-handoff serves every user; selection needs a rayleigh channel"));
        }
        if self.schemes.iter().any(|s| s.uses_beamforming()) && k != l {
            return Err(Error::config("experiment.schemes", "beamforming schemes need as many users as antennas"));
        }
        if self.candidate_budget == 0 {
            return Err(Error::config("selection.candidate_budget", "must be at least 1"));
        }
        Ok(())
    }

    /// The resolved spec as a config file that parses back to the same spec.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| format!("[{}]", v.join(", "));
        let num = |x: f64| {
            if x == f64::INFINITY {
                "inf".to_string()
            } else {
                format!("{x:?}")
            }
        };
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "name = {:?}", self.name);
        let _ = writeln!(s, "schemes = {}", list(&self.schemes.iter().map(|x| format!("\"{x}\"")).collect::<Vec<_>>()));
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output = {:?}", o.display().to_string());
        }
        let _ = writeln!(s, "[channel]");
        match self.channel {
            ChannelSpec::SoftHandoff { l, gamma, complex } => {
                let _ = writeln!(s, "model = \"soft-handoff\"");
                let _ = writeln!(s, "antennas = {l}");
                let _ = writeln!(s, "complex = {complex}");
                match gamma {
                    Gamma::Fixed(g) => {
                        let _ = writeln!(s, "gamma = {}", num(g));
                    }
                    Gamma::Uniform { lo, hi, per_entry } => {
                        let _ = writeln!(s, "gamma_min = {}", num(lo));
                        let _ = writeln!(s, "gamma_max = {}", num(hi));
                        let _ = writeln!(s, "gamma_per_entry = {per_entry}");
                    }
                }
            }
            ChannelSpec::Rayleigh { k, l } => {
                let _ = writeln!(s, "model = \"rayleigh\"");
                let _ = writeln!(s, "users = {k}");
                let _ = writeln!(s, "antennas = {l}");
            }
        }
        let _ = writeln!(s, "[sweep]");
        match self.axis {
            SweepAxis::R0 => {
                let _ = writeln!(s, "axis = \"r0\"");
                let _ = writeln!(s, "snr_db = {}", num(self.fixed));
            }
            SweepAxis::SnrDb => {
                let _ = writeln!(s, "axis = \"snr_db\"");
                let _ = writeln!(s, "r0 = {}", num(self.fixed));
            }
        }
        let _ = writeln!(s, "values = {}", list(&self.grid.iter().map(|&x| num(x)).collect::<Vec<_>>()));
        let _ = writeln!(s, "[selection]");
        let mode = match self.selection {
            SelectionMode::None => "none",
            SelectionMode::Random => "random",
            SelectionMode::Greedy => "greedy",
        };
        let _ = writeln!(s, "mode = \"{mode}\"");
        let coeff = match self.coefficients {
            CoefficientMode::Independent => "independent",
            CoefficientMode::Coordinated => "coordinated",
        };
        let _ = writeln!(s, "coefficients = \"{coeff}\"");
        let _ = writeln!(s, "candidate_budget = {}", self.candidate_budget);
        if !self.overlays.is_empty() {
            let _ = writeln!(s, "[overlay]");
            let files: Vec<String> = self.overlays.iter().map(|p| format!("{:?}", p.display().to_string())).collect();
            let _ = writeln!(s, "files = {}", list(&files));
        }
        s
    }

    fn point(&self, x: f64) -> (f64, f64) {
        match self.axis {
            SweepAxis::R0 => (db_to_linear(self.fixed), x),
            SweepAxis::SnrDb => (db_to_linear(x), self.fixed),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub mean_rate: f64,
    pub stderr: f64,
    pub rank_deficiency_fraction: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Scheme name, or `overlay:<label>` for external data.
    pub label: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveSet {
    pub curves: Vec<Curve>,
    /// Lines written as `# ` comments above the CSV header.
    pub manifest: Vec<String>,
    pub seed: u64,
}

impl CurveSet {
    pub fn curve(&self, label: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.label == label)
    }
}

/// Outcome of one scheme at one grid point in one trial.
#[derive(Debug, Clone, Copy)]
struct Sample {
    rate: f64,
    deficient: bool,
}

/// Users kept for a trial and their coefficients.
struct Served {
    rows: Vec<Vec<i64>>,
    sigma2: Vec<f64>,
    deficient: bool,
}

fn user_rows(h: &DMatrix<f64>) -> Vec<Vec<f64>> {
    h.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn serve(spec: &ExperimentSpec, users: &[Vec<f64>], snr: f64, field: PrimeField, random_pick: &[usize]) -> Result<Served> {
    let opts = SearchOptions::default();
    let l = spec.channel.real_shape().1;
    let rows = users.iter().map(|h| best_coeff_qcof(h, snr, field, opts)).collect::<Result<Vec<_>>>()?;
    let sigma2: Vec<f64> = users.iter().zip(&rows).map(|(h, a)| effective_variance(h, a, snr)).collect();

    let chosen: Vec<usize> = match spec.selection {
        SelectionMode::None => (0..l).collect(),
        SelectionMode::Random => random_pick.to_vec(),
        SelectionMode::Greedy => {
            let inst = SelectionInstance::new(field, l, &rows, &sigma2)?;
            let r = greedy_select(&inst);
            if !r.feasible {
                return Ok(Served { rows: Vec::new(), sigma2: Vec::new(), deficient: true });
            }
            r.chosen
        }
    };

    let mut served = Served {
        rows: chosen.iter().map(|&u| rows[u].clone()).collect(),
        sigma2: chosen.iter().map(|&u| sigma2[u]).collect(),
        deficient: false,
    };
    if spec.coefficients == CoefficientMode::Coordinated {
        let picked: Vec<Vec<f64>> = chosen.iter().map(|&u| users[u].clone()).collect();
        match coordinated_coeffs(&picked, snr, field, spec.candidate_budget, opts) {
            Ok(c) => {
                served.rows = c.a.row_vecs();
                served.sigma2 = picked.iter().zip(&served.rows).map(|(h, a)| effective_variance(h, a, snr)).collect();
            }
            Err(Error::RankDeficient { .. }) => served.deficient = true,
            Err(e) => return Err(e),
        }
    }
    if !served.deficient {
        let q = FieldMatrix::from_integer_rows(field, &served.rows)?;
        served.deficient = q.rank() < l;
    }
    Ok(served)
}

fn run_trial(spec: &ExperimentSpec, trial: u64) -> Result<Vec<Vec<Sample>>> {
    let field = PrimeField::new(spec.p)?;
    let h = spec.channel.draw(&mut trial_rng(spec.seed, trial))?;
    let users = user_rows(&h);
    let (k, l) = spec.channel.real_shape();
    let random_pick: Vec<usize> = if spec.selection == SelectionMode::Random {
        let mut v = sample(&mut trial_rng(spec.seed ^ SELECTION_SALT, trial), k, l).into_vec();
        v.sort_unstable();
        v
    } else {
        Vec::new()
    };
    // complex channels: rates per complex symbol are twice the per-real-dimension rate
    let dims = if spec.channel.is_complex() { 2.0 } else { 1.0 };

    let mut out = vec![Vec::with_capacity(spec.grid.len()); spec.schemes.len()];
    let mut cache: Option<(f64, Served)> = None;
    let mut ifbf_cache = None;
    for &x in &spec.grid {
        let (snr, r0) = spec.point(x);
        let r0_real = r0 / dims;
        let need_cof = spec.schemes.iter().any(|s| !s.uses_beamforming());
        if need_cof && cache.as_ref().is_none_or(|(s, _)| *s != snr) {
            cache = Some((snr, serve(spec, &users, snr, field, &random_pick)?));
        }
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            let sample = if scheme.uses_beamforming() {
                let a = match &ifbf_cache {
                    Some(a) => a,
                    None => ifbf_cache.insert(ifbf_coeffs(&h, field, 0.75)?),
                };
                let rep = match scheme {
                    Scheme::IfbfRqcof | Scheme::IfbfRcof => rate_ifbf(&h, a, snr, scheme.variant()),
                    _ if r0_real.is_infinite() => rate_ifbf(&h, a, snr, scheme.variant()),
                    _ => rate_cifbf(&h, a, snr, r0_real, scheme.variant()),
                };
                match rep {
                    Ok(r) => Sample { rate: dims * r.symmetric_rate, deficient: false },
                    Err(Error::RankDeficient { .. }) => Sample { rate: 0.0, deficient: true },
                    Err(e) => return Err(e),
                }
            } else {
                let served = &cache.as_ref().map(|c| &c.1).ok_or(Error::SingularMatrix)?;
                if served.deficient {
                    Sample { rate: 0.0, deficient: true }
                } else {
                    let cap = match scheme {
                        Scheme::Qcof | Scheme::Cof => f64::INFINITY,
                        _ => r0_real,
                    };
                    let rate = if scheme.is_quantized() {
                        rate_rqcof(&served.sigma2, &NestedLatticePair::from_snr(field, snr)?, cap)?.symmetric_rate
                    } else {
                        rate_rcof(&served.sigma2, snr, cap)?.symmetric_rate
                    };
                    Sample { rate: dims * rate, deficient: false }
                }
            };
            out[si].push(sample);
        }
    }
    Ok(out)
}

/// Runs every trial and averages per scheme and grid point. Trials may run in
/// parallel; results are combined in trial order so the output does not depend
/// on scheduling.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<CurveSet> {
    spec.validate()?;
    let per_trial = map_indexed(spec.trials, |t| run_trial(spec, t as u64));
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;

    let n = spec.trials as f64;
    let mut curves = Vec::with_capacity(spec.schemes.len());
    for (si, scheme) in spec.schemes.iter().enumerate() {
        let mut points = Vec::with_capacity(spec.grid.len());
        for (xi, &x) in spec.grid.iter().enumerate() {
            let mut sum = Kahan::default();
            let mut deficient = 0usize;
            for t in &per_trial {
                sum.add(t[si][xi].rate);
                deficient += usize::from(t[si][xi].deficient);
            }
            let mean = sum.value() / n;
            let mut ss = Kahan::default();
            for t in &per_trial {
                let d = t[si][xi].rate - mean;
                ss.add(d * d);
            }
            let stderr = if spec.trials > 1 { (ss.value() / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 };
            points.push(CurvePoint { x, mean_rate: mean, stderr, rank_deficiency_fraction: deficient as f64 / n, trials: spec.trials });
        }
        curves.push(Curve { label: scheme.name().to_string(), points });
    }
    Ok(CurveSet { curves, manifest: manifest(spec), seed: spec.seed })
}

/// Build identification, set by the build script when git is available.
pub fn build_id() -> String {
    let git = option_env!("RCOF_GIT_DESCRIBE").unwrap_or("unknown");
    format!("rcof-core {} ({git})", env!("CARGO_PKG_VERSION"))
}

fn manifest(spec: &ExperimentSpec) -> Vec<String> {
    let mut m = vec![format!("build: {}", build_id()), format!("seed: {}", spec.seed)];
    if let ChannelSpec::SoftHandoff { gamma: Gamma::Uniform { per_entry, .. }, .. } = spec.channel {
        m.push(format!("gamma draw: {}", if per_entry { "per subdiagonal entry" } else { "per realization" }));
    }
    if spec.channel.is_complex() {
        m.push("rates: bits per complex symbol (twice the real expansion's per-dimension rate)".into());
    } else {
        m.push("rates: bits per real symbol".into());
    }
    m.push("resolved config:".into());
    m.extend(spec.to_config_string().lines().map(|l| format!("  {l}")));
    m
}

/// Reads an overlay file of `label,x,rate` rows (`#` comments, optional header).
pub fn load_overlay(path: &Path) -> Result<Vec<Curve>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let mut curves: Vec<Curve> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let at = || format!("{}:{}", path.display(), i + 1);
        if rec.len() != 3 {
            return Err(Error::config(at(), format!("expected label,x,rate, found {} fields", rec.len())));
        }
        let (x, rate) = match (rec[1].parse::<f64>(), rec[2].parse::<f64>()) {
            (Ok(x), Ok(r)) => (x, r),
            _ if i == 0 => continue, // header
            _ => return Err(Error::config(at(), "x and rate must be numbers")),
        };
        let label = format!("overlay:{}", &rec[0]);
        let point = CurvePoint { x, mean_rate: rate, stderr: 0.0, rank_deficiency_fraction: 0.0, trials: 0 };
        match curves.iter_mut().find(|c| c.label == label) {
            Some(c) => c.points.push(point),
            None => curves.push(Curve { label, points: vec![point] }),
        }
    }
    Ok(curves)
}

/// Reads a selection instance: top-level `p`, `l`, `rows` (K integer rows)
/// and `sigma2` (K positive variances).
pub fn parse_selection_instance(text: &str) -> Result<SelectionInstance> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    if let Some(k) = root.keys().find(|k| !["p", "l", "rows", "sigma2"].contains(&k.as_str())) {
        return Err(Error::config(k.as_str(), "unknown key"));
    }
    let int = |key: &str| match root.get(key) {
        Some(Value::Integer(i)) if *i > 0 => Ok(*i as u64),
        Some(v) => Err(Error::config(key, format!("expected a positive integer, found {v}"))),
        None => Err(Error::config(key, "missing required key")),
    };
    let p = int("p")?;
    let l = int("l")? as usize;
    let field = PrimeField::new(p).map_err(|e| Error::config("p", e.to_string()))?;
    let Some(Value::Array(rows_raw)) = root.get("rows") else {
        return Err(Error::config("rows", "expected an array of integer rows"));
    };
    let mut rows = Vec::with_capacity(rows_raw.len());
    for (i, r) in rows_raw.iter().enumerate() {
        let Value::Array(r) = r else {
            return Err(Error::config(format!("rows[{i}]"), "expected an array of integers"));
        };
        let row = r
            .iter()
            .enumerate()
            .map(|(j, v)| v.as_integer().ok_or_else(|| Error::config(format!("rows[{i}][{j}]"), "expected an integer")))
            .collect::<Result<Vec<i64>>>()?;
        if row.len() != l {
            return Err(Error::config(format!("rows[{i}]"), format!("expected {l} entries, found {}", row.len())));
        }
        rows.push(row);
    }
    let Some(Value::Array(s_raw)) = root.get("sigma2") else {
        return Err(Error::config("sigma2", "expected an array of numbers"));
    };
    let sigma2 = s_raw
        .iter()
        .enumerate()
        .map(|(i, v)| as_f64(v).filter(|x| x.is_finite() && *x > 0.0).ok_or_else(|| Error::config(format!("sigma2[{i}]"), "expected a positive number")))
        .collect::<Result<Vec<f64>>>()?;
    if sigma2.len() != rows.len() {
        return Err(Error::config("sigma2", format!("expected {} entries, found {}", rows.len(), sigma2.len())));
    }
    SelectionInstance::new(field, l, &rows, &sigma2)
}

pub const CSV_HEADER: [&str; 7] = ["scheme", "x", "mean_rate", "stderr", "rank_deficiency_fraction", "trials", "seed"];

/// Writes manifest comments, the header and one row per (curve, x), sorted by
/// label and then x.
pub fn write_csv<W: Write>(curves: &CurveSet, mut out: W) -> Result<()> {
    for line in &curves.manifest {
        writeln!(out, "# {line}")?;
    }
    let mut rows: Vec<(&str, &CurvePoint)> = curves.curves.iter().flat_map(|c| c.points.iter().map(move |p| (c.label.as_str(), p))).collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.x.total_cmp(&b.1.x)));

    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for (label, p) in rows {
        w.write_record([
            label.to_string(),
            format!("{:?}", p.x),
            format!("{:?}", p.mean_rate),
            format!("{:?}", p.stderr),
            format!("{:?}", p.rank_deficiency_fraction),
            p.trials.to_string(),
            curves.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(curves: &CurveSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(curves, std::io::BufWriter::new(file))
}
