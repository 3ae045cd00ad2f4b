//! Command-line front end. Every command is a pure function of its inputs
//! and seed; outputs carry a provenance block with content hashes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bandwidth::{bandwidth_grid, optimal_fixed_bandwidth, scan_results, BandwidthPath, Selection, SelectorConfig};
use crate::data::{CsvSpec, LoadedData, OutcomeScaling};
use crate::dgp::{draw, DgpKind, DgpSpec};
use crate::error::{arg_err, Error, Result};
use crate::estimator::{blip, cross_fit, tmle_update, SmoothingSpec, Stopping, Submodel, TmleOptions, TmleResult};
use crate::inference::{diagnostics, simultaneous_ci, Diagnostics, DEFAULT_MC_DRAWS};
use crate::kernels::PolyKernel;
use crate::learners::{fit_nuisance, LearnerKind, NuisanceFit, DEFAULT_G_TRUNCATION};
use crate::par;
use crate::sim::{order_checks, run_campaign, CampaignConfig, OrderCheckConfig};
use crate::util::sorted_quantile;

pub const DEFAULT_SEED: u64 = 1;
const TOOL: &str = "blipcdf";

#[derive(Debug, Parser)]
#[command(name = "blipcdf", version, about = "Targeted estimation of the smoothed CDF of the treatment-effect blip")]
pub struct Cli {
    /// Worker threads; defaults to all available cores. Output does not
    /// depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a polynomial kernel and print its measured order and moments.
    Kernel(KernelArgs),
    /// Estimate the smoothed blip CDF on a CSV dataset.
    Estimate(EstimateArgs),
    /// Scan a bandwidth grid and apply the monotone-run selector.
    Bandwidth(BandwidthArgs),
    /// Run a simulation campaign from a JSON config.
    Simulate(SimulateArgs),
    /// Write a simulated dataset as CSV.
    Draw(DrawArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelSel {
    /// Kernel construction parameter K (even, >= 0).
    #[arg(long = "kernel-K", visible_alias = "K", default_value_t = 0)]
    #[serde(rename = "K")]
    pub kernel_k: i64,
    /// Kernel support radius R.
    #[arg(long = "kernel-R", visible_alias = "R", default_value_t = 1.0)]
    #[serde(rename = "R")]
    pub kernel_r: f64,
    /// Read the kernel from a JSON file written by `kernel --out`, instead of K and R.
    #[arg(long = "kernel-file")]
    pub kernel_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub kernel: KernelSel,
    /// Write the kernel JSON here (stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Cvtmle,
    Tmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmodelArg {
    Clfm,
    Lfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerArg {
    Glm,
    Hal,
}

impl From<LearnerArg> for LearnerKind {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::Glm => LearnerKind::Glm,
            LearnerArg::Hal => LearnerKind::Hal,
        }
    }
}

/// Options shared by `estimate` and `bandwidth`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "A")]
    pub treatment: String,
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    #[command(flatten)]
    pub kernel: KernelSel,
    /// Bandwidth, or `auto` for n^(-1/(2J+1)). For `bandwidth` this is the
    /// top of the grid.
    #[arg(long, default_value = "auto")]
    pub delta: String,
    /// Comma-separated blip values in outcome units, or `quantiles:d` for
    /// d equally spaced quantiles of the initial blip estimate.
    #[arg(long, default_value = "quantiles:8", allow_hyphen_values = true)]
    pub t: String,
    #[arg(long, value_enum, default_value_t = LearnerArg::Glm)]
    pub learner: LearnerArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Cvtmle)]
    pub method: MethodArg,
    /// Cross-validation folds V for cvtmle.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Known propensity, as `col:NAME` naming a CSV column holding g(1|W).
    #[arg(long = "g-known")]
    pub g_known: Option<String>,
    /// Comma-separated columns to leave out of the confounders.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[arg(long = "g-truncation", default_value_t = DEFAULT_G_TRUNCATION)]
    pub g_truncation: f64,
    /// Outcome bounds `lo,hi` used to map Y into [0,1]; by default outcomes
    /// outside [0,1] are min/max scaled.
    #[arg(long = "y-bounds", allow_hyphen_values = true)]
    pub y_bounds: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = SubmodelArg::Clfm)]
    pub submodel: SubmodelArg,
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, env = "BLIPCDF_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long = "mc-draws", default_value_t = DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,
    /// Output directory for result.json and result.csv (JSON to stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long = "min-run", default_value_t = 5)]
    pub min_run: usize,
    /// Output directory for path.csv and selection.json (JSON to stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckArg {
    Order,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Campaign config JSON, or an order-check config with `--check order`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub check: Option<CheckArg>,
    /// Output directory (JSON to stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DrawArgs {
    #[arg(long, default_value = "well_specified")]
    pub dgp: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, env = "BLIPCDF_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output CSV (stdout otherwise). Columns W, A, Y, g.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Content hash of an input in git's object style: SHA-256 over
/// `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{:x}", h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub bytes: usize,
    pub hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    pub config: serde_json::Value,
}

impl Provenance {
    fn new<C: Serialize>(command: &str, seed: Option<u64>, inputs: Vec<InputRecord>, config: &C) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            inputs,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }
}

fn read_input(role: &str, path: &Path) -> Result<(Vec<u8>, InputRecord)> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let rec = InputRecord {
        role: role.into(),
        path: path.display().to_string(),
        bytes: bytes.len(),
        hash: content_hash(&bytes),
    };
    Ok((bytes, rec))
}

fn resolve_kernel(sel: &KernelSel, inputs: &mut Vec<InputRecord>) -> Result<PolyKernel> {
    match &sel.kernel_file {
        Some(p) => {
            let (bytes, rec) = read_input("kernel", p)?;
            inputs.push(rec);
            let text = String::from_utf8(bytes).map_err(|_| Error::Argument("kernel file is not UTF-8".into()))?;
            PolyKernel::from_json(&text)
        }
        None => PolyKernel::build(sel.kernel_k, sel.kernel_r),
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(lo), Ok(hi)) if lo.is_finite() && hi.is_finite() && lo < hi => Ok((lo, hi)),
            _ => arg_err(format!("{what} must be two finite numbers lo,hi with lo < hi, got '{s}'")),
        },
        _ => arg_err(format!("{what} must have the form lo,hi, got '{s}'")),
    }
}

/// Parsed `--t` value.
#[derive(Debug, Clone, PartialEq)]
pub enum TSpec {
    List(Vec<f64>),
    Quantiles(usize),
}

impl TSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(d) = s.strip_prefix("quantiles:") {
            return match d.trim().parse::<usize>() {
                Ok(d) if d >= 1 => Ok(TSpec::Quantiles(d)),
                _ => arg_err(format!("quantiles:d needs a positive integer d, got '{s}'")),
            };
        }
        let vals: std::result::Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => {
                if v.windows(2).any(|w| w[1] <= w[0]) {
                    return arg_err("t values must be strictly increasing");
                }
                Ok(TSpec::List(v))
            }
            _ => arg_err(format!("--t must be a comma-separated list of numbers or quantiles:d, got '{s}'")),
        }
    }
}

/// `d` equally spaced interior quantiles (levels j/(d+1)) of the blip,
/// with ties removed.
pub fn blip_quantiles(b: &[f64], d: usize) -> Vec<f64> {
    let mut sorted = b.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let mut q: Vec<f64> = (1..=d)
        .map(|j| sorted_quantile(&sorted, j as f64 / (d + 1) as f64))
        .collect();
    q.dedup();
    q
}

fn parse_delta(s: &str, n: usize, order: usize) -> Result<(f64, String)> {
    if s == "auto" {
        return Ok((optimal_fixed_bandwidth(n, order)?, "auto".into()));
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok((v, "given".into())),
        _ => arg_err(format!("--delta must be a positive number or 'auto', got '{s}'")),
    }
}

fn g_column(spec: &Option<String>) -> Result<Option<String>> {
    match spec {
        None => Ok(None),
        Some(s) => match s.strip_prefix("col:") {
            Some(name) if !name.is_empty() => Ok(Some(name.to_string())),
            _ => arg_err(format!("--g-known takes col:NAME (a CSV column of g(1|W)), got '{s}'")),
        },
    }
}

/// Everything `estimate` and `bandwidth` share up to the targeting step.
struct Prepared {
    loaded: LoadedData,
    kernel: PolyKernel,
    nuisance: NuisanceFit,
    /// Outcome range used to express blips in outcome units.
    y_range: f64,
    t_source: String,
    t_outcome: Vec<f64>,
    t_scaled: Vec<f64>,
    opts: TmleOptions,
    inputs: Vec<InputRecord>,
}

fn prepare(fit: &FitArgs) -> Result<Prepared> {
    if !(fit.level > 0.0 && fit.level < 1.0) {
        return arg_err(format!("--level must lie in (0,1), got {}", fit.level));
    }
    if !(0.0..0.5).contains(&fit.g_truncation) {
        return arg_err(format!("--g-truncation must lie in [0, 0.5), got {}", fit.g_truncation));
    }
    if fit.max_iter == 0 {
        return arg_err("--max-iter must be at least 1");
    }
    let t_spec = TSpec::parse(&fit.t)?;
    let scaling = match &fit.y_bounds {
        Some(s) => {
            let (lo, hi) = parse_pair(s, "--y-bounds")?;
            OutcomeScaling::Bounds(lo, hi)
        }
        None => OutcomeScaling::Auto,
    };
    let csv_spec = CsvSpec {
        treatment: fit.treatment.clone(),
        outcome: fit.outcome.clone(),
        known_g: g_column(&fit.g_known)?,
        ignore: fit.ignore.clone(),
        scaling,
    };
    let mut inputs = Vec::new();
    let kernel = resolve_kernel(&fit.kernel, &mut inputs)?;
    let (bytes, rec) = read_input("data", &fit.data)?;
    inputs.insert(0, rec);
    let loaded = crate::data::parse_csv(&bytes, &csv_spec)?;
    let data = &loaded.data;
    let (ylo, yhi) = data.y_bounds();
    let y_range = yhi - ylo;

    let learner = LearnerKind::from(fit.learner).build();
    let known = loaded.known_g.as_deref();
    let nuisance = match fit.method {
        MethodArg::Cvtmle => cross_fit(data, learner.as_ref(), fit.folds, fit.g_truncation, known, fit.seed)?.nuisance,
        MethodArg::Tmle => fit_nuisance(data, learner.as_ref(), fit.g_truncation, known, fit.seed)?,
    };
    let (t_source, t_scaled) = match t_spec {
        TSpec::List(v) => ("list".to_string(), v.iter().map(|t| t / y_range).collect::<Vec<_>>()),
        TSpec::Quantiles(d) => (format!("quantiles:{d}"), blip_quantiles(&blip(&nuisance), d)),
    };
    let t_outcome = t_scaled.iter().map(|t| t * y_range).collect();
    let opts = TmleOptions {
        stopping: Stopping::Auto,
        max_iter: fit.max_iter,
        submodel: match fit.submodel {
            SubmodelArg::Clfm => Submodel::Clfm,
            SubmodelArg::Lfm => Submodel::Lfm,
        },
    };
    Ok(Prepared {
        loaded,
        kernel,
        nuisance,
        y_range,
        t_source,
        t_outcome,
        t_scaled,
        opts,
        inputs,
    })
}

#[derive(Debug, Serialize)]
struct KernelInfo {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "R")]
    r: f64,
    order: usize,
    coefficients: Vec<f64>,
}

impl KernelInfo {
    fn of(k: &PolyKernel) -> Self {
        KernelInfo {
            k: k.construction_k(),
            r: k.radius(),
            order: k.order(),
            coefficients: k.coefficients().to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct DataInfo {
    n: usize,
    w_columns: Vec<String>,
    treated_fraction: f64,
    /// Bounds mapping Y to [0,1]: `y_scaled = (Y - lo) / (hi - lo)`.
    y_bounds: (f64, f64),
    g_known: bool,
}

fn data_info(p: &Prepared) -> DataInfo {
    DataInfo {
        n: p.loaded.data.n(),
        w_columns: p.loaded.w_names.clone(),
        treated_fraction: p.loaded.data.treated_fraction(),
        y_bounds: p.loaded.data.y_bounds(),
        g_known: p.loaded.known_g.is_some(),
    }
}

#[derive(Debug, Serialize)]
struct EstimateColumns {
    /// Blip values in outcome units.
    t: Vec<f64>,
    /// Blip values on the scaled outcome, as used internally.
    t_scaled: Vec<f64>,
    psi: Vec<f64>,
    initial_psi: Vec<f64>,
    se: Vec<f64>,
    ci_lo: Vec<f64>,
    ci_hi: Vec<f64>,
    sim_ci_lo: Vec<f64>,
    sim_ci_hi: Vec<f64>,
    iterations: usize,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct InferenceInfo {
    level: f64,
    z_pointwise: f64,
    z_simultaneous: f64,
    bonferroni_fallback: bool,
    mc_draws: usize,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    provenance: Provenance,
    data: DataInfo,
    method: MethodArg,
    learner: LearnerArg,
    folds: Option<usize>,
    kernel: KernelInfo,
    /// Bandwidth on the outcome-unit blip scale.
    delta: f64,
    delta_scaled: f64,
    delta_source: String,
    t_source: String,
    results: EstimateColumns,
    inference: InferenceInfo,
    diagnostics: Diagnostics,
}

#[derive(Debug, Serialize)]
struct EstimateConfig<'a> {
    #[serde(flatten)]
    fit: &'a FitArgs,
    mc_draws: usize,
}

fn estimate_output(args: &EstimateArgs) -> Result<(EstimateOutput, String)> {
    let fit = &args.fit;
    let p = prepare(fit)?;
    let n = p.loaded.data.n();
    let (delta_scaled, delta_source) = parse_delta(&fit.delta, n, p.kernel.order())?;
    let spec = SmoothingSpec::new(p.kernel.clone(), delta_scaled, p.t_scaled.clone())?;
    let data = &p.loaded.data;
    let res: TmleResult = tmle_update(data.a(), data.y(), &p.nuisance, &spec, &p.opts)?;
    let ci = simultaneous_ci(&res, fit.level, args.mc_draws, par::derive_seed(fit.seed, 2))?;
    let out = EstimateOutput {
        provenance: Provenance::new(
            "estimate",
            Some(fit.seed),
            p.inputs.clone(),
            &EstimateConfig {
                fit,
                mc_draws: args.mc_draws,
            },
        ),
        data: data_info(&p),
        method: fit.method,
        learner: fit.learner,
        folds: (fit.method == MethodArg::Cvtmle).then_some(fit.folds),
        kernel: KernelInfo::of(&p.kernel),
        delta: delta_scaled * p.y_range,
        delta_scaled,
        delta_source,
        t_source: p.t_source.clone(),
        results: EstimateColumns {
            t: p.t_outcome.clone(),
            t_scaled: p.t_scaled.clone(),
            psi: res.psi.clone(),
            initial_psi: res.initial_psi.clone(),
            se: res.se.clone(),
            ci_lo: ci.ci_lo.clone(),
            ci_hi: ci.ci_hi.clone(),
            sim_ci_lo: ci.sim_ci_lo.clone(),
            sim_ci_hi: ci.sim_ci_hi.clone(),
            iterations: res.iterations,
            converged: res.converged,
        },
        inference: InferenceInfo {
            level: ci.level,
            z_pointwise: ci.z_pointwise,
            z_simultaneous: ci.z_simultaneous,
            bonferroni_fallback: ci.bonferroni_fallback,
            mc_draws: ci.mc_draws,
        },
        diagnostics: diagnostics(&res),
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "psi", "initial_psi", "se", "ci_lo", "ci_hi", "sim_ci_lo", "sim_ci_hi"])?;
    let r = &out.results;
    for j in 0..r.t.len() {
        w.write_record(
            [r.t[j], r.psi[j], r.initial_psi[j], r.se[j], r.ci_lo[j], r.ci_hi[j], r.sim_ci_lo[j], r.sim_ci_hi[j]]
                .iter()
                .map(|v| v.to_string()),
        )?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
    Ok((out, csv))
}

#[derive(Debug, Serialize)]
struct SelectionRow {
    t: f64,
    t_scaled: f64,
    #[serde(flatten)]
    selection: Selection,
    run: Option<crate::bandwidth::Run>,
}

#[derive(Debug, Serialize)]
struct BandwidthOutput {
    provenance: Provenance,
    data: DataInfo,
    method: MethodArg,
    learner: LearnerArg,
    kernel: KernelInfo,
    level: f64,
    /// Grid on the scaled-blip bandwidth scale.
    grid: Vec<f64>,
    converged: Vec<bool>,
    selections: Vec<SelectionRow>,
}

#[derive(Debug, Serialize)]
struct BandwidthConfig<'a> {
    #[serde(flatten)]
    fit: &'a FitArgs,
    steps: usize,
    min_run: usize,
}

fn bandwidth_output(args: &BandwidthArgs) -> Result<(BandwidthOutput, String)> {
    let fit = &args.fit;
    if args.steps < args.min_run || args.min_run < 2 {
        return arg_err("need steps >= min-run >= 2");
    }
    let p = prepare(fit)?;
    let data = &p.loaded.data;
    let (h_max, _) = parse_delta(&fit.delta, data.n(), p.kernel.order())?;
    let cfg = SelectorConfig {
        steps: args.steps,
        min_run: args.min_run,
    };
    let grid = bandwidth_grid(h_max, cfg.steps);
    let spec = SmoothingSpec::new(p.kernel.clone(), h_max, p.t_scaled.clone())?;
    let results = scan_results(data.a(), data.y(), &p.nuisance, &spec, &grid, &p.opts)?;
    let path = BandwidthPath::from_results(grid.clone(), &results, &cfg)?;
    let selected = path.select_ci(fit.level)?;
    let selections = selected
        .into_iter()
        .enumerate()
        .map(|(j, s)| SelectionRow {
            t: p.t_outcome[j],
            t_scaled: p.t_scaled[j],
            selection: s,
            run: path.runs[j],
        })
        .collect();
    let out = BandwidthOutput {
        provenance: Provenance::new(
            "bandwidth",
            Some(fit.seed),
            p.inputs.clone(),
            &BandwidthConfig {
                fit,
                steps: args.steps,
                min_run: args.min_run,
            },
        ),
        data: data_info(&p),
        method: fit.method,
        learner: fit.learner,
        kernel: KernelInfo::of(&p.kernel),
        level: fit.level,
        grid,
        converged: path.converged.clone(),
        selections,
    };
    Ok((out, path.to_csv()?))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn write_outputs(out: &Option<PathBuf>, files: &[(&str, &str)]) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in files {
                fs::write(dir.join(name), body)?;
            }
        }
        None => print!("{}", files[0].1),
    }
    Ok(())
}

fn moment_table(k: &PolyKernel) -> String {
    let mut s = format!(
        "kernel K={} R={} measured order J={}\n  r  moment\n",
        k.construction_k(),
        k.radius(),
        k.order()
    );
    for r in (0..=k.order()).step_by(2) {
        s.push_str(&format!("{r:>3}  {:+.6e}\n", k.moment(r)));
    }
    s
}

fn cmd_kernel(args: &KernelArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let k = resolve_kernel(&args.kernel, &mut inputs)?;
    #[derive(Serialize)]
    struct KernelOutput<'a> {
        provenance: Provenance,
        #[serde(flatten)]
        kernel: &'a PolyKernel,
    }
    let json = to_json(&KernelOutput {
        provenance: Provenance::new("kernel", None, inputs, &args.kernel),
        kernel: &k,
    });
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, json)?;
            print!("{}", moment_table(&k));
        }
        None => {
            eprint!("{}", moment_table(&k));
            print!("{json}");
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (bytes, rec) = read_input("config", &args.config)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Argument("config is not UTF-8".into()))?;
    #[derive(Serialize)]
    struct Wrapped<T: Serialize> {
        provenance: Provenance,
        #[serde(flatten)]
        report: T,
    }
    match args.check {
        Some(CheckArg::Order) => {
            let cfg: OrderCheckConfig = serde_json::from_str(&text).map_err(|e| Error::Argument(e.to_string()))?;
            let report = order_checks(&cfg)?;
            let out = Wrapped {
                provenance: Provenance::new("simulate --check order", Some(cfg.seed), vec![rec], &cfg),
                report,
            };
            write_outputs(&args.out, &[("order.json", &to_json(&out))])
        }
        None => {
            let cfg: CampaignConfig = serde_json::from_str(&text).map_err(|e| Error::Argument(e.to_string()))?;
            let report = run_campaign(&cfg)?;
            let csv = report.to_csv()?;
            let out = Wrapped {
                provenance: Provenance::new("simulate", Some(cfg.seed), vec![rec], &cfg),
                report,
            };
            write_outputs(&args.out, &[("report.json", &to_json(&out)), ("report.csv", &csv)])
        }
    }
}

fn cmd_draw(args: &DrawArgs) -> Result<()> {
    let kind = DgpKind::parse(&args.dgp)?;
    let d = draw(&DgpSpec {
        kind,
        n: args.n,
        seed: args.seed,
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["W", "A", "Y", "g"])?;
    let wcol = d.data.w().column(0);
    for i in 0..d.data.n() {
        w.write_record([
            wcol[i].to_string(),
            d.data.a()[i].to_string(),
            d.data.y()[i].to_string(),
            d.g_true[i].to_string(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return arg_err("--threads must be at least 1");
    }
    par::init_threads(cli.threads);
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Estimate(a) => {
            let (out, csv) = estimate_output(a)?;
            for w in &out.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            write_outputs(&a.out, &[("result.json", &to_json(&out)), ("result.csv", &csv)])
        }
        Command::Bandwidth(a) => {
            let (out, csv) = bandwidth_output(a)?;
            write_outputs(&a.out, &[("selection.json", &to_json(&out)), ("path.csv", &csv)])
        }
        Command::Simulate(a) => cmd_simulate(a),
        Command::Draw(a) => cmd_draw(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_spec_parsing() {
        assert_eq!(TSpec::parse("quantiles:8").unwrap(), TSpec::Quantiles(8));
        assert_eq!(TSpec::parse("-0.1, 0.2").unwrap(), TSpec::List(vec![-0.1, 0.2]));
        assert!(TSpec::parse("quantiles:0").is_err());
        assert!(TSpec::parse("0.2,0.1").is_err());
        assert!(TSpec::parse("a,b").is_err());
    }

    #[test]
    fn quantiles_are_interior_and_unique() {
        let b: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let q = blip_quantiles(&b, 3);
        assert_eq!(q.len(), 3);
        assert!((q[1] - 0.5).abs() < 1e-12);
        assert_eq!(blip_quantiles(&[0.2; 10], 4), vec![0.2]);
    }

    #[test]
    fn hash_is_git_style() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash(b"hello\n"),
            "sha256:2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn g_known_syntax() {
        assert_eq!(g_column(&Some("col:g".into())).unwrap(), Some("g".into()));
        assert!(g_column(&Some("expit(W)".into())).is_err());
    }

    #[test]
    fn bad_arguments_exit_two() {
        assert_eq!(run(["blipcdf", "kernel", "--kernel-K", "3"]), 2);
        assert_eq!(run(["blipcdf", "frobnicate"]), 2);
    }
}
