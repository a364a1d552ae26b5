//! Command-line pipelines: simulate data, build tables, sample grids and
//! sweeps, recover and uniformize phases, compare against phase locking.
//!
//! Every subcommand writes its outputs into `--out` together with a
//! `<command>.manifest.json` that echoes the configuration and the SHA-256 of
//! all inputs and outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex;
use serde::Serialize;
use serde_json::json;

use pquasi::estimator::{self, max_significance, GridSpec, SweepAxis};
use pquasi::filters::{Exponent, FilterSpec, FilterTable, RadialFilter, DEFAULT_TABLE_NODES};
use pquasi::gaussian_model::{analytic_p_omega, sample_dataset, OracleControls, PhasePolynomial, PhaseSchedule};
use pquasi::io::{self, FileDigest, Manifest, StateConfig, TableCache};
use pquasi::pattern::{InfiniteFilter, PatternTable};
use pquasi::phase::{self, DcTrace, Slope, UniformizeOptions};
use pquasi::{Dataset, State};

/// Environment variable naming the default table cache directory.
pub const CACHE_ENV: &str = "PQUASI_CACHE";

#[derive(Debug, Parser, Serialize)]
#[command(name = "pquasi", version, about = "Regularized P-function sampling from homodyne data")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Table cache directory (defaults to $PQUASI_CACHE; no caching if unset).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Simulate homodyne data for a Gaussian state.
    Simulate(SimulateArgs),
    /// Tabulate a filter profile on [0, 8w].
    FilterTable(FilterTableArgs),
    /// Tabulate the pattern kernel at its Nyquist nodes.
    PatternTable(PatternTableArgs),
    /// Sample the regularized P function on a grid.
    Sample(SampleArgs),
    /// Maximal significance versus filter width.
    SweepW(SweepWArgs),
    /// Maximal significance versus data count.
    SweepN(SweepNArgs),
    /// Fit the phase of a DC trace (or a simulated one).
    PhaseFit(PhaseFitArgs),
    /// Select a uniformly distributed phase subset.
    Uniformize(UniformizeArgs),
    /// Kolmogorov-Smirnov test of phase uniformity.
    UniformityCheck(DataArgs),
    /// Continuous versus phase-locked measurement on the same state.
    PlmCompare(PlmArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Preset (vacuum, squeezed, displaced-squeezed, coherent) or TOML path.
    #[arg(long, default_value = "squeezed")]
    pub state: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// uniform | locked:<K> | sweep:<c>,<d>,<e>,<f>,<g>,<t0>,<t1>
    #[arg(long, default_value = "uniform")]
    pub schedule: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterTableArgs {
    #[arg(long, default_value = "q=8,w=1.3")]
    pub filter: String,
    #[arg(long, default_value_t = DEFAULT_TABLE_NODES)]
    pub nodes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PatternTableArgs {
    #[arg(long, default_value = "q=inf,w=1.3")]
    pub filter: String,
    #[arg(long)]
    pub xi_max: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Dataset file (`x,phi[,t]`).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "q=inf,w=1.3")]
    pub filter: String,
    /// remin,remax,immin,immax,step
    #[arg(long, default_value = "-6,6,-6,6,0.1")]
    pub grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepWArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated exponents (`inf` allowed).
    #[arg(long, default_value = "4,5,8,13,21,inf")]
    pub q: String,
    /// Comma-separated widths.
    #[arg(long, default_value = "0.6,0.8,1.0,1.2,1.3,1.4,1.6,1.8")]
    pub w: String,
    #[arg(long, default_value = "-3,3,-3,3,0.1")]
    pub grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepNArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "q=inf,w=1.3")]
    pub filter: String,
    /// Comma-separated subsample sizes.
    #[arg(long)]
    pub sizes: String,
    #[arg(long, default_value = "-3,3,-3,3,0.1")]
    pub grid: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseFitArgs {
    /// Two-column trace file `t,i`; omit to fit a simulated reference trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// rising | falling
    #[arg(long, default_value = "rising")]
    pub slope: String,
    /// Noise of the simulated trace relative to its amplitude.
    #[arg(long, default_value_t = phase::CALIBRATED_RELATIVE_NOISE)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Dataset with timestamps to receive the fitted phases.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct UniformizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = phase::DEFAULT_COINCIDENCE_TOLERANCE)]
    pub tolerance: f64,
    /// Number of phase targets (default from the sparsest phase bin).
    #[arg(long)]
    pub targets: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub min_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PlmArgs {
    #[arg(long, default_value = "displaced-squeezed")]
    pub state: String,
    /// Number of locked phases on [0, π].
    #[arg(long, default_value_t = 21)]
    pub k: usize,
    #[arg(long, default_value_t = 2_100_000)]
    pub n: usize,
    #[arg(long, default_value = "q=8,w=1.3")]
    pub filter: String,
    /// Grid around the displacement: half-width,step.
    #[arg(long, default_value = "3,0.1")]
    pub window: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Named states used throughout the documentation and tests.
pub fn preset(name: &str) -> Option<State> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let zero = Complex::new(0.0, 0.0);
    match name {
        "vacuum" => Some(State::vacuum()),
        "squeezed" => State::new(3.1, half_pi, zero, 0.9, 0.0).ok(),
        // |ζ| = 1: V_min = e^{-2}, i.e. 20/ln 10 dB
        "displaced-squeezed" => State::new(20.0 / std::f64::consts::LN_10, half_pi, Complex::new(42.0, 0.0), 1.0, 0.0).ok(),
        "coherent" => State::coherent(Complex::new(2.0, 0.0)).ok(),
        _ => None,
    }
}

/// Resolves `--state`: preset name or TOML file.
pub fn load_state(spec: &str) -> Result<(State, Option<PathBuf>)> {
    if let Some(s) = preset(spec) {
        return Ok((s, None));
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path).with_context(|| format!("state: `{spec}` is neither a preset nor a readable file"))?;
    Ok((StateConfig::parse(&text)?.to_state()?, Some(path)))
}

pub fn parse_schedule(s: &str) -> Result<PhaseSchedule<f64>> {
    if s == "uniform" {
        return Ok(PhaseSchedule::UniformRandom);
    }
    if let Some(k) = s.strip_prefix("locked:") {
        return Ok(PhaseSchedule::LockedPhases {
            count: k.parse().context("schedule: locked phase count")?,
        });
    }
    if let Some(rest) = s.strip_prefix("sweep:") {
        let v = parse_list(rest).context("schedule: sweep coefficients")?;
        if v.len() != 7 {
            bail!("schedule: sweep needs c,d,e,f,g,t0,t1");
        }
        return Ok(PhaseSchedule::PolynomialSweep(PhasePolynomial::new(
            [v[0], v[1], v[2], v[3], v[4]],
            v[5],
            v[6],
        )?));
    }
    bail!("schedule: expected uniform, locked:<K> or sweep:<c,d,e,f,g,t0,t1>, got `{s}`")
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("not a number: `{v}`")))
        .collect()
}

pub fn parse_grid(s: &str) -> Result<GridSpec<f64>> {
    let v = parse_list(s).context("grid")?;
    if v.len() != 5 {
        bail!("grid: expected remin,remax,immin,immax,step");
    }
    Ok(GridSpec::new(v[0], v[1], v[2], v[3], v[4])?)
}

fn parse_exponents(s: &str) -> Result<Vec<Exponent<f64>>> {
    s.split(',')
        .map(|v| match v.trim() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            other => Ok(Exponent::Finite(other.parse().with_context(|| format!("q: `{other}`"))?)),
        })
        .collect()
}

struct Run<'a> {
    out: &'a Path,
    cache: Option<TableCache>,
    manifest: Manifest,
}

impl Run<'_> {
    fn input(&mut self, path: &Path) -> Result<String> {
        let d = FileDigest::of(path)?;
        let sha = d.sha256.clone();
        self.manifest.inputs.push(d);
        Ok(sha)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.output(name);
        std::fs::create_dir_all(self.out)?;
        std::fs::write(&path, text)?;
        self.record(&path)?;
        Ok(path)
    }

    fn pattern_table(&self, spec: FilterSpec<f64>, xi_max: f64) -> Result<PatternTable<f64>> {
        Ok(match &self.cache {
            Some(c) => c.pattern_table(spec, xi_max)?,
            None => pquasi::pattern::compute_chi_samples(spec, xi_max)?,
        })
    }

    fn filter_table(&self, spec: FilterSpec<f64>, nodes: usize) -> Result<FilterTable<f64>> {
        Ok(match &self.cache {
            Some(c) => c.filter_table(spec, nodes)?,
            None => FilterTable::build(spec, nodes)?,
        })
    }
}

/// Runs a parsed command line. Returns a one-line JSON summary for stdout.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let command = serde_json::to_value(&cli.command)?;
    let name = command
        .as_object()
        .and_then(|o| o.keys().next().cloned())
        .unwrap_or_default();
    let name = kebab(&name);
    let cache = cli
        .cache
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .map(TableCache::new);
    let mut run = Run {
        out: &cli.out,
        cache,
        manifest: Manifest::new(&name, command),
    };
    let summary = dispatch(&cli.command, &mut run)?;
    run.manifest.write(&cli.out.join(format!("{name}.manifest.json")))?;
    Ok(summary)
}

fn kebab(s: &str) -> String {
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('-');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn dispatch(command: &Command, run: &mut Run) -> Result<serde_json::Value> {
    match command {
        Command::Simulate(a) => {
            let (state, path) = load_state(&a.state)?;
            if let Some(p) = path {
                run.input(&p)?;
            }
            let schedule = parse_schedule(&a.schedule)?;
            let ds = sample_dataset(&state, &schedule, a.n, a.seed)?;
            let path = run.output("dataset.csv");
            io::write_dataset(&path, &ds)?;
            run.record(&path)?;
            let state_toml = StateConfig::from_state(&state).to_toml();
            run.write_text("state.toml", &state_toml)?;
            Ok(json!({"dataset": path, "n": ds.len()}))
        }
        Command::FilterTable(a) => {
            let spec: FilterSpec<f64> = a.filter.parse()?;
            let table = run.filter_table(spec, a.nodes)?;
            let path = run.write_text(&io::filter_cache_name(&spec, a.nodes), &io::format_filter_table(&table))?;
            Ok(json!({"table": path, "omega0": table.values()[0], "nodes": a.nodes}))
        }
        Command::PatternTable(a) => {
            let spec: FilterSpec<f64> = a.filter.parse()?;
            let table = run.pattern_table(spec, a.xi_max)?;
            let name = io::pattern_cache_name(&spec, a.xi_max, table.samples().len());
            let path = run.write_text(&name, &io::format_pattern_table(&table))?;
            Ok(json!({
                "table": path,
                "chi0": table.samples()[0],
                "max_xi": table.max_xi(),
                "node_step": table.node_step(),
                "nodes": table.samples().len(),
            }))
        }
        Command::Sample(a) => {
            let sha = run.input(&a.data)?;
            let ds: Dataset = io::read_dataset(&a.data)?;
            let spec: FilterSpec<f64> = a.filter.parse()?;
            let grid = parse_grid(&a.grid)?;
            let table = run.pattern_table(spec, estimator::required_xi_max(&ds, &grid))?;
            let est = estimator::estimate_grid(&ds, &table, &grid)?;
            let path = run.output("grid.csv");
            io::write_grid(&path, &est, None, Some(sha))?;
            run.record(&path)?;
            run.record(&io::sidecar_path(&path))?;
            let peak = max_significance(&est).ok();
            let (norm, norm_err) = est.normalization();
            Ok(json!({
                "grid": path,
                "Sigma": peak.map(|p| p.value),
                "argmax": peak.map(|p| [p.alpha.re, p.alpha.im]),
                "normalization": norm,
                "normalization_error": norm_err,
            }))
        }
        Command::SweepW(a) => {
            run.input(&a.data)?;
            let ds: Dataset = io::read_dataset(&a.data)?;
            let qs = parse_exponents(&a.q)?;
            let ws = parse_list(&a.w)?;
            let grid = parse_grid(&a.grid)?;
            let sweeps = estimator::sweep_width(&ds, &qs, &ws, &grid)?;
            let mut files = Vec::new();
            for s in &sweeps {
                let SweepAxis::Width { q } = s.axis else { unreachable!() };
                files.push(run.write_text(&format!("sweep_w_q{q}.csv"), &io::format_sweep(s))?);
            }
            Ok(json!({"sweeps": files}))
        }
        Command::SweepN(a) => {
            run.input(&a.data)?;
            let ds: Dataset = io::read_dataset(&a.data)?;
            let spec: FilterSpec<f64> = a.filter.parse()?;
            let grid = parse_grid(&a.grid)?;
            let sizes: Vec<usize> = parse_list(&a.sizes)?.into_iter().map(|v| v as usize).collect();
            let table = run.pattern_table(spec, estimator::required_xi_max(&ds, &grid))?;
            let sweep = estimator::sweep_datasize(&ds, &sizes, &table, &grid, a.seed)?;
            let path = run.write_text("sweep_n.csv", &io::format_sweep(&sweep))?;
            Ok(json!({"sweep": path, "slope": sweep.log_log_slope()}))
        }
        Command::PhaseFit(a) => {
            let slope = match a.slope.as_str() {
                "rising" => Slope::Rising,
                "falling" => Slope::Falling,
                other => bail!("slope: expected rising or falling, got `{other}`"),
            };
            let trace = match &a.trace {
                Some(p) => {
                    run.input(p)?;
                    read_trace(p, slope)?
                }
                None => {
                    let truth = phase::SineModel::reference();
                    phase::simulate_dc_trace(&truth, a.noise * truth.a, phase::DEFAULT_DC_RATE, 0.02, a.seed)?
                }
            };
            let fit = phase::fit_dc_phase(&trace)?;
            let report = json!({
                "a": fit.a,
                "b": fit.b,
                "coefficients": fit.coefficients,
                "t_start": fit.t_start,
                "t_end": fit.t_end,
                "r_squared": fit.r_squared,
                "residual_variance": fit.residual_variance,
                "iterations": fit.iterations,
                "monotone": fit.monotone,
            });
            run.write_text("phase_fit.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
            if let Some(p) = &a.data {
                run.input(p)?;
                let ds: Dataset = io::read_dataset(p)?;
                let (fitted, rejected) = phase::apply_phase_fit(&ds, &fit)?;
                run.write_text("phased.csv", &io::format_dataset(&fitted))?;
                return Ok(json!({"fit": report, "rejected": rejected}));
            }
            Ok(report)
        }
        Command::Uniformize(a) => {
            run.input(&a.data)?;
            let ds: Dataset = io::read_dataset(&a.data)?;
            let before = phase::uniformity_check(ds.phases()).ok();
            let u = phase::uniformize(
                &ds,
                a.seed,
                UniformizeOptions {
                    tolerance: a.tolerance,
                    targets: a.targets,
                    min_fraction: a.min_fraction,
                },
            )?;
            run.write_text("uniformized.csv", &io::format_dataset(&u.dataset))?;
            Ok(json!({
                "selected": u.selected.len(),
                "input": ds.len(),
                "targets": u.targets,
                "skipped": u.skipped,
                "ks_before": before.map(|c| c.ks_distance),
                "ks_after": u.check.map(|c| c.ks_distance),
                "threshold": u.check.map(|c| c.threshold),
                "pass": u.check.map(|c| c.pass),
            }))
        }
        Command::UniformityCheck(a) => {
            run.input(&a.data)?;
            let ds: Dataset = io::read_dataset(&a.data)?;
            let c = phase::uniformity_check(ds.phases())?;
            Ok(json!({"ks_distance": c.ks_distance, "threshold": c.threshold, "pass": c.pass}))
        }
        Command::PlmCompare(a) => plm_compare(a, run),
    }
}

fn read_trace(path: &Path, slope: Slope) -> Result<DcTrace<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut t = Vec::new();
    let mut i = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with('t') {
            continue;
        }
        let v = parse_list(l).with_context(|| format!("trace line {}", n + 1))?;
        if v.len() != 2 {
            bail!("trace line {}: expected `t,i`", n + 1);
        }
        t.push(v[0]);
        i.push(v[1]);
    }
    Ok(DcTrace::new(t, i, slope)?)
}

/// Counts grid nodes deviating from the analytic oracle by more than 5σ.
fn oracle_violations<F: RadialFilter<f64>>(state: &State, filter: &F, grid: &pquasi::Estimate) -> Result<usize> {
    let mut bad = 0;
    for i in 0..grid.len() {
        let oracle = analytic_p_omega(state, filter, grid.alpha(i), OracleControls::default())?;
        if (grid.values()[i] - oracle).abs() > 5.0 * grid.sigmas()[i] {
            bad += 1;
        }
    }
    Ok(bad)
}

fn plm_compare(a: &PlmArgs, run: &mut Run) -> Result<serde_json::Value> {
    let (state, path) = load_state(&a.state)?;
    if let Some(p) = path {
        run.input(&p)?;
    }
    let spec: FilterSpec<f64> = a.filter.parse()?;
    let win = parse_list(&a.window)?;
    if win.len() != 2 {
        bail!("window: expected half-width,step");
    }
    let grid = GridSpec::around(state.effective_displacement(), win[0], win[1])?;
    let cpm = sample_dataset(&state, &PhaseSchedule::UniformRandom, a.n, a.seed)?;
    let locked = sample_dataset(&state, &PhaseSchedule::LockedPhases { count: a.k }, a.n, a.seed.wrapping_add(1))?;
    let plm = phase::plm_interpolate(&locked, a.k, a.seed.wrapping_add(2))?;
    let xi = estimator::required_xi_max(&cpm, &grid).max(estimator::required_xi_max(&plm, &grid));

    let (table, violations) = match spec.q() {
        Exponent::Infinite => {
            let t = run.pattern_table(spec, xi)?;
            (t, None)
        }
        Exponent::Finite(_) => {
            let profile = run.filter_table(spec, DEFAULT_TABLE_NODES)?;
            (PatternTable::build(&profile, xi)?, Some(profile))
        }
    };
    let cpm_grid = estimator::estimate_grid(&cpm, &table, &grid)?;
    let plm_grid = estimator::estimate_grid(&plm, &table, &grid)?;
    let (cpm_bad, plm_bad) = match &violations {
        Some(profile) => (
            oracle_violations(&state, profile, &cpm_grid)?,
            oracle_violations(&state, profile, &plm_grid)?,
        ),
        None => {
            let f = InfiniteFilter(spec);
            (oracle_violations(&state, &f, &cpm_grid)?, oracle_violations(&state, &f, &plm_grid)?)
        }
    };
    for (name, g) in [("cpm_grid.csv", &cpm_grid), ("plm_grid.csv", &plm_grid)] {
        let path = run.output(name);
        io::write_grid(&path, g, Some(a.seed), None)?;
        run.record(&path)?;
        run.record(&io::sidecar_path(&path))?;
    }
    let cpm_peak = max_significance(&cpm_grid)?;
    let plm_peak = max_significance(&plm_grid)?;
    let summary = json!({
        "cpm_Sigma": cpm_peak.value,
        "plm_Sigma": plm_peak.value,
        "cpm_argmax": [cpm_peak.alpha.re, cpm_peak.alpha.im],
        "plm_argmax": [plm_peak.alpha.re, plm_peak.alpha.im],
        "cpm_oracle_violations": cpm_bad,
        "plm_oracle_violations": plm_bad,
        "nodes": grid.len(),
    });
    run.write_text("plm_compare.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(summary)
}

/// Machine-readable error record printed on failure.
pub fn error_record(err: &anyhow::Error) -> serde_json::Value {
    let kind = match err.downcast_ref::<pquasi::Error>() {
        Some(pquasi::Error::InvalidParameter { .. }) | Some(pquasi::Error::Config(_)) => "config",
        Some(pquasi::Error::Io(_)) => "io",
        Some(pquasi::Error::Parse { .. }) => "parse",
        Some(_) => "computation",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "config",
    };
    let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
    json!({"error": {"kind": kind, "message": err.to_string(), "chain": chain}})
}
