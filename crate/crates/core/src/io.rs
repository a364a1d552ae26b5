//! File formats: datasets, grids, sweeps, table caches, state configs and
//! run manifests.
//!
//! Numbers are written in shortest round-trip form, so every file re-parses
//! to exactly the values that were written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{GridMeta, GridSpec, QuasiprobGrid, SignificanceSweep, SweepAxis};
use crate::filters::{FilterSpec, FilterTable};
use crate::gaussian_model::{GaussianState, Provenance, QuadratureDataset, QuadraturePoint};
use crate::pattern::PatternTable;
use crate::scalar::Real;

const PROVENANCE_PREFIX: &str = "# provenance: ";

fn parse_num<T: Real>(field: &str, line: usize) -> Result<T> {
    field.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
        line,
        message: format!("`{field}`: {e}"),
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Serializes a dataset: provenance comment, header `x,phi[,t]`, one row per
/// point.
pub fn format_dataset<T: Real>(dataset: &QuadratureDataset<T>) -> String {
    let mut out = String::with_capacity(dataset.len() * 44 + 128);
    let prov = serde_json::to_string(dataset.provenance()).expect("provenance serializes");
    let _ = writeln!(out, "{PROVENANCE_PREFIX}{prov}");
    match dataset.timestamps() {
        Some(ts) => {
            out.push_str("x,phi,t\n");
            for (p, t) in dataset.points().iter().zip(ts) {
                let _ = writeln!(out, "{},{},{}", p.x, p.phi, t);
            }
        }
        None => {
            out.push_str("x,phi\n");
            for p in dataset.points() {
                let _ = writeln!(out, "{},{}", p.x, p.phi);
            }
        }
    }
    out
}

/// Parses the format written by [`format_dataset`]. The provenance comment
/// is optional; other `#` lines are ignored.
pub fn parse_dataset<T: Real>(text: &str, source: &str) -> Result<QuadratureDataset<T>> {
    let mut provenance = None;
    let mut header: Option<bool> = None;
    let mut points = Vec::new();
    let mut times = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(json) = l.strip_prefix(PROVENANCE_PREFIX) {
            provenance = Some(serde_json::from_str::<Provenance>(json).map_err(|e| Error::Parse {
                line,
                message: format!("provenance: {e}"),
            })?);
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        let Some(with_time) = header else {
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            header = Some(match cols.as_slice() {
                ["x", "phi"] => false,
                ["x", "phi", "t"] => true,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected header `x,phi[,t]`, got `{l}`"),
                    })
                }
            });
            continue;
        };
        let fields: Vec<&str> = l.split(',').collect();
        let want = if with_time { 3 } else { 2 };
        if fields.len() != want {
            return Err(Error::Parse {
                line,
                message: format!("expected {want} fields, got {}", fields.len()),
            });
        }
        points.push(QuadraturePoint {
            x: parse_num(fields[0], line)?,
            phi: parse_num(fields[1], line)?,
        });
        if with_time {
            times.push(parse_num(fields[2], line)?);
        }
    }
    if header.is_none() {
        return Err(Error::Parse {
            line: 0,
            message: "missing header".into(),
        });
    }
    let provenance = provenance.unwrap_or_else(|| Provenance::new("file").with("path", source));
    let timestamps = (header == Some(true)).then_some(times);
    QuadratureDataset::new(points, timestamps, provenance)
}

pub fn write_dataset<T: Real>(path: &Path, dataset: &QuadratureDataset<T>) -> Result<()> {
    write_file(path, format_dataset(dataset).as_bytes())
}

pub fn read_dataset<T: Real>(path: &Path) -> Result<QuadratureDataset<T>> {
    parse_dataset(&fs::read_to_string(path)?, &path.display().to_string())
}

/// SHA-256 of a dataset's serialized form.
pub fn dataset_hash<T: Real>(dataset: &QuadratureDataset<T>) -> String {
    sha256_hex(format_dataset(dataset).as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Sidecar metadata of a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub filter: String,
    pub n: usize,
    pub grid: [f64; 5],
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub dataset_sha256: Option<String>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

/// `<grid>.meta.json` next to a grid file.
pub fn sidecar_path(grid_path: &Path) -> PathBuf {
    let mut s = grid_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Grid rows `re_alpha,im_alpha,P,sigma,S` (single-mode grids).
pub fn format_grid<T: Real>(grid: &QuasiprobGrid<T>) -> Result<String> {
    if grid.modes() != 1 {
        return Err(Error::invalid("grid", "only single-mode grids have a file format"));
    }
    let mut out = String::with_capacity(grid.len() * 80);
    out.push_str("re_alpha,im_alpha,P,sigma,S\n");
    for i in 0..grid.len() {
        let a = grid.alpha(i);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            a.re,
            a.im,
            grid.values()[i],
            grid.sigmas()[i],
            grid.significances()[i]
        );
    }
    Ok(out)
}

/// Writes the grid and its sidecar.
pub fn write_grid<T: Real>(
    path: &Path,
    grid: &QuasiprobGrid<T>,
    seed: Option<u64>,
    dataset_sha256: Option<String>,
) -> Result<()> {
    write_file(path, format_grid(grid)?.as_bytes())?;
    let g = grid.grid();
    let meta = GridSidecar {
        filter: grid.meta().filters[0].to_string(),
        n: grid.meta().n,
        grid: [g.re_min, g.re_max, g.im_min, g.im_max, g.step].map(|v| v.as_f64()),
        seed,
        dataset_sha256,
        provenance: grid.meta().provenance.first().cloned(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&sidecar_path(path), format!("{json}\n").as_bytes())
}

/// Reads a grid file and its sidecar.
pub fn read_grid<T: Real>(path: &Path) -> Result<QuasiprobGrid<T>> {
    let meta: GridSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| Error::Config(format!("grid sidecar: {e}")))?;
    let [a, b, c, d, e] = meta.grid.map(T::lit);
    let spec = GridSpec::new(a, b, c, d, e)?;
    let filter: FilterSpec<T> = meta.filter.parse()?;
    let text = fs::read_to_string(path)?;
    let mut p = Vec::new();
    let mut sigma = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if i == 0 || l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 5 fields, got {}", f.len()),
            });
        }
        let alpha = Complex::new(parse_num::<T>(f[0], i + 1)?, parse_num::<T>(f[1], i + 1)?);
        let expect = spec.node(p.len());
        if (alpha - expect).norm() > spec.step * T::lit(1e-6) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("node {alpha} does not match grid position {expect}"),
            });
        }
        p.push(parse_num(f[2], i + 1)?);
        sigma.push(parse_num(f[3], i + 1)?);
    }
    QuasiprobGrid::from_parts(
        spec,
        p,
        sigma,
        GridMeta {
            filters: vec![filter],
            n: meta.n,
            provenance: meta.provenance.into_iter().collect(),
        },
    )
}

/// Sweep rows `axis_value,Sigma,argmax_re,argmax_im` under a comment naming
/// the axis.
pub fn format_sweep<T: Real>(sweep: &SignificanceSweep<T>) -> String {
    let mut out = String::new();
    let axis = match sweep.axis {
        SweepAxis::Width { q } => format!("# axis: w (q={q})"),
        SweepAxis::DataCount { filter } => format!("# axis: N ({filter})"),
        SweepAxis::Exponent { w } => format!("# axis: q (w={w})"),
    };
    out.push_str(&axis);
    out.push('\n');
    out.push_str("axis_value,Sigma,argmax_re,argmax_im\n");
    for p in &sweep.points {
        let _ = writeln!(out, "{},{},{},{}", p.axis_value, p.sigma_max, p.argmax.re, p.argmax.im);
    }
    out
}

/// `(axis_value, Σ, argmax)` rows of a sweep file.
pub fn parse_sweep<T: Real>(text: &str) -> Result<Vec<(f64, T, Complex<T>)>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with("axis_value") {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 4 fields, got {}", f.len()),
            });
        }
        rows.push((
            parse_num::<f64>(f[0], i + 1)?,
            parse_num(f[1], i + 1)?,
            Complex::new(parse_num(f[2], i + 1)?, parse_num(f[3], i + 1)?),
        ));
    }
    Ok(rows)
}

/// Single-mode state as written in a TOML config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    #[serde(default)]
    pub squeezing_db: f64,
    /// Quadrature phase of minimum variance, radians.
    #[serde(default)]
    pub squeeze_angle: f64,
    /// `[re, im]` of the coherent displacement.
    #[serde(default)]
    pub displacement: [f64; 2],
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default)]
    pub angle_jitter_deg: f64,
}

fn one() -> f64 {
    1.0
}

impl StateConfig {
    pub fn to_state(&self) -> Result<GaussianState<f64>> {
        GaussianState::new(
            self.squeezing_db,
            self.squeeze_angle,
            Complex::new(self.displacement[0], self.displacement[1]),
            self.efficiency,
            self.angle_jitter_deg,
        )
    }

    pub fn from_state(state: &GaussianState<f64>) -> Self {
        Self {
            squeezing_db: state.squeezing_db(),
            squeeze_angle: state.squeeze_angle(),
            displacement: [state.displacement().re, state.displacement().im],
            efficiency: state.efficiency(),
            angle_jitter_deg: state.angle_jitter_deg(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("state config serializes")
    }
}

/// Filter table cache file name, keyed by `(q, w, M)`.
pub fn filter_cache_name<T: Real>(spec: &FilterSpec<T>, nodes: usize) -> String {
    format!("filter_q{}_w{}_M{}.csv", spec.q(), spec.w(), nodes)
}

pub fn format_filter_table<T: Real>(table: &FilterTable<T>) -> String {
    let mut out = format!("# filter: {}\nr,omega\n", table.spec());
    for (i, v) in table.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", table.radius(i), v);
    }
    out
}

pub fn parse_filter_table<T: Real>(text: &str, spec: FilterSpec<T>) -> Result<FilterTable<T>> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with("r,") {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `r,omega`".into(),
            });
        }
        values.push(parse_num(f[1], i + 1)?);
    }
    FilterTable::from_values(spec, values)
}

/// Pattern table cache file name, keyed by `(q, w, ξ_max, nodes)`.
pub fn pattern_cache_name<T: Real>(spec: &FilterSpec<T>, xi_max: T, nodes: usize) -> String {
    format!("pattern_q{}_w{}_xi{}_n{}.csv", spec.q(), spec.w(), xi_max, nodes)
}

pub fn format_pattern_table<T: Real>(table: &PatternTable<T>) -> String {
    let mut out = format!(
        "# filter: {}\n# xi_max: {}\n# node_step: {}\nm,xi,chi\n",
        table.spec(),
        table.requested_xi(),
        table.node_step()
    );
    for (m, v) in table.samples().iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", m, table.node_step() * T::from_usize_lossy(m), v);
    }
    out
}

pub fn parse_pattern_table<T: Real>(text: &str) -> Result<PatternTable<T>> {
    let mut spec: Option<FilterSpec<T>> = None;
    let mut xi_max: Option<T> = None;
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if let Some(s) = l.strip_prefix("# filter: ") {
            spec = Some(s.parse()?);
        } else if let Some(s) = l.strip_prefix("# xi_max: ") {
            xi_max = Some(parse_num(s, i + 1)?);
        } else if l.is_empty() || l.starts_with('#') || l.starts_with("m,") {
            continue;
        } else {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected `m,xi,chi`".into(),
                });
            }
            samples.push(parse_num(f[2], i + 1)?);
        }
    }
    let spec = spec.ok_or_else(|| Error::Config("pattern table lacks `# filter:`".into()))?;
    let xi_max = xi_max.ok_or_else(|| Error::Config("pattern table lacks `# xi_max:`".into()))?;
    PatternTable::from_samples(spec, xi_max, samples)
}

/// Directory-backed cache for filter and pattern tables.
#[derive(Debug, Clone)]
pub struct TableCache {
    root: PathBuf,
}

impl TableCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Loads the filter table for `(spec, nodes)` or builds and stores it.
    pub fn filter_table(&self, spec: FilterSpec<f64>, nodes: usize) -> Result<FilterTable<f64>> {
        let path = self.root.join(filter_cache_name(&spec, nodes));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(t) = parse_filter_table(&text, spec) {
                if t.intervals() == nodes {
                    return Ok(t);
                }
            }
        }
        let table = FilterTable::build(spec, nodes)?;
        write_file(&path, format_filter_table(&table).as_bytes())?;
        Ok(table)
    }

    /// Loads the pattern table for `(spec, ξ_max)` or builds and stores it.
    pub fn pattern_table(&self, spec: FilterSpec<f64>, xi_max: f64) -> Result<PatternTable<f64>> {
        let nodes = crate::pattern::node_count(&spec, xi_max);
        let path = self.root.join(pattern_cache_name(&spec, xi_max, nodes));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(t) = parse_pattern_table::<f64>(&text) {
                if t.spec() == &spec {
                    return Ok(t);
                }
            }
        }
        let table = match spec.q() {
            crate::filters::Exponent::Infinite => crate::pattern::compute_chi_samples(spec, xi_max)?,
            crate::filters::Exponent::Finite(_) => {
                PatternTable::build(&self.filter_table(spec, crate::filters::DEFAULT_TABLE_NODES)?, xi_max)?
            }
        };
        write_file(&path, format_pattern_table(&table).as_bytes())?;
        Ok(table)
    }
}

/// A file produced or consumed by a run, with its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        })
    }
}

/// Everything needed to reproduce a run. Contains no timestamps, so equal
/// runs produce byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "pquasi".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        write_file(path, format!("{json}\n").as_bytes())
    }
}
