//! Monte-Carlo estimation of the filtered quasiprobability on a phase-space
//! grid: `P(α) = mean_j f(x_j, φ_j, α)`, with its standard error and the
//! significance `S = -P/σ` of negative values.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{Exponent, FilterSpec, FilterTable, DEFAULT_TABLE_NODES};
use crate::gaussian_model::{Provenance, QuadratureDataset};
use crate::pattern::{out_of_range, pattern_argument, InfiniteFilter, PatternTable};
use crate::scalar::Real;

/// Rectangular grid of α values. Nodes are ordered row-major: `Im α` selects
/// the row (ascending), `Re α` the column (ascending).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub re_min: T,
    pub re_max: T,
    pub im_min: T,
    pub im_max: T,
    pub step: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(re_min: T, re_max: T, im_min: T, im_max: T, step: T) -> Result<Self> {
        let all = [re_min, re_max, im_min, im_max, step];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid", "bounds and step must be finite"));
        }
        if !(step > T::zero()) {
            return Err(Error::invalid("grid.step", "must be positive"));
        }
        if re_max < re_min || im_max < im_min {
            return Err(Error::invalid("grid", "max below min"));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
            step,
        })
    }

    /// Square grid `[-half, half]²`.
    pub fn square(half: T, step: T) -> Result<Self> {
        Self::new(-half, half, -half, half, step)
    }

    /// Square grid of half-width `half` centred on `center`.
    pub fn around(center: Complex<T>, half: T, step: T) -> Result<Self> {
        Self::new(center.re - half, center.re + half, center.im - half, center.im + half, step)
    }

    fn count(lo: T, hi: T, step: T) -> usize {
        ((hi - lo) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1
    }

    pub fn columns(&self) -> usize {
        Self::count(self.re_min, self.re_max, self.step)
    }

    pub fn rows(&self) -> usize {
        Self::count(self.im_min, self.im_max, self.step)
    }

    pub fn len(&self) -> usize {
        self.rows() * self.columns()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, index: usize) -> Complex<T> {
        let cols = self.columns();
        let (r, c) = (index / cols, index % cols);
        Complex::new(
            self.re_min + self.step * T::from_usize_lossy(c),
            self.im_min + self.step * T::from_usize_lossy(r),
        )
    }

    pub fn nodes(&self) -> Vec<Complex<T>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Largest `|α|` on the grid.
    pub fn max_abs(&self) -> T {
        let re = self.re_min.abs().max(self.re_max.abs());
        let im = self.im_min.abs().max(self.im_max.abs());
        re.hypot(im)
    }
}

/// `ξ_max = max|x| + 2 max|α|` needed to evaluate a dataset on a grid.
pub fn required_xi_max<T: Real>(dataset: &QuadratureDataset<T>, grid: &GridSpec<T>) -> T {
    let max_x = dataset.points().iter().fold(T::zero(), |m, p| m.max(p.x.abs()));
    max_x + T::lit(2.0) * grid.max_abs()
}

/// Pattern table sized for `dataset` on `grid`.
pub fn pattern_table_for<T: Real>(
    spec: FilterSpec<T>,
    dataset: &QuadratureDataset<T>,
    grid: &GridSpec<T>,
) -> Result<PatternTable<T>> {
    crate::pattern::compute_chi_samples(spec, required_xi_max(dataset, grid))
}

/// Context recorded alongside an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta<T> {
    pub filters: Vec<FilterSpec<T>>,
    pub n: usize,
    pub provenance: Vec<Provenance>,
}

/// Sampled quasiprobability with standard errors and significances.
///
/// For `n` modes the node index runs row-major over the per-mode grids with
/// mode 0 outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiprobGrid<T> {
    grids: Vec<GridSpec<T>>,
    p: Vec<T>,
    sigma: Vec<T>,
    s: Vec<T>,
    meta: GridMeta<T>,
}

impl<T: Real> QuasiprobGrid<T> {
    /// Assembles a single-mode grid from stored columns, recomputing `S`.
    pub fn from_parts(grid: GridSpec<T>, p: Vec<T>, sigma: Vec<T>, meta: GridMeta<T>) -> Result<Self> {
        if p.len() != grid.len() || sigma.len() != grid.len() {
            return Err(Error::LengthMismatch(format!(
                "grid has {} nodes, got {} values and {} errors",
                grid.len(),
                p.len(),
                sigma.len()
            )));
        }
        let s = p.iter().zip(&sigma).map(|(p, s)| -*p / *s).collect();
        Ok(Self {
            grids: vec![grid],
            p,
            sigma,
            s,
            meta,
        })
    }

    pub fn modes(&self) -> usize {
        self.grids.len()
    }

    /// Grid of mode 0.
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grids[0]
    }

    pub fn grids(&self) -> &[GridSpec<T>] {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Per-mode α for a joint node index.
    pub fn joint_alpha(&self, index: usize) -> Vec<Complex<T>> {
        let mut rest = index;
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.grids.len()];
        for (k, g) in self.grids.iter().enumerate().rev() {
            out[k] = g.node(rest % g.len());
            rest /= g.len();
        }
        out
    }

    /// α of mode 0 at a node (the node itself for single-mode grids).
    pub fn alpha(&self, index: usize) -> Complex<T> {
        self.joint_alpha(index)[0]
    }

    pub fn values(&self) -> &[T] {
        &self.p
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigma
    }

    pub fn significances(&self) -> &[T] {
        &self.s
    }

    pub fn meta(&self) -> &GridMeta<T> {
        &self.meta
    }

    /// Riemann sum of `P` over a single-mode grid, with the fully correlated
    /// bound `Σ σ · step²` on its statistical error.
    pub fn normalization(&self) -> (T, T) {
        let area: T = self.grids.iter().map(|g| g.step * g.step).fold(T::one(), |a, b| a * b);
        let total: f64 = self.p.iter().map(|v| v.as_f64()).sum();
        let err: f64 = self.sigma.iter().map(|v| v.as_f64()).filter(|v| v.is_finite()).sum();
        (T::lit(total) * area, T::lit(err) * area)
    }
}

/// Maximum of `S` over a grid and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxSignificance<T> {
    pub value: T,
    pub index: usize,
    pub alpha: Complex<T>,
}

/// `Σ = max S`; ties resolve to the first node in row-major order.
pub fn max_significance<T: Real>(grid: &QuasiprobGrid<T>) -> Result<MaxSignificance<T>> {
    if grid.meta.n < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: grid.meta.n,
        });
    }
    let mut best: Option<(T, usize)> = None;
    for (i, &s) in grid.s.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    let (value, index) = best.ok_or(Error::EmptyDataset)?;
    Ok(MaxSignificance {
        value,
        index,
        alpha: grid.alpha(index),
    })
}

/// Per-sample `(x, 2 cos φ, 2 sin φ)` for the inner loop.
fn prepared<T: Real>(dataset: &QuadratureDataset<T>) -> Vec<[T; 3]> {
    let two = T::lit(2.0);
    dataset
        .points()
        .iter()
        .map(|p| {
            let (s, c) = p.phi.sin_cos();
            [p.x, two * c, two * s]
        })
        .collect()
}

/// Mean and standard error of a stream, accumulated in `f64` around a shift
/// so that large offsets do not cancel catastrophically.
struct Moments {
    shift: f64,
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Moments {
    fn new(shift: f64) -> Self {
        Self {
            shift,
            sum: 0.0,
            sum_sq: 0.0,
            n: 0,
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        let d = v - self.shift;
        self.sum += d;
        self.sum_sq += d * d;
        self.n += 1;
    }

    /// `(mean, σ)` with Bessel correction; `σ` is NaN for one sample.
    fn finish(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean_d = self.sum / n;
        if self.n < 2 {
            return (self.shift + mean_d, f64::NAN);
        }
        let var = ((self.sum_sq - n * mean_d * mean_d) / (n - 1.0)).max(0.0);
        (self.shift + mean_d, (var / n).sqrt())
    }
}

/// Single-mode estimate `P(α)`, `σ(α)`, `S(α)` on every node of `grid`.
pub fn estimate_grid<T: Real>(
    dataset: &QuadratureDataset<T>,
    table: &PatternTable<T>,
    grid: &GridSpec<T>,
) -> Result<QuasiprobGrid<T>> {
    estimate_multimode(&[dataset], &[table], &[*grid])
}

/// Joint estimate for `n` modes measured together: the pattern value of a
/// joint event is the product of the per-mode pattern values.
pub fn estimate_multimode<T: Real>(
    datasets: &[&QuadratureDataset<T>],
    tables: &[&PatternTable<T>],
    grids: &[GridSpec<T>],
) -> Result<QuasiprobGrid<T>> {
    let modes = datasets.len();
    if modes == 0 || tables.len() != modes || grids.len() != modes {
        return Err(Error::LengthMismatch(format!(
            "{} datasets, {} tables, {} grids",
            modes,
            tables.len(),
            grids.len()
        )));
    }
    let n = datasets[0].len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(d) = datasets.iter().find(|d| d.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "modes must share the event count: {} vs {}",
            n,
            d.len()
        )));
    }
    let prepared: Vec<Vec<[T; 3]>> = datasets.iter().map(|d| prepared(d)).collect();
    let total: usize = grids.iter().map(|g| g.len()).product();

    let node_alphas = |index: usize| -> Vec<Complex<T>> {
        let mut rest = index;
        let mut out = vec![Complex::new(T::zero(), T::zero()); modes];
        for k in (0..modes).rev() {
            out[k] = grids[k].node(rest % grids[k].len());
            rest /= grids[k].len();
        }
        out
    };

    let miss = |k: usize, j: usize, a: Complex<T>| {
        let p = datasets[k].points()[j];
        out_of_range(pattern_argument(p.x, p.phi, a), tables[k].max_xi(), p.x, p.phi, a)
    };

    let moments: Vec<Moments> = if modes == 1 {
        single_mode_moments(&prepared[0], tables[0], &grids[0].nodes())
            .map_err(|(node, j)| miss(0, j, grids[0].node(node)))?
    } else {
        (0..total)
            .into_par_iter()
            .map(|index| -> Result<Moments> {
                let alphas = node_alphas(index);
                let mut acc: Option<Moments> = None;
                for j in 0..n {
                    let mut value = T::one();
                    for k in 0..modes {
                        let [x, c2, s2] = prepared[k][j];
                        let a = alphas[k];
                        match tables[k].lookup(x - (a.re * c2 + a.im * s2)) {
                            Some(v) => value *= v,
                            None => return Err(miss(k, j, a)),
                        }
                    }
                    let v = value.as_f64();
                    acc.get_or_insert_with(|| Moments::new(v)).push(v);
                }
                Ok(acc.expect("n > 0"))
            })
            .collect::<Result<_>>()?
    };
    let results: Vec<(T, T)> = moments
        .iter()
        .map(|m| {
            let (mean, se) = m.finish();
            (T::lit(mean), T::lit(se))
        })
        .collect();

    let (p, sigma): (Vec<T>, Vec<T>) = results.into_iter().unzip();
    let s = p.iter().zip(&sigma).map(|(p, s)| -*p / *s).collect();
    Ok(QuasiprobGrid {
        grids: grids.to_vec(),
        p,
        sigma,
        s,
        meta: GridMeta {
            filters: tables.iter().map(|t| *t.spec()).collect(),
            n,
            provenance: datasets.iter().map(|d| d.provenance().clone()).collect(),
        },
    })
}

const NODE_BLOCK: usize = 32;
const SAMPLE_BLOCK: usize = 4096;

/// Accumulates pattern values for every node, tiled so a block of samples
/// stays in cache while a block of nodes sweeps over it. Each node still
/// sees its samples in dataset order, so results do not depend on tiling.
fn single_mode_moments<T: Real>(
    prepared: &[[T; 3]],
    table: &PatternTable<T>,
    nodes: &[Complex<T>],
) -> std::result::Result<Vec<Moments>, (usize, usize)> {
    let chunks: Vec<std::result::Result<Vec<Moments>, (usize, usize)>> = nodes
        .par_chunks(NODE_BLOCK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * NODE_BLOCK;
            let mut accs = Vec::with_capacity(chunk.len());
            for (k, a) in chunk.iter().enumerate() {
                let [x, c2, s2] = prepared[0];
                let v = table.lookup(x - (a.re * c2 + a.im * s2)).ok_or((base + k, 0))?;
                accs.push(Moments::new(v.as_f64()));
            }
            for (b, block) in prepared.chunks(SAMPLE_BLOCK).enumerate() {
                for (k, a) in chunk.iter().enumerate() {
                    let acc = &mut accs[k];
                    for (j, &[x, c2, s2]) in block.iter().enumerate() {
                        match table.lookup(x - (a.re * c2 + a.im * s2)) {
                            Some(v) => acc.push(v.as_f64()),
                            None => return Err((base + k, b * SAMPLE_BLOCK + j)),
                        }
                    }
                }
            }
            Ok(accs)
        })
        .collect();
    let mut out = Vec::with_capacity(nodes.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Parameter varied along a significance sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis<T> {
    /// Filter width at a fixed exponent.
    Width { q: Exponent<T> },
    /// Data count at a fixed filter.
    DataCount { filter: FilterSpec<T> },
    /// Exponent at a fixed width.
    Exponent { w: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint<T> {
    /// Width, count, or exponent (`+inf` for `q = ∞`).
    pub axis_value: f64,
    pub sigma_max: T,
    pub argmax: Complex<T>,
}

/// `Σ` as a function of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceSweep<T> {
    pub axis: SweepAxis<T>,
    pub points: Vec<SweepPoint<T>>,
}

impl<T: Real> SignificanceSweep<T> {
    /// Least-squares slope of `ln Σ` against `ln(axis value)`, over points
    /// with positive `Σ`.
    pub fn log_log_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.sigma_max > T::zero() && p.axis_value > 0.0 && p.axis_value.is_finite())
            .map(|p| (p.axis_value.ln(), p.sigma_max.as_f64().ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

fn point<T: Real>(axis_value: f64, grid: &QuasiprobGrid<T>) -> Result<SweepPoint<T>> {
    let m = max_significance(grid)?;
    Ok(SweepPoint {
        axis_value,
        sigma_max: m.value,
        argmax: m.alpha,
    })
}

/// `Σ(w)` for each exponent in `qs` and width in `ws`. For finite `q` the
/// filter profile is tabulated once and rescaled to every width.
pub fn sweep_width<T: Real>(
    dataset: &QuadratureDataset<T>,
    qs: &[Exponent<T>],
    ws: &[T],
    grid: &GridSpec<T>,
) -> Result<Vec<SignificanceSweep<T>>> {
    let xi_max = required_xi_max(dataset, grid);
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut base: Option<FilterTable<T>> = None;
        let mut points = Vec::with_capacity(ws.len());
        for &w in ws {
            let spec = FilterSpec::new(q, w)?;
            let table = match q {
                Exponent::Infinite => PatternTable::build(&InfiniteFilter(spec), xi_max)?,
                Exponent::Finite(_) => {
                    let profile = match &base {
                        Some(b) => b.rescaled(w)?,
                        None => {
                            let b = FilterTable::build(spec, DEFAULT_TABLE_NODES)?;
                            base = Some(b.clone());
                            b
                        }
                    };
                    PatternTable::build(&profile, xi_max)?
                }
            };
            let est = estimate_grid(dataset, &table, grid)?;
            points.push(point(w.as_f64(), &est)?);
        }
        out.push(SignificanceSweep {
            axis: SweepAxis::Width { q },
            points,
        });
    }
    Ok(out)
}

/// `Σ(N)` on nested subsamples: one seeded shuffle of the dataset, then the
/// first `N_i` points for each requested size.
pub fn sweep_datasize<T: Real>(
    dataset: &QuadratureDataset<T>,
    sizes: &[usize],
    table: &PatternTable<T>,
    grid: &GridSpec<T>,
    seed: u64,
) -> Result<SignificanceSweep<T>> {
    if let Some(&too_big) = sizes.iter().find(|&&s| s > dataset.len()) {
        return Err(Error::InsufficientData {
            needed: too_big,
            got: dataset.len(),
        });
    }
    let shuffled = dataset.subsample(dataset.len(), seed)?;
    let points = sizes
        .iter()
        .map(|&n| {
            let est = estimate_grid(&shuffled.prefix(n), table, grid)?;
            point(n as f64, &est)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignificanceSweep {
        axis: SweepAxis::DataCount { filter: *table.spec() },
        points,
    })
}

/// `Σ(q)` at a fixed width.
pub fn sweep_exponent<T: Real>(
    dataset: &QuadratureDataset<T>,
    qs: &[Exponent<T>],
    w: T,
    grid: &GridSpec<T>,
) -> Result<SignificanceSweep<T>> {
    let xi_max = required_xi_max(dataset, grid);
    let points = qs
        .iter()
        .map(|&q| {
            let table = crate::pattern::compute_chi_samples(FilterSpec::new(q, w)?, xi_max)?;
            let est = estimate_grid(dataset, &table, grid)?;
            point(q.as_f64(), &est)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignificanceSweep {
        axis: SweepAxis::Exponent { w },
        points,
    })
}
