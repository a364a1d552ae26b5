//! The one-dimensional kernel `χ(ξ)` behind the pattern function, sampled
//! at Nyquist nodes and reconstructed by band-limited interpolation.
//!
//! `χ(ξ) = (2/π) ∫_0^{b_c} b e^{b²/2} cos(bξ) Ω(b) db` with `b_c = 8w`, so its
//! spectrum lives on `[-b_c, b_c]` and the samples `χ(π m / b_c)` determine
//! it completely.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{Exponent, FilterSpec, FilterTable, RadialFilter, DEFAULT_TABLE_NODES};
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// Oversampling factor of the dense lookup relative to the node spacing.
pub const LOOKUP_OVERSAMPLING: usize = 128;

const GL_ORDER: usize = 10;
const MAX_DOUBLINGS: usize = 8;
const GUARD_FACTOR: usize = 4;

/// χ samples at `ξ_m = π m / b_c`, `m = 0..=M`; negative `m` follow by
/// evenness.
#[derive(Debug, Clone)]
pub struct PatternTable<T> {
    spec: FilterSpec<T>,
    node_step: T,
    usable_xi: T,
    samples: Vec<T>,
    inv_dense_step: T,
    dense_limit: T,
    /// Cubic through dense nodes `i-1..=i+2`, in powers of `u = t - i`.
    cubics: Vec<[T; 4]>,
}

/// Usable range `(1 + 10%)·ξ_max` and the padded node count behind it.
fn layout<T: Real>(spec: &FilterSpec<T>, xi_max: T) -> (T, T, usize) {
    let step = T::PI() / spec.cutoff();
    let usable = xi_max * T::lit(1.1);
    let usable_nodes = (usable / step).ceil().to_usize().unwrap_or(0) + 1;
    // Nodes past the usable edge only feed the sinc tails of in-range points;
    // χ decays like 1/ξ², so the truncated tail needs a wide margin.
    let nodes = usable_nodes + (GUARD_FACTOR * usable_nodes).max(20);
    (step, usable, nodes)
}

/// Number of stored samples for a table covering `ξ_max`.
pub fn node_count<T: Real>(spec: &FilterSpec<T>, xi_max: T) -> usize {
    layout(spec, xi_max).2
}

/// Quadrature nodes `(b, weight)` for the χ integral with `panels` panels.
fn spectrum_points<T: Real>(spec: &FilterSpec<T>, panels: usize) -> Vec<(T, T)> {
    let (x, w) = gauss_legendre::<T>(GL_ORDER);
    let half = T::lit(0.5);
    let mut pts = Vec::with_capacity(panels * GL_ORDER);
    let two_w = T::lit(2.0) * spec.w();
    match spec.q() {
        Exponent::Infinite => {
            // b = 2w(1 - t²) flattens the (2w - b)^{3/2} edge of the disc filter
            let h = T::one() / T::from_usize_lossy(panels);
            for p in 0..panels {
                let a = h * T::from_usize_lossy(p);
                for (xi, wi) in x.iter().zip(&w) {
                    let t = a + half * h * (*xi + T::one());
                    let b = two_w * (T::one() - t * t);
                    pts.push((b, half * h * *wi * T::lit(2.0) * two_w * t));
                }
            }
        }
        Exponent::Finite(_) => {
            let len = spec.cutoff();
            let h = len / T::from_usize_lossy(panels);
            for p in 0..panels {
                let a = h * T::from_usize_lossy(p);
                for (xi, wi) in x.iter().zip(&w) {
                    pts.push((a + half * h * (*xi + T::one()), half * h * *wi));
                }
            }
        }
    }
    pts
}

/// Panel count honouring width ≤ min(w/10, π/(4 ξ_top)) in `b`.
fn base_panels<T: Real>(spec: &FilterSpec<T>, xi_top: T) -> usize {
    let h = (spec.w() / T::lit(10.0)).min(T::PI() / (T::lit(4.0) * xi_top.max(T::one())));
    let stretch = match spec.q() {
        // db/dt ≤ 4w over t ∈ [0, 1]
        Exponent::Infinite => T::lit(4.0) * spec.w(),
        Exponent::Finite(_) => spec.cutoff(),
    };
    (stretch / h).ceil().to_usize().unwrap_or(1).max(1)
}

/// `χ(ξ)` for each entry of `xis` on a fixed quadrature rule.
fn chi_on_rule<T: Real>(weighted: &[(T, T)], xis: &[T]) -> Vec<T> {
    let scale = T::lit(2.0) / T::PI();
    xis.par_iter()
        .map(|&xi| {
            let mut acc = 0.0f64;
            for &(b, g) in weighted {
                acc += (g * (b * xi).cos()).as_f64();
            }
            scale * T::lit(acc)
        })
        .collect()
}

/// `b e^{b²/2} Ω(b) · weight` at every quadrature node, built in the log
/// domain so that huge and tiny factors never meet in linear form.
fn weighted_spectrum<T: Real, F: RadialFilter<T>>(filter: &F, pts: &[(T, T)]) -> Vec<(T, T)> {
    let half = T::lit(0.5);
    pts.iter()
        .filter_map(|&(b, wt)| {
            if b <= T::zero() {
                return None;
            }
            let ln_f = filter.ln_value(b);
            if ln_f == T::neg_infinity() || ln_f.is_nan() {
                return None;
            }
            let g = (half * b * b + ln_f + b.ln()).exp() * wt;
            (g != T::zero()).then_some((b, g))
        })
        .collect()
}

/// Evaluates χ at the given points by composite Gauss–Legendre quadrature,
/// doubling the panel count until successive results agree to `rel_tol`
/// (relative to each value, with a floor at `rel_tol · 1e-4 · χ(0)`).
pub fn chi_direct<T: Real, F: RadialFilter<T>>(filter: &F, xis: &[T], rel_tol: T) -> Result<Vec<T>> {
    let spec = *filter.spec();
    let rel_tol = rel_tol.max(T::precision_floor() * T::lit(100.0));
    let xi_top = xis.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut panels = base_panels(&spec, xi_top);
    let mut probe: Vec<T> = xis.to_vec();
    probe.push(T::zero());
    let mut prev = chi_on_rule(&weighted_spectrum(filter, &spectrum_points(&spec, panels)), &probe);
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let next = chi_on_rule(&weighted_spectrum(filter, &spectrum_points(&spec, panels)), &probe);
        let chi0 = next.last().copied().unwrap_or(T::one()).abs();
        let floor = rel_tol * T::lit(1e-4) * chi0;
        let worst = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b).abs() / (rel_tol * b.abs()).max(floor))
            .fold(T::zero(), T::max);
        if worst <= T::one() {
            let mut out = next;
            out.pop();
            return Ok(out);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure {
        what: "pattern kernel chi".into(),
        estimate: prev.last().map(|v| v.as_f64()).unwrap_or(f64::NAN),
        error: f64::NAN,
        evaluations: panels * GL_ORDER,
    })
}

/// Tabulates χ for a filter, covering `|ξ| ≤ 1.1 ξ_max`.
///
/// For finite `q` the filter profile is tabulated first with
/// [`DEFAULT_TABLE_NODES`] nodes.
pub fn compute_chi_samples<T: Real>(spec: FilterSpec<T>, xi_max: T) -> Result<PatternTable<T>> {
    match spec.q() {
        Exponent::Infinite => PatternTable::build(&InfiniteFilter(spec), xi_max),
        Exponent::Finite(_) => PatternTable::build(&FilterTable::build(spec, DEFAULT_TABLE_NODES)?, xi_max),
    }
}

/// The closed-form `q = ∞` profile without a table.
#[derive(Debug, Clone, Copy)]
pub struct InfiniteFilter<T>(pub FilterSpec<T>);

impl<T: Real> RadialFilter<T> for InfiniteFilter<T> {
    fn spec(&self) -> &FilterSpec<T> {
        &self.0
    }
    fn value(&self, r: T) -> T {
        crate::filters::disc_autocorrelation(self.0.w(), r.abs())
    }
}

impl<T: Real> PatternTable<T> {
    /// Computes the Nyquist samples with relative tolerance `1e-8`.
    pub fn build<F: RadialFilter<T>>(filter: &F, xi_max: T) -> Result<Self> {
        if !(xi_max > T::zero()) || !xi_max.is_finite() {
            return Err(Error::invalid("xi_max", "must be finite and positive"));
        }
        let spec = *filter.spec();
        let (step, usable, nodes) = layout(&spec, xi_max);
        let xis: Vec<T> = (0..nodes).map(|m| step * T::from_usize_lossy(m)).collect();
        let samples = chi_direct(filter, &xis, T::lit(1e-8))?;
        Self::assemble(spec, step, usable, samples)
    }

    /// Restores a table from stored samples (`m = 0..=M`). The sample count
    /// must match the layout implied by `xi_max`.
    pub fn from_samples(spec: FilterSpec<T>, xi_max: T, samples: Vec<T>) -> Result<Self> {
        let (step, usable, nodes) = layout(&spec, xi_max);
        if samples.len() != nodes {
            return Err(Error::LengthMismatch(format!(
                "pattern table for xi_max {xi_max} needs {nodes} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", "non-finite chi sample"));
        }
        Self::assemble(spec, step, usable, samples)
    }

    fn assemble(spec: FilterSpec<T>, node_step: T, usable_xi: T, samples: Vec<T>) -> Result<Self> {
        let dense_step = node_step / T::from_usize_lossy(LOOKUP_OVERSAMPLING);
        let mut table = Self {
            spec,
            node_step,
            usable_xi,
            samples,
            inv_dense_step: dense_step.recip(),
            dense_limit: usable_xi / dense_step,
            cubics: Vec::new(),
        };
        // Dense nodes reach one stencil width past the usable edge.
        let count = (usable_xi / dense_step).ceil().to_usize().unwrap_or(0) + 3;
        let dense: Vec<T> = (0..count)
            .into_par_iter()
            .map(|i| table.sinc_sum(dense_step * T::from_usize_lossy(i)))
            .collect();
        let (two, three, six) = (T::lit(2.0), T::lit(3.0), T::lit(6.0));
        table.cubics = (0..count - 2)
            .map(|i| {
                // node i-1 mirrors to node 1 at the origin by evenness
                let p0 = dense[(i as isize - 1).unsigned_abs()];
                let (p1, p2, p3) = (dense[i], dense[i + 1], dense[i + 2]);
                [
                    p1,
                    -p0 / three - p1 / two + p2 - p3 / six,
                    p0 / two - p1 + p2 / two,
                    -p0 / six + p1 / two - p2 / two + p3 / six,
                ]
            })
            .collect();
        Ok(table)
    }

    pub fn spec(&self) -> &FilterSpec<T> {
        &self.spec
    }

    /// Spectral cutoff `b_c = 8w`.
    pub fn cutoff(&self) -> T {
        self.spec.cutoff()
    }

    /// Node spacing `π / b_c`.
    pub fn node_step(&self) -> T {
        self.node_step
    }

    /// Largest `|ξ|` that may be queried.
    pub fn max_xi(&self) -> T {
        self.usable_xi
    }

    /// The `ξ_max` this table was requested for (before the guard band).
    pub fn requested_xi(&self) -> T {
        self.usable_xi / T::lit(1.1)
    }

    /// Samples `χ(π m / b_c)` for `m = 0..=M`.
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    /// Sample at signed node index `m`.
    pub fn sample(&self, m: i64) -> Option<T> {
        self.samples.get(m.unsigned_abs() as usize).copied()
    }

    /// Whittaker–Shannon sum over every stored node, `ξ ≥ 0` or `< 0`.
    fn sinc_sum(&self, xi: T) -> T {
        let xi = xi.abs();
        let t = xi / self.node_step;
        let m = t.round();
        // ξ = step·m rounds to t = m within an ulp or two
        let at_node = (t - m).abs() <= T::lit(4.0) * T::epsilon() * t.max(T::one());
        let eps = T::PI() * (t - m);
        let m = m.to_i64().unwrap_or(i64::MAX);
        let last = self.samples.len() as i64 - 1;
        if at_node && m <= last {
            return self.samples[m as usize];
        }
        let s = eps.sin();
        let mut acc = T::zero();
        for j in -last..=last {
            let d = m - j;
            let term = self.samples[j.unsigned_abs() as usize] / (eps + T::PI() * T::lit(d as f64));
            if d % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc * s
    }

    fn range_check(&self, xi: T) -> Result<()> {
        if xi.abs() <= self.usable_xi {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                xi: xi.as_f64(),
                max_xi: self.usable_xi.as_f64(),
                x: f64::NAN,
                phi: f64::NAN,
                alpha_re: f64::NAN,
                alpha_im: f64::NAN,
            })
        }
    }

    /// χ(ξ) by the full sinc sum; bit-exact at the nodes.
    pub fn chi_eval(&self, xi: T) -> Result<T> {
        self.range_check(xi)?;
        Ok(self.sinc_sum(xi))
    }

    /// Fast χ(ξ) from the oversampled cache of the sinc sum (four-point
    /// Lagrange). `None` outside the usable range.
    #[inline]
    pub fn lookup(&self, xi: T) -> Option<T> {
        let t = xi.abs() * self.inv_dense_step;
        if !(t <= self.dense_limit) {
            return None;
        }
        // t >= 0, so truncation is floor (and avoids a libm call)
        let i = t.to_usize()?;
        let u = t - T::from_usize_lossy(i);
        let [c0, c1, c2, c3] = *self.cubics.get(i)?;
        Some(((c3 * u + c2) * u + c1) * u + c0)
    }

    /// The pattern function `f(x, φ, α) = χ(x - 2|α| cos(arg α - φ))`.
    pub fn pattern_eval(&self, x: T, phi: T, alpha: Complex<T>) -> Result<T> {
        let xi = pattern_argument(x, phi, alpha);
        self.chi_eval(xi).map_err(|_| out_of_range(xi, self.usable_xi, x, phi, alpha))
    }
}

/// `ξ = x - 2 (Re α cos φ + Im α sin φ)`.
#[inline]
pub fn pattern_argument<T: Real>(x: T, phi: T, alpha: Complex<T>) -> T {
    let (s, c) = phi.sin_cos();
    x - T::lit(2.0) * (alpha.re * c + alpha.im * s)
}

pub(crate) fn out_of_range<T: Real>(xi: T, max_xi: T, x: T, phi: T, alpha: Complex<T>) -> Error {
    Error::OutOfRange {
        xi: xi.as_f64(),
        max_xi: max_xi.as_f64(),
        x: x.as_f64(),
        phi: phi.as_f64(),
        alpha_re: alpha.re.as_f64(),
        alpha_im: alpha.im.as_f64(),
    }
}
