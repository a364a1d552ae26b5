//! The q-parametrized nonclassicality filter family.
//!
//! A filter is the autocorrelation `Ω_w(β) = ∫ ω(β') ω(β + β') d²β'` of a
//! radial base function `ω_{w,q}(r) ∝ exp(-(r/w)^q)`. For `q = ∞` the base is
//! a normalized disc and the autocorrelation has a closed form; for finite `q`
//! it is computed numerically and tabulated on `[0, 8w]`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hankel::{bessel_j0, radial_fourier};
use crate::quadrature::{adaptive, CompositeGauss, Tolerance};
use crate::scalar::Real;

/// Decay exponent `q` of the filter family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Exponent<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    /// Ordering key; `Infinite` compares above every finite exponent.
    pub fn as_f64(&self) -> f64 {
        match self {
            Exponent::Finite(q) => q.as_f64(),
            Exponent::Infinite => f64::INFINITY,
        }
    }
}

impl<T: Real> fmt::Display for Exponent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(q) => write!(f, "{q}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Filter parameters: exponent `q ∈ (2, ∞]` and width `w > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec<T> {
    q: Exponent<T>,
    w: T,
}

impl<T: Real> FilterSpec<T> {
    pub fn new(q: Exponent<T>, w: T) -> Result<Self> {
        if let Exponent::Finite(q) = q {
            if !(q > T::lit(2.0)) || !q.is_finite() {
                return Err(Error::invalid("q", format!("must satisfy 2 < q <= inf, got {q}")));
            }
        }
        if !(w > T::zero()) || !w.is_finite() {
            return Err(Error::invalid("w", format!("filter width must be positive, got {w}")));
        }
        Ok(Self { q, w })
    }

    pub fn finite(q: T, w: T) -> Result<Self> {
        Self::new(Exponent::Finite(q), w)
    }

    pub fn infinite(w: T) -> Result<Self> {
        Self::new(Exponent::Infinite, w)
    }

    pub fn q(&self) -> Exponent<T> {
        self.q
    }

    pub fn w(&self) -> T {
        self.w
    }

    /// Same exponent, different width.
    pub fn with_width(&self, w: T) -> Result<Self> {
        Self::new(self.q, w)
    }

    /// Radial cutoff used for tabulation and the pattern integral, `8w`.
    pub fn cutoff(&self) -> T {
        T::lit(8.0) * self.w
    }

    /// Radius beyond which the filter is identically zero (q = ∞) or
    /// tabulated as zero (finite q).
    pub fn support(&self) -> T {
        match self.q {
            Exponent::Infinite => T::lit(2.0) * self.w,
            Exponent::Finite(_) => self.cutoff(),
        }
    }
}

impl<T: Real> fmt::Display for FilterSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q={},w={}", self.q, self.w)
    }
}

/// Parses `q=<val>,w=<val>`; `q` accepts `inf`, `infinity` or `∞`.
impl<T: Real> FromStr for FilterSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut q = None;
        let mut w = None;
        for part in s.split(',') {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in filter spec, got `{part}`")))?;
            let val = val.trim();
            match key.trim() {
                "q" => {
                    q = Some(match val.to_ascii_lowercase().as_str() {
                        "inf" | "infinity" | "∞" => Exponent::Infinite,
                        other => Exponent::Finite(parse_real(other, "q")?),
                    })
                }
                "w" => w = Some(parse_real(val, "w")?),
                other => return Err(Error::Config(format!("unknown filter key `{other}`"))),
            }
        }
        let q = q.ok_or_else(|| Error::Config("filter spec is missing q".into()))?;
        let w = w.ok_or_else(|| Error::Config("filter spec is missing w".into()))?;
        Self::new(q, w)
    }
}

fn parse_real<T: Real>(s: &str, field: &str) -> Result<T> {
    s.parse::<f64>()
        .ok()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::invalid(field, format!("not a number: `{s}`")))
}

fn base_norm<T: Real>(q: T, w: T) -> T {
    let gamma = T::lit(statrs::function::gamma::gamma((T::lit(2.0) / q).as_f64()));
    T::lit(2.0).powf(q.recip()) / w * (q / (T::TAU() * gamma)).sqrt()
}

/// Base function `ω_{w,q}(r)` for finite `q`, normalized so that
/// `∫ |ω|² d²β = 1`.
pub fn omega_base<T: Real>(spec: &FilterSpec<T>, r: T) -> Result<T> {
    let q = match spec.q {
        Exponent::Finite(q) => q,
        Exponent::Infinite => {
            return Err(Error::invalid("q", "base function is only defined for finite q"));
        }
    };
    if r < T::zero() {
        return Err(Error::invalid("r", "radius must be non-negative"));
    }
    Ok(base_norm(q, spec.w) * (-(r / spec.w).powf(q)).exp())
}

/// Closed-form `q = ∞` filter: normalized overlap area of two discs of
/// radius `w` whose centres are `r` apart.
pub fn disc_autocorrelation<T: Real>(w: T, r: T) -> T {
    let u = r / (T::lit(2.0) * w);
    if u >= T::one() {
        return T::zero();
    }
    T::lit(2.0) / T::PI() * (u.acos() - u * (T::one() - u * u).sqrt())
}

const AUTOCORR_REL_TOL: f64 = 1e-10;
const AUTOCORR_MAX_SEGMENTS: usize = 400;

/// Filter profile `Ω_w(r)`.
///
/// For finite `q` the autocorrelation integral is evaluated in polar
/// coordinates centred on the midpoint `-β/2`, where the integrand peaks; the
/// integrand is positive so relative accuracy survives deep in the tail.
pub fn filter_value<T: Real>(spec: &FilterSpec<T>, r: T) -> Result<T> {
    if r < T::zero() {
        return Err(Error::invalid("r", "radius must be non-negative"));
    }
    let q = match spec.q {
        Exponent::Infinite => return Ok(disc_autocorrelation(spec.w, r)),
        Exponent::Finite(q) => q,
    };
    let w = spec.w;
    let two = T::lit(2.0);
    let half_r = r / two;
    // log of the integrand peak: both base functions evaluated at r/2
    let ln_peak = -two * (half_r / w).powf(q);
    if ln_peak < T::lit(-740.0) {
        return Ok(T::zero());
    }
    let norm = base_norm(q, w);
    let ln_norm2 = two * norm.ln();
    let s_max = w * (-ln_peak + T::lit(60.0)).powf(q.recip());
    let tol = Tolerance::relative(T::lit(AUTOCORR_REL_TOL));
    let mut inner_error = None;
    let outer = adaptive(
        "filter autocorrelation (radial)",
        |s: T| {
            if inner_error.is_some() {
                return T::zero();
            }
            let a = s * s + half_r * half_r;
            let b = s * r;
            let inner = adaptive(
                "filter autocorrelation (angular)",
                |psi: T| {
                    let c = b * psi.cos();
                    let dm = (a - c).max(T::zero()).sqrt();
                    let dp = (a + c).sqrt();
                    (ln_norm2 - (dm / w).powf(q) - (dp / w).powf(q)).exp()
                },
                T::zero(),
                T::FRAC_PI_2(),
                Tolerance::relative(T::lit(AUTOCORR_REL_TOL * 0.1)),
                AUTOCORR_MAX_SEGMENTS,
            );
            match inner {
                Ok(est) => T::lit(4.0) * s * est.value,
                Err(e) => {
                    inner_error = Some(e);
                    T::zero()
                }
            }
        },
        T::zero(),
        s_max,
        tol,
        AUTOCORR_MAX_SEGMENTS,
    );
    if let Some(e) = inner_error {
        return Err(e);
    }
    Ok(outer?.value)
}

/// Independent Fourier-side route for finite `q`: `Ω = F⁻¹ |F ω|²` via two
/// order-zero Hankel transforms. Accurate to ~1e-12 absolute near the peak
/// but without relative accuracy in the far tail.
pub fn filter_value_fourier<T: Real>(spec: &FilterSpec<T>, radii: &[T]) -> Result<Vec<T>> {
    let q = match spec.q {
        Exponent::Finite(q) => q,
        Exponent::Infinite => {
            return Ok(radii.iter().map(|&r| disc_autocorrelation(spec.w, r)).collect());
        }
    };
    let w = spec.w;
    let r_max = w * T::lit(745.0).powf(q.recip());
    let k_max = T::lit(80.0) / w;
    let k_pts = CompositeGauss::<T>::new(10).points(T::zero(), k_max, 800);
    let ks: Vec<T> = k_pts.iter().map(|p| p.0).collect();
    let spec_copy = *spec;
    let base = move |r: T| omega_base(&spec_copy, r).unwrap_or(T::zero());
    let omega_hat = radial_fourier(base, r_max, 200, &ks);
    Ok(radii
        .iter()
        .map(|&r| {
            let s: T = k_pts
                .iter()
                .zip(&omega_hat)
                .map(|(&(k, wk), &oh)| wk * k * oh * oh * bessel_j0(k * r))
                .sum();
            s / T::TAU()
        })
        .collect())
}

/// Anything that can supply a radial filter profile `Ω(r)`.
pub trait RadialFilter<T: Real>: Sync {
    fn spec(&self) -> &FilterSpec<T>;
    fn value(&self, r: T) -> T;
    /// Natural log of `Ω(r)`; `-inf` where the filter vanishes. Only
    /// meaningful where `Ω(r) > 0`.
    fn ln_value(&self, r: T) -> T {
        self.value(r).ln()
    }
    /// Radius beyond which the profile is treated as zero.
    fn support(&self) -> T {
        self.spec().support()
    }
}

/// Default node count for tabulated filters.
pub const DEFAULT_TABLE_NODES: usize = 4096;

/// Tabulated radial filter profile on `M + 1` uniform nodes over `[0, 8w]`.
#[derive(Debug, Clone)]
pub struct FilterTable<T> {
    spec: FilterSpec<T>,
    step: T,
    values: Vec<T>,
    ln_values: Vec<T>,
}

impl<T: Real> FilterTable<T> {
    /// Evaluates `filter_value` on every node and validates the result.
    /// Nodes are always computed in double precision.
    pub fn build(spec: FilterSpec<T>, nodes: usize) -> Result<Self> {
        if nodes < 256 {
            return Err(Error::invalid("M", format!("need at least 256 nodes, got {nodes}")));
        }
        let wide = FilterSpec::<f64>::new(
            match spec.q {
                Exponent::Finite(q) => Exponent::Finite(q.as_f64()),
                Exponent::Infinite => Exponent::Infinite,
            },
            spec.w.as_f64(),
        )?;
        let step = wide.cutoff() / nodes as f64;
        let values = (0..=nodes)
            .into_par_iter()
            .map(|i| filter_value(&wide, step * i as f64))
            .collect::<Result<Vec<f64>>>()?;
        let ln_values = values.iter().map(|v| T::lit(v.ln())).collect();
        Self::assemble(spec, values.into_iter().map(T::lit).collect(), ln_values)
    }

    /// Wraps previously computed node values (e.g. from a cache file),
    /// enforcing every table invariant.
    pub fn from_values(spec: FilterSpec<T>, values: Vec<T>) -> Result<Self> {
        let ln_values = values.iter().map(|v| v.ln()).collect();
        Self::assemble(spec, values, ln_values)
    }

    fn assemble(spec: FilterSpec<T>, values: Vec<T>, ln_values: Vec<T>) -> Result<Self> {
        let nodes = values.len().saturating_sub(1);
        if nodes < 256 {
            return Err(Error::invalid("M", format!("need at least 256 nodes, got {nodes}")));
        }
        let step = spec.cutoff() / T::from_usize_lossy(nodes);
        let table = Self {
            spec,
            step,
            ln_values,
            values,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let tol = T::lit(1e-6).max(T::precision_floor());
        if (self.values[0] - T::one()).abs() > tol {
            return Err(Error::invalid(
                "filter",
                format!("normalization Ω(0) = {} deviates from 1", self.values[0]),
            ));
        }
        let slack = T::precision_floor() * T::lit(100.0);
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() || v.abs() > T::one() + slack {
                return Err(Error::invalid("filter", format!("node {i} has value {v} outside [-1, 1]")));
            }
        }
        match self.spec.q {
            Exponent::Infinite => {
                let support = T::lit(2.0) * self.spec.w;
                for (i, v) in self.values.iter().enumerate() {
                    if self.radius(i) >= support && *v != T::zero() {
                        return Err(Error::invalid("filter", format!("node {i} beyond 2w is {v}, not 0")));
                    }
                }
            }
            Exponent::Finite(_) => {
                let tail = *self.values.last().expect("non-empty");
                if tail.abs() >= T::lit(1e-50).max(T::min_positive_value()) {
                    return Err(Error::invalid(
                        "q",
                        format!("filter value {tail:e} at the cutoff 8w is not below 1e-50; q too close to 2"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &FilterSpec<T> {
        &self.spec
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn radius(&self, i: usize) -> T {
        self.step * T::from_usize_lossy(i)
    }

    /// The same profile at another width, by the scaling law
    /// `Ω_w(r) = Ω_1(r / w)`: node `i` sits at `r/w = 8 i / M` for any `w`.
    pub fn rescaled(&self, w: T) -> Result<Self> {
        Self::from_values(self.spec.with_width(w)?, self.values.clone())
    }

    /// Four-point Lagrange interpolation on a node-centred stencil. Nodes
    /// below zero mirror by evenness of the profile.
    fn stencil(&self, r: T, data: &[T]) -> Option<T> {
        let t = r / self.step;
        let last = data.len() - 1;
        let i = t.floor().to_usize()?;
        if i >= last {
            return None;
        }
        let start = (i as isize - 1).min(last as isize - 3);
        let u = t - T::lit(start as f64);
        let mut acc = T::zero();
        for k in 0..4isize {
            let idx = (start + k).unsigned_abs();
            let mut basis = T::one();
            for j in 0..4isize {
                if j != k {
                    basis = basis * (u - T::lit(j as f64)) / T::lit((k - j) as f64);
                }
            }
            let v = data[idx];
            if !v.is_finite() {
                return None;
            }
            acc += basis * v;
        }
        Some(acc)
    }
}

impl<T: Real> RadialFilter<T> for FilterTable<T> {
    fn spec(&self) -> &FilterSpec<T> {
        &self.spec
    }

    fn value(&self, r: T) -> T {
        let r = r.abs();
        match self.spec.q {
            Exponent::Infinite => disc_autocorrelation(self.spec.w, r),
            Exponent::Finite(_) => {
                if r >= self.spec.cutoff() {
                    return T::zero();
                }
                match self.stencil(r, &self.ln_values) {
                    Some(lv) => lv.exp(),
                    // stencil touches underflowed nodes: the value is below 1e-300
                    None => self.stencil(r, &self.values).unwrap_or(T::zero()).max(T::zero()),
                }
            }
        }
    }

    fn ln_value(&self, r: T) -> T {
        let r = r.abs();
        match self.spec.q {
            Exponent::Infinite => disc_autocorrelation(self.spec.w, r).ln(),
            Exponent::Finite(_) => {
                if r >= self.spec.cutoff() {
                    return T::neg_infinity();
                }
                self.stencil(r, &self.ln_values)
                    .unwrap_or_else(|| self.value(r).ln())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_gaussian_limit_and_bad_width() {
        assert!(FilterSpec::<f64>::finite(2.0f64, 1.0).is_err());
        assert!(FilterSpec::<f64>::finite(1.5f64, 1.0).is_err());
        assert!(FilterSpec::<f64>::infinite(0.0f64).is_err());
        assert!(FilterSpec::<f64>::infinite(-1.0f64).is_err());
        assert!(FilterSpec::<f64>::finite(2.0001f64, 1.0).is_ok());
    }

    #[test]
    fn parses_cli_filter_strings() {
        let s: FilterSpec<f64> = "q=inf,w=1.3".parse().unwrap();
        assert!(s.q().is_infinite());
        assert_eq!(s.w(), 1.3);
        let s: FilterSpec<f64> = "w=2, q=8".parse().unwrap();
        assert_eq!(s.q(), Exponent::Finite(8.0));
        assert!("q=2,w=1".parse::<FilterSpec<f64>>().is_err());
        assert!("q=8".parse::<FilterSpec<f64>>().is_err());
        assert!("q=8,w=1,z=3".parse::<FilterSpec<f64>>().is_err());
    }

    #[test]
    fn base_function_values() {
        let s = FilterSpec::<f64>::finite(8.0, 1.0).unwrap();
        // 2^{1/8} sqrt(8 / (2π Γ(1/4))), Γ(1/4) = 3.625609908221908
        let want = 2f64.powf(0.125) * (8.0 / (2.0 * PI * 3.625_609_908_221_908)).sqrt();
        assert!((omega_base(&s, 0.0).unwrap() - want).abs() < 1e-14);
        assert!((want - 0.6462).abs() < 1e-4);
        assert!(omega_base(&s, 50.0).unwrap() == 0.0);

        let s4 = FilterSpec::<f64>::finite(4.0, 2.0).unwrap();
        let ratio = omega_base(&s4, 2.0).unwrap() / omega_base(&s4, 0.0).unwrap();
        assert!((ratio - (-1f64).exp()).abs() < 1e-15);

        assert!(omega_base(&FilterSpec::<f64>::infinite(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn closed_form_filter_values() {
        let s = FilterSpec::infinite(1.0f64).unwrap();
        assert_eq!(filter_value(&s, 0.0).unwrap(), 1.0);
        assert_eq!(filter_value(&s, 2.0).unwrap(), 0.0);
        assert_eq!(filter_value(&s, 7.0).unwrap(), 0.0);
        let want = 2.0 / PI * (PI / 3.0 - 3f64.sqrt() / 4.0);
        assert!((filter_value(&s, 1.0).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.3910).abs() < 1e-4);
    }

    #[test]
    fn finite_q_normalization() {
        for q in [4.0, 8.0, 13.0] {
            let s = FilterSpec::<f64>::finite(q, 1.3).unwrap();
            let v = filter_value(&s, 0.0).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "q={q}: Ω(0) = {v}");
        }
    }

    #[test]
    fn polar_and_fourier_routes_agree() {
        let s = FilterSpec::<f64>::finite(8.0, 1.0).unwrap();
        let radii = [0.0, 0.3, 0.9, 1.4, 2.0, 2.6];
        let fourier = filter_value_fourier(&s, &radii).unwrap();
        for (r, f) in radii.iter().zip(fourier) {
            let p = filter_value(&s, *r).unwrap();
            assert!((p - f).abs() < 1e-8, "r={r}: polar {p} vs fourier {f}");
        }
    }

    #[test]
    fn scaling_law_holds_pointwise() {
        let s1 = FilterSpec::<f64>::finite(5.0, 1.0).unwrap();
        let sw = FilterSpec::<f64>::finite(5.0, 1.7).unwrap();
        for r in [0.0, 0.4, 1.1, 2.3, 3.0] {
            let a = filter_value(&sw, r * 1.7).unwrap();
            let b = filter_value(&s1, r).unwrap();
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300), "r={r}: {a} vs {b}");
        }
    }

    #[test]
    fn bounded_by_value_at_origin() {
        let s = FilterSpec::<f64>::finite(4.0, 1.0).unwrap();
        for i in 0..40 {
            let v = filter_value(&s, i as f64 * 0.1).unwrap();
            assert!(v <= 1.0 + 1e-12 && v >= 0.0);
        }
    }

    #[test]
    fn table_interpolation_matches_direct_evaluation() {
        let spec = FilterSpec::<f64>::finite(8.0, 1.3).unwrap();
        let table = FilterTable::build(spec, 4096).unwrap();
        assert!((table.values()[0] - 1.0).abs() < 1e-6);
        assert!(table.values()[4096] < 1e-50);
        let h = table.radius(1);
        for i in [3usize, 100, 700, 1100, 1500, 1800, 2100] {
            let r = table.radius(i) + h / 2.0;
            let direct = filter_value(&spec, r).unwrap();
            let interp = table.value(r);
            assert!((interp - direct).abs() < 1e-6, "r={r}: {interp} vs {direct}");
            if direct > 1e-250 {
                assert!(((interp - direct) / direct).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infinite_table_has_exact_zero_tail() {
        let table = FilterTable::build(FilterSpec::<f64>::infinite(1.3).unwrap(), 4096).unwrap();
        assert_eq!(table.values()[0], 1.0);
        for i in 0..=4096 {
            if table.radius(i) >= 2.6 {
                assert_eq!(table.values()[i], 0.0);
            }
        }
        assert_eq!(table.value(2.6), 0.0);
    }

    #[test]
    fn table_rejects_too_few_nodes() {
        assert!(FilterTable::build(FilterSpec::infinite(1.0f64).unwrap(), 100).is_err());
    }

    #[test]
    fn rescaled_table_follows_scaling_law() {
        let t = FilterTable::build(FilterSpec::<f64>::finite(8.0, 1.0).unwrap(), 512).unwrap();
        let t2 = t.rescaled(1.5).unwrap();
        for r in [0.2, 0.77, 1.9] {
            assert!((t2.value(1.5 * r) - t.value(r)).abs() < 1e-14);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let s = FilterSpec::infinite(1.0f32).unwrap();
        assert_eq!(filter_value(&s, 0.0f32).unwrap(), 1.0);
        let s8 = FilterSpec::finite(8.0f32, 1.0).unwrap();
        assert!((filter_value(&s8, 0.0f32).unwrap() - 1.0).abs() < 1e-4);
    }
}
