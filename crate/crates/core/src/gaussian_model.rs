//! Displaced, squeezed, lossy Gaussian states: homodyne data simulation and
//! analytic characteristic-function / quasiprobability oracles.
//!
//! Quadratures are normalized to unit vacuum variance. A sample taken at
//! phase `φ` has mean `2√η |α₀| cos(φ - arg α₀)` and variance
//! `η (V_min cos²(φ - φ_s) + V_max sin²(φ - φ_s)) + 1 - η`.

use std::collections::BTreeMap;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::RadialFilter;
use crate::quadrature::{adaptive, CompositeGauss, Tolerance};
use crate::scalar::{wrap_phase, Real};

/// Parameters of a single-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState<T> {
    squeezing_db: T,
    squeeze_angle: T,
    displacement: Complex<T>,
    efficiency: T,
    angle_jitter_deg: T,
}

impl<T: Real> GaussianState<T> {
    pub fn new(
        squeezing_db: T,
        squeeze_angle: T,
        displacement: Complex<T>,
        efficiency: T,
        angle_jitter_deg: T,
    ) -> Result<Self> {
        if !(squeezing_db >= T::zero()) || !squeezing_db.is_finite() {
            return Err(Error::invalid("squeezing_db", "must be finite and >= 0"));
        }
        if !(squeeze_angle >= T::zero() && squeeze_angle < T::PI()) {
            return Err(Error::invalid("squeeze_angle", "must lie in [0, π)"));
        }
        if !displacement.re.is_finite() || !displacement.im.is_finite() {
            return Err(Error::invalid("displacement", "must be finite"));
        }
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(Error::invalid("efficiency", "must lie in (0, 1]"));
        }
        if !(angle_jitter_deg >= T::zero()) || !angle_jitter_deg.is_finite() {
            return Err(Error::invalid("angle_jitter_deg", "must be finite and >= 0"));
        }
        Ok(Self {
            squeezing_db,
            squeeze_angle,
            displacement,
            efficiency,
            angle_jitter_deg,
        })
    }

    pub fn vacuum() -> Self {
        Self::new(T::zero(), T::zero(), Complex::new(T::zero(), T::zero()), T::one(), T::zero())
            .expect("vacuum parameters are valid")
    }

    pub fn coherent(alpha: Complex<T>) -> Result<Self> {
        Self::new(T::zero(), T::zero(), alpha, T::one(), T::zero())
    }

    /// Squeezed vacuum with the given noise suppression and efficiency.
    pub fn squeezed_vacuum(squeezing_db: T, squeeze_angle: T, efficiency: T) -> Result<Self> {
        Self::new(
            squeezing_db,
            squeeze_angle,
            Complex::new(T::zero(), T::zero()),
            efficiency,
            T::zero(),
        )
    }

    pub fn with_jitter(mut self, angle_jitter_deg: T) -> Result<Self> {
        if !(angle_jitter_deg >= T::zero()) {
            return Err(Error::invalid("angle_jitter_deg", "must be >= 0"));
        }
        self.angle_jitter_deg = angle_jitter_deg;
        Ok(self)
    }

    pub fn squeezing_db(&self) -> T {
        self.squeezing_db
    }
    pub fn squeeze_angle(&self) -> T {
        self.squeeze_angle
    }
    pub fn displacement(&self) -> Complex<T> {
        self.displacement
    }
    pub fn efficiency(&self) -> T {
        self.efficiency
    }
    pub fn angle_jitter_deg(&self) -> T {
        self.angle_jitter_deg
    }

    pub fn v_min(&self) -> T {
        T::lit(10.0).powf(-self.squeezing_db / T::lit(10.0))
    }

    pub fn v_max(&self) -> T {
        self.v_min().recip()
    }

    /// Coherent amplitude after loss.
    pub fn effective_displacement(&self) -> Complex<T> {
        self.displacement * self.efficiency.sqrt()
    }

    fn jitter_sd(&self) -> T {
        self.angle_jitter_deg * T::PI() / T::lit(180.0)
    }

    /// Mean quadrature at phase `phi`.
    pub fn mean(&self, phi: T) -> T {
        let a = self.effective_displacement();
        T::lit(2.0) * (a.re * phi.cos() + a.im * phi.sin())
    }

    /// Quadrature variance at `phi` for a given squeeze orientation.
    pub fn variance_at(&self, phi: T, squeeze_angle: T) -> T {
        let d = phi - squeeze_angle;
        let (s, c) = d.sin_cos();
        self.efficiency * (self.v_min() * c * c + self.v_max() * s * s) + T::one() - self.efficiency
    }

    pub fn variance(&self, phi: T) -> T {
        self.variance_at(phi, self.squeeze_angle)
    }
}

/// `(mean, variance)` of the homodyne quadrature at phase `phi`, ignoring
/// squeeze-angle jitter.
pub fn quadrature_moments<T: Real>(state: &GaussianState<T>, phi: T) -> (T, T) {
    (state.mean(phi), state.variance(phi))
}

/// How sample phases are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseSchedule<T> {
    /// i.i.d. uniform on `[0, 2π)`.
    UniformRandom,
    /// `φ(t) = g t⁴ + f t³ + e t² + d t + c` on uniformly spaced times.
    PolynomialSweep(PhasePolynomial<T>),
    /// `count` equidistant phases on `[0, π]`, endpoints included; each
    /// sample takes the locked phase nearest to a uniform draw on `[0, π]`.
    LockedPhases { count: usize },
}

/// Quartic phase trajectory over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePolynomial<T> {
    /// `[c, d, e, f, g]`, lowest order first.
    pub coefficients: [T; 5],
    pub t_start: T,
    pub t_end: T,
}

impl<T: Real> PhasePolynomial<T> {
    pub fn new(coefficients: [T; 5], t_start: T, t_end: T) -> Result<Self> {
        let p = Self {
            coefficients,
            t_start,
            t_end,
        };
        if !(t_end > t_start) {
            return Err(Error::ScheduleRejected("time range must be increasing".into()));
        }
        if !p.is_monotone() {
            return Err(Error::ScheduleRejected(
                "phase polynomial is not monotone on the time range".into(),
            ));
        }
        Ok(p)
    }

    pub fn eval(&self, t: T) -> T {
        self.coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
    }

    pub fn derivative(&self, t: T) -> T {
        let [_, d, e, f, g] = self.coefficients;
        ((T::lit(4.0) * g * t + T::lit(3.0) * f) * t + T::lit(2.0) * e) * t + d
    }

    /// True when `φ'` does not change sign on `[t_start, t_end]`.
    pub fn is_monotone(&self) -> bool {
        let [_, _, e, f, g] = self.coefficients;
        // extrema of φ' are the roots of φ'' = 12 g t² + 6 f t + 2 e
        let mut probes = vec![self.t_start, self.t_end];
        let (a, b, c) = (T::lit(12.0) * g, T::lit(6.0) * f, T::lit(2.0) * e);
        if a != T::zero() {
            let disc = b * b - T::lit(4.0) * a * c;
            if disc >= T::zero() {
                let sq = disc.sqrt();
                probes.push((-b + sq) / (T::lit(2.0) * a));
                probes.push((-b - sq) / (T::lit(2.0) * a));
            }
        } else if b != T::zero() {
            probes.push(-c / b);
        }
        let vals: Vec<T> = probes
            .into_iter()
            .filter(|t| *t >= self.t_start && *t <= self.t_end)
            .map(|t| self.derivative(t))
            .collect();
        let any_pos = vals.iter().any(|v| *v > T::zero());
        let any_neg = vals.iter().any(|v| *v < T::zero());
        !(any_pos && any_neg) && (any_pos || any_neg)
    }
}

/// One homodyne sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraturePoint<T> {
    pub x: T,
    pub phi: T,
}

/// Free-form provenance metadata carried alongside a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default)]
    pub details: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            details: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.details.insert(key.to_string(), value.to_string());
        self
    }
}

/// Ordered `(x, φ)` samples with optional timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset<T> {
    points: Vec<QuadraturePoint<T>>,
    timestamps: Option<Vec<T>>,
    provenance: Provenance,
}

impl<T: Real> QuadratureDataset<T> {
    /// Validates phases in `[0, 2π)`, finite quadratures and timestamp count.
    pub fn new(points: Vec<QuadraturePoint<T>>, timestamps: Option<Vec<T>>, provenance: Provenance) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() {
                return Err(Error::invalid("x", format!("point {i} has non-finite quadrature")));
            }
            if !(p.phi >= T::zero() && p.phi < T::TAU()) {
                return Err(Error::invalid("phi", format!("point {i} has phase {} outside [0, 2π)", p.phi)));
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != points.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} timestamps for {} points",
                    ts.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            timestamps,
            provenance,
        })
    }

    /// Builds a dataset, wrapping every phase into `[0, 2π)` first.
    pub fn from_wrapped(points: impl IntoIterator<Item = (T, T)>, provenance: Provenance) -> Result<Self> {
        let points = points
            .into_iter()
            .map(|(x, phi)| QuadraturePoint { x, phi: wrap_phase(phi) })
            .collect();
        Self::new(points, None, provenance)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[QuadraturePoint<T>] {
        &self.points
    }

    pub fn timestamps(&self) -> Option<&[T]> {
        self.timestamps.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn phases(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.phi)
    }

    /// Subset by index, preserving the given order.
    pub fn select(&self, indices: &[usize], provenance: Provenance) -> Self {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let timestamps = self
            .timestamps
            .as_ref()
            .map(|ts| indices.iter().map(|&i| ts[i]).collect());
        Self {
            points,
            timestamps,
            provenance,
        }
    }

    /// First `n` points.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx, self.provenance.clone().with("prefix", n))
    }

    /// `n` points drawn without replacement: seeded shuffle, then prefix.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InsufficientData {
                needed: n,
                got: self.len(),
            });
        }
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(n);
        Ok(self.select(
            &idx,
            self.provenance
                .clone()
                .with("subsample", n)
                .with("subsample_seed", seed),
        ))
    }

    /// Concatenation of two datasets (timestamps kept only if both have them).
    pub fn concat(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let timestamps = match (&self.timestamps, &other.timestamps) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self {
            points,
            timestamps,
            provenance: Provenance::new("concatenation"),
        }
    }
}

fn state_provenance<T: Real>(state: &GaussianState<T>, schedule: &PhaseSchedule<T>, seed: u64) -> Provenance {
    let schedule = match schedule {
        PhaseSchedule::UniformRandom => "uniform".to_string(),
        PhaseSchedule::LockedPhases { count } => format!("locked:{count}"),
        PhaseSchedule::PolynomialSweep(p) => {
            let c = p.coefficients;
            format!("sweep:{},{},{},{},{},{},{}", c[0], c[1], c[2], c[3], c[4], p.t_start, p.t_end)
        }
    };
    Provenance::new("simulated")
        .with("squeezing_db", state.squeezing_db)
        .with("squeeze_angle", state.squeeze_angle)
        .with("displacement_re", state.displacement.re)
        .with("displacement_im", state.displacement.im)
        .with("efficiency", state.efficiency)
        .with("angle_jitter_deg", state.angle_jitter_deg)
        .with("schedule", schedule)
        .with("seed", seed)
}

/// Index of the locked phase nearest to `u ∈ [0, π]` on a grid of `count`
/// equidistant phases with both endpoints included.
pub fn nearest_locked_index(u: f64, count: usize) -> usize {
    let step = std::f64::consts::PI / (count - 1) as f64;
    ((u / step).round() as usize).min(count - 1)
}

/// Draws one quadrature at `phi`, applying squeeze-angle jitter.
pub(crate) fn draw_quadrature<T: Real, R: Rng>(state: &GaussianState<T>, phi: f64, rng: &mut R) -> f64 {
    let jitter = state.jitter_sd().as_f64();
    let angle = if jitter > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        state.squeeze_angle.as_f64() + jitter * z
    } else {
        state.squeeze_angle.as_f64()
    };
    let phi_t = T::lit(phi);
    let mean = state.mean(phi_t).as_f64();
    let var = state.variance_at(phi_t, T::lit(angle)).as_f64();
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// Simulates `n` homodyne samples. Fully determined by `seed`.
pub fn sample_dataset<T: Real>(
    state: &GaussianState<T>,
    schedule: &PhaseSchedule<T>,
    n: usize,
    seed: u64,
) -> Result<QuadratureDataset<T>> {
    if n == 0 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let mut points = Vec::with_capacity(n);
    let mut timestamps = None;
    match schedule {
        PhaseSchedule::UniformRandom => {
            for _ in 0..n {
                let phi: f64 = rng.random::<f64>() * tau;
                let x = draw_quadrature(state, phi, &mut rng);
                points.push(QuadraturePoint {
                    x: T::lit(x),
                    phi: wrap_phase(T::lit(phi)),
                });
            }
        }
        PhaseSchedule::LockedPhases { count } => {
            if *count < 2 {
                return Err(Error::ScheduleRejected("need at least two locked phases".into()));
            }
            let step = std::f64::consts::PI / (*count - 1) as f64;
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * std::f64::consts::PI;
                let phi = nearest_locked_index(u, *count) as f64 * step;
                let x = draw_quadrature(state, phi, &mut rng);
                points.push(QuadraturePoint {
                    x: T::lit(x),
                    phi: T::lit(phi),
                });
            }
        }
        PhaseSchedule::PolynomialSweep(poly) => {
            if !poly.is_monotone() {
                return Err(Error::ScheduleRejected(
                    "phase polynomial is not monotone on the time range".into(),
                ));
            }
            let mut ts = Vec::with_capacity(n);
            let span = poly.t_end - poly.t_start;
            for j in 0..n {
                let t = poly.t_start + span * T::from_usize_lossy(j) / T::from_usize_lossy(n.max(2) - 1);
                let phi = poly.eval(t).as_f64();
                let x = draw_quadrature(state, phi, &mut rng);
                points.push(QuadraturePoint {
                    x: T::lit(x),
                    phi: wrap_phase(T::lit(phi)),
                });
                ts.push(t);
            }
            timestamps = Some(ts);
        }
    }
    QuadratureDataset::new(points, timestamps, state_provenance(state, schedule, seed))
}

/// Gaussian-weighted nodes for averaging over squeeze-angle jitter.
fn jitter_nodes<T: Real>(sd: T) -> Vec<(T, T)> {
    if sd == T::zero() {
        return vec![(T::zero(), T::one())];
    }
    let pts = CompositeGauss::<T>::new(16).points(T::lit(-8.0) * sd, T::lit(8.0) * sd, 4);
    let norm = (T::TAU() * sd * sd).sqrt();
    pts.into_iter()
        .map(|(d, w)| (d, w * (-(d * d) / (T::lit(2.0) * sd * sd)).exp() / norm))
        .collect()
}

/// Normally ordered characteristic function `Φ(β)`.
///
/// With `β = b e^{iθ}`, `Φ(β) = e^{b²/2} E[e^{i b x}]` where `x` is the
/// quadrature at phase `θ - π/2`.
pub fn normally_ordered_cf<T: Real>(state: &GaussianState<T>, beta: Complex<T>) -> Complex<T> {
    let b = beta.norm();
    if b == T::zero() {
        return Complex::new(T::one(), T::zero());
    }
    let phi = beta.arg() - T::FRAC_PI_2();
    let mu = state.mean(phi);
    let half = T::lit(0.5);
    let gaussian: T = jitter_nodes(state.jitter_sd())
        .into_iter()
        .map(|(d, w)| {
            let v = state.variance_at(phi, state.squeeze_angle + d);
            w * (half * b * b * (T::one() - v)).exp()
        })
        .sum();
    Complex::from_polar(gaussian, b * mu)
}

/// Accuracy controls for the analytic quasiprobability oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleControls<T> {
    pub rel_tol: T,
    /// Absolute floor for values near zero.
    pub abs_tol: T,
    pub max_segments: usize,
}

impl<T: Real> Default for OracleControls<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-6),
            abs_tol: T::lit(1e-9),
            max_segments: 400,
        }
    }
}

/// Filtered quasiprobability `P_Ω(α)` by direct 2D polar quadrature of the
/// inverse Fourier transform of `Φ(β) Ω(|β|)`.
///
/// The displacement enters as an exact shift `α → α - √η α₀`, so the
/// integrand never oscillates faster than the undisplaced state requires.
pub fn analytic_p_omega<T: Real, F: RadialFilter<T>>(
    state: &GaussianState<T>,
    filter: &F,
    alpha: Complex<T>,
    controls: OracleControls<T>,
) -> Result<T> {
    if !(controls.rel_tol > T::zero()) {
        return Err(Error::invalid("rel_tol", "must be positive"));
    }
    let shifted = alpha - state.effective_displacement();
    let cutoff = filter.support();
    let jitter = jitter_nodes(state.jitter_sd());
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let inner_tol = Tolerance {
        abs: controls.abs_tol * T::lit(1e-2),
        rel: controls.rel_tol * T::lit(1e-2),
    };
    let outer_tol = Tolerance {
        abs: controls.abs_tol * T::PI() * T::PI(),
        rel: controls.rel_tol,
    };

    let mut failure = None;
    let mut part = |imag: bool| -> Result<T> {
        let est = adaptive(
            "quasiprobability oracle (angular)",
            |theta: T| {
                if failure.is_some() {
                    return T::zero();
                }
                let phi = theta - T::FRAC_PI_2();
                let (s, c) = theta.sin_cos();
                // Im(α e^{-iθ})
                let proj = shifted.im * c - shifted.re * s;
                let variances: Vec<(T, T)> = jitter
                    .iter()
                    .map(|&(d, w)| (state.variance_at(phi, state.squeeze_angle + d), w))
                    .collect();
                let radial = adaptive(
                    "quasiprobability oracle (radial)",
                    |b: T| {
                        let ln_f = filter.ln_value(b);
                        if ln_f == T::neg_infinity() {
                            return T::zero();
                        }
                        let gauss: T = variances
                            .iter()
                            .map(|&(v, w)| w * (half * b * b * (T::one() - v) + ln_f).exp())
                            .sum();
                        let arg = two * b * proj;
                        b * gauss * if imag { arg.sin() } else { arg.cos() }
                    },
                    T::zero(),
                    cutoff,
                    inner_tol,
                    controls.max_segments,
                );
                match radial {
                    Ok(e) => e.value,
                    Err(e) => {
                        failure = Some(e);
                        T::zero()
                    }
                }
            },
            T::zero(),
            T::TAU(),
            outer_tol,
            controls.max_segments,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(est?.value / (T::PI() * T::PI()))
    };
    let re = part(false)?;
    let im = part(true)?;
    let allowed = controls.abs_tol.max(controls.rel_tol * re.abs()) * T::lit(10.0);
    if im.abs() > allowed {
        return Err(Error::QuadratureFailure {
            what: format!("quasiprobability oracle imaginary residual {:e} exceeds {:e}", im.as_f64(), allowed.as_f64()),
            estimate: re.as_f64(),
            error: im.as_f64(),
            evaluations: 0,
        });
    }
    Ok(re)
}
