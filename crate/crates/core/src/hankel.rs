//! Order-zero Bessel function and radial (Hankel) transforms.
//!
//! Used as the Fourier-side route for radially symmetric filters: the 2D
//! Fourier transform of a radial profile `f(r)` is `2π ∫ f(r) J0(k r) r dr`.

use crate::quadrature::CompositeGauss;
use crate::scalar::Real;

/// Bessel function of the first kind, order zero.
pub fn bessel_j0<T: Real>(x: T) -> T {
    T::lit(bessel_j0_f64(x.as_f64()))
}

fn bessel_j0_f64(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        // J0(x) = (1/π) ∫_0^π cos(x sin t) dt; the integrand is periodic and
        // analytic so the trapezoid rule converges geometrically.
        let n = 48usize;
        let h = std::f64::consts::PI / n as f64;
        let mut s = 0.5 * (1.0 + 1.0);
        for k in 1..n {
            s += (x * (k as f64 * h).sin()).cos();
        }
        s / n as f64
    } else {
        // Hankel asymptotic expansion; the smallest term is ~e^{-2x}.
        let mut p = 0.0;
        let mut q = 0.0;
        let mut term = 1.0f64;
        let mut prev = f64::INFINITY;
        for k in 0..60usize {
            if k > 0 {
                let j = (2 * k - 1) as f64;
                term *= -(j * j) / (k as f64 * 8.0 * x);
            }
            if term.abs() > prev {
                break;
            }
            prev = term.abs();
            match k % 4 {
                0 => p += term,
                1 => q += term,
                2 => p -= term,
                _ => q -= term,
            }
            if term.abs() < 1e-18 {
                break;
            }
        }
        let omega = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * omega.cos() - q * omega.sin())
    }
}

/// 2D Fourier transform of a radial profile sampled by quadrature on
/// `[0, r_max]`, evaluated at each wavenumber in `ks`.
pub fn radial_fourier<T: Real, F: Fn(T) -> T>(profile: F, r_max: T, panels: usize, ks: &[T]) -> Vec<T> {
    let pts = CompositeGauss::<T>::new(10).points(T::zero(), r_max, panels);
    let samples: Vec<(T, T)> = pts.iter().map(|&(r, w)| (r, w * r * profile(r))).collect();
    ks.iter()
        .map(|&k| T::TAU() * samples.iter().map(|&(r, wf)| wf * bessel_j0(k * r)).sum::<T>())
        .collect()
}
