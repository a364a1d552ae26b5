use std::f64::consts::PI;

use num_complex::Complex;
use pquasi::pattern::{chi_direct, compute_chi_samples, pattern_argument, InfiniteFilter, PatternTable};
use pquasi::{io, Error, FilterSpec, FilterTable};
use rustfft::FftPlanner;

fn disc(w: f64, r: f64) -> f64 {
    let u = r / (2.0 * w);
    if u >= 1.0 {
        0.0
    } else {
        2.0 / PI * (u.acos() - u * (1.0 - u * u).sqrt())
    }
}

/// Tanh-sinh quadrature on [a, b], refined until successive levels agree.
fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let node = |t: f64| {
        let s = 0.5 * PI * t.sinh();
        let x = s.tanh();
        let wgt = 0.5 * PI * t.cosh() / s.cosh().powi(2);
        (x, wgt)
    };
    let eval = |t: f64| {
        let (x, wgt) = node(t);
        if wgt < 1e-300 || x.abs() >= 1.0 {
            return 0.0;
        }
        f(c + half * x) * wgt
    };
    let tmax = 4.0;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            sum += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        let cur = sum * h * half;
        if (cur - prev).abs() <= tol * cur.abs().max(1e-300) {
            return cur;
        }
        prev = cur;
    }
    prev
}

fn chi_oracle(w: f64, xi: f64) -> f64 {
    // substitution b = 2w(1 - t²) keeps the node density near the b = 2w kink
    let f = |t: f64| {
        let b = 2.0 * w * (1.0 - t * t);
        4.0 * w * t * b * (0.5 * b * b).exp() * (b * xi).cos() * disc(w, b)
    };
    2.0 / PI * tanh_sinh(f, 0.0, 1.0, 1e-13)
}

fn disc_table(w: f64, xi_max: f64) -> PatternTable<f64> {
    compute_chi_samples(FilterSpec::infinite(w).unwrap(), xi_max).unwrap()
}

#[test]
fn chi_at_origin_matches_oracle() {
    let t = disc_table(1.3, 8.0);
    let oracle = chi_oracle(1.3, 0.0);
    assert!((t.samples()[0] - oracle).abs() < 1e-10 * oracle.abs(), "{} vs {oracle}", t.samples()[0]);
}

#[test]
fn samples_are_even() {
    let t = disc_table(1.3, 6.0);
    let m = t.samples().len() as i64 - 1;
    for k in 0..=m {
        assert_eq!(t.sample(k), t.sample(-k));
    }
    for xi in [0.37, 1.9, 4.2] {
        assert_eq!(t.chi_eval(xi).unwrap(), t.chi_eval(-xi).unwrap());
    }
}

#[test]
fn node_spacing_is_nyquist() {
    for (q, w) in [(None, 1.3), (Some(8.0), 0.9)] {
        let spec = match q {
            None => FilterSpec::infinite(w).unwrap(),
            Some(q) => FilterSpec::finite(q, w).unwrap(),
        };
        let t = compute_chi_samples(spec, 5.0).unwrap();
        assert_eq!(t.node_step(), PI / (8.0 * w));
        assert!(t.max_xi() >= 5.0);
    }
}

#[test]
fn chi_eval_is_exact_at_nodes() {
    let t = disc_table(1.3, 10.0);
    for m in 0..t.samples().len().min(200) {
        let xi = PI * m as f64 / (8.0 * 1.3);
        if xi > t.max_xi() {
            break;
        }
        assert_eq!(t.chi_eval(xi).unwrap(), t.samples()[m]);
    }
}

#[test]
fn midpoints_match_oracle() {
    let w = 1.3;
    let t = disc_table(w, 12.0);
    let step = t.node_step();
    for m in [0, 1, 4, 11, 30, 60, 100] {
        let xi = step * (m as f64 + 0.5);
        if xi > t.max_xi() {
            continue;
        }
        let oracle = chi_oracle(w, xi);
        let got = t.chi_eval(xi).unwrap();
        assert!((got - oracle).abs() < 1e-6, "m={m}: {got} vs {oracle}");
    }
}

#[test]
fn finite_q_midpoints_match_direct_quadrature() {
    let spec = FilterSpec::finite(8.0, 1.3).unwrap();
    let filter = FilterTable::build(spec, 4096).unwrap();
    let t = PatternTable::build(&filter, 10.0).unwrap();
    let xis: Vec<f64> = (0..40).map(|m| t.node_step() * (3.0 * m as f64 + 0.5)).filter(|x| *x <= 10.0).collect();
    let direct = chi_direct(&filter, &xis, 1e-10).unwrap();
    for (xi, d) in xis.iter().zip(&direct) {
        assert!((t.chi_eval(*xi).unwrap() - d).abs() < 1e-6, "ξ={xi}");
    }
}

#[test]
fn interpolation_uniform_over_range() {
    let spec = FilterSpec::infinite(1.3).unwrap();
    let t = disc_table(1.3, 9.0);
    let mut rng_state = 0x9e37_79b9_7f4a_7c15u64;
    let xis: Vec<f64> = (0..1000)
        .map(|_| {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 * t.max_xi() - t.max_xi()
        })
        .collect();
    let direct = chi_direct(&InfiniteFilter(spec), &xis, 1e-10).unwrap();
    let worst = xis
        .iter()
        .zip(&direct)
        .map(|(x, d)| (t.chi_eval(*x).unwrap() - d).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    let worst_lookup = xis
        .iter()
        .zip(&direct)
        .map(|(x, d)| (t.lookup(*x).unwrap() - d).abs())
        .fold(0.0, f64::max);
    assert!(worst_lookup < 1e-6, "{worst_lookup}");
}

#[test]
fn spectrum_vanishes_beyond_filter_support() {
    // disc filter: spectrum lives on |b| ≤ 2w, a quarter of the Nyquist band 8w
    let w = 1.3;
    let t = disc_table(w, 60.0);
    let m = t.samples().len() - 1;
    let len = 2 * m + 1;
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = (0..len)
        .map(|i| {
            let k = i as i64 - m as i64;
            rustfft::num_complex::Complex::new(t.sample(k).unwrap(), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let peak = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let bc = 8.0 * w;
    let mut outside = 0.0f64;
    for (i, c) in buf.iter().enumerate() {
        let nu = if i <= len / 2 { i as f64 } else { i as f64 - len as f64 } / len as f64;
        let b = (2.0 * bc * nu).abs();
        if b > 1.25 * 2.0 * w {
            outside = outside.max(c.norm());
        }
    }
    assert!(outside < 1e-3 * peak, "{outside} vs {peak}");
}

#[test]
fn decays_at_range_edge() {
    for spec in [FilterSpec::<f64>::infinite(1.3).unwrap(), FilterSpec::finite(8.0, 1.3).unwrap()] {
        let t = compute_chi_samples(spec, 40.0).unwrap();
        let edge = t.chi_eval(t.max_xi()).unwrap();
        assert!(edge.abs() < 1e-3 * t.samples()[0].abs(), "{spec}: {edge}");
    }
}

#[test]
fn out_of_range_is_an_error() {
    let t = disc_table(1.3, 4.0);
    assert!(matches!(t.chi_eval(t.max_xi() * 1.01), Err(Error::OutOfRange { .. })));
    assert!(t.lookup(-t.max_xi() * 1.01).is_none());
    let e = t.pattern_eval(3.0, 0.0, Complex::new(5.0, 0.0)).unwrap_err();
    assert!(matches!(e, Error::OutOfRange { x, .. } if x == 3.0));
}

#[test]
fn pattern_function_identities() {
    let t = disc_table(1.3, 8.0);
    for x in [-2.0, -0.3, 0.0, 1.1, 2.5] {
        assert_eq!(t.pattern_eval(x, 1.0, Complex::new(0.0, 0.0)).unwrap(), t.chi_eval(x).unwrap());
        let a = Complex::from_polar(1.2, 0.9);
        let p = t.pattern_eval(x, 0.4, a).unwrap();
        let p2 = t.pattern_eval(x, 0.4 + 2.0 * PI, a).unwrap();
        assert!((p - p2).abs() < 1e-12);
        let sin_form = x + 2.0 * a.norm() * (a.arg() - 0.4 - PI / 2.0).sin();
        assert!((pattern_argument(x, 0.4, a) - sin_form).abs() < 1e-12);
    }
}

#[test]
fn fixed_pattern_value() {
    let t = disc_table(1.3, 8.0);
    let a = Complex::from_polar(1.2, 0.9);
    let xi = 0.7 - 2.0 * 1.2 * (0.9f64 - 0.3).cos();
    let oracle = chi_oracle(1.3, xi);
    let got = t.pattern_eval(0.7, 0.3, a).unwrap();
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
}

#[test]
fn cache_text_round_trip() {
    let t = disc_table(0.9, 5.0);
    let text = io::format_pattern_table(&t);
    let back: PatternTable<f64> = io::parse_pattern_table(&text).unwrap();
    assert_eq!(back.samples(), t.samples());
    assert_eq!(back.chi_eval(1.234).unwrap(), t.chi_eval(1.234).unwrap());
}
