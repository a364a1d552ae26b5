use std::f64::consts::PI;

use pquasi::filters::{filter_value, omega_base, DEFAULT_TABLE_NODES};
use pquasi::{io, Exponent, FilterSpec, FilterTable, RadialFilter, Table32};

const GAMMA_QUARTER: f64 = 3.625_609_908_221_908_3;

fn spec(q: f64, w: f64) -> FilterSpec<f64> {
    if q.is_infinite() {
        FilterSpec::infinite(w).unwrap()
    } else {
        FilterSpec::finite(q, w).unwrap()
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Trapezoid rule; spectrally accurate for smooth periodic or rapidly decaying integrands.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + h * i as f64);
    }
    s * h
}

fn j0(x: f64) -> f64 {
    // J0(x) = (1/π)∫₀^π cos(x sin τ) dτ; periodic integrand, trapezoid converges geometrically
    let n = 64 + (x.abs() * 2.0) as usize;
    trapezoid(|t| (x * t.sin()).cos(), 0.0, PI, n) / PI
}

#[test]
fn base_function_at_origin() {
    let expect = 2f64.powf(0.125) * (8.0 / (2.0 * PI * GAMMA_QUARTER)).sqrt();
    let got = omega_base(&spec(8.0, 1.0), 0.0).unwrap();
    assert!((got - expect).abs() < 1e-12);
    assert!((got - 0.6462).abs() < 5e-5);
    let at_w = omega_base(&spec(4.0, 2.0), 2.0).unwrap();
    let at_0 = omega_base(&spec(4.0, 2.0), 0.0).unwrap();
    assert!((at_w - at_0 / std::f64::consts::E).abs() < 1e-14);
    assert!(omega_base(&spec(8.0, 1.0), 5.0).unwrap() < 1e-300);
    assert!(omega_base(&spec(f64::INFINITY, 1.0), 0.0).is_err());
}

#[test]
fn base_function_is_normalized() {
    for (q, w) in [(4.0, 1.3), (8.0, 1.0), (21.0, 0.7)] {
        let s = spec(q, w);
        let norm = 2.0 * PI * trapezoid(|r| r * omega_base(&s, r).unwrap().powi(2), 0.0, 4.0 * w, 20_000);
        assert!((norm - 1.0).abs() < 1e-7, "q={q}: {norm}");
    }
}

#[test]
fn normalized_at_origin() {
    for q in [4.0, 8.0, f64::INFINITY] {
        for w in [1.0, 1.3, 1.8] {
            let v = filter_value(&spec(q, w), 0.0).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "q={q} w={w}: {v}");
        }
    }
}

#[test]
fn disc_filter_closed_form() {
    let expect = 2.0 / PI * (PI / 3.0 - 3f64.sqrt() / 4.0);
    let got = filter_value(&spec(f64::INFINITY, 1.0), 1.0).unwrap();
    assert!((got - expect).abs() < 1e-10);
    assert!((got - 0.3910).abs() < 1e-4);
    for w in [0.5, 1.3, 2.0] {
        let s = spec(f64::INFINITY, w);
        assert_eq!(filter_value(&s, 2.0 * w).unwrap(), 0.0);
        assert_eq!(filter_value(&s, 2.0 * w + 1e-12).unwrap(), 0.0);
        assert_eq!(filter_value(&s, 100.0).unwrap(), 0.0);
    }
}

#[test]
fn finite_q_matches_cartesian_autocorrelation() {
    for (q, w) in [(4.0, 1.0), (8.0, 1.3)] {
        let s = spec(q, w);
        let base = |x: f64, y: f64| omega_base(&s, (x * x + y * y).sqrt()).unwrap();
        for r in [0.3, 1.0 * w, 1.7 * w] {
            let half = 2.5 * w;
            let lo = -half;
            let hi = half + r;
            let n = 500;
            let h = (hi - lo) / n as f64;
            let hy = 2.0 * half / n as f64;
            let mut sum = 0.0;
            for i in 0..=n {
                let x = lo + h * i as f64;
                for j in 0..=n {
                    let y = -half + hy * j as f64;
                    let wgt = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
                    sum += wgt * base(x, y) * base(x - r, y);
                }
            }
            let oracle = sum * h * hy;
            let got = filter_value(&s, r).unwrap();
            assert!((got - oracle).abs() < 1e-7, "q={q} r={r}: {got} vs {oracle}");
        }
    }
}

#[test]
fn fourier_transform_is_nonnegative() {
    for (q, w) in [(4.0, 1.3), (8.0, 1.0), (f64::INFINITY, 1.3)] {
        let table = FilterTable::build(spec(q, w), 1024).unwrap();
        let rmax = table.spec().support();
        for k in 0..60 {
            let kk = 0.25 * k as f64;
            let ft = 2.0 * PI * simpson(|r| r * j0(kk * r) * table.value(r), 0.0, rmax, 4000);
            assert!(ft > -1e-6, "q={q} k={kk}: {ft}");
        }
    }
}

#[test]
fn bounded_by_one() {
    for (q, w) in [(4.0, 1.0), (5.0, 1.3), (f64::INFINITY, 0.8)] {
        let s = spec(q, w);
        for i in 0..40 {
            let v = filter_value(&s, 0.1 * i as f64 * w).unwrap();
            assert!(v.abs() <= 1.0 + 1e-9, "{v}");
        }
    }
}

#[test]
fn scaling_law() {
    for q in [5.0, 13.0] {
        let unit = spec(q, 1.0);
        let wide = spec(q, 1.7);
        for r in [0.2, 0.9, 1.6, 2.5] {
            let a = filter_value(&wide, r * 1.7).unwrap();
            let b = filter_value(&unit, r).unwrap();
            assert!((a - b).abs() < 1e-8, "q={q} r={r}");
        }
    }
}

#[test]
fn decays_below_gaussian_growth_at_cutoff() {
    for (q, w) in [(4.0, 1.0), (8.0, 1.3), (21.0, 1.8)] {
        let table = FilterTable::build(spec(q, w), DEFAULT_TABLE_NODES).unwrap();
        let last = *table.values().last().unwrap();
        let bc = spec(q, w).cutoff();
        assert!(last < 1e-50, "q={q} w={w}: {last}");
        assert!(last * (bc * bc / 2.0).exp() < 1e-20);
    }
}

#[test]
fn table_invariants_and_midpoints() {
    let table = FilterTable::build(spec(8.0, 1.3), DEFAULT_TABLE_NODES).unwrap();
    assert!((table.values()[0] - 1.0).abs() < 1e-6);
    assert!(table.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    for i in (0..DEFAULT_TABLE_NODES).step_by(97) {
        let r = 0.5 * (table.radius(i) + table.radius(i + 1));
        let direct = filter_value(table.spec(), r).unwrap();
        assert!((table.value(r) - direct).abs() < 1e-6, "r={r}");
    }

    let disc = FilterTable::build(spec(f64::INFINITY, 1.3), DEFAULT_TABLE_NODES).unwrap();
    assert_eq!(disc.values()[0], 1.0);
    for i in 0..=DEFAULT_TABLE_NODES {
        if disc.radius(i) >= 2.6 {
            assert_eq!(disc.values()[i], 0.0);
        }
    }
}

#[test]
fn rejects_invalid_specs() {
    assert!(FilterSpec::<f64>::finite(2.0, 1.0).is_err());
    assert!(FilterSpec::<f64>::finite(8.0, 0.0).is_err());
    assert!("q=2.0,w=1".parse::<FilterSpec<f64>>().is_err());
    assert!(FilterTable::build(spec(8.0, 1.0), 100).is_err());
    let parsed: FilterSpec<f64> = "q=inf,w=1.3".parse().unwrap();
    assert_eq!(parsed.q(), Exponent::Infinite);
    assert_eq!(parsed.to_string().parse::<FilterSpec<f64>>().unwrap(), parsed);
}

#[test]
fn cache_text_round_trip() {
    let s = spec(5.0, 1.1);
    let table = FilterTable::build(s, 512).unwrap();
    let text = io::format_filter_table(&table);
    let back = io::parse_filter_table(&text, s).unwrap();
    assert_eq!(back.values(), table.values());
    assert!(io::filter_cache_name(&s, 512).contains("512"));
}

#[test]
fn single_precision_table() {
    let t: Table32 = FilterTable::build(FilterSpec::finite(8.0f32, 1.3).unwrap(), 512).unwrap();
    assert!((t.values()[0] - 1.0).abs() < 1e-5);
    assert!((t.value(1.3) as f64 - filter_value(&spec(8.0, 1.3), 1.3).unwrap()).abs() < 1e-5);
}
