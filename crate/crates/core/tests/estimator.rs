use std::f64::consts::FRAC_PI_2;

use num_complex::Complex;
use pquasi::estimator::{
    estimate_grid, estimate_multimode, max_significance, pattern_table_for, required_xi_max, sweep_datasize,
    sweep_width, GridMeta, GridSpec,
};
use pquasi::gaussian_model::{analytic_p_omega, sample_dataset, OracleControls, PhaseSchedule, Provenance};
use pquasi::pattern::{compute_chi_samples, InfiniteFilter};
use pquasi::{io, Dataset, Error, Exponent, FilterSpec, QuasiprobGrid, State};

fn disc() -> FilterSpec<f64> {
    FilterSpec::infinite(1.3).unwrap()
}

fn squeezed() -> State {
    State::squeezed_vacuum(3.1, FRAC_PI_2, 0.9).unwrap()
}

fn data(state: &State, n: usize, seed: u64) -> Dataset {
    sample_dataset(state, &PhaseSchedule::UniformRandom, n, seed).unwrap()
}

#[test]
fn single_point_dataset() {
    let ds = Dataset::from_wrapped([(0.4, 1.1)], Provenance::new("test")).unwrap();
    let grid = GridSpec::square(1.0, 0.5).unwrap();
    let table = pattern_table_for(disc(), &ds, &grid).unwrap();
    let est = estimate_grid(&ds, &table, &grid).unwrap();
    for i in 0..est.len() {
        assert_eq!(est.values()[i], table.lookup(0.4 - 2.0 * (est.alpha(i).re * 1.1f64.cos() + est.alpha(i).im * 1.1f64.sin())).unwrap());
        let direct = table.pattern_eval(0.4, 1.1, est.alpha(i)).unwrap();
        assert!((est.values()[i] - direct).abs() < 1e-9);
    }
    assert!(matches!(max_significance(&est), Err(Error::InsufficientData { .. })));
}

#[test]
fn significance_is_minus_value_over_sigma() {
    let ds = data(&squeezed(), 5_000, 3);
    let grid = GridSpec::square(1.5, 0.3).unwrap();
    let est = estimate_grid(&ds, &pattern_table_for(disc(), &ds, &grid).unwrap(), &grid).unwrap();
    for i in 0..est.len() {
        assert!(est.sigmas()[i] > 0.0);
        assert_eq!(est.significances()[i], -est.values()[i] / est.sigmas()[i]);
    }
}

#[test]
fn concatenation_is_weighted_average() {
    let a = data(&squeezed(), 3_000, 1);
    let b = data(&squeezed(), 7_000, 2);
    let both = a.concat(&b);
    let grid = GridSpec::square(1.5, 0.25).unwrap();
    let table = pattern_table_for(disc(), &both, &grid).unwrap();
    let ea = estimate_grid(&a, &table, &grid).unwrap();
    let eb = estimate_grid(&b, &table, &grid).unwrap();
    let e = estimate_grid(&both, &table, &grid).unwrap();
    for i in 0..e.len() {
        let avg = (3_000.0 * ea.values()[i] + 7_000.0 * eb.values()[i]) / 10_000.0;
        assert!((e.values()[i] - avg).abs() < 1e-12, "{i}");
    }
}

#[test]
fn deterministic() {
    let ds = data(&squeezed(), 20_000, 8);
    let grid = GridSpec::square(2.0, 0.2).unwrap();
    let table = pattern_table_for(disc(), &ds, &grid).unwrap();
    assert_eq!(estimate_grid(&ds, &table, &grid).unwrap(), estimate_grid(&ds, &table, &grid).unwrap());
}

#[test]
fn one_mode_multimode_equals_single_mode() {
    let ds = data(&squeezed(), 4_000, 5);
    let grid = GridSpec::square(1.0, 0.5).unwrap();
    let table = pattern_table_for(disc(), &ds, &grid).unwrap();
    let single = estimate_grid(&ds, &table, &grid).unwrap();
    let multi = estimate_multimode(&[&ds], &[&table], &[grid]).unwrap();
    assert_eq!(single.values(), multi.values());
    assert_eq!(single.sigmas(), multi.sigmas());
}

#[test]
fn mismatched_modes_are_rejected() {
    let a = data(&State::vacuum(), 100, 1);
    let b = data(&State::vacuum(), 99, 2);
    let grid = GridSpec::square(0.5, 0.5).unwrap();
    let table = pattern_table_for(disc(), &a, &grid).unwrap();
    assert!(matches!(
        estimate_multimode(&[&a, &b], &[&table, &table], &[grid, grid]),
        Err(Error::LengthMismatch(_))
    ));
}

#[test]
fn independent_vacua_factorize() {
    let a = data(&State::vacuum(), 50_000, 11);
    let b = data(&State::vacuum(), 50_000, 12);
    let grid = GridSpec::square(1.0, 0.5).unwrap();
    let table = pattern_table_for(disc(), &a.concat(&b), &grid).unwrap();
    let joint = estimate_multimode(&[&a, &b], &[&table, &table], &[grid, grid]).unwrap();
    let ea = estimate_grid(&a, &table, &grid).unwrap();
    let eb = estimate_grid(&b, &table, &grid).unwrap();
    assert_eq!(joint.len(), grid.len() * grid.len());
    for i in 0..joint.len() {
        let (ia, ib) = (i / grid.len(), i % grid.len());
        let alphas = joint.joint_alpha(i);
        assert_eq!(alphas, vec![grid.node(ia), grid.node(ib)]);
        let product = ea.values()[ia] * eb.values()[ib];
        assert!((joint.values()[i] - product).abs() < 5.0 * joint.sigmas()[i], "{i}");
    }
}

#[test]
fn independent_squeezed_modes_match_oracle_product() {
    let s = squeezed();
    let a = data(&s, 200_000, 21);
    let b = data(&s, 200_000, 22);
    let neg = GridSpec::new(0.0, 0.0, 1.2, 1.2, 0.1).unwrap();
    let origin = GridSpec::new(0.0, 0.0, 0.0, 0.0, 0.1).unwrap();
    let table = pattern_table_for(disc(), &a.concat(&b), &GridSpec::square(1.2, 0.1).unwrap()).unwrap();
    let joint = estimate_multimode(&[&a, &b], &[&table, &table], &[neg, origin]).unwrap();
    let f = InfiniteFilter(disc());
    let p_neg = analytic_p_omega(&s, &f, Complex::new(0.0, 1.2), OracleControls::default()).unwrap();
    let p_0 = analytic_p_omega(&s, &f, Complex::new(0.0, 0.0), OracleControls::default()).unwrap();
    assert!(p_neg < 0.0 && p_0 > 0.0);
    let (v, sd) = (joint.values()[0], joint.sigmas()[0]);
    assert!((v - p_neg * p_0).abs() < 5.0 * sd, "{v} vs {}", p_neg * p_0);
    assert!(joint.significances()[0] > 5.0, "{}", joint.significances()[0]);
}

#[test]
fn vacuum_has_no_significant_negativity() {
    let ds = data(&State::vacuum(), 100_000, 31);
    let grid = GridSpec::square(3.0, 0.2).unwrap();
    let est = estimate_grid(&ds, &pattern_table_for(disc(), &ds, &grid).unwrap(), &grid).unwrap();
    assert!(max_significance(&est).unwrap().value < 5.0);
}

#[test]
fn argmax_prefers_first_row_major_node() {
    let grid = GridSpec::new(0.0, 1.0, 0.0, 1.0, 0.5).unwrap();
    let p = vec![0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0];
    let meta = GridMeta {
        filters: vec![disc()],
        n: 10,
        provenance: vec![Provenance::new("test")],
    };
    let g = QuasiprobGrid::from_parts(grid, p, vec![0.5; 9], meta).unwrap();
    let m = max_significance(&g).unwrap();
    assert_eq!(m.index, 1);
    assert_eq!(m.alpha, Complex::new(0.5, 0.0));
    assert_eq!(m.value, 2.0);
}

#[test]
fn grid_file_round_trip_keeps_sigma_max() {
    let ds = data(&squeezed(), 10_000, 41);
    let grid = GridSpec::new(-1.0, 1.0, -0.5, 1.5, 0.1).unwrap();
    let est = estimate_grid(&ds, &pattern_table_for(disc(), &ds, &grid).unwrap(), &grid).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    io::write_grid(&path, &est, Some(41), Some(io::dataset_hash(&ds))).unwrap();
    let back: QuasiprobGrid<f64> = io::read_grid(&path).unwrap();
    assert_eq!(back.values(), est.values());
    assert_eq!(back.sigmas(), est.sigmas());
    assert_eq!(back.significances(), est.significances());
    assert_eq!(max_significance(&back).unwrap(), max_significance(&est).unwrap());
}

#[test]
fn datasize_sweep_uses_seeded_subsamples() {
    let ds = data(&squeezed(), 40_000, 51);
    let grid = GridSpec::square(1.5, 0.1).unwrap();
    let table = pattern_table_for(disc(), &ds, &grid).unwrap();
    let sizes = [5_000, 10_000, 40_000];
    let sweep = sweep_datasize(&ds, &sizes, &table, &grid, 9).unwrap();
    for (pt, &n) in sweep.points.iter().zip(&sizes) {
        let sub = ds.subsample(n, 9).unwrap();
        let m = max_significance(&estimate_grid(&sub, &table, &grid).unwrap()).unwrap();
        assert_eq!(pt.sigma_max, m.value);
        assert_eq!(pt.argmax, m.alpha);
    }
    assert!(sweep_datasize(&ds, &[50_000], &table, &grid, 9).is_err());
}

#[test]
fn width_sweep_has_interior_optimum() {
    let ds = data(&squeezed(), 200_000, 61);
    let grid = GridSpec::square(2.0, 0.1).unwrap();
    let ws = [0.4, 1.3, 2.4];
    let sweeps = sweep_width(&ds, &[Exponent::Infinite], &ws, &grid).unwrap();
    let s: Vec<f64> = sweeps[0].points.iter().map(|p| p.sigma_max).collect();
    assert!(s[0] < 5.0, "{s:?}");
    assert!(s[1] > s[0] + 5.0 && s[1] > s[2] + 5.0, "{s:?}");
}

#[test]
fn width_sweep_rescaling_matches_fresh_tables() {
    let ds = data(&squeezed(), 20_000, 71);
    let grid = GridSpec::square(1.5, 0.1).unwrap();
    let q = Exponent::Finite(8.0);
    let sweeps = sweep_width(&ds, &[q], &[1.0, 1.3], &grid).unwrap();
    let xi = required_xi_max(&ds, &grid);
    for pt in &sweeps[0].points {
        let t = compute_chi_samples(FilterSpec::new(q, pt.axis_value).unwrap(), xi).unwrap();
        let m = max_significance(&estimate_grid(&ds, &t, &grid).unwrap()).unwrap();
        assert!((pt.sigma_max - m.value).abs() < 1e-4 * m.value.abs().max(1.0), "{} vs {}", pt.sigma_max, m.value);
    }
}

#[test]
fn out_of_range_reports_offender() {
    let ds = Dataset::from_wrapped([(0.1, 0.0), (30.0, 0.0)], Provenance::new("test")).unwrap();
    let grid = GridSpec::square(1.0, 0.5).unwrap();
    let small = Dataset::from_wrapped([(0.1, 0.0)], Provenance::new("test")).unwrap();
    let table = pattern_table_for(disc(), &small, &grid).unwrap();
    match estimate_grid(&ds, &table, &grid) {
        Err(Error::OutOfRange { x, .. }) => assert_eq!(x, 30.0),
        other => panic!("{other:?}"),
    }
}
