mod common;

use common::*;
use flatflow::closed::DEFAULT_CYCLE_BUDGET;
use flatflow::construct::{delta_dense_coeffs, dense_threshold, similar_length_pair, tune_connector, ConstructError, LoopPair};
use flatflow::distance::surface_distance;
use flatflow::gsmetric::gs_distance_upper;
use flatflow::saddle::{build_concat_graph, ConcatGraph, DEFAULT_CHART_BUDGET};
use flatflow::surface::SurfacePoint;
use flatflow::thermo::{equidistribution_series, fit_line, log_sum, pressure_estimate, Ensemble, Potential};
use flatflow::tracer::{flow_shift, trace, ConePolicy, GeodesicPath, TraceStart};
use flatflow::closed::GeodesicClass;
use flatflow::{Surface, Vec2};
use proptest::prelude::*;
use std::sync::OnceLock;

struct World {
    s: Surface,
    g: ConcatGraph,
}

fn world(name: &'static str) -> &'static World {
    static OCT: OnceLock<World> = OnceLock::new();
    static LSH: OnceLock<World> = OnceLock::new();
    let cell = if name == "octagon" { &OCT } else { &LSH };
    cell.get_or_init(|| {
        let s = surface(name);
        let g = build_concat_graph(&s, 7.0, DEFAULT_CHART_BUDGET).unwrap();
        World { s, g }
    })
}

fn pair() -> &'static LoopPair {
    static P: OnceLock<LoopPair> = OnceLock::new();
    P.get_or_init(|| {
        let (long, short) = similar_length_pair(&world("octagon").g, 0.5, 6.0, DEFAULT_CYCLE_BUDGET).unwrap();
        LoopPair { long, short }
    })
}

fn point_in(s: &Surface, poly: usize, w: &[f64]) -> SurfacePoint {
    let vs = &s.polygons[poly].vertices;
    let total: f64 = w.iter().take(vs.len()).sum();
    let mut p = Vec2::new(0.0, 0.0);
    for (v, x) in vs.iter().zip(w) {
        p = p + *v * (x / total);
    }
    SurfacePoint { polygon: poly, pos: p }
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 8)
}

fn traced(s: &Surface, poly: usize, w: &[f64], angle: f64, big_t: f64) -> GeodesicPath {
    let p = point_in(s, poly, w);
    let start = TraceStart {
        polygon: poly,
        point: p.pos,
        dir: Vec2::from_angle(angle),
    };
    trace(s, start, 2.0 * big_t + 1.0, &ConePolicy::Bisect).unwrap().starting_at(-big_t)
}

fn dist(s: &Surface, a: SurfacePoint, b: SurfacePoint) -> f64 {
    surface_distance(s, a, b, 20.0, DEFAULT_CHART_BUDGET).unwrap().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_is_symmetric_and_triangular(
        name in prop::sample::select(vec!["octagon", "lshape"]),
        pa in 0usize..3, pb in 0usize..3, pc in 0usize..3,
        wa in weights(), wb in weights(), wc in weights(),
    ) {
        let s = &world(name).s;
        let n = s.polygons.len();
        let (a, b, c) = (point_in(s, pa % n, &wa), point_in(s, pb % n, &wb), point_in(s, pc % n, &wc));
        let (ab, ba) = (dist(s, a, b), dist(s, b, a));
        prop_assert!((ab - ba).abs() <= 1e-9, "{ab} vs {ba}");
        let (bc, ac) = (dist(s, b, c), dist(s, a, c));
        prop_assert!(ac <= ab + bc + 1e-9, "{ac} > {ab} + {bc}");
        prop_assert!(dist(s, a, a) == 0.0);
    }

    #[test]
    fn gs_distance_of_a_path_to_itself_is_zero(w in weights(), angle in 0.0..std::f64::consts::TAU) {
        let s = &world("octagon").s;
        let p = traced(s, 0, &w, angle, 6.0);
        let d = gs_distance_upper(s, &p, &p, 6.0).unwrap();
        prop_assert!(d.bound.abs() <= 1e-9);
    }

    #[test]
    fn gs_distance_is_lipschitz_in_flow_time(
        w in weights(), angle in 0.0..std::f64::consts::TAU, sh in 0.0f64..0.3,
    ) {
        let s = &world("octagon").s;
        let p = traced(s, 0, &w, angle, 8.0).with_window(-7.0, 7.0);
        let q = flow_shift(&p, sh).unwrap();
        if let Ok(d) = gs_distance_upper(s, &p, &q, 6.0) {
            prop_assert!(d.bound <= sh + 0.01, "bound {} for shift {sh}", d.bound);
        }
    }

    #[test]
    fn dense_coefficients_sandwich(
        y in 0.2f64..5.0, gap in 0.01f64..1.0, extra in 0.0f64..50.0, n in 0u64..6,
    ) {
        let x = y + gap;
        let tau = dense_threshold(x, y) + extra;
        let c = delta_dense_coeffs(x, y, tau, n).unwrap();
        let v = c.m1 as f64 * x + c.m2 as f64 * y;
        let lo = tau + n as f64 * gap;
        prop_assert!(c.m1 >= 1 && c.m2 >= 1);
        prop_assert!(v >= lo - 1e-9 && v <= lo + gap + 1e-9, "{v} outside [{lo}, {}]", lo + gap);
    }

    #[test]
    fn dense_coefficients_refuse_small_tau(y in 0.2f64..5.0, gap in 0.01f64..1.0, frac in 0.0f64..0.99) {
        let x = y + gap;
        let t = dense_threshold(x, y);
        let r = delta_dense_coeffs(x, y, t * frac, 0);
        prop_assert!(
            matches!(r, Err(ConstructError::TauTooSmall { threshold }) if threshold == t),
            "{r:?}"
        );
    }

    #[test]
    fn connector_length_identity(from in 0usize..1000, to in 0usize..1000, extra in 0.0f64..30.0) {
        let g = &world("octagon").g;
        let pair = pair();
        let (from, to) = (from % g.len(), to % g.len());
        let window = pair.gap() + 1e-9;
        match tune_connector(g, from, to, 0.0, window, pair) {
            Err(ConstructError::Infeasible { threshold }) => {
                let target = threshold + extra;
                let c = tune_connector(g, from, to, target, window, pair).unwrap();
                let (l1, l2) = c.loop_lengths;
                let want = c.base_length + c.k1 as f64 * l1 + c.k2 as f64 * l2;
                prop_assert!((c.length - want).abs() <= 1e-9, "{} vs {want}", c.length);
                prop_assert!((g.word_length(&c.word) - c.length).abs() <= 1e-9);
                prop_assert!(c.length >= target - 1e-9 && c.length <= target + window + 1e-9);
            }
            Ok(_) => prop_assert!(false, "target 0 accepted"),
            Err(_) => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn partition_sums_add_over_split_windows(q in 4.0f64..7.0, delta in 0.3f64..1.5, cut in 0.1f64..0.9) {
        let w = world("octagon");
        let ens = Ensemble::new(&w.s, &w.g, DEFAULT_CYCLE_BUDGET);
        let mid = q - delta * cut;
        let t = ens.window_table(&Potential::zero(), &[(q - delta, q), (q - delta, mid), (mid, q)]).unwrap();
        let (whole, a, b) = (&t[0], &t[1], &t[2]);
        prop_assert_eq!(whole.regular_count, a.regular_count + b.regular_count);
        let joined = log_sum([a.regular.value(), b.regular.value()]);
        let v = whole.regular.value();
        prop_assert!(v == joined || (v - joined).abs() <= 1e-9, "{v} vs {joined}");
    }

    #[test]
    fn constant_shift_moves_the_slope(c in -2.0f64..2.0) {
        let w = world("octagon");
        let ens = Ensemble::new(&w.s, &w.g, DEFAULT_CYCLE_BUDGET);
        let grid = [5.0, 6.0, 7.0];
        let delta = 0.5;
        let base = pressure_estimate(&ens, &Potential::zero(), &grid, delta, GeodesicClass::Regular).unwrap();
        let phi = Potential::constant(c);
        let shifted = pressure_estimate(&ens, &phi, &grid, delta, GeodesicClass::Regular).unwrap();
        for (i, q) in grid.iter().enumerate() {
            let d = shifted.log_lambda[i] - base.log_lambda[i];
            let (lo, hi) = if c >= 0.0 { (c * (q - delta), c * q) } else { (c * q, c * (q - delta)) };
            prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9, "Q = {q}: shift {d} outside [{lo}, {hi}]");
        }
        // the residual of the shift is in c·[−δ, 0], so its fitted slope is at most |c|·δ·k
        let xbar = grid.iter().sum::<f64>() / grid.len() as f64;
        let k = grid.iter().map(|x| (x - xbar).abs()).sum::<f64>() / grid.iter().map(|x| (x - xbar).powi(2)).sum::<f64>();
        let ds = shifted.slope - base.slope - c;
        prop_assert!(ds.abs() <= c.abs() * delta * k + 1e-9, "slope moved by {} for c = {c}", shifted.slope - base.slope);
    }

    #[test]
    fn orbit_average_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, f0 in -1.0f64..1.0, g2 in -1.0f64..1.0) {
        let w = world("lshape");
        let ens = Ensemble::new(&w.s, &w.g, DEFAULT_CYCLE_BUDGET);
        let phi = Potential::from_json(r#"{"0": 0.3, "offset": -0.1}"#).unwrap();
        let f = Potential::from_json(&format!(r#"{{"0": {f0}, "offset": 0.5}}"#)).unwrap();
        let g = Potential::from_json(&format!(r#"{{"2": {g2}}}"#)).unwrap();
        let comb = Potential::from_json(&format!(
            r#"{{"0": {}, "2": {}, "offset": {}}}"#, a * f0, b * g2, a * 0.5
        )).unwrap();
        let grid = [5.0, 6.0];
        let mu = |p: &Potential| equidistribution_series(&ens, &phi, &grid, 0.5, p).unwrap().value;
        let (mf, mg, mc) = (mu(&f), mu(&g), mu(&comb));
        for i in 0..grid.len() {
            let want = a * mf[i] + b * mg[i];
            prop_assert!((mc[i] - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {want}", mc[i]);
        }
    }
}

#[test]
fn fitted_line_recovers_exact_data() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
    let (slope, intercept, rms) = fit_line(&x, &y);
    assert!((slope - 2.5).abs() < 1e-12 && (intercept + 1.0).abs() < 1e-12 && rms < 1e-12);
}
