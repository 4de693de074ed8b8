//! Potentials, weighted sums over closed geodesics, pressure estimates and
//! the equidistribution experiment.

use crate::closed::{fold_symmetric, window_sums, ClosedGeodesic, GeodesicClass, LogSum, WindowSum};
use crate::saddle::{ConcatGraph, SaddleError};
use crate::distance::surface_distance;
use crate::surface::{Surface, SurfacePoint};
use crate::symmetry::Symmetry;
use crate::tracer::GeodesicPath;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("bad potential: {0}")]
    BadPotential(String),
    #[error("unknown polygon id {0}")]
    UnknownPolygon(usize),
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error("no classes in the window ending at Q = {0}")]
    InsufficientData(f64),
    #[error("empty window ending at Q = {0}")]
    EmptyWindow(f64),
    #[error("bad Q grid: {0}")]
    BadGrid(String),
}

/// Piecewise-constant potential: a rate per polygon plus a global offset.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Potential {
    /// Polygon id to rate. Polygons not listed have rate 0.
    pub per_polygon: BTreeMap<usize, f64>,
    pub offset: f64,
}

impl Potential {
    pub fn zero() -> Self {
        Potential::default()
    }

    pub fn constant(c: f64) -> Self {
        Potential {
            per_polygon: BTreeMap::new(),
            offset: c,
        }
    }

    /// Parse `{"<polygon id>": value, ..., "offset": c}`.
    pub fn from_json(text: &str) -> Result<Self, ThermoError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ThermoError::BadPotential(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| ThermoError::BadPotential("expected a JSON object".into()))?;
        let mut out = Potential::zero();
        for (k, x) in obj {
            let x = x
                .as_f64()
                .ok_or_else(|| ThermoError::BadPotential(format!("value of {k} is not a number")))?;
            if k == "offset" {
                out.offset = x;
            } else {
                let id = k
                    .parse()
                    .map_err(|_| ThermoError::BadPotential(format!("key {k} is not a polygon id")))?;
                out.per_polygon.insert(id, x);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.per_polygon {
            m.insert(k.to_string(), (*v).into());
        }
        m.insert("offset".into(), self.offset.into());
        serde_json::Value::Object(m)
    }

    pub fn check(&self, s: &Surface) -> Result<(), ThermoError> {
        for &id in self.per_polygon.keys() {
            s.polygon_index(id).ok_or(ThermoError::UnknownPolygon(id))?;
        }
        Ok(())
    }

    /// Per-polygon rates (offset excluded), by polygon index.
    pub fn rates(&self, s: &Surface) -> Vec<f64> {
        s.polygons
            .iter()
            .map(|p| self.per_polygon.get(&p.id).copied().unwrap_or(0.0))
            .collect()
    }

    /// `‖φ‖ = max |value|` over the surface.
    pub fn norm(&self, s: &Surface) -> f64 {
        self.rates(s)
            .iter()
            .map(|r| (r + self.offset).abs())
            .fold(0.0, f64::max)
    }

    /// `‖φ − offset‖`.
    pub fn varying_norm(&self, s: &Surface) -> f64 {
        self.rates(s).iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    /// `∫ φ` along `p` over `[lo, hi]`.
    pub fn path_integral(&self, s: &Surface, p: &GeodesicPath, lo: f64, hi: f64) -> f64 {
        let lens = p.polygon_lengths(lo, hi, s.polygons.len());
        let rates = self.rates(s);
        lens.iter().zip(&rates).map(|(l, r)| l * r).sum::<f64>() + self.offset * (hi - lo)
    }

    /// Integral of the per-polygon part along each saddle connection.
    fn letter_rates(&self, s: &Surface, g: &ConcatGraph) -> Vec<f64> {
        let rates = self.rates(s);
        g.nodes
            .iter()
            .map(|sc| {
                let lens = sc.trace.polygon_lengths(0.0, sc.length, s.polygons.len());
                lens.iter().zip(&rates).map(|(l, r)| l * r).sum()
            })
            .collect()
    }

    /// `Φ` along each saddle connection.
    pub fn letter_weights(&self, s: &Surface, g: &ConcatGraph) -> Vec<f64> {
        self.letter_rates(s, g)
            .into_iter()
            .zip(&g.nodes)
            .map(|(x, sc)| x + self.offset * sc.length)
            .collect()
    }
}

/// `Φ(γ)`: exact sum over the saddle connections of the word.
pub fn birkhoff_integral(s: &Surface, phi: &Potential, g: &ConcatGraph, gamma: &ClosedGeodesic) -> f64 {
    let rates = phi.rates(s);
    gamma
        .word
        .iter()
        .map(|&b| {
            let sc = &g.nodes[b];
            let lens = sc.trace.polygon_lengths(0.0, sc.length, s.polygons.len());
            lens.iter().zip(&rates).map(|(l, r)| l * r).sum::<f64>()
        })
        .sum::<f64>()
        + phi.offset * gamma.period
}

/// Graph and symmetry group shared by the partition-sum estimators.
pub struct Ensemble<'a> {
    pub surface: &'a Surface,
    pub graph: &'a ConcatGraph,
    pub symmetry: Symmetry,
    pub budget: usize,
}

impl<'a> Ensemble<'a> {
    pub fn new(surface: &'a Surface, graph: &'a ConcatGraph, budget: usize) -> Self {
        Ensemble {
            surface,
            graph,
            symmetry: Symmetry::detect(surface, graph),
            budget,
        }
    }

    /// Sums over each period window `[lo, hi]`, regular and singular.
    pub fn window_table(&self, phi: &Potential, windows: &[(f64, f64)]) -> Result<Vec<WindowSum>, ThermoError> {
        phi.check(self.surface)?;
        let wt = phi.letter_weights(self.surface, self.graph);
        Ok(window_sums(self.graph, windows, &wt, &self.symmetry, self.budget)?)
    }
}

/// A partition sum: `log Λ` (−∞ when empty) and the number of classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionSum {
    pub log_value: f64,
    pub count: u64,
}

fn pick(w: &WindowSum, class: GeodesicClass) -> PartitionSum {
    match class {
        GeodesicClass::Regular => PartitionSum {
            log_value: w.regular.value(),
            count: w.regular_count,
        },
        GeodesicClass::Singular => PartitionSum {
            log_value: w.singular.value(),
            count: w.singular_count,
        },
    }
}

/// `Λ_R(Q, δ, φ)` over regular classes with period in `[Q − δ, Q]`.
pub fn lambda_r(ens: &Ensemble, phi: &Potential, q: f64, delta: f64) -> Result<PartitionSum, ThermoError> {
    let t = ens.window_table(phi, &[(q - delta, q)])?;
    Ok(pick(&t[0], GeodesicClass::Regular))
}

/// The singular counterpart of [`lambda_r`].
pub fn lambda_sing(ens: &Ensemble, phi: &Potential, q: f64, delta: f64) -> Result<PartitionSum, ThermoError> {
    let t = ens.window_table(phi, &[(q - delta, q)])?;
    Ok(pick(&t[0], GeodesicClass::Singular))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureReport {
    pub class: GeodesicClass,
    pub delta: f64,
    pub q: Vec<f64>,
    pub count: Vec<u64>,
    pub log_lambda: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
    /// Slopes between consecutive grid points.
    pub successive_slopes: Vec<f64>,
    /// `|slope_i − slope_{i−1}|`.
    pub diagnostics: Vec<f64>,
    /// `(ĉ1, ĉ2)`: tightest constants with
    /// `log Λ − Q·slope ∈ [−log Q + ĉ1, δ‖φ‖ + ĉ2]` on the grid.
    pub envelope: (f64, f64),
    pub truncated: bool,
    pub estimate: bool,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

pub fn check_grid(qgrid: &[f64], delta: f64) -> Result<(), ThermoError> {
    if qgrid.len() < 3 {
        return Err(ThermoError::BadGrid("need at least 3 points".into()));
    }
    if qgrid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ThermoError::BadGrid("grid must be increasing".into()));
    }
    if !(delta > 0.0 && delta < qgrid[0]) {
        return Err(ThermoError::BadGrid(format!("need 0 < delta < Q (delta = {delta})")));
    }
    Ok(())
}

fn windows_of(qgrid: &[f64], delta: f64) -> Vec<(f64, f64)> {
    qgrid.iter().map(|&q| (q - delta, q)).collect()
}

fn report_from(
    table: &[WindowSum],
    qgrid: &[f64],
    delta: f64,
    class: GeodesicClass,
    phi_norm: f64,
) -> Result<PressureReport, ThermoError> {
    let sums: Vec<PartitionSum> = table.iter().map(|w| pick(w, class)).collect();
    if let Some(i) = sums.iter().position(|p| p.count == 0) {
        return Err(ThermoError::InsufficientData(qgrid[i]));
    }
    let y: Vec<f64> = sums.iter().map(|p| p.log_value).collect();
    let (slope, intercept, residual) = fit_line(qgrid, &y);
    let successive_slopes: Vec<f64> = qgrid
        .windows(2)
        .zip(y.windows(2))
        .map(|(q, l)| (l[1] - l[0]) / (q[1] - q[0]))
        .collect();
    let diagnostics = successive_slopes.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let dev: Vec<f64> = qgrid.iter().zip(&y).map(|(q, l)| l - q * slope).collect();
    let c1 = qgrid
        .iter()
        .zip(&dev)
        .map(|(q, d)| d + q.ln())
        .fold(f64::INFINITY, f64::min);
    let c2 = dev.iter().map(|d| d - delta * phi_norm).fold(f64::NEG_INFINITY, f64::max);
    Ok(PressureReport {
        class,
        delta,
        q: qgrid.to_vec(),
        count: sums.iter().map(|p| p.count).collect(),
        log_lambda: y,
        slope,
        intercept,
        residual,
        successive_slopes,
        diagnostics,
        envelope: (c1, c2),
        truncated: false,
        estimate: true,
    })
}

/// Slope of `log Λ` against `Q` over the grid.
pub fn pressure_estimate(
    ens: &Ensemble,
    phi: &Potential,
    qgrid: &[f64],
    delta: f64,
    class: GeodesicClass,
) -> Result<PressureReport, ThermoError> {
    check_grid(qgrid, delta)?;
    let table = ens.window_table(phi, &windows_of(qgrid, delta))?;
    report_from(&table, qgrid, delta, class, phi.norm(ens.surface))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub pressure: f64,
    pub singular_pressure: f64,
    pub gap: f64,
    /// `½(P̂(0) − P̂_Sing(0))`.
    pub nearly_constant_bound: f64,
    pub varying_norm: f64,
    /// `‖φ − offset‖ < bound`.
    pub satisfied: bool,
    pub regular: PressureReport,
    pub singular: PressureReport,
    pub estimate: bool,
}

pub fn pressure_gap_report(ens: &Ensemble, phi: &Potential, qgrid: &[f64], delta: f64) -> Result<GapReport, ThermoError> {
    check_grid(qgrid, delta)?;
    let w = windows_of(qgrid, delta);
    let table = ens.window_table(phi, &w)?;
    let norm = phi.norm(ens.surface);
    let regular = report_from(&table, qgrid, delta, GeodesicClass::Regular, norm)?;
    let singular = report_from(&table, qgrid, delta, GeodesicClass::Singular, norm)?;
    let zero_table = if *phi == Potential::zero() {
        table
    } else {
        ens.window_table(&Potential::zero(), &w)?
    };
    let r0 = report_from(&zero_table, qgrid, delta, GeodesicClass::Regular, 0.0)?;
    let s0 = report_from(&zero_table, qgrid, delta, GeodesicClass::Singular, 0.0)?;
    let bound = 0.5 * (r0.slope - s0.slope);
    let varying = phi.varying_norm(ens.surface);
    Ok(GapReport {
        pressure: regular.slope,
        singular_pressure: singular.slope,
        gap: regular.slope - singular.slope,
        nearly_constant_bound: bound,
        varying_norm: varying,
        satisfied: varying < bound,
        regular,
        singular,
        estimate: true,
    })
}

/// `Σ w·x / Σ w` with weights given in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WeightedMean {
    max: f64,
    s0: f64,
    s1: f64,
}

impl Default for WeightedMean {
    fn default() -> Self {
        WeightedMean {
            max: f64::NEG_INFINITY,
            s0: 0.0,
            s1: 0.0,
        }
    }
}

impl WeightedMean {
    fn add(&mut self, logw: f64, x: f64) {
        if logw > self.max {
            let k = (self.max - logw).exp();
            self.s0 = self.s0 * k + 1.0;
            self.s1 = self.s1 * k + x;
            self.max = logw;
        } else {
            let w = (logw - self.max).exp();
            self.s0 += w;
            self.s1 += w * x;
        }
    }

    fn merge(&mut self, o: &WeightedMean) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if o.max > self.max {
            let k = (self.max - o.max).exp();
            self.s0 = self.s0 * k + o.s0;
            self.s1 = self.s1 * k + o.s1;
            self.max = o.max;
        } else {
            let k = (o.max - self.max).exp();
            self.s0 += o.s0 * k;
            self.s1 += o.s1 * k;
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.s0 > 0.0).then(|| self.s1 / self.s0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquidistributionSeries {
    pub delta: f64,
    pub q: Vec<f64>,
    pub value: Vec<f64>,
    /// `|μ_{Q_{i+1}}(f) − μ_{Q_i}(f)|`.
    pub differences: Vec<f64>,
    pub estimate: bool,
}

/// `μ_{Q,δ}(f)` for each `Q` of the grid: the `e^Φ`-weighted average of
/// `F(γ)/ℓ(γ)` over regular classes in `[Q − δ, Q]`.
pub fn equidistribution_series(
    ens: &Ensemble,
    phi: &Potential,
    qgrid: &[f64],
    delta: f64,
    f: &Potential,
) -> Result<EquidistributionSeries, ThermoError> {
    if qgrid.is_empty() || qgrid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ThermoError::BadGrid("grid must be nonempty and increasing".into()));
    }
    phi.check(ens.surface)?;
    f.check(ens.surface)?;
    let (s, g) = (ens.surface, ens.graph);
    let wt = phi.letter_weights(s, g);
    let fr = f.letter_rates(s, g);
    let sym = ens.symmetry.fixing(&wt).fixing(&fr);
    let windows = windows_of(qgrid, delta);
    let qmax = *qgrid.last().unwrap();
    let tol = crate::geom::TOL_GEOM;
    let acc = fold_symmetric(
        g,
        &sym,
        qmax,
        ens.budget,
        || vec![WeightedMean::default(); windows.len()],
        |acc, v| {
            if v.class != GeodesicClass::Regular {
                return;
            }
            let mut logw = f64::NAN;
            let mut x = 0.0;
            for (k, w) in windows.iter().enumerate() {
                if v.period >= w.0 - tol && v.period <= w.1 + tol {
                    if logw.is_nan() {
                        logw = v.word.iter().map(|&b| wt[b]).sum::<f64>() + v.weight.ln();
                        x = v.word.iter().map(|&b| fr[b]).sum::<f64>() / v.period;
                    }
                    acc[k].add(logw, x);
                }
            }
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
            a
        },
    )?;
    let mut value = Vec::with_capacity(qgrid.len());
    for (k, m) in acc.iter().enumerate() {
        let mean = m.mean().ok_or(ThermoError::EmptyWindow(qgrid[k]))?;
        value.push(f.offset + mean);
    }
    let differences = value.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok(EquidistributionSeries {
        delta,
        q: qgrid.to_vec(),
        value,
        differences,
        estimate: true,
    })
}

/// `μ_{Q,δ}(f)` for one window.
pub fn weighted_orbit_average(
    ens: &Ensemble,
    phi: &Potential,
    q: f64,
    delta: f64,
    f: &Potential,
) -> Result<f64, ThermoError> {
    Ok(equidistribution_series(ens, phi, &[q], delta, f)?.value[0])
}

/// Greedy `(t, ε)`-separated subset of `seeds`, each read from its window
/// start, and `(1/t)·log Σ e^{∫φ}` over it. Two seeds are separated when the
/// surface distance exceeds `ε` at some sample time in `[0, t]`; pairs whose
/// distance cannot be decided within `budget` count as separated.
pub fn separated_set_pressure_lower(
    s: &Surface,
    phi: &Potential,
    seeds: &[GeodesicPath],
    t: f64,
    eps: f64,
    budget: usize,
) -> Result<SeparatedSet, ThermoError> {
    if !(t > 0.0 && eps > 0.0) {
        return Err(ThermoError::BadGrid(format!("need t > 0 and eps > 0 (t = {t}, eps = {eps})")));
    }
    if seeds.is_empty() {
        return Err(ThermoError::InsufficientData(t));
    }
    let n = (2.0 * t / eps).ceil() as usize + 1;
    let samples = |p: &GeodesicPath| -> Vec<Option<SurfacePoint>> {
        (0..=n).map(|k| p.point_at(p.window.0 + t * k as f64 / n as f64)).collect()
    };
    let separated = |a: &[Option<SurfacePoint>], b: &[Option<SurfacePoint>]| {
        a.iter().zip(b).any(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => !matches!(surface_distance(s, *x, *y, eps, budget), Ok(Some(_))),
            _ => true,
        })
    };
    let mut kept: Vec<(usize, Vec<Option<SurfacePoint>>)> = Vec::new();
    for (i, p) in seeds.iter().enumerate() {
        let sp = samples(p);
        if kept.iter().all(|(_, q)| separated(&sp, q)) {
            kept.push((i, sp));
        }
    }
    let log_value = log_sum(kept.iter().map(|(i, _)| {
        let p = &seeds[*i];
        phi.path_integral(s, p, p.window.0, p.window.0 + t)
    }));
    Ok(SeparatedSet {
        t,
        eps,
        kept: kept.iter().map(|(i, _)| *i).collect(),
        value: log_value / t,
        estimate: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatedSet {
    pub t: f64,
    pub eps: f64,
    /// Indices of the seeds kept.
    pub kept: Vec<usize>,
    pub value: f64,
    pub estimate: bool,
}

/// Log-sum of `e^{Φ}` over any collection, for callers assembling their own sums.
pub fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut l = LogSum::default();
    for v in values {
        l.add(v);
    }
    l.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::{enumerate_closed_geodesics, ClassFilter, DEFAULT_CYCLE_BUDGET};
    use crate::saddle::{build_concat_graph, DEFAULT_CHART_BUDGET};

    fn surface(name: &str) -> Surface {
        crate::load_surface(format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    #[test]
    fn potential_json_round_trip() {
        let p = Potential::from_json(r#"{"0": 0.5, "2": -1, "offset": 0.25}"#).unwrap();
        assert_eq!(p.per_polygon[&0], 0.5);
        assert_eq!(p.offset, 0.25);
        assert_eq!(Potential::from_json(&p.to_json().to_string()).unwrap(), p);
        assert!(Potential::from_json(r#"{"x": 1}"#).is_err());
    }

    #[test]
    fn lambda_r_counts_match_enumeration() {
        let s = surface("octagon");
        let g = build_concat_graph(&s, 6.0, DEFAULT_CHART_BUDGET).unwrap();
        let ens = Ensemble::new(&s, &g, DEFAULT_CYCLE_BUDGET);
        let all = enumerate_closed_geodesics(&g, 6.0, ClassFilter::Regular, DEFAULT_CYCLE_BUDGET).unwrap();
        let want = all.iter().filter(|c| c.period >= 5.5 - 1e-9).count() as u64;
        let got = lambda_r(&ens, &Potential::zero(), 6.0, 0.5).unwrap();
        assert_eq!(got.count, want);
        assert!((got.log_value - (want as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn equidistribution_of_constants_is_exact() {
        let s = surface("lshape");
        let g = build_concat_graph(&s, 5.0, DEFAULT_CHART_BUDGET).unwrap();
        let ens = Ensemble::new(&s, &g, DEFAULT_CYCLE_BUDGET);
        let phi = Potential::from_json(r#"{"0": 0.3}"#).unwrap();
        let one = equidistribution_series(&ens, &phi, &[4.0, 5.0], 0.5, &Potential::constant(1.0)).unwrap();
        assert_eq!(one.value, vec![1.0, 1.0]);
    }

    #[test]
    fn equidistribution_matches_direct_sum() {
        let s = surface("lshape");
        let g = build_concat_graph(&s, 5.0, DEFAULT_CHART_BUDGET).unwrap();
        let ens = Ensemble::new(&s, &g, DEFAULT_CYCLE_BUDGET);
        let phi = Potential::from_json(r#"{"1": -0.4, "offset": 0.1}"#).unwrap();
        let f = Potential::from_json(r#"{"0": 1}"#).unwrap();
        let got = weighted_orbit_average(&ens, &phi, 5.0, 1.0, &f).unwrap();
        let all = enumerate_closed_geodesics(&g, 5.0, ClassFilter::Regular, DEFAULT_CYCLE_BUDGET).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for c in all.iter().filter(|c| c.period >= 4.0 - 1e-9) {
            let w = birkhoff_integral(&s, &phi, &g, c).exp();
            num += w * birkhoff_integral(&s, &f, &g, c) / c.period;
            den += w;
        }
        assert!((got - num / den).abs() < 1e-12);
    }

    #[test]
    fn separated_set_of_one_and_of_duplicates() {
        let s = surface("octagon");
        let g = build_concat_graph(&s, 4.0, DEFAULT_CHART_BUDGET).unwrap();
        let all = enumerate_closed_geodesics(&g, 4.0, ClassFilter::Regular, DEFAULT_CYCLE_BUDGET).unwrap();
        let p = all[0].to_path(&g);
        let phi = Potential::from_json(r#"{"0": 0.7, "offset": -0.2}"#).unwrap();
        let one = separated_set_pressure_lower(&s, &phi, &[p.clone()], 3.0, 0.1, 100_000).unwrap();
        let want = phi.path_integral(&s, &p, p.window.0, p.window.0 + 3.0) / 3.0;
        assert!((one.value - want).abs() < 1e-12);
        let dup = separated_set_pressure_lower(&s, &phi, &[p.clone(), p.clone(), p], 3.0, 0.1, 100_000).unwrap();
        assert_eq!(dup.kept, vec![0]);
        assert!((dup.value - want).abs() < 1e-12);
    }
}
