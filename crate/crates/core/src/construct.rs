//! Specification constructions: saddle-path versions of good segments,
//! length-tunable connectors, gluing of segments into one closed geodesic,
//! and periodic approximation.

use crate::closed::{enumerate_closed_geodesics, ClassFilter, ClosedGeodesic, GeodesicClass};
use crate::geom::{TOL_ANGLE, TOL_GEOM};
use crate::lambda::{in_g_eta, HorizonError, LambdaConfig};
use crate::saddle::{ConcatGraph, SaddleError};
use crate::surface::Surface;
use crate::thermo::Potential;
use crate::tracer::GeodesicPath;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error("segment {0} is not in G(eta)")]
    NotInG(usize),
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    #[error("no saddle connection of length {length} leaves the cone event at t = {t}")]
    LetterNotFound { t: f64, length: f64 },
    #[error("connector not found: {0}")]
    ConnectorNotFound(SaddleError),
    #[error("target length below the certified threshold {threshold}")]
    Infeasible { threshold: f64 },
    #[error("tau below the threshold T = {threshold}")]
    TauTooSmall { threshold: f64 },
    #[error("no two closed geodesics with period gap in (0, {delta}) up to Q = {qmax}")]
    NotFoundWithinBudget { delta: f64, qmax: f64 },
    #[error("constructed closed geodesic is singular")]
    NotRegular,
    #[error("segment {0}: the constructed path does not reproduce its middle window")]
    Mismatch(usize),
    #[error("bad input: {0}")]
    BadInput(String),
}

impl From<SaddleError> for ConstructError {
    fn from(e: SaddleError) -> Self {
        ConstructError::ConnectorNotFound(e)
    }
}

/// `⌊4π/η0⌋ + 3`.
pub fn fan_bound(s: &Surface) -> u64 {
    (4.0 * PI / s.eta0()).floor() as u64 + 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DenseCoeffs {
    pub m1: u64,
    pub m2: u64,
    pub c: u64,
}

/// `δ`-dense coefficients for integer-scaled inputs: all lengths are
/// multiples of `1/scale`. With `δ = x − y` and `C` the smallest integer
/// above `y/δ + 2`, needs `tau ≥ T = max(C·y, 1)`, and returns positive
/// `(m1, m2)` with `tau + nδ ≤ m1·x + m2·y ≤ tau + (n+1)δ`.
pub fn delta_dense_coeffs_scaled(x: i128, y: i128, tau: i128, n: i128, scale: i128) -> Result<DenseCoeffs, (i128, String)> {
    if !(x > y && y > 0 && scale > 0 && n >= 0) {
        return Err((0, "need x > y > 0, n ≥ 0".into()));
    }
    let d = x - y;
    let c = y / d + 3;
    let big_t = (c * y).max(scale);
    if tau < big_t {
        return Err((big_t, "tau too small".into()));
    }
    let goal = tau + n * d;
    let k1 = goal / y;
    let k2 = ((goal - k1 * y) + d - 1) / d;
    let k2 = k2.max(1);
    Ok(DenseCoeffs {
        m1: k2 as u64,
        m2: (k1 - k2) as u64,
        c: c as u64,
    })
}

/// Float version of [`delta_dense_coeffs_scaled`]; the sandwich is checked to 1e-9.
pub fn delta_dense_coeffs(x: f64, y: f64, tau: f64, n: u64) -> Result<DenseCoeffs, ConstructError> {
    if !(x > y && y > 0.0) {
        return Err(ConstructError::BadInput(format!("need x > y > 0 (x = {x}, y = {y})")));
    }
    let d = x - y;
    let c = (y / d).floor() + 3.0;
    let big_t = (c * y).max(1.0);
    if tau < big_t - 1e-12 {
        return Err(ConstructError::TauTooSmall { threshold: big_t });
    }
    let goal = tau + n as f64 * d;
    let k1 = (goal / y + 1e-12).floor();
    let k2 = ((goal - k1 * y) / d - 1e-12).ceil().max(1.0);
    let v = k2 * x + (k1 - k2) * y;
    if v < goal - 1e-9 || v > goal + d + 1e-9 || k1 - k2 < 1.0 {
        return Err(ConstructError::BadInput("sandwich failed".into()));
    }
    Ok(DenseCoeffs {
        m1: k2 as u64,
        m2: (k1 - k2) as u64,
        c: c as u64,
    })
}

/// The threshold `T = max(C·y, 1)` for a pair of lengths.
pub fn dense_threshold(x: f64, y: f64) -> f64 {
    let c = (y / (x - y)).floor() + 3.0;
    (c * y).max(1.0)
}

/// Two closed geodesics whose periods differ by a positive amount below
/// `delta`: the first adjacent pair in the sorted period list.
pub fn similar_length_pair(g: &ConcatGraph, delta: f64, qmax: f64, budget: usize) -> Result<(ClosedGeodesic, ClosedGeodesic), ConstructError> {
    let all = enumerate_closed_geodesics(g, qmax, ClassFilter::All, budget)?;
    for w in all.windows(2) {
        let gap = w[1].period - w[0].period;
        if gap > 1e-9 && gap < delta {
            return Ok((w[1].clone(), w[0].clone()));
        }
    }
    Err(ConstructError::NotFoundWithinBudget { delta, qmax })
}

/// A good segment rewritten as a path of saddle connections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddlePath {
    pub word: Vec<usize>,
    /// Time from the window start to the first cone event used.
    pub s0: f64,
    /// Time from the last cone event used to the window end.
    pub end_trim: f64,
    pub length: f64,
    /// Achieved shadowing distance on the covered interval.
    pub distance: f64,
}

fn find_letter(g: &ConcatGraph, class: usize, pos: f64, length: f64, total: f64) -> Option<usize> {
    let tol = 1e-7 * length.max(1.0);
    g.nodes
        .iter()
        .position(|sc| {
            let d = crate::geom::wrap(sc.start_pos - pos, total);
            sc.start_class == class && (sc.length - length).abs() <= tol && d.min(total - d) <= 1e-7
        })
}

/// Trim `p` on `[w, w + t]` to excess turns near its ends and read off the
/// saddle connections in between. The end events are taken inside the
/// window when one lies within `θ0/(2η)` of the end, otherwise from the
/// path data just outside it, so `s0` and `end_trim` may be negative.
pub fn extend_to_saddle_path(
    s: &Surface,
    g: &ConcatGraph,
    p: &GeodesicPath,
    t: f64,
    cfg: &LambdaConfig,
) -> Result<SaddlePath, ConstructError> {
    if !in_g_eta(p, t, cfg)? {
        return Err(ConstructError::NotInG(0));
    }
    let a = p.window.0;
    let m = s.theta0() / (2.0 * cfg.eta);
    let (lo, hi) = if p.period.is_some() {
        (a - m, a + t + m)
    } else {
        ((a - m).max(p.data.0), (a + t + m).min(p.data.1))
    };
    let events = p.events_in(lo, hi);
    let strong = |e: &crate::tracer::ConeEvent| e.excess() > TOL_ANGLE;
    let inside = |e: &crate::tracer::ConeEvent| strong(e) && e.t >= a - 1e-12 && e.t <= a + t + 1e-12;
    let first_in = events.iter().position(inside);
    let last_in = events.iter().rposition(inside);
    let i0 = match first_in {
        Some(i) if events[i].t - a <= m + 1e-9 => Some(i),
        _ => events.iter().rposition(|e| strong(e) && e.t < a).or(first_in),
    };
    let i1 = match last_in {
        Some(i) if a + t - events[i].t <= m + 1e-9 => Some(i),
        _ => events.iter().position(|e| strong(e) && e.t > a + t).or(last_in),
    };
    let (Some(i0), Some(i1)) = (i0, i1) else {
        return Err(ConstructError::NotInG(0));
    };
    if i1 < i0 {
        return Err(ConstructError::NotInG(0));
    }
    let mut word = Vec::new();
    for k in i0..i1 {
        let (e, f) = (&events[k], &events[k + 1]);
        let total = s.classes[e.class].total_angle;
        let b = find_letter(g, e.class, e.outgoing, f.t - e.t, total).ok_or(ConstructError::LetterNotFound {
            t: e.t,
            length: f.t - e.t,
        })?;
        if let Some(&prev) = word.last() {
            if g.joint(prev, b).is_none() {
                return Err(ConstructError::LetterNotFound { t: e.t, length: f.t - e.t });
            }
        }
        word.push(b);
    }
    Ok(SaddlePath {
        length: g.word_length(&word),
        s0: events[i0].t - a,
        end_trim: a + t - events[i1].t,
        word,
        distance: 0.0,
    })
}

/// Letters strictly after `a` up to and including a fresh occurrence of `b`.
fn join(g: &ConcatGraph, a: usize, b: usize) -> Result<Vec<usize>, ConstructError> {
    if g.joint(a, b).is_some() {
        return Ok(vec![b]);
    }
    if a != b {
        let p = g.connect(a, b, f64::INFINITY)?;
        return Ok(p[1..].to_vec());
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (c, _) in g.successors(a, f64::INFINITY) {
        if let Ok(p) = g.connect(c, b, f64::INFINITY) {
            let l = g.word_length(&p);
            if best.as_ref().map_or(true, |x| l < x.0) {
                best = Some((l, p));
            }
        }
    }
    best.map(|x| x.1).ok_or(ConstructError::ConnectorNotFound(SaddleError::NotFound(f64::INFINITY)))
}

/// A connector whose length is tuned by looping around two closed geodesics
/// of nearby periods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Connector {
    /// Letters strictly between `from` and `to`.
    pub word: Vec<usize>,
    pub k1: u64,
    pub k2: u64,
    /// Length with one loop around each geodesic, minus both loops.
    pub base_length: f64,
    pub length: f64,
    pub loop_lengths: (f64, f64),
}

/// Loops used by [`tune_connector`]: `γ1` longer than `γ2` by `δ'`.
#[derive(Debug, Clone)]
pub struct LoopPair {
    pub long: ClosedGeodesic,
    pub short: ClosedGeodesic,
}

impl LoopPair {
    pub fn gap(&self) -> f64 {
        self.long.period - self.short.period
    }

    /// Threshold `T` of the δ-dense construction for these loop lengths.
    pub fn threshold(&self) -> f64 {
        dense_threshold(self.long.period, self.short.period)
    }
}

fn build_connector(g: &ConcatGraph, from: usize, to: usize, pair: &LoopPair, k1: u64, k2: u64) -> Result<Vec<usize>, ConstructError> {
    let (w1, w2) = (&pair.long.word, &pair.short.word);
    let mut seq = vec![from];
    seq.extend(join(g, from, w1[0])?);
    seq.extend_from_slice(&w1[1..]);
    for _ in 1..k1 {
        seq.extend_from_slice(w1);
    }
    let last = *seq.last().unwrap();
    seq.extend(join(g, last, w2[0])?);
    seq.extend_from_slice(&w2[1..]);
    for _ in 1..k2 {
        seq.extend_from_slice(w2);
    }
    let last = *seq.last().unwrap();
    seq.extend(join(g, last, to)?);
    seq.pop();
    seq.remove(0);
    Ok(seq)
}

/// Base length `ℓ_base` of the connector from `from` to `to` through `pair`.
pub fn connector_base(g: &ConcatGraph, from: usize, to: usize, pair: &LoopPair) -> Result<f64, ConstructError> {
    let w = build_connector(g, from, to, pair, 1, 1)?;
    Ok(g.word_length(&w) - pair.long.period - pair.short.period)
}

/// Connector from `from` to `to` with length in `[target, target + window]`.
pub fn tune_connector(
    g: &ConcatGraph,
    from: usize,
    to: usize,
    target: f64,
    window: f64,
    pair: &LoopPair,
) -> Result<Connector, ConstructError> {
    let gap = pair.gap();
    if window < gap {
        return Err(ConstructError::BadInput(format!("window {window} below the loop gap {gap}")));
    }
    let base = connector_base(g, from, to, pair)?;
    let threshold = base + pair.threshold();
    if target < threshold - 1e-12 {
        return Err(ConstructError::Infeasible { threshold });
    }
    let c = delta_dense_coeffs(pair.long.period, pair.short.period, target - base, 0)?;
    // m1·ℓ1 + m2·ℓ2 with m1 = k2, m2 = k1 − k2 in the construction's terms
    let (k1, k2) = (c.m1, c.m2);
    let word = build_connector(g, from, to, pair, k1, k2)?;
    let length = g.word_length(&word);
    Ok(Connector {
        word,
        k1,
        k2,
        base_length: base,
        length,
        loop_lengths: (pair.long.period, pair.short.period),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GlueMode {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub t: f64,
    pub s0: f64,
    pub end_trim: f64,
    /// Time in the constructed closed path at which the segment's copy starts.
    pub start: f64,
    /// Middle window `[m, t − m]`, `m = θ0/(2η)`, in segment time.
    pub middle: (f64, f64),
    /// Largest planar distance found on the middle window.
    pub middle_distance: f64,
    /// Bound on the space-of-geodesics distance at the segment's midpoint.
    pub midpoint_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShadowingReport {
    pub mode: GlueMode,
    pub delta: f64,
    pub segments: Vec<SegmentReport>,
    /// Constructed cyclic word, starting with the first segment's copy.
    pub word: Vec<usize>,
    pub closed: ClosedGeodesic,
    pub period: f64,
    /// Time from the end of copy `i` to the start of copy `i + 1`.
    pub transitions: Vec<f64>,
    /// Loop gap `δ'` used for tuning.
    pub loop_gap: f64,
    /// Certified lower bound for the common transition time.
    pub threshold: f64,
    #[serde(skip)]
    pub path: GeodesicPath,
}

/// Build one closed geodesic visiting all `segments` in order.
pub fn glue_segments(
    s: &Surface,
    g: &ConcatGraph,
    segments: &[(GeodesicPath, f64)],
    delta: f64,
    mode: GlueMode,
    cfg: &LambdaConfig,
    pair: &LoopPair,
    transition: Option<f64>,
) -> Result<ShadowingReport, ConstructError> {
    if segments.is_empty() || !(delta > 0.0) {
        return Err(ConstructError::BadInput("need segments and delta > 0".into()));
    }
    let mut paths = Vec::new();
    for (i, (p, t)) in segments.iter().enumerate() {
        match extend_to_saddle_path(s, g, p, *t, cfg) {
            Ok(sp) => paths.push(sp),
            Err(ConstructError::NotInG(_)) => return Err(ConstructError::NotInG(i)),
            Err(e) => return Err(e),
        }
    }
    let k = paths.len();
    let window = match mode {
        GlueMode::Strong => delta / 4.0,
        GlueMode::Weak => f64::INFINITY,
    };
    let mut conns: Vec<Vec<usize>> = Vec::new();
    let mut threshold = 0.0f64;
    match mode {
        GlueMode::Weak => {
            for i in 0..k {
                let (a, b) = (*paths[i].word.last().unwrap(), paths[(i + 1) % k].word[0]);
                let mut w = join(g, a, b)?;
                w.pop();
                conns.push(w);
            }
        }
        GlueMode::Strong => {
            if pair.gap() > window {
                return Err(ConstructError::BadInput(format!("loop gap {} above delta/4", pair.gap())));
            }
            let mut bases = Vec::new();
            for i in 0..k {
                let (a, b) = (*paths[i].word.last().unwrap(), paths[(i + 1) % k].word[0]);
                let base = connector_base(g, a, b, pair)?;
                let trims = paths[i].end_trim + paths[(i + 1) % k].s0;
                threshold = threshold.max(base + pair.threshold() - trims);
                bases.push((a, b, trims));
            }
            let tau = transition.unwrap_or(threshold);
            if tau < threshold - 1e-12 {
                return Err(ConstructError::Infeasible { threshold });
            }
            for (a, b, trims) in bases {
                conns.push(tune_connector(g, a, b, tau + trims, pair.gap(), pair)?.word);
            }
        }
    }
    let mut word = Vec::new();
    let mut starts = Vec::new();
    let mut clock = 0.0;
    let mut transitions = Vec::new();
    for i in 0..k {
        starts.push(clock);
        word.extend_from_slice(&paths[i].word);
        word.extend_from_slice(&conns[i]);
        let cl = g.word_length(&conns[i]);
        transitions.push(cl - paths[i].end_trim - paths[(i + 1) % k].s0);
        clock += paths[i].length + cl;
    }
    let joints = g.word_joints(&word, true).ok_or(ConstructError::NotRegular)?;
    let class = if joints.iter().all(|j| j.singular) {
        GeodesicClass::Singular
    } else {
        GeodesicClass::Regular
    };
    if class != GeodesicClass::Regular {
        return Err(ConstructError::NotRegular);
    }
    let raw = ClosedGeodesic {
        word: word.clone(),
        joints,
        period: g.word_length(&word),
        class,
    };
    let path = raw.to_path(g);
    let m = s.theta0() / (2.0 * cfg.eta);
    let mut reports = Vec::new();
    for (i, (p, t)) in segments.iter().enumerate() {
        let sp = &paths[i];
        let middle = (m, t - m);
        if sp.s0 > m + 1e-9 || sp.end_trim > m + 1e-9 {
            return Err(ConstructError::Mismatch(i));
        }
        let start = starts[i] - sp.s0;
        let d = middle_distance(s, p, &path, p.window.0, start, sp.s0, t - sp.end_trim);
        if d > 1e-7 {
            return Err(ConstructError::Mismatch(i));
        }
        let half = (0.5 * (middle.1 - middle.0)).max(0.0);
        reports.push(SegmentReport {
            t: *t,
            s0: sp.s0,
            end_trim: sp.end_trim,
            start,
            middle,
            middle_distance: d,
            midpoint_bound: (-2.0 * half).exp(),
        });
    }
    let closed = ClosedGeodesic::from_word(g, &word).ok_or(ConstructError::NotRegular)?;
    Ok(ShadowingReport {
        mode,
        delta,
        segments: reports,
        period: raw.period,
        word,
        closed,
        transitions,
        loop_gap: pair.gap(),
        threshold,
        path,
    })
}

/// Largest distance between `p(a + u)` and `q(start + u)` over `u ∈ [lo, hi]`,
/// checked at segment ends and midpoints of `p`. Representations of the same
/// point on an edge or vertex count as distance 0.
fn middle_distance(s: &Surface, p: &GeodesicPath, q: &GeodesicPath, a: f64, start: f64, lo: f64, hi: f64) -> f64 {
    let mut times = vec![lo, hi];
    for sg in &p.segments {
        for x in [sg.t0, 0.5 * (sg.t0 + sg.t1), sg.t1] {
            let u = x - a;
            if u > lo && u < hi {
                times.push(u);
            }
        }
    }
    let mut worst = 0.0f64;
    for u in times {
        let (Some(x), Some(y)) = (p.point_at(a + u), q.point_at(start + u)) else {
            return f64::INFINITY;
        };
        let d = s
            .representations(x)
            .iter()
            .filter(|r| r.polygon == y.polygon)
            .map(|r| r.pos.dist(y.pos))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(if d <= TOL_GEOM { 0.0 } else { d });
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicApproximation {
    /// `T̂′`: the period lies in `[t + T̂′ − δ, t + T̂′]`.
    pub t_prime: f64,
    pub window: (f64, f64),
    pub report: ShadowingReport,
}

/// A regular closed geodesic with period in `[t + T̂′ − δ, t + T̂′]` that
/// contains the middle of the segment. `t_prime` defaults to the smallest
/// value the construction certifies for this segment.
pub fn periodic_approximation(
    s: &Surface,
    g: &ConcatGraph,
    segment: (&GeodesicPath, f64),
    delta: f64,
    cfg: &LambdaConfig,
    pair: &LoopPair,
    t_prime: Option<f64>,
) -> Result<PeriodicApproximation, ConstructError> {
    if pair.gap() >= delta {
        return Err(ConstructError::BadInput(format!("loop gap {} not below delta", pair.gap())));
    }
    let (p, t) = segment;
    let sp = extend_to_saddle_path(s, g, p, t, cfg)?;
    let (a, b) = (*sp.word.last().unwrap(), sp.word[0]);
    let base = connector_base(g, a, b, pair)?;
    let trims = sp.s0 + sp.end_trim;
    let least = base + pair.threshold() - trims + delta;
    let tp = t_prime.unwrap_or(least);
    if tp < least - 1e-12 {
        return Err(ConstructError::Infeasible { threshold: least });
    }
    let conn = tune_connector(g, a, b, tp - delta + trims, pair.gap(), pair)?;
    let mut word = sp.word.clone();
    word.extend_from_slice(&conn.word);
    let joints = g.word_joints(&word, true).ok_or(ConstructError::NotRegular)?;
    if joints.iter().all(|j| j.singular) {
        return Err(ConstructError::NotRegular);
    }
    let raw = ClosedGeodesic {
        period: g.word_length(&word),
        word: word.clone(),
        joints,
        class: GeodesicClass::Regular,
    };
    let path = raw.to_path(g);
    let m = s.theta0() / (2.0 * cfg.eta);
    if sp.s0 > m + 1e-9 || sp.end_trim > m + 1e-9 {
        return Err(ConstructError::Mismatch(0));
    }
    let d = middle_distance(s, p, &path, p.window.0, -sp.s0, sp.s0, t - sp.end_trim);
    if d > 1e-7 {
        return Err(ConstructError::Mismatch(0));
    }
    let window = (t + tp - delta, t + tp);
    let half = (0.5 * (t - 2.0 * m)).max(0.0);
    let report = ShadowingReport {
        mode: GlueMode::Strong,
        delta,
        segments: vec![SegmentReport {
            t,
            s0: sp.s0,
            end_trim: sp.end_trim,
            start: -sp.s0,
            middle: (m, t - m),
            middle_distance: d,
            midpoint_bound: (-2.0 * half).exp(),
        }],
        closed: ClosedGeodesic::from_word(g, &word).ok_or(ConstructError::NotRegular)?,
        period: raw.period,
        word,
        transitions: vec![raw.period - t],
        loop_gap: pair.gap(),
        threshold: least - delta,
        path,
    };
    Ok(PeriodicApproximation {
        t_prime: tp,
        window,
        report,
    })
}

/// Birkhoff-integral discrepancy between a segment and its shadow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BowenCheck {
    pub discrepancy: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `K̂ = C_φ/α̂ + (4m + 4δ)‖φ‖` with `m` the coincidence margin. For a
/// potential that depends only on the footpoint the integrand vanishes
/// wherever the two paths coincide, so the Hölder term is 0.
pub fn bowen_bound(s: &Surface, phi: &Potential, margin: f64, delta: f64) -> f64 {
    (4.0 * margin + 4.0 * delta) * phi.norm(s)
}

/// Compare `∫_0^t φ` along segment `i` with the same window of the shadow.
pub fn bowen_check(s: &Surface, phi: &Potential, seg: (&GeodesicPath, f64), report: &ShadowingReport, i: usize, cfg: &LambdaConfig) -> BowenCheck {
    let (p, t) = seg;
    let r = &report.segments[i];
    let a = p.window.0;
    let x = phi.path_integral(s, p, a, a + t);
    let y = phi.path_integral(s, &report.path, r.start, r.start + t);
    let m = s.theta0() / (2.0 * cfg.eta);
    let bound = bowen_bound(s, phi, m, report.delta);
    let discrepancy = (x - y).abs();
    BowenCheck {
        discrepancy,
        bound,
        holds: discrepancy <= bound,
    }
}
