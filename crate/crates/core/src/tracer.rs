//! Unit-speed geodesics traced across polygon charts.
//!
//! A traced path is a list of straight segments, each living in one polygon's
//! frame, joined by transitions: an edge crossing, a pass through a flat
//! (2π) vertex, or a cone event. Cone events carry the side angles and the
//! signed turning angle; `θ = +left` when the left (counterclockwise) side is
//! the smaller one, otherwise `θ = −right`, ties resolved to `+`.

use crate::geom::{wrap, Isometry, Vec2, TOL_ANGLE, TOL_GEOM};
use crate::surface::{Surface, SurfacePoint};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("hit a cone point at t = {0}")]
    ConeHit(f64),
    #[error("turning angle {0} outside the band [π, {1}]")]
    InvalidTurn(f64, f64),
    #[error("start point is a cone point; an explicit first turn is required")]
    DegenerateStart,
    #[error("start point is outside polygon {0}")]
    OutsidePolygon(usize),
    #[error("explicit turning angles exhausted at t = {0}")]
    AnglesExhausted(f64),
    #[error("shifted window [{0}, {1}] exceeds traced data")]
    WindowExceeded(f64, f64),
    #[error("trace length must be positive")]
    NonPositiveLength,
}

/// What to do when a trace reaches a cone point.
#[derive(Debug, Clone, PartialEq)]
pub enum ConePolicy {
    Stop,
    TurnPlusPi,
    TurnMinusPi,
    Bisect,
    /// Angles consumed in order, one per cone event.
    Explicit(Vec<f64>),
    /// Angles consumed cyclically (used to replay closed geodesics).
    Cyclic(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub polygon: usize,
    pub start: Vec2,
    pub end: Vec2,
    pub t0: f64,
    pub t1: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn is_empty(&self) -> bool {
        self.t1 <= self.t0
    }

    pub fn dir(&self) -> Vec2 {
        (self.end - self.start).normalized()
    }

    pub fn at(&self, t: f64) -> Vec2 {
        let l = self.len();
        if l <= 0.0 {
            return self.start;
        }
        self.start.lerp(self.end, (t - self.t0) / l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeEvent {
    pub t: f64,
    pub class: usize,
    pub left: f64,
    pub right: f64,
    pub theta: f64,
    /// Circle position of the direction pointing back along the incoming segment.
    pub incoming: f64,
    /// Circle position of the outgoing direction.
    pub outgoing: f64,
}

impl ConeEvent {
    /// `|θ| − π`, the excess of the turn over a straight continuation.
    pub fn excess(&self) -> f64 {
        self.theta.abs() - PI
    }
}

/// How segment `i` hands over to segment `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Transition {
    Edge { polygon: usize, edge: usize },
    FlatVertex { class: usize, incoming: f64 },
    Cone { event: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicPath {
    /// Parametrized window `[a, b]`.
    pub window: (f64, f64),
    /// Time range covered by `segments`; one full period for closed paths.
    pub data: (f64, f64),
    pub segments: Vec<Segment>,
    pub transitions: Vec<Transition>,
    pub events: Vec<ConeEvent>,
    pub period: Option<f64>,
}

/// Start of a trace: a point of a polygon and a direction in its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStart {
    pub polygon: usize,
    pub point: Vec2,
    pub dir: Vec2,
}

/// Signed turning angle from side angles.
pub fn signed_turn(left: f64, right: f64) -> f64 {
    if left <= right + TOL_ANGLE {
        left
    } else {
        -right
    }
}

/// Side angles for an incoming position `u` and outgoing position `w` on a
/// circle of length `total`: `left` is the counterclockwise arc from `w` to `u`.
pub fn side_angles(u: f64, w: f64, total: f64) -> (f64, f64) {
    let mut left = wrap(u - w, total);
    if total - left <= TOL_ANGLE {
        left = 0.0;
    }
    (left, total - left)
}

struct Cursor<'a> {
    s: &'a Surface,
    policy: &'a ConePolicy,
    next_angle: usize,
    segments: Vec<Segment>,
    transitions: Vec<Transition>,
    events: Vec<ConeEvent>,
    halt: bool,
    arrival: Option<Arrival>,
}

/// Where a halting trace reached a cone point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arrival {
    pub t: f64,
    pub class: usize,
    /// Circle position pointing back along the arriving segment.
    pub incoming: f64,
}

impl<'a> Cursor<'a> {
    fn turn(&mut self, class: usize, t: f64) -> Result<f64, TraceError> {
        let total = self.s.classes[class].total_angle;
        let half = total / 2.0;
        let theta = match self.policy {
            ConePolicy::Stop => return Err(TraceError::ConeHit(t)),
            ConePolicy::TurnPlusPi => PI,
            ConePolicy::TurnMinusPi => -PI,
            ConePolicy::Bisect => half,
            ConePolicy::Explicit(v) => {
                let th = *v.get(self.next_angle).ok_or(TraceError::AnglesExhausted(t))?;
                self.next_angle += 1;
                th
            }
            ConePolicy::Cyclic(v) => {
                if v.is_empty() {
                    return Err(TraceError::AnglesExhausted(t));
                }
                let th = v[self.next_angle % v.len()];
                self.next_angle += 1;
                th
            }
        };
        if theta.abs() < PI - TOL_ANGLE || theta.abs() > half + TOL_ANGLE {
            return Err(TraceError::InvalidTurn(theta, half));
        }
        Ok(theta)
    }

    /// Apply a cone event at vertex `vertex` of `polygon`, arriving with
    /// direction `d`. Returns the corner to leave through and the direction.
    fn cone_event(
        &mut self,
        polygon: usize,
        vertex: usize,
        d: Vec2,
        t: f64,
    ) -> Result<(usize, Vec2), TraceError> {
        let class = self.s.class_of(polygon, vertex);
        let u = self.s.direction_position(polygon, vertex, -d);
        let total = self.s.classes[class].total_angle;
        let theta = self.turn(class, t)?;
        let w = if theta > 0.0 {
            wrap(u - theta, total)
        } else {
            wrap(u + theta.abs(), total)
        };
        let (left, right) = side_angles(u, w, total);
        self.events.push(ConeEvent {
            t,
            class,
            left,
            right,
            theta: signed_turn(left, right),
            incoming: u,
            outgoing: w,
        });
        self.transitions.push(Transition::Cone {
            event: self.events.len() - 1,
        });
        let (k, off) = self.s.corner_at(class, w);
        Ok((k, self.s.corner_direction(k, off)))
    }

    fn flat_vertex(&mut self, polygon: usize, vertex: usize, d: Vec2) -> (usize, Vec2) {
        let class = self.s.class_of(polygon, vertex);
        let u = self.s.direction_position(polygon, vertex, -d);
        let w = wrap(u + PI, self.s.classes[class].total_angle);
        self.transitions.push(Transition::FlatVertex { class, incoming: u });
        let (k, off) = self.s.corner_at(class, w);
        (k, self.s.corner_direction(k, off))
    }
}

/// Result of shooting a ray inside one polygon.
enum Hit {
    Edge(usize, f64),
    Vertex(usize, f64),
}

/// First boundary feature hit by the ray `x + τ d`, `τ > 0`, in polygon `pi`.
/// `skip_edge` is the edge the ray entered through.
fn shoot(s: &Surface, pi: usize, x: Vec2, d: Vec2, skip_edge: Option<usize>) -> Hit {
    let p = &s.polygons[pi];
    let n = p.len();
    let mut best_edge = (usize::MAX, f64::INFINITY);
    for i in 0..n {
        if Some(i) == skip_edge {
            continue;
        }
        let (a, b) = p.edge(i);
        let e = b - a;
        let den = d.cross(e);
        if den.abs() < 1e-15 {
            continue;
        }
        let w = a - x;
        let tau = w.cross(e) / den;
        let u = w.cross(d) / den;
        if tau > 1e-11 && (-1e-12..=1.0 + 1e-12).contains(&u) && tau < best_edge.1 {
            best_edge = (i, tau);
        }
    }
    let mut best_vertex = (usize::MAX, f64::INFINITY);
    for (i, v) in p.vertices.iter().enumerate() {
        let w = *v - x;
        let tau = w.dot(d);
        if tau <= 1e-11 {
            continue;
        }
        let perp = d.cross(w).abs();
        if perp <= TOL_GEOM && tau <= best_edge.1 + TOL_GEOM && tau < best_vertex.1 {
            best_vertex = (i, tau);
        }
    }
    if best_vertex.0 != usize::MAX {
        Hit::Vertex(best_vertex.0, best_vertex.1)
    } else {
        Hit::Edge(best_edge.0, best_edge.1)
    }
}

/// Where the tracer currently is.
struct State {
    polygon: usize,
    x: Vec2,
    d: Vec2,
    t: f64,
    entry: Option<usize>,
}

fn run(cur: &mut Cursor, mut st: State, end: f64) -> Result<(), TraceError> {
    let s = cur.s;
    let mut guard = 0usize;
    loop {
        guard += 1;
        if guard > 50_000_000 {
            panic!("trace did not terminate");
        }
        let remaining = end - st.t;
        let hit = shoot(s, st.polygon, st.x, st.d, st.entry);
        let (tau, vertex) = match hit {
            Hit::Edge(_, tau) => (tau, None),
            Hit::Vertex(v, tau) => (tau, Some(v)),
        };
        if vertex.is_none() && tau == f64::INFINITY {
            // numerically stuck on the boundary; nudge along
            panic!(
                "ray escaped polygon {} from {:?} dir {:?}",
                st.polygon, st.x, st.d
            );
        }
        let vertex_at_end = vertex.is_some() && (tau - remaining).abs() <= TOL_GEOM;
        if remaining < tau && !vertex_at_end {
            let y = st.x + st.d * remaining;
            cur.segments.push(Segment {
                polygon: st.polygon,
                start: st.x,
                end: y,
                t0: st.t,
                t1: end,
            });
            return Ok(());
        }
        match (hit, vertex) {
            (_, Some(v)) => {
                let vp = s.polygons[st.polygon].vertices[v];
                let t_hit = if vertex_at_end { end } else { st.t + tau };
                cur.segments.push(Segment {
                    polygon: st.polygon,
                    start: st.x,
                    end: vp,
                    t0: st.t,
                    t1: t_hit,
                });
                let class = s.class_of(st.polygon, v);
                if cur.halt && s.classes[class].is_cone {
                    cur.arrival = Some(Arrival {
                        t: t_hit,
                        class,
                        incoming: s.direction_position(st.polygon, v, -st.d),
                    });
                    return Ok(());
                }
                let (k, d) = if s.classes[class].is_cone {
                    cur.cone_event(st.polygon, v, st.d, t_hit)?
                } else {
                    cur.flat_vertex(st.polygon, v, st.d)
                };
                if t_hit >= end {
                    // the event at the window end is recorded; drop the dangling transition
                    cur.transitions.pop();
                    return Ok(());
                }
                let c = &s.corners[k];
                st = State {
                    polygon: c.polygon,
                    x: s.polygons[c.polygon].vertices[c.vertex],
                    d,
                    t: t_hit,
                    entry: None,
                };
            }
            (Hit::Edge(e, _), None) => {
                let y = st.x + st.d * tau;
                cur.segments.push(Segment {
                    polygon: st.polygon,
                    start: st.x,
                    end: y,
                    t0: st.t,
                    t1: st.t + tau,
                });
                cur.transitions.push(Transition::Edge {
                    polygon: st.polygon,
                    edge: e,
                });
                let (q, f, g) = s.cross(st.polygon, e);
                let gi = g.inverse();
                st = State {
                    polygon: q,
                    x: gi.apply(y),
                    d: gi.rotate(st.d).normalized(),
                    t: st.t + tau,
                    entry: Some(f),
                };
            }
            _ => unreachable!(),
        }
    }
}

fn finish(cur: Cursor, a: f64, b: f64) -> GeodesicPath {
    GeodesicPath {
        window: (a, b),
        data: (a, b),
        segments: cur.segments,
        transitions: cur.transitions,
        events: cur.events,
        period: None,
    }
}

/// Trace a unit-speed geodesic of length `len` from `start`.
///
/// A start exactly at a cone point is read as arriving there along
/// `start.dir`; the first explicit angle is then applied at `t = 0`.
pub fn trace(
    s: &Surface,
    start: TraceStart,
    len: f64,
    policy: &ConePolicy,
) -> Result<GeodesicPath, TraceError> {
    if len <= 0.0 {
        return Err(TraceError::NonPositiveLength);
    }
    let poly = &s.polygons[start.polygon];
    if !poly.contains(start.point, TOL_GEOM) {
        return Err(TraceError::OutsidePolygon(start.polygon));
    }
    let d = start.dir.normalized();
    let mut cur = Cursor {
        s,
        policy,
        next_angle: 0,
        segments: Vec::new(),
        transitions: Vec::new(),
        events: Vec::new(),
        halt: false,
        arrival: None,
    };
    let at_vertex = poly
        .vertices
        .iter()
        .position(|v| v.dist(start.point) <= TOL_GEOM);
    let st = if let Some(v) = at_vertex {
        let class = s.class_of(start.polygon, v);
        if s.classes[class].is_cone {
            if !matches!(policy, ConePolicy::Explicit(_) | ConePolicy::Cyclic(_)) {
                return Err(TraceError::DegenerateStart);
            }
            let (k, d) = cur.cone_event(start.polygon, v, d, 0.0)?;
            // the transition is recorded before any segment exists
            cur.transitions.clear();
            let c = &s.corners[k];
            State {
                polygon: c.polygon,
                x: s.polygons[c.polygon].vertices[c.vertex],
                d,
                t: 0.0,
                entry: None,
            }
        } else {
            let (k, d) = cur.flat_vertex(start.polygon, v, d);
            cur.transitions.clear();
            let c = &s.corners[k];
            State {
                polygon: c.polygon,
                x: s.polygons[c.polygon].vertices[c.vertex],
                d,
                t: 0.0,
                entry: None,
            }
        }
    } else {
        let entry = (0..poly.len()).find(|&e| {
            let (a, b) = poly.edge(e);
            crate::geom::point_segment_distance(start.point, a, b) <= TOL_GEOM
        });
        // on an edge and pointing outwards: start in the neighbour instead
        if let Some(e) = entry {
            let (a, b) = poly.edge(e);
            if (b - a).cross(d) < 0.0 {
                let (q, _, g) = s.cross(start.polygon, e);
                let gi = g.inverse();
                let start = TraceStart {
                    polygon: q,
                    point: gi.apply(start.point),
                    dir: gi.rotate(d),
                };
                return trace(s, start, len, policy);
            }
        }
        State {
            polygon: start.polygon,
            x: start.point,
            d,
            t: 0.0,
            entry,
        }
    };
    run(&mut cur, st, len)?;
    Ok(finish(cur, 0.0, len))
}

/// Trace leaving cone class `class` at circle position `pos`. No event is
/// recorded at `t = 0`.
pub fn trace_from_cone(
    s: &Surface,
    class: usize,
    pos: f64,
    len: f64,
    policy: &ConePolicy,
) -> Result<GeodesicPath, TraceError> {
    if len <= 0.0 {
        return Err(TraceError::NonPositiveLength);
    }
    let (k, off) = s.corner_at(class, pos);
    let d = s.corner_direction(k, off);
    let c = &s.corners[k];
    let mut cur = Cursor {
        s,
        policy,
        next_angle: 0,
        segments: Vec::new(),
        transitions: Vec::new(),
        events: Vec::new(),
        halt: false,
        arrival: None,
    };
    let st = State {
        polygon: c.polygon,
        x: s.polygons[c.polygon].vertices[c.vertex],
        d,
        t: 0.0,
        entry: None,
    };
    run(&mut cur, st, len)?;
    Ok(finish(cur, 0.0, len))
}

/// Trace from cone class `class` at position `pos` until the first cone
/// point or length `len`, whichever comes first. Flat vertices are crossed.
pub fn trace_until_cone(
    s: &Surface,
    class: usize,
    pos: f64,
    len: f64,
) -> Result<(GeodesicPath, Option<Arrival>), TraceError> {
    let (k, off) = s.corner_at(class, pos);
    let c = &s.corners[k];
    let start = TraceStart {
        polygon: c.polygon,
        point: s.polygons[c.polygon].vertices[c.vertex],
        dir: s.corner_direction(k, off),
    };
    halting_run(s, start, Some(c.vertex), len)
}

/// Halting trace from a flat vertex or interior point.
pub fn trace_until_cone_from(
    s: &Surface,
    start: TraceStart,
    len: f64,
) -> Result<(GeodesicPath, Option<Arrival>), TraceError> {
    let poly = &s.polygons[start.polygon];
    let flat = poly
        .vertices
        .iter()
        .position(|v| v.dist(start.point) <= TOL_GEOM);
    halting_run(s, start, flat, len)
}

fn halting_run(
    s: &Surface,
    start: TraceStart,
    flat: Option<usize>,
    len: f64,
) -> Result<(GeodesicPath, Option<Arrival>), TraceError> {
    if len <= 0.0 {
        return Err(TraceError::NonPositiveLength);
    }
    let mut cur = Cursor {
        s,
        policy: &ConePolicy::Stop,
        next_angle: 0,
        segments: Vec::new(),
        transitions: Vec::new(),
        events: Vec::new(),
        halt: true,
        arrival: None,
    };
    let d = start.dir.normalized();
    let st = match flat {
        Some(v) if !s.classes[s.class_of(start.polygon, v)].is_cone => {
            let (k, d) = cur.flat_vertex(start.polygon, v, d);
            cur.transitions.clear();
            let c = &s.corners[k];
            State {
                polygon: c.polygon,
                x: s.polygons[c.polygon].vertices[c.vertex],
                d,
                t: 0.0,
                entry: None,
            }
        }
        Some(_) => {
            State {
                polygon: start.polygon,
                x: start.point,
                d,
                t: 0.0,
                entry: None,
            }
        }
        None => {
            let poly = &s.polygons[start.polygon];
            let entry = (0..poly.len()).find(|&e| {
                let (a, b) = poly.edge(e);
                crate::geom::point_segment_distance(start.point, a, b) <= TOL_GEOM
            });
            State {
                polygon: start.polygon,
                x: start.point,
                d,
                t: 0.0,
                entry,
            }
        }
    };
    run(&mut cur, st, len)?;
    let end = cur.arrival.map_or(len, |a| a.t);
    let arrival = cur.arrival;
    Ok((finish(cur, 0.0, end), arrival))
}

/// Signature `(t, θ)` of all cone events.
pub fn turning_signature(p: &GeodesicPath) -> Vec<(f64, f64)> {
    p.events.iter().map(|e| (e.t, e.theta)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindowClass {
    SingularSoFar,
    Regular(f64),
}

/// Regular iff some event in the window turns by more than `π + tol`.
pub fn classify_window(p: &GeodesicPath, tol: f64) -> WindowClass {
    let (a, b) = p.window;
    p.events_in(a, b)
        .into_iter()
        .find(|e| e.theta.abs() > PI + tol)
        .map_or(WindowClass::SingularSoFar, |e| WindowClass::Regular(e.t))
}

/// Reparametrize by `g_s`: the result at time `u` is `p(u + s)`; the window
/// is kept and must stay inside the traced data unless the path is closed.
pub fn flow_shift(p: &GeodesicPath, s: f64) -> Result<GeodesicPath, TraceError> {
    if p.period.is_none() {
        let (a, b) = p.window;
        let (lo, hi) = p.data;
        if a + s < lo - 1e-12 || b + s > hi + 1e-12 {
            return Err(TraceError::WindowExceeded(a + s, b + s));
        }
    }
    let mut q = p.clone();
    q.data = (p.data.0 - s, p.data.1 - s);
    for seg in &mut q.segments {
        seg.t0 -= s;
        seg.t1 -= s;
    }
    for e in &mut q.events {
        e.t -= s;
    }
    Ok(q)
}

impl GeodesicPath {
    pub fn length(&self) -> f64 {
        self.window.1 - self.window.0
    }

    /// Set the time of the data start to `t0`, keeping the window aligned with it.
    pub fn starting_at(mut self, t0: f64) -> Self {
        let shift = t0 - self.data.0;
        self.data = (self.data.0 + shift, self.data.1 + shift);
        self.window = (self.window.0 + shift, self.window.1 + shift);
        for seg in &mut self.segments {
            seg.t0 += shift;
            seg.t1 += shift;
        }
        for e in &mut self.events {
            e.t += shift;
        }
        self
    }

    pub fn with_window(mut self, a: f64, b: f64) -> Self {
        self.window = (a, b);
        self
    }

    fn base_time(&self, t: f64) -> (f64, f64) {
        match self.period {
            Some(per) => {
                let k = ((t - self.data.0) / per).floor();
                let mut tt = t - k * per;
                if tt >= self.data.1 {
                    tt -= per;
                }
                (tt.max(self.data.0), k * per)
            }
            None => (t, 0.0),
        }
    }

    /// Index of the segment containing time `t` (data time).
    pub fn segment_index(&self, t: f64) -> Option<usize> {
        let (tt, _) = self.base_time(t);
        if tt < self.data.0 - 1e-12 || tt > self.data.1 + 1e-12 {
            return None;
        }
        let i = self.segments.partition_point(|s| s.t1 < tt);
        Some(i.min(self.segments.len() - 1))
    }

    pub fn point_at(&self, t: f64) -> Option<SurfacePoint> {
        let (tt, _) = self.base_time(t);
        let i = self.segment_index(t)?;
        let seg = &self.segments[i];
        Some(SurfacePoint {
            polygon: seg.polygon,
            pos: seg.at(tt.clamp(seg.t0, seg.t1)),
        })
    }

    /// Cone events with `t ∈ [lo, hi]`, unrolled over periods when closed.
    pub fn events_in(&self, lo: f64, hi: f64) -> Vec<ConeEvent> {
        match self.period {
            None => self
                .events
                .iter()
                .filter(|e| e.t >= lo - 1e-12 && e.t <= hi + 1e-12)
                .copied()
                .collect(),
            Some(per) => {
                let mut out = Vec::new();
                if self.events.is_empty() {
                    return out;
                }
                let k0 = ((lo - self.data.1) / per).floor() as i64;
                let k1 = ((hi - self.data.0) / per).ceil() as i64;
                for k in k0..=k1 {
                    for e in &self.events {
                        let t = e.t + k as f64 * per;
                        if t >= lo - 1e-12 && t <= hi + 1e-12 {
                            out.push(ConeEvent { t, ..*e });
                        }
                    }
                }
                out.sort_by(|a, b| a.t.total_cmp(&b.t));
                out.dedup_by(|a, b| (a.t - b.t).abs() < 1e-12);
                out
            }
        }
    }

    /// Non-periodic copy covering `[lo, hi]` (closed paths only need any `lo`).
    pub fn unrolled(&self, lo: f64, hi: f64) -> GeodesicPath {
        let Some(per) = self.period else {
            return self.clone();
        };
        let mut segs = Vec::new();
        let mut trans = Vec::new();
        let mut evs = Vec::new();
        let k0 = ((lo - self.data.0) / per).floor() as i64;
        let k1 = ((hi - self.data.0) / per).ceil() as i64;
        let n = self.segments.len();
        for k in k0..k1.max(k0 + 1) {
            let off = k as f64 * per;
            for (i, sg) in self.segments.iter().enumerate() {
                if !segs.is_empty() {
                    // transition into segment i
                    let tr = if i == 0 {
                        self.transitions[n - 1]
                    } else {
                        self.transitions[i - 1]
                    };
                    trans.push(match tr {
                        Transition::Cone { event } => {
                            let mut e = self.events[event];
                            e.t = sg.t0 + off;
                            evs.push(e);
                            Transition::Cone {
                                event: evs.len() - 1,
                            }
                        }
                        other => other,
                    });
                }
                segs.push(Segment {
                    t0: sg.t0 + off,
                    t1: sg.t1 + off,
                    ..*sg
                });
            }
        }
        let data = (
            self.data.0 + k0 as f64 * per,
            self.data.0 + (k1.max(k0 + 1)) as f64 * per,
        );
        GeodesicPath {
            window: self.window,
            data,
            segments: segs,
            transitions: trans,
            events: evs,
            period: None,
        }
    }

    /// Length spent in each polygon over `[lo, hi]`.
    pub fn polygon_lengths(&self, lo: f64, hi: f64, n_polygons: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_polygons];
        let p = self.unrolled(lo, hi);
        for sg in &p.segments {
            let a = sg.t0.max(lo);
            let b = sg.t1.min(hi);
            if b > a {
                out[sg.polygon] += b - a;
            }
        }
        out
    }

    /// Developed straight runs: one polyline per stretch between cone events.
    /// Edge crossings compose gluing isometries; flat vertices continue straight.
    pub fn developed_runs(&self, s: &Surface) -> Vec<Vec<Vec2>> {
        let mut runs = Vec::new();
        let mut cur: Vec<Vec2> = Vec::new();
        let mut chart = Isometry::IDENTITY;
        for (i, sg) in self.segments.iter().enumerate() {
            if cur.is_empty() {
                cur.push(chart.apply(sg.start));
            }
            cur.push(chart.apply(sg.end));
            if i + 1 == self.segments.len() {
                break;
            }
            match self.transitions[i] {
                Transition::Edge { polygon, edge } => {
                    let (_, _, g) = s.cross(polygon, edge);
                    chart = chart.compose(&g);
                }
                Transition::FlatVertex { .. } => {
                    let next = &self.segments[i + 1];
                    let d_in = chart.rotate(sg.dir());
                    let d_out = next.dir();
                    let rot = Isometry {
                        c: d_out.dot(d_in),
                        s: d_out.cross(d_in),
                        t: Vec2::ZERO,
                    };
                    let x = chart.apply(sg.end);
                    chart = Isometry {
                        t: x - rot.rotate(next.start),
                        ..rot
                    };
                }
                Transition::Cone { .. } => {
                    runs.push(std::mem::take(&mut cur));
                    chart = Isometry::IDENTITY;
                }
            }
        }
        if !cur.is_empty() {
            runs.push(cur);
        }
        runs
    }
}

/// Max perpendicular deviation of a polyline from the chord through its ends.
pub fn straightness_deviation(run: &[Vec2]) -> f64 {
    if run.len() < 3 {
        return 0.0;
    }
    let a = run[0];
    let b = *run.last().unwrap();
    let d = (b - a).normalized();
    run.iter()
        .map(|p| d.cross(*p - a).abs())
        .fold(0.0, f64::max)
}

/// Parse a `--at-cone` policy string: `stop`, `+pi`, `-pi`, `bisect`, or
/// `angles:<csv>`.
pub fn parse_policy(text: &str) -> Option<ConePolicy> {
    match text {
        "stop" => Some(ConePolicy::Stop),
        "+pi" => Some(ConePolicy::TurnPlusPi),
        "-pi" => Some(ConePolicy::TurnMinusPi),
        "bisect" => Some(ConePolicy::Bisect),
        _ => {
            let rest = text.strip_prefix("angles:")?;
            let v: Result<Vec<f64>, _> = rest.split(',').map(|x| x.trim().parse()).collect();
            v.ok().map(ConePolicy::Explicit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{build_surface, SurfaceDescriptor};

    fn octagon() -> Surface {
        build_surface(
            &SurfaceDescriptor::from_json(include_str!("../surfaces/octagon.surf")).unwrap(),
        )
        .unwrap()
    }

    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn horizontal_core_has_no_events() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5 + R),
            dir: Vec2::new(1.0, 0.0),
        };
        let p = trace(&s, start, 10.0, &ConePolicy::Stop).unwrap();
        assert!(p.events.is_empty());
        let total: f64 = p.segments.iter().map(|x| x.len()).sum();
        assert!((total - 10.0).abs() < 1e-9);
        for run in p.developed_runs(&s) {
            assert!(straightness_deviation(&run) < 1e-9);
        }
        assert!(turning_signature(&p).is_empty());
        assert_eq!(classify_window(&p, 1e-9), WindowClass::SingularSoFar);
    }

    #[test]
    fn aimed_at_cone_stops() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5),
            dir: Vec2::new(-0.5, -0.5),
        };
        let err = trace(&s, start, 3.0, &ConePolicy::Stop).unwrap_err();
        match err {
            TraceError::ConeHit(t) => assert!((t - 0.5f64.hypot(0.5)).abs() < 1e-12),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn explicit_turn_records_sides() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5),
            dir: Vec2::new(-0.5, -0.5),
        };
        let p = trace(&s, start, 3.0, &ConePolicy::Explicit(vec![PI + 1.0])).unwrap();
        assert_eq!(p.events.len(), 1);
        let e = p.events[0];
        assert!((e.theta - (PI + 1.0)).abs() < 1e-12);
        assert!((e.left - (PI + 1.0)).abs() < 1e-12);
        assert!((e.right - (6.0 * PI - (PI + 1.0))).abs() < 1e-12);
    }

    #[test]
    fn bisect_and_explicit_signature() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5),
            dir: Vec2::new(-0.5, -0.5),
        };
        let p = trace(&s, start, 1.0, &ConePolicy::Bisect).unwrap();
        let sig = turning_signature(&p);
        assert_eq!(sig.len(), 1);
        assert!((sig[0].1 - 3.0 * PI).abs() < 1e-12);

        let angles = vec![PI + 0.5, -(PI + 0.2)];
        let p = trace(&s, start, 40.0, &ConePolicy::Explicit(angles.clone()));
        match p {
            Ok(p) => {
                let sig = turning_signature(&p);
                for (i, (_, th)) in sig.iter().enumerate() {
                    assert!((th - angles[i]).abs() < 1e-12);
                }
            }
            Err(TraceError::AnglesExhausted(_)) => {}
            Err(e) => panic!("{e:?}"),
        }
    }

    #[test]
    fn invalid_turn_is_rejected() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5),
            dir: Vec2::new(-0.5, -0.5),
        };
        for th in [PI - 0.1, 3.0 * PI + 0.1] {
            assert!(matches!(
                trace(&s, start, 2.0, &ConePolicy::Explicit(vec![th])),
                Err(TraceError::InvalidTurn(..))
            ));
        }
    }

    #[test]
    fn start_at_cone_needs_explicit() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.0, 0.0),
            dir: Vec2::new(-1.0, -1.0),
        };
        assert_eq!(
            trace(&s, start, 2.0, &ConePolicy::Stop),
            Err(TraceError::DegenerateStart)
        );
        let p = trace(&s, start, 0.5, &ConePolicy::Explicit(vec![PI])).unwrap();
        assert_eq!(p.events.len(), 1);
        assert_eq!(p.events[0].t, 0.0);
    }

    #[test]
    fn classify_window_threshold() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.5, 0.5),
            dir: Vec2::new(-0.5, -0.5),
        };
        let p = trace(&s, start, 2.0, &ConePolicy::Explicit(vec![PI + 0.3])).unwrap();
        let t = p.events[0].t;
        assert_eq!(classify_window(&p, 1e-9), WindowClass::Regular(t));
        let p = trace(&s, start, 2.0, &ConePolicy::TurnMinusPi).unwrap();
        assert_eq!(classify_window(&p, 1e-9), WindowClass::SingularSoFar);
    }

    #[test]
    fn flow_shift_round_trip() {
        let s = octagon();
        let start = TraceStart {
            polygon: 0,
            point: Vec2::new(0.3, 0.4),
            dir: Vec2::new(1.0, 0.37),
        };
        let p = trace(&s, start, 10.0, &ConePolicy::Bisect)
            .unwrap()
            .with_window(2.0, 8.0);
        assert_eq!(flow_shift(&p, 0.0).unwrap(), p);
        let q = flow_shift(&flow_shift(&p, 0.7).unwrap(), -0.7).unwrap();
        for (a, b) in p.segments.iter().zip(&q.segments) {
            assert!((a.t0 - b.t0).abs() < 1e-12 && (a.t1 - b.t1).abs() < 1e-12);
        }
        assert!(matches!(
            flow_shift(&p, 3.0),
            Err(TraceError::WindowExceeded(..))
        ));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(parse_policy("stop"), Some(ConePolicy::Stop));
        assert_eq!(
            parse_policy("angles:3.5,-3.5"),
            Some(ConePolicy::Explicit(vec![3.5, -3.5]))
        );
        assert_eq!(parse_policy("sideways"), None);
    }
}
