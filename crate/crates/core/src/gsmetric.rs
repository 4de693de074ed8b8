//! Upper bounds for the distance between two parametrized geodesics,
//! `∫ d(γ̃1(t), γ̃2(t)) e^{−2|t|} dt`, for one explicit pair of lifts.
//!
//! The lifts are chosen at a time where both paths are far from cone events:
//! the second point is placed at its nearest straight-line image from the
//! first. From there the pair is carried forward and backward in time. Away
//! from cone points the pair lives in a common developed plane. When either
//! path passes a cone point the pair switches to polar coordinates about it,
//! where the distance is `r1 + r2` once the angle between the points reaches
//! `π`, and the law of cosines below that.

use crate::geom::{wrap, Isometry, Vec2, TOL_GEOM};
use crate::surface::{Surface, SurfacePoint};
use crate::tracer::{side_angles, signed_turn, ConeEvent, GeodesicPath, Segment, Transition};
use crate::visibility::{point_source, unfold};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GsError {
    #[error("paths leave a common corridor at t = {0}")]
    NotComparable(f64),
    #[error("path data does not cover [{0}, {1}]")]
    Window(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GsDistance {
    /// Quadrature over `[−T, T]`.
    pub bound: f64,
    /// `diam · e^{−2T}`, covering `|t| > T`.
    pub tail: f64,
    /// Time at which the lifts were matched.
    pub anchor: f64,
}

impl GsDistance {
    pub fn total(&self) -> f64 {
        self.bound + self.tail
    }
}

const QUAD_TOL: f64 = 1e-8;
const CHECK_TOL: f64 = 1e-7;

fn covers(p: &GeodesicPath, lo: f64, hi: f64) -> bool {
    p.period.is_some() || (p.data.0 <= lo + 1e-12 && p.data.1 >= hi - 1e-12)
}

fn reversed(s: &Surface, p: &GeodesicPath) -> GeodesicPath {
    let n = p.segments.len();
    let segments = p
        .segments
        .iter()
        .rev()
        .map(|g| Segment {
            polygon: g.polygon,
            start: g.end,
            end: g.start,
            t0: -g.t1,
            t1: -g.t0,
        })
        .collect();
    let mut events = Vec::new();
    let transitions = (0..n.saturating_sub(1))
        .map(|i| match p.transitions[n - 2 - i] {
            Transition::Edge { polygon, edge } => {
                let (q, f) = s.polygons[polygon].partner[edge];
                Transition::Edge { polygon: q, edge: f }
            }
            Transition::FlatVertex { class, .. } => Transition::FlatVertex { class, incoming: 0.0 },
            Transition::Cone { event } => {
                let e = p.events[event];
                let total = s.classes[e.class].total_angle;
                let (left, right) = side_angles(e.outgoing, e.incoming, total);
                events.push(ConeEvent {
                    t: -e.t,
                    class: e.class,
                    left,
                    right,
                    theta: signed_turn(left, right),
                    incoming: e.outgoing,
                    outgoing: e.incoming,
                });
                Transition::Cone { event: events.len() - 1 }
            }
        })
        .collect();
    GeodesicPath {
        window: (-p.window.1, -p.window.0),
        data: (-p.data.1, -p.data.0),
        segments,
        transitions,
        events,
        period: None,
    }
}

/// A path being walked forward in time, developed into its own plane.
struct Walker<'a> {
    p: &'a GeodesicPath,
    k: usize,
    chart: Isometry,
}

impl<'a> Walker<'a> {
    fn new(p: &'a GeodesicPath, t: f64) -> Self {
        let k = p.segments.partition_point(|g| g.t1 <= t + 1e-12).min(p.segments.len() - 1);
        Walker {
            p,
            k,
            chart: Isometry::IDENTITY,
        }
    }

    fn seg(&self) -> &Segment {
        &self.p.segments[self.k]
    }

    fn at(&self, t: f64) -> Vec2 {
        self.chart.apply(self.seg().at(t))
    }

    fn dir(&self) -> Vec2 {
        self.chart.rotate(self.seg().dir())
    }

    fn point(&self, t: f64) -> SurfacePoint {
        SurfacePoint {
            polygon: self.seg().polygon,
            pos: self.seg().at(t),
        }
    }

    /// Step to the next segment; returns the cone event crossed, if any.
    fn advance(&mut self, s: &Surface) -> Option<ConeEvent> {
        let cur = *self.seg();
        let tr = self.p.transitions[self.k];
        self.k += 1;
        let next = *self.seg();
        match tr {
            Transition::Edge { polygon, edge } => {
                let (_, _, g) = s.cross(polygon, edge);
                self.chart = self.chart.compose(&g);
                None
            }
            Transition::FlatVertex { .. } => {
                let d_in = self.chart.rotate(cur.dir());
                let d_out = next.dir();
                let rot = Isometry {
                    c: d_out.dot(d_in),
                    s: d_out.cross(d_in),
                    t: Vec2::ZERO,
                };
                let x = self.chart.apply(cur.end);
                self.chart = Isometry {
                    t: x - rot.rotate(next.start),
                    ..rot
                };
                None
            }
            Transition::Cone { event } => {
                self.chart = Isometry::IDENTITY;
                Some(self.p.events[event])
            }
        }
    }
}

/// Polar frame of one path about a cone point: the point's circle position
/// is `a + ∠(e, x − v)`.
#[derive(Debug, Clone, Copy)]
struct Anchor {
    v: Vec2,
    e: Vec2,
    a: f64,
}

impl Anchor {
    fn polar(&self, x: Vec2) -> (f64, f64) {
        let d = x - self.v;
        let r = d.norm();
        if r <= 1e-12 {
            return (0.0, self.a);
        }
        (r, self.a + self.e.cross(d).atan2(self.e.dot(d)))
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    /// Maps the second path's plane into the first's.
    Planar(Isometry),
    Polar { class: usize, total: f64, a: [Anchor; 2] },
}

fn signed_angle(from: Vec2, to: Vec2) -> f64 {
    from.cross(to).atan2(from.dot(to))
}

fn cone_distance(r1: f64, f1: f64, r2: f64, f2: f64, total: f64) -> f64 {
    if r1 <= 1e-12 || r2 <= 1e-12 {
        return r1 + r2;
    }
    let d = wrap(f1 - f2, total);
    let alpha = d.min(total - d);
    if alpha >= PI {
        r1 + r2
    } else {
        (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * alpha.cos()).max(0.0).sqrt()
    }
}

fn distance(mode: &Mode, x: [Vec2; 2]) -> f64 {
    match mode {
        Mode::Planar(r) => x[0].dist(r.apply(x[1])),
        Mode::Polar { total, a, .. } => {
            let (r1, f1) = a[0].polar(x[0]);
            let (r2, f2) = a[1].polar(x[1]);
            cone_distance(r1, f1, r2, f2, *total)
        }
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Developed displacement from `x` to the nearest straight-line image of `y`
/// within `radius`, with the chart placing `y`'s polygon.
fn nearest_image(s: &Surface, x: SurfacePoint, y: SurfacePoint, radius: f64) -> Option<(f64, Isometry)> {
    let (wedges, _, regions) = point_source(s, x.polygon, x.pos)?;
    let reps = s.representations(y);
    let mut best: Option<(f64, Isometry)> = None;
    let mut consider = |r: &crate::visibility::Region| {
        let t = &s.triangles[r.tri];
        for q in &reps {
            if q.polygon != t.polygon || !crate::geom::in_triangle(q.pos, t.pts[0], t.pts[1], t.pts[2], TOL_GEOM) {
                continue;
            }
            let img = r.chart.apply(q.pos);
            if !r.sees(x.pos, img) {
                continue;
            }
            let d = img.dist(x.pos);
            if d <= radius && best.map_or(true, |b| d < b.0) {
                // chart for the representation's polygon, composed with the
                // map from that representation back to `y`'s frame
                let back = if q.polygon == y.polygon && q.pos.dist(y.pos) <= TOL_GEOM {
                    Isometry::IDENTITY
                } else {
                    match chart_between(s, y, *q) {
                        Some(g) => g,
                        None => continue,
                    }
                };
                best = Some((d, r.chart.compose(&back)));
            }
        }
    };
    for r in &regions {
        consider(r);
    }
    let mut reached = Vec::new();
    unfold(s, x.pos, wedges, radius, 100_000, |_| {}, |r| reached.push(*r)).ok()?;
    for r in &reached {
        consider(r);
    }
    best
}

/// Isometry from `y`'s polygon frame to the frame of its representation `q`
/// across an edge.
fn chart_between(s: &Surface, y: SurfacePoint, q: SurfacePoint) -> Option<Isometry> {
    let poly = &s.polygons[y.polygon];
    for e in 0..poly.len() {
        let (a, b) = poly.edge(e);
        if crate::geom::point_segment_distance(y.pos, a, b) > TOL_GEOM {
            continue;
        }
        let (p2, _, g) = s.cross(y.polygon, e);
        if p2 == q.polygon && g.apply(q.pos).dist(y.pos) <= TOL_GEOM {
            // g maps q's frame into y's; we need y's frame into q's
            return Some(g.inverse());
        }
    }
    None
}

/// Whether the straight segment from `w[0]`'s point to the developed image
/// `mode` assigns to `w[1]`'s point exists on the surface.
fn planar_ok(s: &Surface, w: &[Walker; 2], r: &Isometry, t: f64) -> bool {
    let x = w[0].point(t);
    let want = w[0].chart.inverse().apply(r.apply(w[1].at(t)));
    let d = want.dist(x.pos);
    if d <= CHECK_TOL {
        return true;
    }
    let Some((wedges, _, regions)) = point_source(s, x.polygon, x.pos) else {
        return false;
    };
    let y = w[1].point(t);
    let reps = s.representations(y);
    let hit = |r: &crate::visibility::Region| {
        let tri = &s.triangles[r.tri];
        reps.iter().any(|q| {
            q.polygon == tri.polygon
                && crate::geom::in_triangle(q.pos, tri.pts[0], tri.pts[1], tri.pts[2], TOL_GEOM)
                && r.chart.apply(q.pos).dist(want) <= CHECK_TOL
                && r.sees(x.pos, want)
        })
    };
    if regions.iter().any(|r| hit(r)) {
        return true;
    }
    let mut found = false;
    let res = unfold(s, x.pos, wedges, d + CHECK_TOL, 100_000, |_| {}, |r| {
        if !found && hit(r) {
            found = true;
        }
    });
    res.is_ok() && found
}

/// Integral of the lift distance times `e^{−2|t|}` over `[from, to]`.
fn integrate(s: &Surface, p: [&GeodesicPath; 2], r0: Isometry, from: f64, to: f64) -> Result<f64, GsError> {
    let mut w = [Walker::new(p[0], from), Walker::new(p[1], from)];
    let mut mode = Mode::Planar(r0);
    let mut t = from;
    let mut total = 0.0;
    let span = to - from;
    while t < to - 1e-15 {
        let mut nb = to.min(w[0].seg().t1).min(w[1].seg().t1);
        if t < 0.0 && nb > 0.0 {
            nb = 0.0;
        }
        if nb > t {
            let mid = 0.5 * (t + nb);
            if let Mode::Planar(r) = &mode {
                if !planar_ok(s, &w, r, mid) {
                    return Err(GsError::NotComparable(mid));
                }
            }
            let (m, wr) = (&mode, &w);
            let f = move |u: f64| distance(m, [wr[0].at(u), wr[1].at(u)]) * (-2.0 * u.abs()).exp();
            total += simpson(&f, t, nb, QUAD_TOL * (nb - t) / span);
        }
        t = nb;
        if t >= to - 1e-15 {
            break;
        }
        for j in 0..2 {
            if w[j].seg().t1 > t + 1e-12 || w[j].k + 1 >= w[j].p.segments.len() {
                continue;
            }
            let before = w[j].at(t);
            let dir_in = w[j].dir();
            let Some(ev) = w[j].advance(s) else {
                continue;
            };
            mode = cone_step(s, &mode, &w, j, before, dir_in, &ev, t)?;
        }
    }
    Ok(total)
}

/// Update the mode when path `j` passes cone event `ev` at time `t`.
/// `w[j]` has already advanced; `before` and `dir_in` are its position and
/// direction in the plane it left.
fn cone_step(
    s: &Surface,
    mode: &Mode,
    w: &[Walker; 2],
    j: usize,
    before: Vec2,
    dir_in: Vec2,
    ev: &ConeEvent,
    t: f64,
) -> Result<Mode, GsError> {
    let o = 1 - j;
    let new_anchor = Anchor {
        v: w[j].at(t),
        e: w[j].dir(),
        a: ev.outgoing,
    };
    let total = s.classes[ev.class].total_angle;
    let r = match *mode {
        Mode::Polar { class, a, .. } => {
            let (rj, _) = a[j].polar(before);
            if class == ev.class && rj <= CHECK_TOL {
                let mut a = a;
                a[j] = new_anchor;
                return Ok(Mode::Polar { class, total, a });
            }
            // leave the polar frame through a planar one
            let x = [
                if j == 0 { before } else { w[0].at(t) },
                if j == 1 { before } else { w[1].at(t) },
            ];
            let tot = s.classes[class].total_angle;
            let (_, f0) = a[0].polar(x[0]);
            let (_, f1) = a[1].polar(x[1]);
            let mut sd = wrap(f1 - f0, tot);
            if sd > 0.5 * tot {
                sd -= tot;
            }
            if sd.abs() >= PI - 1e-9 {
                return Err(GsError::NotComparable(t));
            }
            let ang0 = a[0].e.y.atan2(a[0].e.x) + f0 + sd - a[0].a;
            let ang1 = a[1].e.y.atan2(a[1].e.x) + f1 - a[1].a;
            let rot = Isometry::new(ang0 - ang1, Vec2::ZERO);
            Isometry {
                t: a[0].v - rot.rotate(a[1].v),
                ..rot
            }
        }
        Mode::Planar(r) => r,
    };
    // cone point and the incoming direction in the other path's plane
    let (v, b) = if j == 0 {
        let inv = r.inverse();
        (inv.apply(before), inv.rotate(-dir_in))
    } else {
        (r.apply(before), r.rotate(-dir_in))
    };
    let x = w[o].at(t);
    let d = x - v;
    let other = if d.norm() <= 1e-12 {
        Anchor { v, e: b, a: ev.incoming }
    } else {
        Anchor {
            v,
            e: d.normalized(),
            a: ev.incoming + signed_angle(b, d),
        }
    };
    let mut a = [new_anchor, new_anchor];
    a[o] = other;
    Ok(Mode::Polar {
        class: ev.class,
        total,
        a,
    })
}

/// Upper bound for the distance between `p1` and `p2` in the space of
/// geodesics, integrating over `[−T, T]` plus an analytic tail.
pub fn gs_distance_upper(s: &Surface, p1: &GeodesicPath, p2: &GeodesicPath, big_t: f64) -> Result<GsDistance, GsError> {
    for p in [p1, p2] {
        if !covers(p, -big_t, big_t) {
            return Err(GsError::Window(-big_t, big_t));
        }
    }
    let u = [p1.unrolled(-big_t, big_t), p2.unrolled(-big_t, big_t)];
    let mut times: Vec<f64> = u
        .iter()
        .flat_map(|p| p.events_in(-big_t, big_t).into_iter().map(|e| e.t))
        .collect();
    times.push(-big_t);
    times.push(big_t);
    times.sort_by(f64::total_cmp);
    let (lo, hi) = times
        .windows(2)
        .map(|w| (w[0], w[1]))
        .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .unwrap();
    let anchor = 0.5 * (lo + hi);
    let radius = crate::surface::cone_constants(s).ell0;
    let x = u[0].point_at(anchor).ok_or(GsError::Window(-big_t, big_t))?;
    let y = u[1].point_at(anchor).ok_or(GsError::Window(-big_t, big_t))?;
    let (_, r0) = nearest_image(s, x, y, radius).ok_or(GsError::NotComparable(anchor))?;
    let forward = integrate(s, [&u[0], &u[1]], r0, anchor, big_t)?;
    let rev = [reversed(s, &u[0]), reversed(s, &u[1])];
    let backward = integrate(s, [&rev[0], &rev[1]], r0, -anchor, big_t)?;
    Ok(GsDistance {
        bound: forward + backward,
        tail: s.diameter_bound() * (-2.0 * big_t).exp(),
        anchor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracer::{flow_shift, trace, ConePolicy, TraceStart};

    fn surface(name: &str) -> Surface {
        crate::load_surface(format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn centre(s: &Surface) -> Vec2 {
        let v = &s.polygons[0].vertices;
        v.iter().fold(Vec2::ZERO, |a, &b| a + b) * (1.0 / v.len() as f64)
    }

    fn line(s: &Surface, from: Vec2, angle: f64, policy: ConePolicy) -> GeodesicPath {
        let start = TraceStart {
            polygon: 0,
            point: from,
            dir: Vec2::from_angle(angle),
        };
        trace(s, start, 30.0, &policy).unwrap().starting_at(-15.0)
    }

    #[test]
    fn identical_paths_give_zero() {
        let s = surface("octagon");
        let p = line(&s, centre(&s), 0.3, ConePolicy::Bisect);
        let d = gs_distance_upper(&s, &p, &p, 10.0).unwrap();
        assert!(d.bound.abs() < 1e-12);
        assert!(d.tail > 0.0);
    }

    #[test]
    fn flow_shift_through_cone_points_is_unit_speed() {
        use crate::closed::{enumerate_closed_geodesics, ClassFilter};
        use crate::saddle::build_concat_graph;
        let s = surface("octagon");
        let g = build_concat_graph(&s, 4.0, usize::MAX).unwrap();
        let all = enumerate_closed_geodesics(&g, 5.0, ClassFilter::Regular, usize::MAX).unwrap();
        for c in all.iter().step_by(7).take(12) {
            let p = flow_shift(&c.to_path(&g), 0.37).unwrap();
            assert!(!p.events_in(-10.0, 10.0).is_empty());
            for sh in [0.05, 0.1] {
                let q = flow_shift(&p, sh).unwrap();
                let d = gs_distance_upper(&s, &p, &q, 10.0).unwrap();
                assert!((d.bound - sh).abs() < 1e-6, "{:?} {sh}: {}", c.word, d.bound);
            }
        }
    }

    #[test]
    fn parallel_cylinder_lines() {
        let s = surface("octagon");
        let c = centre(&s);
        let w = 0.2;
        let p = line(&s, c, 0.0, ConePolicy::Stop);
        let q = line(&s, c + Vec2::new(0.0, w), 0.0, ConePolicy::Stop);
        let d = gs_distance_upper(&s, &p, &q, 10.0).unwrap();
        // independent midpoint sum of w·e^{−2|t|}
        let n = 200_000;
        let h = 20.0 / n as f64;
        let want: f64 = (0..n).map(|i| w * (-2.0 * (-10.0 + (i as f64 + 0.5) * h).abs()).exp() * h).sum();
        assert!((d.bound - want).abs() < 1e-6, "{} vs {want}", d.bound);
    }

    #[test]
    fn reversal_round_trips() {
        let s = surface("octagon");
        let p = line(&s, centre(&s), 0.9, ConePolicy::Bisect);
        let r = reversed(&s, &reversed(&s, &p));
        assert_eq!(r.segments, p.segments);
        assert_eq!(r.transitions.len(), p.transitions.len());
        for (a, b) in r.events.iter().zip(&p.events) {
            assert!((a.theta - b.theta).abs() < 1e-12 && (a.t - b.t).abs() < 1e-12);
        }
    }
}
