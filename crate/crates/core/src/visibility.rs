//! Straight-line unfolding from a source point.
//!
//! Starting from a source in the developing plane, angular wedges are pushed
//! through the triangulation. A wedge entering a triangle is split at the
//! opposite vertex; every vertex strictly inside a wedge is visible from the
//! source along a straight segment. Boundary rays of split wedges are
//! excluded, so each visible vertex image is reported once.

use crate::geom::{point_segment_distance, Isometry, Vec2, TOL_GEOM};
use crate::surface::Surface;
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("unfolding exceeded the budget of {0} triangle copies")]
pub struct WorkLimit(pub usize);

/// A wedge about to cross edge `edge` of triangle `tri` (placed by `chart`).
#[derive(Debug, Clone, Copy)]
pub struct Wedge {
    pub tri: usize,
    pub edge: usize,
    pub chart: Isometry,
    pub lo: Vec2,
    pub hi: Vec2,
}

/// A vertex image visible from the source.
#[derive(Debug, Clone, Copy)]
pub struct Seen {
    pub polygon: usize,
    pub vertex: usize,
    pub class: usize,
    /// Developed displacement from the source.
    pub holonomy: Vec2,
    /// Chart of the polygon copy the vertex was seen in.
    pub chart: Isometry,
}

impl Seen {
    pub fn dist(&self) -> f64 {
        self.holonomy.norm()
    }

    /// Direction at the seen vertex pointing back to the source, in the
    /// vertex polygon's frame.
    pub fn back_dir(&self) -> Vec2 {
        self.chart.inverse().rotate(-self.holonomy).normalized()
    }
}

/// A triangle copy reached by a wedge.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub tri: usize,
    pub chart: Isometry,
    pub lo: Vec2,
    pub hi: Vec2,
    /// Start triangle: every point is visible.
    pub whole: bool,
}

impl Region {
    /// Whether the developed point `x` is inside the wedge (boundary included).
    pub fn sees(&self, source: Vec2, x: Vec2) -> bool {
        if self.whole {
            return true;
        }
        let w = x - source;
        self.lo.cross(w) >= -TOL_GEOM && w.cross(self.hi) >= -TOL_GEOM
    }
}

#[inline]
fn side(dir: Vec2, w: Vec2) -> f64 {
    // signed perpendicular offset of `w` from the ray `dir` (positive: ccw)
    dir.cross(w)
}

/// Push wedges from `source` out to `radius`.
pub fn unfold(
    s: &Surface,
    source: Vec2,
    initial: Vec<Wedge>,
    radius: f64,
    budget: usize,
    mut on_vertex: impl FnMut(Seen),
    mut on_region: impl FnMut(&Region),
) -> Result<(), WorkLimit> {
    let mut stack = initial;
    let mut work = 0usize;
    while let Some(w) = stack.pop() {
        let t = &s.triangles[w.tri];
        let (a, b) = (t.pts[w.edge], t.pts[(w.edge + 1) % 3]);
        if point_segment_distance(source, w.chart.apply(a), w.chart.apply(b)) > radius + TOL_GEOM {
            continue;
        }
        work += 1;
        if work > budget {
            return Err(WorkLimit(budget));
        }
        let (nt, k, iso) = t.nbr[w.edge];
        let chart = w.chart.compose(&iso);
        let tri = &s.triangles[nt];
        on_region(&Region {
            tri: nt,
            chart,
            lo: w.lo,
            hi: w.hi,
            whole: false,
        });
        let ci = (k + 2) % 3;
        let c = chart.apply(tri.pts[ci]);
        let wc = c - source;
        let after_lo = side(w.lo, wc) > TOL_GEOM;
        let before_hi = side(w.hi, wc) < -TOL_GEOM;
        // entering through edge k: the lo side exits through edge k+1, hi through k+2
        let lo_edge = (k + 1) % 3;
        let hi_edge = (k + 2) % 3;
        if after_lo && before_hi {
            if wc.norm() <= radius + TOL_GEOM {
                on_vertex(Seen {
                    polygon: tri.polygon,
                    vertex: tri.v[ci],
                    class: s.class_of(tri.polygon, tri.v[ci]),
                    holonomy: wc,
                    chart,
                });
            }
            let dc = wc.normalized();
            stack.push(Wedge {
                tri: nt,
                edge: lo_edge,
                chart,
                lo: w.lo,
                hi: dc,
            });
            stack.push(Wedge {
                tri: nt,
                edge: hi_edge,
                chart,
                lo: dc,
                hi: w.hi,
            });
        } else if !after_lo {
            stack.push(Wedge {
                tri: nt,
                edge: hi_edge,
                chart,
                ..w
            });
        } else {
            stack.push(Wedge {
                tri: nt,
                edge: lo_edge,
                chart,
                ..w
            });
        }
    }
    Ok(())
}

/// Wedges and directly visible vertices for a source at corner
/// `(polygon, vertex)`. Each fan triangle reports its clockwise-side vertex.
pub fn corner_source(s: &Surface, polygon: usize, vertex: usize) -> (Vec2, Vec<Wedge>, Vec<Seen>) {
    let x = s.polygons[polygon].vertices[vertex];
    let mut wedges = Vec::new();
    let mut direct = Vec::new();
    for (ti, t) in s.triangles.iter().enumerate() {
        if t.polygon != polygon {
            continue;
        }
        let Some(j) = t.v.iter().position(|&v| v == vertex) else {
            continue;
        };
        let (jb, jc) = ((j + 1) % 3, (j + 2) % 3);
        let b = t.pts[jb];
        let c = t.pts[jc];
        direct.push(Seen {
            polygon,
            vertex: t.v[jb],
            class: s.class_of(polygon, t.v[jb]),
            holonomy: b - x,
            chart: Isometry::IDENTITY,
        });
        wedges.push(Wedge {
            tri: ti,
            edge: jb,
            chart: Isometry::IDENTITY,
            lo: (b - x).normalized(),
            hi: (c - x).normalized(),
        });
    }
    (x, wedges, direct)
}

/// Wedges, direct vertices and regions for a source at a non-vertex point.
pub fn point_source(
    s: &Surface,
    polygon: usize,
    pos: Vec2,
) -> Option<(Vec<Wedge>, Vec<Seen>, Vec<Region>)> {
    let ti = s.locate_triangle(polygon, pos)?;
    let mut wedges = Vec::new();
    let mut direct = Vec::new();
    let mut regions = Vec::new();
    let mut seeds = vec![(ti, Isometry::IDENTITY, None)];
    let t = &s.triangles[ti];
    for e in 0..3 {
        let (a, b) = (t.pts[e], t.pts[(e + 1) % 3]);
        if point_segment_distance(pos, a, b) <= TOL_GEOM {
            let (nt, k, iso) = t.nbr[e];
            seeds[0].2 = Some(e);
            seeds.push((nt, iso, Some(k)));
        }
    }
    for (tj, chart, skip) in seeds {
        let tr = &s.triangles[tj];
        regions.push(Region {
            tri: tj,
            chart,
            lo: Vec2::new(1.0, 0.0),
            hi: Vec2::new(1.0, 0.0),
            whole: true,
        });
        for k in 0..3 {
            let v = chart.apply(tr.pts[k]);
            direct.push(Seen {
                polygon: tr.polygon,
                vertex: tr.v[k],
                class: s.class_of(tr.polygon, tr.v[k]),
                holonomy: v - pos,
                chart,
            });
            if Some(k) == skip {
                continue;
            }
            let a = chart.apply(tr.pts[k]);
            let b = chart.apply(tr.pts[(k + 1) % 3]);
            wedges.push(Wedge {
                tri: tj,
                edge: k,
                chart,
                lo: (a - pos).normalized(),
                hi: (b - pos).normalized(),
            });
        }
    }
    // vertices of the start triangles may appear twice (shared edge)
    direct.sort_by(|a, b| {
        (a.polygon, a.vertex)
            .cmp(&(b.polygon, b.vertex))
            .then(a.dist().total_cmp(&b.dist()))
    });
    direct.dedup_by(|a, b| (a.polygon, a.vertex) == (b.polygon, b.vertex) && (a.holonomy - b.holonomy).norm() < TOL_GEOM);
    Some((wedges, direct, regions))
}
