//! Intrinsic distance between surface points.
//!
//! Shortest paths on a flat cone surface are polylines whose interior
//! vertices are vertices of the surface. The distance is found by Dijkstra
//! over the source, the target and the vertex classes, with straight-line
//! visibility supplied by [`crate::visibility::unfold`].

use crate::geom::{in_triangle, Vec2, TOL_GEOM};
use crate::surface::{Surface, SurfacePoint};
use crate::visibility::{corner_source, point_source, unfold, Region};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

pub const DEFAULT_DISTANCE_BUDGET: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("unfolding work exceeded the budget of {0} triangle copies")]
    CutoffTooLarge(usize),
    #[error("cutoff must be positive")]
    BadCutoff,
    #[error("point is outside polygon {0}")]
    OutsidePolygon(usize),
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Developed images of `q` reachable in `region`.
fn images_in(s: &Surface, reps: &[SurfacePoint], tri: usize, chart: &crate::geom::Isometry) -> Vec<Vec2> {
    let t = &s.triangles[tri];
    reps.iter()
        .filter(|r| r.polygon == t.polygon && in_triangle(r.pos, t.pts[0], t.pts[1], t.pts[2], TOL_GEOM))
        .map(|r| chart.apply(r.pos))
        .collect()
}

/// Distance from `p` to `q` if at most `cutoff`, else `None`.
pub fn surface_distance(
    s: &Surface,
    p: SurfacePoint,
    q: SurfacePoint,
    cutoff: f64,
    budget: usize,
) -> Result<Option<f64>, DistanceError> {
    if !(cutoff > 0.0) {
        return Err(DistanceError::BadCutoff);
    }
    for x in [p, q] {
        if x.polygon >= s.polygons.len() || !s.polygons[x.polygon].contains(x.pos, TOL_GEOM) {
            return Err(DistanceError::OutsidePolygon(x.polygon));
        }
    }
    if s.same_point(p, q) {
        return Ok(Some(0.0));
    }
    let nc = s.classes.len();
    // nodes: 0..nc vertex classes, nc source, nc + 1 target
    let (src, dst) = (nc, nc + 1);
    let source_node = s.vertex_at(p).unwrap_or(src);
    let target_node = s.vertex_at(q).unwrap_or(dst);
    let q_reps = if target_node == dst { s.representations(q) } else { Vec::new() };
    let mut dist = vec![f64::INFINITY; nc + 2];
    let mut done = vec![false; nc + 2];
    let mut heap = BinaryHeap::new();
    dist[source_node] = 0.0;
    heap.push(Item(0.0, source_node));
    let mut work = 0usize;
    while let Some(Item(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == target_node {
            return Ok(Some(d));
        }
        let radius = cutoff - d;
        let relax = |v: usize, len: f64, dist: &mut Vec<f64>, heap: &mut BinaryHeap<Item>| {
            let nd = d + len;
            if nd <= cutoff + TOL_GEOM && nd < dist[v] {
                dist[v] = nd;
                heap.push(Item(nd, v));
            }
        };
        let mut sources = Vec::new();
        if u == src {
            let (w, direct, regions) = point_source(s, p.polygon, p.pos).ok_or(DistanceError::OutsidePolygon(p.polygon))?;
            sources.push((p.pos, w, direct, regions));
        } else {
            for &k in &s.classes[u].corners {
                let c = &s.corners[k];
                let (x, w, direct) = corner_source(s, c.polygon, c.vertex);
                let regions = w
                    .iter()
                    .map(|w| Region {
                        tri: w.tri,
                        chart: w.chart,
                        lo: w.lo,
                        hi: w.hi,
                        whole: true,
                    })
                    .collect();
                sources.push((x, w, direct, regions));
            }
        }
        for (x, wedges, direct, regions) in sources {
            for v in &direct {
                relax(v.class, v.dist(), &mut dist, &mut heap);
            }
            let reach = |r: &Region, dist: &mut Vec<f64>, heap: &mut BinaryHeap<Item>| {
                for y in images_in(s, &q_reps, r.tri, &r.chart) {
                    if r.sees(x, y) {
                        relax(dst, y.dist(x), dist, heap);
                    }
                }
            };
            for r in &regions {
                reach(r, &mut dist, &mut heap);
            }
            let mut seen = Vec::new();
            let mut reached = Vec::new();
            let left = budget.saturating_sub(work);
            let mut used = 0usize;
            unfold(
                s,
                x,
                wedges,
                radius,
                left,
                |v| seen.push(v),
                |r| {
                    used += 1;
                    reached.push(*r)
                },
            )
            .map_err(|_| DistanceError::CutoffTooLarge(budget))?;
            work += used;
            for v in &seen {
                relax(v.class, v.dist(), &mut dist, &mut heap);
            }
            for r in &reached {
                reach(r, &mut dist, &mut heap);
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surface(name: &str) -> Surface {
        crate::load_surface(format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn pt(polygon: usize, x: f64, y: f64) -> SurfacePoint {
        SurfacePoint {
            polygon,
            pos: Vec2::new(x, y),
        }
    }

    fn centre(s: &Surface, k: usize) -> Vec2 {
        let v = &s.polygons[k].vertices;
        let c = v.iter().fold(Vec2::ZERO, |a, &b| a + b);
        c * (1.0 / v.len() as f64)
    }

    #[test]
    fn same_point_is_zero() {
        let s = surface("octagon");
        let c = centre(&s, 0);
        let p = SurfacePoint { polygon: 0, pos: c };
        assert_eq!(surface_distance(&s, p, p, 1.0, DEFAULT_DISTANCE_BUDGET).unwrap(), Some(0.0));
    }

    #[test]
    fn glued_midpoints_coincide() {
        let s = surface("octagon");
        let v = &s.polygons[0].vertices;
        let (q, f, _) = s.cross(0, 0);
        let m0 = SurfacePoint {
            polygon: 0,
            pos: (v[0] + v[1]) * 0.5,
        };
        let w = &s.polygons[q].vertices;
        let n = w.len();
        let m1 = SurfacePoint {
            polygon: q,
            pos: (w[f] + w[(f + 1) % n]) * 0.5,
        };
        assert_eq!(surface_distance(&s, m0, m1, 1.0, DEFAULT_DISTANCE_BUDGET).unwrap(), Some(0.0));
    }

    #[test]
    fn interior_points_are_euclidean() {
        let s = surface("octagon");
        let c = centre(&s, 0);
        let a = pt(0, c.x - 0.3, c.y + 0.1);
        let b = pt(0, c.x + 0.2, c.y - 0.2);
        let d = surface_distance(&s, a, b, 5.0, DEFAULT_DISTANCE_BUDGET).unwrap().unwrap();
        assert!((d - a.pos.dist(b.pos)).abs() < 1e-12);
    }

    #[test]
    fn centre_to_cone_point_is_circumradius() {
        let s = surface("octagon");
        let c = centre(&s, 0);
        let v = s.polygons[0].vertices[3];
        let d = surface_distance(&s, pt(0, c.x, c.y), pt(0, v.x, v.y), 5.0, DEFAULT_DISTANCE_BUDGET)
            .unwrap()
            .unwrap();
        assert!((d - c.dist(v)).abs() < 1e-12);
        // beyond the cutoff
        assert_eq!(
            surface_distance(&s, pt(0, c.x, c.y), pt(0, v.x, v.y), 0.5, DEFAULT_DISTANCE_BUDGET).unwrap(),
            None
        );
    }

    #[test]
    fn across_an_edge_is_shorter_than_inside() {
        let s = surface("octagon");
        let v = &s.polygons[0].vertices;
        let m0 = (v[0] + v[1]) * 0.5;
        let c = centre(&s, 0);
        // just inside side 0 and just inside its partner side
        let a = pt(0, m0.x + (c.x - m0.x) * 0.05, m0.y + (c.y - m0.y) * 0.05);
        let (q, f, _) = s.cross(0, 0);
        let w = &s.polygons[q].vertices;
        let m1 = (w[f] + w[(f + 1) % w.len()]) * 0.5;
        let b = pt(q, m1.x + (c.x - m1.x) * 0.05, m1.y + (c.y - m1.y) * 0.05);
        let d = surface_distance(&s, a, b, 5.0, DEFAULT_DISTANCE_BUDGET).unwrap().unwrap();
        let want = 2.0 * 0.05 * c.dist(m0);
        assert!((d - want).abs() < 1e-12, "{d} vs {want}");
    }
}
