//! Flat cone surfaces built from Euclidean polygons with edge gluings.
//!
//! A [`Surface`] is immutable once built. Every edge carries the planar
//! isometry that places the neighbouring polygon across it, vertex classes are
//! found by walking corners around each vertex, and each polygon is
//! triangulated so the unfolding engines only ever deal with convex pieces.

use crate::geom::{
    ccw_angle, in_triangle, point_segment_distance, segments_cross, signed_area, Isometry, Vec2,
    TOL_ANGLE, TOL_GEOM,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("malformed descriptor: {0}")]
    Malformed(String),
    #[error("edge length mismatch between ({0},{1}) and ({2},{3}): {4} vs {5}")]
    EdgeLengthMismatch(usize, usize, usize, usize, f64, f64),
    #[error("unglued edge ({0},{1})")]
    UngluedEdge(usize, usize),
    #[error("vertex class {0} has total angle {1} < 2π")]
    AngleBelowTwoPi(usize, f64),
    #[error("no cone points (all vertex angles are 2π)")]
    NoConePoints,
    #[error("polygon {0} is not simple and counterclockwise: {1}")]
    NonSimplePolygon(usize, String),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("cannot parse surface file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DevelopError {
    #[error("crossing {0:?} is not an edge of the current polygon {1}")]
    InvalidCrossing(EdgeRef, usize),
}

/// `(polygon id, edge index)` where edge `i` starts at vertex `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub struct EdgeRef(pub usize, pub usize);

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolygonDesc {
    pub id: usize,
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GluingDesc {
    pub from: [usize; 2],
    pub to: [usize; 2],
}

/// On-disk surface description (`.surf` files are JSON).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SurfaceDescriptor {
    pub name: String,
    pub polygons: Vec<PolygonDesc>,
    pub gluings: Vec<GluingDesc>,
}

impl SurfaceDescriptor {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        let p = path.as_ref();
        let text =
            std::fs::read_to_string(p).map_err(|e| LoadError::Io(p.display().to_string(), e))?;
        Ok(Self::from_json(&text)?)
    }

    /// Uniformly scale every vertex.
    pub fn scaled(&self, k: f64) -> Self {
        let mut d = self.clone();
        for p in &mut d.polygons {
            for v in &mut p.vertices {
                v[0] *= k;
                v[1] *= k;
            }
        }
        d
    }
}

/// Load and build a surface file in one step.
pub fn load_surface(path: impl AsRef<Path>) -> Result<Surface, LoadError> {
    let desc = SurfaceDescriptor::load(path)?;
    Ok(build_surface(&desc)?)
}

#[derive(Debug, Clone)]
pub struct Polygon {
    pub id: usize,
    pub vertices: Vec<Vec2>,
    /// Partner `(polygon index, edge index)` of each edge.
    pub partner: Vec<(usize, usize)>,
    /// Isometry placing the partner polygon (in its own frame) across each edge.
    pub gluing: Vec<Isometry>,
    /// Global corner index of vertex 0; vertex `i` is corner `corner_base + i`.
    pub corner_base: usize,
}

impl Polygon {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn edge_dir(&self, i: usize) -> Vec2 {
        let (a, b) = self.edge(i);
        (b - a).normalized()
    }

    /// Interior angle at vertex `i`, measured counterclockwise from the
    /// outgoing edge to the incoming edge.
    pub fn interior_angle(&self, i: usize) -> f64 {
        let n = self.len();
        let v = self.vertices[i];
        ccw_angle(
            self.vertices[(i + 1) % n] - v,
            self.vertices[(i + n - 1) % n] - v,
        )
    }

    pub fn contains(&self, p: Vec2, margin: f64) -> bool {
        let n = self.len();
        for i in 0..n {
            let (a, b) = self.edge(i);
            if point_segment_distance(p, a, b) <= margin {
                return true;
            }
        }
        // winding number
        let mut wn = 0i32;
        for i in 0..n {
            let (a, b) = self.edge(i);
            if a.y <= p.y {
                if b.y > p.y && (b - a).cross(p - a) > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && (b - a).cross(p - a) < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                a.dist(b)
            })
            .sum()
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max(a.dist(*b));
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct Corner {
    pub polygon: usize,
    pub vertex: usize,
    pub angle: f64,
    pub class: usize,
    /// Position of the corner's first (outgoing-edge) direction on the
    /// class's circle of directions.
    pub start: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexClass {
    pub id: usize,
    /// Global corner indices in counterclockwise order.
    pub corners: Vec<usize>,
    pub total_angle: f64,
    pub excess: f64,
    pub is_cone: bool,
}

/// Triangle of a polygon's internal triangulation, in the polygon's frame.
#[derive(Debug, Clone)]
pub struct Triangle {
    pub polygon: usize,
    /// Polygon vertex indices, counterclockwise.
    pub v: [usize; 3],
    pub pts: [Vec2; 3],
    /// Neighbour across edge `k` (from `v[k]` to `v[k+1]`): triangle index,
    /// its edge index, and the isometry placing it in this triangle's frame.
    pub nbr: [(usize, usize, Isometry); 3],
    /// Whether edge `k` is a polygon edge (index into the polygon) or a diagonal.
    pub poly_edge: [Option<usize>; 3],
}

#[derive(Debug, Clone)]
pub struct Surface {
    pub name: String,
    pub polygons: Vec<Polygon>,
    pub corners: Vec<Corner>,
    pub classes: Vec<VertexClass>,
    pub triangles: Vec<Triangle>,
    pub genus: i64,
    id_index: HashMap<usize, usize>,
}

/// A point of the surface given in a polygon's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub polygon: usize,
    pub pos: Vec2,
}

/// A polygon copy placed in the developing plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub polygon: usize,
    pub iso: Isometry,
    pub crossings: Vec<EdgeRef>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeConstants {
    pub ell0: f64,
    pub eta0: f64,
    pub theta0: f64,
}

impl Surface {
    pub fn polygon_index(&self, id: usize) -> Option<usize> {
        self.id_index.get(&id).copied()
    }

    pub fn corner_of(&self, polygon: usize, vertex: usize) -> usize {
        self.polygons[polygon].corner_base + vertex
    }

    pub fn class_of(&self, polygon: usize, vertex: usize) -> usize {
        self.corners[self.corner_of(polygon, vertex)].class
    }

    pub fn cone_classes(&self) -> impl Iterator<Item = &VertexClass> {
        self.classes.iter().filter(|c| c.is_cone)
    }

    pub fn gauss_bonnet_residual(&self) -> f64 {
        let total: f64 = self.classes.iter().map(|c| c.excess).sum();
        (total - TAU * (2.0 * self.genus as f64 - 2.0)).abs()
    }

    pub fn eta0(&self) -> f64 {
        self.cone_classes()
            .map(|c| c.excess)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn theta0(&self) -> f64 {
        self.cone_classes().map(|c| c.excess).fold(0.0, f64::max)
    }

    /// Upper bound on the diameter, from chaining polygons along a spanning
    /// tree of the dual graph.
    pub fn diameter_bound(&self) -> f64 {
        self.polygons
            .iter()
            .map(|p| 2.0 * p.diameter() + 0.5 * p.perimeter())
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(|p| signed_area(&p.vertices)).sum()
    }

    /// Locate the corner of class `class` containing circle position `pos`,
    /// returning `(corner index, offset within the corner)`.
    pub fn corner_at(&self, class: usize, pos: f64) -> (usize, f64) {
        let vc = &self.classes[class];
        let pos = crate::geom::wrap(pos, vc.total_angle);
        let mut best = (vc.corners[0], 0.0);
        for &k in &vc.corners {
            let c = &self.corners[k];
            if pos >= c.start - TOL_ANGLE {
                let off = (pos - c.start).max(0.0);
                if off < c.angle - TOL_ANGLE {
                    return (k, off);
                }
                best = (k, off);
            }
        }
        // only reachable for the last corner's closing direction, which is
        // the first corner's opening direction
        let last = &self.corners[best.0];
        if best.1 >= last.angle - TOL_ANGLE {
            return (vc.corners[0], 0.0);
        }
        best
    }

    /// Direction in the corner's polygon frame for an offset within the corner.
    pub fn corner_direction(&self, corner: usize, offset: f64) -> Vec2 {
        let c = &self.corners[corner];
        self.polygons[c.polygon]
            .edge_dir(c.vertex)
            .rotate(offset)
    }

    /// Circle position of a direction `d` leaving vertex `vertex` of polygon
    /// `polygon` into that polygon (angles within the corner).
    pub fn direction_position(&self, polygon: usize, vertex: usize, d: Vec2) -> f64 {
        let k = self.corner_of(polygon, vertex);
        let c = &self.corners[k];
        let off = ccw_angle(self.polygons[polygon].edge_dir(vertex), d);
        let off = if off > c.angle + TOL_ANGLE {
            // numerically just below the outgoing edge
            if off > TAU - TOL_ANGLE {
                0.0
            } else {
                off
            }
        } else {
            off.min(c.angle)
        };
        crate::geom::wrap(c.start + off, self.classes[c.class].total_angle)
    }

    /// Cross edge `edge` of polygon `polygon`: returns the partner polygon
    /// and the isometry mapping partner coordinates into the current frame.
    pub fn cross(&self, polygon: usize, edge: usize) -> (usize, usize, Isometry) {
        let p = &self.polygons[polygon];
        let (q, f) = p.partner[edge];
        (q, f, p.gluing[edge])
    }

    /// Find a triangle of `polygon` containing `pos`.
    pub fn locate_triangle(&self, polygon: usize, pos: Vec2) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in self.triangles.iter().enumerate() {
            if t.polygon != polygon {
                continue;
            }
            if in_triangle(pos, t.pts[0], t.pts[1], t.pts[2], TOL_GEOM) {
                // prefer the triangle where the point is deepest inside
                let depth = (0..3)
                    .map(|k| {
                        let a = t.pts[k];
                        let b = t.pts[(k + 1) % 3];
                        (b - a).cross(pos - a) / (b - a).norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                if best.map_or(true, |(_, d)| depth > d) {
                    best = Some((ti, depth));
                }
            }
        }
        best.map(|b| b.0)
    }

    /// Vertex class of the point, if it sits on a vertex.
    pub fn vertex_at(&self, p: SurfacePoint) -> Option<usize> {
        let poly = &self.polygons[p.polygon];
        poly.vertices
            .iter()
            .position(|v| v.dist(p.pos) <= TOL_GEOM)
            .map(|i| self.class_of(p.polygon, i))
    }

    /// All representations of a surface point (several when on an edge or vertex).
    pub fn representations(&self, p: SurfacePoint) -> Vec<SurfacePoint> {
        let mut out = vec![p];
        let poly = &self.polygons[p.polygon];
        if let Some(cls) = self.vertex_at(p) {
            out.clear();
            for &k in &self.classes[cls].corners {
                let c = &self.corners[k];
                out.push(SurfacePoint {
                    polygon: c.polygon,
                    pos: self.polygons[c.polygon].vertices[c.vertex],
                });
            }
            return out;
        }
        for e in 0..poly.len() {
            let (a, b) = poly.edge(e);
            if point_segment_distance(p.pos, a, b) <= TOL_GEOM {
                let (q, _, g) = self.cross(p.polygon, e);
                out.push(SurfacePoint {
                    polygon: q,
                    pos: g.inverse().apply(p.pos),
                });
            }
        }
        out
    }

    pub fn same_point(&self, a: SurfacePoint, b: SurfacePoint) -> bool {
        self.representations(a)
            .iter()
            .any(|r| r.polygon == b.polygon && r.pos.dist(b.pos) <= TOL_GEOM)
    }
}

/// Validate a descriptor and build the surface.
pub fn build_surface(desc: &SurfaceDescriptor) -> Result<Surface, ValidationError> {
    let mut id_index = HashMap::new();
    for (i, p) in desc.polygons.iter().enumerate() {
        if id_index.insert(p.id, i).is_some() {
            return Err(ValidationError::Malformed(format!(
                "duplicate polygon id {}",
                p.id
            )));
        }
        if p.vertices.len() < 3 {
            return Err(ValidationError::Malformed(format!(
                "polygon {} has fewer than 3 vertices",
                p.id
            )));
        }
    }
    let mut polygons: Vec<Polygon> = Vec::with_capacity(desc.polygons.len());
    let mut corner_base = 0;
    for p in &desc.polygons {
        let vertices: Vec<Vec2> = p.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
        check_simple(p.id, &vertices)?;
        let n = vertices.len();
        polygons.push(Polygon {
            id: p.id,
            vertices,
            partner: vec![(usize::MAX, usize::MAX); n],
            gluing: vec![Isometry::IDENTITY; n],
            corner_base,
        });
        corner_base += n;
    }

    let resolve = |r: [usize; 2]| -> Result<(usize, usize), ValidationError> {
        let pi = *id_index
            .get(&r[0])
            .ok_or_else(|| ValidationError::Malformed(format!("unknown polygon id {}", r[0])))?;
        if r[1] >= desc.polygons[pi].vertices.len() {
            return Err(ValidationError::Malformed(format!(
                "polygon {} has no edge {}",
                r[0], r[1]
            )));
        }
        Ok((pi, r[1]))
    };
    for g in &desc.gluings {
        let a = resolve(g.from)?;
        let b = resolve(g.to)?;
        if a == b {
            return Err(ValidationError::Malformed(format!(
                "edge {:?} glued to itself",
                g.from
            )));
        }
        for (x, y) in [(a, b), (b, a)] {
            if polygons[x.0].partner[x.1].0 != usize::MAX {
                return Err(ValidationError::Malformed(format!(
                    "edge ({},{}) glued more than once",
                    polygons[x.0].id, x.1
                )));
            }
            polygons[x.0].partner[x.1] = y;
        }
    }
    for p in &polygons {
        for (e, &(q, _)) in p.partner.iter().enumerate() {
            if q == usize::MAX {
                return Err(ValidationError::UngluedEdge(p.id, e));
            }
        }
    }
    for pi in 0..polygons.len() {
        for e in 0..polygons[pi].len() {
            let (qi, f) = polygons[pi].partner[e];
            let (a, b) = polygons[pi].edge(e);
            let (c, d) = polygons[qi].edge(f);
            let (la, lc) = (a.dist(b), c.dist(d));
            if (la - lc).abs() > TOL_GEOM {
                return Err(ValidationError::EdgeLengthMismatch(
                    polygons[pi].id,
                    e,
                    polygons[qi].id,
                    f,
                    la,
                    lc,
                ));
            }
            // partner edge c→d is glued onto b→a
            polygons[pi].gluing[e] = Isometry::segment_to_segment(c, d, b, a);
        }
    }

    // corners and vertex classes
    let mut corners: Vec<Corner> = Vec::with_capacity(corner_base);
    for (pi, p) in polygons.iter().enumerate() {
        for v in 0..p.len() {
            corners.push(Corner {
                polygon: pi,
                vertex: v,
                angle: p.interior_angle(v),
                class: usize::MAX,
                start: 0.0,
            });
        }
    }
    let mut classes = Vec::new();
    for k0 in 0..corners.len() {
        if corners[k0].class != usize::MAX {
            continue;
        }
        let cls = classes.len();
        let mut members = Vec::new();
        let mut k = k0;
        let mut pos = 0.0;
        loop {
            corners[k].class = cls;
            corners[k].start = pos;
            pos += corners[k].angle;
            members.push(k);
            let (pi, v) = (corners[k].polygon, corners[k].vertex);
            let n = polygons[pi].len();
            let (q, f) = polygons[pi].partner[(v + n - 1) % n];
            k = polygons[q].corner_base + f;
            if k == k0 {
                break;
            }
            if corners[k].class != usize::MAX {
                return Err(ValidationError::Malformed(
                    "inconsistent corner walk (orientation-reversing gluing?)".into(),
                ));
            }
        }
        let total = pos;
        if total < TAU - TOL_GEOM {
            return Err(ValidationError::AngleBelowTwoPi(cls, total));
        }
        let excess = total - TAU;
        classes.push(VertexClass {
            id: cls,
            corners: members,
            total_angle: total,
            excess,
            is_cone: excess > TOL_ANGLE,
        });
    }
    if !classes.iter().any(|c| c.is_cone) {
        return Err(ValidationError::NoConePoints);
    }
    let v = classes.len() as i64;
    let e = desc.gluings.len() as i64;
    let f = polygons.len() as i64;
    let chi = v - e + f;
    if chi % 2 != 0 {
        return Err(ValidationError::Malformed(format!(
            "odd Euler characteristic {chi}"
        )));
    }
    let genus = (2 - chi) / 2;

    let triangles = triangulate_all(&polygons)?;
    Ok(Surface {
        name: desc.name.clone(),
        polygons,
        corners,
        classes,
        triangles,
        genus,
        id_index,
    })
}

fn check_simple(id: usize, vs: &[Vec2]) -> Result<(), ValidationError> {
    let n = vs.len();
    if signed_area(vs) <= 0.0 {
        return Err(ValidationError::NonSimplePolygon(
            id,
            "not counterclockwise".into(),
        ));
    }
    for i in 0..n {
        let (a, b) = (vs[i], vs[(i + 1) % n]);
        if a.dist(b) <= TOL_GEOM {
            return Err(ValidationError::NonSimplePolygon(
                id,
                format!("degenerate edge {i}"),
            ));
        }
        for j in 0..n {
            if j == i || j == (i + 1) % n {
                continue;
            }
            if point_segment_distance(vs[j], a, b) <= TOL_GEOM {
                return Err(ValidationError::NonSimplePolygon(
                    id,
                    format!("vertex {j} touches edge {i}"),
                ));
            }
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a, b, vs[j], vs[(j + 1) % n]) {
                return Err(ValidationError::NonSimplePolygon(
                    id,
                    format!("edges {i} and {j} cross"),
                ));
            }
        }
    }
    Ok(())
}

/// Ear-clipping triangulation of each polygon, then adjacency across
/// diagonals (identity) and polygon edges (gluing isometries).
fn triangulate_all(polygons: &[Polygon]) -> Result<Vec<Triangle>, ValidationError> {
    let mut tris: Vec<Triangle> = Vec::new();
    // (polygon, a, b) directed edge → (triangle, edge)
    let mut edge_owner: HashMap<(usize, usize, usize), (usize, usize)> = HashMap::new();
    for (pi, p) in polygons.iter().enumerate() {
        let vs = &p.vertices;
        let mut idx: Vec<usize> = (0..p.len()).collect();
        while idx.len() > 3 {
            let m = idx.len();
            let mut clipped = false;
            for k in 0..m {
                let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
                let (a, b, c) = (vs[ia], vs[ib], vs[ic]);
                if (b - a).cross(c - b) <= 1e-14 {
                    continue;
                }
                let blocked = idx.iter().any(|&j| {
                    j != ia && j != ib && j != ic && in_triangle(vs[j], a, b, c, 1e-12)
                });
                if blocked {
                    continue;
                }
                push_tri(&mut tris, &mut edge_owner, pi, [ia, ib, ic], vs);
                idx.remove(k);
                clipped = true;
                break;
            }
            if !clipped {
                return Err(ValidationError::NonSimplePolygon(
                    p.id,
                    "triangulation failed".into(),
                ));
            }
        }
        push_tri(&mut tris, &mut edge_owner, pi, [idx[0], idx[1], idx[2]], vs);
    }
    for ti in 0..tris.len() {
        for k in 0..3 {
            let pi = tris[ti].polygon;
            let (a, b) = (tris[ti].v[k], tris[ti].v[(k + 1) % 3]);
            let n = polygons[pi].len();
            if b == (a + 1) % n {
                let (q, f) = polygons[pi].partner[a];
                let nq = polygons[q].len();
                let key = (q, f, (f + 1) % nq);
                let &(tj, kj) = edge_owner.get(&key).expect("polygon edge owned");
                tris[ti].nbr[k] = (tj, kj, polygons[pi].gluing[a]);
                tris[ti].poly_edge[k] = Some(a);
            } else {
                let &(tj, kj) = edge_owner
                    .get(&(pi, b, a))
                    .expect("diagonal has a twin");
                tris[ti].nbr[k] = (tj, kj, Isometry::IDENTITY);
                tris[ti].poly_edge[k] = None;
            }
        }
    }
    Ok(tris)
}

fn push_tri(
    tris: &mut Vec<Triangle>,
    owner: &mut HashMap<(usize, usize, usize), (usize, usize)>,
    pi: usize,
    v: [usize; 3],
    vs: &[Vec2],
) {
    let ti = tris.len();
    for k in 0..3 {
        owner.insert((pi, v[k], v[(k + 1) % 3]), (ti, k));
    }
    tris.push(Triangle {
        polygon: pi,
        v,
        pts: [vs[v[0]], vs[v[1]], vs[v[2]]],
        nbr: [(usize::MAX, 0, Isometry::IDENTITY); 3],
        poly_edge: [None; 3],
    });
}

/// Develop a walk of edge crossings from a seed chart. Returns one chart per
/// prefix of the walk (the seed first).
pub fn develop(
    s: &Surface,
    seed: (usize, Isometry),
    crossings: &[EdgeRef],
) -> Result<Vec<Chart>, DevelopError> {
    let mut out = Vec::with_capacity(crossings.len() + 1);
    let mut cur = Chart {
        polygon: seed.0,
        iso: seed.1,
        crossings: Vec::new(),
    };
    out.push(cur.clone());
    for &er in crossings {
        if er.0 != cur.polygon || er.1 >= s.polygons[cur.polygon].len() {
            return Err(DevelopError::InvalidCrossing(er, cur.polygon));
        }
        let (q, _, g) = s.cross(cur.polygon, er.1);
        let mut cr = cur.crossings.clone();
        cr.push(er);
        cur = Chart {
            polygon: q,
            iso: cur.iso.compose(&g),
            crossings: cr,
        };
        out.push(cur.clone());
    }
    Ok(out)
}

/// `(ell0, eta0, theta0)`: shortest saddle connection, minimal and maximal excess.
pub fn cone_constants(s: &Surface) -> ConeConstants {
    ConeConstants {
        ell0: crate::saddle::shortest_saddle_connection(s),
        eta0: s.eta0(),
        theta0: s.theta0(),
    }
}

/// Angle-sum sanity: sum of corner angles equals `π Σ (n_P − 2)`.
pub fn corner_angle_sum(s: &Surface) -> f64 {
    s.polygons
        .iter()
        .map(|p| PI * (p.len() as f64 - 2.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn octagon() -> SurfaceDescriptor {
        SurfaceDescriptor::from_json(include_str!("../surfaces/octagon.surf")).unwrap()
    }

    fn torus() -> SurfaceDescriptor {
        SurfaceDescriptor {
            name: "torus".into(),
            polygons: vec![PolygonDesc {
                id: 0,
                vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            }],
            gluings: vec![
                GluingDesc {
                    from: [0, 0],
                    to: [0, 2],
                },
                GluingDesc {
                    from: [0, 1],
                    to: [0, 3],
                },
            ],
        }
    }

    #[test]
    fn octagon_has_one_six_pi_cone() {
        let s = build_surface(&octagon()).unwrap();
        assert_eq!(s.genus, 2);
        assert_eq!(s.classes.len(), 1);
        assert!((s.classes[0].total_angle - 6.0 * PI).abs() < 1e-9);
        assert!(s.gauss_bonnet_residual() < 1e-9);
        assert!((s.eta0() - 4.0 * PI).abs() < 1e-9);
        assert!((s.theta0() - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn torus_is_rejected() {
        assert_eq!(build_surface(&torus()).err(), Some(ValidationError::NoConePoints));
    }

    #[test]
    fn missing_gluing_is_rejected() {
        let mut d = octagon();
        d.gluings.pop();
        assert!(matches!(
            build_surface(&d),
            Err(ValidationError::UngluedEdge(0, _))
        ));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut d = torus();
        d.polygons[0].vertices = vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]];
        d.gluings[0].to = [0, 1];
        d.gluings[1] = GluingDesc {
            from: [0, 2],
            to: [0, 3],
        };
        assert!(matches!(
            build_surface(&d),
            Err(ValidationError::EdgeLengthMismatch(..))
        ));
    }

    #[test]
    fn clockwise_polygon_is_rejected() {
        let mut d = octagon();
        d.polygons[0].vertices.reverse();
        assert!(matches!(
            build_surface(&d),
            Err(ValidationError::NonSimplePolygon(0, _))
        ));
    }

    #[test]
    fn gluing_round_trip_is_identity() {
        for text in [
            include_str!("../surfaces/octagon.surf"),
            include_str!("../surfaces/lshape.surf"),
        ] {
            let s = build_surface(&SurfaceDescriptor::from_json(text).unwrap()).unwrap();
            for (pi, p) in s.polygons.iter().enumerate() {
                for e in 0..p.len() {
                    let (q, f, g) = s.cross(pi, e);
                    let (_, _, h) = s.cross(q, f);
                    assert!(g.compose(&h).distance(&Isometry::IDENTITY) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lshape_is_genus_two() {
        let s = build_surface(
            &SurfaceDescriptor::from_json(include_str!("../surfaces/lshape.surf")).unwrap(),
        )
        .unwrap();
        assert_eq!(s.genus, 2);
        assert_eq!(s.cone_classes().count(), 1);
        assert!((s.classes[0].total_angle - 6.0 * PI).abs() < 1e-9);
        assert!(s.gauss_bonnet_residual() < 1e-9);
    }

    #[test]
    fn develop_empty_and_involution() {
        let s = build_surface(&octagon()).unwrap();
        let seed = (0, Isometry::new(0.3, Vec2::new(1.0, 2.0)));
        let c = develop(&s, seed, &[]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].iso, seed.1);
        let (_, f, _) = s.cross(0, 1);
        let c = develop(&s, seed, &[EdgeRef(0, 1), EdgeRef(0, f)]).unwrap();
        assert!(c[2].iso.distance(&seed.1) < 1e-12);
    }

    #[test]
    fn develop_octagon_right_edge_is_translation() {
        let s = build_surface(&octagon()).unwrap();
        // edge 2 (v2 → v3) is the vertical right side, glued to edge 6
        let c = develop(&s, (0, Isometry::IDENTITY), &[EdgeRef(0, 2)]).unwrap();
        let width = 1.0 + 2f64.sqrt();
        assert!(c[1].iso.is_translation(1e-12));
        assert!(c[1].iso.t.dist(Vec2::new(width, 0.0)) < 1e-12);
    }

    #[test]
    fn develop_rejects_foreign_edge() {
        let s = build_surface(&octagon()).unwrap();
        assert!(develop(&s, (0, Isometry::IDENTITY), &[EdgeRef(0, 9)]).is_err());
        assert!(develop(&s, (0, Isometry::IDENTITY), &[EdgeRef(3, 0)]).is_err());
    }

    #[test]
    fn two_class_excess_extrema() {
        // excess table with two classes (π/2 and π)
        let mut s = build_surface(&octagon()).unwrap();
        s.classes = vec![
            VertexClass {
                id: 0,
                corners: vec![],
                total_angle: 2.5 * PI,
                excess: 0.5 * PI,
                is_cone: true,
            },
            VertexClass {
                id: 1,
                corners: vec![],
                total_angle: 3.0 * PI,
                excess: PI,
                is_cone: true,
            },
        ];
        assert_eq!((s.eta0(), s.theta0()), (0.5 * PI, PI));
    }

    #[test]
    fn corner_positions_cover_circle() {
        let s = build_surface(&octagon()).unwrap();
        let vc = &s.classes[0];
        let mut acc = 0.0;
        for &k in &vc.corners {
            assert!((s.corners[k].start - acc).abs() < 1e-12);
            acc += s.corners[k].angle;
        }
        assert!((acc - vc.total_angle).abs() < 1e-12);
        let (k, off) = s.corner_at(0, vc.total_angle - 1e-13);
        assert_eq!((k, off), (vc.corners[0], 0.0));
    }
}
