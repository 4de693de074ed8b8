//! Saddle connections and the graph of admissible concatenations.

use crate::geom::{wrap, Vec2, TOL_ANGLE, TOL_GEOM};
use crate::surface::Surface;
use crate::tracer::{
    side_angles, signed_turn, trace_until_cone, trace_until_cone_from, GeodesicPath, TraceStart,
};
use crate::visibility::{corner_source, unfold, Seen, WorkLimit};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use thiserror::Error;

/// Default number of triangle copies one unfolding may visit.
pub const DEFAULT_CHART_BUDGET: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleError {
    #[error("work limit exceeded ({0})")]
    WorkLimitExceeded(usize),
    #[error("joint between cone classes {0} and {1}")]
    ClassMismatch(usize, usize),
    #[error("no connecting path within length {0}")]
    NotFound(f64),
}

impl From<WorkLimit> for SaddleError {
    fn from(w: WorkLimit) -> Self {
        SaddleError::WorkLimitExceeded(w.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleConnection {
    pub id: usize,
    pub start_class: usize,
    pub end_class: usize,
    /// Circle position of the outgoing direction at the start.
    pub start_pos: f64,
    /// Circle position at the end pointing back along the connection.
    pub end_pos: f64,
    /// Corner the connection leaves through.
    pub start_corner: usize,
    /// Displacement in the frame of the start corner's polygon.
    pub holonomy: Vec2,
    pub length: f64,
    /// Id of the reversed connection.
    pub reverse: usize,
    #[serde(skip)]
    pub trace: GeodesicPath,
}

/// Angles at a joint between two saddle connections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Joint {
    pub left: f64,
    pub right: f64,
    pub theta: f64,
    pub singular: bool,
}

fn joint_angles(u: f64, w: f64, total: f64) -> Option<Joint> {
    let (left, right) = side_angles(u, w, total);
    if left.min(right) < PI - TOL_ANGLE {
        return None;
    }
    let theta = signed_turn(left, right);
    Some(Joint {
        left,
        right,
        theta,
        singular: theta.abs() <= PI + TOL_ANGLE,
    })
}

/// Joint angles for `sc1` followed by `sc2`, or `None` if inadmissible.
pub fn admissible_concatenation(
    s: &Surface,
    sc1: &SaddleConnection,
    sc2: &SaddleConnection,
) -> Result<Option<Joint>, SaddleError> {
    if sc1.end_class != sc2.start_class {
        return Err(SaddleError::ClassMismatch(sc1.end_class, sc2.start_class));
    }
    let total = s.classes[sc1.end_class].total_angle;
    Ok(joint_angles(sc1.end_pos, sc2.start_pos, total))
}

struct Raw {
    start_class: usize,
    end_class: usize,
    start_pos: f64,
    end_pos: f64,
    start_corner: usize,
    holonomy: Vec2,
    length: f64,
}

fn clean_pos(p: f64, total: f64) -> f64 {
    let p = wrap(p, total);
    if total - p < 1e-10 {
        0.0
    } else {
        p
    }
}

fn cyc_diff(a: f64, b: f64, total: f64) -> f64 {
    let d = wrap(a - b, total);
    d.min(total - d)
}

fn from_corner(s: &Surface, k: usize, lmax: f64, budget: usize) -> Result<Vec<Raw>, SaddleError> {
    let c = &s.corners[k];
    let class = c.class;
    let total = s.classes[class].total_angle;
    let (x, wedges, direct) = corner_source(s, c.polygon, c.vertex);
    let mut seen: Vec<Seen> = direct;
    unfold(s, x, wedges, lmax, budget, |v| seen.push(v), |_| {})?;
    let mut out = Vec::new();
    for v in seen {
        let d = v.dist();
        if d > lmax + TOL_GEOM || d <= TOL_GEOM {
            continue;
        }
        let start_pos = clean_pos(s.direction_position(c.polygon, c.vertex, v.holonomy), total);
        if s.classes[v.class].is_cone {
            let end_total = s.classes[v.class].total_angle;
            out.push(Raw {
                start_class: class,
                end_class: v.class,
                start_pos,
                end_pos: clean_pos(s.direction_position(v.polygon, v.vertex, v.back_dir()), end_total),
                start_corner: k,
                holonomy: v.holonomy,
                length: d,
            });
        } else {
            // the ray runs straight through a flat vertex
            let rest = lmax - d + TOL_GEOM;
            if rest <= TOL_GEOM {
                continue;
            }
            let dir = v.chart.inverse().rotate(v.holonomy).normalized();
            let start = TraceStart {
                polygon: v.polygon,
                point: s.polygons[v.polygon].vertices[v.vertex],
                dir,
            };
            let (_, arrival) = trace_until_cone_from(s, start, rest)
                .expect("continuation through a flat vertex");
            if let Some(a) = arrival {
                let len = d + a.t;
                if len <= lmax + TOL_GEOM {
                    out.push(Raw {
                        start_class: class,
                        end_class: a.class,
                        start_pos,
                        end_pos: clean_pos(a.incoming, s.classes[a.class].total_angle),
                        start_corner: k,
                        holonomy: v.holonomy.normalized() * len,
                        length: len,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// All directed saddle connections of length at most `lmax`, sorted by
/// `(length, start class, start position)`.
pub fn enumerate_saddle_connections(
    s: &Surface,
    lmax: f64,
    budget: usize,
) -> Result<Vec<SaddleConnection>, SaddleError> {
    let corners: Vec<usize> = s
        .cone_classes()
        .flat_map(|c| c.corners.iter().copied())
        .collect();
    let parts: Result<Vec<Vec<Raw>>, SaddleError> = corners
        .par_iter()
        .map(|&k| from_corner(s, k, lmax, budget))
        .collect();
    let mut raw: Vec<Raw> = parts?.into_iter().flatten().collect();
    raw.sort_by(|a, b| {
        a.length
            .total_cmp(&b.length)
            .then(a.start_class.cmp(&b.start_class))
            .then(a.start_pos.total_cmp(&b.start_pos))
    });
    // drop duplicates seen twice along a wedge boundary
    let mut kept: Vec<Raw> = Vec::with_capacity(raw.len());
    for r in raw {
        let total = s.classes[r.start_class].total_angle;
        let dup = kept
            .iter()
            .rev()
            .take_while(|q| r.length - q.length <= 1e-9)
            .any(|q| {
                q.start_class == r.start_class
                    && q.end_class == r.end_class
                    && cyc_diff(q.start_pos, r.start_pos, total) <= 1e-9
            });
        if !dup {
            kept.push(r);
        }
    }
    let n = kept.len();
    let mut reverse = vec![usize::MAX; n];
    for i in 0..n {
        let r = &kept[i];
        let total = s.classes[r.end_class].total_angle;
        let lo = kept.partition_point(|q| q.length < r.length - 1e-8);
        for (j, q) in kept.iter().enumerate().skip(lo) {
            if q.length > r.length + 1e-8 {
                break;
            }
            if q.start_class == r.end_class
                && q.end_class == r.start_class
                && cyc_diff(q.start_pos, r.end_pos, total) <= 1e-8
            {
                reverse[i] = j;
                break;
            }
        }
    }
    let traces: Vec<GeodesicPath> = kept
        .par_iter()
        .map(|r| {
            let (path, arrival) = trace_until_cone(s, r.start_class, r.start_pos, r.length + 1e-6)
                .expect("retrace of a saddle connection");
            match arrival {
                Some(_) => path,
                None => path.with_window(0.0, r.length),
            }
        })
        .collect();
    Ok(kept
        .into_iter()
        .zip(traces)
        .enumerate()
        .map(|(id, (r, trace))| SaddleConnection {
            id,
            start_class: r.start_class,
            end_class: r.end_class,
            start_pos: r.start_pos,
            end_pos: r.end_pos,
            start_corner: r.start_corner,
            holonomy: r.holonomy,
            length: r.length,
            reverse: reverse[id],
            trace,
        })
        .collect())
}

/// Length of the shortest saddle connection, by doubling the search radius.
pub fn shortest_saddle_connection(s: &Surface) -> f64 {
    let mut l = s
        .polygons
        .iter()
        .flat_map(|p| (0..p.len()).map(move |i| (p.edge(i).1 - p.edge(i).0).norm()))
        .fold(f64::INFINITY, f64::min);
    loop {
        let found = enumerate_saddle_connections(s, l, DEFAULT_CHART_BUDGET)
            .expect("saddle connection search within budget");
        if let Some(sc) = found.first() {
            return sc.length;
        }
        l *= 2.0;
    }
}

/// Saddle connections with admissible joints computed on demand.
#[derive(Debug, Clone)]
pub struct ConcatGraph {
    pub lmax: f64,
    pub nodes: Vec<SaddleConnection>,
    /// Per cone class, ids of connections starting there, in length order.
    by_start: Vec<Vec<usize>>,
    totals: Vec<f64>,
}

impl ConcatGraph {
    pub fn new(s: &Surface, nodes: Vec<SaddleConnection>, lmax: f64) -> Self {
        let mut by_start = vec![Vec::new(); s.classes.len()];
        for sc in &nodes {
            by_start[sc.start_class].push(sc.id);
        }
        ConcatGraph {
            lmax,
            nodes,
            by_start,
            totals: s.classes.iter().map(|c| c.total_angle).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn joint(&self, a: usize, b: usize) -> Option<Joint> {
        let (x, y) = (&self.nodes[a], &self.nodes[b]);
        if x.end_class != y.start_class {
            return None;
        }
        joint_angles(x.end_pos, y.start_pos, self.totals[x.end_class])
    }

    /// Admissible successors of `a` with length at most `max_len`, in id order.
    pub fn successors(&self, a: usize, max_len: f64) -> impl Iterator<Item = (usize, Joint)> + '_ {
        let x = &self.nodes[a];
        let total = self.totals[x.end_class];
        let u = x.end_pos;
        self.by_start[x.end_class]
            .iter()
            .take_while(move |&&b| self.nodes[b].length <= max_len + TOL_GEOM)
            .filter_map(move |&b| joint_angles(u, self.nodes[b].start_pos, total).map(|j| (b, j)))
    }

    /// All admissible edges.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Joint)> + '_ {
        (0..self.nodes.len())
            .flat_map(move |a| self.successors(a, f64::INFINITY).map(move |(b, j)| (a, b, j)))
    }

    /// Joints along a word read cyclically (`closed`) or as a path.
    pub fn word_joints(&self, word: &[usize], closed: bool) -> Option<Vec<Joint>> {
        let n = word.len();
        let m = if closed { n } else { n.saturating_sub(1) };
        (0..m).map(|i| self.joint(word[i], word[(i + 1) % n])).collect()
    }

    pub fn word_length(&self, word: &[usize]) -> f64 {
        word.iter().map(|&i| self.nodes[i].length).sum()
    }

    /// Shortest admissible path starting with `from` and ending with `to`.
    pub fn connect(&self, from: usize, to: usize, max_len: f64) -> Result<Vec<usize>, SaddleError> {
        let start = self.nodes[from].length;
        if start > max_len + TOL_GEOM {
            return Err(SaddleError::NotFound(max_len));
        }
        if from == to {
            return Ok(vec![from]);
        }
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = start;
        heap.push(Item(start, from));
        while let Some(Item(d, a)) = heap.pop() {
            if d > dist[a] {
                continue;
            }
            if a == to {
                let mut path = vec![to];
                let mut c = to;
                while c != from {
                    c = prev[c];
                    path.push(c);
                }
                path.reverse();
                return Ok(path);
            }
            for (b, _) in self.successors(a, max_len - d) {
                let nd = d + self.nodes[b].length;
                if nd < dist[b] {
                    dist[b] = nd;
                    prev[b] = a;
                    heap.push(Item(nd, b));
                }
            }
        }
        Err(SaddleError::NotFound(max_len))
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Enumerate saddle connections up to `lmax` and wrap them in a graph.
pub fn build_concat_graph(s: &Surface, lmax: f64, budget: usize) -> Result<ConcatGraph, SaddleError> {
    let nodes = enumerate_saddle_connections(s, lmax, budget)?;
    Ok(ConcatGraph::new(s, nodes, lmax))
}
