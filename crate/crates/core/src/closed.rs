//! Closed geodesics as cyclic words of saddle connections.

use crate::saddle::{ConcatGraph, Joint, SaddleError};
use crate::symmetry::Symmetry;
use crate::tracer::{ConeEvent, GeodesicPath, Segment, Transition};
use rayon::prelude::*;
use serde::Serialize;
use crate::geom::TOL_GEOM;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

/// Default cap on DFS steps over all roots.
pub const DEFAULT_CYCLE_BUDGET: usize = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GeodesicClass {
    Regular,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    Regular,
    Singular,
}

impl ClassFilter {
    pub fn admits(self, c: GeodesicClass) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Regular => c == GeodesicClass::Regular,
            ClassFilter::Singular => c == GeodesicClass::Singular,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "all" => Some(ClassFilter::All),
            "regular" => Some(ClassFilter::Regular),
            "singular" => Some(ClassFilter::Singular),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedGeodesic {
    /// Saddle connection ids, in the minimal rotation.
    pub word: Vec<usize>,
    /// `joints[i]` sits between `word[i]` and `word[i + 1]` (cyclically).
    pub joints: Vec<Joint>,
    pub period: f64,
    pub class: GeodesicClass,
}

/// Canonical key: the word written with dots, e.g. `3.17.42`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(pub Vec<usize>);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

impl CanonicalKey {
    pub fn parse(text: &str) -> Option<Self> {
        text.split('.')
            .map(|x| x.trim().parse().ok())
            .collect::<Option<Vec<usize>>>()
            .filter(|v| !v.is_empty())
            .map(CanonicalKey)
    }
}

/// Lexicographically minimal rotation.
pub fn min_rotation(word: &[usize]) -> Vec<usize> {
    let n = word.len();
    (0..n)
        .map(|k| {
            let mut r = word[k..].to_vec();
            r.extend_from_slice(&word[..k]);
            r
        })
        .min()
        .unwrap_or_default()
}

fn is_min_rotation(word: &[usize]) -> bool {
    let n = word.len();
    let first = word[0];
    (1..n).filter(|&k| word[k] == first).all(|k| {
        for i in 0..n {
            let a = word[(k + i) % n];
            let b = word[i];
            if a != b {
                return a > b;
            }
        }
        true
    })
}

impl ClosedGeodesic {
    pub fn key(&self) -> CanonicalKey {
        CanonicalKey(self.word.clone())
    }

    /// Build from any rotation of an admissible cyclic word.
    pub fn from_word(g: &ConcatGraph, word: &[usize]) -> Option<Self> {
        if word.is_empty() {
            return None;
        }
        let word = min_rotation(word);
        let joints = g.word_joints(&word, true)?;
        let class = if joints.iter().all(|j| j.singular) {
            GeodesicClass::Singular
        } else {
            GeodesicClass::Regular
        };
        Some(ClosedGeodesic {
            period: g.word_length(&word),
            word,
            joints,
            class,
        })
    }

    /// One period of the closed geodesic as a periodic path on `[0, period]`.
    pub fn to_path(&self, g: &ConcatGraph) -> GeodesicPath {
        let mut segments: Vec<Segment> = Vec::new();
        let mut transitions = Vec::new();
        let mut events = Vec::new();
        let mut t = 0.0;
        let n = self.word.len();
        for (i, &id) in self.word.iter().enumerate() {
            let sc = &g.nodes[id];
            let tr = &sc.trace;
            let scale = sc.length / tr.data.1.max(f64::MIN_POSITIVE);
            for (k, seg) in tr.segments.iter().enumerate() {
                segments.push(Segment {
                    t0: t + seg.t0 * scale,
                    t1: t + seg.t1 * scale,
                    ..*seg
                });
                if k + 1 < tr.segments.len() {
                    transitions.push(tr.transitions[k]);
                }
            }
            t += sc.length;
            let j = self.joints[i];
            let next = &g.nodes[self.word[(i + 1) % n]];
            events.push(ConeEvent {
                t: if i + 1 == n { 0.0 } else { t },
                class: sc.end_class,
                left: j.left,
                right: j.right,
                theta: j.theta,
                incoming: sc.end_pos,
                outgoing: next.start_pos,
            });
            transitions.push(Transition::Cone {
                event: events.len() - 1,
            });
        }
        // the closing event lives at t = 0; keep events in time order
        let last = events.pop().expect("non-empty word");
        events.insert(0, last);
        for tr in &mut transitions {
            if let Transition::Cone { event } = tr {
                *event = (*event + 1) % n;
            }
        }
        if let Some(last) = segments.last_mut() {
            last.t1 = self.period;
        }
        GeodesicPath {
            window: (0.0, self.period),
            data: (0.0, self.period),
            segments,
            transitions,
            events,
            period: Some(self.period),
        }
    }
}

/// Path along an admissible open word on `[0, ℓ(word)]`, with cone events
/// at the interior joints only.
pub fn word_path(g: &ConcatGraph, word: &[usize]) -> Option<GeodesicPath> {
    if word.is_empty() {
        return None;
    }
    let joints = g.word_joints(word, false)?;
    let mut segments: Vec<Segment> = Vec::new();
    let mut transitions = Vec::new();
    let mut events = Vec::new();
    let mut t = 0.0;
    for (i, &id) in word.iter().enumerate() {
        let sc = &g.nodes[id];
        let tr = &sc.trace;
        let scale = sc.length / tr.data.1.max(f64::MIN_POSITIVE);
        for (k, seg) in tr.segments.iter().enumerate() {
            segments.push(Segment {
                t0: t + seg.t0 * scale,
                t1: t + seg.t1 * scale,
                ..*seg
            });
            if k + 1 < tr.segments.len() {
                transitions.push(tr.transitions[k]);
            }
        }
        t += sc.length;
        if i + 1 < word.len() {
            let j = joints[i];
            events.push(ConeEvent {
                t,
                class: sc.end_class,
                left: j.left,
                right: j.right,
                theta: j.theta,
                incoming: sc.end_pos,
                outgoing: g.nodes[word[i + 1]].start_pos,
            });
            transitions.push(Transition::Cone {
                event: events.len() - 1,
            });
        }
    }
    if let Some(last) = segments.last_mut() {
        last.t1 = t;
    }
    Some(GeodesicPath {
        window: (0.0, t),
        data: (0.0, t),
        segments,
        transitions,
        events,
        period: None,
    })
}

/// A closed word handed to a visitor during enumeration.
pub struct Visit<'a> {
    pub word: &'a [usize],
    pub period: f64,
    pub class: GeodesicClass,
}

/// Successor lists packed as `id << 1 | singular`, in id order.
struct Adjacency {
    succ: Vec<Vec<u32>>,
    lengths: Vec<f64>,
}

impl Adjacency {
    fn new(g: &ConcatGraph) -> Self {
        Adjacency {
            succ: (0..g.len())
                .map(|a| {
                    g.successors(a, f64::INFINITY)
                        .map(|(b, j)| (b as u32) << 1 | u32::from(j.singular))
                        .collect()
                })
                .collect(),
            lengths: g.nodes.iter().map(|n| n.length).collect(),
        }
    }
}

/// Fold over every closed geodesic of period at most `qmax`, one visit per
/// canonical key. Roots are processed in parallel; partial results are merged
/// in root order, so the outcome does not depend on scheduling.
pub fn fold_closed<A, I, V, M>(
    g: &ConcatGraph,
    qmax: f64,
    filter: ClassFilter,
    budget: usize,
    init: I,
    visit: V,
    merge: M,
) -> Result<A, SaddleError>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &Visit) + Sync,
    M: Fn(A, A) -> A,
{
    let adj = Adjacency::new(g);
    let work = AtomicUsize::new(0);
    let roots: Vec<usize> = (0..g.len())
        .take_while(|&r| g.nodes[r].length <= qmax + TOL_GEOM)
        .collect();
    let parts: Vec<Result<A, SaddleError>> = roots
        .par_iter()
        .map(|&r| {
            let mut acc = init();
            walk_root(g, &adj, r, qmax, filter, budget, &work, &mut acc, &visit)?;
            Ok(acc)
        })
        .collect();
    let mut out = init();
    for p in parts {
        out = merge(out, p?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk_root<A, V: Fn(&mut A, &Visit)>(
    g: &ConcatGraph,
    adj: &Adjacency,
    r: usize,
    qmax: f64,
    filter: ClassFilter,
    budget: usize,
    work: &AtomicUsize,
    acc: &mut A,
    visit: &V,
) -> Result<(), SaddleError> {
    let lim = qmax + TOL_GEOM;
    let singular_only = filter == ClassFilter::Singular;
    let r32 = r as u32;
    let lr = adj.lengths[r];
    // closing joint into r: 0 none, 1 regular, 2 singular
    let close: Vec<u8> = (0..g.len())
        .map(|b| match g.joint(b, r) {
            None => 0,
            Some(j) if j.singular => 2,
            Some(_) => 1,
        })
        .collect();
    let first: Vec<usize> = adj
        .succ
        .iter()
        .map(|l| l.partition_point(|&e| e >> 1 < r32))
        .collect();
    // successors that close back into r, packed as id << 2 | sing(a→b) << 1 | sing(b→r)
    let closers: Vec<Vec<u32>> = adj
        .succ
        .iter()
        .zip(&first)
        .map(|(l, &f)| {
            l[f..]
                .iter()
                .filter_map(|&e| {
                    let b = (e >> 1) as usize;
                    match close[b] {
                        0 => None,
                        c => Some((e >> 1) << 2 | (e & 1) << 1 | u32::from(c == 2)),
                    }
                })
                .filter(|&e| !singular_only || e & 3 == 3)
                .collect()
        })
        .collect();
    let class_of = |regular: usize| {
        if regular > 0 {
            GeodesicClass::Regular
        } else {
            GeodesicClass::Singular
        }
    };
    let mut word = vec![r];
    let mut singular_flags: Vec<bool> = Vec::new();
    let mut lens = vec![lr];
    let mut cursor = vec![first[r]];
    let mut regular = 0usize;
    let mut r_count = 1usize;
    let mut steps = 0usize;
    if close[r] != 0 {
        let class = class_of(usize::from(close[r] == 1));
        if filter.admits(class) {
            visit(acc, &Visit { word: &word, period: lr, class });
        }
    }
    loop {
        let depth = word.len() - 1;
        let a = word[depth];
        if cursor[depth] == first[a] {
            // fresh node: emit every one-letter closure
            let rem = lim - lens[depth];
            for &e in &closers[a] {
                let b = (e >> 2) as usize;
                let lb = adj.lengths[b];
                if lb > rem {
                    break;
                }
                let reg = regular + usize::from(e & 2 == 0) + usize::from(e & 1 == 0);
                let class = class_of(reg);
                if !filter.admits(class) {
                    continue;
                }
                word.push(b);
                if (r_count == 1 && b != r) || is_min_rotation(&word) {
                    visit(
                        acc,
                        &Visit {
                            word: &word,
                            period: lens[depth] + lb,
                            class,
                        },
                    );
                }
                word.pop();
                steps += 1;
            }
        }
        let list = &adj.succ[a];
        // extend only by letters that leave room for one more
        let rem = lim - lens[depth] - lr;
        let mut i = cursor[depth];
        let mut next = None;
        while i < list.len() {
            let e = list[i];
            i += 1;
            let b = e >> 1;
            if adj.lengths[b as usize] > rem {
                i = list.len();
                break;
            }
            if singular_only && e & 1 == 0 {
                continue;
            }
            next = Some((b as usize, e & 1 == 1));
            break;
        }
        cursor[depth] = i;
        match next {
            None => {
                if depth == 0 {
                    break;
                }
                let b = word.pop().unwrap();
                let sing = singular_flags.pop().unwrap();
                lens.pop();
                cursor.pop();
                regular -= usize::from(!sing);
                r_count -= usize::from(b == r);
            }
            Some((b, sing)) => {
                steps += 1;
                if steps >= 1 << 16 {
                    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
                        return Err(SaddleError::WorkLimitExceeded(budget));
                    }
                    steps = 0;
                }
                word.push(b);
                singular_flags.push(sing);
                lens.push(lens[depth] + adj.lengths[b]);
                cursor.push(first[b]);
                regular += usize::from(!sing);
                r_count += usize::from(b == r);
            }
        }
    }
    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
        return Err(SaddleError::WorkLimitExceeded(budget));
    }
    Ok(())
}

/// All closed geodesics of period at most `qmax`, one per canonical key,
/// sorted by `(period, key)`.
pub fn enumerate_closed_geodesics(
    g: &ConcatGraph,
    qmax: f64,
    filter: ClassFilter,
    budget: usize,
) -> Result<Vec<ClosedGeodesic>, SaddleError> {
    let mut out = fold_closed(
        g,
        qmax,
        filter,
        budget,
        Vec::new,
        |acc: &mut Vec<ClosedGeodesic>, v| {
            acc.push(ClosedGeodesic {
                word: v.word.to_vec(),
                joints: g.word_joints(v.word, true).expect("admissible word"),
                period: v.period,
                class: v.class,
            })
        },
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    )?;
    out.sort_by(|a, b| a.period.total_cmp(&b.period).then_with(|| a.word.cmp(&b.word)));
    Ok(out)
}

/// Streaming log-sum-exp accumulator; empty sums are `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSum {
    pub fn add(&mut self, logv: f64) {
        if logv == f64::NEG_INFINITY {
            return;
        }
        if logv > self.max {
            self.sum = self.sum * (self.max - logv).exp() + 1.0;
            self.max = logv;
        } else {
            self.sum += (logv - self.max).exp();
        }
    }

    pub fn merge(&mut self, o: &LogSum) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if o.max > self.max {
            self.sum = self.sum * (self.max - o.max).exp() + o.sum;
            self.max = o.max;
        } else {
            self.sum += o.sum * (o.max - self.max).exp();
        }
    }

    /// `log Σ e^v`, or `-inf` when nothing was added.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Weighted class sums over one period window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WindowSum {
    pub regular: LogSum,
    pub singular: LogSum,
    pub regular_count: u64,
    pub singular_count: u64,
}

impl WindowSum {
    fn merge(&mut self, o: &WindowSum) {
        self.regular.merge(&o.regular);
        self.singular.merge(&o.singular);
        self.regular_count += o.regular_count;
        self.singular_count += o.singular_count;
    }
}

/// Letters relabelled so that symmetry orbits are contiguous blocks in
/// length order.
struct Orbital {
    adj: Adjacency,
    old_of: Vec<usize>,
    /// Block `[start, end)` of each relabelled letter's orbit.
    span: Vec<(usize, usize)>,
}

impl Orbital {
    fn new(g: &ConcatGraph, sym: &Symmetry) -> Self {
        let n = g.len();
        let mut new_of = vec![0u32; n];
        let mut old_of = Vec::with_capacity(n);
        let mut span = vec![(0usize, 0usize); n];
        for o in sym.orbits() {
            let st = old_of.len();
            for &x in &o {
                new_of[x] = old_of.len() as u32;
                old_of.push(x);
            }
            for k in st..old_of.len() {
                span[k] = (st, old_of.len());
            }
        }
        let adj = Adjacency {
            succ: (0..n)
                .map(|k| {
                    let mut l: Vec<u32> = g
                        .successors(old_of[k], f64::INFINITY)
                        .map(|(b, j)| new_of[b] << 1 | u32::from(j.singular))
                        .collect();
                    l.sort_unstable();
                    l
                })
                .collect(),
            lengths: (0..n).map(|k| g.nodes[old_of[span[k].0]].length).collect(),
        };
        Orbital { adj, old_of, span }
    }

    fn roots(&self, qmax: f64) -> Vec<usize> {
        (0..self.old_of.len())
            .filter(|&k| self.span[k].0 == k && self.adj.lengths[k] <= qmax + TOL_GEOM)
            .collect()
    }

    /// Successor-list prefix ending at the root orbit, and the joint type of
    /// closing each letter back to `r` (0 none, 1 regular, 2 singular).
    fn root_tables(&self, r: usize, r_end: usize) -> (Vec<usize>, Vec<u8>) {
        let (r32, re32) = (r as u32, r_end as u32);
        let upto = self
            .adj
            .succ
            .iter()
            .map(|l| l.partition_point(|&e| e >> 1 < re32))
            .collect();
        let close = self
            .adj
            .succ
            .iter()
            .map(|l| {
                if l.binary_search(&(r32 << 1)).is_ok() {
                    1
                } else if l.binary_search(&(r32 << 1 | 1)).is_ok() {
                    2
                } else {
                    0
                }
            })
            .collect();
        (upto, close)
    }
}

/// A class representative handed to a visitor by [`fold_symmetric`].
pub struct SymVisit<'a> {
    /// Word rooted at the representative of its longest letter's orbit.
    pub word: &'a [usize],
    pub period: f64,
    pub class: GeodesicClass,
    /// Number of classes this representative stands for, as a fraction:
    /// summing `weight` over visits counts every class once.
    pub weight: f64,
}

/// Fold over closed geodesics of period at most `qmax`, visiting one
/// representative per symmetry orbit (and some orbits more than once, with
/// fractional weights summing to the orbit size). Properties invariant under
/// isometries and time reversal need only be checked on the visited words.
pub fn fold_symmetric<A, I, V, M>(
    g: &ConcatGraph,
    sym: &Symmetry,
    qmax: f64,
    budget: usize,
    init: I,
    visit: V,
    merge: M,
) -> Result<A, SaddleError>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &SymVisit) + Sync,
    M: Fn(A, A) -> A,
{
    let o = Orbital::new(g, sym);
    let work = AtomicUsize::new(0);
    let parts: Vec<Result<A, SaddleError>> = o
        .roots(qmax)
        .par_iter()
        .map(|&r| {
            let root = Root {
                r,
                r_end: o.span[r].1,
                mult: sym.order() / sym.stabilizer(o.old_of[r]),
            };
            let mut acc = init();
            walk_symmetric(&o, &root, qmax, budget, &work, |v| visit(&mut acc, v))?;
            Ok(acc)
        })
        .collect();
    let mut out = init();
    for p in parts {
        out = merge(out, p?);
    }
    Ok(out)
}

fn walk_symmetric(
    orb: &Orbital,
    root: &Root,
    qmax: f64,
    budget: usize,
    work: &AtomicUsize,
    mut visit: impl FnMut(&SymVisit),
) -> Result<(), SaddleError> {
    let adj = &orb.adj;
    let lim = qmax + TOL_GEOM;
    let (r, r_end) = (root.r, root.r_end);
    let (upto, close) = orb.root_tables(r, r_end);
    let mult = root.mult as f64;
    let mut word = vec![r];
    let mut old = vec![orb.old_of[r]];
    let mut singular_flags: Vec<bool> = Vec::new();
    let mut lens = vec![adj.lengths[r]];
    let mut cursor = vec![0usize];
    let mut orbit_count = vec![0u32; r_end - r];
    orbit_count[0] = 1;
    let mut m = 1usize;
    let mut regular = 0usize;
    let mut steps = 0usize;
    let class_of = |reg: bool| {
        if reg {
            GeodesicClass::Regular
        } else {
            GeodesicClass::Singular
        }
    };
    if close[r] != 0 {
        visit(&SymVisit {
            word: &old,
            period: lens[0],
            class: class_of(close[r] == 1),
            weight: mult,
        });
    }
    loop {
        let depth = word.len() - 1;
        let a = word[depth];
        let len = lens[depth];
        let list = &adj.succ[a][..upto[a]];
        if cursor[depth] == 0 {
            let r_once = orbit_count[0] == 1;
            for &e in list {
                let b = (e >> 1) as usize;
                let p = len + adj.lengths[b];
                if p > lim {
                    break;
                }
                let c = close[b];
                if c == 0 {
                    continue;
                }
                steps += 1;
                word.push(b);
                if (r_once && b != r) || is_canonical_at(&word, r) {
                    let m2 = if b >= r {
                        m + usize::from(orbit_count[b - r] == 0)
                    } else {
                        m
                    };
                    let reg = regular > 0 || e & 1 == 0 || c == 1;
                    old.push(orb.old_of[b]);
                    visit(&SymVisit {
                        word: &old,
                        period: p,
                        class: class_of(reg),
                        weight: mult / m2 as f64,
                    });
                    old.pop();
                }
                word.pop();
            }
        }
        let rem = lim - len - adj.lengths[0];
        let mut i = cursor[depth];
        let mut next = None;
        if i < list.len() {
            let e = list[i];
            i += 1;
            let b = e >> 1;
            if adj.lengths[b as usize] > rem {
                i = list.len();
            } else {
                next = Some((b as usize, e & 1 == 1));
            }
        }
        cursor[depth] = i;
        match next {
            None => {
                if depth == 0 {
                    break;
                }
                let b = word.pop().unwrap();
                old.pop();
                let sing = singular_flags.pop().unwrap();
                lens.pop();
                cursor.pop();
                regular -= usize::from(!sing);
                if b >= r {
                    orbit_count[b - r] -= 1;
                    m -= usize::from(orbit_count[b - r] == 0);
                }
            }
            Some((b, sing)) => {
                steps += 1;
                if steps >= 1 << 16 {
                    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
                        return Err(SaddleError::WorkLimitExceeded(budget));
                    }
                    steps = 0;
                }
                word.push(b);
                old.push(orb.old_of[b]);
                singular_flags.push(sing);
                lens.push(len + adj.lengths[b]);
                cursor.push(0);
                regular += usize::from(!sing);
                if b >= r {
                    m += usize::from(orbit_count[b - r] == 0);
                    orbit_count[b - r] += 1;
                }
            }
        }
    }
    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
        return Err(SaddleError::WorkLimitExceeded(budget));
    }
    Ok(())
}

/// Closing letters of one node outside the root orbit, with prefix sums
/// split by joint type.
struct CloserTable {
    ids: Vec<u32>,
    lengths: Vec<f64>,
    // prefix sums over [0, i) for closers whose two new joints are both
    // singular (s) or not (r)
    ws: Vec<f64>,
    wr: Vec<f64>,
    ns: Vec<u32>,
    nr: Vec<u32>,
    adds_regular: Vec<bool>,
}

impl CloserTable {
    fn range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let i = self.lengths.partition_point(|&l| l < lo);
        let j = self.lengths.partition_point(|&l| l <= hi);
        (i, j.max(i))
    }
}

/// Sums of `exp(Σ letter weights)` over closed geodesics whose period lies in
/// each window `[lo, hi]`, split into regular and singular classes.
///
/// Classes are grouped by the orbit of their longest letter. Only classes
/// through that orbit's representative are walked; each is weighted by the
/// number of classes it stands for. One-letter closures are
/// summed through prefix tables instead of being visited one by one.
pub fn window_sums(
    g: &ConcatGraph,
    windows: &[(f64, f64)],
    letter_weight: &[f64],
    sym: &Symmetry,
    budget: usize,
) -> Result<Vec<WindowSum>, SaddleError> {
    let qmax = windows.iter().map(|w| w.1).fold(0.0, f64::max);
    let sym = sym.fixing(letter_weight);
    let o = Orbital::new(g, &sym);
    let (old_of, span) = (&o.old_of, &o.span);
    let wt: Vec<f64> = old_of.iter().map(|&x| letter_weight[x]).collect();
    let roots = o.roots(qmax);
    let work = AtomicUsize::new(0);
    let parts: Vec<Result<Vec<WindowSum>, SaddleError>> = roots
        .par_iter()
        .map(|&r| {
            let mult = sym.order() / sym.stabilizer(old_of[r]);
            let root = Root {
                r,
                r_end: span[r].1,
                mult,
            };
            sums_root(&o, &root, windows, &wt, budget, &work)
        })
        .collect();
    let mut out = vec![WindowSum::default(); windows.len()];
    for p in parts {
        for (o, x) in out.iter_mut().zip(p?) {
            o.merge(&x);
        }
    }
    Ok(out)
}

struct Root {
    r: usize,
    r_end: usize,
    mult: usize,
}

/// Per-window accumulator; counts are scaled by `lcm(1..=orbit size)`.
#[derive(Clone, Default)]
struct Acc {
    regular: LogSum,
    singular: LogSum,
    reg_n: u128,
    sing_n: u128,
}

/// Whether no rotation of `word` starting with `r` is lexicographically
/// smaller than the word itself.
fn is_canonical_at(word: &[usize], r: usize) -> bool {
    let n = word.len();
    (1..n).filter(|&i| word[i] == r).all(|i| {
        for k in 0..n {
            let (x, y) = (word[(i + k) % n], word[k]);
            if x != y {
                return x > y;
            }
        }
        true
    })
}

fn lcm_upto(k: usize) -> u128 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=k as u128).fold(1, |l, x| l / gcd(l, x) * x)
}

fn sums_root(
    orb: &Orbital,
    root: &Root,
    windows: &[(f64, f64)],
    wt: &[f64],
    budget: usize,
    work: &AtomicUsize,
) -> Result<Vec<WindowSum>, SaddleError> {
    let adj = &orb.adj;
    let tol = TOL_GEOM;
    let lim = windows.iter().map(|w| w.1).fold(0.0, f64::max) + tol;
    let (r, r_end) = (root.r, root.r_end);
    let lr = adj.lengths[r];
    let scale = lcm_upto(r_end - r);
    // ln(|G| / |Stab|) and ln m for m distinct root-orbit letters
    let ln_mult = (root.mult as f64).ln();
    let ln_m: Vec<f64> = (0..=r_end - r).map(|m| (m.max(1) as f64).ln()).collect();
    let (upto, close) = orb.root_tables(r, r_end);
    // per node: closers below the root orbit (tables), closers inside it
    // (handled one by one, r itself included)
    let mut tables = Vec::with_capacity(adj.succ.len());
    let mut inner: Vec<Vec<(u32, bool)>> = Vec::with_capacity(adj.succ.len());
    for (l, &u) in adj.succ.iter().zip(&upto) {
        let mut t = CloserTable {
            ids: Vec::new(),
            lengths: Vec::new(),
            ws: vec![0.0],
            wr: vec![0.0],
            ns: vec![0],
            nr: vec![0],
            adds_regular: Vec::new(),
        };
        let mut inn = Vec::new();
        for &e in &l[..u] {
            let b = (e >> 1) as usize;
            let c = close[b];
            if c == 0 {
                continue;
            }
            let both_sing = e & 1 == 1 && c == 2;
            if b >= r {
                inn.push((b as u32, !both_sing));
                continue;
            }
            let w = wt[b].exp();
            let (ws, wr, ns, nr) = (
                *t.ws.last().unwrap(),
                *t.wr.last().unwrap(),
                *t.ns.last().unwrap(),
                *t.nr.last().unwrap(),
            );
            if both_sing {
                t.ws.push(ws + w);
                t.wr.push(wr);
                t.ns.push(ns + 1);
                t.nr.push(nr);
            } else {
                t.ws.push(ws);
                t.wr.push(wr + w);
                t.ns.push(ns);
                t.nr.push(nr + 1);
            }
            t.ids.push(b as u32);
            t.lengths.push(adj.lengths[b]);
            t.adds_regular.push(!both_sing);
        }
        tables.push(t);
        inner.push(inn);
    }
    let mut acc = vec![Acc::default(); windows.len()];
    let in_window = |p: f64, w: &(f64, f64)| p >= w.0 - tol && p <= w.1 + tol;
    let add_one = |acc: &mut [Acc], p: f64, regular: bool, logw: f64, m: usize| {
        for (o, w) in acc.iter_mut().zip(windows) {
            if in_window(p, w) {
                let lw = logw + ln_mult - ln_m[m];
                if regular {
                    o.regular.add(lw);
                    o.reg_n += scale / m as u128;
                } else {
                    o.singular.add(lw);
                    o.sing_n += scale / m as u128;
                }
            }
        }
    };
    if close[r] != 0 {
        add_one(&mut acc, lr, close[r] == 1, wt[r], 1);
    }
    let mut word = vec![r];
    let mut singular_flags: Vec<bool> = Vec::new();
    let mut lens = vec![lr];
    let mut logw = vec![wt[r]];
    let mut cursor = vec![0usize];
    let mut orbit_count = vec![0u32; r_end - r];
    orbit_count[0] = 1;
    let mut m = 1usize;
    let mut regular = 0usize;
    let mut steps = 0usize;
    loop {
        let depth = word.len() - 1;
        let a = word[depth];
        let len = lens[depth];
        let pw = logw[depth];
        if cursor[depth] == 0 {
            let t = &tables[a];
            let r_once = orbit_count[0] == 1;
            if r_once {
                let (lo, hi) = match (t.lengths.first(), t.lengths.last()) {
                    (Some(&lo), Some(&hi)) => (len + lo - tol, len + hi + tol),
                    _ => (f64::INFINITY, f64::NEG_INFINITY),
                };
                let base = pw + ln_mult - ln_m[m];
                let per = scale / m as u128;
                for (o, w) in acc.iter_mut().zip(windows) {
                    if w.1 < lo || w.0 > hi {
                        continue;
                    }
                    let (i, j) = t.range(w.0 - len - tol, w.1 - len + tol);
                    if i == j {
                        continue;
                    }
                    let (dr, ds) = (t.wr[j] - t.wr[i], t.ws[j] - t.ws[i]);
                    let (nr, ns) = (t.nr[j] - t.nr[i], t.ns[j] - t.ns[i]);
                    if regular > 0 {
                        o.regular.add(base + (dr + ds).ln());
                        o.reg_n += u128::from(nr + ns) * per;
                    } else {
                        if nr > 0 {
                            o.regular.add(base + dr.ln());
                            o.reg_n += u128::from(nr) * per;
                        }
                        if ns > 0 {
                            o.singular.add(base + ds.ln());
                            o.sing_n += u128::from(ns) * per;
                        }
                    }
                }
                steps += 1;
            } else {
                for (k, &b) in t.ids.iter().enumerate() {
                    let p = len + t.lengths[k];
                    if p > lim {
                        break;
                    }
                    word.push(b as usize);
                    if is_canonical_at(&word, r) {
                        let reg = regular > 0 || t.adds_regular[k];
                        add_one(&mut acc, p, reg, pw + wt[b as usize], m);
                    }
                    word.pop();
                    steps += 1;
                }
            }
            for &(b, adds_regular) in &inner[a] {
                let b = b as usize;
                let p = len + adj.lengths[b];
                if p > lim {
                    break;
                }
                word.push(b);
                if (r_once && b != r) || is_canonical_at(&word, r) {
                    let m2 = m + usize::from(orbit_count[b - r] == 0);
                    add_one(&mut acc, p, regular > 0 || adds_regular, pw + wt[b], m2);
                }
                word.pop();
            }
        }
        let list = &adj.succ[a][..upto[a]];
        // room for this letter and one closing letter
        let rem = lim - len - adj.lengths[0];
        let mut i = cursor[depth];
        let mut next = None;
        if i < list.len() {
            let e = list[i];
            i += 1;
            let b = e >> 1;
            if adj.lengths[b as usize] > rem {
                i = list.len();
            } else {
                next = Some((b as usize, e & 1 == 1));
            }
        }
        cursor[depth] = i;
        match next {
            None => {
                if depth == 0 {
                    break;
                }
                let b = word.pop().unwrap();
                let sing = singular_flags.pop().unwrap();
                lens.pop();
                logw.pop();
                cursor.pop();
                regular -= usize::from(!sing);
                if b >= r {
                    orbit_count[b - r] -= 1;
                    m -= usize::from(orbit_count[b - r] == 0);
                }
            }
            Some((b, sing)) => {
                steps += 1;
                if steps >= 1 << 16 {
                    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
                        return Err(SaddleError::WorkLimitExceeded(budget));
                    }
                    steps = 0;
                }
                word.push(b);
                singular_flags.push(sing);
                lens.push(len + adj.lengths[b]);
                logw.push(pw + wt[b]);
                cursor.push(0);
                regular += usize::from(!sing);
                if b >= r {
                    m += usize::from(orbit_count[b - r] == 0);
                    orbit_count[b - r] += 1;
                }
            }
        }
    }
    if work.fetch_add(steps, AtomicOrdering::Relaxed) + steps > budget {
        return Err(SaddleError::WorkLimitExceeded(budget));
    }
    let denom = scale;
    Ok(acc
        .into_iter()
        .map(|a| {
            let count = |x: u128| {
                let v = x * root.mult as u128;
                debug_assert_eq!(v % denom, 0);
                (v / denom) as u64
            };
            WindowSum {
                regular: a.regular,
                singular: a.singular,
                regular_count: count(a.reg_n),
                singular_count: count(a.sing_n),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::{build_concat_graph, DEFAULT_CHART_BUDGET};
    use crate::surface::{build_surface, SurfaceDescriptor};

    fn graph(l: f64) -> ConcatGraph {
        let s = build_surface(
            &SurfaceDescriptor::from_json(include_str!("../surfaces/octagon.surf")).unwrap(),
        )
        .unwrap();
        build_concat_graph(&s, l, DEFAULT_CHART_BUDGET).unwrap()
    }

    #[test]
    fn min_rotation_examples() {
        assert_eq!(min_rotation(&[3, 1, 2]), vec![1, 2, 3]);
        assert_eq!(min_rotation(&[2, 1, 2, 1]), vec![1, 2, 1, 2]);
        assert!(is_min_rotation(&[1, 2, 1, 3]));
        assert!(!is_min_rotation(&[1, 3, 1, 2]));
    }

    #[test]
    fn short_qmax_is_empty() {
        let g = graph(2.0);
        assert!(enumerate_closed_geodesics(&g, 0.5, ClassFilter::All, DEFAULT_CYCLE_BUDGET)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn doubled_word_is_its_own_class() {
        let g = graph(3.0);
        let cg = enumerate_closed_geodesics(&g, 4.0, ClassFilter::All, DEFAULT_CYCLE_BUDGET).unwrap();
        let one = cg.iter().find(|c| c.word.len() == 1).expect("closed saddle connection");
        let twice = vec![one.word[0], one.word[0]];
        let found = cg.iter().find(|c| c.word == twice).expect("doubled class");
        assert!((found.period - 2.0 * one.period).abs() < 1e-12);
        assert_ne!(found.key(), one.key());
    }

    #[test]
    fn path_has_period_and_events() {
        let g = graph(3.0);
        let cg = enumerate_closed_geodesics(&g, 3.0, ClassFilter::All, DEFAULT_CYCLE_BUDGET).unwrap();
        for c in &cg {
            let p = c.to_path(&g);
            assert_eq!(p.events.len(), c.word.len());
            assert_eq!(p.transitions.len(), p.segments.len());
            let total: f64 = p.segments.iter().map(|s| s.len()).sum();
            assert!((total - c.period).abs() < 1e-9);
        }
    }

    #[test]
    fn key_round_trip() {
        let k = CanonicalKey(vec![0, 12, 5]);
        assert_eq!(CanonicalKey::parse(&k.to_string()), Some(k));
    }

    fn surface(name: &str) -> crate::Surface {
        crate::load_surface(format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    /// Weighted counts per unit bin: plain fold, symmetric fold, window sums.
    fn three_ways(name: &str, q: f64) {
        let s = surface(name);
        let g = build_concat_graph(&s, q, DEFAULT_CHART_BUDGET).unwrap();
        let sym = Symmetry::detect(&s, &g);
        let bins = q.ceil() as usize + 1;
        let bin = |p: f64| (p - 1e-9).ceil().max(0.0) as usize;
        let plain = fold_closed(
            &g,
            q,
            ClassFilter::All,
            DEFAULT_CYCLE_BUDGET,
            || vec![(0u64, 0u64); bins],
            |acc, v| match v.class {
                GeodesicClass::Regular => acc[bin(v.period)].0 += 1,
                GeodesicClass::Singular => acc[bin(v.period)].1 += 1,
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        )
        .unwrap();
        let symmetric = fold_symmetric(
            &g,
            &sym,
            q,
            DEFAULT_CYCLE_BUDGET,
            || vec![(0.0, 0.0); bins],
            |acc, v| match v.class {
                GeodesicClass::Regular => acc[bin(v.period)].0 += v.weight,
                GeodesicClass::Singular => acc[bin(v.period)].1 += v.weight,
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        )
        .unwrap();
        let windows: Vec<(f64, f64)> = (1..bins).map(|k| (k as f64 - 1.0 + 1e-6, k as f64)).collect();
        let zero = vec![0.0; g.len()];
        let sums = window_sums(&g, &windows, &zero, &sym, DEFAULT_CYCLE_BUDGET).unwrap();
        for k in 1..bins {
            let (r, sg) = plain[k];
            assert!((symmetric[k].0 - r as f64).abs() < 1e-6, "{name} bin {k}");
            assert!((symmetric[k].1 - sg as f64).abs() < 1e-6, "{name} bin {k}");
            let w = &sums[k - 1];
            assert_eq!((w.regular_count, w.singular_count), (r, sg), "{name} bin {k}");
            if r > 0 {
                assert!((w.regular.value() - (r as f64).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_enumeration_matches_plain_octagon() {
        three_ways("octagon", 6.0);
    }

    #[test]
    fn symmetric_enumeration_matches_plain_lshape() {
        three_ways("lshape", 5.0);
    }

    #[test]
    fn log_sum_merges() {
        let mut a = LogSum::default();
        assert_eq!(a.value(), f64::NEG_INFINITY);
        a.add(1.0);
        a.add(2.0);
        let mut b = LogSum::default();
        b.add(3.0);
        a.merge(&b);
        let want = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((a.value() - want).abs() < 1e-12);
    }
}
