//! Oracles and generators shared by the integration tests. Nothing here
//! calls into the enumeration, visibility or λ code of the crate.
#![allow(dead_code)]

use flatflow::closed::word_path;
use flatflow::lambda::{in_g_eta, LambdaConfig};
use flatflow::saddle::ConcatGraph;
use flatflow::tracer::GeodesicPath;
use flatflow::Surface;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

pub fn surface_path(name: &str) -> String {
    format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))
}

pub fn surface(name: &str) -> Surface {
    flatflow::load_surface(surface_path(name)).unwrap()
}

pub fn potential_dir() -> String {
    format!("{}/potentials", env!("CARGO_MANIFEST_DIR"))
}

// ---------------------------------------------------------------------------
// saddle connections by beam unfolding over convex polygons

type P2 = [f64; 2];

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

fn seg_dist(a: P2, b: P2) -> f64 {
    let d = sub(b, a);
    let l2 = d[0] * d[0] + d[1] * d[1];
    let u = (-(a[0] * d[0] + a[1] * d[1]) / l2).clamp(0.0, 1.0);
    norm([a[0] + u * d[0], a[1] + u * d[1]])
}

pub struct Raw {
    polys: Vec<Vec<P2>>,
    partner: Vec<Vec<(usize, usize)>>,
    cone: Vec<Vec<bool>>,
}

impl Raw {
    pub fn from_file(path: &str) -> Self {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let mut ids = Vec::new();
        let mut polys = Vec::new();
        for p in v["polygons"].as_array().unwrap() {
            ids.push(p["id"].as_u64().unwrap() as usize);
            polys.push(
                p["vertices"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|x| [x[0].as_f64().unwrap(), x[1].as_f64().unwrap()])
                    .collect::<Vec<P2>>(),
            );
        }
        let idx = |id: u64| ids.iter().position(|&x| x == id as usize).unwrap();
        let mut partner: Vec<Vec<(usize, usize)>> = polys.iter().map(|p| vec![(usize::MAX, 0); p.len()]).collect();
        for gl in v["gluings"].as_array().unwrap() {
            let (a, b) = (&gl["from"], &gl["to"]);
            let (pa, ea) = (idx(a[0].as_u64().unwrap()), a[1].as_u64().unwrap() as usize);
            let (pb, eb) = (idx(b[0].as_u64().unwrap()), b[1].as_u64().unwrap() as usize);
            partner[pa][ea] = (pb, eb);
            partner[pb][eb] = (pa, ea);
        }
        // vertex classes by union-find over glued edge endpoints
        let offs: Vec<usize> = polys.iter().scan(0, |acc, p| {
            let o = *acc;
            *acc += p.len();
            Some(o)
        }).collect();
        let total: usize = polys.iter().map(|p| p.len()).sum();
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (pa, es) in partner.iter().enumerate() {
            for (ea, &(pb, eb)) in es.iter().enumerate() {
                let (na, nb) = (polys[pa].len(), polys[pb].len());
                for (x, y) in [(offs[pa] + ea, offs[pb] + (eb + 1) % nb), (offs[pa] + (ea + 1) % na, offs[pb] + eb)] {
                    let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                    parent[rx] = ry;
                }
            }
        }
        let mut angle = vec![0.0; total];
        for (k, p) in polys.iter().enumerate() {
            let n = p.len();
            for i in 0..n {
                let a = sub(p[(i + 1) % n], p[i]);
                let b = sub(p[(i + n - 1) % n], p[i]);
                let r = find(&mut parent, offs[k] + i);
                angle[r] += cross(a, b).atan2(a[0] * b[0] + a[1] * b[1]).rem_euclid(2.0 * PI);
            }
        }
        let cone = polys
            .iter()
            .enumerate()
            .map(|(k, p)| (0..p.len()).map(|i| angle[find(&mut parent, offs[k] + i)] > 2.0 * PI + 1e-9).collect())
            .collect();
        Raw { polys, partner, cone }
    }

    /// Lengths of all directed saddle connections of length at most `lmax`.
    pub fn saddle_lengths(&self, lmax: f64) -> Vec<f64> {
        for (k, p) in self.polys.iter().enumerate() {
            let n = p.len();
            for i in 0..n {
                assert!(cross(sub(p[(i + 1) % n], p[i]), sub(p[(i + 2) % n], p[(i + 1) % n])) > 0.0, "oracle needs convex polygons");
                assert!(self.cone[k][i], "oracle assumes every vertex is a cone point");
            }
        }
        let mut out = Vec::new();
        for (k, p) in self.polys.iter().enumerate() {
            let n = p.len();
            for v in 0..n {
                let copy: Vec<P2> = p.iter().map(|&x| sub(x, p[v])).collect();
                let chain: Vec<usize> = (1..n).map(|j| (v + j) % n).collect();
                let beam = Beam {
                    lo: copy[(v + 1) % n],
                    lo_in: true,
                    hi: copy[(v + n - 1) % n],
                    hi_in: false,
                };
                self.explore(k, &copy, &chain, beam, lmax, &mut out);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    fn explore(&self, poly: usize, copy: &[P2], chain: &[usize], beam: Beam, lmax: f64, out: &mut Vec<f64>) {
        for &w in chain {
            let x = copy[w];
            if beam.contains(x) && norm(x) <= lmax + 1e-9 {
                out.push(norm(x));
            }
        }
        for k in 0..chain.len() - 1 {
            let (a, b) = (copy[chain[k]], copy[chain[k + 1]]);
            if seg_dist(a, b) > lmax + 1e-9 {
                continue;
            }
            let (lo, lo_in) = if cross(beam.lo, a) >= -EPS * norm(a) { (a, false) } else { (beam.lo, beam.lo_in) };
            let (hi, hi_in) = if cross(b, beam.hi) >= -EPS * norm(b) { (b, false) } else { (beam.hi, beam.hi_in) };
            if cross(lo, hi) <= EPS * norm(lo) * norm(hi) {
                continue;
            }
            let sub_beam = Beam { lo, lo_in, hi, hi_in };
            let e = chain[k];
            let (q, f) = self.partner[poly][e];
            let qp = &self.polys[q];
            let m = qp.len();
            // Q[f] ↦ copy[e + 1], Q[f + 1] ↦ copy[e]
            let (s0, s1) = (qp[f], qp[(f + 1) % m]);
            let (t0, t1) = (copy[(e + 1) % copy.len()], copy[e]);
            let ang = (t1[1] - t0[1]).atan2(t1[0] - t0[0]) - (s1[1] - s0[1]).atan2(s1[0] - s0[0]);
            let (c, s) = (ang.cos(), ang.sin());
            let next: Vec<P2> = qp
                .iter()
                .map(|&x| {
                    let d = sub(x, s0);
                    [t0[0] + c * d[0] - s * d[1], t0[1] + s * d[0] + c * d[1]]
                })
                .collect();
            let next_chain: Vec<usize> = (1..=m).map(|j| (f + j) % m).collect();
            self.explore(q, &next, &next_chain, sub_beam, lmax, out);
        }
    }
}

const EPS: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Beam {
    lo: P2,
    lo_in: bool,
    hi: P2,
    hi_in: bool,
}

impl Beam {
    fn contains(&self, x: P2) -> bool {
        let r = norm(x);
        let a = cross(self.lo, x) / norm(self.lo);
        let b = cross(x, self.hi) / norm(self.hi);
        let ok_a = if self.lo_in { a >= -EPS * r } else { a > EPS * r };
        let ok_b = if self.hi_in { b >= -EPS * r } else { b > EPS * r };
        ok_a && ok_b
    }
}

// ---------------------------------------------------------------------------
// λ read literally off the turning angles of a closed geodesic

/// Times and `|θ|` of every joint of a closed word, times in `[0, period)`.
pub struct Turns {
    pub period: f64,
    pub joints: Vec<(f64, f64)>,
}

impl Turns {
    pub fn of_word(g: &ConcatGraph, word: &[usize]) -> Self {
        let n = word.len();
        let mut t = 0.0;
        let mut joints = Vec::new();
        for i in 0..n {
            t += g.nodes[word[i]].length;
            let j = g.joint(word[i], word[(i + 1) % n]).expect("admissible");
            joints.push((t, j.theta.abs()));
        }
        let period = t;
        for j in &mut joints {
            if j.0 >= period - 1e-12 {
                j.0 = 0.0;
            }
        }
        joints.sort_by(|a, b| a.0.total_cmp(&b.0));
        Turns { period, joints }
    }

    fn excess(&self) -> Vec<(f64, f64)> {
        self.joints
            .iter()
            .filter(|j| j.1 > PI + 1e-9)
            .map(|&(t, th)| (t, th - PI))
            .collect()
    }

    /// First excess turn at time `≥ t`: `(c, |θ| − π)`.
    fn next_at_or_after(&self, t: f64) -> Option<(f64, f64)> {
        let ex = self.excess();
        let k0 = (t / self.period).floor() as i64 - 1;
        (k0..k0 + 3)
            .flat_map(|k| ex.iter().map(move |&(c, b)| (c + k as f64 * self.period, b)))
            .filter(|&(c, _)| c >= t)
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Most recent excess turn at time `≤ t`.
    fn last_at_or_before(&self, t: f64) -> Option<(f64, f64)> {
        let ex = self.excess();
        let k0 = (t / self.period).floor() as i64 - 1;
        (k0..k0 + 3)
            .flat_map(|k| ex.iter().map(move |&(c, b)| (c + k as f64 * self.period, b)))
            .filter(|&(c, _)| c <= t)
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn lambda_uu(&self, t: f64, s: f64) -> f64 {
        match self.next_at_or_after(t) {
            Some((c, b)) => b / s.max(c - t),
            None => 0.0,
        }
    }

    pub fn lambda_ss(&self, t: f64, s: f64) -> f64 {
        match self.last_at_or_before(t) {
            Some((c, b)) => b / s.max(t - c),
            None => 0.0,
        }
    }

    pub fn lambda(&self, t: f64, s: f64) -> f64 {
        let back = self.last_at_or_before(t).is_some_and(|(c, _)| c > t - s);
        let fwd = self.next_at_or_after(t).is_some_and(|(c, _)| c < t + s);
        if back {
            self.lambda_ss(t, s)
        } else if fwd {
            self.lambda_uu(t, s)
        } else {
            self.lambda_ss(t, s).min(self.lambda_uu(t, s))
        }
    }

    /// An excess turn within `reach` of `t` with `|θ| − π ≥ need`.
    pub fn witness(&self, t: f64, reach: f64, need: f64) -> bool {
        let ex = self.excess();
        let k0 = ((t - reach) / self.period).floor() as i64 - 1;
        let k1 = ((t + reach) / self.period).ceil() as i64 + 1;
        (k0..=k1).any(|k| ex.iter().any(|&(c, b)| (c + k as f64 * self.period - t).abs() <= reach && b >= need))
    }
}

// ---------------------------------------------------------------------------
// δ-dense coefficients by search

/// The construction transcribed with loops instead of division, on integers.
pub fn dense_by_search(x: i128, y: i128, tau: i128, n: i128, scale: i128) -> Result<(i128, i128), i128> {
    let d = x - y;
    let mut c = 0i128;
    while c * d <= y + 2 * d {
        c += 1;
    }
    let big_t = (c * y).max(scale);
    if tau < big_t {
        return Err(big_t);
    }
    let goal = tau + n * d;
    let mut k1 = 0i128;
    while (k1 + 1) * y <= goal {
        k1 += 1;
    }
    let mut k2 = 1i128;
    while k2 * d < goal - k1 * y {
        k2 += 1;
    }
    Ok((k2, k1 - k2))
}

/// All `(m1, m2)` with `1 ≤ m1, m2 ≤ bound` satisfying the sandwich.
pub fn sandwich_solutions(x: i128, y: i128, tau: i128, n: i128, bound: i128) -> Vec<(i128, i128)> {
    let d = x - y;
    let mut out = Vec::new();
    for m1 in 1..=bound {
        for m2 in 1..=bound {
            let v = m1 * x + m2 * y;
            if tau + n * d <= v && v <= tau + (n + 1) * d {
                out.push((m1, m2));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// G(η) segments from random walks in the concatenation graph

pub struct GoodSegment {
    pub path: GeodesicPath,
    pub t: f64,
    pub word: Vec<usize>,
}

/// `count` segments of length `t` in G(η), each a window of a random
/// admissible walk of length at least `t + 10` starting at a random time in
/// `[4, 6)`.
pub fn good_segments(g: &ConcatGraph, cfg: &LambdaConfig, count: usize, t: f64, seed: u64) -> Vec<GoodSegment> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        assert!(tries < 100_000, "no G(eta) segments found");
        let mut w = vec![rng.gen_range(0..g.len())];
        while g.word_length(&w) < t + 10.0 {
            let succ: Vec<usize> = g.successors(*w.last().unwrap(), f64::INFINITY).map(|x| x.0).collect();
            w.push(succ[rng.gen_range(0..succ.len())]);
        }
        let a = rng.gen_range(4.0..6.0);
        let p = word_path(g, &w).unwrap().with_window(a, a + t);
        if let Ok(true) = in_g_eta(&p, t, cfg) {
            out.push(GoodSegment { path: p, t, word: w });
        }
    }
    out
}

/// η used for the specification experiments: `¼·θ0/(2s)`.
pub fn spec_config(s: &Surface) -> LambdaConfig {
    let base = LambdaConfig::for_surface(s);
    LambdaConfig {
        s: base.s,
        eta: 0.25 * s.theta0() / (2.0 * base.s),
    }
}
