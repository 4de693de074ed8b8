//! Isometries of a surface and the permutations they induce on saddle
//! connections. Used to enumerate closed geodesics up to symmetry.

use crate::geom::{wrap, Vec2};
use crate::saddle::ConcatGraph;
use crate::surface::Surface;
use std::collections::BTreeSet;

/// Orthogonal linear map, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear([f64; 4]);

impl Linear {
    fn apply(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        Vec2::new(m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y)
    }
}

/// Image of one polygon: target polygon, vertex map `i ↦ k ± i`, linear part.
#[derive(Debug, Clone, Copy)]
struct PolyMap {
    target: usize,
    k: usize,
    reflect: bool,
    lin: Linear,
}

impl PolyMap {
    fn vertex(&self, i: usize, n: usize) -> usize {
        if self.reflect {
            (self.k + n - i % n) % n
        } else {
            (self.k + i) % n
        }
    }
}

fn fit(pv: &[Vec2], qv: &[Vec2], k: usize, reflect: bool) -> Option<Linear> {
    let n = pv.len();
    if qv.len() != n || n < 3 {
        return None;
    }
    let sigma = |i: usize| {
        if reflect {
            (k + n - i % n) % n
        } else {
            (k + i) % n
        }
    };
    let e = pv[1] - pv[0];
    let f = qv[sigma(1)] - qv[sigma(0)];
    let scale = e.norm().max(1.0);
    if (e.norm() - f.norm()).abs() > 1e-9 * scale {
        return None;
    }
    let lin = if reflect {
        let b = f.angle() + e.angle();
        Linear([b.cos(), b.sin(), b.sin(), -b.cos()])
    } else {
        let a = f.angle() - e.angle();
        Linear([a.cos(), -a.sin(), a.sin(), a.cos()])
    };
    let ok = (0..n).all(|i| {
        let want = qv[sigma(i)] - qv[sigma(0)];
        (lin.apply(pv[i] - pv[0]) - want).norm() <= 1e-9 * scale
    });
    ok.then_some(lin)
}

/// All isometries of the surface, as per-polygon maps. The identity is first.
fn isometries(s: &Surface) -> Vec<Vec<PolyMap>> {
    let np = s.polygons.len();
    let mut out = Vec::new();
    let n0 = s.polygons[0].len();
    for q in 0..np {
        for reflect in [false, true] {
            for k in 0..n0 {
                if let Some(m) = propagate(s, q, k, reflect) {
                    out.push(m);
                }
            }
        }
    }
    out
}

fn propagate(s: &Surface, q: usize, k: usize, reflect: bool) -> Option<Vec<PolyMap>> {
    let np = s.polygons.len();
    let mut maps: Vec<Option<PolyMap>> = vec![None; np];
    let lin = fit(&s.polygons[0].vertices, &s.polygons[q].vertices, k, reflect)?;
    maps[0] = Some(PolyMap {
        target: q,
        k,
        reflect,
        lin,
    });
    let mut stack = vec![0usize];
    while let Some(p) = stack.pop() {
        let m = maps[p].unwrap();
        let poly = &s.polygons[p];
        let n = poly.len();
        let tn = s.polygons[m.target].len();
        for i in 0..n {
            let (p2, j) = poly.partner[i];
            // image of edge i in the target polygon
            let e = if reflect {
                m.vertex(i + 1, tn)
            } else {
                m.vertex(i, tn)
            };
            let (q2, j2) = s.polygons[m.target].partner[e];
            let n2 = s.polygons[p2].len();
            if s.polygons[q2].len() != n2 {
                return None;
            }
            let k2 = if reflect {
                (j2 + j + 1) % n2
            } else {
                (j2 + n2 - j) % n2
            };
            match maps[p2] {
                Some(old) => {
                    if old.target != q2 || old.k != k2 {
                        return None;
                    }
                }
                None => {
                    let lin = fit(&s.polygons[p2].vertices, &s.polygons[q2].vertices, k2, reflect)?;
                    maps[p2] = Some(PolyMap {
                        target: q2,
                        k: k2,
                        reflect,
                        lin,
                    });
                    stack.push(p2);
                }
            }
        }
    }
    let maps: Vec<PolyMap> = maps.into_iter().collect::<Option<_>>()?;
    let targets: BTreeSet<usize> = maps.iter().map(|m| m.target).collect();
    (targets.len() == np).then_some(maps)
}

/// A group of letter permutations acting on the closed geodesics of a graph.
///
/// Each element is an isometry, optionally composed with time reversal.
/// Reversing elements reverse the order of a word as well as mapping letters.
#[derive(Debug, Clone)]
pub struct Symmetry {
    pub perms: Vec<Vec<u32>>,
    pub reverses: Vec<bool>,
}

impl Symmetry {
    pub fn trivial(n: usize) -> Self {
        Symmetry {
            perms: vec![(0..n as u32).collect()],
            reverses: vec![false],
        }
    }

    pub fn order(&self) -> usize {
        self.perms.len()
    }

    /// Detect isometries and time reversal, keeping only elements that
    /// preserve lengths and every joint of `g`.
    pub fn detect(s: &Surface, g: &ConcatGraph) -> Self {
        let n = g.len();
        let succ: Vec<BTreeSet<(u32, bool)>> = (0..n)
            .map(|a| {
                g.successors(a, f64::INFINITY)
                    .map(|(b, j)| (b as u32, j.singular))
                    .collect()
            })
            .collect();
        let rev: Vec<u32> = g.nodes.iter().map(|x| x.reverse as u32).collect();
        let mut perms = Vec::new();
        let mut reverses = Vec::new();
        let mut seen = BTreeSet::new();
        for iso in isometries(s) {
            let Some(p) = letter_map(s, g, &iso) else {
                continue;
            };
            for reverse in [false, true] {
                let q: Vec<u32> = if reverse {
                    p.iter().map(|&x| rev[x as usize]).collect()
                } else {
                    p.clone()
                };
                if preserves(&succ, &q, reverse) && seen.insert((q.clone(), reverse)) {
                    perms.push(q);
                    reverses.push(reverse);
                }
            }
        }
        let sym = Symmetry { perms, reverses };
        if sym.is_group() {
            sym
        } else {
            Symmetry::trivial(n)
        }
    }

    fn is_group(&self) -> bool {
        let elems: BTreeSet<(&[u32], bool)> = self
            .perms
            .iter()
            .zip(&self.reverses)
            .map(|(p, &r)| (p.as_slice(), r))
            .collect();
        let has_identity = self
            .perms
            .iter()
            .zip(&self.reverses)
            .any(|(p, &r)| !r && p.iter().enumerate().all(|(a, &b)| a == b as usize));
        has_identity
            && self.perms.iter().zip(&self.reverses).all(|(p, &r)| {
                self.perms.iter().zip(&self.reverses).all(|(q, &t)| {
                    let c: Vec<u32> = q.iter().map(|&x| p[x as usize]).collect();
                    elems.contains(&(c.as_slice(), r ^ t))
                })
            })
    }

    /// Subgroup fixing the per-letter weights.
    pub fn fixing(&self, weights: &[f64]) -> Self {
        let keep: Vec<usize> = (0..self.perms.len())
            .filter(|&e| {
                self.perms[e].iter().enumerate().all(|(a, &b)| {
                    let (x, y) = (weights[a], weights[b as usize]);
                    (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0)
                })
            })
            .collect();
        Symmetry {
            perms: keep.iter().map(|&e| self.perms[e].clone()).collect(),
            reverses: keep.iter().map(|&e| self.reverses[e]).collect(),
        }
    }

    /// Orbits of letters, each sorted, listed by smallest member.
    pub fn orbits(&self) -> Vec<Vec<usize>> {
        let n = self.perms.first().map_or(0, |p| p.len());
        let mut orbit = vec![usize::MAX; n];
        let mut out = Vec::new();
        for a in 0..n {
            if orbit[a] != usize::MAX {
                continue;
            }
            let mut members: BTreeSet<usize> = BTreeSet::new();
            members.insert(a);
            for p in &self.perms {
                members.insert(p[a] as usize);
            }
            let id = out.len();
            for &m in &members {
                orbit[m] = id;
            }
            out.push(members.into_iter().collect());
        }
        out
    }

    /// Number of elements fixing letter `a`.
    pub fn stabilizer(&self, a: usize) -> usize {
        self.perms.iter().filter(|p| p[a] as usize == a).count()
    }
}

fn preserves(succ: &[BTreeSet<(u32, bool)>], p: &[u32], reverse: bool) -> bool {
    let n = succ.len();
    let image_ok = {
        let mut hit = vec![false; n];
        p.iter().all(|&x| !std::mem::replace(&mut hit[x as usize], true))
    };
    if !image_ok {
        return false;
    }
    (0..n).all(|a| {
        succ[a].iter().all(|&(b, sing)| {
            let (x, y) = if reverse {
                (p[b as usize], p[a])
            } else {
                (p[a], p[b as usize])
            };
            succ[x as usize].contains(&(y, sing))
        })
    })
}

fn letter_map(s: &Surface, g: &ConcatGraph, iso: &[PolyMap]) -> Option<Vec<u32>> {
    let lengths: Vec<f64> = g.nodes.iter().map(|x| x.length).collect();
    g.nodes
        .iter()
        .map(|sc| {
            let c = &s.corners[sc.start_corner];
            let m = &iso[c.polygon];
            let tv = m.vertex(c.vertex, s.polygons[m.target].len());
            let class = s.class_of(m.target, tv);
            let total = s.classes[class].total_angle;
            let pos = s.direction_position(m.target, tv, m.lin.apply(sc.holonomy));
            let tol = 1e-9 * sc.length.max(1.0);
            let lo = lengths.partition_point(|&l| l < sc.length - tol);
            let hi = lengths.partition_point(|&l| l <= sc.length + tol);
            (lo..hi)
                .find(|&b| {
                    let x = &g.nodes[b];
                    let d = wrap(x.start_pos - pos, total);
                    x.start_class == class && d.min(total - d) <= 1e-7
                })
                .map(|b| b as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::build_concat_graph;

    fn surface(name: &str) -> Surface {
        crate::load_surface(format!("{}/surfaces/{name}.surf", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    #[test]
    fn octagon_has_dihedral_symmetry_and_reversal() {
        let s = surface("octagon");
        let g = build_concat_graph(&s, 3.0, usize::MAX).unwrap();
        let sym = Symmetry::detect(&s, &g);
        // 16 isometries, each with and without reversal, minus coincidences
        let iso = isometries(&s).len();
        assert_eq!(iso, 16);
        assert!(sym.order() >= 16);
        assert!(sym.perms[0].iter().enumerate().all(|(a, &b)| a == b as usize));
    }

    #[test]
    fn orbits_partition_letters_with_equal_lengths() {
        let s = surface("lshape");
        let g = build_concat_graph(&s, 4.0, usize::MAX).unwrap();
        let sym = Symmetry::detect(&s, &g);
        let orbits = sym.orbits();
        assert_eq!(orbits.iter().map(Vec::len).sum::<usize>(), g.len());
        for o in &orbits {
            let l = g.nodes[o[0]].length;
            assert!(o.iter().all(|&x| (g.nodes[x].length - l).abs() < 1e-9));
        }
        // time reversal alone always applies
        assert!(sym.order() >= 2);
    }
}
