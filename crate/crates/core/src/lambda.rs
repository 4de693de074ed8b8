//! The λ-function along geodesics and the good/bad orbit decomposition.
//!
//! λ only depends on the times and excesses `|θ| − π` of the cone events with
//! a strictly positive excess. Between two such events it is piecewise of the
//! form `β/s`, `β/(u − c)` or `β/(c − u)`, so integrals and threshold
//! crossings are evaluated in closed form.

use crate::geom::TOL_ANGLE;
use crate::surface::{cone_constants, Surface};
use crate::tracer::GeodesicPath;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum HorizonError {
    #[error("no cone event with positive excess after t = {0} within the traced data")]
    Forward(f64),
    #[error("no cone event with positive excess before t = {0} within the traced data")]
    Backward(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("s must be positive and 2s below the shortest saddle connection {ell0} (got s = {s})")]
    BadS { s: f64, ell0: f64 },
    #[error("eta must be positive (got {0})")]
    BadEta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaConfig {
    pub s: f64,
    pub eta: f64,
}

impl LambdaConfig {
    /// `s = 0.49·ℓ0`, `η = 0.05·θ0/(2s)`.
    pub fn for_surface(surf: &Surface) -> Self {
        let c = cone_constants(surf);
        let s = 0.49 * c.ell0;
        LambdaConfig {
            s,
            eta: 0.05 * c.theta0 / (2.0 * s),
        }
    }

    pub fn checked(surf: &Surface, s: f64, eta: f64) -> Result<Self, ConfigError> {
        let ell0 = cone_constants(surf).ell0;
        if !(s > 0.0 && 2.0 * s < ell0) {
            return Err(ConfigError::BadS { s, ell0 });
        }
        if !(eta > 0.0) {
            return Err(ConfigError::BadEta(eta));
        }
        Ok(LambdaConfig { s, eta })
    }

    /// Set when η is at or above `η0/(2s)`, outside the range used for Reg(η).
    pub fn reg_warning(&self, surf: &Surface) -> Option<String> {
        let bound = surf.eta0() / (2.0 * self.s);
        (self.eta >= bound).then(|| format!("eta = {} is not below eta0/(2s) = {}", self.eta, bound))
    }
}

/// A cone event with strictly positive excess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excess {
    pub t: f64,
    pub beta: f64,
}

/// Excess events of a path, with the time range they are known on.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Sorted by time; one period for periodic profiles.
    events: Vec<Excess>,
    known: (f64, f64),
    period: Option<f64>,
}

/// One smooth piece of λ on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Const(f64),
    /// `β/(u − c)`
    Past(f64, f64),
    /// `β/(c − u)`
    Future(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Span {
    a: f64,
    b: f64,
    f: Piece,
}

impl Span {
    #[cfg(test)]
    fn value(&self, u: f64) -> f64 {
        match self.f {
            Piece::Const(v) => v,
            Piece::Past(c, beta) => beta / (u - c),
            Piece::Future(c, beta) => beta / (c - u),
        }
    }

    /// `∫_a^x λ`, for `x ∈ [a, b]`.
    fn integral_to(&self, x: f64) -> f64 {
        match self.f {
            Piece::Const(v) => v * (x - self.a),
            Piece::Past(c, beta) => beta * ((x - c) / (self.a - c)).ln(),
            Piece::Future(c, beta) => beta * ((c - self.a) / (c - x)).ln(),
        }
    }

    /// Points in `(a, b)` where λ equals `eta`.
    fn crossing(&self, eta: f64) -> Option<f64> {
        let u = match self.f {
            Piece::Const(_) => return None,
            Piece::Past(c, beta) => c + beta / eta,
            Piece::Future(c, beta) => c - beta / eta,
        };
        (u > self.a && u < self.b).then_some(u)
    }
}

impl Profile {
    pub fn of_path(p: &GeodesicPath) -> Self {
        let events = p
            .events
            .iter()
            .filter(|e| e.excess() > TOL_ANGLE)
            .map(|e| Excess {
                t: e.t,
                beta: e.excess(),
            })
            .collect();
        Profile {
            events,
            known: p.data,
            period: p.period,
        }
    }

    /// Periodic profile from one period of events starting at time 0.
    pub fn periodic(events: Vec<Excess>, period: f64) -> Self {
        let mut events: Vec<Excess> = events.into_iter().filter(|e| e.beta > TOL_ANGLE).collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Profile {
            events,
            known: (0.0, period),
            period: Some(period),
        }
    }

    /// Finite profile whose events are all the excess events on `known`.
    pub fn finite(events: Vec<Excess>, known: (f64, f64)) -> Self {
        let mut events: Vec<Excess> = events.into_iter().filter(|e| e.beta > TOL_ANGLE).collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Profile {
            events,
            known,
            period: None,
        }
    }

    pub fn events(&self) -> &[Excess] {
        &self.events
    }

    /// First excess event at time ≥ t.
    fn next_event(&self, t: f64) -> Option<Excess> {
        match self.period {
            Some(per) => {
                if self.events.is_empty() {
                    return None;
                }
                let k = ((t - self.known.0) / per).floor();
                let base = k * per;
                let i = self.events.partition_point(|e| e.t + base < t);
                Some(if i < self.events.len() {
                    Excess {
                        t: self.events[i].t + base,
                        ..self.events[i]
                    }
                } else {
                    Excess {
                        t: self.events[0].t + base + per,
                        ..self.events[0]
                    }
                })
            }
            None => {
                let i = self.events.partition_point(|e| e.t < t);
                self.events.get(i).copied()
            }
        }
    }

    /// Last excess event at time ≤ t.
    fn prev_event(&self, t: f64) -> Option<Excess> {
        match self.period {
            Some(per) => {
                if self.events.is_empty() {
                    return None;
                }
                let k = ((t - self.known.0) / per).floor();
                let base = k * per;
                let i = self.events.partition_point(|e| e.t + base <= t);
                Some(if i > 0 {
                    Excess {
                        t: self.events[i - 1].t + base,
                        ..self.events[i - 1]
                    }
                } else {
                    let e = self.events[self.events.len() - 1];
                    Excess {
                        t: e.t + base - per,
                        ..e
                    }
                })
            }
            None => {
                let i = self.events.partition_point(|e| e.t <= t);
                (i > 0).then(|| self.events[i - 1])
            }
        }
    }

    pub fn uu(&self, t: f64, s: f64) -> Result<f64, HorizonError> {
        match self.next_event(t) {
            Some(e) => Ok(e.beta / s.max(e.t - t)),
            None if self.period.is_some() => Ok(0.0),
            None => Err(HorizonError::Forward(t)),
        }
    }

    pub fn ss(&self, t: f64, s: f64) -> Result<f64, HorizonError> {
        match self.prev_event(t) {
            Some(e) => Ok(e.beta / s.max(t - e.t)),
            None if self.period.is_some() => Ok(0.0),
            None => Err(HorizonError::Backward(t)),
        }
    }

    pub fn lambda(&self, t: f64, s: f64) -> Result<f64, HorizonError> {
        if let Some(e) = self.prev_event(t) {
            if e.t > t - s {
                return Ok(e.beta / s);
            }
        }
        if let Some(e) = self.next_event(t) {
            if e.t < t + s {
                return Ok(e.beta / s);
            }
        }
        Ok(self.ss(t, s)?.min(self.uu(t, s)?))
    }

    /// Smooth pieces of λ covering `[a, b]`.
    fn spans(&self, a: f64, b: f64, s: f64) -> Result<Vec<Span>, HorizonError> {
        if b <= a {
            return Ok(Vec::new());
        }
        if self.events.is_empty() && self.period.is_some() {
            return Ok(vec![Span {
                a,
                b,
                f: Piece::Const(0.0),
            }]);
        }
        // excess events from the last one before a to the first one after b
        let mut evs = Vec::new();
        let first = self.prev_event(a);
        let mut cur = match first {
            Some(e) => e,
            None => {
                let e = self.next_event(a).ok_or(HorizonError::Forward(a))?;
                if e.t - s >= a {
                    return Err(HorizonError::Backward(a));
                }
                e
            }
        };
        evs.push(cur);
        while cur.t < b {
            match self.next_event(cur.t + 1e-12 + (cur.t.abs() * 1e-15)) {
                Some(e) if e.t > cur.t => {
                    cur = e;
                    evs.push(e);
                }
                _ => break,
            }
        }
        let mut raw = Vec::new();
        let c0 = evs[0];
        raw.push(Span {
            a: c0.t - s,
            b: c0.t + s,
            f: Piece::Const(c0.beta / s),
        });
        for w in evs.windows(2) {
            let (p, q) = (w[0], w[1]);
            let (lo, hi) = (p.t + s, q.t - s);
            if hi > lo {
                let x = ((p.beta * q.t + q.beta * p.t) / (p.beta + q.beta)).clamp(lo, hi);
                if x > lo {
                    raw.push(Span {
                        a: lo,
                        b: x,
                        f: Piece::Future(q.t, q.beta),
                    });
                }
                if hi > x {
                    raw.push(Span {
                        a: x,
                        b: hi,
                        f: Piece::Past(p.t, p.beta),
                    });
                }
            }
            raw.push(Span {
                a: q.t - s,
                b: q.t + s,
                f: Piece::Const(q.beta / s),
            });
        }
        let last = *evs.last().unwrap();
        if last.t + s < b {
            return Err(HorizonError::Forward(b));
        }
        if c0.t - s > a {
            return Err(HorizonError::Backward(a));
        }
        let out = raw
            .into_iter()
            .filter_map(|sp| {
                let (x, y) = (sp.a.max(a), sp.b.min(b));
                (y > x).then_some(Span { a: x, b: y, ..sp })
            })
            .collect();
        Ok(out)
    }

    /// `∫_a^b λ(u) du`.
    pub fn integral(&self, a: f64, b: f64, s: f64) -> Result<f64, HorizonError> {
        Ok(self
            .spans(a, b, s)?
            .iter()
            .map(|sp| sp.integral_to(sp.b))
            .sum())
    }

    /// Candidate minimisers of `F(x) = ∫_a^x λ − η(x − a)` on `[a, b]`,
    /// with the value of `F` at each, in time order.
    fn deficit_points(&self, a: f64, b: f64, cfg: &LambdaConfig) -> Result<Vec<(f64, f64)>, HorizonError> {
        let spans = self.spans(a, b, cfg.s)?;
        let mut out = vec![(a, 0.0)];
        let mut acc = 0.0;
        for sp in &spans {
            if let Some(x) = sp.crossing(cfg.eta) {
                out.push((x, acc + sp.integral_to(x) - cfg.eta * (x - a)));
            }
            acc += sp.integral_to(sp.b);
            out.push((sp.b, acc - cfg.eta * (sp.b - a)));
        }
        Ok(out)
    }

    /// Both average conditions of G(η) on `[a, b]`.
    pub fn in_g(&self, a: f64, b: f64, cfg: &LambdaConfig) -> Result<bool, HorizonError> {
        if b <= a {
            return Ok(true);
        }
        let tol = 1e-12 * (b - a).max(1.0);
        let fwd = self.deficit_points(a, b, cfg)?;
        if fwd.iter().any(|&(_, f)| f < -tol) {
            return Ok(false);
        }
        let bwd = self.reversed().deficit_points(-b, -a, cfg)?;
        Ok(bwd.iter().all(|&(_, f)| f >= -tol))
    }

    fn reversed(&self) -> Profile {
        let mut events: Vec<Excess> = self
            .events
            .iter()
            .map(|e| Excess { t: -e.t, beta: e.beta })
            .collect();
        events.reverse();
        Profile {
            events,
            known: (-self.known.1, -self.known.0),
            period: self.period,
        }
    }

    /// Largest `x ∈ [a, b]` with `F(x) < 0` (the B(η) prefix end), or `a`.
    fn prefix_end(&self, a: f64, b: f64, cfg: &LambdaConfig) -> Result<f64, HorizonError> {
        let pts = self.deficit_points(a, b, cfg)?;
        let tol = 1e-12 * (b - a).max(1.0);
        let Some(k) = pts.iter().rposition(|&(_, f)| f < -tol) else {
            return Ok(a);
        };
        if k + 1 == pts.len() {
            return Ok(b);
        }
        // F is monotone between consecutive candidate points
        let (x0, x1) = (pts[k].0, pts[k + 1].0);
        let f = |x: f64| -> f64 {
            self.integral(a, x, cfg.s).unwrap_or(0.0) - cfg.eta * (x - a)
        };
        let (mut lo, mut hi) = (x0, x1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn decompose(&self, a: f64, b: f64, cfg: &LambdaConfig) -> Result<Decomposition, HorizonError> {
        let p = self.prefix_end(a, b, cfg)?;
        if p >= b {
            return Ok(Decomposition { p: b, q: b, t: b });
        }
        let q = -self.reversed().prefix_end(-b, -a, cfg)?;
        Ok(Decomposition { p, q: q.max(p), t: b })
    }
}

/// `[start, p]` bad prefix, `[p, q]` good part, `[q, t]` bad suffix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub p: f64,
    pub q: f64,
    pub t: f64,
}

pub fn lambda_uu(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<f64, HorizonError> {
    Profile::of_path(p).uu(t, cfg.s)
}

pub fn lambda_ss(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<f64, HorizonError> {
    Profile::of_path(p).ss(t, cfg.s)
}

pub fn lambda(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<f64, HorizonError> {
    Profile::of_path(p).lambda(t, cfg.s)
}

/// Whether the orbit segment of length `t` starting at the window start is in G(η).
pub fn in_g_eta(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<bool, HorizonError> {
    let a = p.window.0;
    Profile::of_path(p).in_g(a, a + t, cfg)
}

/// λ-decomposition of the segment `[w, w + t]`, `w` the window start. Times in
/// the result are relative to `w`.
pub fn decompose(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<Decomposition, HorizonError> {
    let a = p.window.0;
    let d = Profile::of_path(p).decompose(a, a + t, cfg)?;
    Ok(Decomposition {
        p: d.p - a,
        q: d.q - a,
        t: d.t - a,
    })
}

/// `λ(t) ≥ η`.
pub fn reg_eta(p: &GeodesicPath, t: f64, cfg: &LambdaConfig) -> Result<bool, HorizonError> {
    Ok(lambda(p, t, cfg)? >= cfg.eta)
}

/// Distance-to-Con witness at `t`: a cone event within `θ0/(2η)` of `t` whose
/// excess is at least `sη`. `None` if there is none.
pub fn con_witness(prof: &Profile, t: f64, cfg: &LambdaConfig, theta0: f64) -> Option<Excess> {
    let reach = theta0 / (2.0 * cfg.eta);
    let need = cfg.s * cfg.eta;
    let mut best: Option<Excess> = None;
    let mut look = |e: Option<Excess>| {
        if let Some(e) = e {
            if (e.t - t).abs() <= reach && e.beta >= need && best.map_or(true, |b| (b.t - t).abs() > (e.t - t).abs()) {
                best = Some(e);
            }
        }
    };
    // nearest events on each side, then further ones while in reach
    let mut x = t;
    while let Some(e) = prof.next_event(x) {
        if e.t - t > reach {
            break;
        }
        look(Some(e));
        if e.beta >= need {
            break;
        }
        x = e.t + 1e-9;
    }
    let mut x = t;
    while let Some(e) = prof.prev_event(x) {
        if t - e.t > reach {
            break;
        }
        look(Some(e));
        if e.beta >= need {
            break;
        }
        x = e.t - 1e-9;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LambdaConfig {
        LambdaConfig { s: 0.4, eta: 0.5 }
    }

    fn two_events() -> Profile {
        // turns at -s and +2s, evaluated around 0
        let s = cfg().s;
        Profile::finite(
            vec![Excess { t: -s, beta: 0.3 }, Excess { t: 2.0 * s, beta: 0.9 }],
            (-10.0, 10.0),
        )
    }

    #[test]
    fn single_event_values() {
        let s = cfg().s;
        let p = Profile::finite(vec![Excess { t: 0.0, beta: 0.6 }], (-5.0, 5.0));
        assert_eq!(p.uu(0.0, s).unwrap(), 0.6 / s);
        assert_eq!(p.uu(-2.0 * s, s).unwrap(), 0.6 / (2.0 * s));
        assert_eq!(p.ss(2.0 * s, s).unwrap(), 0.6 / (2.0 * s));
        assert_eq!(p.lambda(0.0, s).unwrap(), 0.6 / s);
    }

    #[test]
    fn two_event_hand_value() {
        let s = cfg().s;
        let v = two_events().lambda(0.0, s).unwrap();
        assert!((v - (0.3 / s).min(0.9 / (2.0 * s))).abs() < 1e-15);
    }

    #[test]
    fn no_events_periodic_is_zero() {
        let p = Profile::periodic(vec![], 3.0);
        assert_eq!(p.lambda(1.0, 0.4).unwrap(), 0.0);
        assert!(!p.in_g(0.0, 2.0, &cfg()).unwrap());
        let d = p.decompose(0.0, 2.0, &cfg()).unwrap();
        assert_eq!((d.p, d.q), (2.0, 2.0));
    }

    #[test]
    fn horizon_errors() {
        let p = Profile::finite(vec![Excess { t: 0.0, beta: 0.6 }], (-1.0, 1.0));
        assert_eq!(p.uu(0.5, 0.4), Err(HorizonError::Forward(0.5)));
        assert_eq!(p.ss(-0.5, 0.4), Err(HorizonError::Backward(-0.5)));
    }

    #[test]
    fn spans_agree_with_lambda() {
        let p = Profile::periodic(
            vec![Excess { t: 0.3, beta: 0.5 }, Excess { t: 1.7, beta: 2.0 }, Excess { t: 3.1, beta: 0.1 }],
            4.0,
        );
        let s = 0.35;
        for sp in p.spans(-1.3, 6.2, s).unwrap() {
            for k in 1..10 {
                let u = sp.a + (sp.b - sp.a) * k as f64 / 10.0;
                assert!((sp.value(u) - p.lambda(u, s).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integral_matches_quadrature() {
        let p = Profile::periodic(
            vec![Excess { t: 0.3, beta: 0.5 }, Excess { t: 1.7, beta: 2.0 }, Excess { t: 3.1, beta: 0.1 }],
            4.0,
        );
        let s = 0.35;
        let (a, b) = (-1.3, 6.2);
        // midpoint rule between the jump points c ± s
        let mut cuts = vec![a, b];
        for k in -1..3 {
            for c in [0.3, 1.7, 3.1] {
                let c = c + 4.0 * k as f64;
                cuts.extend([c - s, c + s].into_iter().filter(|&x| x > a && x < b));
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut q = 0.0;
        for w in cuts.windows(2) {
            let n = 20_000;
            let h = (w[1] - w[0]) / n as f64;
            q += (0..n).map(|i| p.lambda(w[0] + (i as f64 + 0.5) * h, s).unwrap() * h).sum::<f64>();
        }
        assert!((p.integral(a, b, s).unwrap() - q).abs() < 1e-7);
    }

    #[test]
    fn decompose_ends_are_crossings() {
        let c = cfg();
        let p = Profile::finite(
            vec![
                Excess { t: -5.0, beta: 0.2 },
                Excess { t: 3.0, beta: 3.0 },
                Excess { t: 4.0, beta: 3.0 },
                Excess { t: 5.0, beta: 3.0 },
                Excess { t: 15.0, beta: 0.2 },
            ],
            (-20.0, 20.0),
        );
        let d = p.decompose(2.5, 9.0, &c).unwrap();
        let f = p.integral(2.5, d.p, c.s).unwrap() - c.eta * (d.p - 2.5);
        assert!(f.abs() < 1e-9);
        assert!(p.in_g(d.p, d.q, &c).unwrap());
        assert!(d.p <= d.q && d.q <= 9.0);
    }
}
