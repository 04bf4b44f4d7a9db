//! Open subsets of `R^d` built from geometric primitives.
//!
//! A [`Domain`] is a tree of primitives combined by union, intersection and
//! difference. Besides membership it supports `interior_radius`, a positive
//! lower bound on the distance to the complement that drives sphere-stepping
//! simulation, and the ball truncations `D_p` and `D^p` used by the
//! localization constructions.
//!
//! Horn-shaped domains are axis-aligned bodies of revolution around the
//! first coordinate axis: `Horn` is `{0 < x_1 < L, |x'| < A x_1^beta}`
//! (cusp at the origin when `beta > 1`), `FiniteVolumeHorn` is
//! `{x_1 > 1, |x'| < x_1^{-gamma}}`.

use serde::Serialize;

use crate::error::{LabError, Result};

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform random unit vector.
pub fn random_unit_vector(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
    use rand_distr::StandardNormal;
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Deterministic, roughly equidistributed unit directions for `d <= 3`
/// (signs, equal angles, Fibonacci sphere).
pub fn unit_grid(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let th = 2.0 * std::f64::consts::PI * i as f64 / golden;
                    let s = (1.0 - z * z).sqrt();
                    vec![s * th.cos(), s * th.sin(), z]
                })
                .collect()
        }
        _ => panic!("unit_grid supports d in {{1,2,3}}"),
    }
}

/// Norm of the coordinates orthogonal to the first axis.
fn lateral_norm(x: &[f64]) -> f64 {
    norm(&x[1..])
}

/// Shape-tree node.
#[derive(Debug, Clone, Serialize)]
pub enum Shape {
    Ball { c: Vec<f64>, r: f64 },
    BallComplement { c: Vec<f64>, r: f64 },
    /// `{x : normal . x < offset}` with `normal` a unit vector.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `{0 < x_1 < l, |x'| < a x_1^beta}`; `l` may be infinite.
    Horn { beta: f64, a: f64, l: f64 },
    /// `{x_1 > 1, |x'| < x_1^{-gamma}}`.
    FiniteVolumeHorn { gamma: f64 },
    /// Open ball minus a single point.
    PuncturedBall { c: Vec<f64>, r: f64, puncture: Vec<f64> },
    Union(Box<Shape>, Box<Shape>),
    Intersection(Box<Shape>, Box<Shape>),
    /// Left minus the closure of right.
    Difference(Box<Shape>, Box<Shape>),
}

fn horn_width(beta: f64, a: f64, t: f64) -> f64 {
    a * t.powf(beta)
}

fn fvhorn_width(gamma: f64, t: f64) -> f64 {
    t.powf(-gamma)
}

/// Largest `rho` in `(0, hi]` with `ok(rho)`, assuming `ok` is monotone
/// (true near 0, false past the answer). Returns a conservative value on
/// the true side of the threshold.
fn bisect_radius(hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    if ok(hi) {
        return hi;
    }
    let mut lo = 0.0f64;
    let mut hi = hi;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Lower bound on the distance from the meridian point `(p, q)` (with
/// `q >= 0`) to the closed region `{(t, u) : t in [t0, t1], 0 <= u <= w(t)}`.
///
/// Grid minimization with local refinement, shrunk slightly so the result
/// never overestimates.
fn meridian_distance(p: f64, q: f64, t0: f64, t1: f64, w: impl Fn(f64) -> f64) -> f64 {
    let t1 = t1.min(p.abs() + q + t0.abs() + 4.0);
    let f = |t: f64| {
        let du = (q - w(t)).max(0.0);
        ((p - t) * (p - t) + du * du).sqrt()
    };
    let mut lo = t0;
    let mut hi = t1;
    let mut best = f64::INFINITY;
    let mut best_t = t0;
    for _ in 0..4 {
        let n = 512;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let span = (hi - lo) / n as f64 * 4.0;
        lo = (best_t - span).max(t0);
        hi = (best_t + span).min(t1);
    }
    best * 0.999
}

impl Shape {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Ball { c, r } => dist(x, c) < *r,
            Shape::BallComplement { c, r } => dist(x, c) > *r,
            Shape::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() < *offset
            }
            Shape::Horn { beta, a, l } => {
                x[0] > 0.0 && x[0] < *l && lateral_norm(x) < horn_width(*beta, *a, x[0])
            }
            Shape::FiniteVolumeHorn { gamma } => {
                x[0] > 1.0 && lateral_norm(x) < fvhorn_width(*gamma, x[0])
            }
            Shape::PuncturedBall { c, r, puncture } => {
                dist(x, c) < *r && dist(x, puncture) > 0.0
            }
            Shape::Union(a, b) => a.contains(x) || b.contains(x),
            Shape::Intersection(a, b) => a.contains(x) && b.contains(x),
            Shape::Difference(a, b) => a.contains(x) && !b.contains_closed(x),
        }
    }

    /// Membership in (a superset of) the closure; conservative where the
    /// exact closure of a boolean combination is not representable.
    fn contains_closed(&self, x: &[f64]) -> bool {
        match self {
            Shape::Ball { c, r } => dist(x, c) <= *r,
            Shape::BallComplement { c, r } => dist(x, c) >= *r,
            Shape::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() <= *offset
            }
            Shape::Horn { beta, a, l } => {
                x[0] >= 0.0 && x[0] <= *l && lateral_norm(x) <= horn_width(*beta, *a, x[0].max(0.0))
            }
            Shape::FiniteVolumeHorn { gamma } => {
                x[0] >= 1.0 && lateral_norm(x) <= fvhorn_width(*gamma, x[0].max(1.0))
            }
            Shape::PuncturedBall { c, r, .. } => dist(x, c) <= *r,
            Shape::Union(a, b) => a.contains_closed(x) || b.contains_closed(x),
            Shape::Intersection(a, b) => a.contains_closed(x) && b.contains_closed(x),
            Shape::Difference(a, b) => a.contains_closed(x) && !b.contains(x),
        }
    }

    /// Radius of a ball around `x` guaranteed inside the shape; 0 when the
    /// point is not strictly inside. A lower bound for composite shapes.
    fn interior_radius(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match self {
            Shape::Ball { c, r } => r - dist(x, c),
            Shape::BallComplement { c, r } => dist(x, c) - r,
            Shape::HalfSpace { normal, offset } => {
                offset - normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>()
            }
            Shape::Horn { beta, a, l } => {
                let (x1, s) = (x[0], lateral_norm(x));
                // Inside B(x, rho): y_1 >= x_1 - rho and |y'| <= s + rho;
                // the width is increasing, so the tightest section is at
                // x_1 - rho.
                let mut hi = x1;
                if l.is_finite() {
                    hi = hi.min(l - x1);
                }
                bisect_radius(hi, |rho| {
                    s + rho <= horn_width(*beta, *a, x1 - rho) && rho < x1
                })
            }
            Shape::FiniteVolumeHorn { gamma } => {
                let (x1, s) = (x[0], lateral_norm(x));
                // Width is decreasing: tightest section at x_1 + rho.
                bisect_radius(x1 - 1.0, |rho| {
                    s + rho <= fvhorn_width(*gamma, x1 + rho)
                })
            }
            Shape::PuncturedBall { c, r, puncture } => {
                (r - dist(x, c)).min(dist(x, puncture))
            }
            Shape::Union(a, b) => a.interior_radius(x).max(b.interior_radius(x)),
            Shape::Intersection(a, b) => a.interior_radius(x).min(b.interior_radius(x)),
            Shape::Difference(a, b) => a.interior_radius(x).min(b.exterior_clearance(x)),
        }
    }

    /// Lower bound on the distance from `x` to the shape's closure;
    /// 0 when `x` is in the closure.
    fn exterior_clearance(&self, x: &[f64]) -> f64 {
        if self.contains_closed(x) {
            return 0.0;
        }
        match self {
            Shape::Ball { c, r } => dist(x, c) - r,
            Shape::BallComplement { c, r } => r - dist(x, c),
            Shape::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() - offset
            }
            Shape::Horn { beta, a, l } => {
                meridian_distance(x[0], lateral_norm(x), 0.0, *l, |t| {
                    horn_width(*beta, *a, t)
                })
            }
            Shape::FiniteVolumeHorn { gamma } => {
                meridian_distance(x[0], lateral_norm(x), 1.0, f64::INFINITY, |t| {
                    fvhorn_width(*gamma, t)
                })
            }
            Shape::PuncturedBall { c, r, .. } => dist(x, c) - r,
            Shape::Union(a, b) => a.exterior_clearance(x).min(b.exterior_clearance(x)),
            // The intersection is contained in each operand.
            Shape::Intersection(a, b) => a.exterior_clearance(x).max(b.exterior_clearance(x)),
            // The difference is contained in the left operand.
            Shape::Difference(a, _) => a.exterior_clearance(x),
        }
    }

    fn bounded(&self) -> bool {
        match self {
            Shape::Ball { .. } | Shape::PuncturedBall { .. } => true,
            Shape::BallComplement { .. }
            | Shape::HalfSpace { .. }
            | Shape::FiniteVolumeHorn { .. } => false,
            Shape::Horn { l, .. } => l.is_finite(),
            Shape::Union(a, b) => a.bounded() && b.bounded(),
            Shape::Intersection(a, b) => a.bounded() || b.bounded(),
            Shape::Difference(a, _) => a.bounded(),
        }
    }

    fn check_dims(&self, d: usize) -> Result<()> {
        let want = |v: &[f64]| -> Result<()> {
            if v.len() == d {
                Ok(())
            } else {
                Err(LabError::Geometry(format!(
                    "shape vector has dimension {}, domain has {d}",
                    v.len()
                )))
            }
        };
        match self {
            Shape::Ball { c, .. } | Shape::BallComplement { c, .. } => want(c),
            Shape::HalfSpace { normal, .. } => want(normal),
            Shape::Horn { .. } | Shape::FiniteVolumeHorn { .. } => {
                if d >= 2 {
                    Ok(())
                } else {
                    Err(LabError::Geometry("horns need d >= 2".into()))
                }
            }
            Shape::PuncturedBall { c, puncture, .. } => {
                want(c)?;
                want(puncture)
            }
            Shape::Union(a, b) | Shape::Intersection(a, b) | Shape::Difference(a, b) => {
                a.check_dims(d)?;
                b.check_dims(d)
            }
        }
    }
}

/// An open subset of `R^d`.
#[derive(Debug, Clone, Serialize)]
pub struct Domain {
    d: usize,
    shape: Shape,
    bounded: bool,
}

impl Domain {
    pub fn new(d: usize, shape: Shape) -> Result<Self> {
        if d == 0 {
            return Err(LabError::Parameter("dimension must be >= 1".into()));
        }
        shape.check_dims(d)?;
        let bounded = shape.bounded();
        Ok(Self { d, shape, bounded })
    }

    pub fn ball(d: usize, c: Vec<f64>, r: f64) -> Result<Self> {
        if r <= 0.0 {
            return Err(LabError::Parameter("ball radius must be positive".into()));
        }
        Self::new(d, Shape::Ball { c, r })
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::ball(d, vec![0.0; d], 1.0).unwrap()
    }

    pub fn ball_complement(d: usize, c: Vec<f64>, r: f64) -> Result<Self> {
        if r <= 0.0 {
            return Err(LabError::Parameter("ball radius must be positive".into()));
        }
        Self::new(d, Shape::BallComplement { c, r })
    }

    pub fn half_space(d: usize, mut normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm(&normal);
        if n == 0.0 {
            return Err(LabError::Parameter("half-space normal must be nonzero".into()));
        }
        for v in &mut normal {
            *v /= n;
        }
        Self::new(d, Shape::HalfSpace { normal, offset: offset / n })
    }

    pub fn horn(d: usize, beta: f64, a: f64, l: f64) -> Result<Self> {
        if beta <= 0.0 || a <= 0.0 || l <= 0.0 {
            return Err(LabError::Parameter(
                "horn needs beta > 0, A > 0, L > 0".into(),
            ));
        }
        Self::new(d, Shape::Horn { beta, a, l })
    }

    pub fn finite_volume_horn(d: usize, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(LabError::Parameter("fvhorn needs gamma > 0".into()));
        }
        Self::new(d, Shape::FiniteVolumeHorn { gamma })
    }

    pub fn punctured_ball(d: usize, c: Vec<f64>, r: f64, puncture: Vec<f64>) -> Result<Self> {
        if r <= 0.0 {
            return Err(LabError::Parameter("ball radius must be positive".into()));
        }
        Self::new(d, Shape::PuncturedBall { c, r, puncture })
    }

    pub fn union(a: Domain, b: Domain) -> Result<Self> {
        Self::combine(a, b, Shape::Union)
    }

    pub fn intersection(a: Domain, b: Domain) -> Result<Self> {
        Self::combine(a, b, Shape::Intersection)
    }

    /// `a` minus the closure of `b`.
    pub fn difference(a: Domain, b: Domain) -> Result<Self> {
        Self::combine(a, b, Shape::Difference)
    }

    fn combine(
        a: Domain,
        b: Domain,
        node: fn(Box<Shape>, Box<Shape>) -> Shape,
    ) -> Result<Self> {
        if a.d != b.d {
            return Err(LabError::Geometry(format!(
                "dimension mismatch: {} vs {}",
                a.d, b.d
            )));
        }
        Self::new(a.d, node(Box::new(a.shape), Box::new(b.shape)))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bounded(&self) -> bool {
        self.bounded
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(LabError::Parameter(format!(
                "point has dimension {}, domain has {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_point(x)?;
        Ok(self.shape.contains(x))
    }

    /// Membership in (a conservative superset of) the closure.
    pub fn contains_closed(&self, x: &[f64]) -> Result<bool> {
        self.check_point(x)?;
        Ok(self.shape.contains_closed(x))
    }

    /// Radius of a ball centered at `x` guaranteed to lie inside the
    /// domain. Exact for balls and half-spaces, a positive lower bound on
    /// the distance to the boundary otherwise.
    pub fn interior_radius(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if !self.shape.contains(x) {
            return Err(LabError::Geometry("point not in domain".into()));
        }
        let rho = self.shape.interior_radius(x);
        if rho <= 0.0 {
            return Err(LabError::Geometry(
                "degenerate interior radius at an interior point".into(),
            ));
        }
        Ok(rho)
    }

    /// Lower bound on the distance from `x` to the domain's closure.
    pub fn exterior_clearance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.shape.exterior_clearance(x))
    }

    /// `D_p = D` intersected with the open ball `B(z0, p)`.
    pub fn truncate_inside(&self, z0: &[f64], p: f64) -> Result<Domain> {
        self.check_point(z0)?;
        if p <= 0.0 {
            return Err(LabError::Parameter("truncation radius must be positive".into()));
        }
        Domain::new(
            self.d,
            Shape::Intersection(
                Box::new(self.shape.clone()),
                Box::new(Shape::Ball { c: z0.to_vec(), r: p }),
            ),
        )
    }

    /// `D^p = D` minus the closed ball `B-bar(z0, p)`.
    pub fn truncate_outside(&self, z0: &[f64], p: f64) -> Result<Domain> {
        self.check_point(z0)?;
        if p <= 0.0 {
            return Err(LabError::Parameter("truncation radius must be positive".into()));
        }
        Domain::new(
            self.d,
            Shape::Intersection(
                Box::new(self.shape.clone()),
                Box::new(Shape::BallComplement { c: z0.to_vec(), r: p }),
            ),
        )
    }

    /// Parses the CLI text form, e.g. `ball(0;1)`, `horn(beta=2,A=1,L=1)`,
    /// `fvhorn(gamma=2)`, `diff(ball(0;1),ball(0;0.5))`, `union(a,b)`,
    /// `inter(a,b)`, `ballcomp(0;1)`, `halfspace(1,0;2)`,
    /// `punctured(0;1;0)`.
    pub fn parse(d: usize, text: &str) -> Result<Domain> {
        let text = text.trim();
        let bad = |msg: &str| LabError::Parameter(format!("domain {text:?}: {msg}"));
        let (head, body) = text
            .split_once('(')
            .ok_or_else(|| bad("expected name(...)"))?;
        let body = body
            .strip_suffix(')')
            .ok_or_else(|| bad("missing closing parenthesis"))?;
        let point = |s: &str| -> Result<Vec<f64>> {
            let s = s.trim();
            if s == "0" {
                return Ok(vec![0.0; d]);
            }
            let v: Vec<f64> = s
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad coordinate list"))?;
            if v.len() != d {
                return Err(bad("coordinate count does not match dimension"));
            }
            Ok(v)
        };
        let scalar = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| bad("bad number"))
        };
        match head.trim() {
            "ball" | "ballcomp" | "punctured" | "halfspace" => {
                let fields: Vec<&str> = body.split(';').collect();
                match (head.trim(), fields.as_slice()) {
                    ("ball", [c, r]) => Domain::ball(d, point(c)?, scalar(r)?),
                    ("ballcomp", [c, r]) => Domain::ball_complement(d, point(c)?, scalar(r)?),
                    ("punctured", [c, r, p]) => {
                        Domain::punctured_ball(d, point(c)?, scalar(r)?, point(p)?)
                    }
                    ("halfspace", [n, off]) => Domain::half_space(d, point(n)?, scalar(off)?),
                    _ => Err(bad("wrong number of ';'-separated fields")),
                }
            }
            "horn" | "fvhorn" => {
                let mut beta = None;
                let mut a = None;
                let mut l = None;
                let mut gamma = None;
                for kv in body.split(',') {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    let v = if v.trim() == "inf" {
                        f64::INFINITY
                    } else {
                        scalar(v)?
                    };
                    match k.trim() {
                        "beta" => beta = Some(v),
                        "A" => a = Some(v),
                        "L" => l = Some(v),
                        "gamma" => gamma = Some(v),
                        other => return Err(bad(&format!("unknown key {other:?}"))),
                    }
                }
                if head.trim() == "horn" {
                    match (beta, a, l) {
                        (Some(beta), Some(a), Some(l)) => Domain::horn(d, beta, a, l),
                        _ => Err(bad("horn needs beta, A, L")),
                    }
                } else {
                    match gamma {
                        Some(g) => Domain::finite_volume_horn(d, g),
                        None => Err(bad("fvhorn needs gamma")),
                    }
                }
            }
            op @ ("diff" | "union" | "inter") => {
                let (first, second) = split_top_level(body).ok_or_else(|| {
                    bad("expected two comma-separated subdomains")
                })?;
                let a = Domain::parse(d, first)?;
                let b = Domain::parse(d, second)?;
                match op {
                    "diff" => Domain::difference(a, b),
                    "union" => Domain::union(a, b),
                    _ => Domain::intersection(a, b),
                }
            }
            other => Err(bad(&format!("unknown shape {other:?}"))),
        }
    }
}

/// Splits `a,b` at the single top-level comma, respecting parentheses.
fn split_top_level(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Some((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream;

    fn rand_unit_dir(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let n = norm(&v);
            if n > 1e-3 && n <= 1.0 {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }

    /// 64 probes at distance rho * (1 - 1e-9) must stay inside.
    fn assert_radius_safe(dom: &Domain, x: &[f64]) {
        let rho = dom.interior_radius(x).unwrap();
        assert!(rho > 0.0);
        let mut rng = stream(11, 0);
        for _ in 0..64 {
            let dir = rand_unit_dir(&mut rng, dom.dim());
            let y: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(a, b)| a + b * rho * (1.0 - 1e-9))
                .collect();
            assert!(dom.contains(&y).unwrap(), "escaped at rho={rho}, y={y:?}");
        }
    }

    #[test]
    fn membership_basics() {
        let ball = Domain::unit_ball(3);
        assert!(ball.contains(&[0.0, 0.0, 0.0]).unwrap());
        assert!(!ball.contains(&[1.0, 0.0, 0.0]).unwrap());

        let annulus = Domain::difference(
            Domain::unit_ball(2),
            Domain::ball(2, vec![0.0, 0.0], 0.5).unwrap(),
        )
        .unwrap();
        assert!(!annulus.contains(&[0.0, 0.0]).unwrap());
        assert!(!annulus.contains(&[0.5, 0.0]).unwrap());
        assert!(annulus.contains(&[0.7, 0.0]).unwrap());

        let fv = Domain::finite_volume_horn(2, 2.0).unwrap();
        assert!(fv.contains(&[2.0, 0.1]).unwrap());
        assert!(!fv.contains(&[2.0, 0.25]).unwrap());
        assert!(!fv.contains(&[0.5, 0.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ball = Domain::unit_ball(3);
        assert!(ball.contains(&[0.0, 0.0]).is_err());
        assert!(Domain::union(Domain::unit_ball(2), Domain::unit_ball(3)).is_err());
    }

    #[test]
    fn interior_radius_exact_cases() {
        let ball = Domain::unit_ball(2);
        assert!((ball.interior_radius(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((ball.interior_radius(&[0.3, 0.0]).unwrap() - 0.7).abs() < 1e-15);

        let hs = Domain::half_space(2, vec![2.0, 0.0], 1.0).unwrap();
        assert!((hs.interior_radius(&[0.2, 5.0]).unwrap() - 0.3).abs() < 1e-12);

        assert!(ball.interior_radius(&[2.0, 0.0]).is_err());
    }

    #[test]
    fn horn_radius_never_overestimates() {
        let horn = Domain::horn(2, 2.0, 1.0, 1.0).unwrap();
        let x = [0.5, 0.0];
        let rho = horn.interior_radius(&x).unwrap();
        // The exact distance to the lateral boundary is at most the
        // vertical clearance A x1^2 = 0.25; the axial clearances are 0.5.
        // Conservative bound solves rho = (x1 - rho)^2: rho = 1 - sqrt(3)/2.
        assert!(rho <= 0.25 + 1e-12, "rho = {rho}");
        assert!((rho - (1.0 - 0.75f64.sqrt())).abs() < 1e-9, "rho = {rho}");
        // Probe 1e4 boundary directions.
        let mut rng = stream(5, 0);
        for _ in 0..10_000 {
            let dir = rand_unit_dir(&mut rng, 2);
            let y = [x[0] + dir[0] * rho * (1.0 - 1e-9), x[1] + dir[1] * rho * (1.0 - 1e-9)];
            assert!(horn.contains(&y).unwrap());
        }
    }

    #[test]
    fn radius_safe_on_assorted_domains() {
        let cases: Vec<(Domain, Vec<f64>)> = vec![
            (Domain::horn(3, 3.0, 1.0, 1.0).unwrap(), vec![0.2, 0.001, 0.0]),
            (Domain::finite_volume_horn(2, 2.0).unwrap(), vec![1.5, 0.1]),
            (Domain::ball_complement(2, vec![0.0, 0.0], 1.0).unwrap(), vec![3.0, 0.0]),
            (
                Domain::punctured_ball(2, vec![0.0, 0.0], 1.0, vec![0.0, 0.0]).unwrap(),
                vec![0.1, 0.0],
            ),
            (
                Domain::parse(2, "diff(ball(0;1),ball(0.9,0;0.5))").unwrap(),
                vec![-0.2, 0.1],
            ),
            (
                Domain::parse(2, "union(ball(0;1),ball(1.5,0;1))").unwrap(),
                vec![0.8, 0.0],
            ),
        ];
        for (dom, x) in &cases {
            assert!(dom.contains(x).unwrap(), "{dom:?} should contain {x:?}");
            assert_radius_safe(dom, x);
        }
    }

    #[test]
    fn truncations_match_set_semantics() {
        let d = Domain::ball_complement(2, vec![0.0, 0.0], 1.0).unwrap();
        let outer = d.truncate_outside(&[0.0, 0.0], 2.0).unwrap();
        assert!(!outer.contains(&[1.5, 0.0]).unwrap());
        assert!(outer.contains(&[2.5, 0.0]).unwrap());

        let ball = Domain::unit_ball(2);
        let inner = ball.truncate_inside(&[0.0, 0.0], 0.5).unwrap();
        let small = Domain::ball(2, vec![0.0, 0.0], 0.5).unwrap();
        let mut rng = stream(17, 0);
        for _ in 0..20_000 {
            let x = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
            assert_eq!(inner.contains(&x).unwrap(), small.contains(&x).unwrap());
        }
    }

    #[test]
    fn annular_slices_partition() {
        // D^{p,q} = D_q minus D_p: disjoint from D_p, union is D_q.
        let d = Domain::parse(2, "union(ball(0;1),ball(1.2,0;0.6))").unwrap();
        let z0 = [0.0, 0.0];
        let dq = d.truncate_inside(&z0, 1.6).unwrap();
        let dp = d.truncate_inside(&z0, 0.8).unwrap();
        let slice = Domain::intersection(
            dq.clone(),
            Domain::ball_complement(2, z0.to_vec(), 0.8).unwrap(),
        )
        .unwrap();
        let mut rng = stream(23, 0);
        for _ in 0..20_000 {
            let x = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
            let (in_q, in_p, in_s) = (
                dq.contains(&x).unwrap(),
                dp.contains(&x).unwrap(),
                slice.contains(&x).unwrap(),
            );
            assert!(!(in_p && in_s), "overlap at {x:?}");
            if in_q && dist(&x, &z0) != 0.8 {
                // Points exactly on the dividing sphere belong to neither.
                let on_sphere = (dist(&x, &z0) - 0.8).abs() < 1e-12;
                assert!(on_sphere || in_p || in_s, "hole at {x:?}");
            }
        }
    }

    #[test]
    fn monotone_truncation() {
        let d = Domain::parse(2, "fvhorn(gamma=2)").unwrap();
        let z0 = [0.0, 0.0];
        let dp = d.truncate_inside(&z0, 3.0).unwrap();
        let mut rng = stream(29, 0);
        for _ in 0..10_000 {
            let x = [rng.gen::<f64>() * 6.0, rng.gen::<f64>() * 0.6 - 0.3];
            if dp.contains(&x).unwrap() {
                assert!(d.contains(&x).unwrap());
                assert!(dist(&x, &z0) < 3.0);
            }
        }
    }

    #[test]
    fn fvhorn_volume_is_finite() {
        // Area of {x1 > 1, |x2| < x1^-gamma} is 2/(gamma-1) for gamma > 1.
        let gamma = 2.0;
        let d = Domain::finite_volume_horn(2, gamma).unwrap();
        let mut rng = stream(31, 0);
        // MC over the box [1, 50] x [-1, 1]; tail above 50 is 2/50 * ...
        let (t_hi, n) = (50.0, 2_000_000u64);
        let mut hits = 0u64;
        for _ in 0..n {
            let x = [1.0 + rng.gen::<f64>() * (t_hi - 1.0), rng.gen::<f64>() * 2.0 - 1.0];
            if d.contains(&x).unwrap() {
                hits += 1;
            }
        }
        let box_area = (t_hi - 1.0) * 2.0;
        let est = hits as f64 / n as f64 * box_area;
        let tail = 2.0 / (gamma - 1.0) * t_hi.powf(1.0 - gamma);
        let want = 2.0 / (gamma - 1.0) - tail;
        assert!((est - want).abs() < 0.03, "est {est}, want {want}");
    }

    #[test]
    fn exterior_clearance_bounds() {
        let ball = Domain::unit_ball(2);
        assert!((ball.exterior_clearance(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ball.exterior_clearance(&[0.5, 0.0]).unwrap(), 0.0);

        let horn = Domain::horn(2, 2.0, 1.0, 1.0).unwrap();
        // Point behind the tip: distance is about |x1|.
        let c = horn.exterior_clearance(&[-0.5, 0.0]).unwrap();
        assert!(c <= 0.5 && c > 0.45, "c = {c}");
        // Point above the lateral boundary.
        let c = horn.exterior_clearance(&[0.5, 0.5]).unwrap();
        assert!(c > 0.0 && c <= 0.25, "c = {c}");
        // Clearance never overestimates: nearest horn point at least c away.
        let fv = Domain::finite_volume_horn(2, 2.0).unwrap();
        let x = [0.0, 0.0];
        let c = fv.exterior_clearance(&x).unwrap();
        assert!(c <= 1.0 && c > 0.95, "c = {c}");
    }

    #[test]
    fn parser_round_trips() {
        for (text, inside, outside) in [
            ("ball(0;1)", vec![0.0, 0.0], vec![1.5, 0.0]),
            ("ballcomp(0;1)", vec![2.0, 0.0], vec![0.0, 0.0]),
            ("horn(beta=2,A=1,L=1)", vec![0.5, 0.1], vec![0.5, 0.3]),
            ("horn(beta=0.5,A=1,L=inf)", vec![9.0, 2.0], vec![9.0, 4.0]),
            ("fvhorn(gamma=2)", vec![2.0, 0.1], vec![2.0, 0.3]),
            ("diff(ball(0;1),ball(0;0.5))", vec![0.7, 0.0], vec![0.3, 0.0]),
            ("union(ball(0;1),ball(3,0;1))", vec![3.0, 0.0], vec![1.8, 0.0]),
            ("inter(ball(0;2),ballcomp(0;1))", vec![1.5, 0.0], vec![0.5, 0.0]),
            ("punctured(0;1;0.5,0)", vec![0.2, 0.0], vec![0.5, 0.0]),
            ("halfspace(1,0;0)", vec![-1.0, 5.0], vec![1.0, 0.0]),
        ] {
            let dom = Domain::parse(2, text).unwrap();
            assert!(dom.contains(&inside).unwrap(), "{text} should contain {inside:?}");
            assert!(!dom.contains(&outside).unwrap(), "{text} should exclude {outside:?}");
        }
        assert!(Domain::parse(2, "blob(1)").is_err());
        assert!(Domain::parse(2, "ball(0;1;2)").is_err());
        assert!(Domain::parse(3, "ball(1,0;1)").is_err());
    }

    #[test]
    fn boundedness_flags() {
        assert!(Domain::unit_ball(2).bounded());
        assert!(!Domain::ball_complement(2, vec![0.0; 2], 1.0).unwrap().bounded());
        assert!(!Domain::finite_volume_horn(2, 2.0).unwrap().bounded());
        assert!(Domain::parse(2, "horn(beta=2,A=1,L=1)").unwrap().bounded());
        assert!(!Domain::parse(2, "horn(beta=0.5,A=1,L=inf)").unwrap().bounded());
        assert!(Domain::parse(2, "inter(ballcomp(0;1),ball(0;2))").unwrap().bounded());
    }
}
