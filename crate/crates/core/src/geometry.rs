//! Constructive realization of concept programs on the unit canvas.
//!
//! Programs are feed-forward, so realization is a single pass over the
//! statements: free points are drawn uniformly inside the margin, locus
//! points are drawn uniformly on the referenced object, and intersection
//! points are picked uniformly among the analytic intersections. Scenes
//! that violate the legibility bounds are thrown away and redrawn.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ConceptProgram, ConstraintPair, ObjectKind, PointSpec};
use crate::rng::StimRng;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RealizedObject {
    Line { a: Vec2, b: Vec2 },
    Circle { center: Vec2, radius: f64 },
}

impl RealizedObject {
    /// Distance from `p` to this object's locus (closed segment or circle).
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            RealizedObject::Line { a, b } => point_segment_distance(p, a, b),
            RealizedObject::Circle { center, radius } => (p.dist(center) - radius).abs(),
        }
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Parameterized locus of one object: `t ∈ [0,1]` along a segment or
/// `θ ∈ [0, 2π)` around a circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Locus {
    pub object: RealizedObject,
}

impl Locus {
    pub fn at(&self, param: f64) -> Vec2 {
        match self.object {
            RealizedObject::Line { a, b } => a + (b - a) * param,
            RealizedObject::Circle { center, radius } => {
                center + Vec2::new(param.cos(), param.sin()) * radius
            }
        }
    }
}

pub fn sample_on_locus(locus: &Locus, rng: &mut StimRng) -> Vec2 {
    match locus.object {
        RealizedObject::Line { .. } => locus.at(rng.uniform()),
        RealizedObject::Circle { .. } => locus.at(rng.range(0.0, TAU)),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate intersection input: {0}")]
    Degenerate(&'static str),
    #[error("realization exhausted after {attempts} attempts")]
    RealizationExhausted { attempts: usize },
}

// Relative tolerance used to snap near-tangent configurations.
const TANGENT_EPS: f64 = 1e-12;
// Slack on segment parameters so endpoints count as on the segment.
const PARAM_EPS: f64 = 1e-12;

fn on_segment_param(t: f64) -> bool {
    (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&t)
}

/// Intersections of two realized objects, restricted to segments for
/// lines. Returns 0, 1 (tangency or a single crossing) or 2 points.
pub fn intersect(a: &RealizedObject, b: &RealizedObject) -> Result<Vec<Vec2>, GeometryError> {
    use RealizedObject::*;
    for o in [a, b] {
        match *o {
            Line { a, b } if a == b => return Err(GeometryError::Degenerate("zero-length segment")),
            Circle { radius, .. } if radius <= 0.0 => {
                return Err(GeometryError::Degenerate("zero-radius circle"))
            }
            _ => {}
        }
    }
    match (*a, *b) {
        (Line { a: p, b: q }, Line { a: r, b: s }) => segment_segment(p, q, r, s),
        (Line { a: p, b: q }, Circle { center, radius })
        | (Circle { center, radius }, Line { a: p, b: q }) => Ok(segment_circle(p, q, center, radius)),
        (Circle { center: c0, radius: r0 }, Circle { center: c1, radius: r1 }) => {
            circle_circle(c0, r0, c1, r1)
        }
    }
}

fn segment_segment(p: Vec2, q: Vec2, r: Vec2, s: Vec2) -> Result<Vec<Vec2>, GeometryError> {
    let d1 = q - p;
    let d2 = s - r;
    let denom = d1.cross(d2);
    let scale = d1.norm() * d2.norm();
    if denom.abs() <= TANGENT_EPS * scale {
        // parallel: coincident overlap is degenerate, anything else misses
        let offset = (r - p).cross(d1).abs() / d1.norm();
        if offset > TANGENT_EPS {
            return Ok(Vec::new());
        }
        let len2 = d1.dot(d1);
        let t0 = (r - p).dot(d1) / len2;
        let t1 = (s - p).dot(d1) / len2;
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        if hi < -PARAM_EPS || lo > 1.0 + PARAM_EPS {
            return Ok(Vec::new());
        }
        if (hi - 0.0).abs() <= PARAM_EPS {
            return Ok(vec![p]);
        }
        if (lo - 1.0).abs() <= PARAM_EPS {
            return Ok(vec![q]);
        }
        return Err(GeometryError::Degenerate("coincident segments"));
    }
    let t = (r - p).cross(d2) / denom;
    let u = (r - p).cross(d1) / denom;
    if on_segment_param(t) && on_segment_param(u) {
        Ok(vec![p + d1 * t])
    } else {
        Ok(Vec::new())
    }
}

fn segment_circle(p: Vec2, q: Vec2, c: Vec2, r: f64) -> Vec<Vec2> {
    // |p + t d - c|^2 = r^2, solved around the foot of the perpendicular
    let d = q - p;
    let len = d.norm();
    let u = d * (1.0 / len);
    let foot_t = (c - p).dot(u);
    let foot = p + u * foot_t;
    let h2 = r * r - foot.dist(c).powi(2);
    let mut out = Vec::new();
    if h2 < -TANGENT_EPS * r * r {
        return out;
    }
    let ts: Vec<f64> = if h2 <= TANGENT_EPS * r * r {
        vec![foot_t]
    } else {
        let h = h2.sqrt();
        vec![foot_t - h, foot_t + h]
    };
    for t in ts {
        if on_segment_param(t / len) {
            out.push(p + u * t);
        }
    }
    out
}

fn circle_circle(c0: Vec2, r0: f64, c1: Vec2, r1: f64) -> Result<Vec<Vec2>, GeometryError> {
    let d = c0.dist(c1);
    if d == 0.0 {
        if r0 == r1 {
            return Err(GeometryError::Degenerate("coincident circles"));
        }
        return Ok(Vec::new());
    }
    let scale = r0.max(r1).max(d);
    if d > r0 + r1 + TANGENT_EPS * scale || d < (r0 - r1).abs() - TANGENT_EPS * scale {
        return Ok(Vec::new());
    }
    let u = (c1 - c0) * (1.0 / d);
    let a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
    let h2 = r0 * r0 - a * a;
    let base = c0 + u * a;
    if h2 <= TANGENT_EPS * scale * scale {
        return Ok(vec![base]);
    }
    let h = h2.sqrt();
    let n = u.perp();
    Ok(vec![base + n * h, base - n * h])
}

/// Legibility bounds and retry budgets for realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Free points are drawn from `[margin, 1 - margin]²`.
    pub margin: f64,
    pub min_point_separation: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub min_segment_length: f64,
    /// Each removed constraint must be missed by at least this much.
    pub min_violation: f64,
    pub max_attempts: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            margin: 0.1,
            min_point_separation: 0.02,
            min_radius: 0.05,
            max_radius: 0.45,
            min_segment_length: 0.05,
            min_violation: 0.05,
            max_attempts: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizedScene {
    pub points: BTreeMap<String, Vec2>,
    pub objects: BTreeMap<String, RealizedObject>,
    pub program: ConceptProgram,
    pub seed: u64,
}

impl RealizedScene {
    /// Visible objects in statement order.
    pub fn visible_objects(&self) -> impl Iterator<Item = &RealizedObject> + '_ {
        self.program
            .statements
            .iter()
            .filter(|s| s.visible)
            .map(|s| &self.objects[&s.id])
    }

    /// Distance from the scene's point to the scene's object for one pair.
    pub fn pair_distance(&self, pair: &ConstraintPair) -> f64 {
        self.objects[&pair.object].distance(self.points[&pair.point])
    }
}

/// Largest point-to-locus distance over all constraint pairs of the
/// scene's own program; 0 when the program has none.
pub fn residual(scene: &RealizedScene) -> f64 {
    residual_against(scene, &scene.program)
}

/// Same as [`residual`] but measured against another program over the
/// same identifiers (used to check an oddball against its source concept).
pub fn residual_against(scene: &RealizedScene, program: &ConceptProgram) -> f64 {
    program
        .constraint_pairs()
        .iter()
        .map(|p| scene.pair_distance(p))
        .fold(0.0, f64::max)
}

/// Realize `program` with up to `cfg.max_attempts` whole-scene redraws.
pub fn realize(
    program: &ConceptProgram,
    rng: &mut StimRng,
    cfg: &GeometryConfig,
) -> Result<RealizedScene, GeometryError> {
    realize_seeded(program, rng, 0, cfg)
}

/// As [`realize`], recording `seed` in the scene for provenance.
pub fn realize_seeded(
    program: &ConceptProgram,
    rng: &mut StimRng,
    seed: u64,
    cfg: &GeometryConfig,
) -> Result<RealizedScene, GeometryError> {
    for _ in 0..cfg.max_attempts {
        if let Some((points, objects)) = try_realize(program, rng, cfg) {
            return Ok(RealizedScene {
                points,
                objects,
                program: program.clone(),
                seed,
            });
        }
    }
    Err(GeometryError::RealizationExhausted {
        attempts: cfg.max_attempts,
    })
}

type Realized = (BTreeMap<String, Vec2>, BTreeMap<String, RealizedObject>);

fn try_realize(program: &ConceptProgram, rng: &mut StimRng, cfg: &GeometryConfig) -> Option<Realized> {
    let mut points: BTreeMap<String, Vec2> = BTreeMap::new();
    let mut objects: BTreeMap<String, RealizedObject> = BTreeMap::new();
    let mut order: Vec<Vec2> = Vec::new();
    for stmt in &program.statements {
        let mut ends = [Vec2::default(); 2];
        for (slot, ps) in stmt.points().into_iter().enumerate() {
            let p = place_point(ps, &points, &objects, rng, cfg)?;
            if !ps.reuse {
                points.insert(ps.id.clone(), p);
                order.push(p);
            }
            ends[slot] = p;
        }
        let obj = match stmt.kind {
            ObjectKind::Line => {
                if ends[0].dist(ends[1]) < cfg.min_segment_length {
                    return None;
                }
                RealizedObject::Line {
                    a: ends[0],
                    b: ends[1],
                }
            }
            ObjectKind::Circle => {
                let radius = ends[0].dist(ends[1]);
                if !(cfg.min_radius..=cfg.max_radius).contains(&radius) {
                    return None;
                }
                RealizedObject::Circle {
                    center: ends[0],
                    radius,
                }
            }
        };
        objects.insert(stmt.id.clone(), obj);
    }
    let in_canvas = |p: &Vec2| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y);
    if !order.iter().all(in_canvas) {
        return None;
    }
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[i].dist(order[j]) < cfg.min_point_separation {
                return None;
            }
        }
    }
    Some((points, objects))
}

fn place_point(
    ps: &PointSpec,
    points: &BTreeMap<String, Vec2>,
    objects: &BTreeMap<String, RealizedObject>,
    rng: &mut StimRng,
    cfg: &GeometryConfig,
) -> Option<Vec2> {
    if ps.reuse {
        return points.get(&ps.id).copied();
    }
    match ps.refs.as_slice() {
        [] => {
            let x = rng.range(cfg.margin, 1.0 - cfg.margin);
            let y = rng.range(cfg.margin, 1.0 - cfg.margin);
            Some(Vec2::new(x, y))
        }
        [r] => Some(sample_on_locus(&Locus { object: objects[r] }, rng)),
        [r1, r2] => {
            let hits = intersect(&objects[r1], &objects[r2]).ok()?;
            if hits.is_empty() {
                return None;
            }
            Some(hits[rng.index(hits.len())])
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_concept;

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> RealizedObject {
        RealizedObject::Line {
            a: Vec2::new(ax, ay),
            b: Vec2::new(bx, by),
        }
    }
    fn circ(x: f64, y: f64, r: f64) -> RealizedObject {
        RealizedObject::Circle {
            center: Vec2::new(x, y),
            radius: r,
        }
    }

    #[test]
    fn axis_crossing() {
        let hits = intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(0.5, -1.0, 0.5, 1.0)).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(hits[0].dist(Vec2::new(0.5, 0.0)) < 1e-15);
    }

    #[test]
    fn tangent_circles_touch_once() {
        let hits = intersect(&circ(0.0, 0.0, 1.0), &circ(2.0, 0.0, 1.0)).unwrap();
        assert_eq!(hits, vec![Vec2::new(1.0, 0.0)]);
    }

    #[test]
    fn segment_misses_and_endpoints() {
        assert!(intersect(&seg(0.0, 0.0, 0.4, 0.0), &seg(0.5, -1.0, 0.5, 1.0))
            .unwrap()
            .is_empty());
        // touching at a shared endpoint
        let hits = intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(hits.len(), 1);
        // collinear, touching end to end
        let hits = intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(1.0, 0.0, 2.0, 0.0)).unwrap();
        assert_eq!(hits, vec![Vec2::new(1.0, 0.0)]);
        // parallel apart
        assert!(intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(0.0, 1.0, 1.0, 1.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn segment_circle_cases() {
        let hits = intersect(&seg(-2.0, 0.0, 2.0, 0.0), &circ(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(hits.len(), 2);
        // segment ends inside the circle: only one crossing counts
        let hits = intersect(&seg(0.0, 0.0, 2.0, 0.0), &circ(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(hits[0].dist(Vec2::new(1.0, 0.0)) < 1e-15);
        // tangent line
        let hits = intersect(&seg(-2.0, 1.0, 2.0, 1.0), &circ(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(intersect(&seg(-2.0, 1.5, 2.0, 1.5), &circ(0.0, 0.0, 1.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(intersect(&circ(0.0, 0.0, 1.0), &circ(0.0, 0.0, 1.0)).is_err());
        assert!(intersect(&circ(0.0, 0.0, 0.0), &circ(1.0, 0.0, 1.0)).is_err());
        assert!(intersect(&seg(0.0, 0.0, 0.0, 0.0), &circ(1.0, 0.0, 1.0)).is_err());
        assert!(intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(0.5, 0.0, 2.0, 0.0)).is_err());
        // concentric, different radii: no points, not an error
        assert!(intersect(&circ(0.0, 0.0, 1.0), &circ(0.0, 0.0, 2.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn locus_samples_lie_on_locus() {
        let mut rng = StimRng::new(4);
        let line = Locus {
            object: seg(0.0, 0.0, 1.0, 0.0),
        };
        let circle = Locus {
            object: circ(0.5, 0.5, 0.3),
        };
        for _ in 0..1000 {
            let p = sample_on_locus(&line, &mut rng);
            assert_eq!(p.y, 0.0);
            assert!((0.0..=1.0).contains(&p.x));
            let q = sample_on_locus(&circle, &mut rng);
            assert!((q.dist(Vec2::new(0.5, 0.5)) - 0.3).abs() <= 1e-12);
        }
    }

    #[test]
    fn realize_is_deterministic() {
        let p = parse_concept("l1 = line(p1(), p2())").unwrap();
        let cfg = GeometryConfig::default();
        let a = realize(&p, &mut StimRng::new(7), &cfg).unwrap();
        let b = realize(&p, &mut StimRng::new(7), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 2);
        assert_eq!(residual(&a), 0.0);
    }

    #[test]
    fn impossible_intersection_exhausts() {
        // two circles with disjoint fixed geometry can never meet: c2 sits
        // inside c1 and is centered at c1's center
        let p = parse_concept(
            "l1* = line(p1(), p2())
             c1* = circle(p1, p2)
             c2* = circle(p1, p3(l1))
             l2 = line(p4(c1, c2), p5())",
        )
        .unwrap();
        let cfg = GeometryConfig {
            max_attempts: 200,
            ..Default::default()
        };
        assert_eq!(
            realize(&p, &mut StimRng::new(1), &cfg).unwrap_err(),
            GeometryError::RealizationExhausted { attempts: 200 }
        );
    }

    #[test]
    fn displaced_point_residual() {
        let p = parse_concept("c1 = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))").unwrap();
        let cfg = GeometryConfig::default();
        let mut scene = realize(&p, &mut StimRng::new(3), &cfg).unwrap();
        assert!(residual(&scene) <= 1e-9);
        let center = match scene.objects["c1"] {
            RealizedObject::Circle { center, .. } => center,
            _ => unreachable!(),
        };
        let p3 = scene.points["p3"];
        let outward = (p3 - center).normalized();
        scene.points.insert("p3".into(), p3 + outward * 0.05);
        assert!((residual(&scene) - 0.05).abs() <= 1e-9);
    }

    #[test]
    fn accepted_scenes_respect_bounds() {
        let cfg = GeometryConfig::default();
        for concept in crate::dsl::default_library().unwrap() {
            for seed in 0..5 {
                let scene = realize(&concept, &mut StimRng::new(seed), &cfg)
                    .unwrap_or_else(|e| panic!("{}: {e}", concept.name));
                assert!(residual(&scene) <= 1e-9, "{}", concept.name);
                let pts: Vec<Vec2> = scene.points.values().copied().collect();
                for (i, a) in pts.iter().enumerate() {
                    assert!((0.0..=1.0).contains(&a.x) && (0.0..=1.0).contains(&a.y));
                    for b in &pts[i + 1..] {
                        assert!(a.dist(*b) >= cfg.min_point_separation);
                    }
                }
                for o in scene.objects.values() {
                    match *o {
                        RealizedObject::Line { a, b } => assert!(a.dist(b) >= cfg.min_segment_length),
                        RealizedObject::Circle { radius, .. } => {
                            assert!((cfg.min_radius..=cfg.max_radius).contains(&radius))
                        }
                    }
                }
            }
        }
    }
}
