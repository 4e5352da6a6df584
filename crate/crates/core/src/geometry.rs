//! Plane domains with two conjugation points, their boundary-to-interior maps,
//! and the corner cutoff.
//!
//! The canonical domain is a kite: two curves from `g1 = (0, 0)` to
//! `g2 = (scale, 0)`, the upper one `Γ₁` and the lower one `Γ₂`. Within `eps`
//! of each corner both curves are straight rays at `±omega0` about the segment
//! `[g1, g2]`, so the domain is exactly a plane angle of opening `2·omega0`
//! there.
//!
//! Local polar coordinates `(ω, r)` about a corner measure `ω` from the
//! bisector and are oriented so that `Γ₁` sits at `ω = -omega0` and `Γ₂` at
//! `ω = +omega0` at both corners.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Fraction of `|g1 - g2|` used for the corner radius when none is given.
pub const DEFAULT_EPS_FRACTION: f64 = 0.15;
/// Length of the straight corner rays as a fraction of `scale`.
pub const RAY_FRACTION: f64 = 0.35;
/// Contraction ratio of the middle part of a corner-rotation map.
pub const MID_CONTRACTION: f64 = 0.7;
/// Smallest contraction margin accepted, relative to `|g1 - g2|`.
pub const MIN_MARGIN_FRACTION: f64 = 1e-3;

const BEZIER_SUBDIVISIONS: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    PolylineKite,
    LensSpline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveId {
    Gamma1,
    Gamma2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corner {
    G1,
    G2,
}

impl Corner {
    pub const BOTH: [Corner; 2] = [Corner::G1, Corner::G2];

    pub fn index(self) -> usize {
        match self {
            Corner::G1 => 0,
            Corner::G2 => 1,
        }
    }
}

/// Orientation of the closed boundary `Γ₁` (g1→g2) followed by `Γ₂` (g2→g1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Clockwise,
    CounterClockwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerConfig {
    pub omega0: f64,
    pub g1: Point,
    pub g2: Point,
    pub eps: f64,
}

impl CornerConfig {
    pub fn corner(&self, c: Corner) -> Point {
        match c {
            Corner::G1 => self.g1,
            Corner::G2 => self.g2,
        }
    }

    pub fn separation(&self) -> f64 {
        (self.g2 - self.g1).norm()
    }

    pub fn rho(&self, y: &Point) -> f64 {
        (y - self.g1).norm().min((y - self.g2).norm())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.omega0 > 0.0 && self.omega0 < PI) {
            return Err(GeometryError::AngleOutOfRange(self.omega0));
        }
        if !(self.eps > 0.0 && self.eps < 0.5 * self.separation()) {
            return Err(GeometryError::InvalidParameter {
                name: "eps",
                value: self.eps,
                reason: "corner neighbourhoods must be disjoint",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Segment {
    Line { points: [Point; 2] },
    CubicBezier { points: [Point; 4] },
}

impl Segment {
    fn eval(&self, s: f64) -> Point {
        match self {
            Segment::Line { points: [a, b] } => a + (b - a) * s,
            Segment::CubicBezier { points: [p0, p1, p2, p3] } => {
                let u = 1.0 - s;
                let c0 = u * u * u;
                let c1 = 3.0 * u * u * s;
                let c2 = 3.0 * u * s * s;
                let c3 = s * s * s;
                Point::from(p0.coords * c0 + p1.coords * c1 + p2.coords * c2 + p3.coords * c3)
            }
        }
    }

    fn end(&self) -> Point {
        match self {
            Segment::Line { points } => points[1],
            Segment::CubicBezier { points } => points[3],
        }
    }

    fn start(&self) -> Point {
        match self {
            Segment::Line { points } => points[0],
            Segment::CubicBezier { points } => points[0],
        }
    }
}

/// A boundary curve given by control points, parametrized over `[0, 1]`
/// with equal parameter share per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub segments: Vec<Segment>,
}

impl BoundaryCurve {
    pub fn eval(&self, s: f64) -> Point {
        let n = self.segments.len();
        let x = s.clamp(0.0, 1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        self.segments[k].eval(x - k as f64)
    }

    pub fn start(&self) -> Point {
        self.segments[0].start()
    }

    pub fn end(&self) -> Point {
        self.segments[self.segments.len() - 1].end()
    }

    /// Vertices of the polygonal representation, endpoints included.
    pub fn polyline(&self) -> Vec<Point> {
        let mut pts = vec![self.start()];
        for seg in &self.segments {
            match seg {
                Segment::Line { points } => pts.push(points[1]),
                Segment::CubicBezier { .. } => {
                    for i in 1..=BEZIER_SUBDIVISIONS {
                        pts.push(seg.eval(i as f64 / BEZIER_SUBDIVISIONS as f64));
                    }
                }
            }
        }
        pts
    }
}

/// A concrete domain `G` with `∂G \ {g1, g2} = Γ₁ ∪ Γ₂`.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub corners: CornerConfig,
    pub shape: Shape,
    pub scale: f64,
    pub gamma1: BoundaryCurve,
    pub gamma2: BoundaryCurve,
    pub orientation: Orientation,
    pub star_center: Point,
    gamma1_poly: Vec<Point>,
    gamma2_poly: Vec<Point>,
    polygon: Vec<Point>,
    corner_orient: [f64; 2],
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

fn unit(angle: f64) -> Vector {
    Vector::new(angle.cos(), angle.sin())
}

fn cross(a: &Vector, b: &Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Proper crossing of open segments `[a, b]` and `[c, d]`.
fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

impl DomainSpec {
    /// Assembles and validates a domain from its two curves.
    pub fn from_curves(
        corners: CornerConfig,
        shape: Shape,
        scale: f64,
        gamma1: BoundaryCurve,
        gamma2: BoundaryCurve,
        star_center: Point,
    ) -> Result<Self, GeometryError> {
        corners.validate()?;
        let gamma1_poly = gamma1.polyline();
        let gamma2_poly = gamma2.polyline();
        let tol = 1e-12 * corners.separation();
        for (poly, name) in [(&gamma1_poly, "gamma1"), (&gamma2_poly, "gamma2")] {
            if (poly[0] - corners.g1).norm() > tol || (poly[poly.len() - 1] - corners.g2).norm() > tol {
                return Err(GeometryError::SelfIntersection(format!(
                    "{name} must run from g1 to g2"
                )));
            }
        }
        let mut polygon = gamma1_poly.clone();
        polygon.extend(gamma2_poly.iter().rev().skip(1).take(gamma2_poly.len() - 2));

        let signed_area = polygon_signed_area(&polygon);
        let orientation = if signed_area < 0.0 {
            Orientation::Clockwise
        } else {
            Orientation::CounterClockwise
        };

        let mut domain = DomainSpec {
            corners,
            shape,
            scale,
            gamma1,
            gamma2,
            orientation,
            star_center,
            gamma1_poly,
            gamma2_poly,
            polygon,
            corner_orient: [1.0, 1.0],
        };
        for c in Corner::BOTH {
            let g = domain.corners.corner(c);
            let first = match c {
                Corner::G1 => domain.gamma1_poly[1],
                Corner::G2 => domain.gamma1_poly[domain.gamma1_poly.len() - 2],
            };
            let delta = wrap_angle((first - g).y.atan2((first - g).x) - domain.bisector_angle(c));
            domain.corner_orient[c.index()] = if delta > 0.0 { -1.0 } else { 1.0 };
        }
        domain.validate()?;
        Ok(domain)
    }

    pub fn polygon(&self) -> &[Point] {
        &self.polygon
    }

    pub fn curve_polyline(&self, id: CurveId) -> &[Point] {
        match id {
            CurveId::Gamma1 => &self.gamma1_poly,
            CurveId::Gamma2 => &self.gamma2_poly,
        }
    }

    pub fn curve(&self, id: CurveId) -> &BoundaryCurve {
        match id {
            CurveId::Gamma1 => &self.gamma1,
            CurveId::Gamma2 => &self.gamma2,
        }
    }

    pub fn omega0(&self) -> f64 {
        self.corners.omega0
    }

    pub fn eps(&self) -> f64 {
        self.corners.eps
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.polygon.iter().enumerate() {
            for q in &self.polygon[i + 1..] {
                d = d.max((p - q).norm());
            }
        }
        d
    }

    pub fn area(&self) -> f64 {
        polygon_signed_area(&self.polygon).abs()
    }

    pub fn corner(&self, c: Corner) -> Point {
        self.corners.corner(c)
    }

    /// Direction angle of the local bisector at a corner (along `[g1, g2]`).
    pub fn bisector_angle(&self, c: Corner) -> f64 {
        let d = match c {
            Corner::G1 => self.corners.g2 - self.corners.g1,
            Corner::G2 => self.corners.g1 - self.corners.g2,
        };
        d.y.atan2(d.x)
    }

    /// Direction angle of a curve's straight ray leaving corner `c`.
    pub fn ray_angle(&self, c: Corner, id: CurveId) -> f64 {
        let sign = match id {
            CurveId::Gamma1 => -1.0,
            CurveId::Gamma2 => 1.0,
        };
        wrap_angle(self.bisector_angle(c) + self.corner_orient[c.index()] * sign * self.omega0())
    }

    pub fn local_polar(&self, c: Corner, y: &Point) -> (f64, f64) {
        let g = self.corner(c);
        let d = y - g;
        let delta = wrap_angle(d.y.atan2(d.x) - self.bisector_angle(c));
        (self.corner_orient[c.index()] * delta, d.norm())
    }

    pub fn from_local_polar(&self, c: Corner, omega: f64, r: f64) -> Point {
        let angle = self.bisector_angle(c) + self.corner_orient[c.index()] * omega;
        self.corner(c) + unit(angle) * r
    }

    pub fn rho(&self, y: &Point) -> f64 {
        self.corners.rho(y)
    }

    /// Winding-number test; points on the boundary may go either way.
    pub fn contains(&self, p: &Point) -> bool {
        winding_number(&self.polygon, p) != 0
    }

    pub fn contains_closed(&self, p: &Point, tol: f64) -> bool {
        self.contains(p) || self.distance_to_boundary(p) <= tol
    }

    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        let n = self.polygon.len();
        (0..n)
            .map(|i| point_segment_distance(p, &self.polygon[i], &self.polygon[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from the star center to the boundary along direction `dir`.
    pub fn star_radius(&self, dir: &Vector) -> f64 {
        let c = self.star_center;
        let n = self.polygon.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let e = b - a;
            let denom = cross(dir, &e);
            if denom.abs() < 1e-300 {
                continue;
            }
            let ac = a - c;
            let s = cross(&ac, &e) / denom;
            let u = cross(&ac, dir) / denom;
            if s > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                best = best.min(s);
            }
        }
        best * dir.norm()
    }

    /// Ray test from the star center; independent of the winding test.
    pub fn contains_star(&self, p: &Point) -> bool {
        let d = p - self.star_center;
        let r = d.norm();
        if r == 0.0 {
            return true;
        }
        r < self.star_radius(&(d / r))
    }

    /// Normalized star gauge `|y - c| / R(direction)`: 0 at the center, 1 on `∂G`.
    pub fn star_gauge(&self, p: &Point) -> f64 {
        let d = p - self.star_center;
        let r = d.norm();
        if r == 0.0 {
            return 0.0;
        }
        r / self.star_radius(&(d / r))
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let poly = &self.polygon;
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (b - a).norm() == 0.0 {
                return Err(GeometryError::SelfIntersection(format!("repeated vertex {i}")));
            }
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (poly[j], poly[(j + 1) % n]);
                if segments_cross(&a, &b, &c, &d) {
                    return Err(GeometryError::SelfIntersection(format!(
                        "edges {i} and {j} cross"
                    )));
                }
            }
        }
        // Both curves must meet only at the corners: interior polyline vertices
        // may not touch the other curve.
        let tol = 1e-9 * self.scale;
        for (own, other) in [(&self.gamma1_poly, &self.gamma2_poly), (&self.gamma2_poly, &self.gamma1_poly)] {
            for p in &own[1..own.len() - 1] {
                for w in other.windows(2) {
                    if point_segment_distance(p, &w[0], &w[1]) <= tol {
                        return Err(GeometryError::SelfIntersection(
                            "curves touch away from the corners".into(),
                        ));
                    }
                }
            }
        }
        if !self.contains(&self.star_center) || self.distance_to_boundary(&self.star_center) <= tol {
            return Err(GeometryError::SelfIntersection("star center not interior".into()));
        }
        for (k, v) in poly.iter().enumerate() {
            for i in 0..n {
                if i == k || (i + 1) % n == k {
                    continue;
                }
                if segments_cross(&self.star_center, v, &poly[i], &poly[(i + 1) % n]) {
                    return Err(GeometryError::SelfIntersection(format!(
                        "not star-shaped: vertex {k} hidden by edge {i}"
                    )));
                }
            }
        }
        // Corner rays must be straight for at least eps.
        for c in Corner::BOTH {
            for id in [CurveId::Gamma1, CurveId::Gamma2] {
                let poly = self.curve_polyline(id);
                let next = match c {
                    Corner::G1 => poly[1],
                    Corner::G2 => poly[poly.len() - 2],
                };
                if (next - self.corner(c)).norm() < self.eps() {
                    return Err(GeometryError::InvalidParameter {
                        name: "eps",
                        value: self.eps(),
                        reason: "corner rays shorter than eps",
                    });
                }
            }
        }
        Ok(())
    }

    /// The serializable description of this domain.
    pub fn document(&self) -> DomainDocument {
        DomainDocument {
            version: DOCUMENT_VERSION,
            shape: self.shape,
            scale: self.scale,
            corners: self.corners,
            orientation: self.orientation,
            star_center: self.star_center,
            curves: Curves {
                gamma1: self.gamma1.clone(),
                gamma2: self.gamma2.clone(),
            },
            maps: Vec::new(),
            cutoff: None,
        }
    }
}

fn polygon_signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

fn winding_number(poly: &[Point], p: &Point) -> i32 {
    let n = poly.len();
    let mut wn = 0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let is_left = cross(&(b - a), &(p - a));
        if a.y <= p.y {
            if b.y > p.y && is_left > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && is_left < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Builds the canonical kite with `eps = 0.15·scale`.
pub fn build_canonical_domain(omega0: f64, scale: f64, shape: Shape) -> Result<DomainSpec, GeometryError> {
    build_canonical_domain_with_eps(omega0, scale, shape, DEFAULT_EPS_FRACTION * scale)
}

pub fn build_canonical_domain_with_eps(
    omega0: f64,
    scale: f64,
    shape: Shape,
    eps: f64,
) -> Result<DomainSpec, GeometryError> {
    if !(omega0 > 0.0 && omega0 < PI) {
        return Err(GeometryError::AngleOutOfRange(omega0));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GeometryError::InvalidParameter {
            name: "scale",
            value: scale,
            reason: "must be positive",
        });
    }
    let g1 = Point::new(0.0, 0.0);
    let g2 = Point::new(scale, 0.0);
    let corners = CornerConfig { omega0, g1, g2, eps };
    corners.validate()?;
    let ell = RAY_FRACTION * scale;

    let make = |sign: f64| -> BoundaryCurve {
        let a1 = g1 + unit(sign * omega0) * ell;
        let a2 = g2 + unit(sign * (PI - omega0)) * ell;
        let middle = match shape {
            Shape::PolylineKite => Segment::Line { points: [a1, a2] },
            Shape::LensSpline => {
                let m = (a2 - a1).norm() / 3.0;
                let d1 = unit(sign * omega0);
                let d2 = unit(-sign * omega0);
                Segment::CubicBezier {
                    points: [a1, a1 + d1 * m, a2 - d2 * m, a2],
                }
            }
        };
        BoundaryCurve {
            segments: vec![Segment::Line { points: [g1, a1] }, middle, Segment::Line { points: [a2, g2] }],
        }
    };
    let gamma1 = make(1.0);
    let gamma2 = make(-1.0);
    DomainSpec::from_curves(corners, shape, scale, gamma1, gamma2, Point::new(0.5 * scale, 0.0))
}

pub fn rho(domain: &DomainSpec, y: &Point) -> f64 {
    domain.rho(y)
}

/// Quintic smoothstep, `C²` with `S(0)=0`, `S(1)=1`.
pub fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// Radial blend that is 1 up to `inner` and 0 from `outer` on.
fn radial_blend(r: f64, inner: f64, outer: f64) -> f64 {
    if r <= inner {
        1.0
    } else if r >= outer {
        0.0
    } else {
        1.0 - smoothstep5((r - inner) / (outer - inner))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    /// Exact rotation by `rotation[j]` about `g_j` within `inner_radius`,
    /// blended into a contraction of ratio `mid_ratio` about `center`.
    CornerRotation {
        source: CurveId,
        rotation: [f64; 2],
        inner_radius: f64,
        outer_radius: f64,
        mid_ratio: f64,
        center: Point,
        corners: [Point; 2],
    },
    /// `Ω(y) = center + ratio·(y - center)`.
    InteriorContraction { ratio: f64, center: Point, margin: f64 },
}

/// A smooth boundary-to-interior transformation `Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffeoMap {
    spec: MapSpec,
    fd_step: f64,
}

impl DiffeoMap {
    pub fn from_spec(spec: MapSpec, scale: f64) -> Self {
        DiffeoMap {
            spec,
            fd_step: 1e-6 * scale,
        }
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn eval(&self, y: &Point) -> Point {
        match &self.spec {
            MapSpec::CornerRotation {
                rotation,
                inner_radius,
                outer_radius,
                mid_ratio,
                center,
                corners,
                ..
            } => {
                let mut weight_sum = 0.0;
                let mut acc = Vector::zeros();
                for j in 0..2 {
                    let d = y - corners[j];
                    let chi = radial_blend(d.norm(), *inner_radius, *outer_radius);
                    if chi == 1.0 {
                        return corners[j] + rotate(&d, rotation[j]);
                    }
                    if chi > 0.0 {
                        acc += (corners[j].coords + rotate(&d, rotation[j])) * chi;
                        weight_sum += chi;
                    }
                }
                let mid = center + (y - center) * *mid_ratio;
                Point::from(acc + mid.coords * (1.0 - weight_sum))
            }
            MapSpec::InteriorContraction { ratio, center, .. } => center + (y - center) * *ratio,
        }
    }

    /// Central-difference Jacobian.
    pub fn jacobian(&self, y: &Point) -> Matrix2<f64> {
        let h = self.fd_step;
        let dx = (self.eval(&(y + Vector::new(h, 0.0))) - self.eval(&(y - Vector::new(h, 0.0)))) / (2.0 * h);
        let dy = (self.eval(&(y + Vector::new(0.0, h))) - self.eval(&(y - Vector::new(0.0, h)))) / (2.0 * h);
        Matrix2::from_columns(&[dx, dy])
    }

    pub fn margin(&self) -> Option<f64> {
        match self.spec {
            MapSpec::InteriorContraction { margin, .. } => Some(margin),
            _ => None,
        }
    }
}

fn rotate(v: &Vector, angle: f64) -> Vector {
    let (s, c) = angle.sin_cos();
    Vector::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

const MAP_SAMPLES: usize = 2000;

/// `Ω_i` for the corner-coupled conditions: corner-fixing, exact rotation
/// by `omega0` toward the interior near the corners.
pub fn build_corner_rotation_map(domain: &DomainSpec, source: CurveId) -> Result<DiffeoMap, GeometryError> {
    let mut rotation = [0.0; 2];
    for c in Corner::BOTH {
        rotation[c.index()] = wrap_angle(domain.bisector_angle(c) - domain.ray_angle(c, source));
    }
    let sep = domain.corners.separation();
    let inner = domain.eps();
    let outer = (2.0 * inner).min(0.45 * sep);
    let spec = MapSpec::CornerRotation {
        source,
        rotation,
        inner_radius: inner,
        outer_radius: outer,
        mid_ratio: MID_CONTRACTION,
        center: domain.star_center,
        corners: [domain.corners.g1, domain.corners.g2],
    };
    let map = DiffeoMap::from_spec(spec, domain.scale);

    let curve = domain.curve(source);
    let tol = 1e-12 * domain.scale;
    for k in 0..=MAP_SAMPLES {
        let s = k as f64 / MAP_SAMPLES as f64;
        let y = curve.eval(s);
        let img = map.eval(&y);
        if domain.rho(&y) <= tol {
            if (img - y).norm() > tol {
                return Err(GeometryError::ImageOutsideDomain { parameter: s });
            }
            continue;
        }
        if !domain.contains(&img) || domain.distance_to_boundary(&img) <= tol {
            return Err(GeometryError::ImageOutsideDomain { parameter: s });
        }
    }
    check_jacobian_along(domain, &map, curve)?;
    Ok(map)
}

/// `Ω` for the interior-supported condition: contraction about the star center.
pub fn build_interior_contraction_map(domain: &DomainSpec, ratio: f64) -> Result<DiffeoMap, GeometryError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GeometryError::InvalidParameter {
            name: "ratio",
            value: ratio,
            reason: "contraction ratio must lie in (0, 1)",
        });
    }
    let center = domain.star_center;
    let mut margin = f64::INFINITY;
    for k in 0..=MAP_SAMPLES {
        let s = k as f64 / MAP_SAMPLES as f64;
        let img = center + (domain.gamma1.eval(s) - center) * ratio;
        let d = if domain.contains(&img) {
            domain.distance_to_boundary(&img)
        } else {
            -domain.distance_to_boundary(&img)
        };
        margin = margin.min(d);
    }
    let required = MIN_MARGIN_FRACTION * domain.corners.separation();
    if margin <= required {
        return Err(GeometryError::NonPositiveMargin { margin, required });
    }
    let map = DiffeoMap::from_spec(MapSpec::InteriorContraction { ratio, center, margin }, domain.scale);
    check_jacobian_along(domain, &map, &domain.gamma1)?;
    Ok(map)
}

fn check_jacobian_along(domain: &DomainSpec, map: &DiffeoMap, curve: &BoundaryCurve) -> Result<(), GeometryError> {
    let offset = 0.01 * domain.scale;
    for k in 0..=200 {
        let y = curve.eval(k as f64 / 200.0);
        for dy in [-offset, 0.0, offset] {
            for dx in [-offset, 0.0, offset] {
                let p = y + Vector::new(dx, dy);
                let det = map.jacobian(&p).determinant();
                if det.abs() < 1e-6 {
                    return Err(GeometryError::SingularJacobian { det, x: p.x, y: p.y });
                }
            }
        }
    }
    Ok(())
}

/// Smooth cutoff `ξ` equal to 1 near the corners and 0 away from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffXi {
    pub corners: [Point; 2],
    pub plateau: f64,
    pub delta: f64,
    pub smoothness: u32,
}

impl CutoffXi {
    pub fn profile(&self, r: f64) -> f64 {
        radial_blend(r, self.plateau, self.delta)
    }

    pub fn eval(&self, y: &Point) -> f64 {
        let r = (y - self.corners[0]).norm().min((y - self.corners[1]).norm());
        self.profile(r)
    }
}

pub fn build_cutoff(corners: &CornerConfig, delta: f64, plateau: f64) -> Result<CutoffXi, GeometryError> {
    if plateau >= delta {
        return Err(GeometryError::InvalidParameter {
            name: "plateau",
            value: plateau,
            reason: "plateau must be smaller than delta",
        });
    }
    if plateau < corners.eps {
        return Err(GeometryError::InvalidParameter {
            name: "plateau",
            value: plateau,
            reason: "plateau must be at least eps",
        });
    }
    if delta >= 0.5 * corners.separation() {
        return Err(GeometryError::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "support must stay below half the corner separation",
        });
    }
    Ok(CutoffXi {
        corners: [corners.g1, corners.g2],
        plateau,
        delta,
        smoothness: 2,
    })
}

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub gamma1: BoundaryCurve,
    pub gamma2: BoundaryCurve,
}

/// JSON description of a domain with its maps and cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDocument {
    pub version: u32,
    pub shape: Shape,
    pub scale: f64,
    pub corners: CornerConfig,
    pub orientation: Orientation,
    pub star_center: Point,
    pub curves: Curves,
    pub maps: Vec<MapSpec>,
    pub cutoff: Option<CutoffXi>,
}

impl DomainDocument {
    pub fn domain(&self) -> Result<DomainSpec, GeometryError> {
        DomainSpec::from_curves(
            self.corners,
            self.shape,
            self.scale,
            self.curves.gamma1.clone(),
            self.curves.gamma2.clone(),
            self.star_center,
        )
    }

    pub fn maps(&self) -> Vec<DiffeoMap> {
        self.maps
            .iter()
            .map(|m| DiffeoMap::from_spec(m.clone(), self.scale))
            .collect()
    }

    pub fn with_map(mut self, map: &DiffeoMap) -> Self {
        self.maps.push(map.spec().clone());
        self
    }

    pub fn with_cutoff(mut self, cutoff: CutoffXi) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kite() -> DomainSpec {
        build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap()
    }

    #[test]
    fn corner_opening_is_two_omega0() {
        let d = kite();
        for c in Corner::BOTH {
            let a1 = d.ray_angle(c, CurveId::Gamma1);
            let a2 = d.ray_angle(c, CurveId::Gamma2);
            let opening = wrap_angle(a1 - a2).abs();
            assert!((opening - 2.0 * PI / 3.0).abs() < 1e-12);
        }
        let (w, r) = d.local_polar(Corner::G1, &d.gamma1.eval(0.1));
        assert!((w + PI / 3.0).abs() < 1e-12 && r > 0.0);
        let (w, _) = d.local_polar(Corner::G2, &d.gamma1.eval(0.95));
        assert!((w + PI / 3.0).abs() < 1e-12);
        let (w, _) = d.local_polar(Corner::G2, &d.gamma2.eval(0.95));
        assert!((w - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_angles() {
        assert!(matches!(
            build_canonical_domain(3.2, 1.0, Shape::PolylineKite),
            Err(GeometryError::AngleOutOfRange(_))
        ));
        assert!(build_canonical_domain(0.0, 1.0, Shape::PolylineKite).is_err());
        assert!(build_canonical_domain(PI / 2.0 - 0.2, 1.0, Shape::PolylineKite).is_ok());
        assert!(build_canonical_domain(PI / 4.0, 1.0, Shape::LensSpline).is_ok());
    }

    #[test]
    fn rho_examples() {
        let d = kite();
        assert_eq!(rho(&d, &Point::new(0.0, 0.0)), 0.0);
        assert_eq!(rho(&d, &Point::new(0.5, 0.0)), 0.5);
        assert_eq!(rho(&d, &Point::new(0.25, 0.0)), 0.25);
    }

    #[test]
    fn rotation_map_near_corner_is_exact() {
        let d = kite();
        let map = build_corner_rotation_map(&d, CurveId::Gamma1).unwrap();
        let eps = d.eps();
        let y = d.from_local_polar(Corner::G1, -d.omega0(), eps / 2.0);
        let img = map.eval(&y);
        let (w, r) = d.local_polar(Corner::G1, &img);
        assert!(w.abs() < 1e-12 && (r - eps / 2.0).abs() < 1e-12);
        assert_eq!(map.eval(&d.corners.g1), d.corners.g1);
        assert_eq!(map.eval(&d.corners.g2), d.corners.g2);
        let mid = map.eval(&d.gamma1.eval(0.5));
        assert!(d.contains(&mid) && d.distance_to_boundary(&mid) > 0.01);

        let map2 = build_corner_rotation_map(&d, CurveId::Gamma2).unwrap();
        let y = d.from_local_polar(Corner::G2, d.omega0(), eps / 3.0);
        let (w, _) = d.local_polar(Corner::G2, &map2.eval(&y));
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn rotation_matches_rigid_rotation_on_sampled_corner_points() {
        let d = kite();
        for id in [CurveId::Gamma1, CurveId::Gamma2] {
            let map = build_corner_rotation_map(&d, id).unwrap();
            for c in Corner::BOTH {
                let rot = wrap_angle(d.bisector_angle(c) - d.ray_angle(c, id));
                assert!((rot.abs() - d.omega0()).abs() < 1e-12);
                for k in 1..50 {
                    let r = d.eps() * k as f64 / 50.0;
                    let y = d.corner(c) + unit(d.ray_angle(c, id)) * r;
                    let expect = d.corner(c) + rotate(&(y - d.corner(c)), rot);
                    assert!((map.eval(&y) - expect).norm() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn contraction_map() {
        let d = kite();
        let map = build_interior_contraction_map(&d, 0.5).unwrap();
        assert_eq!(map.eval(&d.star_center), d.star_center);
        let margin = map.margin().unwrap();
        let img = map.eval(&d.gamma1.eval(0.5));
        // dense boundary sampling oracle for the distance
        let poly = d.polygon();
        let mut dist = f64::INFINITY;
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            for k in 0..=2000 {
                let q = a + (b - a) * (k as f64 / 2000.0);
                dist = dist.min((q - img).norm());
            }
        }
        assert!(margin > 0.0 && dist >= margin - 1e-9);

        let thin = build_canonical_domain(0.2, 1.0, Shape::PolylineKite).unwrap();
        assert!(matches!(
            build_interior_contraction_map(&thin, 0.999),
            Err(GeometryError::NonPositiveMargin { .. })
        ));
        assert!(build_interior_contraction_map(&d, 1.0).is_err());
    }

    #[test]
    fn jacobians_bounded_away_from_zero() {
        let d = kite();
        let maps = [
            build_corner_rotation_map(&d, CurveId::Gamma1).unwrap(),
            build_corner_rotation_map(&d, CurveId::Gamma2).unwrap(),
            build_interior_contraction_map(&d, 0.5).unwrap(),
        ];
        for map in &maps {
            for k in 0..=500 {
                let y = d.gamma1.eval(k as f64 / 500.0);
                assert!(map.jacobian(&y).determinant().abs() >= 1e-6);
            }
        }
    }

    #[test]
    fn cutoff_examples() {
        let d = kite();
        let xi = build_cutoff(&d.corners, 0.3, 0.15).unwrap();
        assert_eq!(xi.eval(&d.corners.g1), 1.0);
        assert_eq!(xi.eval(&Point::new(0.5, 0.1)), 0.0);
        let mid = xi.profile(0.225);
        assert!(mid > 0.0 && mid < 1.0);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = xi.profile(0.5 * k as f64 / 1000.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        assert!(build_cutoff(&d.corners, 0.2, 0.2).is_err());
        assert!(build_cutoff(&d.corners, 0.3, 0.1).is_err());
    }

    #[test]
    fn cutoff_invariants_on_dense_radii() {
        let d = kite();
        let xi = build_cutoff(&d.corners, 0.3, 0.15).unwrap();
        let n = 10_000;
        let hstep = 0.5 / n as f64;
        let mut max_second: f64 = 0.0;
        for k in 1..n {
            let r = k as f64 * hstep;
            let v = xi.profile(r);
            if r <= xi.plateau {
                assert_eq!(v, 1.0);
            }
            if r >= xi.delta {
                assert_eq!(v, 0.0);
            }
            let second = (xi.profile(r + hstep) - 2.0 * v + xi.profile(r - hstep)) / (hstep * hstep);
            max_second = max_second.max(second.abs());
        }
        // |S''| <= 10/sqrt(3) on [0,1] scaled by 1/(delta - plateau)^2
        let bound = 5.78 / (xi.delta - xi.plateau).powi(2);
        assert!(max_second <= bound * 1.01, "{max_second} > {bound}");
    }

    #[test]
    fn winding_agrees_with_star_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in [Shape::PolylineKite, Shape::LensSpline] {
            let d = build_canonical_domain(PI / 3.0, 1.0, shape).unwrap();
            for _ in 0..1000 {
                let p = Point::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.8..0.8));
                if d.distance_to_boundary(&p) < 1e-9 {
                    continue;
                }
                assert_eq!(d.contains(&p), d.contains_star(&p), "{p:?}");
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let d = kite();
        let map = build_corner_rotation_map(&d, CurveId::Gamma1).unwrap();
        let doc = d
            .document()
            .with_map(&map)
            .with_cutoff(build_cutoff(&d.corners, 0.3, 0.15).unwrap());
        let json = doc.to_json();
        let back = DomainDocument::from_json(&json).unwrap();
        assert_eq!(back, doc);
        let d2 = back.domain().unwrap();
        assert_eq!(d2.polygon(), d.polygon());
        assert_eq!(back.maps()[0].eval(&Point::new(0.1, 0.1)), map.eval(&Point::new(0.1, 0.1)));
    }

    #[test]
    fn obtuse_half_angles_still_build() {
        for w in [2.0, 2.5] {
            let d = build_canonical_domain(w, 1.0, Shape::PolylineKite).unwrap();
            assert!(d.contains(&d.star_center));
        }
    }
}
