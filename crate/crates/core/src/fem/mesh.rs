//! Corner-graded triangulations of a [`DomainSpec`] and point location.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, RefinementParameters, Triangulation};

use crate::error::FemError;
use crate::geometry::{Corner, CurveId, DomainSpec, Point, Segment};

pub const MIN_ANGLE_DEG: f64 = 20.0;
const REFINE_ANGLE_DEG: f64 = 25.0;
const SEED_CELL_FACTOR: f64 = 1.3;
const MESH_CACHE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marker {
    Interior,
    Gamma1,
    Gamma2,
    CornerG1,
    CornerG2,
}

impl Marker {
    pub fn is_boundary(self) -> bool {
        self != Marker::Interior
    }

    pub fn corner(self) -> Option<Corner> {
        match self {
            Marker::CornerG1 => Some(Corner::G1),
            Marker::CornerG2 => Some(Corner::G2),
            _ => None,
        }
    }

    /// Whether conditions attached to `curve` apply at a vertex with this marker.
    pub fn on_curve(self, curve: CurveId) -> bool {
        match self {
            Marker::Interior => false,
            Marker::CornerG1 | Marker::CornerG2 => true,
            Marker::Gamma1 => curve == CurveId::Gamma1,
            Marker::Gamma2 => curve == CurveId::Gamma2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub markers: Vec<Marker>,
    /// Boundary edges with the marker of the curve they lie on.
    pub boundary_edges: Vec<([usize; 2], Marker)>,
    pub h: f64,
    pub beta: f64,
    pub domain_hash: String,
}

/// Target element size: `h·(ρ/L)^{1-1/β}`, floored at `h^β·L^{1-β}/2`.
pub fn size_function(rho: f64, h: f64, beta: f64, diam: f64) -> f64 {
    let floor = 0.5 * h.powf(beta) * diam.powf(1.0 - beta);
    let graded = h * (rho / diam).min(1.0).powf(1.0 - 1.0 / beta);
    graded.max(floor)
}

pub fn domain_hash(domain: &DomainSpec) -> String {
    let digest = Sha256::digest(domain.document().to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn segment_points(seg: &Segment, size: &dyn Fn(&Point) -> f64) -> Vec<Point> {
    const FINE: usize = 2000;
    let eval = |s: f64| match seg {
        Segment::Line { points: [a, b] } => a + (b - a) * s,
        Segment::CubicBezier { points: [p0, p1, p2, p3] } => {
            let u = 1.0 - s;
            Point::from(
                p0.coords * (u * u * u) + p1.coords * (3.0 * u * u * s) + p2.coords * (3.0 * u * s * s) + p3.coords * (s * s * s),
            )
        }
    };
    let mut cum = vec![0.0; FINE + 1];
    let mut prev = eval(0.0);
    for k in 1..=FINE {
        let p = eval(k as f64 / FINE as f64);
        let mid = Point::from((p.coords + prev.coords) * 0.5);
        cum[k] = cum[k - 1] + (p - prev).norm() / size(&mid);
        prev = p;
    }
    let total = cum[FINE];
    let n = (total.ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n - 1);
    let mut j = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push(eval((j as f64 + frac) / FINE as f64));
    }
    out
}

/// Boundary points of one curve from `g1` to `g2`, endpoints included.
fn curve_points(domain: &DomainSpec, id: CurveId, size: &dyn Fn(&Point) -> f64) -> Vec<Point> {
    let curve = domain.curve(id);
    let mut pts = vec![curve.start()];
    for seg in &curve.segments {
        pts.extend(segment_points(seg, size));
        pts.push(match seg {
            Segment::Line { points } => points[1],
            Segment::CubicBezier { points } => points[3],
        });
    }
    pts
}

fn winding(poly: &[Point], p: &Point) -> i32 {
    let n = poly.len();
    let mut wn = 0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && left > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && left < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn dist_to_chain(p: &Point, chain: &[Point]) -> f64 {
    chain
        .windows(2)
        .map(|w| {
            let ab = w[1] - w[0];
            let s = ((p - w[0]).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (w[0] + ab * s)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn triangle_angles(a: &Point, b: &Point, c: &Point) -> [f64; 3] {
    let ang = |p: &Point, q: &Point, r: &Point| {
        let u = q - p;
        let v = r - p;
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    };
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

/// Interior seed points at the centers of quadtree leaves whose side does not
/// exceed the target size anywhere in the leaf.
fn quadtree_seeds(
    domain: &DomainSpec,
    ring: &[Point],
    size: &dyn Fn(&Point) -> f64,
    corner: Point,
    side: f64,
    out: &mut Vec<Point>,
) {
    let center = Point::new(corner.x + 0.5 * side, corner.y + 0.5 * side);
    let half_diag = side * std::f64::consts::FRAC_1_SQRT_2;
    let boundary_dist = dist_to_chain(&center, ring).min(
        (ring[ring.len() - 1] - center).norm().min(dist_to_chain(&center, &[ring[ring.len() - 1], ring[0]])),
    );
    let inside = winding(ring, &center) != 0;
    if !inside && boundary_dist > half_diag {
        return;
    }
    // smallest target size over the cell: the nearest corner distance bounds it
    let rho_min = (domain.rho(&center) - half_diag).max(0.0);
    let probe = |g: &Point| {
        let d = center - g;
        let n = d.norm();
        if n == 0.0 {
            *g
        } else {
            g + d * (rho_min / n)
        }
    };
    let nearest = if (center - domain.corners.g1).norm() <= (center - domain.corners.g2).norm() {
        probe(&domain.corners.g1)
    } else {
        probe(&domain.corners.g2)
    };
    if side > SEED_CELL_FACTOR * size(&nearest) {
        let s = 0.5 * side;
        for (dx, dy) in [(0.0, 0.0), (s, 0.0), (0.0, s), (s, s)] {
            quadtree_seeds(domain, ring, size, Point::new(corner.x + dx, corner.y + dy), s, out);
        }
        return;
    }
    if inside && boundary_dist > 0.5 * size(&center) {
        out.push(center);
    }
}

/// Conforming triangulation graded toward both corners.
pub fn generate_graded_mesh(domain: &DomainSpec, h: f64, beta: f64) -> Result<Mesh, FemError> {
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(FemError::InvalidParameter(format!("grading exponent beta = {beta} must be >= 1")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(FemError::InvalidParameter(format!("mesh size h = {h} must be positive")));
    }
    if h > domain.eps() {
        return Err(FemError::MeshSizeTooLarge { h, bound: domain.eps() });
    }
    let diam = domain.diameter();
    let size = |p: &Point| size_function(domain.rho(p), h, beta, diam);

    let upper = curve_points(domain, CurveId::Gamma1, &size);
    let lower = curve_points(domain, CurveId::Gamma2, &size);
    let mut ring: Vec<Point> = upper.clone();
    ring.extend(lower.iter().rev().skip(1).take(lower.len() - 2));

    let mut cdt = ConstrainedDelaunayTriangulation::<spade::Point2<f64>>::new();
    let handles: Vec<_> = ring
        .iter()
        .map(|p| cdt.insert(spade::Point2::new(p.x, p.y)))
        .collect::<Result<_, _>>()
        .map_err(|e| FemError::Degenerate(format!("boundary insertion: {e:?}")))?;
    for i in 0..handles.len() {
        let (a, b) = (handles[i], handles[(i + 1) % handles.len()]);
        if cdt.can_add_constraint(a, b) {
            cdt.add_constraint(a, b);
        } else {
            return Err(FemError::Degenerate("boundary constraint edges intersect".into()));
        }
    }

    // An enclosing box lets the angle refinement treat both sides of the
    // boundary alike; faces outside the domain are discarded afterwards.
    let (mut lo, mut hi) = (ring[0], ring[0]);
    for p in &ring {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = 0.25 * (hi - lo).norm();
    for (x, y) in [(lo.x - pad, lo.y - pad), (hi.x + pad, lo.y - pad), (hi.x + pad, hi.y + pad), (lo.x - pad, hi.y + pad)] {
        cdt.insert(spade::Point2::new(x, y))
            .map_err(|e| FemError::Degenerate(format!("box insertion: {e:?}")))?;
    }
    let inside = |p: &spade::Point2<f64>| winding(&ring, &Point::new(p.x, p.y)) != 0;
    let mut seeds = Vec::new();
    quadtree_seeds(domain, &ring, &size, lo, (hi.x - lo.x).max(hi.y - lo.y), &mut seeds);
    for p in seeds {
        cdt.insert(spade::Point2::new(p.x, p.y))
            .map_err(|e| FemError::Degenerate(format!("interior insertion: {e:?}")))?;
    }

    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
        .with_max_additional_vertices(200_000);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(FemError::Degenerate("angle refinement did not complete".into()));
    }

    let mut index = vec![usize::MAX; cdt.num_vertices()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if !inside(&face.center()) {
            continue;
        }
        let mut tri = [0usize; 3];
        for (k, v) in face.vertices().iter().enumerate() {
            let i = v.fix().index();
            if index[i] == usize::MAX {
                index[i] = usize::MAX - 1;
            }
            tri[k] = i;
        }
        triangles.push(tri);
    }
    for v in cdt.vertices() {
        let i = v.fix().index();
        if index[i] != usize::MAX {
            index[i] = vertices.len();
            let p = v.position();
            vertices.push(Point::new(p.x, p.y));
        }
    }
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = index[*v];
        }
        let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if (b - a).x * (c - a).y - (b - a).y * (c - a).x < 0.0 {
            tri.swap(1, 2);
        }
    }

    let tol = 1e-10 * domain.scale;
    let markers: Vec<Marker> = vertices
        .iter()
        .map(|p| {
            if (p - domain.corners.g1).norm() <= tol {
                Marker::CornerG1
            } else if (p - domain.corners.g2).norm() <= tol {
                Marker::CornerG2
            } else if dist_to_chain(p, &upper) <= tol {
                Marker::Gamma1
            } else if dist_to_chain(p, &lower) <= tol {
                Marker::Gamma2
            } else {
                Marker::Interior
            }
        })
        .collect();

    let mut mesh = Mesh {
        vertices,
        triangles,
        markers,
        boundary_edges: Vec::new(),
        h,
        beta,
        domain_hash: domain_hash(domain),
    };
    mesh.boundary_edges = mesh.compute_boundary_edges();
    mesh.check()?;
    Ok(mesh)
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        Point::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                triangle_angles(&a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    pub fn corner_vertex(&self, c: Corner) -> usize {
        let m = match c {
            Corner::G1 => Marker::CornerG1,
            Corner::G2 => Marker::CornerG2,
        };
        self.markers.iter().position(|&x| x == m).expect("corner vertex present")
    }

    /// Largest diameter among triangles touching the corner vertex.
    pub fn first_ring_diameter(&self, c: Corner) -> f64 {
        let v = self.corner_vertex(c);
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].contains(&v))
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    /// Sum of triangle angles at a vertex.
    pub fn vertex_angle(&self, v: usize) -> f64 {
        self.triangles
            .iter()
            .filter_map(|t| {
                let k = t.iter().position(|&i| i == v)?;
                let [a, b, c] = [t[k], t[(k + 1) % 3], t[(k + 2) % 3]].map(|i| self.vertices[i]);
                Some(triangle_angles(&a, &b, &c)[0])
            })
            .sum()
    }

    fn compute_boundary_edges(&self) -> Vec<([usize; 2], Marker)> {
        let mut count = std::collections::BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count
            .into_iter()
            .filter(|&(_, n)| n == 1)
            .map(|((a, b), _)| {
                let m = match (self.markers[a], self.markers[b]) {
                    (Marker::Gamma1, _) | (_, Marker::Gamma1) => Marker::Gamma1,
                    (Marker::Gamma2, _) | (_, Marker::Gamma2) => Marker::Gamma2,
                    (m, _) => m,
                };
                ([a, b], m)
            })
            .collect()
    }

    /// Structural checks: orientation, minimum angle, markers on the boundary.
    pub fn check(&self) -> Result<(), FemError> {
        for t in 0..self.triangles.len() {
            if self.area(t) <= 0.0 {
                return Err(FemError::Degenerate(format!("triangle {t} is inverted or flat")));
            }
        }
        let min_angle = self.min_angle_deg();
        if min_angle < MIN_ANGLE_DEG {

            return Err(FemError::Degenerate(format!("minimum angle {min_angle:.2} deg below {MIN_ANGLE_DEG}")));
        }
        let on_boundary: HashSet<usize> = self.boundary_edges.iter().flat_map(|(e, _)| *e).collect();
        for (i, m) in self.markers.iter().enumerate() {
            if m.is_boundary() != on_boundary.contains(&i) {
                return Err(FemError::Degenerate(format!("vertex {i} marker {m:?} disagrees with topology")));
            }
        }
        for m in [Marker::CornerG1, Marker::CornerG2] {
            if self.markers.iter().filter(|&&x| x == m).count() != 1 {
                return Err(FemError::Degenerate(format!("expected one {m:?} vertex")));
            }
        }
        Ok(())
    }

    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MeshFile {
            version: MESH_CACHE_VERSION,
            mesh: self.clone(),
        })
        .expect("mesh serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FemError> {
        let f: MeshFile = serde_json::from_str(s).map_err(|e| FemError::Cache(e.to_string()))?;
        if f.version != MESH_CACHE_VERSION {
            return Err(FemError::Cache(format!("unsupported cache version {}", f.version)));
        }
        Ok(f.mesh)
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    version: u32,
    mesh: Mesh,
}

/// Cache file name for a mesh request.
pub fn cache_file_name(hash: &str, h: f64, beta: f64) -> String {
    format!("mesh-{}-h{:e}-b{:e}.json", &hash[..16], h, beta)
}

/// Loads a cached mesh when hashes and parameters match, otherwise generates
/// and stores it.
pub fn cached_mesh(dir: Option<&Path>, domain: &DomainSpec, h: f64, beta: f64) -> Result<Mesh, FemError> {
    let Some(dir) = dir else {
        return generate_graded_mesh(domain, h, beta);
    };
    let hash = domain_hash(domain);
    let path = dir.join(cache_file_name(&hash, h, beta));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(mesh) = Mesh::from_json(&text) {
            if mesh.domain_hash == hash && mesh.h == h && mesh.beta == beta {
                return Ok(mesh);
            }
        }
    }
    let mesh = generate_graded_mesh(domain, h, beta)?;
    std::fs::create_dir_all(dir).map_err(|e| FemError::Cache(e.to_string()))?;
    std::fs::write(&path, mesh.to_json()).map_err(|e| FemError::Cache(e.to_string()))?;
    Ok(mesh)
}

/// Barycentric location by a uniform bucket grid over triangle bounding boxes.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

/// Interpolation stencil: vertex indices with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub vertices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &mesh.vertices {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-300);
        let target = (mesh.triangles.len() as f64).sqrt().max(1.0);
        let cell = span / target;
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.vertices[i]);
            let xs = pts.map(|p| p.x);
            let ys = pts.map(|p| p.y);
            let fx = |x: f64| (((x - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let fy = |y: f64| (((y - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            let (x0, x1) = (fx(xs.iter().cloned().fold(f64::INFINITY, f64::min)), fx(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            let (y0, y1) = (fy(ys.iter().cloned().fold(f64::INFINITY, f64::min)), fy(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            for j in y0..=y1 {
                for i in x0..=x1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        PointLocator {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    pub fn barycentric(&self, t: usize, p: &Point) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t].map(|i| self.mesh.vertices[i]);
        let det = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
        let l1 = ((p - a).x * (c - a).y - (p - a).y * (c - a).x) / det;
        let l2 = ((b - a).x * (p - a).y - (b - a).y * (p - a).x) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Triangle containing `p` and its barycentric coordinates; points within
    /// `1e-9` (relative) outside the mesh snap to the nearest triangle.
    pub fn locate(&self, p: &Point) -> Option<(usize, [f64; 3])> {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
                    continue;
                }
                for &t in &self.buckets[jj as usize * self.nx + ii as usize] {
                    let w = self.barycentric(t, p);
                    let m = w[0].min(w[1]).min(w[2]);
                    if best.as_ref().is_none_or(|b| m > b.2) {
                        best = Some((t, w, m));
                    }
                }
            }
        }
        let (t, w, m) = best?;
        if m < -1e-9 {
            return None;
        }
        Some((t, w))
    }

    /// Interpolation stencil at `p`, collapsing onto a vertex when `p`
    /// coincides with it.
    pub fn stencil(&self, p: &Point) -> Option<Stencil> {
        let (t, w) = self.locate(p)?;
        let tri = self.mesh.triangles[t];
        let tol = 1e-12 * self.cell.max(1e-300) * self.nx.max(self.ny) as f64;
        for k in 0..3 {
            if (self.mesh.vertices[tri[k]] - p).norm() <= tol {
                return Some(Stencil {
                    vertices: vec![tri[k]],
                    weights: vec![1.0],
                });
            }
        }
        let w = w.map(|x| x.max(0.0));
        let s: f64 = w.iter().sum();
        Some(Stencil {
            vertices: tri.to_vec(),
            weights: w.iter().map(|x| x / s).collect(),
        })
    }

    pub fn interpolate<T>(&self, p: &Point, values: &[T]) -> Option<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let s = self.stencil(p)?;
        let mut acc = values[s.vertices[0]] * s.weights[0];
        for k in 1..s.vertices.len() {
            acc = acc + values[s.vertices[k]] * s.weights[k];
        }
        Some(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_canonical_domain, Shape};
    use std::f64::consts::PI;

    fn kite() -> DomainSpec {
        build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap()
    }

    #[test]
    fn quasi_uniform_mesh() {
        let d = kite();
        let m = generate_graded_mesh(&d, 0.1, 1.0).unwrap();
        assert!(m.min_angle_deg() >= MIN_ANGLE_DEG);
        let total: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
        assert!((total - d.area()).abs() < 1e-12);
        let g1 = m.corner_vertex(Corner::G1);
        assert!((m.vertex_angle(g1) - 2.0 * PI / 3.0).abs() < 1e-6);
    }

    #[test]
    fn grading_shrinks_first_ring() {
        let d = kite();
        let m1 = generate_graded_mesh(&d, 0.05, 1.0).unwrap();
        let m2 = generate_graded_mesh(&d, 0.05, 2.0).unwrap();
        for c in Corner::BOTH {
            assert!(m2.first_ring_diameter(c) <= 0.6 * m1.first_ring_diameter(c));
        }
        assert!(m2.min_angle_deg() >= MIN_ANGLE_DEG);
    }

    #[test]
    fn rejects_coarse_h() {
        let d = kite();
        assert!(matches!(
            generate_graded_mesh(&d, 0.2, 1.0),
            Err(FemError::MeshSizeTooLarge { .. })
        ));
        assert!(generate_graded_mesh(&d, 0.1, 0.5).is_err());
    }

    #[test]
    fn deterministic_and_round_trips() {
        let d = kite();
        let a = generate_graded_mesh(&d, 0.1, 2.0).unwrap();
        let b = generate_graded_mesh(&d, 0.1, 2.0).unwrap();
        assert_eq!(a, b);
        let back = Mesh::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn lens_mesh() {
        let d = build_canonical_domain(PI / 4.0, 1.0, Shape::LensSpline).unwrap();
        let m = generate_graded_mesh(&d, 0.1, 2.0).unwrap();
        assert!(m.min_angle_deg() >= MIN_ANGLE_DEG);
    }

    #[test]
    fn locator_reproduces_linear_functions() {
        let d = kite();
        let m = generate_graded_mesh(&d, 0.05, 2.0).unwrap();
        let loc = m.locator();
        let vals: Vec<f64> = m.vertices.iter().map(|p| 2.0 * p.x - 3.0 * p.y + 0.5).collect();
        for k in 0..200 {
            let p = Point::new(0.05 + 0.9 * (k as f64 * 0.618).fract(), 0.2 * ((k as f64 * 0.377).fract() - 0.5));
            if !d.contains(&p) {
                continue;
            }
            let v = loc.interpolate(&p, &vals).unwrap();
            assert!((v - (2.0 * p.x - 3.0 * p.y + 0.5)).abs() < 1e-12);
        }
        let s = loc.stencil(&d.corners.g1).unwrap();
        assert_eq!(s.weights, vec![1.0]);
        assert!(loc.locate(&Point::new(-0.5, 0.0)).is_none());
    }
}
