//! Manufactured solution `u = sin(πx)·Π ℓ_k` vanishing on a polygonal boundary.

use nalgebra::Vector2;

use super::assembly::p1_gradients;
use super::mesh::Mesh;
use crate::error::FemError;
use crate::geometry::{DomainSpec, Point};
use crate::C64;

/// Polygons with more edges than this are rejected (curved boundaries).
const MAX_EDGES: usize = 12;

#[derive(Clone, Debug)]
pub struct Manufactured {
    /// Edge lines `ℓ(p) = n·(p - a)` with unit normals.
    lines: Vec<(Vector2<f64>, Point)>,
}

impl Manufactured {
    pub fn for_polygon(domain: &DomainSpec) -> Result<Self, FemError> {
        let poly = domain.polygon();
        if poly.len() > MAX_EDGES {
            return Err(FemError::InvalidParameter(format!(
                "manufactured solution needs a polygon with at most {MAX_EDGES} edges, got {}",
                poly.len()
            )));
        }
        let lines = (0..poly.len())
            .map(|i| {
                let a = poly[i];
                let e = poly[(i + 1) % poly.len()] - a;
                (Vector2::new(-e.y, e.x).normalize(), a)
            })
            .collect();
        Ok(Manufactured { lines })
    }

    fn ell(&self, p: &Point) -> Vec<f64> {
        self.lines.iter().map(|(n, a)| n.dot(&(p - a))).collect()
    }

    fn product_except(l: &[f64], skip: &[usize]) -> f64 {
        l.iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, v)| v)
            .product()
    }

    pub fn u(&self, p: &Point) -> f64 {
        (std::f64::consts::PI * p.x).sin() * self.ell(p).iter().product::<f64>()
    }

    pub fn grad(&self, p: &Point) -> Vector2<f64> {
        let pi = std::f64::consts::PI;
        let l = self.ell(p);
        let prod: f64 = l.iter().product();
        let g = (pi * p.x).sin();
        let dg = Vector2::new(pi * (pi * p.x).cos(), 0.0);
        let mut dp = Vector2::zeros();
        for (k, (n, _)) in self.lines.iter().enumerate() {
            dp += n * Self::product_except(&l, &[k]);
        }
        dg * prod + dp * g
    }

    pub fn laplacian(&self, p: &Point) -> f64 {
        let pi = std::f64::consts::PI;
        let l = self.ell(p);
        let prod: f64 = l.iter().product();
        let g = (pi * p.x).sin();
        let dg = Vector2::new(pi * (pi * p.x).cos(), 0.0);
        let lap_g = -pi * pi * g;
        let mut dp = Vector2::zeros();
        let mut lap_p = 0.0;
        for (k, (nk, _)) in self.lines.iter().enumerate() {
            dp += nk * Self::product_except(&l, &[k]);
            for (m, (nm, _)) in self.lines.iter().enumerate() {
                if m != k {
                    lap_p += nk.dot(nm) * Self::product_except(&l, &[k, m]);
                }
            }
        }
        lap_g * prod + 2.0 * dg.dot(&dp) + g * lap_p
    }
}

/// `|u_h - u|_{H¹}` by the edge-midpoint rule on each triangle.
pub fn h1_seminorm_error(mesh: &Mesh, u_h: &[C64], exact: &Manufactured) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        let area = mesh.area(t);
        let grads = p1_gradients(&p, area);
        let mut gh = nalgebra::Vector2::<C64>::zeros();
        for k in 0..3 {
            gh += grads[k].map(|x| C64::new(x, 0.0)) * u_h[tri[k]];
        }
        for k in 0..3 {
            let m = Point::from((p[k].coords + p[(k + 1) % 3].coords) * 0.5);
            let ge = exact.grad(&m);
            total += area / 3.0 * ((gh.x - ge.x).norm_sqr() + (gh.y - ge.y).norm_sqr());
        }
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_canonical_domain, Shape};
    use std::f64::consts::PI;

    #[test]
    fn derivatives_match_finite_differences() {
        let d = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
        let m = Manufactured::for_polygon(&d).unwrap();
        let p = Point::new(0.4, 0.07);
        let h = 1e-4;
        let e = |dx: f64, dy: f64| m.u(&Point::new(p.x + dx, p.y + dy));
        let gx = (e(h, 0.0) - e(-h, 0.0)) / (2.0 * h);
        let gy = (e(0.0, h) - e(0.0, -h)) / (2.0 * h);
        let lap = (e(h, 0.0) + e(-h, 0.0) + e(0.0, h) + e(0.0, -h) - 4.0 * e(0.0, 0.0)) / (h * h);
        let g = m.grad(&p);
        assert!((g.x - gx).abs() < 1e-7 && (g.y - gy).abs() < 1e-7);
        assert!((m.laplacian(&p) - lap).abs() < 1e-4);
        for v in d.polygon() {
            assert!(m.u(v).abs() < 1e-15);
        }
    }
}
