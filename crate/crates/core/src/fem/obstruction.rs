//! Loads that certify non-solvability of the interior-supported problem.
//!
//! `v` is a bump equal to 1 around `Ω(∂G)` and 0 near `∂G`; `w` lifts the
//! boundary data `-t·v(Ω(y))` on `Γ₁` and 0 on `Γ₂` while vanishing near
//! `Ω(∂G)`. A solution with load `Δ(v + w)` would need `u(Ω(g₁)) = 1` from the
//! construction and `u(Ω(g₁)) = 0` from the conditions at the corner.

use serde::Serialize;

use super::assembly::{assemble_operator, BcFamily, DiscreteNonlocalOperator};
use super::linalg::{decompose, solve_with};
use super::mesh::{Marker, Mesh};
use crate::error::FemError;
use crate::geometry::{smoothstep5, Corner, DiffeoMap, DomainSpec, MapSpec, Point};
use crate::C64;

/// Declared obstruction threshold for `|t| > 0`.
pub const OBSTRUCTION_THRESHOLD: f64 = 0.1;

/// Transition of the bump between gauge levels `s + 0.45(1-s)` and `s + 0.85(1-s)`.
const INNER_FRACTION: f64 = 0.45;
const OUTER_FRACTION: f64 = 0.85;

/// The continuous pair `(v, w)` evaluated pointwise.
#[derive(Clone, Debug)]
pub struct ObstructionPair {
    domain: DomainSpec,
    pub t: C64,
    pub ratio: f64,
    q1: f64,
    q2: f64,
    side: f64,
    y_c: f64,
}

impl ObstructionPair {
    pub fn new(domain: &DomainSpec, omega: &DiffeoMap, t: C64) -> Result<Self, FemError> {
        let MapSpec::InteriorContraction { ratio, center, .. } = omega.spec() else {
            return Err(FemError::Obstruction("needs an interior contraction map".into()));
        };
        if (center - domain.star_center).norm() > 1e-12 * domain.scale {
            return Err(FemError::Obstruction("contraction must be centred at the star center".into()));
        }
        let s = *ratio;
        let chord = domain.corners.g2 - domain.corners.g1;
        let mid = domain.gamma1.eval(0.5);
        let side_raw = chord.x * (mid - domain.corners.g1).y - chord.y * (mid - domain.corners.g1).x;
        let pair = ObstructionPair {
            domain: domain.clone(),
            t,
            ratio: s,
            q1: s + INNER_FRACTION * (1.0 - s),
            q2: s + OUTER_FRACTION * (1.0 - s),
            side: side_raw.signum() / chord.norm(),
            y_c: domain.eps() * domain.omega0().sin(),
        };
        pair.check()?;
        Ok(pair)
    }

    /// Bump `v`: 1 for gauge ≤ q1, 0 for gauge ≥ q2.
    pub fn v(&self, y: &Point) -> f64 {
        let q = self.domain.star_gauge(y);
        1.0 - smoothstep5((q - self.q1) / (self.q2 - self.q1))
    }

    /// Cutoff `η = 1 - v`: vanishes on a neighbourhood of `Ω(∂G)`.
    pub fn eta(&self, y: &Point) -> f64 {
        let q = self.domain.star_gauge(y);
        smoothstep5((q - self.q1) / (self.q2 - self.q1))
    }

    /// Boundary selector: 1 on `Γ₁`, 0 on `Γ₂`, harmonic in each corner sector
    /// of radius `eps`.
    pub fn psi(&self, y: &Point) -> f64 {
        let eps = self.domain.eps();
        let g1 = self.domain.corners.g1;
        let chord = self.domain.corners.g2 - g1;
        let signed = self.side * (chord.x * (y - g1).y - chord.y * (y - g1).x);
        let far = smoothstep5((signed + self.y_c) / (2.0 * self.y_c));
        for c in Corner::BOTH {
            let (omega, r) = self.domain.local_polar(c, y);
            if r < 2.0 * eps {
                let w0 = self.domain.omega0();
                let near = ((w0 - omega) / (2.0 * w0)).clamp(0.0, 1.0);
                let blend = if r <= eps { 1.0 } else { 1.0 - smoothstep5((r - eps) / eps) };
                return blend * near + (1.0 - blend) * far;
            }
        }
        far
    }

    pub fn w(&self, y: &Point) -> C64 {
        -self.t * (self.psi(y) * self.eta(y))
    }

    /// `u = v + w`; zero at the corners.
    pub fn u(&self, y: &Point) -> C64 {
        if self.domain.rho(y) == 0.0 {
            return C64::new(0.0, 0.0);
        }
        C64::new(self.v(y), 0.0) + self.w(y)
    }

    fn check(&self) -> Result<(), FemError> {
        if self.q2 >= 1.0 {
            return Err(FemError::Obstruction("bump support reaches the boundary".into()));
        }
        let tol = 1e-12;
        for (curve, target) in [(&self.domain.gamma1, 1.0), (&self.domain.gamma2, 0.0)] {
            for k in 1..400 {
                let y = curve.eval(k as f64 / 400.0);
                if self.v(&y) != 0.0 {
                    return Err(FemError::Obstruction("bump support intersects the boundary".into()));
                }
                if (self.psi(&y) - target).abs() > tol {
                    return Err(FemError::Obstruction(format!(
                        "boundary selector is {} at ({}, {})",
                        self.psi(&y),
                        y.x,
                        y.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Interpolant of the obstruction pair on the mesh; corner vertices get 0.
pub fn obstruction_interpolant(pair: &ObstructionPair, mesh: &Mesh) -> Vec<C64> {
    mesh.vertices
        .iter()
        .zip(&mesh.markers)
        .map(|(p, m)| if m.corner().is_some() { C64::new(0.0, 0.0) } else { pair.u(p) })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionRow {
    pub h: f64,
    pub n_unknowns: usize,
    /// Interpolant of the constructed `u` at `Ω(g₁)`.
    pub constructed_value: C64,
    /// Relative residual of the least-squares solve with load `L·u_h`.
    pub residual: f64,
    /// Computed solution at `Ω(g₁)`.
    pub u_at_omega_g1: C64,
    /// `max(residual, |u_h(Ω(g₁))|)`.
    pub indicator: f64,
    /// `|1 - u_h(Ω(g₁))|`.
    pub gap_from_constructed: f64,
    pub rank_deficient: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionReport {
    pub t: C64,
    pub ratio: f64,
    pub lambda_shift: Option<C64>,
    pub threshold: f64,
    pub rows: Vec<ObstructionRow>,
    /// Minimum indicator over the meshes.
    pub min_indicator: f64,
    pub obstructed: bool,
}

/// Load `L_eq·u_h` of the obstruction interpolant for an assembled operator.
pub fn obstruction_load(op: &DiscreteNonlocalOperator, u_h: &[C64]) -> Vec<C64> {
    op.apply_laplacian(u_h)
}

/// Runs one mesh of the obstruction test for an already assembled operator.
pub fn obstruction_row(
    pair: &ObstructionPair,
    omega: &DiffeoMap,
    mesh: &Mesh,
    op: &DiscreteNonlocalOperator,
    decomposition: &super::linalg::Decomposition,
) -> Result<ObstructionRow, FemError> {
    let u_h = obstruction_interpolant(pair, mesh);
    let f = obstruction_load(op, &u_h);
    let sol = solve_with(op, decomposition, &f)?;
    let target = omega.eval(&pair.domain.corners.g1);
    let locator = mesh.locator();
    let at = |vals: &[C64]| {
        locator.interpolate(&target, vals).ok_or(FemError::PointLocation {
            vertex: mesh.corner_vertex(Corner::G1),
            x: target.x,
            y: target.y,
        })
    };
    let constructed_value = at(&u_h)?;
    let u_at = at(&sol.u)?;
    Ok(ObstructionRow {
        h: mesh.h,
        n_unknowns: op.n_cols(),
        constructed_value,
        residual: sol.residual,
        u_at_omega_g1: u_at,
        indicator: sol.residual.max(u_at.norm()),
        gap_from_constructed: (C64::new(1.0, 0.0) - u_at).norm(),
        rank_deficient: sol.rank_deficient,
    })
}

pub fn obstruction_test(
    domain: &DomainSpec,
    omega: &DiffeoMap,
    t: C64,
    meshes: &[Mesh],
    lambda_shift: Option<C64>,
) -> Result<ObstructionReport, FemError> {
    if t.norm() > 1.0 {
        return Err(FemError::Obstruction(format!("|t| = {} exceeds 1", t.norm())));
    }
    let pair = ObstructionPair::new(domain, omega, t)?;
    let family = BcFamily::InteriorSupported { omega: omega.clone() };
    let mut rows = Vec::new();
    for mesh in meshes {
        let op = assemble_operator(mesh, &family, t, lambda_shift)?;
        let d = decompose(&op.a);
        rows.push(obstruction_row(&pair, omega, mesh, &op, &d)?);
    }
    let min_indicator = rows.iter().map(|r| r.indicator).fold(f64::INFINITY, f64::min);
    Ok(ObstructionReport {
        t,
        ratio: pair.ratio,
        lambda_shift,
        threshold: OBSTRUCTION_THRESHOLD,
        obstructed: min_indicator > OBSTRUCTION_THRESHOLD,
        min_indicator,
        rows,
    })
}

/// True when every vertex of the triangles around `Ω(∂G)` lies where `v = 1`
/// and `w = 0`, so the interpolant reproduces the construction there.
pub fn interpolation_is_exact_near_image(pair: &ObstructionPair, omega: &DiffeoMap, mesh: &Mesh) -> bool {
    let locator = mesh.locator();
    mesh.vertices
        .iter()
        .zip(&mesh.markers)
        .filter(|(_, m)| **m != Marker::Interior)
        .all(|(y, _)| match locator.locate(&omega.eval(y)) {
            Some((tri, _)) => mesh.triangles[tri]
                .iter()
                .all(|&i| pair.v(&mesh.vertices[i]) == 1.0 && pair.w(&mesh.vertices[i]) == C64::new(0.0, 0.0)),
            None => false,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::generate_graded_mesh;
    use crate::geometry::{build_canonical_domain, build_interior_contraction_map, CurveId, Shape};
    use std::f64::consts::PI;

    #[test]
    fn constructed_pair_meets_boundary_data() {
        let d = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
        let omega = build_interior_contraction_map(&d, 0.5).unwrap();
        let t = C64::new(0.2, 0.0);
        let pair = ObstructionPair::new(&d, &omega, t).unwrap();
        for k in 1..100 {
            let s = k as f64 / 100.0;
            let y1 = d.curve(CurveId::Gamma1).eval(s);
            let y2 = d.curve(CurveId::Gamma2).eval(s);
            assert!((pair.u(&y1) + t * pair.u(&omega.eval(&y1))).norm() < 1e-12);
            assert!(pair.u(&y2).norm() < 1e-12);
        }
        assert_eq!(pair.u(&omega.eval(&d.corners.g1)), C64::new(1.0, 0.0));
        for h in [0.1, 0.05] {
            let m = generate_graded_mesh(&d, h, 2.0).unwrap();
            assert!(interpolation_is_exact_near_image(&pair, &omega, &m), "{h}");
        }
    }

    #[test]
    fn control_is_reproduced_at_zero_t() {
        let d = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
        let omega = build_interior_contraction_map(&d, 0.5).unwrap();
        let m = generate_graded_mesh(&d, 0.1, 2.0).unwrap();
        let rep = obstruction_test(&d, &omega, C64::new(0.0, 0.0), &[m], None).unwrap();
        let row = &rep.rows[0];
        assert_eq!(row.constructed_value, C64::new(1.0, 0.0));
        assert!(row.residual < 1e-10);
        assert!(row.gap_from_constructed < 1e-10);
    }

    #[test]
    fn rejects_large_ratio() {
        let d = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
        let omega = build_interior_contraction_map(&d, 0.5).unwrap();
        assert!(obstruction_test(&d, &omega, C64::new(1.5, 0.0), &[], None).is_err());
    }
}
