//! Weighted corner norms and singular-expansion fits near the conjugation points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::fem::assembly::p1_gradients;
use crate::fem::Mesh;
use crate::geometry::{Corner, DomainSpec, Point};
use crate::spectral::Eigenpair;
use crate::C64;

/// Ratio of coefficient size to fit residual below which a corner counts as regular.
pub const REGULAR_FACTOR: f64 = 10.0;
/// Fits with a larger design condition number are rejected.
pub const MAX_FIT_CONDITION: f64 = 1e8;
/// Midpoint grid per annulus: angle × log-radius.
pub const FIT_GRID: usize = 32;

/// Degree-4 symmetric rule on the reference triangle: barycentric points and weights.
const RULE6: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.816_847_572_980_459;
    const B1: f64 = 0.091_576_213_509_771;
    const W1: f64 = 0.109_951_743_655_322;
    const A2: f64 = 0.108_103_018_168_070;
    const B2: f64 = 0.445_948_490_915_965;
    const W2: f64 = 0.223_381_589_678_011;
    [
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub k: u8,
    pub a: f64,
    pub corners: [Point; 2],
}

impl WeightedNormSpec {
    pub fn new(k: u8, a: f64, domain: &DomainSpec) -> Self {
        WeightedNormSpec {
            k: k.min(2),
            a,
            corners: [domain.corners.g1, domain.corners.g2],
        }
    }

    fn rho(&self, p: &Point) -> f64 {
        (p - self.corners[0]).norm().min((p - self.corners[1]).norm())
    }
}

fn element_quadrature(mesh: &Mesh, t: usize, one_point: bool) -> Vec<(Point, [f64; 3], f64)> {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.vertices[i]);
    let area = mesh.area(t);
    if one_point {
        let third = 1.0 / 3.0;
        return vec![(mesh.centroid(t), [third; 3], area)];
    }
    RULE6
        .iter()
        .map(|(b, w)| {
            let x = p[0].coords * b[0] + p[1].coords * b[1] + p[2].coords * b[2];
            (Point::from(x), *b, w * area)
        })
        .collect()
}

/// `Σ_{|α|≤k} ∫ ρ^{2(a+|α|-k)} |D^α u|²` under the square root. Second
/// derivatives of P1 functions vanish elementwise. Triangles with a corner
/// vertex use the centroid rule, where `ρ > 0`.
pub fn weighted_norm(mesh: &Mesh, u: &[C64], spec: &WeightedNormSpec) -> f64 {
    let k = spec.k as f64;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let touches = tri.iter().any(|&i| mesh.markers[i].corner().is_some());
        let p = tri.map(|i| mesh.vertices[i]);
        let g = p1_gradients(&p, mesh.area(t));
        let grad_sq = if spec.k >= 1 {
            let gx: C64 = (0..3).map(|j| u[tri[j]] * g[j].x).sum();
            let gy: C64 = (0..3).map(|j| u[tri[j]] * g[j].y).sum();
            gx.norm_sqr() + gy.norm_sqr()
        } else {
            0.0
        };
        for (x, b, w) in element_quadrature(mesh, t, touches) {
            let rho = spec.rho(&x);
            let val: C64 = (0..3).map(|j| u[tri[j]] * b[j]).sum();
            total += w * rho.powf(2.0 * (spec.a - k)) * val.norm_sqr();
            if spec.k >= 1 {
                total += w * rho.powf(2.0 * (spec.a + 1.0 - k)) * grad_sq;
            }
        }
    }
    total.sqrt()
}

/// Unweighted `W^k_2` norm (`k ≤ 2`), optionally restricted to triangles
/// selected by `keep`.
pub fn sobolev_norm(mesh: &Mesh, u: &[C64], k: u8, keep: impl Fn(usize) -> bool) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !keep(t) {
            continue;
        }
        let p = tri.map(|i| mesh.vertices[i]);
        let area = mesh.area(t);
        let g = p1_gradients(&p, area);
        for (_, b, w) in element_quadrature(mesh, t, false) {
            let val: C64 = (0..3).map(|j| u[tri[j]] * b[j]).sum();
            total += w * val.norm_sqr();
        }
        if k >= 1 {
            let gx: C64 = (0..3).map(|j| u[tri[j]] * g[j].x).sum();
            let gy: C64 = (0..3).map(|j| u[tri[j]] * g[j].y).sum();
            total += area * (gx.norm_sqr() + gy.norm_sqr());
        }
    }
    total.sqrt()
}

/// `u ≈ c·φ₀(ω) + d·φ₀(ω)·ln r` on an annulus around one corner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularFit {
    pub corner: Corner,
    pub c: C64,
    pub d: C64,
    /// Weighted residual relative to the weighted norm of `u_h` on the annulus.
    pub residual: f64,
    /// Weighted root-mean-square residual.
    pub abs_residual: f64,
    pub annulus: [f64; 2],
    pub condition: f64,
    pub lambda0: C64,
    /// `φ₀` sampled at `-ω₀, 0, ω₀`.
    pub phi0_samples: [C64; 3],
}

/// Samples of a function on the polar midpoint grid with quadrature weights.
struct PolarSamples {
    omega: Vec<f64>,
    log_r: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<C64>,
}

fn polar_samples(
    domain: &DomainSpec,
    mesh: &Mesh,
    u: &[C64],
    corner: Corner,
    annulus: [f64; 2],
) -> Result<PolarSamples, AnalysisError> {
    let [r_min, r_max] = annulus;
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(AnalysisError::InvalidAnnulus {
            r_min,
            r_max,
            reason: "radii must satisfy 0 < r_min < r_max",
        });
    }
    if r_max > domain.eps() {
        return Err(AnalysisError::InvalidAnnulus {
            r_min,
            r_max,
            reason: "annulus must lie within eps of the corner",
        });
    }
    let w0 = domain.omega0();
    let (l0, l1) = (r_min.ln(), r_max.ln());
    let n = FIT_GRID;
    let locator = mesh.locator();
    let mut s = PolarSamples {
        omega: Vec::with_capacity(n * n),
        log_r: Vec::with_capacity(n * n),
        weights: Vec::with_capacity(n * n),
        values: Vec::with_capacity(n * n),
    };
    let (dw, dl) = (2.0 * w0 / n as f64, (l1 - l0) / n as f64);
    for i in 0..n {
        let omega = -w0 + (i as f64 + 0.5) * dw;
        for j in 0..n {
            let lr = l0 + (j as f64 + 0.5) * dl;
            let r = lr.exp();
            let p = domain.from_local_polar(corner, omega, r);
            let val = locator.interpolate(&p, u).ok_or(AnalysisError::InvalidAnnulus {
                r_min,
                r_max,
                reason: "annulus leaves the mesh",
            })?;
            s.omega.push(omega);
            s.log_r.push(lr);
            // area element r dr dω = r² d(ln r) dω
            s.weights.push(r * r * dw * dl);
            s.values.push(val);
        }
    }
    Ok(s)
}

/// Weighted least-squares fit against `{φ₀(ω), φ₀(ω)·ln r}`.
pub fn fit_singular_expansion(
    domain: &DomainSpec,
    mesh: &Mesh,
    u: &[C64],
    corner: Corner,
    phi0: &Eigenpair,
    annulus: [f64; 2],
) -> Result<SingularFit, AnalysisError> {
    let s = polar_samples(domain, mesh, u, corner, annulus)?;
    let m = s.values.len();
    let mut design = DMatrix::<C64>::zeros(m, 2);
    let mut rhs = DVector::<C64>::zeros(m);
    for i in 0..m {
        let sw = s.weights[i].sqrt();
        let p = phi0.eval(s.omega[i]);
        design[(i, 0)] = p * sw;
        design[(i, 1)] = p * (s.log_r[i] * sw);
        rhs[i] = s.values[i] * sw;
    }
    let sv = design.clone().svd(true, true);
    let (smax, smin) = sv.singular_values.iter().fold((0.0f64, f64::INFINITY), |(a, b), &x| (a.max(x), b.min(x)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_FIT_CONDITION {
        return Err(AnalysisError::IllConditioned { condition });
    }
    let coef = sv
        .solve(&rhs, 0.0)
        .map_err(|_| AnalysisError::IllConditioned { condition })?;
    let resid = (&design * &coef - &rhs).norm();
    let total_w: f64 = s.weights.iter().sum();
    let unorm = rhs.norm();
    let w0 = domain.omega0();
    Ok(SingularFit {
        corner,
        c: coef[0],
        d: coef[1],
        residual: if unorm > 0.0 { resid / unorm } else { 0.0 },
        abs_residual: resid / total_w.sqrt(),
        annulus,
        condition,
        lambda0: phi0.lambda0,
        phi0_samples: [phi0.eval(-w0), phi0.eval(0.0), phi0.eval(w0)],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Regular,
    SingularC,
    SingularD,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Regular => "regular",
            Classification::SingularC => "singular(c)",
            Classification::SingularD => "singular(d)",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Threshold for a coefficient to count as present.
pub fn regular_threshold(fit: &SingularFit, u_scale: f64) -> f64 {
    REGULAR_FACTOR * fit.abs_residual.max(1e-12 * u_scale)
}

/// Regular when every corner has `|c|` and `|d|` below the threshold;
/// otherwise the dominant offending coefficient over the corners names the
/// class, `d` taking precedence.
pub fn membership_report(fits: &[SingularFit], u: &[C64]) -> Result<Classification, AnalysisError> {
    for c in Corner::BOTH {
        if !fits.iter().any(|f| f.corner == c) {
            return Err(AnalysisError::MissingFit(c.index()));
        }
    }
    let scale = u.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut class = Classification::Regular;
    for fit in fits {
        let thr = regular_threshold(fit, scale);
        if fit.d.norm() > thr {
            return Ok(Classification::SingularD);
        }
        if fit.c.norm() > thr {
            class = Classification::SingularC;
        }
    }
    Ok(class)
}

/// Interpolant of `c·φ₀(ω) + d·φ₀(ω)·ln r` around the nearer corner, cut off
/// to zero beyond `1.5·eps` and at the corner vertices.
pub fn synthetic_singular(domain: &DomainSpec, mesh: &Mesh, phi0: &Eigenpair, c: C64, d: C64) -> Vec<C64> {
    mesh.vertices
        .iter()
        .map(|p| {
            let corner = if (p - domain.corners.g1).norm() <= (p - domain.corners.g2).norm() {
                Corner::G1
            } else {
                Corner::G2
            };
            let (omega, r) = domain.local_polar(corner, p);
            if r == 0.0 || r > 1.5 * domain.eps() {
                C64::new(0.0, 0.0)
            } else {
                phi0.eval(omega) * (c + d * r.ln())
            }
        })
        .collect()
}

/// Default annulus `[0.25·eps, 0.75·eps]`.
pub fn default_annulus(domain: &DomainSpec) -> [f64; 2] {
    [0.25 * domain.eps(), 0.75 * domain.eps()]
}
