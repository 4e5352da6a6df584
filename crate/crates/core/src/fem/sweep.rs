//! Kernel-dimension and solvability sweeps over `t` and mesh size.

use serde::Serialize;

use super::assembly::{assemble_operator, BcFamily, ExampleId};
use super::linalg::{cosine_with_constant, decompose, kernel_from, kernel_split_with_fallback, solve_with, TolRule};
use super::mesh::Mesh;
use super::obstruction::{obstruction_row, ObstructionPair};
use crate::error::FemError;
use crate::geometry::{DomainSpec, Point};
use crate::C64;

/// Bump `u* = (1 - |y-c|²/R²)⁴` around the star center. Its support avoids
/// `∂G` and every `Ω_i(Γ_i)`, so `u*` satisfies the nonlocal conditions for all
/// `t` and `f = Δu*` is a compatible load.
#[derive(Clone, Copy, Debug)]
pub struct BumpLoad {
    pub center: Point,
    pub radius: f64,
}

impl BumpLoad {
    pub const RADIUS_FRACTION: f64 = 0.12;

    pub fn for_domain(domain: &DomainSpec) -> Self {
        BumpLoad {
            center: domain.star_center,
            radius: Self::RADIUS_FRACTION * domain.scale,
        }
    }

    pub fn eval(&self, y: &Point) -> f64 {
        let s = (y - self.center).norm_squared() / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - s).powi(4)
        }
    }

    /// `Δu* = (48 s (1-s)² - 16 (1-s)³) / R²` with `s = |y-c|²/R²`.
    pub fn laplacian(&self, y: &Point) -> f64 {
        let r2 = self.radius * self.radius;
        let s = (y - self.center).norm_squared() / r2;
        if s >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s;
            (48.0 * s * q * q - 16.0 * q * q * q) / r2
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub example: ExampleId,
    pub t: C64,
    pub h: f64,
    pub n_unknowns: usize,
    pub n_rows: usize,
    pub ker_dim: usize,
    pub kernel_rule: TolRule,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Residual of the obstruction load (ex3) or the compatible bump load (ex1, ex2).
    pub residual: f64,
    pub rank_deficient: bool,
    /// Computed solution at `Ω(g₁)`, ex3 only.
    pub u_at_omega_g1: Option<C64>,
    /// Cosine similarity of the first kernel vector with constants.
    pub kernel_cosine: Option<f64>,
    /// Error message when the row was aborted.
    pub aborted: Option<String>,
    #[serde(skip)]
    pub solution: Vec<C64>,
    #[serde(skip)]
    pub kernel_basis: Vec<Vec<C64>>,
}

impl SweepRow {
    fn aborted(example: ExampleId, t: C64, h: f64, err: &FemError) -> Self {
        SweepRow {
            example,
            t,
            h,
            n_unknowns: 0,
            n_rows: 0,
            ker_dim: 0,
            kernel_rule: TolRule::Gap,
            sigma_min: f64::NAN,
            sigma_max: f64::NAN,
            residual: f64::NAN,
            rank_deficient: false,
            u_at_omega_g1: None,
            kernel_cosine: None,
            aborted: Some(err.to_string()),
            solution: vec![],
            kernel_basis: vec![],
        }
    }
}

pub struct SweepSpec<'a> {
    pub example: ExampleId,
    pub domain: &'a DomainSpec,
    pub family: &'a BcFamily,
    pub t_values: &'a [C64],
    pub lambda_shift: Option<C64>,
}

fn sweep_row(spec: &SweepSpec<'_>, mesh: &Mesh, t: C64) -> Result<SweepRow, FemError> {
    let op = assemble_operator(mesh, spec.family, t, spec.lambda_shift)?;
    let d = decompose(&op.a);
    let (_, rule) = kernel_split_with_fallback(&d);
    let kernel = kernel_from(&op, &d, rule)?;
    let (residual, rank_deficient, u_at, solution) = match spec.family {
        BcFamily::InteriorSupported { omega } => {
            let pair = ObstructionPair::new(spec.domain, omega, t)?;
            let row = obstruction_row(&pair, omega, mesh, &op, &d)?;
            (row.residual, row.rank_deficient, Some(row.u_at_omega_g1), vec![])
        }
        _ => {
            let bump = BumpLoad::for_domain(spec.domain);
            let f = op.load_vector(mesh, |y| C64::new(bump.laplacian(y), 0.0));
            let sol = solve_with(&op, &d, &f)?;
            (sol.residual, sol.rank_deficient, None, sol.u)
        }
    };
    Ok(SweepRow {
        example: spec.example,
        t,
        h: mesh.h,
        n_unknowns: op.n_cols(),
        n_rows: op.n_rows(),
        ker_dim: kernel.dimension,
        kernel_rule: rule,
        sigma_min: kernel.sigma_min,
        sigma_max: kernel.sigma_max,
        residual,
        rank_deficient,
        u_at_omega_g1: u_at,
        kernel_cosine: kernel.basis.first().map(|b| cosine_with_constant(b)),
        aborted: None,
        solution,
        kernel_basis: kernel.basis,
    })
}

/// One row per `(t, h)`, `t` outermost. Failures abort the row only.
pub fn index_proxy_sweep(spec: &SweepSpec<'_>, meshes: &[Mesh]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &t in spec.t_values {
        for mesh in meshes {
            rows.push(sweep_row(spec, mesh, t).unwrap_or_else(|e| SweepRow::aborted(spec.example, t, mesh.h, &e)));
        }
    }
    rows
}

/// Kernel dimensions in sweep order for one mesh size.
pub fn kernel_column(rows: &[SweepRow], h: f64) -> Vec<Option<usize>> {
    rows.iter()
        .filter(|r| r.h == h)
        .map(|r| r.aborted.is_none().then_some(r.ker_dim))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_laplacian_matches_differences() {
        let b = BumpLoad { center: Point::new(0.5, 0.0), radius: 0.12 };
        let h = 1e-4;
        for p in [Point::new(0.53, 0.02), Point::new(0.45, -0.07)] {
            let e = |dx: f64, dy: f64| b.eval(&Point::new(p.x + dx, p.y + dy));
            let fd = (e(h, 0.0) + e(-h, 0.0) + e(0.0, h) + e(0.0, -h) - 4.0 * e(0.0, 0.0)) / (h * h);
            assert!((fd - b.laplacian(&p)).abs() < 1e-4 * b.laplacian(&p).abs().max(1.0));
        }
    }
}
