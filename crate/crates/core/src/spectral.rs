//! One-dimensional model problems `φ'' - λ²φ = 0` on `(-ω₀, ω₀)` with either
//! the nonlocal conditions
//!
//! ```text
//! φ(-ω₀) - (1 + t) φ(0) = 0,    φ(ω₀) - (1 - t) φ(0) = 0
//! ```
//!
//! or Dirichlet conditions at both ends.
//!
//! Everything is expressed in the basis `{cosh(λω), sinh(λω)/λ}`, which is
//! entire in `λ` and reduces to `{1, ω}` at `λ = 0`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::SpectralError;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Nonlocal,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProblem {
    pub omega0: f64,
    pub t: C64,
    pub kind: ProblemKind,
}

impl ModelProblem {
    pub fn nonlocal(omega0: f64, t: C64) -> Self {
        ModelProblem {
            omega0,
            t,
            kind: ProblemKind::Nonlocal,
        }
    }

    pub fn dirichlet(omega0: f64) -> Self {
        ModelProblem {
            omega0,
            t: C64::new(0.0, 0.0),
            kind: ProblemKind::Dirichlet,
        }
    }

    /// Rows are the two conditions applied to `(cosh(λω), sinh(λω)/λ)`.
    pub fn condition_matrix(&self, lambda: C64) -> Matrix2<C64> {
        let w0 = self.omega0;
        let c = (lambda * w0).cosh();
        let s = sinhc(lambda * w0) * w0;
        let one = C64::new(1.0, 0.0);
        match self.kind {
            ProblemKind::Nonlocal => Matrix2::new(c - (one + self.t), -s, c - (one - self.t), s),
            ProblemKind::Dirichlet => Matrix2::new(c, -s, c, s),
        }
    }

    /// Applies the two conditions to an arbitrary function `φ`.
    fn apply_conditions(&self, phi: impl Fn(f64) -> C64) -> [C64; 2] {
        let w0 = self.omega0;
        let one = C64::new(1.0, 0.0);
        match self.kind {
            ProblemKind::Nonlocal => {
                let p0 = phi(0.0);
                [phi(-w0) - (one + self.t) * p0, phi(w0) - (one - self.t) * p0]
            }
            ProblemKind::Dirichlet => [phi(-w0), phi(w0)],
        }
    }
}

/// `sinh(z)/z`, entire.
pub fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        C64::new(1.0, 0.0) + z2 / 6.0 + z2 * z2 / 120.0 + z2 * z2 * z2 / 5040.0
    } else {
        z.sinh() / z
    }
}

/// Regularized fundamental basis `(cosh(λω), sinh(λω)/λ)` at `ω`.
pub fn basis(lambda: C64, omega: f64) -> (C64, C64) {
    ((lambda * omega).cosh(), sinhc(lambda * omega) * omega)
}

/// Derivatives in `ω` of the basis: `(λ sinh(λω), cosh(λω))`.
pub fn basis_derivative(lambda: C64, omega: f64) -> (C64, C64) {
    let z = lambda * omega;
    (lambda * lambda * omega * sinhc(z), z.cosh())
}

/// Characteristic determinant `Δ(λ)` of the condition matrix.
pub fn char_det(problem: &ModelProblem, lambda: C64) -> C64 {
    let m = problem.condition_matrix(lambda);
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub imag_min: f64,
    pub imag_max: f64,
    pub real_bound: f64,
}

impl Strip {
    pub fn new(imag_min: f64, imag_max: f64, real_bound: f64) -> Result<Self, SpectralError> {
        let s = Strip {
            imag_min,
            imag_max,
            real_bound,
        };
        s.validate()?;
        Ok(s)
    }

    /// Strip with `|Re λ| ≤ π/ω₀·(K + 1/2)`, `K = ⌈max|Im λ|·ω₀/π⌉`.
    pub fn with_default_bound(imag_min: f64, imag_max: f64, omega0: f64) -> Result<Self, SpectralError> {
        let k = (imag_min.abs().max(imag_max.abs()) * omega0 / PI).ceil().max(1.0);
        Strip::new(imag_min, imag_max, PI / omega0 * (k + 0.5))
    }

    fn validate(&self) -> Result<(), SpectralError> {
        if !(self.imag_min < self.imag_max) {
            return Err(SpectralError::InvalidStrip(format!(
                "imag_min {} must be below imag_max {}",
                self.imag_min, self.imag_max
            )));
        }
        if !(self.real_bound > 0.0 && self.real_bound.is_finite()) {
            return Err(SpectralError::InvalidStrip(format!(
                "real_bound {} must be positive",
                self.real_bound
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoundEigenvalue {
    pub lambda: C64,
    pub det_zero_order: usize,
    pub residual: f64,
}

const BASE_SAMPLES: usize = 512;
const MAX_BISECT_DEPTH: u32 = 40;
const ARG_STEP: f64 = PI / 4.0;
const MIN_CELL: f64 = 1e-3;
const NEWTON_TOL: f64 = 1e-12;
const CAUCHY_RADIUS: f64 = 0.05;
const CAUCHY_POINTS: usize = 32;

#[derive(Clone, Copy, Debug)]
struct Rect {
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
}

impl Rect {
    fn diameter(&self) -> f64 {
        (self.re1 - self.re0).hypot(self.im1 - self.im0)
    }

    fn center(&self) -> C64 {
        C64::new(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    /// Counter-clockwise boundary at parameter `s ∈ [0, 4)`.
    fn point(&self, s: f64) -> C64 {
        let k = (s.floor() as i64).clamp(0, 3);
        let u = s - k as f64;
        match k {
            0 => C64::new(self.re0 + (self.re1 - self.re0) * u, self.im0),
            1 => C64::new(self.re1, self.im0 + (self.im1 - self.im0) * u),
            2 => C64::new(self.re1 + (self.re0 - self.re1) * u, self.im1),
            _ => C64::new(self.re0, self.im1 + (self.im0 - self.im1) * u),
        }
    }

    fn split(&self, ratio: f64) -> (Rect, Rect) {
        if self.re1 - self.re0 >= self.im1 - self.im0 {
            let m = self.re0 + ratio * (self.re1 - self.re0);
            (Rect { re1: m, ..*self }, Rect { re0: m, ..*self })
        } else {
            let m = self.im0 + ratio * (self.im1 - self.im0);
            (Rect { im1: m, ..*self }, Rect { im0: m, ..*self })
        }
    }
}

/// Accumulated argument change of `f` along a closed path, divided by `2π`.
/// `Err(z)` reports a point where `f` vanishes or the walk cannot resolve it.
fn winding_number<F, P>(f: &F, path: P, period: f64, samples: usize) -> Result<f64, C64>
where
    F: Fn(C64) -> C64,
    P: Fn(f64) -> C64,
{
    let eval = |s: f64| -> Result<(C64, C64), C64> {
        let z = path(s);
        let v = f(z);
        if v.norm() == 0.0 || !v.re.is_finite() || !v.im.is_finite() {
            Err(z)
        } else {
            Ok((z, v))
        }
    };
    fn step<F2>(eval: &F2, s0: f64, s1: f64, f0: C64, f1: C64, depth: u32) -> Result<f64, C64>
    where
        F2: Fn(f64) -> Result<(C64, C64), C64>,
    {
        let sm = 0.5 * (s0 + s1);
        let (zm, fm) = eval(sm)?;
        let d = (f1 / f0).arg();
        let d1 = (fm / f0).arg();
        let d2 = (f1 / fm).arg();
        if d1.abs() <= ARG_STEP && d2.abs() <= ARG_STEP && (d1 + d2 - d).abs() < 1e-9 {
            return Ok(d1 + d2);
        }
        if depth >= MAX_BISECT_DEPTH {
            return Err(zm);
        }
        Ok(step(eval, s0, sm, f0, fm, depth + 1)? + step(eval, sm, s1, fm, f1, depth + 1)?)
    }
    let ds = period / samples as f64;
    let (_, first) = eval(0.0)?;
    let mut prev = first;
    let mut total = 0.0;
    for k in 1..=samples {
        let s = if k == samples { period } else { k as f64 * ds };
        let (_, cur) = if k == samples { (path(period), first) } else { eval(s)? };
        total += step(&eval, (k - 1) as f64 * ds, s, prev, cur, 0)?;
        prev = cur;
    }
    Ok(total / (2.0 * PI))
}

fn count_in_rect<F: Fn(C64) -> C64>(f: &F, rect: &Rect) -> Result<usize, C64> {
    let w = winding_number(f, |s| rect.point(s), 4.0, BASE_SAMPLES)?;
    let n = w.round();
    if (w - n).abs() > 1e-3 || n < 0.0 {
        return Err(rect.center());
    }
    Ok(n as usize)
}

fn count_in_circle<F: Fn(C64) -> C64>(f: &F, center: C64, r: f64) -> Result<usize, C64> {
    let w = winding_number(f, |s| center + C64::from_polar(r, s), 2.0 * PI, 128)?;
    let n = w.round();
    if (w - n).abs() > 1e-3 || n < 0.0 {
        return Err(center);
    }
    Ok(n as usize)
}

/// `f^{(k)}(z)` by the trapezoid rule on the Cauchy integral.
fn cauchy_derivative<F: Fn(C64) -> C64>(f: &F, z: C64, k: usize, r: f64) -> C64 {
    let n = CAUCHY_POINTS;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let e = C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
        acc += f(z + e * r) * e.powi(-(k as i32));
    }
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    acc * factorial / (n as f64 * r.powi(k as i32))
}

/// Zero-order Argument-principle count of `Δ` inside a rectangle.
pub fn count_zeros(problem: &ModelProblem, re: [f64; 2], im: [f64; 2]) -> Result<usize, SpectralError> {
    let f = |z: C64| char_det(problem, z);
    let rect = Rect {
        re0: re[0],
        re1: re[1],
        im0: im[0],
        im1: im[1],
    };
    count_in_rect(&f, &rect).map_err(|z| SpectralError::BoundaryZero { re: z.re, im: z.im })
}

/// All zeros of `Δ` in the closed strip window, with their orders.
pub fn eigenvalues_in_strip(problem: &ModelProblem, strip: &Strip) -> Result<Vec<FoundEigenvalue>, SpectralError> {
    strip.validate()?;
    let f = |z: C64| char_det(problem, z);
    let mut last = None;
    for attempt in 0..6 {
        let pad = 1e-6 * attempt as f64;
        let rect = Rect {
            re0: -strip.real_bound - pad,
            re1: strip.real_bound + pad,
            im0: strip.imag_min - pad,
            im1: strip.imag_max + pad,
        };
        let total = match count_in_rect(&f, &rect) {
            Ok(n) => n,
            Err(z) => {
                last = Some(z);
                continue;
            }
        };
        let mut roots = Vec::new();
        search_cell(&f, rect, total, 0, &mut roots)?;
        roots.sort_by(|a, b| {
            a.lambda
                .im
                .total_cmp(&b.lambda.im)
                .then(a.lambda.re.total_cmp(&b.lambda.re))
        });
        roots.dedup_by(|b, a| (a.lambda - b.lambda).norm() <= 1e-8);
        if roots.iter().map(|r| r.det_zero_order).sum::<usize>() != total {
            return Err(SpectralError::NoConvergence {
                re_min: rect.re0,
                re_max: rect.re1,
                im_min: rect.im0,
                im_max: rect.im1,
            });
        }
        return Ok(roots);
    }
    let z = last.unwrap_or_default();
    Err(SpectralError::BoundaryZero { re: z.re, im: z.im })
}

const SPLIT_RATIOS: [f64; 5] = [0.537, 0.439, 0.613, 0.371, 0.5];

fn search_cell<F: Fn(C64) -> C64>(
    f: &F,
    rect: Rect,
    count: usize,
    depth: u32,
    out: &mut Vec<FoundEigenvalue>,
) -> Result<(), SpectralError> {
    if count == 0 {
        return Ok(());
    }
    let no_conv = || SpectralError::NoConvergence {
        re_min: rect.re0,
        re_max: rect.re1,
        im_min: rect.im0,
        im_max: rect.im1,
    };
    if rect.diameter() <= MIN_CELL {
        out.push(refine_root(f, rect.center(), count).ok_or_else(no_conv)?);
        return Ok(());
    }
    if depth > 80 {
        return Err(no_conv());
    }
    for ratio in SPLIT_RATIOS {
        let (a, b) = rect.split(ratio);
        let (Ok(na), Ok(nb)) = (count_in_rect(f, &a), count_in_rect(f, &b)) else {
            continue;
        };
        if na + nb != count {
            continue;
        }
        search_cell(f, a, na, depth + 1, out)?;
        search_cell(f, b, nb, depth + 1, out)?;
        return Ok(());
    }
    Err(no_conv())
}

/// Newton on `Δ^{(m-1)}`, which has a simple zero at a zero of order `m`.
fn newton<F: Fn(C64) -> C64>(f: &F, start: C64, order: usize) -> Option<C64> {
    let mut z = start;
    let scale = 1.0_f64.max(start.norm());
    for _ in 0..80 {
        let (num, den) = if order == 1 {
            (f(z), cauchy_derivative(f, z, 1, CAUCHY_RADIUS))
        } else {
            (
                cauchy_derivative(f, z, order - 1, CAUCHY_RADIUS),
                cauchy_derivative(f, z, order, CAUCHY_RADIUS),
            )
        };
        if den.norm() == 0.0 {
            return None;
        }
        let dz = num / den;
        z -= dz;
        if (z - start).norm() > 10.0 * MIN_CELL {
            return None;
        }
        if dz.norm() <= 1e-15 * scale {
            break;
        }
    }
    Some(z)
}

/// Refines a leaf cell's zero. The order is re-measured on two circles, since
/// a zero sitting on a cell edge can split its count between neighbours.
fn refine_root<F: Fn(C64) -> C64>(f: &F, start: C64, hint: usize) -> Option<FoundEigenvalue> {
    let mut z = newton(f, start, hint)?;
    let order = count_in_circle(f, z, CAUCHY_RADIUS).ok()?;
    if order == 0 || count_in_circle(f, z, 0.5 * CAUCHY_RADIUS).ok()? != order {
        return None;
    }
    if order != hint {
        z = newton(f, z, order)?;
    }
    let residual = f(z).norm();
    if residual > NEWTON_TOL {
        return None;
    }
    Some(FoundEigenvalue {
        lambda: z,
        det_zero_order: order,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `φ(0) = 1`.
    UnitAtOrigin,
    /// `max |φ| = 1` on a grid over `[-ω₀, ω₀]`.
    MaxNorm,
}

/// Associate vector `φ₁ = α·cosh(λ₀ω) + β·sinh(λ₀ω)/λ₀ + γ·ω·φ₀'(ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociateVector {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    /// L² norm of the representative on `(-ω₀, ω₀)`.
    pub norm: f64,
    /// Residual of the condition system.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub problem: ModelProblem,
    pub lambda0: C64,
    pub a: C64,
    pub b: C64,
    pub chain: Vec<AssociateVector>,
    pub normalization: Normalization,
    /// Dimension of the null space of the condition matrix.
    pub geometric_multiplicity: usize,
    pub residual: f64,
}

impl Eigenpair {
    pub fn eval(&self, omega: f64) -> C64 {
        let (c, s) = basis(self.lambda0, omega);
        self.a * c + self.b * s
    }

    pub fn eval_derivative(&self, omega: f64) -> C64 {
        let (c, s) = basis_derivative(self.lambda0, omega);
        self.a * c + self.b * s
    }
}

const NORM_GRID: usize = 400;

fn grid_max(omega0: f64, f: impl Fn(f64) -> C64) -> f64 {
    (0..=NORM_GRID)
        .map(|k| f(-omega0 + 2.0 * omega0 * k as f64 / NORM_GRID as f64).norm())
        .fold(0.0, f64::max)
}

/// Composite Simpson rule for `∫ f·conj(g)` over `(-ω₀, ω₀)`.
fn inner(omega0: f64, f: impl Fn(f64) -> C64, g: impl Fn(f64) -> C64) -> C64 {
    let n = NORM_GRID;
    let h = 2.0 * omega0 / n as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let x = -omega0 + h * k as f64;
        acc += f(x) * g(x).conj() * w;
    }
    acc * h / 3.0
}

/// Eigenvector for an eigenvalue `λ₀`, from the smallest singular vector of
/// the condition matrix.
pub fn eigenvector(problem: &ModelProblem, lambda0: C64) -> Result<Eigenpair, SpectralError> {
    let det = char_det(problem, lambda0);
    if det.norm() > 1e-8 {
        return Err(SpectralError::NotAnEigenvalue {
            re: lambda0.re,
            im: lambda0.im,
            det: det.norm(),
        });
    }
    let m = problem.condition_matrix(lambda0);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (imin, smax) = if svd.singular_values[0] <= svd.singular_values[1] {
        (0, svd.singular_values[1])
    } else {
        (1, svd.singular_values[0])
    };
    let geometric_multiplicity = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= 1e-10 * smax.max(1.0))
        .count()
        .max(1);
    let mut a = v_t[(imin, 0)].conj();
    let mut b = v_t[(imin, 1)].conj();

    let normalization = if a.norm() > 1e-8 * (a.norm() + b.norm()) {
        b /= a;
        a = C64::new(1.0, 0.0);
        Normalization::UnitAtOrigin
    } else {
        let scale = grid_max(problem.omega0, |w| {
            let (c, s) = basis(lambda0, w);
            a * c + b * s
        });
        a /= scale;
        b /= scale;
        Normalization::MaxNorm
    };
    let r = m * nalgebra::Vector2::new(a, b);
    Ok(Eigenpair {
        problem: *problem,
        lambda0,
        a,
        b,
        chain: Vec::new(),
        normalization,
        geometric_multiplicity,
        residual: r.norm(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociateResult {
    /// `None` when the associate system is inconsistent (chain length 1).
    pub phi1: Option<AssociateVector>,
    pub residual: f64,
    pub chain_length: usize,
}

/// Solves `φ₁'' - λ₀²φ₁ = 2λ₀φ₀` with the problem's conditions and returns
/// the representative orthogonal to `φ₀`.
pub fn associate_vector(problem: &ModelProblem, pair: &Eigenpair) -> AssociateResult {
    let lambda0 = pair.lambda0;
    let w0 = problem.omega0;
    // Particular solution ω·φ₀'(ω)/λ₀; for λ₀ = 0 the right side vanishes.
    let gamma = if lambda0.norm() == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        C64::new(1.0, 0.0) / lambda0
    };
    let particular = |w: f64| pair.eval_derivative(w) * w * gamma;
    let rhs = problem.apply_conditions(particular);
    let m = problem.condition_matrix(lambda0);
    let b = nalgebra::Vector2::new(-rhs[0], -rhs[1]);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax.max(1.0);
    let x = svd.solve(&b, eps).expect("svd computed with both factors");
    let residual = (m * x - b).norm();
    let scale = b.norm().max(1.0);
    if residual > 1e-8 * scale {
        return AssociateResult {
            phi1: None,
            residual,
            chain_length: 1,
        };
    }
    let (mut alpha, mut beta) = (x[0], x[1]);
    let phi1 = |al: C64, be: C64| {
        move |w: f64| {
            let (c, s) = basis(lambda0, w);
            al * c + be * s + particular(w)
        }
    };
    let phi0 = |w: f64| pair.eval(w);
    let mu = inner(w0, phi1(alpha, beta), phi0) / inner(w0, phi0, phi0);
    alpha -= mu * pair.a;
    beta -= mu * pair.b;
    let f = phi1(alpha, beta);
    let norm = inner(w0, f, f).re.max(0.0).sqrt();
    let cond = problem.apply_conditions(f);
    let residual = cond[0].norm().max(cond[1].norm());
    AssociateResult {
        phi1: Some(AssociateVector {
            alpha,
            beta,
            gamma,
            norm,
            residual,
        }),
        residual,
        chain_length: 2,
    }
}

/// Closed-form eigenvalues `πk/ω₀·i` (nonlocal) or `πk/(2ω₀)·i`, `k ≠ 0`
/// (Dirichlet), inside the closed window, with their determinant orders.
pub fn closed_form_eigenvalues(problem: &ModelProblem, strip: &Strip) -> Vec<(C64, usize)> {
    let step = match problem.kind {
        ProblemKind::Nonlocal => PI / problem.omega0,
        ProblemKind::Dirichlet => PI / (2.0 * problem.omega0),
    };
    let kmin = (strip.imag_min / step).ceil() as i64;
    let kmax = (strip.imag_max / step).floor() as i64;
    (kmin..=kmax)
        .filter_map(|k| {
            let order = match problem.kind {
                ProblemKind::Nonlocal if k == 0 => 2,
                ProblemKind::Nonlocal if k % 2 != 0 => 1,
                ProblemKind::Nonlocal => 3,
                ProblemKind::Dirichlet if k == 0 => return None,
                ProblemKind::Dirichlet => 1,
            };
            Some((C64::new(0.0, step * k as f64), order))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Brute-force determinant with the basis `{1, ω}` at `λ = 0`.
    fn det_at_zero_brute(problem: &ModelProblem) -> f64 {
        let w0 = problem.omega0;
        match problem.kind {
            ProblemKind::Dirichlet => {
                // rows: (1, -w0), (1, w0)
                1.0 * w0 - (-w0) * 1.0
            }
            ProblemKind::Nonlocal => {
                let t = problem.t.re;
                (1.0 - (1.0 + t)) * w0 - (-w0) * (1.0 - (1.0 - t))
            }
        }
    }

    #[test]
    fn determinant_examples() {
        let w0 = PI / 3.0;
        for t in [c(0.0, 0.0), c(0.3, 0.0), c(0.0, 0.5)] {
            assert_eq!(char_det(&ModelProblem::nonlocal(w0, t), c(0.0, 0.0)).norm(), 0.0);
            assert!(char_det(&ModelProblem::nonlocal(w0, t), c(0.0, 3.0)).norm() < 1e-14);
        }
        let d = ModelProblem::dirichlet(w0);
        let v = char_det(&d, c(0.0, 0.0));
        assert!((v.re - det_at_zero_brute(&d)).abs() < 1e-15 && v.im == 0.0);
        assert!((v.re - 2.0 * PI / 3.0).abs() < 1e-15);
        let nl = ModelProblem::nonlocal(w0, c(0.3, 0.0));
        assert_eq!(char_det(&nl, c(0.0, 0.0)).re, det_at_zero_brute(&nl));
    }

    #[test]
    fn determinant_matches_closed_form() {
        let w0 = 0.9;
        for lam in [c(0.3, 0.2), c(-1.1, 2.5), c(0.0, 4.0), c(2.0, 0.0)] {
            let s = (lam * w0).sinh() / lam;
            let cc = (lam * w0).cosh();
            let nl = char_det(&ModelProblem::nonlocal(w0, c(0.2, -0.1)), lam);
            assert!((nl - s * (cc - 1.0) * 2.0).norm() < 1e-12);
            let dd = char_det(&ModelProblem::dirichlet(w0), lam);
            assert!((dd - (lam * 2.0 * w0).sinh() / lam).norm() < 1e-12);
        }
    }

    fn assert_matches(found: &[FoundEigenvalue], expect: &[(C64, usize)]) {
        assert_eq!(found.len(), expect.len(), "{found:?} vs {expect:?}");
        for (f, (l, o)) in found.iter().zip(expect) {
            assert!((f.lambda - l).norm() <= 1e-10, "{} vs {}", f.lambda, l);
            assert_eq!(f.det_zero_order, *o);
        }
    }

    #[test]
    fn nonlocal_strip_below_axis_has_only_zero() {
        for w0 in [PI / 3.0, 2.0] {
            for t in [c(0.0, 0.0), c(0.1, 0.0), c(0.0, 0.5)] {
                let p = ModelProblem::nonlocal(w0, t);
                let strip = Strip::with_default_bound(-1.0, 0.0, w0).unwrap();
                let found = eigenvalues_in_strip(&p, &strip).unwrap();
                assert_matches(&found, &[(c(0.0, 0.0), 2)]);
            }
        }
    }

    #[test]
    fn nonlocal_symmetric_window() {
        let w0 = PI / 3.0;
        let p = ModelProblem::nonlocal(w0, c(0.1, 0.0));
        let strip = Strip::with_default_bound(-3.5, 3.5, w0).unwrap();
        let found = eigenvalues_in_strip(&p, &strip).unwrap();
        assert_matches(&found, &[(c(0.0, -3.0), 1), (c(0.0, 0.0), 2), (c(0.0, 3.0), 1)]);
    }

    #[test]
    fn eigenvalue_grids() {
        for w0 in [0.5, PI / 3.0, 2.5] {
            for kmax in [2.0, 5.0] {
                let p = ModelProblem::nonlocal(w0, c(0.2, 0.0));
                let h = (kmax + 0.5) * PI / w0;
                let strip = Strip::with_default_bound(-h, h, w0).unwrap();
                let found = eigenvalues_in_strip(&p, &strip).unwrap();
                assert_matches(&found, &closed_form_eigenvalues(&p, &strip));
            }
            let d = ModelProblem::dirichlet(w0);
            let strip = Strip::with_default_bound(-7.0, 7.0, w0).unwrap();
            let found = eigenvalues_in_strip(&d, &strip).unwrap();
            assert_matches(&found, &closed_form_eigenvalues(&d, &strip));
        }
    }

    #[test]
    fn dirichlet_lower_strip_empty() {
        let p = ModelProblem::dirichlet(PI / 3.0);
        let strip = Strip::with_default_bound(-1.0, -1e-9, PI / 3.0).unwrap();
        assert!(eigenvalues_in_strip(&p, &strip).unwrap().is_empty());
    }

    #[test]
    fn count_agrees_with_orders() {
        let p = ModelProblem::nonlocal(PI / 3.0, c(0.0, 0.0));
        let n = count_zeros(&p, [-2.0, 2.0], [-6.5, 6.5]).unwrap();
        let strip = Strip::new(-6.5, 6.5, 2.0).unwrap();
        let found = eigenvalues_in_strip(&p, &strip).unwrap();
        assert_eq!(n, found.iter().map(|f| f.det_zero_order).sum::<usize>());
        assert_eq!(n, 3 + 1 + 2 + 1 + 3);
    }

    #[test]
    fn invalid_strip() {
        assert!(Strip::new(1.0, 0.0, 1.0).is_err());
        assert!(Strip::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn eigenvector_at_zero() {
        let w0 = PI / 3.0;
        for t in [0.0, 0.3, -0.7, 1.0] {
            let pair = eigenvector(&ModelProblem::nonlocal(w0, c(t, 0.0)), c(0.0, 0.0)).unwrap();
            assert_eq!(pair.normalization, Normalization::UnitAtOrigin);
            assert!((pair.a - 1.0).norm() < 1e-12);
            assert!((pair.b - c(-t / w0, 0.0)).norm() < 1e-12);
            for k in 0..=20 {
                let w = -w0 + 2.0 * w0 * k as f64 / 20.0;
                assert!((pair.eval(w) - c(1.0 - t / w0 * w, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_first_eigenvector() {
        let w0 = PI / 3.0;
        let p = ModelProblem::dirichlet(w0);
        let lam = c(0.0, PI / (2.0 * w0));
        let pair = eigenvector(&p, lam).unwrap();
        assert!(pair.residual <= 1e-10);
        let at = |w: f64| pair.eval(w);
        assert!(at(-w0).norm() <= 1e-10 && at(w0).norm() <= 1e-10);
        // proportional to sin(π(ω+ω₀)/(2ω₀)) = cos(πω/(2ω₀))
        let ratio = at(0.0);
        for k in 0..=10 {
            let w = -w0 + 2.0 * w0 * k as f64 / 10.0;
            let expect = (PI * (w + w0) / (2.0 * w0)).sin();
            assert!((at(w) - ratio * expect).norm() < 1e-10);
        }
    }

    #[test]
    fn not_an_eigenvalue() {
        let p = ModelProblem::dirichlet(1.0);
        assert!(matches!(
            eigenvector(&p, c(0.0, 0.0)),
            Err(SpectralError::NotAnEigenvalue { .. })
        ));
    }

    #[test]
    fn associate_vector_at_zero_vanishes() {
        for t in [0.0, 0.25, -0.4] {
            let p = ModelProblem::nonlocal(PI / 3.0, c(t, 0.0));
            let pair = eigenvector(&p, c(0.0, 0.0)).unwrap();
            let res = associate_vector(&p, &pair);
            let phi1 = res.phi1.unwrap();
            assert!(phi1.norm <= 1e-10, "{}", phi1.norm);
            assert_eq!(res.chain_length, 2);
        }
    }

    /// Oracle: direct 2×2 solve for (α, β) in the chain equation, written out
    /// independently of the module's representation.
    fn chain_consistent(p: &ModelProblem, lam: C64, a: C64, b: C64) -> bool {
        let w0 = p.omega0;
        let cc = (lam * w0).cosh();
        let sc = (lam * w0).sinh();
        // φ₀' at ±ω₀ and particular solution q = ω φ₀'/λ
        let d_plus = a * lam * sc + b * cc;
        let d_minus = -a * lam * sc + b * cc;
        let q_plus = d_plus * w0 / lam;
        let q_minus = -d_minus * w0 / lam;
        let s = sc / lam;
        let (m, r) = match p.kind {
            ProblemKind::Dirichlet => ([[cc, -s], [cc, s]], [-q_minus, -q_plus]),
            ProblemKind::Nonlocal => (
                [[cc - (1.0 + p.t), -s], [cc - (1.0 - p.t), s]],
                [-q_minus, -q_plus],
            ),
        };
        // consistent iff rank [M | r] == rank M; M has rank 1 here
        let row = if m[0][0].norm() + m[0][1].norm() > m[1][0].norm() + m[1][1].norm() {
            0
        } else {
            1
        };
        let other = 1 - row;
        let ratio = if m[row][0].norm() > m[row][1].norm() {
            m[other][0] / m[row][0]
        } else {
            m[other][1] / m[row][1]
        };
        (r[other] - ratio * r[row]).norm() < 1e-9
    }

    #[test]
    fn dirichlet_simple_eigenvalue_has_no_associate() {
        let w0 = PI / 3.0;
        let p = ModelProblem::dirichlet(w0);
        let lam = c(0.0, PI / (2.0 * w0));
        let pair = eigenvector(&p, lam).unwrap();
        let res = associate_vector(&p, &pair);
        assert!(!chain_consistent(&p, lam, pair.a, pair.b));
        assert!(res.phi1.is_none());
        assert_eq!(res.chain_length, 1);
        assert!(res.residual > 1e-3);
    }

    #[test]
    fn nonlocal_first_nonzero_eigenvalue_chain() {
        let w0 = PI / 3.0;
        let p = ModelProblem::nonlocal(w0, c(0.0, 0.0));
        let lam = c(0.0, PI / w0);
        let pair = eigenvector(&p, lam).unwrap();
        let res = associate_vector(&p, &pair);
        assert_eq!(res.phi1.is_some(), chain_consistent(&p, lam, pair.a, pair.b));
        assert_eq!(res.chain_length, 1);
    }

    #[test]
    fn associate_representative_solves_chain_equation() {
        // even k with t != 0: order-3 zero, eigenvector sinh(λω)/λ
        let w0 = 1.1;
        let p = ModelProblem::nonlocal(w0, c(0.3, 0.0));
        let lam = c(0.0, 2.0 * PI / w0);
        let pair = eigenvector(&p, lam).unwrap();
        let res = associate_vector(&p, &pair);
        assert_eq!(res.phi1.is_some(), chain_consistent(&p, lam, pair.a, pair.b));
        if let Some(v) = res.phi1 {
            assert!(v.residual <= 1e-10);
            // φ₁'' - λ²φ₁ - 2λφ₀ = 0 by finite differences
            let f = |w: f64| {
                let (cc, ss) = basis(lam, w);
                v.alpha * cc + v.beta * ss + pair.eval_derivative(w) * w * v.gamma
            };
            let h = 1e-4;
            for w in [-0.5, 0.1, 0.7] {
                let d2 = (f(w + h) - f(w) * 2.0 + f(w - h)) / (h * h);
                let r = d2 - lam * lam * f(w) - lam * pair.eval(w) * 2.0;
                assert!(r.norm() < 1e-5, "{r}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn nonlocal_determinant_independent_of_t(
            t1r in -2.0..2.0f64, t1i in -2.0..2.0f64,
            t2r in -2.0..2.0f64, t2i in -2.0..2.0f64,
            lr in -3.0..3.0f64, li in -8.0..8.0f64,
            w0 in 0.1..3.0f64,
        ) {
            let lam = c(lr, li);
            let d1 = char_det(&ModelProblem::nonlocal(w0, c(t1r, t1i)), lam);
            let d2 = char_det(&ModelProblem::nonlocal(w0, c(t2r, t2i)), lam);
            prop_assert!((d1 - d2).norm() <= 1e-12 * d1.norm().max(1.0));
        }

        #[test]
        fn determinant_even_and_conjugate_symmetric(
            lr in -3.0..3.0f64, li in -8.0..8.0f64, w0 in 0.1..3.0f64, t in -1.0..1.0f64,
        ) {
            let lam = c(lr, li);
            for p in [ModelProblem::nonlocal(w0, c(t, 0.0)), ModelProblem::dirichlet(w0)] {
                let d = char_det(&p, lam);
                let tol = 1e-12 * d.norm().max(1.0);
                prop_assert!((char_det(&p, -lam) - d).norm() <= tol);
                prop_assert!((char_det(&p, lam.conj()) - d.conj()).norm() <= tol);
            }
        }
    }
}
