//! Numerical kernel and least-squares solves for the reduced operator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assembly::DiscreteNonlocalOperator;
use crate::error::FemError;
use crate::C64;

/// Above this many unknowns only the smallest singular values are estimated.
pub const DENSE_SVD_LIMIT: usize = 5000;
/// Minimum accepted ratio for the gap rule.
pub const MIN_GAP: f64 = 100.0;
/// Fallback relative threshold.
pub const FALLBACK_TAU: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum TolRule {
    Fixed { tau: f64 },
    Gap,
}

/// Singular values in descending order with the matching right singular
/// vectors (columns of `v`). Square padded when `A` is wide.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<C64>,
    pub v: DMatrix<C64>,
    /// False when only the trailing part of the spectrum was estimated.
    pub complete: bool,
    pub sigma_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelResult {
    pub dimension: usize,
    /// Kernel vectors in vertex coordinates, unit 2-norm.
    pub basis: Vec<Vec<C64>>,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub threshold: f64,
    /// Ratio across the chosen gap; `None` for a fixed threshold.
    pub gap_ratio: Option<f64>,
    pub rule: TolRule,
}

#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub u: Vec<C64>,
    /// `‖A z − f‖ / ‖f‖`, or `‖A z‖` when `f = 0`.
    pub residual: f64,
    pub rank_deficient: bool,
    pub method: SolveMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Lu,
    Qr,
    MinNorm,
}

fn is_real(a: &DMatrix<C64>) -> bool {
    a.iter().all(|v| v.im == 0.0)
}

fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

/// Full singular value decomposition of `A`, padded with zero rows when wide.
pub fn decompose(a: &DMatrix<C64>) -> Decomposition {
    let (m, n) = a.shape();
    if n == 0 {
        return Decomposition {
            singular_values: vec![],
            u: DMatrix::zeros(m, 0),
            v: DMatrix::zeros(0, 0),
            complete: true,
            sigma_max: 0.0,
        };
    }
    if n > DENSE_SVD_LIMIT {
        return trailing_decomposition(a, 4);
    }
    let padded;
    let a = if m < n {
        padded = a.clone().resize_vertically(n, C64::new(0.0, 0.0));
        &padded
    } else {
        a
    };
    let (s, u, v_t) = if is_real(a) {
        let svd = a.map(|v| v.re).svd(true, true);
        (
            svd.singular_values.iter().copied().collect::<Vec<_>>(),
            to_complex(&svd.u.unwrap()),
            to_complex(&svd.v_t.unwrap()),
        )
    } else {
        let svd = a.clone().svd(true, true);
        (svd.singular_values.iter().copied().collect(), svd.u.unwrap(), svd.v_t.unwrap())
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let v_full = v_t.adjoint();
    let singular_values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v_full.nrows(), order.len(), |r, c| v_full[(r, order[c])]);
    Decomposition {
        sigma_max: singular_values.first().copied().unwrap_or(0.0),
        singular_values,
        u,
        v,
        complete: true,
    }
}

/// Largest singular value by power iteration and the `k` smallest by block
/// inverse iteration on `R^H R` from a QR factorization.
fn trailing_decomposition(a: &DMatrix<C64>, k: usize) -> Decomposition {
    let n = a.ncols();
    let ah = a.adjoint();
    let mut x = DVector::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    let mut sigma_max = 0.0;
    for _ in 0..500 {
        let y = &ah * (a * &x);
        let norm = y.norm();
        if norm == 0.0 {
            break;
        }
        let next = norm.sqrt();
        x = y / C64::new(norm, 0.0);
        let done = (next - sigma_max).abs() <= 1e-13 * next;
        sigma_max = next;
        if done {
            break;
        }
    }
    let r = a.clone().qr().r();
    let k = k.min(n);
    let mut block = DMatrix::from_fn(n, k, |i, j| C64::new(((i * 31 + j * 17) % 13) as f64 - 6.0, (j as f64) * 0.01));
    for _ in 0..30 {
        for mut col in block.column_iter_mut() {
            let rhs = col.clone_owned();
            let w = r.adjoint().solve_lower_triangular(&rhs).unwrap_or(rhs);
            let w2 = r.solve_upper_triangular(&w).unwrap_or(w);
            col.copy_from(&w2);
        }
        block = block.qr().q();
    }
    // Rayleigh-Ritz on the converged subspace.
    let proj = a * &block;
    let svd = proj.svd(false, true);
    let v_small = svd.v_t.unwrap().adjoint();
    let mut pairs: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let v_block = &block * v_small;
    let v = DMatrix::from_fn(n, pairs.len(), |r, c| v_block[(r, pairs[c].1)]);
    Decomposition {
        singular_values: pairs.iter().map(|p| p.0).collect(),
        u: DMatrix::zeros(a.nrows(), 0),
        v,
        complete: false,
        sigma_max,
    }
}

/// Number of trailing singular values treated as zero, with threshold and
/// gap ratio.
pub fn kernel_split(d: &Decomposition, rule: TolRule) -> Result<(usize, f64, Option<f64>), FemError> {
    let s = &d.singular_values;
    let smax = d.sigma_max;
    if s.is_empty() || smax == 0.0 {
        return Ok((s.len(), 0.0, None));
    }
    match rule {
        TolRule::Fixed { tau } => {
            let thr = tau * smax;
            Ok((s.iter().filter(|&&x| x <= thr).count(), thr, None))
        }
        TolRule::Gap => {
            let cut = f64::EPSILON.sqrt() * smax;
            let mut best: Option<(usize, f64)> = None;
            // gap between s[i-1] (kept) and s[i] (dropped), s[i] below the cut
            let start = if d.complete { 1 } else { 0 };
            for i in start..s.len() {
                if s[i] > cut {
                    continue;
                }
                let above = if i == 0 { smax } else { s[i - 1] };
                let ratio = if s[i] == 0.0 { f64::INFINITY } else { above / s[i] };
                if best.is_none_or(|(_, r)| ratio > r) {
                    best = Some((i, ratio));
                }
            }
            match best {
                None => Ok((0, cut, None)),
                Some((i, ratio)) if ratio >= MIN_GAP => Ok((s.len() - i, s[i], Some(ratio))),
                Some((_, ratio)) => Err(FemError::AmbiguousGap { ratio }),
            }
        }
    }
}

fn unit(v: Vec<C64>) -> Vec<C64> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 {
        return v;
    }
    // fix the phase so the entry of largest modulus is real positive
    let big = v.iter().copied().fold(C64::new(0.0, 0.0), |b, x| if x.norm() > b.norm() { x } else { b });
    let phase = big.conj() / big.norm();
    v.into_iter().map(|x| x * phase / n).collect()
}

pub fn kernel_from(op: &DiscreteNonlocalOperator, d: &Decomposition, rule: TolRule) -> Result<KernelResult, FemError> {
    let (dim, threshold, gap_ratio) = kernel_split(d, rule)?;
    let n = d.singular_values.len();
    let basis = (n - dim..n)
        .map(|c| {
            let z: Vec<C64> = d.v.column(c).iter().copied().collect();
            unit(op.expand(&z))
        })
        .collect();
    Ok(KernelResult {
        dimension: dim,
        basis,
        sigma_max: d.sigma_max,
        sigma_min: d.singular_values.last().copied().unwrap_or(0.0),
        threshold,
        gap_ratio,
        rule,
    })
}

pub fn numerical_kernel(op: &DiscreteNonlocalOperator, rule: TolRule) -> Result<KernelResult, FemError> {
    kernel_from(op, &decompose(&op.a), rule)
}

/// Gap rule, falling back to a fixed threshold when no clear gap exists.
pub fn kernel_split_with_fallback(d: &Decomposition) -> (usize, TolRule) {
    match kernel_split(d, TolRule::Gap) {
        Ok((k, _, _)) => (k, TolRule::Gap),
        Err(_) => {
            let rule = TolRule::Fixed { tau: FALLBACK_TAU };
            (kernel_split(d, rule).map(|x| x.0).unwrap_or(0), rule)
        }
    }
}

fn relative_residual(a: &DMatrix<C64>, z: &DVector<C64>, f: &DVector<C64>) -> f64 {
    let r = (a * z - f).norm();
    let nf = f.norm();
    if nf > 0.0 {
        r / nf
    } else {
        r
    }
}

/// Solves `A z = f` (least squares when tall, minimum norm when rank
/// deficient) and returns `u = Z z`.
pub fn solve_with(op: &DiscreteNonlocalOperator, d: &Decomposition, f: &[C64]) -> Result<Solution, FemError> {
    let a = &op.a;
    if f.len() != a.nrows() {
        return Err(FemError::Dimension(format!("load has {} entries, operator has {} rows", f.len(), a.nrows())));
    }
    let fv = DVector::from_column_slice(f);
    let (dim, _) = kernel_split_with_fallback(d);
    let rank_deficient = dim > 0;
    let (z, method) = if !rank_deficient && a.is_square() {
        let z = a.clone().lu().solve(&fv).ok_or_else(|| FemError::Dimension("singular LU".into()))?;
        (z, SolveMethod::Lu)
    } else if !rank_deficient && a.nrows() > a.ncols() {
        let qr = a.clone().qr();
        let qhf = qr.q().adjoint() * &fv;
        let z = qr
            .r()
            .solve_upper_triangular(&qhf)
            .ok_or_else(|| FemError::Dimension("singular R".into()))?;
        (z, SolveMethod::Qr)
    } else {
        if !d.complete {
            return Err(FemError::Dimension("minimum-norm solve needs a full decomposition".into()));
        }
        let n = d.singular_values.len();
        let keep = n - dim;
        let mut z = DVector::zeros(a.ncols());
        let uh_f = d.u.columns(0, keep).adjoint() * &DVector::from_iterator(d.u.nrows(), fv.iter().copied().chain(std::iter::repeat(C64::new(0.0, 0.0))).take(d.u.nrows()));
        for i in 0..keep {
            z += d.v.column(i) * (uh_f[i] / d.singular_values[i]);
        }
        (z, SolveMethod::MinNorm)
    };
    let residual = relative_residual(a, &z, &fv);
    Ok(Solution {
        u: op.expand(z.as_slice()),
        residual,
        rank_deficient,
        method,
    })
}

pub fn solve(op: &DiscreteNonlocalOperator, f: &[C64]) -> Result<Solution, FemError> {
    solve_with(op, &decompose(&op.a), f)
}

/// Cosine similarity between `|<u, 1>|` and the constant vector.
pub fn cosine_with_constant(u: &[C64]) -> f64 {
    let n = u.len() as f64;
    let dot: C64 = u.iter().sum();
    let norm = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    dot.norm() / (norm * n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn diag(values: &[f64]) -> Decomposition {
        let n = values.len();
        Decomposition {
            singular_values: values.to_vec(),
            u: DMatrix::identity(n, n),
            v: DMatrix::identity(n, n),
            complete: true,
            sigma_max: values[0],
        }
    }

    #[test]
    fn gap_rule_counts_trailing_zeros() {
        assert_eq!(kernel_split(&diag(&[3.0, 1.0, 0.5, 1e-15]), TolRule::Gap).unwrap().0, 1);
        assert_eq!(kernel_split(&diag(&[3.0, 1.0, 1e-14, 1e-15]), TolRule::Gap).unwrap().0, 2);
        assert_eq!(kernel_split(&diag(&[3.0, 1.0, 0.5, 0.01]), TolRule::Gap).unwrap().0, 0);
        assert_eq!(kernel_split(&diag(&[3.0, 1.0, 0.0]), TolRule::Gap).unwrap().0, 1);
    }

    #[test]
    fn gap_rule_rejects_smooth_decay() {
        let s: Vec<f64> = (0..20).map(|i| 10f64.powi(-i)).collect();
        assert!(matches!(kernel_split(&diag(&s), TolRule::Gap), Err(FemError::AmbiguousGap { .. })));
        assert_eq!(kernel_split(&diag(&s), TolRule::Fixed { tau: 1e-9 }).unwrap().0, 11);
    }

    #[test]
    fn decomposition_sorted_and_padded() {
        let a = DMatrix::from_row_slice(2, 3, &[c(1.0), c(0.0), c(0.0), c(0.0), c(2.0), c(0.0)]);
        let d = decompose(&a);
        assert_eq!(d.singular_values.len(), 3);
        assert_eq!(d.singular_values[0], 2.0);
        assert_eq!(d.singular_values[2], 0.0);
        assert!((d.v[(2, 2)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trailing_estimate_matches_full() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let base = match (i == j, i) {
                (true, 0) => 100.0,
                (true, _) => 2.0 + i as f64,
                _ => 0.0,
            };
            C64::new(base + 0.01 * ((i * 7 + j * 3) % 5) as f64, 0.02 * ((i + j) % 3) as f64)
        });
        let full = decompose(&a);
        let tail = trailing_decomposition(&a, 3);
        assert!((tail.sigma_max - full.sigma_max).abs() < 1e-8 * full.sigma_max);
        for k in 0..3 {
            let expected = full.singular_values[n - 3 + k];
            assert!((tail.singular_values[k] - expected).abs() < 1e-8 * full.sigma_max);
        }
    }
}
