//! Stiffness assembly, nonlocal constraint rows and their elimination.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mesh::{Marker, Mesh, PointLocator};
use crate::error::FemError;
use crate::geometry::{CurveId, CutoffXi, DiffeoMap, Point};
use crate::C64;

/// Entries at or below this modulus are treated as structurally zero.
pub const ZERO_ROW_TOL: f64 = 1e-14;
/// Relative pivot tolerance of the constraint elimination.
pub const PIVOT_TOL: f64 = 1e-12;

/// Coefficient `b(y)` of a nonlocal term.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Const(C64),
    /// `scale·ξ(y)`.
    ScaledCutoff { scale: C64, cutoff: CutoffXi },
}

impl Coefficient {
    pub fn eval(&self, y: &Point) -> C64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::ScaledCutoff { scale, cutoff } => *scale * cutoff.eval(y),
        }
    }
}

/// `u(y) - b(y)·u(Ω(y)) = 0` on one curve; no map means `u(y) = 0`.
#[derive(Clone, Debug)]
pub struct BcTerm {
    pub curve: CurveId,
    pub coefficient: Coefficient,
    pub map: Option<DiffeoMap>,
}

#[derive(Clone, Debug)]
pub struct NonlocalBc {
    pub terms: Vec<BcTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
}

impl ExampleId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Ex1 => "ex1",
            ExampleId::Ex2 => "ex2",
            ExampleId::Ex3 => "ex3",
        }
    }
}

/// A family of boundary conditions parametrized by `t`.
#[derive(Clone, Debug)]
pub enum BcFamily {
    /// `u - (1±t)·u(Ω_i(y)) = 0`, optionally with `(1±t)·ξ(y)`.
    CornerCoupled {
        omega1: DiffeoMap,
        omega2: DiffeoMap,
        cutoff: Option<CutoffXi>,
    },
    /// `u + t·u(Ω(y)) = 0` on `Γ₁`, `u = 0` on `Γ₂`.
    InteriorSupported { omega: DiffeoMap },
    Dirichlet,
}

impl BcFamily {
    pub fn at(&self, t: C64) -> NonlocalBc {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let terms = match self {
            BcFamily::CornerCoupled { omega1, omega2, cutoff } => {
                let coef = |scale: C64| match cutoff {
                    None => Coefficient::Const(scale),
                    Some(xi) => Coefficient::ScaledCutoff { scale, cutoff: *xi },
                };
                vec![
                    BcTerm {
                        curve: CurveId::Gamma1,
                        coefficient: coef(one + t),
                        map: Some(omega1.clone()),
                    },
                    BcTerm {
                        curve: CurveId::Gamma2,
                        coefficient: coef(one - t),
                        map: Some(omega2.clone()),
                    },
                ]
            }
            BcFamily::InteriorSupported { omega } => vec![
                BcTerm {
                    curve: CurveId::Gamma1,
                    coefficient: Coefficient::Const(-t),
                    map: Some(omega.clone()),
                },
                BcTerm {
                    curve: CurveId::Gamma2,
                    coefficient: Coefficient::Const(zero),
                    map: None,
                },
            ],
            BcFamily::Dirichlet => [CurveId::Gamma1, CurveId::Gamma2]
                .into_iter()
                .map(|curve| BcTerm {
                    curve,
                    coefficient: Coefficient::Const(zero),
                    map: None,
                })
                .collect(),
        };
        NonlocalBc { terms }
    }
}

/// Sparse matrix stored by rows with ascending column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<T> {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Copy + std::ops::AddAssign + Default> SparseRows<T> {
    fn from_maps(n_cols: usize, maps: Vec<BTreeMap<usize, T>>) -> Self {
        SparseRows {
            n_cols,
            rows: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1)
            .unwrap_or_default()
    }
}

/// P1 stiffness `K` and consistent mass `M`, summed element by element in
/// triangle order.
pub fn assemble_stiffness_mass(mesh: &Mesh) -> (SparseRows<f64>, SparseRows<f64>) {
    let n = mesh.n_vertices();
    let mut k = vec![BTreeMap::new(); n];
    let mut m = vec![BTreeMap::new(); n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        let area = mesh.area(t);
        let grads = p1_gradients(&p, area);
        for a in 0..3 {
            for b in 0..3 {
                let kv = area * grads[a].dot(&grads[b]);
                *k[tri[a]].entry(tri[b]).or_insert(0.0) += kv;
                let mv = if a == b { area / 6.0 } else { area / 12.0 };
                *m[tri[a]].entry(tri[b]).or_insert(0.0) += mv;
            }
        }
    }
    (SparseRows::from_maps(n, k), SparseRows::from_maps(n, m))
}

/// Gradients of the three barycentric hat functions.
pub fn p1_gradients(p: &[Point; 3], area: f64) -> [nalgebra::Vector2<f64>; 3] {
    let g = |i: usize| {
        let (b, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        nalgebra::Vector2::new(b.y - c.y, c.x - b.x) / (2.0 * area)
    };
    [g(0), g(1), g(2)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub vertex: usize,
    pub curve: CurveId,
    pub entries: Vec<(usize, C64)>,
}

/// Discrete stand-in for the operators of the nonlocal problems: Laplacian
/// equation rows restricted to the null space of the constraint rows.
#[derive(Clone, Debug)]
pub struct DiscreteNonlocalOperator {
    pub t: C64,
    pub lambda_shift: Option<C64>,
    pub n_vertices: usize,
    pub stiffness: SparseRows<f64>,
    pub mass: SparseRows<f64>,
    /// Nonzero constraint rows, in vertex order.
    pub constraints: Vec<ConstraintRow>,
    /// Vertices whose Laplacian rows are equations.
    pub eq_rows: Vec<usize>,
    /// Eliminated (pivot) vertex columns.
    pub pivots: Vec<usize>,
    /// Free vertex columns; Z-coordinates are values at these vertices.
    pub free: Vec<usize>,
    /// `Z` by vertex rows: `u = Z·z`.
    pub z_rows: Vec<Vec<(usize, C64)>>,
    /// `A = L_eq·Z`, dense `eq_rows × free`.
    pub a: DMatrix<C64>,
}

impl DiscreteNonlocalOperator {
    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }

    /// `cols - rows` of `A`.
    pub fn discrete_index(&self) -> i64 {
        self.n_cols() as i64 - self.n_rows() as i64
    }

    pub fn constraint_dense(&self) -> DMatrix<C64> {
        let mut c = DMatrix::zeros(self.constraints.len(), self.n_vertices);
        for (r, row) in self.constraints.iter().enumerate() {
            for &(j, v) in &row.entries {
                c[(r, j)] += v;
            }
        }
        c
    }

    pub fn z_dense(&self) -> DMatrix<C64> {
        let mut z = DMatrix::zeros(self.n_vertices, self.free.len());
        for (i, row) in self.z_rows.iter().enumerate() {
            for &(j, v) in row {
                z[(i, j)] = v;
            }
        }
        z
    }

    /// Vertex values `Z·z`.
    pub fn expand(&self, z: &[C64]) -> Vec<C64> {
        self.z_rows
            .iter()
            .map(|row| row.iter().fold(C64::new(0.0, 0.0), |acc, &(j, v)| acc + v * z[j]))
            .collect()
    }

    /// Values at the free vertices.
    pub fn z_coordinates(&self, u: &[C64]) -> Vec<C64> {
        self.free.iter().map(|&i| u[i]).collect()
    }

    /// Equation-row entry of the discrete operator `-K - λM`.
    fn l_entry(&self, i: usize, j: usize) -> C64 {
        let k = -self.stiffness.get(i, j);
        match self.lambda_shift {
            Some(lam) => C64::new(k, 0.0) - lam * self.mass.get(i, j),
            None => C64::new(k, 0.0),
        }
    }

    /// `L·u` on the equation rows.
    pub fn apply_laplacian(&self, u: &[C64]) -> Vec<C64> {
        self.eq_rows
            .iter()
            .map(|&i| {
                let mut acc = C64::new(0.0, 0.0);
                for &(j, _) in &self.stiffness.rows[i] {
                    acc += self.l_entry(i, j) * u[j];
                }
                acc
            })
            .collect()
    }

    /// Load vector `F_i = Σ_T f(centroid)·|T|/3` on the equation rows.
    pub fn load_vector(&self, mesh: &Mesh, f: impl Fn(&Point) -> C64) -> Vec<C64> {
        let mut full = vec![C64::new(0.0, 0.0); self.n_vertices];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let v = f(&mesh.centroid(t)) * (mesh.area(t) / 3.0);
            for &i in tri {
                full[i] += v;
            }
        }
        self.eq_rows.iter().map(|&i| full[i]).collect()
    }

    /// Maximum modulus of `C·u` over the kept constraint rows.
    pub fn constraint_residual(&self, u: &[C64]) -> f64 {
        self.constraints
            .iter()
            .map(|row| {
                row.entries
                    .iter()
                    .fold(C64::new(0.0, 0.0), |acc, &(j, v)| acc + v * u[j])
                    .norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds the constraint row of vertex `i` for one term, merging repeated
/// columns; `None` when all entries vanish.
fn constraint_row(
    mesh: &Mesh,
    locator: &PointLocator<'_>,
    i: usize,
    term: &BcTerm,
) -> Result<Option<ConstraintRow>, FemError> {
    let y = mesh.vertices[i];
    let mut row: BTreeMap<usize, C64> = BTreeMap::new();
    row.insert(i, C64::new(1.0, 0.0));
    if let Some(map) = &term.map {
        let b = term.coefficient.eval(&y);
        if b != C64::new(0.0, 0.0) {
            let img = map.eval(&y);
            let stencil = locator.stencil(&img).ok_or(FemError::PointLocation {
                vertex: i,
                x: img.x,
                y: img.y,
            })?;
            for (&v, &w) in stencil.vertices.iter().zip(&stencil.weights) {
                *row.entry(v).or_insert(C64::new(0.0, 0.0)) -= b * w;
            }
        }
    }
    let entries: Vec<(usize, C64)> = row.into_iter().collect();
    if entries.iter().all(|(_, v)| v.norm() <= ZERO_ROW_TOL) {
        return Ok(None);
    }
    Ok(Some(ConstraintRow {
        vertex: i,
        curve: term.curve,
        entries,
    }))
}

/// Assembles the operator for the conditions of `family` at parameter `t`.
pub fn assemble_operator(
    mesh: &Mesh,
    family: &BcFamily,
    t: C64,
    lambda_shift: Option<C64>,
) -> Result<DiscreteNonlocalOperator, FemError> {
    let bc = family.at(t);
    let locator = mesh.locator();
    let n = mesh.n_vertices();
    let (stiffness, mass) = assemble_stiffness_mass(mesh);

    let mut constraints = Vec::new();
    let mut has_row = vec![false; n];
    for i in 0..n {
        for term in &bc.terms {
            if !mesh.markers[i].on_curve(term.curve) {
                continue;
            }
            if let Some(row) = constraint_row(mesh, &locator, i, term)? {
                has_row[i] = true;
                constraints.push(row);
            }
        }
    }
    // Boundary vertices without any nonzero constraint keep their Galerkin row.
    let eq_rows: Vec<usize> = (0..n).filter(|&i| !has_row[i]).collect();

    let (pivots, reduced) = eliminate(&constraints, &mesh.markers)?;
    let mut is_pivot = vec![usize::MAX; n];
    for (k, &p) in pivots.iter().enumerate() {
        is_pivot[p] = k;
    }
    let free: Vec<usize> = (0..n).filter(|&i| is_pivot[i] == usize::MAX).collect();
    let mut free_index = vec![usize::MAX; n];
    for (k, &f) in free.iter().enumerate() {
        free_index[f] = k;
    }
    let z_rows: Vec<Vec<(usize, C64)>> = (0..n)
        .map(|i| {
            if free_index[i] != usize::MAX {
                vec![(free_index[i], C64::new(1.0, 0.0))]
            } else {
                let row = &reduced[is_pivot[i]];
                row.iter()
                    .filter(|(j, _)| *j != i)
                    .map(|&(j, v)| (free_index[j], -v))
                    .collect()
            }
        })
        .collect();

    let mut op = DiscreteNonlocalOperator {
        t,
        lambda_shift,
        n_vertices: n,
        stiffness,
        mass,
        constraints,
        eq_rows,
        pivots,
        free,
        z_rows,
        a: DMatrix::zeros(0, 0),
    };
    let mut a = DMatrix::zeros(op.eq_rows.len(), op.free.len());
    for (r, &i) in op.eq_rows.iter().enumerate() {
        for &(j, _) in &op.stiffness.rows[i] {
            let l = op.l_entry(i, j);
            for &(c, zv) in &op.z_rows[j] {
                a[(r, c)] += l * zv;
            }
        }
    }
    op.a = a;
    Ok(op)
}

/// Reduced row echelon form of the constraint rows. Pivots prefer boundary
/// columns, largest modulus first. Returns pivot columns and the reduced rows
/// (unit entry at the pivot).
fn eliminate(rows: &[ConstraintRow], markers: &[Marker]) -> Result<(Vec<usize>, Vec<Vec<(usize, C64)>>), FemError> {
    let mut pivots: Vec<usize> = Vec::new();
    let mut reduced: Vec<BTreeMap<usize, C64>> = Vec::new();
    let mut pivot_of: BTreeMap<usize, usize> = BTreeMap::new();
    for row in rows {
        let scale = row.entries.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        let mut r: BTreeMap<usize, C64> = row.entries.iter().copied().collect();
        // eliminate existing pivots; reduced rows carry no other pivot columns
        let hits: Vec<(usize, C64)> = r
            .iter()
            .filter(|(j, _)| pivot_of.contains_key(j))
            .map(|(&j, &v)| (j, v))
            .collect();
        for (j, factor) in hits {
            let k = pivot_of[&j];
            for (&c, &v) in &reduced[k] {
                *r.entry(c).or_insert(C64::new(0.0, 0.0)) -= factor * v;
            }
            r.remove(&j);
        }
        r.retain(|_, v| v.norm() > ZERO_ROW_TOL * scale.max(1.0) * 1e-2);
        let tol = PIVOT_TOL * scale.max(1.0);
        let pick = |boundary: bool| {
            r.iter()
                .filter(|(&j, v)| markers[j].is_boundary() == boundary && v.norm() > tol)
                .fold(None::<(usize, f64)>, |best, (&j, v)| match best {
                    Some((_, m)) if m >= v.norm() => best,
                    _ => Some((j, v.norm())),
                })
        };
        let Some((p, _)) = pick(true).or_else(|| pick(false)) else {
            continue;
        };
        let inv = C64::new(1.0, 0.0) / r[&p];
        for v in r.values_mut() {
            *v *= inv;
        }
        r.insert(p, C64::new(1.0, 0.0));
        // clear column p from earlier rows
        for prev in reduced.iter_mut() {
            if let Some(&factor) = prev.get(&p) {
                for (&c, &v) in &r {
                    *prev.entry(c).or_insert(C64::new(0.0, 0.0)) -= factor * v;
                }
                prev.remove(&p);
            }
        }
        pivot_of.insert(p, reduced.len());
        pivots.push(p);
        reduced.push(r);
    }
    if pivots.len() > markers.len() {
        return Err(FemError::Dimension("more pivots than vertices".into()));
    }
    Ok((pivots, reduced.into_iter().map(|m| m.into_iter().collect()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::generate_graded_mesh;
    use crate::geometry::{build_canonical_domain, build_corner_rotation_map, build_cutoff, build_interior_contraction_map, DomainSpec, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn setup() -> (DomainSpec, Mesh, BcFamily) {
        let d = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
        let m = generate_graded_mesh(&d, 0.1, 2.0).unwrap();
        let fam = BcFamily::CornerCoupled {
            omega1: build_corner_rotation_map(&d, CurveId::Gamma1).unwrap(),
            omega2: build_corner_rotation_map(&d, CurveId::Gamma2).unwrap(),
            cutoff: None,
        };
        (d, m, fam)
    }

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums() {
        let (_, m, _) = setup();
        let (k, mass) = assemble_stiffness_mass(&m);
        let mut total_mass = 0.0;
        for i in 0..m.n_vertices() {
            let mut sum = 0.0;
            for &(j, v) in &k.rows[i] {
                assert!((v - k.get(j, i)).abs() <= 1e-12);
                sum += v;
            }
            assert!(sum.abs() < 1e-12);
            total_mass += mass.rows[i].iter().map(|e| e.1).sum::<f64>();
        }
        let area: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
        assert!((total_mass - area).abs() < 1e-12);
    }

    #[test]
    fn constants_satisfy_untwisted_conditions() {
        let (_, m, fam) = setup();
        let op = assemble_operator(&m, &fam, c(0.0), None).unwrap();
        let ones = vec![c(1.0); m.n_vertices()];
        assert!(op.constraint_residual(&ones) < 1e-14);
        let z1 = op.z_coordinates(&ones);
        let az: Vec<C64> = (0..op.n_rows())
            .map(|r| (0..op.n_cols()).map(|j| op.a[(r, j)] * z1[j]).sum())
            .collect();
        assert!(az.iter().all(|v| v.norm() < 1e-12));
        assert_eq!(op.n_rows(), op.n_cols());
    }

    #[test]
    fn twisted_rows_sum_to_minus_t() {
        let (_, m, fam) = setup();
        let t = 0.1;
        let op = assemble_operator(&m, &fam, c(t), None).unwrap();
        for row in &op.constraints {
            if m.markers[row.vertex] == Marker::Gamma1 {
                let s: C64 = row.entries.iter().map(|e| e.1).sum();
                assert!((s - c(-t)).norm() < 1e-12);
            }
        }
        assert_eq!(op.n_rows(), op.n_cols());
    }

    #[test]
    fn null_space_basis_annihilated() {
        let (d, m, fam) = setup();
        let ex3 = BcFamily::InteriorSupported {
            omega: build_interior_contraction_map(&d, 0.5).unwrap(),
        };
        for (family, t) in [(&fam, 0.0), (&fam, 0.2), (&ex3, 0.2), (&BcFamily::Dirichlet, 0.0)] {
            let op = assemble_operator(&m, family, c(t), None).unwrap();
            let cz = op.constraint_dense() * op.z_dense();
            assert!(cz.iter().all(|v| v.norm() <= 1e-12), "{t}");
        }
    }

    #[test]
    fn dirichlet_keeps_interior_columns() {
        let (_, m, _) = setup();
        let op = assemble_operator(&m, &BcFamily::Dirichlet, c(0.0), None).unwrap();
        let interior: Vec<usize> = (0..m.n_vertices()).filter(|&i| m.markers[i] == Marker::Interior).collect();
        assert_eq!(op.free, interior);
        assert_eq!(op.eq_rows, interior);
        for row in &op.constraints {
            assert_eq!(row.entries, vec![(row.vertex, c(1.0))]);
        }
    }

    #[test]
    fn interior_supported_conditions_are_overdetermined_at_corners() {
        let (d, m, _) = setup();
        let fam = BcFamily::InteriorSupported {
            omega: build_interior_contraction_map(&d, 0.5).unwrap(),
        };
        let op = assemble_operator(&m, &fam, c(0.2), None).unwrap();
        assert_eq!(op.discrete_index(), -2);
        let op0 = assemble_operator(&m, &fam, c(0.0), None).unwrap();
        assert_eq!(op0.discrete_index(), 0);
    }

    #[test]
    fn cutoff_rows_match_inside_plateau() {
        let (d, m, fam) = setup();
        let BcFamily::CornerCoupled { omega1, omega2, .. } = fam.clone() else { unreachable!() };
        let xi = build_cutoff(&d.corners, 0.3, 0.15).unwrap();
        let fam2 = BcFamily::CornerCoupled { omega1, omega2, cutoff: Some(xi) };
        for t in [0.1, -0.2] {
            let a = assemble_operator(&m, &fam, c(t), None).unwrap();
            let b = assemble_operator(&m, &fam2, c(t), None).unwrap();
            let mut checked = 0;
            for (ra, rb) in a.constraints.iter().zip(&b.constraints) {
                assert_eq!(ra.vertex, rb.vertex);
                if d.rho(&m.vertices[ra.vertex]) <= xi.plateau {
                    assert_eq!(ra.entries, rb.entries);
                    checked += 1;
                }
            }
            assert!(checked > 4);
        }
    }

    /// Brute-force location over all triangles, independent of the bucket grid.
    fn brute_interpolate(m: &Mesh, p: &Point, u: &[C64]) -> C64 {
        let mut best = (f64::NEG_INFINITY, C64::new(0.0, 0.0));
        for tri in &m.triangles {
            let [a, b, cc] = tri.map(|i| m.vertices[i]);
            let det = (b - a).x * (cc - a).y - (b - a).y * (cc - a).x;
            let l1 = ((p - a).x * (cc - a).y - (p - a).y * (cc - a).x) / det;
            let l2 = ((b - a).x * (p - a).y - (b - a).y * (p - a).x) / det;
            let l0 = 1.0 - l1 - l2;
            let mn = l0.min(l1).min(l2);
            if mn > best.0 {
                best = (mn, u[tri[0]] * l0 + u[tri[1]] * l1 + u[tri[2]] * l2);
            }
        }
        best.1
    }

    #[test]
    fn constraint_rows_match_pointwise_conditions() {
        let (_, m, fam) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = c(0.15);
        let op = assemble_operator(&m, &fam, t, None).unwrap();
        let bc = fam.at(t);
        let u: Vec<C64> = (0..m.n_vertices()).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        for row in &op.constraints {
            let term = bc.terms.iter().find(|tm| tm.curve == row.curve).unwrap();
            let y = m.vertices[row.vertex];
            let img = term.map.as_ref().unwrap().eval(&y);
            let direct = u[row.vertex] - term.coefficient.eval(&y) * brute_interpolate(&m, &img, &u);
            let via_row: C64 = row.entries.iter().map(|&(j, v)| v * u[j]).sum();
            assert!((direct - via_row).norm() <= 1e-10);
        }
    }
}
