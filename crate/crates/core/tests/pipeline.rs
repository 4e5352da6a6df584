use std::f64::consts::PI;

use nonlocal_core::fem::linalg::cosine_with_constant;
use nonlocal_core::fem::mesh::cached_mesh;
use nonlocal_core::fem::{assemble_operator, numerical_kernel, solve, BcFamily, TolRule};
use nonlocal_core::geometry::{build_canonical_domain, build_corner_rotation_map, CurveId, Shape};
use nonlocal_core::C64;

fn ex1_family(domain: &nonlocal_core::geometry::DomainSpec) -> BcFamily {
    BcFamily::CornerCoupled {
        omega1: build_corner_rotation_map(domain, CurveId::Gamma1).unwrap(),
        omega2: build_corner_rotation_map(domain, CurveId::Gamma2).unwrap(),
        cutoff: None,
    }
}

#[test]
fn mesh_cache_round_trips_exactly() {
    let domain = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
    let dir = std::env::temp_dir().join(format!("nonlocal-pipeline-{}", std::process::id()));
    let cold = cached_mesh(Some(&dir), &domain, 0.1, 2.0).unwrap();
    let warm = cached_mesh(Some(&dir), &domain, 0.1, 2.0).unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    assert_eq!(cold.to_json(), warm.to_json());
}

#[test]
fn constants_span_the_kernel_only_at_t_zero() {
    let domain = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
    let mesh = cached_mesh(None, &domain, 0.1, 2.0).unwrap();
    let family = ex1_family(&domain);
    let rule = TolRule::Fixed { tau: 1e-8 };

    let op = assemble_operator(&mesh, &family, C64::new(0.0, 0.0), None).unwrap();
    let k = numerical_kernel(&op, rule).unwrap();
    assert_eq!(k.dimension, 1);
    assert!(cosine_with_constant(&k.basis[0]) > 0.999);

    let op = assemble_operator(&mesh, &family, C64::new(0.2, 0.0), None).unwrap();
    assert_eq!(numerical_kernel(&op, rule).unwrap().dimension, 0);
}

#[test]
fn solution_satisfies_constraints() {
    let domain = build_canonical_domain(PI / 3.0, 1.0, Shape::PolylineKite).unwrap();
    let mesh = cached_mesh(None, &domain, 0.1, 2.0).unwrap();
    let op = assemble_operator(&mesh, &ex1_family(&domain), C64::new(0.2, 0.0), None).unwrap();
    let f = op.load_vector(&mesh, |y| C64::new((y.x * 3.0).sin(), 0.0));
    let sol = solve(&op, &f).unwrap();
    assert!(sol.residual < 1e-10);
    assert!(op.constraint_residual(&sol.u) < 1e-12);
}
