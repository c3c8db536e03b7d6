mod common;

use common::*;
use rand::Rng;
use uwvf_core::assembly::{face_gram, AssemblyOptions, Discretization, TraceSet};
use uwvf_core::basis::{direction_count, direction_polynomial, ConditionTolerance, PlaneWaveBasis, TraceKind};
use uwvf_core::geometry::{CVec3, Vec3};
use uwvf_core::linalg::{CMatrix, Cholesky};
use uwvf_core::mesh::{box_tet_mesher, CurvedFaceMap, ElementKind, FaceTag, Material, Mesh};
use uwvf_core::quadrature::{integrate_face, FaceGeometry};
use uwvf_core::C64;

fn opts(p: usize) -> AssemblyOptions {
    AssemblyOptions { fixed_p: Some(p), ..AssemblyOptions::default() }
}

fn quadratic_form(m: &CMatrix, u: &[C64], v: &[C64]) -> C64 {
    m.mul_vec(v).iter().zip(u).map(|(mv, ui)| ui.conj() * mv).sum()
}

#[test]
fn gram_of_incoming_equals_gram_of_outgoing_in_real_media() {
    let mut rng = rng(11);
    for trial in 0..24 {
        let kind = ElementKind::ALL[trial % 3];
        let mesh = random_body(&mut rng, kind, true);
        let kappa = rng.gen_range(0.5..4.0);
        let p = rng.gen_range(4..14);
        let disc = Discretization::new(mesh, kappa, None, &opts(p)).unwrap();
        let basis = &disc.bases[0];
        let d = disc.d_block(0);
        let mut gf = CMatrix::zeros(basis.dim(), basis.dim());
        for &f in &disc.mesh.element_faces[0] {
            let fk = TraceSet::from_basis(basis, TraceKind::Fk, 1.0);
            face_gram(&disc.faces[f], &fk, &fk, C64::new(1.0, 0.0), &mut gf);
        }
        for _ in 0..4 {
            let u = random_cvec(&mut rng, basis.dim());
            let v = random_cvec(&mut rng, basis.dim());
            let a = quadratic_form(&d, &u, &v);
            let b = quadratic_form(&gf, &u, &v);
            let scale = norm(&u) * norm(&v) * d.frobenius_norm();
            assert!((a - b).norm() <= 1e-10 * scale, "{kind:?} p={p}: {a} vs {b}");
        }
    }
}

/// Boundary integral of `(nu x mu^-1 curl E) . conj(xi_T) + (nu x E) . conj(conj(mu)^-1 curl xi)_T`
/// for a field wave `E` and an adjoint wave `xi`, with curls written out from the wave vectors.
#[test]
fn fundamental_identity_vanishes_for_plane_waves() {
    let mut rng = rng(12);
    let i = C64::new(0.0, 1.0);
    for trial in 0..30 {
        let kind = ElementKind::ALL[trial % 3];
        let mesh = random_body(&mut rng, kind, false);
        let kappa = rng.gen_range(0.5..3.0);
        let basis = PlaneWaveBasis::new(&mesh, 0, kappa, 6).unwrap();
        let k = basis.k_elem;
        let mu = basis.material.mu_r;
        let (l1, m1, l2, m2) = (rng.gen_range(0..6), rng.gen_range(0..2), rng.gen_range(0..6), rng.gen_range(0..2));
        let (mut total, mut scale) = (C64::new(0.0, 0.0), 0.0);
        for &f in &mesh.element_faces[0] {
            let face = &mesh.faces[f];
            let geom = FaceGeometry { corners: mesh.face_corners(f), midpoints: face.curved.map(|c| c.midpoints) };
            let nu = mesh.face_normal(f) * face.orientation_for(0).unwrap();
            let term = |x: Vec3| {
                let e = basis.field_wave(l1, m1, x);
                let curl_e = basis.directions[l1].scale_c(i * k).cross(e);
                let xi = basis.xi(l2, m2, x);
                let curl_xi = basis.directions[l2].scale_c(i * k.conj()).cross(xi);
                let a = nu.to_complex().cross(curl_e * (1.0 / mu)).dot(xi.tangential(nu).conj());
                let b = nu.to_complex().cross(e).dot((curl_xi * (1.0 / mu.conj())).tangential(nu).conj());
                let size = curl_e.norm() * xi.norm() / mu.norm() + e.norm() * curl_xi.norm() / mu.norm();
                (a + b, size)
            };
            total += integrate_face(&geom, 24, |x, _| term(x).0).unwrap();
            scale += integrate_face(&geom, 24, |x, _| C64::new(term(x).1, 0.0))
            .unwrap()
            .re;
        }
        assert!(total.norm() <= 1e-10 * scale, "{kind:?}: {total} vs scale {scale}");
    }
}

#[test]
fn d_blocks_are_hermitian_positive_definite() {
    let mut rng = rng(13);
    for _ in 0..100 {
        let kind = random_kind(&mut rng);
        let mesh = random_body(&mut rng, kind, false);
        let kappa = rng.gen_range(0.3..3.0);
        let disc = Discretization::new(mesh, kappa, None, &AssemblyOptions::default()).unwrap();
        let basis = &disc.bases[0];
        let mut raw = CMatrix::zeros(basis.dim(), basis.dim());
        for &f in &disc.mesh.element_faces[0] {
            let chi = TraceSet::from_basis(basis, TraceKind::Chi, 1.0);
            face_gram(&disc.faces[f], &chi, &chi, C64::new(1.0, 0.0), &mut raw);
        }
        assert!(raw.hermitian_defect() <= 1e-12 * raw.max_abs(), "{kind:?}: defect {}", raw.hermitian_defect());
        Cholesky::new(&disc.d_block(0)).unwrap_or_else(|_| panic!("{kind:?} p={} not positive definite", basis.p()));
    }
}

fn max_rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    diff / a.max_abs()
}

#[test]
fn flat_closed_form_matches_forced_quadrature() {
    let mut rng = rng(14);
    for trial in 0..12 {
        let kind = ElementKind::ALL[trial % 3];
        let mesh = random_body(&mut rng, kind, false);
        let kappa = rng.gen_range(0.5..3.0);
        let flat = Discretization::new(mesh.clone(), kappa, None, &opts(8)).unwrap();
        let forced = Discretization::new(mesh, kappa, None, &AssemblyOptions { forced_order: Some(24), ..opts(8) }).unwrap();
        let err = max_rel_diff(&flat.d_block(0), &forced.d_block(0));
        assert!(err <= 1e-10, "{kind:?}: {err:e}");
    }
}

#[test]
fn curved_path_with_straight_midpoints_matches_flat_path() {
    let mut rng = rng(15);
    let tags = [FaceTag::absorbing(); 6];
    let mesh = box_tet_mesher(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), [1, 1, 1], tags, Material::VACUUM).unwrap();
    let mut curved = mesh.clone();
    for f in 0..curved.faces.len() {
        let [a, b, c] = curved.face_corners(f);
        curved.faces[f].curved = Some(CurvedFaceMap { midpoints: [(a + b) * 0.5, (b + c) * 0.5, (a + c) * 0.5] });
    }
    let kappa = rng.gen_range(1.0..2.0);
    let a = Discretization::new(mesh, kappa, None, &opts(6)).unwrap();
    // The default curved order targets discretisation accuracy, not 1e-12; a fixed
    // higher order isolates the geometric reduction of the quadratic map.
    let b = Discretization::new(curved, kappa, None, &AssemblyOptions { forced_order: Some(16), ..opts(6) }).unwrap();
    assert!(b.faces.iter().all(|f| f.quadrature_points() > 0));
    for e in 0..a.mesh.elements.len() {
        let err = max_rel_diff(&a.d_block(e), &b.d_block(e));
        assert!(err <= 1e-12, "D block {e}: {err:e}");
        let (ra, rb) = (a.row_blocks(e).unwrap(), b.row_blocks(e).unwrap());
        assert_eq!(ra.cols, rb.cols);
        for (x, y) in ra.blocks.iter().zip(&rb.blocks) {
            let err = max_rel_diff(x, y);
            assert!(err <= 1e-12, "C block of {e}: {err:e}");
        }
    }
}

fn two_cell_box(interface: impl Fn(&Mesh, usize) -> Option<FaceTag>) -> Mesh {
    let tags = [FaceTag::absorbing(); 6];
    let mut mesh = box_tet_mesher(Vec3::ZERO, Vec3::new(2.0, 1.0, 1.0), [2, 1, 1], tags, Material::VACUUM).unwrap();
    let picked: Vec<(usize, FaceTag)> = (0..mesh.faces.len()).filter_map(|f| interface(&mesh, f).map(|t| (f, t))).collect();
    for (f, t) in picked {
        mesh.faces[f].tag = t;
    }
    mesh
}

fn on_mid_plane(mesh: &Mesh, f: usize) -> bool {
    !mesh.faces[f].is_boundary() && mesh.face_corners(f).iter().all(|v| (v.x - 1.0).abs() < 1e-12)
}

fn assert_same_rows(a: &Discretization, b: &Discretization, tol: f64) {
    for e in 0..a.mesh.elements.len() {
        let (ra, rb) = (a.row_blocks(e).unwrap(), b.row_blocks(e).unwrap());
        assert_eq!(ra.cols, rb.cols, "element {e}");
        for (x, y) in ra.blocks.iter().zip(&rb.blocks) {
            assert!(max_rel_diff(x, y) <= tol, "element {e}: {:e}", max_rel_diff(x, y));
        }
    }
}

#[test]
fn zero_resistance_sheet_equals_interior_faces() {
    let plain = two_cell_box(|_, _| None);
    let sheet = two_cell_box(|m, f| on_mid_plane(m, f).then_some(FaceTag::Resistive { eta: C64::new(0.0, 0.0) }));
    assert!(sheet.faces.iter().any(|f| matches!(f.tag, FaceTag::Resistive { .. })));
    let a = Discretization::new(plain, 3.0, None, &opts(5)).unwrap();
    let b = Discretization::new(sheet, 3.0, None, &opts(5)).unwrap();
    assert_same_rows(&a, &b, 1e-13);
}

#[test]
fn ts_interface_without_incident_field_equals_interior_faces() {
    let plain = two_cell_box(|_, _| None);
    let ts = two_cell_box(|m, f| {
        on_mid_plane(m, f).then(|| {
            let face = &m.faces[f];
            let right = if m.element_centroid(face.owner.element).x > 1.0 { face.owner.element } else { face.neighbor.unwrap().element };
            FaceTag::TsInterface { scattered_side: right }
        })
    });
    let a = Discretization::new(plain, 3.0, None, &opts(5)).unwrap();
    let b = Discretization::new(ts, 3.0, None, &opts(5)).unwrap();
    assert_same_rows(&a, &b, 1e-13);
    assert!(b.assemble_rhs().unwrap().iter().all(|v| *v == C64::new(0.0, 0.0)));
}

#[test]
fn direction_count_follows_the_fitted_polynomials() {
    // (kind, tolerance, [p at kappa h = 0, 0.5, 1, 2.5, 5])
    let table: [(ElementKind, ConditionTolerance, [usize; 5]); 9] = [
        (ElementKind::Tetra, ConditionTolerance::T1e5, [4, 8, 12, 25, 49]),
        (ElementKind::Tetra, ConditionTolerance::T1e7, [4, 10, 15, 32, 64]),
        (ElementKind::Tetra, ConditionTolerance::T1e9, [9, 16, 23, 45, 85]),
        (ElementKind::Wedge, ConditionTolerance::T1e5, [4, 9, 14, 29, 59]),
        (ElementKind::Wedge, ConditionTolerance::T1e7, [4, 11, 17, 38, 77]),
        (ElementKind::Wedge, ConditionTolerance::T1e9, [10, 18, 27, 52, 100]),
        (ElementKind::Hexa, ConditionTolerance::T1e5, [4, 9, 14, 31, 64]),
        (ElementKind::Hexa, ConditionTolerance::T1e7, [4, 11, 18, 41, 86]),
        (ElementKind::Hexa, ConditionTolerance::T1e9, [8, 17, 27, 56, 112]),
    ];
    for (kind, tol, expected) in table {
        for (x, want) in [0.0, 0.5, 1.0, 2.5, 5.0].into_iter().zip(expected) {
            let got = direction_count(kind, x, 1.0, tol).unwrap();
            let poly = direction_polynomial(kind, tol);
            assert_eq!(got, want, "{kind:?} {tol:?} at {x}: poly {}", poly.eval(x));
        }
    }
}

#[test]
fn element_field_solves_maxwell() {
    // Sixth-order central differences for the Laplacian; plane waves are divergence free,
    // so curl curl E = -Laplacian E.
    const C: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
    let mut rng = rng(16);
    for trial in 0..12 {
        let kind = ElementKind::ALL[trial % 3];
        let material = random_material(&mut rng, false);
        let mesh = random_element(&mut rng, kind, material);
        let kappa = rng.gen_range(0.5..2.0);
        let basis = PlaneWaveBasis::new(&mesh, 0, kappa, 5).unwrap();
        let coeffs = random_cvec(&mut rng, basis.dim());
        let x = basis.centroid;
        let k2 = basis.k_elem * basis.k_elem;
        let h = 0.03 / basis.kappa_abs;
        let mut lap = CVec3::ZERO;
        for axis in [Vec3::X, Vec3::Y, Vec3::Z] {
            for (j, c) in C.iter().enumerate() {
                let y = x + axis * (h * (j as f64 - 3.0));
                lap += basis.element_field(&coeffs, y).unwrap() * (*c / (h * h));
            }
        }
        let e = basis.element_field(&coeffs, x).unwrap();
        // curl mu^-1 curl E - kappa^2 eps E = mu^-1 (-lap - k^2 E)
        let residual = (lap + e * k2) * (-1.0 / material.mu_r);
        let scale = (kappa * kappa * material.eps_r).norm() * e.norm();
        assert!(residual.norm() <= 1e-11 * scale, "{kind:?}: {:e}", residual.norm() / scale);
        
    }
}
