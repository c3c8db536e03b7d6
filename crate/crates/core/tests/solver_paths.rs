mod common;

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use uwvf_core::assembly::{AssemblyOptions, Discretization};
use uwvf_core::basis::{hammersley_directions, polarization_pair};
use uwvf_core::geometry::Vec3;
use uwvf_core::linalg::{CMatrix, Lu};
use uwvf_core::mesh::{box_tet_mesher, build_topology, ElementKind, FaceTag, Material, Mesh, RawElement, RawMesh, SourceKind};
use uwvf_core::oracle::PlaneWave;
use uwvf_core::postprocess::{recover_coefficients, sample_field, FieldKind};
use uwvf_core::solver::{
    apply_dinv_c, bandwidth, bicgstab, factor_d, rcm_order, solve, Coupling, MatrixFreeCoupling, SolverMode, SolverOptions,
    StoredCoupling,
};
use uwvf_core::C64;

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

fn small_box(source: SourceKind, pec_side: bool) -> Mesh {
    let mut tags = [FaceTag::absorbing().with_source(source); 6];
    if pec_side {
        tags[0] = FaceTag::pec().with_source(source);
    }
    box_tet_mesher(Vec3::ZERO, Vec3::new(1.0, 0.5, 0.5), [2, 1, 1], tags, Material::new(C64::new(2.0, 0.3), C64::new(1.0, 0.0)))
        .unwrap()
}

fn x_polarized(kappa: f64) -> PlaneWave {
    PlaneWave::new(Vec3::X, Vec3::Y.to_complex(), kappa)
}

#[test]
fn bicgstab_matches_dense_lu() {
    let mut rng = rng(21);
    for _ in 0..5 {
        let n = 20;
        let a = CMatrix::from_fn(n, n, |i, j| {
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (0.6 / (n as f64).sqrt());
            if i == j { v + 1.0 } else { v }
        });
        let b = random_cvec(&mut rng, n);
        let direct = Lu::new(&a).unwrap().solve(&b);
        let tol = 1e-12;
        let (x, rep) = bicgstab(
            |x, y| {
                y.copy_from_slice(&a.mul_vec(x));
                Ok(())
            },
            &b,
            None,
            tol,
            200,
        )
        .unwrap();
        assert!(rep.relative_residual <= tol);
        assert!(rel_diff(&x, &direct) <= 1e2 * tol, "{:e}", rel_diff(&x, &direct));
    }
}

#[test]
fn stored_and_matrix_free_products_agree() {
    let mut rng = rng(22);
    let mesh = small_box(SourceKind::None, true);
    let disc = Discretization::new(mesh, 4.0, None, &AssemblyOptions::default()).unwrap();
    let factors = factor_d(&disc.assemble_d()).unwrap();
    let stored = StoredCoupling::new(&disc).unwrap();
    let free = MatrixFreeCoupling::new(&disc);
    for _ in 0..3 {
        let x = random_cvec(&mut rng, disc.n_dof);
        let (mut ys, mut yf) = (vec![C64::new(0.0, 0.0); disc.n_dof], vec![C64::new(0.0, 0.0); disc.n_dof]);
        apply_dinv_c(&disc, &stored, &factors, &x, &mut ys).unwrap();
        apply_dinv_c(&disc, &free, &factors, &x, &mut yf).unwrap();
        assert!(rel_diff(&yf, &ys) <= 1e-12, "{:e}", rel_diff(&yf, &ys));
    }
    let zero = vec![C64::new(0.0, 0.0); disc.n_dof];
    let mut y = vec![C64::new(1.0, 0.0); disc.n_dof];
    free.apply(&zero, &mut y).unwrap();
    assert!(y.iter().all(|v| *v == C64::new(0.0, 0.0)));
}

fn two_tetra(q: C64) -> Mesh {
    let vertices = vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::Z, Vec3::new(1.0, 1.0, 1.0)];
    let elements = vec![
        RawElement { kind: ElementKind::Tetra, vertices: vec![0, 1, 2, 3], material: 0 },
        RawElement { kind: ElementKind::Tetra, vertices: vec![1, 2, 3, 4], material: 0 },
    ];
    let mut raw = RawMesh { vertices, elements, materials: vec![Material::VACUUM], ..RawMesh::default() };
    for tri in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]] {
        raw.face_tags.insert(tri, FaceTag::boundary(q));
    }
    build_topology(raw).unwrap()
}

#[test]
fn matrix_free_columns_reproduce_stored_coupling() {
    let disc = Discretization::new(two_tetra(C64::new(0.3, -0.2)), 2.0, None, &AssemblyOptions { fixed_p: Some(4), ..Default::default() })
        .unwrap();
    let stored = StoredCoupling::new(&disc).unwrap();
    let free = MatrixFreeCoupling::new(&disc);
    let n = disc.n_dof;
    let mut dense = vec![vec![C64::new(0.0, 0.0); n]; n];
    for (e, row) in stored.rows.iter().enumerate() {
        for (col, block) in row.cols.iter().zip(&row.blocks) {
            for (i, gi) in disc.range(e).enumerate() {
                for (j, gj) in disc.range(*col).enumerate() {
                    dense[gi][gj] = block.row(i)[j];
                }
            }
        }
    }
    let scale = dense.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    for j in 0..n {
        let mut unit = vec![C64::new(0.0, 0.0); n];
        unit[j] = C64::new(1.0, 0.0);
        let mut y = vec![C64::new(0.0, 0.0); n];
        free.apply(&unit, &mut y).unwrap();
        for i in 0..n {
            assert!((y[i] - dense[i][j]).norm() <= 1e-12 * scale, "entry ({i}, {j})");
        }
    }
}

#[test]
fn two_element_mesh_has_two_coupling_blocks() {
    let disc = Discretization::new(two_tetra(C64::new(0.0, 0.0)), 2.0, None, &AssemblyOptions::default()).unwrap();
    let rows = disc.assemble_c().unwrap();
    assert_eq!(rows[0].cols, vec![1]);
    assert_eq!(rows[1].cols, vec![0]);
}

#[test]
fn unknown_count_is_twice_the_direction_total() {
    let disc = Discretization::new(small_box(SourceKind::None, false), 5.0, None, &AssemblyOptions::default()).unwrap();
    assert_eq!(disc.n_dof, 2 * disc.bases.iter().map(|b| b.p()).sum::<usize>());
}

#[test]
fn coupling_pattern_is_symmetric() {
    let tags = [FaceTag::absorbing(); 6];
    let mut mesh = box_tet_mesher(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.5, 0.5), [4, 2, 2], tags, Material::VACUUM).unwrap();
    mesh.retag_faces(|_, c| c.iter().all(|v| (v.x + 0.5).abs() < 1e-12).then_some(FaceTag::Resistive { eta: C64::new(1.0, 0.0) }))
        .unwrap();
    let disc = Discretization::new(mesh, 3.0, None, &AssemblyOptions { fixed_p: Some(4), ..Default::default() }).unwrap();
    let rows = disc.assemble_c().unwrap();
    for (e, row) in rows.iter().enumerate() {
        for &c in &row.cols {
            assert!(rows[c].cols.contains(&e), "{e} -> {c} without {c} -> {e}");
        }
    }
}

#[test]
fn source_free_empty_box_has_zero_solution() {
    let disc = Discretization::new(small_box(SourceKind::None, false), 3.0, Some(x_polarized(3.0)), &AssemblyOptions::default()).unwrap();
    assert!(disc.assemble_rhs().unwrap().iter().all(|v| *v == C64::new(0.0, 0.0)));
    let (x, rep) = solve(&disc, &SolverOptions::default()).unwrap();
    assert_eq!(rep.iterations, 0);
    assert!(x.iter().all(|v| *v == C64::new(0.0, 0.0)));
}

/// A plane wave along a basis direction lies in the discrete space, so the
/// method reproduces it up to the solver tolerance.
#[test]
fn representable_plane_wave_is_reproduced() {
    let kappa = 6.0;
    let d = hammersley_directions(1).unwrap()[0];
    let (a1, _) = polarization_pair(d);
    let pw = PlaneWave::new(d, a1.to_complex(), kappa);
    let tags = [FaceTag::absorbing().with_source(SourceKind::TotalField); 6];
    let mesh = box_tet_mesher(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), [2, 2, 2], tags, Material::VACUUM).unwrap();
    let disc = Discretization::new(mesh, kappa, Some(pw), &AssemblyOptions::default()).unwrap();
    let tol = 1e-10;
    let (x, _) = solve(&disc, &SolverOptions { tol, ..Default::default() }).unwrap();
    let coeffs = recover_coefficients(&disc, &x).unwrap();
    let mut rng = rng(23);
    let points: Vec<Vec3> = (0..50).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
    for s in sample_field(&disc, &coeffs, &points, FieldKind::Total).unwrap() {
        let err = (s.e - pw.field(s.position)).norm();
        assert!(err <= 1e3 * tol, "{:?}: {err:e}", s.position);
    }
}

fn solve_mode(disc: &Discretization, mode: SolverMode, tol: f64) -> Vec<C64> {
    solve(disc, &SolverOptions { tol, max_iter: 2000, mode }).unwrap().0
}

#[test]
fn stored_and_matrix_free_solutions_agree() {
    let kappa = 4.0;
    let disc = Discretization::new(small_box(SourceKind::ScatteredField, true), kappa, Some(x_polarized(kappa)), &AssemblyOptions::default())
        .unwrap();
    let tol = 1e-8;
    let a = solve_mode(&disc, SolverMode::Stored, tol);
    let b = solve_mode(&disc, SolverMode::MatrixFree, tol);
    assert!(rel_diff(&b, &a) <= 10.0 * tol, "{:e}", rel_diff(&b, &a));
    // flat-faced rows are rebuilt with the stored kernel, so the two paths round alike
    assert_eq!(a, b);
}

#[test]
fn element_ordering_does_not_change_the_solution() {
    let kappa = 4.0;
    let mesh = small_box(SourceKind::ScatteredField, true);
    let tol = 1e-8;
    let with = Discretization::new(mesh.clone(), kappa, Some(x_polarized(kappa)), &AssemblyOptions::default()).unwrap();
    let without =
        Discretization::new(mesh, kappa, Some(x_polarized(kappa)), &AssemblyOptions { rcm: false, ..Default::default() }).unwrap();
    let (xa, xb) = (solve_mode(&with, SolverMode::Stored, tol), solve_mode(&without, SolverMode::Stored, tol));
    let mut permuted = vec![C64::new(0.0, 0.0); xb.len()];
    for e in 0..with.mesh.elements.len() {
        permuted[with.range(e)].copy_from_slice(&xb[without.range(e)]);
    }
    assert!(rel_diff(&permuted, &xa) <= 10.0 * tol);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let kappa = 4.0;
    let disc = Discretization::new(small_box(SourceKind::ScatteredField, true), kappa, Some(x_polarized(kappa)), &AssemblyOptions::default())
        .unwrap();
    for mode in [SolverMode::Stored, SolverMode::MatrixFree] {
        assert_eq!(solve_mode(&disc, mode, 1e-6), solve_mode(&disc, mode, 1e-6));
    }
}

#[test]
fn rcm_does_not_widen_a_shuffled_mesh() {
    let mut rng = rng(24);
    let tags = [FaceTag::absorbing(); 6];
    let mesh = box_tet_mesher(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), [3, 2, 2], tags, Material::VACUUM).unwrap();
    let mut raw = mesh.to_raw();
    raw.elements.shuffle(&mut rng);
    let shuffled = build_topology(raw).unwrap();
    assert!(shuffled.elements.len() >= 50);
    let adj = shuffled.element_adjacency();
    let identity: Vec<usize> = (0..adj.len()).collect();
    assert!(bandwidth(&adj, &rcm_order(&shuffled)) <= bandwidth(&adj, &identity));
}
