//! Field reconstruction, far-field patterns, radar cross section and error
//! measures.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::assembly::{face_gram, Discretization, FaceData, FaceIntegration, Region, TraceSet};
use crate::basis::TraceKind;
use crate::geometry::{CVec3, Vec3};
use crate::linalg::{CMatrix, Cholesky, Lu};
use crate::oracle::PlaneWave;
use crate::quadrature::{curved_order, duffy_rule, face_points, FaceGeometry, QuadratureError};
use crate::{par, C64};

#[derive(Debug, Error, PartialEq)]
pub enum PostprocessError {
    #[error("point ({0}, {1}, {2}) lies outside the mesh")]
    OutsideMesh(f64, f64, f64),
    #[error("solution has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("angle grids differ ({0} vs {1} samples)")]
    GridMismatch(usize, usize),
    #[error("reference data is identically zero")]
    ZeroReference,
    #[error("element {0}: field reconstruction system is singular")]
    Reconstruction(usize),
    #[error("far-field surface is empty")]
    EmptySurface,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Field-wave coefficients of every element, indexed by element.
///
/// In lossless media the incoming trace of the field wave `2l + m` equals
/// the `chi` basis function `2l + m`, so the coefficients are copied. In
/// lossy media they are the least-squares fit of the traces in the
/// `Z`-weighted boundary norm.
pub fn recover_coefficients(disc: &Discretization, x: &[C64]) -> Result<Vec<Vec<C64>>, PostprocessError> {
    if x.len() != disc.n_dof {
        return Err(PostprocessError::LengthMismatch { expected: disc.n_dof, got: x.len() });
    }
    par::map_range(disc.mesh.elements.len(), |e| {
        let chi = &x[disc.range(e)];
        let basis = &disc.bases[e];
        if basis.material.is_real() {
            return Ok(chi.to_vec());
        }
        let n = basis.dim();
        let mut g = CMatrix::zeros(n, n);
        let mut m = CMatrix::zeros(n, n);
        let one = C64::new(1.0, 0.0);
        for &f in &disc.mesh.element_faces[e] {
            let side = disc.mesh.faces[f].orientation_for(e).unwrap_or(1.0);
            let field = TraceSet::from_basis(basis, TraceKind::FieldIn, side);
            let trace = TraceSet::from_basis(basis, TraceKind::Chi, side);
            face_gram(&disc.faces[f], &field, &field, one, &mut g);
            face_gram(&disc.faces[f], &field, &trace, one, &mut m);
        }
        g.symmetrize_hermitian();
        let mut rhs = m.mul_vec(chi);
        match Cholesky::new(&g) {
            Ok(c) => c.solve_in_place(&mut rhs),
            Err(_) => Lu::new(&g).map_err(|_| PostprocessError::Reconstruction(e))?.solve_in_place(&mut rhs),
        }
        Ok(rhs)
    })
    .into_iter()
    .collect()
}

/// Which field a sample reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Total,
    Scattered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub position: Vec3,
    pub element: usize,
    pub e: CVec3,
}

/// Element containing `x`, judged against the flat faces; points within
/// `slack * h_av` outside (curved bulges) are accepted.
pub fn locate_point(disc: &Discretization, x: Vec3, slack: f64) -> Option<usize> {
    let mesh = &disc.mesh;
    let mut best = (f64::INFINITY, usize::MAX);
    for e in 0..mesh.elements.len() {
        let mut worst = f64::NEG_INFINITY;
        for &f in &mesh.element_faces[e] {
            let [a, _, _] = mesh.face_corners(f);
            let sign = mesh.faces[f].orientation_for(e).unwrap_or(1.0);
            worst = worst.max((x - a).dot(mesh.face_normal(f)) * sign);
        }
        let scaled = worst / mesh.elements[e].h_av;
        if scaled < best.0 {
            best = (scaled, e);
        }
    }
    (best.0 <= slack).then_some(best.1)
}

/// Evaluate the total or scattered field at `points`.
pub fn sample_field(
    disc: &Discretization,
    coeffs: &[Vec<C64>],
    points: &[Vec3],
    kind: FieldKind,
) -> Result<Vec<FieldSample>, PostprocessError> {
    points
        .iter()
        .map(|&x| {
            let e = locate_point(disc, x, 1e-9).or_else(|| locate_point(disc, x, 0.25)).ok_or(PostprocessError::OutsideMesh(
                x.x, x.y, x.z,
            ))?;
            let value = field_in_element(disc, coeffs, e, x, kind)?;
            Ok(FieldSample { position: x, element: e, e: value })
        })
        .collect()
}

/// Field of element `e` at `x` (which should lie in or on `e`).
pub fn field_in_element(
    disc: &Discretization,
    coeffs: &[Vec<C64>],
    e: usize,
    x: Vec3,
    kind: FieldKind,
) -> Result<CVec3, PostprocessError> {
    let basis = &disc.bases[e];
    let c = &coeffs[e];
    let value = basis.element_field(c, x).map_err(|_| PostprocessError::LengthMismatch { expected: basis.dim(), got: c.len() })?;
    let correction = match (disc.regions[e], kind) {
        (Region::Total, FieldKind::Scattered) => -1.0,
        (Region::Scattered, FieldKind::Total) => 1.0,
        _ => return Ok(value),
    };
    Ok(match &disc.incident {
        Some(pw) => value + pw.field(x) * correction,
        None => value,
    })
}

fn scattered_curl(disc: &Discretization, coeffs: &[Vec<C64>], e: usize, x: Vec3) -> Result<CVec3, PostprocessError> {
    let basis = &disc.bases[e];
    let c = &coeffs[e];
    let curl = basis.element_curl(c, x).map_err(|_| PostprocessError::LengthMismatch { expected: basis.dim(), got: c.len() })?;
    match (disc.regions[e], &disc.incident) {
        (Region::Total, Some(pw)) => Ok(curl - pw.curl(x)),
        _ => Ok(curl),
    }
}

/// Face of a closed far-field surface with `sign` making the owner normal
/// point out of the enclosed volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFace {
    pub face: usize,
    pub sign: f64,
}

/// Faces whose vertices all lie on the sphere of radius `r` about `center`.
pub fn sphere_surface(disc: &Discretization, center: Vec3, r: f64) -> Vec<SurfaceFace> {
    let mesh = &disc.mesh;
    let tol = 1e-9 * r.max(1.0);
    (0..mesh.faces.len())
        .filter(|&f| mesh.faces[f].vertices.iter().all(|&v| (mesh.vertices[v].distance(center) - r).abs() <= tol))
        .map(|f| {
            let [a, b, c] = mesh.face_corners(f);
            let mid = (a + b + c) / 3.0;
            let sign = if mesh.face_normal(f).dot(mid - center) >= 0.0 { 1.0 } else { -1.0 };
            SurfaceFace { face: f, sign }
        })
        .collect()
}

/// Azimuthal observation directions `(cos phi, sin phi, 0)`.
pub fn azimuth_directions(phi_deg: &[f64]) -> Vec<Vec3> {
    phi_deg
        .iter()
        .map(|p| {
            let r = p.to_radians();
            Vec3::new(r.cos(), r.sin(), 0.0)
        })
        .collect()
}

/// Far-field pattern
/// `E_inf(x) = (i kappa / 4 pi) x cross int_S [nu x E + (nu x H) x x] exp(-i kappa x . y) dS`
/// of the scattered field, `H = curl E / (i kappa)`. On interior faces the
/// two one-sided reconstructions are averaged. The exterior is vacuum.
pub fn far_field(
    disc: &Discretization,
    coeffs: &[Vec<C64>],
    surface: &[SurfaceFace],
    directions: &[Vec3],
    extra_order: usize,
) -> Result<Vec<CVec3>, PostprocessError> {
    if surface.is_empty() {
        return Err(PostprocessError::EmptySurface);
    }
    let kappa = disc.kappa;
    let ik = C64::new(0.0, kappa);
    struct Src {
        y: Vec3,
        j: CVec3,
        m: CVec3,
    }
    let per_face = par::map_range(surface.len(), |s| -> Result<Vec<Src>, PostprocessError> {
        let sf = surface[s];
        let face = &disc.mesh.faces[sf.face];
        let geom = FaceGeometry { corners: disc.mesh.face_corners(sf.face), midpoints: face.curved.map(|c| c.midpoints) };
        let rule = duffy_rule(curved_order(kappa, geom.diameter()) + extra_order)?;
        let pts = face_points(&geom, &rule)?;
        let mut sides = vec![face.owner.element];
        if let Some(nb) = face.neighbor {
            sides.push(nb.element);
        }
        let mut out = Vec::with_capacity(pts.len());
        for q in pts {
            let nu = q.normal * sf.sign;
            let mut e = CVec3::ZERO;
            let mut curl = CVec3::ZERO;
            for &el in &sides {
                e += field_in_element(disc, coeffs, el, q.position, FieldKind::Scattered)?;
                curl += scattered_curl(disc, coeffs, el, q.position)?;
            }
            let inv = 1.0 / sides.len() as f64;
            let h = curl * (inv / ik);
            out.push(Src { y: q.position, j: (e * inv).rcross(nu) * q.weight, m: h.rcross(nu) * q.weight });
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let factor = ik / (4.0 * core::f64::consts::PI);
    Ok(par::map_range(directions.len(), |k| {
        let xh = directions[k];
        let mut acc = CVec3::ZERO;
        for face in &per_face {
            for s in face {
                let ph = C64::new(0.0, -kappa * xh.dot(s.y)).exp();
                // nu x E + (nu x H) x xhat
                let xc = xh.to_complex();
                acc += (s.j + s.m.cross(xc)) * ph;
            }
        }
        acc.rcross(xh) * factor
    }))
}

/// `sigma = 4 pi |E_inf|^2 / |p|^2` (m^2) and `10 log10 sigma` (dBsm,
/// `-inf` for zero).
pub fn bistatic_rcs(pattern: &[CVec3], incident: &PlaneWave) -> Vec<(f64, f64)> {
    let p2 = incident.polarization.norm_sqr();
    pattern
        .iter()
        .map(|e| {
            let s = 4.0 * core::f64::consts::PI * e.norm_sqr() / p2;
            (s, 10.0 * s.log10())
        })
        .collect()
}

/// `100 |sigma - sigma_ref|_2 / |sigma_ref|_2` on a common grid.
pub fn rcs_l2_error(sigma: &[f64], reference: &[f64]) -> Result<f64, PostprocessError> {
    if sigma.len() != reference.len() {
        return Err(PostprocessError::GridMismatch(sigma.len(), reference.len()));
    }
    let num: f64 = sigma.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(PostprocessError::ZeroReference);
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Least-squares fit `f(x) ~ A exp(i kappa x) + R exp(-i kappa x)`; returns `(A, R)`.
pub fn fit_counter_propagating(xs: &[f64], values: &[C64], kappa: f64) -> (C64, C64) {
    let mut g = [[C64::new(0.0, 0.0); 2]; 2];
    let mut r = [C64::new(0.0, 0.0); 2];
    for (&x, &v) in xs.iter().zip(values) {
        let basis = [C64::new(0.0, kappa * x).exp(), C64::new(0.0, -kappa * x).exp()];
        for i in 0..2 {
            r[i] += basis[i].conj() * v;
            for j in 0..2 {
                g[i][j] += basis[i].conj() * basis[j];
            }
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let a = (r[0] * g[1][1] - g[0][1] * r[1]) / det;
    let b = (g[0][0] * r[1] - g[1][0] * r[0]) / det;
    (a, b)
}

/// Face data for integrating over `face` at a given order (diagnostics).
pub fn face_quadrature(disc: &Discretization, face: usize, order: usize) -> Result<FaceData, PostprocessError> {
    let f = &disc.mesh.faces[face];
    let geom = FaceGeometry { corners: disc.mesh.face_corners(face), midpoints: f.curved.map(|c| c.midpoints) };
    let points = face_points(&geom, &duffy_rule(order)?)?;
    Ok(FaceData { z: disc.faces[face].z, integration: FaceIntegration::Quadrature { points } })
}
