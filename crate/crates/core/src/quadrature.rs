//! Triangle quadrature and face integration.
//!
//! Curved faces are integrated with a Duffy-collapsed tensor rule (Jacobi in
//! `s`, Gauss-Legendre in the collapsed direction) composed with the quadratic
//! face map. Flat faces with plane-wave integrands use an exact formula based
//! on the second divided difference of the exponential.
//!
//! Reference triangle: vertex 1 at `(0,0)`, vertex 2 at `(1,0)`, vertex 3 at
//! `(0,1)`, matching the nodal basis `phi_2 = s(2s-1)`, `phi_3 = t(2t-1)`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{triangle_area_vector, CVec3, Vec3};
use crate::linalg::tridiagonal_ql;
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("degenerate face map: jacobian norm {norm:e} below {threshold:e}")]
    DegenerateJacobian { norm: f64, threshold: f64 },
}

/// Tensor rule on the reference triangle; weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on `(0,1)`, nodes ascending.
pub fn gauss_legendre_01(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::ZeroOrder);
    }
    if n == 1 {
        return Ok((vec![0.5], vec![1.0]));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pi = core::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        let mut x = (pi * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; store symmetric pair mapped to (0,1)
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// Gauss-Jacobi nodes and weights on `(0,1)` for the weight `1 - s`,
/// from the eigen-decomposition of the Jacobi matrix.
pub fn jacobi_01(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::ZeroOrder);
    }
    // Jacobi polynomials with alpha = 1, beta = 0 on (-1, 1)
    let mut d: Vec<f64> = (0..n)
        .map(|k| if k == 0 { -1.0 / 3.0 } else { -1.0 / (((2 * k + 1) * (2 * k + 3)) as f64) })
        .collect();
    let mut e: Vec<f64> = (0..n)
        .map(|k| if k == 0 { 0.0 } else { ((k * (k + 1)) as f64).sqrt() / (2 * k + 1) as f64 })
        .collect();
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    tridiagonal_ql(&mut d, &mut e, Some(&mut first));
    // mu_0 = 2 on (-1,1); mapping to (0,1) scales the weighted measure by 1/4
    let mut pairs: Vec<(f64, f64)> =
        d.iter().zip(&first).map(|(&x, &v)| (0.5 * (1.0 + x), 0.5 * v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// `N^2`-point rule: points `(x_j, t_i (1 - x_j))`, weights `wj_J * wi_G`.
pub fn duffy_rule(n: usize) -> Result<QuadratureRule, QuadratureError> {
    let (xj, wj) = jacobi_01(n)?;
    let (tg, wg) = gauss_legendre_01(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (s, ws) in xj.iter().zip(&wj) {
        for (t, wt) in tg.iter().zip(&wg) {
            points.push([*s, t * (1.0 - s)]);
            weights.push(ws * wt);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Quadratic nodal basis `[phi_1, phi_2, phi_3, phi_12, phi_23, phi_13]`.
pub fn shape_functions(s: f64, t: f64) -> [f64; 6] {
    let u = 1.0 - s - t;
    [u * (1.0 - 2.0 * s - 2.0 * t), s * (2.0 * s - 1.0), t * (2.0 * t - 1.0), 4.0 * s * u, 4.0 * s * t, 4.0 * t * u]
}

/// `[d/ds, d/dt]` of each function in [`shape_functions`].
pub fn shape_derivatives(s: f64, t: f64) -> [[f64; 2]; 6] {
    let g = 4.0 * s + 4.0 * t - 3.0;
    [
        [g, g],
        [4.0 * s - 1.0, 0.0],
        [0.0, 4.0 * t - 1.0],
        [4.0 - 8.0 * s - 4.0 * t, -4.0 * s],
        [4.0 * t, 4.0 * s],
        [-4.0 * t, 4.0 - 4.0 * s - 8.0 * t],
    ]
}

/// Geometry of one triangular face: corners and optional quadratic midpoints
/// `a_{1,2}, a_{2,3}, a_{1,3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub corners: [Vec3; 3],
    pub midpoints: Option<[Vec3; 3]>,
}

impl FaceGeometry {
    pub fn flat(corners: [Vec3; 3]) -> Self {
        Self { corners, midpoints: None }
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.corners;
        a.distance(b).max(b.distance(c)).max(a.distance(c))
    }

    fn nodes(&self) -> [Vec3; 6] {
        let [a, b, c] = self.corners;
        let m = self.midpoints.unwrap_or([(a + b) * 0.5, (b + c) * 0.5, (a + c) * 0.5]);
        [a, b, c, m[0], m[1], m[2]]
    }
}

/// Image of a reference point under the face map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePoint {
    pub position: Vec3,
    pub jacobian_norm: f64,
    pub unit_normal: Vec3,
}

/// Evaluate the face map. Flat faces use the affine map (`jacobian_norm`
/// is twice the area); curved faces the six-node quadratic map.
pub fn map_face(face: &FaceGeometry, s: f64, t: f64) -> Result<FacePoint, QuadratureError> {
    let [a, b, c] = face.corners;
    let scale = face.diameter().powi(2);
    let threshold = 1e-14 * scale;
    let (position, jac) = match face.midpoints {
        None => {
            let jac = (b - a).cross(c - a);
            (a + (b - a) * s + (c - a) * t, jac)
        }
        Some(_) => {
            let nodes = face.nodes();
            let phi = shape_functions(s, t);
            let dphi = shape_derivatives(s, t);
            let mut x = Vec3::ZERO;
            let mut ds = Vec3::ZERO;
            let mut dt = Vec3::ZERO;
            for k in 0..6 {
                x += nodes[k] * phi[k];
                ds += nodes[k] * dphi[k][0];
                dt += nodes[k] * dphi[k][1];
            }
            (x, ds.cross(dt))
        }
    };
    let norm = jac.norm();
    if !(norm > threshold) {
        return Err(QuadratureError::DegenerateJacobian { norm, threshold });
    }
    Ok(FacePoint { position, jacobian_norm: norm, unit_normal: jac / norm })
}

/// Physical quadrature point with the Jacobian folded into the weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub weight: f64,
}

pub fn face_points(face: &FaceGeometry, rule: &QuadratureRule) -> Result<Vec<SurfacePoint>, QuadratureError> {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(&[s, t], &w)| {
            let p = map_face(face, s, t)?;
            Ok(SurfacePoint { position: p.position, normal: p.unit_normal, weight: w * p.jacobian_norm })
        })
        .collect()
}

/// `int_F f(x, nu) dA` with the order-`n` Duffy rule.
pub fn integrate_face<F>(face: &FaceGeometry, n: usize, f: F) -> Result<C64, QuadratureError>
where
    F: Fn(Vec3, Vec3) -> C64,
{
    let rule = duffy_rule(n)?;
    let mut sum = C64::new(0.0, 0.0);
    for p in face_points(face, &rule)? {
        sum += f(p.position, p.normal) * p.weight;
    }
    Ok(sum)
}

/// Default order for curved faces: resolves `exp(2 i kappa_abs d.x)` across the face.
pub fn curved_order(kappa_abs: f64, diameter: f64) -> usize {
    let n = (kappa_abs * diameter).ceil();
    let n = if n.is_finite() && n >= 0.0 { n as usize } else { 0 };
    (n + 4).max(6)
}

/// Exact `int_T exp(i k . x) dA` over a flat triangle for complex `k`.
pub fn closed_form_flat(corners: [Vec3; 3], k: CVec3) -> C64 {
    let i = C64::new(0.0, 1.0);
    let z = corners.map(|v| i * k.dot_real(v));
    exp_integral_flat(corners, z)
}

/// `int_T exp(phi(x)) dA` where `phi` is affine on `T` with vertex values `z`.
pub fn exp_integral_flat(corners: [Vec3; 3], z: [C64; 3]) -> C64 {
    let area = triangle_area_vector(corners[0], corners[1], corners[2]).norm();
    let c = (z[0] + z[1] + z[2]) / 3.0;
    let u = [z[0] - c, z[1] - c, z[2] - c];
    let e = u.map(|v| v.exp());
    c.exp() * divided_difference_exp(u, e) * (2.0 * area)
}

/// Second divided difference `exp[u0, u1, u2]`, given `e_k = exp(u_k)`.
///
/// For nearly coincident nodes the series in complete homogeneous symmetric
/// polynomials is used; otherwise the recursion is arranged so the outer
/// division is by the largest node separation.
pub fn divided_difference_exp(u: [C64; 3], e: [C64; 3]) -> C64 {
    let d01 = (u[0] - u[1]).norm();
    let d12 = (u[1] - u[2]).norm();
    let d02 = (u[0] - u[2]).norm();
    let spread = d01.max(d12).max(d02);
    if spread < 1.0 {
        return dd2_series(u);
    }
    let (a, b, c) = if spread == d02 {
        (0, 1, 2)
    } else if spread == d01 {
        (0, 2, 1)
    } else {
        (1, 0, 2)
    };
    (dd1(u[b], u[c], e[b], e[c]) - dd1(u[a], u[b], e[a], e[b])) / (u[c] - u[a])
}

fn dd1(u: C64, v: C64, eu: C64, ev: C64) -> C64 {
    let w = v - u;
    if w.norm() < 0.5 {
        eu * phi1(w)
    } else {
        (ev - eu) / w
    }
}

/// `(e^w - 1) / w` by its Taylor series, for `|w| < 1`.
fn phi1(w: C64) -> C64 {
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    for n in 2..40 {
        term = term * w / n as f64;
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// `sum_n h_n(u0, u1, u2) / (n + 2)!`, converges quickly for `|u_k| < 1`.
fn dd2_series(u: [C64; 3]) -> C64 {
    let one = C64::new(1.0, 0.0);
    let rho = u[0].norm().max(u[1].norm()).max(u[2].norm());
    let (mut p, mut q, mut r) = (one, one, one);
    let mut fact = 2.0;
    let mut sum = one / fact;
    // |h_n| <= C(n+2, 2) rho^n; individual terms may vanish (h_1 = 0 for centred nodes)
    let mut bound = 1.0;
    for n in 1..60 {
        p *= u[0];
        q = p + u[1] * q;
        r = q + u[2] * r;
        fact *= (n + 2) as f64;
        sum += r / fact;
        bound *= rho;
        let tail = bound * ((n + 1) * (n + 2) / 2) as f64 / fact;
        if tail < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}
