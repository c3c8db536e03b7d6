//! Plane-wave basis: directions, polarizations, direction-count heuristic,
//! trace operators and field evaluation.
//!
//! The test functions of the ultra-weak formulation solve the adjoint
//! Maxwell system, `xi = A exp(i conj(k) d . (x - x0))` with
//! `k = kappa sqrt(eps_r mu_r)`. Fields are reconstructed from the companion
//! waves `A exp(i k d . (x - x0))`, which solve the original system.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{CVec3, Vec3};
use crate::mesh::{ElementKind, Material, Mesh};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("number of directions must be at least 1")]
    NoDirections,
    #[error("unsupported condition tolerance {0:e}; use 1e5, 1e7 or 1e9")]
    UnknownTolerance(f64),
    #[error("kappa_abs * h_av must be non-negative and finite, got {0}")]
    InvalidSize(f64),
    #[error("normal must be a unit vector (|nu| = {0})")]
    NonUnitNormal(f64),
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("calibration sweep produced only {0} points")]
    SweepTooShort(usize),
}

/// Radical inverse of `n` in base `b`.
pub fn van_der_corput(mut n: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while n > 0 {
        x += (n % base) as f64 * inv;
        n /= base;
        inv /= base as f64;
    }
    x
}

/// First `p` points of the nested radical-inverse direction sequence.
pub fn hammersley_directions(p: usize) -> Result<Vec<Vec3>, BasisError> {
    if p == 0 {
        return Err(BasisError::NoDirections);
    }
    Ok((0..p as u64)
        .map(|l| {
            let z = 1.0 - 2.0 * van_der_corput(l + 1, 2);
            let theta = 2.0 * core::f64::consts::PI * van_der_corput(l + 1, 3);
            let r = (1.0 - z * z).max(0.0).sqrt();
            Vec3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect())
}

/// Orthonormal polarizations `(A1, A2)` with `A1 = normalize(d x e)`, `e`
/// the coordinate axis along which `d` has its smallest component, and
/// `A2 = d x A1`.
pub fn polarization_pair(d: Vec3) -> (Vec3, Vec3) {
    let c = [d.x.abs(), d.y.abs(), d.z.abs()];
    let mut axis = 0;
    for i in 1..3 {
        if c[i] < c[axis] {
            axis = i;
        }
    }
    let e = [Vec3::X, Vec3::Y, Vec3::Z][axis];
    let a1 = d.cross(e).normalized();
    let a2 = d.cross(a1);
    (a1, a2)
}

/// Upper bound on the 2-norm condition number of the `D` blocks that the
/// direction-count polynomial was fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum ConditionTolerance {
    T1e5,
    #[default]
    T1e7,
    T1e9,
}

impl ConditionTolerance {
    pub const ALL: [ConditionTolerance; 3] = [ConditionTolerance::T1e5, ConditionTolerance::T1e7, ConditionTolerance::T1e9];

    pub fn from_value(v: f64) -> Result<Self, BasisError> {
        match v {
            v if v == 1e5 => Ok(Self::T1e5),
            v if v == 1e7 => Ok(Self::T1e7),
            v if v == 1e9 => Ok(Self::T1e9),
            v => Err(BasisError::UnknownTolerance(v)),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::T1e5 => 1e5,
            Self::T1e7 => 1e7,
            Self::T1e9 => 1e9,
        }
    }

    fn index(self) -> usize {
        match self {
            Self::T1e5 => 0,
            Self::T1e7 => 1,
            Self::T1e9 => 2,
        }
    }
}

/// `N = ceil(a x^2 + b x + c)` with `x = kappa_abs h_av`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionPolynomial {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl DirectionPolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

const DIRECTION_TABLE: [[DirectionPolynomial; 3]; 3] = [
    [
        DirectionPolynomial { a: 0.2972, b: 7.3336, c: 4.0 },
        DirectionPolynomial { a: 0.3305, b: 10.2707, c: 4.0 },
        DirectionPolynomial { a: 0.3430, b: 13.6221, c: 8.1296 },
    ],
    [
        DirectionPolynomial { a: 0.3752, b: 9.0041, c: 4.0 },
        DirectionPolynomial { a: 0.4325, b: 12.2717, c: 4.0 },
        DirectionPolynomial { a: 0.4704, b: 15.6097, c: 9.9414 },
    ],
    [
        DirectionPolynomial { a: 0.5365, b: 9.1369, c: 4.0 },
        DirectionPolynomial { a: 0.5803, b: 13.3338, c: 4.0 },
        DirectionPolynomial { a: 0.5967, b: 17.7977, c: 7.7490 },
    ],
];

pub fn direction_polynomial(kind: ElementKind, tol: ConditionTolerance) -> DirectionPolynomial {
    DIRECTION_TABLE[kind.index()][tol.index()]
}

/// Number of plane-wave directions for an element.
pub fn direction_count(kind: ElementKind, kappa_abs: f64, h_av: f64, tol: ConditionTolerance) -> Result<usize, BasisError> {
    let x = kappa_abs * h_av;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(BasisError::InvalidSize(x));
    }
    let n = direction_polynomial(kind, tol).eval(x).ceil();
    Ok((n as usize).max(4))
}

/// `kappa |sqrt(eps_r mu_r)|` for free-space wave number `kappa`.
pub fn kappa_abs(kappa: f64, material: &Material) -> f64 {
    kappa * (material.eps_r * material.mu_r).norm().sqrt()
}

/// `kappa sqrt(eps_r mu_r)`, principal branch.
pub fn element_wavenumber(kappa: f64, material: &Material) -> C64 {
    (material.eps_r * material.mu_r).sqrt() * kappa
}

/// Mean distance of an element's vertices from their centroid.
pub fn h_av(mesh: &Mesh, element: usize) -> f64 {
    mesh.elements[element].h_av
}

/// Which boundary trace of a plane-wave family is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Incoming trace of the adjoint waves: `-nu x mu^-1 curl xi + (i kappa / Z) xi_T`.
    Chi,
    /// Outgoing trace of the adjoint waves: `nu x mu^-1 curl xi + (i kappa / Z) xi_T`.
    Fk,
    /// Incoming trace of the field waves used for reconstruction.
    FieldIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveBasis {
    pub element: usize,
    pub directions: Vec<Vec3>,
    /// `[A1, A2]` per direction.
    pub polarizations: Vec<[Vec3; 2]>,
    pub centroid: Vec3,
    /// Free-space wave number.
    pub kappa: f64,
    pub material: Material,
    pub k_elem: C64,
    pub kappa_abs: f64,
    pub h_av: f64,
}

impl PlaneWaveBasis {
    /// Basis with `p` directions for element `element` of `mesh`.
    pub fn new(mesh: &Mesh, element: usize, kappa: f64, p: usize) -> Result<Self, BasisError> {
        let directions = hammersley_directions(p)?;
        let polarizations = directions
            .iter()
            .map(|&d| {
                let (a1, a2) = polarization_pair(d);
                [a1, a2]
            })
            .collect();
        let material = mesh.material_of(element);
        Ok(Self {
            element,
            directions,
            polarizations,
            centroid: mesh.element_centroid(element),
            kappa,
            material,
            k_elem: element_wavenumber(kappa, &material),
            kappa_abs: kappa_abs(kappa, &material),
            h_av: mesh.elements[element].h_av,
        })
    }

    /// Basis sized by the direction-count polynomial.
    pub fn with_tolerance(mesh: &Mesh, element: usize, kappa: f64, tol: ConditionTolerance) -> Result<Self, BasisError> {
        let el = &mesh.elements[element];
        let ka = kappa_abs(kappa, &mesh.material_of(element));
        let p = direction_count(el.kind, ka, el.h_av, tol)?;
        Self::new(mesh, element, kappa, p)
    }

    pub fn p(&self) -> usize {
        self.directions.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.directions.len()
    }

    /// Wave vector `c` with the trace family varying as `exp(i c . (x - x0))`.
    pub fn wave_vector(&self, l: usize, kind: TraceKind) -> CVec3 {
        let k = match kind {
            TraceKind::Chi | TraceKind::Fk => self.k_elem.conj(),
            TraceKind::FieldIn => self.k_elem,
        };
        self.directions[l].scale_c(k)
    }

    /// Factor `s` such that the curl part of the trace is `s (nu x (d x A))`.
    pub fn curl_factor(&self, kind: TraceKind) -> C64 {
        let i = C64::new(0.0, 1.0);
        match kind {
            TraceKind::Chi => -(i * self.k_elem.conj() / self.material.mu_r.conj()),
            TraceKind::Fk => i * self.k_elem.conj() / self.material.mu_r.conj(),
            TraceKind::FieldIn => -(i * self.k_elem / self.material.mu_r),
        }
    }

    fn phase(&self, l: usize, kind: TraceKind, x: Vec3) -> C64 {
        let i = C64::new(0.0, 1.0);
        (i * self.wave_vector(l, kind).dot_real(x - self.centroid)).exp()
    }

    /// Adjoint plane wave `xi_{l,m}(x)`.
    pub fn xi(&self, l: usize, m: usize, x: Vec3) -> CVec3 {
        self.polarizations[l][m].scale_c(self.phase(l, TraceKind::Chi, x))
    }

    /// Trace of function `2l + m` at `x` with unit normal `nu` (outward from the element).
    pub fn trace(&self, kind: TraceKind, l: usize, m: usize, x: Vec3, nu: Vec3, z: f64) -> Result<CVec3, BasisError> {
        let nn = nu.norm();
        if (nn - 1.0).abs() > 1e-10 {
            return Err(BasisError::NonUnitNormal(nn));
        }
        Ok(self.trace_unchecked(kind, l, m, x, nu, z))
    }

    pub(crate) fn trace_unchecked(&self, kind: TraceKind, l: usize, m: usize, x: Vec3, nu: Vec3, z: f64) -> CVec3 {
        let a = self.polarizations[l][m];
        let b = self.directions[l].cross(a);
        let i = C64::new(0.0, 1.0);
        let curl = nu.cross(b).scale_c(self.curl_factor(kind));
        let tang = (a - nu * a.dot(nu)).scale_c(i * self.kappa / z);
        (curl + tang) * self.phase(l, kind, x)
    }

    pub fn chi_trace(&self, l: usize, m: usize, x: Vec3, nu: Vec3, z: f64) -> Result<CVec3, BasisError> {
        self.trace(TraceKind::Chi, l, m, x, nu, z)
    }

    pub fn fk_trace(&self, l: usize, m: usize, x: Vec3, nu: Vec3, z: f64) -> Result<CVec3, BasisError> {
        self.trace(TraceKind::Fk, l, m, x, nu, z)
    }

    /// Field wave `A exp(i k d . (x - x0))` for function `2l + m`.
    pub fn field_wave(&self, l: usize, m: usize, x: Vec3) -> CVec3 {
        self.polarizations[l][m].scale_c(self.phase(l, TraceKind::FieldIn, x))
    }

    fn check_len(&self, coeffs: &[C64]) -> Result<(), BasisError> {
        if coeffs.len() != self.dim() {
            return Err(BasisError::LengthMismatch { expected: self.dim(), got: coeffs.len() });
        }
        Ok(())
    }

    /// `E(x) = sum_j c_j A_j exp(i k d_j . (x - x0))`.
    pub fn element_field(&self, coeffs: &[C64], x: Vec3) -> Result<CVec3, BasisError> {
        self.check_len(coeffs)?;
        let mut e = CVec3::ZERO;
        for l in 0..self.p() {
            let ph = self.phase(l, TraceKind::FieldIn, x);
            let [a1, a2] = self.polarizations[l];
            e += (a1.scale_c(coeffs[2 * l]) + a2.scale_c(coeffs[2 * l + 1])) * ph;
        }
        Ok(e)
    }

    /// `curl E(x)` of [`element_field`](Self::element_field).
    pub fn element_curl(&self, coeffs: &[C64], x: Vec3) -> Result<CVec3, BasisError> {
        self.check_len(coeffs)?;
        let i = C64::new(0.0, 1.0);
        let mut e = CVec3::ZERO;
        for l in 0..self.p() {
            let ph = self.phase(l, TraceKind::FieldIn, x) * i * self.k_elem;
            let d = self.directions[l];
            let [a1, a2] = self.polarizations[l];
            e += (d.cross(a1).scale_c(coeffs[2 * l]) + d.cross(a2).scale_c(coeffs[2 * l + 1])) * ph;
        }
        Ok(e)
    }
}

/// One point of a calibration sweep: the largest `p` meeting the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub kappa_h: f64,
    pub p: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub points: Vec<CalibrationPoint>,
    pub fit: DirectionPolynomial,
}

/// Single vacuum element of the given kind with unit-scale geometry.
pub fn reference_element(kind: ElementKind) -> Mesh {
    use crate::mesh::{build_topology, sorted3, triangulate_polygon, FaceTag, RawElement, RawMesh};
    let pts: &[[f64; 3]] = match kind {
        ElementKind::Tetra => &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        ElementKind::Wedge => {
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]
        }
        ElementKind::Hexa => &[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ],
    };
    let mut raw = RawMesh {
        vertices: pts.iter().map(|&p| Vec3::from_array(p)).collect(),
        elements: alloc::vec![RawElement { kind, vertices: (0..pts.len()).collect(), material: 0 }],
        materials: alloc::vec![Material::VACUUM],
        ..Default::default()
    };
    for poly in kind.local_faces() {
        for t in triangulate_polygon(poly) {
            raw.face_tags.insert(sorted3(t), FaceTag::absorbing());
        }
    }
    build_topology(raw).expect("reference element is valid")
}

/// Reproduce the direction-count fit: for each `kappa_abs h_av` in `sweep`,
/// bisect for the largest `p` whose reference-element `D` block has 2-norm
/// condition number at most the tolerance, then least-squares fit a
/// quadratic with `c >= 4`.
pub fn calibrate_direction_polynomial(
    kind: ElementKind,
    tol: ConditionTolerance,
    sweep: &[f64],
    p_max: usize,
) -> Result<Calibration, crate::Error> {
    let mesh = reference_element(kind);
    let h = mesh.elements[0].h_av;
    let mut points = Vec::new();
    let limit = tol.value();
    let mut p_lo_prev = 1;
    for &kh in sweep {
        let kappa = kh / h;
        let cond = |p: usize| -> Result<f64, crate::Error> {
            let basis = PlaneWaveBasis::new(&mesh, 0, kappa, p)?;
            let d = crate::assembly::element_d_block(&mesh, 0, &basis)?;
            Ok(crate::linalg::hpd_condition_number(&d))
        };
        // largest p with cond <= limit, assuming monotone growth in p
        let (mut lo, mut hi) = (p_lo_prev, p_max + 1);
        if cond(lo)? > limit {
            lo = 1;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cond(mid)? <= limit {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p_lo_prev = lo;
        points.push(CalibrationPoint { kappa_h: kh, p: lo, condition: cond(lo)? });
    }
    if points.len() < 3 {
        return Err(BasisError::SweepTooShort(points.len()).into());
    }
    let fit = fit_quadratic(&points);
    Ok(Calibration { points, fit })
}

fn fit_quadratic(points: &[CalibrationPoint]) -> DirectionPolynomial {
    let solve = |cols: &[fn(f64) -> f64], y: &dyn Fn(&CalibrationPoint) -> f64| -> Vec<f64> {
        let n = cols.len();
        let mut ata = alloc::vec![0.0; n * n];
        let mut atb = alloc::vec![0.0; n];
        for pt in points {
            let row: Vec<f64> = cols.iter().map(|f| f(pt.kappa_h)).collect();
            for i in 0..n {
                atb[i] += row[i] * y(pt);
                for j in 0..n {
                    ata[i * n + j] += row[i] * row[j];
                }
            }
        }
        // Gaussian elimination on the small normal equations
        for k in 0..n {
            let piv = (k..n).max_by(|&a, &b| ata[a * n + k].abs().total_cmp(&ata[b * n + k].abs())).unwrap_or(k);
            for j in 0..n {
                ata.swap(k * n + j, piv * n + j);
            }
            atb.swap(k, piv);
            for i in (k + 1)..n {
                let f = ata[i * n + k] / ata[k * n + k];
                for j in k..n {
                    ata[i * n + j] -= f * ata[k * n + j];
                }
                atb[i] -= f * atb[k];
            }
        }
        let mut x = alloc::vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = ((k + 1)..n).map(|j| ata[k * n + j] * x[j]).sum();
            x[k] = (atb[k] - s) / ata[k * n + k];
        }
        x
    };
    let full = solve(&[|x| x * x, |x| x, |_| 1.0], &|p| p.p as f64);
    if full[2] >= 4.0 {
        return DirectionPolynomial { a: full[0], b: full[1], c: full[2] };
    }
    let ab = solve(&[|x| x * x, |x| x], &|p| p.p as f64 - 4.0);
    DirectionPolynomial { a: ab[0], b: ab[1], c: 4.0 }
}
