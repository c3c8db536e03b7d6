//! Assembly of the block system `D x = C x + b`.
//!
//! Every entry is a face integral `int_F Z T_j . conj(T_i) dA` between two
//! families of plane-wave traces: the test family is always the outgoing
//! trace `F_K Y` of the row element, the trial family the incoming trace
//! `chi` of the element the unknown lives on (or the incident field for the
//! right-hand side). On flat faces such integrals are evaluated exactly,
//! on curved faces by Duffy quadrature over the quadratic face map.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::basis::{BasisError, ConditionTolerance, PlaneWaveBasis, TraceKind};
use crate::geometry::{CVec3, Vec3};
use crate::linalg::CMatrix;
use crate::mesh::{FaceTag, Material, Mesh, SourceKind};
use crate::oracle::PlaneWave;
use crate::quadrature::{curved_order, divided_difference_exp, duffy_rule, face_points, FaceGeometry, QuadratureError, SurfacePoint};
use crate::{par, C64};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("face {face}: 2/Z + eta vanishes on a resistive sheet")]
    ResistiveSingular { face: usize },
    #[error("face {face} is tagged as interior but has no neighbour")]
    MissingNeighbor { face: usize },
    #[error("element {element}: D block is not positive definite (condition estimate {condition:e})")]
    NotPositiveDefinite { element: usize, condition: f64 },
    #[error("face {face}: {source}")]
    Quadrature { face: usize, source: QuadratureError },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("invalid incident field: {0}")]
    InvalidIncident(&'static str),
    #[error("free-space wave number must be positive, got {0}")]
    InvalidWavenumber(f64),
    #[error("expected {expected} basis objects, got {got}")]
    BasisCount { expected: usize, got: usize },
}

/// `Z = sqrt(mu_hat) / sqrt(eps_hat)`; on interior faces the hatted values
/// are `|sqrt(a_K a_K')|`, on boundary faces `|a_K|`.
pub fn z_impedance(a: &Material, b: Option<&Material>) -> f64 {
    let (eps, mu) = match b {
        Some(b) => ((a.eps_r * b.eps_r).sqrt().norm(), (a.mu_r * b.mu_r).sqrt().norm()),
        None => (a.eps_r.norm(), a.mu_r.norm()),
    };
    mu.sqrt() / eps.sqrt()
}

pub fn face_z(mesh: &Mesh, face: usize) -> f64 {
    let f = &mesh.faces[face];
    let a = mesh.material_of(f.owner.element);
    match f.neighbor {
        Some(n) => z_impedance(&a, Some(&mesh.material_of(n.element))),
        None => z_impedance(&a, None),
    }
}

/// How a face is integrated. Normals are those of the face's owner.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceIntegration {
    Flat { corners: [Vec3; 3], normal: Vec3, area: f64 },
    Quadrature { points: Vec<SurfacePoint> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub z: f64,
    pub integration: FaceIntegration,
}

impl FaceData {
    /// `kappa_abs` is the largest element wave number touching the face.
    /// `forced_order` integrates flat faces by quadrature as well.
    pub fn new(mesh: &Mesh, face: usize, kappa_abs: f64, forced_order: Option<usize>) -> Result<Self, AssemblyError> {
        let f = &mesh.faces[face];
        let corners = mesh.face_corners(face);
        let geom = FaceGeometry { corners, midpoints: f.curved.map(|c| c.midpoints) };
        let quad = |n: usize| -> Result<FaceIntegration, AssemblyError> {
            let rule = duffy_rule(n).map_err(|source| AssemblyError::Quadrature { face, source })?;
            let points = face_points(&geom, &rule).map_err(|source| AssemblyError::Quadrature { face, source })?;
            Ok(FaceIntegration::Quadrature { points })
        };
        let integration = match (f.curved.is_some(), forced_order) {
            (_, Some(n)) => quad(n)?,
            (true, None) => quad(curved_order(kappa_abs, geom.diameter()))?,
            (false, None) => {
                let av = crate::geometry::triangle_area_vector(corners[0], corners[1], corners[2]);
                FaceIntegration::Flat { corners, normal: av.normalized(), area: av.norm() }
            }
        };
        Ok(Self { z: face_z(mesh, face), integration })
    }

    pub fn quadrature_points(&self) -> usize {
        match &self.integration {
            FaceIntegration::Flat { .. } => 0,
            FaceIntegration::Quadrature { points } => points.len(),
        }
    }
}

/// A family of plane-wave traces on one side of a face:
/// `T_f(x) = [curl_factor (nu x b_f) + (tan_factor / Z) (a_f)_T] exp(i c_w . (x - origin))`
/// where `w = f / per_wave` and `nu = side * nu_owner` is the outward
/// normal of the side the family lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub waves: Vec<CVec3>,
    pub origin: Vec3,
    pub a: Vec<CVec3>,
    pub b: Vec<CVec3>,
    pub per_wave: usize,
    pub curl_factor: C64,
    pub tan_factor: C64,
    pub side: f64,
}

impl TraceSet {
    pub fn from_basis(basis: &PlaneWaveBasis, kind: TraceKind, side: f64) -> Self {
        let p = basis.p();
        let mut a = Vec::with_capacity(2 * p);
        let mut b = Vec::with_capacity(2 * p);
        for l in 0..p {
            let d = basis.directions[l];
            for pol in basis.polarizations[l] {
                a.push(pol.to_complex());
                b.push(d.cross(pol).to_complex());
            }
        }
        Self {
            waves: (0..p).map(|l| basis.wave_vector(l, kind)).collect(),
            origin: basis.centroid,
            a,
            b,
            per_wave: 2,
            curl_factor: basis.curl_factor(kind),
            tan_factor: C64::new(0.0, basis.kappa),
            side,
        }
    }

    /// `curl_scale (nu x mu^-1 curl E) + tan_scale (i kappa / Z) E_T` for a
    /// vacuum plane wave `E`.
    pub fn plane_wave(pw: &PlaneWave, curl_scale: C64, tan_scale: C64, side: f64) -> Self {
        let ik = C64::new(0.0, pw.kappa);
        Self {
            waves: vec![pw.direction.to_complex() * pw.kappa],
            origin: Vec3::ZERO,
            a: vec![pw.polarization],
            b: vec![pw.polarization.rcross(pw.direction)],
            per_wave: 1,
            curl_factor: curl_scale * ik,
            tan_factor: tan_scale * ik,
            side,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    #[inline]
    pub fn amplitude(&self, f: usize, nu_owner: Vec3, z: f64) -> CVec3 {
        self.combine(self.a[f], self.b[f], nu_owner, z)
    }

    /// Trace amplitude of a wave with polarization `a` and `b = d x a`.
    #[inline]
    pub fn combine(&self, a: CVec3, b: CVec3, nu_owner: Vec3, z: f64) -> CVec3 {
        let nu = nu_owner * self.side;
        b.rcross(nu) * self.curl_factor + a.tangential(nu) * (self.tan_factor / z)
    }

    #[inline]
    pub fn phase(&self, w: usize, x: Vec3) -> C64 {
        (C64::new(0.0, 1.0) * self.waves[w].dot_real(x - self.origin)).exp()
    }

    pub fn value(&self, f: usize, x: Vec3, nu_owner: Vec3, z: f64) -> CVec3 {
        self.amplitude(f, nu_owner, z) * self.phase(f / self.per_wave, x)
    }
}

/// `out[i][j] += scale * int_F Z trial_j . conj(test_i) dA`.
pub fn face_gram(face: &FaceData, test: &TraceSet, trial: &TraceSet, scale: C64, out: &mut CMatrix) {
    debug_assert_eq!(out.rows(), test.len());
    debug_assert_eq!(out.cols(), trial.len());
    let z = face.z;
    match &face.integration {
        FaceIntegration::Flat { corners, normal, area } => {
            let i = C64::new(0.0, 1.0);
            let vertex_phases = |s: &TraceSet| -> Vec<([C64; 3], [C64; 3])> {
                s.waves
                    .iter()
                    .map(|c| {
                        let ph = corners.map(|v| i * c.dot_real(v - s.origin));
                        (ph, ph.map(|p| p.exp()))
                    })
                    .collect()
            };
            let tp = vertex_phases(test);
            let rp = vertex_phases(trial);
            let ta: Vec<CVec3> = (0..test.len()).map(|f| test.amplitude(f, *normal, z).conj()).collect();
            let ra: Vec<CVec3> = (0..trial.len()).map(|f| trial.amplitude(f, *normal, z)).collect();
            let weight = scale * (z * 2.0 * area);
            for (wi, (tph, te)) in tp.iter().enumerate() {
                for (wj, (rph, re)) in rp.iter().enumerate() {
                    let zz = [rph[0] + tph[0].conj(), rph[1] + tph[1].conj(), rph[2] + tph[2].conj()];
                    let ee = [re[0] * te[0].conj(), re[1] * te[1].conj(), re[2] * te[2].conj()];
                    let integral = divided_difference_exp(zz, ee) * weight;
                    for fi in wi * test.per_wave..(wi + 1) * test.per_wave {
                        let row = out.row_mut(fi);
                        for fj in wj * trial.per_wave..(wj + 1) * trial.per_wave {
                            row[fj] += ra[fj].dot(ta[fi]) * integral;
                        }
                    }
                }
            }
        }
        FaceIntegration::Quadrature { points } => {
            // a self-gram with real scale is Hermitian: only the upper triangle is summed
            let hermitian = core::ptr::eq(test, trial) && scale.im == 0.0;
            let (nt, nr) = (test.len(), trial.len());
            let mut acc = GramAccumulator { re: vec![0.0; nt * nr], im: vec![0.0; nt * nr], cols: nr };
            let mut tb = TraceBatch::default();
            let mut rb = TraceBatch::default();
            for chunk in points.chunks(GRAM_BATCH) {
                tb.fill(test, chunk, z, None, true);
                rb.fill(trial, chunk, z, Some(scale * z), false);
                acc.add_product(&tb, &rb.transposed(), hermitian);
            }
            for i in 0..nt {
                let row = out.row_mut(i);
                for j in if hermitian { i } else { 0 }..nr {
                    row[j] += C64::new(acc.re[i * nr + j], acc.im[i * nr + j]);
                }
            }
            if hermitian {
                for i in 0..nt {
                    for j in i + 1..nr {
                        out[(j, i)] += C64::new(acc.re[i * nr + j], -acc.im[i * nr + j]);
                    }
                }
            }
        }
    }
}

const GRAM_BATCH: usize = 64;

/// Trace values of a function family at a batch of points as split
/// real/imaginary rows, one row per function over (point, component).
#[derive(Default)]
struct TraceBatch {
    re: Vec<f64>,
    im: Vec<f64>,
    len: usize,
    n: usize,
}

/// Same values with one row per (point, component).
struct TransposedBatch {
    re: Vec<f64>,
    im: Vec<f64>,
    n: usize,
}

impl TraceBatch {
    /// With `weight`, values are multiplied by it and the quadrature weight.
    fn fill(&mut self, set: &TraceSet, points: &[SurfacePoint], z: f64, weight: Option<C64>, conj: bool) {
        self.len = 3 * points.len();
        self.n = set.len();
        self.re.clear();
        self.re.resize(self.n * self.len, 0.0);
        self.im.clear();
        self.im.resize(self.n * self.len, 0.0);
        let sign = if conj { -1.0 } else { 1.0 };
        for (q, pt) in points.iter().enumerate() {
            let w = weight.map_or(C64::new(1.0, 0.0), |w| w * pt.weight);
            for wave in 0..set.waves.len() {
                let ph = set.phase(wave, pt.position) * w;
                for f in wave * set.per_wave..(wave + 1) * set.per_wave {
                    let v = set.amplitude(f, pt.normal, z) * ph;
                    let base = f * self.len + 3 * q;
                    for (c, val) in [v.x, v.y, v.z].into_iter().enumerate() {
                        self.re[base + c] = val.re;
                        self.im[base + c] = sign * val.im;
                    }
                }
            }
        }
    }

    fn transposed(&self) -> TransposedBatch {
        let mut re = vec![0.0; self.re.len()];
        let mut im = vec![0.0; self.im.len()];
        for f in 0..self.n {
            for k in 0..self.len {
                re[k * self.n + f] = self.re[f * self.len + k];
                im[k * self.n + f] = self.im[f * self.len + k];
            }
        }
        TransposedBatch { re, im, n: self.n }
    }
}

struct GramAccumulator {
    re: Vec<f64>,
    im: Vec<f64>,
    cols: usize,
}

impl GramAccumulator {
    /// `self[i][j] += sum_k a[i][k] * b[k][j]` (only `j >= i` when `upper`).
    fn add_product(&mut self, a: &TraceBatch, b: &TransposedBatch, upper: bool) {
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { self.add_product_avx2(a, b, upper) };
            return;
        }
        self.add_product_generic(a, b, upper);
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn add_product_avx2(&mut self, a: &TraceBatch, b: &TransposedBatch, upper: bool) {
        self.add_product_generic(a, b, upper);
    }

    #[inline(always)]
    fn add_product_generic(&mut self, a: &TraceBatch, b: &TransposedBatch, upper: bool) {
        let n = self.cols;
        debug_assert_eq!(b.n, n);
        for i in 0..a.n {
            let first = if upper { i } else { 0 };
            let cr = &mut self.re[i * n + first..(i + 1) * n];
            let ci = &mut self.im[i * n + first..(i + 1) * n];
            for k in 0..a.len {
                let (ar, ai) = (a.re[i * a.len + k], a.im[i * a.len + k]);
                let br = &b.re[k * n + first..(k + 1) * n];
                let bi = &b.im[k * n + first..(k + 1) * n];
                for (((cr, ci), br), bi) in cr.iter_mut().zip(ci.iter_mut()).zip(br).zip(bi) {
                    *cr += ar * br - ai * bi;
                    *ci += ar * bi + ai * br;
                }
            }
        }
    }
}

/// Where the unknown of an element represents the total or the scattered field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Region {
    #[default]
    Total,
    Scattered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOptions {
    pub tolerance: ConditionTolerance,
    /// Use this many directions on every element instead of the heuristic.
    pub fixed_p: Option<usize>,
    /// Integrate every face with a Duffy rule of this order.
    pub forced_order: Option<usize>,
    /// Order unknowns by reverse Cuthill-McKee on the element graph.
    pub rcm: bool,
    /// Region of elements not separated from a scattered side by an interface.
    pub default_region: Region,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { tolerance: ConditionTolerance::T1e7, fixed_p: None, forced_order: None, rcm: true, default_region: Region::Total }
    }
}

/// Mesh, bases, per-face data and the global unknown layout.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    /// Free-space wave number.
    pub kappa: f64,
    pub incident: Option<PlaneWave>,
    pub bases: Vec<PlaneWaveBasis>,
    pub faces: Vec<FaceData>,
    /// First unknown of each element.
    pub offsets: Vec<usize>,
    /// Elements in the order their unknowns appear.
    pub order: Vec<usize>,
    pub n_dof: usize,
    pub regions: Vec<Region>,
}

impl Discretization {
    pub fn new(mesh: Mesh, kappa: f64, incident: Option<PlaneWave>, opts: &AssemblyOptions) -> Result<Self, AssemblyError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(AssemblyError::InvalidWavenumber(kappa));
        }
        if let Some(pw) = &incident {
            pw.validate().map_err(AssemblyError::InvalidIncident)?;
        }
        let n = mesh.elements.len();
        let bases = par::map_range(n, |e| match opts.fixed_p {
            Some(p) => PlaneWaveBasis::new(&mesh, e, kappa, p),
            None => PlaneWaveBasis::with_tolerance(&mesh, e, kappa, opts.tolerance),
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        Self::with_bases(mesh, kappa, incident, bases, opts)
    }

    pub fn with_bases(
        mesh: Mesh,
        kappa: f64,
        incident: Option<PlaneWave>,
        bases: Vec<PlaneWaveBasis>,
        opts: &AssemblyOptions,
    ) -> Result<Self, AssemblyError> {
        let n = mesh.elements.len();
        if bases.len() != n {
            return Err(AssemblyError::BasisCount { expected: n, got: bases.len() });
        }
        let faces = par::map_range(mesh.faces.len(), |f| {
            let face = &mesh.faces[f];
            let mut ka = bases[face.owner.element].kappa_abs;
            if let Some(nb) = face.neighbor {
                ka = ka.max(bases[nb.element].kappa_abs);
            }
            FaceData::new(&mesh, f, ka, opts.forced_order)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

        let order = if opts.rcm { crate::solver::rcm_order(&mesh) } else { (0..n).collect() };
        let mut offsets = vec![0; n];
        let mut next = 0;
        for &e in &order {
            offsets[e] = next;
            next += bases[e].dim();
        }
        let regions = element_regions(&mesh, opts.default_region);
        Ok(Self { mesh, kappa, incident, bases, faces, offsets, order, n_dof: next, regions })
    }

    pub fn range(&self, e: usize) -> core::ops::Range<usize> {
        self.offsets[e]..self.offsets[e] + self.bases[e].dim()
    }

    fn side(&self, face: usize, e: usize) -> f64 {
        self.mesh.faces[face].orientation_for(e).unwrap_or(1.0)
    }

    /// Hermitian block `D_K`.
    pub fn d_block(&self, e: usize) -> CMatrix {
        let basis = &self.bases[e];
        let mut d = CMatrix::zeros(basis.dim(), basis.dim());
        for &f in &self.mesh.element_faces[e] {
            let chi = TraceSet::from_basis(basis, TraceKind::Chi, self.side(f, e));
            face_gram(&self.faces[f], &chi, &chi, C64::new(1.0, 0.0), &mut d);
        }
        d.symmetrize_hermitian();
        d
    }

    /// Coupling terms of row element `e` on face `f`: `(column element,
    /// trial traces, scale)`, tested against the `F_K` traces of `e`.
    fn face_terms(&self, e: usize, f: usize) -> Result<Vec<(usize, TraceSet, C64)>, AssemblyError> {
        let face = &self.mesh.faces[f];
        let side = self.side(f, e);
        let basis = &self.bases[e];
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut terms = Vec::with_capacity(2);
        match face.tag {
            FaceTag::Interior | FaceTag::TsInterface { .. } => {
                let nb = face.other_side(e).ok_or(AssemblyError::MissingNeighbor { face: f })?;
                terms.push((nb, TraceSet::from_basis(&self.bases[nb], TraceKind::Chi, -side), one));
            }
            FaceTag::Resistive { eta } => {
                let nb = face.other_side(e).ok_or(AssemblyError::MissingNeighbor { face: f })?;
                let w = resistive_weight(self.faces[f].z, eta).ok_or(AssemblyError::ResistiveSingular { face: f })?;
                terms.push((nb, TraceSet::from_basis(&self.bases[nb], TraceKind::Chi, -side), one - w));
                if w != zero {
                    terms.push((e, TraceSet::from_basis(basis, TraceKind::Chi, side), -w));
                }
            }
            FaceTag::Boundary { q, .. } => {
                if q != zero {
                    terms.push((e, TraceSet::from_basis(basis, TraceKind::Chi, side), q));
                }
            }
        }
        Ok(terms)
    }

    /// Coupling blocks of row element `e`, sorted by column element.
    pub fn row_blocks(&self, e: usize) -> Result<BlockRow, AssemblyError> {
        let basis = &self.bases[e];
        let mut blocks: BTreeMap<usize, CMatrix> = BTreeMap::new();
        for &f in &self.mesh.element_faces[e] {
            let terms = self.face_terms(e, f)?;
            if terms.is_empty() {
                continue;
            }
            let fk = TraceSet::from_basis(basis, TraceKind::Fk, self.side(f, e));
            for (col, trial, scale) in &terms {
                let block = blocks.entry(*col).or_insert_with(|| CMatrix::zeros(basis.dim(), self.bases[*col].dim()));
                face_gram(&self.faces[f], &fk, trial, *scale, block);
            }
        }
        let (cols, blocks) = blocks.into_iter().unzip();
        Ok(BlockRow { cols, blocks })
    }

    /// `y = sum_K' C_KK' x_K'` over an assembled block row.
    pub fn row_product(&self, row: &BlockRow, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (col, block) in row.cols.iter().zip(&row.blocks) {
            block.mul_vec_add(&x[self.range(*col)], y);
        }
    }

    /// `y = sum_K' C_KK' x_K'` for row element `e` without forming the
    /// blocks of quadrature faces: the trial traces are summed at each
    /// point first. Rows with only flat faces go through [`Self::row_blocks`]
    /// and so round exactly like the stored product. `x` is the global
    /// vector, `y` the slice of `e`.
    pub fn apply_row(&self, e: usize, x: &[C64], y: &mut [C64]) -> Result<(), AssemblyError> {
        let all_flat = self.mesh.element_faces[e]
            .iter()
            .all(|&f| matches!(self.faces[f].integration, FaceIntegration::Flat { .. }));
        if all_flat {
            let row = self.row_blocks(e)?;
            self.row_product(&row, x, y);
            return Ok(());
        }
        let basis = &self.bases[e];
        let zero = C64::new(0.0, 0.0);
        y.iter_mut().for_each(|v| *v = zero);
        for &f in &self.mesh.element_faces[e] {
            let terms = self.face_terms(e, f)?;
            if terms.is_empty() {
                continue;
            }
            let fk = TraceSet::from_basis(basis, TraceKind::Fk, self.side(f, e));
            let data = &self.faces[f];
            match &data.integration {
                FaceIntegration::Flat { .. } => {
                    for (col, trial, scale) in &terms {
                        let mut block = CMatrix::zeros(basis.dim(), self.bases[*col].dim());
                        face_gram(data, &fk, trial, *scale, &mut block);
                        block.mul_vec_add(&x[self.range(*col)], y);
                    }
                }
                FaceIntegration::Quadrature { points } => {
                    let z = data.z;
                    for q in points {
                        // traces are linear in (a, b): sum the weighted amplitudes first
                        let mut u = CVec3::ZERO;
                        for (col, trial, scale) in &terms {
                            let xc = &x[self.range(*col)];
                            let (mut sa, mut sb) = (CVec3::ZERO, CVec3::ZERO);
                            for w in 0..trial.waves.len() {
                                let ph = trial.phase(w, q.position);
                                for j in w * trial.per_wave..(w + 1) * trial.per_wave {
                                    let c = xc[j] * ph;
                                    sa += trial.a[j] * c;
                                    sb += trial.b[j] * c;
                                }
                            }
                            u += trial.combine(sa, sb, q.normal, z) * *scale;
                        }
                        u = u * (z * q.weight);
                        // conj(amp_i) . u = conj(a_i) . conj(tan / Z) u_T + conj(b_i) . conj(curl) (u x nu)
                        let nu = q.normal * fk.side;
                        let ut = u.tangential(nu) * (fk.tan_factor / z).conj();
                        let uc = u.rcross(nu) * -fk.curl_factor.conj();
                        for w in 0..fk.waves.len() {
                            let ph = fk.phase(w, q.position).conj();
                            for i in w * fk.per_wave..(w + 1) * fk.per_wave {
                                y[i] += (fk.a[i].conj().dot(ut) + fk.b[i].conj().dot(uc)) * ph;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Right-hand side entries of element `e`.
    pub fn element_rhs(&self, e: usize) -> Result<Vec<C64>, AssemblyError> {
        let basis = &self.bases[e];
        let mut out = CMatrix::zeros(basis.dim(), 1);
        let one = C64::new(1.0, 0.0);
        for &f in &self.mesh.element_faces[e] {
            let face = &self.mesh.faces[f];
            let side = self.side(f, e);
            // g = curl_scale (nu x mu^-1 curl E^i) + tan_scale (i kappa / Z) E^i_T
            let (curl_scale, tan_scale) = match face.tag {
                FaceTag::Boundary { q, source: SourceKind::TotalField } => (one + q, one - q),
                FaceTag::Boundary { q, source: SourceKind::ScatteredField } => (-(one + q), q - one),
                FaceTag::TsInterface { scattered_side } if scattered_side == e => (-one, -one),
                FaceTag::TsInterface { .. } => (one, one),
                _ => continue,
            };
            // no incident field means E^i = 0
            let Some(pw) = self.incident.as_ref() else { continue };
            let fk = TraceSet::from_basis(basis, TraceKind::Fk, side);
            let g = TraceSet::plane_wave(pw, curl_scale, tan_scale, side);
            face_gram(&self.faces[f], &fk, &g, one, &mut out);
        }
        Ok(out.as_slice().to_vec())
    }

    pub fn assemble_d(&self) -> Vec<CMatrix> {
        par::map_range(self.mesh.elements.len(), |e| self.d_block(e))
    }

    pub fn assemble_c(&self) -> Result<Vec<BlockRow>, AssemblyError> {
        par::map_range(self.mesh.elements.len(), |e| self.row_blocks(e)).into_iter().collect()
    }

    pub fn assemble_rhs(&self) -> Result<Vec<C64>, AssemblyError> {
        let parts = par::map_range(self.mesh.elements.len(), |e| self.element_rhs(e));
        let mut b = vec![C64::new(0.0, 0.0); self.n_dof];
        for (e, part) in parts.into_iter().enumerate() {
            b[self.range(e)].copy_from_slice(&part?);
        }
        Ok(b)
    }

    pub fn assemble_all(&self) -> Result<SystemOperators, AssemblyError> {
        Ok(SystemOperators { d: self.assemble_d(), c: self.assemble_c()?, b: self.assemble_rhs()? })
    }

    /// Off-diagonal blocks `(K, K')` and `(K', K)` of an interior face.
    pub fn interior_face_blocks(&self, face: usize) -> Result<(CMatrix, CMatrix), AssemblyError> {
        let f = &self.mesh.faces[face];
        let k = f.owner.element;
        let kp = f.neighbor.ok_or(AssemblyError::MissingNeighbor { face })?.element;
        let one = C64::new(1.0, 0.0);
        let mut a = CMatrix::zeros(self.bases[k].dim(), self.bases[kp].dim());
        face_gram(
            &self.faces[face],
            &TraceSet::from_basis(&self.bases[k], TraceKind::Fk, 1.0),
            &TraceSet::from_basis(&self.bases[kp], TraceKind::Chi, -1.0),
            one,
            &mut a,
        );
        let mut b = CMatrix::zeros(self.bases[kp].dim(), self.bases[k].dim());
        face_gram(
            &self.faces[face],
            &TraceSet::from_basis(&self.bases[kp], TraceKind::Fk, -1.0),
            &TraceSet::from_basis(&self.bases[k], TraceKind::Chi, 1.0),
            one,
            &mut b,
        );
        Ok((a, b))
    }

    /// Heap bytes held by the discretization itself (excluding operators).
    pub fn heap_bytes(&self) -> usize {
        let pts: usize = self.faces.iter().map(|f| f.quadrature_points() * core::mem::size_of::<SurfacePoint>()).sum();
        pts + self.faces.len() * core::mem::size_of::<FaceData>()
    }
}

/// `w = eta / (2/Z + eta)`, or `None` when the denominator vanishes.
pub fn resistive_weight(z: f64, eta: C64) -> Option<C64> {
    let den = C64::new(2.0 / z, 0.0) + eta;
    if den.norm() <= 1e-14 * (2.0 / z).max(eta.norm()) {
        return None;
    }
    Some(eta / den)
}

/// Incident-field data on a face seen from the total-field side:
/// `nu x mu^-1 curl E^i + (i kappa / Z) E^i_T` for a vacuum plane wave.
pub fn incident_trace(x: Vec3, nu: Vec3, z: f64, pw: &PlaneWave) -> CVec3 {
    let e = pw.field(x);
    let curl = pw.curl(x);
    curl.rcross(nu) + e.tangential(nu) * C64::new(0.0, pw.kappa / z)
}

/// Row of block-sparse coupling blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockRow {
    pub cols: Vec<usize>,
    pub blocks: Vec<CMatrix>,
}

impl BlockRow {
    pub fn heap_bytes(&self) -> usize {
        self.cols.len() * core::mem::size_of::<usize>() + self.blocks.iter().map(|b| b.heap_bytes()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperators {
    pub d: Vec<CMatrix>,
    pub c: Vec<BlockRow>,
    pub b: Vec<C64>,
}

/// `D` block of a single element with its own face data (diagnostics).
pub fn element_d_block(mesh: &Mesh, e: usize, basis: &PlaneWaveBasis) -> Result<CMatrix, AssemblyError> {
    let mut d = CMatrix::zeros(basis.dim(), basis.dim());
    for &f in &mesh.element_faces[e] {
        let data = FaceData::new(mesh, f, basis.kappa_abs, None)?;
        let side = mesh.faces[f].orientation_for(e).unwrap_or(1.0);
        let chi = TraceSet::from_basis(basis, TraceKind::Chi, side);
        face_gram(&data, &chi, &chi, C64::new(1.0, 0.0), &mut d);
    }
    d.symmetrize_hermitian();
    Ok(d)
}

/// Total/scattered region of every element: elements reachable from the
/// scattered side of an interface without crossing an interface are
/// scattered, the rest total. Without interfaces all get `default`.
pub fn element_regions(mesh: &Mesh, default: Region) -> Vec<Region> {
    let seeds: Vec<usize> = mesh
        .faces
        .iter()
        .filter_map(|f| match f.tag {
            FaceTag::TsInterface { scattered_side } => Some(scattered_side),
            _ => None,
        })
        .collect();
    if seeds.is_empty() {
        return vec![default; mesh.elements.len()];
    }
    let scattered = mesh.flood_fill(&seeds, |f| matches!(f.tag, FaceTag::TsInterface { .. }));
    scattered.into_iter().map(|s| if s { Region::Scattered } else { Region::Total }).collect()
}
