//! Mesh data model, face topology and the built-in meshers.
//!
//! Every element boundary is represented as a union of triangles. Quadrilateral
//! faces of wedges and hexahedra are split along the diagonal that starts at
//! the quad's smallest global vertex id, so both incident elements produce the
//! same two triangles. A triangle is stored once, oriented so that its normal
//! points out of the owning element (and into the neighbour, if any).

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{triangle_area_vector, Vec3};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("element {element} references missing vertex {vertex}")]
    MissingVertex { element: usize, vertex: usize },
    #[error("element {element} references missing material {material}")]
    MissingMaterial { element: usize, material: usize },
    #[error("element {element}: {kind} needs {expected} vertices, got {got}")]
    VertexCount { element: usize, kind: &'static str, expected: usize, got: usize },
    #[error("unknown element kind with {0} vertices")]
    UnknownKind(usize),
    #[error("unknown element kind `{0}`")]
    UnknownKindName(String),
    #[error("vertex {0} has non-finite coordinates")]
    NonFiniteVertex(usize),
    #[error("element {0} has non-positive volume")]
    DegenerateElement(usize),
    #[error("face {0:?} is shared by more than two elements")]
    NonManifold([usize; 3]),
    #[error("face {0:?}: incident elements induce the same orientation")]
    InconsistentOrientation([usize; 3]),
    #[error("boundary face {0:?} has no tag")]
    UntaggedBoundary([usize; 3]),
    #[error("tag on face {0:?} does not match any element face")]
    DanglingTag([usize; 3]),
    #[error("face {face:?}: {reason}")]
    InvalidTag { face: [usize; 3], reason: &'static str },
    #[error("impedance parameter |Q| = {0} violates |Q| <= 1")]
    QOutOfRange(f64),
    #[error("material {0}: eps_r and mu_r must be nonzero")]
    ZeroMaterial(usize),
    #[error("invalid mesher parameters: {0}")]
    InvalidParameters(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    Tetra,
    Wedge,
    Hexa,
}

const TETRA_FACES: &[&[usize]] = &[&[1, 2, 3], &[0, 3, 2], &[0, 1, 3], &[0, 2, 1]];
const WEDGE_FACES: &[&[usize]] = &[&[0, 2, 1], &[3, 4, 5], &[0, 1, 4, 3], &[1, 2, 5, 4], &[2, 0, 3, 5]];
const HEXA_FACES: &[&[usize]] = &[
    &[0, 3, 2, 1],
    &[4, 5, 6, 7],
    &[0, 1, 5, 4],
    &[1, 2, 6, 5],
    &[2, 3, 7, 6],
    &[3, 0, 4, 7],
];

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::Tetra, ElementKind::Wedge, ElementKind::Hexa];

    pub fn vertex_count(self) -> usize {
        match self {
            ElementKind::Tetra => 4,
            ElementKind::Wedge => 6,
            ElementKind::Hexa => 8,
        }
    }

    pub fn from_vertex_count(n: usize) -> Result<Self, MeshError> {
        match n {
            4 => Ok(ElementKind::Tetra),
            6 => Ok(ElementKind::Wedge),
            8 => Ok(ElementKind::Hexa),
            n => Err(MeshError::UnknownKind(n)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Tetra => "tetra",
            ElementKind::Wedge => "wedge",
            ElementKind::Hexa => "hexa",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, MeshError> {
        match s {
            "tetra" | "tet" | "tetrahedron" => Ok(ElementKind::Tetra),
            "wedge" | "prism" => Ok(ElementKind::Wedge),
            "hexa" | "hex" | "hexahedron" => Ok(ElementKind::Hexa),
            other => Err(MeshError::UnknownKindName(other.into())),
        }
    }

    /// Polygonal faces as local vertex index lists (triangles or quads).
    pub fn local_faces(self) -> &'static [&'static [usize]] {
        match self {
            ElementKind::Tetra => TETRA_FACES,
            ElementKind::Wedge => WEDGE_FACES,
            ElementKind::Hexa => HEXA_FACES,
        }
    }

    /// Index into `[tetra, wedge, hexa]` tables.
    pub fn index(self) -> usize {
        match self {
            ElementKind::Tetra => 0,
            ElementKind::Wedge => 1,
            ElementKind::Hexa => 2,
        }
    }
}

/// Relative permittivity and permeability, constant on each element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub eps_r: C64,
    pub mu_r: C64,
}

impl Material {
    pub const VACUUM: Material = Material { eps_r: C64::new(1.0, 0.0), mu_r: C64::new(1.0, 0.0) };

    pub fn new(eps_r: C64, mu_r: C64) -> Self {
        Self { eps_r, mu_r }
    }

    /// True when both parameters are real (lossless medium).
    pub fn is_real(&self) -> bool {
        self.eps_r.im == 0.0 && self.mu_r.im == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub kind: ElementKind,
    pub vertices: Vec<usize>,
    pub material: usize,
    /// Mean distance of the vertices from their centroid.
    pub h_av: f64,
}

/// How the data term `g` on a boundary face is generated from the incident field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceKind {
    /// Homogeneous condition, `g = 0`.
    #[default]
    None,
    /// The unknown is the total field and the incident field satisfies the
    /// boundary condition: `g = out(E^i) - Q in(E^i)`.
    TotalField,
    /// The unknown is the scattered field while the total field satisfies the
    /// homogeneous condition: `g = Q in(E^i) - out(E^i)`.
    /// With `Q = -1` this is the PEC data `g = -2 i kappa E^i_T / Z`.
    ScatteredField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceTag {
    Interior,
    Boundary { q: C64, source: SourceKind },
    /// Resistive sheet with (normalised) parameter `eta = sigma d`.
    Resistive { eta: C64 },
    /// Total/scattered field interface; `scattered_side` is the element on
    /// the scattered-field side.
    TsInterface { scattered_side: usize },
}

impl FaceTag {
    pub fn boundary(q: C64) -> Self {
        FaceTag::Boundary { q, source: SourceKind::None }
    }

    pub fn absorbing() -> Self {
        Self::boundary(C64::new(0.0, 0.0))
    }

    pub fn pec() -> Self {
        Self::boundary(C64::new(-1.0, 0.0))
    }

    pub fn symmetry() -> Self {
        Self::boundary(C64::new(1.0, 0.0))
    }

    pub fn with_source(self, source: SourceKind) -> Self {
        match self {
            FaceTag::Boundary { q, .. } => FaceTag::Boundary { q, source },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if let FaceTag::Boundary { q, .. } = self {
            let m = q.norm();
            if !(m <= 1.0 + 1e-14) {
                return Err(MeshError::QOutOfRange(m));
            }
        }
        Ok(())
    }
}

/// Quadratic face map given by the three edge midpoint nodes
/// `a_{1,2}, a_{2,3}, a_{1,3}` relative to the face's vertex order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvedFaceMap {
    pub midpoints: [Vec3; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceSide {
    pub element: usize,
    /// Index of the triangle within the element's triangulated boundary.
    pub local_face: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriFace {
    pub id: usize,
    /// Oriented so that the normal points out of `owner`.
    pub vertices: [usize; 3],
    pub owner: FaceSide,
    pub neighbor: Option<FaceSide>,
    pub tag: FaceTag,
    pub curved: Option<CurvedFaceMap>,
}

impl TriFace {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    pub fn key(&self) -> [usize; 3] {
        sorted3(self.vertices)
    }

    /// `+1` if `element` owns the face, `-1` if it is the neighbour.
    pub fn orientation_for(&self, element: usize) -> Option<f64> {
        if self.owner.element == element {
            Some(1.0)
        } else if self.neighbor.map(|n| n.element) == Some(element) {
            Some(-1.0)
        } else {
            None
        }
    }

    /// The incident element other than `element`.
    pub fn other_side(&self, element: usize) -> Option<usize> {
        let n = self.neighbor?.element;
        if self.owner.element == element {
            Some(n)
        } else if n == element {
            Some(self.owner.element)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub elements: Vec<Element>,
    pub materials: Vec<Material>,
    pub faces: Vec<TriFace>,
    /// Face ids of each element's triangulated boundary, indexed by local face.
    pub element_faces: Vec<Vec<usize>>,
    /// Smallest distance between two vertices of one element.
    pub h_min: f64,
    /// Largest distance between two vertices of one element.
    pub h_max: f64,
}

/// Unassembled mesh description accepted by [`build_topology`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub elements: Vec<RawElement>,
    pub materials: Vec<Material>,
    /// Tags keyed by the sorted vertex triple of a triangle.
    pub face_tags: BTreeMap<[usize; 3], FaceTag>,
    /// Curved-edge midpoint nodes keyed by the sorted vertex pair.
    pub edge_midpoints: BTreeMap<[usize; 2], Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawElement {
    pub kind: ElementKind,
    pub vertices: Vec<usize>,
    pub material: usize,
}

pub fn sorted3(mut v: [usize; 3]) -> [usize; 3] {
    v.sort_unstable();
    v
}

pub fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Split a (possibly quadrilateral) face into triangles with the
/// smallest-global-id diagonal rule.
pub fn triangulate_polygon(global: &[usize]) -> Vec<[usize; 3]> {
    match global.len() {
        3 => vec![[global[0], global[1], global[2]]],
        4 => {
            let k = (0..4).min_by_key(|&i| global[i]).unwrap_or(0);
            let v = |o: usize| global[(k + o) % 4];
            vec![[v(0), v(1), v(2)], [v(0), v(2), v(3)]]
        }
        n => panic!("faces have 3 or 4 vertices, got {n}"),
    }
}

fn centroid(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let mut sum = Vec3::ZERO;
    let mut n = 0usize;
    for p in points {
        sum += p;
        n += 1;
    }
    sum / n.max(1) as f64
}

/// Resolve face adjacency, orientations, tags and curved geometry.
pub fn build_topology(raw: RawMesh) -> Result<Mesh, MeshError> {
    let RawMesh { vertices, elements: raw_elements, materials, face_tags, edge_midpoints } = raw;

    for (i, v) in vertices.iter().enumerate() {
        if !v.is_finite() {
            return Err(MeshError::NonFiniteVertex(i));
        }
    }
    for (i, m) in materials.iter().enumerate() {
        if m.eps_r.norm() == 0.0 || m.mu_r.norm() == 0.0 {
            return Err(MeshError::ZeroMaterial(i));
        }
    }
    for tag in face_tags.values() {
        tag.validate()?;
    }

    let mut elements = Vec::with_capacity(raw_elements.len());
    let mut h_min = f64::INFINITY;
    let mut h_max = 0.0_f64;
    for (id, re) in raw_elements.into_iter().enumerate() {
        let expected = re.kind.vertex_count();
        if re.vertices.len() != expected {
            return Err(MeshError::VertexCount {
                element: id,
                kind: re.kind.name(),
                expected,
                got: re.vertices.len(),
            });
        }
        if let Some(&v) = re.vertices.iter().find(|&&v| v >= vertices.len()) {
            return Err(MeshError::MissingVertex { element: id, vertex: v });
        }
        if re.material >= materials.len() {
            return Err(MeshError::MissingMaterial { element: id, material: re.material });
        }
        let pts: Vec<Vec3> = re.vertices.iter().map(|&v| vertices[v]).collect();
        let c = centroid(pts.iter().copied());
        let h_av = pts.iter().map(|p| p.distance(c)).sum::<f64>() / pts.len() as f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d = pts[i].distance(pts[j]);
                h_min = h_min.min(d);
                h_max = h_max.max(d);
            }
        }
        elements.push(Element { id, kind: re.kind, vertices: re.vertices, material: re.material, h_av });
    }

    struct Pending {
        oriented: [usize; 3],
        owner: FaceSide,
        neighbor: Option<(FaceSide, [usize; 3])>,
    }
    let mut order: Vec<[usize; 3]> = Vec::new();
    let mut pending: BTreeMap<[usize; 3], Pending> = BTreeMap::new();
    let mut element_tris: Vec<Vec<[usize; 3]>> = Vec::with_capacity(elements.len());

    for el in &elements {
        let c = centroid(el.vertices.iter().map(|&v| vertices[v]));
        let mut tris = Vec::new();
        let mut signed_volume = 0.0;
        for poly in el.kind.local_faces() {
            let global: Vec<usize> = poly.iter().map(|&l| el.vertices[l]).collect();
            for mut t in triangulate_polygon(&global) {
                let (a, b, cc) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
                let av = triangle_area_vector(a, b, cc);
                let tc = (a + b + cc) / 3.0;
                if av.dot(tc - c) < 0.0 {
                    t.swap(1, 2);
                }
                let av = triangle_area_vector(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
                signed_volume += av.dot(vertices[t[0]] - c) / 3.0;
                tris.push(t);
            }
        }
        let scale = {
            let d = el.vertices.iter().map(|&v| vertices[v].distance(c)).fold(0.0, f64::max);
            d * d * d
        };
        if !(signed_volume > 1e-12 * scale) {
            return Err(MeshError::DegenerateElement(el.id));
        }
        for (local, &t) in tris.iter().enumerate() {
            let key = sorted3(t);
            let side = FaceSide { element: el.id, local_face: local };
            match pending.get_mut(&key) {
                None => {
                    order.push(key);
                    pending.insert(key, Pending { oriented: t, owner: side, neighbor: None });
                }
                Some(p) => {
                    if p.neighbor.is_some() {
                        return Err(MeshError::NonManifold(key));
                    }
                    p.neighbor = Some((side, t));
                }
            }
        }
        element_tris.push(tris);
    }

    for key in face_tags.keys() {
        if !pending.contains_key(key) {
            return Err(MeshError::DanglingTag(*key));
        }
    }

    let mut faces = Vec::with_capacity(order.len());
    let mut index_of: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    for key in order {
        let p = &pending[&key];
        let id = faces.len();
        let t = p.oriented;
        if let Some((_, nt)) = p.neighbor {
            let n_owner = triangle_area_vector(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let n_nb = triangle_area_vector(vertices[nt[0]], vertices[nt[1]], vertices[nt[2]]);
            if n_owner.dot(n_nb) >= 0.0 {
                return Err(MeshError::InconsistentOrientation(key));
            }
        }
        let tag = match (face_tags.get(&key), p.neighbor) {
            (Some(tag @ FaceTag::Boundary { .. }), None) => *tag,
            (None, None) => return Err(MeshError::UntaggedBoundary(key)),
            (Some(_), None) => {
                return Err(MeshError::InvalidTag { face: key, reason: "only boundary tags allowed on boundary faces" })
            }
            (Some(FaceTag::Boundary { .. }), Some(_)) => {
                return Err(MeshError::InvalidTag { face: key, reason: "boundary tag on an interior face" })
            }
            (Some(tag @ FaceTag::TsInterface { scattered_side }), Some((nb, _))) => {
                if *scattered_side != p.owner.element && *scattered_side != nb.element {
                    return Err(MeshError::InvalidTag {
                        face: key,
                        reason: "scattered side is not incident to the face",
                    });
                }
                *tag
            }
            (Some(tag), Some(_)) => *tag,
            (None, Some(_)) => FaceTag::Interior,
        };
        let curved = curved_map(t, &vertices, &edge_midpoints);
        index_of.insert(key, id);
        faces.push(TriFace {
            id,
            vertices: t,
            owner: p.owner,
            neighbor: p.neighbor.map(|(s, _)| s),
            tag,
            curved,
        });
    }

    let element_faces = element_tris
        .iter()
        .map(|tris| tris.iter().map(|t| index_of[&sorted3(*t)]).collect())
        .collect();

    if elements.is_empty() {
        h_min = 0.0;
    }
    Ok(Mesh { vertices, elements, materials, faces, element_faces, h_min, h_max })
}

fn curved_map(t: [usize; 3], vertices: &[Vec3], mids: &BTreeMap<[usize; 2], Vec3>) -> Option<CurvedFaceMap> {
    let edges = [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])];
    let mut any = false;
    let mut m = [Vec3::ZERO; 3];
    for (k, &(a, b)) in edges.iter().enumerate() {
        m[k] = match mids.get(&sorted2(a, b)) {
            Some(p) => {
                any = true;
                *p
            }
            None => (vertices[a] + vertices[b]) * 0.5,
        };
    }
    any.then_some(CurvedFaceMap { midpoints: m })
}

impl Mesh {
    pub fn element_centroid(&self, e: usize) -> Vec3 {
        centroid(self.elements[e].vertices.iter().map(|&v| self.vertices[v]))
    }

    pub fn face_corners(&self, f: usize) -> [Vec3; 3] {
        let v = self.faces[f].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    /// Unit normal of the flat triangle, pointing out of the owner.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_corners(f);
        triangle_area_vector(a, b, c).normalized()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_corners(f);
        triangle_area_vector(a, b, c).norm()
    }

    pub fn face_diameter(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_corners(f);
        a.distance(b).max(b.distance(c)).max(a.distance(c))
    }

    pub fn material_of(&self, e: usize) -> Material {
        self.materials[self.elements[e].material]
    }

    pub fn count_by_kind(&self) -> [usize; 3] {
        let mut n = [0; 3];
        for e in &self.elements {
            n[e.kind.index()] += 1;
        }
        n
    }

    /// Element adjacency through interior faces, neighbours sorted.
    pub fn element_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.elements.len()];
        for f in &self.faces {
            if let Some(nb) = f.neighbor {
                adj[f.owner.element].push(nb.element);
                adj[nb.element].push(f.owner.element);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Re-tag faces selected by `select`, validating as [`build_topology`] does.
    pub fn retag_faces<F>(&mut self, mut select: F) -> Result<usize, MeshError>
    where
        F: FnMut(&TriFace, [Vec3; 3]) -> Option<FaceTag>,
    {
        let mut n = 0;
        for i in 0..self.faces.len() {
            let corners = self.face_corners(i);
            let face = &self.faces[i];
            let Some(tag) = select(face, corners) else { continue };
            tag.validate()?;
            let key = face.key();
            match (tag, face.neighbor) {
                (FaceTag::Boundary { .. }, Some(_)) => {
                    return Err(MeshError::InvalidTag { face: key, reason: "boundary tag on an interior face" })
                }
                (FaceTag::Interior | FaceTag::Resistive { .. } | FaceTag::TsInterface { .. }, None) => {
                    return Err(MeshError::InvalidTag { face: key, reason: "only boundary tags allowed on boundary faces" })
                }
                (FaceTag::TsInterface { scattered_side }, Some(_)) if face.orientation_for(scattered_side).is_none() => {
                    return Err(MeshError::InvalidTag {
                        face: key,
                        reason: "scattered side is not incident to the face",
                    })
                }
                _ => {}
            }
            self.faces[i].tag = tag;
            n += 1;
        }
        Ok(n)
    }

    /// Convert back to the raw description (inverse of [`build_topology`]).
    pub fn to_raw(&self) -> RawMesh {
        let mut face_tags = BTreeMap::new();
        let mut edge_midpoints = BTreeMap::new();
        for f in &self.faces {
            if f.tag != FaceTag::Interior {
                face_tags.insert(f.key(), f.tag);
            }
            if let Some(c) = &f.curved {
                let v = f.vertices;
                for (k, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[0], v[2])].into_iter().enumerate() {
                    let straight = (self.vertices[a] + self.vertices[b]) * 0.5;
                    if c.midpoints[k] != straight {
                        edge_midpoints.insert(sorted2(a, b), c.midpoints[k]);
                    }
                }
            }
        }
        RawMesh {
            vertices: self.vertices.clone(),
            elements: self
                .elements
                .iter()
                .map(|e| RawElement { kind: e.kind, vertices: e.vertices.clone(), material: e.material })
                .collect(),
            materials: self.materials.clone(),
            face_tags,
            edge_midpoints,
        }
    }

    /// Elements reachable from `seeds` without crossing faces for which
    /// `blocked` returns true.
    pub fn flood_fill<F>(&self, seeds: &[usize], blocked: F) -> Vec<bool>
    where
        F: Fn(&TriFace) -> bool,
    {
        let mut seen = vec![false; self.elements.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(e) = queue.pop_front() {
            for &f in &self.element_faces[e] {
                let face = &self.faces[f];
                if blocked(face) {
                    continue;
                }
                if let Some(o) = face.other_side(e) {
                    if !seen[o] {
                        seen[o] = true;
                        queue.push_back(o);
                    }
                }
            }
        }
        seen
    }
}

/// Side of an axis-aligned box, in the order used by `tags_per_side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSide {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoxSide {
    pub const ALL: [BoxSide; 6] =
        [BoxSide::XMin, BoxSide::XMax, BoxSide::YMin, BoxSide::YMax, BoxSide::ZMin, BoxSide::ZMax];
}

/// Structured box `origin + [0, extents]` of `divisions` cells, each cut into
/// six tetrahedra around its main diagonal (Kuhn split, conforming across
/// cells). `tags_per_side` follows [`BoxSide::ALL`]. All elements use
/// `material`.
pub fn box_tet_mesher(
    origin: Vec3,
    extents: Vec3,
    divisions: [usize; 3],
    tags_per_side: [FaceTag; 6],
    material: Material,
) -> Result<Mesh, MeshError> {
    if !(extents.x > 0.0 && extents.y > 0.0 && extents.z > 0.0) {
        return Err(MeshError::InvalidParameters("box extents must be positive"));
    }
    if divisions.iter().any(|&d| d == 0) {
        return Err(MeshError::InvalidParameters("box divisions must be >= 1"));
    }
    let [nx, ny, nz] = divisions;
    let idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vec3::new(
                    origin.x + extents.x * i as f64 / nx as f64,
                    origin.y + extents.y * j as f64 / ny as f64,
                    origin.z + extents.z * k as f64 / nz as f64,
                ));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut elements = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for p in PERMS {
                    let mut c = [i, j, k];
                    let mut verts = vec![idx(c[0], c[1], c[2])];
                    for axis in p {
                        c[axis] += 1;
                        verts.push(idx(c[0], c[1], c[2]));
                    }
                    elements.push(RawElement { kind: ElementKind::Tetra, vertices: verts, material: 0 });
                }
            }
        }
    }
    let grid = |v: usize| {
        let i = v % (nx + 1);
        let j = (v / (nx + 1)) % (ny + 1);
        let k = v / ((nx + 1) * (ny + 1));
        [i, j, k]
    };
    let mut face_tags = BTreeMap::new();
    for el in &elements {
        for f in ElementKind::Tetra.local_faces() {
            let tri = [el.vertices[f[0]], el.vertices[f[1]], el.vertices[f[2]]];
            let g = tri.map(grid);
            for (s, side) in BoxSide::ALL.iter().enumerate() {
                let (axis, at) = match side {
                    BoxSide::XMin => (0, 0),
                    BoxSide::XMax => (0, nx),
                    BoxSide::YMin => (1, 0),
                    BoxSide::YMax => (1, ny),
                    BoxSide::ZMin => (2, 0),
                    BoxSide::ZMax => (2, nz),
                };
                if g.iter().all(|c| c[axis] == at) {
                    face_tags.insert(sorted3(tri), tags_per_side[s]);
                }
            }
        }
    }
    build_topology(RawMesh {
        vertices,
        elements,
        materials: vec![material],
        face_tags,
        edge_midpoints: BTreeMap::new(),
    })
}

/// Tag applied to one spherical surface of a [`SphereMeshSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceTag {
    Interior,
    Boundary { q: C64, source: SourceKind },
    Resistive { eta: C64 },
    /// Total/scattered interface with the scattered field outside.
    TsInterface,
}

/// Concentric spherical shells of wedges over a subdivided icosahedron,
/// optionally with the innermost ball filled by tetrahedra meeting at the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMeshSpec {
    /// Strictly increasing shell radii (at least two, or one with `fill_core`).
    pub radii: Vec<f64>,
    pub refinement: u32,
    pub fill_core: bool,
    /// Per radius: project edge midpoints onto that sphere.
    pub curved: Vec<bool>,
    /// Per radius.
    pub surface_tags: Vec<SurfaceTag>,
    pub materials: Vec<Material>,
    /// Material of each layer, innermost first (the core counts as a layer).
    pub layer_materials: Vec<usize>,
}

/// Unit-sphere triangulation: `20 * 4^refinement` triangles.
pub fn icosphere(refinement: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut pts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..refinement {
        let mut mid: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: usize, b: usize, pts: &mut Vec<Vec3>| -> usize {
            *mid.entry(sorted2(a, b)).or_insert_with(|| {
                pts.push(((pts[a] + pts[b]) * 0.5).normalized());
                pts.len() - 1
            })
        };
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut pts);
            let bc = midpoint(b, c, &mut pts);
            let ca = midpoint(c, a, &mut pts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (pts, tris)
}

/// Build the shell mesh. Vertex `v` of the unit triangulation on surface `s`
/// gets id `s * n_surface + v`; the core centre (if any) is the last vertex.
pub fn sphere_mesh(spec: &SphereMeshSpec) -> Result<Mesh, MeshError> {
    let n_r = spec.radii.len();
    let min_radii = if spec.fill_core { 1 } else { 2 };
    if n_r < min_radii {
        return Err(MeshError::InvalidParameters("too few shell radii"));
    }
    if spec.radii[0] <= 0.0 || spec.radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeshError::InvalidParameters("radii must be positive and increasing"));
    }
    if spec.curved.len() != n_r || spec.surface_tags.len() != n_r {
        return Err(MeshError::InvalidParameters("one curved flag and tag per radius"));
    }
    let n_layers = n_r - 1 + usize::from(spec.fill_core);
    if spec.layer_materials.len() != n_layers {
        return Err(MeshError::InvalidParameters("one material per layer"));
    }
    let (unit, tris) = icosphere(spec.refinement);
    let ns = unit.len();
    let mut vertices = Vec::with_capacity(ns * n_r + 1);
    for &r in &spec.radii {
        vertices.extend(unit.iter().map(|p| *p * r));
    }
    let center = vertices.len();
    if spec.fill_core {
        vertices.push(Vec3::ZERO);
    }
    let mut elements = Vec::new();
    let mut layer = 0;
    // element index -> layer, used to find scattered sides of TS surfaces
    let mut first_element_of_layer = Vec::new();
    if spec.fill_core {
        first_element_of_layer.push(elements.len());
        for &[a, b, c] in &tris {
            elements.push(RawElement {
                kind: ElementKind::Tetra,
                vertices: vec![center, a, b, c],
                material: spec.layer_materials[0],
            });
        }
        layer += 1;
    }
    for s in 0..n_r - 1 {
        first_element_of_layer.push(elements.len());
        let (o0, o1) = (s * ns, (s + 1) * ns);
        for &[a, b, c] in &tris {
            elements.push(RawElement {
                kind: ElementKind::Wedge,
                vertices: vec![o0 + a, o0 + b, o0 + c, o1 + a, o1 + b, o1 + c],
                material: spec.layer_materials[layer],
            });
        }
        layer += 1;
    }

    let mut face_tags = BTreeMap::new();
    for (s, tag) in spec.surface_tags.iter().enumerate() {
        let off = s * ns;
        // layer index of the element just outside surface s
        let outer_layer = s + usize::from(spec.fill_core);
        for (t, &[a, b, c]) in tris.iter().enumerate() {
            let key = sorted3([off + a, off + b, off + c]);
            let face_tag = match *tag {
                SurfaceTag::Interior => continue,
                SurfaceTag::Boundary { q, source } => FaceTag::Boundary { q, source },
                SurfaceTag::Resistive { eta } => FaceTag::Resistive { eta },
                SurfaceTag::TsInterface => {
                    let Some(&first) = first_element_of_layer.get(outer_layer) else {
                        return Err(MeshError::InvalidParameters("TS interface on the outer surface"));
                    };
                    FaceTag::TsInterface { scattered_side: first + t }
                }
            };
            face_tags.insert(key, face_tag);
        }
    }

    let mut edge_midpoints = BTreeMap::new();
    for (s, &curved) in spec.curved.iter().enumerate() {
        if !curved {
            continue;
        }
        let r = spec.radii[s];
        for &[a, b, c] in &tris {
            for (p, q) in [(a, b), (b, c), (a, c)] {
                let m = ((unit[p] + unit[q]) * 0.5).normalized() * r;
                edge_midpoints.insert(sorted2(s * ns + p, s * ns + q), m);
            }
        }
    }

    build_topology(RawMesh {
        vertices,
        elements,
        materials: spec.materials.clone(),
        face_tags,
        edge_midpoints,
    })
}

/// Equally spaced shells between `r_inner` and `r_outer`; the inner surface
/// gets `inner_tag` and the outer surface the absorbing condition `Q = 0`.
pub fn sphere_shell_mesher(
    r_inner: f64,
    r_outer: f64,
    refinement: u32,
    layers: usize,
    curved: bool,
    inner_tag: SurfaceTag,
) -> Result<Mesh, MeshError> {
    if !(0.0 < r_inner && r_inner < r_outer) {
        return Err(MeshError::InvalidParameters("need 0 < r_inner < r_outer"));
    }
    if layers < 1 {
        return Err(MeshError::InvalidParameters("need at least one layer"));
    }
    let radii: Vec<f64> =
        (0..=layers).map(|i| r_inner + (r_outer - r_inner) * i as f64 / layers as f64).collect();
    let mut surface_tags = vec![SurfaceTag::Interior; layers + 1];
    surface_tags[0] = inner_tag;
    surface_tags[layers] = SurfaceTag::Boundary { q: C64::new(0.0, 0.0), source: SourceKind::None };
    sphere_mesh(&SphereMeshSpec {
        radii,
        refinement,
        fill_core: false,
        curved: vec![curved; layers + 1],
        surface_tags,
        materials: vec![Material::VACUUM],
        layer_materials: vec![0; layers],
    })
}
