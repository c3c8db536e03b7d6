//! Mesh files and scenario meshing.
//!
//! The native format is JSON:
//!
//! ```json
//! { "format": "uwvf-mesh", "version": 1,
//!   "vertices": [[0, 0, 0], ...],
//!   "materials": [{ "eps_r": [1, 0], "mu_r": [1, 0] }],
//!   "elements": [{ "kind": "tetra", "vertices": [0, 1, 2, 3], "material": 0 }],
//!   "face_tags": [{ "vertices": [0, 1, 2], "type": "boundary", "q": [0, 0], "source": "none" }],
//!   "edge_midpoints": [{ "edge": [0, 1], "point": [0.5, 0.01, 0] }] }
//! ```
//!
//! `kind` may be omitted, in which case it follows from the vertex count.
//! Gmsh ASCII files of version 2 are imported with physical groups mapped to
//! tags and materials by the scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use uwvf_core::geometry::Vec3;
use uwvf_core::mesh::{
    box_tet_mesher, build_topology, sorted2, sorted3, sphere_mesh, triangulate_polygon, ElementKind, FaceTag, Material,
    Mesh, MeshError, RawElement, RawMesh, SphereMeshSpec, SurfaceTag,
};

use crate::error::{Error, Result};
use crate::scenario::{vec3, Complex, FileFormat, FileMesh, MeshSource, Scenario, SourceSpec, TagSpec};

const FORMAT_NAME: &str = "uwvf-mesh";

#[derive(Debug, Serialize, Deserialize)]
struct MeshDocument {
    format: String,
    version: u32,
    vertices: Vec<[f64; 3]>,
    #[serde(default)]
    materials: Vec<MaterialRecord>,
    elements: Vec<ElementRecord>,
    #[serde(default)]
    face_tags: Vec<FaceTagRecord>,
    #[serde(default)]
    edge_midpoints: Vec<MidpointRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaterialRecord {
    eps_r: Complex,
    mu_r: Complex,
}

#[derive(Debug, Serialize, Deserialize)]
struct ElementRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    vertices: Vec<usize>,
    #[serde(default)]
    material: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FaceTagRecord {
    vertices: [usize; 3],
    #[serde(flatten)]
    tag: TagRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TagRecord {
    Interior,
    Boundary {
        q: Complex,
        #[serde(default)]
        source: SourceSpec,
    },
    Resistive {
        eta: Complex,
    },
    TsInterface {
        scattered_side: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct MidpointRecord {
    edge: [usize; 2],
    point: [f64; 3],
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn source_spec(s: uwvf_core::mesh::SourceKind) -> SourceSpec {
    match s {
        uwvf_core::mesh::SourceKind::None => SourceSpec::None,
        uwvf_core::mesh::SourceKind::TotalField => SourceSpec::TotalField,
        uwvf_core::mesh::SourceKind::ScatteredField => SourceSpec::ScatteredField,
    }
}

pub fn mesh_to_json(raw: &RawMesh) -> Result<String> {
    let doc = MeshDocument {
        format: FORMAT_NAME.into(),
        version: 1,
        vertices: raw.vertices.iter().map(|&v| arr(v)).collect(),
        materials: raw
            .materials
            .iter()
            .map(|m| MaterialRecord { eps_r: m.eps_r.into(), mu_r: m.mu_r.into() })
            .collect(),
        elements: raw
            .elements
            .iter()
            .map(|e| ElementRecord { kind: Some(e.kind.name().into()), vertices: e.vertices.clone(), material: e.material })
            .collect(),
        face_tags: raw
            .face_tags
            .iter()
            .map(|(&vertices, tag)| FaceTagRecord {
                vertices,
                tag: match *tag {
                    FaceTag::Interior => TagRecord::Interior,
                    FaceTag::Boundary { q, source } => TagRecord::Boundary { q: q.into(), source: source_spec(source) },
                    FaceTag::Resistive { eta } => TagRecord::Resistive { eta: eta.into() },
                    FaceTag::TsInterface { scattered_side } => TagRecord::TsInterface { scattered_side },
                },
            })
            .collect(),
        edge_midpoints: raw
            .edge_midpoints
            .iter()
            .map(|(&edge, &p)| MidpointRecord { edge, point: arr(p) })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn mesh_from_json(text: &str) -> Result<RawMesh> {
    let doc: MeshDocument = serde_json::from_str(text)?;
    if doc.format != FORMAT_NAME || doc.version != 1 {
        return Err(Error::invalid("mesh file", format!("expected format `{FORMAT_NAME}` version 1")));
    }
    let mut elements = Vec::with_capacity(doc.elements.len());
    for e in doc.elements {
        let kind = match &e.kind {
            Some(name) => ElementKind::from_name(name),
            None => ElementKind::from_vertex_count(e.vertices.len()),
        };
        let kind = kind.map_err(|err| Error::Stage { stage: "mesh", source: err.into() })?;
        elements.push(RawElement { kind, vertices: e.vertices, material: e.material });
    }
    let mut face_tags = BTreeMap::new();
    for f in doc.face_tags {
        let tag = match f.tag {
            TagRecord::Interior => FaceTag::Interior,
            TagRecord::Boundary { q, source } => FaceTag::Boundary { q: q.value(), source: source.kind() },
            TagRecord::Resistive { eta } => FaceTag::Resistive { eta: eta.value() },
            TagRecord::TsInterface { scattered_side } => FaceTag::TsInterface { scattered_side },
        };
        tag.validate().map_err(Error::stage("mesh"))?;
        face_tags.insert(sorted3(f.vertices), tag);
    }
    Ok(RawMesh {
        vertices: doc.vertices.into_iter().map(vec3).collect(),
        elements,
        materials: doc.materials.iter().map(|m| Material::new(m.eps_r.value(), m.mu_r.value())).collect(),
        face_tags,
        edge_midpoints: doc.edge_midpoints.into_iter().map(|m| (sorted2(m.edge[0], m.edge[1]), vec3(m.point))).collect(),
    })
}

pub fn save_json(raw: &RawMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_json(raw)?).map_err(|e| Error::io(path, e))
}

pub fn load_json(path: &Path) -> Result<RawMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    mesh_from_json(&text)
}

/// Gmsh element type: (node count, volume kind, is surface).
fn msh_type(t: u32) -> Option<(usize, Option<ElementKind>, bool)> {
    Some(match t {
        15 => (1, None, false),
        1 => (2, None, false),
        8 => (3, None, false),
        2 => (3, None, true),
        9 => (6, None, true),
        3 => (4, None, true),
        4 => (4, Some(ElementKind::Tetra), false),
        11 => (10, Some(ElementKind::Tetra), false),
        5 => (8, Some(ElementKind::Hexa), false),
        6 => (6, Some(ElementKind::Wedge), false),
        7 => (5, None, false),
        _ => return None,
    })
}

const TET10_EDGES: [[usize; 2]; 6] = [[0, 1], [1, 2], [2, 0], [3, 0], [3, 2], [3, 1]];
const TRI6_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        for (i, l) in self.it.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok(l);
            }
        }
        Err(Error::MeshFile { line: self.line, reason: "unexpected end of file".into() })
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::MeshFile { line: self.line, reason: reason.into() }
    }

    fn count(&mut self) -> Result<usize> {
        let l = self.next()?;
        l.parse().map_err(|_| self.err(format!("expected a count, found `{l}`")))
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next()?;
        if l != tag {
            return Err(self.err(format!("expected `{tag}`, found `{l}`")));
        }
        Ok(())
    }
}

/// Import a Gmsh version 2 ASCII file. Surface elements (triangles, 6-node
/// triangles, quads) carry boundary and interface tags; 6-node triangles and
/// 10-node tetrahedra contribute curved edge midpoints.
pub fn mesh_from_msh(text: &str, spec: &FileMesh, materials: Vec<Material>) -> Result<RawMesh> {
    let mut lines = Lines { it: text.lines().enumerate(), line: 0 };
    let mut names: BTreeMap<u32, String> = BTreeMap::new();
    let mut node_index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut volumes: Vec<(RawElement, u32)> = Vec::new();
    let mut surfaces: Vec<(Vec<usize>, u32, usize)> = Vec::new();
    let mut midpoints: BTreeMap<[usize; 2], Vec3> = BTreeMap::new();
    let mut seen_format = false;
    loop {
        let header = match lines.next() {
            Ok(h) => h,
            Err(_) => break,
        };
        match header {
            "$MeshFormat" => {
                let l = lines.next()?;
                let mut f = l.split_whitespace();
                let version = f.next().unwrap_or("");
                let file_type = f.next().unwrap_or("");
                if !version.starts_with('2') || file_type != "0" {
                    return Err(lines.err(format!("only ASCII version 2 files are supported, found `{l}`")));
                }
                lines.expect("$EndMeshFormat")?;
                seen_format = true;
            }
            "$PhysicalNames" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut f = l.splitn(3, char::is_whitespace);
                    let _dim = f.next();
                    let tag: u32 = f.next().and_then(|t| t.parse().ok()).ok_or_else(|| lines.err("bad physical name"))?;
                    let name = f.next().unwrap_or("").trim().trim_matches('"').to_string();
                    names.insert(tag, name);
                }
                lines.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let v: Vec<f64> = l.split_whitespace().skip(1).map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| lines.err("bad node line"))?;
                    let id: u64 = l.split_whitespace().next().and_then(|s| s.parse().ok()).ok_or_else(|| lines.err("bad node id"))?;
                    if v.len() != 3 {
                        return Err(lines.err("a node needs three coordinates"));
                    }
                    node_index.insert(id, vertices.len());
                    vertices.push(Vec3::new(v[0], v[1], v[2]) * spec.scale);
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let f: Vec<u64> = l.split_whitespace().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|_| lines.err("bad element line"))?;
                    if f.len() < 3 {
                        return Err(lines.err("truncated element line"));
                    }
                    let t = f[1] as u32;
                    let ntags = f[2] as usize;
                    let (count, kind, surface) =
                        msh_type(t).ok_or_else(|| lines.err(format!("unsupported element type {t}")))?;
                    let nodes = f.get(3 + ntags..).unwrap_or(&[]);
                    if nodes.len() != count {
                        return Err(lines.err(format!("element type {t} needs {count} nodes, found {}", nodes.len())));
                    }
                    let physical = if ntags > 0 { f[3] as u32 } else { 0 };
                    let ids: Vec<usize> = nodes
                        .iter()
                        .map(|id| node_index.get(id).copied().ok_or_else(|| lines.err(format!("unknown node {id}"))))
                        .collect::<Result<_>>()?;
                    if t == 7 {
                        return Err(Error::Stage { stage: "mesh", source: MeshError::UnknownKind(count).into() });
                    }
                    if let Some(kind) = kind {
                        let nv = kind.vertex_count();
                        if t == 11 {
                            for (k, e) in TET10_EDGES.iter().enumerate() {
                                midpoints.insert(sorted2(ids[e[0]], ids[e[1]]), vertices[ids[4 + k]]);
                            }
                        }
                        volumes.push((RawElement { kind, vertices: ids[..nv].to_vec(), material: 0 }, physical));
                    } else if surface {
                        if t == 9 {
                            for (k, e) in TRI6_EDGES.iter().enumerate() {
                                midpoints.insert(sorted2(ids[e[0]], ids[e[1]]), vertices[ids[3 + k]]);
                            }
                        }
                        let corners = if t == 3 { ids } else { ids[..3].to_vec() };
                        surfaces.push((corners, physical, lines.line));
                    }
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with("$") => {
                // skip unknown sections
                let end = format!("$End{}", &other[1..]);
                while lines.next()? != end {}
            }
            other => return Err(lines.err(format!("unexpected line `{other}`"))),
        }
    }
    if !seen_format {
        return Err(Error::MeshFile { line: 0, reason: "missing $MeshFormat section".into() });
    }
    let name_of = |p: u32| names.get(&p).cloned().unwrap_or_else(|| p.to_string());

    let mut elements = Vec::with_capacity(volumes.len());
    let mut regions = Vec::with_capacity(volumes.len());
    for (mut el, phys) in volumes {
        let name = name_of(phys);
        el.material = spec.physical_materials.get(&name).copied().unwrap_or(0);
        regions.push(name);
        elements.push(el);
    }
    // drop midpoints that sit on the straight edge
    midpoints.retain(|&[a, b], m| {
        let straight = (vertices[a] + vertices[b]) * 0.5;
        m.distance(straight) > 1e-12 * vertices[a].distance(vertices[b])
    });
    let incident = face_incidence(&elements);
    let mut face_tags = BTreeMap::new();
    for (corners, phys, line) in surfaces {
        let name = name_of(phys);
        let spec_tag = spec
            .physical_tags
            .get(&name)
            .ok_or_else(|| Error::MeshFile { line, reason: format!("surface group `{name}` has no entry in physical_tags") })?;
        for tri in triangulate_polygon(&corners) {
            let key = sorted3(tri);
            let tag = match spec_tag {
                TagSpec::Ts { scattered } => {
                    let region = scattered.as_deref().ok_or_else(|| Error::MeshFile {
                        line,
                        reason: format!("ts group `{name}` needs `scattered = \"<volume group>\"`"),
                    })?;
                    let side = incident
                        .get(&key)
                        .and_then(|els| els.iter().copied().find(|&e| regions[e] == region))
                        .ok_or_else(|| Error::MeshFile {
                            line,
                            reason: format!("no element of `{region}` touches ts face {key:?}"),
                        })?;
                    FaceTag::TsInterface { scattered_side: side }
                }
                other => other.face_tag().expect("non-ts tag"),
            };
            face_tags.insert(key, tag);
        }
    }
    let mut raw = RawMesh { vertices, elements, materials, face_tags, edge_midpoints: midpoints };
    if let Some(t) = &spec.default_boundary {
        apply_default_boundary(&mut raw, t.face_tag().expect("boundary tag"));
    }
    Ok(raw)
}

/// Elements incident to each triangle of the element boundaries.
fn face_incidence(elements: &[RawElement]) -> BTreeMap<[usize; 3], Vec<usize>> {
    let mut map: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
    for (e, el) in elements.iter().enumerate() {
        if el.vertices.len() != el.kind.vertex_count() {
            continue;
        }
        for poly in el.kind.local_faces() {
            let global: Vec<usize> = poly.iter().map(|&l| el.vertices[l]).collect();
            for t in triangulate_polygon(&global) {
                map.entry(sorted3(t)).or_default().push(e);
            }
        }
    }
    map
}

fn apply_default_boundary(raw: &mut RawMesh, tag: FaceTag) {
    let boundary: BTreeSet<[usize; 3]> =
        face_incidence(&raw.elements).into_iter().filter(|(_, els)| els.len() == 1).map(|(k, _)| k).collect();
    for key in boundary {
        raw.face_tags.entry(key).or_insert(tag);
    }
}

fn surface_tag(t: &TagSpec) -> SurfaceTag {
    match t {
        TagSpec::Ts { .. } => SurfaceTag::TsInterface,
        TagSpec::Interior => SurfaceTag::Interior,
        TagSpec::Resistive { eta } => SurfaceTag::Resistive { eta: eta.value() },
        other => match other.face_tag() {
            Some(FaceTag::Boundary { q, source }) => SurfaceTag::Boundary { q, source },
            _ => unreachable!("boundary variants map to boundary tags"),
        },
    }
}

/// Mesh described by the scenario.
pub fn build_mesh(s: &Scenario) -> Result<Mesh> {
    let stage = || Error::stage("mesh");
    let materials = s.material_list();
    match &s.mesh {
        MeshSource::Box(b) => {
            let sides = b.sides.all().map(|(_, t)| t.face_tag().expect("validated boundary tag"));
            let mut mesh = box_tet_mesher(vec3(b.origin), vec3(b.extents), b.divisions, sides, materials[b.material])
                .map_err(stage())?;
            let scale = b.extents.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            for p in &b.planes {
                let axis = p.axis.index();
                let on_plane = |c: &[Vec3; 3]| c.iter().all(|v| (arr(*v)[axis] - p.at).abs() <= 1e-9 * scale);
                let centroids: Vec<f64> =
                    (0..mesh.elements.len()).map(|e| arr(mesh.element_centroid(e))[axis]).collect();
                let n = mesh
                    .retag_faces(|f, c| {
                        if f.neighbor.is_none() || !on_plane(&c) {
                            return None;
                        }
                        Some(match &p.tag {
                            TagSpec::Ts { scattered } => {
                                let low = scattered.as_deref() == Some("low");
                                let o = f.owner.element;
                                let side = if (centroids[o] < p.at) == low { o } else { f.neighbor.unwrap().element };
                                FaceTag::TsInterface { scattered_side: side }
                            }
                            t => t.face_tag().expect("non-ts tag"),
                        })
                    })
                    .map_err(stage())?;
                if n == 0 {
                    return Err(Error::invalid("mesh.planes", format!("no interior faces at {:?} = {}", p.axis, p.at)));
                }
            }
            Ok(mesh)
        }
        MeshSource::Sphere(sp) => {
            let n = sp.radii.len();
            let layers = n - usize::from(!sp.fill_core);
            let layer_materials =
                if sp.layer_materials.is_empty() { vec![0; layers] } else { sp.layer_materials.clone() };
            sphere_mesh(&SphereMeshSpec {
                radii: sp.radii.clone(),
                refinement: sp.refinement,
                fill_core: sp.fill_core,
                curved: vec![sp.curved; n],
                surface_tags: sp.surfaces.iter().map(surface_tag).collect(),
                materials,
                layer_materials,
            })
            .map_err(stage())
        }
        MeshSource::File(f) => {
            let path = f.resolved_path(&s.base_dir);
            let mut raw = match f.resolved_format()? {
                FileFormat::Json => {
                    let mut raw = load_json(&path)?;
                    if raw.materials.is_empty() {
                        raw.materials = materials;
                    }
                    for v in raw.vertices.iter_mut().chain(raw.edge_midpoints.values_mut()) {
                        *v = *v * f.scale;
                    }
                    raw
                }
                FileFormat::Msh => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    mesh_from_msh(&text, f, materials)?
                }
            };
            if let Some(t) = &f.default_boundary {
                apply_default_boundary(&mut raw, t.face_tag().expect("boundary tag"));
            }
            build_topology(raw).map_err(stage())
        }
    }
}
