//! Scenario files: everything needed to reproduce one run, in TOML.
//!
//! Lengths are in metres unless `length_unit = "wavelength"`, in which case
//! every geometric length (mesh coordinates, radii, planes, output and check
//! positions) is a multiple of the free-space wavelength. Cross sections are
//! always reported in m^2.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uwvf_core::assembly::{AssemblyOptions, Region};
use uwvf_core::basis::ConditionTolerance;
use uwvf_core::geometry::{CVec3, Vec3};
use uwvf_core::mesh::{FaceTag, Material, SourceKind};
use uwvf_core::oracle::{PlaneWave, SphereKind};
use uwvf_core::solver::{SolverMode, SolverOptions};
use uwvf_core::C64;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A complex number written either as a plain number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> C64 {
        match self {
            Complex::Real(re) => C64::new(re, 0.0),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Complex {
    fn from(c: C64) -> Self {
        Complex::Pair([c.re, c.im])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    #[default]
    Meter,
    Wavelength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub frequency_hz: f64,
    #[serde(default)]
    pub length_unit: LengthUnit,
    /// Without an incident wave the problem is source free.
    #[serde(default)]
    pub incident: Option<Incident>,
    /// Material 0 is vacuum when the list is empty.
    #[serde(default)]
    pub materials: Vec<MaterialSpec>,
    pub mesh: MeshSource,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub assembly: AssemblySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub checks: Checks,
    /// Directory that relative paths in the scenario refer to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Incident {
    pub direction: [f64; 3],
    pub polarization: [Complex; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub eps_r: Complex,
    #[serde(default = "one")]
    pub mu_r: Complex,
}

fn one() -> Complex {
    Complex::Real(1.0)
}

impl MaterialSpec {
    pub fn material(&self) -> Material {
        Material::new(self.eps_r.value(), self.mu_r.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    #[default]
    None,
    TotalField,
    ScatteredField,
}

impl SourceSpec {
    pub fn kind(self) -> SourceKind {
        match self {
            SourceSpec::None => SourceKind::None,
            SourceSpec::TotalField => SourceKind::TotalField,
            SourceSpec::ScatteredField => SourceKind::ScatteredField,
        }
    }
}

/// Face tag as written in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TagSpec {
    Interior,
    /// `Q = -1`.
    Pec {
        #[serde(default)]
        source: SourceSpec,
    },
    /// `Q = +1`, a magnetic wall.
    Symmetry {
        #[serde(default)]
        source: SourceSpec,
    },
    /// `Q = 0`.
    Absorbing {
        #[serde(default)]
        source: SourceSpec,
    },
    Boundary {
        q: Complex,
        #[serde(default)]
        source: SourceSpec,
    },
    Resistive { eta: Complex },
    /// Total/scattered interface. On box planes `scattered` is `"low"` or
    /// `"high"` along the plane axis; for mesh files it names the volume
    /// region on the scattered side. Sphere surfaces have the scattered
    /// field outside.
    Ts {
        #[serde(default)]
        scattered: Option<String>,
    },
}

impl TagSpec {
    /// The tag for faces that do not need a scattered side.
    pub fn face_tag(&self) -> Option<FaceTag> {
        let b = |q: f64, s: &SourceSpec| FaceTag::Boundary { q: C64::new(q, 0.0), source: s.kind() };
        Some(match self {
            TagSpec::Interior => FaceTag::Interior,
            TagSpec::Pec { source } => b(-1.0, source),
            TagSpec::Symmetry { source } => b(1.0, source),
            TagSpec::Absorbing { source } => b(0.0, source),
            TagSpec::Boundary { q, source } => FaceTag::Boundary { q: q.value(), source: source.kind() },
            TagSpec::Resistive { eta } => FaceTag::Resistive { eta: eta.value() },
            TagSpec::Ts { .. } => return None,
        })
    }

    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            TagSpec::Pec { .. } | TagSpec::Symmetry { .. } | TagSpec::Absorbing { .. } | TagSpec::Boundary { .. }
        )
    }

    fn validate(&self, field: &str) -> Result<()> {
        match self {
            TagSpec::Boundary { q, .. } => {
                let m = q.value().norm();
                if !(m <= 1.0) {
                    return Err(Error::invalid(field, format!("|Q| = {m} violates |Q| <= 1")));
                }
            }
            TagSpec::Resistive { eta } => {
                let e = eta.value();
                if !(e.re.is_finite() && e.im.is_finite()) {
                    return Err(Error::invalid(field, "eta must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSource {
    Box(BoxMesh),
    Sphere(SphereMesh),
    File(FileMesh),
}

/// Structured tetrahedral box, optionally cut by tagged interior planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMesh {
    pub origin: [f64; 3],
    pub extents: [f64; 3],
    pub divisions: [usize; 3],
    #[serde(default)]
    pub material: usize,
    pub sides: BoxSides,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSides {
    pub x_min: TagSpec,
    pub x_max: TagSpec,
    pub y_min: TagSpec,
    pub y_max: TagSpec,
    pub z_min: TagSpec,
    pub z_max: TagSpec,
}

impl BoxSides {
    pub fn all(&self) -> [(&'static str, &TagSpec); 6] {
        [
            ("x_min", &self.x_min),
            ("x_max", &self.x_max),
            ("y_min", &self.y_min),
            ("y_max", &self.y_max),
            ("z_min", &self.z_min),
            ("z_max", &self.z_max),
        ]
    }
}

/// Interior faces lying in the plane `coordinate[axis] = at` get `tag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub axis: Axis,
    pub at: f64,
    pub tag: TagSpec,
}

/// Concentric spherical shells; `surfaces` and `radii` are innermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMesh {
    pub radii: Vec<f64>,
    #[serde(default)]
    pub refinement: u32,
    #[serde(default)]
    pub fill_core: bool,
    #[serde(default = "yes")]
    pub curved: bool,
    pub surfaces: Vec<TagSpec>,
    /// One per layer (the filled core counts as a layer); all zero if empty.
    #[serde(default)]
    pub layer_materials: Vec<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Json,
    Msh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMesh {
    pub path: PathBuf,
    /// Guessed from the extension when absent.
    #[serde(default)]
    pub format: Option<FileFormat>,
    /// Tags for surface physical groups (MSH only).
    #[serde(default)]
    pub physical_tags: BTreeMap<String, TagSpec>,
    /// Material index of volume physical groups (MSH only); others get 0.
    #[serde(default)]
    pub physical_materials: BTreeMap<String, usize>,
    /// Applied to boundary faces that carry no tag.
    #[serde(default)]
    pub default_boundary: Option<TagSpec>,
    /// Coordinate multiplier, applied after the length unit.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl FileMesh {
    pub fn resolved_path(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }

    pub fn resolved_format(&self) -> Result<FileFormat> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        match self.path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(FileFormat::Json),
            Some("msh") => Ok(FileFormat::Msh),
            _ => Err(Error::invalid("mesh.format", "cannot infer the format from the file extension")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    /// Condition-number target of the direction-count rule: 1e5, 1e7 or 1e9.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub fixed_p: Option<usize>,
}

fn default_tolerance() -> f64 {
    1e7
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { tolerance: default_tolerance(), fixed_p: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSpec {
    #[default]
    Total,
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblySpec {
    /// Field represented away from TS interfaces.
    #[serde(default)]
    pub region: RegionSpec,
    #[serde(default = "yes")]
    pub rcm: bool,
    /// Force one Duffy order on every face.
    #[serde(default)]
    pub quadrature_order: Option<usize>,
}

impl Default for AssemblySpec {
    fn default() -> Self {
        Self { region: RegionSpec::Total, rcm: true, quadrature_order: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Stored,
    #[serde(alias = "matrix-free")]
    MatrixFree,
}

impl ModeSpec {
    pub fn mode(self) -> SolverMode {
        match self {
            ModeSpec::Stored => SolverMode::Stored,
            ModeSpec::MatrixFree => SolverMode::MatrixFree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub mode: ModeSpec,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    5000
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), mode: ModeSpec::Stored }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub rcs: Option<RcsOutput>,
    #[serde(default)]
    pub field_line: Option<FieldLineOutput>,
    #[serde(default = "yes")]
    pub save_solution: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { rcs: None, field_line: None, save_solution: true }
    }
}

/// Bistatic RCS in the `xy`-plane, azimuth `phi` from `+x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcsOutput {
    #[serde(default)]
    pub phi_start_deg: f64,
    #[serde(default = "default_phi_stop")]
    pub phi_stop_deg: f64,
    #[serde(default = "default_phi_step")]
    pub phi_step_deg: f64,
    /// Radius of the mesh sphere carrying the near-to-far integral.
    pub surface_radius: f64,
    #[serde(default)]
    pub center: [f64; 3],
    /// Added to the face quadrature order used for the far field.
    #[serde(default = "default_extra_order")]
    pub extra_order: usize,
}

fn default_phi_stop() -> f64 {
    180.0
}

fn default_phi_step() -> f64 {
    1.0
}

fn default_extra_order() -> usize {
    2
}

impl RcsOutput {
    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.phi_stop_deg - self.phi_start_deg) / self.phi_step_deg + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.phi_start_deg + self.phi_step_deg * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpec {
    #[default]
    Total,
    Scattered,
}

/// `points` samples strictly between `start` and `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldLineOutput {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub points: usize,
    #[serde(default)]
    pub field: FieldSpec,
}

impl FieldLineOutput {
    pub fn positions(&self) -> Vec<Vec3> {
        let a = vec3(self.start);
        let b = vec3(self.end);
        (1..=self.points).map(|i| a + (b - a) * (i as f64 / (self.points + 1) as f64)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default)]
    pub mie: Option<MieCheck>,
    #[serde(default)]
    pub salisbury: Option<SalisburyCheck>,
    #[serde(default)]
    pub ts_null: Option<TsNullCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SphereSpec {
    Pec,
    Penetrable {
        eps_r: Complex,
        #[serde(default = "one")]
        mu_r: Complex,
    },
}

impl SphereSpec {
    pub fn kind(&self) -> SphereKind {
        match self {
            SphereSpec::Pec => SphereKind::Pec,
            SphereSpec::Penetrable { eps_r, mu_r } => SphereKind::Penetrable { eps_r: eps_r.value(), mu_r: mu_r.value() },
        }
    }
}

/// Relative L2 error of the RCS against the Mie series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MieCheck {
    pub radius: f64,
    pub sphere: SphereSpec,
    pub l2_tolerance_percent: f64,
}

/// Field-line comparison with the screen solution: PEC plane at `x = pec_x`,
/// sheet at `x = pec_x - h`, incidence along `+x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SalisburyCheck {
    pub h: f64,
    pub eta: Complex,
    #[serde(default)]
    pub pec_x: f64,
    /// Bound on `|R_fit / A_fit - R_exact|` from samples left of the sheet.
    #[serde(default = "default_reflection_tolerance")]
    pub reflection_tolerance: f64,
    /// Bound on `max |E_y - E_y,exact| / max |E_y,exact|` along the line.
    #[serde(default = "default_max_relative_tolerance")]
    pub max_relative_tolerance: f64,
}

fn default_reflection_tolerance() -> f64 {
    1e-3
}

fn default_max_relative_tolerance() -> f64 {
    1e-2
}

/// Vacuum run with a TS sphere: scattered field outside and total-field
/// error inside, both RMS over deterministic sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsNullCheck {
    pub radius: f64,
    pub outer_radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_outside_tolerance")]
    pub outside_tolerance: f64,
    #[serde(default = "default_inside_tolerance")]
    pub inside_tolerance: f64,
}

fn default_samples() -> usize {
    400
}

fn default_outside_tolerance() -> f64 {
    1e-3
}

fn default_inside_tolerance() -> f64 {
    5e-3
}

pub fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text)?;
        s.base_dir = base_dir.into();
        s.normalize_units();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn kappa(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    /// Rescale wavelength-relative lengths to metres.
    fn normalize_units(&mut self) {
        if self.length_unit == LengthUnit::Meter || !(self.frequency_hz > 0.0) {
            return;
        }
        let s = self.wavelength();
        let v = |a: &mut [f64; 3]| a.iter_mut().for_each(|c| *c *= s);
        match &mut self.mesh {
            MeshSource::Box(b) => {
                v(&mut b.origin);
                v(&mut b.extents);
                b.planes.iter_mut().for_each(|p| p.at *= s);
            }
            MeshSource::Sphere(sp) => sp.radii.iter_mut().for_each(|r| *r *= s),
            MeshSource::File(f) => f.scale *= s,
        }
        if let Some(r) = &mut self.outputs.rcs {
            r.surface_radius *= s;
            v(&mut r.center);
        }
        if let Some(l) = &mut self.outputs.field_line {
            v(&mut l.start);
            v(&mut l.end);
        }
        if let Some(m) = &mut self.checks.mie {
            m.radius *= s;
        }
        if let Some(c) = &mut self.checks.salisbury {
            c.h *= s;
            c.pec_x *= s;
        }
        if let Some(t) = &mut self.checks.ts_null {
            t.radius *= s;
            t.outer_radius *= s;
        }
        self.length_unit = LengthUnit::Meter;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::invalid("frequency_hz", "must be positive and finite"));
        }
        if let Some(inc) = &self.incident {
            self.plane_wave_of(inc).validate().map_err(|r| Error::invalid("incident", r))?;
        }
        for (i, m) in self.materials.iter().enumerate() {
            let m = m.material();
            if m.eps_r.norm() == 0.0 || m.mu_r.norm() == 0.0 {
                return Err(Error::invalid(format!("materials[{i}]"), "eps_r and mu_r must be nonzero"));
            }
        }
        let n_mat = self.materials.len().max(1);
        let check_mat = |field: String, m: usize| {
            if m >= n_mat {
                Err(Error::invalid(field, format!("material {m} is not defined")))
            } else {
                Ok(())
            }
        };
        match &self.mesh {
            MeshSource::Box(b) => {
                check_mat("mesh.material".into(), b.material)?;
                for (name, t) in b.sides.all() {
                    t.validate(&format!("mesh.sides.{name}"))?;
                    if !t.is_boundary() {
                        return Err(Error::invalid(format!("mesh.sides.{name}"), "box sides need a boundary tag"));
                    }
                }
                for (i, p) in b.planes.iter().enumerate() {
                    let field = format!("mesh.planes[{i}]");
                    p.tag.validate(&field)?;
                    if p.tag.is_boundary() {
                        return Err(Error::invalid(field, "planes are interior; use resistive, ts or interior"));
                    }
                    if let TagSpec::Ts { scattered } = &p.tag {
                        if !matches!(scattered.as_deref(), Some("low") | Some("high")) {
                            return Err(Error::invalid(field, "ts planes need scattered = \"low\" or \"high\""));
                        }
                    }
                }
            }
            MeshSource::Sphere(sp) => {
                if sp.surfaces.len() != sp.radii.len() {
                    return Err(Error::invalid("mesh.surfaces", "need one tag per radius"));
                }
                for (i, t) in sp.surfaces.iter().enumerate() {
                    t.validate(&format!("mesh.surfaces[{i}]"))?;
                }
                let layers = sp.radii.len() - usize::from(!sp.fill_core);
                if !sp.layer_materials.is_empty() && sp.layer_materials.len() != layers {
                    return Err(Error::invalid("mesh.layer_materials", format!("need {layers} entries")));
                }
                for (i, &m) in sp.layer_materials.iter().enumerate() {
                    check_mat(format!("mesh.layer_materials[{i}]"), m)?;
                }
            }
            MeshSource::File(f) => {
                f.resolved_format()?;
                for (name, t) in &f.physical_tags {
                    t.validate(&format!("mesh.physical_tags.{name}"))?;
                }
                for (name, &m) in &f.physical_materials {
                    check_mat(format!("mesh.physical_materials.{name}"), m)?;
                }
                if let Some(t) = &f.default_boundary {
                    t.validate("mesh.default_boundary")?;
                    if !t.is_boundary() {
                        return Err(Error::invalid("mesh.default_boundary", "must be a boundary tag"));
                    }
                }
                if !(f.scale > 0.0) {
                    return Err(Error::invalid("mesh.scale", "must be positive"));
                }
            }
        }
        ConditionTolerance::from_value(self.basis.tolerance)
            .map_err(|_| Error::invalid("basis.tolerance", "must be one of 1e5, 1e7, 1e9"))?;
        if self.basis.fixed_p == Some(0) {
            return Err(Error::invalid("basis.fixed_p", "must be at least 1"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(Error::invalid("solver.tol", "must lie in (0, 1)"));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::invalid("solver.max_iter", "must be positive"));
        }
        if let Some(r) = &self.outputs.rcs {
            if self.incident.is_none() {
                return Err(Error::invalid("outputs.rcs", "needs an incident wave"));
            }
            if !(r.phi_step_deg > 0.0 && r.phi_stop_deg >= r.phi_start_deg) {
                return Err(Error::invalid("outputs.rcs", "need phi_step_deg > 0 and phi_stop_deg >= phi_start_deg"));
            }
            if !(r.surface_radius > 0.0) {
                return Err(Error::invalid("outputs.rcs.surface_radius", "must be positive"));
            }
        }
        if let Some(l) = &self.outputs.field_line {
            if l.points == 0 {
                return Err(Error::invalid("outputs.field_line.points", "must be positive"));
            }
        }
        if let Some(m) = &self.checks.mie {
            if self.outputs.rcs.is_none() {
                return Err(Error::invalid("checks.mie", "needs outputs.rcs"));
            }
            if !(m.radius > 0.0 && m.l2_tolerance_percent > 0.0) {
                return Err(Error::invalid("checks.mie", "radius and tolerance must be positive"));
            }
        }
        if let Some(c) = &self.checks.salisbury {
            if self.outputs.field_line.is_none() || self.incident.is_none() {
                return Err(Error::invalid("checks.salisbury", "needs an incident wave and outputs.field_line"));
            }
            if !(c.h > 0.0) {
                return Err(Error::invalid("checks.salisbury.h", "must be positive"));
            }
        }
        if let Some(t) = &self.checks.ts_null {
            if self.incident.is_none() {
                return Err(Error::invalid("checks.ts_null", "needs an incident wave"));
            }
            if !(0.0 < t.radius && t.radius < t.outer_radius && t.samples > 0) {
                return Err(Error::invalid("checks.ts_null", "need 0 < radius < outer_radius and samples > 0"));
            }
        }
        Ok(())
    }

    fn plane_wave_of(&self, inc: &Incident) -> PlaneWave {
        let p = CVec3::new(inc.polarization[0].value(), inc.polarization[1].value(), inc.polarization[2].value());
        PlaneWave::new(vec3(inc.direction), p, self.kappa())
    }

    pub fn plane_wave(&self) -> Option<PlaneWave> {
        self.incident.as_ref().map(|inc| self.plane_wave_of(inc))
    }

    pub fn material_list(&self) -> Vec<Material> {
        if self.materials.is_empty() {
            vec![Material::VACUUM]
        } else {
            self.materials.iter().map(MaterialSpec::material).collect()
        }
    }

    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions {
            tolerance: ConditionTolerance::from_value(self.basis.tolerance).unwrap_or_default(),
            fixed_p: self.basis.fixed_p,
            forced_order: self.assembly.quadrature_order,
            rcm: self.assembly.rcm,
            default_region: match self.assembly.region {
                RegionSpec::Total => Region::Total,
                RegionSpec::Scattered => Region::Scattered,
            },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.solver.tol, max_iter: self.solver.max_iter, mode: self.solver.mode.mode() }
    }
}
