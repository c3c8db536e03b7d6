//! Run pipeline: mesh, discretisation, solve, post-processing, checks and
//! artifacts on disk.
//!
//! Files written to the output directory:
//! `report.json` always, `rcs.csv` (and `mie.csv` with a Mie check) when an
//! RCS grid is configured, `field_line.csv` for a field line and
//! `solution.bin` unless disabled.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use uwvf_core::assembly::Discretization;
use uwvf_core::basis::van_der_corput;
use uwvf_core::geometry::Vec3;
use uwvf_core::oracle::{mie_bistatic_rcs, salisbury_solution, MieSpec, PlaneWave, SalisburySpec};
use uwvf_core::postprocess::{
    azimuth_directions, bistatic_rcs, far_field, fit_counter_propagating, rcs_l2_error, recover_coefficients,
    sample_field, sphere_surface, FieldKind, FieldSample,
};
use uwvf_core::solver::{norm2, solve};
use uwvf_core::C64;

use crate::error::{Error, Result};
use crate::meshio::build_mesh;
use crate::scenario::{vec3, FieldSpec, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub tetra: usize,
    pub wedge: usize,
    pub hexa: usize,
    pub vertices: usize,
    pub faces: usize,
    pub curved_faces: usize,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub mode: String,
    pub tolerance: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub restarts: usize,
    pub lu_fallbacks: usize,
    pub factor_bytes: usize,
    pub coupling_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mesh_s: f64,
    pub discretization_s: f64,
    pub solve_s: f64,
    pub postprocess_s: f64,
    pub wall_s: f64,
    /// User plus system time of the whole process.
    pub cpu_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub frequency_hz: f64,
    pub wavelength_m: f64,
    pub kappa: f64,
    pub mesh: MeshStats,
    pub n_dof: usize,
    pub directions_min: usize,
    pub directions_max: usize,
    pub solver: SolverStats,
    pub timing: Timing,
    /// Peak resident set size of the process.
    pub peak_rss_bytes: Option<u64>,
    pub threads: usize,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcsRow {
    pub phi_deg: f64,
    pub sigma_m2: f64,
    pub sigma_dbsm: f64,
}

/// Process CPU time (s) and peak resident set size (bytes).
pub fn process_usage() -> (f64, Option<u64>) {
    // SAFETY: getrusage only writes into the zero-initialised struct we pass.
    let ru = unsafe {
        let mut ru: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut ru) != 0 {
            return (0.0, None);
        }
        ru
    };
    let secs = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    let cpu = secs(ru.ru_utime) + secs(ru.ru_stime);
    // kilobytes on Linux, bytes on macOS
    let scale = if cfg!(target_os = "macos") { 1 } else { 1024 };
    (cpu, Some(ru.ru_maxrss as u64 * scale))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_rcs_csv(path: &Path, rows: &[RcsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rcs_csv(path: &Path) -> Result<Vec<RcsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn rcs_rows(phis: &[f64], sigma: &[(f64, f64)]) -> Vec<RcsRow> {
    phis.iter().zip(sigma).map(|(&phi_deg, &(sigma_m2, sigma_dbsm))| RcsRow { phi_deg, sigma_m2, sigma_dbsm }).collect()
}

const SOLUTION_MAGIC: &[u8; 8] = b"UWVFSOL1";

/// Little-endian: magic, element count, unknown count, per-element offsets,
/// then interleaved real and imaginary parts.
pub fn write_solution(path: &Path, offsets: &[usize], x: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * offsets.len() + 16 * x.len());
    buf.extend_from_slice(SOLUTION_MAGIC);
    buf.extend_from_slice(&(offsets.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(x.len() as u64).to_le_bytes());
    for &o in offsets {
        buf.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for v in x {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    write_file(path, &buf)
}

pub fn read_solution(path: &Path) -> Result<(Vec<usize>, Vec<C64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    let bad = || Error::invalid(path.display().to_string(), "not a solution file");
    if bytes.len() < 24 || &bytes[..8] != SOLUTION_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    let (ne, n) = (word(1) as usize, word(2) as usize);
    if bytes.len() != 24 + 8 * ne + 16 * n {
        return Err(bad());
    }
    let float = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let offsets = (0..ne).map(|e| word(3 + e) as usize).collect();
    let data = 24 + 8 * ne;
    let x = (0..n).map(|k| C64::new(float(data + 16 * k), float(data + 16 * k + 8))).collect();
    Ok((offsets, x))
}

fn write_field_line(path: &Path, samples: &[FieldSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z", "element", "ex_re", "ex_im", "ey_re", "ey_im", "ez_re", "ez_im"])?;
    for s in samples {
        let p = s.position;
        let e = s.e;
        let rec: Vec<String> = [p.x, p.y, p.z]
            .iter()
            .map(f64::to_string)
            .chain([s.element.to_string()])
            .chain([e.x, e.y, e.z].iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]))
            .collect();
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mie reference on the scenario's RCS grid.
pub fn mie_reference(s: &Scenario) -> Result<Option<Vec<RcsRow>>> {
    let (Some(check), Some(rcs)) = (&s.checks.mie, &s.outputs.rcs) else { return Ok(None) };
    let phis = rcs.angles();
    let spec = MieSpec { radius: check.radius, kind: check.sphere.kind(), kappa: s.kappa() };
    let sigma = mie_bistatic_rcs(&spec, &phis).map_err(Error::stage("oracle"))?;
    let pairs: Vec<(f64, f64)> = sigma.iter().map(|&v| (v, 10.0 * v.log10())).collect();
    Ok(Some(rcs_rows(&phis, &pairs)))
}

/// Golden-spiral direction `i` of `n`.
fn spiral_direction(i: usize, n: usize) -> Vec3 {
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = i as f64 * std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn ts_null_checks(
    s: &Scenario,
    disc: &Discretization,
    coeffs: &[Vec<C64>],
    pw: &PlaneWave,
    metrics: &mut BTreeMap<String, f64>,
) -> Result<Vec<CheckResult>> {
    let Some(t) = &s.checks.ts_null else { return Ok(vec![]) };
    let n = t.samples;
    let outside: Vec<Vec3> = (0..n)
        .map(|i| spiral_direction(i, n) * (t.radius + (t.outer_radius - t.radius) * (0.05 + 0.9 * van_der_corput(i as u64 + 1, 2))))
        .collect();
    let inside: Vec<Vec3> =
        (0..n).map(|i| spiral_direction(i, n) * (t.radius * 0.95 * van_der_corput(i as u64 + 1, 3))).collect();
    let so = sample_field(disc, coeffs, &outside, FieldKind::Scattered).map_err(Error::stage("postprocess"))?;
    let si = sample_field(disc, coeffs, &inside, FieldKind::Total).map_err(Error::stage("postprocess"))?;
    let p = pw.polarization.norm();
    let rms = |v: &mut dyn Iterator<Item = f64>| (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt() / p;
    let out_rms = rms(&mut so.iter().map(|f| f.e.norm()));
    let in_rms = rms(&mut si.iter().map(|f| (f.e - pw.field(f.position)).norm()));
    let out_max = so.iter().map(|f| f.e.norm()).fold(0.0, f64::max) / p;
    let in_max = si.iter().map(|f| (f.e - pw.field(f.position)).norm()).fold(0.0, f64::max) / p;
    metrics.insert("ts_null_outside_max".into(), out_max);
    metrics.insert("ts_null_inside_max".into(), in_max);
    Ok(vec![
        CheckResult::at_most("ts_null_outside_rms", out_rms, t.outside_tolerance),
        CheckResult::at_most("ts_null_inside_rms", in_rms, t.inside_tolerance),
    ])
}

fn salisbury_checks(
    s: &Scenario,
    samples: &[FieldSample],
    pw: &PlaneWave,
    metrics: &mut BTreeMap<String, f64>,
) -> Result<Vec<CheckResult>> {
    let Some(c) = &s.checks.salisbury else { return Ok(vec![]) };
    let kappa = s.kappa();
    let sol = salisbury_solution(SalisburySpec { h: c.h, eta: c.eta.value(), kappa }).map_err(Error::stage("oracle"))?;
    // the closed form puts the PEC plane at x = 0 and has unit amplitude there
    let amp = pw.polarization.y * C64::new(0.0, kappa * c.pec_x).exp();
    let (mut err, mut scale) = (0.0_f64, 0.0_f64);
    let (mut xs, mut vals) = (Vec::new(), Vec::new());
    for f in samples {
        let x = f.position.x - c.pec_x;
        let exact = amp * sol.e_y(x);
        err = err.max((f.e.y - exact).norm());
        scale = scale.max(exact.norm());
        if x < -c.h {
            xs.push(x);
            vals.push(f.e.y / amp);
        }
    }
    if xs.len() < 2 {
        return Err(Error::invalid("checks.salisbury", "the field line needs samples in front of the sheet"));
    }
    let (a, r) = fit_counter_propagating(&xs, &vals, kappa);
    let refl = r / a;
    metrics.insert("salisbury_fit_incident_abs".into(), a.norm());
    metrics.insert("salisbury_fit_reflection_abs".into(), refl.norm());
    metrics.insert("salisbury_exact_reflection_abs".into(), sol.r2.norm());
    Ok(vec![
        CheckResult::at_most("salisbury_reflection", (refl - sol.r2).norm(), c.reflection_tolerance),
        CheckResult::at_most("salisbury_field_max_relative", err / scale, c.max_relative_tolerance),
    ])
}

/// Run a scenario and write its artifacts to `out`.
pub fn run(s: &Scenario, out: &Path) -> Result<Report> {
    s.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let wall = Instant::now();
    let kappa = s.kappa();
    let pw = s.plane_wave();

    let t = Instant::now();
    let mesh = build_mesh(s)?;
    let mesh_s = t.elapsed().as_secs_f64();
    let [tetra, wedge, hexa] = mesh.count_by_kind();
    let mesh_stats = MeshStats {
        tetra,
        wedge,
        hexa,
        vertices: mesh.vertices.len(),
        faces: mesh.faces.len(),
        curved_faces: mesh.faces.iter().filter(|f| f.curved.is_some()).count(),
        h_min: mesh.h_min,
        h_max: mesh.h_max,
    };
    info!("{}: mesh with {} elements, {} vertices", s.name, mesh.elements.len(), mesh.vertices.len());

    let t = Instant::now();
    let disc = Discretization::new(mesh, kappa, pw.clone(), &s.assembly_options()).map_err(Error::stage("assembly"))?;
    let discretization_s = t.elapsed().as_secs_f64();
    info!("{}: {} unknowns", s.name, disc.n_dof);

    let t = Instant::now();
    let opts = s.solver_options();
    let (x, rep) = solve(&disc, &opts).map_err(Error::stage("solver"))?;
    let solve_s = t.elapsed().as_secs_f64();
    info!("{}: {} iterations in {:.1} s ({})", s.name, rep.iterations, solve_s, rep.mode.name());

    let t = Instant::now();
    let coeffs = recover_coefficients(&disc, &x).map_err(Error::stage("postprocess"))?;
    let mut metrics = BTreeMap::new();
    metrics.insert("solution_norm".into(), norm2(&x));
    let mut checks = Vec::new();

    let rcs_path = out.join("rcs.csv");
    let mie_path = out.join("mie.csv");
    for p in [&rcs_path, &mie_path] {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
        }
    }
    if let (Some(r), Some(pw)) = (&s.outputs.rcs, &pw) {
        let phis = r.angles();
        let surface = sphere_surface(&disc, vec3(r.center), r.surface_radius);
        if surface.is_empty() {
            return Err(Error::invalid(
                "outputs.rcs.surface_radius",
                format!("no mesh faces lie on the sphere of radius {}", r.surface_radius),
            ));
        }
        let pattern = far_field(&disc, &coeffs, &surface, &azimuth_directions(&phis), r.extra_order)
            .map_err(Error::stage("postprocess"))?;
        let rows = rcs_rows(&phis, &bistatic_rcs(&pattern, pw));
        write_rcs_csv(&rcs_path, &rows)?;
        let back: Vec<f64> = rows.iter().filter(|r| r.phi_deg >= 90.0 && r.phi_deg <= 180.0).map(|r| r.sigma_m2).collect();
        if !back.is_empty() {
            metrics.insert("rcs_back_hemisphere_mean_m2".into(), back.iter().sum::<f64>() / back.len() as f64);
        }
        if let Some(mie) = mie_reference(s)? {
            write_rcs_csv(&mie_path, &mie)?;
            let a: Vec<f64> = rows.iter().map(|r| r.sigma_m2).collect();
            let b: Vec<f64> = mie.iter().map(|r| r.sigma_m2).collect();
            let err = rcs_l2_error(&a, &b).map_err(Error::stage("postprocess"))?;
            let tol = s.checks.mie.as_ref().map(|m| m.l2_tolerance_percent).unwrap_or(f64::INFINITY);
            checks.push(CheckResult::at_most("mie_l2_percent", err, tol));
        }
    }

    let line_path = out.join("field_line.csv");
    if let Some(l) = &s.outputs.field_line {
        let kind = match l.field {
            FieldSpec::Total => FieldKind::Total,
            FieldSpec::Scattered => FieldKind::Scattered,
        };
        let samples = sample_field(&disc, &coeffs, &l.positions(), kind).map_err(Error::stage("postprocess"))?;
        write_field_line(&line_path, &samples)?;
        if let Some(pw) = &pw {
            checks.extend(salisbury_checks(s, &samples, pw, &mut metrics)?);
        }
    } else if line_path.exists() {
        std::fs::remove_file(&line_path).map_err(|e| Error::io(&line_path, e))?;
    }
    if let Some(pw) = &pw {
        checks.extend(ts_null_checks(s, &disc, &coeffs, pw, &mut metrics)?);
    }
    if s.outputs.save_solution {
        write_solution(&out.join("solution.bin"), &disc.offsets, &x)?;
    }
    let postprocess_s = t.elapsed().as_secs_f64();

    let (cpu_s, peak_rss_bytes) = process_usage();
    let report = Report {
        scenario: s.name.clone(),
        frequency_hz: s.frequency_hz,
        wavelength_m: s.wavelength(),
        kappa,
        mesh: mesh_stats,
        n_dof: disc.n_dof,
        directions_min: disc.bases.iter().map(|b| b.p()).min().unwrap_or(0),
        directions_max: disc.bases.iter().map(|b| b.p()).max().unwrap_or(0),
        solver: SolverStats {
            mode: rep.mode.name().into(),
            tolerance: opts.tol,
            iterations: rep.iterations,
            relative_residual: rep.relative_residual,
            restarts: rep.restarts,
            lu_fallbacks: rep.lu_fallbacks.len(),
            factor_bytes: rep.factor_bytes,
            coupling_bytes: rep.coupling_bytes,
        },
        timing: Timing { mesh_s, discretization_s, solve_s, postprocess_s, wall_s: wall.elapsed().as_secs_f64(), cpu_s },
        peak_rss_bytes,
        threads: rayon::current_num_threads(),
        metrics,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    };
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::File::create(&path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
