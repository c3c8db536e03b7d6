use std::path::Path;
use std::process::{Command, Output};

use uwvf::run::{read_report, read_solution};

const SMALL_SPHERE: &str = r#"
name = "small_sphere"
frequency_hz = 2e9
length_unit = "wavelength"
[incident]
direction = [1, 0, 0]
polarization = [0, 1, 0]
[mesh]
kind = "sphere"
radii = [0.5, 0.75, 1.0]
refinement = 0
surfaces = [{ type = "pec", source = "scattered_field" }, { type = "interior" }, { type = "absorbing" }]
[assembly]
region = "scattered"
[outputs.rcs]
phi_step_deg = 15
surface_radius = 0.75
[checks.mie]
radius = 0.5
sphere = { type = "pec" }
l2_tolerance_percent = 1000
"#;

fn uwvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwvf")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_box_runs_to_a_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = uwvf(&["--preset", "empty_box", "--out", path(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let (offsets, x) = read_solution(&out.join("solution.bin")).unwrap();
    assert_eq!(offsets.len(), 8 * 6);
    assert!(!x.is_empty() && x.iter().all(|c| c.norm() == 0.0));
    assert!(!out.join("rcs.csv").exists());
    let report = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.solver.iterations, 0);
    assert!(report.all_pass);
}

#[test]
fn rcs_runs_are_bit_reproducible_and_exit_codes_follow_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, SMALL_SPHERE).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = uwvf(&["--config", path(&cfg), "--threads", "1", "--out", path(out)]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(String::from_utf8_lossy(&r.stdout).contains("PASS mie_l2_percent"));
    }
    let rcs = std::fs::read(a.join("rcs.csv")).unwrap();
    assert_eq!(rcs, std::fs::read(b.join("rcs.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("solution.bin")).unwrap(), std::fs::read(b.join("solution.bin")).unwrap());
    assert_eq!(String::from_utf8_lossy(&rcs).lines().count(), 1 + 13);

    // the run's own mie.csv matches the standalone reference
    let m = dir.path().join("m");
    let r = uwvf(&["--config", path(&cfg), "--emit-mie", "--out", path(&m)]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(std::fs::read(m.join("mie.csv")).unwrap(), std::fs::read(a.join("mie.csv")).unwrap());
    assert!(!m.join("rcs.csv").exists());

    let self_cmp = uwvf(&["--compare", path(&a.join("rcs.csv")), path(&b.join("rcs.csv")), "--tolerance", "0"]);
    assert_eq!(self_cmp.status.code(), Some(0));
    let vs_mie = uwvf(&["--compare", path(&a.join("rcs.csv")), path(&a.join("mie.csv")), "--tolerance", "1e-6"]);
    assert_eq!(vs_mie.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&vs_mie.stdout).unwrap();
    assert!(report["l2_percent"].as_f64().unwrap() > 1e-6);

    let strict = dir.path().join("strict.toml");
    std::fs::write(&strict, SMALL_SPHERE.replace("l2_tolerance_percent = 1000", "l2_tolerance_percent = 1e-6")).unwrap();
    let r = uwvf(&["--config", path(&strict), "--out", path(&dir.path().join("c"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL mie_l2_percent"));
}

#[test]
fn matrix_free_flag_reaches_the_same_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, SMALL_SPHERE.replace("[assembly]", "[solver]\ntol = 1e-10\n[assembly]")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(uwvf(&["--config", path(&cfg), "--out", path(&a)]).status.code(), Some(0));
    assert_eq!(uwvf(&["--config", path(&cfg), "--mode", "matrix-free", "--out", path(&b)]).status.code(), Some(0));
    let (_, x) = read_solution(&a.join("solution.bin")).unwrap();
    let (_, y) = read_solution(&b.join("solution.bin")).unwrap();
    let num: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = x.iter().map(|p| p.norm_sqr()).sum();
    assert!((num / den).sqrt() <= 1e-9, "{}", (num / den).sqrt());
}

#[test]
fn errors_exit_with_two_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL_SPHERE.replace("{ type = \"absorbing\" }", "{ type = \"boundary\", q = 2 }")).unwrap();
    let r = uwvf(&["--config", path(&bad), "--out", path(&dir.path().join("x"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("|Q|"));

    let slow = dir.path().join("slow.toml");
    std::fs::write(&slow, SMALL_SPHERE.replace("[assembly]", "[solver]\ntol = 1e-12\nmax_iter = 1\n[assembly]")).unwrap();
    let r = uwvf(&["--config", path(&slow), "--out", path(&dir.path().join("y"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("solver stage"));

    std::fs::write(
        dir.path().join("flat.json"),
        r#"{ "format": "uwvf-mesh", "version": 1, "vertices": [[0,0,0],[1,0,0],[0,1,0],[1,1,0]],
             "elements": [{ "vertices": [0,1,2,3] }], "face_tags": [] }"#,
    )
    .unwrap();
    let file = dir.path().join("file.toml");
    std::fs::write(&file, "frequency_hz = 1e9\n[mesh]\nkind = \"file\"\npath = \"flat.json\"\n").unwrap();
    let r = uwvf(&["--config", path(&file), "--out", path(&dir.path().join("z"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("mesh stage"));

    assert_eq!(uwvf(&["--preset", "no_such_preset"]).status.code(), Some(2));
    assert_eq!(uwvf(&["--compare", path(&bad), path(&bad)]).status.code(), Some(2));
}

#[test]
fn lists_presets() {
    let r = uwvf(&["--list-presets"]);
    assert_eq!(r.status.code(), Some(0));
    let names = String::from_utf8(r.stdout).unwrap();
    for n in ["salisbury_eta1", "pec_sphere_curved", "ts_null", "resistive_sphere_eta05"] {
        assert!(names.lines().any(|l| l == n), "{n}");
    }
}
