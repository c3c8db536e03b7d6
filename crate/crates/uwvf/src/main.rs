use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use log::error;
use uwvf::compare::compare_files;
use uwvf::run::{mie_reference, run, write_rcs_csv};
use uwvf::scenario::ModeSpec;
use uwvf::{presets, Error, Scenario};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Stored,
    MatrixFree,
}

/// Plane-wave UWVF solver for time-harmonic Maxwell scattering.
///
/// Exit status: 0 when every configured check passes, 1 when a check fails,
/// 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "uwvf", version)]
#[command(group(ArgGroup::new("input").args(["config", "preset", "compare", "list_presets"])))]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the scenario's solver mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output directory (default: out/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only write the Mie reference RCS (mie.csv) for the scenario's Mie check.
    #[arg(long)]
    emit_mie: bool,
    /// Compare RCS file A against reference B.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    compare: Option<Vec<PathBuf>>,
    /// Relative L2 tolerance (%) for --compare.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Print the built-in scenario names.
    #[arg(long)]
    list_presets: bool,
}

fn execute(cli: Cli) -> Result<bool, Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid("--threads", e.to_string()))?;
    }
    if cli.list_presets {
        presets::names().for_each(|n| println!("{n}"));
        return Ok(true);
    }
    if let Some(files) = &cli.compare {
        let report = compare_files(&files[0], &files[1], cli.tolerance)?;
        let text = serde_json::to_string_pretty(&report)?;
        if let Some(out) = &cli.out {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let path = out.join("compare.json");
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        }
        println!("{text}");
        return Ok(report.pass);
    }
    let mut scenario = match (&cli.config, &cli.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => return Err(Error::invalid("arguments", "need --config, --preset, --compare or --list-presets")),
    };
    if let Some(m) = cli.mode {
        scenario.solver.mode = match m {
            Mode::Stored => ModeSpec::Stored,
            Mode::MatrixFree => ModeSpec::MatrixFree,
        };
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    if cli.emit_mie {
        let rows = mie_reference(&scenario)?
            .ok_or_else(|| Error::invalid("--emit-mie", "the scenario has no Mie check and RCS grid"))?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        write_rcs_csv(&out.join("mie.csv"), &rows)?;
        println!("{}", out.join("mie.csv").display());
        return Ok(true);
    }
    let report = run(&scenario, &out)?;
    for c in &report.checks {
        println!("{} {}: {:.4e} (tolerance {:.4e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    println!(
        "{}: {} unknowns, {} iterations, {:.1} s wall, {:.1} s cpu, report in {}",
        report.scenario,
        report.n_dof,
        report.solver.iterations,
        report.timing.wall_s,
        report.timing.cpu_s,
        out.join("report.json").display()
    );
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
