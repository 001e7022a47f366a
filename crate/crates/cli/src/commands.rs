//! Implementations of the five subcommands.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use mesocloud::{
    assemble_with, bulk_plane_points, compare, diagnostics_report, field::fmt_g17, sample_grid,
    sample_line, solve_direct, solve_fixed_point, solve_reference, validate_cloud, Aabb,
    AssemblyError, AssemblyOptions, Background, CloudGridSpec, DipoleSolution, Domain,
    InteractionSystem, SourceSpec,
};

use crate::config::{self, Built, Method};
use crate::output::{check_out_dir, to_sorted_json, write_atomic, write_json, RunMeta};
use crate::CliError;

fn solver_error(e: AssemblyError) -> CliError {
    match e {
        AssemblyError::SingularSystem { .. } | AssemblyError::NotConverged { .. } => {
            CliError::Solver(e.to_string())
        }
        other => CliError::Admissibility(other.to_string()),
    }
}

fn assemble_and_solve(
    built: &Built,
    background: &Background,
    cfg: &config::SolverCfg,
) -> Result<(InteractionSystem, DipoleSolution), CliError> {
    let options = AssemblyOptions {
        matrix_free_threshold: cfg.matrix_free_threshold,
        ..AssemblyOptions::default()
    };
    let sys = assemble_with(&built.cloud, &built.domain, background, options)
        .map_err(solver_error)?;
    let sol = match cfg.method {
        Method::Direct => solve_direct(&sys),
        Method::FixedPoint => solve_fixed_point(&sys, cfg.tol, cfg.max_iter),
    }
    .map_err(solver_error)?;
    Ok((sys, sol))
}

/// Validation gate shared by the compute commands: error-level
/// violations abort, warnings go to stderr.
fn gate_admissibility(built: &Built) -> Result<(), CliError> {
    let report = validate_cloud(&built.cloud, &built.domain);
    for v in &report.violations {
        if v.is_warning() {
            eprintln!("warning: {}", to_sorted_json(v)?.trim_end());
        }
    }
    if report.has_errors() {
        return Err(CliError::Admissibility(to_sorted_json(
            &report,
        )?));
    }
    Ok(())
}

fn write_samples(samples: &mesocloud::FieldSamples, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    samples
        .write_csv(&mut buf)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    write_atomic(path, &buf)
}

pub fn cmd_solve(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    check_out_dir(out)?;
    let built = cfg.build()?;
    let background = cfg.background();
    gate_admissibility(&built)?;

    let (_sys, sol) = assemble_and_solve(&built, &background, &cfg.solver)?;
    write_json(&out.join(&cfg.outputs.solution), &sol)?;
    write_json(
        &out.join(&cfg.outputs.diagnostics),
        &diagnostics_report(&sol, &built.cloud),
    )?;

    if let Some(line) = &cfg.outputs.line {
        let samples = sample_line(
            &Vector3::from(line.p0),
            &Vector3::from(line.p1),
            line.n,
            &built.cloud,
            &built.domain,
            &background,
            &sol,
        );
        write_samples(&samples, &out.join(&line.file))?;
    }
    if let Some(grid) = &cfg.outputs.grid {
        let bounds = Aabb {
            min: Vector3::from(grid.min),
            max: Vector3::from(grid.max),
        };
        let samples = sample_grid(&bounds, grid.res, &built.cloud, &built.domain, &background, &sol);
        write_samples(&samples, &out.join(&grid.file))?;
    }

    let mut meta = RunMeta::new("solve", built.cloud.len());
    meta.alpha = built.alpha;
    write_json(&out.join("run_meta.json"), &meta)?;
    println!(
        "solved {} voids: residual {:.3e}, wrote {}",
        built.cloud.len(),
        sol.residual_norm,
        cfg.outputs.solution
    );
    Ok(())
}

pub fn cmd_validate(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    check_out_dir(out)?;
    let built = cfg.build()?;
    let report = validate_cloud(&built.cloud, &built.domain);
    let json = to_sorted_json(&report)?;
    write_atomic(&out.join("validation.json"), json.as_bytes())?;
    print!("{json}");
    if report.has_errors() {
        return Err(CliError::Admissibility("cloud is not admissible".into()));
    }
    Ok(())
}

pub fn cmd_compare_oracle(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    check_out_dir(out)?;
    let built = cfg.build()?;
    let background = cfg.background();
    gate_admissibility(&built)?;

    let (_sys, sol) = assemble_and_solve(&built, &background, &cfg.solver)?;
    let reference = solve_reference(&built.cloud, &built.domain, &background, &cfg.oracle.mfs())
        .map_err(|e| CliError::Oracle(e.to_string()))?;

    let half_extent = cfg.oracle.half_extent.unwrap_or_else(|| match built.domain {
        Domain::Ball { radius } => 0.9 * radius,
        Domain::FreeSpace => {
            let b = built.cloud.omega_bounds();
            b.min.abs().max().max(b.max.abs().max())
        }
    });
    let points = bulk_plane_points(&built.cloud, &built.domain, half_extent, cfg.oracle.steps);
    let report = compare(&built.cloud, &built.domain, &background, &sol, &reference, &points)
        .map_err(|e| CliError::Oracle(e.to_string()))?;

    write_json(&out.join(&cfg.oracle.report), &report)?;
    let mut meta = RunMeta::new("compare-oracle", built.cloud.len());
    meta.unvalidated_against_oracle = false;
    write_json(&out.join("run_meta.json"), &meta)?;
    println!(
        "oracle comparison over {} points: max_rel {:.3e} (threshold {:.3e})",
        report.n_points, report.max_rel, cfg.oracle.threshold
    );
    if report.max_rel > cfg.oracle.threshold {
        return Err(CliError::Oracle(format!(
            "max_rel {:.3e} exceeds threshold {:.3e}",
            report.max_rel, cfg.oracle.threshold
        )));
    }
    Ok(())
}

/// The two-layer 18-void benchmark in the ball of radius 120 with the
/// compact source (rho = 30, amplitude 6), solved directly.
pub fn cmd_reproduce_table1(out: &Path) -> Result<(), CliError> {
    check_out_dir(out)?;
    let (cloud, domain) = mesocloud::make_table1_cloud();
    let background = Background::Source(SourceSpec::uniform(30.0));
    let built = Built { cloud, domain, alpha: None };
    gate_admissibility(&built)?;

    let (_sys, sol) = assemble_and_solve(&built, &background, &config::SolverCfg::default())?;
    write_json(&out.join("table1_solution.json"), &sol)?;
    write_json(
        &out.join("table1_diagnostics.json"),
        &diagnostics_report(&sol, &built.cloud),
    )?;

    let mut csv = Vec::new();
    writeln!(csv, "index,x,y,z,radius,cx,cy,cz,cnorm").unwrap();
    for (i, (v, c)) in built.cloud.voids().iter().zip(&sol.coeffs).enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            i + 1,
            fmt_g17(v.center.x),
            fmt_g17(v.center.y),
            fmt_g17(v.center.z),
            fmt_g17(v.radius),
            fmt_g17(c.x),
            fmt_g17(c.y),
            fmt_g17(c.z),
            fmt_g17(c.norm()),
        )
        .unwrap();
    }
    write_atomic(&out.join("table1_voids.csv"), &csv)?;
    write_json(&out.join("run_meta.json"), &RunMeta::new("reproduce-table1", 18))?;
    println!(
        "reproduced the 18-void benchmark: residual {:.3e}",
        sol.residual_norm
    );
    Ok(())
}

/// The correction profile along the line `x2 = x3 = -1/(2 sqrt(3))`
/// adjacent to the volume-preserving cube cloud, for `x1` in `[2, 4]`.
pub fn cmd_reproduce_fig5(ms: &[usize], out: &Path) -> Result<(), CliError> {
    check_out_dir(out)?;
    for &m in ms {
        if !(2..=10).contains(&m) {
            return Err(CliError::Config(format!("m must lie in 2..=10, got {m}")));
        }
    }
    let side = 1.0 / 3.0_f64.sqrt();
    let offset = -0.5 * side;
    let domain = Domain::Ball { radius: 7.0 };
    let background = Background::Source(SourceSpec::uniform(2.0));

    for &m in ms {
        let spec = CloudGridSpec {
            m,
            center: Vector3::new(3.0, 0.0, 0.0),
            side,
            beta: std::f64::consts::PI / 25.0,
        };
        let alpha = mesocloud::alpha_for(m, spec.beta)
            .map_err(|e| CliError::Config(format!("grid spec: {e}")))?;
        let cloud = mesocloud::make_grid_cloud(&spec)
            .map_err(|e| CliError::Config(format!("grid spec: {e}")))?;
        let built = Built { cloud, domain, alpha: Some(alpha) };
        gate_admissibility(&built)?;
        let (_sys, sol) = assemble_and_solve(&built, &background, &config::SolverCfg::default())?;

        let samples = sample_line(
            &Vector3::new(2.0, offset, offset),
            &Vector3::new(4.0, offset, offset),
            1000,
            &built.cloud,
            &domain,
            &background,
            &sol,
        );
        let mut csv = Vec::new();
        writeln!(csv, "x1,correction").unwrap();
        for i in 0..samples.len() {
            let corr = match samples.correction[i] {
                Some(c) => fmt_g17(c),
                None => String::new(),
            };
            writeln!(csv, "{},{corr}", fmt_g17(samples.points[i].x)).unwrap();
        }
        let file = format!("fig5_m{m}.csv");
        write_atomic(&out.join(&file), &csv)?;

        let mut meta = RunMeta::new("reproduce-fig5", built.cloud.len());
        meta.alpha = Some(alpha);
        write_json(&out.join(format!("fig5_m{m}_meta.json")), &meta)?;
        println!(
            "m = {m} (N = {}): alpha = {:.6}, wrote {file} (unvalidated against oracle)",
            built.cloud.len(),
            alpha
        );
    }
    Ok(())
}
