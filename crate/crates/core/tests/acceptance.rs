//! End-to-end acceptance checks. Each test prints one PASS/FAIL line so
//! the suite doubles as a release gate report:
//! `cargo test --test acceptance -- --nocapture`.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};

use mesocloud::{
    alpha_for, alpha_infinity, assemble, bulk_plane_points, compare, eval_un, make_grid_cloud,
    make_table1_cloud, sample_line, solve_direct, solve_fixed_point, solve_reference, Background,
    Cloud, CloudGridSpec, Domain, MfsConfig, SourceSpec, Void,
};
use mesocloud::kernels::{
    dipole_field_sphere, fibonacci_sphere, grad_y_h, green, h_regular, kernel_frak_t, kernel_t,
};

/// Serializes the wall-clock-budgeted tests so they do not distort each
/// other's timings when the harness runs tests in parallel.
static TIMING_LOCK: Mutex<()> = Mutex::new(());

fn report(name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {name} failed: {detail}");
}

fn cube_cloud(m: usize) -> (Cloud, Domain, Background) {
    let spec = CloudGridSpec {
        m,
        center: Vector3::new(3.0, 0.0, 0.0),
        side: 1.0 / 3.0_f64.sqrt(),
        beta: std::f64::consts::PI / 25.0,
    };
    (
        make_grid_cloud(&spec).unwrap(),
        Domain::Ball { radius: 7.0 },
        Background::Source(SourceSpec::uniform(2.0)),
    )
}

#[test]
fn criterion_1_benchmark_cloud_matches_oracle() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let start = Instant::now();

    let (cloud, domain) = make_table1_cloud();
    let bg = Background::Source(SourceSpec::uniform(30.0));
    let sys = assemble(&cloud, &domain, &bg).unwrap();
    let sol = solve_direct(&sys).unwrap();

    // 3% agreement needs far less oracle accuracy than the default; a
    // lighter source set keeps the dense least squares inside the budget
    let cfg = MfsConfig {
        sources_per_void: 48,
        source_depth: 0.2,
        collocation_per_void: 96,
        max_residual: 1e-3,
    };
    let reference = solve_reference(&cloud, &domain, &bg, &cfg).unwrap();
    let points = bulk_plane_points(&cloud, &domain, 108.0, 25);
    let rep = compare(&cloud, &domain, &bg, &sol, &reference, &points).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let pass = rep.max_rel <= 0.03 && rep.n_points >= 400 && elapsed < 60.0;
    report(
        "1 benchmark-vs-oracle",
        pass,
        &format!(
            "max_rel {:.3e} over {} points, oracle residual {:.1e}, {elapsed:.1} s",
            rep.max_rel, rep.n_points, rep.oracle_residual
        ),
    );
}

#[test]
fn criterion_2_alpha_limit() {
    let beta = std::f64::consts::PI / 25.0;
    let limit = alpha_infinity(beta).unwrap();
    let ms = [2usize, 5, 10, 50, 100];
    let alphas: Vec<f64> = ms.iter().map(|&m| alpha_for(m, beta).unwrap()).collect();
    let monotone = alphas.windows(2).all(|w| w[1] < w[0])
        && alphas.iter().all(|&a| a > limit)
        && (alphas[ms.len() - 1] - limit) < (alphas[0] - limit);
    let pass = (limit - 0.7465).abs() <= 5e-4 && monotone;
    report(
        "2 alpha-limit",
        pass,
        &format!("alpha_inf {limit:.6}, sequence {alphas:?} decreasing toward it"),
    );
}

#[test]
fn criterion_3_single_void_exact() {
    let rho = 0.7;
    let center = Vector3::new(2.0, -1.0, 0.5);
    let g = Vector3::new(0.8, -0.3, 0.5);
    let cloud = Cloud::new(vec![Void::new(center, rho).unwrap()]);
    let bg = Background::Linear(g);
    let sys = assemble(&cloud, &Domain::FreeSpace, &bg).unwrap();
    let sol = solve_direct(&sys).unwrap();

    let coeff_exact = sol.coeffs[0] == -g;
    let mut max_err = 0.0_f64;
    for n in fibonacci_sphere(200) {
        let x = center + 3.0 * rho * n;
        let d = x - center;
        let exact = g.dot(&x) + rho.powi(3) / 2.0 * g.dot(&d) / d.norm().powi(3);
        let u = eval_un(&x, &cloud, &Domain::FreeSpace, &bg, &sol).unwrap();
        max_err = max_err.max((u - exact).abs());
    }
    let pass = coeff_exact && max_err <= 1e-12;
    report(
        "3 single-void-exact",
        pass,
        &format!("C == -g exactly: {coeff_exact}, field max err {max_err:.2e}"),
    );
}

#[test]
fn criterion_4_convergence_order() {
    let centers = [Vector3::new(3.0, 0.0, 0.0), Vector3::new(4.6, 0.8, 0.0)];
    let base_radii = [0.5, 0.4];
    let bg = Background::Source(SourceSpec::uniform(1.0));
    let cfg = MfsConfig {
        sources_per_void: 144,
        source_depth: 0.15,
        collocation_per_void: 288,
        max_residual: 1e-6,
    };
    // fixed evaluation set, derived from the fattest cloud so that every
    // scaled configuration sees the same points
    let fat = Cloud::new(
        centers
            .iter()
            .zip(&base_radii)
            .map(|(c, r)| Void::new(*c, *r).unwrap())
            .collect(),
    );
    let points = bulk_plane_points(&fat, &Domain::FreeSpace, 7.0, 15);

    let scales = [1.0_f64, 0.5, 0.25];
    let mut errors = Vec::new();
    for &s in &scales {
        let cloud = Cloud::new(
            centers
                .iter()
                .zip(&base_radii)
                .map(|(c, r)| Void::new(*c, r * s).unwrap())
                .collect(),
        );
        let sys = assemble(&cloud, &Domain::FreeSpace, &bg).unwrap();
        let sol = solve_direct(&sys).unwrap();
        let reference = solve_reference(&cloud, &Domain::FreeSpace, &bg, &cfg).unwrap();
        let rep = compare(&cloud, &Domain::FreeSpace, &bg, &sol, &reference, &points).unwrap();
        errors.push(rep.max_rel);
    }
    // least-squares slope of log(err) against log(s)
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    let pass = slope >= 2.0;
    report(
        "4 convergence-order",
        pass,
        &format!("errors {errors:?} for scales {scales:?}, slope {slope:.2}"),
    );
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[test]
fn criterion_5_large_n_performance() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let (cloud, domain, bg) = cube_cloud(10);
    assert_eq!(cloud.len(), 1000);

    let start = Instant::now();
    let sys = assemble(&cloud, &domain, &bg).unwrap();
    let direct = solve_direct(&sys).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let peak = peak_rss_bytes().unwrap_or(0);

    let fixed = solve_fixed_point(&sys, 1e-12, 300).unwrap();
    let max_rel = direct
        .coeffs
        .iter()
        .zip(&fixed.coeffs)
        .map(|(a, b)| (a - b).norm() / a.norm().max(1e-300))
        .fold(0.0_f64, f64::max);

    let pass = elapsed < 30.0 && peak > 0 && peak < 1 << 30 && max_rel <= 1e-10;
    report(
        "5 large-n-performance",
        pass,
        &format!(
            "N=1000 direct solve {elapsed:.1} s, peak rss {:.0} MB, fixed-point deviation {max_rel:.2e}",
            peak as f64 / (1 << 20) as f64
        ),
    );
}

#[test]
fn criterion_6_kernel_identities() {
    let domain = Domain::Ball { radius: 9.0 };
    let pts = [
        Vector3::new(3.0, 1.0, -2.0),
        Vector3::new(-4.0, 0.5, 1.5),
        Vector3::new(0.7, -5.0, 2.0),
    ];
    let radius = 9.0;
    let mut worst_t = 0.0_f64;
    let mut worst_g = 0.0_f64;
    let mut worst_trace = 0.0_f64;
    for (i, x) in pts.iter().enumerate() {
        for y in pts.iter().skip(i + 1) {
            let t = kernel_t(x, y).unwrap();
            worst_t = worst_t
                .max(t.trace().abs())
                .max((t - t.transpose()).norm());
            let ft = kernel_frak_t(x, y, &domain).unwrap();
            let ft_rev = kernel_frak_t(y, x, &domain).unwrap();
            worst_t = worst_t.max((ft - ft_rev.transpose()).norm());
            let rel = (green(x, y, &domain).unwrap() - green(y, x, &domain).unwrap()).abs()
                / green(x, y, &domain).unwrap().abs();
            worst_g = worst_g.max(rel);
        }
        // Dirichlet trace on the outer sphere
        for n in fibonacci_sphere(50) {
            let b = radius * n;
            let scale = 1.0 / (4.0 * std::f64::consts::PI * (b - x).norm());
            worst_trace = worst_trace.max(green(&b, x, &domain).unwrap().abs() / scale);
        }
    }

    // gradient of the regular part against central differences
    let (x, y) = (pts[0], pts[1]);
    let h = 1e-5;
    let mut fd_err = 0.0_f64;
    let g = grad_y_h(&x, &y, radius).unwrap();
    for k in 0..3 {
        let mut yp = y;
        let mut ym = y;
        yp[k] += h;
        ym[k] -= h;
        let fd =
            (h_regular(&x, &yp, radius).unwrap() - h_regular(&x, &ym, radius).unwrap()) / (2.0 * h);
        fd_err = fd_err.max((g[k] - fd).abs() / g.norm());
    }

    // dipole Neumann condition: the normal derivative matrix equals the
    // identity on the void surface (rows are grad D_i . n = n_i)
    let void = Void::new(Vector3::zeros(), 1.3).unwrap();
    let mut neumann_err = 0.0_f64;
    for n in fibonacci_sphere(100) {
        let x = void.radius * n;
        let jac = mesocloud::kernels::dipole_field_sphere_jacobian(&x, &void).unwrap();
        neumann_err = neumann_err.max((jac * n - n).norm());
    }

    // harmonicity of each dipole component by finite-difference Laplacian
    let probe = Vector3::new(2.0, 1.0, -0.5);
    let hh = 1e-3;
    let d_at = |p: &Vector3<f64>| dipole_field_sphere(p, &void).unwrap();
    let mut lap_err = 0.0_f64;
    for k in 0..3 {
        let mut lap = -6.0 * d_at(&probe)[k];
        for a in 0..3 {
            let mut p = probe;
            let mut q = probe;
            p[a] += hh;
            q[a] -= hh;
            lap += d_at(&p)[k] + d_at(&q)[k];
        }
        lap_err = lap_err.max((lap / (hh * hh)).abs());
    }

    let pass = worst_t <= 1e-14
        && worst_g <= 1e-12
        && worst_trace <= 1e-12
        && fd_err <= 1e-6
        && neumann_err <= 1e-10
        && lap_err <= 1e-4;
    report(
        "6 kernel-identities",
        pass,
        &format!(
            "T {worst_t:.1e}, G reciprocity {worst_g:.1e}, trace {worst_trace:.1e}, grad FD {fd_err:.1e}, Neumann {neumann_err:.1e}, Laplacian {lap_err:.1e}"
        ),
    );
}

#[test]
fn criterion_7_system_invariants() {
    let domain = Domain::Ball { radius: 20.0 };
    let bg = Background::Source(SourceSpec::uniform(2.0));
    let voids = vec![
        Void::new(Vector3::new(6.0, 0.0, 0.0), 0.6).unwrap(),
        Void::new(Vector3::new(9.0, 3.0, -1.0), 0.5).unwrap(),
        Void::new(Vector3::new(5.0, -4.0, 2.0), 0.7).unwrap(),
        Void::new(Vector3::new(11.0, -2.0, 3.0), 0.4).unwrap(),
    ];
    let cloud = Cloud::new(voids.clone());
    let sol = solve_direct(&assemble(&cloud, &domain, &bg).unwrap()).unwrap();

    // permutation equivariance
    let perm = [2usize, 0, 3, 1];
    let permuted = Cloud::new(perm.iter().map(|&i| voids[i].clone()).collect());
    let sol_p = solve_direct(&assemble(&permuted, &domain, &bg).unwrap()).unwrap();
    let perm_err = perm
        .iter()
        .enumerate()
        .map(|(k, &i)| (sol_p.coeffs[k] - sol.coeffs[i]).norm())
        .fold(0.0_f64, f64::max);

    // rotation equivariance: rotating the whole configuration rotates C
    let rot = Rotation3::from_euler_angles(0.4, -0.7, 1.1);
    let rmat: Matrix3<f64> = *rot.matrix();
    let rotated = Cloud::new(
        voids
            .iter()
            .map(|v| Void::new(rmat * v.center, v.radius).unwrap())
            .collect(),
    );
    let sol_r = solve_direct(&assemble(&rotated, &domain, &bg).unwrap()).unwrap();
    let rot_err = sol
        .coeffs
        .iter()
        .zip(&sol_r.coeffs)
        .map(|(c, cr)| (rmat * c - cr).norm() / c.norm())
        .fold(0.0_f64, f64::max);

    // linearity in the source amplitude
    let bg5 = Background::Source(SourceSpec::new(2.0, 30.0));
    let sol5 = solve_direct(&assemble(&cloud, &domain, &bg5).unwrap()).unwrap();
    let lin_err = sol
        .coeffs
        .iter()
        .zip(&sol5.coeffs)
        .map(|(c, c5)| (5.0 * c - c5).norm() / (5.0 * c.norm()))
        .fold(0.0_f64, f64::max);

    // N = 1 reduction
    let single = Cloud::new(vec![voids[0].clone()]);
    let sys1 = assemble(&single, &domain, &bg).unwrap();
    let g1 = sys1.theta().fixed_rows::<3>(0).into_owned();
    let sol1 = solve_direct(&sys1).unwrap();
    let n1_err = (sol1.coeffs[0] + g1).norm();

    let pass = perm_err <= 1e-12
        && rot_err <= 1e-10
        && lin_err <= 1e-12
        && n1_err == 0.0
        && sol.residual_norm <= 1e-10;
    report(
        "7 system-invariants",
        pass,
        &format!(
            "permutation {perm_err:.1e}, rotation {rot_err:.1e}, linearity {lin_err:.1e}, N=1 {n1_err:.1e}, residual {:.1e}",
            sol.residual_norm
        ),
    );
}

#[test]
fn criterion_8_profile_localization() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let offset = -0.5 / 3.0_f64.sqrt();
    let p0 = Vector3::new(2.0, offset, offset);
    let p1 = Vector3::new(4.0, offset, offset);

    let profile = |m: usize| {
        let (cloud, domain, bg) = cube_cloud(m);
        let sol = solve_direct(&assemble(&cloud, &domain, &bg).unwrap()).unwrap();
        let samples = sample_line(&p0, &p1, 401, &cloud, &domain, &bg, &sol);
        samples
            .correction
            .iter()
            .map(|c| c.expect("the profile line stays outside every void"))
            .collect::<Vec<f64>>()
    };

    let profiles: Vec<Vec<f64>> = [2usize, 5, 10].iter().map(|&m| profile(m)).collect();
    let x1 = |i: usize| 2.0 + 2.0 * i as f64 / 400.0;

    // localization: the peak lies over the cube (x1 in [2.71, 3.29]) and
    // dominates the profile ends
    let mut localized = true;
    for prof in &profiles {
        let (imax, peak) = prof
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.abs()))
            .fold((0, 0.0_f64), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ends = prof[0].abs().max(prof[400].abs());
        localized &= (2.6..=3.4).contains(&x1(imax)) && peak > 2.0 * ends;
    }

    let end_dev = |a: &Vec<f64>, b: &Vec<f64>, i: usize| (a[i] - b[i]).abs() / b[i].abs();
    let dev0 = end_dev(&profiles[1], &profiles[2], 0);
    let dev1 = end_dev(&profiles[1], &profiles[2], 400);

    let pass = localized && dev0 <= 0.10 && dev1 <= 0.10;
    report(
        "8 profile-localization",
        pass,
        &format!("peaks localized: {localized}, m=5 vs m=10 endpoint deviation {dev0:.3} / {dev1:.3}"),
    );
}
