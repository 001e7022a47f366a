//! Evaluation of the asymptotic approximation `u_N`, its correction
//! `u_N - v`, line/grid samplings and boundary-residual diagnostics.
//!
//! `u_N(x) = v(x) + sum_k C^(k) . { D^(k)(x) - Q^(k) grad_y H(x, O^(k)) }`;
//! in free space `H` vanishes and only the dipole sum remains.

use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::assembly::DipoleSolution;
use crate::geometry::{Aabb, Cloud, Domain};
use crate::kernels::{
    dipole_field_sphere, fibonacci_sphere, grad_y_h, kernel_frak_t, polarization_sphere,
    Background, KernelError,
};

/// Absolute clearance added to each radius when masking sample points.
pub const MASK_CLEARANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Asymptotic approximation at a single point. Errors if the point lies
/// inside a void or outside the domain.
pub fn eval_un(
    x: &Vector3<f64>,
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
) -> Result<f64, FieldError> {
    let mut acc = background.value(x, domain)?;
    for (k, void) in cloud.voids().iter().enumerate() {
        let c = &sol.coeffs[k];
        let mut term = c.dot(&dipole_field_sphere(x, void)?);
        if let Domain::Ball { radius } = domain {
            let gh = grad_y_h(x, &void.center, *radius)?;
            term -= c.dot(&(polarization_sphere(void.radius).matrix() * gh));
        }
        acc += term;
    }
    Ok(acc)
}

/// The correction `u_N - v` without the unperturbed part; exact zero for
/// an empty cloud.
pub fn eval_correction(
    x: &Vector3<f64>,
    cloud: &Cloud,
    domain: &Domain,
    sol: &DipoleSolution,
) -> Result<f64, FieldError> {
    let mut acc = 0.0;
    for (k, void) in cloud.voids().iter().enumerate() {
        let c = &sol.coeffs[k];
        let mut term = c.dot(&dipole_field_sphere(x, void)?);
        if let Domain::Ball { radius } = domain {
            let gh = grad_y_h(x, &void.center, *radius)?;
            term -= c.dot(&(polarization_sphere(void.radius).matrix() * gh));
        }
        acc += term;
    }
    Ok(acc)
}

/// Analytic gradient of [`eval_un`]:
/// `grad v + sum_k frakT(x, O^(k)) Q^(k) C^(k)`.
pub fn grad_un(
    x: &Vector3<f64>,
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
) -> Result<Vector3<f64>, FieldError> {
    let mut acc = background.gradient(x, domain)?;
    for (k, void) in cloud.voids().iter().enumerate() {
        let qc = polarization_sphere(void.radius).matrix() * sol.coeffs[k];
        acc += kernel_frak_t(x, &void.center, domain)? * qc;
    }
    Ok(acc)
}

/// Point-wise field samples with masking. Masked points (inside a void
/// or outside the domain) carry no values.
#[derive(Debug, Clone, Serialize)]
pub struct FieldSamples {
    pub points: Vec<Vector3<f64>>,
    pub u_n: Vec<Option<f64>>,
    pub v: Vec<Option<f64>>,
    pub correction: Vec<Option<f64>>,
    pub mask: Vec<bool>,
}

impl FieldSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_unmasked(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// RFC-4180 CSV with header `x,y,z,u_N,v,correction,mask`; floats are
    /// written with 17 significant digits so they round-trip exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,z,u_N,v,correction,mask")?;
        for i in 0..self.len() {
            let p = &self.points[i];
            let field = |v: &Option<f64>| v.map(fmt_g17).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_g17(p.x),
                fmt_g17(p.y),
                fmt_g17(p.z),
                field(&self.u_n[i]),
                field(&self.v[i]),
                field(&self.correction[i]),
                u8::from(self.mask[i]),
            )?;
        }
        Ok(())
    }
}

/// 17-significant-digit decimal formatting (round-trip safe for f64).
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn is_masked(x: &Vector3<f64>, cloud: &Cloud, domain: &Domain) -> bool {
    if !domain.contains(x) {
        return true;
    }
    cloud
        .voids()
        .iter()
        .any(|v| (x - v.center).norm() <= v.radius + MASK_CLEARANCE)
}

/// (mask, u_N, v, correction) for one evaluation point.
type SampleRow = (bool, Option<f64>, Option<f64>, Option<f64>);

fn sample_points(
    points: Vec<Vector3<f64>>,
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
) -> FieldSamples {
    let rows: Vec<SampleRow> = points
        .par_iter()
        .map(|x| {
            if is_masked(x, cloud, domain) {
                return (true, None, None, None);
            }
            let v = background.value(x, domain).ok();
            let corr = eval_correction(x, cloud, domain, sol).ok();
            match (v, corr) {
                (Some(v), Some(c)) => {
                    // store the round-tripped difference so that
                    // correction == u_N - v holds exactly in floating point
                    let u = v + c;
                    (false, Some(u), Some(v), Some(u - v))
                }
                _ => (true, None, None, None),
            }
        })
        .collect();
    let mut samples = FieldSamples {
        points,
        u_n: Vec::with_capacity(rows.len()),
        v: Vec::with_capacity(rows.len()),
        correction: Vec::with_capacity(rows.len()),
        mask: Vec::with_capacity(rows.len()),
    };
    for (mask, u, v, c) in rows {
        samples.mask.push(mask);
        samples.u_n.push(u);
        samples.v.push(v);
        samples.correction.push(c);
    }
    samples
}

/// `n` equally spaced points from `p0` to `p1` inclusive, evaluated with
/// masking.
pub fn sample_line(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    n: usize,
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
) -> FieldSamples {
    assert!(n >= 2, "a line sampling needs at least two points");
    let points = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            p0 + t * (p1 - p0)
        })
        .collect();
    sample_points(points, cloud, domain, background, sol)
}

/// Regular grid over `bounds` with `res` points per axis (an axis with a
/// single point collapses to the box midpoint, giving plane slices).
pub fn sample_grid(
    bounds: &Aabb,
    res: [usize; 3],
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
) -> FieldSamples {
    let coord = |k: usize, i: usize| {
        if res[k] <= 1 {
            0.5 * (bounds.min[k] + bounds.max[k])
        } else {
            bounds.min[k] + i as f64 / (res[k] - 1) as f64 * (bounds.max[k] - bounds.min[k])
        }
    };
    let mut points = Vec::with_capacity(res[0] * res[1] * res[2]);
    for i in 0..res[0].max(1) {
        for j in 0..res[1].max(1) {
            for k in 0..res[2].max(1) {
                points.push(Vector3::new(coord(0, i), coord(1, j), coord(2, k)));
            }
        }
    }
    sample_points(points, cloud, domain, background, sol)
}

/// Boundary discrepancy of the approximation on one void surface.
#[derive(Debug, Clone, Serialize)]
pub struct VoidResidual {
    /// `max |du_N/dn|` over the surface lattice.
    pub max_flux: f64,
    /// Surface L2 norm of the normal derivative.
    pub l2_flux: f64,
}

/// Boundary residual report: Neumann discrepancy per void and, for ball
/// domains, the maximal Dirichlet trace on the outer boundary.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub per_void: Vec<VoidResidual>,
    pub outer_max: Option<f64>,
}

/// Evaluates the normal derivative of `u_N` over a deterministic surface
/// lattice on each void (and `|u_N|` on the outer sphere for balls).
pub fn boundary_residuals(
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    sol: &DipoleSolution,
    surface_points: usize,
) -> Result<BoundaryReport, FieldError> {
    let lattice = fibonacci_sphere(surface_points.max(1));
    let mut per_void = Vec::with_capacity(cloud.len());
    for void in cloud.voids() {
        let mut max_flux = 0.0_f64;
        let mut sum_sq = 0.0;
        for n in &lattice {
            let x = void.center + void.radius * n;
            let flux = grad_un(&x, cloud, domain, background, sol)?.dot(n);
            max_flux = max_flux.max(flux.abs());
            sum_sq += flux * flux;
        }
        let area = 4.0 * std::f64::consts::PI * void.radius * void.radius;
        let l2_flux = (sum_sq / lattice.len() as f64 * area).sqrt();
        per_void.push(VoidResidual { max_flux, l2_flux });
    }
    let outer_max = match domain {
        Domain::FreeSpace => None,
        Domain::Ball { radius } => {
            let mut max_u = 0.0_f64;
            for n in &lattice {
                let x = *radius * n;
                let u = eval_un(&x, cloud, domain, background, sol)?;
                max_u = max_u.max(u.abs());
            }
            Some(max_u)
        }
    };
    Ok(BoundaryReport { per_void, outer_max })
}
