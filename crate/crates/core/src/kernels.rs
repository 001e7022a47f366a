//! Closed-form analytic ingredients: the unperturbed solution `v`, the
//! free-space and ball Green's functions with their regular part `H`,
//! the dipole interaction kernels, dipole fields and polarization
//! matrices for spherical voids.
//!
//! For the ball of radius `R` the regular part is evaluated through the
//! symmetric form `H(x, y) = R / (4 pi psi)` with
//! `psi^2 = |x|^2 |y|^2 - 2 R^2 x.y + R^4`, which is algebraically equal
//! to the Kelvin-image expression `R / (4 pi |y| |x - yhat|)`,
//! `yhat = R^2 y / |y|^2`, but stays well conditioned near the centre and
//! makes the reciprocity `H(x, y) = H(y, x)` manifest.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Void};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Relative threshold below which two evaluation points are treated as
/// coincident and rejected instead of producing infinities.
pub const NEAR_COINCIDENT_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("point at distance {r} lies outside the ball of radius {radius}")]
    OutsideDomain { r: f64, radius: f64 },
    #[error("evaluation points coincide (separation {dist:e} below threshold {threshold:e})")]
    CoincidentPoints { dist: f64, threshold: f64 },
    #[error("image point undefined for a source at the ball centre; offset it by at least 1e-9 R")]
    CenterImage,
    #[error("point at distance {dist} from the void centre lies inside the void of radius {radius}")]
    InsideVoid { dist: f64, radius: f64 },
}

/// Uniform source of given amplitude supported on the ball `|x| < rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub rho: f64,
    pub amplitude: f64,
}

impl SourceSpec {
    pub fn new(rho: f64, amplitude: f64) -> Self {
        Self { rho, amplitude }
    }

    /// The benchmark source: amplitude 6 on `|x| < rho`.
    pub fn uniform(rho: f64) -> Self {
        Self { rho, amplitude: 6.0 }
    }
}

/// The unperturbed field driving the dipole system. Either the
/// source-driven solution `v` of the Poisson problem, or a uniform
/// background gradient `v = g.x` used for oracle-free exactness tests
/// (the algebraic system only consumes `grad v` at void centres, so both
/// modes exercise the identical solve path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Source(SourceSpec),
    Linear(Vector3<f64>),
}

impl Background {
    pub fn value(&self, x: &Vector3<f64>, domain: &Domain) -> Result<f64, KernelError> {
        match self {
            Background::Source(s) => v_eval(x, s, domain),
            Background::Linear(g) => {
                check_in_domain(x, domain)?;
                Ok(g.dot(x))
            }
        }
    }

    pub fn gradient(&self, x: &Vector3<f64>, domain: &Domain) -> Result<Vector3<f64>, KernelError> {
        match self {
            Background::Source(s) => grad_v(x, s, domain),
            Background::Linear(g) => {
                check_in_domain(x, domain)?;
                Ok(*g)
            }
        }
    }

    pub fn source(&self) -> Option<&SourceSpec> {
        match self {
            Background::Source(s) => Some(s),
            Background::Linear(_) => None,
        }
    }
}

fn check_in_domain(x: &Vector3<f64>, domain: &Domain) -> Result<(), KernelError> {
    if let Domain::Ball { radius } = domain {
        let r = x.norm();
        if r > radius * (1.0 + 1e-12) {
            return Err(KernelError::OutsideDomain { r, radius: *radius });
        }
    }
    Ok(())
}

/// Unperturbed solution of `-lap v = f` for the uniform ball source.
///
/// Ball of radius `R` (zero Dirichlet data), amplitude 6:
/// `rho^2 (3 - 2 rho / R) - |x|^2` inside the source,
/// `2 rho^3 (1/|x| - 1/R)` outside. Free space: the Newtonian potential
/// of the same source, decaying at infinity. A general amplitude scales
/// both linearly.
pub fn v_eval(x: &Vector3<f64>, source: &SourceSpec, domain: &Domain) -> Result<f64, KernelError> {
    check_in_domain(x, domain)?;
    let r = x.norm();
    let rho = source.rho;
    let scale = source.amplitude / 6.0;
    let value = match domain {
        Domain::Ball { radius } => {
            if r < rho {
                rho * rho * (3.0 - 2.0 * rho / radius) - r * r
            } else {
                2.0 * rho.powi(3) * (1.0 / r - 1.0 / radius)
            }
        }
        Domain::FreeSpace => {
            if r < rho {
                3.0 * rho * rho - r * r
            } else {
                2.0 * rho.powi(3) / r
            }
        }
    };
    Ok(scale * value)
}

/// Analytic gradient of [`v_eval`]. Outside the source the field is
/// radial with `|grad v| = (amplitude/3) rho^3 / |x|^2` in both domains
/// (the `R`-dependent term of the ball solution is constant).
pub fn grad_v(
    x: &Vector3<f64>,
    source: &SourceSpec,
    domain: &Domain,
) -> Result<Vector3<f64>, KernelError> {
    check_in_domain(x, domain)?;
    let r = x.norm();
    let rho = source.rho;
    let third = source.amplitude / 3.0;
    if r < rho {
        Ok(-third * x)
    } else {
        Ok(-third * rho.powi(3) / r.powi(3) * x)
    }
}

fn check_separation(x: &Vector3<f64>, y: &Vector3<f64>, scale: f64) -> Result<f64, KernelError> {
    let dist = (x - y).norm();
    let threshold = NEAR_COINCIDENT_REL * scale;
    if dist < threshold {
        return Err(KernelError::CoincidentPoints { dist, threshold });
    }
    Ok(dist)
}

fn length_scale(x: &Vector3<f64>, y: &Vector3<f64>, domain: &Domain) -> f64 {
    domain.length_scale(x.norm().max(y.norm()))
}

/// `psi(x, y) = sqrt(|x|^2 |y|^2 - 2 R^2 x.y + R^4)`, so that the
/// regular part is `H = R / (4 pi psi)`.
fn psi(x: &Vector3<f64>, y: &Vector3<f64>, radius: f64) -> f64 {
    let r2 = radius * radius;
    (x.norm_squared() * y.norm_squared() - 2.0 * r2 * x.dot(y) + r2 * r2).sqrt()
}

fn check_center(y: &Vector3<f64>, radius: f64) -> Result<(), KernelError> {
    if y.norm() < NEAR_COINCIDENT_REL * radius {
        return Err(KernelError::CenterImage);
    }
    Ok(())
}

/// Regular part of the ball Green's function,
/// `H(x, y) = R / (4 pi |y| |x - yhat|)`.
pub fn h_regular(x: &Vector3<f64>, y: &Vector3<f64>, radius: f64) -> Result<f64, KernelError> {
    check_center(y, radius)?;
    Ok(radius / (FOUR_PI * psi(x, y, radius)))
}

/// Green's function of the domain: `1/(4 pi |x-y|)` in free space,
/// minus the Kelvin-image regular part in the ball (vanishing on `|x| = R`).
pub fn green(x: &Vector3<f64>, y: &Vector3<f64>, domain: &Domain) -> Result<f64, KernelError> {
    check_in_domain(x, domain)?;
    check_in_domain(y, domain)?;
    let dist = check_separation(x, y, length_scale(x, y, domain))?;
    let newtonian = 1.0 / (FOUR_PI * dist);
    match domain {
        Domain::FreeSpace => Ok(newtonian),
        Domain::Ball { radius } => Ok(newtonian - h_regular(x, y, *radius)?),
    }
}

/// Analytic gradient of `H` in its second argument:
/// `grad_y H = -R (|x|^2 y - R^2 x) / (4 pi psi^3)`.
pub fn grad_y_h(
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    radius: f64,
) -> Result<Vector3<f64>, KernelError> {
    check_center(y, radius)?;
    let p = psi(x, y, radius);
    let a = x.norm_squared() * y - radius * radius * x;
    Ok(-radius / (FOUR_PI * p.powi(3)) * a)
}

/// Gradient of `H` in its first argument; by reciprocity this is
/// [`grad_y_h`] with the arguments swapped.
pub fn grad_x_h(
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    radius: f64,
) -> Result<Vector3<f64>, KernelError> {
    grad_y_h(y, x, radius)
}

/// Mixed Hessian `(grad_x (x) grad_y) H` of the regular part, entry
/// `(i, j) = d^2 H / dx_i dy_j`.
pub fn hessian_xy_h(
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    radius: f64,
) -> Result<Matrix3<f64>, KernelError> {
    check_center(y, radius)?;
    let r2 = radius * radius;
    let p = psi(x, y, radius);
    let p3 = p.powi(3);
    let p5 = p3 * p * p;
    let a = x.norm_squared() * y - r2 * x; // psi * grad_y psi
    let b = y.norm_squared() * x - r2 * y; // psi * grad_x psi
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let da = 2.0 * x[i] * y[j] - if i == j { r2 } else { 0.0 };
            m[(i, j)] = -radius / FOUR_PI * (da / p3 - 3.0 * a[j] * b[i] / p5);
        }
    }
    Ok(m)
}

/// Free-space dipole interaction kernel: the mixed Hessian of
/// `1/(4 pi |z - w|)`, `T(x, y) = (I - 3 rhat rhat^T) / (4 pi |r|^3)`
/// with `r = x - y`. Symmetric, trace-free and even in `r`.
pub fn kernel_t(x: &Vector3<f64>, y: &Vector3<f64>) -> Result<Matrix3<f64>, KernelError> {
    let scale = x.norm().max(y.norm()).max(1.0);
    let dist = check_separation(x, y, scale)?;
    let rhat = (x - y) / dist;
    let m = (Matrix3::identity() - 3.0 * rhat * rhat.transpose()) / (FOUR_PI * dist.powi(3));
    Ok(m)
}

/// Interaction kernel of the domain: the mixed Hessian of its Green's
/// function. Equals [`kernel_t`] in free space; in the ball the image
/// correction breaks block symmetry but keeps the reciprocity
/// `frakT(x, y) = frakT(y, x)^T`.
pub fn kernel_frak_t(
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    domain: &Domain,
) -> Result<Matrix3<f64>, KernelError> {
    match domain {
        Domain::FreeSpace => kernel_t(x, y),
        Domain::Ball { radius } => {
            check_in_domain(x, domain)?;
            check_in_domain(y, domain)?;
            Ok(kernel_t(x, y)? - hessian_xy_h(x, y, *radius)?)
        }
    }
}

/// Gradient in `x` of the domain Green's function; the MFS oracle uses
/// this as its Neumann collocation kernel.
pub fn grad_x_green(
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    domain: &Domain,
) -> Result<Vector3<f64>, KernelError> {
    check_in_domain(x, domain)?;
    check_in_domain(y, domain)?;
    let dist = check_separation(x, y, length_scale(x, y, domain))?;
    let newtonian = -(x - y) / (FOUR_PI * dist.powi(3));
    match domain {
        Domain::FreeSpace => Ok(newtonian),
        Domain::Ball { radius } => Ok(newtonian - grad_x_h(x, y, *radius)?),
    }
}

/// The three dipole fields of a spherical void, stacked as a vector:
/// the exact exterior Neumann solution
/// `D(x) = -(rho^3 / 2) (x - O) / |x - O|^3`, whose normal derivative on
/// the sphere equals the outward normal componentwise.
pub fn dipole_field_sphere(x: &Vector3<f64>, void: &Void) -> Result<Vector3<f64>, KernelError> {
    let r = x - void.center;
    let dist = r.norm();
    if dist < void.radius * (1.0 - 1e-12) {
        return Err(KernelError::InsideVoid { dist, radius: void.radius });
    }
    Ok(-(void.radius.powi(3) / 2.0) / dist.powi(3) * r)
}

/// Gradient matrix of the dipole fields: row `i` is `grad D_i`. For the
/// sphere this is `(rho^3 / 2) (3 rhat rhat^T - I) / |r|^3`, i.e.
/// `Q T(x, O)` with the sphere polarization matrix `Q = -2 pi rho^3 I`.
pub fn dipole_field_sphere_jacobian(
    x: &Vector3<f64>,
    void: &Void,
) -> Result<Matrix3<f64>, KernelError> {
    let r = x - void.center;
    let dist = r.norm();
    if dist < void.radius * (1.0 - 1e-12) {
        return Err(KernelError::InsideVoid { dist, radius: void.radius });
    }
    let rhat = r / dist;
    Ok(void.radius.powi(3) / 2.0 * (3.0 * rhat * rhat.transpose() - Matrix3::identity())
        / dist.powi(3))
}

/// A 3x3 symmetric negative-definite polarization matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationMatrix {
    matrix: Matrix3<f64>,
}

#[derive(Debug, Error)]
pub enum PolarizationError {
    #[error("polarization matrix must be symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("polarization matrix must be negative definite (largest eigenvalue {0:e})")]
    NotNegativeDefinite(f64),
}

impl PolarizationMatrix {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self, PolarizationError> {
        let asym = (matrix - matrix.transpose()).norm();
        if asym > 1e-12 * matrix.norm().max(1.0) {
            return Err(PolarizationError::NotSymmetric(asym));
        }
        let eig = matrix.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max >= 0.0 {
            return Err(PolarizationError::NotNegativeDefinite(max));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Largest eigenvalue of `-Q` (positive).
    pub fn lambda_max(&self) -> f64 {
        (-self.matrix)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest eigenvalue of `-Q` (positive).
    pub fn lambda_min(&self) -> f64 {
        (-self.matrix)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Polarization matrix of a sphere: `-2 pi rho^3 I`, exactly.
pub fn polarization_sphere(radius: f64) -> PolarizationMatrix {
    PolarizationMatrix {
        matrix: Matrix3::identity() * (-2.0 * std::f64::consts::PI * radius.powi(3)),
    }
}

/// Deterministic, near-uniform lattice of `n` points on the unit sphere
/// (spherical Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden_angle * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
