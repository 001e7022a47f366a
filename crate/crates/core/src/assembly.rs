//! Assembly and solution of the 3N x 3N dipole-coefficient system
//! `(I + S Q) C = -Theta`.
//!
//! `S` holds the 3x3 interaction blocks (the free-space kernel `T` or the
//! domain kernel `frakT`, zero on the diagonal), `Q` is the block-diagonal
//! matrix of polarization matrices and `Theta` stacks the unperturbed
//! gradient at the void centres. Both a dense LU solve and a matrix-free
//! fixed-point iteration are provided; above a configurable size the
//! interaction blocks are recomputed on the fly instead of being stored.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Cloud, Domain};
use crate::kernels::{
    self, kernel_frak_t, polarization_sphere, Background, KernelError,
};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("source ball (rho = {rho}) intersects void {j}; the source support must be separated from the cloud")]
    SourceOverlapsCloud { j: usize, rho: f64 },
    #[error("voids {i} and {j} have coincident centres")]
    CoincidentCenters { i: usize, j: usize },
    #[error("void centre {j} lies outside the domain")]
    VoidOutsideDomain { j: usize },
    #[error("system is numerically singular (residual estimate {residual:e}); the mesoscale regime is violated")]
    SingularSystem { residual: f64 },
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    /// Above this void count the interaction matrix is not stored; the
    /// fixed-point matvec recomputes blocks on the fly.
    pub matrix_free_threshold: usize,
    /// Grid resolution per axis for the midpoint quadrature of
    /// `||grad v||^2_{L2(omega)}`.
    pub norm_grid: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { matrix_free_threshold: 2000, norm_grid: 64 }
    }
}

/// The assembled system, ready for [`solve_direct`] or
/// [`solve_fixed_point`].
pub struct InteractionSystem {
    cloud: Cloud,
    domain: Domain,
    background: Background,
    /// Dense interaction matrix; `None` in matrix-free mode.
    s: Option<DMatrix<f64>>,
    /// Per-void polarization matrices.
    q: Vec<Matrix3<f64>>,
    theta: DVector<f64>,
    options: AssemblyOptions,
}

/// Solved dipole coefficients plus solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DipoleSolution {
    pub coeffs: Vec<Vector3<f64>>,
    /// `||(I + S Q) C + Theta||_2 / ||Theta||_2`.
    pub residual_norm: f64,
    /// Largest eigenvalue of `-Q`; `2 pi max(rho)^3` for sphere clouds.
    pub lambda_max: f64,
    /// `lambda_max / d^3`; the solvability condition requires this to be
    /// small. Zero for a single void (`d` infinite).
    pub wellposed_ratio: f64,
    /// `sum |C^(j)|^2 * d^3 / ||grad v||^2_{L2(omega)}`; infinite for a
    /// single void.
    pub coeff_bound_ratio: f64,
}

pub fn assemble(
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
) -> Result<InteractionSystem, AssemblyError> {
    assemble_with(cloud, domain, background, AssemblyOptions::default())
}

pub fn assemble_with(
    cloud: &Cloud,
    domain: &Domain,
    background: &Background,
    options: AssemblyOptions,
) -> Result<InteractionSystem, AssemblyError> {
    let voids = cloud.voids();
    let n = voids.len();
    let scale = domain.length_scale(cloud.eps() + 2.0 * cloud.d().min(1e30));

    for (j, v) in voids.iter().enumerate() {
        if !domain.contains(&v.center) {
            return Err(AssemblyError::VoidOutsideDomain { j });
        }
        if matches!(domain, Domain::Ball { radius } if v.center.norm() < 1e-9 * radius) {
            // the image-form kernels degenerate for a void at the centre
            return Err(KernelError::CenterImage.into());
        }
    }
    // coincident centres would make the kernels singular; validate_cloud
    // also reports overlap, this duplicates the check at the solver gate
    for i in 0..n {
        for j in (i + 1)..n {
            if (voids[i].center - voids[j].center).norm() < kernels::NEAR_COINCIDENT_REL * scale {
                return Err(AssemblyError::CoincidentCenters { i, j });
            }
        }
    }
    if let Some(src) = background.source() {
        for (j, v) in voids.iter().enumerate() {
            if v.center.norm() < src.rho + v.radius {
                return Err(AssemblyError::SourceOverlapsCloud { j, rho: src.rho });
            }
        }
    }

    let mut theta = DVector::zeros(3 * n);
    for (j, v) in voids.iter().enumerate() {
        let g = background.gradient(&v.center, domain)?;
        theta.fixed_rows_mut::<3>(3 * j).copy_from(&g);
    }

    let q: Vec<Matrix3<f64>> = voids
        .iter()
        .map(|v| *polarization_sphere(v.radius).matrix())
        .collect();

    let s = if n <= options.matrix_free_threshold {
        Some(build_dense_s(cloud, domain))
    } else {
        None
    };

    Ok(InteractionSystem {
        cloud: cloud.clone(),
        domain: *domain,
        background: background.clone(),
        s,
        q,
        theta,
        options,
    })
}

fn interaction_block(cloud: &Cloud, domain: &Domain, i: usize, j: usize) -> Matrix3<f64> {
    if i == j {
        return Matrix3::zeros();
    }
    let voids = cloud.voids();
    kernel_frak_t(&voids[i].center, &voids[j].center, domain)
        .expect("kernel preconditions were validated at assembly")
}

fn build_dense_s(cloud: &Cloud, domain: &Domain) -> DMatrix<f64> {
    let n = cloud.len();
    let n3 = 3 * n;
    let mut s = DMatrix::zeros(n3, n3);
    // column-major: chunks of 3 columns form block-column j
    s.as_mut_slice()
        .par_chunks_mut(3 * n3)
        .enumerate()
        .for_each(|(j, chunk)| {
            for i in 0..n {
                let block = interaction_block(cloud, domain, i, j);
                for b in 0..3 {
                    for a in 0..3 {
                        chunk[b * n3 + 3 * i + a] = block[(a, b)];
                    }
                }
            }
        });
    s
}

impl InteractionSystem {
    pub fn n_voids(&self) -> usize {
        self.cloud.len()
    }

    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Interaction block `S_ij` (stored or recomputed).
    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        match &self.s {
            Some(s) => s.fixed_view::<3, 3>(3 * i, 3 * j).into_owned(),
            None => interaction_block(&self.cloud, &self.domain, i, j),
        }
    }

    pub fn is_matrix_free(&self) -> bool {
        self.s.is_none()
    }

    /// `y = S Q c` without forming `S Q`; the per-row summation order is
    /// fixed, so the result is independent of the thread count.
    fn matvec_sq(&self, c: &DVector<f64>) -> DVector<f64> {
        let n = self.n_voids();
        let mut w = DVector::zeros(3 * n);
        for j in 0..n {
            let cj: Vector3<f64> = c.fixed_rows::<3>(3 * j).into_owned();
            w.fixed_rows_mut::<3>(3 * j).copy_from(&(self.q[j] * cj));
        }
        match &self.s {
            Some(s) => s * w,
            None => {
                let rows: Vec<Vector3<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut acc = Vector3::zeros();
                        for j in 0..n {
                            if i == j {
                                continue;
                            }
                            let wj: Vector3<f64> = w.fixed_rows::<3>(3 * j).into_owned();
                            acc += interaction_block(&self.cloud, &self.domain, i, j) * wj;
                        }
                        acc
                    })
                    .collect();
                let mut y = DVector::zeros(3 * n);
                for (i, r) in rows.iter().enumerate() {
                    y.fixed_rows_mut::<3>(3 * i).copy_from(r);
                }
                y
            }
        }
    }

    fn relative_residual(&self, c: &DVector<f64>) -> f64 {
        let r = c + self.matvec_sq(c) + &self.theta;
        let denom = self.theta.norm().max(f64::MIN_POSITIVE);
        r.norm() / denom
    }

    fn make_solution(&self, c: DVector<f64>, residual_norm: f64) -> DipoleSolution {
        let n = self.n_voids();
        let coeffs: Vec<Vector3<f64>> = (0..n)
            .map(|j| c.fixed_rows::<3>(3 * j).into_owned())
            .collect();
        // exact eigenvalue for sphere clouds: 2 pi rho^3
        let lambda_max = self
            .cloud
            .voids()
            .iter()
            .map(|v| 2.0 * std::f64::consts::PI * v.radius.powi(3))
            .fold(0.0, f64::max);
        let d3 = self.cloud.d().powi(3);
        let wellposed_ratio = if d3.is_finite() { lambda_max / d3 } else { 0.0 };
        let coeff_sq: f64 = coeffs.iter().map(|c| c.norm_squared()).sum();
        let norm_sq = self.grad_v_norm_sq_omega();
        let coeff_bound_ratio = coeff_sq * d3 / norm_sq;
        DipoleSolution {
            coeffs,
            residual_norm,
            lambda_max,
            wellposed_ratio,
            coeff_bound_ratio,
        }
    }

    /// Midpoint quadrature of `||grad v||^2_{L2}` over the cloud's
    /// enclosing box.
    pub fn grad_v_norm_sq_omega(&self) -> f64 {
        let bounds = self.cloud.omega_bounds();
        let vol = bounds.volume();
        if vol == 0.0 {
            return 0.0;
        }
        if let Background::Linear(g) = &self.background {
            return g.norm_squared() * vol;
        }
        let n = self.options.norm_grid;
        let ext = bounds.max - bounds.min;
        let cell = vol / (n * n * n) as f64;
        let sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        let x = bounds.min
                            + Vector3::new(
                                (i as f64 + 0.5) / n as f64 * ext.x,
                                (j as f64 + 0.5) / n as f64 * ext.y,
                                (k as f64 + 0.5) / n as f64 * ext.z,
                            );
                        if let Ok(g) = self.background.gradient(&x, &self.domain) {
                            acc += g.norm_squared();
                        }
                    }
                }
                acc
            })
            .collect();
        sums.iter().sum::<f64>() * cell
    }
}

/// Dense LU factorization solve of `(I + S Q) C = -Theta`.
///
/// In matrix-free mode the full matrix is materialized for the
/// factorization; use [`solve_fixed_point`] to stay at `O(N)` memory.
pub fn solve_direct(sys: &InteractionSystem) -> Result<DipoleSolution, AssemblyError> {
    let n = sys.n_voids();
    if n == 0 {
        return Ok(sys.make_solution(DVector::zeros(0), 0.0));
    }
    let n3 = 3 * n;
    let mut a = match &sys.s {
        Some(s) => s.clone(),
        None => build_dense_s(&sys.cloud, &sys.domain),
    };
    // right-multiply each block column by Q_j, then add the identity
    for j in 0..n {
        let block = a.view((0, 3 * j), (n3, 3)) * sys.q[j];
        a.view_mut((0, 3 * j), (n3, 3)).copy_from(&block);
    }
    for k in 0..n3 {
        a[(k, k)] += 1.0;
    }
    let rhs = -&sys.theta;
    let c = a
        .lu()
        .solve(&rhs)
        .ok_or(AssemblyError::SingularSystem { residual: f64::INFINITY })?;
    let residual = sys.relative_residual(&c);
    if !residual.is_finite() || residual > 1e-6 {
        return Err(AssemblyError::SingularSystem { residual });
    }
    Ok(sys.make_solution(c, residual))
}

/// Fixed-point iteration `C <- -Theta - S Q C`, converging when the
/// spectral radius of `S Q` is below one (the well-posed mesoscale
/// regime). One `O(N^2)` matvec per iteration, matrix-free capable.
pub fn solve_fixed_point(
    sys: &InteractionSystem,
    tol: f64,
    max_iter: usize,
) -> Result<DipoleSolution, AssemblyError> {
    let n = sys.n_voids();
    if n == 0 {
        return Ok(sys.make_solution(DVector::zeros(0), 0.0));
    }
    let mut c = -&sys.theta;
    let mut best = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = -&sys.theta - sys.matvec_sq(&c);
        c = next;
        let residual = sys.relative_residual(&c);
        if residual <= tol {
            return Ok(sys.make_solution(c, residual));
        }
        if !residual.is_finite() || residual > 1e6 * best.min(1.0) {
            return Err(AssemblyError::NotConverged { iterations: iter, residual });
        }
        best = best.min(residual);
    }
    Err(AssemblyError::NotConverged {
        iterations: max_iter,
        residual: sys.relative_residual(&c),
    })
}

/// Well-posedness and coefficient-bound diagnostics. The theoretical
/// constants are unspecified, so everything is reported raw and nothing
/// is asserted.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub n_voids: usize,
    pub eps: f64,
    pub d: f64,
    pub residual_norm: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `lambda_max / d^3` (Neumann-series contraction indicator).
    pub wellposed_ratio: f64,
    /// `sum |C|^2 d^3 / ||grad v||^2`; the coefficient estimate says this
    /// stays bounded. Infinite (reported as null in JSON) for N = 1.
    pub coeff_bound_ratio: f64,
    /// Measured `lambda_max / eps^3` (upper polarization eigenvalue ratio).
    pub eigen_ratio_upper: f64,
    /// Measured `lambda_min / eps^3` (lower polarization eigenvalue ratio).
    pub eigen_ratio_lower: f64,
}

pub fn diagnostics_report(sol: &DipoleSolution, cloud: &Cloud) -> DiagnosticsReport {
    let lambda_min = cloud
        .voids()
        .iter()
        .map(|v| 2.0 * std::f64::consts::PI * v.radius.powi(3))
        .fold(f64::INFINITY, f64::min);
    let eps3 = cloud.eps().powi(3);
    DiagnosticsReport {
        n_voids: cloud.len(),
        eps: cloud.eps(),
        d: cloud.d(),
        residual_norm: sol.residual_norm,
        lambda_max: sol.lambda_max,
        lambda_min,
        wellposed_ratio: sol.wellposed_ratio,
        coeff_bound_ratio: sol.coeff_bound_ratio,
        eigen_ratio_upper: sol.lambda_max / eps3,
        eigen_ratio_lower: lambda_min / eps3,
    }
}
