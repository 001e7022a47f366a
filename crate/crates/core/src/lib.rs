//! Mesoscale dipole asymptotics for the Poisson equation in 3-D domains
//! perforated by many small spherical voids.
//!
//! The field in the perforated domain is approximated by the unperturbed
//! solution plus a linear combination of dipole fields, one per void,
//! whose vector coefficients solve the dense `3N x 3N` system
//! `(I + S Q) C = -Theta`. The crate provides:
//!
//! - [`geometry`]: void clouds, admissibility validation and the
//!   volume-preserving cube-cloud generator;
//! - [`kernels`]: the closed-form analytic ingredients (unperturbed
//!   solution, Green's functions, interaction kernels, dipole fields,
//!   polarization matrices);
//! - [`assembly`]: system assembly, dense and matrix-free solvers,
//!   well-posedness diagnostics;
//! - [`field`]: evaluation of the approximation, samplings and boundary
//!   residuals;
//! - [`oracle`]: an independent method-of-fundamental-solutions reference
//!   solver for validation at small to moderate `N`.

pub mod assembly;
pub mod field;
pub mod geometry;
pub mod kernels;
pub mod oracle;

pub use assembly::{
    assemble, assemble_with, diagnostics_report, solve_direct, solve_fixed_point, AssemblyError,
    AssemblyOptions, DiagnosticsReport, DipoleSolution, InteractionSystem,
};
pub use field::{
    boundary_residuals, eval_correction, eval_un, grad_un, sample_grid, sample_line,
    BoundaryReport, FieldError, FieldSamples,
};
pub use geometry::{
    alpha_for, alpha_infinity, make_grid_cloud, make_table1_cloud, validate_cloud,
    validate_cloud_with, Aabb, Cloud, CloudGridSpec, Domain, GeometryError, ValidationReport,
    Violation, Void,
};
pub use kernels::{Background, KernelError, PolarizationMatrix, SourceSpec};
pub use oracle::{
    bulk_plane_points, compare, solve_reference, ErrorReport, MfsConfig, OracleError,
    ReferenceSolution,
};
