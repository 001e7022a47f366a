//! Void clouds, domains and the non-uniform cube-cloud generator.
//!
//! A [`Cloud`] is an ordered list of spherical voids together with the two
//! scale parameters that control the mesoscale regime: `eps`, the largest
//! void diameter, and `d`, half the smallest centre spacing. Admissibility
//! (`eps < c*d`, pairwise disjointness, containment in the domain) is
//! checked by [`validate_cloud`]; violations are reported, not fatal.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("void radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("grid size m must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("cube-root argument {0} is not positive; beta is too small for this m")]
    NonPositiveRadicand(f64),
    #[error("grid side length must be positive, got {0}")]
    InvalidSide(f64),
    #[error("volume fraction beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),
}

/// One spherical perforation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Void {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Void {
    pub fn new(center: Vector3<f64>, radius: f64) -> Result<Self, GeometryError> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn volume(&self) -> f64 {
        let e = self.max - self.min;
        e.x.max(0.0) * e.y.max(0.0) * e.z.max(0.0)
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

/// The unperturbed domain: free space, or a ball of radius `R` centred at
/// the origin with a homogeneous Dirichlet outer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    FreeSpace,
    Ball { radius: f64 },
}

impl Domain {
    /// Characteristic length used for degeneracy thresholds.
    pub fn length_scale(&self, fallback: f64) -> f64 {
        match self {
            Domain::FreeSpace => fallback.max(1.0),
            Domain::Ball { radius } => *radius,
        }
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        match self {
            Domain::FreeSpace => true,
            Domain::Ball { radius } => x.norm() <= radius * (1.0 + 1e-12),
        }
    }
}

/// A full void configuration with its derived mesoscale parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cloud {
    voids: Vec<Void>,
    eps: f64,
    d: f64,
    omega_bounds: Aabb,
}

impl Cloud {
    /// Builds a cloud and derives `eps`, `d` and the enclosing box.
    ///
    /// For fewer than two voids `d` is infinite: there are no interactions
    /// and the mesoscale constraint is vacuous.
    pub fn new(voids: Vec<Void>) -> Self {
        let eps = voids.iter().map(|v| 2.0 * v.radius).fold(0.0, f64::max);
        let mut min_dist = f64::INFINITY;
        for i in 0..voids.len() {
            for j in (i + 1)..voids.len() {
                min_dist = min_dist.min((voids[i].center - voids[j].center).norm());
            }
        }
        let d = 0.5 * min_dist;

        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &voids {
            for k in 0..3 {
                lo[k] = lo[k].min(v.center[k] - v.radius);
                hi[k] = hi[k].max(v.center[k] + v.radius);
            }
        }
        // Inflate the bounds by 2d so that omega keeps the voids away from
        // its boundary; for a single void fall back to one diameter.
        let pad = if d.is_finite() { 2.0 * d } else { eps };
        let omega_bounds = if voids.is_empty() {
            Aabb { min: Vector3::zeros(), max: Vector3::zeros() }
        } else {
            Aabb { min: lo.map(|v| v - pad), max: hi.map(|v| v + pad) }
        };

        Self { voids, eps, d, omega_bounds }
    }

    pub fn voids(&self) -> &[Void] {
        &self.voids
    }

    pub fn len(&self) -> usize {
        self.voids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voids.is_empty()
    }

    /// Largest void diameter.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Half the smallest centre spacing; infinite for fewer than two voids.
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn omega_bounds(&self) -> &Aabb {
        &self.omega_bounds
    }
}

/// Parameters of the volume-preserving cube-cloud generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudGridSpec {
    pub m: usize,
    pub center: Vector3<f64>,
    pub side: f64,
    pub beta: f64,
}

/// Radius scaling `alpha` for an `m`-per-side grid cloud of volume
/// fraction `beta`:
/// `alpha^3 = 16m/(m-1) * (3 beta/(4 pi) - (125 + 32(m-1))/(8000 m))`.
pub fn alpha_for(m: usize, beta: f64) -> Result<f64, GeometryError> {
    if m < 2 {
        return Err(GeometryError::GridTooSmall(m));
    }
    let mf = m as f64;
    let radicand = 16.0 * mf / (mf - 1.0)
        * (3.0 * beta / (4.0 * std::f64::consts::PI) - (125.0 + 32.0 * (mf - 1.0)) / (8000.0 * mf));
    if radicand <= 0.0 {
        return Err(GeometryError::NonPositiveRadicand(radicand));
    }
    Ok(radicand.cbrt())
}

/// Large-`m` limit of [`alpha_for`]: `(12 beta/pi - 8/125)^(1/3)`.
pub fn alpha_infinity(beta: f64) -> Result<f64, GeometryError> {
    let radicand = 12.0 * beta / std::f64::consts::PI - 8.0 / 125.0;
    if radicand < 0.0 {
        return Err(GeometryError::NonPositiveRadicand(radicand));
    }
    Ok(radicand.cbrt())
}

/// Generates the `m^3` non-uniform cube cloud: centres on the regular
/// `h`-grid inside the cube, radii `h/5`, `alpha*h/2` or `h/4` depending
/// on the sign of `p - q`, so that the total void volume equals
/// `beta * side^3` for every `m`.
pub fn make_grid_cloud(spec: &CloudGridSpec) -> Result<Cloud, GeometryError> {
    if spec.side <= 0.0 || spec.side.is_nan() {
        return Err(GeometryError::InvalidSide(spec.side));
    }
    if !(spec.beta > 0.0 && spec.beta < 1.0) {
        return Err(GeometryError::InvalidBeta(spec.beta));
    }
    let alpha = alpha_for(spec.m, spec.beta)?;
    let m = spec.m;
    let h = spec.side / m as f64;
    let corner = spec.center - Vector3::repeat(spec.side / 2.0);

    let mut voids = Vec::with_capacity(m * m * m);
    for p in 1..=m {
        for q in 1..=m {
            for r in 1..=m {
                let center = corner
                    + Vector3::new(
                        (2.0 * p as f64 - 1.0) / 2.0 * h,
                        (2.0 * q as f64 - 1.0) / 2.0 * h,
                        (2.0 * r as f64 - 1.0) / 2.0 * h,
                    );
                let radius = match p.cmp(&q) {
                    std::cmp::Ordering::Greater => h / 5.0,
                    std::cmp::Ordering::Less => alpha * h / 2.0,
                    std::cmp::Ordering::Equal => h / 4.0,
                };
                voids.push(Void::new(center, radius)?);
            }
        }
    }
    Ok(Cloud::new(voids))
}

/// The 18-void benchmark configuration: two 3x3 layers of voids at
/// x = -50 and x = -72 inside a ball of radius 120, radii given as the
/// printed radius/R ratios times R.
pub fn make_table1_cloud() -> (Cloud, Domain) {
    const R: f64 = 120.0;
    #[rustfmt::skip]
    let rows: [(f64, f64, f64, f64); 18] = [
        (-50.0,   0.0,   0.0, 0.0417),
        (-50.0,   0.0,  22.0, 0.0333),
        (-50.0,  22.0,   0.0, 0.0292),
        (-50.0,   0.0, -22.0, 0.0375),
        (-50.0, -22.0,   0.0, 0.0458),
        (-50.0,  22.0,  22.0, 0.0292),
        (-50.0,  22.0, -22.0, 0.025),
        (-50.0, -22.0,  22.0, 0.0375),
        (-50.0, -22.0, -22.0, 0.0375),
        (-72.0,   0.0,   0.0, 0.0417),
        (-72.0,   0.0,  22.0, 0.0458),
        (-72.0,  22.0,   0.0, 0.0292),
        (-72.0,   0.0, -22.0, 0.0375),
        (-72.0, -22.0,   0.0, 0.0417),
        (-72.0,  22.0,  22.0, 0.0333),
        (-72.0,  22.0, -22.0, 0.05),
        (-72.0, -22.0,  22.0, 0.0333),
        (-72.0, -22.0, -22.0, 0.0375),
    ];
    let voids = rows
        .iter()
        .map(|&(x, y, z, ratio)| Void::new(Vector3::new(x, y, z), ratio * R).unwrap())
        .collect();
    (Cloud::new(voids), Domain::Ball { radius: R })
}

/// A single admissibility violation found by [`validate_cloud`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Voids `i` and `j` intersect.
    Overlap { i: usize, j: usize, gap: f64 },
    /// Void `j` touches or crosses the outer boundary.
    OutsideDomain { j: usize, margin: f64 },
    /// The mesoscale constraint `eps < c*d` fails (warning-level).
    MesoscaleViolated { eps: f64, d: f64, threshold: f64 },
}

impl Violation {
    /// Mesoscale violations leave the formulas evaluable; geometric
    /// violations do not.
    pub fn is_warning(&self) -> bool {
        matches!(self, Violation::MesoscaleViolated { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| !v.is_warning())
    }
}

/// Checks pairwise disjointness, containment in the domain and the
/// mesoscale constraint with the default threshold `c = 1`.
pub fn validate_cloud(cloud: &Cloud, domain: &Domain) -> ValidationReport {
    validate_cloud_with(cloud, domain, 1.0)
}

/// Same as [`validate_cloud`] with a caller-chosen mesoscale threshold `c`.
pub fn validate_cloud_with(cloud: &Cloud, domain: &Domain, c: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let voids = cloud.voids();
    for i in 0..voids.len() {
        for j in (i + 1)..voids.len() {
            let gap = (voids[i].center - voids[j].center).norm()
                - (voids[i].radius + voids[j].radius);
            if gap <= 0.0 {
                violations.push(Violation::Overlap { i, j, gap });
            }
        }
    }
    if let Domain::Ball { radius } = domain {
        for (j, v) in voids.iter().enumerate() {
            let margin = radius - (v.center.norm() + v.radius);
            if margin <= 0.0 {
                violations.push(Violation::OutsideDomain { j, margin });
            }
        }
    }
    // diameter against the full centre spacing 2d: the benchmark
    // configurations keep every diameter below the nearest-neighbour
    // distance, which is the admissibility the formulas need
    if cloud.eps() >= c * 2.0 * cloud.d() {
        violations.push(Violation::MesoscaleViolated {
            eps: cloud.eps(),
            d: cloud.d(),
            threshold: c,
        });
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn alpha_infinity_reference_value() {
        // (52/125)^(1/3), the limiting radius scaling at beta = pi/25.
        let a = alpha_infinity(PI / 25.0).unwrap();
        assert_relative_eq!(a, (52.0_f64 / 125.0).cbrt(), max_relative = 1e-15);
        assert_abs_diff_eq!(a, 0.7465, epsilon = 5e-4);
    }

    #[test]
    fn alpha_infinity_edge_values() {
        // at the zero of the radicand the limit value is zero; just below
        // it the radicand is negative and rejected
        let beta0 = PI * (8.0 / 125.0) / 12.0;
        match alpha_infinity(beta0) {
            Ok(a) => assert!(a.abs() < 1e-5),
            Err(GeometryError::NonPositiveRadicand(r)) => assert!(r.abs() < 1e-15),
            Err(e) => panic!("unexpected error {e}"),
        }
        assert!(matches!(
            alpha_infinity(beta0 * 0.999),
            Err(GeometryError::NonPositiveRadicand(_))
        ));
        // slightly above the zero point the root is tiny
        assert!(alpha_infinity(beta0 + 1e-12).unwrap() < 1e-3);
        // unit cube root
        let beta1 = PI / 12.0 * (1.0 + 8.0 / 125.0);
        assert_relative_eq!(alpha_infinity(beta1).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn alpha_for_m2_direct_substitution() {
        // m = 2, beta = pi/25: the radicand reduces to
        // 32 * (3/100 - 157/16000) = 323/500 in exact rational arithmetic.
        let a = alpha_for(2, PI / 25.0).unwrap();
        assert_relative_eq!(a, (323.0_f64 / 500.0).cbrt(), max_relative = 1e-14);
    }

    #[test]
    fn alpha_for_large_m_approaches_limit() {
        let a = alpha_for(1_000_000, PI / 25.0).unwrap();
        let ainf = alpha_infinity(PI / 25.0).unwrap();
        assert_abs_diff_eq!(a, ainf, epsilon = 1e-4);
    }

    #[test]
    fn alpha_for_rejects_small_beta() {
        assert!(matches!(
            alpha_for(2, 0.01),
            Err(GeometryError::NonPositiveRadicand(_))
        ));
        assert!(matches!(alpha_for(1, PI / 25.0), Err(GeometryError::GridTooSmall(1))));
    }

    #[test]
    fn alpha_for_monotone_towards_limit() {
        let ainf = alpha_infinity(PI / 25.0).unwrap();
        let values: Vec<f64> = [2usize, 5, 10, 50, 100]
            .iter()
            .map(|&m| alpha_for(m, PI / 25.0).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!((w[1] - ainf).abs() < (w[0] - ainf).abs());
        }
    }

    fn grid_spec(m: usize) -> CloudGridSpec {
        CloudGridSpec {
            m,
            center: Vector3::new(3.0, 0.0, 0.0),
            side: 1.0 / 3.0_f64.sqrt(),
            beta: PI / 25.0,
        }
    }

    #[test]
    fn grid_cloud_m2_radius_census() {
        let spec = grid_spec(2);
        let cloud = make_grid_cloud(&spec).unwrap();
        assert_eq!(cloud.len(), 8);
        let h = spec.side / 2.0;
        let alpha = alpha_for(2, spec.beta).unwrap();
        let count = |r: f64| {
            cloud
                .voids()
                .iter()
                .filter(|v| (v.radius - r).abs() < 1e-14)
                .count()
        };
        // m^2 voids of radius h/4, m^2(m-1)/2 each of h/5 and alpha*h/2
        assert_eq!(count(h / 4.0), 4);
        assert_eq!(count(h / 5.0), 2);
        assert_eq!(count(alpha * h / 2.0), 2);
    }

    #[test]
    fn grid_cloud_volume_matches_beta() {
        for m in 2..=10 {
            let spec = grid_spec(m);
            let cloud = make_grid_cloud(&spec).unwrap();
            let vol: f64 = cloud
                .voids()
                .iter()
                .map(|v| 4.0 / 3.0 * PI * v.radius.powi(3))
                .sum();
            let expected = spec.beta * spec.side.powi(3);
            assert_relative_eq!(vol, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_cloud_centers_on_regular_grid() {
        let spec = grid_spec(3);
        let cloud = make_grid_cloud(&spec).unwrap();
        assert_eq!(cloud.len(), 27);
        let h = spec.side / 3.0;
        let corner = spec.center - Vector3::repeat(spec.side / 2.0);
        for v in cloud.voids() {
            for k in 0..3 {
                let t = (v.center[k] - corner[k]) / h - 0.5;
                // offsets are (2k-1)h/2, i.e. integer + 1/2 grid positions
                assert_abs_diff_eq!(t, t.round(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cloud_recomputes_eps_and_d() {
        let cloud = make_grid_cloud(&grid_spec(3)).unwrap();
        let eps = cloud
            .voids()
            .iter()
            .map(|v| 2.0 * v.radius)
            .fold(0.0, f64::max);
        let mut dmin = f64::INFINITY;
        for i in 0..cloud.len() {
            for j in (i + 1)..cloud.len() {
                dmin = dmin.min((cloud.voids()[i].center - cloud.voids()[j].center).norm());
            }
        }
        assert_eq!(cloud.eps(), eps);
        assert_eq!(cloud.d(), 0.5 * dmin);
    }

    #[test]
    fn table1_cloud_is_admissible() {
        let (cloud, domain) = make_table1_cloud();
        assert_eq!(cloud.len(), 18);
        assert_relative_eq!(cloud.voids()[0].radius, 5.004, max_relative = 1e-12);
        assert_eq!(cloud.voids()[0].center, Vector3::new(-50.0, 0.0, 0.0));
        assert_relative_eq!(cloud.voids()[15].radius, 6.0, max_relative = 1e-12);
        assert_eq!(cloud.voids()[15].center, Vector3::new(-72.0, 22.0, -22.0));
        let report = validate_cloud(&cloud, &domain);
        assert!(report.is_admissible(), "violations: {:?}", report.violations);
    }

    #[test]
    fn overlap_is_reported() {
        let voids = vec![
            Void::new(Vector3::zeros(), 1.0).unwrap(),
            Void::new(Vector3::new(1.5, 0.0, 0.0), 1.0).unwrap(),
        ];
        let report = validate_cloud(&Cloud::new(voids), &Domain::FreeSpace);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { i: 0, j: 1, .. })));
    }

    #[test]
    fn single_void_has_no_mesoscale_violation() {
        // d is infinite for N = 1, so eps < c*d holds for any radius.
        let cloud = Cloud::new(vec![Void::new(Vector3::zeros(), 10.0).unwrap()]);
        assert_eq!(cloud.d(), f64::INFINITY);
        let report = validate_cloud(&cloud, &Domain::FreeSpace);
        assert!(report.is_admissible());
    }

    #[test]
    fn void_outside_ball_is_reported() {
        let cloud = Cloud::new(vec![Void::new(Vector3::new(9.5, 0.0, 0.0), 1.0).unwrap()]);
        let report = validate_cloud(&cloud, &Domain::Ball { radius: 10.0 });
        assert!(report.has_errors());
    }

    #[test]
    fn grid_volume_independent_of_m() {
        let vols: Vec<f64> = (2..=10)
            .map(|m| {
                make_grid_cloud(&grid_spec(m))
                    .unwrap()
                    .voids()
                    .iter()
                    .map(|v| 4.0 / 3.0 * PI * v.radius.powi(3))
                    .sum()
            })
            .collect();
        for v in &vols[1..] {
            assert_relative_eq!(*v, vols[0], max_relative = 1e-10);
        }
    }
}
