//! Shared fixtures for the criterion benches.

use nalgebra::Vector3;

use mesocloud::{Background, Cloud, CloudGridSpec, Domain, SourceSpec};

/// The volume-preserving cube cloud at grid size `m` inside the ball of
/// radius 7 with the benchmark source.
pub fn cube_case(m: usize) -> (Cloud, Domain, Background) {
    let spec = CloudGridSpec {
        m,
        center: Vector3::new(3.0, 0.0, 0.0),
        side: 1.0 / 3.0_f64.sqrt(),
        beta: std::f64::consts::PI / 25.0,
    };
    let cloud = mesocloud::make_grid_cloud(&spec).expect("valid grid spec");
    (
        cloud,
        Domain::Ball { radius: 7.0 },
        Background::Source(SourceSpec::uniform(2.0)),
    )
}
