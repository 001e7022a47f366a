//! The run-configuration schema: a single JSON file, no environment
//! variables, so a run is reproducible from the config alone.

use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use mesocloud::{make_grid_cloud, make_table1_cloud, Background, Cloud, CloudGridSpec, Domain,
    SourceSpec, Void};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Omitted: free space, unless the cloud is `table1` (ball R = 120).
    pub domain: Option<Domain>,
    pub source: SourceCfg,
    /// Exactly one of `voids`, `grid`, `table1` must be present.
    pub voids: Option<Vec<Void>>,
    pub grid: Option<CloudGridSpec>,
    pub table1: Option<bool>,
    #[serde(default)]
    pub solver: SolverCfg,
    #[serde(default)]
    pub outputs: OutputsCfg,
    #[serde(default)]
    pub oracle: OracleCfg,
}

/// Either the compact-source background (the Poisson problem with a
/// uniform load on `|x| < rho`) or a uniform gradient.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum SourceCfg {
    Point { rho: f64, amplitude: f64 },
    Linear { linear: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    FixedPoint,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverCfg {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    pub matrix_free_threshold: usize,
}

impl Default for SolverCfg {
    fn default() -> Self {
        Self {
            method: Method::Direct,
            tol: 1e-12,
            max_iter: 1000,
            matrix_free_threshold: 2000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsCfg {
    pub solution: String,
    pub diagnostics: String,
    pub line: Option<LineSpec>,
    pub grid: Option<GridSpec>,
}

impl Default for OutputsCfg {
    fn default() -> Self {
        Self {
            solution: "solution.json".into(),
            diagnostics: "diagnostics.json".into(),
            line: None,
            grid: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub p0: [f64; 3],
    pub p1: [f64; 3],
    pub n: usize,
    pub file: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub res: [usize; 3],
    pub file: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleCfg {
    /// `compare-oracle` exits 0 iff `max_rel <= threshold`.
    pub threshold: f64,
    pub sources_per_void: usize,
    pub source_depth: f64,
    pub collocation_per_void: usize,
    pub max_residual: f64,
    /// Half-extent of the z = 0 evaluation square; derived from the
    /// domain when omitted.
    pub half_extent: Option<f64>,
    pub steps: usize,
    pub report: String,
}

impl Default for OracleCfg {
    fn default() -> Self {
        let mfs = mesocloud::MfsConfig::default();
        Self {
            threshold: 0.03,
            sources_per_void: mfs.sources_per_void,
            source_depth: mfs.source_depth,
            collocation_per_void: mfs.collocation_per_void,
            max_residual: mfs.max_residual,
            half_extent: None,
            steps: 25,
            report: "error_report.json".into(),
        }
    }
}

impl OracleCfg {
    pub fn mfs(&self) -> mesocloud::MfsConfig {
        mesocloud::MfsConfig {
            sources_per_void: self.sources_per_void,
            source_depth: self.source_depth,
            collocation_per_void: self.collocation_per_void,
            max_residual: self.max_residual,
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    // serde_path_to_error keeps the field path for schema violations
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
}

impl RunConfig {
    pub fn background(&self) -> Background {
        match &self.source {
            SourceCfg::Point { rho, amplitude } => {
                Background::Source(SourceSpec::new(*rho, *amplitude))
            }
            SourceCfg::Linear { linear } => {
                Background::Linear(Vector3::new(linear[0], linear[1], linear[2]))
            }
        }
    }

    /// Resolves the cloud and domain; `alpha` is reported for grid clouds.
    pub fn build(&self) -> Result<Built, CliError> {
        let present = [
            self.voids.is_some(),
            self.grid.is_some(),
            self.table1 == Some(true),
        ]
        .iter()
        .filter(|p| **p)
        .count();
        if present != 1 {
            return Err(CliError::Config(format!(
                "exactly one of `voids`, `grid`, `table1` must be given; found {present}"
            )));
        }

        let mut alpha = None;
        let (cloud, natural_domain) = if let Some(voids) = &self.voids {
            (Cloud::new(voids.clone()), None)
        } else if let Some(spec) = &self.grid {
            alpha = Some(
                mesocloud::alpha_for(spec.m, spec.beta)
                    .map_err(|e| CliError::Config(format!("grid spec: {e}")))?,
            );
            (
                make_grid_cloud(spec).map_err(|e| CliError::Config(format!("grid spec: {e}")))?,
                None,
            )
        } else {
            let (cloud, domain) = make_table1_cloud();
            (cloud, Some(domain))
        };

        let domain = match (self.domain, natural_domain) {
            (Some(d), Some(nd)) if d != nd => {
                return Err(CliError::Config(
                    "`table1` fixes the domain to the ball of radius 120".into(),
                ))
            }
            (Some(d), _) => d,
            (None, Some(nd)) => nd,
            (None, None) => Domain::FreeSpace,
        };

        Ok(Built { cloud, domain, alpha })
    }
}

pub struct Built {
    pub cloud: Cloud,
    pub domain: Domain,
    pub alpha: Option<f64>,
}
