//! Experiment configuration, manifold parsing and config hashing.

use std::path::{Path, PathBuf};

use laplace_limits::graphs::Construction;
use laplace_limits::io::SCHEMA_VERSION;
use laplace_limits::laplacians::LaplacianKind;
use laplace_limits::manifolds::{ChartFunction, DensityModel, ManifoldSpec};
use laplace_limits::validate::GridPoint;
use laplace_limits::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Monte-Carlo check of the moments of a centered ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSuite {
    pub dims: Vec<usize>,
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Plain vs pilot-weighted kNN drift fields against a Gaussian graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSuite {
    pub n: usize,
    pub k: usize,
}

/// Input of `validate`. Every suite runs on `manifold` with `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub manifold: ManifoldSpec,
    pub seeds: Vec<u64>,
    pub construction: Construction,
    /// Convergence grid; empty skips the convergence and degree suites.
    #[serde(default)]
    pub grid: Vec<GridPoint>,
    /// Laplacian whose generator is compared with the limit.
    #[serde(default = "default_kind")]
    pub laplacian: LaplacianKind,
    /// Names accepted by `ChartFunction::from_str`, e.g. `sin@0`.
    #[serde(default)]
    pub test_functions: Vec<String>,
    #[serde(default)]
    pub degree_check: bool,
    #[serde(default)]
    pub sphere: Option<SphereSuite>,
    #[serde(default)]
    pub pilot: Option<PilotSuite>,
    pub output_dir: PathBuf,
}

fn default_kind() -> LaplacianKind {
    LaplacianKind::RandomWalk
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Parse(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})")))
            }
            None => return Err(Error::Parse(format!("{}: missing schema_version", path.display()))),
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds must not be empty".into()));
        }
        if self.laplacian != LaplacianKind::RandomWalk && !self.grid.is_empty() {
            return Err(Error::InvalidParameter(
                "convergence runs compare the random-walk generator; set laplacian to random_walk".into(),
            ));
        }
        self.functions().map(|_| ())
    }

    pub fn functions(&self) -> Result<Vec<ChartFunction>> {
        self.test_functions.iter().map(|s| s.parse()).collect()
    }

    /// Hash of the configuration with the output location removed, so the
    /// same experiment written elsewhere carries the same hash.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        Ok(hash_value(&value))
    }
}

/// SHA-256 of a JSON value. Object keys are sorted, so the hash does not
/// depend on field order.
pub fn hash_value(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("JSON values always serialize");
    hex(&Sha256::digest(&bytes))
}

/// SHA-256 of a data file and, when present, its sidecar.
pub fn hash_inputs(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(path)?);
    let sidecar = laplace_limits::io::sidecar_path(path);
    if sidecar.exists() {
        hasher.update(std::fs::read(sidecar)?);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a manifold given as a shipped name, inline JSON or a JSON file.
///
/// Names: `circle`, `toroidal_helix` (alias `helix`), `gauss_sheet`,
/// `flat_interval`, each with its default geometry and density. A
/// density may follow a colon: `flat_interval:truncated_normal`.
pub fn parse_manifold(s: &str) -> Result<ManifoldSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| Error::Parse(format!("manifold JSON: {e}")));
    }
    let path = Path::new(s);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())));
    }
    let (name, density) = match s.split_once(':') {
        Some((n, d)) => (n, Some(d)),
        None => (s, None),
    };
    let spec = match name.replace('-', "_").as_str() {
        "circle" => ManifoldSpec::circle(1.0)?,
        "toroidal_helix" | "helix" => ManifoldSpec::toroidal_helix(2.0, 1.0, 8)?,
        "gauss_sheet" => ManifoldSpec::gauss_sheet(2.5)?,
        "flat_interval" => ManifoldSpec::flat_interval(5.0)?,
        other => return Err(Error::InvalidManifold(format!("unknown manifold {other:?}"))),
    };
    let Some(density) = density else { return Ok(spec) };
    let model = match density.replace('-', "_").as_str() {
        "uniform" => DensityModel::Uniform,
        "truncated_normal" => DensityModel::TruncatedNormal { sd: 1.0 },
        "cosine_modulated" => DensityModel::CosineModulated { amplitude: 0.4 },
        "uniform_parameter" => DensityModel::UniformParameter,
        other => return Err(Error::InvalidManifold(format!("unknown density {other:?}"))),
    };
    spec.with_density(model)
}
