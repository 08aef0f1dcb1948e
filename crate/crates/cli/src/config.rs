//! Run configuration, read from TOML.
//!
//! ```toml
//! [geometry]
//! radius = 1.0
//! length = 2.0
//! n_r = 17
//! n_theta = 16
//! n_z = 33
//!
//! [flux]
//! profile = "uniform"
//! speed = 1.0
//!
//! [inflow]
//! kind = "columnar"
//! eps = 0.05
//!
//! [solver]
//! tol_fp = 1e-9
//!
//! [output]
//! dir = "out/columnar"
//! formats = ["csv", "vtk"]
//! ```
//!
//! Only `[geometry]` is required. Unknown keys are rejected. The output
//! directory is resolved against the directory holding the config file and
//! may be overridden with the `CYLFLOW_OUTPUT_DIR` environment variable.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cylflow::base_flow::FluxData;
use cylflow::boundary_data::InflowProfile;
use cylflow::euler::SolverConfig;
use cylflow::{build_grid, CylGrid, CylPoint};
use serde::{Deserialize, Serialize};

/// Environment variable that replaces `[output] dir`.
pub const OUTPUT_DIR_ENV: &str = "CYLFLOW_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    #[serde(default)]
    pub flux: FluxSpec,
    #[serde(default)]
    pub inflow: InflowProfile,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub radius: f64,
    pub length: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
}

/// Normal flux through the caps, the same profile entering and leaving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum FluxSpec {
    /// `|v . n| = speed`.
    Uniform { speed: f64 },
    /// `|v . n| = speed (1 + bulge (3 (1 - rho^2)^2 - 1))`, which keeps the
    /// mean speed and has zero radial slope at the edge circle.
    Bulged { speed: f64, bulge: f64 },
}

impl Default for FluxSpec {
    fn default() -> Self {
        FluxSpec::Uniform { speed: 1.0 }
    }
}

impl FluxSpec {
    pub fn speed(&self) -> f64 {
        match *self {
            FluxSpec::Uniform { speed } | FluxSpec::Bulged { speed, .. } => speed,
        }
    }

    /// Axial speed through the caps at `p`.
    pub fn profile(&self, radius: f64, p: CylPoint) -> f64 {
        match *self {
            FluxSpec::Uniform { speed } => speed,
            FluxSpec::Bulged { speed, bulge } => {
                let rho = p.r / radius;
                speed * (1.0 + bulge * (3.0 * (1.0 - rho * rho).powi(2) - 1.0))
            }
        }
    }

    pub fn flux_data(&self, grid: &Arc<CylGrid>) -> FluxData {
        let radius = grid.radius();
        let flux = *self;
        FluxData::from_fns(
            grid,
            move |p| -flux.profile(radius, p),
            move |p| flux.profile(radius, p),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<ExportFormat>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![ExportFormat::Csv, ExportFormat::Vtk],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Bisection steps after the threshold has been bracketed.
    pub bisections: usize,
    /// Starting amplitude; the inflow amplitude when absent.
    pub start_amplitude: Option<f64>,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            bisections: 10,
            start_amplitude: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(ParseError),
    #[error("invalid configuration: {0}")]
    Validation(String),
}

/// TOML syntax or schema error with its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " (key `{key}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl ParseError {
    fn from_toml(text: &str, err: &toml::de::Error) -> Self {
        let message = err.message().trim().to_string();
        let line = err
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let quoted = message.split('`').nth(1).map(str::to_string);
        let from_line = line.and_then(|l| {
            let src = text.lines().nth(l - 1)?;
            let (lhs, _) = src.split_once('=')?;
            let key = lhs.trim().trim_matches('"');
            (!key.is_empty()).then(|| key.to_string())
        });
        let key = if message.starts_with("unknown field") {
            quoted.or(from_line)
        } else {
            from_line.or(quoted)
        };
        Self { line, key, message }
    }
}

impl RunConfig {
    /// Parse and validate; `base_dir` anchors a relative output directory.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(ParseError::from_toml(text, &e)))?;
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base_dir.join(&cfg.output.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Validation(m));
        let g = &self.geometry;
        if !(g.radius > 0.0 && g.radius.is_finite()) {
            return bad(format!("geometry.radius must be positive, got {}", g.radius));
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            return bad(format!("geometry.length must be positive, got {}", g.length));
        }
        if let Err(e) = build_grid(g.radius, g.length, g.n_r, g.n_theta, g.n_z) {
            return bad(e.to_string());
        }
        let speed = self.flux.speed();
        if !(speed > 0.0 && speed.is_finite()) {
            return bad(format!("flux.speed must be positive, got {speed}"));
        }
        if let FluxSpec::Bulged { bulge, .. } = self.flux {
            if !(bulge > -0.5 && bulge < 1.0) {
                return bad(format!(
                    "flux.bulge must lie in (-0.5, 1) to keep the flux one-signed, got {bulge}"
                ));
            }
        }
        let eps = self.inflow.amplitude();
        if !eps.is_finite() {
            return bad(format!("inflow.eps must be finite, got {eps}"));
        }
        if let Err(e) = self.solver.validate() {
            return bad(e.to_string());
        }
        if let Some(a) = self.calibration.start_amplitude {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("calibration.start_amplitude must be positive, got {a}"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Arc<CylGrid> {
        let g = &self.geometry;
        build_grid(g.radius, g.length, g.n_r, g.n_theta, g.n_z).expect("validated geometry")
    }

    /// `[output] dir`, or the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.dir.clone(),
        }
    }
}

/// Read, parse and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_toml_str(&text, base)
}
