//! Serializable summaries written next to the exported fields.

use std::path::PathBuf;

use cylflow::base_flow::FluxReport;
use cylflow::boundary_data::InflowReport;
use cylflow::euler::{EulerResiduals, FlowState, InflowResiduals, IterationRecord};
use cylflow::transport::TransportEstimates;
use cylflow::CylGrid;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NoConvergence,
    HypothesisViolation,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub radius: f64,
    pub length: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
    pub nodes: usize,
    pub spacing: f64,
}

impl From<&CylGrid> for GridSummary {
    fn from(g: &CylGrid) -> Self {
        Self {
            radius: g.radius(),
            length: g.length(),
            n_r: g.n_r(),
            n_theta: g.n_theta(),
            n_z: g.n_z(),
            nodes: g.node_count(),
            spacing: g.spacing(),
        }
    }
}

/// Outcome of one hypothesis of the existence theory, checked on the
/// discrete data or solution.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub converged: bool,
    pub iterations: usize,
    pub max_ratio: f64,
    pub last_ratio: f64,
    /// `|u|_H1`.
    pub perturbation_norm: f64,
    pub data_size: f64,
    /// `|u|_H1 / data_size`.
    pub solution_bound: Option<f64>,
    pub within_k1: bool,
    pub residuals: EulerResiduals,
    pub inflow_residuals: InflowResiduals,
    /// `|curl v - transported vorticity|_L2`.
    pub consistency: f64,
    pub max_streamline_length: f64,
    pub min_axial_speed: f64,
}

impl From<&FlowState> for SolutionSummary {
    fn from(s: &FlowState) -> Self {
        Self {
            converged: s.converged,
            iterations: s.iterations(),
            max_ratio: s.max_ratio(),
            last_ratio: s.last_ratio(),
            perturbation_norm: s.perturbation_norm,
            data_size: s.data_size,
            solution_bound: (s.data_size > 0.0).then(|| s.perturbation_norm / s.data_size),
            within_k1: s.within_k1,
            residuals: s.residuals,
            inflow_residuals: s.inflow,
            consistency: s.consistency,
            max_streamline_length: s.max_streamline_length,
            min_axial_speed: s.min_axial_speed,
        }
    }
}

/// Measured constants of the a priori estimates at the final iterate.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateProbes {
    pub transport: TransportEstimates,
    /// `|u|_H1 / |f|_L2` of the last div-curl solve.
    pub divcurl_ratio: f64,
}

/// Comparison against the closed-form columnar swirl.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub velocity_rel_l2: f64,
    pub pressure_rel_l2: f64,
    pub vorticity_rel_l2: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub setup_s: f64,
    pub solve_s: f64,
    pub export_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub violated_hypothesis: Option<String>,
    pub config: RunConfig,
    pub grid: GridSummary,
    pub flux: Option<FluxReport>,
    pub base_c_min: Option<f64>,
    pub inflow: Option<InflowReport>,
    pub history: Vec<IterationRecord>,
    pub solution: Option<SolutionSummary>,
    pub estimates: Option<EstimateProbes>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub oracle: Option<OracleComparison>,
    pub artifacts: Vec<PathBuf>,
    pub timings: Timings,
}

/// One invariant or hypothesis checked by `verify`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub hypothesis: bool,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub grid: GridSummary,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}
