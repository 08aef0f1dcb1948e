//! Orchestration behind the subcommands.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cylflow::base_flow::{base_flow, BaseFlow, FluxReport};
use cylflow::boundary_data::{make_f0, validate, InflowData, InflowProfile, InflowReport};
use cylflow::columnar::ColumnarSwirl;
use cylflow::divcurl::{self, DivCurlSolver};
use cylflow::euler::{
    calibrate_k1, euler_residual, fixed_point_iterate, lipschitz_probe, random_pairs, BOperator, FlowState,
    K1Calibration, LipschitzReport,
};
use cylflow::norm::{norm_scalar, norm_vector};
use cylflow::ops::curl;
use cylflow::transport::{self, solve_transport};
use cylflow::{CylGrid, Error, Frame, NodeTag, NormKind, ScalarField, VectorField};
use serde::Serialize;

use crate::config::{ConfigError, ExportFormat, FluxSpec, RunConfig};
use crate::export;
use crate::report::{
    Check, EstimateProbes, GridSummary, HypothesisCheck, OracleComparison, RunReport, SolutionSummary, Status, Timings,
    VerifyReport,
};

pub mod exit {
    pub const CONVERGED: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const NO_CONVERGENCE: i32 = 2;
    pub const HYPOTHESIS: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } => exit::IO,
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(e) => solver_exit_code(e),
        }
    }
}

pub fn solver_exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } => exit::NO_CONVERGENCE,
        Error::InvalidConfig(_) | Error::InvalidGrid(_) => exit::CONFIG,
        e if e.is_hypothesis_violation() => exit::HYPOTHESIS,
        _ => exit::FAILURE,
    }
}

/// The hypothesis of the existence theory that an error reports as
/// violated.
const SMALL_DATA: &str = "the boundary data are small: data size below the admissible bound K1";

pub fn violated_hypothesis(e: &Error) -> Option<&'static str> {
    Some(match e {
        Error::StagnationDetected { .. } => "the perturbed flow keeps a positive lower bound on its axial speed",
        Error::LengthExceeded { .. } => "streamlines have finite length and connect the inflow to the outflow cap",
        Error::DegenerateInflow { .. } => "the normal speed on the inflow cap stays bounded away from zero",
        Error::FluxSign { .. } => {
            "the flux enters through the whole inflow cap and leaves through the whole outflow cap"
        }
        Error::ValidationFailure(_) => "the transported vorticity is divergence free with tangential edge values",
        Error::OutsideBall { .. } => "the iterates stay in the small ball around the base flow",
        Error::NoConvergence { .. } => SMALL_DATA,
        _ => return None,
    })
}

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(".cylflow.lock");
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path, _file: file })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Base flow and inflow data for a configuration.
pub struct Setup {
    pub grid: Arc<CylGrid>,
    pub base: BaseFlow,
    pub flux_report: FluxReport,
    pub data: InflowData,
    pub inflow_report: InflowReport,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, Error> {
    let grid = cfg.grid();
    let (base, flux_report) = base_flow(&cfg.flux.flux_data(&grid))?;
    let data = InflowData::from_profile(&grid, &cfg.inflow);
    let inflow_report = validate(&data, cfg.solver.k1);
    Ok(Setup {
        grid,
        base,
        flux_report,
        data,
        inflow_report,
    })
}

fn data_hypotheses(flux: &FluxReport, inflow: &InflowReport) -> Vec<HypothesisCheck> {
    vec![
        HypothesisCheck {
            name: "flux_sign",
            holds: flux.inflow_max < 0.0 && flux.outflow_min > 0.0,
            detail: format!(
                "max inflow flux {:.3e}, min outflow flux {:.3e}",
                flux.inflow_max, flux.outflow_min
            ),
        },
        HypothesisCheck {
            name: "flux_balance",
            holds: flux.balanced,
            detail: format!("in {:.6e}, out {:.6e}", flux.inflow_integral, flux.outflow_integral),
        },
        HypothesisCheck {
            name: "flux_edge_compatibility",
            holds: !flux.compatibility_warning,
            detail: format!("edge radial slope {:.3e}", flux.edge_derivative),
        },
        HypothesisCheck {
            name: "inflow_edge_conditions",
            holds: inflow.edge_ok,
            detail: format!(
                "max |h| {:.3e}, max |grad_T g| {:.3e} on the inflow edge",
                inflow.h_edge, inflow.grad_g_edge
            ),
        },
        HypothesisCheck {
            name: "small_data",
            holds: inflow.within_k1,
            detail: match inflow.k1 {
                Some(k1) => format!("data size {:.6e}, K1 {:.6e}", inflow.data_size, k1),
                None => format!("data size {:.6e}, no K1 configured", inflow.data_size),
            },
        },
    ]
}

fn solution_hypotheses(state: &FlowState, c_min: f64) -> Vec<HypothesisCheck> {
    vec![
        HypothesisCheck {
            name: "positive_axial_speed",
            holds: state.min_axial_speed >= 0.5 * c_min,
            detail: format!(
                "min axial speed {:.6e}, base bound {:.6e}",
                state.min_axial_speed, c_min
            ),
        },
        HypothesisCheck {
            name: "contraction",
            holds: state.max_ratio() < 1.0,
            detail: format!("largest update ratio {:.6e}", state.max_ratio()),
        },
    ]
}

fn oracle(cfg: &RunConfig, state: &FlowState) -> Option<OracleComparison> {
    let InflowProfile::Columnar { eps } = cfg.inflow else {
        return None;
    };
    if cfg.flux != (FluxSpec::Uniform { speed: 1.0 }) {
        return None;
    }
    let g = state.grid();
    let sw = ColumnarSwirl::new(g.radius(), eps);
    let v = VectorField::from_fn(g, Frame::Cylindrical, |p| sw.velocity(p));
    let p = ScalarField::from_fn(g, |q| sw.pressure(q));
    let f = VectorField::from_fn(g, Frame::Cylindrical, |q| sw.vorticity_vector(q));
    let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    Some(OracleComparison {
        velocity_rel_l2: rel(
            norm_vector(&state.v.sub(&v).ok()?, NormKind::L2),
            norm_vector(&v, NormKind::L2),
        ),
        pressure_rel_l2: rel(
            norm_scalar(&state.p.sub(&p).ok()?, NormKind::L2),
            norm_scalar(&p, NormKind::L2),
        ),
        vorticity_rel_l2: rel(
            norm_vector(&state.f.to_cylindrical().sub(&f).ok()?, NormKind::L2),
            norm_vector(&f, NormKind::L2),
        ),
    })
}

fn estimates(state: &FlowState, s: &Setup) -> Option<EstimateProbes> {
    let f0 = make_f0(&s.data, &state.v, s.base.c_min).ok()?;
    Some(EstimateProbes {
        transport: transport::estimates_probe(&state.transported, &f0, None).ok()?,
        divcurl_ratio: divcurl::estimates_probe(&state.u, &state.transported),
    })
}

/// Progress sink for the iteration history.
pub type Progress<'a> = &'a mut dyn FnMut(&cylflow::euler::IterationRecord);

/// Execute a configuration: solve, export the fields and history, and
/// write `report.json` into the output directory. The report is returned
/// for every solver outcome; only configuration and I/O problems are
/// errors.
pub fn run(cfg: &RunConfig, progress: Progress<'_>) -> Result<RunReport, CliError> {
    let t0 = Instant::now();
    let out_dir = cfg.output_dir();
    let _lock = OutputLock::acquire(&out_dir)?;
    let grid = cfg.grid();
    let mut report = RunReport {
        status: Status::Error,
        exit_code: exit::FAILURE,
        error: None,
        violated_hypothesis: None,
        config: cfg.clone(),
        grid: GridSummary::from(&*grid),
        flux: None,
        base_c_min: None,
        inflow: None,
        history: Vec::new(),
        solution: None,
        estimates: None,
        hypotheses: Vec::new(),
        oracle: None,
        artifacts: Vec::new(),
        timings: Timings::default(),
    };
    let fail = |report: &mut RunReport, e: Error| {
        report.exit_code = solver_exit_code(&e);
        report.status = match report.exit_code {
            exit::NO_CONVERGENCE => Status::NoConvergence,
            exit::HYPOTHESIS => Status::HypothesisViolation,
            _ => Status::Error,
        };
        report.violated_hypothesis = violated_hypothesis(&e).map(str::to_string);
        report.error = Some(e.to_string());
    };

    let mut state = None;
    match setup(cfg) {
        Err(e) => fail(&mut report, e),
        Ok(s) => {
            report.flux = Some(s.flux_report.clone());
            report.base_c_min = Some(s.base.c_min);
            report.inflow = Some(s.inflow_report.clone());
            report.hypotheses = data_hypotheses(&s.flux_report, &s.inflow_report);
            report.timings.setup_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let mut history = Vec::new();
            let outcome = BOperator::new(&s.data, &s.base, cfg.solver).and_then(|op| {
                fixed_point_iterate(&op, |r| {
                    progress(r);
                    history.push(*r);
                })
            });
            report.timings.solve_s = t1.elapsed().as_secs_f64();
            report.history = history;
            match outcome {
                Err(e) => {
                    fail(&mut report, e);
                    // a setup that passed every data check can only break
                    // down during the iteration when the data are too large
                    if report.exit_code == exit::HYPOTHESIS {
                        if let Some(h) = &mut report.violated_hypothesis {
                            h.push_str("; root cause: ");
                            h.push_str(SMALL_DATA);
                        }
                    }
                }
                Ok(st) => {
                    report.solution = Some(SolutionSummary::from(&st));
                    report.estimates = estimates(&st, &s);
                    report.oracle = oracle(cfg, &st);
                    report.hypotheses.extend(solution_hypotheses(&st, s.base.c_min));
                    if st.converged {
                        report.status = Status::Converged;
                        report.exit_code = exit::CONVERGED;
                    } else {
                        fail(
                            &mut report,
                            Error::NoConvergence {
                                iterations: st.iterations(),
                                last_ratio: st.last_ratio(),
                            },
                        );
                    }
                    state = Some(st);
                }
            }
        }
    }

    let t2 = Instant::now();
    if let Some(st) = &state {
        for fmt in &cfg.output.formats {
            let path = match fmt {
                ExportFormat::Csv => out_dir.join("fields.csv"),
                ExportFormat::Vtk => out_dir.join("fields.vtk"),
            };
            let res = match fmt {
                ExportFormat::Csv => export::write_csv(st, &path),
                ExportFormat::Vtk => export::write_vtk(st, &path),
            };
            res.map_err(|e| CliError::io(&path, e))?;
            report.artifacts.push(path);
        }
    }
    let hist = out_dir.join("history.csv");
    export::write_history(&report.history, &hist).map_err(|e| CliError::io(&hist, e))?;
    report.artifacts.push(hist);
    let rep = out_dir.join("report.json");
    report.artifacts.push(rep.clone());
    report.timings.export_s = t2.elapsed().as_secs_f64();
    report.timings.total_s = t0.elapsed().as_secs_f64();
    write_json(&rep, &report)?;
    Ok(report)
}

fn check(name: &'static str, hypothesis: bool, value: f64, threshold: f64) -> Check {
    Check {
        name,
        hypothesis,
        value,
        threshold,
        passed: value <= threshold,
    }
}

fn flag(name: &'static str, holds: bool) -> Check {
    Check {
        name,
        hypothesis: true,
        value: if holds { 0.0 } else { 1.0 },
        threshold: 0.0,
        passed: holds,
    }
}

/// Multiple of `h^2` allowed for discretization errors in `verify`.
const VERIFY_H2_FACTOR: f64 = 1.0;

/// Hypothesis checks on the configured data and invariant checks of the
/// operators on the configured grid, without running the iteration.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let s = setup(cfg)?;
    let g = &s.grid;
    let h = g.spacing();
    let h2 = VERIFY_H2_FACTOR * h * h;
    let mut checks = Vec::new();
    for hc in data_hypotheses(&s.flux_report, &s.inflow_report) {
        checks.push(flag(hc.name, hc.holds));
    }

    // the base pair solves the Euler equations to discretization accuracy
    let vmax = s.base.v0.max_abs();
    let vol = g.volume().sqrt();
    let res = euler_residual(&s.base.v0, &s.base.p0, s.base.flux.as_ref())?;
    let scale = vmax * vmax * vol;
    checks.push(check("base_momentum_residual", false, res.momentum / scale, h2));
    checks.push(check("base_divergence", false, res.divergence / (vmax * vol), h2));
    checks.push(check("base_boundary_flux", false, res.boundary_flux / (vmax * vol), h2));
    let rot = norm_vector(&curl(&s.base.v0), NormKind::L2) / (vmax * vol);
    checks.push(check("base_irrotational", false, rot, h2));

    // B maps everything to zero for zero data
    let zero = InflowData::zero(g);
    let solver = Arc::new(DivCurlSolver::new(g)?.with_tolerance(cfg.solver.tol_div));
    let op0 = BOperator::with_solver(&zero, &s.base, cfg.solver, solver.clone())?;
    let u0 = VectorField::zeros(g, Frame::Cylindrical);
    checks.push(check("zero_data_fixed_point", false, op0.apply(&u0)?.w.max_abs(), 0.0));

    // div-curl on the closed-form pair (0, 0, 2R - 3r) <-> (0, r (R - r), 0)
    let rr = g.radius();
    let f = VectorField::from_fn(g, Frame::Cylindrical, |p| [0.0, 0.0, 2.0 * rr - 3.0 * p.r]);
    let w_exact = VectorField::from_fn(g, Frame::Cylindrical, |p| [0.0, p.r * (rr - p.r), 0.0]);
    let w = solver.solve(&f)?.w;
    let rel = norm_vector(&w.sub(&w_exact)?, NormKind::L2) / norm_vector(&w_exact, NormKind::L2);
    checks.push(check("divcurl_closed_form_error", false, rel, h2));

    // one application of B on the configured data
    let op = BOperator::with_solver(&s.data, &s.base, cfg.solver, solver)?;
    let out = op.apply(&u0)?;
    let fscale = norm_vector(&out.f, NormKind::L2).max(f64::MIN_POSITIVE);
    let r = divcurl::residuals(&out.w, &out.f)?;
    checks.push(check("divcurl_divergence", false, r.div / fscale, h2));
    checks.push(check("divcurl_normal_trace", false, r.normal_trace / fscale, h2));
    if s.inflow_report.edge_ok {
        let edge = (0..g.node_count())
            .filter(|&n| {
                let (i, _, k) = g.ijk(n);
                g.tag(i, k) == NodeTag::EdgePlus
            })
            .map(|n| {
                let v = out.f.get(n);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .fold(0.0, f64::max);
        checks.push(check("transport_edge_propagation", false, edge, 1e-6));
    }
    let tr = solve_transport(&s.base.v0, &out.f0, &op.trace_settings(&s.base.v0))?;
    let diff = norm_vector(&tr.f.sub(&out.f)?, NormKind::L2);
    checks.push(check("transport_reproducible", false, diff, 0.0));

    Ok(VerifyReport {
        grid: GridSummary::from(&**g),
        checks,
    })
}

/// Exit code for a verify report: hypothesis failures first.
pub fn verify_exit_code(rep: &VerifyReport) -> i32 {
    if rep.checks.iter().any(|c| c.hypothesis && !c.passed) {
        exit::HYPOTHESIS
    } else if rep.passed() {
        exit::CONVERGED
    } else {
        exit::FAILURE
    }
}

/// K1 bisection on the configured inflow profile; writes `calibration.json`.
pub fn calibrate(cfg: &RunConfig) -> Result<K1Calibration, CliError> {
    if cfg.inflow == InflowProfile::Zero {
        return Err(ConfigError::Validation("calibration needs a nonzero [inflow] profile".into()).into());
    }
    let profile = match cfg.calibration.start_amplitude {
        Some(a) => cfg.inflow.with_amplitude(a),
        None => cfg.inflow,
    };
    let s = setup(cfg)?;
    let cal = calibrate_k1(&profile, &s.base, &cfg.solver, cfg.calibration.bisections)?;
    let dir = cfg.output_dir();
    let _lock = OutputLock::acquire(&dir)?;
    write_json(&dir.join("calibration.json"), &cal)?;
    Ok(cal)
}

/// Default amplitude of the random pairs when the config has zero data.
pub const PROBE_AMPLITUDE: f64 = 0.05;

/// Stability ratios over `n_pairs` random data pairs; writes
/// `lipschitz.json`.
pub fn probe_lipschitz(cfg: &RunConfig, n_pairs: usize) -> Result<LipschitzReport, CliError> {
    let (eps, seed) = match cfg.inflow {
        InflowProfile::Zero => (PROBE_AMPLITUDE, 0),
        InflowProfile::Random { eps, seed } => (eps, seed),
        other => (other.amplitude(), 0),
    };
    let s = setup(cfg)?;
    let pairs = random_pairs(&s.grid, eps, n_pairs, seed);
    let rep = lipschitz_probe(&pairs, &s.base, &cfg.solver)?;
    let dir = cfg.output_dir();
    let _lock = OutputLock::acquire(&dir)?;
    write_json(&dir.join("lipschitz.json"), &rep)?;
    Ok(rep)
}
