//! The operator `B`, its fixed point, pressure recovery and the residual
//! audit of the assembled Euler solution.
//!
//! `B(u)` transports the inflow vorticity along the streamlines of
//! `v0 + u` and reconstructs from it a divergence-free, tangential field
//! `w` with `curl w = f`. The iteration `u <- (1 - omega) u + omega B(u)`
//! starts from `u = 0`; its fixed point is the velocity perturbation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base_flow::{BaseFlow, FluxData};
use crate::boundary_data::{make_f0, validate, InflowData, InflowProfile};
use crate::divcurl::{DivCurlReport, DivCurlSolver, DIV_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::{Frame, ScalarField, VectorField};
use crate::grid::{CylGrid, Face};
use crate::interp::ThetaScheme;
use crate::norm::{cap_norm_scalar, norm_scalar, norm_vector, NormKind};
use crate::ops::{advective_derivative, curl, div, grad};
use crate::transport::{solve_transport, transport_scalar_along, Characteristics, TraceSettings, TRACE_TOLERANCE};

/// Consecutive iterations with a ratio of at least one after which the
/// iteration is abandoned as divergent.
pub const DIVERGENCE_WINDOW: usize = 3;

/// Second-iterate ratio that marks the edge of the admissible data range.
pub const K1_RATIO_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once the H1 norm of the update falls below this.
    pub tol_fp: f64,
    pub max_iter: usize,
    /// Under-relaxation factor `omega`.
    pub relaxation: f64,
    /// Admissible data size; exceeding it only produces a warning.
    pub k1: Option<f64>,
    /// Radius of the ball the iterates must stay in, in the H1 norm.
    pub ball_radius: Option<f64>,
    pub trace_tolerance: f64,
    /// Streamline length cap; derived from the velocity when absent.
    pub max_length: Option<f64>,
    pub theta_scheme: ThetaScheme,
    pub tol_div: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_fp: 1e-9,
            max_iter: 50,
            relaxation: 1.0,
            k1: None,
            ball_radius: None,
            trace_tolerance: TRACE_TOLERANCE,
            max_length: None,
            theta_scheme: ThetaScheme::Cubic,
            tol_div: DIV_TOLERANCE,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tol_fp > 0.0 && self.tol_fp.is_finite()) {
            return bad(format!("tol_fp must be positive, got {}", self.tol_fp));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad(format!("relaxation must lie in (0, 1], got {}", self.relaxation));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.trace_tolerance > 0.0 && self.trace_tolerance.is_finite()) {
            return bad(format!(
                "trace_tolerance must be positive, got {}",
                self.trace_tolerance
            ));
        }
        if !(self.tol_div > 0.0 && self.tol_div.is_finite()) {
            return bad(format!("tol_div must be positive, got {}", self.tol_div));
        }
        for (name, value) in [
            ("k1", self.k1),
            ("ball_radius", self.ball_radius),
            ("max_length", self.max_length),
        ] {
            if let Some(x) = value {
                if !(x > 0.0 && x.is_finite()) {
                    return bad(format!("{name} must be positive, got {x}"));
                }
            }
        }
        Ok(())
    }
}

/// Everything produced by one application of `B`.
#[derive(Debug, Clone)]
pub struct BOutput {
    /// `B(u)`.
    pub w: VectorField,
    /// Transported vorticity.
    pub f: VectorField,
    /// Inflow vorticity.
    pub f0: VectorField,
    /// Streamlines of `v0 + u`.
    pub characteristics: Characteristics,
    pub divcurl: DivCurlReport,
}

/// `B` for fixed inflow data and base flow. The div-curl factorization is
/// shared, so one operator can be applied many times cheaply.
#[derive(Debug, Clone)]
pub struct BOperator<'a> {
    data: &'a InflowData,
    base: &'a BaseFlow,
    config: SolverConfig,
    divcurl: Arc<DivCurlSolver>,
}

impl<'a> BOperator<'a> {
    pub fn new(data: &'a InflowData, base: &'a BaseFlow, config: SolverConfig) -> Result<Self> {
        let divcurl = Arc::new(DivCurlSolver::new(base.grid())?.with_tolerance(config.tol_div));
        Self::with_solver(data, base, config, divcurl)
    }

    /// Reuse a factorized div-curl solver.
    pub fn with_solver(
        data: &'a InflowData,
        base: &'a BaseFlow,
        config: SolverConfig,
        divcurl: Arc<DivCurlSolver>,
    ) -> Result<Self> {
        config.validate()?;
        if **data.grid() != **base.grid() || **divcurl.grid() != **base.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            data,
            base,
            config,
            divcurl,
        })
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        self.base.grid()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn data(&self) -> &InflowData {
        self.data
    }

    pub fn base(&self) -> &BaseFlow {
        self.base
    }

    pub fn solver(&self) -> &Arc<DivCurlSolver> {
        &self.divcurl
    }

    /// `v0 + u` in the cylindrical frame.
    pub fn velocity(&self, u: &VectorField) -> Result<VectorField> {
        self.base.v0.to_cylindrical().add(&u.to_cylindrical())
    }

    pub fn trace_settings(&self, v: &VectorField) -> TraceSettings {
        let mut s = TraceSettings::for_velocity(v, self.base.c_min).with_scheme(self.config.theta_scheme);
        s.tolerance = self.config.trace_tolerance;
        if let Some(l) = self.config.max_length {
            s.max_length = l;
        }
        s
    }

    fn check_ball(&self, u: &VectorField) -> Result<()> {
        if let Some(radius) = self.config.ball_radius {
            let norm = norm_vector(u, NormKind::H1);
            if norm > radius {
                return Err(Error::OutsideBall { norm, radius });
            }
        }
        Ok(())
    }

    pub fn apply(&self, u: &VectorField) -> Result<BOutput> {
        self.check_ball(u)?;
        let v = self.velocity(u)?;
        let f0 = make_f0(self.data, &v, self.base.c_min)?;
        let transported = solve_transport(&v, &f0, &self.trace_settings(&v))?;
        let sol = self.divcurl.solve(&transported.f)?;
        Ok(BOutput {
            w: sol.w,
            f: transported.f,
            f0,
            characteristics: transported.characteristics,
            divcurl: sol.report,
        })
    }

    /// Bernoulli head `g + |v0|^2 / 2 + p0` on the inflow cap.
    pub fn inflow_head(&self) -> ScalarField {
        inflow_head(self.data, self.base)
    }
}

/// `B(u)` with default settings.
#[allow(non_snake_case)]
pub fn apply_B(u: &VectorField, data: &InflowData, base: &BaseFlow) -> Result<VectorField> {
    Ok(BOperator::new(data, base, SolverConfig::default())?.apply(u)?.w)
}

fn inflow_head(data: &InflowData, base: &BaseFlow) -> ScalarField {
    let g = base.grid();
    let speed = base.v0.magnitude();
    let mut h0 = ScalarField::zeros(g);
    let plane = g.n_r() * g.n_theta();
    for n in 0..plane {
        let s = speed.values()[n];
        h0.values_mut()[n] = data.g.values()[n] + 0.5 * s * s + base.p0.values()[n];
    }
    h0
}

/// `p = H - |v|^2 / 2` with the head `H` carried along known streamlines.
pub fn recover_pressure_along(
    chars: &Characteristics,
    v: &VectorField,
    data: &InflowData,
    base: &BaseFlow,
) -> Result<ScalarField> {
    let head = transport_scalar_along(chars, &inflow_head(data, base))?;
    let speed = v.magnitude();
    head.lincomb(1.0, &speed.map(|s| s * s), -0.5)
}

/// Pressure of the velocity `v` from the Bernoulli head prescribed on the
/// inflow cap.
pub fn recover_pressure(
    v: &VectorField,
    data: &InflowData,
    base: &BaseFlow,
    config: &SolverConfig,
) -> Result<ScalarField> {
    let mut s = TraceSettings::for_velocity(v, base.c_min).with_scheme(config.theta_scheme);
    s.tolerance = config.trace_tolerance;
    if let Some(l) = config.max_length {
        s.max_length = l;
    }
    recover_pressure_along(&Characteristics::compute(v, &s)?, v, data, base)
}

/// L2 norms of the residuals of the steady Euler system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EulerResiduals {
    /// `(v . grad) v + grad p`.
    pub momentum: f64,
    /// `div v`.
    pub divergence: f64,
    /// `v . n - phi` over the whole boundary.
    pub boundary_flux: f64,
    /// `(v . grad) curl v - (curl v . grad) v`.
    pub vorticity: f64,
}

impl EulerResiduals {
    pub fn max(&self) -> f64 {
        self.momentum
            .max(self.divergence)
            .max(self.boundary_flux)
            .max(self.vorticity)
    }
}

/// Residual audit of `(v, p)`. Without `flux` the reference normal flux is
/// zero on the mantle and `v . n` of the caps is not checked.
pub fn euler_residual(v: &VectorField, p: &ScalarField, flux: Option<&FluxData>) -> Result<EulerResiduals> {
    if **v.grid() != **p.grid() {
        return Err(Error::GridMismatch);
    }
    let g = v.grid().clone();
    let vc = v.to_cartesian();
    let momentum = advective_derivative(&vc, &vc)?.add(&grad(p).to_cartesian())?;
    let omega = curl(v).to_cartesian();
    let vort = advective_derivative(&vc, &omega)?.sub(&advective_derivative(&omega, &vc)?)?;

    let cyl = v.to_cylindrical();
    let mut acc = 0.0;
    for face in Face::ALL {
        let normal = CylGrid::outward_normal(face);
        if face != Face::Mantle && flux.is_none() {
            continue;
        }
        let (ks, is): (Vec<usize>, Vec<usize>) = match face {
            Face::Inflow => (vec![0], (0..g.n_r()).collect()),
            Face::Outflow => (vec![g.n_z() - 1], (0..g.n_r()).collect()),
            Face::Mantle => ((0..g.n_z()).collect(), vec![g.n_r() - 1]),
        };
        for &k in &ks {
            for j in 0..g.n_theta() {
                for &i in &is {
                    let n = g.index(i, j, k);
                    let vv = cyl.get(n);
                    let vn: f64 = (0..3).map(|c| vv[c] * normal[c]).sum();
                    let phi = flux.map_or(0.0, |fl| fl.normal_flux(face, n));
                    let w = match face {
                        Face::Mantle => g.mantle_weight(k),
                        _ => g.cap_weight(i),
                    };
                    acc += w * (vn - phi).powi(2);
                }
            }
        }
    }
    Ok(EulerResiduals {
        momentum: norm_vector(&momentum, NormKind::L2),
        divergence: norm_scalar(&div(v), NormKind::L2),
        boundary_flux: acc.sqrt(),
        vorticity: norm_vector(&vort, NormKind::L2),
    })
}

/// Residuals of the two inflow conditions, as L2 norms over the inflow cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InflowResiduals {
    /// `n . curl v - h`.
    pub normal_vorticity: f64,
    /// The same without the edge circle, where the one-sided radial
    /// derivative of the discrete solution is only first order.
    pub normal_vorticity_interior: f64,
    /// `|v|^2 / 2 + p - g - |v0|^2 / 2 - p0`.
    pub bernoulli: f64,
}

pub fn inflow_residuals(
    v: &VectorField,
    p: &ScalarField,
    data: &InflowData,
    base: &BaseFlow,
) -> Result<InflowResiduals> {
    let g = v.grid().clone();
    if **data.grid() != *g || **base.grid() != *g || **p.grid() != *g {
        return Err(Error::GridMismatch);
    }
    let omega = curl(v).to_cylindrical();
    let speed = v.magnitude();
    let head0 = inflow_head(data, base);
    let mut nv = ScalarField::zeros(&g);
    let mut bern = ScalarField::zeros(&g);
    for n in 0..g.n_r() * g.n_theta() {
        nv.values_mut()[n] = -omega.get(n)[2] - data.h.values()[n];
        let s = speed.values()[n];
        bern.values_mut()[n] = 0.5 * s * s + p.values()[n] - head0.values()[n];
    }
    let normal_vorticity = cap_norm_scalar(&nv, 0, NormKind::L2);
    for j in 0..g.n_theta() {
        nv.values_mut()[g.index(g.n_r() - 1, j, 0)] = 0.0;
    }
    Ok(InflowResiduals {
        normal_vorticity,
        normal_vorticity_interior: cap_norm_scalar(&nv, 0, NormKind::L2),
        bernoulli: cap_norm_scalar(&bern, 0, NormKind::L2),
    })
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `|u_{k+1} - u_k|_H1`.
    pub update_norm: f64,
    /// Ratio of this update to the previous one.
    pub ratio: Option<f64>,
    /// Momentum residual of the iterate `v0 + u_k` the update was built from.
    pub momentum_res: f64,
    pub div_res: f64,
    /// `|u_{k+1}|_H1`.
    pub perturbation_norm: f64,
}

/// Result of the fixed-point iteration, converged or not.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub v: VectorField,
    pub p: ScalarField,
    /// `curl v`.
    pub f: VectorField,
    pub u: VectorField,
    /// Vorticity transported along the last iterate's streamlines.
    pub transported: VectorField,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub residuals: EulerResiduals,
    pub inflow: InflowResiduals,
    /// `|curl v - transported|_L2`.
    pub consistency: f64,
    pub data_size: f64,
    pub within_k1: bool,
    /// `|u|_H1`.
    pub perturbation_norm: f64,
    pub max_streamline_length: f64,
    pub min_axial_speed: f64,
}

impl FlowState {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn last_ratio(&self) -> f64 {
        self.history.iter().rev().find_map(|r| r.ratio).unwrap_or(0.0)
    }

    /// Largest contraction ratio over the history.
    pub fn max_ratio(&self) -> f64 {
        self.history.iter().filter_map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        self.v.grid()
    }
}

/// Iterate `B` from `u = 0`. Stops at convergence, after `max_iter`
/// iterations, or once [`DIVERGENCE_WINDOW`] consecutive ratios reach one;
/// the last two return an unconverged state. `observe` sees each history
/// row as it is produced.
pub fn fixed_point_iterate(op: &BOperator<'_>, mut observe: impl FnMut(&IterationRecord)) -> Result<FlowState> {
    let cfg = *op.config();
    let g = op.grid().clone();
    let omega = cfg.relaxation;
    let mut u = VectorField::zeros(&g, Frame::Cylindrical);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut transported = VectorField::zeros(&g, Frame::Cylindrical);
    let mut rising = 0;
    for iter in 1..=cfg.max_iter {
        let out = op.apply(&u)?;
        let v = op.velocity(&u)?;
        let p = recover_pressure_along(&out.characteristics, &v, op.data, op.base)?;
        let res = euler_residual(&v, &p, op.base.flux.as_ref())?;
        let next = u.lincomb(1.0 - omega, &out.w.to_cylindrical(), omega)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("fixed-point iterate"));
        }
        let update_norm = norm_vector(&next.sub(&u)?, NormKind::H1);
        let ratio = history.last().map(|prev| {
            if prev.update_norm > 0.0 {
                update_norm / prev.update_norm
            } else {
                0.0
            }
        });
        let rec = IterationRecord {
            iter,
            update_norm,
            ratio,
            momentum_res: res.momentum,
            div_res: res.divergence,
            perturbation_norm: norm_vector(&next, NormKind::H1),
        };
        observe(&rec);
        history.push(rec);
        u = next;
        transported = out.f;
        if update_norm < cfg.tol_fp {
            converged = true;
            break;
        }
        rising = if ratio.is_some_and(|r| r >= 1.0) { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_WINDOW {
            break;
        }
    }
    let v = op.velocity(&u)?;
    let chars = Characteristics::compute(&v, &op.trace_settings(&v))?;
    let p = recover_pressure_along(&chars, &v, op.data, op.base)?;
    let f = curl(&v);
    let residuals = euler_residual(&v, &p, op.base.flux.as_ref())?;
    let inflow = inflow_residuals(&v, &p, op.data, op.base)?;
    let consistency = norm_vector(&f.to_cylindrical().sub(&transported.to_cylindrical())?, NormKind::L2);
    let report = validate(op.data, cfg.k1);
    Ok(FlowState {
        perturbation_norm: norm_vector(&u, NormKind::H1),
        v,
        p,
        f,
        u,
        transported,
        history,
        converged,
        residuals,
        inflow,
        consistency,
        data_size: report.data_size,
        within_k1: report.within_k1,
        max_streamline_length: chars.max_length,
        min_axial_speed: chars.min_axial_speed,
    })
}

/// [`fixed_point_iterate`] that turns a non-converged state into
/// [`Error::NoConvergence`].
pub fn fixed_point_solve(config: &SolverConfig, data: &InflowData, base: &BaseFlow) -> Result<FlowState> {
    let op = BOperator::new(data, base, *config)?;
    converged_or_error(fixed_point_iterate(&op, |_| {})?)
}

fn converged_or_error(state: FlowState) -> Result<FlowState> {
    if state.converged {
        Ok(state)
    } else {
        Err(Error::NoConvergence {
            iterations: state.iterations(),
            last_ratio: state.last_ratio(),
        })
    }
}

/// Stability ratios of one data pair; `None` when the data coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairRatios {
    /// `|v1 - v2|_H1 / (|h1 - h2|_L2 + |grad_T (g1 - g2)|_L2)`.
    pub velocity: Option<f64>,
    /// `|p1 - p2|_H1` over the same plus `|g1 - g2|_L2`.
    pub pressure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs: Vec<PairRatios>,
    /// Largest velocity ratio, an empirical stand-in for `K2`.
    pub k2: Option<f64>,
    /// Largest pressure ratio, an empirical stand-in for `K3`.
    pub k3: Option<f64>,
    /// Max over min of the velocity ratios.
    pub velocity_spread: Option<f64>,
    pub pressure_spread: Option<f64>,
    pub skipped: usize,
}

fn max_and_spread(xs: impl Iterator<Item = f64> + Clone) -> (Option<f64>, Option<f64>) {
    let max = xs
        .clone()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let min = xs.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let spread = match (max, min) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    (max, spread)
}

/// Solve both members of every pair and measure how the solution moves with
/// the data.
pub fn lipschitz_probe(
    pairs: &[(InflowData, InflowData)],
    base: &BaseFlow,
    config: &SolverConfig,
) -> Result<LipschitzReport> {
    let solver = Arc::new(DivCurlSolver::new(base.grid())?.with_tolerance(config.tol_div));
    let solve = |d: &InflowData| -> Result<FlowState> {
        let op = BOperator::with_solver(d, base, *config, solver.clone())?;
        converged_or_error(fixed_point_iterate(&op, |_| {})?)
    };
    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let diff = a.lincomb(1.0, b, -1.0)?;
        let vel_den = diff.data_size_l2();
        if vel_den == 0.0 {
            out.push(PairRatios {
                velocity: None,
                pressure: None,
            });
            continue;
        }
        let pres_den = vel_den + cap_norm_scalar(&diff.g, 0, NormKind::L2);
        let (sa, sb) = (solve(a)?, solve(b)?);
        let dv = norm_vector(&sa.v.sub(&sb.v)?, NormKind::H1);
        let dp = norm_scalar(&sa.p.sub(&sb.p)?, NormKind::H1);
        out.push(PairRatios {
            velocity: Some(dv / vel_den),
            pressure: Some(dp / pres_den),
        });
    }
    let (k2, velocity_spread) = max_and_spread(out.iter().filter_map(|p| p.velocity));
    let (k3, pressure_spread) = max_and_spread(out.iter().filter_map(|p| p.pressure));
    Ok(LipschitzReport {
        skipped: out.iter().filter(|p| p.velocity.is_none()).count(),
        pairs: out,
        k2,
        k3,
        velocity_spread,
        pressure_spread,
    })
}

/// `n` pairs of random profiles of amplitude `eps`, seeded from `seed`.
pub fn random_pairs(grid: &Arc<CylGrid>, eps: f64, n: usize, seed: u64) -> Vec<(InflowData, InflowData)> {
    (0..n as u64)
        .map(|i| {
            let a = InflowProfile::Random {
                eps,
                seed: seed + 2 * i,
            };
            let b = InflowProfile::Random {
                eps,
                seed: seed + 2 * i + 1,
            };
            (InflowData::from_profile(grid, &a), InflowData::from_profile(grid, &b))
        })
        .collect()
}

/// `|u2 - u1|_H1 / |u1 - u0|_H1` for the first two iterates from `u0 = 0`.
pub fn second_iterate_ratio(op: &BOperator<'_>) -> Result<f64> {
    let omega = op.config().relaxation;
    let u0 = VectorField::zeros(op.grid(), Frame::Cylindrical);
    let u1 = u0.lincomb(1.0 - omega, &op.apply(&u0)?.w.to_cylindrical(), omega)?;
    let first = norm_vector(&u1, NormKind::H1);
    if first == 0.0 {
        return Ok(0.0);
    }
    let u2 = u1.lincomb(1.0 - omega, &op.apply(&u1)?.w.to_cylindrical(), omega)?;
    Ok(norm_vector(&u2.sub(&u1)?, NormKind::H1) / first)
}

/// One amplitude tried by [`calibrate_k1`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K1Probe {
    pub amplitude: f64,
    pub data_size: f64,
    /// `None` when a hypothesis violation stopped the probe.
    pub ratio: Option<f64>,
    pub violation: Option<String>,
}

impl K1Probe {
    fn admissible(&self) -> bool {
        self.ratio.is_some_and(|r| r < K1_RATIO_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K1Calibration {
    /// Largest amplitude found with a second-iterate ratio below the
    /// threshold.
    pub amplitude: f64,
    /// Data size at that amplitude.
    pub k1: f64,
    pub ratio: f64,
    pub probes: Vec<K1Probe>,
}

/// Bisection on the amplitude of `profile` until the second-iterate ratio
/// crosses [`K1_RATIO_THRESHOLD`]. Hypothesis violations count as above the
/// threshold.
pub fn calibrate_k1(
    profile: &InflowProfile,
    base: &BaseFlow,
    config: &SolverConfig,
    bisections: usize,
) -> Result<K1Calibration> {
    let start = profile.amplitude();
    if !(start > 0.0 && start.is_finite()) {
        return Err(Error::InvalidConfig(
            "calibration needs a profile with positive amplitude".into(),
        ));
    }
    let grid = base.grid().clone();
    let solver = Arc::new(DivCurlSolver::new(&grid)?.with_tolerance(config.tol_div));
    let mut probes: Vec<K1Probe> = Vec::new();
    let mut probe = |amplitude: f64| -> Result<K1Probe> {
        let data = InflowData::from_profile(&grid, &profile.with_amplitude(amplitude));
        let op = BOperator::with_solver(&data, base, *config, solver.clone())?;
        let (ratio, violation) = match second_iterate_ratio(&op) {
            Ok(r) => (Some(r), None),
            Err(e) if e.is_hypothesis_violation() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let p = K1Probe {
            amplitude,
            data_size: data.data_size(),
            ratio,
            violation,
        };
        probes.push(p.clone());
        Ok(p)
    };

    const MAX_BRACKET: usize = 40;
    let first = probe(start)?;
    let (mut lo, mut hi) = if first.admissible() {
        let mut lo = first;
        let mut hi = None;
        for _ in 0..MAX_BRACKET {
            let p = probe(2.0 * lo.amplitude)?;
            if p.admissible() {
                lo = p;
            } else {
                hi = Some(p);
                break;
            }
        }
        let hi = hi.ok_or_else(|| Error::InvalidConfig("no amplitude reached the ratio threshold".into()))?;
        (lo, hi)
    } else {
        let mut hi = first;
        let mut lo = None;
        for _ in 0..MAX_BRACKET {
            let p = probe(0.5 * hi.amplitude)?;
            if p.admissible() {
                lo = Some(p);
                break;
            }
            hi = p;
        }
        let lo = lo.ok_or_else(|| Error::InvalidConfig("no amplitude fell below the ratio threshold".into()))?;
        (lo, hi)
    };
    for _ in 0..bisections {
        let p = probe(0.5 * (lo.amplitude + hi.amplitude))?;
        if p.admissible() {
            lo = p;
        } else {
            hi = p;
        }
    }
    drop(hi);
    Ok(K1Calibration {
        amplitude: lo.amplitude,
        k1: lo.data_size,
        ratio: lo.ratio.unwrap_or(0.0),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_flow::base_flow;
    use crate::columnar::ColumnarSwirl;
    use crate::grid::build_grid;

    fn uniform_base(g: &Arc<CylGrid>) -> BaseFlow {
        base_flow(&FluxData::uniform(g, 1.0)).unwrap().0
    }

    #[test]
    fn config_invariants() {
        assert!(SolverConfig::default().validate().is_ok());
        for cfg in [
            SolverConfig {
                tol_fp: 0.0,
                ..Default::default()
            },
            SolverConfig {
                relaxation: 1.5,
                ..Default::default()
            },
            SolverConfig {
                max_iter: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn zero_data_is_fixed_at_the_base_flow() {
        let g = build_grid(1.0, 1.0, 7, 8, 9).unwrap();
        let base = uniform_base(&g);
        let data = InflowData::zero(&g);
        let u = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, 0.02 * p.r * (1.0 - p.r), 0.0]);
        assert_eq!(apply_B(&u, &data, &base).unwrap().max_abs(), 0.0);

        let state = fixed_point_solve(&SolverConfig::default(), &data, &base).unwrap();
        assert!(state.converged);
        assert_eq!(state.iterations(), 1);
        assert_eq!(state.perturbation_norm, 0.0);
        assert!(state.v.sub(&base.v0.to_cylindrical()).unwrap().max_abs() < 1e-12);
        assert!(state.p.sub(&base.p0).unwrap().max_abs() < 1e-12);
        assert!(state.residuals.max() < 1e-10, "{:?}", state.residuals);
    }

    #[test]
    fn large_perturbation_stagnates() {
        let g = build_grid(1.0, 1.0, 7, 8, 9).unwrap();
        let base = uniform_base(&g);
        let data = InflowData::from_profile(&g, &InflowProfile::Bump { eps: 0.01 });
        let u = VectorField::from_fn(&g, Frame::Cylindrical, |_| [0.0, 0.0, -0.9]);
        let err = apply_B(&u, &data, &base).unwrap_err();
        assert!(err.is_hypothesis_violation(), "{err}");
        let cfg = SolverConfig {
            ball_radius: Some(0.1),
            ..Default::default()
        };
        let op = BOperator::new(&data, &base, cfg).unwrap();
        assert!(matches!(op.apply(&u), Err(Error::OutsideBall { .. })));
    }

    #[test]
    fn pressure_of_base_flow_and_head_offset() {
        let g = build_grid(1.0, 1.0, 9, 8, 9).unwrap();
        let base = uniform_base(&g);
        let cfg = SolverConfig::default();
        let v = base.v0.clone();
        let p = recover_pressure(&v, &InflowData::zero(&g), &base, &cfg).unwrap();
        assert!(p.sub(&base.p0).unwrap().max_abs() < 1e-12);
        let shifted = InflowData::from_fns(&g, |_| 0.3, |_| 0.0);
        let q = recover_pressure(&v, &shifted, &base, &cfg).unwrap();
        assert!(q.sub(&p).unwrap().values().iter().all(|d| (d - 0.3).abs() < 1e-12));
    }

    #[test]
    fn residual_meter_separates_exact_and_random_fields() {
        let g = build_grid(1.0, 1.0, 17, 16, 17).unwrap();
        let sw = ColumnarSwirl::new(1.0, 0.05);
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
        let p = ScalarField::from_fn(&g, |q| sw.pressure(q));
        let flux = FluxData::uniform(&g, 1.0);
        let exact = euler_residual(&v, &p, Some(&flux)).unwrap();
        assert!(exact.max() < 1e-3, "{exact:?}");

        let mut rng_state = 12345_u64;
        let mut next = || {
            rng_state = rng_state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut noisy = v.clone();
        for n in 0..g.node_count() {
            let a = noisy.get(n);
            noisy.set(n, [a[0] + 0.05 * next(), a[1] + 0.05 * next(), a[2] + 0.05 * next()]);
        }
        let bad = euler_residual(&noisy, &p, Some(&flux)).unwrap();
        assert!(bad.momentum > 100.0 * exact.momentum && bad.divergence > 100.0 * exact.divergence);
    }

    #[test]
    fn columnar_data_converge_to_the_swirl() {
        let g = build_grid(1.0, 1.0, 9, 8, 9).unwrap();
        let base = uniform_base(&g);
        let eps = 0.05;
        let data = InflowData::from_profile(&g, &InflowProfile::Columnar { eps });
        let cfg = SolverConfig {
            theta_scheme: ThetaScheme::Spectral,
            ..Default::default()
        };
        let state = fixed_point_solve(&cfg, &data, &base).unwrap();
        assert!(state.history.iter().filter_map(|r| r.ratio).all(|r| r < 1.0));
        let sw = ColumnarSwirl::new(1.0, eps);
        let exact = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
        let err = norm_vector(&state.v.sub(&exact).unwrap(), NormKind::L2) / norm_vector(&exact, NormKind::L2);
        assert!(err < 0.02, "relative error {err}");
        let pexact = ScalarField::from_fn(&g, |q| sw.pressure(q));
        assert!(state.p.sub(&pexact).unwrap().max_abs() < 0.01);
        assert!(
            state.inflow.normal_vorticity < 0.05 && state.inflow.bernoulli < 1e-3,
            "{:?}",
            state.inflow
        );
    }

    #[test]
    fn identical_pairs_are_skipped() {
        let g = build_grid(1.0, 1.0, 7, 8, 7).unwrap();
        let base = uniform_base(&g);
        let d = InflowData::from_profile(&g, &InflowProfile::Bump { eps: 0.01 });
        let rep = lipschitz_probe(&[(d.clone(), d)], &base, &SolverConfig::default()).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.k2, None);
    }

    #[test]
    fn calibration_brackets_the_threshold() {
        let g = build_grid(1.0, 1.0, 7, 8, 7).unwrap();
        let base = uniform_base(&g);
        let cal = calibrate_k1(&InflowProfile::Bump { eps: 0.5 }, &base, &SolverConfig::default(), 4).unwrap();
        assert!(cal.ratio < K1_RATIO_THRESHOLD);
        assert!(cal.k1 > 0.0);
        assert!(cal
            .probes
            .iter()
            .any(|p| p.amplitude > cal.amplitude && !p.admissible()));
    }
}
