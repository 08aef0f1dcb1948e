//! Streamlines and transport along them.
//!
//! An admissible velocity has positive axial speed everywhere, so every
//! integral curve climbs monotonically in `z` and can be written as
//! `x(z)` with `dx/dz = v / v_z`. Paths are integrated in that form with
//! adaptive RK4 (step doubling), each step ending on a grid plane; time and
//! arclength ride along as extra components, `dt/dz = 1 / v_z` and
//! `ds/dz = |v| / v_z`.
//!
//! The vorticity `f` solves `(v . grad) f = (f . grad) v`. Along a path this
//! is the linear ODE `df/dt = J f`, with `J` the Cartesian velocity gradient,
//! or `df/dz = J f / v_z`. [`solve_transport`] traces each node back to the
//! inflow cap, reads `f0` at the foot and integrates that ODE forward along
//! the recorded path.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{cart_to_cyl, Frame, ScalarField, VectorField};
use crate::grid::{CylGrid, CylPoint};
use crate::interp::{Interpolator, ThetaScheme};
use crate::norm::{cap_norm_vector, norm_vector, NormKind};
use crate::ops::cartesian_jacobian;

/// Default local error tolerance, per unit arclength.
pub const TRACE_TOLERANCE: f64 = 1e-9;

const MAX_HALVINGS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSettings {
    pub tolerance: f64,
    /// Streamlines longer than this are rejected.
    pub max_length: f64,
    /// Lower axial-speed bound of the base flow; tracing stops with
    /// [`Error::StagnationDetected`] below half of it.
    pub c_min: f64,
    pub scheme: ThetaScheme,
}

impl TraceSettings {
    /// Defaults for velocity `v` over a base flow with lower speed `c_min`:
    /// `max_length = 10 L (1 + max|v| / c_min)`.
    pub fn for_velocity(v: &VectorField, c_min: f64) -> Self {
        let g = v.grid();
        let vmax = v.magnitude().max_abs();
        Self {
            tolerance: TRACE_TOLERANCE,
            max_length: 10.0 * g.length() * (1.0 + vmax / c_min),
            c_min,
            scheme: ThetaScheme::Cubic,
        }
    }

    pub fn with_scheme(mut self, scheme: ThetaScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn speed_floor(&self) -> f64 {
        0.5 * self.c_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Cap on which a streamline ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Terminal {
    Inflow,
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    /// Cartesian position.
    pub x: [f64; 3],
    /// `dx/dz` at `x` (the `z` entry is 1).
    pub slope: [f64; 3],
    /// Elapsed flow time since the seed, always nonnegative.
    pub time: f64,
    pub arclength: f64,
}

#[derive(Debug, Clone)]
pub struct Streamline {
    pub seed: CylPoint,
    pub direction: Direction,
    /// Samples from the seed to the terminal cap.
    pub points: Vec<PathPoint>,
    pub terminal: Terminal,
    pub length: f64,
    pub duration: f64,
    /// Sum of the local error estimates of the accepted steps.
    pub error_estimate: f64,
    pub min_axial_speed: f64,
    /// Largest radial distance by which a step left the mantle before being
    /// projected back.
    pub mantle_excursion: f64,
}

impl Streamline {
    pub fn end(&self) -> CylPoint {
        CylPoint::from_cartesian(self.points.last().expect("path has a seed point").x)
    }
}

/// Velocity in Cartesian components, evaluated at Cartesian points.
///
/// Away from the axis the cylindrical components are interpolated and
/// rotated at the query angle, so a field tangent to the mantle stays tangent
/// between nodes. Near the axis, where that frame degenerates, the Cartesian
/// components are used, with a smooth blend over one radial cell.
#[derive(Debug, Clone)]
pub struct VelocitySampler {
    cart: Interpolator,
    cyl: Interpolator,
}

impl VelocitySampler {
    pub fn new(v: &VectorField, scheme: ThetaScheme) -> Self {
        Self {
            cart: Interpolator::vector(&v.to_cartesian(), scheme),
            cyl: Interpolator::vector(&v.to_cylindrical(), scheme),
        }
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        self.cart.grid()
    }

    pub fn at(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let p = CylPoint::from_cartesian(project(self.grid(), x).0);
        let dr = self.grid().dr();
        let s = ((p.r - 2.0 * dr) / dr).clamp(0.0, 1.0);
        let w = s * s * (3.0 - 2.0 * s);
        let mut out = [0.0; 3];
        if w < 1.0 {
            self.cart.eval(p, &mut out)?;
        }
        if w > 0.0 {
            let mut c = [0.0; 3];
            self.cyl.eval(p, &mut c)?;
            let (sn, cs) = p.theta.sin_cos();
            let rot = [c[0] * cs - c[1] * sn, c[0] * sn + c[1] * cs, c[2]];
            for (o, r) in out.iter_mut().zip(rot) {
                *o = (1.0 - w) * *o + w * r;
            }
        }
        Ok(out)
    }
}

/// Pull `x` back onto the closed disc; returns the radial excess removed.
fn project(g: &CylGrid, x: [f64; 3]) -> ([f64; 3], f64) {
    let r = x[0].hypot(x[1]);
    let rr = g.radius();
    if r > rr {
        let s = rr / r;
        ([x[0] * s, x[1] * s, x[2]], r - rr)
    } else {
        (x, 0.0)
    }
}

/// State `[x, y, t, s]` as a function of `z`.
type State = [f64; 4];

struct Tracer<'a> {
    vel: &'a VelocitySampler,
    settings: &'a TraceSettings,
    /// `+1` when stepping towards larger `z`.
    sign: f64,
    min_vz: f64,
}

impl Tracer<'_> {
    fn rhs(&mut self, z: f64, y: &State) -> Result<State> {
        let v = self.vel.at([y[0], y[1], z])?;
        let floor = self.settings.speed_floor();
        if !(v[2] >= floor) {
            let p = CylPoint::from_cartesian([y[0], y[1], z]);
            return Err(Error::StagnationDetected {
                r: p.r,
                theta: p.theta,
                z: p.z,
                speed: v[2],
                threshold: floor,
            });
        }
        self.min_vz = self.min_vz.min(v[2]);
        let inv = 1.0 / v[2];
        let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Ok([v[0] * inv, v[1] * inv, self.sign * inv, self.sign * speed * inv])
    }

    fn rk4(&mut self, z: f64, y: &State, k1: &State, dz: f64) -> Result<State> {
        Ok(self.rk4_stages(z, y, k1, dz)?.0)
    }

    /// One RK4 step; also returns the last stage.
    fn rk4_stages(&mut self, z: f64, y: &State, k1: &State, dz: f64) -> Result<(State, State)> {
        let k2 = self.rhs(z + 0.5 * dz, &axpy(y, 0.5 * dz, k1))?;
        let k3 = self.rhs(z + 0.5 * dz, &axpy(y, 0.5 * dz, &k2))?;
        let k4 = self.rhs(z + dz, &axpy(y, dz, &k3))?;
        let mut out = *y;
        for c in 0..4 {
            out[c] += dz / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        Ok((out, k4))
    }
}

fn axpy(y: &State, a: f64, k: &State) -> State {
    [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]]
}

/// Integrate the integral curve of `vel` through `seed` until it reaches a
/// cap.
pub fn trace(
    vel: &VelocitySampler,
    seed: CylPoint,
    direction: Direction,
    settings: &TraceSettings,
) -> Result<Streamline> {
    let g = vel.grid().clone();
    let seed = crate::interp::clamp_to_domain(&g, seed)?;
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let mut tr = Tracer {
        vel,
        settings,
        sign,
        min_vz: f64::INFINITY,
    };
    let (x0, _) = project(&g, seed.to_cartesian());
    let mut z = x0[2];
    let mut y: State = [x0[0], x0[1], 0.0, 0.0];
    let mut k1 = tr.rhs(z, &y)?;
    let mut points = vec![PathPoint {
        x: x0,
        slope: [k1[0], k1[1], 1.0],
        time: 0.0,
        arclength: 0.0,
    }];
    let mut error_estimate = 0.0;
    let mut excursion = 0.0_f64;
    let dzg = g.dz();
    let snap = 1e-12 * g.length();
    // planes visited in order of travel
    let targets: Vec<f64> = match direction {
        Direction::Backward => {
            let top = ((z - snap) / dzg).ceil().max(1.0) as usize;
            (0..top).rev().map(|k| g.z(k)).collect()
        }
        Direction::Forward => {
            let bottom = ((z + snap) / dzg).floor() as usize;
            (bottom + 1..g.n_z()).map(|k| g.z(k)).collect()
        }
    };
    for &target in &targets {
        let mut step = target - z;
        while (target - z).abs() > 0.0 {
            let remaining = target - z;
            if step.abs() > remaining.abs() {
                step = remaining;
            }
            let mut halvings = 0;
            let (y_new, err, k_next) = loop {
                let (full, k4) = tr.rk4_stages(z, &y, &k1, step)?;
                let ds = (full[3] - y[3]).abs().max(step.abs());
                // the embedded third-order companion (k4 replaced by the
                // stage at the new point) bounds the RK4 error from above
                let k5 = tr.rhs(z + step, &full)?;
                let embedded = (step / 6.0 * (k4[0] - k5[0])).hypot(step / 6.0 * (k4[1] - k5[1]));
                if embedded <= settings.tolerance * ds {
                    break (full, embedded, Some(k5));
                }
                let half1 = tr.rk4(z, &y, &k1, 0.5 * step)?;
                let k_mid = tr.rhs(z + 0.5 * step, &half1)?;
                let half2 = tr.rk4(z + 0.5 * step, &half1, &k_mid, 0.5 * step)?;
                let err = (full[0] - half2[0]).hypot(full[1] - half2[1]) / 15.0;
                if err <= settings.tolerance * ds || halvings >= MAX_HALVINGS {
                    break (half2, err, None);
                }
                step *= 0.5;
                halvings += 1;
            };
            error_estimate += err;
            let last = (target - z - step).abs() <= snap;
            z = if last { target } else { z + step };
            let (xp, ex) = project(&g, [y_new[0], y_new[1], z]);
            excursion = excursion.max(ex);
            y = [xp[0], xp[1], y_new[2], y_new[3]];
            k1 = match k_next {
                Some(k) if ex == 0.0 => k,
                _ => tr.rhs(z, &y)?,
            };
            points.push(PathPoint {
                x: [y[0], y[1], z],
                slope: [k1[0], k1[1], 1.0],
                time: y[2],
                arclength: y[3],
            });
            if y[3] > settings.max_length {
                return Err(Error::LengthExceeded {
                    limit: settings.max_length,
                });
            }
            if halvings == 0 {
                step *= 2.0;
            }
        }
    }
    let terminal = match direction {
        Direction::Backward => Terminal::Inflow,
        Direction::Forward => Terminal::Outflow,
    };
    Ok(Streamline {
        seed,
        direction,
        terminal,
        length: y[3],
        duration: y[2],
        error_estimate,
        min_axial_speed: tr.min_vz,
        mantle_excursion: excursion,
        points,
    })
}

/// Cubic Hermite position between two path samples at fraction `s`.
fn hermite(a: &PathPoint, b: &PathPoint, s: f64) -> [f64; 3] {
    let dz = b.x[2] - a.x[2];
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = h00 * a.x[c] + h10 * dz * a.slope[c] + h01 * b.x[c] + h11 * dz * b.slope[c];
    }
    out
}

/// Where each node's backward characteristic meets the inflow cap.
#[derive(Debug, Clone)]
pub struct Characteristics {
    grid: Arc<CylGrid>,
    /// Cartesian foot points on `z = 0`.
    pub feet: Vec<[f64; 3]>,
    pub lengths: ScalarField,
    pub durations: ScalarField,
    pub errors: ScalarField,
    pub max_length: f64,
    pub min_axial_speed: f64,
    pub mantle_excursion: f64,
}

impl Characteristics {
    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    /// Trace every node without carrying a vorticity along.
    pub fn compute(v: &VectorField, settings: &TraceSettings) -> Result<Self> {
        let vel = VelocitySampler::new(v, settings.scheme);
        let per_node = run_nodes(v.grid(), |n| {
            let line = trace(&vel, v.grid().point(n), Direction::Backward, settings)?;
            Ok((summary(&line), [0.0; 3]))
        })?;
        Ok(Self::gather(v.grid(), per_node))
    }

    fn gather(grid: &Arc<CylGrid>, per_node: Vec<(NodeSummary, [f64; 3])>) -> Self {
        let n = grid.node_count();
        let mut feet = Vec::with_capacity(n);
        let (mut len, mut dur, mut err) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut min_speed = f64::INFINITY;
        let mut excursion = 0.0_f64;
        for (i, (s, _)) in per_node.iter().enumerate() {
            feet.push(s.foot);
            len[i] = s.length;
            dur[i] = s.duration;
            err[i] = s.error;
            min_speed = min_speed.min(s.min_vz);
            excursion = excursion.max(s.excursion);
        }
        let max_length = len.iter().fold(0.0_f64, |m, &v| m.max(v));
        Self {
            grid: grid.clone(),
            feet,
            lengths: ScalarField::from_values(grid, len).expect("node count"),
            durations: ScalarField::from_values(grid, dur).expect("node count"),
            errors: ScalarField::from_values(grid, err).expect("node count"),
            max_length,
            min_axial_speed: min_speed,
            mantle_excursion: excursion,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeSummary {
    foot: [f64; 3],
    length: f64,
    duration: f64,
    error: f64,
    min_vz: f64,
    excursion: f64,
}

fn summary(line: &Streamline) -> NodeSummary {
    NodeSummary {
        foot: line.points.last().expect("path has a seed point").x,
        length: line.length,
        duration: line.duration,
        error: line.error_estimate,
        min_vz: line.min_axial_speed,
        excursion: line.mantle_excursion,
    }
}

/// Evaluate `work` on every node; nodes on the axis share one evaluation per
/// plane. Results are gathered in node order.
fn run_nodes<T: Send + Clone>(g: &Arc<CylGrid>, work: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let reps: Vec<usize> = (0..g.node_count())
        .filter(|&n| {
            let (i, j, _) = g.ijk(n);
            i > 0 || j == 0
        })
        .collect();
    let computed: Vec<T> = reps.par_iter().map(|&n| work(n)).collect::<Result<_>>()?;
    let mut slot = vec![usize::MAX; g.node_count()];
    for (s, &n) in reps.iter().enumerate() {
        slot[n] = s;
    }
    Ok((0..g.node_count())
        .map(|n| {
            let (i, _, k) = g.ijk(n);
            let s = if i == 0 { slot[g.index(0, 0, k)] } else { slot[n] };
            computed[s].clone()
        })
        .collect())
}

/// Transported vorticity with its characteristics.
#[derive(Debug, Clone)]
pub struct TransportField {
    /// Cylindrical components.
    pub f: VectorField,
    pub characteristics: Characteristics,
}

/// Velocity and its Cartesian gradient, bundled for path integration.
struct JacobianSampler {
    interp: Interpolator,
}

impl JacobianSampler {
    fn new(v: &VectorField, scheme: ThetaScheme) -> Result<Self> {
        let g = v.grid();
        let jac = cartesian_jacobian(v)?;
        let cart = v.to_cartesian();
        let mut data = vec![cart.component(2).to_vec()];
        for row in &jac {
            for c in row {
                data.push(c.values().to_vec());
            }
        }
        Ok(Self {
            interp: Interpolator::new(g, data, vec![1.0; 10], scheme)?,
        })
    }

    /// `J / v_z` at `x`.
    fn at(&self, x: [f64; 3]) -> Result<[[f64; 3]; 3]> {
        let mut out = [0.0; 10];
        self.interp
            .eval(CylPoint::from_cartesian(project(self.interp.grid(), x).0), &mut out)?;
        let inv = 1.0 / out[0];
        let mut a = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = out[1 + 3 * r + c] * inv;
            }
        }
        Ok(a)
    }
}

fn matvec(a: &[[f64; 3]; 3], f: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * f[0] + a[0][1] * f[1] + a[0][2] * f[2],
        a[1][0] * f[0] + a[1][1] * f[1] + a[1][2] * f[2],
        a[2][0] * f[0] + a[2][1] * f[1] + a[2][2] * f[2],
    ]
}

/// `f` at the top of `line` given its value at the foot, integrating
/// `df/dz = J f / v_z` upward with RK4 on the path's own samples.
fn integrate_along(line: &Streamline, jac: &JacobianSampler, foot_value: [f64; 3]) -> Result<[f64; 3]> {
    let mut f = foot_value;
    let pts = &line.points;
    let mut a_lo = jac.at(pts[pts.len() - 1].x)?;
    for m in (0..pts.len() - 1).rev() {
        let (lo, hi) = (&pts[m + 1], &pts[m]);
        let dz = hi.x[2] - lo.x[2];
        let a_mid = jac.at(hermite(lo, hi, 0.5))?;
        let a_hi = jac.at(hi.x)?;
        let k1 = matvec(&a_lo, &f);
        let k2 = matvec(&a_mid, &add_scaled(&f, 0.5 * dz, &k1));
        let k3 = matvec(&a_mid, &add_scaled(&f, 0.5 * dz, &k2));
        let k4 = matvec(&a_hi, &add_scaled(&f, dz, &k3));
        for c in 0..3 {
            f[c] += dz / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        a_lo = a_hi;
    }
    Ok(f)
}

fn add_scaled(f: &[f64; 3], a: f64, k: &[f64; 3]) -> [f64; 3] {
    [f[0] + a * k[0], f[1] + a * k[1], f[2] + a * k[2]]
}

/// Solve `(v . grad) f = (f . grad) v` with `f = f0` on the inflow cap.
///
/// Only the inflow plane of `f0` is read.
pub fn solve_transport(v: &VectorField, f0: &VectorField, settings: &TraceSettings) -> Result<TransportField> {
    v.same_grid(f0)?;
    let g = v.grid().clone();
    let vel = VelocitySampler::new(v, settings.scheme);
    let jac = JacobianSampler::new(v, settings.scheme)?;
    let f0c = f0.to_cartesian();
    let foot_interp = Interpolator::vector(&f0c, settings.scheme);
    let per_node = run_nodes(&g, |n| {
        let (_, _, k) = g.ijk(n);
        if k == 0 {
            let p = g.point(n);
            let here = [p.to_cartesian()[0], p.to_cartesian()[1], 0.0];
            let s = NodeSummary {
                foot: here,
                length: 0.0,
                duration: 0.0,
                error: 0.0,
                min_vz: f64::INFINITY,
                excursion: 0.0,
            };
            return Ok((s, f0c.get(n)));
        }
        let line = trace(&vel, g.point(n), Direction::Backward, settings)?;
        let s = summary(&line);
        let mut at_foot = [0.0; 3];
        foot_interp.eval_on_plane(CylPoint::from_cartesian(s.foot), 0, &mut at_foot)?;
        Ok((s, integrate_along(&line, &jac, at_foot)?))
    })?;
    let mut f = VectorField::zeros(&g, Frame::Cylindrical);
    for (n, (_, fc)) in per_node.iter().enumerate() {
        f.set(n, cart_to_cyl(g.point(n).theta, *fc));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("transported vorticity"));
    }
    Ok(TransportField {
        f,
        characteristics: Characteristics::gather(&g, per_node),
    })
}

/// Carry inflow values `s0` along known characteristics.
pub fn transport_scalar_along(chars: &Characteristics, s0: &ScalarField) -> Result<ScalarField> {
    let g = chars.grid();
    if **s0.grid() != **g {
        return Err(Error::GridMismatch);
    }
    let interp = Interpolator::scalar(s0, ThetaScheme::Spectral);
    let mut out = ScalarField::zeros(g);
    for n in 0..g.node_count() {
        let (_, _, k) = g.ijk(n);
        out.values_mut()[n] = if k == 0 {
            s0.values()[n]
        } else {
            let mut v = [0.0];
            interp.eval_on_plane(CylPoint::from_cartesian(chars.feet[n]), 0, &mut v)?;
            v[0]
        };
    }
    Ok(out)
}

/// Solve `(v . grad) s = 0` with `s = s0` on the inflow cap.
pub fn transport_scalar(v: &VectorField, s0: &ScalarField, settings: &TraceSettings) -> Result<ScalarField> {
    transport_scalar_along(&Characteristics::compute(v, settings)?, s0)
}

/// Measured constants of the transport estimates. Ratios with a vanishing
/// denominator are reported as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportEstimates {
    /// `|f|_L2 / |f0|_L2(cap)`.
    pub l2_ratio: f64,
    /// `|f|_H1 / |f0|_H1(cap)`.
    pub h1_ratio: f64,
    /// `|f2 - f1|_L2 / (|f0|_H1(cap) |v2 - v1|_H1)`.
    pub difference_ratio: Option<f64>,
}

/// Two transport solutions for the same `f0` and different velocities.
#[derive(Debug, Clone, Copy)]
pub struct TransportPair<'a> {
    pub f1: &'a VectorField,
    pub v1: &'a VectorField,
    pub f2: &'a VectorField,
    pub v2: &'a VectorField,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn estimates_probe(
    f: &VectorField,
    f0: &VectorField,
    pair: Option<TransportPair<'_>>,
) -> Result<TransportEstimates> {
    let f0_l2 = cap_norm_vector(f0, 0, NormKind::L2);
    let f0_h1 = cap_norm_vector(f0, 0, NormKind::H1);
    let difference_ratio = match pair {
        None => None,
        Some(p) => {
            let df = norm_vector(&p.f2.sub(p.f1)?, NormKind::L2);
            let dv = norm_vector(&p.v2.in_frame(p.v1.frame()).sub(p.v1)?, NormKind::H1);
            Some(ratio(df, f0_h1 * dv))
        }
    };
    Ok(TransportEstimates {
        l2_ratio: ratio(norm_vector(f, NormKind::L2), f0_l2),
        h1_ratio: ratio(norm_vector(f, NormKind::H1), f0_h1),
        difference_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::ColumnarSwirl;
    use crate::grid::{build_grid, NodeTag};

    fn uniform(g: &Arc<CylGrid>) -> VectorField {
        VectorField::from_fn(g, Frame::Cylindrical, |_| [0.0, 0.0, 1.0])
    }

    #[test]
    fn straight_segment_for_uniform_flow() {
        let g = build_grid(1.0, 2.0, 8, 8, 9).unwrap();
        let v = uniform(&g);
        let s = TraceSettings::for_velocity(&v, 1.0);
        let vel = VelocitySampler::new(&v, s.scheme);
        let seed = CylPoint::new(0.37, 1.1, 1.0);
        let line = trace(&vel, seed, Direction::Backward, &s).unwrap();
        assert_eq!(line.terminal, Terminal::Inflow);
        assert!((line.length - 1.0).abs() < 1e-12);
        assert!((line.duration - 1.0).abs() < 1e-12);
        let end = line.end();
        assert!((end.r - 0.37).abs() < 1e-12 && (end.theta - 1.1).abs() < 1e-12 && end.z == 0.0);
        let fwd = trace(&vel, seed, Direction::Forward, &s).unwrap();
        assert_eq!(fwd.end().z, 2.0);
    }

    #[test]
    fn helix_length_matches_closed_form() {
        let sw = ColumnarSwirl::new(1.0, 0.05);
        let g = build_grid(1.0, 1.5, 17, 16, 13).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
        let s = TraceSettings::for_velocity(&v, 1.0).with_scheme(ThetaScheme::Spectral);
        let vel = VelocitySampler::new(&v, s.scheme);
        for &r0 in &[0.2, 0.45, 0.8] {
            let line = trace(&vel, CylPoint::new(r0, 0.3, 1.5), Direction::Backward, &s).unwrap();
            let vv = sw.swirl(r0);
            let expect = 1.5 * (vv * vv + 1.0).sqrt();
            assert!(
                (line.length - expect).abs() < 1e-6,
                "r0 {r0}: {} vs {expect}",
                line.length
            );
            let end = line.end();
            assert!((end.r - r0).abs() < 1e-6);
            let turn = end.theta - (0.3 - 1.5 * vv / r0);
            assert!(turn.sin().abs() < 1e-6 && turn.cos() > 0.0);
        }
    }

    #[test]
    fn zero_axial_speed_is_stagnation() {
        let g = build_grid(1.0, 1.0, 6, 8, 7).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, 0.0, 2.0 * (p.z - 0.5).abs()]);
        let s = TraceSettings::for_velocity(&v, 1.0);
        let err = solve_transport(&v, &VectorField::zeros(&g, Frame::Cylindrical), &s).unwrap_err();
        assert!(matches!(err, Error::StagnationDetected { .. }), "{err}");
        assert!(err.is_hypothesis_violation());
    }

    #[test]
    fn uniform_flow_carries_inflow_values_unchanged() {
        let g = build_grid(1.0, 2.0, 9, 8, 9).unwrap();
        let v = uniform(&g);
        let f0 = VectorField::from_fn(&g, Frame::Cartesian, |p| {
            let b = (1.0 - p.r * p.r).powi(2);
            let x = p.to_cartesian();
            [0.1 * b, -0.2 * b * x[1], b * x[0]]
        })
        .to_cylindrical();
        let s = TraceSettings::for_velocity(&v, 1.0);
        let t = solve_transport(&v, &f0, &s).unwrap();
        for n in 0..g.node_count() {
            let (i, j, _) = g.ijk(n);
            let a = t.f.get(n);
            let b = f0.get(g.index(i, j, 0));
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12, "node {n}");
            }
        }
        let est = estimates_probe(&t.f, &f0, None).unwrap();
        assert!((est.l2_ratio - 2f64.sqrt()).abs() < 1e-10, "{est:?}");
        let zero = solve_transport(&v, &VectorField::zeros(&g, Frame::Cylindrical), &s).unwrap();
        assert_eq!(zero.f.max_abs(), 0.0);
        assert_eq!(estimates_probe(&zero.f, &zero.f, None).unwrap().l2_ratio, 0.0);
    }

    #[test]
    fn columnar_vorticity_is_transported_exactly() {
        let sw = ColumnarSwirl::new(1.0, 0.05);
        let g = build_grid(1.0, 1.0, 13, 16, 9).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
        let w = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.vorticity_vector(p));
        let s = TraceSettings::for_velocity(&v, 1.0);
        let t = solve_transport(&v, &w, &s).unwrap();
        let err = t.f.sub(&w).unwrap().max_abs();
        assert!(err < 1e-5, "max error {err}");
        // outflow edge nodes inherit the zero inflow edge values
        for n in 0..g.node_count() {
            let (i, _, k) = g.ijk(n);
            if g.tag(i, k) == NodeTag::EdgePlus {
                assert!(t.f.get(n).iter().all(|c| c.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn scalar_is_constant_on_helices() {
        let sw = ColumnarSwirl::new(1.0, 0.05);
        let g = build_grid(1.0, 1.0, 13, 16, 9).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
        let s = TraceSettings::for_velocity(&v, 1.0).with_scheme(ThetaScheme::Spectral);
        let chars = Characteristics::compute(&v, &s).unwrap();
        let one = transport_scalar_along(&chars, &ScalarField::constant(&g, 1.0)).unwrap();
        assert!(one.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let prof = |p: CylPoint| (1.0 - p.r * p.r).powi(2);
        let s0 = ScalarField::from_fn(&g, |p| if p.z == 0.0 { prof(p) } else { 0.0 });
        let out = transport_scalar_along(&chars, &s0).unwrap();
        let expect = ScalarField::from_fn(&g, prof);
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn linear_in_inflow_vorticity() {
        let sw = ColumnarSwirl::new(1.0, 0.1);
        let g = build_grid(1.0, 1.0, 9, 8, 7).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| {
            let u = sw.velocity(p);
            [0.02 * p.r * (1.0 - p.r) * p.theta.cos(), u[1], u[2] + 0.05 * p.r * p.r]
        });
        let a = VectorField::from_fn(&g, Frame::Cylindrical, |p| {
            [p.r * (1.0 - p.r), 0.3 * p.r, 1.0 - p.r * p.r]
        });
        let b = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, p.r * p.theta.sin(), p.r]);
        let s = TraceSettings::for_velocity(&v, 1.0);
        let fa = solve_transport(&v, &a, &s).unwrap().f;
        let fb = solve_transport(&v, &b, &s).unwrap().f;
        let fab = solve_transport(&v, &a.lincomb(2.0, &b, -3.0).unwrap(), &s).unwrap().f;
        let diff = fab.sub(&fa.lincomb(2.0, &fb, -3.0).unwrap()).unwrap().max_abs();
        assert!(diff < 1e-12 * (1.0 + fab.max_abs()), "{diff}");
        let same = TransportPair {
            f1: &fa,
            v1: &v,
            f2: &fa,
            v2: &v,
        };
        assert_eq!(
            estimates_probe(&fa, &a, Some(same)).unwrap().difference_ratio,
            Some(0.0)
        );
    }
}
