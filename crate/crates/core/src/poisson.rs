//! Poisson problems on the cylinder with Dirichlet, Neumann or Robin data on
//! each of the three faces.
//!
//! The `theta` direction is diagonalized by the ring transform; every Fourier
//! mode `m` leaves a two-dimensional problem in `(r, z)` for
//! `u_rr + u_r / r - m^2 u / r^2 + u_zz`, discretized with the same
//! second-order stencils as [`crate::ops`] and solved by banded LU. Unknowns
//! of a mode are ordered `k * n_r + i`.
//!
//! Axis rows use the regular expansion of the Laplacian at `r = 0`: the
//! axisymmetric mode obeys `4 (u_1 - u_0) / dr^2 + u_zz = f`, every other
//! mode vanishes on the axis.
//!
//! At an edge node the cap condition is imposed unless only the mantle is
//! Dirichlet.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{CylGrid, Face, NodeTag};
use crate::norm::{norm_scalar, NormKind};

/// Relative tolerance of the flux balance required by all-Neumann problems.
pub const BALANCE_TOLERANCE: f64 = 1e-8;
/// Pass threshold of the value-type compatibility conditions.
pub const COMPAT_TOLERANCE: f64 = 1e-8;

/// Boundary operator on one face; `n` is the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BcKind {
    /// `u = data`.
    Dirichlet,
    /// `du/dn = data`.
    Neumann,
    /// `du/dn + alpha u = data`.
    Robin(f64),
}

impl BcKind {
    fn alpha(self) -> f64 {
        match self {
            BcKind::Dirichlet | BcKind::Neumann => 0.0,
            BcKind::Robin(a) => a,
        }
    }

    fn is_dirichlet(self) -> bool {
        matches!(self, BcKind::Dirichlet)
    }

    /// Neumann or Robin with zero coefficient.
    fn is_pure_neumann(self) -> bool {
        matches!(self, BcKind::Neumann) || matches!(self, BcKind::Robin(a) if a == 0.0)
    }
}

/// Condition on one face. `data` is read only at nodes of that face; `None`
/// means homogeneous data.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceBc {
    pub kind: BcKind,
    pub data: Option<ScalarField>,
}

impl FaceBc {
    pub fn homogeneous(kind: BcKind) -> Self {
        Self { kind, data: None }
    }

    pub fn with_data(kind: BcKind, data: ScalarField) -> Self {
        Self { kind, data: Some(data) }
    }

    fn value(&self, n: usize) -> f64 {
        self.data.as_ref().map_or(0.0, |d| d.values()[n])
    }
}

/// How the additive constant is fixed when every face carries a pure
/// Neumann condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Gauge {
    /// The problem must already be uniquely solvable.
    #[default]
    Unique,
    /// All-Neumann problem; return the solution with zero mean.
    MeanZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcSpec {
    pub inflow: FaceBc,
    pub outflow: FaceBc,
    pub mantle: FaceBc,
    pub gauge: Gauge,
}

impl BcSpec {
    pub fn new(inflow: FaceBc, outflow: FaceBc, mantle: FaceBc) -> Self {
        Self {
            inflow,
            outflow,
            mantle,
            gauge: Gauge::Unique,
        }
    }

    /// Same Dirichlet data field on all three faces.
    pub fn dirichlet(data: ScalarField) -> Self {
        let f = FaceBc::with_data(BcKind::Dirichlet, data);
        Self::new(f.clone(), f.clone(), f)
    }

    pub fn homogeneous(inflow: BcKind, outflow: BcKind, mantle: BcKind) -> Self {
        Self::new(
            FaceBc::homogeneous(inflow),
            FaceBc::homogeneous(outflow),
            FaceBc::homogeneous(mantle),
        )
    }

    pub fn with_gauge(mut self, gauge: Gauge) -> Self {
        self.gauge = gauge;
        self
    }

    pub fn face(&self, face: Face) -> &FaceBc {
        match face {
            Face::Inflow => &self.inflow,
            Face::Outflow => &self.outflow,
            Face::Mantle => &self.mantle,
        }
    }

    pub fn kinds(&self) -> FaceKinds {
        FaceKinds {
            inflow: self.inflow.kind,
            outflow: self.outflow.kind,
            mantle: self.mantle.kind,
        }
    }
}

/// Boundary operator kinds only; determines the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaceKinds {
    pub inflow: BcKind,
    pub outflow: BcKind,
    pub mantle: BcKind,
}

/// Which equation a node of the `(r, z)` plane carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    Interior,
    Axis,
    Boundary(Face),
}

pub(crate) fn row_kind(g: &CylGrid, kinds: &FaceKinds, i: usize, k: usize) -> RowKind {
    let cap = if k == 0 {
        Some((Face::Inflow, kinds.inflow))
    } else if k == g.n_z() - 1 {
        Some((Face::Outflow, kinds.outflow))
    } else {
        None
    };
    let mantle = i == g.n_r() - 1;
    match (cap, mantle) {
        (Some((f, kind)), true) => {
            if !kind.is_dirichlet() && kinds.mantle.is_dirichlet() {
                RowKind::Boundary(Face::Mantle)
            } else {
                RowKind::Boundary(f)
            }
        }
        (Some((f, _)), false) => RowKind::Boundary(f),
        (None, true) => RowKind::Boundary(Face::Mantle),
        (None, false) if i == 0 => RowKind::Axis,
        (None, false) => RowKind::Interior,
    }
}

/// Squared angular wavenumber of mode `m`; the Nyquist mode uses `(n/2)^2`.
pub(crate) fn wavenumber_sq(m: usize) -> f64 {
    (m * m) as f64
}

/// Stencil entries `(i, k, coef)` of the mode-`m` Laplacian at an interior
/// or axis node.
pub(crate) fn laplace_entries(g: &CylGrid, i: usize, k: usize, m2: f64) -> Vec<(usize, usize, f64)> {
    let (dr, dz) = (g.dr(), g.dz());
    let (idr2, idz2) = (1.0 / (dr * dr), 1.0 / (dz * dz));
    let mut e = Vec::with_capacity(5);
    if i == 0 {
        e.push((0, k, -4.0 * idr2 - 2.0 * idz2));
        e.push((1, k, 4.0 * idr2));
    } else {
        let r = g.r(i);
        let h = 0.5 / (r * dr);
        e.push((i - 1, k, idr2 - h));
        e.push((i, k, -2.0 * idr2 - 2.0 * idz2 - m2 / (r * r)));
        e.push((i + 1, k, idr2 + h));
    }
    e.push((i, k - 1, idz2));
    e.push((i, k + 1, idz2));
    e
}

/// Stencil entries of the boundary operator of `face` at `(i, k)`.
pub(crate) fn boundary_entries(g: &CylGrid, face: Face, kind: BcKind, i: usize, k: usize) -> Vec<(usize, usize, f64)> {
    if kind.is_dirichlet() {
        return vec![(i, k, 1.0)];
    }
    let alpha = kind.alpha();
    match face {
        Face::Inflow => {
            let h = 0.5 / g.dz();
            vec![(i, 0, 3.0 * h + alpha), (i, 1, -4.0 * h), (i, 2, h)]
        }
        Face::Outflow => {
            let h = 0.5 / g.dz();
            let n = g.n_z() - 1;
            vec![(i, n, 3.0 * h + alpha), (i, n - 1, -4.0 * h), (i, n - 2, h)]
        }
        Face::Mantle => {
            let h = 0.5 / g.dr();
            let n = g.n_r() - 1;
            vec![(n, k, 3.0 * h + alpha), (n - 1, k, -4.0 * h), (n - 2, k, h)]
        }
    }
}

/// Fourier coefficients of a node field arranged per mode slot:
/// `out[slot][k * n_r + i]`.
pub(crate) fn to_modes(g: &CylGrid, values: &[f64]) -> Vec<Vec<f64>> {
    let (nr, nt, nz) = (g.n_r(), g.n_theta(), g.n_z());
    let mut out = vec![vec![0.0; nr * nz]; nt];
    let mut vals = vec![0.0; nt];
    let mut coeffs = vec![0.0; nt];
    for k in 0..nz {
        for i in 0..nr {
            for (j, v) in vals.iter_mut().enumerate() {
                *v = values[g.index(i, j, k)];
            }
            g.ring().forward(&vals, &mut coeffs);
            for (s, c) in coeffs.iter().enumerate() {
                out[s][k * nr + i] = *c;
            }
        }
    }
    out
}

pub(crate) fn from_modes(g: &CylGrid, modes: &[Vec<f64>]) -> Vec<f64> {
    let (nr, nt, nz) = (g.n_r(), g.n_theta(), g.n_z());
    let mut out = vec![0.0; g.node_count()];
    let mut vals = vec![0.0; nt];
    let mut coeffs = vec![0.0; nt];
    for k in 0..nz {
        for i in 0..nr {
            for (s, c) in coeffs.iter_mut().enumerate() {
                *c = modes[s][k * nr + i];
            }
            g.ring().inverse(&coeffs, &mut vals);
            for (j, v) in vals.iter().enumerate() {
                out[g.index(i, j, k)] = *v;
            }
        }
    }
    out
}

/// Mode number of every coefficient slot.
pub(crate) fn slot_modes(g: &CylGrid) -> Vec<usize> {
    let nt = g.n_theta();
    (0..nt)
        .map(|s| {
            if s == 0 {
                0
            } else if s == nt - 1 {
                nt / 2
            } else {
                s.div_ceil(2)
            }
        })
        .collect()
}

fn assemble(g: &CylGrid, kinds: &FaceKinds, m: usize) -> BandMatrix {
    let (nr, nz) = (g.n_r(), g.n_z());
    let n = nr * nz;
    let band = 2 * nr;
    let mut a = BandMatrix::zeros(n, band, band);
    let m2 = wavenumber_sq(m);
    for k in 0..nz {
        for i in 0..nr {
            let row = k * nr + i;
            let entries = match row_kind(g, kinds, i, k) {
                RowKind::Axis | RowKind::Boundary(_) if i == 0 && m != 0 => vec![(0, k, 1.0)],
                RowKind::Interior | RowKind::Axis => laplace_entries(g, i, k, m2),
                RowKind::Boundary(face) => boundary_entries(g, face, face_kind(kinds, face), i, k),
            };
            for (ii, kk, c) in entries {
                a.add(row, kk * nr + ii, c);
            }
        }
    }
    a
}

fn face_kind(kinds: &FaceKinds, face: Face) -> BcKind {
    match face {
        Face::Inflow => kinds.inflow,
        Face::Outflow => kinds.outflow,
        Face::Mantle => kinds.mantle,
    }
}

/// Mode-0 machinery of the all-Neumann problem: the interior node `pin`
/// replaces its equation by `u = 0`; `z` solves the pinned system with the
/// equation-row indicator as right-hand side.
#[derive(Debug, Clone)]
struct NeumannGauge {
    pin: usize,
    full: BandMatrix,
    z: Vec<f64>,
    z_defect: f64,
}

/// Factorized Poisson operator for fixed boundary kinds.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: Arc<CylGrid>,
    kinds: FaceKinds,
    gauge: Gauge,
    factors: Vec<BandLu>,
    neumann: Option<NeumannGauge>,
}

/// Output of [`PoissonSolver::solve`].
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub u: ScalarField,
    /// Constant removed from the right-hand side of the equation rows to
    /// make an all-Neumann system consistent; zero otherwise.
    pub solvability_defect: f64,
    /// `L2` norm of `laplacian(u) - rhs` over the equation rows, relative to
    /// `1 + |rhs|`.
    pub relative_residual: f64,
}

impl PoissonSolver {
    pub fn new(grid: &Arc<CylGrid>, bc: &BcSpec) -> Result<Self> {
        Self::with_kinds(grid, bc.kinds(), bc.gauge)
    }

    pub fn with_kinds(grid: &Arc<CylGrid>, kinds: FaceKinds, gauge: Gauge) -> Result<Self> {
        let g = &**grid;
        for kind in [kinds.inflow, kinds.outflow, kinds.mantle] {
            if let BcKind::Robin(a) = kind {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidBoundary(format!(
                        "Robin coefficient must be finite and >= 0, got {a}"
                    )));
                }
            }
        }
        let singular = [kinds.inflow, kinds.outflow, kinds.mantle]
            .iter()
            .all(|k| k.is_pure_neumann());
        match (singular, gauge) {
            (true, Gauge::Unique) => {
                return Err(Error::InvalidBoundary(
                    "all faces carry Neumann conditions; request the mean-zero gauge explicitly".into(),
                ))
            }
            (false, Gauge::MeanZero) => {
                return Err(Error::InvalidBoundary(
                    "mean-zero gauge requested although a Dirichlet or Robin face fixes the constant".into(),
                ))
            }
            _ => {}
        }
        let nt = g.n_theta();
        let modes: Vec<usize> = (0..=nt / 2).collect();
        let mut neumann = None;
        let factors = modes
            .par_iter()
            .map(|&m| {
                let mut a = assemble(g, &kinds, m);
                if m == 0 && singular {
                    let nr = g.n_r();
                    let pin = (g.n_z() / 2) * nr + nr / 2;
                    a.clear_row(pin);
                    a.add(pin, pin, 1.0);
                }
                a.factor()
            })
            .collect::<Result<Vec<_>>>()?;
        if singular {
            let full = assemble(g, &kinds, 0);
            let nr = g.n_r();
            let pin = (g.n_z() / 2) * nr + nr / 2;
            let mut z: Vec<f64> = (0..nr * g.n_z())
                .map(|p| match row_kind(g, &kinds, p % nr, p / nr) {
                    RowKind::Interior | RowKind::Axis => 1.0,
                    RowKind::Boundary(_) => 0.0,
                })
                .collect();
            z[pin] = 0.0;
            factors[0].solve(&mut z);
            let z_defect = full.matvec(&z)[pin] - 1.0;
            if z_defect.abs() < 1e-300 {
                return Err(Error::SolverFailure("degenerate all-Neumann gauge".into()));
            }
            neumann = Some(NeumannGauge { pin, full, z, z_defect });
        }
        Ok(Self {
            grid: grid.clone(),
            kinds,
            gauge,
            factors,
            neumann,
        })
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn kinds(&self) -> FaceKinds {
        self.kinds
    }

    /// Mode-wise right-hand sides: equation rows carry `rhs`, boundary rows
    /// the face data.
    fn mode_rhs(&self, rhs: &ScalarField, bc: &BcSpec) -> Vec<Vec<f64>> {
        let g = &*self.grid;
        let (nr, nz) = (g.n_r(), g.n_z());
        let mut merged = rhs.values().to_vec();
        for k in 0..nz {
            for i in 0..nr {
                if let RowKind::Boundary(face) = row_kind(g, &self.kinds, i, k) {
                    let fb = bc.face(face);
                    for j in 0..g.n_theta() {
                        let n = g.index(i, j, k);
                        merged[n] = fb.value(n);
                    }
                }
            }
        }
        let mut modes = to_modes(g, &merged);
        // regularity: only the axisymmetric mode is nonzero on the axis
        for (s, m) in slot_modes(g).into_iter().enumerate() {
            if m != 0 {
                for k in 0..nz {
                    modes[s][k * nr] = 0.0;
                }
            }
        }
        modes
    }

    pub fn solve(&self, rhs: &ScalarField, bc: &BcSpec) -> Result<PoissonSolution> {
        let g = &*self.grid;
        if **rhs.grid() != *g {
            return Err(Error::GridMismatch);
        }
        if bc.kinds() != self.kinds || bc.gauge != self.gauge {
            return Err(Error::InvalidBoundary(
                "boundary kinds differ from the factorized operator".into(),
            ));
        }
        for face in Face::ALL {
            if let Some(d) = &bc.face(face).data {
                if **d.grid() != *g {
                    return Err(Error::GridMismatch);
                }
            }
        }
        if !rhs.is_finite() {
            return Err(Error::NonFinite("Poisson right-hand side"));
        }
        if self.neumann.is_some() {
            check_balance(rhs, bc)?;
        }
        let mut modes = self.mode_rhs(rhs, bc);
        let slot_m = slot_modes(g);
        let mut defect = 0.0;
        if let Some(ng) = &self.neumann {
            let b = modes[0].clone();
            let mut u = b.clone();
            u[ng.pin] = 0.0;
            self.factors[0].solve(&mut u);
            let delta = ng.full.matvec(&u)[ng.pin] - b[ng.pin];
            defect = delta / ng.z_defect;
            for (x, z) in u.iter_mut().zip(&ng.z) {
                *x -= defect * z;
            }
            modes[0] = u;
        }
        let skip0 = self.neumann.is_some();
        modes.par_iter_mut().enumerate().for_each(|(s, b)| {
            if !(s == 0 && skip0) {
                self.factors[slot_m[s]].solve(b);
            }
        });
        let values = from_modes(g, &modes);
        let mut u = ScalarField::from_values(&self.grid, values)?;
        if self.neumann.is_some() {
            let mean = u.mean();
            u.values_mut().iter_mut().for_each(|v| *v -= mean);
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("Poisson solution"));
        }
        let relative_residual = self.relative_residual(&u, rhs, defect);
        if relative_residual > 1e-10 {
            return Err(Error::SolverFailure(format!(
                "residual {relative_residual:.3e} above 1e-10"
            )));
        }
        Ok(PoissonSolution {
            u,
            solvability_defect: defect,
            relative_residual,
        })
    }

    fn relative_residual(&self, u: &ScalarField, rhs: &ScalarField, defect: f64) -> f64 {
        let g = &*self.grid;
        let lap = discrete_laplacian(u);
        let mut diff = ScalarField::zeros(&self.grid);
        let mut target = ScalarField::zeros(&self.grid);
        for n in 0..g.node_count() {
            let (i, _, k) = g.ijk(n);
            if matches!(row_kind(g, &self.kinds, i, k), RowKind::Interior | RowKind::Axis) {
                diff.values_mut()[n] = lap.values()[n] - (rhs.values()[n] - defect);
                target.values_mut()[n] = rhs.values()[n];
            }
        }
        norm_scalar(&diff, NormKind::L2) / (1.0 + norm_scalar(&target, NormKind::L2))
    }
}

/// One-shot solve.
pub fn solve(rhs: &ScalarField, bc: &BcSpec) -> Result<ScalarField> {
    Ok(PoissonSolver::new(rhs.grid(), bc)?.solve(rhs, bc)?.u)
}

/// `(volume integral of rhs, boundary integral of the Neumann data)`.
pub fn flux_balance(rhs: &ScalarField, bc: &BcSpec) -> (f64, f64) {
    let g = rhs.grid();
    let mut vol = 0.0;
    for k in 0..g.n_z() {
        for j in 0..g.n_theta() {
            for i in 0..g.n_r() {
                vol += g.volume_weight(i, k) * rhs.at(i, j, k);
            }
        }
    }
    let mut surf = 0.0;
    for j in 0..g.n_theta() {
        for i in 0..g.n_r() {
            surf += g.cap_weight(i) * bc.inflow.value(g.index(i, j, 0));
            surf += g.cap_weight(i) * bc.outflow.value(g.index(i, j, g.n_z() - 1));
        }
        for k in 0..g.n_z() {
            surf += g.mantle_weight(k) * bc.mantle.value(g.index(g.n_r() - 1, j, k));
        }
    }
    (vol, surf)
}

fn check_balance(rhs: &ScalarField, bc: &BcSpec) -> Result<()> {
    let (vol, surf) = flux_balance(rhs, bc);
    let abs_rhs = rhs.map(f64::abs);
    let abs_bc = BcSpec::new(
        FaceBc::with_data(BcKind::Neumann, abs_field(&bc.inflow, rhs.grid())),
        FaceBc::with_data(BcKind::Neumann, abs_field(&bc.outflow, rhs.grid())),
        FaceBc::with_data(BcKind::Neumann, abs_field(&bc.mantle, rhs.grid())),
    );
    let (svol, ssurf) = flux_balance(&abs_rhs, &abs_bc);
    let scale = svol + ssurf;
    if (vol - surf).abs() > BALANCE_TOLERANCE * scale.max(f64::MIN_POSITIVE) && (vol - surf).abs() > 0.0 {
        return Err(Error::IncompatibleData(format!(
            "all-Neumann problem needs volume integral = boundary flux: {vol:.6e} vs {surf:.6e}"
        )));
    }
    Ok(())
}

fn abs_field(f: &FaceBc, g: &Arc<CylGrid>) -> ScalarField {
    f.data
        .as_ref()
        .map_or_else(|| ScalarField::zeros(g), |d| d.map(f64::abs))
}

/// Discrete Laplacian matching the solver's equation rows; boundary rows
/// are left at zero.
pub fn discrete_laplacian(u: &ScalarField) -> ScalarField {
    let g = u.grid().clone();
    let (nr, nz) = (g.n_r(), g.n_z());
    let modes = to_modes(&g, u.values());
    let slot_m = slot_modes(&g);
    let out_modes: Vec<Vec<f64>> = modes
        .iter()
        .enumerate()
        .map(|(s, um)| {
            let m = slot_m[s];
            let mut o = vec![0.0; nr * nz];
            for k in 1..nz - 1 {
                for i in 0..nr - 1 {
                    if i == 0 && m != 0 {
                        continue;
                    }
                    o[k * nr + i] = laplace_entries(&g, i, k, wavenumber_sq(m))
                        .into_iter()
                        .map(|(ii, kk, c)| c * um[kk * nr + ii])
                        .sum();
                }
            }
            o
        })
        .collect();
    ScalarField::from_values(&g, from_modes(&g, &out_modes)).expect("same grid")
}

/// Largest violation of the boundary conditions by `u`, using the solver's
/// one-sided stencils.
pub fn boundary_residual(u: &ScalarField, bc: &BcSpec) -> f64 {
    let g = u.grid();
    let kinds = bc.kinds();
    let mut worst = 0.0_f64;
    for k in 0..g.n_z() {
        for i in 0..g.n_r() {
            let RowKind::Boundary(face) = row_kind(g, &kinds, i, k) else {
                continue;
            };
            let entries = boundary_entries(g, face, face_kind(&kinds, face), i, k);
            for j in 0..g.n_theta() {
                let lhs: f64 = entries.iter().map(|&(ii, kk, c)| c * u.at(ii, j, kk)).sum();
                let n = g.index(i, j, k);
                worst = worst.max((lhs - bc.face(face).value(n)).abs());
            }
        }
    }
    worst
}

/// Result of checking one edge circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeCompat {
    /// `EdgeMinus` or `EdgePlus`.
    pub edge: NodeTag,
    pub cap_kind: BcKind,
    pub mantle_kind: BcKind,
    /// Whether the data cross condition is required at this level.
    pub data_condition_applies: bool,
    pub data_violation: f64,
    pub data_threshold: f64,
    /// Whether `rhs = 0` on the edge is required at this level.
    pub rhs_condition_applies: bool,
    pub rhs_violation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub level: i32,
    pub edges: Vec<EdgeCompat>,
}

impl CompatReport {
    pub fn passed(&self) -> bool {
        self.edges.iter().all(|e| e.passed)
    }

    pub fn max_violation(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let d = if e.data_condition_applies {
                    e.data_violation
                } else {
                    0.0
                };
                let r = if e.rhs_condition_applies { e.rhs_violation } else { 0.0 };
                d.max(r)
            })
            .fold(0.0, f64::max)
    }
}

/// Check the edge compatibility conditions between the boundary data and
/// the right-hand side at regularity level `level` in `{-1, 0, 1}`.
///
/// With `J = 1` for a Dirichlet face and `0` otherwise and `K` the sum over
/// the two faces meeting at an edge, the data condition
/// `B_mantle(data_cap) = B_cap(data_mantle)` applies when `level + K >= 1`
/// and `rhs = 0` applies when `K = 2` and `level = 1`. Conditions that
/// involve a derivative of the data are evaluated with one-sided stencils
/// and pass below `max(1e-8, h^2)` times the data scale.
pub fn check_compatibility(rhs: &ScalarField, bc: &BcSpec, level: i32) -> Result<CompatReport> {
    if !(-1..=1).contains(&level) {
        return Err(Error::InvalidBoundary(format!(
            "compatibility level must be -1, 0 or 1, got {level}"
        )));
    }
    let g = rhs.grid();
    for face in Face::ALL {
        if let Some(d) = &bc.face(face).data {
            d.same_grid(rhs)?;
        }
    }
    let (nr, nz) = (g.n_r(), g.n_z());
    let edge_r = nr - 1;
    let mut edges = Vec::new();
    for (tag, cap_face, k) in [
        (NodeTag::EdgeMinus, Face::Inflow, 0),
        (NodeTag::EdgePlus, Face::Outflow, nz - 1),
    ] {
        let cap = bc.face(cap_face);
        let mantle = &bc.mantle;
        let jsum = cap.kind.is_dirichlet() as i32 + mantle.kind.is_dirichlet() as i32;
        // outward normal derivative of mantle data along z, seen from the cap
        let cap_sign = if cap_face == Face::Inflow { -1.0 } else { 1.0 };
        let d_r_cap = |j: usize| {
            let at = |i: usize| cap.value(g.index(i, j, k));
            0.5 * (3.0 * at(edge_r) - 4.0 * at(edge_r - 1) + at(edge_r - 2)) / g.dr()
        };
        let d_n_mantle = |j: usize| {
            let at = |kk: usize| mantle.value(g.index(edge_r, j, kk));
            let d = if k == 0 {
                0.5 * (-3.0 * at(0) + 4.0 * at(1) - at(2)) / g.dz()
            } else {
                0.5 * (3.0 * at(k) - 4.0 * at(k - 1) + at(k - 2)) / g.dz()
            };
            cap_sign * d
        };
        let mut data_violation = 0.0_f64;
        let mut scale = 0.0_f64;
        for j in 0..g.n_theta() {
            let n = g.index(edge_r, j, k);
            let (zc, zm) = (cap.value(n), mantle.value(n));
            scale = scale.max(zc.abs()).max(zm.abs());
            let v = match (cap.kind.is_dirichlet(), mantle.kind.is_dirichlet()) {
                (true, true) => zc - zm,
                (true, false) => d_r_cap(j) + mantle.kind.alpha() * zc - zm,
                (false, true) => d_n_mantle(j) + cap.kind.alpha() * zm - zc,
                (false, false) => (d_r_cap(j) + mantle.kind.alpha() * zc) - (d_n_mantle(j) + cap.kind.alpha() * zm),
            };
            data_violation = data_violation.max(v.abs());
        }
        let scale = scale.max(1.0);
        let data_threshold = if jsum == 2 {
            COMPAT_TOLERANCE * scale
        } else {
            let h = g.dr().max(g.dz());
            COMPAT_TOLERANCE.max(h * h) * scale
        };
        let rhs_violation = (0..g.n_theta()).map(|j| rhs.at(edge_r, j, k).abs()).fold(0.0, f64::max);
        let data_condition_applies = level + jsum >= 1;
        let rhs_condition_applies = jsum == 2 && level == 1;
        let rhs_scale = rhs.max_abs().max(1.0);
        let passed = (!data_condition_applies || data_violation <= data_threshold)
            && (!rhs_condition_applies || rhs_violation <= COMPAT_TOLERANCE * rhs_scale);
        edges.push(EdgeCompat {
            edge: tag,
            cap_kind: cap.kind,
            mantle_kind: mantle.kind,
            data_condition_applies,
            data_violation,
            data_threshold,
            rhs_condition_applies,
            rhs_violation,
            passed,
        });
    }
    Ok(CompatReport { level, edges })
}
