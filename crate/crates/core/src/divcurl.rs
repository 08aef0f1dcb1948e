//! Velocity perturbation from its vorticity: `curl w = f`, `div w = 0`,
//! `w . n = 0`.
//!
//! The solution is `w = -curl u` for a vector potential with
//! `laplacian u = f`, `div u = 0` and `u x n = 0` on the boundary. In
//! cylindrical components the conditions read
//!
//! | face   | `u_r`                           | `u_theta` | `u_z`          |
//! |--------|---------------------------------|-----------|----------------|
//! | caps   | `0`                             | `0`       | `d_z u_z = 0`  |
//! | mantle | `d_r u_r + u_r / R = 0`         | `0`       | `0`            |
//!
//! `u_z` is an ordinary scalar Poisson problem. The vector Laplacian couples
//! `u_r` and `u_theta` through `1/r^2` terms; per Fourier mode `m` the
//! combinations `u_r +- u_theta` of matching cosine and sine parts obey
//! scalar mode Laplacians with wavenumbers `m + 1` and `|m - 1|`, and meet
//! only in the mantle rows. Each mode is one banded system in those two
//! unknowns.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::field::{Frame, ScalarField, VectorField};
use crate::grid::{CylGrid, Face, NodeTag};
use crate::norm::{norm_scalar, norm_vector, NormKind};
use crate::ops::{curl, div};
use crate::poisson::{
    boundary_entries, from_modes, laplace_entries, to_modes, BcKind, BcSpec, FaceKinds, Gauge, PoissonSolver,
};

/// Default bound on `|div f|_L2 / |f|_H1` below the mesh scale `h^2`.
pub const DIV_TOLERANCE: f64 = 1e-6;
/// Bound on the azimuthal component of `f` on the edge circles.
pub const EDGE_TANGENT_TOLERANCE: f64 = 1e-6;

/// Outcome of [`validate_f`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivCurlReport {
    pub div_residual: f64,
    /// `max(tol_div, h^2) |f|_H1`.
    pub div_threshold: f64,
    /// Largest `|f . e_theta|` on the edge circles.
    pub edge_tangential: f64,
    pub passed: bool,
}

/// Check that `f` is divergence free up to discretization error and that
/// its edge-tangential component vanishes.
pub fn validate_f(f: &VectorField, tol_div: f64) -> DivCurlReport {
    let g = f.grid();
    let fc = f.to_cylindrical();
    let div_residual = norm_scalar(&div(&fc), NormKind::L2);
    let h = g.spacing();
    let div_threshold = tol_div.max(h * h) * norm_vector(&fc, NormKind::H1);
    let mut edge_tangential = 0.0_f64;
    for n in 0..g.node_count() {
        let (i, _, k) = g.ijk(n);
        if matches!(g.tag(i, k), NodeTag::EdgeMinus | NodeTag::EdgePlus) {
            edge_tangential = edge_tangential.max(fc.get(n)[1].abs());
        }
    }
    DivCurlReport {
        div_residual,
        div_threshold,
        edge_tangential,
        passed: div_residual <= div_threshold && edge_tangential <= EDGE_TANGENT_TOLERANCE,
    }
}

/// Node `(i, k)` position in the `(r, z)` plane.
#[inline]
fn plane(g: &CylGrid, i: usize, k: usize) -> usize {
    k * g.n_r() + i
}

fn is_cap(g: &CylGrid, k: usize) -> bool {
    k == 0 || k == g.n_z() - 1
}

fn mantle_robin(g: &CylGrid) -> BcKind {
    BcKind::Robin(1.0 / g.radius())
}

/// Decoupled mode problem `(L_m - 1/r^2) a = F`: zero on the caps and the
/// axis, Robin or Dirichlet on the mantle.
fn assemble_single(g: &CylGrid, m2: f64, robin: bool) -> BandMatrix {
    let (nr, nz) = (g.n_r(), g.n_z());
    let band = 2 * nr;
    let mut a = BandMatrix::zeros(nr * nz, band, band);
    for k in 0..nz {
        for i in 0..nr {
            let row = plane(g, i, k);
            let entries = if is_cap(g, k) || i == 0 {
                vec![(i, k, 1.0)]
            } else if i == nr - 1 {
                let kind = if robin { mantle_robin(g) } else { BcKind::Dirichlet };
                boundary_entries(g, Face::Mantle, kind, i, k)
            } else {
                laplace_entries(g, i, k, m2)
            };
            for (ii, kk, c) in entries {
                a.add(row, plane(g, ii, kk), c);
            }
        }
    }
    a
}

/// Coupled mode problem in `s = a + d`, `t = a - d`, interleaved as
/// `2 p + {0, 1}`.
fn assemble_pair(g: &CylGrid, m: usize) -> BandMatrix {
    let (nr, nz) = (g.n_r(), g.n_z());
    let band = 2 * nr + 4;
    let mut a = BandMatrix::zeros(2 * nr * nz, band, band);
    let sq = |x: usize| (x * x) as f64;
    let (ms, mt) = (sq(m + 1), sq(m.abs_diff(1)));
    for k in 0..nz {
        for i in 0..nr {
            let p = plane(g, i, k);
            let (rs, rt) = (2 * p, 2 * p + 1);
            if is_cap(g, k) {
                a.add(rs, rs, 1.0);
                a.add(rt, rt, 1.0);
            } else if i == nr - 1 {
                // u_theta = (s - t) / 2 vanishes
                a.add(rs, 2 * p, 1.0);
                a.add(rs, 2 * p + 1, -1.0);
                // Robin condition on u_r = (s + t) / 2
                for (ii, kk, c) in boundary_entries(g, Face::Mantle, mantle_robin(g), i, k) {
                    let q = plane(g, ii, kk);
                    a.add(rt, 2 * q, c);
                    a.add(rt, 2 * q + 1, c);
                }
            } else if i == 0 {
                a.add(rs, rs, 1.0);
                if m == 1 {
                    for (ii, kk, c) in laplace_entries(g, 0, k, 0.0) {
                        a.add(rt, 2 * plane(g, ii, kk) + 1, c);
                    }
                } else {
                    a.add(rt, rt, 1.0);
                }
            } else {
                for (ii, kk, c) in laplace_entries(g, i, k, ms) {
                    a.add(rs, 2 * plane(g, ii, kk), c);
                }
                for (ii, kk, c) in laplace_entries(g, i, k, mt) {
                    a.add(rt, 2 * plane(g, ii, kk) + 1, c);
                }
            }
        }
    }
    a
}

/// Rows that carry the Laplace equation off the axis.
fn is_equation_row(g: &CylGrid, i: usize, k: usize) -> bool {
    !is_cap(g, k) && i != 0 && i != g.n_r() - 1
}

/// Factorized vector-potential operator for one grid.
#[derive(Debug, Clone)]
pub struct DivCurlSolver {
    grid: Arc<CylGrid>,
    axial: PoissonSolver,
    /// Index `m - 1` for `1 <= m < n_theta / 2`.
    pairs: Vec<BandLu>,
    /// `[robin, dirichlet]` for the axisymmetric mode.
    axisymmetric: [BandLu; 2],
    /// `[robin, dirichlet]` for the Nyquist mode.
    nyquist: [BandLu; 2],
    tol_div: f64,
}

/// Output of [`DivCurlSolver::solve`].
#[derive(Debug, Clone)]
pub struct DivCurlSolution {
    /// Cylindrical components.
    pub w: VectorField,
    /// The vector potential `u`, with `w = -curl u`.
    pub potential: VectorField,
    pub report: DivCurlReport,
}

fn axial_bc() -> BcSpec {
    BcSpec::homogeneous(BcKind::Neumann, BcKind::Neumann, BcKind::Dirichlet)
}

impl DivCurlSolver {
    pub fn new(grid: &Arc<CylGrid>) -> Result<Self> {
        let g = &**grid;
        let nyq = g.n_theta() / 2;
        let kinds: FaceKinds = axial_bc().kinds();
        let axial = PoissonSolver::with_kinds(grid, kinds, Gauge::Unique)?;
        let pairs = (1..nyq)
            .into_par_iter()
            .map(|m| assemble_pair(g, m).factor())
            .collect::<Result<Vec<_>>>()?;
        let single = |m2: f64| -> Result<[BandLu; 2]> {
            Ok([
                assemble_single(g, m2, true).factor()?,
                assemble_single(g, m2, false).factor()?,
            ])
        };
        Ok(Self {
            grid: grid.clone(),
            axial,
            pairs,
            axisymmetric: single(1.0)?,
            nyquist: single((nyq * nyq) as f64 + 1.0)?,
            tol_div: DIV_TOLERANCE,
        })
    }

    pub fn with_tolerance(mut self, tol_div: f64) -> Self {
        self.tol_div = tol_div;
        self
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    /// Validate `f`, then solve for `w`.
    pub fn solve(&self, f: &VectorField) -> Result<DivCurlSolution> {
        let g = &*self.grid;
        if **f.grid() != *g {
            return Err(Error::GridMismatch);
        }
        let report = validate_f(f, self.tol_div);
        if !report.passed {
            return Err(Error::ValidationFailure(format!(
                "|div f| = {:.3e} (limit {:.3e}), max |f . e_theta| on edges = {:.3e} (limit {:.1e})",
                report.div_residual, report.div_threshold, report.edge_tangential, EDGE_TANGENT_TOLERANCE
            )));
        }
        let mut sol = self.solve_unchecked(f)?;
        sol.report = report;
        Ok(sol)
    }

    /// Solve without validating `f`.
    pub fn solve_unchecked(&self, f: &VectorField) -> Result<DivCurlSolution> {
        let fc = f.to_cylindrical();
        let uz = self.axial.solve(&fc.component_field(2), &axial_bc())?.u;
        let (ur, ut) = self.transverse(&fc);
        let potential = VectorField::from_components(ur, ut, uz, Frame::Cylindrical)?;
        let w = curl(&potential).scaled(-1.0);
        if !w.is_finite() {
            return Err(Error::NonFinite("div-curl solution"));
        }
        Ok(DivCurlSolution {
            w,
            potential,
            report: DivCurlReport {
                div_residual: f64::NAN,
                div_threshold: f64::NAN,
                edge_tangential: f64::NAN,
                passed: false,
            },
        })
    }

    fn transverse(&self, fc: &VectorField) -> (ScalarField, ScalarField) {
        let g: &CylGrid = &self.grid;
        let (nr, nz, nt) = (g.n_r(), g.n_z(), g.n_theta());
        let ring = g.ring();
        let nyq = nt / 2;
        let fr = to_modes(g, fc.component(0));
        let ft = to_modes(g, fc.component(1));
        let np = nr * nz;
        let mut ur = vec![vec![0.0; np]; nt];
        let mut ut = vec![vec![0.0; np]; nt];

        let masked = |src: &[f64]| -> Vec<f64> {
            (0..np)
                .map(|p| {
                    if is_equation_row(g, p % nr, p / nr) {
                        src[p]
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let singles = [(0usize, &self.axisymmetric), (nyq, &self.nyquist)];
        for (m, lu) in singles {
            let slot = ring.cos_slot(m);
            let mut a = masked(&fr[slot]);
            lu[0].solve(&mut a);
            let mut c = masked(&ft[slot]);
            lu[1].solve(&mut c);
            ur[slot] = a;
            ut[slot] = c;
        }

        // (cos part of u_r, sin part of u_theta) and
        // (sin part of u_r, minus cos part of u_theta) share one operator
        let solved: Vec<(usize, [Vec<f64>; 4])> = (1..nyq)
            .into_par_iter()
            .map(|m| {
                let (cs, ss) = (ring.cos_slot(m), ring.sin_slot(m).expect("non-Nyquist mode"));
                let lu = &self.pairs[m - 1];
                let mut out = [vec![0.0; np], vec![0.0; np], vec![0.0; np], vec![0.0; np]];
                for (q, (x, y)) in [(&fr[cs], &ft[ss], 1.0), (&fr[ss], &ft[cs], -1.0)]
                    .into_iter()
                    .map(|(x, y, sgn)| (x, y.iter().map(|v| sgn * v).collect::<Vec<_>>()))
                    .enumerate()
                {
                    let mut b = vec![0.0; 2 * np];
                    for p in 0..np {
                        let (i, k) = (p % nr, p / nr);
                        if is_equation_row(g, i, k) {
                            b[2 * p] = x[p] + y[p];
                            b[2 * p + 1] = x[p] - y[p];
                        } else if i == 0 && m == 1 && !is_cap(g, k) {
                            b[2 * p + 1] = x[p] - y[p];
                        }
                    }
                    lu.solve(&mut b);
                    for p in 0..np {
                        let (s, t) = (b[2 * p], b[2 * p + 1]);
                        out[2 * q][p] = 0.5 * (s + t);
                        out[2 * q + 1][p] = 0.5 * (s - t);
                    }
                }
                (m, out)
            })
            .collect();
        for (m, [a, d, b, cneg]) in solved {
            let (cs, ss) = (ring.cos_slot(m), ring.sin_slot(m).expect("non-Nyquist mode"));
            ur[cs] = a;
            ut[ss] = d;
            ur[ss] = b;
            ut[cs] = cneg.into_iter().map(|v| -v).collect();
        }
        let grid = &self.grid;
        (
            ScalarField::from_values(grid, from_modes(g, &ur)).expect("node count"),
            ScalarField::from_values(grid, from_modes(g, &ut)).expect("node count"),
        )
    }
}

/// One-shot solve with a fresh factorization.
pub fn solve(f: &VectorField) -> Result<VectorField> {
    Ok(DivCurlSolver::new(f.grid())?.solve(f)?.w)
}

/// Residuals of a computed `w` against its defining equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivCurlResiduals {
    /// `|curl w - f|_L2`.
    pub curl: f64,
    /// `|div w|_L2`.
    pub div: f64,
    /// Largest `|w . n|` over boundary nodes.
    pub normal_trace: f64,
}

pub fn residuals(w: &VectorField, f: &VectorField) -> Result<DivCurlResiduals> {
    let g = w.grid();
    let wc = w.to_cylindrical();
    let c = curl(&wc).sub(&f.to_cylindrical())?;
    let mut normal_trace = 0.0_f64;
    for n in 0..g.node_count() {
        let (i, _, k) = g.ijk(n);
        let v = wc.get(n);
        let mut m = 0.0_f64;
        if k == 0 || k == g.n_z() - 1 {
            m = m.max(v[2].abs());
        }
        if i == g.n_r() - 1 {
            m = m.max(v[0].abs());
        }
        normal_trace = normal_trace.max(m);
    }
    Ok(DivCurlResiduals {
        curl: norm_vector(&c, NormKind::L2),
        div: norm_scalar(&div(&wc), NormKind::L2),
        normal_trace,
    })
}

/// `|w|_H1 / |f|_L2`, zero for vanishing `f`.
pub fn estimates_probe(w: &VectorField, f: &VectorField) -> f64 {
    let d = norm_vector(f, NormKind::L2);
    if d == 0.0 {
        0.0
    } else {
        norm_vector(w, NormKind::H1) / d
    }
}
