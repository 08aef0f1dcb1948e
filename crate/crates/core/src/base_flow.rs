//! Irrotational base flow `v0 = grad psi` driven by prescribed normal flux.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{CylGrid, CylPoint, Face};
use crate::ops::grad;
use crate::poisson::{flux_balance, BcKind, BcSpec, FaceBc, Gauge, PoissonSolver, BALANCE_TOLERANCE};

/// Normal flux `v . n` on the two caps; the mantle is impermeable.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxData {
    /// Read on the inflow cap; negative there.
    pub phi_minus: ScalarField,
    /// Read on the outflow cap; positive there.
    pub phi_plus: ScalarField,
}

impl FluxData {
    /// Profiles given as functions of the cap point.
    pub fn from_fns(grid: &Arc<CylGrid>, minus: impl Fn(CylPoint) -> f64, plus: impl Fn(CylPoint) -> f64) -> Self {
        Self {
            phi_minus: ScalarField::from_fn(grid, minus),
            phi_plus: ScalarField::from_fn(grid, plus),
        }
    }

    /// Uniform axial speed `speed` through both caps.
    pub fn uniform(grid: &Arc<CylGrid>, speed: f64) -> Self {
        Self::from_fns(grid, |_| -speed, |_| speed)
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        self.phi_minus.grid()
    }

    fn bc(&self) -> BcSpec {
        BcSpec::new(
            FaceBc::with_data(BcKind::Neumann, self.phi_minus.clone()),
            FaceBc::with_data(BcKind::Neumann, self.phi_plus.clone()),
            FaceBc::homogeneous(BcKind::Neumann),
        )
        .with_gauge(Gauge::MeanZero)
    }

    /// `(inflow integral, outflow integral)` of the flux.
    pub fn cap_integrals(&self) -> (f64, f64) {
        let g = self.grid();
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..g.n_theta() {
            for i in 0..g.n_r() {
                a += g.cap_weight(i) * self.phi_minus.at(i, j, 0);
                b += g.cap_weight(i) * self.phi_plus.at(i, j, g.n_z() - 1);
            }
        }
        (a, b)
    }

    /// Flux value prescribed at a boundary node, zero on the mantle.
    pub fn normal_flux(&self, face: Face, n: usize) -> f64 {
        match face {
            Face::Inflow => self.phi_minus.values()[n],
            Face::Outflow => self.phi_plus.values()[n],
            Face::Mantle => 0.0,
        }
    }
}

/// Outcome of [`validate_flux`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxReport {
    pub inflow_integral: f64,
    pub outflow_integral: f64,
    pub balanced: bool,
    pub inflow_max: f64,
    pub outflow_min: f64,
    /// Largest `|d phi / dr|` on the two edge circles.
    pub edge_derivative: f64,
    /// Set when the edge derivative exceeds `max(1e-8, h^2)` times the flux
    /// scale. The potential is still computed.
    pub compatibility_warning: bool,
}

pub fn validate_flux(flux: &FluxData) -> FluxReport {
    let g = flux.grid();
    let (a, b) = flux.cap_integrals();
    let scale_int = flux.phi_minus.map(f64::abs);
    let scale_int = {
        let f = FluxData {
            phi_minus: scale_int,
            phi_plus: flux.phi_plus.map(f64::abs),
        };
        let (x, y) = f.cap_integrals();
        x + y
    };
    let balanced = (a + b).abs() <= BALANCE_TOLERANCE * scale_int.max(f64::MIN_POSITIVE);
    let (nr, nz) = (g.n_r(), g.n_z());
    let mut inflow_max = f64::NEG_INFINITY;
    let mut outflow_min = f64::INFINITY;
    let mut edge_derivative = 0.0_f64;
    let mut scale = 0.0_f64;
    for j in 0..g.n_theta() {
        for i in 0..nr {
            inflow_max = inflow_max.max(flux.phi_minus.at(i, j, 0));
            outflow_min = outflow_min.min(flux.phi_plus.at(i, j, nz - 1));
            scale = scale
                .max(flux.phi_minus.at(i, j, 0).abs())
                .max(flux.phi_plus.at(i, j, nz - 1).abs());
        }
        for (field, k) in [(&flux.phi_minus, 0), (&flux.phi_plus, nz - 1)] {
            let at = |i: usize| field.at(i, j, k);
            let n = nr - 1;
            let d = -crate::ops::one_sided([at(n), at(n - 1), at(n - 2), at(n - 3)], 1.0 / g.dr());
            edge_derivative = edge_derivative.max(d.abs());
        }
    }
    let h = g.dr();
    let compatibility_warning = edge_derivative > 1e-8_f64.max(h * h) * scale.max(1.0);
    FluxReport {
        inflow_integral: a,
        outflow_integral: b,
        balanced,
        inflow_max,
        outflow_min,
        edge_derivative,
        compatibility_warning,
    }
}

/// Velocity potential together with its diagnostics.
#[derive(Debug, Clone)]
pub struct Potential {
    pub psi: ScalarField,
    pub report: FluxReport,
    /// Constant removed from the discrete Laplace equation so that the
    /// all-Neumann system is consistent; `O(h^2)`.
    pub solvability_defect: f64,
}

/// Solve `Laplace psi = 0`, `d psi / dn = phi` with zero mean.
pub fn solve_potential(flux: &FluxData) -> Result<Potential> {
    let report = validate_flux(flux);
    if !report.balanced {
        return Err(Error::IncompatibleData(format!(
            "flux through the caps does not balance: {:.6e} in, {:.6e} out",
            report.inflow_integral, report.outflow_integral
        )));
    }
    if !(report.inflow_max < 0.0 && report.outflow_min > 0.0) {
        return Err(Error::FluxSign {
            inflow_max: report.inflow_max,
            outflow_min: report.outflow_min,
        });
    }
    let g = flux.grid();
    let bc = flux.bc();
    let zero = ScalarField::zeros(g);
    debug_assert!({
        let (v, s) = flux_balance(&zero, &bc);
        (v - s).abs() <= 1e-6 * (1.0 + s.abs())
    });
    let sol = PoissonSolver::new(g, &bc)?.solve(&zero, &bc)?;
    Ok(Potential {
        psi: sol.u,
        report,
        solvability_defect: sol.solvability_defect,
    })
}

/// The irrotational base state.
#[derive(Debug, Clone)]
pub struct BaseFlow {
    pub psi: ScalarField,
    pub v0: VectorField,
    /// `-|v0|^2 / 2`.
    pub p0: ScalarField,
    /// Smallest axial velocity over all nodes.
    pub c_min: f64,
    pub flux: Option<FluxData>,
}

impl BaseFlow {
    pub fn grid(&self) -> &Arc<CylGrid> {
        self.psi.grid()
    }
}

/// Build `v0 = grad psi` and `p0 = -|v0|^2 / 2`. The radial velocity on the
/// mantle is set to its boundary value zero rather than the `O(h^3)`
/// one-sided derivative, so mantle streamlines stay on the mantle.
pub fn assemble_base(psi: &ScalarField) -> Result<BaseFlow> {
    let g = psi.grid();
    let mut v0 = grad(psi);
    let edge = g.n_r() - 1;
    for n in (edge..g.node_count()).step_by(g.n_r()) {
        v0.component_mut(0)[n] = 0.0;
    }
    if !v0.is_finite() {
        return Err(Error::NonFinite("base velocity"));
    }
    let p0 = v0.magnitude().map(|s| -0.5 * s * s);
    let vz = v0.component(2);
    let (n_min, c_min) = vz.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bn, bv), (n, &v)| if v < bv { (n, v) } else { (bn, bv) },
    );
    if c_min <= 0.0 {
        let p = g.point(n_min);
        return Err(Error::StagnationDetected {
            r: p.r,
            theta: p.theta,
            z: p.z,
            speed: c_min,
            threshold: 0.0,
        });
    }
    Ok(BaseFlow {
        psi: psi.clone(),
        v0,
        p0,
        c_min,
        flux: None,
    })
}

/// [`solve_potential`] followed by [`assemble_base`].
pub fn base_flow(flux: &FluxData) -> Result<(BaseFlow, FluxReport)> {
    let pot = solve_potential(flux)?;
    let mut base = assemble_base(&pot.psi)?;
    base.flux = Some(flux.clone());
    Ok((base, pot.report))
}
