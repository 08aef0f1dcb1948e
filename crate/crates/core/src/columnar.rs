//! Closed-form columnar swirl, an exact steady Euler solution used as an
//! oracle.
//!
//! `v = (0, V(r), 1)` in cylindrical components with
//! `V(r) = eps * c * r (R - r)^2`, `c = 27 / (4 R^3)` so that `max V = eps`.
//! The vorticity is `(0, 0, omega)` with
//! `omega = (r V)' / r = 2 eps c (R - r)(R - 2r)`, which vanishes on the
//! mantle. Radial momentum balance gives `p' = V^2 / r`; the constant is
//! chosen so that `p = -1/2` on the axis, matching the uniform base flow.

use serde::Serialize;

use crate::grid::CylPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnarSwirl {
    pub radius: f64,
    pub eps: f64,
}

impl ColumnarSwirl {
    pub fn new(radius: f64, eps: f64) -> Self {
        Self { radius, eps }
    }

    fn c(&self) -> f64 {
        27.0 / (4.0 * self.radius.powi(3))
    }

    /// Azimuthal velocity `V(r)`.
    pub fn swirl(&self, r: f64) -> f64 {
        let rr = self.radius;
        self.eps * self.c() * r * (rr - r) * (rr - r)
    }

    /// `V'(r)`.
    pub fn swirl_derivative(&self, r: f64) -> f64 {
        let rr = self.radius;
        self.eps * self.c() * (rr - r) * (rr - 3.0 * r)
    }

    /// Axial vorticity `(r V)' / r`.
    pub fn vorticity(&self, r: f64) -> f64 {
        let rr = self.radius;
        2.0 * self.eps * self.c() * (rr - r) * (rr - 2.0 * r)
    }

    /// `int_0^r V(s)^2 / s ds`, integrated in closed form.
    pub fn swirl_pressure(&self, r: f64) -> f64 {
        let rr = self.radius;
        let k = (self.eps * self.c()).powi(2);
        k * (rr.powi(4) * r.powi(2) / 2.0 - 4.0 * rr.powi(3) * r.powi(3) / 3.0 + 1.5 * rr * rr * r.powi(4)
            - 0.8 * rr * r.powi(5)
            + r.powi(6) / 6.0)
    }

    /// Cylindrical velocity components.
    pub fn velocity(&self, p: CylPoint) -> [f64; 3] {
        [0.0, self.swirl(p.r), 1.0]
    }

    pub fn pressure(&self, p: CylPoint) -> f64 {
        self.swirl_pressure(p.r) - 0.5
    }

    /// Cylindrical vorticity components.
    pub fn vorticity_vector(&self, p: CylPoint) -> [f64; 3] {
        [0.0, 0.0, self.vorticity(p.r)]
    }

    /// Normal vorticity `n . curl v` on the inflow cap (`n = -e_z`).
    pub fn h(&self, p: CylPoint) -> f64 {
        -self.vorticity(p.r)
    }

    /// Bernoulli perturbation on the inflow cap relative to the uniform base
    /// flow: `g = |v|^2 / 2 + p - 1/2 + 1/2`.
    pub fn g(&self, p: CylPoint) -> f64 {
        0.5 * self.swirl(p.r).powi(2) + self.swirl_pressure(p.r)
    }
}
