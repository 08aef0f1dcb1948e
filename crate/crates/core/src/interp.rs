//! Off-grid evaluation of node fields.
//!
//! Four-point Lagrange interpolation in `r` and `z` combined with either
//! trigonometric or four-point interpolation in `theta`. A stencil that
//! reaches below the axis is reflected onto the ring at `theta + pi`; the
//! reflected value is multiplied by a per-component parity, `-1` for the `r`
//! and `theta` components of a cylindrical vector and `+1` otherwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Frame, ScalarField, VectorField};
use crate::grid::{CylGrid, CylPoint};

/// Relative tolerance for points slightly outside the closed cylinder.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaScheme {
    /// Trigonometric interpolation through all ring samples.
    #[default]
    Spectral,
    /// Four-point Lagrange interpolation on the periodic ring.
    Cubic,
}

#[inline]
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Start index and weights of a four-point stencil on `0..n` for the
/// fractional coordinate `x`; the start may be `-1` when `allow_reflect`.
fn stencil(x: f64, n: usize, allow_reflect: bool) -> (isize, [f64; 4]) {
    let i0 = (x.floor() as isize).clamp(0, n as isize - 2);
    let lo = if allow_reflect { -1 } else { 0 };
    let s0 = (i0 - 1).clamp(lo, n as isize - 4);
    (s0, lagrange4(x - s0 as f64))
}

/// Validate and clamp a query point against the closed cylinder.
pub fn clamp_to_domain(g: &CylGrid, p: CylPoint) -> Result<CylPoint> {
    let err = || Error::OutOfDomain {
        r: p.r,
        theta: p.theta,
        z: p.z,
    };
    if !(p.r.is_finite() && p.theta.is_finite() && p.z.is_finite()) {
        return Err(err());
    }
    let (rr, ll) = (g.radius(), g.length());
    if p.r < -DOMAIN_TOLERANCE * rr || p.r > rr * (1.0 + DOMAIN_TOLERANCE) {
        return Err(err());
    }
    if p.z < -DOMAIN_TOLERANCE * ll || p.z > ll * (1.0 + DOMAIN_TOLERANCE) {
        return Err(err());
    }
    Ok(CylPoint::new(
        p.r.clamp(0.0, rr),
        p.theta.rem_euclid(std::f64::consts::TAU),
        p.z.clamp(0.0, ll),
    ))
}

/// A bundle of node fields evaluated together at arbitrary points.
#[derive(Debug, Clone)]
pub struct Interpolator {
    grid: Arc<CylGrid>,
    data: Vec<Vec<f64>>,
    parity: Vec<f64>,
    scheme: ThetaScheme,
    /// Per field, ring coefficients laid out as `(i + n_r k) * n_theta`.
    coeffs: Vec<Vec<f64>>,
}

impl Interpolator {
    pub fn new(grid: &Arc<CylGrid>, data: Vec<Vec<f64>>, parity: Vec<f64>, scheme: ThetaScheme) -> Result<Self> {
        if data.len() != parity.len() || data.iter().any(|d| d.len() != grid.node_count()) {
            return Err(Error::GridMismatch);
        }
        let coeffs = match scheme {
            ThetaScheme::Cubic => Vec::new(),
            ThetaScheme::Spectral => data.iter().map(|d| ring_coefficients(grid, d)).collect(),
        };
        Ok(Self {
            grid: grid.clone(),
            data,
            parity,
            scheme,
            coeffs,
        })
    }

    pub fn scalar(s: &ScalarField, scheme: ThetaScheme) -> Self {
        Self::new(s.grid(), vec![s.values().to_vec()], vec![1.0], scheme).expect("field matches its grid")
    }

    /// Components are interpolated in the frame of `v`.
    pub fn vector(v: &VectorField, scheme: ThetaScheme) -> Self {
        let parity = match v.frame() {
            Frame::Cylindrical => vec![-1.0, -1.0, 1.0],
            Frame::Cartesian => vec![1.0, 1.0, 1.0],
        };
        let data = (0..3).map(|c| v.component(c).to_vec()).collect();
        Self::new(v.grid(), data, parity, scheme).expect("field matches its grid")
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Evaluate every field of the bundle at `p` into `out`.
    pub fn eval(&self, p: CylPoint, out: &mut [f64]) -> Result<()> {
        let g = &*self.grid;
        let p = clamp_to_domain(g, p)?;
        let (sr, wr) = stencil(p.r / g.dr(), g.n_r(), true);
        let (sz, wz) = stencil(p.z / g.dz(), g.n_z(), false);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut ring = RingEval::new(self, p.theta);
        for (a, &wzk) in wz.iter().enumerate() {
            let k = (sz + a as isize) as usize;
            for (b, &wri) in wr.iter().enumerate() {
                let w = wzk * wri;
                if w == 0.0 {
                    continue;
                }
                let i = sr + b as isize;
                ring.accumulate(self, i, k, w, out);
            }
        }
        Ok(())
    }

    /// Evaluate on the grid plane `k` (a cap when `k` is `0` or `n_z - 1`),
    /// ignoring `p.z`.
    pub fn eval_on_plane(&self, p: CylPoint, k: usize, out: &mut [f64]) -> Result<()> {
        let g = &*self.grid;
        let p = clamp_to_domain(g, CylPoint::new(p.r, p.theta, 0.0))?;
        let (sr, wr) = stencil(p.r / g.dr(), g.n_r(), true);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut ring = RingEval::new(self, p.theta);
        for (b, &w) in wr.iter().enumerate() {
            if w != 0.0 {
                ring.accumulate(self, sr + b as isize, k, w, out);
            }
        }
        Ok(())
    }
}

fn ring_coefficients(g: &CylGrid, d: &[f64]) -> Vec<f64> {
    let (nr, nt) = (g.n_r(), g.n_theta());
    let mut out = vec![0.0; nr * g.n_z() * nt];
    let mut vals = vec![0.0; nt];
    for k in 0..g.n_z() {
        for i in 0..nr {
            for (j, v) in vals.iter_mut().enumerate() {
                *v = d[g.index(i, j, k)];
            }
            let base = (i + nr * k) * nt;
            g.ring().forward(&vals, &mut out[base..base + nt]);
        }
    }
    out
}

/// Per-query angular weights, shared by every ring of the stencil.
struct RingEval {
    basis: Vec<f64>,
    basis_pi: Vec<f64>,
    /// Wrapped ring indices of the cubic stencil, direct and across the axis.
    cubic_j: [usize; 4],
    cubic_j_pi: [usize; 4],
    cubic_w: [f64; 4],
}

impl RingEval {
    fn new(interp: &Interpolator, theta: f64) -> Self {
        let g = &*interp.grid;
        let nt = g.n_theta();
        match interp.scheme {
            ThetaScheme::Spectral => {
                let mut basis = vec![0.0; nt];
                g.ring().basis(theta, &mut basis);
                // shifting by pi flips the sign of odd modes
                let mut basis_pi = basis.clone();
                for m in (1..=nt / 2).filter(|m| m % 2 == 1) {
                    basis_pi[g.ring().cos_slot(m)] *= -1.0;
                    if let Some(s) = g.ring().sin_slot(m) {
                        basis_pi[s] *= -1.0;
                    }
                }
                Self {
                    basis,
                    basis_pi,
                    cubic_j: [0; 4],
                    cubic_j_pi: [0; 4],
                    cubic_w: [0.0; 4],
                }
            }
            ThetaScheme::Cubic => {
                let y = theta / g.dtheta();
                let j0 = y.floor() as isize;
                let s0 = j0 - 1;
                let wrap = |c: isize| c.rem_euclid(nt as isize) as usize;
                let cubic_j = [wrap(s0), wrap(s0 + 1), wrap(s0 + 2), wrap(s0 + 3)];
                let cubic_j_pi = cubic_j.map(|j| (j + nt / 2) % nt);
                Self {
                    basis: Vec::new(),
                    basis_pi: Vec::new(),
                    cubic_j,
                    cubic_j_pi,
                    cubic_w: lagrange4(y - s0 as f64),
                }
            }
        }
    }

    /// Add `w * field(ring i, plane k)(theta)` for every field; a ring index of
    /// `-1` is read from ring 1 on the opposite side of the axis.
    fn accumulate(&mut self, interp: &Interpolator, i: isize, k: usize, w: f64, out: &mut [f64]) {
        let g = &*interp.grid;
        let nt = g.n_theta();
        let reflected = i < 0;
        let ii = i.unsigned_abs();
        match interp.scheme {
            ThetaScheme::Spectral => {
                let basis = if reflected { &self.basis_pi } else { &self.basis };
                let base = (ii + g.n_r() * k) * nt;
                for (f, o) in out.iter_mut().enumerate() {
                    let c = &interp.coeffs[f][base..base + nt];
                    let v: f64 = c.iter().zip(basis).map(|(a, b)| a * b).sum();
                    let sign = if reflected { interp.parity[f] } else { 1.0 };
                    *o += w * sign * v;
                }
            }
            ThetaScheme::Cubic => {
                let js = if reflected { &self.cubic_j_pi } else { &self.cubic_j };
                let nr = g.n_r();
                let base = ii + nr * nt * k;
                let idx = js.map(|j| base + nr * j);
                for (f, o) in out.iter_mut().enumerate() {
                    let d = &interp.data[f];
                    let mut v = 0.0;
                    for (&wc, &n) in self.cubic_w.iter().zip(&idx) {
                        v += wc * d[n];
                    }
                    let sign = if reflected { interp.parity[f] } else { 1.0 };
                    *o += w * sign * v;
                }
            }
        }
    }
}

/// Interpolate a scalar field at `p` (spectral in `theta`).
pub fn interpolate_scalar(s: &ScalarField, p: CylPoint) -> Result<f64> {
    let mut out = [0.0];
    Interpolator::scalar(s, ThetaScheme::Spectral).eval(p, &mut out)?;
    Ok(out[0])
}

/// Interpolate a vector field at `p`. Cylindrical components refer to the
/// local frame at `p`.
pub fn interpolate_vector(v: &VectorField, p: CylPoint) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    Interpolator::vector(v, ThetaScheme::Spectral).eval(p, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_abs_diff_eq;

    fn linear(p: CylPoint) -> f64 {
        let c = p.to_cartesian();
        0.3 + 1.5 * c[0] - 2.0 * c[1] + 0.7 * c[2]
    }

    #[test]
    fn linear_field_is_reproduced() {
        let g = build_grid(1.0, 2.0, 7, 8, 9).unwrap();
        let s = ScalarField::from_fn(&g, linear);
        let interp = Interpolator::scalar(&s, ThetaScheme::Spectral);
        for &(r, t, z) in &[
            (0.0, 0.0, 0.0),
            (0.05, 2.0, 1.3),
            (0.51, 4.0, 0.77),
            (1.0, 5.9, 2.0),
            (0.97, 0.1, 0.01),
        ] {
            let p = CylPoint::new(r, t, z);
            let mut out = [0.0];
            interp.eval(p, &mut out).unwrap();
            assert_abs_diff_eq!(out[0], linear(p), epsilon = 1e-12);
        }
    }

    #[test]
    fn cubic_scheme_reproduces_axisymmetric_cubics() {
        let g = build_grid(1.0, 1.0, 8, 8, 8).unwrap();
        let f = |p: CylPoint| p.r * p.r * p.r - p.z * p.z + 2.0;
        let s = ScalarField::from_fn(&g, f);
        let interp = Interpolator::scalar(&s, ThetaScheme::Cubic);
        for &(r, t, z) in &[(0.03, 1.0, 0.5), (0.4, 3.3, 0.9), (0.99, 6.0, 0.2)] {
            let p = CylPoint::new(r, t, z);
            let mut out = [0.0];
            interp.eval(p, &mut out).unwrap();
            // r^3 is odd across the axis so only exact away from it
            if r > 2.0 * g.dr() {
                assert_abs_diff_eq!(out[0], f(p), epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(out[0], f(p), epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn cylindrical_vector_parity_across_axis() {
        // uniform Cartesian e_x has cylindrical components (cos, -sin, 0)
        let g = build_grid(1.0, 1.0, 6, 8, 5).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| [p.theta.cos(), -p.theta.sin(), 0.0]);
        for scheme in [ThetaScheme::Spectral, ThetaScheme::Cubic] {
            let interp = Interpolator::vector(&v, scheme);
            let p = CylPoint::new(0.5 * g.dr(), 0.3, 0.4);
            let mut out = [0.0; 3];
            interp.eval(p, &mut out).unwrap();
            let tol = if scheme == ThetaScheme::Spectral { 1e-12 } else { 2e-2 };
            assert_abs_diff_eq!(out[0], 0.3_f64.cos(), epsilon = tol);
            assert_abs_diff_eq!(out[1], -0.3_f64.sin(), epsilon = tol);
        }
    }

    #[test]
    fn mantle_clamp_and_out_of_domain() {
        let g = build_grid(1.0, 1.0, 5, 4, 5).unwrap();
        let s = ScalarField::from_fn(&g, |p| p.r);
        let v = interpolate_scalar(&s, CylPoint::new(1.0 + 1e-10, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert!(matches!(
            interpolate_scalar(&s, CylPoint::new(2.0, 0.0, 0.5)),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(interpolate_scalar(&s, CylPoint::new(0.5, 0.0, 1.1)).is_err());
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let g = build_grid(1.0, 1.0, 6, 8, 6).unwrap();
        let s = ScalarField::from_fn(&g, |p| (3.0 * p.theta).sin() * p.r + p.z * p.z);
        let interp = Interpolator::scalar(&s, ThetaScheme::Cubic);
        for n in 0..g.node_count() {
            let mut out = [0.0];
            interp.eval(g.point(n), &mut out).unwrap();
            assert_abs_diff_eq!(out[0], s.values()[n], epsilon = 1e-12);
        }
    }
}
