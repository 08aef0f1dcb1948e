//! Structured grid on the cylinder `{r < R} x (0, L)`.
//!
//! Nodes are uniform in `r` (including the axis `r = 0` and the mantle
//! `r = R`), periodic in `theta` and uniform in `z` (including both caps).
//! The flat index runs `r` fastest, then `theta`, then `z`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary classification of a node. Every node carries exactly one tag;
/// the axis is a separate flag because it cuts across the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeTag {
    Interior,
    /// `z = 0`, `r < R`.
    Inflow,
    /// `z = L`, `r < R`.
    Outflow,
    /// `r = R`, `0 < z < L`.
    Mantle,
    /// Edge circle `r = R`, `z = 0`.
    EdgeMinus,
    /// Edge circle `r = R`, `z = L`.
    EdgePlus,
}

/// One of the three smooth boundary pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    Inflow,
    Outflow,
    Mantle,
}

impl Face {
    pub const ALL: [Face; 3] = [Face::Inflow, Face::Outflow, Face::Mantle];
}

/// A point given in cylindrical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylPoint {
    pub r: f64,
    pub theta: f64,
    pub z: f64,
}

impl CylPoint {
    pub fn new(r: f64, theta: f64, z: f64) -> Self {
        Self { r, theta, z }
    }

    pub fn from_cartesian(p: [f64; 3]) -> Self {
        Self {
            r: p[0].hypot(p[1]),
            theta: p[1].atan2(p[0]),
            z: p[2],
        }
    }

    pub fn to_cartesian(self) -> [f64; 3] {
        let (s, c) = self.theta.sin_cos();
        [self.r * c, self.r * s, self.z]
    }
}

/// Real discrete Fourier transform of one `theta` ring.
///
/// Coefficient layout for `n` samples (n even):
/// `[a0, a1, b1, a2, b2, ..., a_{n/2-1}, b_{n/2-1}, a_{n/2}]` so that
/// `u(theta) = a0 + sum_m (a_m cos m theta + b_m sin m theta) + a_{n/2} cos(n theta / 2)`.
#[derive(Clone)]
pub struct RingTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl RingTransform {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Largest resolved wavenumber, `n / 2`.
    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Slot of the cosine coefficient of mode `m` in the packed layout.
    pub fn cos_slot(&self, m: usize) -> usize {
        if m == 0 {
            0
        } else if m == self.n / 2 {
            self.n - 1
        } else {
            2 * m - 1
        }
    }

    /// Slot of the sine coefficient of mode `m`, if the mode has one.
    pub fn sin_slot(&self, m: usize) -> Option<usize> {
        if m == 0 || m == self.n / 2 {
            None
        } else {
            Some(2 * m)
        }
    }

    pub fn forward(&self, values: &[f64], coeffs: &mut [f64]) {
        let n = self.n;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        coeffs[0] = buf[0].re * inv_n;
        for m in 1..n / 2 {
            coeffs[2 * m - 1] = 2.0 * buf[m].re * inv_n;
            coeffs[2 * m] = -2.0 * buf[m].im * inv_n;
        }
        coeffs[n - 1] = buf[n / 2].re * inv_n;
    }

    pub fn inverse(&self, coeffs: &[f64], values: &mut [f64]) {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(coeffs[0], 0.0);
        for m in 1..n / 2 {
            let c = Complex64::new(0.5 * coeffs[2 * m - 1], -0.5 * coeffs[2 * m]);
            buf[m] = c;
            buf[n - m] = c.conj();
        }
        buf[n / 2] = Complex64::new(coeffs[n - 1], 0.0);
        self.inverse.process(&mut buf);
        for (v, c) in values.iter_mut().zip(&buf) {
            *v = c.re;
        }
    }

    /// Spectral `d/dtheta` in coefficient space. The Nyquist mode is dropped.
    pub fn differentiate(&self, coeffs: &mut [f64]) {
        let n = self.n;
        coeffs[0] = 0.0;
        for m in 1..n / 2 {
            let a = coeffs[2 * m - 1];
            let b = coeffs[2 * m];
            coeffs[2 * m - 1] = m as f64 * b;
            coeffs[2 * m] = -(m as f64) * a;
        }
        coeffs[n - 1] = 0.0;
    }

    /// Fill `basis` with the trigonometric basis evaluated at `theta`, in the
    /// packed coefficient layout.
    pub fn basis(&self, theta: f64, basis: &mut [f64]) {
        let n = self.n;
        basis[0] = 1.0;
        let (s1, c1) = theta.sin_cos();
        let (mut c, mut s) = (1.0_f64, 0.0_f64);
        for m in 1..n / 2 {
            let cn = c * c1 - s * s1;
            let sn = s * c1 + c * s1;
            c = cn;
            s = sn;
            basis[2 * m - 1] = c;
            basis[2 * m] = s;
        }
        basis[n - 1] = ((n / 2) as f64 * theta).cos();
    }
}

/// Structured cylindrical grid with boundary tagging.
#[derive(Clone)]
pub struct CylGrid {
    radius: f64,
    length: f64,
    n_r: usize,
    n_theta: usize,
    n_z: usize,
    dr: f64,
    dtheta: f64,
    dz: f64,
    ring: RingTransform,
}

impl fmt::Debug for CylGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylGrid")
            .field("radius", &self.radius)
            .field("length", &self.length)
            .field("n_r", &self.n_r)
            .field("n_theta", &self.n_theta)
            .field("n_z", &self.n_z)
            .finish()
    }
}

impl PartialEq for CylGrid {
    fn eq(&self, other: &Self) -> bool {
        self.radius == other.radius
            && self.length == other.length
            && self.n_r == other.n_r
            && self.n_theta == other.n_theta
            && self.n_z == other.n_z
    }
}

/// Build a grid for the cylinder of radius `radius` and length `length`.
pub fn build_grid(radius: f64, length: f64, n_r: usize, n_theta: usize, n_z: usize) -> Result<Arc<CylGrid>> {
    CylGrid::new(radius, length, n_r, n_theta, n_z).map(Arc::new)
}

impl CylGrid {
    pub fn new(radius: f64, length: f64, n_r: usize, n_theta: usize, n_z: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if n_r < 4 || n_z < 4 || n_theta < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 nodes per direction, got ({n_r}, {n_theta}, {n_z})"
            )));
        }
        if !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n_theta must be even, got {n_theta}")));
        }
        Ok(Self {
            radius,
            length,
            n_r,
            n_theta,
            n_z,
            dr: radius / (n_r - 1) as f64,
            dtheta: 2.0 * PI / n_theta as f64,
            dz: length / (n_z - 1) as f64,
            ring: RingTransform::new(n_theta),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }
    pub fn dz(&self) -> f64 {
        self.dz
    }
    pub fn ring(&self) -> &RingTransform {
        &self.ring
    }

    /// Largest of the physical spacings, `max(dr, R dtheta, dz)`.
    pub fn spacing(&self) -> f64 {
        self.dr.max(self.radius * self.dtheta).max(self.dz)
    }

    pub fn node_count(&self) -> usize {
        self.n_r * self.n_theta * self.n_z
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n_r * (j + self.n_theta * k)
    }

    /// Index with a periodic `theta` index.
    #[inline]
    pub fn index_wrapped(&self, i: usize, j: isize, k: usize) -> usize {
        let n = self.n_theta as isize;
        self.index(i, j.rem_euclid(n) as usize, k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.n_r;
        let rest = idx / self.n_r;
        (i, rest % self.n_theta, rest / self.n_theta)
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        if i == self.n_r - 1 {
            self.radius
        } else {
            i as f64 * self.dr
        }
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        if k == self.n_z - 1 {
            self.length
        } else {
            k as f64 * self.dz
        }
    }

    pub fn point(&self, idx: usize) -> CylPoint {
        let (i, j, k) = self.ijk(idx);
        CylPoint::new(self.r(i), self.theta(j), self.z(k))
    }

    pub fn is_axis(&self, i: usize) -> bool {
        i == 0
    }

    pub fn tag(&self, i: usize, k: usize) -> NodeTag {
        let mantle = i == self.n_r - 1;
        let top = k == self.n_z - 1;
        match (mantle, k == 0, top) {
            (true, true, _) => NodeTag::EdgeMinus,
            (true, _, true) => NodeTag::EdgePlus,
            (true, false, false) => NodeTag::Mantle,
            (false, true, _) => NodeTag::Inflow,
            (false, _, true) => NodeTag::Outflow,
            _ => NodeTag::Interior,
        }
    }

    pub fn tag_of(&self, idx: usize) -> NodeTag {
        let (i, _, k) = self.ijk(idx);
        self.tag(i, k)
    }

    /// True when the node lies in the closure of `face`.
    pub fn on_face(&self, face: Face, i: usize, k: usize) -> bool {
        match face {
            Face::Inflow => k == 0,
            Face::Outflow => k == self.n_z - 1,
            Face::Mantle => i == self.n_r - 1,
        }
    }

    /// Trapezoidal weight in `r`, including the `r` Jacobian: integrates
    /// `g(r) r dr` exactly for linear `g`.
    pub fn radial_weight(&self, i: usize) -> f64 {
        let w = if i == 0 || i == self.n_r - 1 { 0.5 } else { 1.0 };
        w * self.r(i) * self.dr
    }

    pub fn axial_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_z - 1 {
            0.5 * self.dz
        } else {
            self.dz
        }
    }

    /// Volume quadrature weight of node `(i, *, k)`.
    pub fn volume_weight(&self, i: usize, k: usize) -> f64 {
        self.radial_weight(i) * self.dtheta * self.axial_weight(k)
    }

    /// Area weight of a node on a cap, `r dr dtheta`.
    pub fn cap_weight(&self, i: usize) -> f64 {
        self.radial_weight(i) * self.dtheta
    }

    /// Area weight of a node on the mantle, `R dtheta dz`.
    pub fn mantle_weight(&self, k: usize) -> f64 {
        self.radius * self.dtheta * self.axial_weight(k)
    }

    pub fn volume(&self) -> f64 {
        PI * self.radius * self.radius * self.length
    }

    /// Signed outward normal of `face` in cylindrical components.
    pub fn outward_normal(face: Face) -> [f64; 3] {
        match face {
            Face::Inflow => [0.0, 0.0, -1.0],
            Face::Outflow => [0.0, 0.0, 1.0],
            Face::Mantle => [1.0, 0.0, 0.0],
        }
    }

    /// Same grid shape with new node counts; used for refinement studies.
    pub fn refined(&self, n_r: usize, n_theta: usize, n_z: usize) -> Result<Arc<CylGrid>> {
        build_grid(self.radius, self.length, n_r, n_theta, n_z)
    }

    /// Index of the node opposite `j` across the axis.
    pub fn opposite(&self, j: usize) -> usize {
        (j + self.n_theta / 2) % self.n_theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_counts_and_inflow_tags() {
        let g = build_grid(1.0, 2.0, 8, 8, 16).unwrap();
        assert_eq!(g.node_count(), 8 * 8 * 16);
        for idx in 0..g.node_count() {
            let p = g.point(idx);
            let tag = g.tag_of(idx);
            let inflow = p.z == 0.0 && p.r < 1.0;
            assert_eq!(tag == NodeTag::Inflow, inflow, "node {idx}");
        }
    }

    #[test]
    fn odd_theta_rejected() {
        assert!(matches!(build_grid(1.0, 2.0, 8, 7, 16), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(-1.0, 2.0, 8, 8, 16), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(1.0, 0.0, 8, 8, 16), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(1.0, 1.0, 3, 8, 16), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn edge_minus_is_one_ring() {
        let g = build_grid(1.0, 1.0, 4, 4, 4).unwrap();
        let edge: Vec<_> = (0..g.node_count())
            .filter(|&n| g.tag_of(n) == NodeTag::EdgeMinus)
            .collect();
        assert_eq!(edge.len(), 4);
        for n in edge {
            let p = g.point(n);
            assert_eq!((p.r, p.z), (1.0, 0.0));
        }
    }

    #[test]
    fn edges_are_closure_intersections() {
        let g = build_grid(1.0, 1.0, 5, 6, 7).unwrap();
        for k in 0..g.n_z() {
            for i in 0..g.n_r() {
                let t = g.tag(i, k);
                let minus = g.on_face(Face::Inflow, i, k) && g.on_face(Face::Mantle, i, k);
                let plus = g.on_face(Face::Outflow, i, k) && g.on_face(Face::Mantle, i, k);
                assert_eq!(t == NodeTag::EdgeMinus, minus);
                assert_eq!(t == NodeTag::EdgePlus, plus);
            }
        }
    }

    #[test]
    fn ring_transform_roundtrip_and_derivative() {
        let g = build_grid(1.0, 1.0, 4, 8, 4).unwrap();
        let ring = g.ring();
        let vals: Vec<f64> = (0..8)
            .map(|j| {
                let t = g.theta(j);
                1.0 + 2.0 * t.cos() - 0.5 * (3.0 * t).sin() + 0.25 * (4.0 * t).cos()
            })
            .collect();
        let mut c = vec![0.0; 8];
        ring.forward(&vals, &mut c);
        assert!((c[0] - 1.0).abs() < 1e-14);
        assert!((c[ring.cos_slot(1)] - 2.0).abs() < 1e-14);
        assert!((c[ring.sin_slot(3).unwrap()] + 0.5).abs() < 1e-14);
        assert!((c[ring.cos_slot(4)] - 0.25).abs() < 1e-14);
        let mut back = vec![0.0; 8];
        ring.inverse(&c, &mut back);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        ring.differentiate(&mut c);
        ring.inverse(&c, &mut back);
        for (j, b) in back.iter().enumerate() {
            let t = g.theta(j);
            let exact = -2.0 * t.sin() - 1.5 * (3.0 * t).cos();
            assert!((b - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_integrates_volume() {
        let g = build_grid(1.3, 0.7, 9, 8, 5).unwrap();
        let mut vol = 0.0;
        for k in 0..g.n_z() {
            for i in 0..g.n_r() {
                vol += g.volume_weight(i, k) * g.n_theta() as f64;
            }
        }
        assert!((vol - g.volume()).abs() < 1e-12);
    }
}
