//! Discrete L2, H1 and max norms with the cylindrical volume element.
//!
//! Sums run in node-index order so the result is reproducible bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, VectorField};
use crate::grid::CylGrid;
use crate::ops::{cap_gradient, grad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    /// `sqrt(L2^2 + L2(grad)^2)`.
    H1,
    Linf,
}

fn weighted_sq_sum(g: &CylGrid, comps: &[&[f64]]) -> f64 {
    let mut acc = 0.0;
    for k in 0..g.n_z() {
        for j in 0..g.n_theta() {
            for i in 0..g.n_r() {
                let n = g.index(i, j, k);
                let w = g.volume_weight(i, k);
                let s: f64 = comps.iter().map(|c| c[n] * c[n]).sum();
                acc += w * s;
            }
        }
    }
    acc
}

pub fn norm_scalar(s: &ScalarField, kind: NormKind) -> f64 {
    let g = s.grid();
    match kind {
        NormKind::Linf => s.max_abs(),
        NormKind::L2 => weighted_sq_sum(g, &[s.values()]).sqrt(),
        NormKind::H1 => {
            let gr = grad(s);
            let l2 = weighted_sq_sum(g, &[s.values()]);
            let d = weighted_sq_sum(g, &[gr.component(0), gr.component(1), gr.component(2)]);
            (l2 + d).sqrt()
        }
    }
}

pub fn norm_vector(f: &VectorField, kind: NormKind) -> f64 {
    let g = f.grid();
    match kind {
        NormKind::Linf => f.max_abs(),
        NormKind::L2 => weighted_sq_sum(g, &[f.component(0), f.component(1), f.component(2)]).sqrt(),
        NormKind::H1 => {
            let cart = f.to_cartesian();
            let mut acc = weighted_sq_sum(g, &[cart.component(0), cart.component(1), cart.component(2)]);
            for c in 0..3 {
                let gr = grad(&cart.component_field(c));
                acc += weighted_sq_sum(g, &[gr.component(0), gr.component(1), gr.component(2)]);
            }
            acc.sqrt()
        }
    }
}

/// Anything with a discrete norm.
pub trait Normed {
    fn norm(&self, kind: NormKind) -> f64;
}

impl Normed for ScalarField {
    fn norm(&self, kind: NormKind) -> f64 {
        norm_scalar(self, kind)
    }
}

impl Normed for VectorField {
    fn norm(&self, kind: NormKind) -> f64 {
        norm_vector(self, kind)
    }
}

/// Free-function form of [`Normed::norm`].
pub fn norm<F: Normed>(field: &F, kind: NormKind) -> f64 {
    field.norm(kind)
}

fn cap_sq_sum(g: &CylGrid, comps: &[&[f64]], k: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..g.n_theta() {
        for i in 0..g.n_r() {
            let n = g.index(i, j, k);
            let s: f64 = comps.iter().map(|c| c[n] * c[n]).sum();
            acc += g.cap_weight(i) * s;
        }
    }
    acc
}

/// Surface norm of a scalar restricted to the cap at height index `k`.
/// `H1` uses the tangential gradient.
pub fn cap_norm_scalar(s: &ScalarField, k: usize, kind: NormKind) -> f64 {
    let g = s.grid();
    match kind {
        NormKind::Linf => (0..g.n_theta())
            .flat_map(|j| (0..g.n_r()).map(move |i| (i, j)))
            .fold(0.0, |m, (i, j)| m.max(s.at(i, j, k).abs())),
        NormKind::L2 => cap_sq_sum(g, &[s.values()], k).sqrt(),
        NormKind::H1 => {
            let gr = cap_gradient(s, k);
            (cap_sq_sum(g, &[s.values()], k) + cap_sq_sum(g, &[gr.component(0), gr.component(1)], k)).sqrt()
        }
    }
}

/// Surface norm of a vector field on the cap at height index `k`.
pub fn cap_norm_vector(f: &VectorField, k: usize, kind: NormKind) -> f64 {
    let g = f.grid();
    let cart = f.to_cartesian();
    match kind {
        NormKind::Linf => (0..g.n_theta())
            .flat_map(|j| (0..g.n_r()).map(move |i| g.index(i, j, k)))
            .fold(0.0, |m, n| {
                let v = cart.get(n);
                m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            }),
        NormKind::L2 => cap_sq_sum(g, &[cart.component(0), cart.component(1), cart.component(2)], k).sqrt(),
        NormKind::H1 => {
            let mut acc = cap_sq_sum(g, &[cart.component(0), cart.component(1), cart.component(2)], k);
            for c in 0..3 {
                let gr = cap_gradient(&cart.component_field(c), k);
                acc += cap_sq_sum(g, &[gr.component(0), gr.component(1)], k);
            }
            acc.sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Frame;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn constant_on_unit_volume() {
        let radius = (1.0 / PI).sqrt();
        let g = build_grid(radius, 1.0, 7, 8, 5).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert!((norm_scalar(&one, NormKind::L2) - 1.0).abs() < 1e-10);
        assert!((norm_scalar(&one, NormKind::H1) - 1.0).abs() < 1e-10);
        assert_eq!(norm_scalar(&one, NormKind::Linf), 1.0);
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = build_grid(1.0, 1.0, 5, 4, 5).unwrap();
        let z = VectorField::zeros(&g, Frame::Cylindrical);
        for kind in [NormKind::L2, NormKind::H1, NormKind::Linf] {
            assert_eq!(norm_vector(&z, kind), 0.0);
            assert_eq!(norm_scalar(&ScalarField::zeros(&g), kind), 0.0);
        }
    }

    #[test]
    fn z_field_converges_to_exact_integral() {
        // int z^2 dV = pi R^2 L^3 / 3 = pi / 3 on the unit cylinder
        let exact = PI / 3.0;
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let g = build_grid(1.0, 1.0, 5, 4, n).unwrap();
            let s = ScalarField::from_fn(&g, |p| p.z);
            let l2 = norm_scalar(&s, NormKind::L2);
            errs.push((l2 * l2 - exact).abs());
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.9, "order {order}, errs {errs:?}");
    }

    #[test]
    fn norms_are_homogeneous() {
        let g = build_grid(1.0, 2.0, 6, 6, 6).unwrap();
        let f = VectorField::from_fn(&g, Frame::Cylindrical, |p| [p.z.sin(), p.r * p.theta.cos(), 1.0 + p.r]);
        for kind in [NormKind::L2, NormKind::H1, NormKind::Linf] {
            let a = norm_vector(&f, kind);
            let b = norm_vector(&f.scaled(-3.5), kind);
            assert!((b - 3.5 * a).abs() <= 1e-13 * b);
        }
    }
}
