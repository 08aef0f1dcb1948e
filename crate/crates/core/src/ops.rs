//! Discrete gradient, divergence and curl in cylindrical coordinates.
//!
//! Second-order centered differences in `r` and `z` (one-sided third order
//! at the mantle and the caps), spectral differentiation in `theta`. The
//! conservative forms `(1/r) d_r(r F)` are used so that `div curl` and
//! `curl grad` vanish identically away from the axis. On the axis, Cartesian
//! derivatives are recovered from centered differences along the diameters.

use crate::error::Result;
use crate::field::{cart_to_cyl, cyl_to_cart, Frame, ScalarField, VectorField};
use crate::grid::CylGrid;

/// First derivative at the end of a line from the boundary value `a[0]` and
/// the next three values inward, third order. Negate for the upper end.
#[inline]
pub(crate) fn one_sided(a: [f64; 4], inv_h: f64) -> f64 {
    (-11.0 * a[0] + 18.0 * a[1] - 9.0 * a[2] + 2.0 * a[3]) * inv_h / 6.0
}

/// `d/dr`; axis entries are left at zero.
pub(crate) fn deriv_r(g: &CylGrid, u: &[f64]) -> Vec<f64> {
    let nr = g.n_r();
    let inv = 1.0 / g.dr();
    let mut out = vec![0.0; u.len()];
    for base in (0..u.len()).step_by(nr) {
        let row = &u[base..base + nr];
        let o = &mut out[base..base + nr];
        for i in 1..nr - 1 {
            o[i] = 0.5 * (row[i + 1] - row[i - 1]) * inv;
        }
        let n = nr - 1;
        o[n] = -one_sided([row[n], row[n - 1], row[n - 2], row[n - 3]], inv);
    }
    out
}

/// `d/dr (r u)`, with axis entries left at zero.
pub(crate) fn deriv_r_of_ru(g: &CylGrid, u: &[f64]) -> Vec<f64> {
    let ru: Vec<f64> = u.iter().enumerate().map(|(n, v)| g.r(n % g.n_r()) * v).collect();
    deriv_r(g, &ru)
}

pub(crate) fn deriv_z(g: &CylGrid, u: &[f64]) -> Vec<f64> {
    let plane = g.n_r() * g.n_theta();
    let nz = g.n_z();
    let inv = 1.0 / g.dz();
    let mut out = vec![0.0; u.len()];
    for p in 0..plane {
        let at = |k: usize| u[p + plane * k];
        out[p] = one_sided([at(0), at(1), at(2), at(3)], inv);
        for k in 1..nz - 1 {
            out[p + plane * k] = 0.5 * (at(k + 1) - at(k - 1)) * inv;
        }
        let n = nz - 1;
        out[p + plane * n] = -one_sided([at(n), at(n - 1), at(n - 2), at(n - 3)], inv);
    }
    out
}

/// Spectral `d/dtheta` along every ring.
pub(crate) fn deriv_theta(g: &CylGrid, u: &[f64]) -> Vec<f64> {
    let (nr, nt) = (g.n_r(), g.n_theta());
    let ring = g.ring();
    let mut out = vec![0.0; u.len()];
    let mut vals = vec![0.0; nt];
    let mut coeffs = vec![0.0; nt];
    for k in 0..g.n_z() {
        for i in 0..nr {
            for (j, v) in vals.iter_mut().enumerate() {
                *v = u[g.index(i, j, k)];
            }
            ring.forward(&vals, &mut coeffs);
            ring.differentiate(&mut coeffs);
            ring.inverse(&coeffs, &mut vals);
            for (j, v) in vals.iter().enumerate() {
                out[g.index(i, j, k)] = *v;
            }
        }
    }
    out
}

/// Cartesian `(d/dx, d/dy)` on the axis at height `k`. Centered differences
/// along each diameter give directional derivatives that are projected onto
/// `cos`/`sin`. The spans `dr` and `2 dr` are combined as `2 D1 - D2`, which
/// cancels the first-order error produced by `|x|`-type terms such as `r^2`
/// in an azimuthal component.
pub(crate) fn axis_xy_derivative(g: &CylGrid, u: &[f64], k: usize) -> (f64, f64) {
    let nt = g.n_theta();
    let (mut dx, mut dy) = (0.0, 0.0);
    let span = |i: usize, j: usize| (u[g.index(i, j, k)] - u[g.index(i, g.opposite(j), k)]) / (2.0 * g.r(i));
    for j in 0..nt {
        let d = 2.0 * span(1, j) - span(2, j);
        let (s, c) = g.theta(j).sin_cos();
        dx += c * d;
        dy += s * d;
    }
    let w = 2.0 / nt as f64;
    (w * dx, w * dy)
}

/// Mean over the axis nodes of plane `k`.
pub(crate) fn axis_mean(g: &CylGrid, u: &[f64], k: usize) -> f64 {
    (0..g.n_theta()).map(|j| u[g.index(0, j, k)]).sum::<f64>() / g.n_theta() as f64
}

fn axis_z_derivative(g: &CylGrid, u: &[f64], k: usize) -> f64 {
    let nz = g.n_z();
    let inv = 1.0 / g.dz();
    let a = |k: usize| axis_mean(g, u, k);
    if k == 0 {
        one_sided([a(0), a(1), a(2), a(3)], inv)
    } else if k == nz - 1 {
        -one_sided([a(k), a(k - 1), a(k - 2), a(k - 3)], inv)
    } else {
        0.5 * (a(k + 1) - a(k - 1)) * inv
    }
}

/// Gradient in the cylindrical frame.
pub fn grad(s: &ScalarField) -> VectorField {
    let g = s.grid().clone();
    let u = s.values();
    let dr = deriv_r(&g, u);
    let dt = deriv_theta(&g, u);
    let dz = deriv_z(&g, u);
    let mut out = VectorField::zeros(&g, Frame::Cylindrical);
    for n in 0..g.node_count() {
        let i = n % g.n_r();
        if i == 0 {
            continue;
        }
        out.set(n, [dr[n], dt[n] / g.r(i), dz[n]]);
    }
    for k in 0..g.n_z() {
        let (gx, gy) = axis_xy_derivative(&g, u, k);
        let gz = axis_z_derivative(&g, u, k);
        for j in 0..g.n_theta() {
            out.set(g.index(0, j, k), cart_to_cyl(g.theta(j), [gx, gy, gz]));
        }
    }
    out
}

/// Cartesian components of the nodes needed by the axis stencils.
fn cartesian_components(f: &VectorField) -> [Vec<f64>; 3] {
    let c = f.to_cartesian();
    [
        c.component(0).to_vec(),
        c.component(1).to_vec(),
        c.component(2).to_vec(),
    ]
}

/// Cartesian velocity-gradient tensor `J[a][b] = d v_a / d x_b` at the axis of plane `k`.
fn axis_jacobian(g: &CylGrid, cart: &[Vec<f64>; 3], k: usize) -> [[f64; 3]; 3] {
    let mut jac = [[0.0; 3]; 3];
    for a in 0..3 {
        let (dx, dy) = axis_xy_derivative(g, &cart[a], k);
        jac[a] = [dx, dy, axis_z_derivative(g, &cart[a], k)];
    }
    jac
}

pub fn div(f: &VectorField) -> ScalarField {
    let g = f.grid().clone();
    let f = f.to_cylindrical();
    let drr = deriv_r_of_ru(&g, f.component(0));
    let dtt = deriv_theta(&g, f.component(1));
    let dzz = deriv_z(&g, f.component(2));
    let mut out = ScalarField::zeros(&g);
    {
        let vals = out.values_mut();
        for n in 0..g.node_count() {
            let i = n % g.n_r();
            if i > 0 {
                vals[n] = (drr[n] + dtt[n]) / g.r(i) + dzz[n];
            }
        }
    }
    let cart = cartesian_components(&f);
    for k in 0..g.n_z() {
        let jac = axis_jacobian(&g, &cart, k);
        let d = jac[0][0] + jac[1][1] + jac[2][2];
        for j in 0..g.n_theta() {
            out.values_mut()[g.index(0, j, k)] = d;
        }
    }
    out
}

/// Curl in the cylindrical frame.
pub fn curl(f: &VectorField) -> VectorField {
    let g = f.grid().clone();
    let f = f.to_cylindrical();
    let (fr, ft, fz) = (f.component(0), f.component(1), f.component(2));
    let dt_fz = deriv_theta(&g, fz);
    let dz_ft = deriv_z(&g, ft);
    let dz_fr = deriv_z(&g, fr);
    let dr_fz = deriv_r(&g, fz);
    let dr_rft = deriv_r_of_ru(&g, ft);
    let dt_fr = deriv_theta(&g, fr);
    let mut out = VectorField::zeros(&g, Frame::Cylindrical);
    for n in 0..g.node_count() {
        let i = n % g.n_r();
        if i == 0 {
            continue;
        }
        let r = g.r(i);
        out.set(
            n,
            [dt_fz[n] / r - dz_ft[n], dz_fr[n] - dr_fz[n], (dr_rft[n] - dt_fr[n]) / r],
        );
    }
    let cart = cartesian_components(&f);
    for k in 0..g.n_z() {
        let jac = axis_jacobian(&g, &cart, k);
        let c = [jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1]];
        for j in 0..g.n_theta() {
            out.set(g.index(0, j, k), cart_to_cyl(g.theta(j), c));
        }
    }
    out
}

/// Cartesian velocity-gradient tensor as nine scalar fields,
/// `out[a][b] = d v_a / d x_b`.
pub fn cartesian_jacobian(v: &VectorField) -> Result<[[ScalarField; 3]; 3]> {
    let cart = v.to_cartesian();
    let g = v.grid().clone();
    let rows: Vec<[ScalarField; 3]> = (0..3)
        .map(|a| {
            let gr = grad(&cart.component_field(a));
            let mut dx = ScalarField::zeros(&g);
            let mut dy = ScalarField::zeros(&g);
            let mut dz = ScalarField::zeros(&g);
            for n in 0..g.node_count() {
                let theta = g.point(n).theta;
                let c = cyl_to_cart(theta, gr.get(n));
                dx.values_mut()[n] = c[0];
                dy.values_mut()[n] = c[1];
                dz.values_mut()[n] = c[2];
            }
            [dx, dy, dz]
        })
        .collect();
    let mut it = rows.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// Tangential gradient on the cap at height index `k`; zero elsewhere.
pub fn cap_gradient(s: &ScalarField, k: usize) -> VectorField {
    let g = s.grid().clone();
    let u = s.values();
    let nr = g.n_r();
    let inv = 1.0 / g.dr();
    let mut out = VectorField::zeros(&g, Frame::Cylindrical);
    let ring = g.ring();
    let nt = g.n_theta();
    let mut vals = vec![0.0; nt];
    let mut coeffs = vec![0.0; nt];
    for i in 1..nr {
        for (j, v) in vals.iter_mut().enumerate() {
            *v = u[g.index(i, j, k)];
        }
        ring.forward(&vals, &mut coeffs);
        ring.differentiate(&mut coeffs);
        let mut dth = vec![0.0; nt];
        ring.inverse(&coeffs, &mut dth);
        for j in 0..nt {
            let at = |ii: usize| u[g.index(ii, j, k)];
            let d_r = if i < nr - 1 {
                0.5 * (at(i + 1) - at(i - 1)) * inv
            } else {
                -one_sided([at(i), at(i - 1), at(i - 2), at(i - 3)], inv)
            };
            out.set(g.index(i, j, k), [d_r, dth[j] / g.r(i), 0.0]);
        }
    }
    let (gx, gy) = axis_xy_derivative(&g, u, k);
    for j in 0..nt {
        out.set(g.index(0, j, k), cart_to_cyl(g.theta(j), [gx, gy, 0.0]));
    }
    out
}

/// `(a . grad) b` for Cartesian fields, via the Cartesian Jacobian of `b`.
pub fn advective_derivative(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    a.same_grid(b)?;
    let g = a.grid().clone();
    let jac = cartesian_jacobian(b)?;
    let ac = a.to_cartesian();
    let mut out = VectorField::zeros(&g, Frame::Cartesian);
    for n in 0..g.node_count() {
        let av = ac.get(n);
        let mut o = [0.0; 3];
        for (r, row) in jac.iter().enumerate() {
            o[r] = (0..3).map(|c| row[c].values()[n] * av[c]).sum();
        }
        out.set(n, o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::norm::{norm_scalar, norm_vector, NormKind};

    #[test]
    fn grad_of_z_is_unit_axial() {
        let g = build_grid(1.0, 2.0, 6, 8, 7).unwrap();
        let s = ScalarField::from_fn(&g, |p| p.z);
        let gr = grad(&s);
        for n in 0..g.node_count() {
            let v = gr.get(n);
            assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_of_linear_cartesian_is_exact_including_axis() {
        let g = build_grid(1.0, 1.0, 5, 8, 5).unwrap();
        let s = ScalarField::from_fn(&g, |p| {
            let c = p.to_cartesian();
            1.0 + 2.0 * c[0] - 3.0 * c[1] + 0.5 * c[2]
        });
        let gr = grad(&s).to_cartesian();
        for n in 0..g.node_count() {
            let v = gr.get(n);
            assert!((v[0] - 2.0).abs() < 1e-11 && (v[1] + 3.0).abs() < 1e-11 && (v[2] - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn curl_of_azimuthal_profile() {
        // curl (0, r(R - r), 0) = (0, 0, 2R - 3r). The stencil acts on the cubic
        // r^2 (R - r): centered rows err by dr^2 / r, while the one-sided
        // mantle row and the axis extrapolation are exact.
        let radius = 1.0;
        let g = build_grid(radius, 1.0, 9, 8, 5).unwrap();
        let dr = g.dr();
        let f = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, p.r * (radius - p.r), 0.0]);
        let c = curl(&f);
        for n in 0..g.node_count() {
            let p = g.point(n);
            let v = c.get(n);
            assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
            let err = (v[2] - (2.0 * radius - 3.0 * p.r)).abs();
            let bound = if p.r == 0.0 { 1e-12 } else { 2.0 * dr * dr / p.r + 1e-12 };
            assert!(err <= bound, "r = {}: err {err}", p.r);
        }
    }

    #[test]
    fn div_curl_and_curl_grad_vanish_off_axis() {
        let g = build_grid(1.0, 1.0, 9, 8, 9).unwrap();
        let f = VectorField::from_fn(&g, Frame::Cartesian, |p| {
            let c = p.to_cartesian();
            [
                (c[1] * c[2]).sin(),
                (c[0] + c[2] * c[2]).cos(),
                c[0] * c[1] * c[2].exp(),
            ]
        });
        let dc = div(&curl(&f));
        let s = ScalarField::from_fn(&g, |p| (p.r * p.r * p.theta.cos() + p.z).sin());
        let cg = curl(&grad(&s));
        for n in 0..g.node_count() {
            if n % g.n_r() == 0 {
                continue;
            }
            assert!(dc.values()[n].abs() < 1e-10);
            let v = cg.get(n);
            assert!(v.iter().all(|c| c.abs() < 1e-10));
        }
        // the axis rows carry ordinary truncation error
        assert!(norm_scalar(&dc, NormKind::L2) < 0.05);
        assert!(norm_vector(&cg, NormKind::L2) < 0.05);
    }
}
