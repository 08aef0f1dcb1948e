//! Inflow data `(g, h)` and the inflow vorticity `f0` built from it.
//!
//! With `n = -e_z` the outward normal of the inflow cap,
//!
//! ```text
//! f0 = h n + (h / (v.n)) v_T - (1 / (v.n)) n x grad_T g
//! ```
//!
//! so that `n . f0 = h`, and the tangential part is what the vorticity of a
//! steady flow with Bernoulli head `g + |v0|^2/2 + p0` must be.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::columnar::ColumnarSwirl;
use crate::error::{Error, Result};
use crate::field::{Frame, ScalarField, VectorField};
use crate::grid::{CylGrid, CylPoint, NodeTag};
use crate::norm::{cap_norm_scalar, cap_norm_vector, NormKind};
use crate::ops::cap_gradient;

/// Tolerance of the edge conditions `h = 0`, `grad_T g = 0`.
pub const EDGE_TOLERANCE: f64 = 1e-8;

/// Bernoulli perturbation `g` and normal vorticity `h`, read on the inflow
/// cap.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowData {
    pub g: ScalarField,
    pub h: ScalarField,
}

/// Named families of inflow data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InflowProfile {
    #[default]
    Zero,
    /// Trace of the columnar swirl of amplitude `eps`.
    Columnar { eps: f64 },
    /// `h = eps (1 - rho^2)^2`, `g = 0`.
    Bump { eps: f64 },
    /// Smooth random combination of low modes, scaled by `eps`.
    Random { eps: f64, seed: u64 },
}

impl InflowProfile {
    pub fn amplitude(&self) -> f64 {
        match *self {
            InflowProfile::Zero => 0.0,
            InflowProfile::Columnar { eps } | InflowProfile::Bump { eps } | InflowProfile::Random { eps, .. } => eps,
        }
    }

    pub fn with_amplitude(&self, eps: f64) -> Self {
        match *self {
            InflowProfile::Zero => InflowProfile::Zero,
            InflowProfile::Columnar { .. } => InflowProfile::Columnar { eps },
            InflowProfile::Bump { .. } => InflowProfile::Bump { eps },
            InflowProfile::Random { seed, .. } => InflowProfile::Random { eps, seed },
        }
    }
}

/// Coefficients of a random profile: `(a0, a1c, a1s, a2c, a2s)` for `h` and
/// `(c, q0, q1c, q1s, q2c, q2s)` for `g`.
fn random_coefficients(seed: u64) -> ([f64; 5], [f64; 6]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = [0.0; 5];
    let mut g = [0.0; 6];
    h.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
    g.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
    (h, g)
}

impl InflowData {
    pub fn zero(grid: &Arc<CylGrid>) -> Self {
        Self {
            g: ScalarField::zeros(grid),
            h: ScalarField::zeros(grid),
        }
    }

    pub fn from_fns(grid: &Arc<CylGrid>, g: impl Fn(CylPoint) -> f64, h: impl Fn(CylPoint) -> f64) -> Self {
        Self {
            g: ScalarField::from_fn(grid, g),
            h: ScalarField::from_fn(grid, h),
        }
    }

    pub fn from_profile(grid: &Arc<CylGrid>, profile: &InflowProfile) -> Self {
        let rr = grid.radius();
        let bump = move |p: CylPoint| {
            let rho = p.r / rr;
            (1.0 - rho * rho).powi(2)
        };
        match *profile {
            InflowProfile::Zero => Self::zero(grid),
            InflowProfile::Columnar { eps } => {
                let c = ColumnarSwirl::new(rr, eps);
                Self::from_fns(grid, |p| c.g(p), |p| c.h(p))
            }
            InflowProfile::Bump { eps } => Self::from_fns(grid, |_| 0.0, move |p| eps * bump(p)),
            InflowProfile::Random { eps, seed } => {
                let (a, q) = random_coefficients(seed);
                let angular = move |p: CylPoint, c: &[f64]| {
                    let rho = p.r / rr;
                    let (s1, c1) = p.theta.sin_cos();
                    let (s2, c2) = (2.0 * p.theta).sin_cos();
                    c[0] + rho * (c[1] * c1 + c[2] * s1) + rho * rho * (c[3] * c2 + c[4] * s2)
                };
                Self::from_fns(
                    grid,
                    move |p| eps * (q[0] + bump(p) * angular(p, &q[1..])),
                    move |p| eps * bump(p) * angular(p, &a),
                )
            }
        }
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        self.g.grid()
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &InflowData, beta: f64) -> Result<Self> {
        Ok(Self {
            g: self.g.lincomb(alpha, &other.g, beta)?,
            h: self.h.lincomb(alpha, &other.h, beta)?,
        })
    }

    /// `grad_T g` on the inflow cap.
    pub fn tangential_grad_g(&self) -> VectorField {
        cap_gradient(&self.g, 0)
    }

    /// `|h|_{H1(cap)} + |grad_T g|_{H1(cap)}`.
    pub fn data_size(&self) -> f64 {
        cap_norm_scalar(&self.h, 0, NormKind::H1) + cap_norm_vector(&self.tangential_grad_g(), 0, NormKind::H1)
    }

    /// `|h|_{L2(cap)} + |grad_T g|_{L2(cap)}`.
    pub fn data_size_l2(&self) -> f64 {
        cap_norm_scalar(&self.h, 0, NormKind::L2) + cap_norm_vector(&self.tangential_grad_g(), 0, NormKind::L2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InflowReport {
    /// `max |h|` on the inflow edge circle.
    pub h_edge: f64,
    /// `max |grad_T g|` on the inflow edge circle.
    pub grad_g_edge: f64,
    pub edge_ok: bool,
    pub data_size: f64,
    pub k1: Option<f64>,
    /// `false` when `data_size` exceeds `k1`; a warning, not an error.
    pub within_k1: bool,
}

impl InflowReport {
    pub fn passed(&self) -> bool {
        self.edge_ok
    }
}

pub fn validate(data: &InflowData, k1: Option<f64>) -> InflowReport {
    let g = data.grid();
    let gt = data.tangential_grad_g();
    let i = g.n_r() - 1;
    let mut h_edge = 0.0_f64;
    let mut grad_g_edge = 0.0_f64;
    for j in 0..g.n_theta() {
        let n = g.index(i, j, 0);
        h_edge = h_edge.max(data.h.values()[n].abs());
        let v = gt.get(n);
        grad_g_edge = grad_g_edge.max(v[0].hypot(v[1]));
    }
    let data_size = data.data_size();
    let grad_tol = EDGE_TOLERANCE.max(one_sided_truncation(&data.g));
    let edge_ok = h_edge <= EDGE_TOLERANCE && grad_g_edge <= grad_tol;
    InflowReport {
        h_edge,
        grad_g_edge,
        edge_ok,
        data_size,
        k1,
        within_k1: k1.is_none_or(|k| data_size <= k),
    }
}

/// Truncation scale `dr^2 max |d^3 g / dr^3|` of the one-sided radial
/// derivative on the inflow cap, estimated from third differences.
fn one_sided_truncation(g: &ScalarField) -> f64 {
    let grid = g.grid();
    let dr = grid.dr();
    let mut worst = 0.0_f64;
    for j in 0..grid.n_theta() {
        for i in 3..grid.n_r() {
            let at = |ii: usize| g.at(ii, j, 0);
            let d3 = at(i) - 3.0 * at(i - 1) + 3.0 * at(i - 2) - at(i - 3);
            worst = worst.max(d3.abs() / dr);
        }
    }
    worst
}

/// Inflow vorticity for velocity `v` (any frame); nonzero only on the
/// inflow plane, returned in the cylindrical frame.
///
/// `c` is the positive lower speed bound of the base flow; the normal speed
/// must stay above `c / 2`. Edge values are zeroed when `data` passes
/// [`validate`].
pub fn make_f0(data: &InflowData, v: &VectorField, c: f64) -> Result<VectorField> {
    let g = data.grid();
    if **v.grid() != **g {
        return Err(Error::GridMismatch);
    }
    let v = v.to_cylindrical();
    let gt = data.tangential_grad_g();
    let edge_ok = validate(data, None).edge_ok;
    let threshold = 0.5 * c;
    let mut f0 = VectorField::zeros(g, Frame::Cylindrical);
    for j in 0..g.n_theta() {
        for i in 0..g.n_r() {
            let n = g.index(i, j, 0);
            let vv = v.get(n);
            // v . n with n = -e_z
            let vn = -vv[2];
            if !(vn.abs() >= threshold && vn < 0.0) {
                return Err(Error::DegenerateInflow {
                    normal_speed: vn.abs(),
                    threshold,
                });
            }
            if edge_ok && g.tag(i, 0) == NodeTag::EdgeMinus {
                continue;
            }
            let h = data.h.values()[n];
            let a = gt.get(n);
            // n x grad_T g = (a_theta, -a_r, 0) for n = -e_z
            let cross = [a[1], -a[0]];
            f0.set(n, [(h * vv[0] - cross[0]) / vn, (h * vv[1] - cross[1]) / vn, -h]);
        }
    }
    Ok(f0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::norm::{norm_vector, NormKind};

    fn axial(g: &Arc<CylGrid>) -> VectorField {
        VectorField::from_fn(g, Frame::Cylindrical, |_| [0.0, 0.0, 1.0])
    }

    #[test]
    fn zero_data_gives_zero_f0() {
        let g = build_grid(1.0, 1.0, 6, 8, 5).unwrap();
        let f0 = make_f0(&InflowData::zero(&g), &axial(&g), 1.0).unwrap();
        assert_eq!(norm_vector(&f0, NormKind::Linf), 0.0);
        let rep = validate(&InflowData::zero(&g), Some(1.0));
        assert!(rep.passed() && rep.data_size == 0.0 && rep.within_k1);
    }

    #[test]
    fn grad_g_along_x_gives_minus_e_y() {
        let g = build_grid(1.0, 1.0, 6, 8, 5).unwrap();
        let data = InflowData::from_fns(&g, |p| p.to_cartesian()[0], |_| 0.0);
        let f0 = make_f0(&data, &axial(&g), 1.0).unwrap().to_cartesian();
        // interior cap nodes; the edge is not zeroed because validation fails
        for j in 0..g.n_theta() {
            for i in 0..g.n_r() {
                let v = f0.get(g.index(i, j, 0));
                assert!(v[0].abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12 && v[2].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_component_reproduces_h() {
        let g = build_grid(1.0, 1.0, 7, 8, 5).unwrap();
        let data = InflowData::from_profile(&g, &InflowProfile::Random { eps: 0.3, seed: 4 });
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.1 * p.r, 0.2, 1.0 + 0.1 * p.r]);
        let f0 = make_f0(&data, &v, 1.0).unwrap();
        for j in 0..g.n_theta() {
            for i in 0..g.n_r() - 1 {
                let n = g.index(i, j, 0);
                assert_eq!(-f0.get(n)[2], data.h.values()[n]);
            }
        }
    }

    #[test]
    fn edge_validation() {
        let g = build_grid(1.0, 1.0, 9, 8, 5).unwrap();
        let h1 = InflowData::from_fns(&g, |_| 0.0, |_| 1.0);
        let rep = validate(&h1, None);
        assert!(!rep.passed() && (rep.h_edge - 1.0).abs() < 1e-15);
        let mut sizes = Vec::new();
        for eps in [0.01, 0.02, 0.04] {
            let d = InflowData::from_profile(&g, &InflowProfile::Bump { eps });
            let rep = validate(&d, None);
            assert!(rep.passed());
            sizes.push(rep.data_size);
        }
        assert!((sizes[1] / sizes[0] - 2.0).abs() < 1e-12 && (sizes[2] / sizes[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn f0_is_linear_in_data() {
        let g = build_grid(1.0, 1.0, 7, 8, 5).unwrap();
        let a = InflowData::from_profile(&g, &InflowProfile::Random { eps: 0.1, seed: 1 });
        let b = InflowData::from_profile(&g, &InflowProfile::Random { eps: 0.2, seed: 2 });
        let v = axial(&g);
        let fa = make_f0(&a, &v, 1.0).unwrap();
        let fb = make_f0(&b, &v, 1.0).unwrap();
        let fab = make_f0(&a.lincomb(2.0, &b, -3.0).unwrap(), &v, 1.0).unwrap();
        let diff = fab.sub(&fa.lincomb(2.0, &fb, -3.0).unwrap()).unwrap();
        assert!(norm_vector(&diff, NormKind::Linf) < 1e-12);
    }

    #[test]
    fn edge_values_vanish_for_valid_data() {
        let g = build_grid(1.0, 1.0, 9, 8, 5).unwrap();
        let data = InflowData::from_profile(&g, &InflowProfile::Columnar { eps: 0.05 });
        assert!(validate(&data, None).passed());
        let f0 = make_f0(&data, &axial(&g), 1.0).unwrap();
        for j in 0..g.n_theta() {
            let v = f0.get(g.index(g.n_r() - 1, j, 0));
            assert!(v.iter().all(|c| c.abs() <= 1e-7));
        }
    }

    #[test]
    fn columnar_trace_reproduces_columnar_vorticity() {
        let sw = ColumnarSwirl::new(1.0, 0.05);
        let mut worst_theta = Vec::new();
        for n in [17, 33] {
            let g = build_grid(1.0, 1.0, n, 8, 5).unwrap();
            let data = InflowData::from_profile(&g, &InflowProfile::Columnar { eps: 0.05 });
            let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| sw.velocity(p));
            let f0 = make_f0(&data, &v, 1.0).unwrap();
            let mut w = 0.0_f64;
            for i in 1..g.n_r() {
                let p = g.point(g.index(i, 0, 0));
                let f = f0.get(g.index(i, 0, 0));
                assert!(f[0].abs() < 1e-12);
                assert!((f[2] - sw.vorticity(p.r)).abs() < 1e-12);
                w = w.max(f[1].abs());
            }
            worst_theta.push(w);
        }
        // the azimuthal part cancels up to the truncation error of grad_T g
        assert!(worst_theta[0] / worst_theta[1] > 3.0, "{worst_theta:?}");
    }

    #[test]
    fn degenerate_inflow_detected() {
        let g = build_grid(1.0, 1.0, 6, 8, 5).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, 0.0, 0.4 + p.r]);
        assert!(matches!(
            make_f0(&InflowData::zero(&g), &v, 1.0),
            Err(Error::DegenerateInflow { .. })
        ));
    }
}
