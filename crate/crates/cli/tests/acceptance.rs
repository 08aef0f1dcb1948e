//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured values before asserting.
//!
//! Run with `cargo test --release -p cylflow-cli --test acceptance -- --nocapture`
//! to see the lines.

use std::f64::consts::PI;
use std::fs;
use std::sync::{Arc, OnceLock};

use cylflow::base_flow::{base_flow, BaseFlow, FluxData};
use cylflow::boundary_data::{make_f0, InflowData, InflowProfile};
use cylflow::columnar::ColumnarSwirl;
use cylflow::divcurl::{self, DivCurlSolver};
use cylflow::euler::{fixed_point_solve, lipschitz_probe, random_pairs, FlowState, SolverConfig};
use cylflow::norm::{cap_norm_vector, norm_scalar, norm_vector};
use cylflow::ops::div;
use cylflow::poisson::{check_compatibility, BcKind, BcSpec, FaceBc, PoissonSolver};
use cylflow::transport::{solve_transport, TraceSettings};
use cylflow::{build_grid, CylGrid, CylPoint, Frame, NodeTag, NormKind, ScalarField, VectorField};
use cylflow_cli::run::run;
use cylflow_cli::RunConfig;

const RADIUS: f64 = 1.0;
const LENGTH: f64 = 2.0;
const COARSE: (usize, usize, usize) = (17, 16, 33);
const FINE: (usize, usize, usize) = (33, 32, 65);
const SWEEP: [f64; 4] = [0.0125, 0.025, 0.05, 0.1];

fn verdict(id: u32, name: &str, passed: bool, detail: String) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id} {tag} {name}: {detail}");
    assert!(passed, "criterion {id} ({name}) failed: {detail}");
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn grid((nr, nt, nz): (usize, usize, usize)) -> Arc<CylGrid> {
    build_grid(RADIUS, LENGTH, nr, nt, nz).unwrap()
}

fn uniform_base(g: &Arc<CylGrid>) -> BaseFlow {
    base_flow(&FluxData::uniform(g, 1.0)).unwrap().0
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn columnar_solve(g: &Arc<CylGrid>, eps: f64) -> FlowState {
    let data = InflowData::from_profile(g, &InflowProfile::Columnar { eps });
    fixed_point_solve(&SolverConfig::default(), &data, &uniform_base(g)).unwrap()
}

fn columnar_error(state: &FlowState, eps: f64) -> f64 {
    let sw = ColumnarSwirl::new(RADIUS, eps);
    let exact = VectorField::from_fn(state.grid(), Frame::Cylindrical, |p| sw.velocity(p));
    let v = state.v.to_cylindrical();
    norm_vector(&v.sub(&exact).unwrap(), NormKind::L2) / norm_vector(&exact, NormKind::L2)
}

/// Columnar amplitude sweep on the coarse grid, shared by criteria 3 and 4.
fn sweep() -> &'static Vec<(f64, FlowState)> {
    static SWEEP_STATES: OnceLock<Vec<(f64, FlowState)>> = OnceLock::new();
    SWEEP_STATES.get_or_init(|| {
        let g = grid(COARSE);
        SWEEP.iter().map(|&eps| (eps, columnar_solve(&g, eps))).collect()
    })
}

#[test]
fn criterion_1_irrotational_recovery() {
    let g = grid(COARSE);
    let state = fixed_point_solve(&SolverConfig::default(), &InflowData::zero(&g), &uniform_base(&g)).unwrap();
    let ez = VectorField::from_fn(&g, Frame::Cartesian, |_| [0.0, 0.0, 1.0]);
    let dev = state.v.to_cartesian().sub(&ez).unwrap().max_abs();
    let res = state.residuals.max();
    let passed = state.converged && state.iterations() == 1 && dev <= 1e-8 && res <= 1e-8;
    verdict(
        1,
        "irrotational recovery",
        passed,
        format!(
            "iterations {}, |v - e_z|_inf {dev:.2e}, max residual {res:.2e}",
            state.iterations()
        ),
    );
}

#[test]
fn criterion_2_columnar_swirl_oracle() {
    let eps = 0.05;
    let coarse = columnar_solve(&grid(COARSE), eps);
    let fine = columnar_solve(&grid(FINE), eps);
    let (e1, e2) = (columnar_error(&coarse, eps), columnar_error(&fine, eps));
    let p = order(e1, e2);
    let ratios_ok = coarse.max_ratio() < 1.0 && fine.max_ratio() < 1.0;
    let passed = coarse.converged && fine.converged && ratios_ok && e1 <= 0.02 && p >= 1.5;
    verdict(
        2,
        "columnar swirl oracle",
        passed,
        format!(
            "rel L2 error {e1:.3e} -> {e2:.3e}, order {p:.2}, max ratios {:.3} / {:.3}",
            coarse.max_ratio(),
            fine.max_ratio()
        ),
    );
}

#[test]
fn criterion_3_contraction_behavior() {
    let states = sweep();
    let ratios: Vec<f64> = states.iter().map(|(_, s)| s.max_ratio()).collect();
    let small_contract = ratios[..3].iter().all(|&r| r < 1.0);
    // decreasing eps never raises the ratio beyond 5 % noise
    let monotone = ratios.windows(2).all(|w| w[0] <= 1.05 * w[1]);
    let converged = states.iter().all(|(_, s)| s.converged);
    let detail = states
        .iter()
        .map(|(eps, s)| format!("eps {eps}: {:.4}", s.max_ratio()))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        3,
        "contraction behavior",
        converged && small_contract && monotone,
        detail,
    );
}

#[test]
fn criterion_4_linear_data_bound() {
    let bounds: Vec<f64> = sweep().iter().map(|(_, s)| s.perturbation_norm / s.data_size).collect();
    let variation = spread(&bounds) - 1.0;
    verdict(
        4,
        "linear data bound",
        variation <= 0.25,
        format!(
            "|u|/data_size {}, variation {:.1} %",
            bounds.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>().join(" "),
            100.0 * variation
        ),
    );
}

/// Divergence-free, mantle-tangent velocity `e_z + curl(chi e_z)` with
/// `chi = eps (R^2 - r^2)^2 r cos(theta) sin(pi z / L)`.
fn analytic_velocity(g: &Arc<CylGrid>, eps: f64) -> VectorField {
    VectorField::from_fn(g, Frame::Cylindrical, |p| {
        let s = (PI * p.z / LENGTH).sin();
        let q = RADIUS * RADIUS - p.r * p.r;
        [
            -eps * q * q * p.theta.sin() * s,
            -eps * (q * q - 4.0 * p.r * p.r * q) * p.theta.cos() * s,
            1.0,
        ]
    })
}

/// `f0` continued unchanged along straight axial lines.
fn axial_extension(f0: &VectorField) -> VectorField {
    let g = f0.grid();
    let mut ext = VectorField::zeros(g, f0.frame());
    for n in 0..g.node_count() {
        let (i, j, _) = g.ijk(n);
        ext.set(n, f0.get(g.index(i, j, 0)));
    }
    ext
}

#[test]
fn criterion_5_transport_invariants() {
    let mut divs = Vec::new();
    let mut bounds_ok = true;
    let mut edge = 0.0_f64;
    let mut l2_ratios = Vec::new();
    let mut notes = Vec::new();
    for level in [(9, 8, 17), COARSE, FINE] {
        let g = grid(level);
        let v = analytic_velocity(&g, 0.05);
        let data = InflowData::from_profile(&g, &InflowProfile::Random { eps: 0.05, seed: 3 });
        let f0 = make_f0(&data, &v, 1.0).unwrap();
        let f = solve_transport(&v, &f0, &TraceSettings::for_velocity(&v, 1.0))
            .unwrap()
            .f;
        let d = norm_scalar(&div(&f), NormKind::L2);
        let d0 = norm_scalar(&div(&axial_extension(&f0)), NormKind::L2);
        let h = g.spacing();
        let allowed = 5.0 * d0 + h * h * cap_norm_vector(&f0, 0, NormKind::H1);
        bounds_ok &= d <= allowed;
        notes.push(format!(
            "{}x{}x{}: |div f| {d:.2e} (bound {allowed:.2e})",
            level.0, level.1, level.2
        ));
        divs.push(d);
        for n in 0..g.node_count() {
            let (i, _, k) = g.ijk(n);
            if g.tag(i, k) == NodeTag::EdgePlus {
                edge = edge.max(f.get(n).iter().fold(0.0, |m: f64, x| m.max(x.abs())));
            }
        }
        l2_ratios.push(norm_vector(&f, NormKind::L2) / cap_norm_vector(&f0, 0, NormKind::L2));
    }
    let orders: Vec<f64> = divs.windows(2).map(|w| order(w[0], w[1])).collect();
    let l2_stable = l2_ratios.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() <= 0.1);
    let passed = bounds_ok && orders.iter().all(|&p| p >= 1.5) && edge <= 1e-6 && l2_stable;
    verdict(
        5,
        "transport invariants",
        passed,
        format!(
            "{}; div orders {:.2?}; outflow edge max|f| {edge:.1e}; |f|/|f0| {:.4?}",
            notes.join(", "),
            orders,
            l2_ratios
        ),
    );
}

#[test]
fn criterion_6_div_curl_correctness() {
    let mut errs = Vec::new();
    let mut divs = Vec::new();
    let mut traces = Vec::new();
    let mut ratios = Vec::new();
    for level in [(9, 8, 17), COARSE, FINE] {
        let g = grid(level);
        let f = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, 0.0, 2.0 * RADIUS - 3.0 * p.r]);
        let exact = VectorField::from_fn(&g, Frame::Cylindrical, |p| [0.0, p.r * (RADIUS - p.r), 0.0]);
        let w = DivCurlSolver::new(&g).unwrap().solve(&f).unwrap().w;
        errs.push(norm_vector(&w.sub(&exact).unwrap(), NormKind::L2) / norm_vector(&exact, NormKind::L2));
        let res = divcurl::residuals(&w, &f).unwrap();
        divs.push(res.div);
        traces.push(res.normal_trace);
        ratios.push(divcurl::estimates_probe(&w, &f));
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| order(w[0], w[1])).collect();
    // residuals at round-off already satisfy any O(h^2) bound
    let same_order = |xs: &[f64]| xs.iter().all(|&x| x <= 1e-10) || xs.windows(2).all(|w| order(w[0], w[1]) >= 1.9);
    let stable = ratios.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() <= 0.1);
    let passed = orders.iter().all(|&p| p >= 1.9) && same_order(&divs) && same_order(&traces) && stable;
    verdict(
        6,
        "div-curl correctness",
        passed,
        format!(
            "rel L2 errors {}, orders {orders:.2?}, |div w| {}, max|w.n| {}, |w|_H1/|f| {ratios:.4?}",
            sci(&errs),
            sci(&divs),
            sci(&traces)
        ),
    );
}

/// Max-norm errors of `u* = r^2 cos(theta) sin(pi z / L)` with Dirichlet caps
/// and the matching Neumann mantle data.
fn manufactured_mixed(n: usize) -> (f64, bool) {
    let k = PI / LENGTH;
    let exact = move |p: CylPoint| p.r * p.r * p.theta.cos() * (k * p.z).sin();
    let lap = move |p: CylPoint| (3.0 - k * k * p.r * p.r) * p.theta.cos() * (k * p.z).sin();
    let g = build_grid(RADIUS, LENGTH, n, 8, 2 * n - 1).unwrap();
    let ex = ScalarField::from_fn(&g, exact);
    let bc = BcSpec::new(
        FaceBc::with_data(BcKind::Dirichlet, ex.clone()),
        FaceBc::with_data(BcKind::Dirichlet, ex.clone()),
        FaceBc::with_data(
            BcKind::Neumann,
            ScalarField::from_fn(&g, move |p| 2.0 * p.r * p.theta.cos() * (k * p.z).sin()),
        ),
    );
    let rhs = ScalarField::from_fn(&g, lap);
    let compatible = check_compatibility(&rhs, &bc, 0).unwrap().passed();
    let u = PoissonSolver::new(&g, &bc).unwrap().solve(&rhs, &bc).unwrap().u;
    (u.sub(&ex).unwrap().max_abs(), compatible)
}

/// Zero Dirichlet caps against a unit Neumann flux through the mantle: the
/// cap data have no radial slope at the edge while the mantle data demand one.
fn incompatible_mixed(n: usize) -> (ScalarField, bool) {
    let g = build_grid(RADIUS, LENGTH, n, 8, 2 * n - 1).unwrap();
    let bc = BcSpec::new(
        FaceBc::homogeneous(BcKind::Dirichlet),
        FaceBc::homogeneous(BcKind::Dirichlet),
        FaceBc::with_data(BcKind::Neumann, ScalarField::constant(&g, 1.0)),
    );
    let rhs = ScalarField::zeros(&g);
    let compatible = check_compatibility(&rhs, &bc, 0).unwrap().passed();
    (
        PoissonSolver::new(&g, &bc).unwrap().solve(&rhs, &bc).unwrap().u,
        compatible,
    )
}

/// Max difference between a solution and the next finer one on shared nodes.
fn refinement_gap(coarse: &ScalarField, fine: &ScalarField) -> f64 {
    let gc = coarse.grid();
    let mut gap = 0.0_f64;
    for n in 0..gc.node_count() {
        let (i, j, k) = gc.ijk(n);
        gap = gap.max((coarse.values()[n] - fine.at(2 * i, j, 2 * k)).abs());
    }
    gap
}

#[test]
fn criterion_7_poisson_compatibility() {
    let levels = [9, 17, 33];
    let manufactured: Vec<(f64, bool)> = levels.iter().map(|&n| manufactured_mixed(n)).collect();
    let errs: Vec<f64> = manufactured.iter().map(|m| m.0).collect();
    let good_order = order(errs[1], errs[2]);
    let good_flagged = manufactured.iter().any(|m| !m.1);

    let incompatible: Vec<(ScalarField, bool)> = levels.iter().map(|&n| incompatible_mixed(n)).collect();
    let flagged = incompatible.iter().all(|m| !m.1);
    let gaps = [
        refinement_gap(&incompatible[0].0, &incompatible[1].0),
        refinement_gap(&incompatible[1].0, &incompatible[2].0),
    ];
    let bad_order = order(gaps[0], gaps[1]);
    let passed = good_order >= 1.9 && !good_flagged && flagged && bad_order < 1.5;
    verdict(
        7,
        "poisson compatibility",
        passed,
        format!(
            "compatible: max errors {}, order {good_order:.2}, flagged {good_flagged}; \
             incompatible: flagged {flagged}, refinement gaps {}, order {bad_order:.2}",
            sci(&errs),
            sci(&gaps)
        ),
    );
}

#[test]
fn criterion_8_lipschitz_probes() {
    let g = grid(COARSE);
    let base = uniform_base(&g);
    let pairs = random_pairs(&g, 0.05, 5, 1);
    let rep = lipschitz_probe(&pairs, &base, &SolverConfig::default()).unwrap();
    let vel: Vec<f64> = rep.pairs.iter().filter_map(|p| p.velocity).collect();
    let pres: Vec<f64> = rep.pairs.iter().filter_map(|p| p.pressure).collect();
    let finite = vel.iter().chain(&pres).all(|x| x.is_finite() && *x > 0.0);
    let (sv, sp) = (spread(&vel), spread(&pres));
    let passed = vel.len() == 5 && pres.len() == 5 && finite && sv <= 5.0 && sp <= 5.0;
    verdict(
        8,
        "lipschitz probes",
        passed,
        format!("velocity ratios {vel:.3?} (spread {sv:.2}), pressure ratios {pres:.3?} (spread {sp:.2})"),
    );
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
        [geometry]
        radius = 1.0
        length = 2.0
        n_r = 9
        n_theta = 8
        n_z = 17

        [inflow]
        kind = "random"
        eps = 0.05
        seed = 5

        [output]
        dir = "out"
        formats = ["csv"]
    "#;
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let base = dir.path().join(name);
        fs::create_dir_all(&base).unwrap();
        let cfg = RunConfig::from_toml_str(text, &base).unwrap();
        let report = run(&cfg, &mut |_| {}).unwrap();
        assert_eq!(report.exit_code, 0, "{:?}", report.error);
        csv.push(fs::read(base.join("out/fields.csv")).unwrap());
    }
    let identical = csv[0] == csv[1];
    verdict(
        9,
        "determinism",
        identical && !csv[0].is_empty(),
        format!(
            "two runs wrote {} and {} bytes, identical {identical}",
            csv[0].len(),
            csv[1].len()
        ),
    );
}
