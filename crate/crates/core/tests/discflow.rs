use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Vector4};
use num_complex::Complex64;
use proptest::prelude::*;
use topolab::discflow::*;
use topolab::lagrangian::LagrangianSection;
use topolab::quadrature::gauss_legendre;
use topolab::surfgeom::SampleGrid;
use topolab::toponogov::make_builtin;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn paraboloid_section() -> &'static LagrangianSection {
    static SECTION: OnceLock<LagrangianSection> = OnceLock::new();
    SECTION.get_or_init(|| {
        let par = make_builtin("paraboloid", &BTreeMap::new()).unwrap();
        LagrangianSection::from_surface(&par, &SampleGrid::uniform((-3.0, 3.0), 49, (-3.0, 3.0), 49)).unwrap()
    })
}

fn off_tip() -> BoundaryCircle {
    BoundaryCircle { centre: [0.4, 0.0], radius: 0.3 }
}

/// The complex line `η = iλξ` and a spacelike holomorphic disc inside it.
const LAMBDA: f64 = 0.5;
const RHO: f64 = 0.3;

fn complex_line() -> LinearSection {
    LinearSection { slope: c(0.0, LAMBDA), offset: c(0.0, 0.0) }
}

fn holomorphic(z: Complex64) -> (Complex64, Complex64) {
    (RHO * z, c(0.0, LAMBDA) * RHO * z)
}

fn real4(x: Complex64, e: Complex64) -> Vector4<f64> {
    Vector4::new(x.re, x.im, e.re, e.im)
}

#[test]
fn anti_holomorphic_and_fiber_discs() {
    let anti = DiscMesh::from_fn(8, 16, 1.0, |z| (c(0.1, 0.0), z.conj())).unwrap();
    let fiber = DiscMesh::from_fn(8, 16, 1.0, |z| (c(0.2, -0.1), c(0.5, 0.5) + c(1.5, -0.7) * z)).unwrap();
    for n in 0..anti.len() {
        let r = dbar_residual(&anti, n);
        assert!((r.eta - 2.0).norm() < 1e-12 && r.xi.norm() < 1e-12);
        assert_eq!(r.one_sided, anti.is_boundary(n));
        let f = dbar_residual(&fiber, n);
        assert!(f.xi.norm() < 1e-10 && f.eta.norm() < 1e-10);
    }
    assert!((dbar_norm(&anti) - 2.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stencil_is_exact_on_affine_maps(
        coef in prop::array::uniform6(-3.0..3.0f64),
        n_r in 2usize..12,
        n_theta in 5usize..40,
    ) {
        let (a, b, d) = (c(coef[0], coef[1]), c(coef[2], coef[3]), c(coef[4], coef[5]));
        let mesh = DiscMesh::from_fn(n_r, n_theta, 1.0, |z| (a + b * z + d * z.conj(), b * z - a * z.conj())).unwrap();
        for n in 0..mesh.len() {
            let r = dbar_residual(&mesh, n);
            prop_assert!((r.xi - 2.0 * d).norm() < 1e-12, "{n}: {}", (r.xi - 2.0 * d).norm());
            prop_assert!((r.eta + 2.0 * a).norm() < 1e-12);
        }
    }
}

#[test]
fn initial_disc_sits_on_the_section() {
    let sec = paraboloid_section();
    for circle in [off_tip(), BoundaryCircle { centre: [0.0, 0.0], radius: 0.3 }] {
        let init = init_disc(sec, &circle, 16, 32).unwrap();
        assert!(init.boundary_defect < 1e-8);
        for (j, n) in init.mesh.boundary_nodes().enumerate() {
            let th = 2.0 * PI * j as f64 / 32.0;
            let xi = c(circle.centre[0], circle.centre[1]) + Complex64::from_polar(circle.radius, th);
            assert!((init.mesh.xi[n] - xi).norm() < 1e-15);
            assert!((init.mesh.eta[n] - sec.invert(xi).unwrap().eta).norm() < 1e-8);
        }
    }
    // Over the centred circle the section is ξ·k(|ξ|²) with k real, so the
    // boundary data is a multiple of e^{iθ} and the disc is holomorphic.
    let centred = init_disc(sec, &BoundaryCircle { centre: [0.0, 0.0], radius: 0.3 }, 16, 32).unwrap();
    assert!(dbar_norm(&centred.mesh) < 1e-12);
}

#[test]
fn degenerate_and_invalid_circles() {
    let sec = paraboloid_section();
    let point = init_disc(sec, &BoundaryCircle { centre: [0.4, 0.1], radius: 0.0 }, 6, 12).unwrap();
    let m = &point.mesh;
    for n in 0..m.len() {
        assert!((m.xi[n] - m.xi[0]).norm() < 1e-14 && (m.eta[n] - m.eta[0]).norm() < 1e-12);
    }
    assert!(dbar_norm(m) < 1e-12);
    // A circle through the tip meets the complex point at θ = π.
    let through = init_disc(sec, &BoundaryCircle { centre: [0.3, 0.0], radius: 0.3 }, 6, 12);
    assert!(matches!(through, Err(topolab::Error::InvalidBoundary(_))), "{through:?}");
    assert!(init_disc(&complex_line(), &off_tip(), 6, 12).is_err());
}

/// Value at the physical node `r = 1/2`, `θ = 0`, which every grid below has.
fn half_radius(mesh: &DiscMesh) -> usize {
    mesh.index(mesh.n_r() / 2, 0)
}

fn doubling_ratio(values: &[Vector4<f64>]) -> f64 {
    (values[0] - values[1]).norm() / (values[1] - values[2]).norm()
}

#[test]
fn harmonic_extension_converges_at_second_order() {
    let sec = paraboloid_section();
    let values: Vec<Vector4<f64>> = [(8, 16), (16, 32), (32, 64)]
        .iter()
        .map(|&(nr, nt)| {
            let m = init_disc(sec, &off_tip(), nr, nt).unwrap().mesh;
            m.chart_point(half_radius(&m))
        })
        .collect();
    let ratio = doubling_ratio(&values);
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

/// A spacelike disc with no holomorphic symmetry.
fn bent(z: Complex64) -> (Complex64, Complex64) {
    let (x, e) = holomorphic(z);
    (x + c(0.03, 0.01) * z.conj() * z.conj(), e + c(0.0, 0.02) * z * z.conj())
}

/// `(∂_z, ∂_z̄)` of each component of `bent`.
fn bent_wirtinger(z: Complex64) -> [(Complex64, Complex64); 2] {
    [(c(RHO, 0.0), 2.0 * c(0.03, 0.01) * z.conj()), (c(0.0, LAMBDA * RHO) + c(0.0, 0.02) * z.conj(), c(0.0, 0.02) * z)]
}

#[test]
fn mean_curvature_vanishes_on_holomorphic_discs() {
    let m = DiscMesh::from_fn(16, 32, 1.0, holomorphic).unwrap();
    for n in 1..m.boundary_nodes().start {
        assert!(mean_curvature_vector(&m, n).unwrap().norm() < 1e-6);
    }
    assert!(mean_curvature_vector(&m, 0).is_err());
    // A constant map has no tangent plane, so H is undefined there.
    let flat = DiscMesh::from_fn(4, 8, 1.0, |_| (c(0.1, 0.0), c(0.0, 0.2))).unwrap();
    assert!(matches!(mean_curvature_vector(&flat, 1), Err(topolab::Error::FlowBreakdown(_))));
}

#[test]
fn mean_curvature_converges_at_second_order() {
    let values: Vec<Vector4<f64>> = [(8, 16), (16, 32), (32, 64)]
        .iter()
        .map(|&(nr, nt)| {
            let m = DiscMesh::from_fn(nr, nt, 1.0, bent).unwrap();
            mean_curvature_vector(&m, half_radius(&m)).unwrap()
        })
        .collect();
    assert!(values[2].norm() > 1e-2);
    let ratio = doubling_ratio(&values);
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

/// Induced area element `√det g` in `(x, y)` of `bent + ε·bump·v`.
fn area_element(z: Complex64, eps: f64, v: (Complex64, Complex64)) -> f64 {
    let (x, e) = bent(z);
    let [(xz, xzb), (ez, ezb)] = bent_wirtinger(z);
    let s = 1.0 - z.norm_sqr();
    let (bump, bz, bzb) = (s * s, -2.0 * s * z.conj(), -2.0 * s * z);
    let p = real4(x + eps * bump * v.0, e + eps * bump * v.1);
    let (fz, fzb) = ((xz + eps * bz * v.0, ez + eps * bz * v.1), (xzb + eps * bzb * v.0, ezb + eps * bzb * v.1));
    let fx = real4(fz.0 + fzb.0, fz.1 + fzb.1);
    let fy = real4(c(0.0, 1.0) * (fz.0 - fzb.0), c(0.0, 1.0) * (fz.1 - fzb.1));
    let g = chart_metric_at(&p);
    let gram = Matrix2::new(fx.dot(&(g * fx)), fx.dot(&(g * fy)), fy.dot(&(g * fx)), fy.dot(&(g * fy)));
    gram.determinant().sqrt()
}

fn area(eps: f64, v: (Complex64, Complex64)) -> f64 {
    let (x, w) = gauss_legendre(40);
    let nt = 128;
    let mut total = 0.0;
    for (xa, wa) in x.iter().zip(&w) {
        let r = 0.5 * (xa + 1.0);
        for j in 0..nt {
            let z = Complex64::from_polar(r, 2.0 * PI * j as f64 / nt as f64);
            total += 0.5 * wa * r * (2.0 * PI / nt as f64) * area_element(z, eps, v);
        }
    }
    total
}

#[test]
fn mean_curvature_is_the_area_gradient() {
    // First variation of area: dA/dε = −∫ G(H, V) dA for V vanishing on ∂D.
    let v = (c(0.3, 0.1), c(-0.2, 0.4));
    let h = 1e-5;
    let lhs = (area(h, v) - area(-h, v)) / (2.0 * h);
    let m = DiscMesh::from_fn(64, 128, 1.0, bent).unwrap();
    let mut rhs = 0.0;
    for n in 1..m.boundary_nodes().start {
        let z = m.position(n);
        let s = 1.0 - z.norm_sqr();
        let vn = real4(s * s * v.0, s * s * v.1);
        let hn = mean_curvature_vector(&m, n).unwrap();
        let g = chart_metric_at(&m.chart_point(n));
        rhs -= hn.dot(&(g * vn)) * area_element(z, 0.0, v) * m.weight(n);
    }
    assert!(lhs.abs() > 1e-3);
    assert!((lhs - rhs).abs() < 5e-3 * lhs.abs(), "{lhs} vs {rhs}");
}

fn descent_opts() -> FlowOptions {
    FlowOptions { max_steps: 5000, ..Default::default() }
}

#[test]
fn descent_reduces_the_residual_on_the_paraboloid() {
    let sec = paraboloid_section();
    let init = init_disc(sec, &off_tip(), 32, 64).unwrap();
    let start = FlowState::new(init.mesh);
    assert!(start.dbar_norm > 1e-2);
    let opts = FlowOptions { target: 0.1 * start.dbar_norm, ..descent_opts() };
    let run = run_flow(start, sec, &opts).unwrap();
    assert_eq!(run.status, FlowStatus::ReachedTarget);
    let tr = &run.trajectory;
    assert!(tr.len() <= 5001);
    assert!(tr.last().unwrap().dbar_norm <= 0.1 * tr[0].dbar_norm);
    for w in tr.windows(2) {
        assert!(w[1].dbar_norm <= w[0].dbar_norm + 1e-10);
        assert!(w[1].max_boundary_defect < 1e-8);
        assert_eq!(w[1].step, w[0].step + 1);
        assert!(w[1].time > w[0].time);
    }
}

#[test]
fn descent_is_stable_under_refinement() {
    let sec = paraboloid_section();
    let finals: Vec<f64> = [(16, 32), (32, 64)]
        .iter()
        .map(|&(nr, nt)| {
            let init = init_disc(sec, &off_tip(), nr, nt).unwrap();
            let run = run_flow(FlowState::new(init.mesh), sec, &FlowOptions { max_steps: 200, ..descent_opts() }).unwrap();
            run.state.dbar_norm
        })
        .collect();
    assert!(finals[1] <= 1.1 * finals[0], "{finals:?}");
}

#[test]
fn harmonic_paraboloid_discs_are_not_spacelike() {
    // The harmonic discs over the paraboloid section are nowhere near
    // spacelike, so the neutral flow must stop at once and say why.
    let sec = paraboloid_section();
    let init = init_disc(sec, &off_tip(), 32, 64).unwrap();
    assert!(!init.all_spacelike());
    let opts = FlowOptions { scheme: FlowScheme::NeutralMcf, dt: 1e-5, max_steps: 100, ..Default::default() };
    let run = run_flow(FlowState::new(init.mesh), sec, &opts).unwrap();
    assert!(run.broke_down());
    assert_eq!(run.trajectory.len(), 1);
    let FlowStatus::Breakdown(reason) = &run.status else { unreachable!() };
    assert!(reason.contains("spacelike"), "{reason}");
}

#[test]
fn neutral_flow_restores_a_bent_holomorphic_disc() {
    // A bump along the G-normal direction (1, −iλ) of the complex line.
    let bumped = |z: Complex64| {
        let (x, e) = holomorphic(z);
        let b = 0.02 * (1.0 - z.norm_sqr());
        (x + b, e - c(0.0, LAMBDA) * b)
    };
    let mesh = DiscMesh::from_fn(8, 16, 1.0, bumped).unwrap();
    let start = FlowState::new(mesh);
    assert!(start.spacelike_ok);
    let opts = FlowOptions { scheme: FlowScheme::NeutralMcf, dt: 1e-4, max_steps: 3000, ..Default::default() };
    let run = run_flow(start, &complex_line(), &opts).unwrap();
    assert!(!run.broke_down(), "{:?}", run.status);
    let tr = &run.trajectory;
    assert!(tr.last().unwrap().dbar_norm <= 0.5 * tr[0].dbar_norm);
    assert!(tr.iter().all(|r| r.spacelike_ok && r.max_boundary_defect < 1e-8));
}

#[test]
fn holomorphic_discs_are_stationary() {
    let line = FlowState::new(DiscMesh::from_fn(16, 32, 1.0, holomorphic).unwrap());
    let sec = paraboloid_section();
    let centred = FlowState::new(init_disc(sec, &BoundaryCircle { centre: [0.0, 0.0], radius: 0.3 }, 16, 32).unwrap().mesh);
    let cases: [(&FlowState, &dyn BoundarySection, FlowScheme, f64); 3] = [
        (&line, &complex_line(), FlowScheme::NeutralMcf, 1e-4),
        (&line, &complex_line(), FlowScheme::DbarDescent, 1.0),
        (&centred, sec, FlowScheme::DbarDescent, 1.0),
    ];
    for (state, section, scheme, dt) in cases {
        let opts = FlowOptions { scheme, dt, max_steps: 20, ..Default::default() };
        let run = run_flow(state.clone(), section, &opts).unwrap();
        assert_eq!(run.status, FlowStatus::MaxSteps);
        assert!(run.trajectory.iter().all(|r| r.displacement < 1e-8), "{scheme:?}");
    }
}

#[test]
fn zero_step_leaves_the_state_alone() {
    let sec = paraboloid_section();
    let start = FlowState::new(init_disc(sec, &off_tip(), 8, 16).unwrap().mesh);
    let descent = run_flow(start.clone(), sec, &FlowOptions { dt: 0.0, max_steps: 25, ..descent_opts() }).unwrap();
    assert_eq!(descent.state.mesh, start.mesh);
    assert_eq!(descent.trajectory.len(), 26);
    assert!(descent.trajectory.iter().all(|r| r.dbar_norm == start.dbar_norm && r.time == 0.0));
    let line = FlowState::new(DiscMesh::from_fn(8, 16, 1.0, bent).unwrap());
    let opts = FlowOptions { scheme: FlowScheme::NeutralMcf, dt: 0.0, max_steps: 25, ..Default::default() };
    let mcf = run_flow(line.clone(), &complex_line(), &opts).unwrap();
    assert_eq!(mcf.state.mesh, line.mesh);
}

#[test]
fn index_bookkeeping() {
    assert_eq!(expected_dimension(0), (2, -1));
    assert_eq!(expected_dimension(1), (3, 0));
    assert_eq!(expected_dimension(-2), (0, -3));
    assert_eq!(expected_dimension(4), (6, 3));
}

