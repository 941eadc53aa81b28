//! Discrete discs in the line space with boundary on a Lagrangian section.
//!
//! A disc is sampled on a polar grid over the unit disc: a centre node and
//! `n_r` rings of `n_theta` spokes, ring radii `k / n_r`. The outermost ring
//! is the boundary. Node `0` is the centre and ring `k`, spoke `j` is node
//! `1 + (k − 1)·n_theta + j`. Values are chart coordinates `(ξ, η)`, where
//! the complex structure acts as multiplication by `i`, so holomorphic discs
//! are exactly the solutions of `∂f/∂z̄ = 0`.
//!
//! Angular stencils use `2 sin Δθ` and `2 − 2 cos Δθ` in place of `2Δθ`
//! and `Δθ²`. Both are exact on `e^{±iθ}`, which makes every stencil exact
//! on maps affine in `z` and `z̄`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2, Vector4};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{diagnose, LagrangianSection, SectionValue, DEFECT_THRESHOLD, SIGNATURE_TOL};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Accepted descent steps between rebuilds of the Sobolev metric.
const METRIC_REFRESH: usize = 10;

/// Step of the central differences used for the Christoffel symbols.
pub const CHRISTOFFEL_STEP: f64 = 1e-4;

/// Index of the linearised problem for boundary Maslov index `mu`, and the
/// dimension after quotienting by the Möbius group: `(mu + 2, mu − 1)`.
pub fn expected_dimension(mu: i64) -> (i64, i64) {
    let i = mu + 2;
    (i, i - 3)
}

/// A disc sampled on the polar grid, with chart values per node.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscMesh {
    n_r: usize,
    n_theta: usize,
    pub xi: Vec<Complex64>,
    pub eta: Vec<Complex64>,
    /// Fiber scale `L` of the auxiliary chart metric.
    pub length_scale: f64,
    /// Warm starts for the boundary section solve, one per spoke.
    pub boundary_hints: Option<Vec<(f64, f64)>>,
}

impl DiscMesh {
    /// Samples `f(z) = (ξ, η)` at every node.
    pub fn from_fn(
        n_r: usize,
        n_theta: usize,
        length_scale: f64,
        f: impl Fn(Complex64) -> (Complex64, Complex64),
    ) -> Result<Self> {
        check_shape(n_r, n_theta)?;
        let mut mesh = Self {
            n_r,
            n_theta,
            xi: vec![Complex64::default(); 1 + n_r * n_theta],
            eta: vec![Complex64::default(); 1 + n_r * n_theta],
            length_scale,
            boundary_hints: None,
        };
        for n in 0..mesh.len() {
            let (x, e) = f(mesh.position(n));
            mesh.xi[n] = x;
            mesh.eta[n] = e;
        }
        Ok(mesh)
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn len(&self) -> usize {
        1 + self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dr(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Node of ring `k`, spoke `j`; ring 0 is the centre, spokes wrap.
    pub fn index(&self, k: usize, j: isize) -> usize {
        if k == 0 {
            return 0;
        }
        let j = j.rem_euclid(self.n_theta as isize) as usize;
        1 + (k - 1) * self.n_theta + j
    }

    pub fn ring_spoke(&self, node: usize) -> (usize, usize) {
        if node == 0 {
            (0, 0)
        } else {
            (1 + (node - 1) / self.n_theta, (node - 1) % self.n_theta)
        }
    }

    pub fn polar(&self, node: usize) -> (f64, f64) {
        let (k, j) = self.ring_spoke(node);
        (k as f64 * self.dr(), j as f64 * self.dtheta())
    }

    /// Disc coordinate `z` of a node.
    pub fn position(&self, node: usize) -> Complex64 {
        let (r, th) = self.polar(node);
        Complex64::from_polar(r, th)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.ring_spoke(node).0 == self.n_r
    }

    pub fn boundary_nodes(&self) -> std::ops::Range<usize> {
        self.index(self.n_r, 0)..self.len()
    }

    /// Area of the node's control cell.
    pub fn weight(&self, node: usize) -> f64 {
        let (k, _) = self.ring_spoke(node);
        let (dr, dth) = (self.dr(), self.dtheta());
        if k == 0 {
            PI * 0.25 * dr * dr
        } else if k == self.n_r {
            (k as f64 - 0.25) * dr * 0.5 * dr * dth
        } else {
            k as f64 * dr * dr * dth
        }
    }

    /// Real chart coordinates `(Re ξ, Im ξ, Re η, Im η)` of a node.
    pub fn chart_point(&self, node: usize) -> Vector4<f64> {
        Vector4::new(self.xi[node].re, self.xi[node].im, self.eta[node].re, self.eta[node].im)
    }

    fn set_chart_point(&mut self, node: usize, x: &Vector4<f64>) {
        self.xi[node] = Complex64::new(x[0], x[1]);
        self.eta[node] = Complex64::new(x[2], x[3]);
    }

    /// Complex stencil of `(∂_x + i∂_y)` at a node, as `(node, coefficient)`.
    fn dbar_stencil(&self, node: usize) -> Vec<(usize, Complex64)> {
        let (k, j) = self.ring_spoke(node);
        let (dr, dth, nt) = (self.dr(), self.dtheta(), self.n_theta);
        if k == 0 {
            let c = 2.0 / (nt as f64 * dr);
            return (0..nt).map(|j| (self.index(1, j as isize), Complex64::from_polar(c, j as f64 * dth))).collect();
        }
        let e = Complex64::from_polar(1.0, j as f64 * dth);
        let r = k as f64 * dr;
        let j = j as isize;
        let mut st = Vec::with_capacity(5);
        if k < self.n_r {
            st.push((self.index(k + 1, j), e / (2.0 * dr)));
            st.push((self.index(k - 1, j), -e / (2.0 * dr)));
        } else {
            st.push((self.index(k, j), 3.0 * e / (2.0 * dr)));
            st.push((self.index(k - 1, j), -4.0 * e / (2.0 * dr)));
            st.push((self.index(k - 2, j), e / (2.0 * dr)));
        }
        let a = e * I / (r * 2.0 * dth.sin());
        st.push((self.index(k, j + 1), a));
        st.push((self.index(k, j - 1), -a));
        st
    }
}

fn check_shape(n_r: usize, n_theta: usize) -> Result<()> {
    if n_r < 2 || n_theta < 5 {
        return Err(Error::InvalidInput(format!("polar grid needs n_r ≥ 2 and n_theta ≥ 5, got {n_r} × {n_theta}")));
    }
    Ok(())
}

/// Cauchy-Riemann defect `2 ∂f/∂z̄` at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeResidual {
    pub xi: Complex64,
    pub eta: Complex64,
    /// Set on the boundary ring, where the radial stencil is one-sided.
    pub one_sided: bool,
}

pub fn dbar_residual(mesh: &DiscMesh, node: usize) -> NodeResidual {
    let mut r = NodeResidual { xi: Complex64::default(), eta: Complex64::default(), one_sided: mesh.is_boundary(node) };
    for (m, c) in mesh.dbar_stencil(node) {
        r.xi += c * mesh.xi[m];
        r.eta += c * mesh.eta[m];
    }
    r
}

/// Area-weighted RMS of the residual field in the auxiliary chart metric.
pub fn dbar_norm(mesh: &DiscMesh) -> f64 {
    let l2 = mesh.length_scale * mesh.length_scale;
    let terms: Vec<(f64, f64)> = (0..mesh.len())
        .into_par_iter()
        .map(|n| {
            let r = dbar_residual(mesh, n);
            let w = mesh.weight(n);
            (w * (r.xi.norm_sqr() + r.eta.norm_sqr() / l2), w)
        })
        .collect();
    // Summed in node order so the value does not depend on the thread count.
    let (num, den) = terms.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (num / den).sqrt()
}

/// A surface `η = η_sec(ξ)` on which disc boundaries live.
pub trait BoundarySection: Sync {
    /// Section value over `xi`, optionally warm-started from parameters `hint`.
    fn value(&self, xi: Complex64, hint: Option<(f64, f64)>) -> Result<SectionValue>;

    fn length_scale(&self) -> f64 {
        1.0
    }

    /// Whether the section is totally real at a point it returned.
    fn totally_real(&self, at: &SectionValue) -> Result<bool>;
}

impl BoundarySection for LagrangianSection {
    fn value(&self, xi: Complex64, hint: Option<(f64, f64)>) -> Result<SectionValue> {
        match hint {
            Some(h) => self.invert_from(xi, h).or_else(|_| self.invert(xi)),
            None => self.invert(xi),
        }
    }

    fn length_scale(&self) -> f64 {
        self.aux().length_scale
    }

    fn totally_real(&self, at: &SectionValue) -> Result<bool> {
        let surface = self.source().ok_or_else(|| Error::InvalidInput("total reality needs the source surface".into()))?;
        Ok(diagnose(surface, at.s, at.t, &self.aux())?.class.defect >= DEFECT_THRESHOLD)
    }
}

/// The complex line `η = slope·ξ + offset`. It is never totally real.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSection {
    pub slope: Complex64,
    pub offset: Complex64,
}

impl BoundarySection for LinearSection {
    fn value(&self, xi: Complex64, _hint: Option<(f64, f64)>) -> Result<SectionValue> {
        let a = self.slope;
        Ok(SectionValue {
            s: xi.re,
            t: xi.im,
            eta: a * xi + self.offset,
            d_eta_d_xi: Matrix2::new(a.re, -a.im, a.im, a.re),
        })
    }

    fn totally_real(&self, _at: &SectionValue) -> Result<bool> {
        Ok(false)
    }
}

/// Largest `|η − η_sec(ξ)|` over the boundary ring.
pub fn max_boundary_defect(mesh: &DiscMesh, section: &dyn BoundarySection) -> Result<f64> {
    boundary_values(mesh, section).map(|v| {
        mesh.boundary_nodes().zip(&v).map(|(n, s)| (mesh.eta[n] - s.eta).norm()).fold(0.0, f64::max)
    })
}

fn boundary_values(mesh: &DiscMesh, section: &dyn BoundarySection) -> Result<Vec<SectionValue>> {
    let nodes: Vec<usize> = mesh.boundary_nodes().collect();
    nodes
        .par_iter()
        .enumerate()
        .map(|(j, &n)| section.value(mesh.xi[n], mesh.boundary_hints.as_ref().map(|h| h[j])))
        .collect()
}

/// Circle `|ξ − centre| = radius` in the chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCircle {
    pub centre: [f64; 2],
    pub radius: f64,
}

/// An initial disc and its per-node spacelike pattern.
#[derive(Clone, Debug)]
pub struct InitialDisc {
    pub mesh: DiscMesh,
    pub spacelike: Vec<bool>,
    pub boundary_defect: f64,
}

impl InitialDisc {
    pub fn all_spacelike(&self) -> bool {
        self.spacelike.iter().all(|&s| s)
    }
}

/// Harmonic disc spanning a circle on the section.
pub fn init_disc(
    section: &dyn BoundarySection,
    circle: &BoundaryCircle,
    n_r: usize,
    n_theta: usize,
) -> Result<InitialDisc> {
    check_shape(n_r, n_theta)?;
    if !(circle.radius >= 0.0 && circle.radius.is_finite()) {
        return Err(Error::InvalidBoundary(format!("circle radius {} must be finite and ≥ 0", circle.radius)));
    }
    let centre = Complex64::new(circle.centre[0], circle.centre[1]);
    let mut mesh = DiscMesh::from_fn(n_r, n_theta, section.length_scale(), |_| (centre, Complex64::default()))?;
    // Boundary values, each Newton solve warm-started from its neighbour.
    let mut values: Vec<SectionValue> = Vec::with_capacity(n_theta);
    for (j, n) in mesh.boundary_nodes().enumerate() {
        let xi = centre + Complex64::from_polar(circle.radius, j as f64 * mesh.dtheta());
        let hint = values.last().map(|v| (v.s, v.t));
        let v = section.value(xi, hint)?;
        if !section.totally_real(&v)? {
            return Err(Error::InvalidBoundary(format!("section is not totally real over ξ = {xi} (spoke {j})")));
        }
        mesh.xi[n] = xi;
        mesh.eta[n] = v.eta;
        values.push(v);
    }
    mesh.boundary_hints = Some(values.iter().map(|v| (v.s, v.t)).collect());
    harmonic_fill(&mut mesh)?;
    let boundary_defect = max_boundary_defect(&mesh, section)?;
    let spacelike = (0..mesh.len()).into_par_iter().map(|n| node_gram(&mesh, n).is_some_and(is_spacelike)).collect();
    Ok(InitialDisc { mesh, spacelike, boundary_defect })
}

/// Replaces the non-boundary values by the discrete harmonic extension of
/// the boundary ring. The five-point polar Laplacian, weighted by `r`, is
/// symmetric, so a sparse Cholesky factorisation solves it directly.
pub fn harmonic_fill(mesh: &mut DiscMesh) -> Result<()> {
    let (n_r, nt) = (mesh.n_r, mesh.n_theta);
    let (dr, dth) = (mesh.dr(), mesh.dtheta());
    let unknowns = 1 + (n_r - 1) * nt;
    let mut coo = CooMatrix::new(unknowns, unknowns);
    let mut rhs = DMatrix::<f64>::zeros(unknowns, 4);
    let radial = |k_half: f64| k_half * dr / (dr * dr);
    // Centre row: Σ_j r_{1/2}/Δr² (f_c − f_{1j}) = 0.
    let c0 = radial(0.5);
    coo.push(0, 0, nt as f64 * c0);
    for j in 0..nt {
        coo.push(0, mesh.index(1, j as isize), -c0);
    }
    let ang = 2.0 - 2.0 * dth.cos();
    for k in 1..n_r {
        let r = k as f64 * dr;
        let (up, down, side) = (radial(k as f64 + 0.5), radial(k as f64 - 0.5), 1.0 / (r * ang));
        for j in 0..nt as isize {
            let row = mesh.index(k, j);
            coo.push(row, row, up + down + 2.0 * side);
            for (col, c) in
                [(mesh.index(k + 1, j), up), (mesh.index(k - 1, j), down), (mesh.index(k, j + 1), side), (mesh.index(k, j - 1), side)]
            {
                if col < unknowns {
                    coo.push(row, col, -c);
                } else {
                    let b = mesh.chart_point(col) * c;
                    for q in 0..4 {
                        rhs[(row, q)] += b[q];
                    }
                }
            }
        }
    }
    let chol = CscCholesky::factor(&CscMatrix::from(&coo))
        .map_err(|e| Error::Solver(format!("harmonic extension: {e:?}")))?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver("harmonic extension produced non-finite values".into()));
    }
    for n in 0..unknowns {
        mesh.set_chart_point(n, &Vector4::new(sol[(n, 0)], sol[(n, 1)], sol[(n, 2)], sol[(n, 3)]));
    }
    Ok(())
}

/// `G` in real chart coordinates, in closed form:
/// `G(X, Y) = 4/(1+|ξ|²)² · [Im(c_Y conj dξ_X) + Im(c_X conj dξ_Y)]` with
/// `c = dη − 2 conj(ξ) η dξ / (1+|ξ|²)`.
pub fn chart_metric_at(x: &Vector4<f64>) -> Matrix4<f64> {
    let (xi, eta) = (Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]));
    let d = 1.0 + xi.norm_sqr();
    let basis = [
        (Complex64::new(1.0, 0.0), Complex64::default()),
        (I, Complex64::default()),
        (Complex64::default(), Complex64::new(1.0, 0.0)),
        (Complex64::default(), I),
    ];
    let k = 2.0 * xi.conj() * eta / d;
    let c: [Complex64; 4] = basis.map(|(dx, de)| de - k * dx);
    let f = 4.0 / (d * d);
    Matrix4::from_fn(|i, j| f * ((c[j] * basis[i].0.conj()).im + (c[i] * basis[j].0.conj()).im))
}

/// Christoffel symbols `Γ^k_{mn}` of `G`, indexed `[k][m][n]`, from central
/// differences of the metric components.
pub fn christoffel(x: &Vector4<f64>) -> Result<[Matrix4<f64>; 4]> {
    let g_inv = chart_metric_at(x)
        .try_inverse()
        .ok_or_else(|| Error::FlowBreakdown("chart metric is singular".into()))?;
    let h = CHRISTOFFEL_STEP;
    let dg: [Matrix4<f64>; 4] = std::array::from_fn(|l| {
        let mut e = Vector4::zeros();
        e[l] = h;
        (chart_metric_at(&(x + e)) - chart_metric_at(&(x - e))) / (2.0 * h)
    });
    // Lowered symbols Γ_{l m n} = ½(∂_m G_ln + ∂_n G_lm − ∂_l G_mn).
    let low: [Matrix4<f64>; 4] =
        std::array::from_fn(|l| Matrix4::from_fn(|m, n| 0.5 * (dg[m][(l, n)] + dg[n][(l, m)] - dg[l][(m, n)])));
    Ok(std::array::from_fn(|k| {
        let mut out = Matrix4::zeros();
        for (l, gl) in low.iter().enumerate() {
            out += gl * g_inv[(k, l)];
        }
        out
    }))
}

type PolarJet = ([Vector4<f64>; 2], [Vector4<f64>; 3]);

/// First and second polar derivatives at an interior ring node:
/// `[F_r, F_θ]` and `[F_rr, F_rθ, F_θθ]`.
fn polar_jet(mesh: &DiscMesh, node: usize) -> Option<PolarJet> {
    let (k, j) = mesh.ring_spoke(node);
    if k == 0 || k >= mesh.n_r {
        return None;
    }
    let (dr, dth) = (mesh.dr(), mesh.dtheta());
    let j = j as isize;
    let f = |k: usize, j: isize| mesh.chart_point(mesh.index(k, j));
    let c = f(k, j);
    let (rp, rm, tp, tm) = (f(k + 1, j), f(k - 1, j), f(k, j + 1), f(k, j - 1));
    let s = dth.sin();
    let fr = (rp - rm) / (2.0 * dr);
    let ft = (tp - tm) / (2.0 * s);
    let frr = (rp - c * 2.0 + rm) / (dr * dr);
    let ftt = (tp - c * 2.0 + tm) / (2.0 - 2.0 * dth.cos());
    let frt = (f(k + 1, j + 1) - f(k + 1, j - 1) - f(k - 1, j + 1) + f(k - 1, j - 1)) / (4.0 * dr * s);
    Some(([fr, ft], [frr, frt, ftt]))
}

/// Tangents of the disc at any node. The centre uses Cartesian derivatives
/// from the innermost ring and the boundary a one-sided radial stencil.
fn node_tangents(mesh: &DiscMesh, node: usize) -> [Vector4<f64>; 2] {
    let (k, j) = mesh.ring_spoke(node);
    let (dr, dth, nt) = (mesh.dr(), mesh.dtheta(), mesh.n_theta);
    let f = |k: usize, j: isize| mesh.chart_point(mesh.index(k, j));
    if k == 0 {
        let (mut fx, mut fy) = (Vector4::zeros(), Vector4::zeros());
        for j in 0..nt {
            let th = j as f64 * dth;
            let v = f(1, j as isize);
            fx += v * th.cos();
            fy += v * th.sin();
        }
        let c = 2.0 / (nt as f64 * dr);
        return [fx * c, fy * c];
    }
    if let Some((d, _)) = polar_jet(mesh, node) {
        return d;
    }
    let j = j as isize;
    let fr = (f(k, j) * 3.0 - f(k - 1, j) * 4.0 + f(k - 2, j)) / (2.0 * dr);
    [fr, (f(k, j + 1) - f(k, j - 1)) / (2.0 * dth.sin())]
}

/// Induced Gram matrix of `G` on the disc's tangent plane at a node.
pub fn node_gram(mesh: &DiscMesh, node: usize) -> Option<Matrix2<f64>> {
    let [a, b] = node_tangents(mesh, node);
    let g = chart_metric_at(&mesh.chart_point(node));
    let gram = Matrix2::new(a.dot(&(g * a)), a.dot(&(g * b)), b.dot(&(g * a)), b.dot(&(g * b)));
    gram.iter().all(|x| x.is_finite()).then_some(gram)
}

/// Positive definite, with the determinant normalised by the diagonal.
pub fn is_spacelike(gram: Matrix2<f64>) -> bool {
    gram[(0, 0)] > 0.0 && gram[(1, 1)] > 0.0 && gram.determinant() > SIGNATURE_TOL * gram[(0, 0)] * gram[(1, 1)]
}

/// Mean curvature vector in real chart coordinates at an interior ring node.
pub fn mean_curvature_vector(mesh: &DiscMesh, node: usize) -> Result<Vector4<f64>> {
    let (fd, fdd) = polar_jet(mesh, node)
        .ok_or_else(|| Error::InvalidInput(format!("node {node} is not on an interior ring")))?;
    let x = mesh.chart_point(node);
    let g = chart_metric_at(&x);
    let gram = Matrix2::from_fn(|a, b| fd[a].dot(&(g * fd[b])));
    if !is_spacelike(gram) {
        return Err(Error::FlowBreakdown(format!(
            "disc is not spacelike at node {node} (induced Gram determinant {:.3e})",
            gram.determinant()
        )));
    }
    let gi = gram.try_inverse().ok_or_else(|| Error::FlowBreakdown(format!("singular induced metric at node {node}")))?;
    let gamma = christoffel(&x)?;
    let second = |a: usize, b: usize| {
        let raw = fdd[a + b];
        Vector4::from_fn(|k, _| raw[k] + fd[a].dot(&(gamma[k] * fd[b])))
    };
    let mut v = Vector4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            v += second(a, b) * gi[(a, b)];
        }
    }
    // G-orthogonal projection onto the normal plane.
    let gv = Vector2::new(fd[0].dot(&(g * v)), fd[1].dot(&(g * v)));
    let coef = gi * gv;
    Ok(v - fd[0] * coef[0] - fd[1] * coef[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowScheme {
    NeutralMcf,
    DbarDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOptions {
    pub scheme: FlowScheme,
    pub dt: f64,
    pub max_steps: usize,
    /// Stop once `dbar_norm` falls to this value.
    pub target: f64,
    /// Allowed increase of `dbar_norm` per accepted step.
    pub slack: f64,
    pub max_halvings: u32,
    /// Inner product on node fields that turns the descent differential
    /// into a velocity.
    pub gradient: GradientMetric,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            scheme: FlowScheme::DbarDescent,
            dt: 1.0,
            max_steps: 5000,
            target: 0.0,
            slack: 1e-10,
            max_halvings: 20,
            gradient: GradientMetric::Sobolev,
        }
    }
}

/// `Euclidean` treats every node value as an independent coordinate. Its
/// smooth modes relax at a rate proportional to the cell area, so the step
/// count grows with the node count. `Sobolev` uses `Σ w|u|²` plus the
/// discrete Dirichlet energy, which keeps the rate mesh independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMetric {
    Euclidean,
    Sobolev,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub mesh: DiscMesh,
    pub time: f64,
    pub dbar_norm: f64,
    pub spacelike_ok: bool,
    pub step_count: usize,
}

impl FlowState {
    pub fn new(mesh: DiscMesh) -> Self {
        let spacelike_ok = spacelike_everywhere(&mesh);
        Self { dbar_norm: dbar_norm(&mesh), mesh, time: 0.0, spacelike_ok, step_count: 0 }
    }
}

fn spacelike_everywhere(mesh: &DiscMesh) -> bool {
    (0..mesh.len()).into_par_iter().all(|n| node_gram(mesh, n).is_some_and(is_spacelike))
}

/// One row of the trajectory log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub dbar_norm: f64,
    pub max_boundary_defect: f64,
    pub spacelike_ok: bool,
    /// Largest chart displacement of any node in this step.
    pub displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum FlowStatus {
    ReachedTarget,
    MaxSteps,
    Breakdown(String),
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub trajectory: Vec<TrajectoryRow>,
    pub state: FlowState,
    pub status: FlowStatus,
    /// Step size in force at the end, after any halving.
    pub final_dt: f64,
}

impl FlowRun {
    pub fn broke_down(&self) -> bool {
        matches!(self.status, FlowStatus::Breakdown(_))
    }
}

/// Evolves the disc, keeping its boundary on `section`. The returned run
/// holds the trajectory up to the stop, or up to a breakdown.
pub fn run_flow(initial: FlowState, section: &dyn BoundarySection, opts: &FlowOptions) -> Result<FlowRun> {
    if !(opts.dt >= 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt = {} must be finite and ≥ 0", opts.dt)));
    }
    let mut state = initial;
    let mut dt = opts.dt;
    let defect = max_boundary_defect(&state.mesh, section)?;
    let mut trajectory = vec![TrajectoryRow {
        step: state.step_count,
        time: state.time,
        dbar_norm: state.dbar_norm,
        max_boundary_defect: defect,
        spacelike_ok: state.spacelike_ok,
        displacement: 0.0,
    }];
    let finish = |trajectory, state, status, dt| Ok(FlowRun { trajectory, state, status, final_dt: dt });
    // The Sobolev metric depends on the boundary Jacobians only, so it is
    // refactorised every few steps and after any rejection. Any positive
    // definite metric gives a descent direction.
    let mut metric = None;
    for _ in 0..opts.max_steps {
        if state.dbar_norm <= opts.target {
            return finish(trajectory, state, FlowStatus::ReachedTarget, dt);
        }
        let direction = match opts.scheme {
            FlowScheme::DbarDescent => descent_direction(&state.mesh, section, opts.gradient, &mut metric),
            FlowScheme::NeutralMcf => mcf_direction(&state.mesh),
        };
        let direction = match direction {
            Ok(d) => d,
            Err(e) => return finish(trajectory, state, FlowStatus::Breakdown(e.to_string()), dt),
        };
        let mut halvings = 0;
        let accepted = loop {
            match trial_step(&state.mesh, &direction, dt, section) {
                Ok((mesh, norm, moved)) if norm <= state.dbar_norm + opts.slack => break Some((mesh, norm, moved)),
                _ if halvings < opts.max_halvings => {
                    metric = None;
                    dt *= 0.5;
                    halvings += 1;
                }
                _ => break None,
            }
        };
        let Some((mesh, norm, moved)) = accepted else {
            let reason = format!("step size underflow after {halvings} halvings (dt = {dt:.3e})");
            return finish(trajectory, state, FlowStatus::Breakdown(reason), dt);
        };
        state.mesh = mesh;
        state.dbar_norm = norm;
        if (state.step_count + 1).is_multiple_of(METRIC_REFRESH) {
            metric = None;
        }
        state.time += dt;
        state.step_count += 1;
        state.spacelike_ok = spacelike_everywhere(&state.mesh);
        let defect = max_boundary_defect(&state.mesh, section)?;
        trajectory.push(TrajectoryRow {
            step: state.step_count,
            time: state.time,
            dbar_norm: norm,
            max_boundary_defect: defect,
            spacelike_ok: state.spacelike_ok,
            displacement: moved,
        });
        if opts.scheme == FlowScheme::NeutralMcf && !state.spacelike_ok {
            return finish(trajectory, state, FlowStatus::Breakdown("disc left the spacelike region".into()), dt);
        }
    }
    let status = if state.dbar_norm <= opts.target { FlowStatus::ReachedTarget } else { FlowStatus::MaxSteps };
    finish(trajectory, state, status, dt)
}

/// Per-node velocity in real chart coordinates. Boundary entries carry only
/// a `ξ` velocity; their `η` follows from the section.
type Direction = Vec<Vector4<f64>>;

fn descent_direction(
    mesh: &DiscMesh,
    section: &dyn BoundarySection,
    metric: GradientMetric,
    cache: &mut Option<Sobolev>,
) -> Result<Direction> {
    let n = mesh.len();
    let total: f64 = (0..n).map(|m| mesh.weight(m)).sum();
    // Differential of ½·dbar_norm² with respect to each node value, packed
    // as complex numbers: g_m = Σ_n w_n conj(a_nm) R_n / W.
    let partial: Vec<Vec<(usize, Complex64, Complex64)>> = (0..n)
        .into_par_iter()
        .map(|node| {
            let r = dbar_residual(mesh, node);
            let w = mesh.weight(node) / total;
            mesh.dbar_stencil(node).into_iter().map(|(m, a)| (m, w * a.conj() * r.xi, w * a.conj() * r.eta)).collect()
        })
        .collect();
    let mut gx = vec![Complex64::default(); n];
    let mut ge = vec![Complex64::default(); n];
    for (m, x, e) in partial.into_iter().flatten() {
        gx[m] += x;
        ge[m] += e;
    }
    let nt = mesh.n_theta;
    // The centre is the mean of the innermost ring.
    let (cx, ce) = (gx[0] / nt as f64, ge[0] / nt as f64);
    for j in 0..nt {
        let m = mesh.index(1, j as isize);
        gx[m] += cx;
        ge[m] += ce;
    }
    // Boundary η follows ξ through the section.
    let l2 = mesh.length_scale * mesh.length_scale;
    let values = boundary_values(mesh, section)?;
    let jacobians: Vec<Matrix2<f64>> = values.iter().map(|v| v.d_eta_d_xi).collect();
    for (m, j) in mesh.boundary_nodes().zip(&jacobians) {
        let g = Vector2::new(gx[m].re, gx[m].im) + j.transpose() * Vector2::new(ge[m].re, ge[m].im) / l2;
        gx[m] = Complex64::new(g.x, g.y);
        ge[m] = Complex64::default();
    }
    if metric == GradientMetric::Sobolev {
        // In the scaled fiber coordinate η/L the differential is L·∂E/∂η and
        // a velocity u maps back to L·u, so η picks up a factor L².
        if cache.is_none() {
            *cache = Some(Sobolev::new(mesh, &jacobians)?);
        }
        let p = cache.as_ref().expect("metric was just built");
        let interior = mesh.index(mesh.n_r, 0);
        let mut rhs = DMatrix::zeros(p.offsets[n], 1);
        for m in 1..n {
            let o = p.offsets[m];
            rhs[o] = gx[m].re;
            rhs[o + 1] = gx[m].im;
            if m < interior {
                rhs[o + 2] = ge[m].re / mesh.length_scale;
                rhs[o + 3] = ge[m].im / mesh.length_scale;
            }
        }
        let sol = p.chol.solve(&rhs);
        for m in 1..n {
            let o = p.offsets[m];
            gx[m] = Complex64::new(sol[o], sol[o + 1]);
            if m < interior {
                ge[m] = Complex64::new(sol[o + 2], sol[o + 3]) * mesh.length_scale;
            }
        }
    }
    let mut dir: Direction = (0..n).map(|m| -Vector4::new(gx[m].re, gx[m].im, ge[m].re, ge[m].im)).collect();
    dir[0] = Vector4::zeros();
    Ok(dir)
}

/// Sobolev inner product on the descent unknowns: interior `(ξ, η/L)`
/// and boundary `ξ`, with boundary `η/L` following `ξ` through the section
/// Jacobian. Each field carries `Σ w|u|²` plus the discrete Dirichlet
/// energy, with the centre held at the mean of the innermost ring.
struct Sobolev {
    chol: CscCholesky<f64>,
    offsets: Vec<usize>,
}

impl Sobolev {
    fn new(mesh: &DiscMesh, jacobians: &[Matrix2<f64>]) -> Result<Self> {
        let n = mesh.len();
        let interior = mesh.index(mesh.n_r, 0);
        // Four unknowns per interior node, two per boundary node, none at the centre.
        let mut offsets = vec![0; n + 1];
        for m in 1..n {
            offsets[m + 1] = offsets[m] + if m < interior { 4 } else { 2 };
        }
        let size = offsets[n];
        let b = |m: usize| jacobians[m - interior] / mesh.length_scale;
        let mut coo = CooMatrix::new(size, size);
        for (p, q, v) in scalar_sobolev(mesh) {
            for c in 0..2 {
                coo.push(offsets[p] + c, offsets[q] + c, v);
            }
            match (p < interior, q < interior) {
                (true, true) => {
                    for c in 0..2 {
                        coo.push(offsets[p] + 2 + c, offsets[q] + 2 + c, v);
                    }
                }
                (true, false) => {
                    let bq = b(q);
                    for c in 0..2 {
                        for d in 0..2 {
                            coo.push(offsets[p] + 2 + c, offsets[q] + d, v * bq[(c, d)]);
                        }
                    }
                }
                (false, true) => {
                    let bp = b(p);
                    for c in 0..2 {
                        for d in 0..2 {
                            coo.push(offsets[p] + d, offsets[q] + 2 + c, v * bp[(c, d)]);
                        }
                    }
                }
                (false, false) => {
                    let bb = b(p).transpose() * b(q);
                    for d in 0..2 {
                        for e in 0..2 {
                            coo.push(offsets[p] + d, offsets[q] + e, v * bb[(d, e)]);
                        }
                    }
                }
            }
        }
        let chol =
            CscCholesky::factor(&CscMatrix::from(&coo)).map_err(|e| Error::Solver(format!("Sobolev metric: {e:?}")))?;
        Ok(Self { chol, offsets })
    }
}

/// Entries `(p, q, v)` of the scalar form `Σ w|u|² + Dirichlet energy` on
/// ring nodes, symmetric, with duplicates to be summed.
fn scalar_sobolev(mesh: &DiscMesh) -> Vec<(usize, usize, f64)> {
    let (n_r, nt) = (mesh.n_r, mesh.n_theta);
    let (dr, dth) = (mesh.dr(), mesh.dtheta());
    let mut out = Vec::new();
    let mut edge = |p: usize, q: usize, a: f64| {
        out.extend([(p, p, a), (q, q, a), (p, q, -a), (q, p, -a)]);
    };
    for k in 1..=n_r {
        let r = k as f64 * dr;
        let tangential = if k == n_r { 0.5 * dr } else { dr } / (r * dth);
        for j in 0..nt as isize {
            let p = mesh.index(k, j);
            if k < n_r {
                edge(p, mesh.index(k + 1, j), (k as f64 + 0.5) * dth);
            }
            edge(p, mesh.index(k, j + 1), tangential);
        }
    }
    for p in 1..mesh.len() {
        out.push((p, p, mesh.weight(p)));
    }
    // Spokes into the centre, with u_c the ring mean, and the centre's mass.
    let (a0, wc) = (0.5 * dth, mesh.weight(0) / (nt * nt) as f64);
    for i in 0..nt {
        for j in 0..nt {
            let diag = if i == j { a0 } else { 0.0 };
            out.push((mesh.index(1, i as isize), mesh.index(1, j as isize), diag - a0 / nt as f64 + wc));
        }
    }
    out
}

fn mcf_direction(mesh: &DiscMesh) -> Result<Direction> {
    (0..mesh.len())
        .into_par_iter()
        .map(|m| {
            let (k, _) = mesh.ring_spoke(m);
            if k == 0 || k == mesh.n_r {
                Ok(Vector4::zeros())
            } else {
                mean_curvature_vector(mesh, m)
            }
        })
        .collect()
}

/// Applies `dt·direction`, moves the centre with the innermost ring and
/// re-projects every boundary node whose `ξ` changed.
fn trial_step(
    mesh: &DiscMesh,
    dir: &Direction,
    dt: f64,
    section: &dyn BoundarySection,
) -> Result<(DiscMesh, f64, f64)> {
    let mut next = mesh.clone();
    let nt = mesh.n_theta;
    let interior_end = mesh.index(mesh.n_r, 0);
    for (m, d) in dir.iter().enumerate().take(interior_end).skip(1) {
        next.set_chart_point(m, &(mesh.chart_point(m) + d * dt));
    }
    let mean: Vector4<f64> = (0..nt).map(|j| dir[mesh.index(1, j as isize)]).sum::<Vector4<f64>>() / nt as f64;
    next.set_chart_point(0, &(mesh.chart_point(0) + mean * dt));
    let mut hints = mesh.boundary_hints.clone();
    for (j, m) in mesh.boundary_nodes().enumerate() {
        let dxi = Complex64::new(dir[m][0], dir[m][1]) * dt;
        if dxi == Complex64::default() {
            continue;
        }
        let xi = mesh.xi[m] + dxi;
        let v = section.value(xi, hints.as_ref().map(|h| h[j]))?;
        next.xi[m] = xi;
        next.eta[m] = v.eta;
        if let Some(h) = hints.as_mut() {
            h[j] = (v.s, v.t);
        }
    }
    next.boundary_hints = hints;
    let l = mesh.length_scale;
    let moved = (0..mesh.len())
        .map(|m| {
            let d = next.chart_point(m) - mesh.chart_point(m);
            Vector4::new(d[0], d[1], d[2] / l, d[3] / l).norm()
        })
        .fold(0.0, f64::max);
    let norm = dbar_norm(&next);
    Ok((next, norm, moved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linespace::{chart_metric, LineChart};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dimension_arithmetic() {
        assert_eq!(expected_dimension(0), (2, -1));
        assert_eq!(expected_dimension(1), (3, 0));
        assert_eq!(expected_dimension(-2), (0, -3));
    }

    #[test]
    fn node_numbering_round_trips() {
        let m = DiscMesh::from_fn(4, 8, 1.0, |z| (z, z)).unwrap();
        for n in 0..m.len() {
            let (k, j) = m.ring_spoke(n);
            assert_eq!(m.index(k, j as isize), n);
        }
        assert_eq!(m.index(2, -1), m.index(2, 7));
        assert_eq!(m.boundary_nodes().len(), 8);
        let area: f64 = (0..m.len()).map(|n| m.weight(n)).sum();
        assert!((area - PI).abs() < 1e-12);
    }

    #[test]
    fn closed_form_metric_matches_line_geometry() {
        for (xi, eta) in [(c(0.3, -0.4), c(0.7, 0.2)), (c(-1.1, 0.5), c(-0.3, 2.0))] {
            let x = Vector4::new(xi.re, xi.im, eta.re, eta.im);
            let reference = chart_metric(&LineChart::new(xi, eta)).unwrap();
            assert!((chart_metric_at(&x) - reference).norm() < 1e-12);
        }
    }

    #[test]
    fn christoffels_are_symmetric_and_vanish_on_flat_fibers() {
        let x = Vector4::new(0.2, -0.1, 0.4, 0.3);
        let g = christoffel(&x).unwrap();
        for gk in &g {
            assert!((gk - gk.transpose()).norm() < 1e-12);
        }
        // G is independent of η, so fiber-fiber symbols vanish.
        for gk in &g {
            for m in 2..4 {
                for n in 2..4 {
                    assert!(gk[(m, n)].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn constant_disc_has_no_residual_and_no_curvature() {
        let m = DiscMesh::from_fn(6, 12, 1.0, |_| (c(0.1, 0.2), c(-0.3, 0.4))).unwrap();
        for n in 0..m.len() {
            let r = dbar_residual(&m, n);
            assert!(r.xi.norm() < 1e-13 && r.eta.norm() < 1e-13);
        }
        assert!(dbar_norm(&m) < 1e-13);
    }
}
