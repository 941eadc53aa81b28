//! Lagrangian surfaces in the line space: the normal congruence as a
//! section over a parameter grid, Lagrangian and complex-point diagnostics,
//! the Maslov winding of loops, and Hamiltonian perturbations.
//!
//! Norms and projections use an auxiliary Euclidean metric on the chart
//! coordinates `(Re ξ, Im ξ, Re η / L, Im η / L)`, where `L ≥ 1` is the
//! bounding radius of the sampled surface.

use nalgebra::{Matrix2, Vector2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linespace::{
    chart_tangent, from_chart, metric_g_unchecked, omega_unchecked, tangent_from_chart, to_chart, ChartTangent,
    LineChart, LineTangent, OrientedLine,
};
use crate::surfgeom::{
    congruence_from_frame, curvatures_from_frame, CongruencePoint, CurvatureData, ParamSurface, SampleGrid,
};

/// Euclidean metric on chart coordinates with the fiber scaled by `1/L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxMetric {
    pub length_scale: f64,
}

impl Default for AuxMetric {
    fn default() -> Self {
        Self { length_scale: 1.0 }
    }
}

impl AuxMetric {
    pub fn coords(&self, dc: &ChartTangent) -> Vector4<f64> {
        let l = self.length_scale;
        Vector4::new(dc.dxi.re, dc.dxi.im, dc.deta.re / l, dc.deta.im / l)
    }

    /// Bounding radius of the samples, floored at 1.
    pub fn for_points<'a>(points: impl IntoIterator<Item = &'a crate::linespace::Vec3>) -> Self {
        let r = points.into_iter().map(|p| p.norm()).fold(1.0, f64::max);
        Self { length_scale: r }
    }
}

/// Chart images of the two tangents, with the degeneracy check.
fn chart_pair(cp: &CongruencePoint, aux: &AuxMetric) -> Result<([ChartTangent; 2], [Vector4<f64>; 2])> {
    let c = [chart_tangent(&cp.tangents[0])?, chart_tangent(&cp.tangents[1])?];
    let a = [aux.coords(&c[0]), aux.coords(&c[1])];
    let (n0, n1) = (a[0].norm(), a[1].norm());
    let cos = if n0 > 0.0 && n1 > 0.0 { a[0].dot(&a[1]) / (n0 * n1) } else { 1.0 };
    let sin2 = 1.0 - cos * cos;
    if !(sin2 > 1e-10) || !(n0 > 1e-300 && n1 > 1e-300) {
        return Err(Error::DegenerateCongruence(format!("normalised Gram determinant {sin2:.3e}")));
    }
    Ok((c, a))
}

/// `|Ω(dX1, dX2)| / (L |dX1| |dX2|)` in the auxiliary metric.
pub fn lagrangian_residual(cp: &CongruencePoint, aux: &AuxMetric) -> Result<f64> {
    let (_, a) = chart_pair(cp, aux)?;
    let om = omega_unchecked(&cp.tangents[0], &cp.tangents[1]);
    Ok(om.abs() / (aux.length_scale * a[0].norm() * a[1].norm()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Lorentz,
    Degenerate,
    Definite,
}

impl Signature {
    pub fn as_str(self) -> &'static str {
        match self {
            Signature::Lorentz => "lorentz",
            Signature::Degenerate => "degenerate",
            Signature::Definite => "definite",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TangentPlaneClass {
    /// Distance of the J-rotated tangents from the tangent plane.
    pub defect: f64,
    /// Normalised induced G-Gram determinant.
    pub gram_det: f64,
    pub signature: Signature,
    /// `(dξ₁ dη₂ − dξ₂ dη₁) / (L |dX1| |dX2|)`.
    pub discriminant: Complex64,
}

/// Default tolerance on the normalised G-Gram determinant.
pub const SIGNATURE_TOL: f64 = 1e-10;

pub fn complex_point_defect(cp: &CongruencePoint, aux: &AuxMetric) -> Result<TangentPlaneClass> {
    classify_with(cp, aux, SIGNATURE_TOL)
}

pub fn classify_with(cp: &CongruencePoint, aux: &AuxMetric, signature_tol: f64) -> Result<TangentPlaneClass> {
    let (c, a) = chart_pair(cp, aux)?;
    // Orthonormal basis of the tangent plane.
    let e0 = a[0].normalize();
    let e1 = (a[1] - e0 * e0.dot(&a[1])).normalize();
    let off_plane = |b: Vector4<f64>| {
        let q = b - e0 * e0.dot(&b) - e1 * e1.dot(&b);
        q.norm() / b.norm()
    };
    let defect = off_plane(aux.coords(&c[0].times_i())) + off_plane(aux.coords(&c[1].times_i()));
    let l = aux.length_scale;
    let norms = a[0].norm() * a[1].norm();
    let rho = (c[0].dxi * c[1].deta - c[1].dxi * c[0].deta) / (l * norms);
    let [x, y] = &cp.tangents;
    let g11 = metric_g_unchecked(x, x);
    let g12 = metric_g_unchecked(x, y);
    let g22 = metric_g_unchecked(y, y);
    let det = (g11 * g22 - g12 * g12) / (l * l * norms * norms);
    let signature = if det < -signature_tol {
        Signature::Lorentz
    } else if det > signature_tol {
        Signature::Definite
    } else {
        Signature::Degenerate
    };
    Ok(TangentPlaneClass { defect, gram_det: det, signature, discriminant: rho })
}

/// Everything the diagnostics report about one parameter point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub s: f64,
    pub t: f64,
    pub curvature: CurvatureData,
    pub residual: f64,
    pub class: TangentPlaneClass,
}

pub fn diagnose(surface: &ParamSurface, s: f64, t: f64, aux: &AuxMetric) -> Result<PointDiagnostics> {
    let f = surface.frame(s, t)?;
    let curvature = curvatures_from_frame(&f)?;
    let cp = congruence_from_frame(&f)?;
    Ok(PointDiagnostics { s, t, curvature, residual: lagrangian_residual(&cp, aux)?, class: complex_point_defect(&cp, aux)? })
}

/// One grid point of a section: the line, its chart, and both tangents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionPoint {
    pub s: f64,
    pub t: f64,
    pub congruence: CongruencePoint,
    pub chart: LineChart,
    pub chart_tangents: [ChartTangent; 2],
}

impl SectionPoint {
    fn from_congruence(s: f64, t: f64, congruence: CongruencePoint) -> Result<Self> {
        let chart = to_chart(&congruence.line)?;
        let chart_tangents = [chart_tangent(&congruence.tangents[0])?, chart_tangent(&congruence.tangents[1])?];
        Ok(Self { s, t, congruence, chart, chart_tangents })
    }

    fn from_chart_data(s: f64, t: f64, chart: LineChart, chart_tangents: [ChartTangent; 2]) -> Result<Self> {
        let line = from_chart(&chart)?;
        let tangents = [tangent_from_chart(&line, &chart_tangents[0])?, tangent_from_chart(&line, &chart_tangents[1])?];
        Ok(Self { s, t, congruence: CongruencePoint { line, tangents }, chart, chart_tangents })
    }
}

/// A surface in the line space sampled on a rectangular parameter grid.
/// Points are stored row-major with `t` fastest.
#[derive(Clone, Debug)]
pub struct LagrangianSection {
    source: Option<ParamSurface>,
    grid: SampleGrid,
    points: Vec<SectionPoint>,
    aux: AuxMetric,
}

impl LagrangianSection {
    /// The normal congruence of `surface` on `grid`.
    pub fn from_surface(surface: &ParamSurface, grid: &SampleGrid) -> Result<Self> {
        let pts: Vec<(f64, f64)> = grid.points().collect();
        let points = pts
            .par_iter()
            .map(|&(s, t)| {
                let f = surface.frame(s, t)?;
                SectionPoint::from_congruence(s, t, congruence_from_frame(&f)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let positions: Vec<_> = pts.iter().map(|&(s, t)| surface.point(s, t)).collect();
        let aux = AuxMetric::for_points(&positions);
        Ok(Self { source: Some(surface.clone()), grid: grid.clone(), points, aux })
    }

    /// A section given directly by chart values and chart tangents.
    pub fn from_chart_fields(
        grid: &SampleGrid,
        charts: &[LineChart],
        tangents: &[[ChartTangent; 2]],
        aux: AuxMetric,
    ) -> Result<Self> {
        if charts.len() != grid.len() || tangents.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} chart values and tangents, got {} and {}",
                grid.len(),
                charts.len(),
                tangents.len()
            )));
        }
        let points = grid
            .points()
            .zip(charts.iter().zip(tangents))
            .map(|((s, t), (c, dc))| SectionPoint::from_chart_data(s, t, *c, *dc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { source: None, grid: grid.clone(), points, aux })
    }

    pub fn source(&self) -> Option<&ParamSurface> {
        self.source.as_ref()
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn points(&self) -> &[SectionPoint] {
        &self.points
    }

    pub fn aux(&self) -> AuxMetric {
        self.aux
    }

    pub fn point(&self, i: usize, j: usize) -> &SectionPoint {
        &self.points[i * self.grid.t.len() + j]
    }

    pub fn residuals(&self) -> Result<Vec<f64>> {
        self.points.par_iter().map(|p| lagrangian_residual(&p.congruence, &self.aux)).collect()
    }

    pub fn max_residual(&self) -> Result<f64> {
        Ok(self.residuals()?.into_iter().fold(0.0, f64::max))
    }

    pub fn classes(&self) -> Result<Vec<TangentPlaneClass>> {
        self.points.par_iter().map(|p| complex_point_defect(&p.congruence, &self.aux)).collect()
    }

    fn require_source(&self) -> Result<&ParamSurface> {
        self.source.as_ref().ok_or_else(|| Error::InvalidInput("operation needs the source surface".into()))
    }

    /// Discriminant at an arbitrary parameter point of the source surface.
    pub fn discriminant_at(&self, s: f64, t: f64) -> Result<Complex64> {
        let surface = self.require_source()?;
        let cp = congruence_from_frame(&surface.frame(s, t)?)?;
        Ok(complex_point_defect(&cp, &self.aux)?.discriminant)
    }

    /// Chart point and the real Jacobians `∂ξ/∂(s,t)`, `∂η/∂(s,t)` at a
    /// parameter point of the source surface.
    pub fn chart_jet(&self, s: f64, t: f64) -> Result<(LineChart, Matrix2<f64>, Matrix2<f64>)> {
        let surface = self.require_source()?;
        let cp = congruence_from_frame(&surface.frame(s, t)?)?;
        let p = SectionPoint::from_congruence(s, t, cp)?;
        let [a, b] = p.chart_tangents;
        let jx = Matrix2::new(a.dxi.re, b.dxi.re, a.dxi.im, b.dxi.im);
        let je = Matrix2::new(a.deta.re, b.deta.re, a.deta.im, b.deta.im);
        Ok((p.chart, jx, je))
    }

    /// Solves `ξ(s, t) = xi` by Newton's method from the nearest grid point.
    pub fn invert(&self, xi: Complex64) -> Result<SectionValue> {
        let start = self
            .points
            .iter()
            .min_by(|a, b| (a.chart.xi - xi).norm().total_cmp(&(b.chart.xi - xi).norm()))
            .map(|p| (p.s, p.t))
            .ok_or_else(|| Error::InvalidInput("empty section".into()))?;
        self.invert_from(xi, start)
    }

    pub fn invert_from(&self, xi: Complex64, start: (f64, f64)) -> Result<SectionValue> {
        let (mut s, mut t) = start;
        for _ in 0..60 {
            let (c, jx, je) = self.chart_jet(s, t)?;
            let r = Vector2::new(c.xi.re - xi.re, c.xi.im - xi.im);
            if r.norm() < 1e-15 * (1.0 + xi.norm()) {
                let inv = jx.try_inverse().ok_or_else(|| Error::Solver("singular ξ Jacobian".into()))?;
                return Ok(SectionValue { s, t, eta: c.eta, d_eta_d_xi: je * inv });
            }
            let step = jx.lu().solve(&r).ok_or_else(|| Error::Solver("singular ξ Jacobian".into()))?;
            // Damp long steps so a poor start cannot throw the iterate far away.
            let damp = 1.0f64.min(1.0 / step.norm());
            s -= step.x * damp;
            t -= step.y * damp;
            if !(s.is_finite() && t.is_finite()) {
                break;
            }
        }
        let (c, jx, je) = self.chart_jet(s, t)?;
        let r = (c.xi - xi).norm();
        if r < 1e-12 * (1.0 + xi.norm()) {
            let inv = jx.try_inverse().ok_or_else(|| Error::Solver("singular ξ Jacobian".into()))?;
            return Ok(SectionValue { s, t, eta: c.eta, d_eta_d_xi: je * inv });
        }
        Err(Error::Solver(format!("section inversion did not converge at ξ = {xi} (residual {r:.3e})")))
    }
}

/// The section over a chart point: `η_sec(ξ)` and its real Jacobian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionValue {
    pub s: f64,
    pub t: f64,
    pub eta: Complex64,
    /// Real 2×2 Jacobian of `(Re η, Im η)` with respect to `(Re ξ, Im ξ)`.
    pub d_eta_d_xi: Matrix2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellThresholds {
    pub gap: f64,
    pub defect: f64,
    pub rho: f64,
    /// Sub-samples per cell edge used before the local polish.
    pub subdivisions: usize,
}

/// Detector thresholds, calibrated once on the sphere and paraboloid
/// congruences (aux scale of the `[-2, 2]²` paraboloid patch): near the tip
/// both detectors are proportional to the gap, defect ≈ 0.392·gap and
/// |ρ| ≈ 0.196·gap, so these are their values where the gap equals the
/// umbilic threshold `1e-4`. The sphere sits at the round-off floor (~1e-15).
pub const DEFECT_THRESHOLD: f64 = 3.9e-5;
pub const RHO_THRESHOLD: f64 = 1.95e-5;

impl Default for CellThresholds {
    fn default() -> Self {
        Self { gap: 1e-4, defect: DEFECT_THRESHOLD, rho: RHO_THRESHOLD, subdivisions: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    /// Cells `(i, j)` spanning `[s_i, s_{i+1}] × [t_j, t_{j+1}]`.
    pub umbilic: Vec<(usize, usize)>,
    pub defect: Vec<(usize, usize)>,
    pub rho: Vec<(usize, usize)>,
    pub coincide: bool,
    /// Cells where some sample could not be evaluated.
    pub skipped: Vec<(usize, usize)>,
}

/// Flags the grid cells on which each detector's minimum falls below its
/// threshold. Minima come from sub-sampling followed by a compass search.
pub fn complex_point_cells(surface: &ParamSurface, grid: &SampleGrid, aux: &AuxMetric, th: &CellThresholds) -> CellReport {
    let (ns, nt) = (grid.s.len(), grid.t.len());
    let cells: Vec<(usize, usize)> =
        (0..ns.saturating_sub(1)).flat_map(|i| (0..nt.saturating_sub(1)).map(move |j| (i, j))).collect();
    let quantities = |s: f64, t: f64| -> Option<[f64; 3]> {
        let d = diagnose(surface, s, t, aux).ok()?;
        Some([d.curvature.gap, d.class.defect, d.class.discriminant.norm()])
    };
    let limits = [th.gap, th.defect, th.rho];
    let flags: Vec<([bool; 3], bool)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (s0, s1, t0, t1) = (grid.s[i], grid.s[i + 1], grid.t[j], grid.t[j + 1]);
            let k = th.subdivisions.max(1);
            let mut best = [(f64::INFINITY, (0.0, 0.0)); 3];
            let mut skipped = false;
            for a in 0..=k {
                for b in 0..=k {
                    let s = s0 + (s1 - s0) * a as f64 / k as f64;
                    let t = t0 + (t1 - t0) * b as f64 / k as f64;
                    match quantities(s, t) {
                        Some(q) => {
                            for m in 0..3 {
                                if q[m] < best[m].0 {
                                    best[m] = (q[m], (s, t));
                                }
                            }
                        }
                        None => skipped = true,
                    }
                }
            }
            let mut flagged = [false; 3];
            for m in 0..3 {
                if best[m].0 < limits[m] {
                    flagged[m] = true;
                    continue;
                }
                if !(best[m].0 < 100.0 * limits[m]) {
                    continue;
                }
                // Compass polish within the cell.
                let (mut v, (mut s, mut t)) = best[m];
                let mut step = 0.5 * (s1 - s0).max(t1 - t0) / k as f64;
                while step > 1e-12 * (s1 - s0) && v >= limits[m] {
                    let mut moved = false;
                    for (ds, dt) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                        let (ns_, nt_) = ((s + ds * step).clamp(s0, s1), (t + dt * step).clamp(t0, t1));
                        if let Some(q) = quantities(ns_, nt_) {
                            if q[m] < v {
                                (v, s, t) = (q[m], ns_, nt_);
                                moved = true;
                                break;
                            }
                        }
                    }
                    if !moved {
                        step *= 0.5;
                    }
                }
                flagged[m] = v < limits[m];
            }
            (flagged, skipped)
        })
        .collect();
    let pick = |m: usize| -> Vec<(usize, usize)> {
        cells.iter().zip(&flags).filter(|(_, f)| f.0[m]).map(|(c, _)| *c).collect()
    };
    let (umbilic, defect, rho) = (pick(0), pick(1), pick(2));
    let skipped = cells.iter().zip(&flags).filter(|(_, f)| f.1).map(|(c, _)| *c).collect();
    let coincide = umbilic == defect && umbilic == rho;
    CellReport { umbilic, defect, rho, coincide, skipped }
}

/// A closed curve in the parameter plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopSpec {
    /// Closed polygon (the last vertex joins the first).
    Polygon { vertices: Vec<(f64, f64)>, samples_per_edge: usize },
    /// Counter-clockwise unless `reversed`.
    Circle {
        centre: (f64, f64),
        radius: f64,
        samples: usize,
        #[serde(default)]
        reversed: bool,
    },
}

impl LoopSpec {
    /// Sample points, closed (first point not repeated).
    pub fn samples(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            LoopSpec::Polygon { vertices, samples_per_edge } => {
                if vertices.len() < 2 || *samples_per_edge == 0 {
                    return Err(Error::InvalidInput("polygon loop needs ≥ 2 vertices and ≥ 1 sample per edge".into()));
                }
                let n = vertices.len();
                let mut out = Vec::with_capacity(n * samples_per_edge);
                for k in 0..n {
                    let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                    for m in 0..*samples_per_edge {
                        let f = m as f64 / *samples_per_edge as f64;
                        out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
                    }
                }
                Ok(out)
            }
            LoopSpec::Circle { centre, radius, samples, reversed } => {
                if *samples < 3 || !(*radius > 0.0) {
                    return Err(Error::InvalidInput("circle loop needs radius > 0 and ≥ 3 samples".into()));
                }
                let sign = if *reversed { -1.0 } else { 1.0 };
                Ok((0..*samples)
                    .map(|k| {
                        let th = sign * 2.0 * std::f64::consts::PI * k as f64 / *samples as f64;
                        (centre.0 + radius * th.cos(), centre.1 + radius * th.sin())
                    })
                    .collect())
            }
        }
    }

    /// The same loop with twice the sampling density.
    pub fn refined(&self) -> Self {
        match self.clone() {
            LoopSpec::Polygon { vertices, samples_per_edge } => {
                LoopSpec::Polygon { vertices, samples_per_edge: 2 * samples_per_edge }
            }
            LoopSpec::Circle { centre, radius, samples, reversed } => {
                LoopSpec::Circle { centre, radius, samples: 2 * samples, reversed }
            }
        }
    }

    pub fn reversed(&self) -> Self {
        match self.clone() {
            LoopSpec::Polygon { mut vertices, samples_per_edge } => {
                vertices.reverse();
                LoopSpec::Polygon { vertices, samples_per_edge }
            }
            LoopSpec::Circle { centre, radius, samples, reversed } => {
                LoopSpec::Circle { centre, radius, samples, reversed: !reversed }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexReport {
    pub winding: i64,
    pub maslov: i64,
    #[serde(rename = "I")]
    pub analytic_index: i64,
    pub unparam_dim: i64,
}

impl IndexReport {
    pub fn from_winding(winding: i64) -> Self {
        let maslov = 2 * winding;
        let (analytic_index, unparam_dim) = crate::discflow::expected_dimension(maslov);
        Self { winding, maslov, analytic_index, unparam_dim }
    }
}

/// Smallest `|ρ|` accepted on a loop.
pub const LOOP_RHO_TOL: f64 = RHO_THRESHOLD;

/// Winding of the discriminant along a loop of parameter points.
pub fn discriminant_winding(rho: &[Complex64], points: &[(f64, f64)], tol: f64) -> Result<i64> {
    for (k, r) in rho.iter().enumerate() {
        if !(r.norm() >= tol) {
            return Err(Error::ComplexPointOnLoop { index: k, s: points[k].0, t: points[k].1 });
        }
    }
    let n = rho.len();
    let mut total = 0.0;
    for k in 0..n {
        let d = (rho[(k + 1) % n] / rho[k]).arg();
        if d.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Resolution { index: k, jump: d });
        }
        total += d;
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

pub fn maslov_index(section: &LagrangianSection, lp: &LoopSpec) -> Result<IndexReport> {
    let pts = lp.samples()?;
    let rho = pts.par_iter().map(|&(s, t)| section.discriminant_at(s, t)).collect::<Result<Vec<_>>>()?;
    Ok(IndexReport::from_winding(discriminant_winding(&rho, &pts, LOOP_RHO_TOL)?))
}

/// A scalar potential on the section's grid (same layout) and a step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPotential {
    pub phi: Vec<f64>,
    pub epsilon: f64,
}

/// Fourth-order first differences along a line of samples with spacing `h`
/// (one-sided at the ends).
fn diff4(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least 5 samples per grid line");
    (0..n)
        .map(|i| {
            let d = if i >= 2 && i + 2 < n {
                (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / 12.0
            } else if i < 2 {
                let k = i;
                let w: &[f64] = if k == 0 {
                    &[-25.0, 48.0, -36.0, 16.0, -3.0]
                } else {
                    &[-3.0, -10.0, 18.0, -6.0, 1.0]
                };
                w.iter().enumerate().map(|(m, c)| c * f[m]).sum::<f64>() / 12.0
            } else {
                let k = n - 1 - i;
                let w: &[f64] = if k == 0 {
                    &[-25.0, 48.0, -36.0, 16.0, -3.0]
                } else {
                    &[-3.0, -10.0, 18.0, -6.0, 1.0]
                };
                -w.iter().enumerate().map(|(m, c)| c * f[n - 1 - m]).sum::<f64>() / 12.0
            };
            d / h
        })
        .collect()
}

/// Partial derivatives of a grid field (row-major, `t` fastest).
fn grid_gradient(grid: &SampleGrid, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ns, nt) = (grid.s.len(), grid.t.len());
    if ns < 5 || nt < 5 {
        return Err(Error::InvalidInput("perturbation needs a grid of at least 5×5".into()));
    }
    let hs = (grid.s[ns - 1] - grid.s[0]) / (ns - 1) as f64;
    let ht = (grid.t[nt - 1] - grid.t[0]) / (nt - 1) as f64;
    let mut fs = vec![0.0; f.len()];
    let mut ft = vec![0.0; f.len()];
    for i in 0..ns {
        let row = &f[i * nt..(i + 1) * nt];
        ft[i * nt..(i + 1) * nt].copy_from_slice(&diff4(row, ht));
    }
    for j in 0..nt {
        let col: Vec<f64> = (0..ns).map(|i| f[i * nt + j]).collect();
        for (i, d) in diff4(&col, hs).into_iter().enumerate() {
            fs[i * nt + j] = d;
        }
    }
    Ok((fs, ft))
}

/// One explicit step along `ε J grad_G φ`.
///
/// The gradient uses the inverse induced G-Gram matrix (invertible on a
/// totally real section, whose induced metric is Lorentz). The chart values
/// move by `ε i · chart(grad φ)`; new tangents are the old ones plus grid
/// differences of the displacement, so points where the displacement
/// vanishes identically are left exactly unchanged.
pub fn perturb_lagrangian(section: &LagrangianSection, pot: &PerturbationPotential) -> Result<LagrangianSection> {
    let grid = section.grid();
    let n = grid.len();
    if pot.phi.len() != n {
        return Err(Error::InvalidInput(format!("potential has {} values, grid has {n}", pot.phi.len())));
    }
    if pot.phi.iter().any(|x| !x.is_finite()) || !pot.epsilon.is_finite() {
        return Err(Error::InvalidInput("potential and epsilon must be finite".into()));
    }
    let (ps, pt) = grid_gradient(grid, &pot.phi)?;
    // Displacement field in real chart coordinates.
    let disp = section
        .points()
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let [x, y] = &p.congruence.tangents;
            if ps[k] == 0.0 && pt[k] == 0.0 {
                return Ok(Vector4::zeros());
            }
            let g = Matrix2::new(
                metric_g_unchecked(x, x),
                metric_g_unchecked(x, y),
                metric_g_unchecked(x, y),
                metric_g_unchecked(y, y),
            );
            let na = section.aux().coords(&p.chart_tangents[0]).norm() * section.aux().coords(&p.chart_tangents[1]).norm();
            let l = section.aux().length_scale;
            let det = g.determinant() / (l * l * na * na);
            if !(det.abs() > SIGNATURE_TOL) {
                return Err(Error::CannotInvertMetric(format!(
                    "induced metric degenerate at ({}, {}) (normalised determinant {det:.3e})",
                    p.s, p.t
                )));
            }
            let coef = g.try_inverse().unwrap() * Vector2::new(ps[k], pt[k]);
            let grad = p.chart_tangents[0].to_real() * coef.x + p.chart_tangents[1].to_real() * coef.y;
            let jgrad = ChartTangent::from_real(&grad).times_i();
            Ok(jgrad.to_real() * pot.epsilon)
        })
        .collect::<Result<Vec<Vector4<f64>>>>()?;
    let mut charts = Vec::with_capacity(n);
    let mut tangents = Vec::with_capacity(n);
    let comp: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
        .map(|c| {
            let f: Vec<f64> = disp.iter().map(|d| d[c]).collect();
            grid_gradient(grid, &f)
        })
        .collect::<Result<_>>()?;
    for (k, p) in section.points().iter().enumerate() {
        charts.push(LineChart::from_real(&(p.chart.to_real() + disp[k])));
        let ds = Vector4::new(comp[0].0[k], comp[1].0[k], comp[2].0[k], comp[3].0[k]);
        let dt = Vector4::new(comp[0].1[k], comp[1].1[k], comp[2].1[k], comp[3].1[k]);
        tangents.push([
            ChartTangent::from_real(&(p.chart_tangents[0].to_real() + ds)),
            ChartTangent::from_real(&(p.chart_tangents[1].to_real() + dt)),
        ]);
    }
    LagrangianSection::from_chart_fields(grid, &charts, &tangents, section.aux())
}

/// Line tangent for a chart velocity at a line (convenience for callers
/// working in chart coordinates).
pub fn chart_velocity(line: &OrientedLine, dc: &ChartTangent) -> Result<LineTangent> {
    tangent_from_chart(line, dc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toponogov::make_builtin;
    use std::collections::BTreeMap;

    fn surf(name: &str) -> ParamSurface {
        make_builtin(name, &BTreeMap::new()).unwrap()
    }

    fn cp(name: &str, s: f64, t: f64) -> CongruencePoint {
        crate::surfgeom::normal_congruence(&surf(name), s, t).unwrap()
    }

    #[test]
    fn sphere_is_lagrangian_and_complex() {
        let aux = AuxMetric::default();
        for &(s, t) in &[(0.5, 0.1), (1.6, 3.0), (2.5, 5.5)] {
            let c = cp("sphere", s, t);
            assert!(lagrangian_residual(&c, &aux).unwrap() < 1e-15);
            let k = complex_point_defect(&c, &aux).unwrap();
            assert!(k.defect < 1e-12 && k.discriminant.norm() < 1e-14);
            assert_eq!(k.signature, Signature::Degenerate);
        }
    }

    #[test]
    fn paraboloid_off_tip_is_totally_real() {
        let aux = AuxMetric::default();
        let k = complex_point_defect(&cp("paraboloid", 1.0, 0.0), &aux).unwrap();
        assert!(k.defect > 0.1, "{k:?}");
        assert_eq!(k.signature, Signature::Lorentz);
        assert!(k.discriminant.norm() > 0.0);
        let tip = complex_point_defect(&cp("paraboloid", 0.0, 0.0), &aux).unwrap();
        assert!(tip.defect < 1e-6 && tip.discriminant.norm() < 1e-6, "{tip:?}");
    }

    #[test]
    fn degenerate_tangents_rejected() {
        let mut c = cp("paraboloid", 0.5, 0.5);
        c.tangents[1] = c.tangents[0].scale(2.0);
        assert!(matches!(lagrangian_residual(&c, &AuxMetric::default()), Err(Error::DegenerateCongruence(_))));
    }

    #[test]
    fn winding_errors() {
        let pts = [(0.0, 0.0); 4];
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(discriminant_winding(&[one, z, one, one], &pts, 1e-6), Err(Error::ComplexPointOnLoop { index: 1, .. })));
        let quarter = [one, Complex64::i(), -one, -Complex64::i()];
        assert!(matches!(discriminant_winding(&quarter, &pts, 1e-6), Err(Error::Resolution { .. })));
        let eighth: Vec<Complex64> = (0..8).map(|k| Complex64::from_polar(1.0, k as f64 * 0.785)).collect();
        assert_eq!(discriminant_winding(&eighth, &[(0.0, 0.0); 8], 1e-6).unwrap(), 1);
    }

    #[test]
    fn index_arithmetic() {
        let r = IndexReport::from_winding(0);
        assert_eq!((r.maslov, r.analytic_index, r.unparam_dim), (0, 2, -1));
        let r = IndexReport::from_winding(-2);
        assert_eq!((r.maslov, r.analytic_index, r.unparam_dim), (-4, -2, -5));
    }

    #[test]
    fn fourth_order_differences() {
        let h = 0.1;
        let f: Vec<f64> = (0..9).map(|i| (i as f64 * h).powi(4)).collect();
        let d = diff4(&f, h);
        for (i, di) in d.iter().enumerate() {
            let x = i as f64 * h;
            assert!((di - 4.0 * x.powi(3)).abs() < 1e-12, "{i}: {di}");
        }
    }

    #[test]
    fn loop_sampling() {
        let c = LoopSpec::Circle { centre: (1.0, 0.0), radius: 0.5, samples: 4, reversed: false };
        let p = c.samples().unwrap();
        assert!((p[1].0 - 1.0).abs() < 1e-15 && (p[1].1 - 0.5).abs() < 1e-15);
        let r = c.reversed().samples().unwrap();
        assert!((r[1].1 + 0.5).abs() < 1e-15);
        let sq = LoopSpec::Polygon { vertices: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], samples_per_edge: 2 };
        assert_eq!(sq.samples().unwrap().len(), 6);
        assert_eq!(sq.refined().samples().unwrap().len(), 12);
    }
}
