//! Parametric surfaces in R³: jets, fundamental forms, principal curvatures,
//! the normal congruence into the line space, and two sampling probes
//! (Gauss image containment and induced lengths along parameter rays).
//!
//! Curvature sign convention: `II_ij = ∂_i∂_j σ · n`. A normal pointing to
//! the convex side gives non-negative principal curvatures.

pub mod expr;
pub mod families;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::linespace::{decompose_tangent, line_from_point_dir, LineTangent, OrientedLine, Vec3};
use crate::quadrature::gauss_legendre;

/// Position components `(x, y, z)` with derivatives up to order three.
pub type PointJet = [Jet2; 3];

/// A map `(s, t) → R³` that can report its jet.
pub trait SurfaceMap: Send + Sync + fmt::Debug {
    fn jet(&self, s: f64, t: f64) -> PointJet;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Rect { s0: f64, s1: f64, t0: f64, t1: f64 },
    Disc { cs: f64, ct: f64, radius: f64 },
    Annulus { cs: f64, ct: f64, inner: f64, outer: f64 },
}

impl Domain {
    pub fn plane() -> Self {
        Domain::Rect { s0: f64::NEG_INFINITY, s1: f64::INFINITY, t0: f64::NEG_INFINITY, t1: f64::INFINITY }
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        match *self {
            Domain::Rect { s0, s1, t0, t1 } => s >= s0 && s <= s1 && t >= t0 && t <= t1,
            Domain::Disc { cs, ct, radius } => (s - cs).hypot(t - ct) < radius,
            Domain::Annulus { cs, ct, inner, outer } => {
                let r = (s - cs).hypot(t - ct);
                r >= inner && r <= outer
            }
        }
    }

    /// Characteristic parameter length (1 for unbounded domains).
    pub fn scale(&self) -> f64 {
        let s = match *self {
            Domain::Rect { s0, s1, t0, t1 } => (s1 - s0).max(t1 - t0),
            Domain::Disc { radius, .. } => 2.0 * radius,
            Domain::Annulus { outer, .. } => 2.0 * outer,
        };
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Largest `τ` such that `origin + τ·dir` stays in the domain
    /// (`+∞` if the ray never leaves).
    pub fn exit_time(&self, origin: (f64, f64), dir: (f64, f64)) -> f64 {
        let (ps, pt) = origin;
        let (ds, dt) = dir;
        match *self {
            Domain::Rect { s0, s1, t0, t1 } => {
                let axis = |p: f64, d: f64, lo: f64, hi: f64| {
                    if d > 0.0 {
                        (hi - p) / d
                    } else if d < 0.0 {
                        (lo - p) / d
                    } else {
                        f64::INFINITY
                    }
                };
                axis(ps, ds, s0, s1).min(axis(pt, dt, t0, t1))
            }
            Domain::Disc { cs, ct, radius } => circle_exit(ps - cs, pt - ct, ds, dt, radius),
            Domain::Annulus { cs, ct, inner, outer } => {
                let (x, y) = (ps - cs, pt - ct);
                let out = circle_exit(x, y, ds, dt, outer);
                // Entering the hole also ends the ray.
                let a = ds * ds + dt * dt;
                let b = x * ds + y * dt;
                let c = x * x + y * y - inner * inner;
                let disc = b * b - a * c;
                if b < 0.0 && disc > 0.0 {
                    let tau = (-b - disc.sqrt()) / a;
                    if tau > 0.0 {
                        return tau.min(out);
                    }
                }
                out
            }
        }
    }
}

fn circle_exit(x: f64, y: f64, ds: f64, dt: f64, radius: f64) -> f64 {
    let a = ds * ds + dt * dt;
    let b = x * ds + y * dt;
    let c = x * x + y * y - radius * radius;
    if a == 0.0 {
        return f64::INFINITY;
    }
    (-b + (b * b - a * c).max(0.0).sqrt()) / a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Normal along `∂_s σ × ∂_t σ`.
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// A parametric surface with a domain and a choice of unit normal.
#[derive(Clone)]
pub struct ParamSurface {
    label: String,
    domain: Domain,
    orientation: Orientation,
    map: Arc<dyn SurfaceMap>,
}

impl fmt::Debug for ParamSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSurface")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl ParamSurface {
    pub fn new(label: impl Into<String>, domain: Domain, orientation: Orientation, map: Arc<dyn SurfaceMap>) -> Self {
        Self { label: label.into(), domain, orientation, map }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn flipped(&self) -> Self {
        self.clone().with_orientation(self.orientation.flipped())
    }

    pub fn jet(&self, s: f64, t: f64) -> PointJet {
        self.map.jet(s, t)
    }

    pub fn point(&self, s: f64, t: f64) -> Vec3 {
        let j = self.jet(s, t);
        Vec3::new(j[0].v, j[1].v, j[2].v)
    }

    /// Third partials `∂_i∂_j∂_k σ` in the order `[sss, sst, stt, ttt]`.
    pub fn third_derivatives(&self, s: f64, t: f64) -> [Vec3; 4] {
        let j = self.jet(s, t);
        std::array::from_fn(|k| Vec3::new(j[0].d3[k], j[1].d3[k], j[2].d3[k]))
    }

    pub(crate) fn frame(&self, s: f64, t: f64) -> Result<Frame> {
        Frame::new(&self.jet(s, t), self.orientation.sign(), s, t)
    }
}

/// Position, derivatives and normal at one parameter point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Frame {
    pub p: Vec3,
    pub d: [Vec3; 2],
    /// `[ss, st, tt]`.
    pub dd: [Vec3; 3],
    pub n: Vec3,
    /// Derivatives of the unit normal along s and t.
    pub dn: [Vec3; 2],
}

impl Frame {
    fn new(j: &PointJet, sign: f64, s: f64, t: f64) -> Result<Self> {
        let v = |f: &dyn Fn(&Jet2) -> f64| Vec3::new(f(&j[0]), f(&j[1]), f(&j[2]));
        let p = v(&|c| c.v);
        let d = [v(&|c| c.ds()), v(&|c| c.dt())];
        let dd = [v(&|c| c.dss()), v(&|c| c.dst()), v(&|c| c.dtt())];
        let cross = d[0].cross(&d[1]);
        let norm = cross.norm();
        if !(norm > 1e-8) {
            return Err(Error::DegenerateSurface { s, t, norm });
        }
        let n = cross * (sign / norm);
        let dcross = [dd[0].cross(&d[1]) + d[0].cross(&dd[1]), dd[1].cross(&d[1]) + d[0].cross(&dd[2])];
        let dn = dcross.map(|dc| {
            let dc = dc * sign;
            (dc - n * n.dot(&dc)) / norm
        });
        Ok(Self { p, d, dd, n, dn })
    }

    fn first_form(&self) -> Matrix2<f64> {
        let [a, b] = self.d;
        Matrix2::new(a.dot(&a), a.dot(&b), a.dot(&b), b.dot(&b))
    }

    fn second_form(&self) -> Matrix2<f64> {
        let n = self.n;
        let st = self.dd[1].dot(&n);
        Matrix2::new(self.dd[0].dot(&n), st, st, self.dd[2].dot(&n))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalForms {
    pub first: Matrix2<f64>,
    pub second: Matrix2<f64>,
    pub normal: Vec3,
}

pub fn fundamental_forms(surface: &ParamSurface, s: f64, t: f64) -> Result<FundamentalForms> {
    let f = surface.frame(s, t)?;
    Ok(FundamentalForms { first: f.first_form(), second: f.second_form(), normal: f.n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureData {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Unit principal directions (tangent vectors in R³) for kappa1, kappa2.
    pub dirs: [[f64; 3]; 2],
    pub gap: f64,
    pub product: f64,
}

impl CurvatureData {
    pub fn mean(&self) -> f64 {
        0.5 * (self.kappa1 + self.kappa2)
    }
}

/// Condition number above which the first fundamental form is rejected.
pub const MAX_FIRST_FORM_CONDITION: f64 = 1e12;

pub fn principal_curvatures(surface: &ParamSurface, s: f64, t: f64) -> Result<CurvatureData> {
    let f = surface.frame(s, t)?;
    curvatures_from_frame(&f)
}

pub(crate) fn curvatures_from_frame(f: &Frame) -> Result<CurvatureData> {
    let first = f.first_form();
    let second = f.second_form();
    let (e, g, fm) = (first[(0, 0)], first[(1, 1)], first[(0, 1)]);
    let tr = e + g;
    let det = e * g - fm * fm;
    let rad = (0.25 * (e - g) * (e - g) + fm * fm).sqrt();
    let (lmax, lmin) = (0.5 * tr + rad, 0.5 * tr - rad);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_FIRST_FORM_CONDITION) || !(det > 0.0) {
        return Err(Error::ChartDegenerate { condition });
    }
    // Symmetrise with the Cholesky factor I = L Lᵀ: M = L⁻¹ II L⁻ᵀ.
    let l11 = e.sqrt();
    let l21 = fm / l11;
    let l22 = (g - l21 * l21).sqrt();
    let linv = Matrix2::new(1.0 / l11, 0.0, -l21 / (l11 * l22), 1.0 / l22);
    let m = linv * second * linv.transpose();
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (k1, k2) = (mean + half_gap, mean - half_gap);
    let eigvec = |k: f64, fallback: Vector2<f64>| {
        let v1 = Vector2::new(b, k - a);
        let v2 = Vector2::new(k - c, b);
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        if v.norm() > 1e-14 * (1.0 + k.abs()) {
            v.normalize()
        } else {
            fallback
        }
    };
    let y1 = eigvec(k1, Vector2::new(1.0, 0.0));
    let y2 = Vector2::new(-y1.y, y1.x);
    let to_space = |y: Vector2<f64>| {
        let x = linv.transpose() * y;
        let v = (f.d[0] * x.x + f.d[1] * x.y).normalize();
        [v.x, v.y, v.z]
    };
    Ok(CurvatureData {
        kappa1: k1,
        kappa2: k2,
        dirs: [to_space(y1), to_space(y2)],
        gap: 2.0 * half_gap,
        product: a * c - b * b,
    })
}

/// A point of the normal congruence with the pushforwards of `∂_s`, `∂_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CongruencePoint {
    pub line: OrientedLine,
    pub tangents: [LineTangent; 2],
}

pub fn normal_congruence(surface: &ParamSurface, s: f64, t: f64) -> Result<CongruencePoint> {
    let f = surface.frame(s, t)?;
    congruence_from_frame(&f)
}

pub(crate) fn congruence_from_frame(f: &Frame) -> Result<CongruencePoint> {
    let line = line_from_point_dir(&f.p, &f.n)?;
    let support = f.p.dot(&f.n);
    let mut tangents = [LineTangent::zero(line); 2];
    for (i, tangent) in tangents.iter_mut().enumerate() {
        let dn = f.dn[i];
        let ds = f.d[i];
        // v = σ − (σ·n) n
        let vdot = ds - f.n * (ds.dot(&f.n) + f.p.dot(&dn)) - dn * support;
        *tangent = decompose_tangent(&line, &dn, &vdot)?;
    }
    Ok(CongruencePoint { line, tangents })
}

/// A rectangular lattice of parameter samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

impl SampleGrid {
    pub fn uniform(s_range: (f64, f64), ns: usize, t_range: (f64, f64), nt: usize) -> Self {
        let lin = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (a + b)];
            }
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        Self { s: lin(s_range, ns), t: lin(t_range, nt) }
    }

    pub fn len(&self) -> usize {
        self.s.len() * self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples in row-major order (`t` fastest).
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().flat_map(move |&s| self.t.iter().map(move |&t| (s, t)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussImageReport {
    pub min_dot: f64,
    pub argmin: (f64, f64),
    /// Samples with `|n · e| < tol`.
    pub boundary_samples: Vec<(f64, f64)>,
    /// Samples skipped because the surface is not immersed there.
    pub skipped: usize,
    pub contained: bool,
}

pub fn gauss_image_check(surface: &ParamSurface, grid: &SampleGrid, pole: &Vec3, tol: f64) -> GaussImageReport {
    let e = pole.normalize();
    let mut report = GaussImageReport {
        min_dot: f64::INFINITY,
        argmin: (f64::NAN, f64::NAN),
        boundary_samples: Vec::new(),
        skipped: 0,
        contained: false,
    };
    for (s, t) in grid.points().filter(|&(s, t)| surface.domain().contains(s, t)) {
        match surface.frame(s, t) {
            Ok(f) => {
                let d = f.n.dot(&e);
                if d < report.min_dot {
                    report.min_dot = d;
                    report.argmin = (s, t);
                }
                if d.abs() < tol {
                    report.boundary_samples.push((s, t));
                }
            }
            Err(_) => report.skipped += 1,
        }
    }
    report.contained = report.min_dot >= -tol;
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRay {
    pub origin: (f64, f64),
    pub direction: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthClass {
    Bounded,
    Diverging,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayLength {
    pub ray: ParamRay,
    /// Parameter exit time (`inf` for rays that never leave the domain).
    pub exit_time: f64,
    /// Cumulative induced length at the breakpoints `(τ, L(τ))`.
    pub lengths: Vec<(f64, f64)>,
    /// Extrapolated total length when the tail is geometric.
    pub extrapolated: Option<f64>,
    pub class: LengthClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    /// Number of dyadic breakpoints along each ray.
    pub breakpoints: usize,
    /// Tail increment ratio below which the length is classified as bounded.
    pub bounded_ratio: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { breakpoints: 32, bounded_ratio: 0.75 }
    }
}

/// Heuristic completeness witness: induced length of parameter rays.
///
/// Breakpoints approach the exit point dyadically (`τ_k = τ_exit (1 − 2^{-k})`)
/// or double (`τ_k = 2^{k-1}`) for rays that never leave. Successive length
/// increments shrinking geometrically indicate a finite edge distance, whose
/// Aitken-extrapolated value is reported.
pub fn completeness_probe(surface: &ParamSurface, rays: &[ParamRay], opts: &ProbeOptions) -> Result<Vec<RayLength>> {
    let (nodes, weights) = gauss_legendre(16);
    rays.iter()
        .map(|ray| {
            let (ds, dt) = ray.direction;
            let norm = ds.hypot(dt);
            if !(norm > 0.0) {
                return Err(Error::InvalidInput("ray direction is zero".into()));
            }
            if !surface.domain().contains(ray.origin.0, ray.origin.1) {
                return Err(Error::InvalidInput(format!("ray origin {:?} outside the domain", ray.origin)));
            }
            let dir = (ds / norm, dt / norm);
            let exit = surface.domain().exit_time(ray.origin, dir);
            let breaks: Vec<f64> = (0..=opts.breakpoints)
                .map(|k| {
                    if exit.is_finite() {
                        exit * (1.0 - 0.5f64.powi(k as i32))
                    } else if k == 0 {
                        0.0
                    } else {
                        2f64.powi(k as i32 - 1)
                    }
                })
                .collect();
            let speed = |tau: f64| -> Result<f64> {
                let (s, t) = (ray.origin.0 + tau * dir.0, ray.origin.1 + tau * dir.1);
                let j = surface.jet(s, t);
                let v = Vec3::new(
                    j[0].ds() * dir.0 + j[0].dt() * dir.1,
                    j[1].ds() * dir.0 + j[1].dt() * dir.1,
                    j[2].ds() * dir.0 + j[2].dt() * dir.1,
                );
                Ok(v.norm())
            };
            let mut lengths = vec![(0.0, 0.0)];
            let mut total = 0.0;
            let mut increments = Vec::new();
            for w in breaks.windows(2) {
                let (a, b) = (w[0], w[1]);
                let mut seg = 0.0;
                for (x, wt) in nodes.iter().zip(&weights) {
                    seg += wt * speed(0.5 * (a + b) + 0.5 * (b - a) * x)?;
                }
                seg *= 0.5 * (b - a);
                if !seg.is_finite() {
                    break;
                }
                total += seg;
                increments.push(seg);
                lengths.push((b, total));
            }
            let ratios: Vec<f64> = increments
                .windows(2)
                .rev()
                .take(3)
                .filter(|w| w[0] > 0.0)
                .map(|w| w[1] / w[0])
                .collect();
            let ratio = if ratios.is_empty() { 0.0 } else { ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max) };
            let (class, extrapolated) = if increments.last().copied().unwrap_or(0.0) == 0.0 {
                (LengthClass::Bounded, Some(total))
            } else if ratio < opts.bounded_ratio {
                let last = *increments.last().unwrap();
                (LengthClass::Bounded, Some(total + last * ratio / (1.0 - ratio)))
            } else {
                (LengthClass::Diverging, None)
            };
            Ok(RayLength { ray: *ray, exit_time: exit, lengths, extrapolated, class })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::families::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paraboloid() -> ParamSurface {
        ParamSurface::new("paraboloid", Domain::plane(), Orientation::Positive, Arc::new(Paraboloid { c: 1.0 }))
    }

    #[test]
    fn monge_form_at_the_tip() {
        let ff = fundamental_forms(&paraboloid(), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(ff.first, Matrix2::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(ff.second, Matrix2::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(ff.normal, Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn plane_is_flat() {
        let p = ParamSurface::new("plane", Domain::plane(), Orientation::Positive, Arc::new(Plane));
        let ff = fundamental_forms(&p, 0.3, -2.0).unwrap();
        assert_eq!(ff.second, Matrix2::zeros());
        let k = principal_curvatures(&p, 1.0, 1.0).unwrap();
        assert_eq!((k.gap, k.product), (0.0, 0.0));
    }

    #[test]
    fn sphere_second_form_is_multiple_of_first() {
        let sph = ParamSurface::new("sphere", Domain::plane(), Orientation::Negative, Arc::new(Sphere { radius: 1.0 }));
        for &(s, t) in &[(0.4, 0.1), (1.3, 2.0), (2.7, -1.0)] {
            let ff = fundamental_forms(&sph, s, t).unwrap();
            assert_abs_diff_eq!(ff.second, ff.first, epsilon = 1e-14);
            let ff = fundamental_forms(&sph.flipped(), s, t).unwrap();
            assert_abs_diff_eq!(ff.second, -ff.first, epsilon = 1e-14);
        }
    }

    #[test]
    fn sphere_and_cylinder_curvatures() {
        let sph = ParamSurface::new("sphere", Domain::plane(), Orientation::Negative, Arc::new(Sphere { radius: 2.0 }));
        let k = principal_curvatures(&sph, 0.8, 0.3).unwrap();
        assert_abs_diff_eq!(k.kappa1, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(k.kappa2, 0.5, epsilon = 1e-14);
        assert!(k.gap < 1e-14);
        let cyl = ParamSurface::new("cylinder", Domain::plane(), Orientation::Negative, Arc::new(Cylinder { radius: 1.0 }));
        let k = principal_curvatures(&cyl, 0.8, 0.3).unwrap();
        assert_abs_diff_eq!(k.kappa1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.kappa2, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.product, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_points_rejected() {
        let sph = ParamSurface::new("sphere", Domain::plane(), Orientation::Negative, Arc::new(Sphere { radius: 1.0 }));
        assert!(matches!(fundamental_forms(&sph, 0.0, 0.0), Err(Error::DegenerateSurface { .. })));
        // Nearly collinear tangents: immersed but ill-conditioned.
        #[derive(Debug)]
        struct Sheared;
        impl SurfaceMap for Sheared {
            fn jet(&self, s: f64, t: f64) -> PointJet {
                let (s, t) = (Jet2::var_s(s), Jet2::var_t(t));
                [s + t, s + t * (1.0 + 1e-7), t * 1e-7]
            }
        }
        let sh = ParamSurface::new("sheared", Domain::plane(), Orientation::Positive, Arc::new(Sheared));
        assert!(matches!(principal_curvatures(&sh, 0.0, 0.0), Err(Error::ChartDegenerate { .. })));
    }

    #[test]
    fn congruence_special_cases() {
        let sph = ParamSurface::new("sphere", Domain::plane(), Orientation::Positive, Arc::new(Sphere { radius: 1.5 }));
        let cp = normal_congruence(&sph, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(cp.line.direction(), sph.point(1.0, 0.5) / 1.5, epsilon = 1e-14);
        assert!(cp.line.moment().norm() < 1e-14);
        let pl = ParamSurface::new("plane", Domain::plane(), Orientation::Positive, Arc::new(Plane));
        let cp = normal_congruence(&pl, 0.7, -0.2).unwrap();
        assert_eq!(cp.line.direction(), Vec3::z());
        assert_abs_diff_eq!(cp.line.moment(), Vec3::new(0.7, -0.2, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn paraboloid_normal_line_closed_form() {
        let cp = normal_congruence(&paraboloid(), 1.0, 0.0).unwrap();
        let u = Vec3::new(-1.0, 0.0, 1.0) / 2f64.sqrt();
        assert_abs_diff_eq!(cp.line.direction(), u, epsilon = 1e-15);
        // Foot of the perpendicular from the origin to the line through (1, 0, 1/2).
        let p = Vec3::new(1.0, 0.0, 0.5);
        let foot = p - u * p.dot(&u);
        assert_abs_diff_eq!(cp.line.moment(), foot, epsilon = 1e-15);
        assert_abs_diff_eq!(foot, Vec3::new(0.75, 0.0, 0.75), epsilon = 1e-15);
    }

    #[test]
    fn gauss_image_probe() {
        let grid = SampleGrid::uniform((-3.0, 3.0), 13, (-3.0, 3.0), 13);
        let r = gauss_image_check(&paraboloid(), &grid, &Vec3::z(), 1e-9);
        // n·e = 1/sqrt(1 + r²) is smallest at the corners.
        assert_abs_diff_eq!(r.min_dot, 1.0 / 19f64.sqrt(), epsilon = 1e-14);
        assert!(r.contained && r.boundary_samples.is_empty());
        let pl = ParamSurface::new("plane", Domain::plane(), Orientation::Positive, Arc::new(Plane));
        assert_eq!(gauss_image_check(&pl, &grid, &Vec3::z(), 1e-9).min_dot, 1.0);
        let sph = ParamSurface::new("sphere", Domain::plane(), Orientation::Positive, Arc::new(Sphere { radius: 1.0 }));
        let g = SampleGrid::uniform((0.0, std::f64::consts::PI), 33, (0.0, 6.0), 8);
        let r = gauss_image_check(&sph, &g, &Vec3::z(), 1e-9);
        assert!(!r.contained);
        // The poles are skipped, so the lowest sample sits one step above the south pole.
        assert_eq!(r.skipped, 16);
        assert_abs_diff_eq!(r.min_dot, -(std::f64::consts::PI / 32.0).cos(), epsilon = 1e-14);
    }

    #[test]
    fn rays_on_plane_and_truncated_cap() {
        let pl = ParamSurface::new("plane", Domain::plane(), Orientation::Positive, Arc::new(Plane));
        let ray = ParamRay { origin: (0.0, 0.0), direction: (1.0, 0.0) };
        let r = &completeness_probe(&pl, &[ray], &ProbeOptions::default()).unwrap()[0];
        for &(tau, len) in &r.lengths {
            assert_abs_diff_eq!(len, tau, epsilon = 1e-9 * (1.0 + tau));
        }
        assert_eq!(r.class, LengthClass::Diverging);
        let cap = paraboloid().with_domain(Domain::Disc { cs: 0.0, ct: 0.0, radius: 1.0 });
        let r = &completeness_probe(&cap, &[ray], &ProbeOptions::default()).unwrap()[0];
        assert_eq!(r.class, LengthClass::Bounded);
        // Arc length of z = x²/2 on [0, 1].
        let exact = 0.5 * (2f64.sqrt() + 1f64.asinh());
        assert_abs_diff_eq!(r.extrapolated.unwrap(), exact, epsilon = 1e-10);
    }

    #[test]
    fn domain_exit_times() {
        let d = Domain::Disc { cs: 1.0, ct: 0.0, radius: 2.0 };
        assert_abs_diff_eq!(d.exit_time((1.0, 0.0), (0.0, 1.0)), 2.0, epsilon = 1e-15);
        let a = Domain::Annulus { cs: 0.0, ct: 0.0, inner: 1.0, outer: 3.0 };
        assert_abs_diff_eq!(a.exit_time((2.0, 0.0), (1.0, 0.0)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.exit_time((2.0, 0.0), (-1.0, 0.0)), 1.0, epsilon = 1e-15);
        assert_eq!(Domain::plane().exit_time((0.0, 0.0), (1.0, 1.0)), f64::INFINITY);
    }
}
