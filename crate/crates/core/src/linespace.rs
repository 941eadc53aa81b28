//! The space of oriented lines in R³ modelled as TS².
//!
//! A line is stored as a unit direction `u` together with its moment `v`,
//! the foot of the perpendicular from the origin (`v · u = 0`). Tangent
//! vectors are split into a horizontal part `h` (the velocity of `u`) and a
//! vertical part `w` (the tangential projection of the velocity of `v`, i.e.
//! its Levi-Civita covariant derivative along the round sphere). On that
//! splitting:
//!
//! * `J(h, w) = (u × h, u × w)`
//! * `Ω(X, Y) = ⟨h_X, w_Y⟩ − ⟨h_Y, w_X⟩`
//! * `G(X, Y) = Ω(JX, Y)`, a metric of signature (2, 2).
//!
//! The chart is the stereographic projection from the south pole for the
//! direction, `ξ = (u₁ + i u₂)/(1 + u₃)`, and the fibre coordinate `η` of the
//! moment in the coordinate frame `∂/∂ξ`:
//!
//! `η = ½ [(1 − ξ²) v₁ + i (1 + ξ²) v₂ − 2 ξ v₃]`.
//!
//! In `(ξ, η)` the complex structure `J` is multiplication by `i`.

use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerances used by the line-space operations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineTolerances {
    /// Accepted deviation of `|u|` from one on input.
    pub unit: f64,
    /// Accepted violation of the TS² tangent constraints (relative).
    pub tangent: f64,
    /// Angular radius of the excluded cap around the south pole.
    pub polar_cap: f64,
}

impl Default for LineTolerances {
    fn default() -> Self {
        Self { unit: 1e-9, tangent: 1e-8, polar_cap: 1e-3 }
    }
}

/// A point of the line space: direction `u` and moment `v ⊥ u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedLine {
    u: Vec3,
    v: Vec3,
}

impl OrientedLine {
    /// Builds a line from an already normalised pair.
    pub fn new(u: Vec3, v: Vec3) -> Result<Self> {
        let scale = 1.0 + v.norm();
        if (u.norm() - 1.0).abs() > 1e-12 || u.dot(&v).abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "(u, v) is not a point of TS^2: |u| - 1 = {:.2e}, u.v = {:.2e}",
                u.norm() - 1.0,
                u.dot(&v)
            )));
        }
        Ok(Self { u, v })
    }

    pub fn direction(&self) -> Vec3 {
        self.u
    }

    pub fn moment(&self) -> Vec3 {
        self.v
    }

    /// Six floats: `u` then `v`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.u.x, self.u.y, self.u.z, self.v.x, self.v.y, self.v.z]
    }

    pub fn from_array(a: [f64; 6]) -> Result<Self> {
        Self::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]))
    }

    fn same_base(&self, other: &OrientedLine) -> bool {
        let scale = 1.0 + self.v.norm().max(other.v.norm());
        (self.u - other.u).norm() <= 1e-12 && (self.v - other.v).norm() <= 1e-12 * scale
    }

    /// Euclidean distance from `p` to the line.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        let q = p - self.v;
        (q - self.u * q.dot(&self.u)).norm()
    }
}

impl Serialize for OrientedLine {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrientedLine {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 6]>::deserialize(d)?;
        OrientedLine::from_array(a).map_err(serde::de::Error::custom)
    }
}

/// A tangent vector to the line space at `base`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineTangent {
    pub base: OrientedLine,
    pub h: Vec3,
    pub w: Vec3,
}

impl LineTangent {
    pub fn zero(base: OrientedLine) -> Self {
        Self { base, h: Vec3::zeros(), w: Vec3::zeros() }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { base: self.base, h: self.h * c, w: self.w * c }
    }

    pub fn add(&self, other: &LineTangent) -> Result<Self> {
        check_base(self, other)?;
        Ok(Self { base: self.base, h: self.h + other.h, w: self.w + other.w })
    }

    /// Euclidean norm of the (h, w) pair.
    pub fn split_norm(&self) -> f64 {
        (self.h.norm_squared() + self.w.norm_squared()).sqrt()
    }
}

fn check_base(x: &LineTangent, y: &LineTangent) -> Result<()> {
    if x.base.same_base(&y.base) {
        Ok(())
    } else {
        Err(Error::InvalidInput("tangent vectors live at different lines".into()))
    }
}

/// The line through `p` with direction `u`.
pub fn line_from_point_dir(p: &Vec3, u: &Vec3) -> Result<OrientedLine> {
    line_from_point_dir_with(p, u, &LineTolerances::default())
}

pub fn line_from_point_dir_with(p: &Vec3, u: &Vec3, tol: &LineTolerances) -> Result<OrientedLine> {
    let n = u.norm();
    if !n.is_finite() || (n - 1.0).abs() > tol.unit {
        return Err(Error::InvalidInput(format!("direction is not a unit vector (|u| = {n})")));
    }
    if !p.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidInput("point has non-finite coordinates".into()));
    }
    let u = u / n;
    let v = p - u * p.dot(&u);
    // One more projection cleans the rounding left by the first.
    let v = v - u * v.dot(&u);
    Ok(OrientedLine { u, v })
}

pub fn point_on_line(line: &OrientedLine, t: f64) -> Vec3 {
    line.v + line.u * t
}

/// Splits the velocity `(u̇, v̇)` of a curve in TS² into horizontal and
/// vertical parts.
pub fn decompose_tangent(line: &OrientedLine, udot: &Vec3, vdot: &Vec3) -> Result<LineTangent> {
    decompose_tangent_with(line, udot, vdot, &LineTolerances::default())
}

pub fn decompose_tangent_with(
    line: &OrientedLine,
    udot: &Vec3,
    vdot: &Vec3,
    tol: &LineTolerances,
) -> Result<LineTangent> {
    let u = line.u;
    let r1 = udot.dot(&u).abs() / (1.0 + udot.norm());
    let r2 = (vdot.dot(&u) + line.v.dot(udot)).abs()
        / (1.0 + vdot.norm() + line.v.norm() * udot.norm());
    let residual = r1.max(r2);
    if !residual.is_finite() || residual > tol.tangent {
        return Err(Error::InvalidTangent { residual });
    }
    let h = udot - u * udot.dot(&u);
    let w = vdot - u * vdot.dot(&u);
    Ok(LineTangent { base: *line, h, w })
}

pub fn apply_j(x: &LineTangent) -> LineTangent {
    let u = x.base.u;
    LineTangent { base: x.base, h: u.cross(&x.h), w: u.cross(&x.w) }
}

pub fn omega(x: &LineTangent, y: &LineTangent) -> Result<f64> {
    check_base(x, y)?;
    Ok(omega_unchecked(x, y))
}

pub(crate) fn omega_unchecked(x: &LineTangent, y: &LineTangent) -> f64 {
    x.h.dot(&y.w) - y.h.dot(&x.w)
}

pub fn metric_g(x: &LineTangent, y: &LineTangent) -> Result<f64> {
    check_base(x, y)?;
    Ok(metric_g_unchecked(x, y))
}

pub(crate) fn metric_g_unchecked(x: &LineTangent, y: &LineTangent) -> f64 {
    let u = x.base.u;
    u.cross(&x.h).dot(&y.w) + u.cross(&y.h).dot(&x.w)
}

/// Chart coordinates `(ξ, η)` of a line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineChart {
    pub xi: Complex64,
    pub eta: Complex64,
}

impl LineChart {
    pub fn new(xi: Complex64, eta: Complex64) -> Self {
        Self { xi, eta }
    }

    /// Real coordinates `(Re ξ, Im ξ, Re η, Im η)`.
    pub fn to_real(&self) -> Vector4<f64> {
        Vector4::new(self.xi.re, self.xi.im, self.eta.re, self.eta.im)
    }

    pub fn from_real(x: &Vector4<f64>) -> Self {
        Self { xi: Complex64::new(x[0], x[1]), eta: Complex64::new(x[2], x[3]) }
    }
}

/// Chart image `(dξ, dη)` of a tangent vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartTangent {
    pub dxi: Complex64,
    pub deta: Complex64,
}

impl ChartTangent {
    pub fn new(dxi: Complex64, deta: Complex64) -> Self {
        Self { dxi, deta }
    }

    pub fn to_real(&self) -> Vector4<f64> {
        Vector4::new(self.dxi.re, self.dxi.im, self.deta.re, self.deta.im)
    }

    pub fn from_real(x: &Vector4<f64>) -> Self {
        Self { dxi: Complex64::new(x[0], x[1]), deta: Complex64::new(x[2], x[3]) }
    }

    /// The action of `J`, which is multiplication by `i` in the chart.
    pub fn times_i(&self) -> Self {
        let i = Complex64::i();
        Self { dxi: i * self.dxi, deta: i * self.deta }
    }
}

/// Complex frame vector `(1 − ξ², i(1 + ξ²), −2ξ)`; its real and imaginary
/// parts are `(1 + |ξ|²)²/2` times `∂U/∂x` and `∂U/∂y` for the inverse
/// stereographic map `U`.
fn frame(xi: Complex64) -> [Complex64; 3] {
    let one = Complex64::new(1.0, 0.0);
    let xi2 = xi * xi;
    [one - xi2, Complex64::i() * (one + xi2), -2.0 * xi]
}

fn cdot_real(a: &[Complex64; 3], v: &Vec3) -> Complex64 {
    a[0] * v.x + a[1] * v.y + a[2] * v.z
}

/// Inverse stereographic projection from the south pole.
pub fn direction_from_xi(xi: Complex64) -> Vec3 {
    let r2 = xi.norm_sqr();
    let d = 1.0 + r2;
    Vec3::new(2.0 * xi.re / d, 2.0 * xi.im / d, (1.0 - r2) / d)
}

/// Coordinate vectors `∂U/∂x`, `∂U/∂y` of the inverse stereographic map.
pub fn stereo_frame(xi: Complex64) -> (Vec3, Vec3) {
    let f = frame(xi);
    let d = 1.0 + xi.norm_sqr();
    let c = 2.0 / (d * d);
    (
        Vec3::new(f[0].re, f[1].re, f[2].re) * c,
        Vec3::new(f[0].im, f[1].im, f[2].im) * c,
    )
}

/// Angle between `u` and the south pole.
pub fn south_pole_angle(u: &Vec3) -> f64 {
    let s = Vec3::new(0.0, 0.0, -1.0);
    u.cross(&s).norm().atan2(u.dot(&s))
}

pub fn to_chart(line: &OrientedLine) -> Result<LineChart> {
    to_chart_with(line, &LineTolerances::default())
}

pub fn to_chart_with(line: &OrientedLine, tol: &LineTolerances) -> Result<LineChart> {
    let u = line.u;
    let angle = south_pole_angle(&u);
    if angle < tol.polar_cap {
        return Err(Error::ChartDomain { angle });
    }
    let xi = Complex64::new(u.x, u.y) / (1.0 + u.z);
    let eta = 0.5 * cdot_real(&frame(xi), &line.v);
    Ok(LineChart { xi, eta })
}

pub fn from_chart(c: &LineChart) -> Result<OrientedLine> {
    if !(c.xi.re.is_finite() && c.xi.im.is_finite() && c.eta.re.is_finite() && c.eta.im.is_finite())
    {
        return Err(Error::InvalidInput("non-finite chart coordinates".into()));
    }
    let u = direction_from_xi(c.xi);
    let (e, f) = stereo_frame(c.xi);
    let v = e * c.eta.re + f * c.eta.im;
    // Rounding only; renormalise so the stored pair satisfies the invariants.
    let u = u / u.norm();
    let v = v - u * v.dot(&u);
    Ok(OrientedLine { u, v })
}

/// Differential of the chart: `(h, w) ↦ (dξ, dη)`.
pub fn chart_tangent(x: &LineTangent) -> Result<ChartTangent> {
    let line = &x.base;
    let u = line.u;
    let angle = south_pole_angle(&u);
    if angle < LineTolerances::default().polar_cap {
        return Err(Error::ChartDomain { angle });
    }
    let den = 1.0 + u.z;
    let xi = Complex64::new(u.x, u.y) / den;
    let dxi = Complex64::new(x.h.x, x.h.y) / den - Complex64::new(u.x, u.y) * x.h.z / (den * den);
    let v = line.v;
    let connection = xi * Complex64::new(v.x, -v.y) + v.z;
    let deta = 0.5 * cdot_real(&frame(xi), &x.w) - connection * dxi;
    Ok(ChartTangent { dxi, deta })
}

/// Inverse of [`chart_tangent`] at the line `line`.
pub fn tangent_from_chart(line: &OrientedLine, dc: &ChartTangent) -> Result<LineTangent> {
    let c = to_chart(line)?;
    let (e, f) = stereo_frame(c.xi);
    let h = e * dc.dxi.re + f * dc.dxi.im;
    let v = line.v;
    let connection = c.xi * Complex64::new(v.x, -v.y) + v.z;
    let k = dc.deta + connection * dc.dxi;
    let w = e * k.re + f * k.im;
    Ok(LineTangent { base: *line, h, w })
}

fn chart_basis(line: &OrientedLine) -> Result<[LineTangent; 4]> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    let z = Complex64::new(0.0, 0.0);
    Ok([
        tangent_from_chart(line, &ChartTangent::new(one, z))?,
        tangent_from_chart(line, &ChartTangent::new(i, z))?,
        tangent_from_chart(line, &ChartTangent::new(z, one))?,
        tangent_from_chart(line, &ChartTangent::new(z, i))?,
    ])
}

/// Components of `G` in the real chart coordinates `(Re ξ, Im ξ, Re η, Im η)`.
pub fn chart_metric(c: &LineChart) -> Result<Matrix4<f64>> {
    let line = from_chart(c)?;
    let b = chart_basis(&line)?;
    Ok(Matrix4::from_fn(|i, j| metric_g_unchecked(&b[i], &b[j])))
}

/// Components of `Ω` in the real chart coordinates.
pub fn chart_symplectic(c: &LineChart) -> Result<Matrix4<f64>> {
    let line = from_chart(c)?;
    let b = chart_basis(&line)?;
    Ok(Matrix4::from_fn(|i, j| omega_unchecked(&b[i], &b[j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn origin_line() {
        let l = line_from_point_dir(&Vec3::zeros(), &Vec3::z()).unwrap();
        assert_eq!(l.direction(), Vec3::z());
        assert_eq!(l.moment(), Vec3::zeros());
    }

    #[test]
    fn point_already_perpendicular() {
        let l = line_from_point_dir(&Vec3::x(), &Vec3::z()).unwrap();
        assert_eq!(l.moment(), Vec3::x());
        assert_eq!(point_on_line(&l, 0.0), Vec3::x());
    }

    #[test]
    fn moment_is_foot_of_perpendicular() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let l = line_from_point_dir(&p, &Vec3::z()).unwrap();
        assert_eq!(l.moment(), Vec3::new(1.0, 2.0, 0.0));
        assert_abs_diff_eq!(l.moment().dot(&l.direction()), 0.0);
        assert_abs_diff_eq!((point_on_line(&l, p.dot(&l.direction())) - p).norm(), 0.0);
        let l0 = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        assert_eq!(point_on_line(&l0, 5.0), Vec3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn non_unit_direction_rejected() {
        let e = line_from_point_dir(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.1)).unwrap_err();
        assert!(matches!(e, Error::InvalidInput(_)));
    }

    #[test]
    fn tangential_vdot_is_kept() {
        let l = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        let x = decompose_tangent(&l, &Vec3::x(), &Vec3::y()).unwrap();
        assert_eq!(x.h, Vec3::x());
        assert_eq!(x.w, Vec3::y());
    }

    #[test]
    fn reparameterisation_is_killed() {
        // Sliding the foot point along a fixed line leaves (u, v) unchanged.
        let u = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        let p0 = Vec3::new(0.3, -1.0, 0.5);
        let line_at = |t: f64| line_from_point_dir(&(p0 + u * t), &u).unwrap();
        let h = 1e-4;
        let vdot = (line_at(h).moment() - line_at(-h).moment()) / (2.0 * h);
        let x = decompose_tangent(&line_at(0.0), &Vec3::zeros(), &vdot).unwrap();
        assert!(x.w.norm() < 1e-12);
        assert_eq!(x.h, Vec3::zeros());
        // A raw vdot along u is not a TS² velocity when udot = 0.
        let l = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        assert!(decompose_tangent(&l, &Vec3::zeros(), &(Vec3::z() * 3.0)).is_err());
    }

    #[test]
    fn constraint_violation_rejected() {
        let l = OrientedLine::new(Vec3::z(), Vec3::x()).unwrap();
        // v.udot = 1 but vdot.u = 0.
        let e = decompose_tangent(&l, &Vec3::x(), &Vec3::zeros()).unwrap_err();
        assert!(matches!(e, Error::InvalidTangent { .. }));
        let e = decompose_tangent(&l, &Vec3::z(), &Vec3::zeros()).unwrap_err();
        assert!(matches!(e, Error::InvalidTangent { .. }));
    }

    #[test]
    fn j_is_quarter_turn() {
        let l = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        let x = LineTangent { base: l, h: Vec3::x(), w: Vec3::zeros() };
        let jx = apply_j(&x);
        assert_eq!(jx.h, Vec3::y());
        assert_eq!(jx.w, Vec3::zeros());
    }

    #[test]
    fn omega_on_basis() {
        let l = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        let x = LineTangent { base: l, h: Vec3::x(), w: Vec3::zeros() };
        let y = LineTangent { base: l, h: Vec3::zeros(), w: Vec3::x() };
        assert_eq!(omega(&x, &y).unwrap(), 1.0);
        assert_eq!(omega(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_bases_rejected() {
        let a = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        let b = OrientedLine::new(Vec3::z(), Vec3::x()).unwrap();
        let x = LineTangent::zero(a);
        let y = LineTangent::zero(b);
        assert!(omega(&x, &y).is_err());
        assert!(metric_g(&x, &y).is_err());
    }

    #[test]
    fn chart_special_points() {
        let north = OrientedLine::new(Vec3::z(), Vec3::zeros()).unwrap();
        let ch = to_chart(&north).unwrap();
        assert_eq!(ch.xi, c(0.0, 0.0));
        assert_eq!(ch.eta, c(0.0, 0.0));
        let eq = OrientedLine::new(Vec3::x(), Vec3::zeros()).unwrap();
        assert_abs_diff_eq!((to_chart(&eq).unwrap().xi - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn polar_cap_rejected() {
        let south = OrientedLine::new(-Vec3::z(), Vec3::x()).unwrap();
        assert!(matches!(to_chart(&south), Err(Error::ChartDomain { .. })));
        let a = 5e-4_f64;
        let near = OrientedLine::new(Vec3::new(a.sin(), 0.0, -a.cos()), Vec3::y()).unwrap();
        assert!(matches!(to_chart(&near), Err(Error::ChartDomain { .. })));
    }

    #[test]
    fn chart_metric_matches_closed_form() {
        // G = 4/(1+|ξ|²)² · [Im(c_Y conj dξ_X) + Im(c_X conj dξ_Y)],
        // c = dη − 2 conj(ξ) η dξ /(1+|ξ|²).
        let ch = LineChart::new(c(0.3, -0.4), c(0.7, 0.2));
        let m = chart_metric(&ch).unwrap();
        let d = 1.0 + ch.xi.norm_sqr();
        let basis = [(c(1.0, 0.0), c(0.0, 0.0)), (c(0.0, 1.0), c(0.0, 0.0)), (c(0.0, 0.0), c(1.0, 0.0)), (c(0.0, 0.0), c(0.0, 1.0))];
        for i in 0..4 {
            for j in 0..4 {
                let (dxi_x, deta_x) = basis[i];
                let (dxi_y, deta_y) = basis[j];
                let cx = deta_x - 2.0 * ch.xi.conj() * ch.eta * dxi_x / d;
                let cy = deta_y - 2.0 * ch.xi.conj() * ch.eta * dxi_y / d;
                let g = 4.0 / (d * d) * ((cy * dxi_x.conj()).im + (cx * dxi_y.conj()).im);
                assert_abs_diff_eq!(m[(i, j)], g, epsilon = 1e-13);
            }
        }
    }
}
