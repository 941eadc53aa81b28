//! Convex surface families, cylindrical-graph profiles `r(z, φ)` with their
//! monotonicity and limit checks, and umbilic-gap sweeps over growing regions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::surfgeom::families::{Cigar, ConvexGraph, Cylinder, Paraboloid, Plane, Sphere};
use crate::surfgeom::{principal_curvatures, Domain, Orientation, ParamSurface, PointJet, SurfaceMap};

/// A tube around the z-axis written as `r = r(z, φ)`, `z ≥ 0`.
pub trait ToponogovProfile: Send + Sync + fmt::Debug {
    /// `r` evaluated on jets of `z` and `φ`.
    fn r_jet(&self, z: Jet2, phi: Jet2) -> Jet2;

    /// Limiting radius as `z → ∞` (`inf` when unbounded).
    fn r0(&self, phi: f64) -> f64;

    /// Length scale of the profile, used for the default sampling range.
    fn scale(&self) -> f64 {
        1.0
    }

    fn r(&self, z: f64, phi: f64) -> f64 {
        self.r_jet(Jet2::constant(z), Jet2::constant(phi)).v
    }

    /// `(r, r_z, r_zz)` at one sample.
    fn radial(&self, z: f64, phi: f64) -> (f64, f64, f64) {
        let j = self.r_jet(Jet2::var_s(z), Jet2::constant(phi));
        (j.v, j.ds(), j.dss())
    }
}

/// `r = r0 (1 + squash·cos 2φ) · tanh(√((a z + δ)² − δ²))`; `δ = 0` gives
/// `r0 tanh(a z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CigarProfile {
    pub r0: f64,
    pub a: f64,
    pub delta: f64,
    pub squash: f64,
}

impl Default for CigarProfile {
    fn default() -> Self {
        Self { r0: 1.0, a: 1.0, delta: 0.0, squash: 0.0 }
    }
}

impl ToponogovProfile for CigarProfile {
    fn r_jet(&self, z: Jet2, phi: Jet2) -> Jet2 {
        let g = if self.delta == 0.0 {
            z * self.a
        } else {
            let w = z * self.a + self.delta;
            (w * w - self.delta * self.delta).sqrt()
        };
        (phi * 2.0).cos() * (self.r0 * self.squash) * g.tanh() + g.tanh() * self.r0
    }

    fn r0(&self, phi: f64) -> f64 {
        self.r0 * (1.0 + self.squash * (2.0 * phi).cos())
    }

    fn scale(&self) -> f64 {
        1.0 / self.a
    }
}

/// `r = r0 (1 + z)`: a cone, monotone but unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProfile {
    pub r0: f64,
}

impl ToponogovProfile for LinearProfile {
    fn r_jet(&self, z: Jet2, _phi: Jet2) -> Jet2 {
        (z + 1.0) * self.r0
    }

    fn r0(&self, _phi: f64) -> f64 {
        f64::INFINITY
    }
}

/// `r = r0 sin z`: bounded but oscillating.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineProfile {
    pub r0: f64,
}

impl ToponogovProfile for SineProfile {
    fn r_jet(&self, z: Jet2, _phi: Jet2) -> Jet2 {
        z.sin() * self.r0
    }

    fn r0(&self, _phi: f64) -> f64 {
        self.r0
    }
}

/// `σ(z, φ) = (r cos φ, r sin φ, z)` with `s = z`, `t = φ`. The positive
/// orientation points toward the axis.
#[derive(Clone, Debug)]
pub struct ProfileSurface(pub Arc<dyn ToponogovProfile>);

impl SurfaceMap for ProfileSurface {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let (z, phi) = (Jet2::var_s(s), Jet2::var_t(t));
        let r = self.0.r_jet(z, phi);
        [r * phi.cos(), r * phi.sin(), z]
    }
}

pub fn profile_surface(profile: Arc<dyn ToponogovProfile>, z_max: f64) -> ParamSurface {
    ParamSurface::new(
        format!("{profile:?}"),
        Domain::Rect { s0: 0.0, s1: z_max, t0: 0.0, t1: 2.0 * std::f64::consts::PI },
        Orientation::Positive,
        Arc::new(ProfileSurface(profile)),
    )
}

/// Family names accepted by [`make_builtin`].
pub const FAMILIES: [&str; 6] = ["paraboloid", "cigar", "convex_graph", "sphere", "cylinder", "plane"];

/// Builds a named family. Parameters (defaults in brackets):
///
/// * `paraboloid`: `c` [1], `z = (x² + y²)/(2c)`, upward normal.
/// * `cigar`: `r0` [1], `a` [1], `delta` [0.5], graph over the disc `r < r0`
///   with meridian `r0 tanh(√((a z + δ)² − δ²))`, upward normal.
/// * `convex_graph`: `z = x²/2 + cosh y − 1`, upward normal.
/// * `sphere`: `radius` [1], `(θ, φ)` chart, inward normal.
/// * `cylinder`: `radius` [1], `(φ, z)` chart, inward normal.
/// * `plane`: `z = 0`, upward normal.
///
/// Normals point to the convex side, so principal curvatures are `≥ 0`.
pub fn make_builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<ParamSurface> {
    let allowed: &[&str] = match name {
        "paraboloid" => &["c"],
        "cigar" => &["r0", "a", "delta"],
        "sphere" | "cylinder" => &["radius"],
        "convex_graph" | "plane" => &[],
        _ => return Err(Error::UnknownFamily(name.to_string())),
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParams(format!("`{k}` is not a parameter of `{name}` (expected one of {allowed:?})")));
    }
    let get = |k: &str, default: f64| -> Result<f64> {
        let v = params.get(k).copied().unwrap_or(default);
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::InvalidParams(format!("`{k}` must be finite and positive, got {v}")))
        }
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let surface = match name {
        "paraboloid" => {
            ParamSurface::new(name, Domain::plane(), Orientation::Positive, Arc::new(Paraboloid { c: get("c", 1.0)? }))
        }
        "cigar" => {
            let c = Cigar { r0: get("r0", 1.0)?, a: get("a", 1.0)?, delta: get("delta", 0.5)? };
            ParamSurface::new(name, Domain::Disc { cs: 0.0, ct: 0.0, radius: c.r0 }, Orientation::Positive, Arc::new(c))
        }
        "convex_graph" => ParamSurface::new(name, Domain::plane(), Orientation::Positive, Arc::new(ConvexGraph)),
        "sphere" => ParamSurface::new(
            name,
            Domain::Rect { s0: 0.0, s1: std::f64::consts::PI, t0: 0.0, t1: two_pi },
            Orientation::Negative,
            Arc::new(Sphere { radius: get("radius", 1.0)? }),
        ),
        "cylinder" => ParamSurface::new(
            name,
            Domain::Rect { s0: 0.0, s1: two_pi, t0: f64::NEG_INFINITY, t1: f64::INFINITY },
            Orientation::Negative,
            Arc::new(Cylinder { radius: get("radius", 1.0)? }),
        ),
        _ => ParamSurface::new(name, Domain::plane(), Orientation::Positive, Arc::new(Plane)),
    };
    Ok(surface)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileGrid {
    /// Upper end of the sampled range; `None` means 20 profile scales.
    pub z_max: Option<f64>,
    pub nz: usize,
    pub nphi: usize,
    /// Slack on `r_z ≥ 0` and `r_zz ≤ 0`.
    pub slope_tol: f64,
    /// Slack on `r ≤ r0` and on the limit `|r(Z_max) − r0|`, `r_z(Z_max)`.
    pub limit_tol: f64,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        Self { z_max: None, nz: 401, nphi: 16, slope_tol: 1e-9, limit_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionResult {
    pub name: String,
    pub pass: bool,
    /// Value that most violates (or comes closest to violating) the condition.
    pub worst: f64,
    pub worst_at: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileReport {
    pub z_max: f64,
    pub monotone: ConditionResult,
    pub concave: ConditionResult,
    pub bounded: ConditionResult,
    pub limit: ConditionResult,
    /// `max_φ |r(Z_max, φ) − r0(φ)|`.
    pub limit_gap: f64,
    /// `max_φ |r_z(Z_max, φ)|`.
    pub slope_at_z_max: f64,
}

impl ProfileReport {
    pub fn all_pass(&self) -> bool {
        self.monotone.pass && self.concave.pass && self.bounded.pass && self.limit.pass
    }

    pub fn conditions(&self) -> [&ConditionResult; 4] {
        [&self.monotone, &self.concave, &self.bounded, &self.limit]
    }
}

/// Checks `r_z ≥ 0`, `r_zz ≤ 0` (for `z > 0`), `r ≤ r0 < ∞`, and that `r`
/// has settled at `r0` with vanishing slope by `Z_max`.
pub fn profile_check(profile: &dyn ToponogovProfile, grid: &ProfileGrid) -> ProfileReport {
    let z_max = grid.z_max.unwrap_or(20.0 * profile.scale());
    let nz = grid.nz.max(2);
    let nphi = grid.nphi.max(1);
    let phis: Vec<f64> = (0..nphi).map(|j| 2.0 * std::f64::consts::PI * j as f64 / nphi as f64).collect();
    // Worst values: min r_z, max r_zz, max (r − r0).
    let mut mono = (f64::INFINITY, (0.0, 0.0));
    let mut conc = (f64::NEG_INFINITY, (0.0, 0.0));
    let mut bound = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in 1..nz {
        let z = z_max * i as f64 / (nz - 1) as f64;
        for &phi in &phis {
            let (r, rz, rzz) = profile.radial(z, phi);
            let worse = |cand: f64, cur: f64, lower: bool| if lower { cand < cur || cand.is_nan() } else { cand > cur || cand.is_nan() };
            if worse(rz, mono.0, true) {
                mono = (rz, (z, phi));
            }
            if worse(rzz, conc.0, false) {
                conc = (rzz, (z, phi));
            }
            let excess = r - profile.r0(phi);
            if worse(excess, bound.0, false) {
                bound = (excess, (z, phi));
            }
        }
    }
    let mut limit_gap: f64 = 0.0;
    let mut slope: f64 = 0.0;
    let mut limit_at = (z_max, 0.0);
    for &phi in &phis {
        let (r, rz, _) = profile.radial(z_max, phi);
        let gap = (r - profile.r0(phi)).abs();
        if !(gap <= limit_gap) {
            limit_gap = gap;
            limit_at = (z_max, phi);
        }
        slope = slope.max(rz.abs());
    }
    let r0_finite = phis.iter().all(|&p| profile.r0(p).is_finite());
    let tol = grid.slope_tol;
    let lt = grid.limit_tol;
    ProfileReport {
        z_max,
        monotone: ConditionResult { name: "r_z >= 0".into(), pass: mono.0 >= -tol, worst: mono.0, worst_at: mono.1 },
        concave: ConditionResult { name: "r_zz <= 0".into(), pass: conc.0 <= tol, worst: conc.0, worst_at: conc.1 },
        bounded: ConditionResult {
            name: "r <= r0 < inf".into(),
            pass: r0_finite && bound.0 <= lt,
            worst: bound.0,
            worst_at: bound.1,
        },
        limit: ConditionResult {
            name: "r -> r0, r_z -> 0".into(),
            pass: limit_gap <= lt && slope <= lt,
            worst: limit_gap.max(slope),
            worst_at: limit_at,
        },
        limit_gap,
        slope_at_z_max: slope,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Centre of the parameter balls.
    pub centre: (f64, f64),
    /// Radius of an excluded inner disc (nested annuli instead of balls).
    pub inner_radius: f64,
    /// Initial polar grid: rings × spokes.
    pub rings: usize,
    pub spokes: usize,
    /// Grid doubling stops once the minimum changes by less than this (relative).
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { centre: (0.0, 0.0), inner_radius: 0.0, rings: 32, spokes: 64, rel_tol: 1e-3, max_refinements: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapTrend {
    /// The minimum reaches zero (an umbilic is sampled).
    Vanishes,
    /// Positive minima with a negative log–log slope.
    Decays,
    /// Positive minima that do not decrease with the region size.
    BoundedBelow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapSweepResult {
    pub radii: Vec<f64>,
    /// Minimum of the gap over the region of each radius (running minimum
    /// over the nested regions, hence non-increasing).
    pub min_gap: Vec<f64>,
    /// Minimum found on each region's own grid.
    pub region_min: Vec<f64>,
    /// Location of the running minimum.
    pub argmin: Vec<(f64, f64)>,
    /// Samples skipped because the curvature could not be evaluated.
    pub skipped: usize,
    /// Slope of `log min_gap` against `log R` (positive minima only).
    pub slope: Option<f64>,
    pub trend: GapTrend,
}

/// Minimum umbilic gap over nested parameter balls (or annuli) of the given
/// radii, which must be increasing.
pub fn gap_sweep(surface: &ParamSurface, radii: &[f64], opts: &SweepOptions) -> Result<GapSweepResult> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > opts.inner_radius) {
        return Err(Error::InvalidInput("sweep radii must be increasing and exceed the inner radius".into()));
    }
    if opts.rings < 1 || opts.spokes < 3 {
        return Err(Error::InvalidInput("sweep grid needs at least 1 ring and 3 spokes".into()));
    }
    let mut region_min = Vec::with_capacity(radii.len());
    let mut region_arg = Vec::with_capacity(radii.len());
    let mut skipped = 0;
    for &r in radii {
        let (m, at, sk) = region_minimum(surface, r, opts)?;
        region_min.push(m);
        region_arg.push(at);
        skipped += sk;
    }
    let mut min_gap = Vec::with_capacity(radii.len());
    let mut argmin = Vec::with_capacity(radii.len());
    let mut best = (f64::INFINITY, (f64::NAN, f64::NAN));
    for (m, at) in region_min.iter().zip(&region_arg) {
        if *m < best.0 {
            best = (*m, *at);
        }
        min_gap.push(best.0);
        argmin.push(best.1);
    }
    let pts: Vec<(f64, f64)> =
        radii.iter().zip(&min_gap).filter(|(_, g)| **g > 0.0).map(|(r, g)| (r.ln(), g.ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let trend = if min_gap.contains(&0.0) || min_gap.last().is_some_and(|&g| g < 1e-12) {
        GapTrend::Vanishes
    } else if slope.is_some_and(|s| s < -1e-3) {
        GapTrend::Decays
    } else {
        GapTrend::BoundedBelow
    };
    Ok(GapSweepResult { radii: radii.to_vec(), min_gap, region_min, argmin, skipped, slope, trend })
}

fn region_minimum(surface: &ParamSurface, radius: f64, opts: &SweepOptions) -> Result<(f64, (f64, f64), usize)> {
    let (cs, ct) = opts.centre;
    let r_in = opts.inner_radius;
    let eval = |s: f64, t: f64| -> Option<f64> {
        if !surface.domain().contains(s, t) {
            return None;
        }
        principal_curvatures(surface, s, t).ok().map(|k| k.gap).filter(|g| g.is_finite())
    };
    let sample = |rings: usize, spokes: usize| -> (f64, (f64, f64), usize) {
        let pts: Vec<(f64, f64)> = std::iter::once((cs, ct))
            .filter(|_| r_in == 0.0)
            .chain((0..=rings).flat_map(|i| {
                let r = r_in + (radius - r_in) * i as f64 / rings as f64;
                (0..spokes).filter_map(move |j| {
                    if r == 0.0 {
                        return None;
                    }
                    let th = 2.0 * std::f64::consts::PI * j as f64 / spokes as f64;
                    Some((cs + r * th.cos(), ct + r * th.sin()))
                })
            }))
            .collect();
        pts.par_iter()
            .map(|&(s, t)| match eval(s, t) {
                Some(g) => (g, (s, t), 0),
                None => (f64::INFINITY, (s, t), 1),
            })
            .reduce(
                || (f64::INFINITY, (f64::NAN, f64::NAN), 0),
                |a, b| {
                    let sk = a.2 + b.2;
                    // Ties resolve to the lexicographically smaller point for determinism.
                    if b.0 < a.0 || (b.0 == a.0 && (b.1 .0, b.1 .1) < (a.1 .0, a.1 .1)) {
                        (b.0, b.1, sk)
                    } else {
                        (a.0, a.1, sk)
                    }
                },
            )
    };
    let (mut rings, mut spokes) = (opts.rings, opts.spokes);
    let mut best = sample(rings, spokes);
    for _ in 0..opts.max_refinements {
        if best.0 == 0.0 {
            break;
        }
        rings *= 2;
        spokes *= 2;
        let next = sample(rings, spokes);
        let change = (best.0 - next.0).abs() / best.0.abs().max(1e-300);
        if next.0 < best.0 {
            best = (next.0, next.1, next.2);
        } else {
            best.2 = next.2;
        }
        if change < opts.rel_tol {
            break;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::InvalidInput(format!("no evaluable samples in the region of radius {radius}")));
    }
    // Compass polish inside the region.
    let inside = |s: f64, t: f64| {
        let r = (s - cs).hypot(t - ct);
        r >= r_in && r <= radius
    };
    let (mut g, (mut s, mut t)) = (best.0, best.1);
    let mut step = (radius - r_in) / rings as f64;
    while step > 1e-9 * radius && g > 0.0 {
        let mut moved = false;
        for (ds, dt) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let (ns, nt) = (s + ds * step, t + dt * step);
            if let (true, Some(ng)) = (inside(ns, nt), eval(ns, nt)) {
                if ng < g {
                    (g, s, t) = (ng, ns, nt);
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((g, (s, t), best.2))
}
