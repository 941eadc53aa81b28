//! Surface maps with exact jets.

use super::{PointJet, SurfaceMap};
use crate::jet::Jet2;

/// `z = (s² + t²) / (2c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Paraboloid {
    pub c: f64,
}

impl SurfaceMap for Paraboloid {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let (x, y) = (Jet2::var_s(s), Jet2::var_t(t));
        [x, y, (x * x + y * y) / (2.0 * self.c)]
    }
}

/// `z = s²/2 + cosh t − 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexGraph;

impl SurfaceMap for ConvexGraph {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let (x, y) = (Jet2::var_s(s), Jet2::var_t(t));
        [x, y, x * x * 0.5 + y.cosh() - 1.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane;

impl SurfaceMap for Plane {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        [Jet2::var_s(s), Jet2::var_t(t), Jet2::constant(0.0)]
    }
}

/// Polar angle `s = θ`, azimuth `t = φ`; `∂_s σ × ∂_t σ` points outward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub radius: f64,
}

impl SurfaceMap for Sphere {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let (th, ph) = (Jet2::var_s(s), Jet2::var_t(t));
        let r = self.radius;
        let st = th.sin();
        [st * ph.cos() * r, st * ph.sin() * r, th.cos() * r]
    }
}

/// Axis z; `s = φ`, `t = z`; `∂_s σ × ∂_t σ` points outward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub radius: f64,
}

impl SurfaceMap for Cylinder {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let ph = Jet2::var_s(s);
        [ph.cos() * self.radius, ph.sin() * self.radius, Jet2::var_t(t)]
    }
}

/// Rotational graph over the open disc of radius `r0` whose meridian is
/// `r(z) = r0 tanh(√((a z + δ)² − δ²))`, written as
/// `z = h(r) = (√(artanh(r/r0)² + δ²) − δ) / a`.
///
/// `δ > 0` rounds the tip so `h` is smooth at the axis with `h'(0) = 0` and
/// `h''(0) = 1/(a δ r0²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cigar {
    pub r0: f64,
    pub a: f64,
    pub delta: f64,
}

impl SurfaceMap for Cigar {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        let (x, y) = (Jet2::var_s(s), Jet2::var_t(t));
        let p = (x * x + y * y) / (self.r0 * self.r0);
        let c = p.compose(artanh_sqrt_ratio(p.v));
        let b = p * c * c;
        let z = ((b + self.delta * self.delta).sqrt() - self.delta) / self.a;
        [x, y, z]
    }
}

/// `C(p) = artanh(√p)/√p` and its first three derivatives, `0 ≤ p < 1`.
pub fn artanh_sqrt_ratio(p: f64) -> [f64; 4] {
    if p < 0.25 {
        // Σ p^k / (2k+1), differentiated termwise.
        let mut out = [0.0; 4];
        let mut pk = [1.0; 4];
        for k in 0..80usize {
            let c = 1.0 / (2 * k + 1) as f64;
            let mut falling = 1.0;
            for (m, slot) in out.iter_mut().enumerate() {
                if k < m {
                    break;
                }
                *slot += c * falling * pk[m];
                falling *= (k - m) as f64;
            }
            for (m, q) in pk.iter_mut().enumerate() {
                if k >= m {
                    *q *= p;
                }
            }
        }
        out
    } else {
        let q = Jet2::var_s(p);
        let r = q.sqrt();
        let c = r.atanh() / r;
        [c.v, c.d1[0], c.d2[0], c.d3[0]]
    }
}
