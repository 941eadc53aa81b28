//! Third-order Taylor jets in two variables.
//!
//! A [`Jet2`] carries a value together with all partial derivatives up to
//! order three with respect to two parameters `(s, t)`. Arithmetic and the
//! elementary functions propagate the derivatives exactly, which is how the
//! builtin surface families provide analytic jets without hand-written
//! derivative formulas.
//!
//! Index conventions: second derivatives are stored as `[ss, st, tt]` and
//! third derivatives as `[sss, sst, stt, ttt]`, i.e. position = number of `t`
//! factors.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: [f64; 2],
    pub d2: [f64; 3],
    pub d3: [f64; 4],
}

#[inline]
fn i2(i: usize, j: usize) -> usize {
    i + j
}

#[inline]
fn i3(i: usize, j: usize, k: usize) -> usize {
    i + j + k
}

// Representative index triples for each stored third-order slot.
const TRIPLES: [(usize, usize, usize); 4] = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)];
const PAIRS: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

impl Jet2 {
    pub const fn constant(v: f64) -> Self {
        Self { v, d1: [0.0; 2], d2: [0.0; 3], d3: [0.0; 4] }
    }

    /// The coordinate `s` evaluated at `s`.
    pub const fn var_s(s: f64) -> Self {
        Self { v: s, d1: [1.0, 0.0], d2: [0.0; 3], d3: [0.0; 4] }
    }

    /// The coordinate `t` evaluated at `t`.
    pub const fn var_t(t: f64) -> Self {
        Self { v: t, d1: [0.0, 1.0], d2: [0.0; 3], d3: [0.0; 4] }
    }

    pub fn ds(&self) -> f64 {
        self.d1[0]
    }
    pub fn dt(&self) -> f64 {
        self.d1[1]
    }
    pub fn dss(&self) -> f64 {
        self.d2[0]
    }
    pub fn dst(&self) -> f64 {
        self.d2[1]
    }
    pub fn dtt(&self) -> f64 {
        self.d2[2]
    }

    /// Second partial with respect to parameters `i`, `j` (0 = s, 1 = t).
    pub fn d2_at(&self, i: usize, j: usize) -> f64 {
        self.d2[i2(i, j)]
    }

    pub fn d3_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.d3[i3(i, j, k)]
    }

    /// Chain rule: `f(self)` where `f` is given as `[f, f', f'', f''']`
    /// evaluated at `self.v`.
    pub fn compose(&self, f: [f64; 4]) -> Self {
        let g = self;
        let mut out = Self::constant(f[0]);
        for i in 0..2 {
            out.d1[i] = f[1] * g.d1[i];
        }
        for (slot, &(i, j)) in PAIRS.iter().enumerate() {
            out.d2[slot] = f[2] * g.d1[i] * g.d1[j] + f[1] * g.d2_at(i, j);
        }
        for (slot, &(i, j, k)) in TRIPLES.iter().enumerate() {
            out.d3[slot] = f[3] * g.d1[i] * g.d1[j] * g.d1[k]
                + f[2]
                    * (g.d2_at(i, j) * g.d1[k]
                        + g.d2_at(i, k) * g.d1[j]
                        + g.d2_at(j, k) * g.d1[i])
                + f[1] * g.d3_at(i, j, k);
        }
        out
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(self) -> Self {
        let x = self.v;
        let r = x.sqrt();
        self.compose([r, 0.5 / r, -0.25 / (x * r), 0.375 / (x * x * r)])
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose([e; 4])
    }

    pub fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.compose([self.v.ln(), r, -r * r, 2.0 * r * r * r])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn sinh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose([s, c, s, c])
    }

    pub fn cosh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose([c, s, c, s])
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let sech2 = 1.0 - t * t;
        self.compose([t, sech2, -2.0 * t * sech2, sech2 * (6.0 * t * t - 2.0)])
    }

    pub fn atanh(self) -> Self {
        let x = self.v;
        let q = 1.0 / (1.0 - x * x);
        self.compose([x.atanh(), q, 2.0 * x * q * q, (2.0 + 6.0 * x * x) * q * q * q])
    }

    pub fn powi(self, n: i32) -> Self {
        let x = self.v;
        let nf = f64::from(n);
        let term = |k: i32, coef: f64| if coef == 0.0 { 0.0 } else { coef * x.powi(n - k) };
        self.compose([
            x.powi(n),
            term(1, nf),
            term(2, nf * (nf - 1.0)),
            term(3, nf * (nf - 1.0) * (nf - 2.0)),
        ])
    }

    pub fn powf(self, a: f64) -> Self {
        let x = self.v;
        self.compose([
            x.powf(a),
            a * x.powf(a - 1.0),
            a * (a - 1.0) * x.powf(a - 2.0),
            a * (a - 1.0) * (a - 2.0) * x.powf(a - 3.0),
        ])
    }

    /// General power `self^other` via `exp(other * ln self)`.
    pub fn pow(self, other: Jet2) -> Self {
        (other * self.ln()).exp()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.v += o.v;
        r.d1.iter_mut().zip(o.d1).for_each(|(a, b)| *a += b);
        r.d2.iter_mut().zip(o.d2).for_each(|(a, b)| *a += b);
        r.d3.iter_mut().zip(o.d3).for_each(|(a, b)| *a += b);
        r
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self * -1.0
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, b: Jet2) -> Jet2 {
        let a = self;
        let mut r = Jet2::constant(a.v * b.v);
        for i in 0..2 {
            r.d1[i] = a.d1[i] * b.v + a.v * b.d1[i];
        }
        for (slot, &(i, j)) in PAIRS.iter().enumerate() {
            r.d2[slot] = a.d2_at(i, j) * b.v
                + a.d1[i] * b.d1[j]
                + a.d1[j] * b.d1[i]
                + a.v * b.d2_at(i, j);
        }
        for (slot, &(i, j, k)) in TRIPLES.iter().enumerate() {
            r.d3[slot] = a.d3_at(i, j, k) * b.v
                + a.d2_at(i, j) * b.d1[k]
                + a.d2_at(i, k) * b.d1[j]
                + a.d2_at(j, k) * b.d1[i]
                + a.d1[i] * b.d2_at(j, k)
                + a.d1[j] * b.d2_at(i, k)
                + a.d1[k] * b.d2_at(i, j)
                + a.v * b.d3_at(i, j, k);
        }
        r
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, b: Jet2) -> Jet2 {
        self * b.recip()
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, c: f64) -> Jet2 {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, c: f64) -> Jet2 {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        Jet2 {
            v: self.v * c,
            d1: self.d1.map(|x| x * c),
            d2: self.d2.map(|x| x * c),
            d3: self.d3.map(|x| x * c),
        }
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    fn div(self, c: f64) -> Jet2 {
        self * (1.0 / c)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j * self
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    fn add(self, j: Jet2) -> Jet2 {
        j + self
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    fn sub(self, j: Jet2) -> Jet2 {
        -j + self
    }
}
