//! Scalar abstraction and second-order multivariate jets.
//!
//! Vector fields are written once over [`Scalar`] and evaluated either on
//! `f64` (integration) or on [`Jet`] (exact first and second derivatives for
//! the invariance-equation oracle).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the polynomial-plus-power vector fields.
pub trait Scalar:
    Clone
    + Debug
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    fn powf(&self, p: f64) -> Self;

    fn sq(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }

    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
}

/// Truncated Taylor jet: value, gradient and full Hessian in `n` variables.
///
/// An empty gradient marks a constant, so constants can be built without
/// knowing `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    v: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: Vec::new(),
            h: Vec::new(),
        }
    }

    /// The `i`-th of `n` independent variables evaluated at `v`.
    pub fn variable(n: usize, i: usize, v: f64) -> Self {
        assert!(i < n, "variable index out of range");
        let mut g = vec![0.0; n];
        g[i] = 1.0;
        Jet {
            v,
            g,
            h: vec![0.0; n * n],
        }
    }

    /// Independent variables for every coordinate of `x`.
    pub fn seed(x: &[f64]) -> Vec<Jet> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &xi)| Jet::variable(n, i, xi))
            .collect()
    }

    pub fn nvars(&self) -> usize {
        self.g.len()
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.g.get(i).copied().unwrap_or(0.0)
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let n = self.g.len();
        if n == 0 {
            0.0
        } else {
            self.h[i * n + j]
        }
    }

    fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.g.len();
        if n == 0 {
            return Jet::constant(f0);
        }
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = f1 * self.h[i * n + j] + f2 * self.g[i] * self.g[j];
            }
        }
        let g = self.g.iter().map(|gi| f1 * gi).collect();
        Jet { v: f0, g, h }
    }

    fn recip(self) -> Jet {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    fn scale(mut self, s: f64) -> Jet {
        self.v *= s;
        self.g.iter_mut().for_each(|x| *x *= s);
        self.h.iter_mut().for_each(|x| *x *= s);
        self
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

fn zip_lin(a: Jet, b: Jet, sb: f64) -> Jet {
    match (a.g.is_empty(), b.g.is_empty()) {
        (_, true) => Jet {
            v: a.v + sb * b.v,
            ..a
        },
        (true, false) => {
            let mut r = b.scale(sb);
            r.v += a.v;
            r
        }
        (false, false) => {
            let mut r = a;
            r.v += sb * b.v;
            r.g.iter_mut().zip(&b.g).for_each(|(x, y)| *x += sb * y);
            r.h.iter_mut().zip(&b.h).for_each(|(x, y)| *x += sb * y);
            r
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        zip_lin(self, rhs, 1.0)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        zip_lin(self, rhs, -1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if self.g.is_empty() {
            return rhs.scale(self.v);
        }
        if rhs.g.is_empty() {
            return self.scale(rhs.v);
        }
        let n = self.g.len();
        let (a, b) = (&self, &rhs);
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = a.v * b.h[i * n + j]
                    + b.v * a.h[i * n + j]
                    + a.g[i] * b.g[j]
                    + a.g[j] * b.g[i];
            }
        }
        let g = (0..n).map(|i| a.v * b.g[i] + b.v * a.g[i]).collect();
        Jet { v: a.v * b.v, g, h }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        if rhs.g.is_empty() {
            return self.scale(1.0 / rhs.v);
        }
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.v += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.v -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.v
    }

    fn powf(&self, p: f64) -> Self {
        let x = self.v;
        let f0 = x.powf(p);
        let f1 = p * x.powf(p - 1.0);
        let f2 = p * (p - 1.0) * x.powf(p - 2.0);
        self.clone().chain(f0, f1, f2)
    }
}
