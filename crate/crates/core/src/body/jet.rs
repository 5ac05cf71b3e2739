//! Forward-mode dual numbers carrying the gradient with respect to every body
//! parameter.

use std::ops::{Add, Mul, Neg, Sub};

use super::PARAM_DIM;

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn value(self) -> f64;
    fn scale(self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn value(self) -> f64 {
        self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; PARAM_DIM],
}

impl Jet {
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; PARAM_DIM];
        d[i] = 1.0;
        Jet { v, d }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut d = [0.0; PARAM_DIM];
        for i in 0..PARAM_DIM {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Jet { v: self.v * o.v, d }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet {
            v,
            d: [0.0; PARAM_DIM],
        }
    }
    fn sin(self) -> Self {
        let c = self.v.cos();
        let mut out = self.scale(c);
        out.v = self.v.sin();
        out
    }
    fn cos(self) -> Self {
        let s = -self.v.sin();
        let mut out = self.scale(s);
        out.v = self.v.cos();
        out
    }
    fn value(self) -> f64 {
        self.v
    }
    fn scale(mut self, k: f64) -> Self {
        self.v *= k;
        for a in self.d.iter_mut() {
            *a *= k;
        }
        self
    }
}

pub type Mat3<S> = [[S; 3]; 3];

#[allow(dead_code)]
pub fn identity<S: Scalar>() -> Mat3<S> {
    let o = S::cst(0.0);
    let l = S::cst(1.0);
    [[l, o, o], [o, l, o], [o, o, l]]
}

/// Rotation by `angle` about coordinate axis `axis`.
pub fn axis_rotation<S: Scalar>(axis: usize, angle: S) -> Mat3<S> {
    let (s, c) = (angle.sin(), angle.cos());
    let o = S::cst(0.0);
    let l = S::cst(1.0);
    match axis {
        0 => [[l, o, o], [o, c, -s], [o, s, c]],
        1 => [[c, o, s], [o, l, o], [-s, o, c]],
        _ => [[c, -s, o], [s, c, o], [o, o, l]],
    }
}

pub fn mat_mul<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::cst(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec<S: Scalar>(a: &Mat3<S>, v: &[S; 3]) -> [S; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}
