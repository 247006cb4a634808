//! Forward-mode automatic differentiation over small, fixed-size stencils.
//!
//! Every strain and separation measure in the crate is written once, generic
//! over [`Real`], and evaluated either on plain `f64` (value only), on
//! [`Dual`] (value and gradient) or on [`HyperDual`] (value, gradient and
//! full Hessian). The derivatives are exact up to floating-point rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction shared by `f64` and the dual number types.
pub trait Real:
    Copy
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
    fn cst(v: f64) -> Self;
    /// Primal value.
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// `ln(1 + x)`, accurate for small `x`.
    fn ln_1p(self) -> Self;
    fn abs(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn powi(self, n: i32) -> Self {
        let mut out = Self::cst(1.0);
        for _ in 0..n.unsigned_abs() {
            out = out * self;
        }
        if n < 0 {
            Self::cst(1.0) / out
        } else {
            out
        }
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// First-order dual number carrying a gradient with respect to `N` seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; N] }
    }

    /// Independent variable `i` with derivative `seed`.
    pub fn var(v: f64, i: usize, seed: f64) -> Self {
        let mut g = [0.0; N];
        g[i] = seed;
        Self { v, g }
    }

    #[inline]
    fn unary(self, f0: f64, f1: f64) -> Self {
        let mut g = self.g;
        for gi in g.iter_mut() {
            *gi *= f1;
        }
        Self { v: f0, g }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..N {
            self.g[i] += rhs.g[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..N {
            self.g[i] -= rhs.g[i];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = self.g[i] * rhs.v + rhs.g[i] * self.v;
        }
        Self { v: self.v * rhs.v, g }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = (self.g[i] - v * rhs.g[i]) * inv;
        }
        Self { v, g }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for gi in self.g.iter_mut() {
            *gi = -*gi;
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.v += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.v -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.v *= rhs;
        for gi in self.g.iter_mut() {
            *gi *= rhs;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.unary(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    fn ln_1p(self) -> Self {
        self.unary(self.v.ln_1p(), 1.0 / (1.0 + self.v))
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let fy = x.v / r2;
        let fx = -self.v / r2;
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = fy * self.g[i] + fx * x.g[i];
        }
        Self {
            v: self.v.atan2(x.v),
            g,
        }
    }
}

/// Second-order dual number carrying a gradient and a symmetric Hessian
/// with respect to `N` seeds. Only the upper triangle (`j >= i`) is
/// propagated; [`HyperDual::hessian`] returns the full matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    h: [[f64; N]; N],
    /// Derivatives known to vanish; lets mixed constant/variable
    /// operations skip the Hessian products.
    c: bool,
}

impl<const N: usize> HyperDual<N> {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
            c: true,
        }
    }

    /// Independent variable `i` whose derivative with respect to seed `i` is `seed`.
    pub fn var(v: f64, i: usize, seed: f64) -> Self {
        let mut out = Self::constant(v);
        out.g[i] = seed;
        out.c = false;
        out
    }

    pub fn hessian(&self) -> [[f64; N]; N] {
        let mut h = self.h;
        for i in 0..N {
            for j in 0..i {
                h[i][j] = h[j][i];
            }
        }
        h
    }

    #[inline]
    fn unary(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        if self.c {
            return out;
        }
        out.c = false;
        for i in 0..N {
            out.g[i] = f1 * self.g[i];
        }
        for i in 0..N {
            let gi = f2 * self.g[i];
            for j in i..N {
                out.h[i][j] = f1 * self.h[i][j] + gi * self.g[j];
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn binary(
        a: &Self,
        b: &Self,
        f0: f64,
        fa: f64,
        fb: f64,
        faa: f64,
        fab: f64,
        fbb: f64,
    ) -> Self {
        match (a.c, b.c) {
            (true, true) => return Self::constant(f0),
            (false, true) => return a.unary(f0, fa, faa),
            (true, false) => return b.unary(f0, fb, fbb),
            _ => {}
        }
        let mut out = Self::constant(f0);
        out.c = false;
        for i in 0..N {
            out.g[i] = fa * a.g[i] + fb * b.g[i];
        }
        for i in 0..N {
            for j in i..N {
                out.h[i][j] = fa * a.h[i][j]
                    + fb * b.h[i][j]
                    + faa * a.g[i] * a.g[j]
                    + fbb * b.g[i] * b.g[j]
                    + fab * (a.g[i] * b.g[j] + b.g[i] * a.g[j]);
            }
        }
        out
    }
}

impl<const N: usize> Add for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, mut rhs: Self) -> Self {
        if rhs.c {
            self.v += rhs.v;
            return self;
        }
        if self.c {
            rhs.v += self.v;
            return rhs;
        }
        self.v += rhs.v;
        for i in 0..N {
            self.g[i] += rhs.g[i];
            for j in i..N {
                self.h[i][j] += rhs.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        if rhs.c {
            self.v -= rhs.v;
            return self;
        }
        if self.c {
            return rhs * -1.0 + self.v;
        }
        self.v -= rhs.v;
        for i in 0..N {
            self.g[i] -= rhs.g[i];
            for j in i..N {
                self.h[i][j] -= rhs.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::binary(&self, &rhs, self.v * rhs.v, rhs.v, self.v, 0.0, 1.0, 0.0)
    }
}

impl<const N: usize> Div for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let q = self.v * inv;
        Self::binary(
            &self,
            &rhs,
            q,
            inv,
            -q * inv,
            0.0,
            -inv * inv,
            2.0 * q * inv * inv,
        )
    }
}

impl<const N: usize> Neg for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Add<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.v += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.v -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.v *= rhs;
        if self.c {
            return self;
        }
        for i in 0..N {
            self.g[i] *= rhs;
            for j in i..N {
                self.h[i][j] *= rhs;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const N: usize> Real for HyperDual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.unary(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.unary(self.v.ln(), inv, -inv * inv)
    }
    fn ln_1p(self) -> Self {
        let inv = 1.0 / (1.0 + self.v);
        self.unary(self.v.ln_1p(), inv, -inv * inv)
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.v, x.v);
        let r2 = y0 * y0 + x0 * x0;
        let r4 = r2 * r2;
        Self::binary(
            &self,
            &x,
            y0.atan2(x0),
            x0 / r2,
            -y0 / r2,
            -2.0 * x0 * y0 / r4,
            (y0 * y0 - x0 * x0) / r4,
            2.0 * x0 * y0 / r4,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check<F: Fn([f64; 2]) -> f64>(f: F, hd: HyperDual<2>, at: [f64; 2]) {
        let h = 1e-5;
        for i in 0..2 {
            let mut p = at;
            let mut m = at;
            p[i] += h;
            m[i] -= h;
            let d = (f(p) - f(m)) / (2.0 * h);
            assert!((d - hd.g[i]).abs() < 1e-7 * (1.0 + d.abs()), "grad {i}: {d} vs {}", hd.g[i]);
            for j in 0..2 {
                let mut pp = at;
                pp[i] += h;
                pp[j] += h;
                let mut pm = at;
                pm[i] += h;
                pm[j] -= h;
                let mut mp = at;
                mp[i] -= h;
                mp[j] += h;
                let mut mm = at;
                mm[i] -= h;
                mm[j] -= h;
                let d2 = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
                assert!(
                    (d2 - hd.hessian()[i][j]).abs() < 1e-4 * (1.0 + d2.abs()),
                    "hess {i}{j}: {d2} vs {}",
                    hd.hessian()[i][j]
                );
            }
        }
    }

    fn expr<T: Real>(x: T, y: T) -> T {
        (x * y + x.sin() * y.cos()).sqrt() / (y.exp() + 1.0) + y.atan2(x) * x.ln()
            - (x / y).abs() * 0.3
    }

    #[test]
    fn hyperdual_matches_finite_differences() {
        let at = [1.3, 0.7];
        let hd = expr(HyperDual::<2>::var(at[0], 0, 1.0), HyperDual::var(at[1], 1, 1.0));
        assert!((hd.v - expr(at[0], at[1])).abs() < 1e-15);
        fd_check(|p| expr(p[0], p[1]), hd, at);
    }

    #[test]
    fn dual_gradient_agrees_with_hyperdual() {
        let at = [0.9, 0.6];
        let d = expr(Dual::<2>::var(at[0], 0, 1.0), Dual::var(at[1], 1, 1.0));
        let hd = expr(HyperDual::<2>::var(at[0], 0, 1.0), HyperDual::var(at[1], 1, 1.0));
        for i in 0..2 {
            assert!((d.g[i] - hd.g[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let hd = expr(HyperDual::<2>::var(2.0, 0, 1.0), HyperDual::var(0.3, 1, 1.0));
        assert!((hd.hessian()[0][1] - hd.hessian()[1][0]).abs() < 1e-14);
    }
}
