//! Nested forward-mode dual numbers.
//!
//! A value of type `Dual<Dual<f64>>` carries the function value together with
//! two seeded first-order directional derivatives and their mixed second
//! derivative. Nesting `n` levels and seeding each level on one coordinate
//! yields an exact mixed partial derivative of order `n`, which is how kernel
//! derivatives are obtained for families without a closed-form derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and nested duals.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Independent variable with value `v`; `seeds[level]` says whether the
    /// dual level `level` (outermost first) differentiates along it.
    fn variable(v: f64, seeds: &[bool]) -> Self;
    fn value(self) -> f64;
    /// Coefficient of the product of every infinitesimal.
    fn mixed(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn asin(self) -> Self;
    fn scale(self, c: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn variable(v: f64, _seeds: &[bool]) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn mixed(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn asin(self) -> Self {
        f64::asin(self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual { re: T::constant(v), eps: T::constant(0.0) }
    }
    #[inline]
    fn variable(v: f64, seeds: &[bool]) -> Self {
        let (first, rest) = seeds.split_first().expect("one seed flag per dual level");
        Dual {
            re: T::variable(v, rest),
            eps: T::constant(if *first { 1.0 } else { 0.0 }),
        }
    }
    #[inline]
    fn value(self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn mixed(self) -> f64 {
        self.eps.mixed()
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual { re: s, eps: self.eps / s.scale(2.0) }
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, eps: self.eps * e }
    }
    #[inline]
    fn asin(self) -> Self {
        let d = (T::constant(1.0) - self.re * self.re).sqrt();
        Dual { re: self.re.asin(), eps: self.eps / d }
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual { re: self.re.scale(c), eps: self.eps.scale(c) }
    }
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;
pub type D5 = Dual<D4>;
pub type D6 = Dual<D5>;

/// Largest derivative order reachable through [`mixed_partial`].
pub const MAX_DEPTH: usize = 6;

/// Exact mixed partial derivative of `f` at `point`.
///
/// `directions` lists, one entry per differentiation, the coordinate index to
/// differentiate along; repeated indices give higher derivatives along the
/// same coordinate. Returns `None` when more than [`MAX_DEPTH`] derivatives
/// are requested.
pub fn mixed_partial<F>(f: &F, point: &[f64], directions: &[usize]) -> Option<f64>
where
    F: DualFn,
{
    fn run<S: Scalar, F: DualFn>(f: &F, point: &[f64], directions: &[usize]) -> f64 {
        let mut seeds = vec![false; directions.len()];
        let args: Vec<S> = point
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                for (s, &d) in seeds.iter_mut().zip(directions) {
                    *s = d == i;
                }
                S::variable(v, &seeds)
            })
            .collect();
        f.call(&args).mixed()
    }
    Some(match directions.len() {
        0 => run::<f64, F>(f, point, directions),
        1 => run::<D1, F>(f, point, directions),
        2 => run::<D2, F>(f, point, directions),
        3 => run::<D3, F>(f, point, directions),
        4 => run::<D4, F>(f, point, directions),
        5 => run::<D5, F>(f, point, directions),
        6 => run::<D6, F>(f, point, directions),
        _ => return None,
    })
}

/// A scalar function that can be evaluated on any [`Scalar`].
pub trait DualFn {
    fn call<S: Scalar>(&self, args: &[S]) -> S;
}
