//! Short vectors in one or two dimensions.

use crate::scalar::Scalar;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

/// A vector of length 1 or 2 stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VecN<T> {
    c: [T; 2],
    dim: usize,
}

impl<T: Scalar> VecN<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        Self { c: [T::zero(); 2], dim }
    }

    pub fn new1(x: T) -> Self {
        Self { c: [x, T::zero()], dim: 1 }
    }

    pub fn new2(x: T, y: T) -> Self {
        Self { c: [x, y], dim: 2 }
    }

    pub fn from_slice(v: &[T]) -> Self {
        match v.len() {
            1 => Self::new1(v[0]),
            2 => Self::new2(v[0], v[1]),
            n => panic!("unsupported dimension {n}"),
        }
    }

    /// First coordinate unit vector.
    pub fn e1(dim: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.c[0] = T::one();
        v
    }

    /// Unit vector at angle `theta` (dimension 2) or the sign of `cos theta` (dimension 1).
    pub fn unit_at(dim: usize, theta: T) -> Self {
        if dim == 1 {
            Self::new1(if theta.cos() >= T::zero() { T::one() } else { -T::one() })
        } else {
            Self::new2(theta.cos(), theta.sin())
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.c[..self.dim]
    }

    #[inline]
    pub fn set(&mut self, i: usize, x: T) {
        assert!(i < self.dim);
        self.c[i] = x;
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        debug_assert_eq!(self.dim, o.dim);
        let mut s = self.c[0] * o.c[0];
        if self.dim == 2 {
            s = s + self.c[1] * o.c[1];
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        if self.dim == 1 {
            self.c[0].abs()
        } else {
            self.c[0].hypot(self.c[1])
        }
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() {
            Some(*self * (T::one() / n))
        } else {
            None
        }
    }

    /// Counter-clockwise quarter turn; only meaningful in two dimensions.
    pub fn perp(&self) -> Self {
        if self.dim == 1 {
            Self::zeros(1)
        } else {
            Self::new2(-self.c[1], self.c[0])
        }
    }

    /// Rotation by `theta`; the identity in one dimension.
    pub fn rotated(&self, theta: T) -> Self {
        if self.dim == 1 {
            *self
        } else {
            let (s, c) = theta.sin_cos();
            Self::new2(c * self.c[0] - s * self.c[1], s * self.c[0] + c * self.c[1])
        }
    }

    pub fn max_abs(&self) -> T {
        self.as_slice().iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

impl<T: Scalar> Index<usize> for VecN<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        assert!(i < self.dim);
        &self.c[i]
    }
}

impl<T: Scalar> Add for VecN<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        Self { c: [self.c[0] + o.c[0], self.c[1] + o.c[1]], dim: self.dim }
    }
}

impl<T: Scalar> AddAssign for VecN<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> Sub for VecN<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        Self { c: [self.c[0] - o.c[0], self.c[1] - o.c[1]], dim: self.dim }
    }
}

impl<T: Scalar> Neg for VecN<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { c: [-self.c[0], -self.c[1]], dim: self.dim }
    }
}

impl<T: Scalar> Mul<T> for VecN<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self { c: [self.c[0] * k, self.c[1] * k], dim: self.dim }
    }
}
