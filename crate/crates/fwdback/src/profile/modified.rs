//! Monotone surrogate of a non-Fourier profile.

use super::{radial_jacobian, Profile, ProfileError};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::vector::VecN;

const DOMINANCE_SAMPLES: usize = 10_000;
const MAX_HALVINGS: usize = 20;

/// `σ̃`: linear near 0, strictly above `σ` below the joint `s_+(r_cut)`,
/// equal to `σ` from the joint on.
///
/// The derivative of `σ̃` is piecewise linear below the joint: constant
/// `κ` on `[0, s_a]`, then linear to `g_m` at `s_m`, then linear to
/// `σ'(joint)`. `g_m` is fixed by `σ̃(joint) = r_cut`, so `σ̃` is C¹.
#[derive(Clone, Debug)]
pub struct ModifiedProfile<T: Scalar> {
    base: Profile<T>,
    pub r_cut: T,
    /// `s_+(r_cut)`.
    pub joint: T,
    /// Slope of the linear segment `[0, s_a]`.
    pub linear_slope: T,
    pub s_a: T,
    pub s_m: T,
    pub g_m: T,
    pub joint_slope: T,
    pub theta_lo: T,
    pub theta_hi: T,
}

impl<T: Scalar> ModifiedProfile<T> {
    pub fn new(base: &Profile<T>, r_cut: T) -> Result<Self, ProfileError> {
        let joint = base.s_plus_of(r_cut)?;
        let joint_slope = base.sigma_prime(joint);
        let two = T::c(2.0);
        let half = T::c(0.5);
        let kappa0 = joint_slope.min(r_cut / (two * joint));
        let s_a = joint / T::c(4.0);
        let mut pinch = (joint.to_f64_lossy(), "no admissible interior slope".to_string());
        for k in 0..=MAX_HALVINGS {
            let kappa = kappa0 / T::c(2f64.powi(k as i32));
            let mut s_m = (base.s_zero + joint) * half;
            if s_m <= s_a {
                s_m = (s_a + joint) * half;
            }
            let mut g_m = T::zero();
            for _ in 0..60 {
                g_m = (r_cut - kappa * s_a - kappa * (s_m - s_a) * half - joint_slope * (joint - s_m) * half)
                    / ((joint - s_a) * half);
                if g_m > T::zero() {
                    break;
                }
                s_m = (s_m + joint) * half;
            }
            if !(g_m > T::zero()) {
                continue;
            }
            let cand = Self {
                base: base.clone(),
                r_cut,
                joint,
                linear_slope: kappa,
                s_a,
                s_m,
                g_m,
                joint_slope,
                theta_lo: T::zero(),
                theta_hi: T::zero(),
            };
            match cand.dominance_gap() {
                Ok(_) => return cand.with_bounds(),
                Err(at) => pinch = (at.to_f64_lossy(), "sigma_tilde does not stay above sigma".into()),
            }
        }
        Err(ProfileError::ConstructionFailed { pinch: pinch.0, reason: pinch.1 })
    }

    fn with_bounds(mut self) -> Result<Self, ProfileError> {
        let mut lo = self.linear_slope.min(self.g_m).min(self.joint_slope);
        let mut hi = self.linear_slope.max(self.g_m).max(self.joint_slope);
        let b = &self.base;
        let top = b.s_max.max(self.joint);
        for i in 0..=1000 {
            let s = self.joint + (top - self.joint) * T::from_usize(i).unwrap() / T::c(1000.0);
            let d = b.sigma_prime(s);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        lo = lo.min(b.lambda_lo);
        hi = hi.max(b.lambda_hi);
        if !(lo > T::zero()) || !hi.is_finite() {
            return Err(ProfileError::ConstructionFailed {
                pinch: self.joint.to_f64_lossy(),
                reason: "no positive parabolicity bounds".into(),
            });
        }
        self.theta_lo = lo;
        self.theta_hi = hi;
        Ok(self)
    }

    /// Minimum of `σ̃ - σ` over the sampled open interval below the joint,
    /// or the offending point when it is not positive.
    pub fn dominance_gap(&self) -> Result<T, T> {
        let n = T::from_usize(DOMINANCE_SAMPLES).unwrap();
        let mut min_gap = T::infinity();
        for i in 0..DOMINANCE_SAMPLES {
            let s = self.joint * (T::from_usize(i).unwrap() + T::c(0.5)) / n;
            let gap = self.sigma_tilde(s) - self.base.sigma(s);
            if !(gap > T::zero()) {
                return Err(s);
            }
            min_gap = min_gap.min(gap);
        }
        Ok(min_gap)
    }

    pub fn base(&self) -> &Profile<T> {
        &self.base
    }

    pub fn sigma_tilde(&self, s: T) -> T {
        let half = T::c(0.5);
        let k = self.linear_slope;
        if s >= self.joint {
            return self.base.sigma(s);
        }
        if s <= self.s_a {
            return k * s;
        }
        let w1 = self.s_m - self.s_a;
        if s <= self.s_m {
            let x = s - self.s_a;
            return k * s + (self.g_m - k) * x * x * half / w1;
        }
        let at_m = k * self.s_m + (self.g_m - k) * w1 * half;
        let w2 = self.joint - self.s_m;
        let x = s - self.s_m;
        at_m + self.g_m * x + (self.joint_slope - self.g_m) * x * x * half / w2
    }

    pub fn sigma_tilde_prime(&self, s: T) -> T {
        let k = self.linear_slope;
        if s >= self.joint {
            self.base.sigma_prime(s)
        } else if s <= self.s_a {
            k
        } else if s <= self.s_m {
            k + (self.g_m - k) * (s - self.s_a) / (self.s_m - self.s_a)
        } else {
            self.g_m + (self.joint_slope - self.g_m) * (s - self.s_m) / (self.joint - self.s_m)
        }
    }

    /// `f̃(s) = σ̃(√s)/√s`, equal to the linear slope at 0.
    pub fn f_tilde(&self, s: T) -> T {
        let r = s.sqrt();
        if r <= self.s_a {
            self.linear_slope
        } else {
            self.sigma_tilde(r) / r
        }
    }

    pub fn f_tilde_prime(&self, s: T) -> T {
        let r = s.sqrt();
        if r <= self.s_a {
            T::zero()
        } else {
            (self.sigma_tilde_prime(r) * r - self.sigma_tilde(r)) / (T::c(2.0) * s * r)
        }
    }

    /// `f̃(s) + 2 s f̃'(s)`, the parabolicity modulus.
    pub fn para(&self, s: T) -> T {
        self.f_tilde(s) + T::c(2.0) * s * self.f_tilde_prime(s)
    }

    pub fn flux_tilde(&self, p: VecN<T>) -> VecN<T> {
        let n = p.norm();
        if n == T::zero() {
            VecN::zeros(p.dim())
        } else {
            p * (self.sigma_tilde(n) / n)
        }
    }

    pub fn flux_tilde_jacobian(&self, p: VecN<T>) -> Mat<T> {
        radial_jacobian(p, |s| self.sigma_tilde(s), |s| self.sigma_tilde_prime(s))
    }
}

impl<T: Scalar> Profile<T> {
    pub fn modify(&self, r_cut: T) -> Result<ModifiedProfile<T>, ProfileError> {
        ModifiedProfile::new(self, r_cut)
    }
}
