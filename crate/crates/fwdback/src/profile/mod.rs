//! Non-Fourier diffusion profiles and their monotone modification.

mod expr;
mod modified;

pub use expr::{Expr, Func, ParseError};
pub use modified::ModifiedProfile;

use crate::linalg::Mat;
use crate::roots::{bisect_newton, scan_sign_change, RootError};
use crate::scalar::Scalar;
use crate::vector::VecN;
use std::fmt;
use std::sync::Arc;

/// Shared scalar callback.
pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile is not of non-Fourier type: {reason} (at s = {at})")]
    NotNonFourier { reason: String, at: f64 },
    #[error("flux level {r} outside (0, {r_max})")]
    OutOfRange { r: f64, r_max: f64 },
    #[error("modified profile construction failed near s = {pinch}: {reason}")]
    ConstructionFailed { pinch: f64, reason: String },
    #[error("unknown profile preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Optional hints used when locating the landmarks.
#[derive(Debug, Clone, Copy, Default)]
pub struct LandmarkHints<T> {
    pub s_minus: Option<T>,
    pub s_zero: Option<T>,
    pub s_max: Option<T>,
    pub alpha: Option<T>,
}

/// A radial diffusion profile `σ` with flux `A(p) = σ(|p|) p/|p|`.
#[derive(Clone)]
pub struct Profile<T: Scalar> {
    name: String,
    sigma: ScalarFn<T>,
    sigma_prime: ScalarFn<T>,
    pub s_minus: T,
    pub s_zero: T,
    pub s_plus: T,
    pub lambda_lo: T,
    pub lambda_hi: T,
    pub s_max: T,
    /// Hölder exponent, carried as metadata only.
    pub alpha: T,
}

impl<T: Scalar> fmt::Debug for Profile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("name", &self.name)
            .field("s_minus", &self.s_minus)
            .field("s_zero", &self.s_zero)
            .field("s_plus", &self.s_plus)
            .field("lambda_lo", &self.lambda_lo)
            .field("lambda_hi", &self.lambda_hi)
            .field("s_max", &self.s_max)
            .finish()
    }
}

/// The three solutions of `σ(s) = ±r` on the monotone branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchInverses<T> {
    pub r: T,
    /// Root of `σ = r` in `(s_0, s_+)`.
    pub s_plus_r: T,
    /// Root of `σ = -r` in `(0, s_-)`.
    pub s_minus1_r: T,
    /// Root of `σ = -r` in `(s_-, s_0)`.
    pub s_minus2_r: T,
}

/// Outcome of one clause of the validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseCheck {
    pub clause: &'static str,
    pub passed: bool,
    pub violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NfReport {
    pub checks: Vec<ClauseCheck>,
}

impl NfReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&ClauseCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

const SCAN: usize = 2000;

impl<T: Scalar> Profile<T> {
    /// Builds a profile from `σ` and `σ'`, locating and validating the landmarks.
    pub fn new<F, D>(name: &str, sigma: F, sigma_prime: D, hints: LandmarkHints<T>) -> Result<Self, ProfileError>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
        D: Fn(T) -> T + Send + Sync + 'static,
    {
        let sigma: ScalarFn<T> = Arc::new(sigma);
        let sigma_prime: ScalarFn<T> = Arc::new(sigma_prime);
        let nf = |reason: &str, at: T| ProfileError::NotNonFourier { reason: reason.into(), at: at.to_f64_lossy() };

        let tiny = T::c(1e-9);
        let d0 = sigma_prime(tiny);
        if !(d0 < T::zero()) {
            return Err(nf("sigma' is not negative near 0", tiny));
        }
        let sp = sigma_prime.clone();
        let s_minus = match hints.s_minus {
            Some(h) => locate(&*sp, h * T::c(0.5), h * T::c(1.5)).or_else(|| search(&*sp, tiny)),
            None => search(&*sp, tiny),
        }
        .ok_or_else(|| nf("sigma' never changes sign", tiny))?;
        let s_minus = refine(&*sp, Some(&*sp), s_minus)?;
        let sig = sigma.clone();
        if !(sig(s_minus) < T::zero()) {
            return Err(nf("no negative dip at the interior minimum", s_minus));
        }
        let s_zero = match hints.s_zero {
            Some(h) if h > s_minus => locate(&*sig, s_minus, h * T::c(1.5)).or_else(|| search(&*sig, s_minus)),
            _ => search(&*sig, s_minus),
        }
        .ok_or_else(|| nf("sigma has no zero after its minimum", s_minus))?;
        let s_zero = refine(&*sig, Some(&*sp), s_zero)?;
        let depth = -sig(s_minus);
        let lift = |s: T| sig(s) - depth;
        let s_plus = search(&lift, s_zero).ok_or_else(|| nf("sigma never reaches -sigma(s_-)", s_zero))?;
        let s_plus = refine(&lift, Some(&*sp), s_plus)?;
        let s_max = hints.s_max.unwrap_or(s_plus * T::c(4.0));
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        let two_s0 = s_zero * T::c(2.0);
        for i in 1..=1000 {
            let s = two_s0 + (s_max - two_s0) * T::from_usize(i).unwrap() / T::c(1000.0);
            let d = sp(s);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let p = Self {
            name: name.to_string(),
            sigma,
            sigma_prime,
            s_minus,
            s_zero,
            s_plus,
            lambda_lo: lo,
            lambda_hi: hi,
            s_max,
            alpha: hints.alpha.unwrap_or(T::c(0.5)),
        };
        p.validate_nf(1000)?;
        Ok(p)
    }

    /// Assembles a profile from given landmarks without any checks.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts<F, D>(
        name: &str,
        sigma: F,
        sigma_prime: D,
        s_minus: T,
        s_zero: T,
        s_plus: T,
        lambda: (T, T),
        s_max: T,
    ) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
        D: Fn(T) -> T + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            sigma: Arc::new(sigma),
            sigma_prime: Arc::new(sigma_prime),
            s_minus,
            s_zero,
            s_plus,
            lambda_lo: lambda.0,
            lambda_hi: lambda.1,
            s_max,
            alpha: T::c(0.5),
        }
    }

    /// `σ(s) = s(s-3)` on `[0,4]` continued linearly with slope 5.
    pub fn quadratic_glued() -> Self {
        let four = T::c(4.0);
        let three = T::c(3.0);
        let five = T::c(5.0);
        Self::new(
            "quadratic-glued",
            move |s: T| if s <= four { s * (s - three) } else { four + five * (s - four) },
            move |s: T| if s <= four { T::c(2.0) * s - three } else { five },
            LandmarkHints { s_minus: Some(T::c(1.5)), s_zero: Some(three), ..Default::default() },
        )
        .expect("preset profile is valid")
    }

    pub fn preset(name: &str) -> Result<Self, ProfileError> {
        match name {
            "quadratic-glued" => Ok(Self::quadratic_glued()),
            _ => Err(ProfileError::UnknownPreset(name.to_string())),
        }
    }

    /// Profile from an expression in `s`; see [`Expr`] for the grammar.
    pub fn from_expr(src: &str) -> Result<Self, ProfileError> {
        let e = Expr::parse(src)?;
        let d = e.derivative();
        Self::new(src, move |s: T| e.eval(s), move |s: T| d.eval(s), LandmarkHints::default())
    }

    /// A preset name or an expression.
    pub fn from_spec(spec: &str) -> Result<Self, ProfileError> {
        let spec = spec.trim();
        match Self::preset(spec) {
            Ok(p) => Ok(p),
            Err(ProfileError::UnknownPreset(name)) => {
                let name_like = spec.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
                match Self::from_expr(spec) {
                    Err(ProfileError::Parse(_)) if name_like => Err(ProfileError::UnknownPreset(name)),
                    r => r,
                }
            }
            Err(e) => Err(e),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn sigma(&self, s: T) -> T {
        (self.sigma)(s)
    }

    #[inline]
    pub fn sigma_prime(&self, s: T) -> T {
        (self.sigma_prime)(s)
    }

    /// `-σ(s_-) = σ(s_+)`, the top of the admissible flux levels.
    pub fn r_max(&self) -> T {
        -self.sigma(self.s_minus)
    }

    /// Per-clause check at `samples` points per interval.
    pub fn nf_report(&self, samples: usize) -> NfReport {
        let n = samples.max(1);
        let nt = T::from_usize(n).unwrap();
        let at = |lo: T, hi: T, i: usize| lo + (hi - lo) * (T::from_usize(i).unwrap() + T::c(0.5)) / nt;
        let mut checks = Vec::new();
        let mut push = |clause: &'static str, viol: Option<T>| {
            checks.push(ClauseCheck { clause, passed: viol.is_none(), violation: viol.map(|v| v.to_f64_lossy()) });
        };
        let tol = T::c(1e-10).max(T::epsilon() * T::c(100.0));
        push("sigma(0) = 0", (self.sigma(T::zero()).abs() > tol).then_some(T::zero()));
        let zero_tol = tol * T::one().max(self.sigma_prime(self.s_zero).abs());
        push("sigma(s_zero) = 0", (self.sigma(self.s_zero).abs() > zero_tol).then_some(self.s_zero));
        push(
            "0 < s_minus < s_zero",
            (!(T::zero() < self.s_minus && self.s_minus < self.s_zero)).then_some(self.s_minus),
        );
        push(
            "sigma' < 0 on (0, s_minus)",
            (0..n).map(|i| at(T::zero(), self.s_minus, i)).find(|&s| !(self.sigma_prime(s) < T::zero())),
        );
        push(
            "sigma' > 0 on (s_minus, s_zero)",
            (0..n).map(|i| at(self.s_minus, self.s_zero, i)).find(|&s| !(self.sigma_prime(s) > T::zero())),
        );
        push(
            "sigma' > 0 on (s_zero, s_max]",
            (0..n).map(|i| at(self.s_zero, self.s_max, i)).find(|&s| !(self.sigma_prime(s) > T::zero())),
        );
        let top = self.sigma(self.s_plus);
        let depth = -self.sigma(self.s_minus);
        let plus_ok = top > T::zero()
            && self.s_plus > self.s_zero
            && (top - depth).abs() <= tol * T::one().max(self.sigma_prime(self.s_plus).abs());
        push("sigma(s_plus) = -sigma(s_minus) > 0", (!plus_ok).then_some(self.s_plus));
        let two_s0 = self.s_zero * T::c(2.0);
        push(
            "lambda <= sigma' <= Lambda on (2 s_zero, s_max]",
            if !(self.lambda_lo > T::zero()) || !self.lambda_hi.is_finite() {
                Some(two_s0)
            } else {
                (0..n).map(|i| at(two_s0, self.s_max, i)).find(|&s| {
                    let d = self.sigma_prime(s);
                    d < self.lambda_lo * (T::one() - tol) || d > self.lambda_hi * (T::one() + tol)
                })
            },
        );
        push("0 < alpha < 1", (!(self.alpha > T::zero() && self.alpha < T::one())).then_some(self.alpha));
        NfReport { checks }
    }

    /// Validates the non-Fourier hypothesis; `samples` is clamped to at least 1000.
    pub fn validate_nf(&self, samples: usize) -> Result<NfReport, ProfileError> {
        let report = self.nf_report(samples.max(1000));
        match report.first_failure() {
            None => Ok(report),
            Some(c) => Err(ProfileError::NotNonFourier {
                reason: c.clause.to_string(),
                at: c.violation.unwrap_or(f64::NAN),
            }),
        }
    }

    fn check_level(&self, r: T) -> Result<(), ProfileError> {
        let r_max = self.r_max();
        if !(r > T::zero() && r < r_max) {
            return Err(ProfileError::OutOfRange { r: r.to_f64_lossy(), r_max: r_max.to_f64_lossy() });
        }
        Ok(())
    }

    /// Root of `σ = r` in `(s_0, s_+)`.
    pub fn s_plus_of(&self, r: T) -> Result<T, ProfileError> {
        self.check_level(r)?;
        let sp = &*self.sigma_prime;
        Ok(bisect_newton(|s| self.sigma(s) - r, Some(sp), self.s_zero, self.s_plus)?)
    }

    /// Root of `σ = -r` in `(0, s_-)`.
    pub fn s_minus1_of(&self, r: T) -> Result<T, ProfileError> {
        self.check_level(r)?;
        let sp = &*self.sigma_prime;
        Ok(bisect_newton(|s| self.sigma(s) + r, Some(sp), T::zero(), self.s_minus)?)
    }

    /// Root of `σ = -r` in `(s_-, s_0)`.
    pub fn s_minus2_of(&self, r: T) -> Result<T, ProfileError> {
        self.check_level(r)?;
        let sp = &*self.sigma_prime;
        Ok(bisect_newton(|s| self.sigma(s) + r, Some(sp), self.s_minus, self.s_zero)?)
    }

    pub fn branch_inverses(&self, r: T) -> Result<BranchInverses<T>, ProfileError> {
        Ok(BranchInverses {
            r,
            s_plus_r: self.s_plus_of(r)?,
            s_minus1_r: self.s_minus1_of(r)?,
            s_minus2_r: self.s_minus2_of(r)?,
        })
    }

    /// `A(p) = σ(|p|) p/|p|`, zero at the origin.
    pub fn flux(&self, p: VecN<T>) -> VecN<T> {
        let n = p.norm();
        if n == T::zero() {
            VecN::zeros(p.dim())
        } else {
            p * (self.sigma(n) / n)
        }
    }

    /// Jacobian of the flux.
    pub fn flux_jacobian(&self, p: VecN<T>) -> Mat<T> {
        radial_jacobian(p, |s| self.sigma(s), |s| self.sigma_prime(s))
    }
}

pub(crate) fn radial_jacobian<T: Scalar>(p: VecN<T>, sigma: impl Fn(T) -> T, dsigma: impl Fn(T) -> T) -> Mat<T> {
    let n = p.dim();
    let r = p.norm();
    if r == T::zero() {
        return Mat::identity(n).scale(dsigma(T::zero()));
    }
    let a = sigma(r) / r;
    let b = dsigma(r);
    let u = p * (T::one() / r);
    Mat::identity(n).scale(a).add(&Mat::outer(u.as_slice(), u.as_slice()).scale(b - a))
}

fn locate<T: Scalar>(f: &dyn Fn(T) -> T, lo: T, hi: T) -> Option<(T, T)> {
    scan_sign_change(f, lo, hi, SCAN)
}

/// First sign change of `f` after `from`, widening the window geometrically.
fn search<T: Scalar>(f: &dyn Fn(T) -> T, from: T) -> Option<(T, T)> {
    let mut hi = from.max(T::one()) * T::c(2.0);
    for _ in 0..24 {
        if let Some(b) = scan_sign_change(f, from, hi, SCAN) {
            return Some(b);
        }
        hi = hi * T::c(2.0);
    }
    None
}

fn refine<T: Scalar>(f: &dyn Fn(T) -> T, df: Option<&dyn Fn(T) -> T>, (lo, hi): (T, T)) -> Result<T, RootError> {
    if lo == hi {
        return Ok(lo);
    }
    bisect_newton(f, df, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_landmarks() {
        let p = Profile::<f64>::quadratic_glued();
        assert!((p.s_minus - 1.5).abs() < 1e-12);
        assert!((p.s_zero - 3.0).abs() < 1e-12);
        assert!((p.s_plus - (3.0 + 3.0 * 2f64.sqrt()) / 2.0).abs() < 1e-12);
        assert_eq!(p.lambda_lo, 5.0);
        assert_eq!(p.lambda_hi, 5.0);
    }

    #[test]
    fn spec_strings() {
        assert_eq!(Profile::<f64>::from_spec("quadratic-glued").unwrap().name(), "quadratic-glued");
        assert!(Profile::<f64>::from_spec("min(s,4)*(min(s,4)-3) + 5*max(s-4,0)").is_ok());
        assert!(Profile::<f64>::from_spec("s*(s-3)").is_err());
        assert!(matches!(Profile::<f64>::from_spec("nonsense-name"), Err(ProfileError::UnknownPreset(_))));
    }
}
