//! Bracketed scalar root finding.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },
    #[error("non-finite function value at {at}")]
    NonFinite { at: f64 },
}

/// Root of `f` in `[lo, hi]` by bisection to machine resolution, then a
/// few safeguarded Newton steps when a derivative is supplied.
pub fn bisect_newton<T, F, D>(f: F, df: Option<D>, lo: T, hi: T) -> Result<T, RootError>
where
    T: Scalar,
    F: Fn(T) -> T,
    D: Fn(T) -> T,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if !fa.is_finite() {
        return Err(RootError::NonFinite { at: a.to_f64_lossy() });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { at: b.to_f64_lossy() });
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(RootError::NotBracketed { lo: a.to_f64_lossy(), hi: b.to_f64_lossy() });
    }
    let two = T::c(2.0);
    for _ in 0..400 {
        let m = a + (b - a) / two;
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if !fm.is_finite() {
            return Err(RootError::NonFinite { at: m.to_f64_lossy() });
        }
        if fm == T::zero() {
            return Ok(m);
        }
        if (fm > T::zero()) == (fa > T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let mut x = a + (b - a) / two;
    let mut fx = f(x);
    if let Some(df) = df {
        for _ in 0..4 {
            let d = df(x);
            if d == T::zero() || !d.is_finite() {
                break;
            }
            let y = x - fx / d;
            if !(y >= a && y <= b) {
                break;
            }
            let fy = f(y);
            if fy.abs() < fx.abs() {
                x = y;
                fx = fy;
            } else {
                break;
            }
        }
    }
    Ok(x)
}

/// First sub-interval of a uniform scan of `[lo, hi]` where `f` changes sign.
pub fn scan_sign_change<T, F>(f: F, lo: T, hi: T, samples: usize) -> Option<(T, T)>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let n = T::from_usize(samples.max(1)).unwrap();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=samples.max(1) {
        let x1 = lo + (hi - lo) * T::from_usize(i).unwrap() / n;
        let f1 = f(x1);
        if f0 == T::zero() {
            return Some((x0, x0));
        }
        if f0.is_finite() && f1.is_finite() && (f0 > T::zero()) != (f1 > T::zero()) {
            return Some((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    None
}
