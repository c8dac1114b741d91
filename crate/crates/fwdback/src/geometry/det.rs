//! Non-degeneracy of the frame system and certified window sizes.

use super::{connection_widths, perturbation_bound, GeometryError, SolutionType, Window, WindowGeometry};
use crate::linalg::Mat;
use crate::profile::Profile;
use crate::scalar::Scalar;
use crate::vector::VecN;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DOMAIN_TOL: f64 = 1e-10;

/// Determinant whose non-vanishing makes the frame system's Jacobian invertible.
///
/// `v` is the `+` endpoint, `u` the `-` endpoint, `q` the unit direction
/// and `gamma` the flux slope of the segment.
pub fn det_b<T: Scalar>(
    profile: &Profile<T>,
    geom: &WindowGeometry<T>,
    v: VecN<T>,
    u: VecN<T>,
    q: VecN<T>,
    gamma: VecN<T>,
) -> Result<T, GeometryError> {
    let tol = T::c(DOMAIN_TOL);
    let (nv, nu) = (v.norm(), u.norm());
    let within = |x: T, (lo, hi): (T, T)| x >= lo - tol && x <= hi + tol;
    if !within(nv, geom.plus) {
        return Err(GeometryError::OutOfDomain(format!("|v| = {nv} outside the s_+ window")));
    }
    if !within(nu, geom.minus) {
        return Err(GeometryError::OutOfDomain(format!("|u| = {nu} outside the s_- window")));
    }
    if gamma.norm() > T::one() + tol {
        return Err(GeometryError::OutOfDomain(format!("|gamma| = {} exceeds 1", gamma.norm())));
    }
    Ok(det_unchecked(profile, v, u, q, gamma))
}

pub(crate) fn det_unchecked<T: Scalar>(profile: &Profile<T>, v: VecN<T>, u: VecN<T>, q: VecN<T>, gamma: VecN<T>) -> T {
    let n = v.dim();
    let (nv, nu) = (v.norm(), u.norm());
    let (vh, uh) = (v * (T::one() / nv), u * (T::one() / nu));
    let a_u = profile.sigma(nu) / nu;
    let a_v = profile.sigma(nv) / nv;
    let b_u = profile.sigma_prime(nu) - a_u;
    let b_v = profile.sigma_prime(nv) - a_v;
    let d = a_u - a_v;
    let vq = vh.dot(&q);
    let base = vh * (b_v * vq) + q * a_v;
    let x_minus = base - gamma;
    let x_plus = base + gamma;
    let denom = d * (b_v * vq * vq + a_v);
    let m = Mat::identity(n)
        .add(&Mat::outer(uh.as_slice(), uh.as_slice()).scale(b_u / d))
        .sub(&Mat::outer(vh.as_slice(), vh.as_slice()).scale(b_v / d))
        .add(&Mat::outer(x_minus.as_slice(), x_plus.as_slice()).scale(T::one() / denom));
    m.det()
}

/// Certified window half-width at level `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuPrime<T> {
    pub mu: T,
    /// `min |DET|` at the collinear configuration.
    pub d: T,
    /// Number of halvings from the initial guess.
    pub halvings: usize,
    pub samples: usize,
}

const MU_SAMPLES: usize = 1000;
const MU_HALVINGS: usize = 20;

/// Largest `μ = μ₀/2^k` passing the ordering and non-degeneracy certificates.
pub fn estimate_mu_prime<T: Scalar>(
    profile: &Profile<T>,
    r: T,
    solution_type: SolutionType,
) -> Result<MuPrime<T>, GeometryError> {
    let r_max = profile.r_max();
    if !(r > T::zero() && r < r_max) {
        return Err(GeometryError::OutOfDomain(format!("level {r} outside (0, {r_max})")));
    }
    let sp = profile.s_plus_of(r)?;
    let sm = match solution_type {
        SolutionType::TypeI => profile.s_minus2_of(r)?,
        SolutionType::TypeII => profile.s_minus1_of(r)?,
    };
    let mid = (sm + sp) * T::c(0.5);
    let mut d = T::infinity();
    for k in 0..8 {
        let z = VecN::unit_at(2, T::c(k as f64 * 0.785_398_163_397_448_3));
        d = d.min(det_unchecked(profile, z * sp, z * (-sm), z, VecN::zeros(2)).abs());
        let z1 = VecN::new1(if k % 2 == 0 { T::one() } else { -T::one() });
        d = d.min(det_unchecked(profile, z1 * sp, z1 * (-sm), z1, VecN::zeros(1)).abs());
    }
    if !(d > T::zero()) {
        return Err(GeometryError::NoWindow { r: r.to_f64_lossy() });
    }
    let mu0 = r.min(r_max - r) * T::c(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d75_0000 ^ r.to_f64_lossy().to_bits());
    for k in 0..=MU_HALVINGS {
        let mu = mu0 / T::c(2f64.powi(k as i32));
        let ordered = match solution_type {
            SolutionType::TypeI => profile.s_minus2_of(r - mu)? < mid && mid < profile.s_plus_of(r - mu)?,
            SolutionType::TypeII => profile.s_minus1_of(r + mu)? < mid && mid < profile.s_plus_of(r - mu)?,
        };
        if !ordered {
            continue;
        }
        let geom = Window::new(r, mu, solution_type).geometry(profile)?;
        let h = match perturbation_bound(&connection_widths(profile, r, mu, solution_type)?) {
            Ok(h) => h,
            Err(_) => continue,
        };
        if certify(profile, &geom, (sp, sm), d, h, &mut rng)? {
            return Ok(MuPrime { mu, d, halvings: k, samples: MU_SAMPLES });
        }
    }
    Err(GeometryError::NoWindow { r: r.to_f64_lossy() })
}

/// Samples admissible endpoint pairs of the window and checks `|DET| > d/2`.
///
/// In the plane an admissible pair is fixed up to rotation by its radii:
/// the angle between `p_+` and `-p_-` follows from the orthogonality
/// `(A(p_+) - A(p_-))·(p_+ - p_-) = 0`. Pairs must also lie within `h` of
/// the collinear configuration.
fn certify<T: Scalar>(
    profile: &Profile<T>,
    geom: &WindowGeometry<T>,
    (sp, sm): (T, T),
    d: T,
    h: T,
    rng: &mut ChaCha8Rng,
) -> Result<bool, GeometryError> {
    let w = geom.window;
    let floor = d * T::c(0.5);
    let lerp = |(lo, hi): (T, T), t: f64| lo + (hi - lo) * T::c(t);
    let slack = T::c(1e-9);
    for i in 0..MU_SAMPLES {
        if i % 5 == 4 {
            // collinear pairs, the only ones in one dimension
            let level = w.lo() + (w.hi() - w.lo()) * T::c(rng.gen_range(0.0..1.0));
            let lp = profile.s_plus_of(level)?;
            let lm = match w.solution_type {
                SolutionType::TypeI => profile.s_minus2_of(level)?,
                SolutionType::TypeII => profile.s_minus1_of(level)?,
            };
            let one = VecN::new1(T::one());
            let val = det_unchecked(profile, one * lp, one * (-lm), one, VecN::zeros(1));
            if !(val.abs() > floor) {
                return Ok(false);
            }
            continue;
        }
        let r1 = lerp(geom.minus, rng.gen_range(0.0..1.0));
        let r2 = lerp(geom.plus, rng.gen_range(0.0..1.0));
        let rt1 = -profile.sigma(r1);
        let rt2 = profile.sigma(r2);
        let theta = match super::half_angle(r1, r2, rt1, rt2) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let rot = T::c(rng.gen_range(0.0..std::f64::consts::TAU));
        let (st, ct) = theta.sin_cos();
        let pp = VecN::new2(r2 * st, r2 * ct).rotated(rot);
        let pm = VecN::new2(r1 * st, -r1 * ct).rotated(rot);
        let zeta = VecN::new2(T::zero(), T::one()).rotated(rot);
        let dist = (pp - zeta * sp).norm().max((pm + zeta * sm).norm());
        if dist > h * (T::one() + slack) + slack {
            return Ok(false);
        }
        let seg = pp - pm;
        let len = seg.norm();
        let q = seg * (T::one() / len);
        let gamma = (profile.flux(pp) - profile.flux(pm)) * (T::one() / len);
        let val = det_unchecked(profile, pp, pm, q, gamma);
        if !(val.abs() > floor) {
            return Ok(false);
        }
    }
    Ok(true)
}
