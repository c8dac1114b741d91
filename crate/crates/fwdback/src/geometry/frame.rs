//! Newton solve of the implicit frame system and the rank-one decomposition.

use super::{collinear_connection, DiagonalPoint, GeometryError, RankOneFrame, Window, WindowGeometry};
use crate::linalg::Mat;
use crate::profile::Profile;
use crate::scalar::Scalar;
use crate::vector::VecN;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BRACKET_TOL: f64 = 1e-10;
const RANDOM_SEEDS: usize = 8;
const MAX_NEWTON: usize = 80;

/// Solves for the rank-one frame through `point` in `window`.
pub fn solve_frame<T: Scalar>(
    profile: &Profile<T>,
    point: &DiagonalPoint<T>,
    window: &Window<T>,
    guess: Option<&RankOneFrame<T>>,
) -> Result<RankOneFrame<T>, GeometryError> {
    let geom = window.geometry(profile)?;
    solve_frame_in(profile, point, &geom, guess)
}

/// [`solve_frame`] with precomputed window brackets.
pub fn solve_frame_in<T: Scalar>(
    profile: &Profile<T>,
    point: &DiagonalPoint<T>,
    geom: &WindowGeometry<T>,
    guess: Option<&RankOneFrame<T>>,
) -> Result<RankOneFrame<T>, GeometryError> {
    let n = point.dim();
    let tol = T::c(BRACKET_TOL);
    let w = geom.window;
    if !(point.p.is_finite() && point.beta.is_finite()) {
        return Err(GeometryError::NotInS("non-finite point".into()));
    }
    if point.p.norm() > geom.plus.1 + tol || point.beta.norm() > w.hi() + tol {
        return Err(GeometryError::NotInS(format!(
            "|p| = {} or |beta| = {} beyond the window bounds",
            point.p.norm(),
            point.beta.norm()
        )));
    }

    let mut seeds: Vec<Unknowns<T>> = Vec::new();
    if let Some(g) = guess {
        seeds.push(Unknowns { gamma: g.gamma * g.t_minus, q: g.q * g.t_minus, s: g.t_plus / g.t_minus });
    }
    let level = point.beta.norm().max(w.lo() + w.mu * T::c(1e-6)).min(w.hi() - w.mu * T::c(1e-6));
    let first = point
        .beta
        .normalized()
        .or_else(|| point.p.normalized())
        .unwrap_or_else(|| VecN::e1(n));
    let mut dirs = vec![first];
    if n == 1 {
        dirs.push(-first);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f4a3);
        for _ in 0..RANDOM_SEEDS {
            let th = T::c(rng.gen_range(0.0..std::f64::consts::TAU));
            dirs.push(VecN::unit_at(2, th));
        }
    }
    for z in dirs {
        if let Ok(pair) = collinear_connection(profile, level, z, w.solution_type) {
            let qv = pair.p_minus - point.p;
            let nq = qv.norm_sq();
            if nq == T::zero() {
                continue;
            }
            let s = (pair.p_plus - point.p).dot(&qv) / nq;
            let mut gamma = profile.flux(point.p + qv) - point.beta;
            gamma = gamma - qv * (gamma.dot(&qv) / nq);
            seeds.push(Unknowns { gamma, q: qv, s });
        }
    }

    let mut last = String::from("no usable seed");
    for seed in seeds {
        match newton(profile, point, seed) {
            Some(x) => match to_frame(profile, point, geom, &x) {
                Ok(f) => return Ok(f),
                Err(msg) => last = msg,
            },
            None => last = "Newton iteration did not converge".into(),
        }
    }
    Err(GeometryError::NotInS(last))
}

#[derive(Clone, Copy, Debug)]
struct Unknowns<T> {
    gamma: VecN<T>,
    q: VecN<T>,
    s: T,
}

impl<T: Scalar> Unknowns<T> {
    fn pack(&self) -> Vec<T> {
        if self.q.dim() == 1 {
            vec![self.q[0], self.s]
        } else {
            vec![self.gamma[0], self.gamma[1], self.q[0], self.q[1], self.s]
        }
    }

    fn unpack(x: &[T]) -> Self {
        if x.len() == 2 {
            Self { gamma: VecN::zeros(1), q: VecN::new1(x[0]), s: x[1] }
        } else {
            Self { gamma: VecN::new2(x[0], x[1]), q: VecN::new2(x[2], x[3]), s: x[4] }
        }
    }
}

/// `F(γ', q', s')`; in one dimension `γ' = 0` and the last row is dropped.
fn system<T: Scalar>(profile: &Profile<T>, pt: &DiagonalPoint<T>, x: &Unknowns<T>) -> Vec<T> {
    let a = profile.flux(pt.p + x.q * x.s) - pt.beta - x.gamma * x.s;
    let b = profile.flux(pt.p + x.q) - pt.beta - x.gamma;
    let mut f: Vec<T> = a.as_slice().to_vec();
    f.extend_from_slice(b.as_slice());
    if pt.dim() == 2 {
        f.push(x.gamma.dot(&x.q));
    }
    f
}

fn jacobian<T: Scalar>(profile: &Profile<T>, pt: &DiagonalPoint<T>, x: &Unknowns<T>) -> Mat<T> {
    let n = pt.dim();
    let ps = pt.p + x.q * x.s;
    let d_s = profile.flux_jacobian(ps);
    let d_1 = profile.flux_jacobian(pt.p + x.q);
    let omega = {
        let v = d_s.mul_vec(x.q.as_slice());
        VecN::from_slice(&v) - x.gamma
    };
    if n == 1 {
        return Mat::from_rows(&[vec![d_s[(0, 0)] * x.s, omega[0]], vec![d_1[(0, 0)], T::zero()]]);
    }
    let mut j = Mat::zeros(5, 5);
    for i in 0..2 {
        // rows of the s'-equation
        j[(i, i)] = -x.s;
        for k in 0..2 {
            j[(i, 2 + k)] = d_s[(i, k)] * x.s;
        }
        j[(i, 4)] = omega[i];
        // rows of the unit-scale equation
        j[(2 + i, i)] = -T::one();
        for k in 0..2 {
            j[(2 + i, 2 + k)] = d_1[(i, k)];
        }
    }
    j[(4, 0)] = x.q[0];
    j[(4, 1)] = x.q[1];
    j[(4, 2)] = x.gamma[0];
    j[(4, 3)] = x.gamma[1];
    j
}

fn max_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn newton<T: Scalar>(profile: &Profile<T>, pt: &DiagonalPoint<T>, seed: Unknowns<T>) -> Option<Unknowns<T>> {
    let scale = T::one().max(pt.beta.norm());
    let target = T::c(1e-14) * scale;
    let mut x = seed.pack();
    let mut f = system(profile, pt, &Unknowns::unpack(&x));
    let mut fnorm = max_norm(&f);
    for _ in 0..MAX_NEWTON {
        if fnorm <= target {
            break;
        }
        let u = Unknowns::unpack(&x);
        let j = jacobian(profile, pt, &u);
        let rhs: Vec<T> = f.iter().map(|&v| -v).collect();
        let dx = j.solve(&rhs)?;
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + step * d).collect();
            let tf = system(profile, pt, &Unknowns::unpack(&trial));
            let tn = max_norm(&tf);
            if tn.is_finite() && tn < fnorm * (T::one() - T::c(1e-4) * step) {
                x = trial;
                f = tf;
                fnorm = tn;
                accepted = true;
                break;
            }
            step = step * T::c(0.5);
        }
        if !accepted {
            break;
        }
    }
    (fnorm <= T::c(1e-11) * scale).then(|| Unknowns::unpack(&x))
}

fn to_frame<T: Scalar>(
    profile: &Profile<T>,
    pt: &DiagonalPoint<T>,
    geom: &WindowGeometry<T>,
    x: &Unknowns<T>,
) -> Result<RankOneFrame<T>, String> {
    let nq = x.q.norm();
    if !(nq > T::zero()) || !(x.s < T::zero()) {
        return Err("degenerate Newton solution".into());
    }
    let q = x.q * (-T::one() / nq);
    let mut gamma = x.gamma * (-T::one() / nq);
    gamma = gamma - q * gamma.dot(&q);
    let frame = RankOneFrame { q, gamma, t_minus: -nq, t_plus: -x.s * nq };
    let tol = T::c(BRACKET_TOL);
    let (pm, pp) = frame.endpoints(pt.p);
    let inside = |v: T, (lo, hi): (T, T)| v > lo - tol && v < hi + tol;
    if !inside(pp.norm(), geom.plus) {
        return Err(format!("|p + t_+ q| = {} outside ({}, {})", pp.norm(), geom.plus.0, geom.plus.1));
    }
    if !inside(pm.norm(), geom.minus) {
        return Err(format!("|p + t_- q| = {} outside ({}, {})", pm.norm(), geom.minus.0, geom.minus.1));
    }
    let res = frame_residual(profile, pt, &frame);
    if !(res <= T::c(1e-10) * T::one().max(pt.beta.norm())) {
        return Err(format!("frame residual {res} too large"));
    }
    Ok(frame)
}

/// `max_± |A(p + t_± q) - β - t_± γ|`.
pub fn frame_residual<T: Scalar>(profile: &Profile<T>, pt: &DiagonalPoint<T>, f: &RankOneFrame<T>) -> T {
    let (pm, pp) = f.endpoints(pt.p);
    let rm = profile.flux(pm) - pt.beta - f.gamma * f.t_minus;
    let rp = profile.flux(pp) - pt.beta - f.gamma * f.t_plus;
    rm.norm().max(rp.norm())
}

/// Full-matrix view of a frame: `ξ_± = ξ + t_± η` with `η` built from `(q, b, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub xi: Mat<T>,
    pub xi_minus: Mat<T>,
    pub xi_plus: Mat<T>,
    pub eta: Mat<T>,
    pub lambda: T,
    /// Second over first singular value of `ξ_+ - ξ_-`.
    pub rank_ratio: T,
}

pub fn decompose<T: Scalar>(
    pt: &DiagonalPoint<T>,
    frame: &RankOneFrame<T>,
    b: T,
) -> Result<Decomposition<T>, GeometryError> {
    if b == T::zero() || !b.is_finite() {
        return Err(GeometryError::ZeroScaling);
    }
    let n = pt.dim();
    let mut xi = Mat::zeros(1 + n, n + 1);
    let mut eta = Mat::zeros(1 + n, n + 1);
    for j in 0..n {
        xi[(0, j)] = pt.p[j];
        eta[(0, j)] = frame.q[j];
    }
    eta[(0, n)] = b;
    for i in 0..n {
        xi[(1 + i, n)] = pt.beta[i];
        eta[(1 + i, n)] = frame.gamma[i];
        for j in 0..n {
            eta[(1 + i, j)] = frame.gamma[i] * frame.q[j] / b;
        }
    }
    let xi_minus = xi.add(&eta.scale(frame.t_minus));
    let xi_plus = xi.add(&eta.scale(frame.t_plus));
    let sv = xi_plus.sub(&xi_minus).singular_values();
    let rank_ratio = if sv.len() > 1 && sv[0] > T::zero() { sv[1] / sv[0] } else { T::zero() };
    Ok(Decomposition { xi, xi_minus, xi_plus, eta, lambda: frame.lambda(), rank_ratio })
}
