//! Explicit angle and perturbation bounds for planar rank-one connections.

use super::GeometryError;
use crate::scalar::Scalar;

/// Half of the angle between `p_+` and `-p_-` for radii `R1 < R2` and flux
/// magnitudes `Rt1 ≥ Rt2`, from the orthogonality relation
/// `(Rt1 - Rt2)(R1 + R2) cos²θ = (Rt1 + Rt2)(R2 - R1) sin²θ`.
pub fn half_angle<T: Scalar>(r1: T, r2: T, rt1: T, rt2: T) -> Result<T, GeometryError> {
    if !(r1 > T::zero() && r2 > r1 && rt1 > T::zero() && rt2 > T::zero()) {
        return Err(GeometryError::OutOfDomain(format!(
            "half_angle needs 0 < R1 < R2 and positive levels, got R1={r1}, R2={r2}, Rt1={rt1}, Rt2={rt2}"
        )));
    }
    if rt1 < rt2 {
        return Err(GeometryError::NoSolution);
    }
    let ratio = ((rt1 - rt2) * (r1 + r2)) / ((rt1 + rt2) * (r2 - r1));
    Ok(ratio.sqrt().atan())
}

/// Residual of the planar orthogonality condition in its dot-product form,
/// `(Rt1 e(π/2+θ) - Rt2 e(π/2-θ)) · (R1 e(θ-π/2) - R2 e(π/2-θ))`.
pub fn half_angle_residual<T: Scalar>(r1: T, r2: T, rt1: T, rt2: T, theta: T) -> T {
    let (s, c) = theta.sin_cos();
    // e(π/2+θ) = (-s, c), e(π/2-θ) = (s, c), e(θ-π/2) = (s, -c)
    let a = (-(rt1 + rt2) * s, (rt1 - rt2) * c);
    let b = ((r1 - r2) * s, -(r1 + r2) * c);
    a.0 * b.0 + a.1 * b.1
}

/// Centre values and widths fed to [`perturbation_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationInput<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d11: T,
    pub d12: T,
    pub d21: T,
    pub d22: T,
    pub e1: T,
    pub e2: T,
}

impl<T: Scalar> PerturbationInput<T> {
    pub fn zero_widths(a: T, b: T, c: T) -> Self {
        let z = T::zero();
        Self { a, b, c, d11: z, d12: z, d21: z, d22: z, e1: z, e2: z }
    }

    pub fn in_domain(&self) -> bool {
        let half_gap = (self.b - self.a) / T::c(2.0);
        let z = T::zero();
        self.a > z
            && self.b > self.a
            && self.c > z
            && self.d11 >= z
            && self.d11 < self.a
            && self.d12 >= z
            && self.d12 < half_gap
            && self.d21 >= z
            && self.d21 < half_gap
            && self.d22 >= z
            && self.e1 >= z
            && self.e1 < self.c
            && self.e2 >= z
            && self.d22.is_finite()
            && self.e2.is_finite()
    }

    /// Upper bound on the rotation angle of an approximate connection.
    pub fn angle_bound(&self) -> T {
        let num = (self.a + self.b + self.d12 + self.d22) * (self.e1 + self.e2);
        let den = T::c(2.0) * (self.b - self.a - self.d12 - self.d21) * (self.c - self.e1);
        (num / den).sqrt().atan()
    }
}

fn chord<T: Scalar>(centre: T, radius: T, cos_g: T) -> T {
    (radius * radius + centre * centre - T::c(2.0) * centre * radius * cos_g).max(T::zero()).sqrt()
}

/// Bound on the distance between an approximate connection and the
/// collinear one, `max(h1, h2, h3)`.
pub fn perturbation_bound<T: Scalar>(inp: &PerturbationInput<T>) -> Result<T, GeometryError> {
    if !inp.in_domain() {
        return Err(GeometryError::OutOfDomain(format!("perturbation bound outside its domain: {inp:?}")));
    }
    let cg = inp.angle_bound().cos();
    let h1 = chord(inp.a, inp.a + inp.d12, cg).max(chord(inp.a, inp.a - inp.d11, cg));
    let h2 = chord(inp.b, inp.b + inp.d22, cg).max(chord(inp.b, inp.b - inp.d21, cg));
    let h3 = chord(inp.c, inp.c + inp.e2, cg).max(chord(inp.c, inp.c - inp.e1, cg));
    Ok(h1.max(h2).max(h3))
}
