//! Rank-one geometry of the diagonal components: windows, frames,
//! non-degeneracy certificates and the lamination decomposition.

mod bounds;
mod det;
mod frame;

pub use bounds::{half_angle, half_angle_residual, perturbation_bound, PerturbationInput};
pub use det::{det_b, estimate_mu_prime, MuPrime};
pub use frame::{decompose, frame_residual, solve_frame, solve_frame_in, Decomposition};

use crate::profile::{Profile, ProfileError};
use crate::scalar::Scalar;
use crate::vector::VecN;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("no angle solves the orthogonality relation (Rt1 < Rt2)")]
    NoSolution,
    #[error("input outside the admissible domain: {0}")]
    OutOfDomain(String),
    #[error("point not in the diagonal set: {0}")]
    NotInS(String),
    #[error("no certified window at r = {r}")]
    NoWindow { r: f64 },
    #[error("lamination scaling b must be non-zero")]
    ZeroScaling,
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Gradient band structure of the constructed solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolutionType {
    /// Gradients in `[s_-²(r̃), s_+(r̃)] ∪ {0}`.
    #[serde(rename = "I")]
    TypeI,
    /// Gradients in `[0, s_-¹(r̃)] ∪ [s_0, s_+(r̃)]`.
    #[serde(rename = "II")]
    TypeII,
}

impl SolutionType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "I" | "1" | "TypeI" | "i" => Some(Self::TypeI),
            "II" | "2" | "TypeII" | "ii" => Some(Self::TypeII),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::TypeI => "I",
            Self::TypeII => "II",
        }
    }
}

/// Diagonal `(p, β)` of a matrix in the trace-free class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalPoint<T> {
    pub p: VecN<T>,
    pub beta: VecN<T>,
}

impl<T: Scalar> DiagonalPoint<T> {
    pub fn new(p: VecN<T>, beta: VecN<T>) -> Self {
        assert_eq!(p.dim(), beta.dim(), "p and beta must share a dimension");
        Self { p, beta }
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }
}

/// Level window `(r - μ, r + μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<T> {
    pub r: T,
    pub mu: T,
    pub solution_type: SolutionType,
}

impl<T: Scalar> Window<T> {
    pub fn new(r: T, mu: T, solution_type: SolutionType) -> Self {
        Self { r, mu, solution_type }
    }

    pub fn lo(&self) -> T {
        self.r - self.mu
    }

    pub fn hi(&self) -> T {
        self.r + self.mu
    }

    pub fn contains(&self, level: T) -> bool {
        level > self.lo() && level < self.hi()
    }

    /// Radius brackets of the two endpoint sets.
    pub fn geometry(&self, profile: &Profile<T>) -> Result<WindowGeometry<T>, GeometryError> {
        let (lo, hi) = (self.lo(), self.hi());
        if !(self.mu > T::zero() && lo > T::zero() && hi < profile.r_max()) {
            return Err(GeometryError::OutOfDomain(format!(
                "window ({lo}, {hi}) not inside (0, {})",
                profile.r_max()
            )));
        }
        let plus = (profile.s_plus_of(lo)?, profile.s_plus_of(hi)?);
        let minus = match self.solution_type {
            SolutionType::TypeI => (profile.s_minus2_of(hi)?, profile.s_minus2_of(lo)?),
            SolutionType::TypeII => (profile.s_minus1_of(lo)?, profile.s_minus1_of(hi)?),
        };
        Ok(WindowGeometry { window: *self, plus, minus })
    }
}

/// A window with its radius brackets resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowGeometry<T> {
    pub window: Window<T>,
    /// Open bracket for `|p + t_+ q|`.
    pub plus: (T, T),
    /// Open bracket for `|p + t_- q|`.
    pub minus: (T, T),
}

/// Rank-one frame `(q, γ, t_-, t_+)` through a diagonal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOneFrame<T> {
    pub q: VecN<T>,
    pub gamma: VecN<T>,
    pub t_minus: T,
    pub t_plus: T,
}

impl<T: Scalar> RankOneFrame<T> {
    /// Weight of the `+` endpoint, `-t_-/(t_+ - t_-)`.
    pub fn lambda(&self) -> T {
        -self.t_minus / (self.t_plus - self.t_minus)
    }

    pub fn endpoints(&self, p: VecN<T>) -> (VecN<T>, VecN<T>) {
        (p + self.q * self.t_minus, p + self.q * self.t_plus)
    }
}

/// Exact collinear connection at level `r` along `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollinearPair<T> {
    pub p_minus: VecN<T>,
    pub p_plus: VecN<T>,
    pub beta: VecN<T>,
}

pub fn collinear_connection<T: Scalar>(
    profile: &Profile<T>,
    r: T,
    zeta: VecN<T>,
    solution_type: SolutionType,
) -> Result<CollinearPair<T>, GeometryError> {
    let zeta = zeta.normalized().ok_or_else(|| GeometryError::OutOfDomain("zero direction".into()))?;
    let sp = profile.s_plus_of(r)?;
    let sm = match solution_type {
        SolutionType::TypeI => profile.s_minus2_of(r)?,
        SolutionType::TypeII => profile.s_minus1_of(r)?,
    };
    Ok(CollinearPair { p_minus: zeta * (-sm), p_plus: zeta * sp, beta: zeta * r })
}

/// Centres and widths of the perturbation bound for a window of
/// half-width `mu` around `r`.
pub fn connection_widths<T: Scalar>(
    profile: &Profile<T>,
    r: T,
    mu: T,
    solution_type: SolutionType,
) -> Result<PerturbationInput<T>, GeometryError> {
    let b = profile.s_plus_of(r)?;
    let d21 = b - profile.s_plus_of(r - mu)?;
    let d22 = profile.s_plus_of(r + mu)? - b;
    let (a, d11, d12) = match solution_type {
        SolutionType::TypeI => {
            let a = profile.s_minus2_of(r)?;
            (a, a - profile.s_minus2_of(r + mu)?, profile.s_minus2_of(r - mu)? - a)
        }
        SolutionType::TypeII => {
            let a = profile.s_minus1_of(r)?;
            (a, a - profile.s_minus1_of(r - mu)?, profile.s_minus1_of(r + mu)? - a)
        }
    };
    Ok(PerturbationInput { a, b, c: r, d11, d12, d21, d22, e1: mu, e2: mu })
}
