//! Approximate Lipschitz solutions of forward-backward diffusion
//! equations `u_t = div A(Du)` with non-monotone radial flux, built by
//! convex integration on space-time grids.
//!
//! The profile, root finding and geometry layers are generic over the
//! scalar type; the grid layers work in `f64`.

pub mod geometry;
pub mod linalg;
pub mod oscillation;
pub mod parabolic;
pub mod profile;
pub mod roots;
pub mod scalar;
pub mod scheme;
pub mod vector;
pub mod verify;

pub use geometry::{DiagonalPoint, RankOneFrame, SolutionType, Window};
pub use scalar::Scalar;
pub use vector::VecN;

/// Double precision profile.
pub type Profile = profile::Profile<f64>;
/// Double precision modified profile.
pub type ModifiedProfile = profile::ModifiedProfile<f64>;
