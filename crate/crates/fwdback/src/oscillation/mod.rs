//! Lamination patches and the divergence right-inverse on space-time boxes.

mod divinv;
mod laminate;
mod sawtooth;

pub use divinv::{div_right_inverse, DivInverse};
pub use laminate::{build_laminate, LaminateAudit, LaminateFrame, LaminatePatch};

use crate::parabolic::{GridST, ScalarField, VectorField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OscillationError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("budget infeasible: {constraint} needs {required:e}, have {available:e}")]
    BudgetInfeasible { constraint: String, required: f64, available: f64 },
    #[error("slice {slice} has mean {mean:e}")]
    MeanNotZero { slice: usize, mean: f64 },
    #[error("slice {slice} is {value:e} inside the boundary collar")]
    BoundaryNotClean { slice: usize, value: f64 },
    #[error("field shape does not match the box")]
    Shape,
}

/// Space-time box `Q × I`: axes are the spatial ones followed by time.
///
/// `cells` gives the working resolution per axis (time counts intervals);
/// an empty list marks a continuum box with no resolution constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxST {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl BoxST {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self, OscillationError> {
        let b = Self { lo, hi, cells };
        b.validate()?;
        Ok(b)
    }

    pub fn continuum(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, OscillationError> {
        Self::new(lo, hi, Vec::new())
    }

    /// The box covering cells `i0..i0+nx` (× `j0..j0+ny`) and levels
    /// `k0..=k0+nt` of a grid.
    pub fn on_grid(grid: &GridST, i0: usize, j0: usize, k0: usize, nx: usize, ny: usize, nt: usize) -> Result<Self, OscillationError> {
        if i0 + nx > grid.nx || j0 + ny > grid.ny || k0 + nt > grid.nt {
            return Err(OscillationError::InvalidBox("box exceeds the grid".into()));
        }
        let (hx, hy, dt) = (grid.hx(), grid.hy(), grid.dt());
        let (t0, t1) = (k0 as f64 * dt, (k0 + nt) as f64 * dt);
        if grid.dim == 1 {
            Self::new(vec![i0 as f64 * hx, t0], vec![(i0 + nx) as f64 * hx, t1], vec![nx, nt])
        } else {
            Self::new(
                vec![i0 as f64 * hx, j0 as f64 * hy, t0],
                vec![(i0 + nx) as f64 * hx, (j0 + ny) as f64 * hy, t1],
                vec![nx, ny, nt],
            )
        }
    }

    fn validate(&self) -> Result<(), OscillationError> {
        let bad = |m: &str| Err(OscillationError::InvalidBox(m.into()));
        if self.lo.len() != self.hi.len() || !(2..=3).contains(&self.lo.len()) {
            return bad("need 1 or 2 spatial axes plus time");
        }
        if !self.cells.is_empty() && (self.cells.len() != self.lo.len() || self.cells.iter().any(|&c| c == 0)) {
            return bad("cells must be positive, one per axis");
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return bad("side lengths must be positive and finite");
        }
        Ok(())
    }

    /// Number of spatial axes.
    pub fn dim(&self) -> usize {
        self.lo.len() - 1
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn sides(&self) -> Vec<f64> {
        (0..self.lo.len()).map(|a| self.side(a)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.sides().iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn measure(&self) -> f64 {
        self.sides().iter().product()
    }

    /// Spatial measure `|Q|`.
    pub fn spatial_measure(&self) -> f64 {
        self.sides()[..self.dim()].iter().product()
    }

    /// Grid steps per axis, if the box carries a resolution.
    pub fn steps(&self) -> Option<Vec<f64>> {
        (!self.cells.is_empty()).then(|| self.cells.iter().enumerate().map(|(a, &c)| self.side(a) / c as f64).collect())
    }

    /// Box-local grid (time measured from `lo[time]`).
    pub fn local_grid(&self) -> Result<GridST, OscillationError> {
        if self.cells.is_empty() {
            return Err(OscillationError::InvalidBox("continuum box has no grid".into()));
        }
        let n = self.dim();
        Ok(GridST {
            dim: n,
            nx: self.cells[0],
            ny: if n == 2 { self.cells[1] } else { 1 },
            lx: self.side(0),
            ly: if n == 2 { self.side(1) } else { 1.0 },
            nt: self.cells[n],
            t_end: self.side(n),
        })
    }
}

/// Index offsets of a box inside a global grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub i0: usize,
    pub j0: usize,
    pub k0: usize,
}

/// Adds `phi` to `u` and `flux` to `v` on the box nodes. Normal faces on
/// the box boundary are skipped, so everything outside the box interior is
/// left bitwise unchanged.
pub fn apply_patch(
    u: &mut ScalarField,
    v: &mut VectorField,
    grid: &GridST,
    local: &GridST,
    at: Placement,
    phi: &ScalarField,
    flux: &VectorField,
) -> Result<(), OscillationError> {
    if phi.levels() != local.levels()
        || flux.levels() != local.levels()
        || at.i0 + local.nx > grid.nx
        || at.j0 + local.ny > grid.ny
        || at.k0 + local.nt > grid.nt
    {
        return Err(OscillationError::Shape);
    }
    for k in 0..local.levels() {
        let gk = at.k0 + k;
        for j in 0..local.ny {
            for i in 0..local.nx {
                u.slices[gk][grid.cell(at.i0 + i, at.j0 + j)] += phi.slices[k][local.cell(i, j)];
            }
            for i in 1..local.nx {
                v.x[gk][grid.x_face(at.i0 + i, at.j0 + j)] += flux.x[k][local.x_face(i, j)];
            }
        }
        if grid.dim == 2 {
            for j in 1..local.ny {
                for i in 0..local.nx {
                    v.y[gk][grid.y_face(at.i0 + i, at.j0 + j)] += flux.y[k][local.y_face(i, j)];
                }
            }
        }
    }
    Ok(())
}
