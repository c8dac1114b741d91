//! Uniform space-time grids on intervals and rectangles, with cell-centred
//! scalars and face-centred (staggered) vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("field has {got} entries per slice, grid expects {expected}")]
    Shape { expected: usize, got: usize },
}

/// Space-time grid over `(0,lx) [× (0,ly)] × (0,t_end)`.
///
/// One-dimensional grids carry `ny = 1` and `ly = 1` so that cell volumes
/// and integrals are written the same way in both dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridST {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub nt: usize,
    pub t_end: f64,
}

pub const MIN_CELLS: usize = 8;

impl GridST {
    pub fn new_1d(nx: usize, lx: f64, nt: usize, t_end: f64) -> Result<Self, GridError> {
        let g = Self { dim: 1, nx, ny: 1, lx, ly: 1.0, nt, t_end };
        g.validate()?;
        Ok(g)
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64, nt: usize, t_end: f64) -> Result<Self, GridError> {
        let g = Self { dim: 2, nx, ny, lx, ly, nt, t_end };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::Invalid(m));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if self.nx < MIN_CELLS || (self.dim == 2 && self.ny < MIN_CELLS) {
            return bad(format!("need at least {MIN_CELLS} cells per axis, got {}x{}", self.nx, self.ny));
        }
        if self.dim == 1 && (self.ny != 1 || self.ly != 1.0) {
            return bad("one-dimensional grids use ny = 1, ly = 1".into());
        }
        if !(self.lx > 0.0 && self.lx.is_finite() && self.ly > 0.0 && self.ly.is_finite()) {
            return bad(format!("extent must be positive, got {} x {}", self.lx, self.ly));
        }
        if self.nt == 0 || !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("need nt >= 1 and T > 0, got nt={} T={}", self.nt, self.t_end));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.nt as f64
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn y_faces(&self) -> usize {
        if self.dim == 2 {
            self.nx * (self.ny + 1)
        } else {
            0
        }
    }

    pub fn levels(&self) -> usize {
        self.nt + 1
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.lx * self.ly
    }

    /// `|Ω_T|`.
    pub fn spacetime_measure(&self) -> f64 {
        self.measure() * self.t_end
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (i, j) = (c % self.nx, c / self.nx);
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Index of x-face `i` (between cells `i-1` and `i`) in row `j`.
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    /// Index of y-face `j` (between cells `j-1` and `j`) in column `i`.
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn x_face_pos(&self, f: usize) -> (f64, f64) {
        let (i, j) = (f % (self.nx + 1), f / (self.nx + 1));
        (i as f64 * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn y_face_pos(&self, f: usize) -> (f64, f64) {
        let (i, j) = (f % self.nx, f / self.nx);
        ((i as f64 + 0.5) * self.hx(), j as f64 * self.hy())
    }

    /// Nodes carrying the gradient used for region masks and residuals:
    /// faces in one dimension, cells in two.
    pub fn gradient_nodes(&self) -> usize {
        if self.dim == 1 {
            self.nx + 1
        } else {
            self.cells()
        }
    }

    /// Quadrature weight of a gradient node (half cells at the ends in 1D).
    pub fn gradient_node_weight(&self, node: usize) -> f64 {
        if self.dim == 1 && (node == 0 || node == self.nx) {
            0.5 * self.hx()
        } else {
            self.cell_volume()
        }
    }

    /// Trapezoidal time weight of level `k`.
    pub fn level_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.nt {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    pub fn check_cells(&self, v: &[f64]) -> Result<(), GridError> {
        if v.len() != self.cells() {
            return Err(GridError::Shape { expected: self.cells(), got: v.len() });
        }
        Ok(())
    }

    /// Cell averages of `f` by 3-point Gauss quadrature per axis.
    pub fn cell_averages(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        const G: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 18.0), (0.0, 8.0 / 18.0), (0.774_596_669_241_483_4, 5.0 / 18.0)];
        let (hx, hy) = (self.hx(), self.hy());
        (0..self.cells())
            .map(|c| {
                let (x, y) = self.cell_center(c);
                if self.dim == 1 {
                    G.iter().map(|&(g, w)| w * f(x + 0.5 * g * hx, y)).sum()
                } else {
                    let mut s = 0.0;
                    for &(gx, wx) in &G {
                        for &(gy, wy) in &G {
                            s += wx * wy * f(x + 0.5 * gx * hx, y + 0.5 * gy * hy);
                        }
                    }
                    s
                }
            })
            .collect()
    }

    /// Point values of `f` at cell centres.
    pub fn sample_cells(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.cells()).map(|c| {
            let (x, y) = self.cell_center(c);
            f(x, y)
        }).collect()
    }
}

/// Cell-centred scalar, one slice per time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub slices: Vec<Vec<f64>>,
}

/// Face-centred vector: normal components on x-faces and y-faces, one
/// slice per time level. `y` slices are empty in one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl ScalarField {
    pub fn zeros(grid: &GridST) -> Self {
        Self { slices: vec![vec![0.0; grid.cells()]; grid.levels()] }
    }

    pub fn levels(&self) -> usize {
        self.slices.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().flatten().all(|v| v.is_finite())
    }
}

impl VectorField {
    pub fn zeros(grid: &GridST) -> Self {
        Self {
            x: vec![vec![0.0; grid.x_faces()]; grid.levels()],
            y: vec![vec![0.0; grid.y_faces()]; grid.levels()],
        }
    }

    pub fn levels(&self) -> usize {
        self.x.len()
    }

    pub fn slice(&self, k: usize) -> FaceSlice<'_> {
        FaceSlice { x: &self.x[k], y: &self.y[k] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).flatten().all(|v| v.is_finite())
    }
}

/// Borrowed face values at one time level.
#[derive(Debug, Clone, Copy)]
pub struct FaceSlice<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

pub fn integrate(grid: &GridST, cells: &[f64]) -> f64 {
    cells.iter().sum::<f64>() * grid.cell_volume()
}

pub fn mean(grid: &GridST, cells: &[f64]) -> f64 {
    integrate(grid, cells) / grid.measure()
}

/// Face-normal differences of a cell field; zero on boundary faces.
pub fn gradient(grid: &GridST, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut gx = vec![0.0; grid.x_faces()];
    let ihx = 1.0 / grid.hx();
    for j in 0..ny {
        for i in 1..nx {
            gx[grid.x_face(i, j)] = (u[grid.cell(i, j)] - u[grid.cell(i - 1, j)]) * ihx;
        }
    }
    let mut gy = vec![0.0; grid.y_faces()];
    if grid.dim == 2 {
        let ihy = 1.0 / grid.hy();
        for j in 1..ny {
            for i in 0..nx {
                gy[grid.y_face(i, j)] = (u[grid.cell(i, j)] - u[grid.cell(i, j - 1)]) * ihy;
            }
        }
    }
    (gx, gy)
}

/// Cell divergence of a face field.
pub fn divergence(grid: &GridST, vx: &[f64], vy: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let mut d = vec![0.0; grid.cells()];
    for j in 0..ny {
        for i in 0..nx {
            let mut s = (vx[grid.x_face(i + 1, j)] - vx[grid.x_face(i, j)]) * ihx;
            if grid.dim == 2 {
                s += (vy[grid.y_face(i, j + 1)] - vy[grid.y_face(i, j)]) * ihy;
            }
            d[grid.cell(i, j)] = s;
        }
    }
    d
}

/// Tangential gradient at x-faces: mean of the four surrounding y-face values.
pub fn tangential_at_x_faces(grid: &GridST, gy: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; grid.x_faces()];
    if grid.dim == 1 {
        return t;
    }
    for j in 0..grid.ny {
        for i in 0..=grid.nx {
            let mut s = 0.0;
            let mut n = 0.0;
            for ii in [i.wrapping_sub(1), i] {
                if ii < grid.nx {
                    s += gy[grid.y_face(ii, j)] + gy[grid.y_face(ii, j + 1)];
                    n += 2.0;
                }
            }
            t[grid.x_face(i, j)] = s / n;
        }
    }
    t
}

/// Tangential gradient at y-faces: mean of the four surrounding x-face values.
pub fn tangential_at_y_faces(grid: &GridST, gx: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; grid.y_faces()];
    if grid.dim == 1 {
        return t;
    }
    for j in 0..=grid.ny {
        for i in 0..grid.nx {
            let mut s = 0.0;
            let mut n = 0.0;
            for jj in [j.wrapping_sub(1), j] {
                if jj < grid.ny {
                    s += gx[grid.x_face(i, jj)] + gx[grid.x_face(i + 1, jj)];
                    n += 2.0;
                }
            }
            t[grid.y_face(i, j)] = s / n;
        }
    }
    t
}

/// Gradient vectors at the gradient nodes: faces in 1D, cell averages of
/// the adjacent face values in 2D.
pub fn node_gradients(grid: &GridST, gx: &[f64], gy: &[f64]) -> Vec<[f64; 2]> {
    if grid.dim == 1 {
        return gx.iter().map(|&g| [g, 0.0]).collect();
    }
    (0..grid.cells())
        .map(|c| {
            let (i, j) = (c % grid.nx, c / grid.nx);
            [
                0.5 * (gx[grid.x_face(i, j)] + gx[grid.x_face(i + 1, j)]),
                0.5 * (gy[grid.y_face(i, j)] + gy[grid.y_face(i, j + 1)]),
            ]
        })
        .collect()
}

/// Face vector values moved to the gradient nodes (same layout as
/// [`node_gradients`]).
pub fn node_vectors(grid: &GridST, v: FaceSlice<'_>) -> Vec<[f64; 2]> {
    node_gradients(grid, v.x, v.y)
}
