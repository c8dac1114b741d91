use super::{BoxST, OscillationError};
use crate::parabolic::{ScalarField, VectorField};

/// Output of [`div_right_inverse`].
#[derive(Debug, Clone)]
pub struct DivInverse {
    pub g: VectorField,
    /// `‖g_t‖∞ / ((|J₁|+⋯+|J_n|) ‖φ_t‖∞)` measured by differences in time;
    /// zero when `φ` does not change.
    pub measured_constant: f64,
    /// The constant the bound is monitored against.
    pub default_constant: f64,
}

/// Bound constant of the sweep construction: 1 in one dimension, 2 in two.
pub fn default_constant(dim: usize) -> f64 {
    if dim == 1 {
        1.0
    } else {
        2.0
    }
}

/// Face field `g` with `div g = phi` on every slice and zero normal trace
/// on the box boundary. `phi` holds cell values on the box grid;
/// `collar` optionally demands that `phi` vanish within that many cells of
/// the spatial boundary.
pub fn div_right_inverse(phi: &ScalarField, bx: &BoxST, collar: Option<usize>) -> Result<DivInverse, OscillationError> {
    let grid = bx.local_grid()?;
    if phi.levels() != grid.levels() || phi.slices.iter().any(|s| s.len() != grid.cells()) {
        return Err(OscillationError::Shape);
    }
    let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx(), grid.hy());
    let scale = phi.max_abs();
    for (k, s) in phi.slices.iter().enumerate() {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        if mean.abs() > 1e-12 * scale {
            return Err(OscillationError::MeanNotZero { slice: k, mean });
        }
        if let Some(w) = collar {
            for j in 0..ny {
                for i in 0..nx {
                    let near = i < w || i + w >= nx || (grid.dim == 2 && (j < w || j + w >= ny));
                    let val = s[grid.cell(i, j)];
                    if near && val != 0.0 {
                        return Err(OscillationError::BoundaryNotClean { slice: k, value: val });
                    }
                }
            }
        }
    }
    let mut g = VectorField::zeros(&grid);
    let a = 1.0 / grid.lx;
    for (k, s) in phi.slices.iter().enumerate() {
        let gx = &mut g.x[k];
        // row integrals and their running sum in y
        let mut col = 0.0;
        for j in 0..ny {
            let row: f64 = (0..nx).map(|i| s[grid.cell(i, j)]).sum::<f64>() * hx;
            let mut acc = 0.0;
            for i in 1..nx {
                acc += (s[grid.cell(i - 1, j)] - a * row) * hx;
                gx[grid.x_face(i, j)] = acc;
            }
            if grid.dim == 2 && j + 1 < ny {
                col += row * hy;
                for i in 0..nx {
                    g.y[k][grid.y_face(i, j + 1)] = a * col;
                }
            }
        }
    }
    let sum_sides: f64 = bx.sides()[..bx.dim()].iter().sum();
    let mut measured = 0.0;
    if grid.levels() > 1 {
        let dt = grid.dt();
        let mut gt: f64 = 0.0;
        let mut pt: f64 = 0.0;
        for k in 1..grid.levels() {
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / dt;
            gt = gt.max(d(&g.x[k], &g.x[k - 1])).max(d(&g.y[k], &g.y[k - 1]));
            pt = pt.max(d(&phi.slices[k], &phi.slices[k - 1]));
        }
        if pt > 0.0 {
            measured = gt / (sum_sides * pt);
        }
    }
    Ok(DivInverse { g, measured_constant: measured, default_constant: default_constant(bx.dim()) })
}
