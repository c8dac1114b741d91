//! Linear solves for `s·x + Σ_faces w_f (x_c - x_nb)`: Thomas in 1D,
//! Jacobi-preconditioned conjugate gradients in 2D.

use super::grid::GridST;

/// Face weights of a symmetric five-point (three-point in 1D) operator.
pub(crate) struct FaceWeights {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceWeights {
    /// `scale·c_f/h²` per face with boundary faces zeroed.
    pub fn from_coeffs(grid: &GridST, cx: &[f64], cy: &[f64], scale: f64) -> Self {
        let (ihx2, ihy2) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
        let mut x = vec![0.0; grid.x_faces()];
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                let f = grid.x_face(i, j);
                x[f] = scale * cx[f] * ihx2;
            }
        }
        let mut y = vec![0.0; grid.y_faces()];
        if grid.dim == 2 {
            for j in 1..grid.ny {
                for i in 0..grid.nx {
                    let f = grid.y_face(i, j);
                    y[f] = scale * cy[f] * ihy2;
                }
            }
        }
        Self { x, y }
    }

    fn apply(&self, grid: &GridST, shift: f64, v: &[f64], out: &mut [f64]) {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.cell(i, j);
                let mut s = shift * v[c];
                let wl = self.x[grid.x_face(i, j)];
                let wr = self.x[grid.x_face(i + 1, j)];
                if i > 0 {
                    s += wl * (v[c] - v[c - 1]);
                }
                if i + 1 < grid.nx {
                    s += wr * (v[c] - v[c + 1]);
                }
                if grid.dim == 2 {
                    let wd = self.y[grid.y_face(i, j)];
                    let wu = self.y[grid.y_face(i, j + 1)];
                    if j > 0 {
                        s += wd * (v[c] - v[c - grid.nx]);
                    }
                    if j + 1 < grid.ny {
                        s += wu * (v[c] - v[c + grid.nx]);
                    }
                }
                out[c] = s;
            }
        }
    }

    fn diagonal(&self, grid: &GridST, shift: f64) -> Vec<f64> {
        let mut d = vec![shift; grid.cells()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.cell(i, j);
                d[c] += self.x[grid.x_face(i, j)] + self.x[grid.x_face(i + 1, j)];
                if grid.dim == 2 {
                    d[c] += self.y[grid.y_face(i, j)] + self.y[grid.y_face(i, j + 1)];
                }
            }
        }
        d
    }
}

/// Solves `(shift·I + L_w) x = b`. With `shift = 0` the system is the
/// singular Neumann operator; `b` must then have zero sum and the
/// returned solution has zero sum.
pub(crate) fn solve(grid: &GridST, w: &FaceWeights, shift: f64, b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    if grid.dim == 1 && shift > 0.0 {
        return Some(thomas(grid, w, shift, b));
    }
    cg(grid, w, shift, b, rel_tol)
}

fn thomas(grid: &GridST, w: &FaceWeights, shift: f64, b: &[f64]) -> Vec<f64> {
    let n = grid.nx;
    let mut diag = w.diagonal(grid, shift);
    let off = |i: usize| -w.x[i]; // coupling between cells i-1 and i
    let mut rhs = b.to_vec();
    for i in 1..n {
        let m = off(i) / diag[i - 1];
        diag[i] -= m * off(i);
        rhs[i] -= m * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - off(i + 1) * x[i + 1]) / diag[i];
    }
    x
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cg(grid: &GridST, w: &FaceWeights, shift: f64, b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let singular = shift == 0.0;
    let diag = w.diagonal(grid, shift);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if singular {
        project_mean(&mut r);
    }
    let bnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if bnorm == 0.0 {
        return Some(x);
    }
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        if singular {
            project_mean(z);
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 20 * n + 100;
    for _ in 0..max_iter {
        w.apply(grid, shift, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rn <= rel_tol * bnorm {
            if singular {
                project_mean(&mut x);
            }
            return Some(x);
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // accept a stagnated iterate if its true residual is acceptable
    let mut ax = vec![0.0; n];
    w.apply(grid, shift, &x, &mut ax);
    let res = ax.iter().zip(b).fold(0.0f64, |m, (a, bb)| m.max((a - bb).abs()));
    if res <= 100.0 * rel_tol * bnorm {
        if singular {
            project_mean(&mut x);
        }
        Some(x)
    } else {
        None
    }
}
