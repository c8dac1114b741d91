use super::sawtooth::Sawtooth;
use super::{BoxST, OscillationError};
use crate::linalg::Mat;
use crate::parabolic::grid::divergence;
use crate::parabolic::{GridST, ScalarField, VectorField};
use crate::VecN;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rank-one direction `η = (1, γ/b) ⊗ (q, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaminateFrame {
    pub q: VecN<f64>,
    pub b: f64,
    pub gamma: VecN<f64>,
}

impl LaminateFrame {
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `(1+n) × (n+1)` matrix: row 0 is `(q, b)`, rows below are
    /// `(γ_i q / b, γ_i)`.
    pub fn eta(&self) -> Mat<f64> {
        let n = self.dim();
        let mut e = Mat::zeros(1 + n, n + 1);
        for j in 0..n {
            e[(0, j)] = self.q[j];
        }
        e[(0, n)] = self.b;
        for i in 0..n {
            for j in 0..n {
                e[(1 + i, j)] = self.gamma[i] * self.q[j] / self.b;
            }
            e[(1 + i, n)] = self.gamma[i];
        }
        e
    }

    /// `γ = g·q⊥`; zero in one dimension.
    fn stream_coeff(&self) -> f64 {
        if self.dim() == 1 {
            0.0
        } else {
            self.gamma.dot(&self.q.perp())
        }
    }
}

/// Compactly supported `ω = (φ, ψ)` whose gradient is `-λ₁η` or `λ₂η`
/// off a small set.
#[derive(Debug, Clone)]
pub struct LaminatePatch {
    pub frame: LaminateFrame,
    pub lambda1: f64,
    pub lambda2: f64,
    pub bx: BoxST,
    pub eps: f64,
    /// Spatial-temporal period of the phase `q·x + b t`.
    pub period: f64,
    /// Half-width of each smoothed kink measured along `(q, b)`.
    pub mollifier: f64,
    /// Width of the cutoff ramp per axis.
    pub margins: Vec<f64>,
    /// `ω ≡ 0` (budget exceeds the box measure).
    pub zero: bool,
    saw: Option<Sawtooth>,
}

/// Measurements of a patch against its ε-properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaminateAudit {
    pub eps: f64,
    /// Measure of `{∇ω ∉ {η₁, η₂}}` estimated on the audit lattice.
    pub off_measure: f64,
    /// `max dist(∇ω, [η₁, η₂])` over the audit lattice.
    pub max_dist: f64,
    pub sup_norm: f64,
    /// Discrete `div ψ` relative to `max(|η₁|, |η₂|)`.
    pub div_residual: f64,
    /// Largest per-slice mean of the discrete `φ` relative to `‖φ‖∞`.
    pub mean_residual: f64,
    pub lattice_points: usize,
}

impl LaminateAudit {
    pub fn passes(&self) -> bool {
        self.off_measure < self.eps
            && self.max_dist < self.eps
            && self.sup_norm < self.eps
            && self.div_residual <= 1e-8
            && self.mean_residual <= 1e-12
    }
}

const C1: f64 = 1.875;
const C2: f64 = 5.773_502_691_896_258;

/// Ramp `0 → 1` on `[0, 1]` with two continuous derivatives.
fn ramp(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        (x2 * x * (10.0 - 15.0 * x + 6.0 * x2), 30.0 * x2 * (1.0 - x) * (1.0 - x), 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x))
    }
}

fn frob(m: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

/// Builds a laminate in direction `η` with weights `λ₁, λ₂` on `bx`,
/// splitting `eps` in thirds between the exceptional measure, the distance
/// to the segment `[η₁, η₂]` and the sup norm.
pub fn build_laminate(frame: &LaminateFrame, lambda1: f64, lambda2: f64, bx: &BoxST, eps: f64) -> Result<LaminatePatch, OscillationError> {
    let n = frame.dim();
    let bad = |m: String| Err(OscillationError::InvalidFrame(m));
    if bx.dim() != n {
        return bad(format!("frame has dimension {n}, box {}", bx.dim()));
    }
    if (frame.q.norm() - 1.0).abs() > 1e-9 {
        return bad(format!("|q| = {} is not 1", frame.q.norm()));
    }
    if !(frame.b != 0.0 && frame.b.is_finite()) {
        return bad("b must be finite and nonzero".into());
    }
    if frame.gamma.dot(&frame.q).abs() > 1e-9 * (1.0 + frame.gamma.norm()) || !frame.gamma.is_finite() {
        return bad("gamma must be orthogonal to q".into());
    }
    if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return bad("weights must be positive".into());
    }
    if !(eps > 0.0) {
        return bad("eps must be positive".into());
    }
    let measure = bx.measure();
    let mut patch = LaminatePatch {
        frame: *frame,
        lambda1,
        lambda2,
        bx: bx.clone(),
        eps,
        period: 0.0,
        mollifier: 0.0,
        margins: vec![0.0; n + 1],
        zero: true,
        saw: None,
    };
    if eps > measure {
        return Ok(patch);
    }

    let frac = eps / 3.0 / measure.max(1.0);
    let plateau = (1.0 - 0.5 * frac).powf(1.0 / (n as f64 + 1.0));
    let margins: Vec<f64> = bx.sides().iter().map(|s| 0.5 * s * (1.0 - plateau)).collect();
    let saw = Sawtooth::new(lambda1, lambda2, frac / 8.0);

    let c1: Vec<f64> = margins.iter().map(|m| C1 / m).collect();
    let c2: Vec<f64> = margins.iter().map(|m| C2 / (m * m)).collect();
    let d1 = c1.iter().map(|c| c * c).sum::<f64>().sqrt();
    let d1x = c1[..n].iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut d2sq: f64 = c2.iter().map(|c| c * c).sum();
    for a in 0..=n {
        for b in 0..=n {
            if a != b {
                d2sq += c1[a] * c1[a] * c1[b] * c1[b];
            }
        }
    }
    let d2 = d2sq.sqrt();
    let qn = (1.0 + frame.b * frame.b).sqrt();
    let gk = 1.0 + (frame.stream_coeff() / frame.b).abs();
    let (s0, s1) = (saw.s_bound(), saw.s1_bound());
    let budget = eps / 3.0;
    // largest P with αP + βP² ≤ budget
    let solve = |alpha: f64, beta: f64| 2.0 * budget / (alpha + (alpha * alpha + 4.0 * beta * budget).sqrt());
    let p_dist = solve(gk * s0 * (d1 + qn * d1x), gk * s1 * d2);
    let p_sup = solve(gk * s0, gk * s1 * d1x);
    let period = 0.9 * p_dist.min(p_sup).min(bx.diameter());
    let mollifier = saw.rho * period / qn;

    if let Some(h) = bx.steps() {
        let hmax = h.iter().cloned().fold(0.0, f64::max);
        if mollifier < 2.0 * hmax {
            return Err(OscillationError::BudgetInfeasible {
                constraint: "mollifier radius below two grid steps".into(),
                required: 2.0 * hmax,
                available: mollifier,
            });
        }
        if let Some((a, m)) = margins.iter().enumerate().find(|(a, m)| **m < 2.0 * h[*a]) {
            return Err(OscillationError::BudgetInfeasible {
                constraint: format!("cutoff margin on axis {a} below two grid steps"),
                required: 2.0 * h[a],
                available: *m,
            });
        }
    }
    patch.period = period;
    patch.mollifier = mollifier;
    patch.margins = margins;
    patch.zero = false;
    patch.saw = Some(saw);
    Ok(patch)
}

struct Local {
    chi: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
    d: f64,
    s: f64,
    s1: f64,
}

impl LaminatePatch {
    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn eta1(&self) -> Mat<f64> {
        self.frame.eta().scale(-self.lambda1)
    }

    pub fn eta2(&self) -> Mat<f64> {
        self.frame.eta().scale(self.lambda2)
    }

    fn local(&self, z: &[f64]) -> Option<Local> {
        let saw = self.saw.as_ref()?;
        let n = self.dim();
        let mut f = [0.0; 3];
        let mut f1 = [0.0; 3];
        let mut f2 = [0.0; 3];
        for a in 0..=n {
            let (lo, hi, m) = (self.bx.lo[a], self.bx.hi[a], self.margins[a]);
            let (l, l1, l2) = ramp((z[a] - lo) / m);
            let (r, r1, r2) = ramp((hi - z[a]) / m);
            f[a] = l * r;
            f1[a] = (l1 * r - l * r1) / m;
            f2[a] = (l2 * r - 2.0 * l1 * r1 + l * r2) / (m * m);
        }
        let prod_except = |skip: &[usize]| (0..=n).filter(|a| !skip.contains(a)).map(|a| f[a]).product::<f64>();
        let chi = prod_except(&[]);
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for a in 0..=n {
            grad[a] = f1[a] * prod_except(&[a]);
            for b in 0..=n {
                hess[a][b] = if a == b { f2[a] * prod_except(&[a]) } else { f1[a] * f1[b] * prod_except(&[a, b]) };
            }
        }
        let c = self.bx.center();
        let mut phase = self.frame.b * (z[n] - c[n]);
        for j in 0..n {
            phase += self.frame.q[j] * (z[j] - c[j]);
        }
        let th = phase / self.period;
        Some(Local { chi, grad, hess, d: saw.d(th), s: self.period * saw.s(th), s1: self.period * self.period * saw.s1(th) })
    }

    /// `(φ, ψ)` at a space-time point.
    pub fn value(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; 1 + n];
        let Some(l) = self.local(z) else { return out };
        let q = &self.frame.q;
        let qdx: f64 = (0..n).map(|j| q[j] * l.grad[j]).sum();
        out[0] = l.chi * l.s + l.s1 * qdx;
        if n == 2 {
            let k = self.frame.stream_coeff() / self.frame.b;
            let jq = q.perp();
            // J∇χ with J(a, b) = (-b, a)
            let jg = [-l.grad[1], l.grad[0]];
            for i in 0..2 {
                out[1 + i] = k * (l.chi * l.s * jq[i] + l.s1 * jg[i]);
            }
        }
        out
    }

    /// Space-time gradient `∇ω`, a `(1+n) × (n+1)` matrix.
    pub fn gradient(&self, z: &[f64]) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(1 + n, n + 1);
        let Some(l) = self.local(z) else { return m };
        let q = &self.frame.q;
        let big_q: Vec<f64> = (0..n).map(|j| q[j]).chain(std::iter::once(self.frame.b)).collect();
        let qdx: f64 = (0..n).map(|j| q[j] * l.grad[j]).sum();
        for k in 0..=n {
            let qdxk: f64 = (0..n).map(|j| q[j] * l.hess[j][k]).sum();
            m[(0, k)] = l.grad[k] * l.s + l.chi * l.d * big_q[k] + l.s * big_q[k] * qdx + l.s1 * qdxk;
        }
        if n == 2 {
            let kk = self.frame.stream_coeff() / self.frame.b;
            let jq = q.perp();
            let jg = [-l.grad[1], l.grad[0]];
            for k in 0..=n {
                let jgk = [-l.hess[1][k], l.hess[0][k]];
                for i in 0..2 {
                    m[(1 + i, k)] = kk * ((l.grad[k] * l.s + l.chi * l.d * big_q[k]) * jq[i] + l.s * big_q[k] * jg[i] + l.s1 * jgk[i]);
                }
            }
        }
        m
    }

    /// Samples the patch on the box grid: `φ` as the discrete divergence of
    /// `χ S₁ q` and `ψ` as the discrete rotated gradient of a corner stream
    /// function, so that per-slice means and `div ψ` vanish to round-off.
    pub fn discretize(&self, grid: &GridST) -> (ScalarField, VectorField) {
        let mut phi = ScalarField::zeros(grid);
        let mut psi = VectorField::zeros(grid);
        if self.zero {
            return (phi, psi);
        }
        let n = self.dim();
        let (hx, hy, dt) = (grid.hx(), grid.hy(), grid.dt());
        let (x0, t0) = (self.bx.lo[0], self.bx.lo[n]);
        let y0 = if n == 2 { self.bx.lo[1] } else { 0.0 };
        let q = self.frame.q;
        let coeff = if n == 2 { self.frame.stream_coeff() / self.frame.b } else { 0.0 };
        let point = |x: f64, y: f64, t: f64| if n == 1 { vec![x, t] } else { vec![x, y, t] };
        let s1chi = |z: &[f64]| self.local(z).map_or(0.0, |l| l.chi * l.s1);
        let slices: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..grid.levels())
            .into_par_iter()
            .map(|k| {
                let t = t0 + k as f64 * dt;
                let mut fx = vec![0.0; grid.x_faces()];
                let mut fy = vec![0.0; grid.y_faces()];
                for j in 0..grid.ny {
                    for i in 1..grid.nx {
                        let f = grid.x_face(i, j);
                        fx[f] = s1chi(&point(x0 + i as f64 * hx, y0 + (j as f64 + 0.5) * hy, t)) * q[0];
                    }
                }
                if n == 2 {
                    for j in 1..grid.ny {
                        for i in 0..grid.nx {
                            let f = grid.y_face(i, j);
                            fy[f] = s1chi(&point(x0 + (i as f64 + 0.5) * hx, y0 + j as f64 * hy, t)) * q[1];
                        }
                    }
                }
                let ph = divergence(grid, &fx, &fy);
                let mut px = vec![0.0; grid.x_faces()];
                let mut py = vec![0.0; grid.y_faces()];
                if n == 2 && coeff != 0.0 {
                    let nc = grid.nx + 1;
                    let mut stream = vec![0.0; nc * (grid.ny + 1)];
                    for j in 1..grid.ny {
                        for i in 1..grid.nx {
                            stream[i + nc * j] = coeff * s1chi(&point(x0 + i as f64 * hx, y0 + j as f64 * hy, t));
                        }
                    }
                    for j in 0..grid.ny {
                        for i in 0..=grid.nx {
                            px[grid.x_face(i, j)] = -(stream[i + nc * (j + 1)] - stream[i + nc * j]) / hy;
                        }
                    }
                    for j in 0..=grid.ny {
                        for i in 0..grid.nx {
                            py[grid.y_face(i, j)] = (stream[i + 1 + nc * j] - stream[i + nc * j]) / hx;
                        }
                    }
                }
                (ph, px, py)
            })
            .collect();
        for (k, (ph, px, py)) in slices.into_iter().enumerate() {
            phi.slices[k] = ph;
            psi.x[k] = px;
            psi.y[k] = py;
        }
        (phi, psi)
    }

    /// Measures the ε-properties: the gradient conditions on a lattice
    /// `factor` times finer than the box grid (32 or 16 cells per axis for
    /// continuum boxes) and the discrete invariants on the box grid.
    pub fn audit(&self, factor: usize) -> LaminateAudit {
        let n = self.dim();
        let cells = if self.bx.cells.is_empty() { vec![if n == 1 { 32 } else { 16 }; n + 1] } else { self.bx.cells.clone() };
        let lattice: Vec<usize> = cells.iter().map(|c| c * factor).collect();
        let e1 = self.eta1();
        let e2 = self.eta2();
        let seg = e2.sub(&e1);
        let seg2 = frob(&seg).powi(2);
        let (tol1, tol2) = (1e-9 * (1.0 + frob(&e1)), 1e-9 * (1.0 + frob(&e2)));
        let sides = self.bx.sides();
        let points: usize = lattice.iter().product();
        let tn = lattice[n];
        let per_slice: Vec<(usize, f64, f64)> = (0..tn)
            .into_par_iter()
            .map(|kt| {
                let mut off = 0usize;
                let (mut dist, mut sup) = (0.0f64, 0.0f64);
                let t = self.bx.lo[n] + (kt as f64 + 0.5) * sides[n] / tn as f64;
                let ny = if n == 2 { lattice[1] } else { 1 };
                for j in 0..ny {
                    for i in 0..lattice[0] {
                        let x = self.bx.lo[0] + (i as f64 + 0.5) * sides[0] / lattice[0] as f64;
                        let z = if n == 1 {
                            vec![x, t]
                        } else {
                            vec![x, self.bx.lo[1] + (j as f64 + 0.5) * sides[1] / ny as f64, t]
                        };
                        let g = self.gradient(&z);
                        if frob(&g.sub(&e1)) > tol1 && frob(&g.sub(&e2)) > tol2 {
                            off += 1;
                        }
                        let d = g.sub(&e1);
                        let mut s = 0.0;
                        for a in 0..d.rows() {
                            for b in 0..d.cols() {
                                s += d[(a, b)] * seg[(a, b)];
                            }
                        }
                        let s = (s / seg2).clamp(0.0, 1.0);
                        dist = dist.max(frob(&d.sub(&seg.scale(s))));
                        sup = sup.max(self.value(&z).iter().map(|v| v * v).sum::<f64>().sqrt());
                    }
                }
                (off, dist, sup)
            })
            .collect();
        let off: usize = per_slice.iter().map(|p| p.0).sum();
        let max_dist = per_slice.iter().map(|p| p.1).fold(0.0, f64::max);
        let sup_norm = per_slice.iter().map(|p| p.2).fold(0.0, f64::max);

        let work = BoxST { lo: self.bx.lo.clone(), hi: self.bx.hi.clone(), cells };
        let grid = work.local_grid().expect("box with cells has a grid");
        let (phi, psi) = self.discretize(&grid);
        let scale = frob(&e1).max(frob(&e2));
        let mut div_res: f64 = 0.0;
        let mut mean_res: f64 = 0.0;
        let phimax = phi.max_abs();
        for k in 0..grid.levels() {
            let d = divergence(&grid, &psi.x[k], &psi.y[k]);
            div_res = div_res.max(d.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale);
            if phimax > 0.0 {
                let mean = phi.slices[k].iter().sum::<f64>() / grid.cells() as f64;
                mean_res = mean_res.max(mean.abs() / phimax);
            }
        }
        LaminateAudit {
            eps: self.eps,
            off_measure: off as f64 / points as f64 * self.bx.measure(),
            max_dist,
            sup_norm,
            div_residual: div_res,
            mean_residual: mean_res,
            lattice_points: points,
        }
    }
}
