//! Classical pre-solve: implicit finite volumes for the uniformly
//! parabolic Neumann problem, the Neumann potential of the initial datum,
//! the vector potential `v*` and the space-time region partition.

pub mod grid;
mod linear;

pub use grid::{FaceSlice, GridError, GridST, ScalarField, VectorField};

use crate::profile::{ModifiedProfile, Profile, ProfileError};
use grid::{divergence, gradient, node_gradients, tangential_at_x_faces, tangential_at_y_faces};
use linear::FaceWeights;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParabolicError {
    #[error("nonlinear solve stalled at step {step} with residual {residual:e}")]
    NonlinearDivergence { step: usize, residual: f64 },
    #[error("initial datum has mean {mean:e}; the Neumann problem needs zero mean")]
    Incompatible { mean: f64 },
    #[error("linear solver failed at step {step}")]
    LinearSolve { step: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Radial diffusivity `f(|p|²)` with flux `f(|p|²) p`.
pub trait Diffusivity: Sync {
    fn f(&self, s2: f64) -> f64;
    /// Derivative of `f` with respect to `s2 = |p|²`.
    fn f_prime(&self, s2: f64) -> f64;
}

/// `f ≡ k`: the heat equation with conductivity `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDiffusivity(pub f64);

impl Diffusivity for ConstantDiffusivity {
    fn f(&self, _s2: f64) -> f64 {
        self.0
    }

    fn f_prime(&self, _s2: f64) -> f64 {
        0.0
    }
}

impl Diffusivity for ModifiedProfile<f64> {
    fn f(&self, s2: f64) -> f64 {
        self.f_tilde(s2)
    }

    fn f_prime(&self, s2: f64) -> f64 {
        self.f_tilde_prime(s2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Accepted max-norm of the per-step nonlinear residual, relative to
    /// `max(1, ‖u_old‖∞)`.
    pub tol: f64,
    pub max_picard: usize,
    pub max_newton: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_picard: 4, max_newton: 60 }
    }
}

/// Output of [`solve_parabolic`].
#[derive(Debug, Clone)]
pub struct ParabolicSolution {
    pub u: ScalarField,
    /// Face flux used by each step; slice 0 is the flux of the initial datum.
    pub flux: VectorField,
    /// Per-step nonlinear residual (max norm).
    pub residuals: Vec<f64>,
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    /// `‖Du(·,t_k)‖∞` per level.
    pub max_gradient: Vec<f64>,
}

/// Gradient growth against the surrogate maximum principle bound
/// `‖Du₀‖∞ (1 + 10 dt Θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientMonitor {
    pub initial: f64,
    pub max: f64,
    pub bound: f64,
    pub holds: bool,
}

impl ParabolicSolution {
    pub fn gradient_monitor(&self, dt: f64, theta_hi: f64) -> GradientMonitor {
        let initial = self.max_gradient[0];
        let max = self.max_gradient.iter().cloned().fold(0.0, f64::max);
        let bound = initial * (1.0 + 10.0 * dt * theta_hi);
        GradientMonitor { initial, max, bound, holds: max <= bound * (1.0 + 1e-12) + 1e-14 }
    }
}

struct Fluxes {
    fx: Vec<f64>,
    fy: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    tx: Vec<f64>,
    ty: Vec<f64>,
}

fn fluxes(grid: &GridST, diff: &dyn Diffusivity, u: &[f64]) -> Fluxes {
    let (gx, gy) = gradient(grid, u);
    let tx = tangential_at_x_faces(grid, &gy);
    let ty = tangential_at_y_faces(grid, &gx);
    let fx = gx.iter().zip(&tx).map(|(&g, &t)| if g == 0.0 { 0.0 } else { diff.f(g * g + t * t) * g }).collect();
    let fy = gy.iter().zip(&ty).map(|(&g, &t)| if g == 0.0 { 0.0 } else { diff.f(g * g + t * t) * g }).collect();
    Fluxes { fx, fy, gx, gy, tx, ty }
}

/// Discrete flux `f(|Du|²)Du` at the faces of a cell field.
pub fn face_flux(grid: &GridST, diff: &dyn Diffusivity, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let f = fluxes(grid, diff, u);
    (f.fx, f.fy)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn residual(grid: &GridST, u: &[f64], u_old: &[f64], fl: &Fluxes) -> Vec<f64> {
    let d = divergence(grid, &fl.fx, &fl.fy);
    let dt = grid.dt();
    (0..u.len()).map(|i| u[i] - u_old[i] - dt * d[i]).collect()
}

/// Picard (frozen `f`) or Newton (normal derivative) face coefficients.
fn coefficients(diff: &dyn Diffusivity, g: &[f64], t: &[f64], newton: bool) -> Vec<f64> {
    g.iter()
        .zip(t)
        .map(|(&g, &t)| {
            let s2 = g * g + t * t;
            if newton {
                diff.f(s2) + 2.0 * diff.f_prime(s2) * g * g
            } else {
                diff.f(s2)
            }
        })
        .collect()
}

struct StepOutcome {
    u: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    residual: f64,
    picard: usize,
    newton: usize,
}

fn step(grid: &GridST, diff: &dyn Diffusivity, u_old: &[f64], opts: &SolveOptions, k: usize) -> Result<StepOutcome, ParabolicError> {
    let dt = grid.dt();
    let scale = max_abs(u_old).max(1.0);
    let target = 1e-3 * opts.tol * scale;
    let mut u = u_old.to_vec();
    let mut fl = fluxes(grid, diff, &u);
    let mut g = residual(grid, &u, u_old, &fl);
    let mut rn = max_abs(&g);
    let (mut picard, mut newton) = (0, 0);

    while picard < opts.max_picard && rn > target {
        let a = coefficients(diff, &fl.gx, &fl.tx, false);
        let b = coefficients(diff, &fl.gy, &fl.ty, false);
        let w = FaceWeights::from_coeffs(grid, &a, &b, dt);
        let Some(next) = linear::solve(grid, &w, 1.0, u_old, 1e-12) else {
            break;
        };
        let nfl = fluxes(grid, diff, &next);
        let ng = residual(grid, &next, u_old, &nfl);
        let nrn = max_abs(&ng);
        picard += 1;
        if nrn > 0.5 * rn {
            break;
        }
        (u, fl, g, rn) = (next, nfl, ng, nrn);
    }

    while newton < opts.max_newton && rn > target {
        let a = coefficients(diff, &fl.gx, &fl.tx, true);
        let b = coefficients(diff, &fl.gy, &fl.ty, true);
        let w = FaceWeights::from_coeffs(grid, &a, &b, dt);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let delta = linear::solve(grid, &w, 1.0, &rhs, 1e-10).ok_or(ParabolicError::LinearSolve { step: k })?;
        newton += 1;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + alpha * d).collect();
            let tfl = fluxes(grid, diff, &trial);
            let tg = residual(grid, &trial, u_old, &tfl);
            let trn = max_abs(&tg);
            if trn < (1.0 - 1e-4 * alpha) * rn {
                (u, fl, g, rn) = (trial, tfl, tg, trn);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if !(rn <= opts.tol * scale) {
        return Err(ParabolicError::NonlinearDivergence { step: k, residual: rn });
    }
    // Conservative update: u_old + dt div F(u) telescopes to exact mass.
    let d = divergence(grid, &fl.fx, &fl.fy);
    let u_new: Vec<f64> = (0..u.len()).map(|i| u_old[i] + dt * d[i]).collect();
    Ok(StepOutcome { u: u_new, fx: fl.fx, fy: fl.fy, residual: rn, picard, newton })
}

fn max_node_gradient(grid: &GridST, u: &[f64]) -> f64 {
    let (gx, gy) = gradient(grid, u);
    node_gradients(grid, &gx, &gy).iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max)
}

/// Backward Euler in time, conservative finite volumes in space, for
/// `u_t = div(f(|Du|²)Du)` with zero-flux boundary.
pub fn solve_parabolic(diff: &dyn Diffusivity, u0: &[f64], grid: &GridST) -> Result<ParabolicSolution, ParabolicError> {
    solve_parabolic_with(diff, u0, grid, &SolveOptions::default())
}

pub fn solve_parabolic_with(
    diff: &dyn Diffusivity,
    u0: &[f64],
    grid: &GridST,
    opts: &SolveOptions,
) -> Result<ParabolicSolution, ParabolicError> {
    grid.validate()?;
    grid.check_cells(u0)?;
    let mut u = ScalarField { slices: Vec::with_capacity(grid.levels()) };
    let mut flux = VectorField { x: Vec::with_capacity(grid.levels()), y: Vec::with_capacity(grid.levels()) };
    let (fx0, fy0) = face_flux(grid, diff, u0);
    u.slices.push(u0.to_vec());
    flux.x.push(fx0);
    flux.y.push(fy0);
    let mut sol = ParabolicSolution {
        u,
        flux,
        residuals: vec![0.0],
        picard_iterations: 0,
        newton_iterations: 0,
        max_gradient: vec![max_node_gradient(grid, u0)],
    };
    for k in 1..=grid.nt {
        let out = step(grid, diff, &sol.u.slices[k - 1], opts, k)?;
        sol.max_gradient.push(max_node_gradient(grid, &out.u));
        sol.residuals.push(out.residual);
        sol.picard_iterations += out.picard;
        sol.newton_iterations += out.newton;
        sol.u.slices.push(out.u);
        sol.flux.x.push(out.fx);
        sol.flux.y.push(out.fy);
    }
    Ok(sol)
}

/// Subtracts the discrete mean.
pub fn normalize_initial(grid: &GridST, u0: &[f64]) -> Vec<f64> {
    let mut v = u0.to_vec();
    for _ in 0..2 {
        let m = grid::mean(grid, &v);
        v.iter_mut().for_each(|x| *x -= m);
    }
    v
}

/// Neumann potential `h` with `Δ_h h = u₀`, zero normal derivative and
/// zero mean.
pub fn solve_poisson_neumann(grid: &GridST, u0: &[f64]) -> Result<Vec<f64>, ParabolicError> {
    grid.validate()?;
    grid.check_cells(u0)?;
    let m = grid::mean(grid, u0);
    if m.abs() > 1e-12 * max_abs(u0) {
        return Err(ParabolicError::Incompatible { mean: m });
    }
    let mut h = if grid.dim == 1 {
        let hx = grid.hx();
        let mut h = vec![0.0; grid.nx];
        let mut flux = 0.0;
        for c in 1..grid.nx {
            flux += u0[c - 1] * hx;
            h[c] = h[c - 1] + hx * flux;
        }
        h
    } else {
        let ones_x = vec![1.0; grid.x_faces()];
        let ones_y = vec![1.0; grid.y_faces()];
        let w = FaceWeights::from_coeffs(grid, &ones_x, &ones_y, 1.0);
        let b: Vec<f64> = u0.iter().map(|v| -v).collect();
        linear::solve(grid, &w, 0.0, &b, 1e-12).ok_or(ParabolicError::LinearSolve { step: 0 })?
    };
    let hm = grid::mean(grid, &h);
    h.iter_mut().for_each(|x| *x -= hm);
    Ok(h)
}

/// Discrete Laplacian `div grad h` with zero-flux boundary.
pub fn laplacian(grid: &GridST, h: &[f64]) -> Vec<f64> {
    let (gx, gy) = gradient(grid, h);
    divergence(grid, &gx, &gy)
}

/// `v*(t_k) = v₀ + Σ_{j≤k} dt F_j` with the step fluxes of the solver, so
/// that `div v* = u*` holds level by level.
pub fn assemble_vstar(sol: &ParabolicSolution, v0: (&[f64], &[f64]), grid: &GridST) -> VectorField {
    let dt = grid.dt();
    let mut v = VectorField { x: vec![v0.0.to_vec()], y: vec![v0.1.to_vec()] };
    for k in 1..sol.u.levels() {
        let nx: Vec<f64> = v.x[k - 1].iter().zip(&sol.flux.x[k]).map(|(a, f)| a + dt * f).collect();
        let ny: Vec<f64> = v.y[k - 1].iter().zip(&sol.flux.y[k]).map(|(a, f)| a + dt * f).collect();
        v.x.push(nx);
        v.y.push(ny);
    }
    v
}

/// Face gradients of every level.
pub fn gradient_field(grid: &GridST, u: &ScalarField) -> VectorField {
    let mut out = VectorField { x: Vec::with_capacity(u.levels()), y: Vec::with_capacity(u.levels()) };
    for s in &u.slices {
        let (gx, gy) = gradient(grid, s);
        out.x.push(gx);
        out.y.push(gy);
    }
    out
}

/// `|Du|` at the gradient nodes of every level.
pub fn gradient_magnitudes(grid: &GridST, du: &VectorField) -> Vec<Vec<f64>> {
    (0..du.levels())
        .map(|k| node_gradients(grid, &du.x[k], &du.y[k]).iter().map(|g| g[0].hypot(g[1])).collect())
        .collect()
}

/// The classical pair `(u*, v*)` with `div v* = u*` and zero normal trace.
#[derive(Debug, Clone)]
pub struct BoundaryFunctionPair {
    pub u_star: ScalarField,
    pub v_star: VectorField,
    pub du_star: VectorField,
    pub potential: Vec<f64>,
    /// `‖Du*‖∞` over the whole space-time grid.
    pub max_gradient: f64,
    pub solution: ParabolicSolution,
}

/// Poisson potential, parabolic solve and `v*` assembly for a zero-mean datum.
pub fn boundary_function(diff: &dyn Diffusivity, u0: &[f64], grid: &GridST) -> Result<BoundaryFunctionPair, ParabolicError> {
    let potential = solve_poisson_neumann(grid, u0)?;
    let (v0x, v0y) = gradient(grid, &potential);
    let solution = solve_parabolic(diff, u0, grid)?;
    let v_star = assemble_vstar(&solution, (&v0x, &v0y), grid);
    let du_star = gradient_field(grid, &solution.u);
    let max_gradient = solution.max_gradient.iter().cloned().fold(0.0, f64::max);
    Ok(BoundaryFunctionPair { u_star: solution.u.clone(), v_star, du_star, potential, max_gradient, solution })
}

/// Space-time regions by the size of `|Du*|` relative to `s_+(r̃)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `|Du*| = 0`.
    Zero,
    /// `0 < |Du*| < s_+(r̃)`, where the modification is active.
    Below,
    /// `|Du*| = s_+(r̃)` within the band tolerance.
    Level,
    /// `|Du*| > s_+(r̃)`, the classical region.
    Above,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::Zero => "zero",
            Region::Below => "below",
            Region::Level => "level",
            Region::Above => "above",
        }
    }
}

pub const BAND_TOL: f64 = 1e-8;

/// Region label of every gradient node at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub nodes: usize,
    pub levels: usize,
    pub s_plus_r: f64,
    pub regions: Vec<Region>,
}

impl Partition {
    pub fn region(&self, k: usize, node: usize) -> Region {
        self.regions[k * self.nodes + node]
    }

    pub fn count(&self, r: Region) -> usize {
        self.regions.iter().filter(|&&x| x == r).count()
    }

    pub fn mask(&self, r: Region) -> Vec<bool> {
        self.regions.iter().map(|&x| x == r).collect()
    }

    /// `Ω₀^{r̃}`: nodes of the initial level in the classical region.
    pub fn initial_trace(&self) -> Vec<bool> {
        self.regions[..self.nodes].iter().map(|&x| x == Region::Above).collect()
    }
}

pub fn classify(grad: f64, s_plus_r: f64) -> Region {
    if grad <= BAND_TOL {
        Region::Zero
    } else if (grad - s_plus_r).abs() <= BAND_TOL {
        Region::Level
    } else if grad < s_plus_r {
        Region::Below
    } else {
        Region::Above
    }
}

/// Partitions the gradient nodes by `|Du*|` against `s_+(r̃)`.
pub fn partition_domain(grad_mag: &[Vec<f64>], r_tilde: f64, profile: &Profile<f64>) -> Result<Partition, ParabolicError> {
    let s_plus_r = profile.s_plus_of(r_tilde)?;
    let nodes = grad_mag.first().map_or(0, |s| s.len());
    let regions = grad_mag.iter().flat_map(|s| s.iter().map(|&g| classify(g, s_plus_r))).collect();
    Ok(Partition { nodes, levels: grad_mag.len(), s_plus_r, regions })
}
