//! Residuals measuring how far a pair `(u, v)` is from a Lipschitz solution.

use crate::geometry::SolutionType;
use crate::parabolic::grid::{gradient, integrate, node_gradients, node_vectors};
use crate::parabolic::{GridST, Partition, Region, ScalarField, VectorField};
use crate::profile::{Profile, ProfileError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Radial flux `p ↦ A(p)` evaluated at gradient nodes.
pub type FluxFn<'a> = &'a (dyn Fn([f64; 2]) -> [f64; 2] + Sync);

/// `A(p) = σ(|p|) p/|p|` of a profile.
pub fn profile_flux(profile: &Profile<f64>) -> impl Fn([f64; 2]) -> [f64; 2] + Sync + '_ {
    move |p: [f64; 2]| {
        let n = p[0].hypot(p[1]);
        if n == 0.0 {
            [0.0, 0.0]
        } else {
            let k = profile.sigma(n) / n;
            [k * p[0], k * p[1]]
        }
    }
}

/// Time derivative of a face field at every level: backward differences,
/// matching the implicit time stepping, and a forward difference at the
/// first level.
pub fn time_derivative(grid: &GridST, v: &VectorField) -> VectorField {
    let dt = grid.dt();
    let diff = |s: &[Vec<f64>], k: usize| -> Vec<f64> {
        let (a, b) = if k == 0 { (1, 0) } else { (k, k - 1) };
        s[a].iter().zip(&s[b]).map(|(x, y)| (x - y) / dt).collect()
    };
    VectorField { x: (0..grid.levels()).map(|k| diff(&v.x, k)).collect(), y: (0..grid.levels()).map(|k| diff(&v.y, k)).collect() }
}

/// `|v_t − A(Du)|` at every gradient node and level.
pub fn flux_gap(grid: &GridST, u: &ScalarField, v: &VectorField, flux: FluxFn) -> Vec<Vec<f64>> {
    let vt = time_derivative(grid, v);
    (0..grid.levels())
        .map(|k| {
            let (gx, gy) = gradient(grid, &u.slices[k]);
            let p = node_gradients(grid, &gx, &gy);
            let w = node_vectors(grid, vt.slice(k));
            p.iter().zip(&w).map(|(p, w)| {
                let a = flux(*p);
                (w[0] - a[0]).hypot(w[1] - a[1])
            }).collect()
        })
        .collect()
}

/// Space-time quadrature of a node density, optionally restricted by a
/// node mask laid out level-major.
pub fn integrate_nodes(grid: &GridST, density: &[Vec<f64>], mask: Option<&[bool]>) -> f64 {
    let nodes = grid.gradient_nodes();
    let mut total = 0.0;
    for (k, d) in density.iter().enumerate() {
        let mut s = 0.0;
        for (i, v) in d.iter().enumerate() {
            if mask.is_none_or(|m| m[k * nodes + i]) {
                s += grid.gradient_node_weight(i) * v;
            }
        }
        total += grid.level_weight(k) * s;
    }
    total
}

/// Space-time measure of a node mask.
pub fn mask_measure(grid: &GridST, mask: &[bool]) -> f64 {
    let ones = vec![vec![1.0; grid.gradient_nodes()]; grid.levels()];
    integrate_nodes(grid, &ones, Some(mask))
}

/// `∫_{Ω_T} |v_t − A(Du)|` with `A` from `profile`.
pub fn flux_residual(grid: &GridST, u: &ScalarField, v: &VectorField, profile: &Profile<f64>) -> f64 {
    let a = profile_flux(profile);
    integrate_nodes(grid, &flux_gap(grid, u, v, &a), None)
}

/// `max_t |∫u(t) − ∫u(0)|`.
pub fn mass_drift(grid: &GridST, u: &ScalarField) -> f64 {
    let m0 = integrate(grid, &u.slices[0]);
    u.slices.iter().map(|s| (integrate(grid, s) - m0).abs()).fold(0.0, f64::max)
}

/// Smooth test function with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub space: usize,
    pub time: usize,
}

fn basis_1d(kind: usize, s: f64, len: f64) -> (f64, f64) {
    let x = s / len;
    match kind {
        0 => (1.0, 0.0),
        1 => (x, 1.0 / len),
        2 => ((PI * x).cos(), -PI * (PI * x).sin() / len),
        3 => (x * x, 2.0 * x / len),
        _ => ((2.0 * PI * x).cos(), -2.0 * PI * (2.0 * PI * x).sin() / len),
    }
}

impl TestFunction {
    /// The default family: five spatial times five temporal shapes.
    pub fn default_basis() -> Vec<TestFunction> {
        (0..5).flat_map(|space| (0..5).map(move |time| TestFunction { space, time })).collect()
    }

    /// Value and spatial gradient.
    fn space_part(&self, grid: &GridST, x: f64, y: f64) -> (f64, [f64; 2]) {
        if grid.dim == 1 {
            let (v, d) = basis_1d(self.space, x, grid.lx);
            return (v, [d, 0.0]);
        }
        let (a, da) = basis_1d(2, x, grid.lx);
        let (b, db) = basis_1d(2, y, grid.ly);
        match self.space {
            0 => (1.0, [0.0, 0.0]),
            1 => (a, [da, 0.0]),
            2 => (b, [0.0, db]),
            3 => {
                let (xs, ys) = (x / grid.lx, y / grid.ly);
                (xs * ys, [ys / grid.lx, xs / grid.ly])
            }
            _ => (a * b, [da * b, a * db]),
        }
    }

    /// Value and derivative of the temporal factor.
    fn time_part(&self, grid: &GridST, t: f64) -> (f64, f64) {
        let s = t / grid.t_end;
        let tt = grid.t_end;
        match self.time {
            0 => (1.0, 0.0),
            1 => (s, 1.0 / tt),
            2 => (s * s, 2.0 * s / tt),
            3 => ((PI * s).cos(), -PI * (PI * s).sin() / tt),
            _ => ((PI * s).sin(), PI * (PI * s).cos() / tt),
        }
    }
}

fn node_positions(grid: &GridST) -> Vec<(f64, f64)> {
    if grid.dim == 1 {
        (0..=grid.nx).map(|f| grid.x_face_pos(f)).collect()
    } else {
        (0..grid.cells()).map(|c| grid.cell_center(c)).collect()
    }
}

/// Largest weak-form defect
/// `|∫(u(s)ζ(s) − u₀ζ(0)) − ∫₀ˢ∫(u ζ_t − A(Du)·Dζ)|` over the test family
/// and all grid times `s`.
pub fn weak_residual(grid: &GridST, u: &ScalarField, flux: FluxFn, tests: &[TestFunction]) -> f64 {
    let cells: Vec<(f64, f64)> = (0..grid.cells()).map(|c| grid.cell_center(c)).collect();
    let nodes = node_positions(grid);
    let fluxes: Vec<Vec<[f64; 2]>> = u
        .slices
        .iter()
        .map(|s| {
            let (gx, gy) = gradient(grid, s);
            node_gradients(grid, &gx, &gy).into_iter().map(flux).collect()
        })
        .collect();
    let vol = grid.cell_volume();
    let mut worst: f64 = 0.0;
    for z in tests {
        let sp_cells: Vec<f64> = cells.iter().map(|&(x, y)| z.space_part(grid, x, y).0).collect();
        let sp_nodes: Vec<[f64; 2]> = nodes.iter().map(|&(x, y)| z.space_part(grid, x, y).1).collect();
        // ∫ u ζ_space and ∫ A·Dζ_space per level
        let mut pair_u = Vec::with_capacity(grid.levels());
        let mut pair_a = Vec::with_capacity(grid.levels());
        for k in 0..grid.levels() {
            pair_u.push(u.slices[k].iter().zip(&sp_cells).map(|(a, b)| a * b).sum::<f64>() * vol);
            let mut s = 0.0;
            for (i, (a, d)) in fluxes[k].iter().zip(&sp_nodes).enumerate() {
                s += grid.gradient_node_weight(i) * (a[0] * d[0] + a[1] * d[1]);
            }
            pair_a.push(s);
        }
        let (z0, _) = z.time_part(grid, 0.0);
        let start = pair_u[0] * z0;
        let mut integral = 0.0;
        let integrand = |k: usize| {
            let (zt, dzt) = z.time_part(grid, grid.time(k));
            pair_u[k] * dzt - pair_a[k] * zt
        };
        let dt = grid.dt();
        for k in 1..grid.levels() {
            integral += 0.5 * dt * (integrand(k - 1) + integrand(k));
            let (zt, _) = z.time_part(grid, grid.time(k));
            worst = worst.max((pair_u[k] * zt - start - integral).abs());
        }
    }
    worst
}

/// Distance of `(p, β)` to `{(ρζ, σ(ρ)ζ) : |ζ| = 1, ρ ∈ bands}`.
pub fn distance_to_graph(profile: &Profile<f64>, p: [f64; 2], beta: [f64; 2], bands: &[(f64, f64)]) -> f64 {
    let base = p[0] * p[0] + p[1] * p[1] + beta[0] * beta[0] + beta[1] * beta[1];
    let d2 = |r: f64| {
        let s = profile.sigma(r);
        let cross = (r * p[0] + s * beta[0]).hypot(r * p[1] + s * beta[1]);
        (base + r * r + s * s - 2.0 * cross).max(0.0)
    };
    let mut best = f64::INFINITY;
    for &(lo, hi) in bands {
        if hi < lo {
            continue;
        }
        const N: usize = 48;
        let h = (hi - lo) / N as f64;
        let mut arg = lo;
        let mut val = d2(lo);
        for i in 1..=N {
            let r = lo + i as f64 * h;
            let v = d2(r);
            if v < val {
                val = v;
                arg = r;
            }
        }
        // golden section on the bracketing cells
        let (mut a, mut b) = ((arg - h).max(lo), (arg + h).min(hi));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (d2(c), d2(d));
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = d2(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = d2(d);
            }
        }
        best = best.min(val).min(fc).min(fd);
    }
    best.sqrt()
}

/// Gradient bands of the type: `|Du|` belongs to their union off the
/// classical region.
pub fn gradient_bands(profile: &Profile<f64>, r_tilde: f64, ty: SolutionType) -> Result<Vec<(f64, f64)>, ProfileError> {
    let bi = profile.branch_inverses(r_tilde)?;
    Ok(match ty {
        SolutionType::TypeI => vec![(0.0, 0.0), (bi.s_minus2_r, bi.s_plus_r)],
        SolutionType::TypeII => vec![(0.0, bi.s_minus1_r), (profile.s_zero, bi.s_plus_r)],
    })
}

/// Bands of `ρ = |p|` making up the set `B` of the type.
pub fn graph_bands(profile: &Profile<f64>, r_tilde: f64, ty: SolutionType) -> Result<Vec<(f64, f64)>, ProfileError> {
    let bi = profile.branch_inverses(r_tilde)?;
    Ok(match ty {
        SolutionType::TypeI => vec![(bi.s_minus2_r, bi.s_plus_r)],
        SolutionType::TypeII => vec![(0.0, bi.s_minus1_r), (profile.s_zero, bi.s_plus_r)],
    })
}

fn band_distance(g: f64, bands: &[(f64, f64)]) -> f64 {
    bands.iter().map(|&(lo, hi)| if g < lo { lo - g } else if g > hi { g - hi } else { 0.0 }).fold(f64::INFINITY, f64::min)
}

/// Set distances of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDistanceReport {
    /// `∫_{Ω¹} dist((Du, v_t), B)`.
    pub graph_integral: f64,
    pub graph_max: f64,
    /// `|Ω¹|`.
    pub omega1_measure: f64,
    /// `∫` of the distance of `|Du|` to the gradient bands off the
    /// classical region.
    pub band_integral: f64,
    pub band_max: f64,
    /// `min (|Du| − s_+(r̃))` over the classical region (infinite if empty).
    pub classical_margin: f64,
}

/// Node values of `dist((Du, v_t), B)` on the masked nodes (zero elsewhere).
pub fn graph_distance_density(
    grid: &GridST,
    u: &ScalarField,
    v: &VectorField,
    mask: &[bool],
    profile: &Profile<f64>,
    bands: &[(f64, f64)],
) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let vt = time_derivative(grid, v);
    let nodes = grid.gradient_nodes();
    (0..grid.levels())
        .into_par_iter()
        .map(|k| {
            let (gx, gy) = gradient(grid, &u.slices[k]);
            let p = node_gradients(grid, &gx, &gy);
            let w = node_vectors(grid, vt.slice(k));
            (0..nodes).map(|i| if mask[k * nodes + i] { distance_to_graph(profile, p[i], w[i], bands) } else { 0.0 }).collect()
        })
        .collect()
}

pub fn set_distance_report(
    grid: &GridST,
    u: &ScalarField,
    v: &VectorField,
    partition: &Partition,
    r_tilde: f64,
    profile: &Profile<f64>,
    ty: SolutionType,
) -> Result<SetDistanceReport, ProfileError> {
    let omega1 = partition.mask(Region::Below);
    let graph = graph_distance_density(grid, u, v, &omega1, profile, &graph_bands(profile, r_tilde, ty)?);
    let gbands = gradient_bands(profile, r_tilde, ty)?;
    let nodes = grid.gradient_nodes();
    let mut band = vec![vec![0.0; nodes]; grid.levels()];
    let mut margin = f64::INFINITY;
    for k in 0..grid.levels() {
        let (gx, gy) = gradient(grid, &u.slices[k]);
        for (i, p) in node_gradients(grid, &gx, &gy).iter().enumerate() {
            let g = p[0].hypot(p[1]);
            if partition.region(k, i) == Region::Above {
                margin = margin.min(g - partition.s_plus_r);
            } else {
                band[k][i] = band_distance(g, &gbands);
            }
        }
    }
    let max2 = |d: &[Vec<f64>]| d.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(SetDistanceReport {
        graph_integral: integrate_nodes(grid, &graph, None),
        graph_max: max2(&graph),
        omega1_measure: mask_measure(grid, &omega1),
        band_integral: integrate_nodes(grid, &band, None),
        band_max: max2(&band),
        classical_margin: margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub ut: f64,
    pub vt: f64,
}

/// `‖u_t‖∞` by level differences and `‖v_t‖∞` at the gradient nodes.
pub fn caps(grid: &GridST, u: &ScalarField, v: &VectorField) -> Caps {
    let dt = grid.dt();
    let mut ut: f64 = 0.0;
    for k in 1..grid.levels() {
        for (a, b) in u.slices[k].iter().zip(&u.slices[k - 1]) {
            ut = ut.max((a - b).abs() / dt);
        }
    }
    let vtf = time_derivative(grid, v);
    let mut vt: f64 = 0.0;
    for k in 0..grid.levels() {
        for w in node_vectors(grid, vtf.slice(k)) {
            vt = vt.max(w[0].hypot(w[1]));
        }
    }
    Caps { ut, vt }
}

/// Aggregated residuals of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub weak_residual: f64,
    pub mass_drift: f64,
    pub flux_residual: f64,
    pub set_residuals: BTreeMap<String, f64>,
    pub caps: Caps,
    pub pass_index: usize,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        ok(self.weak_residual)
            && ok(self.mass_drift)
            && ok(self.flux_residual)
            && ok(self.caps.ut)
            && ok(self.caps.vt)
            && self.set_residuals.values().all(|v| ok(*v))
    }
}

/// Inputs of [`full_report`].
pub struct ReportInput<'a> {
    pub grid: &'a GridST,
    pub u: &'a ScalarField,
    pub v: &'a VectorField,
    pub partition: &'a Partition,
    pub profile: &'a Profile<f64>,
    pub r_tilde: f64,
    pub solution_type: SolutionType,
    pub pass_index: usize,
}

pub fn full_report(inp: &ReportInput) -> Result<VerificationReport, ProfileError> {
    let flux = profile_flux(inp.profile);
    let sets = set_distance_report(inp.grid, inp.u, inp.v, inp.partition, inp.r_tilde, inp.profile, inp.solution_type)?;
    let mut set_residuals = BTreeMap::new();
    set_residuals.insert(Region::Below.label().to_string(), sets.graph_integral);
    set_residuals.insert("bands".to_string(), sets.band_integral);
    set_residuals.insert(
        Region::Above.label().to_string(),
        if sets.classical_margin.is_finite() { (-sets.classical_margin).max(0.0) } else { 0.0 },
    );
    Ok(VerificationReport {
        weak_residual: weak_residual(inp.grid, inp.u, &flux, &TestFunction::default_basis()),
        mass_drift: mass_drift(inp.grid, inp.u),
        flux_residual: integrate_nodes(inp.grid, &flux_gap(inp.grid, inp.u, inp.v, &flux), None),
        set_residuals,
        caps: caps(inp.grid, inp.u, inp.v),
        pass_index: inp.pass_index,
    })
}
