//! Driver for arbitrary Lipschitz data: constant data, steep data that
//! stays classical until the gradient first drops below `s_+`, and the
//! direct route.

use super::{interior_gradients, iterate, RunPlan, SchemeError, Settings, StatePair};
use crate::parabolic::{
    boundary_function, gradient_magnitudes, normalize_initial, partition_domain, GridST, ScalarField, VectorField, BAND_TOL,
};
use crate::profile::{ModifiedProfile, Profile};
use crate::verify::{caps, VerificationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExistenceRoute {
    /// `Du₀ ≡ 0`: the constant solution.
    Constant,
    /// The hypothesis holds at `t = 0`; the refinement pipeline ran directly.
    Direct,
    /// The steep solve first reached `|Du*| < s_+` at `level`, and the
    /// pipeline restarted there.
    Crossing { level: usize, time: f64, jump: f64 },
    /// `|Du*| ≥ s_+` on the whole grid; `u*` is the solution.
    NoCrossing,
}

#[derive(Debug, Clone)]
pub struct Existence {
    pub route: ExistenceRoute,
    pub state: StatePair,
    pub reports: Vec<VerificationReport>,
    /// Set when a refinement pass of the restarted run missed its budget;
    /// the state then carries the best refinement reached.
    pub incomplete: Option<String>,
}

fn classical_state(profile: &Profile<f64>, grid: &GridST, u: ScalarField, v: VectorField, r_tilde: f64, settings: &Settings, offset: f64) -> Result<StatePair, SchemeError> {
    let du = crate::parabolic::gradient_field(grid, &u);
    let partition = partition_domain(&gradient_magnitudes(grid, &du), r_tilde, profile)?;
    let c = caps(grid, &u, &v);
    let g0 = interior_gradients(grid, &u.slices[0]).into_iter().fold(0.0, f64::max);
    Ok(StatePair {
        grid: grid.clone(),
        u_star: u.clone(),
        v_star: v.clone(),
        u,
        v,
        partition,
        offset,
        r_tilde,
        solution_type: settings.solution_type,
        patches: Vec::new(),
        history: Vec::new(),
        ut_cap: c.ut + 1.0,
        vt_cap: profile.sigma(g0).max(profile.sigma(profile.s_plus)),
    })
}

fn sub_grid(grid: &GridST, from_level: usize) -> Result<GridST, SchemeError> {
    let nt = grid.nt - from_level;
    let t = grid.t_end - grid.time(from_level);
    Ok(if grid.dim == 1 { GridST::new_1d(grid.nx, grid.lx, nt, t)? } else { GridST::new_2d(grid.nx, grid.ny, grid.lx, grid.ly, nt, t)? })
}

/// Routes `u0` to the constant solution, the steep-data restart or the
/// refinement pipeline.
pub fn general_existence(profile: &Profile<f64>, u0: &[f64], grid: &GridST, settings: Settings) -> Result<Existence, SchemeError> {
    grid.validate()?;
    grid.check_cells(u0)?;
    let offset = crate::parabolic::grid::mean(grid, u0);
    let g = interior_gradients(grid, u0);
    let max = g.iter().cloned().fold(0.0, f64::max);
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_mid = 0.5 * profile.sigma(profile.s_plus);

    if max <= BAND_TOL {
        let zero = ScalarField::zeros(grid);
        let mut state = classical_state(profile, grid, zero, VectorField::zeros(grid), r_mid, &settings, offset)?;
        let rep = state.report(profile, 0)?;
        state.history.push(rep.clone());
        return Ok(Existence { route: ExistenceRoute::Constant, state, reports: vec![rep], incomplete: None });
    }

    if min < profile.s_plus {
        let plan = RunPlan::new(profile.clone(), grid.clone(), u0.to_vec(), settings)?;
        let out = iterate(&plan)?;
        return Ok(Existence { route: ExistenceRoute::Direct, state: out.state, reports: out.reports, incomplete: None });
    }

    // steep data: σ is modified only below s̄ = (s₀ + s_+)/2, so the solve
    // is classical while |Du*| ≥ s_+
    let s_bar = 0.5 * (profile.s_zero + profile.s_plus);
    let r_bar = profile.sigma(s_bar);
    let modified = ModifiedProfile::new(profile, r_bar)?;
    let un = normalize_initial(grid, u0);
    let pair = boundary_function(&modified, &un, grid)?;
    let crossing = (1..grid.levels()).find(|&k| {
        interior_gradients(grid, &pair.u_star.slices[k]).iter().any(|&s| s > BAND_TOL && s < profile.s_plus)
    });

    let Some(kbar) = crossing.filter(|&k| k < grid.nt) else {
        let r_tilde = match crossing {
            // crossing only at the final level: keep u* and classify against r̄
            Some(_) => r_bar,
            None => r_mid,
        };
        let mut state = classical_state(profile, grid, pair.u_star, pair.v_star, r_tilde, &settings, offset)?;
        let rep = state.report(profile, 0)?;
        state.history.push(rep.clone());
        let route = if crossing.is_some() {
            ExistenceRoute::Crossing { level: grid.nt, time: grid.t_end, jump: 0.0 }
        } else {
            ExistenceRoute::NoCrossing
        };
        return Ok(Existence { route, state, reports: vec![rep], incomplete: None });
    };

    let sub = sub_grid(grid, kbar)?;
    let u1 = pair.u_star.slices[kbar].clone();
    let plan = RunPlan::new(profile.clone(), sub.clone(), u1, settings)?;
    let (tail, incomplete) = match iterate(&plan) {
        Ok(out) => (out.state, None),
        Err(e @ SchemeError::PassIncomplete { .. }) => {
            let msg = e.to_string();
            let SchemeError::PassIncomplete { state, .. } = e else { unreachable!() };
            (*state, Some(msg))
        }
        Err(e) => return Err(e),
    };

    let join = |head: &[Vec<f64>], rest: &[Vec<f64>]| -> Vec<Vec<f64>> {
        head[..kbar].iter().chain(rest.iter()).cloned().collect()
    };
    let u = ScalarField { slices: join(&pair.u_star.slices, &tail.u.slices) };
    let u_star = ScalarField { slices: join(&pair.u_star.slices, &tail.u_star.slices) };
    let v = VectorField { x: join(&pair.v_star.x, &tail.v.x), y: join(&pair.v_star.y, &tail.v.y) };
    let v_star = VectorField { x: join(&pair.v_star.x, &tail.v_star.x), y: join(&pair.v_star.y, &tail.v_star.y) };
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let jump = gap(&pair.u_star.slices[kbar], &tail.u.slices[0])
        .max(gap(&pair.v_star.x[kbar], &tail.v.x[0]))
        .max(gap(&pair.v_star.y[kbar], &tail.v.y[0]));

    let mut state = classical_state(profile, grid, u_star, v_star, tail.r_tilde, &settings, offset)?;
    state.u = u;
    state.v = v;
    state.ut_cap = state.ut_cap.max(tail.ut_cap);
    state.patches = tail.patches.clone();
    for p in &mut state.patches {
        p.at.k0 += kbar;
    }
    let mut reports = tail.history.clone();
    let rep = state.report(profile, reports.len())?;
    reports.push(rep.clone());
    state.history = reports.clone();
    Ok(Existence { route: ExistenceRoute::Crossing { level: kbar, time: grid.time(kbar), jump }, state, reports, incomplete })
}
