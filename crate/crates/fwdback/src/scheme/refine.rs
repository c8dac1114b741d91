//! One refinement pass: eligible nodes of `Ω¹`, disjoint boxes, and a
//! two-gradient oscillation per box that moves `(Du, v_t)` onto the target
//! graph while keeping `div v = u`.

use super::{RunPlan, SchemeError, StatePair};
use crate::geometry::{solve_frame, DiagonalPoint, RankOneFrame, SolutionType};
use crate::oscillation::{apply_patch, build_laminate, BoxST, LaminateFrame, Placement};
use crate::parabolic::grid::{gradient, node_gradients, node_vectors};
use crate::parabolic::{GridST, Region, ScalarField, VectorField};
use crate::profile::Profile;
use crate::verify::{profile_flux, time_derivative};
use crate::VecN;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Shortest stripe period, in faces.
const MIN_PERIOD: usize = 4;
/// Share of the sup-norm budget given to the predicted stripe amplitude.
const PERIOD_FILL: f64 = 0.6;
/// Share of the sup-norm budget a box may use before the zero-mean
/// correction.
const BUMP_SHARE: f64 = 0.9;
/// Side of a 2D box, in cells and in steps.
const BLOCK: usize = 8;
/// Nodes already on the graph to this accuracy are left alone.
const GAP_FLOOR: f64 = 1e-6;
/// Room left below the u_t cap by the patches.
const UT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchBudget {
    pub eps: f64,
    pub eta: f64,
    /// `max |u_new − u_old|` on the box.
    pub sup_change: f64,
    pub ut_cap: f64,
    /// `max |u_t|` over the box levels after the patch.
    pub ut_max: f64,
}

/// Frame through the box-centre node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreFrame {
    pub p: Vec<f64>,
    pub beta: Vec<f64>,
    pub q: Vec<f64>,
    pub gamma: Vec<f64>,
    pub t_minus: f64,
    pub t_plus: f64,
}

/// One box of one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: usize,
    pub pass: usize,
    pub at: Placement,
    /// Extent in cells per spatial axis, then in steps.
    pub cells: Vec<usize>,
    pub window: Option<usize>,
    pub frame: Option<CentreFrame>,
    pub budget: PatchBudget,
    /// Why the box was left untouched, if it was.
    pub skipped: Option<String>,
}

struct NodeData {
    p: Vec<Vec<[f64; 2]>>,
    beta: Vec<Vec<[f64; 2]>>,
}

fn node_data(state: &StatePair) -> NodeData {
    node_data_of(&state.grid, &state.u, &state.v)
}

fn node_data_of(grid: &GridST, u: &ScalarField, v: &VectorField) -> NodeData {
    let vt = time_derivative(grid, v);
    let mut p = Vec::with_capacity(grid.levels());
    let mut beta = Vec::with_capacity(grid.levels());
    for k in 0..grid.levels() {
        let (gx, gy) = gradient(grid, &u.slices[k]);
        p.push(node_gradients(grid, &gx, &gy));
        beta.push(node_vectors(grid, vt.slice(k)));
    }
    NodeData { p, beta }
}

/// Endpoints `p_- < p_+` (signed, along the sign of `beta`) of the
/// collinear connection at level `|beta|`.
fn endpoints(profile: &Profile<f64>, ty: SolutionType, beta: f64) -> Option<(f64, f64)> {
    let r = beta.abs();
    let sp = profile.s_plus_of(r).ok()?;
    let sm = match ty {
        SolutionType::TypeI => profile.s_minus2_of(r).ok()?,
        SolutionType::TypeII => profile.s_minus1_of(r).ok()?,
    };
    let z = beta.signum();
    Some((-z * sm, z * sp))
}

fn eligibility(state: &StatePair, plan: &RunPlan, data: &NodeData) -> Vec<Vec<bool>> {
    let grid = &state.grid;
    let nodes = grid.gradient_nodes();
    let flux = profile_flux(&plan.profile);
    let (lo, hi) = (plan.cover_slack, state.r_tilde - plan.cover_slack);
    let mut mask = vec![vec![false; nodes]; grid.levels()];
    for k in 1..grid.levels() {
        for i in 0..nodes {
            if state.partition.region(k, i) != Region::Below {
                continue;
            }
            let (p, w) = (data.p[k][i], data.beta[k][i]);
            let level = w[0].hypot(w[1]);
            if !(level > lo && level < hi) || plan.window_of(level).is_none() {
                continue;
            }
            let a = flux(p);
            if (w[0] - a[0]).hypot(w[1] - a[1]) <= GAP_FLOOR {
                continue;
            }
            mask[k][i] = true;
        }
    }
    mask
}

fn centre_frame(plan: &RunPlan, dim: usize, p: [f64; 2], w: [f64; 2]) -> (Option<usize>, Option<(CentreFrame, RankOneFrame<f64>)>) {
    let vec = |a: [f64; 2]| if dim == 1 { VecN::new1(a[0]) } else { VecN::new2(a[0], a[1]) };
    let level = w[0].hypot(w[1]);
    let Some(first) = plan.window_of(level) else { return (None, None) };
    let pt = DiagonalPoint::new(vec(p), vec(w));
    let Some((win, f)) = plan.windows_of(level).find_map(|win| solve_frame(&plan.profile, &pt, &plan.cover[win], None).ok().map(|f| (win, f)))
    else {
        return (Some(first), None);
    };
    let frame = Some(f).map(|f| {
        (
            CentreFrame {
                p: p[..dim].to_vec(),
                beta: w[..dim].to_vec(),
                q: f.q.as_slice().to_vec(),
                gamma: f.gamma.as_slice().to_vec(),
                t_minus: f.t_minus,
                t_plus: f.t_plus,
            },
            f,
        )
    });
    (Some(win), frame)
}

/// Splits `n` faces into periods `[start, start + len)` whose predicted
/// stripe amplitude `Σ amp_f` stays within `budget`, between `MIN_PERIOD`
/// and `max_len` long.
fn periods(amp: &[f64], budget: f64, max_len: usize) -> Vec<(usize, usize)> {
    let n = amp.len();
    let mut out: Vec<(usize, usize)> = Vec::new();
    let (mut a, mut sum) = (0, 0.0);
    for f in 0..n {
        if f - a >= MIN_PERIOD && (sum + amp[f] > budget || f - a >= max_len) {
            out.push((a, f - a));
            a = f;
            sum = 0.0;
        }
        sum += amp[f];
    }
    match out.last_mut() {
        Some(last) if n - a < MIN_PERIOD => last.1 += n - a,
        _ => out.push((a, n - a)),
    }
    out
}

/// Faces of period `j` in fill order; even periods fill from the left,
/// odd ones from the right.
fn fill_order(j: usize, (a, len): (usize, usize)) -> Vec<usize> {
    if j % 2 == 0 { (a..a + len).collect() } else { (a..a + len).rev().collect() }
}

/// Number of faces (fractional) whose gap-weighted fill is `amount`.
fn faces_for(gap: &[f64], order: &[usize], amount: f64) -> f64 {
    let mut left = amount.max(0.0);
    for (i, &f) in order.iter().enumerate() {
        let g = gap[f].abs();
        if left <= g {
            return i as f64 + left / g;
        }
        left -= g;
    }
    order.len() as f64
}

/// Limits the level-to-level change of a cell increment to `[lo_k, hi_k]`,
/// starting from zero before the first level and, when `close` is set,
/// returning to zero after the last.
fn rate_limit(x: &mut [f64], lo: &[f64], hi: &[f64], close: bool) {
    let n = x.len();
    let forward = |x: &mut [f64]| {
        let mut prev = 0.0;
        for k in 0..n {
            x[k] = x[k].clamp(prev + lo[k], prev + hi[k]);
            prev = x[k];
        }
    };
    forward(x);
    let mut next = if close { 0.0 } else { x[n - 1] };
    for k in (0..n).rev() {
        let (a, b) = if close || k + 1 < n { (next - hi[k + 1], next - lo[k + 1]) } else { (f64::NEG_INFINITY, f64::INFINITY) };
        x[k] = x[k].clamp(a, b);
        next = x[k];
    }
    forward(x);
}

fn max_ut(grid: &GridST, u: &ScalarField, k0: usize, k1: usize, cells: &[usize]) -> f64 {
    let dt = grid.dt();
    let mut m: f64 = 0.0;
    for k in k0.max(1)..=(k1 + 1).min(grid.nt) {
        for &c in cells {
            m = m.max((u.slices[k][c] - u.slices[k - 1][c]).abs() / dt);
        }
    }
    m
}

/// Endpoint gap and weight of `p_+` at face `f` of level `k`, where the
/// face can be patched. The weight may fall outside `[0, 1]`.
fn face_split(state: &StatePair, plan: &RunPlan, data: &NodeData, k: usize, f: usize) -> Option<(f64, f64)> {
    if state.partition.region(k, f) != Region::Below {
        return None;
    }
    let (p, beta) = (data.p[k][f][0], data.beta[k][f][0]);
    let level = beta.abs();
    if !(level > plan.cover_slack && level < state.r_tilde - plan.cover_slack) || plan.window_of(level).is_none() {
        return None;
    }
    let (m, pl) = endpoints(&plan.profile, state.solution_type, beta)?;
    Some((pl - m, (p - m) / (pl - m)))
}

/// Cell increments of period `j` (faces `[0, split.len())` of the
/// period) at one level. The period fills its `p_+` share from one end,
/// alternating ends between periods so neighbouring means cancel, and its
/// gradient changes sum to zero, so at most one face is fractional.
fn period_increments(h: f64, split: &[(f64, f64)], j: usize) -> Vec<f64> {
    let order = fill_order(j, (0, split.len()));
    let gap: Vec<f64> = split.iter().map(|s| s.0).collect();
    let need: f64 = split.iter().map(|s| s.0.abs() * s.1).sum();
    let x = faces_for(&gap, &order, need);
    let mut w = vec![0.0; split.len()];
    for (i, &f) in order.iter().enumerate() {
        w[f] = (x - i as f64).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    split
        .iter()
        .zip(&w)
        .map(|(&(g, lam), w)| {
            acc += h * g * (w - lam);
            acc
        })
        .collect()
}

/// Cell increments of one 1D pass, with the box records. Boxes placed at
/// `dropped` (first cell, first level) are recorded as skipped.
fn row_patches(state: &StatePair, plan: &RunPlan, data: &NodeData, eps: f64, pass: usize, dropped: &HashSet<(usize, usize)>) -> (Vec<Vec<f64>>, Vec<PatchRecord>) {
    let grid = state.grid.clone();
    let (nx, nt) = (grid.nx, grid.nt);
    let (h, dt) = (grid.hx(), grid.dt());
    let cap = state.ut_cap;
    let target = cap - UT_MARGIN;

    // the period layout comes from the boundary pair, so it is the same in
    // every pass
    let star = node_data_of(&grid, &state.u_star, &state.v_star);
    let mut amp = vec![0.0f64; nx - 1];
    for k in 1..=nt {
        for (i, a) in amp.iter_mut().enumerate() {
            if let Some((gap, lam)) = face_split(state, plan, &star, k, i + 1) {
                *a = a.max(h * gap.abs() * lam * (1.0 - lam));
            }
        }
    }
    let max_len = ((0.5 * plan.box_diameter / h).floor() as usize).max(MIN_PERIOD);
    let layout = periods(&amp, PERIOD_FILL * plan.eta, max_len);

    let splits: Vec<Vec<Option<(f64, f64)>>> = (0..=nt)
        .map(|k| (0..nx - 1).map(|i| if k == 0 { None } else { face_split(state, plan, data, k, i + 1) }).collect())
        .collect();
    let flux = profile_flux(&plan.profile);
    let ut_old = |u: &ScalarField, k: usize, c: usize| (u.slices[k][c] - u.slices[k - 1][c]) / dt;
    let mut total = vec![vec![0.0; nx]; nt + 1];
    let mut records = Vec::new();
    let mut weight = vec![vec![0.0; nx]; nt + 1];

    for (j, &(a, len)) in layout.iter().enumerate() {
        let b = a + len;
        // cells right of faces a+1 ..= b
        let cells: Vec<usize> = (a + 1..=b).collect();
        let mut pattern: Vec<Option<Vec<f64>>> = vec![None; nt + 1];
        for k in 1..=nt {
            let Some(split) = splits[k][a..b].iter().cloned().collect::<Option<Vec<_>>>() else { continue };
            let need: f64 = split.iter().map(|s| s.0.abs() * s.1).sum();
            let room: f64 = split.iter().map(|s| s.0.abs()).sum();
            let one_sign = split.iter().all(|s| s.0.signum() == split[0].0.signum());
            if !(one_sign && need >= 0.0 && need <= room) {
                continue;
            }
            let off: f64 = (a..b).map(|i| (data.beta[k][i + 1][0] - flux(data.p[k][i + 1])[0]).abs()).sum();
            if off <= GAP_FLOOR {
                continue;
            }
            pattern[k] = Some(period_increments(h, &split, j));
        }
        // strength per level, switched on and off no faster than the
        // u_t room allows
        let rate: Vec<f64> = (0..=nt)
            .map(|k| {
                let Some(d) = &pattern[k] else { return 0.0 };
                let size = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let busy = cells.iter().fold(0.0f64, |m, &c| {
                    let next = if k < nt { ut_old(&state.u, k + 1, c).abs() } else { 0.0 };
                    m.max(ut_old(&state.u, k, c).abs()).max(next)
                });
                if size > 0.0 { (0.5 * dt * (target - busy).max(0.0) / size).min(1.0) } else { 1.0 }
            })
            .collect();
        let mut chi = vec![0.0f64; nt + 2];
        chi[nt + 1] = f64::INFINITY;
        for k in 1..=nt {
            chi[k] = if pattern[k].is_some() { (chi[k - 1] + rate[k]).min(1.0) } else { 0.0 };
        }
        for k in (1..=nt).rev() {
            let next = if k < nt { rate[k + 1] } else { 0.0 };
            chi[k] = chi[k].min(chi[k + 1] + next);
        }

        let mut k = 1;
        while k <= nt {
            if chi[k] <= 0.0 {
                k += 1;
                continue;
            }
            let k0 = k;
            while k <= nt && chi[k] > 0.0 {
                k += 1;
            }
            let k1 = k - 1;
            let id = state.patches.len() + records.len();
            let kc = (k0 + k1) / 2;
            let fc = a + 1 + (b - a) / 2;
            let (window, frame) = centre_frame(plan, 1, data.p[kc][fc], data.beta[kc][fc]);
            let mut record = PatchRecord {
                id,
                pass,
                at: Placement { i0: a + 1, j0: 0, k0 },
                cells: vec![cells.len(), k1 + 1 - k0],
                window,
                frame: frame.map(|f| f.0),
                budget: PatchBudget { eps, eta: plan.eta, sup_change: 0.0, ut_cap: cap, ut_max: 0.0 },
                skipped: None,
            };
            let mut incs: Vec<Vec<f64>> = (k0..=k1)
                .map(|k| pattern[k].iter().flatten().map(|x| chi[k] * x).collect())
                .collect();
            let close = k1 < nt;
            let steps = k1 + 1 - k0 + usize::from(close);
            for (ci, &c) in cells.iter().enumerate() {
                let (lo, hi): (Vec<f64>, Vec<f64>) = (k0..k0 + steps)
                    .map(|k| {
                        let ut = ut_old(&state.u, k, c);
                        ((dt * (-target - ut)).min(0.0), (dt * (target - ut)).max(0.0))
                    })
                    .unzip();
                let mut col: Vec<f64> = incs.iter().map(|d| d[ci]).collect();
                rate_limit(&mut col, &lo, &hi, close);
                for (d, x) in incs.iter_mut().zip(col) {
                    d[ci] = x;
                }
            }
            if dropped.contains(&(a + 1, k0)) {
                record.skipped = Some(format!("u_t reaches the cap {cap} after the mean correction"));
                records.push(record);
                continue;
            }
            let sup = incs.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            record.budget.sup_change = sup;
            if sup >= BUMP_SHARE * plan.eta {
                record.skipped = Some(format!("sup-norm change {sup} reaches eta"));
                records.push(record);
                continue;
            }
            let mut trial = state.u.clone();
            for (k, d) in (k0..=k1).zip(&incs) {
                for (c, x) in cells.iter().zip(d) {
                    trial.slices[k][*c] += x;
                }
            }
            let ut = max_ut(&grid, &trial, k0, k1, &cells);
            record.budget.ut_max = ut;
            if ut >= cap {
                record.skipped = Some(format!("u_t reaches the cap {cap}"));
                records.push(record);
                continue;
            }
            for (k, d) in (k0..=k1).zip(&incs) {
                for (c, x) in cells.iter().zip(d) {
                    total[k][*c] += x;
                    weight[k][*c] = chi[k];
                }
            }
            records.push(record);
        }
    }
    // one zero-mean correction per level, spread over the patched cells in
    // proportion to their box strength so it varies smoothly in time
    for (d, w) in total.iter_mut().zip(&weight) {
        let sum: f64 = w.iter().sum();
        if sum > 0.0 {
            let alpha = -d.iter().sum::<f64>() / sum;
            d.iter_mut().zip(w).for_each(|(x, w)| *x += alpha * w);
        }
    }
    (total, records)
}

fn refine_rows(state: &mut StatePair, plan: &RunPlan, data: &NodeData, eps: f64, pass: usize) {
    let grid = state.grid.clone();
    let (nx, h) = (grid.nx, grid.hx());
    let cap = state.ut_cap;
    let mut dropped = HashSet::new();
    let (total, mut records, u) = loop {
        let (total, records) = row_patches(state, plan, data, eps, pass, &dropped);
        let mut u = state.u.clone();
        for (row, d) in u.slices.iter_mut().zip(&total) {
            row.iter_mut().zip(d).for_each(|(a, x)| *a += x);
        }
        // the mean correction adds a little u_t; drop boxes that it pushes
        // over the cap and rebuild
        let over: Vec<(usize, usize)> = records
            .iter()
            .filter(|p| p.skipped.is_none())
            .filter(|p| {
                let cells: Vec<usize> = (p.at.i0..p.at.i0 + p.cells[0]).collect();
                max_ut(&grid, &u, p.at.k0, p.at.k0 + p.cells[1] - 1, &cells) >= cap
            })
            .map(|p| (p.at.i0, p.at.k0))
            .collect();
        if over.is_empty() {
            break (total, records, u);
        }
        dropped.extend(over);
    };
    state.u = u;
    for (k, d) in total.iter().enumerate() {
        let mut acc = 0.0;
        for (c, x) in d.iter().enumerate().take(nx - 1) {
            acc += x;
            state.v.x[k][c + 1] += h * acc;
        }
    }
    for p in records.iter_mut().filter(|p| p.skipped.is_none()) {
        let cells: Vec<usize> = (p.at.i0..p.at.i0 + p.cells[0]).collect();
        let k1 = p.at.k0 + p.cells[1] - 1;
        let d = (p.at.k0..=k1).flat_map(|k| cells.iter().map(move |&c| (k, c)));
        p.budget.sup_change = d.fold(0.0f64, |m, (k, c)| m.max(total[k][c].abs()));
        p.budget.ut_max = max_ut(&grid, &state.u, p.at.k0, k1, &cells);
    }
    state.patches.extend(records);
}

fn refine_blocks(state: &mut StatePair, plan: &RunPlan, data: &NodeData, mask: &[Vec<bool>], eps: f64, pass: usize) {
    let grid = state.grid.clone();
    let nx = grid.nx;
    let cap = state.ut_cap;
    let current = crate::verify::caps(&grid, &state.u, &state.v).ut;
    for k0 in (1..grid.nt).step_by(BLOCK) {
        let k1 = (k0 + BLOCK).min(grid.nt);
        for j0 in (0..grid.ny.saturating_sub(BLOCK - 1)).step_by(BLOCK) {
            for i0 in (0..nx.saturating_sub(BLOCK - 1)).step_by(BLOCK) {
                let inside = (k0..=k1).all(|k| (j0..j0 + BLOCK).all(|j| (i0..i0 + BLOCK).all(|i| mask[k][grid.cell(i, j)])));
                if !inside {
                    continue;
                }
                let id = state.patches.len();
                let node = grid.cell(i0 + BLOCK / 2, j0 + BLOCK / 2);
                let kc = (k0 + k1) / 2;
                let (window, frame) = centre_frame(plan, 2, data.p[kc][node], data.beta[kc][node]);
                let mut record = PatchRecord {
                    id,
                    pass,
                    at: Placement { i0, j0, k0 },
                    cells: vec![BLOCK, BLOCK, k1 - k0],
                    window,
                    frame: frame.as_ref().map(|f| f.0.clone()),
                    budget: PatchBudget { eps, eta: plan.eta, sup_change: 0.0, ut_cap: cap, ut_max: current },
                    skipped: None,
                };
                let Some((_, f)) = frame else {
                    record.skipped = Some("no frame through the centre node".into());
                    state.patches.push(record);
                    continue;
                };
                let qn = f.q.norm();
                let (l1, l2) = (-f.t_minus * qn, f.t_plus * qn);
                let b = (0.5 * (cap - current)).min(1.0) / l1.max(l2);
                let lam = LaminateFrame { q: f.q * (1.0 / qn), b, gamma: f.gamma * (1.0 / qn) };
                let built = BoxST::on_grid(&grid, i0, j0, k0, BLOCK, BLOCK, k1 - k0)
                    .and_then(|bx| build_laminate(&lam, l1, l2, &bx, eps / 5.0).map(|patch| (bx, patch)));
                let (bx, patch) = match built {
                    Ok(x) => x,
                    Err(e) => {
                        record.skipped = Some(e.to_string());
                        state.patches.push(record);
                        continue;
                    }
                };
                let Ok(local) = bx.local_grid() else {
                    record.skipped = Some("box grid".into());
                    state.patches.push(record);
                    continue;
                };
                let (phi, psi) = patch.discretize(&local);
                record.budget.sup_change = phi.max_abs();
                if record.budget.sup_change >= plan.eta {
                    record.skipped = Some("sup-norm change reaches eta".into());
                } else if let Err(e) = apply_patch(&mut state.u, &mut state.v, &grid, &local, Placement { i0, j0, k0 }, &phi, &psi) {
                    record.skipped = Some(e.to_string());
                }
                state.patches.push(record);
            }
        }
    }
}

/// One pass with budget `eps`: patches the eligible part of `Ω¹` and checks
/// the flux and set residuals against `eps|Ω_T|` and `eps|Ω¹|`.
pub fn refine_once(mut state: StatePair, eps: f64, plan: &RunPlan, pass: usize) -> Result<StatePair, SchemeError> {
    if state.partition.count(Region::Below) > 0 {
        let data = node_data(&state);
        if state.grid.dim == 1 {
            refine_rows(&mut state, plan, &data, eps, pass);
        } else {
            let mask = eligibility(&state, plan, &data);
            refine_blocks(&mut state, plan, &data, &mask, eps, pass);
        }
    }
    let report = state.report(&plan.profile, pass + 1)?;
    let flux_budget = eps * state.grid.spacetime_measure();
    let set_budget = eps * state.omega1_measure();
    let set = report.set_residuals[Region::Below.label()];
    state.history.push(report.clone());
    let fail = |binding: &str, value: f64, budget: f64, state: StatePair| SchemeError::PassIncomplete {
        pass,
        binding: binding.into(),
        value,
        budget,
        state: Box::new(state),
    };
    if report.flux_residual > flux_budget {
        return Err(fail("flux residual", report.flux_residual, flux_budget, state));
    }
    if set > set_budget {
        return Err(fail("set distance", set, set_budget, state));
    }
    if report.caps.ut >= state.ut_cap {
        let cap = state.ut_cap;
        return Err(fail("u_t cap", report.caps.ut, cap, state));
    }
    Ok(state)
}
