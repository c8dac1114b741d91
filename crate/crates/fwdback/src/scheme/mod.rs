//! The pipeline driver: choice of r̃, the window cover, the admissible
//! initial state, refinement passes and the general existence route.

mod existence;
mod refine;

pub use existence::{general_existence, Existence, ExistenceRoute};
pub use refine::{refine_once, PatchBudget, PatchRecord};

use crate::geometry::{estimate_mu_prime, solve_frame, DiagonalPoint, GeometryError, SolutionType, Window};
use crate::oscillation::OscillationError;
use crate::parabolic::grid::{gradient, node_gradients, node_vectors, tangential_at_x_faces, tangential_at_y_faces};
use crate::parabolic::{
    boundary_function, gradient_magnitudes, normalize_initial, partition_domain, GridError, GridST, ParabolicError, Partition,
    Region, ScalarField, VectorField,
};
use crate::profile::{ModifiedProfile, Profile, ProfileError};
use crate::verify::{caps, full_report, time_derivative, ReportInput, VerificationReport};
use crate::VecN;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SchemeError {
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("r_tilde = {r_tilde} not inside ({lo}, {hi})")]
    RTildeOutOfRange { r_tilde: f64, lo: f64, hi: f64 },
    #[error("cover failed near r = {at}: window width {width} below 1e-6")]
    CoverFailed { at: f64, width: f64 },
    #[error("audit failed at level {level}, node {node}: {detail}")]
    AuditFailed { level: usize, node: usize, detail: String },
    #[error("pass {pass} incomplete: {binding} is {value} against a budget of {budget}")]
    PassIncomplete {
        pass: usize,
        binding: String,
        value: f64,
        budget: f64,
        /// Best state reached, with its residual history.
        state: Box<StatePair>,
    },
    #[error("invalid setting {field}: {reason}")]
    InvalidSetting { field: String, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oscillation(#[from] OscillationError),
}

/// How r̃ is chosen inside `(σ(m₀′), σ(s_+))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RTildeStrategy {
    Midpoint,
    Given(f64),
}

/// User-facing knobs of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub solution_type: SolutionType,
    pub r_tilde: RTildeStrategy,
    pub epsilon0: f64,
    pub passes: usize,
    /// Sup-norm budget of a single pass.
    pub eta: f64,
    pub seed: u64,
    /// Cap on the space-time diameter of a patch box; `None` leaves boxes
    /// uncapped.
    pub box_diameter: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            solution_type: SolutionType::TypeI,
            r_tilde: RTildeStrategy::Midpoint,
            epsilon0: 0.8,
            passes: 3,
            eta: 0.1,
            seed: 0,
            box_diameter: None,
        }
    }
}

/// Everything a run needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub profile: Profile<f64>,
    pub solution_type: SolutionType,
    pub r_tilde: f64,
    pub cover: Vec<Window<f64>>,
    /// Levels below this or within it of r̃ are left to the margins.
    pub cover_slack: f64,
    pub grid: GridST,
    /// Initial datum on the cells, as given (not normalised).
    pub u0: Vec<f64>,
    pub epsilon0: f64,
    pub passes: usize,
    pub eta: f64,
    pub seed: u64,
    pub box_diameter: f64,
}

impl RunPlan {
    pub fn new(profile: Profile<f64>, grid: GridST, u0: Vec<f64>, settings: Settings) -> Result<Self, SchemeError> {
        grid.validate()?;
        grid.check_cells(&u0)?;
        let bad = |field: &str, reason: &str| Err(SchemeError::InvalidSetting { field: field.into(), reason: reason.into() });
        if !(settings.epsilon0 > 0.0 && settings.epsilon0.is_finite()) {
            return bad("epsilon0", "must be positive");
        }
        if settings.passes == 0 {
            return bad("passes", "must be at least 1");
        }
        if !(settings.eta > 0.0 && settings.eta.is_finite()) {
            return bad("eta", "must be positive");
        }
        let r_tilde = select_r_tilde(&profile, &grid, &u0, settings.r_tilde)?;
        let cover_slack = 1e-3 * r_tilde;
        let cover = build_cover(&profile, r_tilde, settings.solution_type, cover_slack)?;
        let diam = (grid.lx * grid.lx + if grid.dim == 2 { grid.ly * grid.ly } else { 0.0 } + grid.t_end * grid.t_end).sqrt();
        let box_diameter = match settings.box_diameter {
            Some(d) if d > 0.0 => d,
            Some(_) => return bad("box_diameter", "must be positive"),
            None => 2.0 * diam,
        };
        Ok(Self {
            profile,
            solution_type: settings.solution_type,
            r_tilde,
            cover,
            cover_slack,
            grid,
            u0,
            epsilon0: settings.epsilon0,
            passes: settings.passes,
            eta: settings.eta,
            seed: settings.seed,
            box_diameter,
        })
    }

    /// Budget of pass `j`, `ε₀/2^j`.
    pub fn epsilon(&self, j: usize) -> f64 {
        self.epsilon0 / 2f64.powi(j as i32)
    }

    /// Index of the first cover window containing `level`.
    pub fn window_of(&self, level: f64) -> Option<usize> {
        self.cover.iter().position(|w| w.contains(level))
    }

    /// Indices of every cover window containing `level`.
    pub fn windows_of(&self, level: f64) -> impl Iterator<Item = usize> + '_ {
        self.cover.iter().enumerate().filter(move |(_, w)| w.contains(level)).map(|(i, _)| i)
    }
}

/// Gradient magnitudes of a cell field at the gradient nodes, without the
/// 1D boundary faces where the Neumann condition forces zero.
fn interior_gradients(grid: &GridST, u: &[f64]) -> Vec<f64> {
    let (gx, gy) = gradient(grid, u);
    let p = node_gradients(grid, &gx, &gy);
    let all = p.iter().map(|p| p[0].hypot(p[1]));
    if grid.dim == 1 {
        all.skip(1).take(grid.nx - 1).collect()
    } else {
        all.collect()
    }
}

/// Picks r̃ inside `(σ(m₀′), σ(s_+))` with `m₀′ = max{min |Du₀|, s₀}`.
pub fn select_r_tilde(profile: &Profile<f64>, grid: &GridST, u0: &[f64], strategy: RTildeStrategy) -> Result<f64, SchemeError> {
    grid.check_cells(u0)?;
    let g = interior_gradients(grid, u0);
    let max = g.iter().cloned().fold(0.0, f64::max);
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= crate::parabolic::BAND_TOL {
        return Err(SchemeError::HypothesisFailed("Du0 vanishes identically".into()));
    }
    if min >= profile.s_plus {
        return Err(SchemeError::HypothesisFailed(format!("min |Du0| = {min} is not below s_+ = {}", profile.s_plus)));
    }
    let m0 = min.max(profile.s_zero);
    let lo = profile.sigma(m0);
    let hi = profile.sigma(profile.s_plus);
    match strategy {
        RTildeStrategy::Midpoint => Ok(0.5 * (lo + hi)),
        RTildeStrategy::Given(r) => {
            if r > lo && r < hi {
                Ok(r)
            } else {
                Err(SchemeError::RTildeOutOfRange { r_tilde: r, lo, hi })
            }
        }
    }
}

/// Greedy left-to-right cover of `(slack, r̃ − slack)` by certified windows
/// inside `(0, r̃)`, neighbours overlapping by at least a tenth of the
/// smaller width.
pub fn build_cover(profile: &Profile<f64>, r_tilde: f64, ty: SolutionType, slack: f64) -> Result<Vec<Window<f64>>, SchemeError> {
    if !(r_tilde > 0.0 && r_tilde < profile.r_max()) {
        return Err(SchemeError::RTildeOutOfRange { r_tilde, lo: 0.0, hi: profile.r_max() });
    }
    if !(slack > 0.0 && 2.0 * slack < r_tilde) {
        return Err(SchemeError::InvalidSetting { field: "cover slack".into(), reason: format!("{slack} does not fit below r_tilde/2") });
    }
    let target = r_tilde - slack;
    let mut out: Vec<Window<f64>> = Vec::new();
    let mut a = slack;
    while a < target {
        // each window starts 20% of its half-width left of the covered end
        let room = (0.999 * (r_tilde - a) / (1.0 + 0.8 * 0.999)).min(0.999 * a / 0.2);
        let mut mu = estimate_mu_prime(profile, a, ty)?.mu.min(room);
        let mut r = a + 0.8 * mu;
        for _ in 0..60 {
            let cap = estimate_mu_prime(profile, r, ty)?.mu;
            if cap >= mu {
                break;
            }
            mu = cap;
            r = a + 0.8 * mu;
        }
        if !(mu >= 1e-6) {
            return Err(SchemeError::CoverFailed { at: a, width: 2.0 * mu.max(0.0) });
        }
        out.push(Window::new(r, mu, ty));
        a = r + mu;
    }
    Ok(out)
}

/// The working pair `(u, v)` with the fixed classical reference and the
/// bookkeeping of every pass.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub grid: GridST,
    pub u: ScalarField,
    pub v: VectorField,
    pub u_star: ScalarField,
    pub v_star: VectorField,
    pub partition: Partition,
    /// Mean of the initial datum, removed before solving.
    pub offset: f64,
    pub r_tilde: f64,
    pub solution_type: SolutionType,
    pub patches: Vec<PatchRecord>,
    pub history: Vec<VerificationReport>,
    /// `m = ‖u*_t‖∞ + 1`.
    pub ut_cap: f64,
    /// `R = max{σ(M₀), σ(s_+)}`.
    pub vt_cap: f64,
}

impl StatePair {
    pub fn report(&self, profile: &Profile<f64>, pass_index: usize) -> Result<VerificationReport, SchemeError> {
        Ok(full_report(&ReportInput {
            grid: &self.grid,
            u: &self.u,
            v: &self.v,
            partition: &self.partition,
            profile,
            r_tilde: self.r_tilde,
            solution_type: self.solution_type,
            pass_index,
        })?)
    }

    /// `|Ω¹|`, the measure of the region where the modification is active.
    pub fn omega1_measure(&self) -> f64 {
        crate::verify::mask_measure(&self.grid, &self.partition.mask(Region::Below))
    }

    /// `u` with the mean of the initial datum restored.
    pub fn u_with_offset(&self) -> ScalarField {
        ScalarField { slices: self.u.slices.iter().map(|s| s.iter().map(|x| x + self.offset).collect()).collect() }
    }
}

const AUDIT_SAMPLES: usize = 1000;
/// Misalignment of `v_t` against `Du` tolerated by the audit, per unit
/// of mesh width.
const ALIGN_TOL: f64 = 1.0;

/// `(u*, v*)` from the modified profile, with the admissibility audit.
pub fn build_initial_state(plan: &RunPlan) -> Result<StatePair, SchemeError> {
    let grid = &plan.grid;
    let offset = crate::parabolic::grid::mean(grid, &plan.u0);
    let u0 = normalize_initial(grid, &plan.u0);
    let modified = ModifiedProfile::new(&plan.profile, plan.r_tilde)?;
    let pair = boundary_function(&modified, &u0, grid)?;
    let partition = partition_domain(&gradient_magnitudes(grid, &pair.du_star), plan.r_tilde, &plan.profile)?;
    let star_caps = caps(grid, &pair.u_star, &pair.v_star);
    let g0 = interior_gradients(grid, &u0).into_iter().fold(0.0, f64::max);
    let state = StatePair {
        grid: grid.clone(),
        u: pair.u_star.clone(),
        v: pair.v_star.clone(),
        u_star: pair.u_star,
        v_star: pair.v_star,
        partition,
        offset,
        r_tilde: plan.r_tilde,
        solution_type: plan.solution_type,
        patches: Vec::new(),
        history: Vec::new(),
        ut_cap: star_caps.ut + 1.0,
        vt_cap: plan.profile.sigma(g0).max(plan.profile.sigma(plan.profile.s_plus)),
    };
    audit_initial(plan, &state)?;
    Ok(state)
}

/// Frame solves at sampled nodes of `Ω¹` and the flux identity on the
/// classical region. Returns the number of frame solves.
pub fn audit_initial(plan: &RunPlan, state: &StatePair) -> Result<usize, SchemeError> {
    let grid = &state.grid;
    let nodes = grid.gradient_nodes();
    let vt = time_derivative(grid, &state.v);
    let node_data = |k: usize| {
        let (gx, gy) = gradient(grid, &state.u.slices[k]);
        (node_gradients(grid, &gx, &gy), node_vectors(grid, vt.slice(k)))
    };
    let vec = |a: [f64; 2]| if grid.dim == 1 { VecN::new1(a[0]) } else { VecN::new2(a[0], a[1]) };

    // the first level carries a one-sided v_t, so it is left out
    let mut candidates = Vec::new();
    for k in 1..grid.levels() {
        for i in 0..nodes {
            if state.partition.region(k, i) == Region::Below {
                candidates.push((k, i));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let picked: Vec<(usize, usize)> = if candidates.len() <= AUDIT_SAMPLES {
        candidates
    } else {
        let mut idx = sample(&mut rng, candidates.len(), AUDIT_SAMPLES).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|j| candidates[j]).collect()
    };
    let mut solved = 0;
    let mut cache: Option<(usize, Vec<[f64; 2]>, Vec<[f64; 2]>)> = None;
    for (k, i) in picked {
        if cache.as_ref().is_none_or(|c| c.0 != k) {
            let (p, w) = node_data(k);
            cache = Some((k, p, w));
        }
        let (_, p, w) = cache.as_ref().unwrap();
        let level = w[i][0].hypot(w[i][1]);
        // the point needs a frame in one of the windows around its level
        let mut first_err = None;
        let mut try_point = |beta: [f64; 2]| {
            let pt = DiagonalPoint::new(vec(p[i]), vec(beta));
            for win in plan.windows_of(level) {
                match solve_frame(&plan.profile, &pt, &plan.cover[win], None) {
                    Ok(_) => return true,
                    Err(e) => {
                        first_err.get_or_insert((win, e));
                    }
                }
            }
            false
        };
        let mut found = try_point(w[i]);
        // in 2D, face-to-node averaging turns v_t off the direction of Du by
        // O(h); within that tolerance the aligned vector is audited instead
        let pn = p[i][0].hypot(p[i][1]);
        if !found && grid.dim == 2 && pn > 0.0 && level > 0.0 {
            let sin = (p[i][0] * w[i][1] - p[i][1] * w[i][0]) / (pn * level);
            if sin.abs() <= ALIGN_TOL * grid.hx().max(grid.hy()) {
                found = try_point([level * p[i][0] / pn, level * p[i][1] / pn]);
            }
        }
        if !found {
            let Some((win, e)) = first_err else { continue };
            return Err(SchemeError::AuditFailed {
                level: k,
                node: i,
                detail: format!("|p| = {}, |beta| = {level}, window {win} = ({}, {}): {e}", p[i][0].hypot(p[i][1]), plan.cover[win].lo(), plan.cover[win].hi()),
            });
        }
        solved += 1;
    }
    // the flux identity is checked where the solver evaluates it, on the
    // faces, wherever the face gradient is past s_+(r̃) and the modified
    // profile agrees with σ
    let s_cut = plan.profile.s_plus_of(plan.r_tilde)? * (1.0 + 1e-9);
    let tol = 1e-8 * (1.0 + state.vt_cap);
    for k in 1..grid.levels() {
        let (gx, gy) = gradient(grid, &state.u.slices[k]);
        let faces = [(&gx, tangential_at_x_faces(grid, &gy), &vt.x[k], "x"), (&gy, tangential_at_y_faces(grid, &gx), &vt.y[k], "y")];
        for (normal, tangential, w, side) in faces {
            for (f, (&g, &t)) in normal.iter().zip(&tangential).enumerate() {
                let s = g.hypot(t);
                if s < s_cut {
                    continue;
                }
                let gap = (w[f] - plan.profile.sigma(s) / s * g).abs();
                if gap > tol {
                    return Err(SchemeError::AuditFailed { level: k, node: f, detail: format!("flux gap {gap} on classical {side}-face {f}") });
                }
            }
        }
    }
    Ok(solved)
}

/// Result of [`iterate`]: the final state and one report per pass, the
/// first being the initial state.
#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub state: StatePair,
    pub reports: Vec<VerificationReport>,
}

impl IterateOutcome {
    pub fn flux_trace(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.flux_residual).collect()
    }
}

/// Initial state followed by `J` refinement passes with `ε_j = ε₀/2^j`.
pub fn iterate(plan: &RunPlan) -> Result<IterateOutcome, SchemeError> {
    let mut state = build_initial_state(plan)?;
    let first = state.report(&plan.profile, 0)?;
    state.history.push(first);
    for j in 0..plan.passes {
        state = refine_once(state, plan.epsilon(j), plan, j)?;
    }
    Ok(IterateOutcome { reports: state.history.clone(), state })
}
