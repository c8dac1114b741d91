//! Run configuration.
//!
//! A config is a TOML file. Only the `[grid]` table is required.
//!
//! ```toml
//! profile = "quadratic-glued"     # preset name or an expression in s
//! type = "I"                      # "I" or "II"
//! r_tilde = "auto"                # "auto" (midpoint) or a number
//! epsilon0 = 0.8
//! passes = 3
//! eta = 0.1
//! seed = 0
//! out = "run"                     # output directory, overridden by --out
//!
//! [grid]
//! nx = 128                        # ny present means a 2D grid
//! lx = 1.0
//! nt = 128
//! t_end = 0.3
//!
//! [initial]
//! kind = "cosine"                 # cosine, linear or constant
//! amplitude = 1.2
//! ```
//!
//! Profile expressions use the variable `s`, numbers, `pi`, `+ - * / ^`,
//! parentheses and the functions `sqrt exp ln sin cos tanh atan abs min max`,
//! e.g. `min(s,4)*(min(s,4)-3) + 5*max(s-4,0)`. The profile must be of
//! non-Fourier type.
//!
//! Initial data on `[0, lx]` (times `[0, ly]` in 2D): `cosine` is
//! `a cos(πx/lx)` (times `cos(πy/ly)`), `linear` is `a x` and `constant`
//! is `a`.

use fwdback::parabolic::GridST;
use fwdback::scheme::{RTildeStrategy, Settings};
use fwdback::{Profile, SolutionType};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

pub fn config_error(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError { field: field.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub profile: Option<String>,
    #[serde(rename = "type")]
    pub solution_type: Option<String>,
    pub grid: Option<GridSpec>,
    pub initial: Option<InitialSpec>,
    pub r_tilde: Option<RTildeValue>,
    pub epsilon0: Option<f64>,
    pub passes: Option<i64>,
    pub eta: Option<f64>,
    pub seed: Option<i64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: i64,
    pub ny: Option<i64>,
    #[serde(default = "unit")]
    pub lx: f64,
    #[serde(default = "unit")]
    pub ly: f64,
    pub nt: i64,
    pub t_end: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: String,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RTildeValue {
    Number(f64),
    Word(String),
}

/// Command line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub passes: Option<usize>,
    pub solution_type: Option<SolutionType>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated config.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile_spec: String,
    pub profile: Profile,
    pub grid: GridST,
    pub u0: Vec<f64>,
    pub settings: Settings,
    pub out: Option<PathBuf>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = toml_field(text, &e).unwrap_or_else(|| "config".into());
            config_error(&field, e.message())
        })
    }

    /// The demo run: 1D test profile, cosine datum, 256 cells and steps up
    /// to t = 0.3.
    pub fn demo() -> Self {
        Self {
            grid: Some(GridSpec { nx: 256, ny: None, lx: 1.0, ly: 1.0, nt: 256, t_end: 0.3 }),
            ..Default::default()
        }
    }

    pub fn resolve(self, over: &Overrides) -> Result<RunConfig, ConfigError> {
        let profile_spec = self.profile.unwrap_or_else(|| "quadratic-glued".into());
        let profile = Profile::from_spec(&profile_spec).map_err(|e| config_error("profile", e))?;

        let solution_type = match (over.solution_type, self.solution_type.as_deref()) {
            (Some(t), _) => t,
            (None, None) => SolutionType::TypeI,
            (None, Some(s)) => parse_type(s).ok_or_else(|| config_error("type", format!("expected \"I\" or \"II\", got \"{s}\"")))?,
        };

        let g = self.grid.ok_or_else(|| config_error("grid", "missing [grid] table"))?;
        let count = |field: &str, v: i64, min: i64| -> Result<usize, ConfigError> {
            if v < min {
                Err(config_error(field, format!("must be at least {min}, got {v}")))
            } else {
                Ok(v as usize)
            }
        };
        let positive = |field: &str, v: f64| -> Result<f64, ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(config_error(field, format!("must be positive, got {v}")))
            }
        };
        let nx = count("grid.nx", g.nx, 2)?;
        let nt = count("grid.nt", g.nt, 1)?;
        let lx = positive("grid.lx", g.lx)?;
        let t_end = positive("grid.t_end", g.t_end)?;
        let grid = match g.ny {
            None => GridST::new_1d(nx, lx, nt, t_end),
            Some(ny) => GridST::new_2d(nx, count("grid.ny", ny, 2)?, lx, positive("grid.ly", g.ly)?, nt, t_end),
        }
        .map_err(|e| config_error("grid", e))?;

        let init = self.initial.unwrap_or(InitialSpec { kind: "cosine".into(), amplitude: 1.2 });
        if !init.amplitude.is_finite() {
            return Err(config_error("initial.amplitude", "must be finite"));
        }
        let a = init.amplitude;
        let (lx, ly, two_d) = (grid.lx, grid.ly, grid.dim == 2);
        let u0 = match init.kind.as_str() {
            "cosine" => grid.cell_averages(|x, y| a * (PI * x / lx).cos() * if two_d { (PI * y / ly).cos() } else { 1.0 }),
            "linear" => grid.cell_averages(|x, _| a * x),
            "constant" => vec![a; grid.cells()],
            other => return Err(config_error("initial.kind", format!("unknown kind \"{other}\""))),
        };

        let r_tilde = match self.r_tilde {
            None => RTildeStrategy::Midpoint,
            Some(RTildeValue::Word(w)) if w == "auto" => RTildeStrategy::Midpoint,
            Some(RTildeValue::Word(w)) => return Err(config_error("r_tilde", format!("expected a number or \"auto\", got \"{w}\""))),
            Some(RTildeValue::Number(r)) => RTildeStrategy::Given(positive("r_tilde", r)?),
        };
        let defaults = Settings::default();
        let passes = match (over.passes, self.passes) {
            (Some(p), _) => p,
            (None, Some(p)) => count("passes", p, 1)?,
            (None, None) => defaults.passes,
        };
        if passes == 0 {
            return Err(config_error("passes", "must be at least 1"));
        }
        let seed = match (over.seed, self.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => u64::try_from(s).map_err(|_| config_error("seed", "must be non-negative"))?,
            (None, None) => defaults.seed,
        };
        let settings = Settings {
            solution_type,
            r_tilde,
            epsilon0: positive("epsilon0", self.epsilon0.unwrap_or(defaults.epsilon0))?,
            passes,
            eta: positive("eta", self.eta.unwrap_or(defaults.eta))?,
            seed,
            box_diameter: None,
        };
        Ok(RunConfig { profile_spec, profile, grid, u0, settings, out: over.out.clone().or(self.out) })
    }
}

pub fn parse_type(s: &str) -> Option<SolutionType> {
    match s {
        "I" => Some(SolutionType::TypeI),
        "II" => Some(SolutionType::TypeII),
        _ => None,
    }
}

/// Dotted key path of the value a TOML error points at, from its span.
fn toml_field(text: &str, e: &toml::de::Error) -> Option<String> {
    let span = e.span()?;
    let before = &text[..span.start.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = &text[line_start..];
    let line = line.lines().next().unwrap_or("");
    let table = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line.split('=').next().map(str::trim).filter(|k| !k.is_empty() && line.contains('='));
    match (table, key) {
        (Some(t), Some(k)) => Some(format!("{t}.{k}")),
        (None, Some(k)) => Some(k.to_string()),
        (Some(t), None) => Some(t),
        (None, None) => None,
    }
}
