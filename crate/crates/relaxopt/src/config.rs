//! Run configuration: defaults, a flat `key = value` file, and overrides.

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relaxopt_core::optimize::DescentOptions;
use relaxopt_core::{
    make_grid, AdjointForm, ForwardProblem, ImexTableau, Limiter, RelaxConfig, SpatialScheme, SpeedRule, StepRule,
    Storage,
};

use crate::error::{AppError, AppResult};
use crate::tableau_file::resolve_tableau;

/// Where the relaxation speed comes from in optimizer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedMode {
    /// Pinned to the speed of the generating control.
    Pinned,
    /// Recomputed from every control.
    PerSolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub t_final: f64,
    pub epsilon: f64,
    pub safety: f64,
    pub a_floor: f64,
    pub c_cfl: f64,
    /// Registered name or path to a tableau file.
    pub tableau: String,
    pub scheme: SpatialScheme,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub adjoint_form: AdjointForm,
    pub speed: SpeedMode,
    /// Trajectory CSV keeps every `frame_stride`-th step.
    pub frame_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let relax = RelaxConfig::default();
        let descent = DescentOptions::default();
        Self {
            x_min: 0.0,
            x_max: 2.0 * PI,
            n_cells: 300,
            t_final: 2.0,
            epsilon: relax.epsilon,
            safety: relax.safety,
            a_floor: relax.a_floor,
            c_cfl: 0.5,
            tableau: "imex-euler".into(),
            scheme: SpatialScheme::Upwind1,
            alpha: descent.alpha,
            tol: descent.tol,
            max_iter: descent.max_iter,
            seed: 42,
            output_dir: PathBuf::from("."),
            adjoint_form: AdjointForm::Ark,
            speed: SpeedMode::Pinned,
            frame_stride: 10,
        }
    }
}

pub const KEYS: &[&str] = &[
    "x_min",
    "x_max",
    "n_cells",
    "t_final",
    "epsilon",
    "safety",
    "a_floor",
    "c_cfl",
    "tableau",
    "scheme",
    "limiter",
    "alpha",
    "tol",
    "max_iter",
    "seed",
    "output_dir",
    "adjoint_form",
    "speed",
    "frame_stride",
];

fn parse<T: FromStr>(key: &str, value: &str) -> AppResult<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| AppError::config(key, format!("cannot parse `{value}`: {e}")))
}

pub fn parse_scheme(value: &str) -> Result<SpatialScheme, String> {
    match value {
        "upwind" | "upwind1" => Ok(SpatialScheme::Upwind1),
        "muscl" | "muscl2" => Ok(SpatialScheme::Muscl2(Limiter::Minmod)),
        other => Err(format!("unknown scheme `{other}` (upwind, muscl)")),
    }
}

pub fn parse_form(value: &str) -> Result<AdjointForm, String> {
    match value {
        "ark" => Ok(AdjointForm::Ark),
        "xi" => Ok(AdjointForm::Xi),
        "zeta" => Ok(AdjointForm::Zeta),
        other => Err(format!("unknown adjoint form `{other}` (ark, xi, zeta)")),
    }
}

pub fn parse_speed(value: &str) -> Result<SpeedMode, String> {
    match value {
        "pinned" => Ok(SpeedMode::Pinned),
        "per-solve" | "per_solve" => Ok(SpeedMode::PerSolve),
        other => Err(format!("unknown speed mode `{other}` (pinned, per-solve)")),
    }
}

pub fn scheme_name(s: SpatialScheme) -> &'static str {
    match s {
        SpatialScheme::Upwind1 => "upwind",
        SpatialScheme::Muscl2(_) => "muscl",
    }
}

pub fn form_name(f: AdjointForm) -> &'static str {
    match f {
        AdjointForm::Ark => "ark",
        AdjointForm::Xi => "xi",
        AdjointForm::Zeta => "zeta",
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> AppResult<()> {
        let value = value.trim();
        fn named<T>(key: &str, r: Result<T, String>) -> AppResult<T> {
            r.map_err(|m| AppError::config(key, m))
        }
        match key {
            "x_min" => self.x_min = parse(key, value)?,
            "x_max" => self.x_max = parse(key, value)?,
            "n_cells" => self.n_cells = parse(key, value)?,
            "t_final" => self.t_final = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "safety" => self.safety = parse(key, value)?,
            "a_floor" => self.a_floor = parse(key, value)?,
            "c_cfl" => self.c_cfl = parse(key, value)?,
            "tableau" => self.tableau = value.to_string(),
            "scheme" => self.scheme = named(key, parse_scheme(value))?,
            "limiter" if value == "minmod" => {}
            "limiter" => return Err(AppError::config(key, format!("unknown limiter `{value}` (minmod)"))),
            "alpha" => self.alpha = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "adjoint_form" => self.adjoint_form = named(key, parse_form(value))?,
            "speed" => self.speed = named(key, parse_speed(value))?,
            "frame_stride" => self.frame_stride = parse(key, value)?,
            _ => return Err(AppError::config(key, format!("unknown key (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, origin: &str, text: &str) -> AppResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(AppError::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            self.set(key.trim(), value).map_err(|e| AppError::Parse {
                path: origin.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> AppResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        self.apply_text(&path.display().to_string(), &text)
    }

    /// Checks every module precondition, naming the offending key.
    pub fn validate(&self) -> AppResult<()> {
        let check = |ok: bool, key: &str, reason: String| if ok { Ok(()) } else { Err(AppError::config(key, reason)) };
        check(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min, "x_max",
            format!("domain [{}, {}] is empty", self.x_min, self.x_max))?;
        check(self.n_cells >= 2, "n_cells", format!("need at least 2 cells, got {}", self.n_cells))?;
        check(self.t_final.is_finite() && self.t_final > 0.0, "t_final", format!("must be positive, got {}", self.t_final))?;
        check(self.epsilon.is_finite() && self.epsilon > 0.0, "epsilon", format!("must be positive, got {}", self.epsilon))?;
        check(self.safety.is_finite() && self.safety >= 1.0, "safety", format!("must be at least 1, got {}", self.safety))?;
        check(self.a_floor.is_finite() && self.a_floor > 0.0, "a_floor", format!("must be positive, got {}", self.a_floor))?;
        check(self.c_cfl.is_finite() && self.c_cfl > 0.0, "c_cfl", format!("must be positive, got {}", self.c_cfl))?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", format!("must lie in (0, 1), got {}", self.alpha))?;
        check(self.tol.is_finite() && self.tol > 0.0, "tol", format!("must be positive, got {}", self.tol))?;
        check(self.frame_stride >= 1, "frame_stride", "must be at least 1".into())?;
        self.load_tableau().map(|_| ())
    }

    pub fn load_tableau(&self) -> AppResult<ImexTableau> {
        resolve_tableau(&self.tableau)
    }

    pub fn relax(&self) -> RelaxConfig {
        RelaxConfig { epsilon: self.epsilon, safety: self.safety, a_floor: self.a_floor }
    }

    /// Forward problem with per-solve speed and the CFL step rule.
    pub fn forward_problem(&self) -> AppResult<ForwardProblem> {
        let grid = make_grid(self.x_min, self.x_max, self.n_cells)?;
        let mut p = ForwardProblem::burgers(grid, self.t_final);
        p.relax = self.relax();
        p.step_rule = StepRule::Cfl(self.c_cfl);
        p.scheme = self.scheme;
        p.speed = SpeedRule::PerSolve;
        p.validate()?;
        Ok(p)
    }

    pub fn descent_options(&self) -> DescentOptions {
        DescentOptions {
            alpha: self.alpha,
            tol: self.tol,
            max_iter: self.max_iter,
            form: self.adjoint_form,
            storage: Storage::Full,
        }
    }

    /// One-line summary written as the `# config` header of every CSV.
    pub fn header(&self) -> String {
        format!(
            "x_min={} x_max={} n_cells={} t_final={} epsilon={} safety={} a_floor={} c_cfl={} tableau={} scheme={} \
             alpha={} tol={} max_iter={} seed={} adjoint_form={} speed={}",
            self.x_min,
            self.x_max,
            self.n_cells,
            self.t_final,
            self.epsilon,
            self.safety,
            self.a_floor,
            self.c_cfl,
            self.tableau,
            scheme_name(self.scheme),
            self.alpha,
            self.tol,
            self.max_iter,
            self.seed,
            form_name(self.adjoint_form),
            match self.speed {
                SpeedMode::Pinned => "pinned",
                SpeedMode::PerSolve => "per-solve",
            },
        )
    }
}
