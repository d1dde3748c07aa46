//! Experiment configuration: `key = value` files with `#` comments,
//! strict key validation, defaults, and a deterministic echo that
//! round-trips through the parser.

use crate::dyadic::Exponent;
use crate::pressure::{MethodChoice, PressureConfig};
use crate::solver::{ProxyConfig, SolverConfig};
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: malformed value for `{key}`: {value}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: expected `key = value`")]
    BadSyntax { line: usize },
    #[error("{0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitProfile {
    TaylorGreen,
    RandomBand,
}

impl InitProfile {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "taylor_green" => Some(InitProfile::TaylorGreen),
            "random_band" => Some(InitProfile::RandomBand),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            InitProfile::TaylorGreen => "taylor_green",
            InitProfile::RandomBand => "random_band",
        }
    }
}

/// Full experiment configuration. Field names mirror the config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid_n: usize,
    pub grid_length: f64,
    pub time_dt: f64,
    pub time_t_end: f64,
    pub time_cfl_cap: f64,
    pub time_pressure_per_stage: bool,
    pub time_drift_tol: f64,
    pub init_seed: u64,
    pub init_kmin: i64,
    pub init_kmax: i64,
    pub init_u_amp: f64,
    pub init_b_amp: f64,
    pub init_profile: InitProfile,
    pub pressure_method: MethodChoice,
    pub pressure_tol: f64,
    pub pressure_max_iter: usize,
    pub pressure_relax: f64,
    pub proxy_bkm_cap: f64,
    pub proxy_tail_cap: f64,
    pub proxy_use_omega: bool,
    pub diag_s: f64,
    pub diag_r: Exponent,
    pub output_dir: String,
    pub output_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid_n: 64,
            grid_length: 2.0 * PI,
            time_dt: 0.0,
            time_t_end: 1.0,
            time_cfl_cap: 0.5,
            time_pressure_per_stage: true,
            time_drift_tol: 1e-3,
            init_seed: 0,
            init_kmin: 1,
            init_kmax: 4,
            init_u_amp: 1.0,
            init_b_amp: 0.0,
            init_profile: InitProfile::TaylorGreen,
            pressure_method: MethodChoice::FixedPointWithCgFallback,
            pressure_tol: 1e-10,
            pressure_max_iter: 200,
            pressure_relax: 1.0,
            proxy_bkm_cap: 100.0,
            proxy_tail_cap: 0.1,
            proxy_use_omega: false,
            diag_s: 1.0,
            diag_r: Exponent::One,
            output_dir: String::new(),
            output_stride: 1,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys and malformed values are rejected with their
    /// line number, and the assembled config is invariant-checked.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::BadSyntax { line });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "grid.n" => cfg.grid_n = value.parse().map_err(|_| bad())?,
                "grid.length" => cfg.grid_length = value.parse().map_err(|_| bad())?,
                "time.dt" => cfg.time_dt = value.parse().map_err(|_| bad())?,
                "time.t_end" => cfg.time_t_end = value.parse().map_err(|_| bad())?,
                "time.cfl_cap" => cfg.time_cfl_cap = value.parse().map_err(|_| bad())?,
                "time.pressure_per_stage" => {
                    cfg.time_pressure_per_stage = parse_bool(value).ok_or_else(bad)?
                }
                "time.drift_tol" => cfg.time_drift_tol = value.parse().map_err(|_| bad())?,
                "init.seed" => cfg.init_seed = value.parse().map_err(|_| bad())?,
                "init.kmin" => cfg.init_kmin = value.parse().map_err(|_| bad())?,
                "init.kmax" => cfg.init_kmax = value.parse().map_err(|_| bad())?,
                "init.u_amp" => cfg.init_u_amp = value.parse().map_err(|_| bad())?,
                "init.b_amp" => cfg.init_b_amp = value.parse().map_err(|_| bad())?,
                "init.profile" => cfg.init_profile = InitProfile::parse(value).ok_or_else(bad)?,
                "pressure.method" => {
                    cfg.pressure_method = match value {
                        "fixed_point" => MethodChoice::FixedPoint,
                        "cg" => MethodChoice::Cg,
                        "fixed_point_with_cg_fallback" => MethodChoice::FixedPointWithCgFallback,
                        _ => return Err(bad()),
                    }
                }
                "pressure.tol" => cfg.pressure_tol = value.parse().map_err(|_| bad())?,
                "pressure.max_iter" => cfg.pressure_max_iter = value.parse().map_err(|_| bad())?,
                "pressure.relax" => cfg.pressure_relax = value.parse().map_err(|_| bad())?,
                "proxy.bkm_cap" => cfg.proxy_bkm_cap = value.parse().map_err(|_| bad())?,
                "proxy.tail_cap" => cfg.proxy_tail_cap = value.parse().map_err(|_| bad())?,
                "proxy.use_omega" => cfg.proxy_use_omega = parse_bool(value).ok_or_else(bad)?,
                "diag.s" => cfg.diag_s = value.parse().map_err(|_| bad())?,
                "diag.r" => cfg.diag_r = Exponent::parse(value).ok_or_else(bad)?,
                "output.dir" => cfg.output_dir = value.to_string(),
                "output.stride" => cfg.output_stride = value.parse().map_err(|_| bad())?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::Invariant(msg));
        if self.grid_n % 2 != 0 || self.grid_n < 16 {
            return inv(format!(
                "grid.n must be even and >= 16, got {}",
                self.grid_n
            ));
        }
        if !(self.grid_length > 0.0) {
            return inv(format!(
                "grid.length must be positive, got {}",
                self.grid_length
            ));
        }
        if !(self.init_b_amp < 1.0) || self.init_b_amp < 0.0 {
            return inv(format!(
                "init.b_amp must lie in [0, 1) to keep the density bounded away from zero, got {}",
                self.init_b_amp
            ));
        }
        if self.init_u_amp < 0.0 {
            return inv(format!(
                "init.u_amp must be nonnegative, got {}",
                self.init_u_amp
            ));
        }
        if self.init_kmin < 1 || self.init_kmax < self.init_kmin {
            return inv(format!(
                "init band must satisfy 1 <= kmin <= kmax, got [{}, {}]",
                self.init_kmin, self.init_kmax
            ));
        }
        if self.init_kmax > (self.grid_n / 2 - 1) as i64 {
            return inv(format!(
                "init.kmax {} exceeds the largest resolvable mode {}",
                self.init_kmax,
                self.grid_n / 2 - 1
            ));
        }
        if self.time_t_end < 0.0 {
            return inv(format!(
                "time.t_end must be nonnegative, got {}",
                self.time_t_end
            ));
        }
        if !(self.time_cfl_cap > 0.0) {
            return inv(format!(
                "time.cfl_cap must be positive, got {}",
                self.time_cfl_cap
            ));
        }
        if !(self.pressure_tol > 0.0) || self.pressure_max_iter == 0 {
            return inv("pressure.tol must be positive and pressure.max_iter nonzero".into());
        }
        if !(self.pressure_relax > 0.0 && self.pressure_relax <= 1.0) {
            return inv(format!(
                "pressure.relax must lie in (0, 1], got {}",
                self.pressure_relax
            ));
        }
        if self.output_stride == 0 {
            return inv("output.stride must be at least 1".into());
        }
        Ok(())
    }

    /// Deterministic echo; `parse(echo(cfg)) == cfg`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let method = match self.pressure_method {
            MethodChoice::FixedPoint => "fixed_point",
            MethodChoice::Cg => "cg",
            MethodChoice::FixedPointWithCgFallback => "fixed_point_with_cg_fallback",
        };
        let _ = writeln!(s, "grid.n = {}", self.grid_n);
        let _ = writeln!(s, "grid.length = {}", self.grid_length);
        let _ = writeln!(s, "time.dt = {}", self.time_dt);
        let _ = writeln!(s, "time.t_end = {}", self.time_t_end);
        let _ = writeln!(s, "time.cfl_cap = {}", self.time_cfl_cap);
        let _ = writeln!(
            s,
            "time.pressure_per_stage = {}",
            self.time_pressure_per_stage
        );
        let _ = writeln!(s, "time.drift_tol = {}", self.time_drift_tol);
        let _ = writeln!(s, "init.seed = {}", self.init_seed);
        let _ = writeln!(s, "init.kmin = {}", self.init_kmin);
        let _ = writeln!(s, "init.kmax = {}", self.init_kmax);
        let _ = writeln!(s, "init.u_amp = {}", self.init_u_amp);
        let _ = writeln!(s, "init.b_amp = {}", self.init_b_amp);
        let _ = writeln!(s, "init.profile = {}", self.init_profile.name());
        let _ = writeln!(s, "pressure.method = {method}");
        let _ = writeln!(s, "pressure.tol = {}", self.pressure_tol);
        let _ = writeln!(s, "pressure.max_iter = {}", self.pressure_max_iter);
        let _ = writeln!(s, "pressure.relax = {}", self.pressure_relax);
        let _ = writeln!(s, "proxy.bkm_cap = {}", self.proxy_bkm_cap);
        let _ = writeln!(s, "proxy.tail_cap = {}", self.proxy_tail_cap);
        let _ = writeln!(s, "proxy.use_omega = {}", self.proxy_use_omega);
        let _ = writeln!(s, "diag.s = {}", self.diag_s);
        let _ = writeln!(s, "diag.r = {}", self.diag_r);
        if !self.output_dir.is_empty() {
            let _ = writeln!(s, "output.dir = {}", self.output_dir);
        }
        let _ = writeln!(s, "output.stride = {}", self.output_stride);
        s
    }

    pub fn grid(&self) -> Result<crate::grid::Grid, ConfigError> {
        crate::grid::Grid::new(self.grid_n, self.grid_length)
            .map_err(|e| ConfigError::Invariant(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            pressure: PressureConfig {
                method: self.pressure_method,
                tol: self.pressure_tol,
                max_iter: self.pressure_max_iter,
                relax: self.pressure_relax,
            },
            cfl_cap: self.time_cfl_cap,
            dealias: true,
            drift_tol: self.time_drift_tol,
            diag_s: self.diag_s,
            diag_r: self.diag_r,
            use_omega_proxy: self.proxy_use_omega,
            pressure_per_stage: self.time_pressure_per_stage,
        }
    }

    pub fn proxy_config(&self) -> ProxyConfig {
        ProxyConfig {
            bkm_cap: self.proxy_bkm_cap,
            tail_cap: self.proxy_tail_cap,
        }
    }
}
