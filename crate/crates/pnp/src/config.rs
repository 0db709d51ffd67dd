//! Experiment configuration: a flat `key = value` text format with `#`
//! comments, mapped onto [`ExperimentConfig`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::{GridSpec, MAX_DIM};
use crate::picard::PicardConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Time-step rule of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `dt = factor * h`, the refinement-coupled rule of the convergence study.
    ProportionalToH { factor: f64 },
    /// Fixed explicit time step.
    Explicit { dt: f64 },
}

/// Full description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Inverse mesh spacing (cells per unit length); the grid carries
    /// `axis_length * resolution` cells per axis.
    pub resolution: usize,
    pub origin: [f64; MAX_DIM],
    pub axis_length: f64,
    pub final_time: f64,
    pub dt_rule: DtRule,
    /// Diffusivity ratio of the positive species.
    pub d_ratio: f64,
    /// Whether the quadrupole background charge is present.
    pub fixed_charge: bool,
    /// Width of the background charge Gaussians.
    pub sigma: f64,
    pub initial_n: f64,
    pub initial_p: f64,
    pub picard: PicardConfig,
    pub output_dir: PathBuf,
    pub emit_fields: bool,
    /// Steps between field dumps; 0 means final fields only.
    pub field_cadence: usize,
}

impl Default for ExperimentConfig {
    /// The fixed-charge experiment on `(-1,1)^2`: uniform `n = p = 0.01`,
    /// `sigma = 0.5`, `D = 1`, `dt = 0.1 h`, `T = 0.5`.
    fn default() -> Self {
        ExperimentConfig {
            dim: 2,
            resolution: 20,
            origin: [-1.0, -1.0, 0.0],
            axis_length: 2.0,
            final_time: 0.5,
            dt_rule: DtRule::ProportionalToH { factor: 0.1 },
            d_ratio: 1.0,
            fixed_charge: true,
            sigma: 0.5,
            initial_n: 0.01,
            initial_p: 0.01,
            picard: PicardConfig::default(),
            output_dir: PathBuf::from("runs/experiment"),
            emit_fields: true,
            field_cadence: 0,
        }
    }
}

impl ExperimentConfig {
    /// Mesh spacing `h = 1 / resolution`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Cells per axis, `axis_length / h`.
    pub fn cells_per_axis(&self) -> usize {
        (self.axis_length * self.resolution as f64).round() as usize
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(self.dim, self.cells_per_axis(), self.origin, self.axis_length)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Nominal time step from the rule.
    pub fn dt(&self) -> f64 {
        match self.dt_rule {
            DtRule::ProportionalToH { factor } => factor * self.spacing(),
            DtRule::Explicit { dt } => dt,
        }
    }

    /// Number of uniform steps covering `[0, T]`; the step actually taken is
    /// `T / steps`, which equals the nominal `dt` whenever it divides `T`
    /// (and otherwise absorbs the fractional final step uniformly).
    pub fn num_steps(&self) -> usize {
        let raw = self.final_time / self.dt();
        let rounded = raw.round();
        if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) && rounded >= 1.0 {
            rounded as usize
        } else {
            raw.ceil().max(1.0) as usize
        }
    }

    pub fn effective_dt(&self) -> f64 {
        self.final_time / self.num_steps() as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim != 2 {
            return Err(ConfigError::Invalid(format!(
                "experiments are two-dimensional, got dim = {}",
                self.dim
            )));
        }
        if self.cells_per_axis() < 4 {
            return Err(ConfigError::Invalid(format!(
                "need at least 4 cells per axis, got {}",
                self.cells_per_axis()
            )));
        }
        let cells = self.axis_length * self.resolution as f64;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "resolution {} does not tile axis length {}",
                self.resolution, self.axis_length
            )));
        }
        if !(self.final_time > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        if !(self.dt() > 0.0) {
            return Err(ConfigError::Invalid("time step must be positive".into()));
        }
        if self.fixed_charge && !(self.sigma > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.initial_n > 0.0 && self.initial_p > 0.0) {
            return Err(ConfigError::Invalid(
                "initial concentrations must be positive".into(),
            ));
        }
        if !(self.d_ratio > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "diffusivity ratio must be positive, got {}",
                self.d_ratio
            )));
        }
        self.picard
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(line, key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_str(&text)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg: e.to_string(),
            })
        }
        match key {
            "dim" => self.dim = parse(line, key, value)?,
            "resolution" => self.resolution = parse(line, key, value)?,
            "origin_x" => self.origin[0] = parse(line, key, value)?,
            "origin_y" => self.origin[1] = parse(line, key, value)?,
            "origin_z" => self.origin[2] = parse(line, key, value)?,
            "axis_length" => self.axis_length = parse(line, key, value)?,
            "final_time" => self.final_time = parse(line, key, value)?,
            "dt" => {
                if value == "auto" {
                    let factor = match self.dt_rule {
                        DtRule::ProportionalToH { factor } => factor,
                        DtRule::Explicit { .. } => 0.1,
                    };
                    self.dt_rule = DtRule::ProportionalToH { factor };
                } else {
                    self.dt_rule = DtRule::Explicit {
                        dt: parse(line, key, value)?,
                    };
                }
            }
            "dt_factor" => {
                let factor = parse(line, key, value)?;
                self.dt_rule = DtRule::ProportionalToH { factor };
            }
            "d_ratio" => self.d_ratio = parse(line, key, value)?,
            "fixed_charge" => self.fixed_charge = parse(line, key, value)?,
            "sigma" => self.sigma = parse(line, key, value)?,
            "initial_n" => self.initial_n = parse(line, key, value)?,
            "initial_p" => self.initial_p = parse(line, key, value)?,
            "omega_r" => self.picard.omega_r = parse(line, key, value)?,
            "picard_eps" => self.picard.eps = parse(line, key, value)?,
            "picard_tol" => self.picard.tol = parse(line, key, value)?,
            "picard_max_iters" => self.picard.max_iters = parse(line, key, value)?,
            "inner_tol" => self.picard.inner_tol = parse(line, key, value)?,
            "inner_max_iters" => self.picard.inner_max_iters = parse(line, key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "emit_fields" => self.emit_fields = parse(line, key, value)?,
            "field_cadence" => self.field_cadence = parse(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Round-trips the configuration as `key = value` text (the metadata
    /// echo written next to run outputs).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "origin_x = {}", self.origin[0]);
        let _ = writeln!(s, "origin_y = {}", self.origin[1]);
        let _ = writeln!(s, "axis_length = {}", self.axis_length);
        let _ = writeln!(s, "final_time = {}", self.final_time);
        match self.dt_rule {
            DtRule::ProportionalToH { factor } => {
                let _ = writeln!(s, "dt = auto");
                let _ = writeln!(s, "dt_factor = {}", factor);
            }
            DtRule::Explicit { dt } => {
                let _ = writeln!(s, "dt = {}", dt);
            }
        }
        let _ = writeln!(s, "d_ratio = {}", self.d_ratio);
        let _ = writeln!(s, "fixed_charge = {}", self.fixed_charge);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "initial_n = {}", self.initial_n);
        let _ = writeln!(s, "initial_p = {}", self.initial_p);
        let _ = writeln!(s, "omega_r = {}", self.picard.omega_r);
        let _ = writeln!(s, "picard_eps = {}", self.picard.eps);
        let _ = writeln!(s, "picard_tol = {}", self.picard.tol);
        let _ = writeln!(s, "picard_max_iters = {}", self.picard.max_iters);
        let _ = writeln!(s, "inner_tol = {}", self.picard.inner_tol);
        let _ = writeln!(s, "inner_max_iters = {}", self.picard.inner_max_iters);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "emit_fields = {}", self.emit_fields);
        let _ = writeln!(s, "field_cadence = {}", self.field_cadence);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_value_text() {
        let text = "\
# comment line
resolution = 40
final_time = 0.25   # trailing comment
dt = auto
dt_factor = 0.2
fixed_charge = false
omega_r = 0.4
output_dir = runs/t1
";
        let cfg = ExperimentConfig::from_str(text).unwrap();
        assert_eq!(cfg.resolution, 40);
        assert_eq!(cfg.final_time, 0.25);
        assert_eq!(cfg.dt_rule, DtRule::ProportionalToH { factor: 0.2 });
        assert!(!cfg.fixed_charge);
        assert_eq!(cfg.picard.omega_r, 0.4);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/t1"));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_malformed_lines() {
        assert!(matches!(
            ExperimentConfig::from_str("sigmma = 0.5"),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_str("just some words"),
            Err(ConfigError::Malformed { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_str("resolution = fast"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn default_study_steps_divide_final_time() {
        for resolution in [20usize, 40, 60, 80, 100] {
            let cfg = ExperimentConfig {
                resolution,
                ..ExperimentConfig::default()
            };
            cfg.validate().unwrap();
            // dt = 0.1 h and T = 0.5 give 5 * resolution steps on (-1,1)^2
            assert_eq!(cfg.num_steps(), 5 * resolution);
            let dt = cfg.effective_dt();
            assert!((dt - 0.1 * cfg.spacing()).abs() <= 1e-15);
        }
    }

    #[test]
    fn fractional_final_step_is_absorbed() {
        let cfg = ExperimentConfig {
            dt_rule: DtRule::Explicit { dt: 0.003 },
            final_time: 0.01,
            ..ExperimentConfig::default()
        };
        // 0.01 / 0.003 = 3.33 -> 4 uniform steps of 0.0025
        assert_eq!(cfg.num_steps(), 4);
        assert!((cfg.effective_dt() - 0.0025).abs() <= 1e-15);
    }

    #[test]
    fn config_text_roundtrip() {
        let cfg = ExperimentConfig {
            resolution: 32,
            fixed_charge: false,
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_str(&cfg.to_text()).unwrap();
        assert_eq!(back.resolution, 32);
        assert!(!back.fixed_charge);
        assert_eq!(back.dt_rule, cfg.dt_rule);
    }

    #[test]
    fn validation_catches_bad_setups() {
        let mut cfg = ExperimentConfig::default();
        cfg.resolution = 1; // 2 cells per axis: too coarse for experiments
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.sigma = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.picard.omega_r = 0.999;
        assert!(cfg.validate().is_err());
    }
}
