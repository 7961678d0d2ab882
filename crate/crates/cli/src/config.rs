//! Run configuration: a flat `key = value` file merged with command-line
//! flags, flags last.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use ks_selfsim::CRITICAL_MASS;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Stationary,
    Spectrum,
    Inequalities,
    Evolve,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Stationary => "stationary",
            Command::Spectrum => "spectrum",
            Command::Inequalities => "inequalities",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    pub stretch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    /// One mass, or the list for `sweep`.
    #[serde(rename = "M")]
    pub masses: Vec<f64>,
    pub grid: GridConfig,
    /// Stationary solver tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub kmax: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    /// Mass step for the zero mode; `None` means `M·10⁻³`.
    #[serde(rename = "dM")]
    pub dm: Option<f64>,
    pub corpus_seed: u64,
    pub corpus_size: usize,
    pub lambdas: Vec<f64>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn mass(&self) -> f64 {
        self.masses[0]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Maps accepted spellings to the canonical key.
fn canonical(key: &str) -> Option<&'static str> {
    Some(match key {
        "M" | "mass" | "masses" => "M",
        "grid.N" | "N" => "grid.N",
        "grid.R_max" | "grid.rmax" | "R_max" | "rmax" => "grid.R_max",
        "grid.stretch" | "stretch" => "grid.stretch",
        "tol" | "solver.tol" => "tol",
        "max_iter" | "solver.max_iter" => "max_iter",
        "kmax" | "k_max" | "spectrum.kmax" => "kmax",
        "T" | "evolve.T" => "T",
        "dt" | "evolve.dt" => "dt",
        "dM" | "stationary.dM" => "dM",
        "corpus.seed" | "corpus_seed" | "corpus-seed" => "corpus.seed",
        "corpus.size" | "corpus_size" => "corpus.size",
        "lambdas" | "scaling.lambdas" => "lambdas",
        "out" | "output" => "out",
        _ => return None,
    })
}

/// Raw settings keyed by canonical name; later inserts win.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        match canonical(key) {
            Some(k) => {
                self.values.insert(k, value.into());
                Ok(())
            }
            None => err(format!("unknown configuration key `{key}`")),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`, got `{line}`", lineno + 1));
            };
            s.set(k.trim(), v.trim()).map_err(|e| ConfigError(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(s)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_number(v).ok_or_else(|| ConfigError(format!("{key}: cannot parse `{v}` as a number"))),
        }
    }

    fn int<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("{key}: cannot parse `{v}` as a nonnegative integer"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| parse_number(t).ok_or_else(|| ConfigError(format!("{key}: cannot parse `{t}` as a number"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn resolve(&self, command: Command) -> Result<RunConfig, ConfigError> {
        let masses = match self.list("M")? {
            Some(list) => list,
            None if command == Command::Sweep => vec![1.0, PI, 2.0 * PI, 4.0 * PI, 7.5],
            None => vec![2.0 * PI],
        };
        if masses.is_empty() {
            return err("empty M list");
        }
        if command != Command::Sweep && masses.len() != 1 {
            return err(format!("`{command}` takes a single M, got {}", masses.len()));
        }
        for &m in &masses {
            if !(m > 0.0 && m < CRITICAL_MASS) {
                return err(format!(
                    "M = {m} is outside (0, 8π): the threshold 8π = {CRITICAL_MASS:.6} separates global existence from blow-up"
                ));
            }
        }

        let n: usize = self.int("grid.N", 2048)?;
        if !n.is_power_of_two() || !(64..=8192).contains(&n) {
            return err(format!("grid.N = {n} must be a power of two between 2^6 and 2^13"));
        }
        let r_max = self.float("grid.R_max", 16.0)?;
        if !(r_max > 0.0 && r_max.is_finite()) {
            return err(format!("grid.R_max = {r_max} must be positive"));
        }
        let stretch = self.float("grid.stretch", 0.0)?;
        if !(0.0..=1.0).contains(&stretch) {
            return err(format!("grid.stretch = {stretch} must lie in [0, 1]"));
        }
        let tol = self.float("tol", 1e-10)?;
        if !(tol > 0.0 && tol < 1.0) {
            return err(format!("tol = {tol} must lie in (0, 1)"));
        }
        let max_iter = self.int("max_iter", 1000)?;
        if max_iter == 0 {
            return err("max_iter must be positive");
        }
        let kmax = self.int("kmax", 3)?;
        let t_end = self.float("T", 10.0)?;
        let dt = self.float("dt", 0.1)?;
        if !(t_end > 0.0 && t_end.is_finite()) {
            return err(format!("T = {t_end} must be positive"));
        }
        if !(dt > 0.0 && dt <= t_end) {
            return err(format!("dt = {dt} must lie in (0, T]"));
        }
        let dm = match self.get("dM") {
            None => None,
            Some(_) => {
                let v = self.float("dM", 0.0)?;
                if !(v > 0.0) {
                    return err(format!("dM = {v} must be positive"));
                }
                Some(v)
            }
        };
        let corpus_seed = self.int("corpus.seed", 7u64)?;
        let corpus_size = self.int("corpus.size", 100usize)?;
        if corpus_size == 0 {
            return err("corpus.size must be positive");
        }
        let lambdas = self.list("lambdas")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]);
        if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
            return err("lambdas must be a nonempty list of positive numbers");
        }
        let out = PathBuf::from(self.get("out").unwrap_or("ks-selfsim-out"));

        Ok(RunConfig {
            command,
            masses,
            grid: GridConfig { n, r_max, stretch },
            tol,
            max_iter,
            kmax,
            t_end,
            dt,
            dm,
            corpus_seed,
            corpus_size,
            lambdas,
            out,
        })
    }
}

/// A float, optionally written as a multiple of π: `2pi`, `4*pi`, `pi`.
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(head) = s.strip_suffix("pi").or_else(|| s.strip_suffix('π')) {
        let head = head.trim().trim_end_matches('*').trim();
        let factor = if head.is_empty() { 1.0 } else { head.parse::<f64>().ok()? };
        return Some(factor * PI);
    }
    s.parse().ok().filter(|v: &f64| v.is_finite())
}
