//! Flat `key = value` run configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a
//! comment. Flags given as `key=value` are applied after the file and
//! win. Unknown keys are rejected and every value is range-checked when
//! the typed [`Settings`] are built.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interp::Interpolation;

/// Every accepted key with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("grid.dim", "2"),
    ("grid.n", "64"),
    ("grid.l", "6.283185307179586"),
    ("solver.kind", "stochastic"),
    ("solver.nu", "0.01"),
    ("solver.dt", "0.01"),
    ("solver.t_final", "0.1"),
    ("solver.samples", "64"),
    ("solver.seed", "0"),
    ("solver.picard_tol", "1e-8"),
    ("solver.picard_max", "40"),
    ("solver.remap_threshold", "0.4"),
    ("solver.windowed", "false"),
    ("interp.kind", "lagrange"),
    ("init.kind", "taylor_green"),
    ("init.param", "1"),
    ("out.dir", "out"),
    ("out.snapshots", "true"),
    ("out.timing", "false"),
    ("experiment.values", ""),
    ("experiment.times", ""),
    ("experiment.fine_dt", "1e-3"),
    ("experiment.budget", "4096"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

fn known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key)
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::ConfigParse { line: i + 1, msg: "empty key".into() });
            }
            self.set(k, v).map_err(|e| Error::ConfigParse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    /// Resolved config, one sorted `key = value` per line.
    pub fn resolved(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parse<T: FromStr>(&self, key: &'static str) -> Result<T> {
        let v = self.get(key).unwrap_or("");
        v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
    }

    fn list(&self, key: &'static str) -> Result<Vec<f64>> {
        let v = self.get(key).unwrap_or("");
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
            .collect()
    }

    pub fn settings(&self) -> Result<Settings> {
        let range = |key: &str, ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{key} = {} out of range: {what}", self.get(key).unwrap_or(""))))
            }
        };
        let dim: usize = self.parse("grid.dim")?;
        range("grid.dim", dim == 2 || dim == 3, "2 or 3")?;
        let n: usize = self.parse("grid.n")?;
        range("grid.n", n >= 8 && n % 2 == 0, "even and at least 8")?;
        let length: f64 = self.parse("grid.l")?;
        range("grid.l", length.is_finite() && length > 0.0, "positive")?;
        let nu: f64 = self.parse("solver.nu")?;
        range("solver.nu", nu.is_finite() && nu >= 0.0, "non-negative")?;
        let dt: f64 = self.parse("solver.dt")?;
        range("solver.dt", dt.is_finite() && dt > 0.0, "positive")?;
        let t_final: f64 = self.parse("solver.t_final")?;
        range("solver.t_final", t_final.is_finite() && t_final >= dt, "at least solver.dt")?;
        let samples: usize = self.parse("solver.samples")?;
        range("solver.samples", samples >= 1, "at least 1")?;
        let picard_tol: f64 = self.parse("solver.picard_tol")?;
        range("solver.picard_tol", picard_tol > 0.0 && picard_tol < 1.0, "in (0, 1)")?;
        let picard_max: usize = self.parse("solver.picard_max")?;
        range("solver.picard_max", picard_max >= 1, "at least 1")?;
        let remap_threshold: f64 = self.parse("solver.remap_threshold")?;
        range("solver.remap_threshold", remap_threshold > 0.0 && remap_threshold < 0.5, "in (0, 1/2)")?;
        let fine_dt: f64 = self.parse("experiment.fine_dt")?;
        range("experiment.fine_dt", fine_dt > 0.0, "positive")?;
        let budget: usize = self.parse("experiment.budget")?;
        range("experiment.budget", budget >= 1, "at least 1")?;
        let init = Init::parse(self.get("init.kind").unwrap_or(""), self.get("init.param").unwrap_or(""))?;
        Ok(Settings {
            dim,
            n,
            length,
            kind: self.parse("solver.kind")?,
            nu,
            dt,
            t_final,
            samples,
            seed: self.parse("solver.seed")?,
            picard_tol,
            picard_max,
            remap_threshold,
            windowed: self.parse("solver.windowed")?,
            interp: self.parse("interp.kind")?,
            init,
            out_dir: PathBuf::from(self.get("out.dir").unwrap_or("out")),
            snapshots: self.parse("out.snapshots")?,
            timing: self.parse("out.timing")?,
            values: self.list("experiment.values")?,
            times: self.list("experiment.times")?,
            fine_dt,
            budget,
        })
    }
}

/// File contents (if any) then flag overrides.
pub fn parse_config(path: Option<&Path>, flags: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        cfg.merge_text(&text)?;
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    cfg.settings()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Stochastic,
    Euler,
    Diffusive,
    Reference,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(Self::Stochastic),
            "euler" => Ok(Self::Euler),
            "diffusive" => Ok(Self::Diffusive),
            "reference" => Ok(Self::Reference),
            _ => Err(Error::Config(format!("solver.kind: unknown solver {s:?}"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stochastic => "stochastic",
            Self::Euler => "euler",
            Self::Diffusive => "diffusive",
            Self::Reference => "reference",
        })
    }
}

/// Initial data. `init.param` is the amplitude for Taylor-Green and the
/// ring mode, the wavenumber for the shear mode, the x-velocity for
/// constant data, the bandwidth for random data and the snapshot path for
/// files.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    TaylorGreen { amplitude: f64 },
    Shear { k: i64 },
    Ring { amplitude: f64 },
    Constant { value: f64 },
    RandomDivfree { kmax: i64 },
    File { path: PathBuf },
}

impl Init {
    pub fn parse(kind: &str, param: &str) -> Result<Self> {
        let num = |what: &str| -> Result<f64> {
            param.parse().map_err(|_| Error::Config(format!("init.param: {what} expected, got {param:?}")))
        };
        let int = |what: &str| -> Result<i64> {
            let k: i64 =
                param.parse().map_err(|_| Error::Config(format!("init.param: {what} expected, got {param:?}")))?;
            if k < 1 {
                return Err(Error::Config(format!("init.param: {what} must be at least 1")));
            }
            Ok(k)
        };
        match kind {
            "taylor_green" => Ok(Self::TaylorGreen { amplitude: num("amplitude")? }),
            "shear" => Ok(Self::Shear { k: int("wavenumber")? }),
            "ring" => Ok(Self::Ring { amplitude: num("amplitude")? }),
            "constant" => Ok(Self::Constant { value: num("velocity")? }),
            "random_divfree" => Ok(Self::RandomDivfree { kmax: int("bandwidth")? }),
            "file" => Ok(Self::File { path: PathBuf::from(param) }),
            _ => Err(Error::Config(format!("init.kind: unknown initial data {kind:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub kind: SolverKind,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub samples: usize,
    pub seed: u64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub remap_threshold: f64,
    pub windowed: bool,
    pub interp: Interpolation,
    pub init: Init,
    pub out_dir: PathBuf,
    pub snapshots: bool,
    pub timing: bool,
    pub values: Vec<f64>,
    pub times: Vec<f64>,
    pub fine_dt: f64,
    pub budget: usize,
}
