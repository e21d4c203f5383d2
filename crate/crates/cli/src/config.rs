//! Flat `key = value` run configuration.
//!
//! Layers, lowest first: spec files or manifests in the order given, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dimer_core::experiments::output::Manifest;
use dimer_core::experiments::InitialCondition;
use dimer_core::num_complex::Complex64;
use dimer_core::{Method, Solver};

use crate::args::{Common, FigureArgs};
use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "id",
    "epsilon",
    "v",
    "g",
    "gamma",
    "n",
    "init",
    "t-max",
    "samples",
    "rtol",
    "atol",
    "fixed-step",
    "convention",
    "kappa",
    "threads",
    "g-min",
    "g-max",
    "g-steps",
    "gamma-min",
    "gamma-max",
    "gamma-steps",
    "seeds-theta",
    "seeds-phi",
    "figure",
    "panel",
];

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(normalize(key), value.to_string());
    }

    fn set_opt<T: Display>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|raw| {
                raw.trim()
                    .parse::<T>()
                    .map_err(|e| CliError::Usage(format!("invalid value `{raw}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Parses `key = value` text. `#` starts a comment; blank lines are skipped.
    pub fn from_kv_text(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{lineno}: expected `key = value`, got `{line}`")))?;
            let key = normalize(key);
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{origin}:{lineno}: unknown key `{key}`")));
            }
            if cfg.contains(&key) {
                return Err(CliError::Usage(format!("{origin}:{lineno}: duplicate key `{key}`")));
            }
            cfg.set(&key, value.trim());
        }
        Ok(cfg)
    }

    /// Configuration recorded in a manifest; `command` must match the manifest's.
    pub fn from_manifest(path: &Path, command: &str) -> Result<Self, CliError> {
        let m = Manifest::read(path)?;
        if m.command != command {
            return Err(CliError::Usage(format!(
                "{}: manifest was written by `{}`, not `{command}`",
                path.display(),
                m.command
            )));
        }
        let mut cfg = Config::default();
        for (k, v) in &m.config {
            let key = normalize(k);
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{}: unknown key `{key}` in manifest", path.display())));
            }
            cfg.set(&key, v);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, command: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            Self::from_manifest(path, command)
        } else {
            Self::from_kv_text(&text, &path.display().to_string())
        }
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn from_flags(c: &Common) -> Self {
        let mut cfg = Config::default();
        cfg.set_opt("id", &c.id);
        cfg.set_opt("epsilon", &c.epsilon);
        cfg.set_opt("v", &c.v);
        cfg.set_opt("g", &c.g);
        cfg.set_opt("gamma", &c.gamma);
        cfg.set_opt("n", &c.n);
        cfg.set_opt("init", &c.init);
        cfg.set_opt("t-max", &c.t_max);
        cfg.set_opt("samples", &c.samples);
        cfg.set_opt("rtol", &c.rtol);
        cfg.set_opt("atol", &c.atol);
        cfg.set_opt("fixed-step", &c.fixed_step);
        cfg.set_opt("convention", &c.convention);
        cfg.set_opt("kappa", &c.kappa);
        cfg.set_opt("threads", &c.threads);
        cfg.set_opt("g-min", &c.g_min);
        cfg.set_opt("g-max", &c.g_max);
        cfg.set_opt("g-steps", &c.g_steps);
        cfg.set_opt("gamma-min", &c.gamma_min);
        cfg.set_opt("gamma-max", &c.gamma_max);
        cfg.set_opt("gamma-steps", &c.gamma_steps);
        cfg.set_opt("seeds-theta", &c.seeds_theta);
        cfg.set_opt("seeds-phi", &c.seeds_phi);
        cfg
    }

    pub fn from_figure_flags(f: &FigureArgs) -> Self {
        let mut cfg = Self::from_flags(&f.common);
        cfg.set_opt("figure", &f.which);
        cfg.set_opt("panel", &f.panel);
        cfg
    }

    /// Solver settings: adaptive by default, RK4 when `fixed-step` is set.
    pub fn solver(&self) -> Result<Solver, CliError> {
        let mut solver = Solver::default();
        if let Some(rtol) = self.parse("rtol")? {
            solver.rtol = rtol;
        }
        if let Some(atol) = self.parse("atol")? {
            solver.atol = atol;
        }
        if let Some(dt) = self.parse("fixed-step")? {
            solver.method = Method::FixedStep { dt };
        }
        solver.validate()?;
        Ok(solver)
    }

    pub fn initial(&self, default: InitialCondition) -> Result<InitialCondition, CliError> {
        self.get("init").map(parse_init).unwrap_or(Ok(default))
    }
}

pub fn parse_init(raw: &str) -> Result<InitialCondition, CliError> {
    let raw = raw.trim();
    let bad = |why: &str| CliError::Usage(format!("invalid value `{raw}` for `init`: {why}"));
    let (kind, rest) = raw.split_once(':').unwrap_or((raw, ""));
    let numbers = || -> Result<Vec<f64>, CliError> {
        rest.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
            .collect()
    };
    match kind.to_ascii_lowercase().as_str() {
        "north" => Ok(InitialCondition::NorthPole),
        "south" => Ok(InitialCondition::SouthPole),
        "bloch" => match numbers()?.as_slice() {
            &[sx, sy, sz] => Ok(InitialCondition::Bloch { sx, sy, sz }),
            _ => Err(bad("expected bloch:SX,SY,SZ")),
        },
        "spinor" => match numbers()?.as_slice() {
            &[a, b, c, d] => Ok(InitialCondition::Spinor {
                x1: Complex64::new(a, b),
                x2: Complex64::new(c, d),
            }),
            _ => Err(bad("expected spinor:RE1,IM1,RE2,IM2")),
        },
        _ => Err(bad("expected north, south, bloch:... or spinor:...")),
    }
}

pub fn format_init(init: &InitialCondition) -> String {
    match init {
        InitialCondition::NorthPole => "north".into(),
        InitialCondition::SouthPole => "south".into(),
        InitialCondition::Bloch { sx, sy, sz } => format!("bloch:{sx},{sy},{sz}"),
        InitialCondition::Spinor { x1, x2 } => format!("spinor:{},{},{},{}", x1.re, x1.im, x2.re, x2.im),
    }
}
