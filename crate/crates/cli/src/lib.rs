//! Flat `key = value` experiment manifests and their translation into
//! [`RunConfig`]s.
//!
//! ```text
//! # example1 at the fine table resolution
//! preset = example1
//! h = 0.0125
//! levels = 3
//! spots = 3.5, 6, 9, 12
//! out = runs/e1
//! ```
//!
//! Later sources override earlier ones, so command-line flags win over the
//! file. Keys:
//!
//! | key | meaning |
//! |---|---|
//! | `preset` | `example1`, `example2` or `fourregime` |
//! | `strike`, `maturity` | override the preset's `K` and `T` |
//! | `rates`, `vols` | comma lists, one entry per regime |
//! | `generator` | rows separated by `;`, entries by `,` |
//! | `h`, `xmax`, `steps` | grid; `steps` absent means `k = h^2` |
//! | `levels`, `c`, `nu1`, `nu2` | cycle shape |
//! | `fmg`, `fmg_every_step` | `true` or `false` |
//! | `tol`, `max_outer`, `gate_all_fields` | stopping rule |
//! | `spots`, `out`, `full_histories` | output |

use std::collections::BTreeMap;
use std::path::PathBuf;

use rsmg::experiment::RunConfig;
use rsmg::model::load_preset;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {value}")]
    Value { key: String, value: String },
    #[error(transparent)]
    Core(#[from] rsmg::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const KEYS: [&str; 20] = [
    "preset",
    "strike",
    "maturity",
    "rates",
    "vols",
    "generator",
    "h",
    "xmax",
    "steps",
    "levels",
    "c",
    "nu1",
    "nu2",
    "fmg",
    "fmg_every_step",
    "tol",
    "max_outer",
    "gate_all_fields",
    "spots",
    "out",
];

const EXTRA_KEYS: [&str; 1] = ["full_histories"];

/// Ordered settings; a later `set` replaces an earlier one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Syntax { line: n + 1, msg: format!("expected key = value, got '{line}'") });
            };
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) && !EXTRA_KEYS.contains(&key) {
            return Err(CliError::UnknownKey(key.to_string()));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| bad(key, v)))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(bad(key, v)),
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    /// Applies the settings on top of `base`. A `preset` key replaces the
    /// model first; the explicit model keys then override its parts.
    pub fn apply(&self, mut base: RunConfig) -> Result<RunConfig> {
        if let Some(p) = self.get("preset") {
            base.model = load_preset(p).map_err(rsmg::Error::from)?;
            base.preset = Some(p.to_string());
        }
        let explicit_model = ["strike", "rates", "vols", "generator"].iter().any(|k| self.get(k).is_some());
        if explicit_model {
            base.preset = None;
        }
        let model = &mut base.model;
        if let Some(v) = self.num("strike")? {
            model.strike = v;
        }
        if let Some(v) = self.num("maturity")? {
            model.maturity = v;
        }
        if let Some(v) = self.list("rates")? {
            model.rates = v;
        }
        if let Some(v) = self.list("vols")? {
            model.vols = v;
        }
        if let Some(g) = self.get("generator") {
            model.generator = g.split(';').map(|row| parse_list("generator", row)).collect::<Result<_>>()?;
        }
        if let Some(v) = self.num("tol")? {
            model.tolerance = v;
            base.multigrid.tolerance = Some(v);
        }
        if let Some(v) = self.num("h")? {
            base.h = v;
        }
        if let Some(v) = self.num("xmax")? {
            base.x_max = v;
        }
        if let Some(v) = self.num("steps")? {
            base.steps = Some(v);
        }
        let mg = &mut base.multigrid;
        if let Some(v) = self.num("levels")? {
            mg.levels = v;
        }
        if let Some(v) = self.num("c")? {
            mg.schedule_factor = v;
        }
        if let Some(v) = self.num("nu1")? {
            mg.nu1 = v;
        }
        if let Some(v) = self.num("nu2")? {
            mg.nu2 = v;
        }
        if let Some(v) = self.flag("fmg")? {
            mg.fmg = v;
        }
        if let Some(v) = self.flag("fmg_every_step")? {
            mg.fmg_every_step = v;
        }
        if let Some(v) = self.num("max_outer")? {
            mg.max_outer = v;
        }
        if let Some(v) = self.flag("gate_all_fields")? {
            mg.gate_all_fields = v;
        }
        if let Some(v) = self.list("spots")? {
            base.spots = v;
        }
        if let Some(v) = self.get("out") {
            base.out = PathBuf::from(v);
        }
        if let Some(v) = self.flag("full_histories")? {
            base.full_histories = v;
        }
        base.validate()?;
        Ok(base)
    }
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Value { key: key.to_string(), value: value.to_string() }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad(key, text)))
        .collect()
}

/// Base configuration of a subcommand before the manifest is applied.
/// The refinement study defaults to `T = 0.1` from `h = 0.05` with
/// full-multigrid initialisation.
pub fn base_config(study: bool) -> RunConfig {
    let mut c = RunConfig::from_preset("example1").expect("builtin preset");
    if study {
        c.model.maturity = 0.1;
        c.h = 0.05;
        c.multigrid.fmg = true;
    }
    c
}

/// One line per preset: name, regimes, rates, vols.
pub fn preset_table() -> String {
    let mut s = String::new();
    for name in rsmg::model::PRESETS {
        let m = load_preset(name).expect("builtin preset");
        s.push_str(&format!(
            "{name}: K={} T={} regimes={} r={:?} sigma={:?} Q={:?}\n",
            m.strike,
            m.maturity,
            m.regime_count(),
            m.rates,
            m.vols,
            m.generator
        ));
    }
    s
}
