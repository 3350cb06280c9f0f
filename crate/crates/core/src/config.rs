//! Scenario files.
//!
//! A scenario is a plain text file of `key = value` lines. `#` starts a
//! comment, blank lines are ignored and every key is optional. Size-dependent
//! defaults (`p_th`, the rate threshold) are resolved after `n_tx` and
//! `n_users` are known, so a file holding only `n_tx = 8` and `n_users = 8`
//! yields the scaled default scenario.
//!
//! [`Scenario::snapshot`] writes every resolved value back in the same format;
//! floats use Rust's shortest round-trip representation, so loading a
//! snapshot reproduces the scenario exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::ad::AdConfig;
use crate::channel::{RateThreshold, ScenarioConfig};
use crate::{Error, Result};

/// Channel scenario plus the solver settings a run uses.
#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub channel: ScenarioConfig,
    pub solver: AdConfig,
}

/// Every key the parser accepts, in snapshot order.
pub const KEYS: &[&str] = &[
    "n_tx",
    "n_users",
    "seed",
    "bandwidth",
    "noise",
    "pathloss_t0_db",
    "pathloss_exponent",
    "cell_center_x",
    "cell_center_y",
    "cell_radius",
    "bs_x",
    "bs_y",
    "p_rf",
    "p_th",
    "r_th_mode",
    "r_th_value",
    "eps_term",
    "max_ad_iter",
    "hessian_shift_floor",
    "elastic_weight",
    "max_recoveries",
    "recovery_margin",
    "start_rate_fraction",
    "rho0",
    "beta",
    "eps_comp",
    "max_penalty",
    "nlp_tol",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum RateMode {
    Absolute,
    Fraction,
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` has no value"),
            });
        }
        if let Some(prev) = entries.insert(key, Entry { line, value }) {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` already set on line {}", prev.line),
            });
        }
    }

    let get = |key: &str| entries.get(key);
    let n_tx = value_or(get("n_tx"), "n_tx", 64usize)?;
    let n_users = value_or(get("n_users"), "n_users", 64usize)?;
    let mut channel = ScenarioConfig::with_size(n_tx, n_users);
    let mut solver = AdConfig::default();

    set(&mut channel.seed, get("seed"), "seed")?;
    set(&mut channel.bandwidth, get("bandwidth"), "bandwidth")?;
    set(&mut channel.noise, get("noise"), "noise")?;
    set(&mut channel.pathloss_t0_db, get("pathloss_t0_db"), "pathloss_t0_db")?;
    set(&mut channel.pathloss_exponent, get("pathloss_exponent"), "pathloss_exponent")?;
    set(&mut channel.cell_center[0], get("cell_center_x"), "cell_center_x")?;
    set(&mut channel.cell_center[1], get("cell_center_y"), "cell_center_y")?;
    set(&mut channel.cell_radius, get("cell_radius"), "cell_radius")?;
    set(&mut channel.bs_position[0], get("bs_x"), "bs_x")?;
    set(&mut channel.bs_position[1], get("bs_y"), "bs_y")?;
    set(&mut channel.p_rf, get("p_rf"), "p_rf")?;
    set(&mut channel.p_th, get("p_th"), "p_th")?;

    let (default_mode, default_value) = match channel.r_th {
        RateThreshold::Absolute(v) => (RateMode::Absolute, v),
        RateThreshold::Fraction(v) => (RateMode::Fraction, v),
    };
    let mode = match get("r_th_mode") {
        None => default_mode,
        Some(e) => match e.value {
            "absolute" => RateMode::Absolute,
            "fraction" => RateMode::Fraction,
            other => {
                return Err(Error::Parse {
                    line: e.line,
                    message: format!("r_th_mode must be `absolute` or `fraction`, found `{other}`"),
                })
            }
        },
    };
    // Switching mode without a value would reinterpret the other mode's default.
    let value = match (get("r_th_value"), mode == default_mode) {
        (Some(e), _) => parse_value(e, "r_th_value")?,
        (None, true) => default_value,
        (None, false) => {
            let line = get("r_th_mode").map_or(0, |e| e.line);
            return Err(Error::Parse {
                line,
                message: "r_th_mode changed without r_th_value".into(),
            });
        }
    };
    channel.r_th = match mode {
        RateMode::Absolute => RateThreshold::Absolute(value),
        RateMode::Fraction => RateThreshold::Fraction(value),
    };

    set(&mut solver.eps_term, get("eps_term"), "eps_term")?;
    set(&mut solver.max_ad_iter, get("max_ad_iter"), "max_ad_iter")?;
    set(&mut solver.hessian_shift_floor, get("hessian_shift_floor"), "hessian_shift_floor")?;
    set(&mut solver.elastic_weight, get("elastic_weight"), "elastic_weight")?;
    set(&mut solver.max_recoveries, get("max_recoveries"), "max_recoveries")?;
    set(&mut solver.recovery_margin, get("recovery_margin"), "recovery_margin")?;
    set(&mut solver.start_rate_fraction, get("start_rate_fraction"), "start_rate_fraction")?;
    set(&mut solver.bqp.rho0, get("rho0"), "rho0")?;
    set(&mut solver.bqp.beta, get("beta"), "beta")?;
    set(&mut solver.bqp.eps_comp, get("eps_comp"), "eps_comp")?;
    set(&mut solver.bqp.max_penalty, get("max_penalty"), "max_penalty")?;
    set(&mut solver.nlp.tol, get("nlp_tol"), "nlp_tol")?;

    let scenario = Scenario { channel, solver };
    scenario.validate()?;
    Ok(scenario)
}

fn parse_value<T: FromStr>(entry: &Entry, key: &str) -> Result<T> {
    entry.value.parse().map_err(|_| Error::Parse {
        line: entry.line,
        message: format!("invalid value `{}` for `{key}`", entry.value),
    })
}

fn value_or<T: FromStr>(entry: Option<&Entry>, key: &str, default: T) -> Result<T> {
    entry.map_or(Ok(default), |e| parse_value(e, key))
}

fn set<T: FromStr>(slot: &mut T, entry: Option<&Entry>, key: &str) -> Result<()> {
    if let Some(e) = entry {
        *slot = parse_value(e, key)?;
    }
    Ok(())
}

impl Scenario {
    pub fn with_size(n_tx: usize, n_users: usize) -> Self {
        Self {
            channel: ScenarioConfig::with_size(n_tx, n_users),
            solver: AdConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.solver.validate()
    }

    /// Every resolved value as a scenario file.
    pub fn snapshot(&self) -> String {
        let c = &self.channel;
        let s = &self.solver;
        let (mode, value) = match c.r_th {
            RateThreshold::Absolute(v) => ("absolute", v),
            RateThreshold::Fraction(v) => ("fraction", v),
        };
        let values: Vec<String> = vec![
            c.n_tx.to_string(),
            c.n_users.to_string(),
            c.seed.to_string(),
            float(c.bandwidth),
            float(c.noise),
            float(c.pathloss_t0_db),
            float(c.pathloss_exponent),
            float(c.cell_center[0]),
            float(c.cell_center[1]),
            float(c.cell_radius),
            float(c.bs_position[0]),
            float(c.bs_position[1]),
            float(c.p_rf),
            float(c.p_th),
            mode.to_string(),
            float(value),
            float(s.eps_term),
            s.max_ad_iter.to_string(),
            float(s.hessian_shift_floor),
            float(s.elastic_weight),
            s.max_recoveries.to_string(),
            float(s.recovery_margin),
            float(s.start_rate_fraction),
            float(s.bqp.rho0),
            float(s.bqp.beta),
            float(s.bqp.eps_comp),
            float(s.bqp.max_penalty),
            float(s.nlp.tol),
        ];
        let mut out = String::from("# resolved scenario\n");
        for (key, value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}
