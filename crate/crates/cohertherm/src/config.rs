//! Scenario configuration parsing.
//!
//! Flat `key = value` text with `[section]` headers and `#` comments. Parsing
//! is strict: any unknown key or section is an error naming the offender, so
//! misspelled parameters can never silently fall back to defaults.
//!
//! Layout:
//!
//! ```text
//! scenario = fluctuation_curve   # top level: scenario, output_dir, seed
//!
//! [system]                       # SystemSpec fields
//! kind = double_well
//! mass = 1.0
//!
//! [params]                       # scenario-specific keys, all optional
//! c = 2.0
//! ```

use crate::dynamics::{SystemKind, SystemSpec};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}`{context}")]
    UnknownKey {
        line: usize,
        key: String,
        context: String,
    },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("key `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("system: {0}")]
    InvalidSystem(String),
}

/// The six runnable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Trajectories,
    Propagator,
    ChaosTunneling,
    FluctuationCurve,
    PhaseOpt,
    Lindblad,
}

impl Scenario {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "trajectories" => Self::Trajectories,
            "propagator" => Self::Propagator,
            "chaos_tunneling" => Self::ChaosTunneling,
            "fluctuation_curve" => Self::FluctuationCurve,
            "phase_opt" => Self::PhaseOpt,
            "lindblad" => Self::Lindblad,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Trajectories => "trajectories",
            Self::Propagator => "propagator",
            Self::ChaosTunneling => "chaos_tunneling",
            Self::FluctuationCurve => "fluctuation_curve",
            Self::PhaseOpt => "phase_opt",
            Self::Lindblad => "lindblad",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parsed and validated scenario configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub system: SystemSpec,
    pub params: BTreeMap<String, f64>,
}

const TOP_LEVEL_KEYS: &[&str] = &["scenario", "output_dir", "seed"];
const SYSTEM_KEYS: &[&str] = &[
    "kind",
    "mass",
    "hbar",
    "k_b",
    "omega",
    "barrier_height",
    "well_separation",
    "kick_strength",
];

/// Scenario-specific parameter keys with their defaults. Every scenario is
/// fully specified by defaults, so an empty `[params]` section is valid.
pub fn param_defaults(scenario: Scenario) -> BTreeMap<String, f64> {
    let pairs: &[(&str, f64)] = match scenario {
        Scenario::Trajectories => &[
            ("q_i", -1.0),
            ("q_f", 1.0),
            ("t", 1.0),
            ("n_kicks", 0.0),
            ("p_min", -6.0),
            ("p_max", 6.0),
            ("n_seeds", 2000.0),
        ],
        Scenario::Propagator => &[
            ("q_i", -1.0),
            ("q_f", 1.0),
            ("t", 1.0),
            ("n_kicks", 0.0),
            ("p_min", -6.0),
            ("p_max", 6.0),
            ("n_seeds", 2000.0),
        ],
        Scenario::ChaosTunneling => &[
            ("n_kicks", 8.0),
            ("region_a_lo", 0.5),
            ("region_a_hi", 1.5),
            ("region_b_lo", 4.0),
            ("region_b_hi", 5.0),
            ("p_min", -3.0),
            ("p_max", 3.0),
            ("n_seeds", 400.0),
        ],
        Scenario::FluctuationCurve => &[
            ("c", 2.0),
            ("delta_s0", -1.5),
            ("sigma", 0.5),
            ("range_min", -3.0),
            ("range_max", 3.0),
            ("n_points", 121.0),
        ],
        Scenario::PhaseOpt => &[("components", 3.0)],
        Scenario::Lindblad => &[
            // preset: 0 = dephasing, 1 = amplitude damping, 2 = resonant pair
            ("preset", 0.0),
            ("gamma", 0.5),
            ("t", 10.0),
            ("dt", 0.01),
            ("coupling_j", 1.0),
        ],
    };
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

struct RawConfig {
    top: BTreeMap<String, (usize, String)>,
    system: BTreeMap<String, (usize, String)>,
    params: BTreeMap<String, (usize, String)>,
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig {
        top: BTreeMap::new(),
        system: BTreeMap::new(),
        params: BTreeMap::new(),
    };
    let mut section = None::<String>;
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match line_text.find('#') {
            Some(pos) => &line_text[..pos],
            None => line_text,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if name != "system" && name != "params" {
                return Err(ConfigError::UnknownSection { line, name });
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            });
        }
        let bucket = match section.as_deref() {
            None => &mut raw.top,
            Some("system") => &mut raw.system,
            Some("params") => &mut raw.params,
            Some(_) => unreachable!("section already validated"),
        };
        if bucket.insert(key.clone(), (line, value)).is_some() {
            return Err(ConfigError::DuplicateKey { line, key });
        }
    }
    Ok(raw)
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        message: format!("`{value}` is not a number"),
    })
}

fn build_system(entries: &BTreeMap<String, (usize, String)>) -> Result<SystemSpec, ConfigError> {
    for (key, (line, _)) in entries {
        if !SYSTEM_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: *line,
                key: key.clone(),
                context: " in [system]".to_string(),
            });
        }
    }
    let get = |key: &str| entries.get(key).map(|(_, v)| v.as_str());
    let get_f64 = |key: &str, default: f64| -> Result<f64, ConfigError> {
        match get(key) {
            Some(v) => parse_f64(key, v),
            None => Ok(default),
        }
    };
    let kind_name = get("kind").unwrap_or("free_particle");
    let mass = get_f64("mass", 1.0)?;
    let hbar = get_f64("hbar", 1.0)?;
    let k_b = get_f64("k_b", 1.0)?;

    // Reject parameters that do not belong to the chosen kind; a stray
    // `omega` on a free particle is a config mistake, not noise.
    let allowed: &[&str] = match kind_name {
        "free_particle" => &[],
        "harmonic" => &["omega"],
        "double_well" => &["barrier_height", "well_separation"],
        "kicked_rotor" => &["kick_strength"],
        other => {
            return Err(ConfigError::InvalidValue {
                key: "kind".to_string(),
                message: format!(
                    "`{other}` is not one of free_particle, harmonic, double_well, kicked_rotor"
                ),
            })
        }
    };
    for key in entries.keys() {
        let shared = ["kind", "mass", "hbar", "k_b"].contains(&key.as_str());
        if !shared && !allowed.contains(&key.as_str()) {
            return Err(ConfigError::InvalidValue {
                key: key.clone(),
                message: format!("not a parameter of kind `{kind_name}`"),
            });
        }
    }

    let kind = match kind_name {
        "free_particle" => SystemKind::FreeParticle,
        "harmonic" => SystemKind::Harmonic {
            omega: get_f64("omega", 1.0)?,
        },
        "double_well" => SystemKind::DoubleWell {
            barrier_height: get_f64("barrier_height", 1.0)?,
            well_separation: get_f64("well_separation", 2.0)?,
        },
        "kicked_rotor" => SystemKind::KickedRotor {
            kick_strength: get_f64("kick_strength", 0.5)?,
        },
        _ => unreachable!("kind already validated"),
    };
    SystemSpec::new(kind, mass)
        .and_then(|s| s.with_hbar(hbar))
        .and_then(|s| s.with_k_b(k_b))
        .map_err(|e| ConfigError::InvalidSystem(e.to_string()))
}

/// Parse config text. `output_dir` and `seed` may be overridden by CLI flags
/// after parsing.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw = parse_raw(text)?;

    for (key, (line, _)) in &raw.top {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: *line,
                key: key.clone(),
                context: " at top level".to_string(),
            });
        }
    }
    let scenario_text = raw
        .top
        .get("scenario")
        .map(|(_, v)| v.as_str())
        .ok_or(ConfigError::MissingKey {
            key: "scenario".to_string(),
        })?;
    let scenario = Scenario::parse(scenario_text).ok_or_else(|| ConfigError::InvalidValue {
        key: "scenario".to_string(),
        message: format!(
            "`{scenario_text}` is not one of trajectories, propagator, chaos_tunneling, \
             fluctuation_curve, phase_opt, lindblad"
        ),
    })?;
    let output_dir = PathBuf::from(
        raw.top
            .get("output_dir")
            .map(|(_, v)| v.as_str())
            .unwrap_or("out"),
    );
    let seed = match raw.top.get("seed") {
        Some((_, v)) => v.parse::<u64>().map_err(|_| ConfigError::InvalidValue {
            key: "seed".to_string(),
            message: format!("`{v}` is not a 64-bit unsigned integer"),
        })?,
        None => 0,
    };

    let system = build_system(&raw.system)?;

    let mut params = param_defaults(scenario);
    for (key, (line, value)) in &raw.params {
        let Some(slot) = params.get_mut(key) else {
            return Err(ConfigError::UnknownKey {
                line: *line,
                key: key.clone(),
                context: format!(" in [params] for scenario `{scenario}`"),
            });
        };
        *slot = parse_f64(key, value)?;
    }

    Ok(ScenarioConfig {
        scenario,
        output_dir,
        seed,
        system,
        params,
    })
}
