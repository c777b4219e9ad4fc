//! Flat INI-style configuration: `[section]` headers over `key = value`
//! lines, with `#`/`;` comments. The parser is total — any input yields
//! either a config or a diagnostic, never a panic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::channel::RadioParams;
use crate::netsim::{Horizon, RepeatedGameParams};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bad value for key {key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid override {0:?}: expected section.key=value")]
    BadOverride(String),
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parsed sections before any interpretation; later duplicate keys win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            let number = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ConfigError::Syntax {
                        line: number,
                        msg: "unterminated section header".into(),
                    });
                };
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax {
                        line: number,
                        msg: "empty section name".into(),
                    });
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: number,
                    msg: format!("expected key = value, got {line:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: number,
                    msg: "empty key".into(),
                });
            }
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(RawConfig { sections })
    }

    /// Applies a `section.key=value` override from the command line.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = || ConfigError::BadOverride(assignment.to_string());
        let (path, value) = assignment.split_once('=').ok_or_else(err)?;
        let (section, key) = path.split_once('.').ok_or_else(err)?;
        let (section, key) = (section.trim(), key.trim());
        if section.is_empty() || key.is_empty() {
            return Err(err());
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn section(&self, name: &str) -> BTreeMap<String, String> {
        self.sections.get(name).cloned().unwrap_or_default()
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s.parse::<f64>().map_err(|e| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                msg: e.to_string(),
            }),
        }
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s.parse::<u64>().map_err(|e| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                msg: e.to_string(),
            }),
        }
    }
}

/// Game-layer knobs shared by the fairness and protocol experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    pub repeated: RepeatedGameParams,
    /// Backbone reserve in the monopoly variant, watts.
    pub v0: f64,
    /// Market offer granularity.
    pub delta: f64,
}

/// Everything an experiment needs: radio constants (converted from dB/dBm
/// once, here), game parameters, trial count, seed, and the experiment's
/// raw geometry block for its own keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub radio: RadioParams,
    pub game: GameConfig,
    pub trials: usize,
    pub seed: u64,
    pub geometry: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
        let radio = RadioParams {
            kappa: raw.f64_or("radio", "kappa", 3.0)?,
            sigma2: dbm_to_watts(raw.f64_or("radio", "sigma2_dbm", -60.0)?),
            gamma: db_to_linear(raw.f64_or("radio", "gamma_db", 10.0)?),
            p_max: dbm_to_watts(raw.f64_or("radio", "p_max_dbm", 10.0)?),
        };
        radio.validate().map_err(|msg| ConfigError::BadValue {
            key: "radio".into(),
            msg,
        })?;
        let repeated = RepeatedGameParams {
            beta: raw.f64_or("game", "beta", 0.9)?,
            forward_cost: raw.f64_or("game", "c", 0.5)?,
            forward_benefit: raw.f64_or("game", "b", 1.0)?,
            horizon: Horizon::Infinite,
        };
        repeated.validate().map_err(|msg| ConfigError::BadValue {
            key: "game".into(),
            msg,
        })?;
        let game = GameConfig {
            repeated,
            v0: raw.f64_or("game", "v0", 0.0)?,
            delta: raw.f64_or("game", "delta", 1e-4)?,
        };
        if !(game.delta > 0.0 && game.delta < 1.0) {
            return Err(ConfigError::BadValue {
                key: "game.delta".into(),
                msg: format!("offer step must lie in (0, 1), got {}", game.delta),
            });
        }
        Ok(ExperimentConfig {
            radio,
            game,
            trials: raw.u64_or("run", "trials", 1000)? as usize,
            seed: raw.u64_or("run", "seed", 0)?,
            geometry: raw.section("geometry"),
        })
    }

    /// Typed access to a geometry key with a default.
    pub fn geom_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.geometry.get(key) {
            None => Ok(default),
            Some(s) => s.parse::<f64>().map_err(|e| ConfigError::BadValue {
                key: format!("geometry.{key}"),
                msg: e.to_string(),
            }),
        }
    }

    pub fn geom_usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.geometry.get(key) {
            None => Ok(default),
            Some(s) => s.parse::<usize>().map_err(|e| ConfigError::BadValue {
                key: format!("geometry.{key}"),
                msg: e.to_string(),
            }),
        }
    }

    /// Comma-separated float list.
    pub fn geom_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.geometry.get(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|part| {
                    part.trim().parse::<f64>().map_err(|e| ConfigError::BadValue {
                        key: format!("geometry.{key}"),
                        msg: e.to_string(),
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(10.0) - 0.01).abs() < 1e-15);
        assert!((dbm_to_watts(-60.0) - 1e-9).abs() < 1e-22);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert_eq!(db_to_linear(0.0), 1.0);
    }

    #[test]
    fn parses_sections_keys_and_comments() {
        let raw = RawConfig::parse(
            "# heading\n[radio]\nkappa = 3.5\n; note\n[run]\nseed = 9\ntrials = 10\n",
        )
        .unwrap();
        assert_eq!(raw.get("radio", "kappa"), Some("3.5"));
        assert_eq!(raw.get("run", "seed"), Some("9"));
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.radio.kappa, 3.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trials, 10);
    }

    #[test]
    fn defaults_match_the_reference_radio_values() {
        let cfg = ExperimentConfig::default();
        assert!((cfg.radio.p_max - 0.01).abs() < 1e-15);
        assert!((cfg.radio.sigma2 - 1e-9).abs() < 1e-22);
        assert!((cfg.radio.gamma - 10.0).abs() < 1e-12);
        assert_eq!(cfg.radio.kappa, 3.0);
        assert_eq!(cfg.game.repeated.beta, 0.9);
        assert_eq!(cfg.game.delta, 1e-4);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = RawConfig::parse("[radio\nkappa = 3\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Syntax {
                line: 1,
                msg: "unterminated section header".into()
            }
        );
        let err = RawConfig::parse("[radio]\nnonsense\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn bad_values_name_the_offending_key() {
        let raw = RawConfig::parse("[radio]\nkappa = fast\n").unwrap();
        let err = ExperimentConfig::from_raw(&raw).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::BadValue { key, .. } if key == "radio.kappa"
        ));
    }

    #[test]
    fn overrides_update_and_create_keys() {
        let mut raw = RawConfig::parse("[run]\nseed = 1\n").unwrap();
        raw.set("run.seed=5").unwrap();
        raw.set("geometry.dest_x = -50").unwrap();
        assert_eq!(raw.get("run", "seed"), Some("5"));
        assert_eq!(raw.get("geometry", "dest_x"), Some("-50"));
        assert!(raw.set("no-dot").is_err());
        assert!(raw.set("nodot=1").is_err());
    }

    #[test]
    fn geometry_list_parsing() {
        let mut raw = RawConfig::default();
        raw.set("geometry.sides = 100, 200,300").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.geom_list("sides", &[]).unwrap(), vec![100.0, 200.0, 300.0]);
        assert_eq!(cfg.geom_list("missing", &[7.0]).unwrap(), vec![7.0]);
    }

    proptest! {
        // The parser must be total: never panic, on any input.
        #[test]
        fn parser_never_panics(text in "\\PC*") {
            let _ = RawConfig::parse(&text);
        }

        #[test]
        fn parser_never_panics_on_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            if let Ok(text) = std::str::from_utf8(&bytes) {
                let _ = RawConfig::parse(text);
            }
        }

        #[test]
        fn roundtrips_simple_keys(key in "[a-z][a-z0-9_]{0,10}", value in "[a-zA-Z0-9.+-]{1,12}") {
            let text = format!("[geometry]\n{key} = {value}\n");
            let raw = RawConfig::parse(&text).unwrap();
            prop_assert_eq!(raw.get("geometry", &key), Some(value.as_str()));
        }
    }
}
