//! `key = value` configuration, layered under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use escrowsim::cryptofile::EngineMode;
use escrowsim::nodesim::Wiring;
use escrowsim::release::Scheme;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "seed",
    "bits",
    "work",
    "corpus",
    "escrow",
    "mode",
    "scheme",
    "min_confirmations",
    "n_extra_blocks",
    "combined",
    "transition_cost_us",
    "wiring",
    "replace",
    "peer",
    "explorer",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeerChoice {
    Honest,
    Unavailable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplorerChoice {
    Honest,
    Untrusted,
    Unavailable,
}

impl PeerChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PeerChoice::Honest => "honest",
            PeerChoice::Unavailable => "unavailable",
        }
    }
}

impl ExplorerChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplorerChoice::Honest => "honest",
            ExplorerChoice::Untrusted => "untrusted",
            ExplorerChoice::Unavailable => "unavailable",
        }
    }
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub bits: u32,
    pub work: PathBuf,
    pub corpus: Option<PathBuf>,
    pub escrow: PathBuf,
    pub mode: EngineMode,
    pub scheme: Scheme,
    pub min_confirmations: u64,
    pub n_extra_blocks: u64,
    pub combined: bool,
    pub transition_cost: Duration,
    pub wiring: Wiring,
    pub replace: bool,
    pub peer: PeerChoice,
    pub explorer: ExplorerChoice,
}

/// Raw `key = value` pairs, from a file or from flags.
#[derive(Clone, Debug, Default)]
pub struct Settings(Vec<(String, String)>);

impl Settings {
    pub fn parse(text: &str) -> Result<Settings, CliError> {
        let mut out = Settings::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
            out.set(k.trim(), v.trim())?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Settings::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Validation(format!("unknown config key {key:?}")));
        }
        self.0.retain(|(k, _)| k != key);
        self.0.push((key.to_string(), value.into()));
        Ok(())
    }

    /// Later settings win.
    pub fn overlay(mut self, top: Settings) -> Settings {
        for (k, v) in top.0 {
            self.0.retain(|(x, _)| *x != k);
            self.0.push((k, v));
        }
        self
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let work = PathBuf::from(self.get("work").unwrap_or("escrowsim-work"));
        let escrow = self.get("escrow").map(PathBuf::from).unwrap_or_else(|| work.join("operator.escrow"));
        let cfg = ExperimentConfig {
            seed: self.num("seed", 1)?,
            bits: match self.get("bits") {
                Some(v) => parse_bits(v)?,
                None => escrowsim::nodesim::SCENARIO_BITS,
            },
            corpus: self.get("corpus").map(PathBuf::from),
            escrow,
            work,
            mode: self.parsed("mode", EngineMode::Proactive)?,
            scheme: self.parsed("scheme", Scheme::Signed)?,
            min_confirmations: self.num("min_confirmations", 6)?,
            n_extra_blocks: self.num("n_extra_blocks", 0)?,
            combined: self.flag("combined")?,
            transition_cost: Duration::from_micros(self.num("transition_cost_us", 0)?),
            wiring: match self.get("wiring").unwrap_or("in-process") {
                "in-process" => Wiring::InProcess,
                "local" => Wiring::Local,
                "tcp" => Wiring::Tcp,
                other => return Err(invalid("wiring", other)),
            },
            replace: self.flag("replace")?,
            peer: match self.get("peer").unwrap_or("honest") {
                "honest" => PeerChoice::Honest,
                "unavailable" => PeerChoice::Unavailable,
                other => return Err(invalid("peer", other)),
            },
            explorer: match self.get("explorer").unwrap_or("honest") {
                "honest" => ExplorerChoice::Honest,
                "untrusted" => ExplorerChoice::Untrusted,
                "unavailable" => ExplorerChoice::Unavailable,
                other => return Err(invalid("explorer", other)),
            },
        };
        if cfg.min_confirmations == 0 {
            return Err(CliError::Validation("min_confirmations must be at least 1".into()));
        }
        Ok(cfg)
    }

    fn num(&self, key: &str, default: u64) -> Result<u64, CliError> {
        self.get(key).map_or(Ok(default), |v| v.parse().map_err(|_| invalid(key, v)))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(invalid(key, v)),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        self.get(key).map_or(Ok(default), |v| v.parse().map_err(|_| invalid(key, v)))
    }
}

fn invalid(key: &str, value: &str) -> CliError {
    CliError::Validation(format!("invalid value {value:?} for {key}"))
}

/// Compact target, hex with `0x` or decimal.
pub fn parse_bits(v: &str) -> Result<u32, CliError> {
    let parsed = match v.strip_prefix("0x") {
        Some(h) => u32::from_str_radix(h, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| invalid("bits", v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = Settings::parse("# demo\nseed = 9\nmode = reactive\nbits = 0x1f100000\n").unwrap();
        let mut flags = Settings::default();
        flags.set("seed", "11").unwrap();
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.mode, EngineMode::Reactive);
        assert_eq!(cfg.bits, 0x1f10_0000);
        assert_eq!(cfg.escrow, PathBuf::from("escrowsim-work/operator.escrow"));
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(Settings::parse("colour = blue").is_err());
        assert!(Settings::parse("seed").is_err());
        assert!(Settings::parse("seed = x").unwrap().resolve().is_err());
        assert!(Settings::parse("min_confirmations = 0").unwrap().resolve().is_err());
        assert!(Settings::parse("wiring = udp").unwrap().resolve().is_err());
    }
}
