//! Run reports: ordered `key = value` lines under a fixed header.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use crate::error::CliError;

pub const REPORT_HEADER: &str = "# escrowsim run report v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunReport {
    lines: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        let mut r = RunReport::default();
        r.push("command", command);
        r
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let value = value.to_string().replace('\n', " ");
        self.lines.push((key.into(), value));
    }

    #[cfg(test)]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn extend(&mut self, prefix: &str, other: &RunReport) {
        for (k, v) in &other.lines {
            if k != "command" {
                self.lines.push((format!("{prefix}.{k}"), v.clone()));
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Option<RunReport> {
        let mut lines = text.lines();
        if lines.next()? != REPORT_HEADER {
            return None;
        }
        let mut r = RunReport::default();
        for l in lines {
            let (k, v) = l.split_once(" = ")?;
            r.lines.push((k.to_string(), v.to_string()));
        }
        Some(r)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = RunReport::new("demo");
        r.push("release.decision", "refused (nonce-mismatch: x)");
        r.push("multi", "a\nb");
        let parsed = RunReport::parse(&r.to_text()).unwrap();
        assert_eq!(parsed, RunReport::parse(&parsed.to_text()).unwrap());
        assert_eq!(parsed.get("multi"), Some("a b"));
        assert_eq!(parsed.get("command"), Some("demo"));
    }
}
