//! Flat key/value reports.
//!
//! Machine form is one datum per line: `command <name>` first, then
//! `<key> <value>` lines in insertion order. Keys never contain whitespace;
//! values run to end of line. The human form is the same entries as an
//! aligned two-column table.

use std::fmt::{Display, Write as _};

use crate::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        debug_assert!(!key.is_empty() && !key.contains(char::is_whitespace), "bad key {key:?}");
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key, value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render_machine(&self) -> String {
        let mut out = format!("command {}\n", self.command);
        for (k, v) in &self.entries {
            writeln!(out, "{k} {v}").unwrap();
        }
        out
    }

    pub fn render_human(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!("== {} ==\n", self.command);
        for (k, v) in &self.entries {
            writeln!(out, "{k:<width$}  {v}").unwrap();
        }
        out
    }

    pub fn parse_machine(text: &str) -> Result<Report, ParseError> {
        let mut lines = text.lines();
        let command = lines
            .next()
            .and_then(|l| l.strip_prefix("command "))
            .ok_or(ParseError {
                line: 1,
                message: "expected `command <name>`".into(),
            })?;
        let mut report = Report::new(command);
        for (n, line) in lines.enumerate() {
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k.is_empty() {
                return Err(ParseError {
                    line: n + 2,
                    message: "empty key".into(),
                });
            }
            report.entries.push((k.into(), v.into()));
        }
        Ok(report)
    }
}
